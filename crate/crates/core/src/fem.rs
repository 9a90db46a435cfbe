//! P1 vector-valued finite-element machinery: fields, quadrature, gradients
//! and the norms/pairings of the variational formulation.
//!
//! Conventions: gradients follow `(grad v)_{ij} = dv_i/dx_j`, tensors use the
//! Frobenius inner product `A : B = trace(A^T B)` and its norm. `V^p` denotes
//! the W^{1,p} fields vanishing on the Dirichlet boundary, normed by the L^p
//! norm of the gradient; P1 gradients are triangle-constant, so every
//! gradient-based quantity is integrated exactly.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use thiserror::Error;

use crate::mesh::Mesh2D;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("exponent must exceed 1, got {0}")]
    BadExponent(f64),
    #[error("field is not admissible: nonzero value at Dirichlet node {0}")]
    MaskViolation(usize),
    #[error("value count {got} does not match node count {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("non-finite tensor entry on triangle {0}")]
    NonFinite(usize),
}

/// Vector-valued P1 nodal field with an optional Dirichlet constraint mask.
///
/// Masked nodes carry exactly zero values (the constraint `v = 0` on the
/// Dirichlet boundary). Data fields such as body forces use an empty mask.
#[derive(Clone, Debug)]
pub struct NodalField {
    mesh: Arc<Mesh2D>,
    values: Vec<Vector2<f64>>,
    dirichlet_mask: Vec<bool>,
}

impl NodalField {
    /// Zero field constrained on the mesh's Dirichlet boundary.
    pub fn zero_admissible(mesh: &Arc<Mesh2D>) -> Self {
        NodalField {
            mesh: Arc::clone(mesh),
            values: vec![Vector2::zeros(); mesh.n_nodes()],
            dirichlet_mask: mesh.dirichlet_mask().to_vec(),
        }
    }

    /// Zero field with no constraint mask (data field).
    pub fn zero_free(mesh: &Arc<Mesh2D>) -> Self {
        NodalField {
            mesh: Arc::clone(mesh),
            values: vec![Vector2::zeros(); mesh.n_nodes()],
            dirichlet_mask: vec![false; mesh.n_nodes()],
        }
    }

    /// Interpolates `f` at the nodes; no constraint mask.
    pub fn from_fn(mesh: &Arc<Mesh2D>, f: impl Fn([f64; 2]) -> Vector2<f64>) -> Self {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        NodalField {
            mesh: Arc::clone(mesh),
            values,
            dirichlet_mask: vec![false; mesh.n_nodes()],
        }
    }

    /// Interpolates `f` at the nodes under the mesh's Dirichlet mask.
    /// Rejected if `f` is nonzero at a constrained node.
    pub fn from_fn_admissible(
        mesh: &Arc<Mesh2D>,
        f: impl Fn([f64; 2]) -> Vector2<f64>,
    ) -> Result<Self, FemError> {
        let mask = mesh.dirichlet_mask();
        let mut values = Vec::with_capacity(mesh.n_nodes());
        for (i, &p) in mesh.nodes().iter().enumerate() {
            let v = f(p);
            if mask[i] && v != Vector2::zeros() {
                return Err(FemError::MaskViolation(i));
            }
            values.push(v);
        }
        Ok(NodalField {
            mesh: Arc::clone(mesh),
            values,
            dirichlet_mask: mask.to_vec(),
        })
    }

    /// Interpolates `f` and projects onto the admissible set by zeroing the
    /// Dirichlet nodes (for analytic fields that vanish there only up to
    /// roundoff).
    pub fn from_fn_projected(mesh: &Arc<Mesh2D>, f: impl Fn([f64; 2]) -> Vector2<f64>) -> Self {
        let mask = mesh.dirichlet_mask();
        let values = mesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &p)| if mask[i] { Vector2::zeros() } else { f(p) })
            .collect();
        NodalField { mesh: Arc::clone(mesh), values, dirichlet_mask: mask.to_vec() }
    }

    pub fn from_values(
        mesh: &Arc<Mesh2D>,
        values: Vec<Vector2<f64>>,
        dirichlet_mask: Vec<bool>,
    ) -> Result<Self, FemError> {
        if values.len() != mesh.n_nodes() {
            return Err(FemError::LengthMismatch { got: values.len(), want: mesh.n_nodes() });
        }
        for (i, v) in values.iter().enumerate() {
            if dirichlet_mask[i] && *v != Vector2::zeros() {
                return Err(FemError::MaskViolation(i));
            }
        }
        Ok(NodalField { mesh: Arc::clone(mesh), values, dirichlet_mask })
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn values(&self) -> &[Vector2<f64>] {
        &self.values
    }

    pub fn value(&self, node: usize) -> Vector2<f64> {
        self.values[node]
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet_mask
    }

    /// Sets a node value; masked nodes silently stay zero.
    pub fn set(&mut self, node: usize, v: Vector2<f64>) {
        if !self.dirichlet_mask[node] {
            self.values[node] = v;
        }
    }

    /// `self += s * other` (masks must agree on zeroing; masked entries stay zero).
    pub fn add_scaled(&mut self, other: &NodalField, s: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        for (i, m) in self.dirichlet_mask.iter().enumerate() {
            if *m {
                self.values[i] = Vector2::zeros();
            }
        }
    }

    pub fn scaled(&self, s: f64) -> NodalField {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// Pointwise difference, keeping this field's mask.
    pub fn sub(&self, other: &NodalField) -> NodalField {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// L^q(Omega) norm of the P1 interpolant via the degree-2 three-point
    /// rule on each triangle (exact for q = 2).
    pub fn lp_norm(&self, q: f64) -> Result<f64, FemError> {
        if q <= 1.0 {
            return Err(FemError::BadExponent(q));
        }
        let mesh = &self.mesh;
        let mut acc = 0.0;
        for k in 0..mesh.n_triangles() {
            let [a, b, c] = mesh.triangle(k);
            let (va, vb, vc) = (self.values[a], self.values[b], self.values[c]);
            // Edge-midpoint quadrature points of the P1 interpolant.
            let m0 = ((va + vb) / 2.0).norm();
            let m1 = ((vb + vc) / 2.0).norm();
            let m2 = ((vc + va) / 2.0).norm();
            acc += mesh.area(k) / 3.0 * (m0.powf(q) + m1.powf(q) + m2.powf(q));
        }
        Ok(acc.powf(1.0 / q))
    }

    /// L^2(Omega) norm (exact for P1).
    pub fn l2_norm(&self) -> f64 {
        self.lp_norm(2.0).expect("q=2 is valid")
    }

    /// L^q norm over the Neumann boundary, two-point Gauss per edge.
    pub fn lp_norm_neumann_boundary(&self, q: f64) -> Result<f64, FemError> {
        if q <= 1.0 {
            return Err(FemError::BadExponent(q));
        }
        let mesh = &self.mesh;
        let xi = 0.5 / 3.0_f64.sqrt();
        let mut acc = 0.0;
        for &e in mesh.neumann_edges() {
            let [a, b] = mesh.boundary_edges()[e].nodes;
            let len = mesh.edge_length(e);
            let (va, vb) = (self.values[a], self.values[b]);
            for s in [0.5 - xi, 0.5 + xi] {
                let v = va * (1.0 - s) + vb * s;
                acc += len / 2.0 * v.norm().powf(q);
            }
        }
        Ok(acc.powf(1.0 / q))
    }
}

/// Piecewise-constant 2x2 tensor field, one value per triangle.
#[derive(Clone, Debug)]
pub struct QuadTensorField {
    mesh: Arc<Mesh2D>,
    values: Vec<Matrix2<f64>>,
}

impl QuadTensorField {
    pub fn zeros(mesh: &Arc<Mesh2D>) -> Self {
        QuadTensorField {
            mesh: Arc::clone(mesh),
            values: vec![Matrix2::zeros(); mesh.n_triangles()],
        }
    }

    pub fn constant(mesh: &Arc<Mesh2D>, m: Matrix2<f64>) -> Self {
        QuadTensorField { mesh: Arc::clone(mesh), values: vec![m; mesh.n_triangles()] }
    }

    pub fn from_values(mesh: &Arc<Mesh2D>, values: Vec<Matrix2<f64>>) -> Result<Self, FemError> {
        if values.len() != mesh.n_triangles() {
            return Err(FemError::LengthMismatch { got: values.len(), want: mesh.n_triangles() });
        }
        if let Some(k) = values.iter().position(|m| !m.iter().all(|v| v.is_finite())) {
            return Err(FemError::NonFinite(k));
        }
        Ok(QuadTensorField { mesh: Arc::clone(mesh), values })
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    pub fn values(&self) -> &[Matrix2<f64>] {
        &self.values
    }

    pub fn value(&self, tri: usize) -> &Matrix2<f64> {
        &self.values[tri]
    }

    pub fn set(&mut self, tri: usize, m: Matrix2<f64>) {
        self.values[tri] = m;
    }

    /// L^q(Omega) norm with the Frobenius tensor norm; exact for piecewise
    /// constants.
    pub fn lp_norm(&self, q: f64) -> Result<f64, FemError> {
        if q <= 1.0 {
            return Err(FemError::BadExponent(q));
        }
        let mut acc = 0.0;
        for (k, m) in self.values.iter().enumerate() {
            acc += self.mesh.area(k) * m.norm().powf(q);
        }
        Ok(acc.powf(1.0 / q))
    }

    /// L^1(Omega) norm of the scalar per-triangle values `s` against this
    /// field's mesh areas (helper for determinant fields).
    pub fn scalar_l1(mesh: &Mesh2D, s: &[f64]) -> f64 {
        s.iter().enumerate().map(|(k, v)| mesh.area(k) * v.abs()).sum()
    }
}

/// Traction field: one constant 2-vector per Neumann edge.
#[derive(Clone, Debug)]
pub struct BoundaryField {
    mesh: Arc<Mesh2D>,
    values: Vec<Vector2<f64>>,
}

impl BoundaryField {
    pub fn zeros(mesh: &Arc<Mesh2D>) -> Self {
        BoundaryField {
            mesh: Arc::clone(mesh),
            values: vec![Vector2::zeros(); mesh.neumann_edges().len()],
        }
    }

    pub fn constant(mesh: &Arc<Mesh2D>, g: Vector2<f64>) -> Self {
        BoundaryField { mesh: Arc::clone(mesh), values: vec![g; mesh.neumann_edges().len()] }
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.mesh
    }

    /// Values aligned with `mesh.neumann_edges()`.
    pub fn values(&self) -> &[Vector2<f64>] {
        &self.values
    }

    pub fn set(&mut self, neumann_idx: usize, g: Vector2<f64>) {
        self.values[neumann_idx] = g;
    }

    pub fn scaled(&self, s: f64) -> BoundaryField {
        BoundaryField {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// L^2(Gamma_N) norm of the piecewise-constant traction.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for (i, &e) in self.mesh.neumann_edges().iter().enumerate() {
            acc += self.mesh.edge_length(e) * self.values[i].norm_squared();
        }
        acc.sqrt()
    }
}

/// Exact gradient of the piecewise-linear interpolant, constant per triangle.
pub fn gradient(v: &NodalField) -> QuadTensorField {
    let mesh = v.mesh();
    let mut values = Vec::with_capacity(mesh.n_triangles());
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let grads = mesh.shape_gradients(k);
        let mut g = Matrix2::zeros();
        for a in 0..3 {
            // (grad v)_{ij} = sum_a (v_a)_i (grad phi_a)_j
            g += v.value(tri[a]) * grads[a].transpose();
        }
        values.push(g);
    }
    QuadTensorField { mesh: Arc::clone(mesh), values }
}

/// `V^p` norm: L^p norm of the gradient.
pub fn vp_norm(v: &NodalField, p: f64) -> f64 {
    gradient(v).lp_norm(p).expect("vp_norm requires p > 1")
}

/// W^{1,p} norm with the paper-style splitting `||v||_{L^p} + ||grad v||_{L^p}`.
pub fn w1p_norm(v: &NodalField, p: f64) -> f64 {
    v.lp_norm(p).expect("w1p_norm requires p > 1") + vp_norm(v, p)
}

/// Load pairing `int_Omega f . phi + int_{Gamma_N} g . phi` with three-point
/// triangle and two-point edge Gauss quadrature.
pub fn load_pairing(f: &NodalField, g: &BoundaryField, phi: &NodalField) -> f64 {
    let mesh = phi.mesh();
    let mut acc = 0.0;
    for k in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle(k);
        let w = mesh.area(k) / 3.0;
        let fm = [
            (f.value(a) + f.value(b)) / 2.0,
            (f.value(b) + f.value(c)) / 2.0,
            (f.value(c) + f.value(a)) / 2.0,
        ];
        let pm = [
            (phi.value(a) + phi.value(b)) / 2.0,
            (phi.value(b) + phi.value(c)) / 2.0,
            (phi.value(c) + phi.value(a)) / 2.0,
        ];
        acc += w * (fm[0].dot(&pm[0]) + fm[1].dot(&pm[1]) + fm[2].dot(&pm[2]));
    }
    let xi = 0.5 / 3.0_f64.sqrt();
    for (i, &e) in mesh.neumann_edges().iter().enumerate() {
        let [a, b] = mesh.boundary_edges()[e].nodes;
        let len = mesh.edge_length(e);
        let ge = g.values()[i];
        for s in [0.5 - xi, 0.5 + xi] {
            let p = phi.value(a) * (1.0 - s) + phi.value(b) * s;
            acc += len / 2.0 * ge.dot(&p);
        }
    }
    acc
}

/// `int_Omega A : grad phi` (exact: both factors piecewise constant).
pub fn tensor_pairing(a: &QuadTensorField, phi: &NodalField) -> f64 {
    let mesh = phi.mesh();
    let grad_phi = gradient(phi);
    let mut acc = 0.0;
    for k in 0..mesh.n_triangles() {
        acc += mesh.area(k) * a.value(k).dot(grad_phi.value(k));
    }
    acc
}

/// Consistent (non-lumped) mass action `rho int_Omega v . phi`.
pub fn mass_action(v: &NodalField, phi: &NodalField, rho: f64) -> f64 {
    let mesh = phi.mesh();
    let mut acc = 0.0;
    for k in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangle(k);
        let w = mesh.area(k) / 3.0;
        let vm = [
            (v.value(a) + v.value(b)) / 2.0,
            (v.value(b) + v.value(c)) / 2.0,
            (v.value(c) + v.value(a)) / 2.0,
        ];
        let pm = [
            (phi.value(a) + phi.value(b)) / 2.0,
            (phi.value(b) + phi.value(c)) / 2.0,
            (phi.value(c) + phi.value(a)) / 2.0,
        ];
        acc += w * (vm[0].dot(&pm[0]) + vm[1].dot(&pm[1]) + vm[2].dot(&pm[2]));
    }
    rho * acc
}

/// Random admissible nodal field: i.i.d. uniform entries in `[-amp, amp]` at
/// free nodes, zero at Dirichlet nodes.
pub fn random_admissible_field(
    mesh: &Arc<Mesh2D>,
    amp: f64,
    rng: &mut impl Rng,
) -> NodalField {
    let mut field = NodalField::zero_admissible(mesh);
    for i in 0..mesh.n_nodes() {
        let v = Vector2::new(rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp));
        field.set(i, v);
    }
    field
}

/// Random symmetric tensor field, i.i.d. uniform entries in `[-r, r]` per
/// triangle (piecewise constant, matching the P1 discrete image of E).
pub fn random_symmetric_tensor_field(
    mesh: &Arc<Mesh2D>,
    r: f64,
    rng: &mut impl Rng,
) -> QuadTensorField {
    let mut field = QuadTensorField::zeros(mesh);
    for k in 0..mesh.n_triangles() {
        let a = rng.gen_range(-r..=r);
        let b = rng.gen_range(-r..=r);
        let c = rng.gen_range(-r..=r);
        field.set(k, Matrix2::new(a, b, b, c));
    }
    field
}

/// Empirical trace constant: max over samples of
/// `||phi||_{L^p(Gamma_N)} / ||phi||_{W^{1,p}}`.
pub fn empirical_trace_constant(mesh: &Arc<Mesh2D>, p: f64, samples: usize, seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    for _ in 0..samples {
        let phi = random_admissible_field(mesh, 1.0, &mut rng);
        let denom = w1p_norm(&phi, p);
        if denom == 0.0 {
            continue;
        }
        let num = phi.lp_norm_neumann_boundary(p).expect("p > 1");
        max_ratio = max_ratio.max(num / denom);
    }
    max_ratio
}
