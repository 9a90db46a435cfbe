//! Green–St-Venant kinematics and the strain-energy families with their
//! second Piola–Kirchhoff stresses, plus sampling validators for the
//! coercivity and sublinearity assumptions on the energy.
//!
//! Three families are supported:
//!
//! - St-Venant–Kirchhoff: `W = mu tr(E^2) + lambda/2 tr(E)^2`, exponent p = 4;
//! - polynomial Fung (degree-N truncation of the exponential form):
//!   `W = W(0) + beta sum_{k=1}^N gamma^k tr(E^2)^k / k!`, exponent p = 4N;
//! - Ogden: `W = tr((2E+I)^gamma - I)` for gamma > 1, exponent p = 2*gamma.
//!
//! The Ogden stress at rest is `2*gamma*I`, a nonzero residual of the family
//! as written; it is reported, never subtracted.

use std::sync::Arc;

use nalgebra::Matrix2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fem::{random_symmetric_tensor_field, QuadTensorField};
use crate::mesh::Mesh2D;

#[derive(Debug, Error)]
pub enum ConstitutiveError {
    #[error("invalid material parameters: {0}")]
    BadParameters(String),
    #[error("Ogden energy undefined: 2E+I has a non-positive eigenvalue ({0})")]
    OgdenDomain(f64),
    #[error("matrix power of non-positive-definite matrix (eigenvalue {0})")]
    NotPositiveDefinite(f64),
}

/// Strain-energy family with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaterialModel {
    Svk { mu: f64, lambda: f64 },
    FungPoly { w0: f64, beta: f64, gamma: f64, n: u32 },
    Ogden { gamma: f64 },
}

impl MaterialModel {
    /// Growth exponent p of the family (p > 2 always).
    pub fn exponent(&self) -> f64 {
        match *self {
            MaterialModel::Svk { .. } => 4.0,
            MaterialModel::FungPoly { n, .. } => 4.0 * n as f64,
            MaterialModel::Ogden { gamma } => 2.0 * gamma,
        }
    }

    /// Hoelder exponent `alpha = min(1, (p-2)/2)` of the stress.
    pub fn alpha(&self) -> f64 {
        let p = self.exponent();
        1.0_f64.min((p - 2.0) / 2.0)
    }

    pub fn validate(&self) -> Result<(), ConstitutiveError> {
        let bad = |msg: String| Err(ConstitutiveError::BadParameters(msg));
        match *self {
            MaterialModel::Svk { mu, lambda } => {
                if !(mu > 0.0) {
                    return bad(format!("svk: mu must be positive, got {mu}"));
                }
                if lambda < 0.0 {
                    return bad(format!("svk: lambda must be nonnegative, got {lambda}"));
                }
            }
            MaterialModel::FungPoly { w0, beta, gamma, n } => {
                if w0 < 0.0 {
                    return bad(format!("fung: w0 must be nonnegative, got {w0}"));
                }
                if !(beta > 0.0 && gamma > 0.0) {
                    return bad(format!("fung: beta and gamma must be positive, got {beta}, {gamma}"));
                }
                if n < 2 {
                    return bad(format!("fung: truncation degree must be at least 2, got {n}"));
                }
            }
            MaterialModel::Ogden { gamma } => {
                if !(gamma > 1.0) {
                    return bad(format!("ogden: gamma must exceed 1, got {gamma}"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            MaterialModel::Svk { .. } => "svk",
            MaterialModel::FungPoly { .. } => "fung",
            MaterialModel::Ogden { .. } => "ogden",
        }
    }
}

/// Green–St-Venant strain `E = (grad v + grad v^T + grad v^T grad v) / 2`.
pub fn green_st_venant(gradv: &Matrix2<f64>) -> Matrix2<f64> {
    let sym = (gradv + gradv.transpose()) / 2.0;
    sym + gradv.transpose() * gradv / 2.0
}

/// Eigendecomposition of a symmetric 2x2 matrix: rotation angle (cos, sin)
/// and eigenvalues, such that `S = R diag(l1, l2) R^T`.
fn sym_eigen(s: &Matrix2<f64>) -> ((f64, f64), (f64, f64)) {
    let (a, b, c) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (sn, cs) = theta.sin_cos();
    let l1 = a * cs * cs + 2.0 * b * sn * cs + c * sn * sn;
    let l2 = a * sn * sn - 2.0 * b * sn * cs + c * cs * cs;
    ((cs, sn), (l1, l2))
}

fn recompose(cs: f64, sn: f64, l1: f64, l2: f64) -> Matrix2<f64> {
    Matrix2::new(
        l1 * cs * cs + l2 * sn * sn,
        (l1 - l2) * sn * cs,
        (l1 - l2) * sn * cs,
        l1 * sn * sn + l2 * cs * cs,
    )
}

/// `S^beta` for symmetric positive definite `S`, via eigendecomposition.
pub fn symmetric_matrix_power(s: &Matrix2<f64>, beta: f64) -> Result<Matrix2<f64>, ConstitutiveError> {
    let ((cs, sn), (l1, l2)) = sym_eigen(s);
    if l1 <= 0.0 || l2 <= 0.0 {
        return Err(ConstitutiveError::NotPositiveDefinite(l1.min(l2)));
    }
    Ok(recompose(cs, sn, l1.powf(beta), l2.powf(beta)))
}

fn fung_series(beta: f64, gamma: f64, terms: u32, t: f64) -> f64 {
    // sum_{k=0}^{terms-1} gamma^k t^k / k!
    let mut acc = 0.0;
    let mut term = 1.0;
    for k in 0..terms {
        acc += term;
        term *= gamma * t / (k as f64 + 1.0);
    }
    beta * acc
}

/// Strain-energy density `W(E)`.
pub fn energy_density(m: &MaterialModel, e: &Matrix2<f64>) -> Result<f64, ConstitutiveError> {
    match *m {
        MaterialModel::Svk { mu, lambda } => {
            let tr_e2 = (e * e).trace();
            Ok(mu * tr_e2 + lambda / 2.0 * e.trace().powi(2))
        }
        MaterialModel::FungPoly { w0, beta, gamma, n } => {
            let t = (e * e).trace();
            // W(0) + beta * sum_{k=1}^{N} gamma^k t^k / k!
            let mut acc = 0.0;
            let mut term = gamma * t;
            for k in 1..=n {
                acc += term;
                term *= gamma * t / (k as f64 + 1.0);
            }
            Ok(w0 + beta * acc)
        }
        MaterialModel::Ogden { gamma } => {
            let s = 2.0 * e + Matrix2::identity();
            let (_, (l1, l2)) = sym_eigen(&s);
            if l1 <= 0.0 || l2 <= 0.0 {
                return Err(ConstitutiveError::OgdenDomain(l1.min(l2)));
            }
            Ok(l1.powf(gamma) + l2.powf(gamma) - 2.0)
        }
    }
}

/// Second Piola–Kirchhoff stress `Sigma = dW/dE`, symmetric for symmetric E.
pub fn stress(m: &MaterialModel, e: &Matrix2<f64>) -> Result<Matrix2<f64>, ConstitutiveError> {
    match *m {
        MaterialModel::Svk { mu, lambda } => {
            Ok(2.0 * mu * e + lambda * e.trace() * Matrix2::identity())
        }
        MaterialModel::FungPoly { beta, gamma, n, .. } => {
            let t = (e * e).trace();
            Ok(2.0 * gamma * fung_series(beta, gamma, n, t) * e)
        }
        MaterialModel::Ogden { gamma } => {
            let s = 2.0 * e + Matrix2::identity();
            let pw = symmetric_matrix_power(&s, gamma - 1.0).map_err(|err| match err {
                ConstitutiveError::NotPositiveDefinite(l) => ConstitutiveError::OgdenDomain(l),
                other => other,
            })?;
            Ok(2.0 * gamma * pw)
        }
    }
}

/// Directional derivative of the stress, `dSigma/dE . de` (used by the
/// monolithic Newton tangent).
pub fn stress_tangent(
    m: &MaterialModel,
    e: &Matrix2<f64>,
    de: &Matrix2<f64>,
) -> Result<Matrix2<f64>, ConstitutiveError> {
    match *m {
        MaterialModel::Svk { mu, lambda } => {
            Ok(2.0 * mu * de + lambda * de.trace() * Matrix2::identity())
        }
        MaterialModel::FungPoly { beta, gamma, n, .. } => {
            let t = (e * e).trace();
            let s = 2.0 * gamma * fung_series(beta, gamma, n, t);
            // d/dE of the series factor, via d t / dE = 2E.
            let c = if n >= 2 {
                4.0 * gamma * gamma * fung_series(beta, gamma, n - 1, t)
            } else {
                0.0
            };
            Ok(s * de + c * e.dot(de) * e)
        }
        MaterialModel::Ogden { gamma } => {
            // Daleckii-Krein: derivative of S -> S^(gamma-1) at S = 2E+I in
            // direction dS = 2 dE, expressed in the eigenbasis of S.
            let s = 2.0 * e + Matrix2::identity();
            let ((cs, sn), (l1, l2)) = sym_eigen(&s);
            if l1 <= 0.0 || l2 <= 0.0 {
                return Err(ConstitutiveError::OgdenDomain(l1.min(l2)));
            }
            let q = Matrix2::new(cs, -sn, sn, cs);
            let ds = 2.0 * de;
            let g = q.transpose() * ds * q;
            let b = gamma - 1.0;
            let fdiag = |l: f64| b * l.powf(b - 1.0);
            let f11 = fdiag(l1);
            let f22 = fdiag(l2);
            let f12 = if (l1 - l2).abs() > 1e-9 * (l1.abs() + l2.abs()) {
                (l1.powf(b) - l2.powf(b)) / (l1 - l2)
            } else {
                fdiag((l1 + l2) / 2.0)
            };
            let k = Matrix2::new(f11 * g[(0, 0)], f12 * g[(0, 1)], f12 * g[(1, 0)], f22 * g[(1, 1)]);
            Ok(2.0 * gamma * (q * k * q.transpose()))
        }
    }
}

/// First Piola–Kirchhoff tensor `(I + grad u) Sigma(E(grad u))`, the tensor
/// entering the divergence of the momentum balance.
pub fn first_pk_tensor(
    m: &MaterialModel,
    gradu: &Matrix2<f64>,
) -> Result<Matrix2<f64>, ConstitutiveError> {
    let e = green_st_venant(gradu);
    let sigma = stress(m, &e)?;
    Ok((Matrix2::identity() + gradu) * sigma)
}

/// Report of the energy coercivity sampling (`int W(E) >= C ||E||^{p/2}`).
#[derive(Clone, Debug)]
pub struct CoercivityReport {
    /// Minimum observed ratio `int W(E) / ||E||^{p/2}_{L^{p/2}}`.
    pub empirical_c: f64,
    /// Sample index attaining the minimum.
    pub witness: usize,
    pub samples_used: usize,
}

/// Samples random piecewise-constant symmetric strain fields with entries in
/// `[-radius, radius]` and reports the minimum energy/norm ratio. Ogden
/// samples are rejection-sampled per triangle so that `2E+I` stays SPD.
pub fn validate_coercivity(
    m: &MaterialModel,
    mesh: &Arc<Mesh2D>,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<CoercivityReport, ConstitutiveError> {
    m.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_half = m.exponent() / 2.0;
    let mut best = f64::INFINITY;
    let mut witness = 0;
    let mut used = 0;
    for s in 0..samples {
        let field = random_strain_field(m, mesh, radius, &mut rng);
        let norm_pow: f64 = (0..mesh.n_triangles())
            .map(|k| mesh.area(k) * field.value(k).norm().powf(p_half))
            .sum();
        if norm_pow == 0.0 {
            continue; // zero-field sample excluded (0/0)
        }
        let mut energy = 0.0;
        for k in 0..mesh.n_triangles() {
            energy += mesh.area(k) * energy_density(m, field.value(k))?;
        }
        let ratio = energy / norm_pow;
        used += 1;
        if ratio < best {
            best = ratio;
            witness = s;
        }
    }
    Ok(CoercivityReport { empirical_c: best, witness, samples_used: used })
}

/// Report of the local sublinearity sampling for the stress.
#[derive(Clone, Debug)]
pub struct SublinearityReport {
    /// Maximum observed `(||Sigma(E)|| - ||Sigma(0)||) / ||E||^alpha`.
    pub empirical_c_check: f64,
    pub witness: usize,
    pub samples_used: usize,
}

/// Samples strain fields with `||E||_{L^{p/2}} <= radius` and reports the
/// empirical sublinearity constant of `Sigma` in `L^{(p/2)'}`.
pub fn validate_stress_sublinearity(
    m: &MaterialModel,
    mesh: &Arc<Mesh2D>,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<SublinearityReport, ConstitutiveError> {
    m.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = m.exponent();
    let p_half = p / 2.0;
    let q_dual = p / (p - 2.0); // (p/2)'
    let alpha = m.alpha();

    let sigma0_norm = {
        let s0 = stress(m, &Matrix2::zeros())?;
        s0.norm() * mesh.total_area().powf(1.0 / q_dual)
    };

    let mut best = f64::NEG_INFINITY;
    let mut witness = 0;
    let mut used = 0;
    for s in 0..samples {
        let raw = random_strain_field(m, mesh, 1.0, &mut rng);
        let raw_norm = raw.lp_norm(p_half).expect("p/2 > 1");
        if raw_norm == 0.0 {
            continue; // E = 0 excluded from the quotient
        }
        // Scale to a random radius fraction so the ball is covered.
        let target: f64 = radius * rng.gen_range(0.05..=1.0);
        let scale = target / raw_norm;
        let mut field = QuadTensorField::zeros(mesh);
        let mut ok = true;
        for k in 0..mesh.n_triangles() {
            let e = scale * raw.value(k);
            if matches!(m, MaterialModel::Ogden { .. }) {
                let (_, (l1, l2)) = sym_eigen(&(2.0 * e + Matrix2::identity()));
                if l1 <= 1e-9 || l2 <= 1e-9 {
                    ok = false;
                    break;
                }
            }
            field.set(k, e);
        }
        if !ok {
            continue;
        }
        let mut sig_pow = 0.0;
        for k in 0..mesh.n_triangles() {
            let sig = stress(m, field.value(k))?;
            sig_pow += mesh.area(k) * sig.norm().powf(q_dual);
        }
        let sig_norm = sig_pow.powf(1.0 / q_dual);
        let ratio = (sig_norm - sigma0_norm) / target.powf(alpha);
        used += 1;
        if ratio > best {
            best = ratio;
            witness = s;
        }
    }
    Ok(SublinearityReport { empirical_c_check: best, witness, samples_used: used })
}

/// Random symmetric strain field; Ogden triangles are redrawn until `2E+I`
/// is positive definite.
pub fn random_strain_field(
    m: &MaterialModel,
    mesh: &Arc<Mesh2D>,
    radius: f64,
    rng: &mut impl Rng,
) -> QuadTensorField {
    if !matches!(m, MaterialModel::Ogden { .. }) {
        return random_symmetric_tensor_field(mesh, radius, rng);
    }
    let mut field = QuadTensorField::zeros(mesh);
    for k in 0..mesh.n_triangles() {
        loop {
            let a = rng.gen_range(-radius..=radius);
            let b = rng.gen_range(-radius..=radius);
            let c = rng.gen_range(-radius..=radius);
            let e = Matrix2::new(a, b, b, c);
            let (_, (l1, l2)) = sym_eigen(&(2.0 * e + Matrix2::identity()));
            if l1 > 1e-6 && l2 > 1e-6 {
                field.set(k, e);
                break;
            }
        }
    }
    field
}

/// Random symmetric E with entries in `[-r, r]`, rejection-sampled for the
/// Ogden domain when required.
pub fn random_strain(m: &MaterialModel, r: f64, rng: &mut impl Rng) -> Matrix2<f64> {
    loop {
        let a = rng.gen_range(-r..=r);
        let b = rng.gen_range(-r..=r);
        let c = rng.gen_range(-r..=r);
        let e = Matrix2::new(a, b, b, c);
        if matches!(m, MaterialModel::Ogden { .. }) {
            let (_, (l1, l2)) = sym_eigen(&(2.0 * e + Matrix2::identity()));
            if l1 <= 1e-6 || l2 <= 1e-6 {
                continue;
            }
        }
        return e;
    }
}

/// Central-difference check of `stress` against `energy_density`, returning
/// the maximum relative error over `samples` random strains.
pub fn gradient_consistency_max_error(
    m: &MaterialModel,
    samples: usize,
    range: f64,
    step: f64,
    seed: u64,
) -> Result<f64, ConstitutiveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0_f64;
    for _ in 0..samples {
        let e = random_strain(m, range, &mut rng);
        let sigma = stress(m, &e)?;
        let mut fd = Matrix2::zeros();
        // Perturb the three independent components of the symmetric tensor;
        // the off-diagonal perturbation moves both entries at once, so the
        // quotient equals twice the off-diagonal stress entry.
        let basis = [
            (Matrix2::new(1.0, 0.0, 0.0, 0.0), [(0usize, 0usize)].as_slice(), 1.0),
            (Matrix2::new(0.0, 0.0, 0.0, 1.0), [(1, 1)].as_slice(), 1.0),
            (Matrix2::new(0.0, 1.0, 1.0, 0.0), [(0, 1), (1, 0)].as_slice(), 2.0),
        ];
        for (dir, slots, factor) in basis {
            let wp = energy_density(m, &(e + step * dir))?;
            let wm = energy_density(m, &(e - step * dir))?;
            let d = (wp - wm) / (2.0 * step) / factor;
            for &(i, j) in slots {
                fd[(i, j)] = d;
            }
        }
        let rel = (fd - sigma).norm() / sigma.norm().max(1e-12);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
