//! Implicit-Euler solver for the evolutionary p-Laplace system with mixed
//! boundary conditions and an optional piecewise-constant tensor right-hand
//! side, the inner engine of the elastodynamics fixed-point map.
//!
//! Each step solves, for all admissible test fields phi:
//!
//! ```text
//! rho <(w_new - w_old)/dt, phi> + kappa int flux(grad w_new) : grad phi
//!     + int A : grad phi  =  int f . phi + int_{Gamma_N} g . phi
//! ```
//!
//! with `flux(G) = (delta^2 + |G|^2)^{(p-2)/2} G`, by damped Newton with
//! analytic Jacobian and backtracking line search. The smoothing `delta`
//! keeps the Jacobian nonsingular at `grad w = 0` when p > 2. For p = 2 the
//! step is linear and the factorization is cached across equal-`dt` steps.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::fem::{vp_norm, BoundaryField, NodalField, QuadTensorField};
use crate::linsolve::{BandMatrix, DofMap, LinSolveError};
use crate::mesh::Mesh2D;

/// Time-dependent volumetric data (body force or manufactured source).
#[derive(Clone)]
pub enum TimeField {
    Zero,
    Constant(NodalField),
    /// `base * min(t / t_full, 1)`.
    Ramp { base: NodalField, t_full: f64 },
    Func(Arc<dyn Fn(f64) -> NodalField + Send + Sync>),
}

impl TimeField {
    pub fn eval(&self, mesh: &Arc<Mesh2D>, t: f64) -> NodalField {
        match self {
            TimeField::Zero => NodalField::zero_free(mesh),
            TimeField::Constant(f) => f.clone(),
            TimeField::Ramp { base, t_full } => base.scaled((t / t_full).clamp(0.0, 1.0)),
            TimeField::Func(f) => f(t),
        }
    }

    pub fn scaled(&self, s: f64) -> TimeField {
        match self {
            TimeField::Zero => TimeField::Zero,
            TimeField::Constant(f) => TimeField::Constant(f.scaled(s)),
            TimeField::Ramp { base, t_full } => {
                TimeField::Ramp { base: base.scaled(s), t_full: *t_full }
            }
            TimeField::Func(f) => {
                let f = Arc::clone(f);
                TimeField::Func(Arc::new(move |t| f(t).scaled(s)))
            }
        }
    }
}

impl std::fmt::Debug for TimeField {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TimeField::Zero => write!(fm, "TimeField::Zero"),
            TimeField::Constant(_) => write!(fm, "TimeField::Constant"),
            TimeField::Ramp { t_full, .. } => write!(fm, "TimeField::Ramp(t_full={t_full})"),
            TimeField::Func(_) => write!(fm, "TimeField::Func"),
        }
    }
}

/// Time-dependent Neumann traction.
#[derive(Clone)]
pub enum TimeBoundary {
    Zero,
    Constant(BoundaryField),
    Ramp { base: BoundaryField, t_full: f64 },
    Func(Arc<dyn Fn(f64) -> BoundaryField + Send + Sync>),
}

impl TimeBoundary {
    pub fn eval(&self, mesh: &Arc<Mesh2D>, t: f64) -> BoundaryField {
        match self {
            TimeBoundary::Zero => BoundaryField::zeros(mesh),
            TimeBoundary::Constant(g) => g.clone(),
            TimeBoundary::Ramp { base, t_full } => base.scaled((t / t_full).clamp(0.0, 1.0)),
            TimeBoundary::Func(g) => g(t),
        }
    }

    pub fn scaled(&self, s: f64) -> TimeBoundary {
        match self {
            TimeBoundary::Zero => TimeBoundary::Zero,
            TimeBoundary::Constant(g) => TimeBoundary::Constant(g.scaled(s)),
            TimeBoundary::Ramp { base, t_full } => {
                TimeBoundary::Ramp { base: base.scaled(s), t_full: *t_full }
            }
            TimeBoundary::Func(g) => {
                let g = Arc::clone(g);
                TimeBoundary::Func(Arc::new(move |t| g(t).scaled(s)))
            }
        }
    }
}

impl std::fmt::Debug for TimeBoundary {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TimeBoundary::Zero => write!(fm, "TimeBoundary::Zero"),
            TimeBoundary::Constant(_) => write!(fm, "TimeBoundary::Constant"),
            TimeBoundary::Ramp { t_full, .. } => write!(fm, "TimeBoundary::Ramp(t_full={t_full})"),
            TimeBoundary::Func(_) => write!(fm, "TimeBoundary::Func"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlaplaceError {
    #[error("invalid p-Laplace problem: {0}")]
    Invalid(String),
    #[error("newton failed to converge: residual {residual:.3e} after {iters} iterations")]
    NewtonFailure { iters: usize, residual: f64 },
    #[error(transparent)]
    LinSolve(#[from] LinSolveError),
    #[error("run aborted after repeated step failures at t = {t}: {source}")]
    Aborted { t: f64, source: Box<PlaplaceError> },
    #[error("residual evaluation failed: {0}")]
    Eval(String),
}

impl PlaplaceError {
    /// Step-local failures that the dt-halving policy may retry.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            PlaplaceError::NewtonFailure { .. }
                | PlaplaceError::LinSolve(_)
                | PlaplaceError::Eval(_)
        )
    }
}

/// Newton iteration controls.
#[derive(Clone, Copy, Debug)]
pub struct NewtonParams {
    /// Absolute tolerance on the l2 norm of the assembled residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Backtracking halvings allowed per iteration.
    pub max_line_search: usize,
}

impl Default for NewtonParams {
    fn default() -> Self {
        NewtonParams { tol: 1e-10, max_iter: 50, max_line_search: 30 }
    }
}

/// Evolutionary p-Laplace problem data.
#[derive(Clone, Debug)]
pub struct PLaplaceProblem {
    pub mesh: Arc<Mesh2D>,
    pub rho: f64,
    pub kappa: f64,
    pub p: f64,
    /// Flux smoothing parameter (>= 0).
    pub delta: f64,
    pub f: TimeField,
    pub g: TimeBoundary,
    /// Optional tensor right-hand side entering as `int A : grad phi`.
    pub a: Option<QuadTensorField>,
    /// Initial velocity.
    pub u1: NodalField,
    pub newton: NewtonParams,
}

impl PLaplaceProblem {
    pub fn validate(&self) -> Result<(), PlaplaceError> {
        if !(self.kappa > 0.0) {
            return Err(PlaplaceError::Invalid(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.p >= 2.0) {
            return Err(PlaplaceError::Invalid(format!("p must be at least 2, got {}", self.p)));
        }
        if self.delta < 0.0 {
            return Err(PlaplaceError::Invalid(format!(
                "delta must be nonnegative, got {}",
                self.delta
            )));
        }
        if !(self.rho > 0.0) {
            return Err(PlaplaceError::Invalid(format!("rho must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

/// Regularized p-Laplace flux `(delta^2 + |G|^2)^{(p-2)/2} G`.
pub fn plaplace_flux(g: &Matrix2<f64>, p: f64, delta: f64) -> Matrix2<f64> {
    if p == 2.0 {
        return *g;
    }
    let q = delta * delta + g.norm_squared();
    if q == 0.0 {
        return Matrix2::zeros();
    }
    q.powf((p - 2.0) / 2.0) * g
}

/// Coefficients `(s, s')` of the flux tangent `dF[H] = s H + s' (G:H) G`.
#[inline]
pub(crate) fn flux_tangent_coeffs(g: &Matrix2<f64>, p: f64, delta: f64) -> (f64, f64) {
    if p == 2.0 {
        return (1.0, 0.0);
    }
    let q = delta * delta + g.norm_squared();
    if q == 0.0 {
        return (0.0, 0.0);
    }
    (q.powf((p - 2.0) / 2.0), (p - 2.0) * q.powf((p - 4.0) / 2.0))
}

/// Local consistent mass entry: `int phi_a phi_b = area (1 + d_ab) / 12`.
#[inline]
pub(crate) fn local_mass(area: f64, a: usize, b: usize) -> f64 {
    if a == b {
        area / 6.0
    } else {
        area / 12.0
    }
}

/// Assembles the load vector `int f . phi + int_{Gamma_N} g . phi` over the
/// free dofs.
pub(crate) fn assemble_load(dofs: &DofMap, f: &NodalField, g: &BoundaryField) -> Vec<f64> {
    let mesh = dofs.mesh();
    let mut load = vec![0.0; dofs.n_free()];
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let area = mesh.area(k);
        for a in 0..3 {
            let mut v = Vector2::zeros();
            for b in 0..3 {
                v += local_mass(area, a, b) * f.value(tri[b]);
            }
            for c in 0..2 {
                if let Some(d) = dofs.dof(tri[a], c) {
                    load[d] += v[c];
                }
            }
        }
    }
    for (i, &e) in mesh.neumann_edges().iter().enumerate() {
        let [n0, n1] = mesh.boundary_edges()[e].nodes;
        let half = mesh.edge_length(e) / 2.0;
        let ge = g.values()[i];
        for node in [n0, n1] {
            for c in 0..2 {
                if let Some(d) = dofs.dof(node, c) {
                    load[d] += half * ge[c];
                }
            }
        }
    }
    load
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton with analytic Jacobian and backtracking line search, shared
/// by the p-Laplace step and the monolithic elastodynamics step.
///
/// `residual` may fail on inadmissible trial states (e.g. an orientation-
/// reversing Ogden state); failures during line search cause backtracking,
/// a failure at the initial iterate is fatal. With `reuse_factorization`
/// set and the band already factored, assembly is skipped (valid only for
/// state-independent Jacobians).
pub(crate) fn damped_newton(
    band: &mut BandMatrix,
    x0: Vec<f64>,
    params: &NewtonParams,
    mut residual: impl FnMut(&[f64]) -> Result<Vec<f64>, PlaplaceError>,
    mut jacobian: impl FnMut(&[f64], &mut BandMatrix) -> Result<(), PlaplaceError>,
    reuse_factorization: bool,
) -> Result<(Vec<f64>, usize), PlaplaceError> {
    let mut x = x0;
    let mut r = residual(&x)?;
    let mut rnorm = l2(&r);
    for iter in 0..params.max_iter {
        if rnorm <= params.tol {
            return Ok((x, iter));
        }
        if !(reuse_factorization && band.is_factored()) {
            band.reset();
            jacobian(&x, band)?;
            band.factor()?;
        }
        let mut dx = r.clone();
        for v in &mut dx {
            *v = -*v;
        }
        band.solve_in_place(&mut dx);

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=params.max_line_search {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + alpha * di).collect();
            // An Err from the residual is an inadmissible trial state:
            // treat it like a residual increase and backtrack.
            if let Ok(rt) = residual(&trial) {
                let rtnorm = l2(&rt);
                if rtnorm < rnorm || rtnorm <= params.tol {
                    x = trial;
                    r = rt;
                    rnorm = rtnorm;
                    accepted = true;
                    break;
                }
            }
            alpha /= 2.0;
        }
        if !accepted {
            return Err(PlaplaceError::NewtonFailure { iters: iter + 1, residual: rnorm });
        }
    }
    if rnorm <= params.tol {
        Ok((x, params.max_iter))
    } else {
        Err(PlaplaceError::NewtonFailure { iters: params.max_iter, residual: rnorm })
    }
}

/// Residual of the implicit-Euler p-Laplace step at free-dof vector `x`.
fn pl_residual(
    prob: &PLaplaceProblem,
    dofs: &DofMap,
    x: &[f64],
    w_old: &NodalField,
    load: &[f64],
    dt: f64,
) -> Vec<f64> {
    let mesh = &prob.mesh;
    let mut r: Vec<f64> = load.iter().map(|l| -l).collect();
    let rho_dt = prob.rho / dt;
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let area = mesh.area(k);
        let grads = mesh.shape_gradients(k);
        let mut gw = Matrix2::zeros();
        let mut wv = [Vector2::zeros(); 3];
        for a in 0..3 {
            wv[a] = dofs.value_of(x, tri[a]);
            gw += wv[a] * grads[a].transpose();
        }
        let flux = plaplace_flux(&gw, prob.p, prob.delta);
        let a_k = prob.a.as_ref().map(|a| *a.value(k));
        for a in 0..3 {
            let mut mass = Vector2::zeros();
            for b in 0..3 {
                mass += local_mass(area, a, b) * (wv[b] - w_old.value(tri[b]));
            }
            let mut v = rho_dt * mass + prob.kappa * area * (flux * grads[a]);
            if let Some(ak) = a_k {
                v += area * (ak * grads[a]);
            }
            for c in 0..2 {
                if let Some(d) = dofs.dof(tri[a], c) {
                    r[d] += v[c];
                }
            }
        }
    }
    r
}

/// Jacobian of the p-Laplace step residual at `x`, emitted entry-wise.
fn pl_jacobian(
    prob: &PLaplaceProblem,
    dofs: &DofMap,
    x: &[f64],
    dt: f64,
    add: &mut impl FnMut(usize, usize, f64),
) {
    let mesh = &prob.mesh;
    let rho_dt = prob.rho / dt;
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let area = mesh.area(k);
        let grads = mesh.shape_gradients(k);
        let mut gw = Matrix2::zeros();
        for a in 0..3 {
            gw += dofs.value_of(x, tri[a]) * grads[a].transpose();
        }
        let (s, sp) = flux_tangent_coeffs(&gw, prob.p, prob.delta);
        let gb: [Vector2<f64>; 3] = [gw * grads[0], gw * grads[1], gw * grads[2]];
        for a in 0..3 {
            for c in 0..3 {
                let mass = rho_dt * local_mass(area, a, c);
                let diag = prob.kappa * area * s * grads[a].dot(&grads[c]);
                for i in 0..2 {
                    let Some(di) = dofs.dof(tri[a], i) else { continue };
                    for kk in 0..2 {
                        let Some(dk) = dofs.dof(tri[c], kk) else { continue };
                        let mut v = if i == kk { mass + diag } else { 0.0 };
                        if sp != 0.0 {
                            v += prob.kappa * area * sp * gb[a][i] * gb[c][kk];
                        }
                        if v != 0.0 {
                            add(di, dk, v);
                        }
                    }
                }
            }
        }
    }
}

/// Stateful p-Laplace stepper: owns the dof map, band workspace and the
/// p = 2 factorization cache. A solver instance is single-threaded; distinct
/// instances run independently in parallel.
pub struct PlaplaceSolver {
    prob: PLaplaceProblem,
    dofs: DofMap,
    band: BandMatrix,
    /// Time step for which the cached (linear, p = 2) factorization is valid.
    cached_linear_dt: Option<f64>,
}

impl PlaplaceSolver {
    pub fn new(prob: PLaplaceProblem) -> Result<Self, PlaplaceError> {
        prob.validate()?;
        let dofs = DofMap::new(&prob.mesh);
        let band = dofs.band_matrix();
        Ok(PlaplaceSolver { prob, dofs, band, cached_linear_dt: None })
    }

    pub fn problem(&self) -> &PLaplaceProblem {
        &self.prob
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Replaces the tensor right-hand side `A` (does not touch the Jacobian).
    pub fn set_tensor_rhs(&mut self, a: Option<QuadTensorField>) {
        self.prob.a = a;
    }

    /// One implicit-Euler step from `t_old` to `t_old + dt`. Data fields are
    /// evaluated at the new time. Returns the new velocity and the Newton
    /// iteration count.
    pub fn step(
        &mut self,
        w_old: &NodalField,
        t_old: f64,
        dt: f64,
    ) -> Result<(NodalField, usize), PlaplaceError> {
        self.step_from(w_old, w_old, t_old, dt)
    }

    /// As [`PlaplaceSolver::step`], but with a separate Newton starting
    /// iterate (warm start for the fixed-point loop).
    pub fn step_from(
        &mut self,
        w_old: &NodalField,
        guess: &NodalField,
        t_old: f64,
        dt: f64,
    ) -> Result<(NodalField, usize), PlaplaceError> {
        if !(dt > 0.0) {
            return Err(PlaplaceError::Invalid(format!("dt must be positive, got {dt}")));
        }
        let t_new = t_old + dt;
        let f_new = self.prob.f.eval(&self.prob.mesh, t_new);
        let g_new = self.prob.g.eval(&self.prob.mesh, t_new);
        let load = assemble_load(&self.dofs, &f_new, &g_new);

        let linear = self.prob.p == 2.0;
        let reuse = linear && self.cached_linear_dt == Some(dt);

        let x0 = self.dofs.gather(guess);
        let (prob, dofs) = (&self.prob, &self.dofs);
        let (x, iters) = damped_newton(
            &mut self.band,
            x0,
            &prob.newton,
            |x| Ok(pl_residual(prob, dofs, x, w_old, &load, dt)),
            |x, band| {
                pl_jacobian(prob, dofs, x, dt, &mut |i, j, v| band.add(i, j, v));
                Ok(())
            },
            reuse,
        )?;
        self.cached_linear_dt = if linear { Some(dt) } else { None };
        Ok((self.dofs.scatter(&x), iters))
    }
}

/// One-shot convenience step; builds a throwaway solver.
pub fn pl_step(
    prob: &PLaplaceProblem,
    w_old: &NodalField,
    t_old: f64,
    dt: f64,
) -> Result<(NodalField, usize), PlaplaceError> {
    let mut solver = PlaplaceSolver::new(prob.clone())?;
    solver.step(w_old, t_old, dt)
}

/// Velocity trajectory on the uniform step grid.
#[derive(Clone, Debug)]
pub struct PlTrajectory {
    pub times: Vec<f64>,
    pub w: Vec<NodalField>,
    pub newton_iters: Vec<usize>,
}

/// Integrates from 0 to `t_end` on a uniform grid. On Newton failure the
/// offending step is retried with halved substeps, up to 6 halvings, after
/// which the run aborts.
pub fn pl_time_loop(
    prob: &PLaplaceProblem,
    t_end: f64,
    dt: f64,
) -> Result<PlTrajectory, PlaplaceError> {
    let mut solver = PlaplaceSolver::new(prob.clone())?;
    let n_steps = (t_end / dt).round() as usize;
    if n_steps == 0 || (n_steps as f64 * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(PlaplaceError::Invalid(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }
    let mut w = prob.u1.clone();
    let mut traj = PlTrajectory {
        times: vec![0.0],
        w: vec![w.clone()],
        newton_iters: vec![0],
    };
    for n in 1..=n_steps {
        let t_old = (n - 1) as f64 * dt;
        let iters = advance_with_halving(&mut solver, &mut w, t_old, dt, 0)?;
        traj.times.push(n as f64 * dt);
        traj.w.push(w.clone());
        traj.newton_iters.push(iters);
    }
    Ok(traj)
}

/// dt-halving policy shared with the elastodynamics driver: retry a failed
/// step as two half steps, recursing up to `MAX_HALVINGS`.
pub(crate) const MAX_HALVINGS: usize = 6;

fn advance_with_halving(
    solver: &mut PlaplaceSolver,
    w: &mut NodalField,
    t_old: f64,
    dt: f64,
    depth: usize,
) -> Result<usize, PlaplaceError> {
    match solver.step(w, t_old, dt) {
        Ok((w_new, iters)) => {
            *w = w_new;
            Ok(iters)
        }
        Err(e) if e.is_retryable() && depth < MAX_HALVINGS => {
            log::warn!("p-Laplace step failed at t={t_old} (dt={dt}), halving: {e}");
            let i1 = advance_with_halving(solver, w, t_old, dt / 2.0, depth + 1)?;
            let i2 = advance_with_halving(solver, w, t_old + dt / 2.0, dt / 2.0, depth + 1)?;
            Ok(i1 + i2)
        }
        Err(e) => Err(PlaplaceError::Aborted { t: t_old, source: Box::new(e) }),
    }
}

/// Discrete realization of the parabolic energy estimate: compares the
/// dissipation integral against the data terms.
#[derive(Clone, Debug)]
pub struct PlEnergyReport {
    /// `||w||^p_{L^p(0,T;V^p)}`, discrete right-endpoint quadrature.
    pub lhs: f64,
    /// `||u1||^2 + int ||f||^{p'} + int ||g||^{p'} (+ int ||A||^{p'})`, with
    /// dual norms replaced by the L^2 norms of the representatives.
    pub rhs_data: f64,
    pub c_mon: f64,
    pub violated: bool,
}

pub fn pl_energy_monitor(
    traj: &PlTrajectory,
    prob: &PLaplaceProblem,
    dt: f64,
    c_mon: f64,
) -> PlEnergyReport {
    let p = prob.p;
    let pp = p / (p - 1.0);
    let mut lhs = 0.0;
    for w in traj.w.iter().skip(1) {
        lhs += dt * vp_norm(w, p).powf(p);
    }
    let mut rhs = prob.u1.l2_norm().powi(2);
    for &t in traj.times.iter().skip(1) {
        let f = prob.f.eval(&prob.mesh, t);
        let g = prob.g.eval(&prob.mesh, t);
        rhs += dt * f.l2_norm().powf(pp);
        rhs += dt * g.l2_norm().powf(pp);
    }
    if let Some(a) = &prob.a {
        let a_norm = a.lp_norm(pp).expect("p' > 1");
        let t_total = traj.times.last().copied().unwrap_or(0.0);
        rhs += t_total * a_norm.powf(pp);
    }
    let violated = lhs > c_mon * rhs && lhs > 1e-14;
    PlEnergyReport { lhs, rhs_data: rhs, c_mon, violated }
}
