//! Time-stepper for the viscosity-regularized elastodynamics system.
//!
//! One step advances the velocity `w` through the fully implicit identity
//!
//! ```text
//! rho <(w_new - w_old)/dt, phi> + kappa int flux(grad w_new) : grad phi
//!   + int (I + grad u_new) Sigma(u_new) : grad phi = int f . phi + int g . phi,
//! u_new = u_old + dt w_new,
//! ```
//!
//! either by Picard iteration of the frozen-displacement fixed-point map
//! (each application is one p-Laplace solve with the elastic stress as a
//! tensor right-hand side), or by a monolithic damped Newton on the full
//! residual. Picard is the default; on stagnation the step falls back to
//! Newton. The kappa-continuation driver reruns the same data over a
//! decreasing viscosity schedule and records the Cauchy differences used as
//! the vanishing-viscosity convergence proxy.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use thiserror::Error;

use crate::constitutive::{
    energy_density, first_pk_tensor, green_st_venant, stress, stress_tangent, ConstitutiveError,
    MaterialModel,
};
use crate::diagnostics::{
    energy_estimate_check, min_determinant, DataNorms, EnergyPoint, RunRecord, StepRow, Verdict,
};
use crate::fem::{gradient, vp_norm, NodalField, QuadTensorField};
use crate::linsolve::{BandMatrix, DofMap};
use crate::mesh::Mesh2D;
use crate::plaplace::{
    assemble_load, damped_newton, flux_tangent_coeffs, local_mass, plaplace_flux, NewtonParams,
    PLaplaceProblem, PlaplaceError, PlaplaceSolver, TimeBoundary, TimeField, MAX_HALVINGS,
};

#[derive(Debug, Error)]
pub enum ElastoError {
    #[error(transparent)]
    Step(#[from] PlaplaceError),
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("inadmissible data: {0}")]
    Data(String),
    #[error("initial state violates det(I + grad u0) > 0 (min det {0})")]
    BadInitialDet(f64),
}

/// Picard / monolithic-Newton mode switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Picard,
    Newton,
}

/// Full solver configuration for one run.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub material: MaterialModel,
    pub rho: f64,
    pub kappa: f64,
    /// Growth exponent; must match the material's.
    pub p: f64,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub mode: Mode,
    /// Tolerance on the step-local `L^p(V^p)` increment of the Picard loop.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub newton: NewtonParams,
    /// Global data scale epsilon (applied to the data by the caller).
    pub scale: f64,
    /// Lifespan threshold fraction: eta = eta_fraction * min det(I + grad u0).
    pub eta_fraction: f64,
    /// Reported-only constant for the parabolic estimate monitor.
    pub c_mon: f64,
}

impl SolverConfig {
    pub fn new(material: MaterialModel) -> Self {
        SolverConfig {
            material,
            rho: 1.0,
            kappa: 1e-2,
            p: material.exponent(),
            delta: 1e-8,
            dt: 1e-3,
            t_end: 0.1,
            mode: Mode::Picard,
            picard_tol: 1e-9,
            picard_max: 100,
            newton: NewtonParams::default(),
            scale: 1.0,
            eta_fraction: 0.5,
            c_mon: 1e3,
        }
    }

    pub fn validate(&self) -> Result<(), ElastoError> {
        self.material
            .validate()
            .map_err(|e| ElastoError::Config(e.to_string()))?;
        if (self.p - self.material.exponent()).abs() > 1e-12 {
            return Err(ElastoError::Config(format!(
                "solver p = {} inconsistent with material p = {}",
                self.p,
                self.material.exponent()
            )));
        }
        if !(self.eta_fraction > 0.0 && self.eta_fraction < 1.0) {
            return Err(ElastoError::Config(format!(
                "eta_fraction must lie in (0,1), got {}",
                self.eta_fraction
            )));
        }
        if !(self.dt > 0.0 && self.t_end > 0.0) {
            return Err(ElastoError::Config("dt and t_end must be positive".into()));
        }
        if !(self.kappa > 0.0 && self.rho > 0.0) {
            return Err(ElastoError::Config("kappa and rho must be positive".into()));
        }
        if self.delta < 0.0 {
            return Err(ElastoError::Config("delta must be nonnegative".into()));
        }
        if !(self.scale > 0.0) {
            return Err(ElastoError::Config("data scale must be positive".into()));
        }
        Ok(())
    }
}

/// Solver state at one time level: `u` is the backward-Euler integral of `w`
/// anchored at `u0`, both fields admissible.
#[derive(Clone, Debug)]
pub struct ElastoState {
    pub t: f64,
    pub u: NodalField,
    pub w: NodalField,
    pub step_index: usize,
}

impl ElastoState {
    pub fn initial(u0: NodalField, u1: NodalField) -> Self {
        ElastoState { t: 0.0, u: u0, w: u1, step_index: 0 }
    }
}

/// Outcome of one accepted step.
#[derive(Debug)]
pub struct StepOutcome {
    pub state: ElastoState,
    /// Inner Newton iterations spent (all Picard applications included).
    pub inner_iters: usize,
    /// `det(I + grad u_new) <= 0` somewhere: lifespan signal, not an error.
    pub det_nonpositive: bool,
    /// Picard stagnated and the step was finished by monolithic Newton.
    pub newton_fallback: bool,
}

/// Total strain energy `int W(E(u))` (exact for the polynomial families).
pub fn total_strain_energy(m: &MaterialModel, u: &NodalField) -> Result<f64, ConstitutiveError> {
    let mesh = u.mesh();
    let grad = gradient(u);
    let mut acc = 0.0;
    for k in 0..mesh.n_triangles() {
        let e = green_st_venant(grad.value(k));
        acc += mesh.area(k) * energy_density(m, &e)?;
    }
    Ok(acc)
}

/// Internal power `int (I + grad u) Sigma(u) : grad udot`.
pub fn internal_power(
    m: &MaterialModel,
    u: &NodalField,
    udot: &NodalField,
) -> Result<f64, ConstitutiveError> {
    let mesh = u.mesh();
    let gu = gradient(u);
    let gv = gradient(udot);
    let mut acc = 0.0;
    for k in 0..mesh.n_triangles() {
        let p = first_pk_tensor(m, gu.value(k))?;
        acc += mesh.area(k) * p.dot(gv.value(k));
    }
    Ok(acc)
}

/// Same power through the strain rate: `int Sigma(u) : (E'(u).udot)`.
/// Equal to [`internal_power`] at quadrature level by stress symmetry.
pub fn internal_power_strain_rate(
    m: &MaterialModel,
    u: &NodalField,
    udot: &NodalField,
) -> Result<f64, ConstitutiveError> {
    let mesh = u.mesh();
    let gu = gradient(u);
    let gv = gradient(udot);
    let mut acc = 0.0;
    for k in 0..mesh.n_triangles() {
        let f = Matrix2::identity() + gu.value(k);
        let e = green_st_venant(gu.value(k));
        let sigma = stress(m, &e)?;
        let erate = {
            let ftv = f.transpose() * gv.value(k);
            (ftv + ftv.transpose()) / 2.0
        };
        acc += mesh.area(k) * sigma.dot(&erate);
    }
    Ok(acc)
}

/// One application of the fixed-point map: freeze the displacement from the
/// guessed velocity, assemble the elastic stress as a tensor right-hand
/// side, and solve the resulting p-Laplace step.
pub fn picard_map(
    cfg: &SolverConfig,
    mesh: &Arc<Mesh2D>,
    state: &ElastoState,
    f: &TimeField,
    g: &TimeBoundary,
    w_guess: &NodalField,
    dt: f64,
) -> Result<NodalField, ElastoError> {
    let mut stepper = ElastoStepper::new(cfg.clone(), mesh, f.clone(), g.clone())?;
    let (w, _) = stepper.apply_map(state, w_guess, dt)?;
    Ok(w)
}

/// Stateful stepper owning the Picard inner solver and the monolithic
/// Newton workspace. Single-threaded; use one instance per run.
pub struct ElastoStepper {
    cfg: SolverConfig,
    mesh: Arc<Mesh2D>,
    dofs: DofMap,
    band: BandMatrix,
    pl: PlaplaceSolver,
    f: TimeField,
    g: TimeBoundary,
}

impl ElastoStepper {
    pub fn new(
        cfg: SolverConfig,
        mesh: &Arc<Mesh2D>,
        f: TimeField,
        g: TimeBoundary,
    ) -> Result<Self, ElastoError> {
        cfg.validate()?;
        let prob = PLaplaceProblem {
            mesh: Arc::clone(mesh),
            rho: cfg.rho,
            kappa: cfg.kappa,
            p: cfg.p,
            delta: cfg.delta,
            f: f.clone(),
            g: g.clone(),
            a: None,
            u1: NodalField::zero_admissible(mesh),
            newton: cfg.newton,
        };
        let pl = PlaplaceSolver::new(prob)?;
        let dofs = DofMap::new(mesh);
        let band = dofs.band_matrix();
        Ok(ElastoStepper { cfg, mesh: Arc::clone(mesh), dofs, band, pl, f, g })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Frozen-displacement map: returns the next velocity iterate and the
    /// inner Newton iteration count.
    fn apply_map(
        &mut self,
        state: &ElastoState,
        w_guess: &NodalField,
        dt: f64,
    ) -> Result<(NodalField, usize), ElastoError> {
        let mut u_frozen = state.u.clone();
        u_frozen.add_scaled(w_guess, dt);
        let gu = gradient(&u_frozen);
        let mut a = QuadTensorField::zeros(&self.mesh);
        for k in 0..self.mesh.n_triangles() {
            let pk = first_pk_tensor(&self.cfg.material, gu.value(k))
                .map_err(|e| PlaplaceError::Eval(e.to_string()))?;
            a.set(k, pk);
        }
        self.pl.set_tensor_rhs(Some(a));
        let (w, iters) = self.pl.step_from(&state.w, w_guess, state.t, dt)?;
        Ok((w, iters))
    }

    fn step_picard(
        &mut self,
        state: &ElastoState,
        dt: f64,
    ) -> Result<(NodalField, usize, bool), ElastoError> {
        let mut w_k = state.w.clone();
        let mut total = 0usize;
        for _ in 0..self.cfg.picard_max {
            let (w_next, iters) = self.apply_map(state, &w_k, dt)?;
            total += iters;
            let inc = dt.powf(1.0 / self.cfg.p) * vp_norm(&w_next.sub(&w_k), self.cfg.p);
            w_k = w_next;
            if inc <= self.cfg.picard_tol {
                return Ok((w_k, total, false));
            }
        }
        log::warn!(
            "picard stagnated after {} applications at t = {}; falling back to newton",
            self.cfg.picard_max,
            state.t
        );
        let (w, iters) = self.step_newton(state, dt)?;
        Ok((w, total + iters, true))
    }

    /// Monolithic Newton on the fully implicit residual.
    fn step_newton(
        &mut self,
        state: &ElastoState,
        dt: f64,
    ) -> Result<(NodalField, usize), ElastoError> {
        let t_new = state.t + dt;
        let f_new = self.f.eval(&self.mesh, t_new);
        let g_new = self.g.eval(&self.mesh, t_new);
        let load = assemble_load(&self.dofs, &f_new, &g_new);
        let gu_old = gradient(&state.u);

        let cfg = &self.cfg;
        let mesh = &self.mesh;
        let dofs = &self.dofs;
        let w_old = &state.w;
        let x0 = dofs.gather(w_old);

        let residual = |x: &[f64]| -> Result<Vec<f64>, PlaplaceError> {
            elasto_residual(cfg, mesh, dofs, &gu_old, x, w_old, &load, dt)
        };
        let jacobian = |x: &[f64], band: &mut BandMatrix| -> Result<(), PlaplaceError> {
            elasto_jacobian(cfg, mesh, dofs, &gu_old, x, dt, &mut |i, j, v| band.add(i, j, v))
        };
        let (x, iters) = damped_newton(&mut self.band, x0, &cfg.newton, residual, jacobian, false)?;
        Ok((dofs.scatter(&x), iters))
    }

    /// Advances one time step of size `dt`. The incoming state must be
    /// orientation-preserving; the determinant signal on the new state is
    /// reported, not raised.
    pub fn step(&mut self, state: &ElastoState, dt: f64) -> Result<StepOutcome, ElastoError> {
        let (md_in, tri) = min_determinant(&state.u);
        if md_in <= 0.0 {
            return Err(ElastoError::Data(format!(
                "incoming state has det(I + grad u) = {md_in} on triangle {tri}"
            )));
        }
        let (w_new, inner_iters, newton_fallback) = match self.cfg.mode {
            Mode::Picard => self.step_picard(state, dt)?,
            Mode::Newton => {
                let (w, i) = self.step_newton(state, dt)?;
                (w, i, false)
            }
        };
        let mut u_new = state.u.clone();
        u_new.add_scaled(&w_new, dt);
        let det_nonpositive = min_determinant(&u_new).0 <= 0.0;
        Ok(StepOutcome {
            state: ElastoState {
                t: state.t + dt,
                u: u_new,
                w: w_new,
                step_index: state.step_index + 1,
            },
            inner_iters,
            det_nonpositive,
            newton_fallback,
        })
    }
}

/// Residual of the fully implicit step at the free velocity vector `x`:
/// mass + viscous flux + elastic stress at `u_old + dt w` minus loads.
#[allow(clippy::too_many_arguments)]
fn elasto_residual(
    cfg: &SolverConfig,
    mesh: &Arc<Mesh2D>,
    dofs: &DofMap,
    gu_old: &QuadTensorField,
    x: &[f64],
    w_old: &NodalField,
    load: &[f64],
    dt: f64,
) -> Result<Vec<f64>, PlaplaceError> {
    let mut r: Vec<f64> = load.iter().map(|l| -l).collect();
    let rho_dt = cfg.rho / dt;
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
        let gu = gu_old.value(k) + dt * gw;
        let pk = first_pk_tensor(&cfg.material, &gu)
            .map_err(|e| PlaplaceError::Eval(e.to_string()))?;
        let flux = plaplace_flux(&gw, cfg.p, cfg.delta);
        for a in 0..3 {
            let mut mass = Vector2::zeros();
            for b in 0..3 {
                mass += local_mass(area, a, b) * (wv[b] - w_old.value(tri[b]));
            }
            let v = rho_dt * mass + cfg.kappa * area * (flux * grads[a]) + area * (pk * grads[a]);
            for c in 0..2 {
                if let Some(d) = dofs.dof(tri[a], c) {
                    r[d] += v[c];
                }
            }
        }
    }
    Ok(r)
}

/// Jacobian of [`elasto_residual`] with respect to the velocity dofs:
/// mass + flux tangent + dt * (geometric + material elastic tangent).
fn elasto_jacobian(
    cfg: &SolverConfig,
    mesh: &Arc<Mesh2D>,
    dofs: &DofMap,
    gu_old: &QuadTensorField,
    x: &[f64],
    dt: f64,
    add: &mut impl FnMut(usize, usize, f64),
) -> Result<(), PlaplaceError> {
    let rho_dt = cfg.rho / dt;
    for k in 0..mesh.n_triangles() {
        let tri = mesh.triangle(k);
        let area = mesh.area(k);
        let grads = mesh.shape_gradients(k);
        let mut gw = Matrix2::zeros();
        for a in 0..3 {
            gw += dofs.value_of(x, tri[a]) * grads[a].transpose();
        }
        let gu = gu_old.value(k) + dt * gw;
        let fdef = Matrix2::identity() + gu;
        let e = green_st_venant(&gu);
        let sigma = stress(&cfg.material, &e).map_err(|er| PlaplaceError::Eval(er.to_string()))?;
        let (s, sp) = flux_tangent_coeffs(&gw, cfg.p, cfg.delta);
        let gb = [gw * grads[0], gw * grads[1], gw * grads[2]];
        let sb = [sigma * grads[0], sigma * grads[1], sigma * grads[2]];

        // Per trial direction (node c, component kk): dF = dt e_k (x) b_c,
        // dE = dt sym(F^T dF-direction), dP = dF Sigma + F dSigma.
        for c in 0..3 {
            for kk in 0..2 {
                let Some(dk) = dofs.dof(tri[c], kk) else { continue };
                let fte = Vector2::new(fdef[(kk, 0)], fdef[(kk, 1)]); // F^T e_k
                let half = 0.5 * (fte * grads[c].transpose());
                let de = half + half.transpose();
                let dsig = stress_tangent(&cfg.material, &e, &de)
                    .map_err(|er| PlaplaceError::Eval(er.to_string()))?;
                let fdsig = fdef * dsig;
                for a in 0..3 {
                    let geo = grads[c].dot(&sb[a]); // b_c . (Sigma b_a)
                    let mat = fdsig * grads[a];
                    for i in 0..2 {
                        let Some(di) = dofs.dof(tri[a], i) else { continue };
                        let mut v = dt * area * mat[i];
                        if i == kk {
                            v += rho_dt * local_mass(area, a, c)
                                + cfg.kappa * area * s * grads[a].dot(&grads[c])
                                + dt * area * geo;
                        }
                        if sp != 0.0 {
                            v += cfg.kappa * area * sp * gb[a][i] * gb[c][kk];
                        }
                        if v != 0.0 {
                            add(di, dk, v);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Grid-time trajectory of a run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub u: Vec<NodalField>,
    pub w: Vec<NodalField>,
}

/// Record plus diagnostic payloads of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    pub traj: Option<Trajectory>,
    pub energy: Vec<EnergyPoint>,
    pub data: DataNorms,
}

#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub store_trajectory: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { store_trajectory: true }
    }
}

fn check_admissible(mesh: &Mesh2D, field: &NodalField, name: &str) -> Result<(), ElastoError> {
    for (i, &masked) in mesh.dirichlet_mask().iter().enumerate() {
        if masked && field.value(i) != Vector2::zeros() {
            return Err(ElastoError::Data(format!(
                "{name} is nonzero at Dirichlet node {i}: violates the boundary constraint"
            )));
        }
    }
    Ok(())
}

fn strain_or_nan(m: &MaterialModel, u: &NodalField) -> f64 {
    total_strain_energy(m, u).unwrap_or(f64::NAN)
}

/// Integrates the regularized system from `(u0, u1)` to `t_end` on the
/// uniform `dt` grid, with per-failure dt halving (up to 6 levels). The run
/// stops early with a `LifespanHit` verdict when `min det < eta`, and with
/// `Aborted` when a step cannot be completed; both produce partial records.
pub fn run(
    cfg: &SolverConfig,
    mesh: &Arc<Mesh2D>,
    u0: &NodalField,
    u1: &NodalField,
    f: &TimeField,
    g: &TimeBoundary,
    opts: &RunOptions,
) -> Result<RunOutput, ElastoError> {
    cfg.validate()?;
    check_admissible(mesh, u0, "u0")?;
    check_admissible(mesh, u1, "u1")?;
    let (md0, _) = min_determinant(u0);
    if md0 <= 0.0 {
        return Err(ElastoError::BadInitialDet(md0));
    }
    let eta = cfg.eta_fraction * md0;

    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    if n_steps == 0 || (n_steps as f64 * cfg.dt - cfg.t_end).abs() > 1e-9 * cfg.t_end.max(1.0) {
        return Err(ElastoError::Config(format!(
            "t_end = {} is not a multiple of dt = {}",
            cfg.t_end, cfg.dt
        )));
    }

    let mut stepper = ElastoStepper::new(cfg.clone(), mesh, f.clone(), g.clone())?;
    let mut state = ElastoState::initial(u0.clone(), u1.clone());

    let row_of = |state: &ElastoState, viscous_cum: f64, iters: usize| -> StepRow {
        let (md, _) = min_determinant(&state.u);
        StepRow {
            t: state.t,
            kinetic: 0.5 * cfg.rho * state.w.l2_norm().powi(2),
            strain: strain_or_nan(&cfg.material, &state.u),
            viscous_cum,
            min_det: md,
            korn_ratio: crate::diagnostics::korn_ratio(&state.u, cfg.p).ok(),
            newton_iters: iters,
        }
    };
    let energy_of = |state: &ElastoState, viscous_cum: f64| -> EnergyPoint {
        EnergyPoint {
            t: state.t,
            udot_l2_sq: state.w.l2_norm().powi(2),
            u_vp_p: vp_norm(&state.u, cfg.p).powf(cfg.p),
            viscous_cum,
        }
    };

    let mut viscous_cum = 0.0;
    let mut rows = vec![row_of(&state, 0.0, 0)];
    let mut energy = vec![energy_of(&state, 0.0)];
    let mut traj = Trajectory {
        times: vec![0.0],
        u: vec![state.u.clone()],
        w: vec![state.w.clone()],
    };
    let mut f_cum = vec![0.0];
    let mut g_cum = vec![0.0];
    let data_head = DataNorms {
        strain0: strain_or_nan(&cfg.material, u0).max(0.0),
        u1_l2_sq: u1.l2_norm().powi(2),
        f_cum: Vec::new(),
        g_cum: Vec::new(),
    };

    let mut verdict = Verdict::Completed;
    let mut prev_md = md0;
    'time: for n in 1..=n_steps {
        match advance_with_halving(&mut stepper, &mut state, cfg.dt, &mut viscous_cum, 0) {
            Ok(iters) => {
                state.t = n as f64 * cfg.dt; // pin to the grid against drift
                state.step_index = n;
                rows.push(row_of(&state, viscous_cum, iters));
                energy.push(energy_of(&state, viscous_cum));
                if opts.store_trajectory {
                    traj.times.push(state.t);
                    traj.u.push(state.u.clone());
                    traj.w.push(state.w.clone());
                }
                let fn_ = f.eval(mesh, state.t);
                let gn = g.eval(mesh, state.t);
                f_cum.push(f_cum.last().unwrap() + cfg.dt * fn_.l2_norm().powi(2));
                g_cum.push(g_cum.last().unwrap() + cfg.dt * gn.l2_norm().powi(2));

                let md = rows.last().unwrap().min_det;
                if md < eta {
                    let t_star = if prev_md > md {
                        state.t - cfg.dt + cfg.dt * (prev_md - eta) / (prev_md - md)
                    } else {
                        state.t
                    };
                    verdict = Verdict::LifespanHit(t_star);
                    break 'time;
                }
                prev_md = md;
            }
            Err(e) => {
                verdict = Verdict::Aborted(e.to_string());
                break 'time;
            }
        }
    }

    let data = DataNorms { f_cum, g_cum, ..data_head };
    let c_k_emp = rows
        .iter()
        .filter_map(|r| r.korn_ratio)
        .fold(0.0, f64::max);
    let min_c0 = energy_estimate_check(&energy, &data, cfg.c_mon).min_c0;
    let record = RunRecord { rows, verdict, c_k_emp, min_c0 };
    Ok(RunOutput {
        record,
        traj: opts.store_trajectory.then_some(traj),
        energy,
        data,
    })
}

fn advance_with_halving(
    stepper: &mut ElastoStepper,
    state: &mut ElastoState,
    dt: f64,
    viscous_cum: &mut f64,
    depth: usize,
) -> Result<usize, ElastoError> {
    match stepper.step(state, dt) {
        Ok(out) => {
            *viscous_cum +=
                stepper.cfg.kappa * dt * vp_norm(&out.state.w, stepper.cfg.p).powf(stepper.cfg.p);
            *state = out.state;
            Ok(out.inner_iters)
        }
        Err(ElastoError::Step(e)) if e.is_retryable() && depth < MAX_HALVINGS => {
            log::warn!("elasto step failed at t = {} (dt = {dt}), halving: {e}", state.t);
            let i1 = advance_with_halving(stepper, state, dt / 2.0, viscous_cum, depth + 1)?;
            let i2 = advance_with_halving(stepper, state, dt / 2.0, viscous_cum, depth + 1)?;
            Ok(i1 + i2)
        }
        Err(e) => Err(e),
    }
}

/// Checks `||u||_{L^p(0,T;V^p)} <= T^{1/p} (||u0||_{V^p} + R)` on a computed
/// trajectory, `R` being the trajectory's own `L^p(0,T;V^p)` velocity norm.
#[derive(Clone, Copy, Debug)]
pub struct BrReport {
    pub lhs: f64,
    pub rhs: f64,
    pub r_used: f64,
    pub holds: bool,
}

pub fn bound_b_r(
    u0: &NodalField,
    traj: &Trajectory,
    p: f64,
    t_horizon: f64,
) -> Result<BrReport, ElastoError> {
    if t_horizon > 1.0 {
        return Err(ElastoError::Config(format!(
            "the displacement bound holds for horizons T <= 1, got {t_horizon}"
        )));
    }
    let mut lhs_pow = 0.0;
    let mut r_pow = 0.0;
    for n in 1..traj.times.len() {
        if traj.times[n] > t_horizon + 1e-12 {
            break;
        }
        let dt = traj.times[n] - traj.times[n - 1];
        lhs_pow += dt * vp_norm(&traj.u[n], p).powf(p);
        r_pow += dt * vp_norm(&traj.w[n], p).powf(p);
    }
    let lhs = lhs_pow.powf(1.0 / p);
    let r_used = r_pow.powf(1.0 / p);
    let rhs = t_horizon.powf(1.0 / p) * (vp_norm(u0, p) + r_used);
    Ok(BrReport { lhs, rhs, r_used, holds: lhs <= rhs + 1e-8 * rhs.max(1.0) })
}

/// Summary of one viscosity level in the continuation sweep.
#[derive(Clone, Debug)]
pub struct KappaRunSummary {
    pub kappa: f64,
    /// `max_n ||u(t_n)||_{V^p}`.
    pub u_linf_vp: f64,
    /// `max_n ||w(t_n)||_{L^2}`.
    pub w_linf_l2: f64,
    /// `kappa int_0^T ||w||^p_{V^p}` over the whole run.
    pub viscous_total: f64,
    /// `||u_{k_prev} - u_k||_{L^2(0,T;L^2)}` against the previous level.
    pub diff_prev: Option<f64>,
    pub output: RunOutput,
}

/// Runs the full horizon for each viscosity in the (strictly decreasing)
/// schedule and records the pairwise solution differences used as the
/// weak-* convergence proxy. Lifespan hits are recorded, not fatal. Runs
/// are independent and execute in parallel.
pub fn kappa_continuation(
    cfg: &SolverConfig,
    mesh: &Arc<Mesh2D>,
    u0: &NodalField,
    u1: &NodalField,
    f: &TimeField,
    g: &TimeBoundary,
    kappas: &[f64],
) -> Result<Vec<KappaRunSummary>, ElastoError> {
    if kappas.is_empty() {
        return Err(ElastoError::Config("empty kappa schedule".into()));
    }
    for w in kappas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(ElastoError::Config("kappa schedule must be strictly decreasing".into()));
        }
    }
    if !(kappas[kappas.len() - 1] > 0.0) {
        return Err(ElastoError::Config("kappa schedule must stay positive".into()));
    }

    let outputs: Vec<Result<RunOutput, ElastoError>> = kappas
        .par_iter()
        .map(|&kappa| {
            let mut c = cfg.clone();
            c.kappa = kappa;
            run(&c, mesh, u0, u1, f, g, &RunOptions { store_trajectory: true })
        })
        .collect();

    let mut summaries = Vec::with_capacity(kappas.len());
    let mut prev_traj: Option<Trajectory> = None;
    for (i, out) in outputs.into_iter().enumerate() {
        let out = out?;
        let traj = out.traj.clone().expect("trajectory stored");
        let u_linf_vp = traj.u.iter().map(|u| vp_norm(u, cfg.p)).fold(0.0, f64::max);
        let w_linf_l2 = traj.w.iter().map(|w| w.l2_norm()).fold(0.0, f64::max);
        let viscous_total = out.energy.last().map(|e| e.viscous_cum).unwrap_or(0.0);
        let diff_prev = prev_traj.as_ref().map(|prev| {
            let n = prev.times.len().min(traj.times.len());
            let mut acc = 0.0;
            for m in 1..n {
                let dt = traj.times[m] - traj.times[m - 1];
                acc += dt * traj.u[m].sub(&prev.u[m]).l2_norm().powi(2);
            }
            acc.sqrt()
        });
        prev_traj = Some(traj);
        summaries.push(KappaRunSummary {
            kappa: kappas[i],
            u_linf_vp,
            w_linf_l2,
            viscous_total,
            diff_prev,
            output: out,
        });
    }
    Ok(summaries)
}
