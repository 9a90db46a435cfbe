//! Experiment drivers behind the CLI: single solves, kappa sweeps,
//! lifespan-vs-epsilon studies, material validation and the manufactured
//! convergence test, together with the CSV emission. Output is data-only;
//! plotting is left to external tools. Given a config and seed, every
//! artifact is byte-identical across reruns.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::Vector2;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{
    ConfigError, ExperimentKind, FieldSpec, ForceSpec, MeshSpec, RunConfig,
};
use crate::constitutive::{
    gradient_consistency_max_error, validate_coercivity, validate_stress_sublinearity,
};
use crate::diagnostics::{energy_estimate_check, korn_study, RunRecord, Verdict};
use crate::elastodyn::{self, ElastoError, RunOptions, RunOutput, SolverConfig};
use crate::fem::{BoundaryField, FemError, NodalField};
use crate::mesh::{Mesh2D, MeshError};
use crate::plaplace::{
    pl_time_loop, NewtonParams, PLaplaceProblem, PlaplaceError, TimeBoundary, TimeField,
};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Solver(#[from] ElastoError),
    #[error(transparent)]
    Plaplace(#[from] PlaplaceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl From<FemError> for AppError {
    fn from(e: FemError) -> Self {
        AppError::Data(e.to_string())
    }
}

/// Exit disposition of an experiment (`LifespanHit` is informational).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Success,
    LifespanHit,
}

pub fn build_mesh(cfg: &RunConfig) -> Result<Arc<Mesh2D>, AppError> {
    let mesh = match &cfg.mesh {
        MeshSpec::Rectangle { nx, ny, lx, ly, dirichlet } => {
            Mesh2D::rectangle(*nx, *ny, *lx, *ly, dirichlet)?
        }
        MeshSpec::File(path) => Mesh2D::load(path)?,
    };
    Ok(Arc::new(mesh))
}

fn load_field_file(mesh: &Arc<Mesh2D>, path: &Path, masked: bool) -> Result<NodalField, AppError> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(mesh.n_nodes());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (x, y) = (parts.next(), parts.next());
        match (x, y, parts.next()) {
            (Some(x), Some(y), None) => {
                let vx: f64 = x.parse().map_err(|_| {
                    AppError::Data(format!("{}: bad value at line {}", path.display(), i + 1))
                })?;
                let vy: f64 = y.parse().map_err(|_| {
                    AppError::Data(format!("{}: bad value at line {}", path.display(), i + 1))
                })?;
                values.push(Vector2::new(vx, vy));
            }
            _ => {
                return Err(AppError::Data(format!(
                    "{}: expected `vx vy` at line {}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    let mask = if masked {
        mesh.dirichlet_mask().to_vec()
    } else {
        vec![false; mesh.n_nodes()]
    };
    Ok(NodalField::from_values(mesh, values, mask)?)
}

fn build_field(
    mesh: &Arc<Mesh2D>,
    spec: &FieldSpec,
    scale: f64,
    name: &str,
) -> Result<NodalField, AppError> {
    match spec {
        FieldSpec::Zero => Ok(NodalField::zero_admissible(mesh)),
        FieldSpec::Affine(a) => {
            let m = *a * scale;
            NodalField::from_fn_admissible(mesh, |p| m * Vector2::new(p[0], p[1])).map_err(|e| {
                AppError::Data(format!("{name}: affine field violates the Dirichlet mask ({e})"))
            })
        }
        FieldSpec::File(path) => {
            let f = load_field_file(mesh, path, true)?;
            Ok(f.scaled(scale))
        }
    }
}

fn build_force(mesh: &Arc<Mesh2D>, spec: &ForceSpec, scale: f64) -> TimeField {
    match spec {
        ForceSpec::Zero => TimeField::Zero,
        ForceSpec::Constant(v) => {
            let v = *v * scale;
            TimeField::Constant(NodalField::from_fn(mesh, move |_| v))
        }
        ForceSpec::Ramp { v, t_full } => {
            let v = *v * scale;
            TimeField::Ramp {
                base: NodalField::from_fn(mesh, move |_| v),
                t_full: *t_full,
            }
        }
    }
}

fn build_traction(mesh: &Arc<Mesh2D>, spec: &ForceSpec, scale: f64) -> TimeBoundary {
    match spec {
        ForceSpec::Zero => TimeBoundary::Zero,
        ForceSpec::Constant(v) => TimeBoundary::Constant(BoundaryField::constant(mesh, *v * scale)),
        ForceSpec::Ramp { v, t_full } => TimeBoundary::Ramp {
            base: BoundaryField::constant(mesh, *v * scale),
            t_full: *t_full,
        },
    }
}

/// Epsilon-scaled problem data `(u0, u1, f, g)` from the config.
pub fn build_data(
    cfg: &RunConfig,
    mesh: &Arc<Mesh2D>,
    scale: f64,
) -> Result<(NodalField, NodalField, TimeField, TimeBoundary), AppError> {
    let u0 = build_field(mesh, &cfg.data.u0, scale, "data.u0")?;
    let u1 = build_field(mesh, &cfg.data.u1, scale, "data.u1")?;
    let f = build_force(mesh, &cfg.data.f, scale);
    let g = build_traction(mesh, &cfg.data.g, scale);
    Ok((u0, u1, f, g))
}

pub fn solver_config(cfg: &RunConfig) -> Result<SolverConfig, AppError> {
    let p = cfg.exponent()?;
    let s = &cfg.solver;
    Ok(SolverConfig {
        material: cfg.material,
        rho: s.rho,
        kappa: s.kappa,
        p,
        delta: s.delta,
        dt: s.dt,
        t_end: s.t_end,
        mode: s.mode,
        picard_tol: s.picard_tol,
        picard_max: s.picard_max,
        newton: NewtonParams {
            tol: s.newton_tol,
            max_iter: s.newton_max,
            max_line_search: 30,
        },
        scale: cfg.data.scale,
        eta_fraction: s.eta_fraction,
        c_mon: s.c_mon,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.12e}"),
        None => "nan".into(),
    }
}

/// Serializes a run record in the stable `run-csv v1` schema.
pub fn run_csv_string(record: &RunRecord) -> String {
    let mut out = String::new();
    out.push_str("# run-csv v1\n");
    out.push_str("t,kinetic,strain,viscous_cum,min_det,korn_ratio,newton_iters\n");
    for r in &record.rows {
        let _ = writeln!(
            out,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
            r.t,
            r.kinetic,
            r.strain,
            r.viscous_cum,
            r.min_det,
            fmt_opt(r.korn_ratio),
            r.newton_iters
        );
    }
    out
}

fn verdict_line(v: &Verdict) -> String {
    match v {
        Verdict::Completed => "verdict: COMPLETED".into(),
        Verdict::LifespanHit(t) => format!("verdict: LIFESPAN_HIT at t = {t:.12e}"),
        Verdict::Aborted(msg) => format!("verdict: ABORTED ({msg})"),
    }
}

fn run_summary(out: &RunOutput, cfg: &SolverConfig) -> String {
    let mut s = String::new();
    s.push_str(&verdict_line(&out.record.verdict));
    s.push('\n');
    let _ = writeln!(s, "rows: {}", out.record.rows.len());
    let _ = writeln!(s, "final_t: {:.12e}", out.record.final_time());
    let _ = writeln!(s, "empirical_C_K: {:.12e}", out.record.c_k_emp);
    let _ = writeln!(s, "empirical_min_C0: {}", fmt_opt(out.record.min_c0));
    let check = energy_estimate_check(&out.energy, &out.data, cfg.c_mon);
    let _ = writeln!(s, "energy_estimate_pass_at_C0_config({}): {}", cfg.c_mon, check.pass);
    if let Some(last) = out.record.rows.last() {
        let _ = writeln!(s, "final_kinetic: {:.12e}", last.kinetic);
        let _ = writeln!(s, "final_strain: {:.12e}", last.strain);
        let _ = writeln!(s, "final_viscous_cum: {:.12e}", last.viscous_cum);
        let _ = writeln!(s, "final_min_det: {:.12e}", last.min_det);
    }
    s
}

/// `solve`: one run; writes `run.csv` and `summary.txt`.
pub fn run_solve(cfg: &RunConfig, out_dir: &Path) -> Result<ExitKind, AppError> {
    let mesh = build_mesh(cfg)?;
    let scfg = solver_config(cfg)?;
    let (u0, u1, f, g) = build_data(cfg, &mesh, cfg.data.scale)?;
    let out = elastodyn::run(&scfg, &mesh, &u0, &u1, &f, &g, &RunOptions { store_trajectory: false })?;
    std::fs::write(out_dir.join("run.csv"), run_csv_string(&out.record))?;
    std::fs::write(out_dir.join("summary.txt"), run_summary(&out, &scfg))?;
    match out.record.verdict {
        Verdict::Completed => Ok(ExitKind::Success),
        Verdict::LifespanHit(_) => Ok(ExitKind::LifespanHit),
        Verdict::Aborted(msg) => Err(AppError::Other(format!("run aborted: {msg}"))),
    }
}

/// `sweep-kappa`: reruns the horizon over the kappa schedule; writes
/// `kappa.csv` and `summary.txt`.
pub fn run_kappa_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<ExitKind, AppError> {
    let mesh = build_mesh(cfg)?;
    let scfg = solver_config(cfg)?;
    let (u0, u1, f, g) = build_data(cfg, &mesh, cfg.data.scale)?;
    let sums =
        elastodyn::kappa_continuation(&scfg, &mesh, &u0, &u1, &f, &g, &cfg.experiment.kappas)?;

    let mut csv = String::from("# kappa-csv v1\n");
    csv.push_str("kappa,u_linf_vp,w_linf_l2,viscous_total,diff_prev,min_c0,verdict\n");
    let mut summary = String::new();
    for s in &sums {
        let verdict = match &s.output.record.verdict {
            Verdict::Completed => "COMPLETED",
            Verdict::LifespanHit(_) => "LIFESPAN_HIT",
            Verdict::Aborted(_) => "ABORTED",
        };
        let _ = writeln!(
            csv,
            "{:.12e},{:.12e},{:.12e},{:.12e},{},{},{}",
            s.kappa,
            s.u_linf_vp,
            s.w_linf_l2,
            s.viscous_total,
            fmt_opt(s.diff_prev),
            fmt_opt(s.output.record.min_c0),
            verdict
        );
    }
    let c0s: Vec<f64> = sums.iter().filter_map(|s| s.output.record.min_c0).collect();
    if let (Some(&min), Some(&max)) = (
        c0s.iter().min_by(|a, b| a.total_cmp(b)),
        c0s.iter().max_by(|a, b| a.total_cmp(b)),
    ) {
        let variation = if min > 0.0 { (max - min) / min } else { 0.0 };
        let _ = writeln!(summary, "min_C0 range: [{min:.6e}, {max:.6e}], variation {variation:.3}");
    }
    let diffs: Vec<String> = sums
        .iter()
        .filter_map(|s| s.diff_prev)
        .map(|d| format!("{d:.6e}"))
        .collect();
    let _ = writeln!(summary, "successive solution differences (L2L2): [{}]", diffs.join(", "));
    std::fs::write(out_dir.join("kappa.csv"), csv)?;
    std::fs::write(out_dir.join("summary.txt"), summary)?;
    Ok(ExitKind::Success)
}

/// Least-squares fit of the lifespan law `T_max = a log(1/eps) + b` over the
/// uncensored pairs.
#[derive(Clone, Copy, Debug)]
pub struct LifespanFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub used: usize,
    pub censored: usize,
}

#[derive(Debug, Error)]
#[error("lifespan fit refused: only {uncensored} uncensored pairs (censored: {censored}); need at least 3")]
pub struct FitRefused {
    pub uncensored: usize,
    pub censored: usize,
}

pub fn fit_lifespan_law(pairs: &[(f64, f64)], t_end: f64) -> Result<LifespanFit, FitRefused> {
    let uncensored: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(_, t)| *t < t_end)
        .map(|&(e, t)| ((1.0 / e).ln(), t))
        .collect();
    let censored = pairs.len() - uncensored.len();
    if uncensored.len() < 3 {
        return Err(FitRefused { uncensored: uncensored.len(), censored });
    }
    let n = uncensored.len() as f64;
    let sx: f64 = uncensored.iter().map(|p| p.0).sum();
    let sy: f64 = uncensored.iter().map(|p| p.1).sum();
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = uncensored.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = uncensored.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = uncensored.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = uncensored
        .iter()
        .map(|p| {
            let pred = slope * p.0 + intercept;
            (p.1 - pred) * (p.1 - pred)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LifespanFit { slope, intercept, r2, used: uncensored.len(), censored })
}

/// One lifespan run at data scale `eps`; `t_max` is the interpolated
/// crossing time or `t_end` when censored.
pub fn lifespan_point(
    cfg: &RunConfig,
    mesh: &Arc<Mesh2D>,
    scfg: &SolverConfig,
    eps: f64,
) -> Result<(f64, bool, RunOutput), AppError> {
    let (u0, u1, f, g) = build_data(cfg, mesh, eps)?;
    let mut c = scfg.clone();
    c.scale = eps;
    let out = crate::diagnostics::lifespan_run(&c, mesh, &u0, &u1, &f, &g)
        .map_err(|e| AppError::Other(format!("lifespan run at eps = {eps}: {e}")))?;
    Ok((out.t_max, out.censored, out.output))
}

/// `sweep-lifespan`: runs the epsilon schedule, writes `lifespan.csv` and
/// the fitted law into `summary.txt`.
pub fn run_lifespan_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<ExitKind, AppError> {
    let mesh = build_mesh(cfg)?;
    let scfg = solver_config(cfg)?;
    let results: Vec<Result<(f64, bool, RunOutput), AppError>> = cfg
        .experiment
        .epsilons
        .par_iter()
        .map(|&eps| lifespan_point(cfg, &mesh, &scfg, eps))
        .collect();

    let mut csv = String::from("# lifespan-csv v1\n");
    csv.push_str("epsilon,t_max,censored\n");
    let mut pairs = Vec::new();
    for (eps, res) in cfg.experiment.epsilons.iter().zip(results) {
        let (t_max, censored, _) = res?;
        let _ = writeln!(csv, "{:.12e},{:.12e},{}", eps, t_max, censored as u8);
        pairs.push((*eps, t_max));
    }
    let mut summary = String::new();
    match fit_lifespan_law(&pairs, scfg.t_end) {
        Ok(fit) => {
            let _ = writeln!(
                summary,
                "lifespan fit: T_max = {:.6e} * log(1/eps) + {:.6e}, R2 = {:.4}, used = {}, censored = {}",
                fit.slope, fit.intercept, fit.r2, fit.used, fit.censored
            );
        }
        Err(refused) => {
            let _ = writeln!(summary, "lifespan fit refused: {refused}");
        }
    }
    std::fs::write(out_dir.join("lifespan.csv"), csv)?;
    std::fs::write(out_dir.join("summary.txt"), summary)?;
    Ok(ExitKind::Success)
}

/// `validate-material`: assumption sampling and the stress/energy
/// consistency check; writes `validate.txt`.
pub fn run_validate(cfg: &RunConfig, out_dir: &Path) -> Result<ExitKind, AppError> {
    let mesh = build_mesh(cfg)?;
    let m = cfg.material;
    let samples = cfg.experiment.samples;
    let seed = cfg.experiment.seed;
    let mut s = String::new();
    let _ = writeln!(s, "material: {}", m.name());
    let _ = writeln!(s, "exponent p: {}", m.exponent());
    let _ = writeln!(s, "alpha: {}", m.alpha());

    let coer = validate_coercivity(&m, &mesh, samples, 0.3, seed)
        .map_err(|e| AppError::Data(e.to_string()))?;
    let _ = writeln!(
        s,
        "energy coercivity: empirical C = {:.6e} (witness sample {}, {} used)",
        coer.empirical_c, coer.witness, coer.samples_used
    );

    let subl = validate_stress_sublinearity(&m, &mesh, samples, 0.3, seed.wrapping_add(1))
        .map_err(|e| AppError::Data(e.to_string()))?;
    let _ = writeln!(
        s,
        "stress sublinearity: empirical C_check = {:.6e} (witness sample {}, {} used)",
        subl.empirical_c_check, subl.witness, subl.samples_used
    );

    let fd = gradient_consistency_max_error(&m, samples.min(500), 0.3, 1e-5, seed.wrapping_add(2))
        .map_err(|e| AppError::Data(e.to_string()))?;
    let _ = writeln!(s, "stress gradient consistency: max relative FD error = {fd:.6e}");

    let p = m.exponent();
    if p > 2.0 {
        let study = korn_study(&mesh, p, samples.min(500), 0.01, seed.wrapping_add(3))
            .map_err(|e| AppError::Data(e.to_string()))?;
        let _ = writeln!(
            s,
            "korn sampling: empirical C_K = {:.6e} over {} samples ({} rejected)",
            study.c_k_emp,
            study.ratios.len(),
            study.rejected
        );
    }

    let trace_c =
        crate::fem::empirical_trace_constant(&mesh, p, samples.min(100), seed.wrapping_add(4));
    let _ = writeln!(s, "trace inequality: empirical C_pN = {trace_c:.6e}");
    std::fs::write(out_dir.join("validate.txt"), s)?;
    Ok(ExitKind::Success)
}

/// Manufactured decaying solution of the p = 2 parabolic step on the
/// all-Dirichlet unit square; returns `(h, L2 error at t_end)` per level.
pub fn mms_convergence(levels: &[usize], dt: f64, t_end: f64) -> Result<Vec<(f64, f64)>, AppError> {
    use std::f64::consts::PI;
    let exact = |t: f64, p: [f64; 2]| -> Vector2<f64> {
        let s = (PI * p[0]).sin() * (PI * p[1]).sin() * (-t).exp();
        Vector2::new(s, s)
    };
    let mut out = Vec::with_capacity(levels.len());
    for &n in levels {
        let mesh = Arc::new(Mesh2D::rectangle(n, n, 1.0, 1.0, &crate::mesh::Side::ALL)?);
        let mesh_f = Arc::clone(&mesh);
        // rho w_t - lap w = f with w = e^{-t} sin(pi x) sin(pi y) (1,1)^T
        // gives f = (2 pi^2 - 1) w.
        let f = TimeField::Func(Arc::new(move |t: f64| {
            NodalField::from_fn(&mesh_f, |p| (2.0 * PI * PI - 1.0) * exact(t, p))
        }));
        let prob = PLaplaceProblem {
            mesh: Arc::clone(&mesh),
            rho: 1.0,
            kappa: 1.0,
            p: 2.0,
            delta: 0.0,
            f,
            g: TimeBoundary::Zero,
            a: None,
            u1: NodalField::from_fn_projected(&mesh, |p| exact(0.0, p)),
            newton: NewtonParams::default(),
        };
        let traj = pl_time_loop(&prob, t_end, dt)?;
        let w_end = traj.w.last().expect("nonempty trajectory");
        let exact_end = NodalField::from_fn(&mesh, |p| exact(t_end, p));
        let err = w_end.sub(&exact_end).l2_norm();
        out.push(((1.0 / n as f64), err));
    }
    Ok(out)
}

/// `convergence`: manufactured-solution study; writes `convergence.csv`.
pub fn run_convergence(cfg: &RunConfig, out_dir: &Path) -> Result<ExitKind, AppError> {
    let dt = cfg.solver.dt;
    let t_end = cfg.solver.t_end;
    let pts = mms_convergence(&cfg.experiment.levels, dt, t_end)?;
    let mut csv = String::from("# convergence-csv v1\n");
    csv.push_str("h,l2_error,order\n");
    for (i, (h, err)) in pts.iter().enumerate() {
        let order = if i > 0 {
            let (hp, ep) = pts[i - 1];
            format!("{:.6}", (ep / err).log2() / (hp / h).log2())
        } else {
            "nan".into()
        };
        let _ = writeln!(csv, "{h:.12e},{err:.12e},{order}");
    }
    std::fs::write(out_dir.join("convergence.csv"), csv)?;
    Ok(ExitKind::Success)
}

/// Dispatches on the experiment kind from the config.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path) -> Result<ExitKind, AppError> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    match cfg.experiment.kind {
        ExperimentKind::Solve => run_solve(cfg, out_dir),
        ExperimentKind::KappaSweep => run_kappa_sweep(cfg, out_dir),
        ExperimentKind::LifespanSweep => run_lifespan_sweep(cfg, out_dir),
        ExperimentKind::Validate => run_validate(cfg, out_dir),
        ExperimentKind::Convergence => run_convergence(cfg, out_dir),
    }
}

/// Mode helper for the CLI: forces `experiment.kind` to the subcommand.
pub fn with_kind(mut cfg: RunConfig, kind: ExperimentKind) -> RunConfig {
    cfg.experiment.kind = kind;
    cfg
}
