//! Run configuration: a flat `section.key = value` text format, diff-friendly
//! and trivially parseable. Parsing reports the offending key path; the
//! serializer emits a normalized form whose reparse is the identity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::constitutive::MaterialModel;
use crate::elastodyn::Mode;
use crate::mesh::Side;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config error at `{key}`: {msg}")]
    Key { key: String, msg: String },
    #[error("config parse error at line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn key_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Key { key: key.to_string(), msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeshSpec {
    Rectangle { nx: usize, ny: usize, lx: f64, ly: f64, dirichlet: Vec<Side> },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    Zero,
    /// Nodal values `A x` of the given 2x2 matrix.
    Affine(Matrix2<f64>),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ForceSpec {
    Zero,
    Constant(Vector2<f64>),
    /// `v * min(t / t_full, 1)`.
    Ramp { v: Vector2<f64>, t_full: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverSpec {
    pub rho: f64,
    pub kappa: f64,
    /// Optional; defaults to the material exponent and must match it.
    pub p: Option<f64>,
    pub delta: f64,
    pub dt: f64,
    pub t_end: f64,
    pub mode: Mode,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub c_mon: f64,
    pub eta_fraction: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            rho: 1.0,
            kappa: 1e-2,
            p: None,
            delta: 1e-8,
            dt: 1e-3,
            t_end: 0.1,
            mode: Mode::Picard,
            picard_tol: 1e-9,
            picard_max: 100,
            newton_tol: 1e-10,
            newton_max: 50,
            c_mon: 1e3,
            eta_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub u0: FieldSpec,
    pub u1: FieldSpec,
    pub f: ForceSpec,
    pub g: ForceSpec,
    /// Global data scale epsilon.
    pub scale: f64,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            u0: FieldSpec::Zero,
            u1: FieldSpec::Zero,
            f: ForceSpec::Zero,
            g: ForceSpec::Zero,
            scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Solve,
    KappaSweep,
    LifespanSweep,
    Validate,
    Convergence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::KappaSweep => "kappa-sweep",
            ExperimentKind::LifespanSweep => "lifespan-sweep",
            ExperimentKind::Validate => "validate",
            ExperimentKind::Convergence => "convergence",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub kappas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub samples: usize,
    /// Mesh refinement levels for the convergence study.
    pub levels: Vec<usize>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::Solve,
            kappas: Vec::new(),
            epsilons: Vec::new(),
            samples: 200,
            levels: Vec::new(),
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub material: MaterialModel,
    pub solver: SolverSpec,
    pub data: DataSpec,
    pub experiment: ExperimentSpec,
}

impl RunConfig {
    /// Resolved exponent: `solver.p` if present, else the material's.
    pub fn exponent(&self) -> Result<f64, ConfigError> {
        let mp = self.material.exponent();
        match self.solver.p {
            None => Ok(mp),
            Some(p) if (p - mp).abs() <= 1e-12 => Ok(p),
            Some(p) => Err(key_err(
                "solver.p",
                format!("p = {p} inconsistent with the material exponent {mp}"),
            )),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.material
            .validate()
            .map_err(|e| key_err("material", e.to_string()))?;
        self.exponent()?;
        if !(self.data.scale > 0.0) {
            return Err(key_err("data.scale", "must be positive"));
        }
        match self.experiment.kind {
            ExperimentKind::KappaSweep if self.experiment.kappas.is_empty() => {
                return Err(key_err("experiment.kappas", "schedule required for kappa-sweep"));
            }
            ExperimentKind::LifespanSweep if self.experiment.epsilons.is_empty() => {
                return Err(key_err("experiment.epsilons", "schedule required for lifespan-sweep"));
            }
            ExperimentKind::Convergence if self.experiment.levels.is_empty() => {
                return Err(key_err("experiment.levels", "levels required for convergence"));
            }
            _ => {}
        }
        if let MeshSpec::Rectangle { nx, ny, lx, ly, dirichlet } = &self.mesh {
            if *nx == 0 || *ny == 0 {
                return Err(key_err("mesh.nx", "cell counts must be at least 1"));
            }
            if !(*lx > 0.0 && *ly > 0.0) {
                return Err(key_err("mesh.lx", "side lengths must be positive"));
            }
            if dirichlet.is_empty() {
                return Err(key_err("mesh.dirichlet", "at least one Dirichlet side is required"));
            }
        }
        Ok(())
    }

    /// Parses the flat `section.key = value` format.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("expected `section.key = value`, got `{stripped}`"),
                });
            };
            let key = key.trim().to_string();
            if !key.contains('.') {
                return Err(ConfigError::Line {
                    line,
                    msg: format!("key `{key}` is missing its section prefix"),
                });
            }
            if map.insert(key.clone(), (line, value.trim().to_string())).is_some() {
                return Err(ConfigError::Line { line, msg: format!("duplicate key `{key}`") });
            }
        }
        Self::from_map(map)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn from_map(mut map: BTreeMap<String, (usize, String)>) -> Result<RunConfig, ConfigError> {
        let mut take = |key: &str| map.remove(key).map(|(_, v)| v);

        let f64_of = |key: &str, v: String| -> Result<f64, ConfigError> {
            v.parse::<f64>().map_err(|_| key_err(key, format!("bad number `{v}`")))
        };
        let usize_of = |key: &str, v: String| -> Result<usize, ConfigError> {
            v.parse::<usize>().map_err(|_| key_err(key, format!("bad count `{v}`")))
        };
        let vec2_of = |key: &str, v: &str| -> Result<Vector2<f64>, ConfigError> {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 2 {
                return Err(key_err(key, format!("expected `x,y`, got `{v}`")));
            }
            Ok(Vector2::new(
                parts[0].parse().map_err(|_| key_err(key, format!("bad number `{}`", parts[0])))?,
                parts[1].parse().map_err(|_| key_err(key, format!("bad number `{}`", parts[1])))?,
            ))
        };
        let f64_list = |key: &str, v: String| -> Result<Vec<f64>, ConfigError> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| key_err(key, format!("bad number `{s}`"))))
                .collect()
        };

        // Mesh.
        let mesh = match take("mesh.kind").as_deref() {
            None | Some("rectangle") => {
                let nx = take("mesh.nx").map(|v| usize_of("mesh.nx", v)).transpose()?.unwrap_or(16);
                let ny = take("mesh.ny").map(|v| usize_of("mesh.ny", v)).transpose()?.unwrap_or(16);
                let lx = take("mesh.lx").map(|v| f64_of("mesh.lx", v)).transpose()?.unwrap_or(1.0);
                let ly = take("mesh.ly").map(|v| f64_of("mesh.ly", v)).transpose()?.unwrap_or(1.0);
                let dirichlet = match take("mesh.dirichlet") {
                    None => vec![Side::Left],
                    Some(v) => {
                        let mut sides = Vec::new();
                        for tok in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                            let side = Side::parse(tok).ok_or_else(|| {
                                key_err("mesh.dirichlet", format!("unknown side `{tok}`"))
                            })?;
                            if !sides.contains(&side) {
                                sides.push(side);
                            }
                        }
                        sides
                    }
                };
                MeshSpec::Rectangle { nx, ny, lx, ly, dirichlet }
            }
            Some("file") => {
                let path = take("mesh.path")
                    .ok_or_else(|| key_err("mesh.path", "required for mesh.kind = file"))?;
                MeshSpec::File(PathBuf::from(path))
            }
            Some(other) => return Err(key_err("mesh.kind", format!("unknown kind `{other}`"))),
        };

        // Material.
        let material = match take("material.kind").as_deref() {
            None | Some("svk") => MaterialModel::Svk {
                mu: take("material.mu").map(|v| f64_of("material.mu", v)).transpose()?.unwrap_or(1.0),
                lambda: take("material.lambda")
                    .map(|v| f64_of("material.lambda", v))
                    .transpose()?
                    .unwrap_or(1.0),
            },
            Some("fung") => MaterialModel::FungPoly {
                w0: take("material.w0").map(|v| f64_of("material.w0", v)).transpose()?.unwrap_or(0.0),
                beta: take("material.beta")
                    .map(|v| f64_of("material.beta", v))
                    .transpose()?
                    .unwrap_or(1.0),
                gamma: take("material.gamma")
                    .map(|v| f64_of("material.gamma", v))
                    .transpose()?
                    .unwrap_or(1.0),
                n: take("material.n")
                    .map(|v| usize_of("material.n", v))
                    .transpose()?
                    .unwrap_or(2) as u32,
            },
            Some("ogden") => MaterialModel::Ogden {
                gamma: take("material.gamma")
                    .map(|v| f64_of("material.gamma", v))
                    .transpose()?
                    .unwrap_or(2.0),
            },
            Some(other) => {
                return Err(key_err("material.kind", format!("unknown material `{other}`")))
            }
        };

        // Solver.
        let d = SolverSpec::default();
        let solver = SolverSpec {
            rho: take("solver.rho").map(|v| f64_of("solver.rho", v)).transpose()?.unwrap_or(d.rho),
            kappa: take("solver.kappa")
                .map(|v| f64_of("solver.kappa", v))
                .transpose()?
                .unwrap_or(d.kappa),
            p: take("solver.p").map(|v| f64_of("solver.p", v)).transpose()?,
            delta: take("solver.delta")
                .map(|v| f64_of("solver.delta", v))
                .transpose()?
                .unwrap_or(d.delta),
            dt: take("solver.dt").map(|v| f64_of("solver.dt", v)).transpose()?.unwrap_or(d.dt),
            t_end: take("solver.t_end")
                .map(|v| f64_of("solver.t_end", v))
                .transpose()?
                .unwrap_or(d.t_end),
            mode: match take("solver.mode").as_deref() {
                None | Some("picard") => Mode::Picard,
                Some("newton") => Mode::Newton,
                Some(other) => {
                    return Err(key_err("solver.mode", format!("unknown mode `{other}`")))
                }
            },
            picard_tol: take("solver.picard_tol")
                .map(|v| f64_of("solver.picard_tol", v))
                .transpose()?
                .unwrap_or(d.picard_tol),
            picard_max: take("solver.picard_max")
                .map(|v| usize_of("solver.picard_max", v))
                .transpose()?
                .unwrap_or(d.picard_max),
            newton_tol: take("solver.newton_tol")
                .map(|v| f64_of("solver.newton_tol", v))
                .transpose()?
                .unwrap_or(d.newton_tol),
            newton_max: take("solver.newton_max")
                .map(|v| usize_of("solver.newton_max", v))
                .transpose()?
                .unwrap_or(d.newton_max),
            c_mon: take("solver.c_mon")
                .map(|v| f64_of("solver.c_mon", v))
                .transpose()?
                .unwrap_or(d.c_mon),
            eta_fraction: take("solver.eta_fraction")
                .map(|v| f64_of("solver.eta_fraction", v))
                .transpose()?
                .unwrap_or(d.eta_fraction),
        };

        // Data.
        let field_of = |key: &str, v: Option<String>| -> Result<FieldSpec, ConfigError> {
            let Some(v) = v else { return Ok(FieldSpec::Zero) };
            if v == "zero" {
                return Ok(FieldSpec::Zero);
            }
            if let Some(rest) = v.strip_prefix("affine:") {
                let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                if parts.len() != 4 {
                    return Err(key_err(key, format!("expected `affine:a11,a12,a21,a22`, got `{v}`")));
                }
                let mut vals = [0.0; 4];
                for (slot, part) in vals.iter_mut().zip(&parts) {
                    *slot = part
                        .parse()
                        .map_err(|_| key_err(key, format!("bad number `{part}`")))?;
                }
                return Ok(FieldSpec::Affine(Matrix2::new(vals[0], vals[1], vals[2], vals[3])));
            }
            if let Some(rest) = v.strip_prefix("file:") {
                return Ok(FieldSpec::File(PathBuf::from(rest.trim())));
            }
            Err(key_err(key, format!("expected `zero`, `affine:...` or `file:...`, got `{v}`")))
        };
        let force_of = |key: &str, v: Option<String>| -> Result<ForceSpec, ConfigError> {
            let Some(v) = v else { return Ok(ForceSpec::Zero) };
            if v == "zero" {
                return Ok(ForceSpec::Zero);
            }
            if let Some(rest) = v.strip_prefix("constant:") {
                return Ok(ForceSpec::Constant(vec2_of(key, rest)?));
            }
            if let Some(rest) = v.strip_prefix("ramp:") {
                let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(key_err(key, format!("expected `ramp:fx,fy,t_full`, got `{v}`")));
                }
                let vx: f64 = parts[0]
                    .parse()
                    .map_err(|_| key_err(key, format!("bad number `{}`", parts[0])))?;
                let vy: f64 = parts[1]
                    .parse()
                    .map_err(|_| key_err(key, format!("bad number `{}`", parts[1])))?;
                let t_full: f64 = parts[2]
                    .parse()
                    .map_err(|_| key_err(key, format!("bad number `{}`", parts[2])))?;
                if !(t_full > 0.0) {
                    return Err(key_err(key, "ramp time must be positive"));
                }
                return Ok(ForceSpec::Ramp { v: Vector2::new(vx, vy), t_full });
            }
            Err(key_err(key, format!("expected `zero`, `constant:...` or `ramp:...`, got `{v}`")))
        };
        let data = DataSpec {
            u0: field_of("data.u0", take("data.u0"))?,
            u1: field_of("data.u1", take("data.u1"))?,
            f: force_of("data.f", take("data.f"))?,
            g: force_of("data.g", take("data.g"))?,
            scale: take("data.scale")
                .map(|v| f64_of("data.scale", v))
                .transpose()?
                .unwrap_or(1.0),
        };

        // Experiment.
        let de = ExperimentSpec::default();
        let experiment = ExperimentSpec {
            kind: match take("experiment.kind").as_deref() {
                None | Some("solve") => ExperimentKind::Solve,
                Some("kappa-sweep") => ExperimentKind::KappaSweep,
                Some("lifespan-sweep") => ExperimentKind::LifespanSweep,
                Some("validate") => ExperimentKind::Validate,
                Some("convergence") => ExperimentKind::Convergence,
                Some(other) => {
                    return Err(key_err("experiment.kind", format!("unknown kind `{other}`")))
                }
            },
            kappas: take("experiment.kappas")
                .map(|v| f64_list("experiment.kappas", v))
                .transpose()?
                .unwrap_or(de.kappas),
            epsilons: take("experiment.epsilons")
                .map(|v| f64_list("experiment.epsilons", v))
                .transpose()?
                .unwrap_or(de.epsilons),
            samples: take("experiment.samples")
                .map(|v| usize_of("experiment.samples", v))
                .transpose()?
                .unwrap_or(de.samples),
            levels: take("experiment.levels")
                .map(|v| -> Result<Vec<usize>, ConfigError> {
                    v.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<usize>()
                                .map_err(|_| key_err("experiment.levels", format!("bad count `{s}`")))
                        })
                        .collect()
                })
                .transpose()?
                .unwrap_or(de.levels),
            seed: take("experiment.seed")
                .map(|v| {
                    v.parse::<u64>()
                        .map_err(|_| key_err("experiment.seed", format!("bad seed `{v}`")))
                })
                .transpose()?
                .unwrap_or(de.seed),
        };

        if let Some((key, (line, _))) = map.into_iter().next() {
            return Err(ConfigError::Line { line, msg: format!("unknown key `{key}`") });
        }

        let cfg = RunConfig { mesh, material, solver, data, experiment };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Normalized serialization; `parse(to_normalized())` is the identity.
    pub fn to_normalized_string(&self) -> String {
        let mut out = String::new();
        match &self.mesh {
            MeshSpec::Rectangle { nx, ny, lx, ly, dirichlet } => {
                out.push_str("mesh.kind = rectangle\n");
                let _ = writeln!(out, "mesh.nx = {nx}");
                let _ = writeln!(out, "mesh.ny = {ny}");
                let _ = writeln!(out, "mesh.lx = {lx:?}");
                let _ = writeln!(out, "mesh.ly = {ly:?}");
                let sides: Vec<&str> = dirichlet.iter().map(|s| s.name()).collect();
                let _ = writeln!(out, "mesh.dirichlet = {}", sides.join(","));
            }
            MeshSpec::File(path) => {
                out.push_str("mesh.kind = file\n");
                let _ = writeln!(out, "mesh.path = {}", path.display());
            }
        }
        match &self.material {
            MaterialModel::Svk { mu, lambda } => {
                out.push_str("material.kind = svk\n");
                let _ = writeln!(out, "material.mu = {mu:?}");
                let _ = writeln!(out, "material.lambda = {lambda:?}");
            }
            MaterialModel::FungPoly { w0, beta, gamma, n } => {
                out.push_str("material.kind = fung\n");
                let _ = writeln!(out, "material.w0 = {w0:?}");
                let _ = writeln!(out, "material.beta = {beta:?}");
                let _ = writeln!(out, "material.gamma = {gamma:?}");
                let _ = writeln!(out, "material.n = {n}");
            }
            MaterialModel::Ogden { gamma } => {
                out.push_str("material.kind = ogden\n");
                let _ = writeln!(out, "material.gamma = {gamma:?}");
            }
        }
        let s = &self.solver;
        let _ = writeln!(out, "solver.rho = {:?}", s.rho);
        let _ = writeln!(out, "solver.kappa = {:?}", s.kappa);
        if let Some(p) = s.p {
            let _ = writeln!(out, "solver.p = {p:?}");
        }
        let _ = writeln!(out, "solver.delta = {:?}", s.delta);
        let _ = writeln!(out, "solver.dt = {:?}", s.dt);
        let _ = writeln!(out, "solver.t_end = {:?}", s.t_end);
        let mode = match s.mode {
            Mode::Picard => "picard",
            Mode::Newton => "newton",
        };
        let _ = writeln!(out, "solver.mode = {mode}");
        let _ = writeln!(out, "solver.picard_tol = {:?}", s.picard_tol);
        let _ = writeln!(out, "solver.picard_max = {}", s.picard_max);
        let _ = writeln!(out, "solver.newton_tol = {:?}", s.newton_tol);
        let _ = writeln!(out, "solver.newton_max = {}", s.newton_max);
        let _ = writeln!(out, "solver.c_mon = {:?}", s.c_mon);
        let _ = writeln!(out, "solver.eta_fraction = {:?}", s.eta_fraction);

        let field_str = |f: &FieldSpec| -> String {
            match f {
                FieldSpec::Zero => "zero".into(),
                FieldSpec::Affine(m) => format!(
                    "affine:{:?},{:?},{:?},{:?}",
                    m[(0, 0)],
                    m[(0, 1)],
                    m[(1, 0)],
                    m[(1, 1)]
                ),
                FieldSpec::File(p) => format!("file:{}", p.display()),
            }
        };
        let force_str = |f: &ForceSpec| -> String {
            match f {
                ForceSpec::Zero => "zero".into(),
                ForceSpec::Constant(v) => format!("constant:{:?},{:?}", v.x, v.y),
                ForceSpec::Ramp { v, t_full } => {
                    format!("ramp:{:?},{:?},{:?}", v.x, v.y, t_full)
                }
            }
        };
        let _ = writeln!(out, "data.u0 = {}", field_str(&self.data.u0));
        let _ = writeln!(out, "data.u1 = {}", field_str(&self.data.u1));
        let _ = writeln!(out, "data.f = {}", force_str(&self.data.f));
        let _ = writeln!(out, "data.g = {}", force_str(&self.data.g));
        let _ = writeln!(out, "data.scale = {:?}", self.data.scale);

        let e = &self.experiment;
        let _ = writeln!(out, "experiment.kind = {}", e.kind.name());
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        if !e.kappas.is_empty() {
            let _ = writeln!(out, "experiment.kappas = {}", join(&e.kappas));
        }
        if !e.epsilons.is_empty() {
            let _ = writeln!(out, "experiment.epsilons = {}", join(&e.epsilons));
        }
        let _ = writeln!(out, "experiment.samples = {}", e.samples);
        if !e.levels.is_empty() {
            let levels: Vec<String> = e.levels.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(out, "experiment.levels = {}", levels.join(","));
        }
        let _ = writeln!(out, "experiment.seed = {}", e.seed);
        out
    }
}
