//! JSON run configuration: schema, validation, and construction of the
//! concrete system + scheme + solver objects.

use serde::Deserialize;
use thiserror::Error;

use gdr_core::dgrad::{DissipationConfig, ForceScheme, ForceVariant};
use gdr_core::integrator::{JacobianMode, SolverConfig};
use gdr_core::linalg::{SymMatrix, Vector};
use gdr_core::model::{LoadSchedule, State, SystemModel};
use gdr_core::systems::{
    make_example1, make_example2, make_spring_demo, LinearOscillator, Spring, SpringNetwork3D,
    TwoMassNonPolynomial, TwoMassPolynomial,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "snake_case")]
pub enum SystemConfig {
    Example1,
    Example2,
    SpringDemo,
    LinearOscillator {
        mass: Vec<Vec<f64>>,
        stiffness: Vec<Vec<f64>>,
    },
    SpringNetwork {
        particles: Vec<ParticleConfig>,
        springs: Vec<SpringConfig>,
        #[serde(default)]
        load: Option<LoadConfig>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub mass: f64,
    pub position: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpringConfig {
    pub i: usize,
    pub j: usize,
    pub stiffness: f64,
    /// Defaults to the initial distance between the two particles.
    #[serde(default)]
    pub rest_length: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub force: Vec<f64>,
    /// (t, scale) pairs, strictly increasing in t.
    pub breakpoints: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct SchemeConfig {
    #[serde(default = "default_variant")]
    pub variant: VariantName,
    #[serde(default)]
    pub chi_f: f64,
    #[serde(default)]
    pub chi_s: f64,
    /// Weight matrix of the force-level dissipation function. Defaults to
    /// the system's natural choice (stiffness for the oscillators,
    /// identity in invariant space for spring networks).
    #[serde(default)]
    pub dissipation_matrix: Option<Vec<Vec<f64>>>,
}

fn default_variant() -> VariantName {
    VariantName::NewConservative
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            variant: default_variant(),
            chi_f: 0.0,
            chi_s: 0.0,
            dissipation_matrix: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Average,
    Midpoint,
    NewConservative,
    Gonzalez,
    GEquivariant,
}

impl From<VariantName> for ForceVariant {
    fn from(v: VariantName) -> ForceVariant {
        match v {
            VariantName::Average => ForceVariant::Average,
            VariantName::Midpoint => ForceVariant::Midpoint,
            VariantName::NewConservative => ForceVariant::NewConservative,
            VariantName::Gonzalez => ForceVariant::Gonzalez,
            VariantName::GEquivariant => ForceVariant::GEquivariant,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct SolverSection {
    pub dt: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_jacobian")]
    pub jacobian: JacobianName,
}

fn default_rel_tol() -> f64 {
    1e-10
}

fn default_max_iters() -> usize {
    50
}

fn default_jacobian() -> JacobianName {
    JacobianName::FiniteDifference
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianName {
    FiniteDifference,
    AnalyticIfAvailable,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub q: Vec<f64>,
    pub s: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    pub solver: SolverSection,
    pub duration: f64,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub output: Option<String>,
    /// Informational only; the subcommand on the command line decides.
    #[serde(default)]
    pub command: Option<String>,
}

/// The catalog entry actually built from a config: the concrete system is
/// kept so that capabilities (exact solution, symmetry) stay visible.
pub enum BuiltSystem {
    Example1(TwoMassPolynomial),
    Example2(TwoMassNonPolynomial),
    Linear(LinearOscillator),
    Spring(SpringNetwork3D),
}

impl BuiltSystem {
    pub fn as_model(&self) -> &dyn SystemModel {
        match self {
            BuiltSystem::Example1(s) => s,
            BuiltSystem::Example2(s) => s,
            BuiltSystem::Linear(s) => s,
            BuiltSystem::Spring(s) => s,
        }
    }

    pub fn exact_linear(&self) -> Option<&LinearOscillator> {
        match self {
            BuiltSystem::Linear(s) => Some(s),
            _ => None,
        }
    }
}

pub struct Prepared {
    pub system: BuiltSystem,
    pub initial: State,
    pub scheme: ForceScheme,
    pub solver: SolverConfig,
    pub duration: f64,
    pub output: Option<String>,
    /// End of the external load, for after-load drift reporting.
    pub load_end: f64,
}

fn sym_from_rows(rows: &[Vec<f64>], what: &str) -> Result<SymMatrix, ConfigError> {
    let n = rows.len();
    for r in rows {
        if r.len() != n {
            return invalid(format!("{what} must be a square matrix"));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if (rows[i][j] - rows[j][i]).abs() > 1e-12 * rows[i][j].abs().max(1.0) {
                return invalid(format!("{what} must be symmetric"));
            }
        }
    }
    Ok(SymMatrix::from_rows(rows))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text)?;
    Ok(cfg)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, ConfigError> {
    if cfg.solver.dt <= 0.0 {
        return invalid("solver.dt must be > 0");
    }
    if cfg.solver.rel_tol <= 0.0 {
        return invalid("solver.rel_tol must be > 0");
    }
    if cfg.scheme.chi_f < 0.0 || cfg.scheme.chi_s < 0.0 {
        return invalid("chi_f and chi_s must be >= 0");
    }
    if cfg.duration < 0.0 {
        return invalid("duration must be >= 0");
    }

    let mut load_end = 0.0;
    let (system, default_initial, default_dissipation): (BuiltSystem, State, SymMatrix) =
        match &cfg.system {
            SystemConfig::Example1 => {
                let b = make_example1();
                let d = b.dissipation.matrix.clone();
                (BuiltSystem::Example1(b.system), b.initial, d)
            }
            SystemConfig::Example2 => {
                let b = make_example2();
                let d = b.dissipation.matrix.clone();
                (BuiltSystem::Example2(b.system), b.initial, d)
            }
            SystemConfig::SpringDemo => {
                let b = make_spring_demo();
                load_end = 0.5;
                let d = b.dissipation.matrix.clone();
                (BuiltSystem::Spring(b.system), b.initial, d)
            }
            SystemConfig::LinearOscillator { mass, stiffness } => {
                let m = sym_from_rows(mass, "mass")?;
                let k = sym_from_rows(stiffness, "stiffness")?;
                if m.dim() != k.dim() {
                    return invalid("mass and stiffness dimensions differ");
                }
                let n = m.dim();
                let sys = LinearOscillator::new(m, k.clone())
                    .map_err(|e| ConfigError::Invalid(format!("mass matrix: {e}")))?;
                let init = State::new(Vector::zeros(n), Vector::zeros(n), 0.0);
                (BuiltSystem::Linear(sys), init, k)
            }
            SystemConfig::SpringNetwork {
                particles,
                springs,
                load,
            } => {
                if particles.is_empty() {
                    return invalid("spring_network needs at least one particle");
                }
                for (idx, p) in particles.iter().enumerate() {
                    if p.mass <= 0.0 {
                        return invalid(format!("particle {idx} mass must be > 0"));
                    }
                }
                let mut q0 = Vector::zeros(3 * particles.len());
                for (i, p) in particles.iter().enumerate() {
                    for a in 0..3 {
                        q0[3 * i + a] = p.position[a];
                    }
                }
                let dist = |i: usize, j: usize| {
                    let (a, b) = (&particles[i].position, &particles[j].position);
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
                };
                let mut built = Vec::with_capacity(springs.len());
                for (idx, sp) in springs.iter().enumerate() {
                    if sp.i >= particles.len() || sp.j >= particles.len() || sp.i == sp.j {
                        return invalid(format!("spring {idx} has invalid endpoints"));
                    }
                    if sp.stiffness <= 0.0 {
                        return invalid(format!("spring {idx} stiffness must be > 0"));
                    }
                    let rest = sp.rest_length.unwrap_or_else(|| dist(sp.i, sp.j));
                    if rest < 0.0 {
                        return invalid(format!("spring {idx} rest length must be >= 0"));
                    }
                    built.push(Spring {
                        i: sp.i,
                        j: sp.j,
                        stiffness: sp.stiffness,
                        rest_length: rest,
                    });
                }
                let schedule = match load {
                    Some(l) => {
                        if l.force.len() != 3 * particles.len() {
                            return invalid("load.force length must be 3 × particle count");
                        }
                        let sched = LoadSchedule::new(
                            Vector::from_slice(&l.force),
                            l.breakpoints.clone(),
                        )
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                        load_end = sched.end_time();
                        Some(sched)
                    }
                    None => None,
                };
                let n_springs = built.len();
                let masses = particles.iter().map(|p| p.mass).collect();
                let sys = SpringNetwork3D::new(masses, built, schedule)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let init = State::new(q0.clone(), Vector::zeros(q0.dim()), 0.0);
                (BuiltSystem::Spring(sys), init, SymMatrix::identity(n_springs))
            }
        };

    let initial = match &cfg.initial {
        Some(ic) => {
            let n = system.as_model().dim();
            if ic.q.len() != n || ic.s.len() != n {
                return invalid(format!("initial.q and initial.s must have length {n}"));
            }
            State::new(Vector::from_slice(&ic.q), Vector::from_slice(&ic.s), 0.0)
        }
        None => default_initial,
    };

    let dmat = match &cfg.scheme.dissipation_matrix {
        Some(rows) => {
            let d = sym_from_rows(rows, "dissipation_matrix")?;
            let expected = match &system {
                BuiltSystem::Spring(s) => s.springs().len(),
                other => other.as_model().dim(),
            };
            if d.dim() != expected {
                return invalid(format!("dissipation_matrix must be {expected}×{expected}"));
            }
            d
        }
        None => default_dissipation,
    };
    let scheme = ForceScheme {
        variant: cfg.scheme.variant.into(),
        dissipation: DissipationConfig::new(cfg.scheme.chi_f, cfg.scheme.chi_s, dmat, cfg.solver.dt),
    };
    if matches!(scheme.variant, ForceVariant::GEquivariant)
        && system.as_model().symmetry().is_none()
    {
        return invalid("g_equivariant variant requires a system with symmetry data");
    }

    let mut solver = SolverConfig::new(cfg.solver.dt);
    solver.rel_tol = cfg.solver.rel_tol;
    solver.max_iters = cfg.solver.max_iters;
    solver.jacobian = match cfg.solver.jacobian {
        JacobianName::FiniteDifference => JacobianMode::FiniteDifference,
        JacobianName::AnalyticIfAvailable => JacobianMode::AnalyticIfAvailable,
    };

    Ok(Prepared {
        system,
        initial,
        scheme,
        solver,
        duration: cfg.duration,
        output: cfg.output.clone(),
        load_end,
    })
}
