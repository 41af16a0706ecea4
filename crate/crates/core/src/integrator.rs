//! Assembly of the discrete residuals and the Newton–Raphson step.
//!
//! Each step solves the stacked residual
//!   r_s = M (q_{n+1} − q_n)/Δt − M 𝗌(s_n, s_{n+1})
//!   r_q = M (s_{n+1} − s_n)/Δt + 𝖿(q_n, q_{n+1}) − f_ext(q_{n+1/2}, t_{n+1/2})
//! for the unknowns (q_{n+1}, s_{n+1}). Pairing r_q with Δq and using r_s
//! gives the exact per-step balance ΔT + ΔV = W_ext − D̃_f − D̃_s.

use thiserror::Error;

use crate::dgrad::{
    algorithmic_force, algorithmic_velocity, dissipation_fn_s, velocity_beta, DegeneracyPolicy,
    DgradError, ForceScheme,
};
use crate::linalg::{solve_general, LinalgError, Matrix, Vector};
use crate::model::{kinetic_energy, State, SystemModel};

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error("Newton diverged at step {step} (t = {t}): residual {residual_norm:e} after {iters} iterations")]
    NewtonDiverged {
        step: usize,
        t: f64,
        iters: usize,
        residual_norm: f64,
    },
    #[error("singular Jacobian at step {step} (t = {t})")]
    SingularJacobian { step: usize, t: f64 },
    #[error("duration {0} is not an integer multiple of the time step {1}")]
    GridMisaligned(f64, f64),
    #[error(transparent)]
    Dgrad(#[from] DgradError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, IntegratorError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianMode {
    /// Forward finite differences of the stacked residual (default).
    FiniteDifference,
    /// Midpoint-Hessian approximation when the system provides an analytic
    /// Hessian, finite differences otherwise. Convergence is still judged
    /// on the exact residual, so the solution is unchanged; only the
    /// iteration count differs.
    AnalyticIfAvailable,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub dt: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub jacobian: JacobianMode,
    pub degeneracy: DegeneracyPolicy,
}

impl SolverConfig {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0, "time step must be positive");
        SolverConfig {
            dt,
            rel_tol: 1e-10,
            max_iters: 50,
            jacobian: JacobianMode::FiniteDifference,
            degeneracy: DegeneracyPolicy::default(),
        }
    }
}

/// Per-step diagnostics.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub state: State,
    pub iters: usize,
    pub residual_norm: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub potential: f64,
    /// External work increment ⟨f_ext(q_{n+1/2}, t_{n+1/2}), Δq⟩.
    pub work_ext: f64,
    pub diss_f: f64,
    pub diss_s: f64,
    pub degenerate_fallback: bool,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// records[0] is the initial state; one record per step follows.
    pub records: Vec<StepReport>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        &self.records.last().expect("trajectory is never empty").state
    }

    /// Stacked (q, s) states with their times, as used by the precision
    /// quotients.
    pub fn stacked_states(&self) -> Vec<(f64, Vector)> {
        self.records
            .iter()
            .map(|r| (r.state.t, r.state.stacked()))
            .collect()
    }

    pub fn energies(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.state.t, r.energy)).collect()
    }
}

/// Synthesizes the step-report bookkeeping for an initial state.
pub fn initial_report<S: SystemModel + ?Sized>(sys: &S, state: &State) -> StepReport {
    let kin = kinetic_energy(sys.mass(), &state.s);
    let pot = sys.potential(&state.q);
    StepReport {
        state: state.clone(),
        iters: 0,
        residual_norm: 0.0,
        energy: kin + pot,
        kinetic: kin,
        potential: pot,
        work_ext: 0.0,
        diss_f: 0.0,
        diss_s: 0.0,
        degenerate_fallback: false,
    }
}

/// Pure evaluation of the two residuals for a trial state.
pub fn residual<S: SystemModel + ?Sized>(
    sys: &S,
    scheme: &ForceScheme,
    cfg: &SolverConfig,
    prev: &State,
    trial: &State,
) -> Result<(Vector, Vector)> {
    let m = sys.mass();
    let dt = cfg.dt;
    let dq = &trial.q - &prev.q;
    let ds = &trial.s - &prev.s;
    let alg_vel = algorithmic_velocity(m, &scheme.dissipation, &prev.s, &trial.s);
    let r_s = m.matvec(&(&dq.scale(1.0 / dt) - &alg_vel));
    let force = algorithmic_force(sys, scheme, &prev.q, &trial.q, &cfg.degeneracy)?;
    let q_mid = (&(&prev.q + &trial.q)).scale(0.5);
    let t_mid = prev.t + 0.5 * dt;
    let mut r_q = m.matvec(&ds.scale(1.0 / dt));
    r_q += &force.force;
    r_q.axpy(-1.0, &sys.external_force(&q_mid, t_mid));
    Ok((r_s, r_q))
}

fn stacked_residual<S: SystemModel + ?Sized>(
    sys: &S,
    scheme: &ForceScheme,
    cfg: &SolverConfig,
    prev: &State,
    q: &Vector,
    s: &Vector,
) -> Result<Vector> {
    let trial = State::new(q.clone(), s.clone(), prev.t + cfg.dt);
    let (r_s, r_q) = residual(sys, scheme, cfg, prev, &trial)?;
    Ok(r_s.stacked(&r_q))
}

fn fd_jacobian<S: SystemModel + ?Sized>(
    sys: &S,
    scheme: &ForceScheme,
    cfg: &SolverConfig,
    prev: &State,
    q: &Vector,
    s: &Vector,
    r0: &Vector,
) -> Result<Matrix> {
    let n = sys.dim();
    let mut jac = Matrix::zeros(2 * n, 2 * n);
    let eps = f64::EPSILON.sqrt();
    for col in 0..2 * n {
        let mut qp = q.clone();
        let mut sp = s.clone();
        let uj = if col < n { q[col] } else { s[col - n] };
        let delta = eps * uj.abs().max(1.0);
        if col < n {
            qp[col] += delta;
        } else {
            sp[col - n] += delta;
        }
        let r = stacked_residual(sys, scheme, cfg, prev, &qp, &sp)?;
        for row in 0..2 * n {
            jac.set(row, col, (r[row] - r0[row]) / delta);
        }
    }
    Ok(jac)
}

/// Approximate Jacobian from the analytic Hessian at the midpoint
/// configuration, treating the algorithmic force as the midpoint force and
/// the β factor as frozen.
fn hessian_jacobian<S: SystemModel + ?Sized>(
    sys: &S,
    scheme: &ForceScheme,
    cfg: &SolverConfig,
    prev: &State,
    q: &Vector,
    s: &Vector,
) -> Option<Matrix> {
    let n = sys.dim();
    let q_mid = (&(&prev.q + q)).scale(0.5);
    let hess = sys.analytic_hessian(&q_mid)?;
    let m = sys.mass();
    let beta = velocity_beta(m, &scheme.dissipation, &prev.s, s);
    let mut jac = Matrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            // d r_s / d q1 = M/dt ; d r_s / d s1 ~= -(1+beta)/2 M
            jac.set(i, j, m.get(i, j) / cfg.dt);
            jac.set(i, n + j, -0.5 * (1.0 + beta) * m.get(i, j));
            // d r_q / d q1 ~= H(q_mid)/2 ; d r_q / d s1 = M/dt
            jac.set(n + i, j, 0.5 * hess.get(i, j));
            jac.set(n + i, n + j, m.get(i, j) / cfg.dt);
        }
    }
    Some(jac)
}

/// Advances one step with Newton–Raphson and reports diagnostics.
pub fn step<S: SystemModel + ?Sized>(
    sys: &S,
    scheme: &ForceScheme,
    cfg: &SolverConfig,
    prev: &State,
) -> Result<StepReport> {
    let n = sys.dim();
    let dt = cfg.dt;
    // constant-velocity predictor
    let mut q = prev.q.clone();
    q.axpy(dt, &prev.s);
    let mut s = prev.s.clone();

    let mut r = stacked_residual(sys, scheme, cfg, prev, &q, &s)?;
    let denom = r.norm().max(1.0);
    // Acceptance floor for stalled iterations: with a sharp predictor the
    // relative target can drop below the round-off noise of the residual
    // evaluation itself, so a stagnating iteration at ≤ √ε·denom is taken
    // as converged rather than reported as divergence.
    let noise_floor = f64::EPSILON.sqrt() * denom;
    let mut best = r.norm();
    let mut stalls = 0;
    let mut iters = 0;
    loop {
        if r.norm() <= cfg.rel_tol * denom {
            break;
        }
        if (iters >= cfg.max_iters || stalls >= 3) && r.norm() <= noise_floor {
            break;
        }
        if iters >= cfg.max_iters || stalls >= 5 {
            return Err(IntegratorError::NewtonDiverged {
                step: 0,
                t: prev.t,
                iters,
                residual_norm: r.norm(),
            });
        }
        let jac = match cfg.jacobian {
            JacobianMode::FiniteDifference => fd_jacobian(sys, scheme, cfg, prev, &q, &s, &r)?,
            JacobianMode::AnalyticIfAvailable => {
                match hessian_jacobian(sys, scheme, cfg, prev, &q, &s) {
                    Some(j) => j,
                    None => fd_jacobian(sys, scheme, cfg, prev, &q, &s, &r)?,
                }
            }
        };
        let du = solve_general(&jac, &(-&r)).map_err(|e| match e {
            LinalgError::Singular { .. } => IntegratorError::SingularJacobian {
                step: 0,
                t: prev.t,
            },
            other => IntegratorError::Linalg(other),
        })?;
        for i in 0..n {
            q[i] += du[i];
            s[i] += du[n + i];
        }
        iters += 1;
        r = stacked_residual(sys, scheme, cfg, prev, &q, &s)?;
        let nn = r.norm();
        if nn >= 0.5 * best {
            stalls += 1;
        } else {
            stalls = 0;
        }
        best = best.min(nn);
    }

    let m = sys.mass();
    let force = algorithmic_force(sys, scheme, &prev.q, &q, &cfg.degeneracy)?;
    let kin = kinetic_energy(m, &s);
    let pot = sys.potential(&q);
    let q_mid = (&(&prev.q + &q)).scale(0.5);
    let t_mid = prev.t + 0.5 * dt;
    let work_ext = sys.external_force(&q_mid, t_mid).dot(&(&q - &prev.q));
    let diss_s = dissipation_fn_s(&scheme.dissipation, m, &prev.s, &s);
    Ok(StepReport {
        state: State::new(q, s, prev.t + dt),
        iters,
        residual_norm: r.norm(),
        energy: kin + pot,
        kinetic: kin,
        potential: pot,
        work_ext,
        diss_f: force.diss_f,
        diss_s,
        degenerate_fallback: force.fallback,
    })
}

/// Integrates on the uniform grid from `initial.t` to `t_end`.
pub fn integrate<S: SystemModel + ?Sized>(
    sys: &S,
    scheme: &ForceScheme,
    cfg: &SolverConfig,
    initial: &State,
    t_end: f64,
) -> Result<Trajectory> {
    let span = t_end - initial.t;
    let steps = (span / cfg.dt).round();
    if steps < 0.0 || (steps * cfg.dt - span).abs() > 1e-9 * span.abs().max(1.0) {
        return Err(IntegratorError::GridMisaligned(span, cfg.dt));
    }
    let steps = steps as usize;
    let mut records = Vec::with_capacity(steps + 1);
    records.push(initial_report(sys, initial));
    for k in 0..steps {
        let prev = &records[k].state;
        let mut report = step(sys, scheme, cfg, prev).map_err(|e| match e {
            IntegratorError::NewtonDiverged {
                t,
                iters,
                residual_norm,
                ..
            } => IntegratorError::NewtonDiverged {
                step: k,
                t,
                iters,
                residual_norm,
            },
            IntegratorError::SingularJacobian { t, .. } => {
                IntegratorError::SingularJacobian { step: k, t }
            }
            other => other,
        })?;
        // pin grid times exactly, avoiding accumulation
        report.state.t = initial.t + (k + 1) as f64 * cfg.dt;
        records.push(report);
    }
    Ok(Trajectory { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgrad::{DissipationConfig, ForceVariant};
    use crate::diagnostics::energy_balance_residual;
    use crate::linalg::SymMatrix;
    use crate::systems::{make_example1, LinearOscillator};

    fn harmonic() -> LinearOscillator {
        LinearOscillator::new(SymMatrix::identity(1), SymMatrix::identity(1)).unwrap()
    }

    #[test]
    fn midpoint_step_closed_form_oracle() {
        // q̈ = −q, q₀ = 1, s₀ = 0, Δt = 0.01; the midpoint step solves
        // (q₁−q₀)/Δt = (s₀+s₁)/2, (s₁−s₀)/Δt = −(q₀+q₁)/2 with a = Δt/2:
        // q₁ = (1 − a²)/(1 + a²), s₁ = −Δt/(1 + a²)
        let sys = harmonic();
        let scheme = ForceScheme::conservative(ForceVariant::Midpoint);
        let cfg = SolverConfig::new(0.01);
        let init = State::new(
            Vector::from_slice(&[1.0]),
            Vector::zeros(1),
            0.0,
        );
        let rep = step(&sys, &scheme, &cfg, &init).unwrap();
        assert!((rep.state.q[0] - 0.9999500012499688).abs() < 1e-13);
        assert!((rep.state.s[0] + 0.009999750006249844).abs() < 1e-13);
        assert!(rep.iters <= 5);
    }

    #[test]
    fn residual_vanishes_at_converged_state() {
        let sys = harmonic();
        let scheme = ForceScheme::conservative(ForceVariant::NewConservative);
        let cfg = SolverConfig::new(0.01);
        let init = State::new(Vector::from_slice(&[0.7]), Vector::from_slice(&[0.3]), 0.0);
        let rep = step(&sys, &scheme, &cfg, &init).unwrap();
        let (r_s, r_q) = residual(&sys, &scheme, &cfg, &init, &rep.state).unwrap();
        assert!(r_s.norm() < 1e-10 && r_q.norm() < 1e-10);
    }

    #[test]
    fn conservative_run_preserves_energy_exactly() {
        let bench = make_example1();
        let scheme = ForceScheme::conservative(ForceVariant::NewConservative);
        let mut cfg = bench.solver.clone();
        cfg.dt = 1e-3;
        let traj = integrate(&bench.system, &scheme, &cfg, &bench.initial, 1.0).unwrap();
        let e0 = traj.records[0].energy;
        for rec in &traj.records {
            assert!(
                (rec.energy - e0).abs() < 1e-9 * e0.abs().max(1.0),
                "energy drifted to {} at t = {}",
                rec.energy,
                rec.state.t
            );
        }
    }

    #[test]
    fn dissipative_run_satisfies_per_step_balance() {
        let bench = make_example1();
        let scheme = ForceScheme {
            variant: ForceVariant::NewConservative,
            dissipation: bench.dissipation.clone(),
        };
        let traj = integrate(&bench.system, &scheme, &bench.solver, &bench.initial, 0.5).unwrap();
        for w in traj.records.windows(2) {
            let res = energy_balance_residual(&w[0], &w[1]);
            assert!(
                res.abs() < 1e-10,
                "balance residual {res:e} at t = {}",
                w[1].state.t
            );
        }
        // and the energy actually decreases
        assert!(traj.records.last().unwrap().energy < traj.records[0].energy - 1e-3);
    }

    #[test]
    fn analytic_jacobian_mode_matches_finite_differences() {
        let bench = make_example1();
        let scheme = ForceScheme::conservative(ForceVariant::NewConservative);
        let mut cfg_fd = bench.solver.clone();
        cfg_fd.dt = 1e-3;
        let mut cfg_an = cfg_fd.clone();
        cfg_an.jacobian = JacobianMode::AnalyticIfAvailable;
        let t_fd = integrate(&bench.system, &scheme, &cfg_fd, &bench.initial, 0.2).unwrap();
        let t_an = integrate(&bench.system, &scheme, &cfg_an, &bench.initial, 0.2).unwrap();
        let d = (&t_fd.final_state().q - &t_an.final_state().q).norm();
        assert!(d < 1e-9, "trajectories differ by {d:e}");
    }

    #[test]
    fn integrate_rejects_misaligned_horizon() {
        let bench = make_example1();
        let scheme = ForceScheme::conservative(ForceVariant::NewConservative);
        let err = integrate(&bench.system, &scheme, &bench.solver, &bench.initial, 0.01015);
        assert!(matches!(err, Err(IntegratorError::GridMisaligned(_, _))));
    }

    #[test]
    fn newton_divergence_reports_step_and_time() {
        let bench = make_example1();
        let scheme = ForceScheme::conservative(ForceVariant::NewConservative);
        let mut cfg = bench.solver.clone();
        cfg.dt = 1e-3;
        cfg.max_iters = 0;
        let err = integrate(&bench.system, &scheme, &cfg, &bench.initial, 0.01).unwrap_err();
        match err {
            IntegratorError::NewtonDiverged { step, t, .. } => {
                assert_eq!(step, 0);
                assert_eq!(t, 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trajectory_grid_times_are_exact() {
        let bench = make_example1();
        let scheme = ForceScheme::conservative(ForceVariant::Midpoint);
        let cfg = SolverConfig::new(1e-3);
        let traj = integrate(&bench.system, &scheme, &cfg, &bench.initial, 0.1).unwrap();
        assert_eq!(traj.records.len(), 101);
        assert_eq!(traj.records[100].state.t, 0.1);
        assert_eq!(traj.records[37].state.t, 37.0 * 1e-3);
    }

    #[test]
    fn velocity_dissipation_only_balance() {
        let bench = make_example1();
        let scheme = ForceScheme {
            variant: ForceVariant::NewConservative,
            dissipation: DissipationConfig::new(0.0, 0.008, SymMatrix::zeros(0), 1e-3),
        };
        let cfg = SolverConfig::new(1e-3);
        let traj = integrate(&bench.system, &scheme, &cfg, &bench.initial, 0.5).unwrap();
        for w in traj.records.windows(2) {
            assert!(energy_balance_residual(&w[0], &w[1]).abs() < 1e-10);
            assert!(w[1].diss_s >= 0.0 && w[1].diss_f == 0.0);
        }
    }
}
