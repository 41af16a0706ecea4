//! Discrete-derivative machinery: conservation and dissipation functions,
//! the averaged-force correction, the Gonzalez midpoint correction, the
//! G-equivariant variant built on quadratic invariants, and the algorithmic
//! velocity.
//!
//! All corrections are derived from linearly constrained quadratic programs
//! with closed-form solutions; the scalar correction coefficients are
//! metric-independent, and the 2×2 stationarity systems are exposed as
//! diagnostics for the (metric-dependent) multipliers.

use thiserror::Error;

use crate::linalg::{solve_general, solve_spd, weighted_norm_sq, LinalgError, Matrix, SymMatrix, Vector};
use crate::model::{kinetic_energy, SystemModel};

#[derive(Debug, Error)]
pub enum DgradError {
    #[error("degenerate denominator ⟨Δg, Δq⟩ = {denom:e}")]
    DegenerateDenominator { denom: f64 },
    #[error("system provides no symmetry data (invariants, reduced potential)")]
    MissingSymmetryData,
    #[error("dissipation matrix dimension {0} does not match expected {1}")]
    DissipationDimensionMismatch(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, DgradError>;

/// Which algorithmic-force variant drives the integrator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForceVariant {
    /// g_a = (g(x) + g(y))/2, no correction. Comparison baseline.
    Average,
    /// g((x+y)/2), the classical midpoint rule. Comparison baseline.
    Midpoint,
    /// Averaged force plus the directionality correction along Δg.
    NewConservative,
    /// Midpoint force plus the directionality correction along Δq.
    Gonzalez,
    /// Built through quadratic invariants; preserves linear and angular
    /// momenta exactly. Requires symmetry data on the system.
    GEquivariant,
}

/// Controllable numerical dissipation: χ_f acts on forces, χ_s on
/// velocities, D weighs the force-level dissipation function.
#[derive(Clone, Debug)]
pub struct DissipationConfig {
    pub chi_f: f64,
    pub chi_s: f64,
    pub matrix: SymMatrix,
    /// Time step h entering the dissipation functions; must equal the
    /// solver step of the run it is used in.
    pub h: f64,
}

impl DissipationConfig {
    pub fn new(chi_f: f64, chi_s: f64, matrix: SymMatrix, h: f64) -> Self {
        assert!(chi_f >= 0.0 && chi_s >= 0.0, "dissipation parameters must be >= 0");
        assert!(h > 0.0, "time step must be positive");
        DissipationConfig {
            chi_f,
            chi_s,
            matrix,
            h,
        }
    }

    /// χ_f = χ_s = 0: the fully conservative setting.
    pub fn conservative() -> Self {
        DissipationConfig {
            chi_f: 0.0,
            chi_s: 0.0,
            matrix: SymMatrix::zeros(0),
            h: 1.0,
        }
    }

    pub fn is_conservative(&self) -> bool {
        self.chi_f == 0.0 && self.chi_s == 0.0
    }
}

#[derive(Clone, Debug)]
pub struct ForceScheme {
    pub variant: ForceVariant,
    pub dissipation: DissipationConfig,
}

impl ForceScheme {
    pub fn conservative(variant: ForceVariant) -> Self {
        ForceScheme {
            variant,
            dissipation: DissipationConfig::conservative(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DegeneracyMode {
    /// Drop the correction term; near x = y this loses only an
    /// O(‖Δq‖³) quantity and preserves the order of the scheme.
    Fallback,
    /// Raise an error instead; for debugging.
    Strict,
}

/// Handling of near-degenerate correction denominators ⟨Δg, Δq⟩ ≈ 0.
#[derive(Clone, Copy, Debug)]
pub struct DegeneracyPolicy {
    pub rel_threshold: f64,
    pub mode: DegeneracyMode,
}

impl Default for DegeneracyPolicy {
    fn default() -> Self {
        DegeneracyPolicy {
            rel_threshold: 1e-10,
            mode: DegeneracyMode::Fallback,
        }
    }
}

impl DegeneracyPolicy {
    pub fn strict() -> Self {
        DegeneracyPolicy {
            rel_threshold: 1e-10,
            mode: DegeneracyMode::Strict,
        }
    }

    /// Returns `numerator / ⟨dg, dq⟩`, or `None` under fallback when the
    /// denominator is below the normalized threshold.
    fn coefficient(&self, numerator: f64, dg: &Vector, dq: &Vector) -> Result<Option<f64>> {
        let denom = dg.dot(dq);
        if denom.abs() <= self.rel_threshold * (dg.norm() * dq.norm() + f64::EPSILON) {
            match self.mode {
                DegeneracyMode::Fallback => Ok(None),
                DegeneracyMode::Strict => Err(DgradError::DegenerateDenominator { denom }),
            }
        } else {
            Ok(Some(numerator / denom))
        }
    }
}

/// An algorithmic force together with its bookkeeping.
#[derive(Clone, Debug)]
pub struct ForceEval {
    pub force: Vector,
    /// Value of the force-level dissipation function for this pair.
    pub diss_f: f64,
    /// True when the correction term was dropped by the degeneracy policy.
    pub fallback: bool,
}

fn midpoint(x: &Vector, y: &Vector) -> Vector {
    (&(x + y)).scale(0.5)
}

/// Conservation function C̃_f(x, y) = V(y) − V(x) − ⟨g_a, y − x⟩, the
/// directionality defect of the averaged force.
pub fn conservation_fn<S: SystemModel + ?Sized>(sys: &S, x: &Vector, y: &Vector) -> f64 {
    let ga = midpoint(&sys.grad_potential(x), &sys.grad_potential(y));
    sys.potential(y) - sys.potential(x) - ga.dot(&(y - x))
}

/// Force-level dissipation function D̃_f = (χ_f / 2h) ‖y − x‖²_D.
pub fn dissipation_fn_f(cfg: &DissipationConfig, x: &Vector, y: &Vector) -> f64 {
    if cfg.chi_f == 0.0 {
        return 0.0;
    }
    let dq = y - x;
    let w = weighted_norm_sq(&dq, &cfg.matrix).expect("dissipation matrix dimension");
    cfg.chi_f / (2.0 * cfg.h) * w
}

/// Velocity-level dissipation function D̃_s = (χ_s / h)(√T(v) − √T(u))².
pub fn dissipation_fn_s(cfg: &DissipationConfig, mass: &SymMatrix, u: &Vector, v: &Vector) -> f64 {
    if cfg.chi_s == 0.0 {
        return 0.0;
    }
    let d = kinetic_energy(mass, v).sqrt() - kinetic_energy(mass, u).sqrt();
    cfg.chi_s / cfg.h * d * d
}

fn corrected_average<S: SystemModel + ?Sized>(
    sys: &S,
    numerator_extra: f64,
    x: &Vector,
    y: &Vector,
    policy: &DegeneracyPolicy,
) -> Result<(Vector, bool)> {
    let gx = sys.grad_potential(x);
    let gy = sys.grad_potential(y);
    let ga = midpoint(&gx, &gy);
    let dq = y - x;
    let dg = &gy - &gx;
    let c = sys.potential(y) - sys.potential(x) - ga.dot(&dq);
    match policy.coefficient(c + numerator_extra, &dg, &dq)? {
        Some(coeff) => {
            let mut f = ga;
            f.axpy(coeff, &dg);
            Ok((f, false))
        }
        None => Ok((ga, true)),
    }
}

/// The conservative algorithmic force g_a + [C̃_f / ⟨Δg, Δq⟩] Δg.
pub fn conservative_force<S: SystemModel + ?Sized>(
    sys: &S,
    x: &Vector,
    y: &Vector,
    policy: &DegeneracyPolicy,
) -> Result<Vector> {
    corrected_average(sys, 0.0, x, y, policy).map(|(f, _)| f)
}

/// Combined conservative/dissipative force
/// g_a + [(C̃_f + D̃_f) / ⟨Δg, Δq⟩] Δg. Satisfies ⟨f, Δq⟩ = ΔV + D̃_f
/// exactly when non-degenerate.
pub fn combined_force<S: SystemModel + ?Sized>(
    sys: &S,
    cfg: &DissipationConfig,
    x: &Vector,
    y: &Vector,
    policy: &DegeneracyPolicy,
) -> Result<Vector> {
    corrected_average(sys, dissipation_fn_f(cfg, x, y), x, y, policy).map(|(f, _)| f)
}

/// The two correction scalars α_cons = 2C̃_f/⟨Δg, Δq⟩ and
/// α_diss = 2D̃_f/⟨Δg, Δq⟩. Under degeneracy fallback both are 0.
pub fn alpha_coefficients<S: SystemModel + ?Sized>(
    sys: &S,
    cfg: &DissipationConfig,
    x: &Vector,
    y: &Vector,
    policy: &DegeneracyPolicy,
) -> Result<(f64, f64)> {
    let dq = y - x;
    let dg = &sys.grad_potential(y) - &sys.grad_potential(x);
    let c = conservation_fn(sys, x, y);
    let d = dissipation_fn_f(cfg, x, y);
    let alpha_cons = policy.coefficient(2.0 * c, &dg, &dq)?.unwrap_or(0.0);
    let alpha_diss = policy.coefficient(2.0 * d, &dg, &dq)?.unwrap_or(0.0);
    Ok((alpha_cons, alpha_diss))
}

/// The midpoint-based conserving force of Gonzalez, generalized to an
/// arbitrary SPD metric:
/// f_𝔊(x, y) = g_m + [Ĉ_f / ‖Δq‖²_{𝔊⁻¹}] 𝔊⁻¹ Δq,
/// with Ĉ_f = ΔV − ⟨g_m, Δq⟩. The Euclidean metric recovers the original
/// formula.
pub fn gonzalez_force<S: SystemModel + ?Sized>(
    sys: &S,
    x: &Vector,
    y: &Vector,
    metric: &SymMatrix,
    policy: &DegeneracyPolicy,
) -> Result<Vector> {
    let z = midpoint(x, y);
    let gm = sys.grad_potential(&z);
    let dq = y - x;
    if dq.norm() <= policy.rel_threshold * (1.0 + x.norm() + y.norm()) {
        return Ok(gm);
    }
    let dir = solve_spd(metric, &dq)?; // 𝔊⁻¹ Δq
    let c_hat = sys.potential(y) - sys.potential(x) - gm.dot(&dq);
    let mut f = gm;
    f.axpy(c_hat / dir.dot(&dq), &dir);
    Ok(f)
}

/// G-equivariant combined force: the correction is computed entirely in
/// invariant space and pulled back through DΠ at the midpoint
/// configuration, so midpoint translation and rotation generators are
/// annihilated exactly.
pub fn g_equivariant_force<S: SystemModel + ?Sized>(
    sys: &S,
    cfg: &DissipationConfig,
    x: &Vector,
    y: &Vector,
    policy: &DegeneracyPolicy,
) -> Result<ForceEval> {
    let sym = sys.symmetry().ok_or(DgradError::MissingSymmetryData)?;
    let pi_x = sym.invariant_map(x);
    let pi_y = sym.invariant_map(y);
    let r_x = sym.reduced_grad(&pi_x);
    let r_y = sym.reduced_grad(&pi_y);
    let r_a = midpoint(&r_x, &r_y);
    let d_pi = &pi_y - &pi_x;
    let d_r = &r_y - &r_x;
    let c = sym.reduced_potential(&pi_y) - sym.reduced_potential(&pi_x) - r_a.dot(&d_pi);
    let diss = if cfg.chi_f == 0.0 {
        0.0
    } else {
        if cfg.matrix.dim() != sym.invariant_dim() {
            return Err(DgradError::DissipationDimensionMismatch(
                cfg.matrix.dim(),
                sym.invariant_dim(),
            ));
        }
        cfg.chi_f / (2.0 * cfg.h) * weighted_norm_sq(&d_pi, &cfg.matrix)?
    };
    let (reduced, fallback) = match policy.coefficient(c + diss, &d_r, &d_pi)? {
        Some(coeff) => {
            let mut r = r_a;
            r.axpy(coeff, &d_r);
            (r, false)
        }
        None => (r_a, true),
    };
    let z = midpoint(x, y);
    let force = sym.invariant_jacobian(&z).transpose_matvec(&reduced);
    Ok(ForceEval {
        force,
        diss_f: diss,
        fallback,
    })
}

/// Stabilized dissipative velocity factor β for the √T dissipation
/// function: β = (χ_s/h)(√T(v) − √T(u))/(√T(v) + √T(u)), which equals
/// D̃_s/(T(v) − T(u)) exactly when the kinetic energies differ and extends
/// continuously by 0 when they coincide.
pub fn velocity_beta(mass: &SymMatrix, cfg: &DissipationConfig, u: &Vector, v: &Vector) -> f64 {
    if cfg.chi_s == 0.0 {
        return 0.0;
    }
    let tu = kinetic_energy(mass, u).sqrt();
    let tv = kinetic_energy(mass, v).sqrt();
    if tu + tv == 0.0 {
        return 0.0;
    }
    cfg.chi_s / cfg.h * (tv - tu) / (tv + tu)
}

/// Algorithmic velocity 𝗌(u, v) = (1 + β)(u + v)/2.
pub fn algorithmic_velocity(
    mass: &SymMatrix,
    cfg: &DissipationConfig,
    u: &Vector,
    v: &Vector,
) -> Vector {
    midpoint(u, v).scale(1.0 + velocity_beta(mass, cfg, u, v))
}

/// Algorithmic velocity for a caller-supplied dissipation function, with
/// quotient fallback β = 0 when |T(v) − T(u)| is below threshold.
pub fn algorithmic_velocity_generic<F>(
    mass: &SymMatrix,
    u: &Vector,
    v: &Vector,
    diss_fn: F,
) -> Vector
where
    F: Fn(&Vector, &Vector) -> f64,
{
    let tu = kinetic_energy(mass, u);
    let tv = kinetic_energy(mass, v);
    let dt = tv - tu;
    let beta = if dt.abs() <= 1e-12 * (tu + tv).max(1.0) {
        0.0
    } else {
        diss_fn(u, v) / dt
    };
    midpoint(u, v).scale(1.0 + beta)
}

/// The unique one-dimensional discrete derivative (V(y) − V(x))/(y − x),
/// with a finite-difference limit at y = x.
pub fn one_d_discrete_derivative<F: Fn(f64) -> f64>(v: F, x: f64, y: f64) -> f64 {
    let scale = x.abs().max(y.abs()).max(1.0);
    if (y - x).abs() <= 1e-12 * scale {
        let h = 1e-6 * scale;
        (v(x + h) - v(x - h)) / (2.0 * h)
    } else {
        (v(y) - v(x)) / (y - x)
    }
}

/// Evaluates the algorithmic force of the selected variant, with its
/// dissipation bookkeeping.
pub fn algorithmic_force<S: SystemModel + ?Sized>(
    sys: &S,
    scheme: &ForceScheme,
    x: &Vector,
    y: &Vector,
    policy: &DegeneracyPolicy,
) -> Result<ForceEval> {
    let cfg = &scheme.dissipation;
    match scheme.variant {
        ForceVariant::Average => Ok(ForceEval {
            force: midpoint(&sys.grad_potential(x), &sys.grad_potential(y)),
            diss_f: 0.0,
            fallback: false,
        }),
        ForceVariant::Midpoint => Ok(ForceEval {
            force: sys.grad_potential(&midpoint(x, y)),
            diss_f: 0.0,
            fallback: false,
        }),
        ForceVariant::NewConservative => {
            let diss = dissipation_fn_f(cfg, x, y);
            let (force, fallback) = corrected_average(sys, diss, x, y, policy)?;
            Ok(ForceEval {
                force,
                diss_f: diss,
                fallback,
            })
        }
        ForceVariant::Gonzalez => {
            let metric = SymMatrix::identity(sys.dim());
            let mut force = gonzalez_force(sys, x, y, &metric, policy)?;
            let diss = dissipation_fn_f(cfg, x, y);
            let mut fallback = false;
            if diss > 0.0 {
                let dq = y - x;
                let dg = &sys.grad_potential(y) - &sys.grad_potential(x);
                match policy.coefficient(diss, &dg, &dq)? {
                    Some(coeff) => force.axpy(coeff, &dg),
                    None => fallback = true,
                }
            }
            Ok(ForceEval {
                force,
                diss_f: diss,
                fallback,
            })
        }
        ForceVariant::GEquivariant => g_equivariant_force(sys, cfg, x, y, policy),
    }
}

/// Solution of the 2×2 stationarity systems for a caller-supplied metric.
/// The α coefficients are metric-independent; the multipliers are not.
#[derive(Clone, Copy, Debug)]
pub struct ForceMultipliers {
    pub alpha_cons: f64,
    pub lambda_cons: f64,
    pub alpha_diss: f64,
    pub lambda_diss: f64,
}

/// Solves the force-level stationarity systems
/// [[A11, A12], [A12, 0]] (α, λ) = (b1, 2C̃) (and the dissipative
/// counterpart) for the given metric. Diagnostic only; never used by the
/// stepping.
pub fn force_multipliers<S: SystemModel + ?Sized>(
    sys: &S,
    cfg: &DissipationConfig,
    x: &Vector,
    y: &Vector,
    metric: &SymMatrix,
) -> Result<ForceMultipliers> {
    let gx = sys.grad_potential(x);
    let gy = sys.grad_potential(y);
    let ga = midpoint(&gx, &gy);
    let gm = sys.grad_potential(&midpoint(x, y));
    let dq = y - x;
    let dg = &gy - &gx;
    let a11 = 0.5 * weighted_norm_sq(&dg, metric)?;
    let a12 = dg.dot(&dq);
    let b1 = dg.dot(&metric.matvec(&(&gm - &ga)));
    let system = Matrix::from_rows(&[vec![a11, a12], vec![a12, 0.0]]);
    let cons = solve_general(
        &system,
        &Vector::from_slice(&[b1, 2.0 * conservation_fn(sys, x, y)]),
    )?;
    let diss = solve_general(
        &system,
        &Vector::from_slice(&[0.0, 2.0 * dissipation_fn_f(cfg, x, y)]),
    )?;
    Ok(ForceMultipliers {
        alpha_cons: cons[0],
        lambda_cons: cons[1],
        alpha_diss: diss[0],
        lambda_diss: diss[1],
    })
}

/// Solves the velocity-level stationarity system
/// [[2T(w), ΔT], [ΔT, 0]] (β, μ) = (0, D̃_s). Diagnostic only.
pub fn velocity_multipliers(
    mass: &SymMatrix,
    cfg: &DissipationConfig,
    u: &Vector,
    v: &Vector,
) -> Result<(f64, f64)> {
    let w = midpoint(u, v);
    let a11 = 2.0 * kinetic_energy(mass, &w);
    let a12 = kinetic_energy(mass, v) - kinetic_energy(mass, u);
    let system = Matrix::from_rows(&[vec![a11, a12], vec![a12, 0.0]]);
    let sol = solve_general(
        &system,
        &Vector::from_slice(&[0.0, dissipation_fn_s(cfg, mass, u, v)]),
    )?;
    Ok((sol[0], sol[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::translation_generator;
    use crate::systems::{Spring, SpringNetwork3D};

    /// V(q) = q⁴/4, one dof.
    struct Quartic1D {
        mass: SymMatrix,
    }

    impl Quartic1D {
        fn new() -> Self {
            Quartic1D {
                mass: SymMatrix::identity(1),
            }
        }
    }

    impl SystemModel for Quartic1D {
        fn dim(&self) -> usize {
            1
        }
        fn mass(&self) -> &SymMatrix {
            &self.mass
        }
        fn potential(&self, q: &Vector) -> f64 {
            0.25 * q[0].powi(4)
        }
        fn grad_potential(&self, q: &Vector) -> Vector {
            Vector::from_slice(&[q[0].powi(3)])
        }
    }

    /// V(q) = q₁⁴/4 + q₁²q₂²/2, two dof. Non-quadratic and coupled, so the
    /// averaged-force and midpoint-force corrections genuinely differ.
    struct Quartic2D {
        mass: SymMatrix,
    }

    impl Quartic2D {
        fn new() -> Self {
            Quartic2D {
                mass: SymMatrix::identity(2),
            }
        }
    }

    impl SystemModel for Quartic2D {
        fn dim(&self) -> usize {
            2
        }
        fn mass(&self) -> &SymMatrix {
            &self.mass
        }
        fn potential(&self, q: &Vector) -> f64 {
            0.25 * q[0].powi(4) + 0.5 * q[0] * q[0] * q[1] * q[1]
        }
        fn grad_potential(&self, q: &Vector) -> Vector {
            Vector::from_slice(&[
                q[0].powi(3) + q[0] * q[1] * q[1],
                q[0] * q[0] * q[1],
            ])
        }
    }

    fn unit_interval() -> (Vector, Vector) {
        (Vector::from_slice(&[0.0]), Vector::from_slice(&[1.0]))
    }

    #[test]
    fn conservation_fn_quartic_oracle() {
        // g_a = (0 + 1)/2, ΔV = 1/4 → C̃ = 1/4 − 1/2 = −1/4
        let sys = Quartic1D::new();
        let (x, y) = unit_interval();
        assert_eq!(conservation_fn(&sys, &x, &y), -0.25);
    }

    #[test]
    fn conservative_force_quartic_oracle() {
        // f = 1/2 + (−1/4)/1 · 1 = 1/4 = ΔV/Δq, the unique 1D value
        let sys = Quartic1D::new();
        let (x, y) = unit_interval();
        let f = conservative_force(&sys, &x, &y, &DegeneracyPolicy::default()).unwrap();
        assert!((f[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn alpha_coefficients_quartic_oracle() {
        // α_cons = 2C̃/⟨Δg, Δq⟩ = −1/2; with χ_f = 1, h = 1, D = I:
        // D̃ = ‖Δq‖²/2 = 1/2 → α_diss = 1
        let sys = Quartic1D::new();
        let (x, y) = unit_interval();
        let cfg = DissipationConfig::new(1.0, 0.0, SymMatrix::identity(1), 1.0);
        let (ac, ad) = alpha_coefficients(&sys, &cfg, &x, &y, &DegeneracyPolicy::default()).unwrap();
        assert!((ac + 0.5).abs() < 1e-15);
        assert!((ad - 1.0).abs() < 1e-15);
    }

    #[test]
    fn combined_force_satisfies_directionality_with_dissipation() {
        // D̃_f = 1/2 → f = 1/2 + (−1/4 + 1/2) = 3/4 and ⟨f, Δq⟩ = ΔV + D̃_f
        let sys = Quartic1D::new();
        let (x, y) = unit_interval();
        let cfg = DissipationConfig::new(1.0, 0.0, SymMatrix::identity(1), 1.0);
        let f = combined_force(&sys, &cfg, &x, &y, &DegeneracyPolicy::default()).unwrap();
        assert!((f[0] - 0.75).abs() < 1e-15);
        let lhs = f.dot(&(&y - &x));
        let rhs = sys.potential(&y) - sys.potential(&x) + dissipation_fn_f(&cfg, &x, &y);
        assert!((lhs - rhs).abs() < 1e-15);
    }

    #[test]
    fn gonzalez_one_d_agrees_with_unique_discrete_derivative() {
        let sys = Quartic1D::new();
        let (x, y) = unit_interval();
        let f = gonzalez_force(&sys, &x, &y, &SymMatrix::identity(1), &DegeneracyPolicy::default())
            .unwrap();
        assert!((f[0] - 0.25).abs() < 1e-15);
        let dd = one_d_discrete_derivative(|q| 0.25 * q * q * q * q, 0.0, 1.0);
        assert!((f[0] - dd).abs() < 1e-15);
    }

    #[test]
    fn gonzalez_and_corrected_average_differ_in_2d() {
        let sys = Quartic2D::new();
        let x = Vector::from_slice(&[0.2, -0.3]);
        let y = Vector::from_slice(&[0.9, 0.4]);
        let policy = DegeneracyPolicy::default();
        let fa = conservative_force(&sys, &x, &y, &policy).unwrap();
        let fg = gonzalez_force(&sys, &x, &y, &SymMatrix::identity(2), &policy).unwrap();
        // both satisfy directionality …
        let dv = sys.potential(&y) - sys.potential(&x);
        let dq = &y - &x;
        assert!((fa.dot(&dq) - dv).abs() < 1e-14);
        assert!((fg.dot(&dq) - dv).abs() < 1e-14);
        // … but are different vectors
        assert!((&fa - &fg).norm() > 1e-3);
    }

    #[test]
    fn gonzalez_metric_changes_force_but_not_directionality() {
        let sys = Quartic2D::new();
        let x = Vector::from_slice(&[0.2, -0.3]);
        let y = Vector::from_slice(&[0.9, 0.4]);
        let policy = DegeneracyPolicy::default();
        let metric = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let fg = gonzalez_force(&sys, &x, &y, &metric, &policy).unwrap();
        let fe = gonzalez_force(&sys, &x, &y, &SymMatrix::identity(2), &policy).unwrap();
        let dv = sys.potential(&y) - sys.potential(&x);
        assert!((fg.dot(&(&y - &x)) - dv).abs() < 1e-14);
        assert!((&fg - &fe).norm() > 1e-6);
    }

    #[test]
    fn degenerate_pair_falls_back_or_errors() {
        let sys = Quartic1D::new();
        let x = Vector::from_slice(&[0.5]);
        let y = Vector::from_slice(&[0.5]);
        let f = conservative_force(&sys, &x, &y, &DegeneracyPolicy::default()).unwrap();
        assert!((f[0] - 0.125).abs() < 1e-15); // g_a = g(0.5) = 0.125
        assert!(matches!(
            conservative_force(&sys, &x, &y, &DegeneracyPolicy::strict()),
            Err(DgradError::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn dissipation_fn_values() {
        let cfg = DissipationConfig::new(0.004, 0.0, SymMatrix::diagonal(&[2.0, 3.0]), 0.1);
        let x = Vector::from_slice(&[0.0, 0.0]);
        let y = Vector::from_slice(&[0.1, -0.2]);
        // (0.004/0.2)(2·0.01 + 3·0.04) = 0.02·0.14 = 2.8e-3
        assert!((dissipation_fn_f(&cfg, &x, &y) - 2.8e-3).abs() < 1e-17);

        let m = SymMatrix::identity(1);
        let cfg_s = DissipationConfig::new(0.0, 2.0, SymMatrix::zeros(0), 1.0);
        let u = Vector::from_slice(&[1.0]);
        let v = Vector::from_slice(&[3.0]);
        // √T = |s|/√2 → D̃_s = 2·(3 − 1)²/2 = 4
        assert!((dissipation_fn_s(&cfg_s, &m, &u, &v) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn velocity_beta_matches_quotient_identity() {
        // β = D̃_s / ΔT whenever ΔT ≠ 0
        let m = SymMatrix::identity(1);
        let cfg = DissipationConfig::new(0.0, 2.0, SymMatrix::zeros(0), 1.0);
        let u = Vector::from_slice(&[1.0]);
        let v = Vector::from_slice(&[3.0]);
        let beta = velocity_beta(&m, &cfg, &u, &v);
        let dt_kin = kinetic_energy(&m, &v) - kinetic_energy(&m, &u);
        let ds = dissipation_fn_s(&cfg, &m, &u, &v);
        assert!((beta - ds / dt_kin).abs() < 1e-14);
        assert!((beta - 1.0).abs() < 1e-14);
        // 𝗌 = (1 + β)(u + v)/2 = 2 · 2 = 4
        let s = algorithmic_velocity(&m, &cfg, &u, &v);
        assert!((s[0] - 4.0).abs() < 1e-14);
        // equal kinetic energies → β = 0 even for opposite velocities
        let w = Vector::from_slice(&[-1.0]);
        assert_eq!(velocity_beta(&m, &cfg, &u, &w), 0.0);
    }

    #[test]
    fn algorithmic_velocity_generic_matches_stabilized_form() {
        let m = SymMatrix::identity(2);
        let cfg = DissipationConfig::new(0.0, 0.5, SymMatrix::zeros(0), 0.01);
        let u = Vector::from_slice(&[1.0, -2.0]);
        let v = Vector::from_slice(&[0.4, 1.3]);
        let s_closed = algorithmic_velocity(&m, &cfg, &u, &v);
        let s_generic =
            algorithmic_velocity_generic(&m, &u, &v, |a, b| dissipation_fn_s(&cfg, &m, a, b));
        assert!((&s_closed - &s_generic).norm() < 1e-12);
    }

    #[test]
    fn one_d_discrete_derivative_coincident_limit() {
        let dd = one_d_discrete_derivative(|q| q * q * q, 2.0, 2.0);
        assert!((dd - 12.0).abs() < 1e-6);
    }

    fn two_particle_spring() -> SpringNetwork3D {
        SpringNetwork3D::new(
            vec![1.0, 2.0],
            vec![Spring {
                i: 0,
                j: 1,
                stiffness: 3.0,
                rest_length: 1.0,
            }],
            None,
        )
        .unwrap()
    }

    #[test]
    fn g_equivariant_force_directionality_and_symmetry() {
        let sys = two_particle_spring();
        let x = Vector::from_slice(&[0.0, 0.0, 0.0, 1.1, 0.0, 0.0]);
        let y = Vector::from_slice(&[0.05, -0.02, 0.0, 1.3, 0.1, -0.04]);
        let policy = DegeneracyPolicy::default();
        let f = g_equivariant_force(&sys, &DissipationConfig::conservative(), &x, &y, &policy)
            .unwrap();
        assert!(!f.fallback);
        let dq = &y - &x;
        let dv = sys.potential(&y) - sys.potential(&x);
        assert!((f.force.dot(&dq) - dv).abs() < 1e-13);
        // translation generators are annihilated exactly
        for a in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            assert!(f.force.dot(&translation_generator(2, a)).abs() < 1e-13);
        }
        // rotation generators at the midpoint configuration as well
        let z = (&(&x + &y)).scale(0.5);
        for a in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            let rho = crate::model::rotation_generator(&z, a);
            assert!(f.force.dot(&rho).abs() < 1e-13);
        }
    }

    #[test]
    fn g_equivariant_dissipative_force_keeps_symmetry() {
        let sys = two_particle_spring();
        let x = Vector::from_slice(&[0.0, 0.0, 0.0, 1.1, 0.0, 0.0]);
        let y = Vector::from_slice(&[0.05, -0.02, 0.0, 1.3, 0.1, -0.04]);
        let cfg = DissipationConfig::new(0.01, 0.0, SymMatrix::identity(1), 1e-3);
        let f = g_equivariant_force(&sys, &cfg, &x, &y, &DegeneracyPolicy::default()).unwrap();
        assert!(f.diss_f > 0.0);
        let dq = &y - &x;
        let dv = sys.potential(&y) - sys.potential(&x);
        assert!((f.force.dot(&dq) - (dv + f.diss_f)).abs() < 1e-12);
        let z = (&(&x + &y)).scale(0.5);
        for a in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] {
            assert!(f.force.dot(&translation_generator(2, a)).abs() < 1e-12);
            assert!(f.force.dot(&crate::model::rotation_generator(&z, a)).abs() < 1e-12);
        }
    }

    #[test]
    fn g_equivariant_requires_symmetry_data() {
        let sys = Quartic2D::new();
        let x = Vector::from_slice(&[0.1, 0.2]);
        let y = Vector::from_slice(&[0.3, 0.4]);
        assert!(matches!(
            g_equivariant_force(
                &sys,
                &DissipationConfig::conservative(),
                &x,
                &y,
                &DegeneracyPolicy::default()
            ),
            Err(DgradError::MissingSymmetryData)
        ));
    }

    #[test]
    fn force_multiplier_alpha_is_metric_independent() {
        let sys = Quartic2D::new();
        let x = Vector::from_slice(&[0.2, -0.3]);
        let y = Vector::from_slice(&[0.9, 0.4]);
        let cfg = DissipationConfig::new(0.01, 0.0, SymMatrix::identity(2), 1e-2);
        let metrics = [
            SymMatrix::identity(2),
            SymMatrix::diagonal(&[3.0, 0.5]),
            SymMatrix::from_rows(&[vec![2.0, 0.7], vec![0.7, 1.5]]),
        ];
        let (a_cons, a_diss) =
            alpha_coefficients(&sys, &cfg, &x, &y, &DegeneracyPolicy::default()).unwrap();
        let mut lambdas = Vec::new();
        for metric in &metrics {
            let m = force_multipliers(&sys, &cfg, &x, &y, metric).unwrap();
            assert!((m.alpha_cons - a_cons).abs() < 1e-12, "alpha varies with metric");
            assert!((m.alpha_diss - a_diss).abs() < 1e-12);
            lambdas.push(m.lambda_cons);
        }
        // the multiplier, by contrast, depends on the metric
        assert!((lambdas[0] - lambdas[1]).abs() > 1e-9);
    }

    #[test]
    fn velocity_multiplier_system() {
        let m = SymMatrix::identity(1);
        let cfg = DissipationConfig::new(0.0, 2.0, SymMatrix::zeros(0), 1.0);
        let u = Vector::from_slice(&[1.0]);
        let v = Vector::from_slice(&[3.0]);
        let (beta, mu) = velocity_multipliers(&m, &cfg, &u, &v).unwrap();
        assert!((beta - velocity_beta(&m, &cfg, &u, &v)).abs() < 1e-13);
        // stationarity row 1: 2T(w)β + ΔT·μ = 0 with T(w) = 2, ΔT = 4
        assert!((4.0 * beta + 4.0 * mu).abs() < 1e-13);
    }

    #[test]
    fn algorithmic_force_dispatch() {
        let sys = Quartic1D::new();
        let (x, y) = unit_interval();
        let policy = DegeneracyPolicy::default();
        let cfg = DissipationConfig::new(1.0, 0.0, SymMatrix::identity(1), 1.0);
        let mk = |variant| ForceScheme {
            variant,
            dissipation: cfg.clone(),
        };
        let avg = algorithmic_force(&sys, &mk(ForceVariant::Average), &x, &y, &policy).unwrap();
        assert!((avg.force[0] - 0.5).abs() < 1e-15 && avg.diss_f == 0.0);
        let mid = algorithmic_force(&sys, &mk(ForceVariant::Midpoint), &x, &y, &policy).unwrap();
        assert!((mid.force[0] - 0.125).abs() < 1e-15);
        let new = algorithmic_force(&sys, &mk(ForceVariant::NewConservative), &x, &y, &policy)
            .unwrap();
        assert!((new.force[0] - 0.75).abs() < 1e-15 && (new.diss_f - 0.5).abs() < 1e-15);
        let gon = algorithmic_force(&sys, &mk(ForceVariant::Gonzalez), &x, &y, &policy).unwrap();
        // 1/4 from the conserving part + D̃/⟨Δg,Δq⟩·Δg = 1/2
        assert!((gon.force[0] - 0.75).abs() < 1e-15);
    }
}
