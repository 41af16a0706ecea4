//! Mechanical system abstraction: state, mass, potential, loads, symmetry.
//!
//! Sign convention: `grad_potential` returns g(q) = +∇V(q). The discrete
//! force built from g satisfies ⟨f, Δq⟩ = ΔV and enters the coordinate
//! residual as M s̈ + f − f_ext = 0, which yields the exact discrete energy
//! balance ΔT + ΔV = W_ext for conservative steps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{Cholesky, Matrix, SymMatrix, Vector};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("load schedule breakpoints must be strictly increasing in t")]
    BreakpointsNotIncreasing,
    #[error("load schedule base force dimension {0} does not match system dimension {1}")]
    LoadDimensionMismatch(usize, usize),
}

/// Generalized coordinates and velocities at one time instant.
#[derive(Clone, Debug)]
pub struct State {
    pub q: Vector,
    pub s: Vector,
    pub t: f64,
}

impl State {
    pub fn new(q: Vector, s: Vector, t: f64) -> Self {
        assert_eq!(q.dim(), s.dim(), "state: dim(q) != dim(s)");
        State { q, s, t }
    }

    /// Stacked (q, s) vector, the state used by the precision quotients.
    pub fn stacked(&self) -> Vector {
        self.q.stacked(&self.s)
    }
}

/// Kinetic energy T(s) = ½ sᵀ M s.
pub fn kinetic_energy(mass: &SymMatrix, s: &Vector) -> f64 {
    0.5 * s.dot(&mass.matvec(s))
}

/// Symmetry structure of a G-invariant potential: quadratic invariants Π,
/// their Jacobian, and the reduced potential Ṽ with V = Ṽ ∘ Π.
pub trait SymmetryData: Send + Sync {
    fn invariant_dim(&self) -> usize;
    fn invariant_map(&self, q: &Vector) -> Vector;
    /// DΠ(q), an invariant_dim × n matrix.
    fn invariant_jacobian(&self, q: &Vector) -> Matrix;
    fn reduced_potential(&self, pi: &Vector) -> f64;
    fn reduced_grad(&self, pi: &Vector) -> Vector;
}

/// The mechanical problem definition.
///
/// Implementations must be pure and stateless after construction so that
/// parameter sweeps can evaluate them concurrently.
pub trait SystemModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Constant, symmetric positive-definite mass matrix.
    fn mass(&self) -> &SymMatrix;

    fn potential(&self, q: &Vector) -> f64;

    /// g(q) = +∇V(q).
    fn grad_potential(&self, q: &Vector) -> Vector;

    fn external_force(&self, _q: &Vector, _t: f64) -> Vector {
        Vector::zeros(self.dim())
    }

    fn symmetry(&self) -> Option<&dyn SymmetryData> {
        None
    }

    /// For ambient-space particle systems (Q = ℝ^{3n}): the particle count.
    fn particle_count(&self) -> Option<usize> {
        None
    }

    fn analytic_hessian(&self, _q: &Vector) -> Option<SymMatrix> {
        None
    }
}

/// Infinitesimal translation generator on ℝ^{3n}: the n-fold stack of `a`.
pub fn translation_generator(n_particles: usize, a: [f64; 3]) -> Vector {
    let mut v = Vector::zeros(3 * n_particles);
    for i in 0..n_particles {
        v[3 * i] = a[0];
        v[3 * i + 1] = a[1];
        v[3 * i + 2] = a[2];
    }
    v
}

/// Infinitesimal rotation generator on ℝ^{3n}: the stack of θ × q_i.
pub fn rotation_generator(q: &Vector, theta: [f64; 3]) -> Vector {
    assert_eq!(q.dim() % 3, 0, "rotation generator needs Q = R^{{3n}}");
    let n = q.dim() / 3;
    let mut v = Vector::zeros(3 * n);
    for i in 0..n {
        let (x, y, z) = (q[3 * i], q[3 * i + 1], q[3 * i + 2]);
        v[3 * i] = theta[1] * z - theta[2] * y;
        v[3 * i + 1] = theta[2] * x - theta[0] * z;
        v[3 * i + 2] = theta[0] * y - theta[1] * x;
    }
    v
}

/// External load f_ext(t) = f(t) · f₀ with piecewise-linear scaling f(t).
#[derive(Clone, Debug)]
pub struct LoadSchedule {
    base_force: Vector,
    breakpoints: Vec<(f64, f64)>,
}

impl LoadSchedule {
    pub fn new(base_force: Vector, breakpoints: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(ModelError::BreakpointsNotIncreasing);
        }
        Ok(LoadSchedule {
            base_force,
            breakpoints,
        })
    }

    pub fn base_force(&self) -> &Vector {
        &self.base_force
    }

    /// Time at which the load vanishes for good.
    pub fn end_time(&self) -> f64 {
        self.breakpoints.last().map(|b| b.0).unwrap_or(0.0)
    }

    /// Scaling factor: linear interpolation between breakpoints, the first
    /// value before the first breakpoint, zero after the last.
    pub fn scale_at(&self, t: f64) -> f64 {
        match self.breakpoints.as_slice() {
            [] => 0.0,
            [first, ..] if t <= first.0 => first.1,
            bps => {
                let last = bps.last().unwrap();
                if t >= last.0 {
                    return 0.0;
                }
                let k = bps.partition_point(|b| b.0 <= t);
                let (t0, f0) = bps[k - 1];
                let (t1, f1) = bps[k];
                f0 + (f1 - f0) * (t - t0) / (t1 - t0)
            }
        }
    }

    pub fn eval(&self, t: f64) -> Vector {
        self.base_force.scale(self.scale_at(t))
    }
}

/// One gradient-vs-finite-difference or symmetry-consistency failure.
#[derive(Debug, Clone)]
pub struct Violation {
    pub what: String,
    pub detail: String,
}

/// Checks the internal consistency of a system model: SPD mass, gradient
/// against central finite differences of V at random points, and, if
/// symmetry data is present, V = Ṽ∘Π and the chain rule DΠᵀ·∇Ṽ = ∇V.
pub fn validate_system(sys: &dyn SystemModel, seed: u64) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = sys.dim();

    if let Err(e) = Cholesky::new(sys.mass()) {
        out.push(Violation {
            what: "mass matrix not SPD".into(),
            detail: e.to_string(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for point in 0..10 {
        let mut q = Vector::zeros(n);
        for i in 0..n {
            q[i] = rng.gen_range(-1.0..1.0);
        }
        let g = sys.grad_potential(&q);
        let scale = q.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let eps = 1e-6 * scale;
        for i in 0..n {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += eps;
            qm[i] -= eps;
            let fd = (sys.potential(&qp) - sys.potential(&qm)) / (2.0 * eps);
            let denom = g[i].abs().max(fd.abs()).max(1.0);
            if (fd - g[i]).abs() / denom > 1e-5 {
                out.push(Violation {
                    what: "gradient mismatch".into(),
                    detail: format!(
                        "point {point}, component {i}: analytic {} vs finite-difference {fd}",
                        g[i]
                    ),
                });
            }
        }
        if let Some(sym) = sys.symmetry() {
            let pi = sym.invariant_map(&q);
            let v_red = sym.reduced_potential(&pi);
            let v = sys.potential(&q);
            if (v - v_red).abs() > 1e-9 * v.abs().max(1.0) {
                out.push(Violation {
                    what: "reduced potential mismatch".into(),
                    detail: format!("point {point}: V = {v}, Ṽ∘Π = {v_red}"),
                });
            }
            let chained = sym
                .invariant_jacobian(&q)
                .transpose_matvec(&sym.reduced_grad(&pi));
            let err = (&chained - &g).norm();
            if err > 1e-9 * g.norm().max(1.0) {
                out.push(Violation {
                    what: "symmetry chain rule mismatch".into(),
                    detail: format!("point {point}: ‖DΠᵀ∇Ṽ − ∇V‖ = {err}"),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn load_schedule_triangular_pulse() {
        let f0 = Vector::from_slice(&[1.0, 2.0]);
        let sched =
            LoadSchedule::new(f0, vec![(0.0, 0.0), (0.5, 5.0), (1.0, 0.0)]).unwrap();
        let f = sched.eval(0.25);
        assert!((f[0] - 2.5).abs() < 1e-15 && (f[1] - 5.0).abs() < 1e-15);
        assert_eq!(sched.eval(2.0).as_slice(), &[0.0, 0.0]);
        assert_eq!(sched.eval(0.0).as_slice(), &[0.0, 0.0]);
        assert!((sched.scale_at(0.75) - 2.5).abs() < 1e-15);
        assert_eq!(sched.end_time(), 1.0);
    }

    #[test]
    fn load_schedule_rejects_unordered_breakpoints() {
        let f0 = Vector::from_slice(&[1.0]);
        assert!(LoadSchedule::new(f0, vec![(0.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn generators_shape() {
        let tau = translation_generator(2, [1.0, 2.0, 3.0]);
        assert_eq!(tau.as_slice(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let q = Vector::from_slice(&[1.0, 0.0, 0.0]);
        let rho = rotation_generator(&q, [0.0, 0.0, 1.0]);
        // e_z × e_x = e_y
        assert_eq!(rho.as_slice(), &[0.0, 1.0, 0.0]);
    }
}
