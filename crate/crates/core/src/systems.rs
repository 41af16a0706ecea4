//! System catalog: the two-mass polynomial and non-polynomial benchmark
//! oscillators, a linear oscillator with an exact solution, and a 3D
//! spring network with translation/rotation symmetry data.

use thiserror::Error;

use crate::dgrad::DissipationConfig;
use crate::integrator::SolverConfig;
use crate::linalg::{sym_eigen, Cholesky, Matrix, SymMatrix, Vector};
use crate::model::{LoadSchedule, State, SymmetryData, SystemModel};

#[derive(Debug, Error)]
pub enum SystemsError {
    #[error("spring {index} references particle {particle}, but the network has {count}")]
    BadTopology {
        index: usize,
        particle: usize,
        count: usize,
    },
    #[error("tensor data has length {0}, expected {1}")]
    BadTensorLength(usize, usize),
}

fn symmetrize3(n: usize, raw: &[f64]) -> Vec<f64> {
    let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut out = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let s = raw[idx(a, b, c)]
                    + raw[idx(a, c, b)]
                    + raw[idx(b, a, c)]
                    + raw[idx(b, c, a)]
                    + raw[idx(c, a, b)]
                    + raw[idx(c, b, a)];
                out[idx(a, b, c)] = s / 6.0;
            }
        }
    }
    out
}

fn symmetrize4(n: usize, raw: &[f64]) -> Vec<f64> {
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    let mut out = vec![0.0; n * n * n * n];
    let perms: [[usize; 4]; 24] = {
        let mut p = [[0usize; 4]; 24];
        let mut k = 0;
        for i in 0..4 {
            for j in 0..4 {
                if j == i {
                    continue;
                }
                for l in 0..4 {
                    if l == i || l == j {
                        continue;
                    }
                    let m = 6 - i - j - l;
                    p[k] = [i, j, l, m];
                    k += 1;
                }
            }
        }
        p
    };
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let t = [a, b, c, d];
                    let mut s = 0.0;
                    for p in &perms {
                        s += raw[idx(t[p[0]], t[p[1]], t[p[2]], t[p[3]])];
                    }
                    out[idx(a, b, c, d)] = s / 24.0;
                }
            }
        }
    }
    out
}

/// Polynomial oscillator with quadratic, cubic and quartic stiffness:
/// V(q) = ½ V²_ab q^a q^b + ⅓ V³_abc q^a q^b q^c + ¼ V⁴_abcd q^a q^b q^c q^d.
/// Tensors are symmetrized at construction.
pub struct TwoMassPolynomial {
    n: usize,
    mass: SymMatrix,
    v2: SymMatrix,
    v3: Vec<f64>,
    v4: Vec<f64>,
}

impl TwoMassPolynomial {
    pub fn new(
        mass: SymMatrix,
        v2: SymMatrix,
        v3: &[f64],
        v4: &[f64],
    ) -> Result<Self, SystemsError> {
        let n = mass.dim();
        if v3.len() != n * n * n {
            return Err(SystemsError::BadTensorLength(v3.len(), n * n * n));
        }
        if v4.len() != n * n * n * n {
            return Err(SystemsError::BadTensorLength(v4.len(), n * n * n * n));
        }
        Ok(TwoMassPolynomial {
            n,
            mass,
            v2,
            v3: symmetrize3(n, v3),
            v4: symmetrize4(n, v4),
        })
    }

    fn i3(&self, a: usize, b: usize, c: usize) -> f64 {
        self.v3[(a * self.n + b) * self.n + c]
    }

    fn i4(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        self.v4[((a * self.n + b) * self.n + c) * self.n + d]
    }
}

impl SystemModel for TwoMassPolynomial {
    fn dim(&self) -> usize {
        self.n
    }

    fn mass(&self) -> &SymMatrix {
        &self.mass
    }

    fn potential(&self, q: &Vector) -> f64 {
        let n = self.n;
        let mut v = 0.5 * q.dot(&self.v2.matvec(q));
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let qc = q[a] * q[b] * q[c];
                    v += self.i3(a, b, c) * qc / 3.0;
                    for d in 0..n {
                        v += self.i4(a, b, c, d) * qc * q[d] / 4.0;
                    }
                }
            }
        }
        v
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        let n = self.n;
        let mut g = self.v2.matvec(q);
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..n {
                for c in 0..n {
                    acc += self.i3(a, b, c) * q[b] * q[c];
                    for d in 0..n {
                        acc += self.i4(a, b, c, d) * q[b] * q[c] * q[d];
                    }
                }
            }
            g[a] += acc;
        }
        g
    }

    fn analytic_hessian(&self, q: &Vector) -> Option<SymMatrix> {
        let n = self.n;
        let mut h = self.v2.clone();
        for a in 0..n {
            for b in a..n {
                let mut acc = 0.0;
                for c in 0..n {
                    acc += 2.0 * self.i3(a, b, c) * q[c];
                    for d in 0..n {
                        acc += 3.0 * self.i4(a, b, c, d) * q[c] * q[d];
                    }
                }
                h.set(a, b, h.get(a, b) + acc);
            }
        }
        Some(h)
    }
}

/// Non-polynomial oscillator:
/// V(q) = ½ qᵀV²q + (qᵀV^N q)(1 + qᵀV^D q)^{−n}.
pub struct TwoMassNonPolynomial {
    mass: SymMatrix,
    v2: SymMatrix,
    vn: SymMatrix,
    vd: SymMatrix,
    n_exp: i32,
}

impl TwoMassNonPolynomial {
    pub fn new(mass: SymMatrix, v2: SymMatrix, vn: SymMatrix, vd: SymMatrix, n_exp: i32) -> Self {
        TwoMassNonPolynomial {
            mass,
            v2,
            vn,
            vd,
            n_exp,
        }
    }
}

impl SystemModel for TwoMassNonPolynomial {
    fn dim(&self) -> usize {
        self.mass.dim()
    }

    fn mass(&self) -> &SymMatrix {
        &self.mass
    }

    fn potential(&self, q: &Vector) -> f64 {
        let num = q.dot(&self.vn.matvec(q));
        let u = q.dot(&self.vd.matvec(q));
        0.5 * q.dot(&self.v2.matvec(q)) + num * (1.0 + u).powi(-self.n_exp)
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        let num = q.dot(&self.vn.matvec(q));
        let u = q.dot(&self.vd.matvec(q));
        let phi = (1.0 + u).powi(-self.n_exp);
        let dphi = -(self.n_exp as f64) * (1.0 + u).powi(-self.n_exp - 1);
        let mut g = self.v2.matvec(q);
        g.axpy(2.0 * phi, &self.vn.matvec(q));
        g.axpy(2.0 * num * dphi, &self.vd.matvec(q));
        g
    }
}

/// Linear oscillator M q̈ + K q = 0 with an exact modal solution, used as
/// the reference for the exact-solution precision quotient.
pub struct LinearOscillator {
    mass: SymMatrix,
    stiffness: SymMatrix,
    chol: Cholesky,
    /// eigenvalues of L⁻¹ K L⁻ᵀ (squared natural frequencies)
    omega2: Vec<f64>,
    /// orthonormal eigenvectors, columns of Q
    modes: Matrix,
}

impl LinearOscillator {
    pub fn new(mass: SymMatrix, stiffness: SymMatrix) -> Result<Self, crate::linalg::LinalgError> {
        let n = mass.dim();
        let chol = Cholesky::new(&mass)?;
        // B = L⁻¹ K L⁻ᵀ, built column by column
        let mut b = SymMatrix::zeros(n);
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = Vector::zeros(n);
            e[j] = 1.0;
            cols.push(chol.solve_lower_t(&e)); // columns of L⁻ᵀ
        }
        for j in 0..n {
            let kc = stiffness.matvec(&cols[j]);
            let bj = chol.solve_lower(&kc);
            for i in 0..=j {
                b.set(i, j, bj[i]);
            }
        }
        let (omega2, modes) = sym_eigen(&b);
        Ok(LinearOscillator {
            mass,
            stiffness,
            chol,
            omega2,
            modes,
        })
    }

    /// Modal coordinates z with q = L⁻ᵀ Q z.
    fn to_modal(&self, q: &Vector) -> Vector {
        // z = Qᵀ Lᵀ q
        let n = self.mass.dim();
        let lt_q = {
            let l = self.chol.factor();
            let mut out = Vector::zeros(n);
            for i in 0..n {
                let mut s = 0.0;
                for k in i..n {
                    s += l.get(k, i) * q[k];
                }
                out[i] = s;
            }
            out
        };
        self.modes.transpose_matvec(&lt_q)
    }

    fn from_modal(&self, z: &Vector) -> Vector {
        self.chol.solve_lower_t(&self.modes.matvec(z))
    }

    /// Exact state at time `initial.t + dt`.
    pub fn analytic_state(&self, initial: &State, dt: f64) -> State {
        let zq = self.to_modal(&initial.q);
        let zs = self.to_modal(&initial.s);
        let n = self.mass.dim();
        let mut zq1 = Vector::zeros(n);
        let mut zs1 = Vector::zeros(n);
        for i in 0..n {
            let w2 = self.omega2[i];
            if w2 > 1e-14 {
                let w = w2.sqrt();
                let (sin, cos) = (w * dt).sin_cos();
                zq1[i] = zq[i] * cos + zs[i] / w * sin;
                zs1[i] = -zq[i] * w * sin + zs[i] * cos;
            } else {
                // rigid mode
                zq1[i] = zq[i] + zs[i] * dt;
                zs1[i] = zs[i];
            }
        }
        State::new(self.from_modal(&zq1), self.from_modal(&zs1), initial.t + dt)
    }
}

impl SystemModel for LinearOscillator {
    fn dim(&self) -> usize {
        self.mass.dim()
    }

    fn mass(&self) -> &SymMatrix {
        &self.mass
    }

    fn potential(&self, q: &Vector) -> f64 {
        0.5 * q.dot(&self.stiffness.matvec(q))
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        self.stiffness.matvec(q)
    }

    fn analytic_hessian(&self, _q: &Vector) -> Option<SymMatrix> {
        Some(self.stiffness.clone())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Spring {
    pub i: usize,
    pub j: usize,
    pub stiffness: f64,
    pub rest_length: f64,
}

/// Network of point masses in ℝ³ joined by linear springs. The potential
/// depends on configurations only through the squared edge lengths
/// π_e = ‖q_i − q_j‖², which are the quadratic invariants of translations
/// and rotations; the symmetry data below expresses V through them.
pub struct SpringNetwork3D {
    masses: Vec<f64>,
    springs: Vec<Spring>,
    mass_matrix: SymMatrix,
    load: Option<LoadSchedule>,
    sym: SpringInvariants,
}

struct SpringInvariants {
    springs: Vec<Spring>,
}

impl SpringNetwork3D {
    pub fn new(
        masses: Vec<f64>,
        springs: Vec<Spring>,
        load: Option<LoadSchedule>,
    ) -> Result<Self, SystemsError> {
        let np = masses.len();
        for (index, sp) in springs.iter().enumerate() {
            for particle in [sp.i, sp.j] {
                if particle >= np {
                    return Err(SystemsError::BadTopology {
                        index,
                        particle,
                        count: np,
                    });
                }
            }
        }
        let mut diag = Vec::with_capacity(3 * np);
        for &m in &masses {
            diag.extend_from_slice(&[m, m, m]);
        }
        let mass_matrix = SymMatrix::diagonal(&diag);
        Ok(SpringNetwork3D {
            masses,
            springs: springs.clone(),
            mass_matrix,
            load,
            sym: SpringInvariants { springs },
        })
    }

    pub fn particle_masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn springs(&self) -> &[Spring] {
        &self.springs
    }
}

fn edge_vector(q: &Vector, sp: &Spring) -> [f64; 3] {
    [
        q[3 * sp.i] - q[3 * sp.j],
        q[3 * sp.i + 1] - q[3 * sp.j + 1],
        q[3 * sp.i + 2] - q[3 * sp.j + 2],
    ]
}

fn spring_energy(sp: &Spring, pi: f64) -> f64 {
    let len = pi.max(0.0).sqrt();
    0.5 * sp.stiffness * (len - sp.rest_length) * (len - sp.rest_length)
}

/// dṼ_e/dπ_e = (k/2)(1 − L/√π_e). Zero rest length is smooth at π_e = 0;
/// a collapsed spring with positive rest length has no defined force.
fn spring_reduced_grad(sp: &Spring, pi: f64) -> f64 {
    if sp.rest_length == 0.0 {
        return 0.5 * sp.stiffness;
    }
    assert!(
        pi > 1e-30,
        "spring collapse: edge ({}, {}) has zero length with rest length {}",
        sp.i,
        sp.j,
        sp.rest_length
    );
    0.5 * sp.stiffness * (1.0 - sp.rest_length / pi.sqrt())
}

impl SymmetryData for SpringInvariants {
    fn invariant_dim(&self) -> usize {
        self.springs.len()
    }

    fn invariant_map(&self, q: &Vector) -> Vector {
        let mut pi = Vector::zeros(self.springs.len());
        for (e, sp) in self.springs.iter().enumerate() {
            let d = edge_vector(q, sp);
            pi[e] = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        }
        pi
    }

    fn invariant_jacobian(&self, q: &Vector) -> Matrix {
        let mut jac = Matrix::zeros(self.springs.len(), q.dim());
        for (e, sp) in self.springs.iter().enumerate() {
            let d = edge_vector(q, sp);
            for a in 0..3 {
                jac.set(e, 3 * sp.i + a, 2.0 * d[a]);
                jac.set(e, 3 * sp.j + a, -2.0 * d[a]);
            }
        }
        jac
    }

    fn reduced_potential(&self, pi: &Vector) -> f64 {
        self.springs
            .iter()
            .enumerate()
            .map(|(e, sp)| spring_energy(sp, pi[e]))
            .sum()
    }

    fn reduced_grad(&self, pi: &Vector) -> Vector {
        let mut g = Vector::zeros(self.springs.len());
        for (e, sp) in self.springs.iter().enumerate() {
            g[e] = spring_reduced_grad(sp, pi[e]);
        }
        g
    }
}

impl SystemModel for SpringNetwork3D {
    fn dim(&self) -> usize {
        3 * self.masses.len()
    }

    fn mass(&self) -> &SymMatrix {
        &self.mass_matrix
    }

    fn potential(&self, q: &Vector) -> f64 {
        self.sym.reduced_potential(&self.sym.invariant_map(q))
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        let pi = self.sym.invariant_map(q);
        self.sym
            .invariant_jacobian(q)
            .transpose_matvec(&self.sym.reduced_grad(&pi))
    }

    fn external_force(&self, _q: &Vector, t: f64) -> Vector {
        match &self.load {
            Some(l) => l.eval(t),
            None => Vector::zeros(self.dim()),
        }
    }

    fn symmetry(&self) -> Option<&dyn SymmetryData> {
        Some(&self.sym)
    }

    fn particle_count(&self) -> Option<usize> {
        Some(self.masses.len())
    }
}

/// Benchmark setup: system, initial state, solver and dissipation settings.
pub struct Benchmark<S> {
    pub system: S,
    pub initial: State,
    pub solver: SolverConfig,
    pub dissipation: DissipationConfig,
    pub t_end: f64,
}

/// Two unit masses with coupled quadratic stiffness and one quartic
/// self-coupling; mild dissipation on both levels.
pub fn make_example1() -> Benchmark<TwoMassPolynomial> {
    let mass = SymMatrix::identity(2);
    let v2 = SymMatrix::from_rows(&[vec![16.0, -15.0], vec![-15.0, 16.0]]);
    let v3 = [0.0; 8];
    let mut v4 = [0.0; 16];
    v4[0] = 15.0; // V⁴_1111
    let system = TwoMassPolynomial::new(mass, v2.clone(), &v3, &v4).unwrap();
    let dt = 1e-3;
    let initial = State::new(
        Vector::from_slice(&[1.0, 0.918]),
        Vector::zeros(2),
        0.0,
    );
    Benchmark {
        system,
        initial,
        solver: SolverConfig::new(dt),
        dissipation: DissipationConfig::new(0.0025, 0.008, v2, dt),
        t_end: 50.0,
    }
}

/// Two unit masses with a rational non-polynomial coupling; stronger
/// nonlinearity, smaller step.
pub fn make_example2() -> Benchmark<TwoMassNonPolynomial> {
    let mass = SymMatrix::identity(2);
    let v2 = SymMatrix::diagonal(&[10.0, 10.0]);
    let vn = SymMatrix::from_rows(&[vec![300.0, -300.0], vec![-300.0, 300.0]]);
    let vd = SymMatrix::from_rows(&[vec![5.0, -5.0], vec![-5.0, 5.0]]);
    let system = TwoMassNonPolynomial::new(mass, v2.clone(), vn, vd, 3);
    let dt = 1e-4;
    let initial = State::new(
        Vector::from_slice(&[-0.41726, -0.49840]),
        Vector::from_slice(&[-2.53182, -2.79761]),
        0.0,
    );
    Benchmark {
        system,
        initial,
        solver: SolverConfig::new(dt),
        dissipation: DissipationConfig::new(0.001, 0.001, v2, dt),
        t_end: 50.0,
    }
}

/// Free-flying elastic cube: eight particles on the unit cube joined by
/// edge and face-diagonal springs, kicked by a short triangular force
/// pulse that injects linear and angular momentum.
pub fn make_spring_demo() -> Benchmark<SpringNetwork3D> {
    let corners: [[f64; 3]; 8] = [
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 1.0],
    ];
    let dist = |a: [f64; 3], b: [f64; 3]| -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };
    let mut springs = Vec::new();
    for i in 0..8 {
        for j in (i + 1)..8 {
            let d = dist(corners[i], corners[j]);
            // edges (d = 1) and face diagonals (d = √2); skip body diagonals
            if d < 1.6 {
                let k = if d < 1.2 { 200.0 } else { 80.0 };
                springs.push(Spring {
                    i,
                    j,
                    stiffness: k,
                    rest_length: d,
                });
            }
        }
    }
    let mut base = Vector::zeros(24);
    // off-axis pulls on two corners: net force and net torque are nonzero
    base[0] = 12.0;
    base[1] = 5.0;
    base[2] = -4.0;
    base[3 * 7] = -3.0;
    base[3 * 7 + 1] = 9.0;
    let load = LoadSchedule::new(base, vec![(0.0, 0.0), (0.25, 1.0), (0.5, 0.0)]).unwrap();
    let system = SpringNetwork3D::new(vec![1.0; 8], springs.clone(), Some(load)).unwrap();
    let mut q0 = Vector::zeros(24);
    for (i, c) in corners.iter().enumerate() {
        q0[3 * i] = c[0];
        q0[3 * i + 1] = c[1];
        q0[3 * i + 2] = c[2];
    }
    let dt = 2e-3;
    let initial = State::new(q0, Vector::zeros(24), 0.0);
    Benchmark {
        system,
        initial,
        solver: SolverConfig::new(dt),
        dissipation: DissipationConfig::new(
            0.002,
            0.0,
            SymMatrix::identity(springs.len()),
            dt,
        ),
        t_end: 3.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_system;

    #[test]
    fn catalog_systems_validate() {
        let e1 = make_example1();
        assert!(validate_system(&e1.system, 7).is_empty());
        let e2 = make_example2();
        assert!(validate_system(&e2.system, 7).is_empty());
        let lin = LinearOscillator::new(
            SymMatrix::identity(2),
            SymMatrix::from_rows(&[vec![16.0, -15.0], vec![-15.0, 16.0]]),
        )
        .unwrap();
        assert!(validate_system(&lin, 7).is_empty());
        let cube = make_spring_demo();
        assert!(validate_system(&cube.system, 7).is_empty());
    }

    #[test]
    fn example1_initial_potential() {
        let e1 = make_example1();
        // ½qᵀV²q + ¼·15·q₁⁴ at q = (1, 0.918), evaluated independently:
        // 73778/15625
        let v = e1.system.potential(&e1.initial.q);
        assert!((v - 4.721792).abs() < 1e-12, "V(q0) = {v}");
    }

    #[test]
    fn polynomial_hessian_matches_fd() {
        let e1 = make_example1();
        let q = Vector::from_slice(&[0.3, -0.7]);
        let h = e1.system.analytic_hessian(&q).unwrap();
        let eps = 1e-6;
        for i in 0..2 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += eps;
            qm[i] -= eps;
            let gp = e1.system.grad_potential(&qp);
            let gm = e1.system.grad_potential(&qm);
            for j in 0..2 {
                let fd = (gp[j] - gm[j]) / (2.0 * eps);
                assert!((h.get(j, i) - fd).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn linear_oscillator_analytic_solution() {
        // 1-dof: q̈ = −4q, q(0) = 1, s(0) = 0 → q(t) = cos 2t
        let lin = LinearOscillator::new(
            SymMatrix::identity(1),
            SymMatrix::diagonal(&[4.0]),
        )
        .unwrap();
        let init = State::new(Vector::from_slice(&[1.0]), Vector::zeros(1), 0.0);
        let st = lin.analytic_state(&init, 0.7);
        assert!((st.q[0] - (1.4_f64).cos()).abs() < 1e-14);
        assert!((st.s[0] + 2.0 * (1.4_f64).sin()).abs() < 1e-14);
    }

    #[test]
    fn spring_network_rejects_bad_topology() {
        let springs = vec![Spring {
            i: 0,
            j: 3,
            stiffness: 1.0,
            rest_length: 1.0,
        }];
        assert!(SpringNetwork3D::new(vec![1.0, 1.0], springs, None).is_err());
    }

    #[test]
    #[should_panic(expected = "spring collapse")]
    fn collapsed_spring_panics() {
        let springs = vec![Spring {
            i: 0,
            j: 1,
            stiffness: 1.0,
            rest_length: 1.0,
        }];
        let net = SpringNetwork3D::new(vec![1.0, 1.0], springs, None).unwrap();
        let q = Vector::zeros(6);
        let _ = net.grad_potential(&q);
    }

    #[test]
    fn zero_rest_length_spring_is_smooth_at_origin() {
        let springs = vec![Spring {
            i: 0,
            j: 1,
            stiffness: 3.0,
            rest_length: 0.0,
        }];
        let net = SpringNetwork3D::new(vec![1.0, 1.0], springs, None).unwrap();
        let g = net.grad_potential(&Vector::zeros(6));
        assert!(g.norm() == 0.0);
    }
}
