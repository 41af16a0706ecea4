//! Python bindings: the system catalog, single-step force evaluation, and
//! whole-run integration with per-step diagnostics.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gdr_core::dgrad::{
    algorithmic_force, DegeneracyPolicy, DissipationConfig, ForceScheme, ForceVariant,
};
use gdr_core::diagnostics::{momenta, quotient_ii};
use gdr_core::integrator::{integrate, SolverConfig};
use gdr_core::linalg::{SymMatrix, Vector};
use gdr_core::model::{State, SystemModel};
use gdr_core::systems::{make_example1, make_example2, make_spring_demo, LinearOscillator};

fn parse_variant(name: &str) -> PyResult<ForceVariant> {
    match name {
        "average" => Ok(ForceVariant::Average),
        "midpoint" => Ok(ForceVariant::Midpoint),
        "new_conservative" => Ok(ForceVariant::NewConservative),
        "gonzalez" => Ok(ForceVariant::Gonzalez),
        "g_equivariant" => Ok(ForceVariant::GEquivariant),
        other => Err(PyValueError::new_err(format!(
            "unknown variant {other:?}; expected average, midpoint, new_conservative, gonzalez or g_equivariant"
        ))),
    }
}

fn sym_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<SymMatrix> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("{what} must be square")));
    }
    Ok(SymMatrix::from_rows(&rows))
}

/// A mechanical system from the catalog, with its reference initial state
/// and dissipation weight matrix.
#[pyclass]
struct System {
    model: Box<dyn SystemModel>,
    initial: State,
    diss_matrix: SymMatrix,
}

impl System {
    fn vector_arg(&self, v: Vec<f64>, what: &str) -> PyResult<Vector> {
        if v.len() != self.model.dim() {
            return Err(PyValueError::new_err(format!(
                "{what} must have length {}",
                self.model.dim()
            )));
        }
        Ok(Vector::from_vec(v))
    }

    fn scheme(&self, variant: &str, chi_f: f64, chi_s: f64, dt: f64) -> PyResult<ForceScheme> {
        if chi_f < 0.0 || chi_s < 0.0 {
            return Err(PyValueError::new_err("chi_f and chi_s must be >= 0"));
        }
        Ok(ForceScheme {
            variant: parse_variant(variant)?,
            dissipation: DissipationConfig::new(chi_f, chi_s, self.diss_matrix.clone(), dt),
        })
    }
}

#[pymethods]
impl System {
    /// Two-mass oscillator with quadratic + quartic stiffness.
    #[staticmethod]
    fn example1() -> Self {
        let b = make_example1();
        System {
            model: Box::new(b.system),
            initial: b.initial,
            diss_matrix: b.dissipation.matrix.clone(),
        }
    }

    /// Two-mass oscillator with a rational non-polynomial coupling.
    #[staticmethod]
    fn example2() -> Self {
        let b = make_example2();
        System {
            model: Box::new(b.system),
            initial: b.initial,
            diss_matrix: b.dissipation.matrix.clone(),
        }
    }

    /// Free-flying elastic cube of eight particles and 24 springs.
    #[staticmethod]
    fn spring_demo() -> Self {
        let b = make_spring_demo();
        System {
            model: Box::new(b.system),
            initial: b.initial,
            diss_matrix: b.dissipation.matrix.clone(),
        }
    }

    /// Linear oscillator M q̈ + K q = 0 (has an exact solution).
    #[staticmethod]
    fn linear_oscillator(mass: Vec<Vec<f64>>, stiffness: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = sym_from_rows(mass, "mass")?;
        let k = sym_from_rows(stiffness, "stiffness")?;
        let n = m.dim();
        let sys = LinearOscillator::new(m, k.clone())
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(System {
            model: Box::new(sys),
            initial: State::new(Vector::zeros(n), Vector::zeros(n), 0.0),
            diss_matrix: k,
        })
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Reference initial state (q, s) of the catalog entry.
    fn initial_state(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.initial.q.as_slice().to_vec(),
            self.initial.s.as_slice().to_vec(),
        )
    }

    fn potential(&self, q: Vec<f64>) -> PyResult<f64> {
        Ok(self.model.potential(&self.vector_arg(q, "q")?))
    }

    fn grad_potential(&self, q: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self
            .model
            .grad_potential(&self.vector_arg(q, "q")?)
            .as_slice()
            .to_vec())
    }

    /// Algorithmic force of the given variant for the pair (x, y); returns
    /// (force, diss_f, used_fallback).
    #[pyo3(signature = (x, y, variant="new_conservative", chi_f=0.0, chi_s=0.0, h=1.0))]
    fn force(
        &self,
        x: Vec<f64>,
        y: Vec<f64>,
        variant: &str,
        chi_f: f64,
        chi_s: f64,
        h: f64,
    ) -> PyResult<(Vec<f64>, f64, bool)> {
        let scheme = self.scheme(variant, chi_f, chi_s, h)?;
        let eval = algorithmic_force(
            self.model.as_ref(),
            &scheme,
            &self.vector_arg(x, "x")?,
            &self.vector_arg(y, "y")?,
            &DegeneracyPolicy::default(),
        )
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok((eval.force.as_slice().to_vec(), eval.diss_f, eval.fallback))
    }

    /// Energy/momentum observables at a state; angular/linear momentum are
    /// None for non-particle systems.
    fn momenta<'py>(
        &self,
        py: Python<'py>,
        q: Vec<f64>,
        s: Vec<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let state = State::new(self.vector_arg(q, "q")?, self.vector_arg(s, "s")?, 0.0);
        let sample = momenta(self.model.as_ref(), &state);
        let d = PyDict::new(py);
        d.set_item("kinetic", sample.kinetic)?;
        d.set_item("potential", sample.potential)?;
        d.set_item("energy", sample.energy)?;
        d.set_item("linear_momentum", sample.linear)?;
        d.set_item("angular_momentum", sample.angular)?;
        Ok(d)
    }

    /// Integrate from (q0, s0) (default: the catalog initial state) and
    /// return the whole trajectory as a dict of lists.
    #[pyo3(signature = (dt, duration, variant="new_conservative", chi_f=0.0, chi_s=0.0,
                        q0=None, s0=None, rel_tol=1e-10, max_iters=50))]
    #[allow(clippy::too_many_arguments)]
    fn integrate<'py>(
        &self,
        py: Python<'py>,
        dt: f64,
        duration: f64,
        variant: &str,
        chi_f: f64,
        chi_s: f64,
        q0: Option<Vec<f64>>,
        s0: Option<Vec<f64>>,
        rel_tol: f64,
        max_iters: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        if dt <= 0.0 {
            return Err(PyValueError::new_err("dt must be > 0"));
        }
        let scheme = self.scheme(variant, chi_f, chi_s, dt)?;
        let mut solver = SolverConfig::new(dt);
        solver.rel_tol = rel_tol;
        solver.max_iters = max_iters;
        let initial = State::new(
            match q0 {
                Some(q) => self.vector_arg(q, "q0")?,
                None => self.initial.q.clone(),
            },
            match s0 {
                Some(s) => self.vector_arg(s, "s0")?,
                None => self.initial.s.clone(),
            },
            0.0,
        );
        let traj = integrate(self.model.as_ref(), &scheme, &solver, &initial, duration)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let d = PyDict::new(py);
        let get = |f: fn(&gdr_core::integrator::StepReport) -> f64| -> Vec<f64> {
            traj.records.iter().map(f).collect()
        };
        d.set_item("t", get(|r| r.state.t))?;
        d.set_item(
            "q",
            traj.records
                .iter()
                .map(|r| r.state.q.as_slice().to_vec())
                .collect::<Vec<_>>(),
        )?;
        d.set_item(
            "s",
            traj.records
                .iter()
                .map(|r| r.state.s.as_slice().to_vec())
                .collect::<Vec<_>>(),
        )?;
        d.set_item("kinetic", get(|r| r.kinetic))?;
        d.set_item("potential", get(|r| r.potential))?;
        d.set_item("energy", get(|r| r.energy))?;
        d.set_item("work_ext", get(|r| r.work_ext))?;
        d.set_item("diss_f", get(|r| r.diss_f))?;
        d.set_item("diss_s", get(|r| r.diss_s))?;
        d.set_item(
            "newton_iters",
            traj.records.iter().map(|r| r.iters).collect::<Vec<_>>(),
        )?;
        Ok(d)
    }

    /// Self-convergence study: runs at dt, dt/2, dt/4 and returns the
    /// median log2 of the second precision quotient (≈ 2 for a
    /// second-order scheme) plus the mask rate.
    #[pyo3(signature = (dt, duration, variant="new_conservative", chi_f=0.0, chi_s=0.0))]
    fn quotient(
        &self,
        dt: f64,
        duration: f64,
        variant: &str,
        chi_f: f64,
        chi_s: f64,
    ) -> PyResult<(Option<f64>, f64)> {
        let steps = (duration / dt).round() as usize;
        if steps == 0 {
            return Err(PyValueError::new_err("duration must cover at least one step"));
        }
        let stride = (steps / 50).max(1);
        let samples: Vec<f64> = (1..=steps / stride)
            .map(|k| (k * stride) as f64 * dt)
            .collect();
        let runner = |h: f64| {
            let scheme = self.scheme(variant, chi_f, chi_s, h).unwrap();
            let mut solver = SolverConfig::new(h);
            solver.rel_tol = 1e-10;
            integrate(self.model.as_ref(), &scheme, &solver, &self.initial, duration)
                .map(|t| t.stacked_states())
        };
        // run the three resolutions, propagating integration failures
        let mut runs = Vec::new();
        for h in [dt, 0.5 * dt, 0.25 * dt] {
            runs.push((h, runner(h).map_err(|e| PyRuntimeError::new_err(e.to_string()))?));
        }
        let series = quotient_ii(
            |h: f64| {
                runs.iter()
                    .find(|(hk, _)| *hk == h)
                    .map(|(_, r)| r.clone())
                    .unwrap()
            },
            dt,
            &samples,
        )
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok((series.median_log2(), series.mask_rate()))
    }
}

#[pymodule]
fn gdr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    Ok(())
}
