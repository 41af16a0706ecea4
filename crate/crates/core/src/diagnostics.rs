//! Verification instruments: momenta/energy observables, the per-step
//! energy-balance residual, and the two precision quotients used to check
//! the convergence order.

use thiserror::Error;

use crate::integrator::StepReport;
use crate::linalg::Vector;
use crate::model::{kinetic_energy, State, SystemModel};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("sample time {0} does not lie on the integration grid (step {1})")]
    GridMisaligned(f64, f64),
    #[error("sample time {0} is outside the computed trajectory")]
    OutOfRange(f64),
}

/// Energy and momentum observables at one instant. Linear and angular
/// momentum are present only for ambient-space particle systems.
#[derive(Clone, Copy, Debug)]
pub struct MomentaSample {
    pub t: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub energy: f64,
    pub linear: Option<[f64; 3]>,
    pub angular: Option<[f64; 3]>,
}

/// Evaluates T, V, E and (when meaningful) l = Σ π_i, j = Σ q_i × π_i with
/// π = M s.
pub fn momenta(sys: &dyn SystemModel, state: &State) -> MomentaSample {
    let m = sys.mass();
    let kinetic = kinetic_energy(m, &state.s);
    let potential = sys.potential(&state.q);
    let (linear, angular) = match sys.particle_count() {
        Some(np) if sys.dim() == 3 * np => {
            let p = m.matvec(&state.s);
            let mut l = [0.0; 3];
            let mut j = [0.0; 3];
            for i in 0..np {
                let (px, py, pz) = (p[3 * i], p[3 * i + 1], p[3 * i + 2]);
                let (qx, qy, qz) = (state.q[3 * i], state.q[3 * i + 1], state.q[3 * i + 2]);
                l[0] += px;
                l[1] += py;
                l[2] += pz;
                j[0] += qy * pz - qz * py;
                j[1] += qz * px - qx * pz;
                j[2] += qx * py - qy * px;
            }
            (Some(l), Some(j))
        }
        _ => (None, None),
    };
    MomentaSample {
        t: state.t,
        kinetic,
        potential,
        energy: kinetic + potential,
        linear,
        angular,
    }
}

/// Defect of the discrete balance ΔT + ΔV − (W_ext − D̃_f − D̃_s) across one
/// step; zero to solver tolerance for the corrected variants.
pub fn energy_balance_residual(prev: &StepReport, cur: &StepReport) -> f64 {
    (cur.kinetic + cur.potential) - (prev.kinetic + prev.potential)
        - (cur.work_ext - cur.diss_f - cur.diss_s)
}

/// A precision-quotient series over sample times. Entries where the
/// denominator falls below the floating-point masking floor are flagged
/// and excluded from the aggregates.
#[derive(Clone, Debug)]
pub struct QuotientSeries {
    pub times: Vec<f64>,
    pub q: Vec<Option<f64>>,
    pub log2_q: Vec<Option<f64>>,
    pub masked: Vec<bool>,
}

impl QuotientSeries {
    pub fn median_log2(&self) -> Option<f64> {
        let mut vals: Vec<f64> = self.log2_q.iter().flatten().copied().collect();
        if vals.is_empty() {
            return None;
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = vals.len();
        Some(if n % 2 == 1 {
            vals[n / 2]
        } else {
            0.5 * (vals[n / 2 - 1] + vals[n / 2])
        })
    }

    pub fn mask_rate(&self) -> f64 {
        if self.masked.is_empty() {
            return 0.0;
        }
        self.masked.iter().filter(|&&m| m).count() as f64 / self.masked.len() as f64
    }
}

/// Looks up the stacked state at time `t` in a uniformly sampled series.
fn lookup(series: &[(f64, Vector)], t: f64) -> Result<&Vector, DiagnosticsError> {
    let (t0, _) = series.first().ok_or(DiagnosticsError::OutOfRange(t))?;
    let h = if series.len() > 1 {
        series[1].0 - series[0].0
    } else {
        1.0
    };
    let idx = ((t - t0) / h).round();
    if idx < 0.0 || idx as usize >= series.len() {
        return Err(DiagnosticsError::OutOfRange(t));
    }
    let idx = idx as usize;
    if (series[idx].0 - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(DiagnosticsError::GridMisaligned(t, h));
    }
    Ok(&series[idx].1)
}

const MASK_FLOOR: f64 = 1e-13;

fn build_series(
    times: &[f64],
    entries: Vec<(f64, f64, f64)>, // (numerator, denominator, ref_norm)
) -> QuotientSeries {
    let mut q = Vec::with_capacity(times.len());
    let mut log2_q = Vec::with_capacity(times.len());
    let mut masked = Vec::with_capacity(times.len());
    for (num, den, refn) in entries {
        if den <= MASK_FLOOR * (1.0 + refn) {
            q.push(None);
            log2_q.push(None);
            masked.push(true);
        } else {
            let val = num / den;
            q.push(Some(val));
            log2_q.push(if val > 0.0 { Some(val.log2()) } else { None });
            masked.push(false);
        }
    }
    QuotientSeries {
        times: times.to_vec(),
        q,
        log2_q,
        masked,
    }
}

/// Exact-solution precision quotient
/// Q_I(t) = ‖ξ(t; h) − ξ(t)‖ / ‖ξ(t; h/2) − ξ(t)‖,
/// where ξ is the stacked (q, s) state and the runner integrates the
/// system at the given step size. log₂ Q_I ≈ 2 for a second-order scheme.
pub fn quotient_i<E, R>(
    exact: E,
    runner: R,
    h: f64,
    sample_times: &[f64],
) -> Result<QuotientSeries, DiagnosticsError>
where
    E: Fn(f64) -> Vector,
    R: Fn(f64) -> Vec<(f64, Vector)>,
{
    let coarse = runner(h);
    let fine = runner(0.5 * h);
    let mut entries = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let xi = exact(t);
        let ec = (lookup(&coarse, t)? - &xi).norm();
        let ef = (lookup(&fine, t)? - &xi).norm();
        entries.push((ec, ef, xi.norm()));
    }
    Ok(build_series(sample_times, entries))
}

/// Self-convergence precision quotient
/// Q_II(t) = ‖ξ(t; h) − ξ(t; h/2)‖ / ‖ξ(t; h/2) − ξ(t; h/4)‖,
/// requiring no exact solution. log₂ Q_II ≈ 2 for a second-order scheme.
pub fn quotient_ii<R>(runner: R, h: f64, sample_times: &[f64]) -> Result<QuotientSeries, DiagnosticsError>
where
    R: Fn(f64) -> Vec<(f64, Vector)>,
{
    let s1 = runner(h);
    let s2 = runner(0.5 * h);
    let s4 = runner(0.25 * h);
    let mut entries = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        let x1 = lookup(&s1, t)?;
        let x2 = lookup(&s2, t)?;
        let x4 = lookup(&s4, t)?;
        let num = (x1 - x2).norm();
        let den = (x2 - x4).norm();
        entries.push((num, den, x4.norm()));
    }
    Ok(build_series(sample_times, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotient_masks_tiny_denominators() {
        // fabricate runs where coarse and fine agree exactly at t = 1
        let runner = |h: f64| {
            vec![
                (0.0, Vector::from_slice(&[0.0])),
                (1.0, Vector::from_slice(&[if h < 0.6 { 1.0 } else { 1.0 + 4.0 * h * h }])),
            ]
        };
        // denominator ‖ξ(h/2) − ξ(h/4)‖ = 0 → masked
        let series = quotient_ii(runner, 1.0, &[1.0]).unwrap();
        assert!(series.masked[0]);
        assert!(series.median_log2().is_none());
        assert_eq!(series.mask_rate(), 1.0);
    }

    #[test]
    fn quotient_ii_detects_quadratic_error_model() {
        // synthetic method with error C·h² at t = 1: Q_II = (h²−h²/4)/(h²/4−h²/16) = 4
        let runner = |h: f64| {
            vec![
                (0.0, Vector::from_slice(&[0.0])),
                (1.0, Vector::from_slice(&[2.0 + 3.0 * h * h])),
            ]
        };
        let series = quotient_ii(runner, 0.1, &[1.0]).unwrap();
        let l2 = series.median_log2().unwrap();
        assert!((l2 - 2.0).abs() < 1e-9, "log2 Q = {l2}");
    }

    #[test]
    fn lookup_rejects_off_grid_times() {
        let runner = |_h: f64| {
            vec![
                (0.0, Vector::from_slice(&[0.0])),
                (0.5, Vector::from_slice(&[1.0])),
                (1.0, Vector::from_slice(&[2.0])),
            ]
        };
        assert!(quotient_ii(runner, 0.5, &[0.3]).is_err());
    }
}
