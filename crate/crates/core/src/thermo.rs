//! Heat, work and efficiency on the limit cycle, plus the magnetization
//! Gibbs ansatz that is stroke-invariant when `β₁E₁ = β₂E_N`.
//!
//! Sign conventions: `q_c_star` and `q_h_star` are the end-qubit energy
//! excesses over their bath Gibbs states; `w_star_ledger` is the work done
//! *by* the engine, so `q_c_star + q_h_star + w_star_ledger = 0` on a closed
//! cycle. `w_star_paper` is the literal sum of the four per-stroke coupling
//! energies and carries no first-law guarantee.

use serde::Serialize;

use crate::chain::{total_magnetization, ChainSpec, HamiltonianParts};
use crate::engine::{Cycle, CycleParams, CycleState};
use crate::error::{Error, Result};
use crate::linalg::{partial_trace, trace_distance, ComplexMatrix, DensityMatrix};

/// Below this `|q_h_star|` the efficiency is undefined.
pub const ZERO_HEAT_THRESHOLD: f64 = 1e-13;
/// Tolerance on `β₁E₁ = β₂E_N` for the ansatz.
pub const CRITERIA_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitCycleReport {
    pub q_c_star: f64,
    pub q_h_star: f64,
    pub w_star_paper: f64,
    pub w_star_ledger: f64,
    /// `|w_star_ledger| / q_h_star`; `None` when the hot heat vanishes.
    pub eta: Option<f64>,
    pub eta_predicted: f64,
    pub carnot_eta: f64,
    pub eq18_residual: f64,
    pub first_law_residual: f64,
    pub ansatz_distance: Option<f64>,
    pub spectral_gap: Option<f64>,
}

/// `1 − E₁/E_N`.
pub fn predicted_efficiency(spec: &ChainSpec) -> f64 {
    1.0 - spec.e_first() / spec.e_last()
}

/// `1 − β₂/β₁ = 1 − T₁/T₂`.
pub fn carnot_efficiency(params: &CycleParams) -> f64 {
    1.0 - params.beta2 / params.beta1
}

pub fn criteria_hold(spec: &ChainSpec, params: &CycleParams) -> bool {
    (params.beta1 * spec.e_first() - params.beta2 * spec.e_last()).abs() <= CRITERIA_TOL
}

/// Thermodynamic summary of a closed limit cycle.
///
/// Fails with [`Error::ZeroHeat`] when `|q_h_star| < 1e-13`; the error still
/// carries the full report (with `eta = None`).
pub fn limit_cycle_report(
    cycle: &CycleState,
    parts: &HamiltonianParts,
    spec: &ChainSpec,
    params: &CycleParams,
    gap: Option<f64>,
) -> Result<LimitCycleReport> {
    let engine = Cycle::new(parts, params)?;
    let record = engine.account(cycle)?;
    let q_c = record.q_c;
    let q_h = record.q_h;
    let w_ledger = -record.w_ledger;

    let ansatz_distance = if criteria_hold(spec, params) {
        let ansatz = ansatz_state(spec, params)?;
        let rest: Vec<usize> = (1..parts.n).collect();
        let solver_cb = partial_trace(&cycle.rho1, &rest)?;
        let ansatz_cb = partial_trace(&ansatz, &rest)?;
        Some(trace_distance(&solver_cb, &ansatz_cb)?)
    } else {
        None
    };

    let mut report = LimitCycleReport {
        q_c_star: q_c,
        q_h_star: q_h,
        w_star_paper: record.w_total,
        w_star_ledger: w_ledger,
        eta: None,
        eta_predicted: predicted_efficiency(spec),
        carnot_eta: carnot_efficiency(params),
        eq18_residual: (q_c / spec.e_first() + q_h / spec.e_last()).abs(),
        first_law_residual: (q_c + q_h + w_ledger).abs(),
        ansatz_distance,
        spectral_gap: gap,
    };
    if q_h.abs() < ZERO_HEAT_THRESHOLD {
        return Err(Error::ZeroHeat(Box::new(report)));
    }
    report.eta = Some(w_ledger.abs() / q_h);
    Ok(report)
}

/// `e^{−κS_Z}/Tr[e^{−κS_Z}]` on `n` qubits.
pub fn ansatz_from_kappa(n: usize, kappa: f64) -> DensityMatrix {
    let sz = total_magnetization(n);
    let d = sz.nrows();
    // S_Z is diagonal; shift by the smallest exponent so nothing overflows
    let exponents: Vec<f64> = (0..d).map(|i| -kappa * sz[(i, i)].re).collect();
    let top = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponents.iter().map(|x| (x - top).exp()).collect();
    let z: f64 = weights.iter().sum();
    let m = ComplexMatrix::from_fn(d, d, |i, j| {
        if i == j {
            crate::linalg::c(weights[i] / z)
        } else {
            crate::linalg::c(0.0)
        }
    });
    DensityMatrix::new(m, vec![2; n]).expect("diagonal Gibbs weights form a state")
}

/// The magnetization Gibbs ansatz with `κ = β₁E₁`.
pub fn ansatz_state(spec: &ChainSpec, params: &CycleParams) -> Result<DensityMatrix> {
    let lhs = params.beta1 * spec.e_first();
    let rhs = params.beta2 * spec.e_last();
    if (lhs - rhs).abs() > CRITERIA_TOL {
        return Err(Error::CriteriaViolated { lhs, rhs });
    }
    Ok(ansatz_from_kappa(spec.n, lhs))
}
