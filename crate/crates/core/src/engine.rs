//! The four strokes of the engine and their heat/work accounting.
//!
//! 1. qubit A is swapped for a Gibbs state of the cold bath,
//! 2. the whole chain evolves under `H_S` for `tau1`,
//! 3. qubit B is swapped for a Gibbs state of the hot bath,
//! 4. the chain evolves under `H_S` for `tau2`.
//!
//! Heats `q_c`, `q_h` are reported as `Tr[H_X(ρ_X − ρ_X(β))]`: positive when
//! the end qubit hands energy to its bath. Work is booked twice: `w1..w4`
//! evaluate the coupling energies at the stroke outputs, while `w_ledger`
//! books the energy of switching each coupling off and back on at the
//! instants the switches happen (work done *on* the chain). Only the ledger
//! closes the first law for arbitrary states.

use serde::{Deserialize, Serialize};

use crate::chain::{gibbs_state, HamiltonianParts};
use crate::error::{Error, Result};
use crate::linalg::{
    expectation, expm_unitary, kron, partial_trace, partial_trace_matrix, trace_distance,
    ComplexMatrix, DensityMatrix,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleParams {
    /// Inverse temperature of the bath attached to qubit A.
    pub beta1: f64,
    /// Inverse temperature of the bath attached to qubit B.
    pub beta2: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl CycleParams {
    pub fn new(beta1: f64, beta2: f64, tau1: f64, tau2: f64) -> Result<Self> {
        let p = CycleParams {
            beta1,
            beta2,
            tau1,
            tau2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(beta.is_finite() && beta > 0.0) {
                return Err(Error::InvalidParameter {
                    field: name.into(),
                    message: format!("must be finite and > 0, got {beta}"),
                });
            }
        }
        for (name, tau) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if !(tau.is_finite() && tau >= 0.0) {
                return Err(Error::InvalidParameter {
                    field: name.into(),
                    message: format!("must be finite and >= 0, got {tau}"),
                });
            }
        }
        Ok(())
    }
}

/// The state entering stroke 1 and the four post-stroke states.
#[derive(Clone, Debug)]
pub struct CycleState {
    pub rho0: DensityMatrix,
    pub rho1: DensityMatrix,
    pub rho2: DensityMatrix,
    pub rho3: DensityMatrix,
    pub rho4: DensityMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleRecord {
    pub q_c: f64,
    pub q_h: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub w_total: f64,
    pub w_ledger: f64,
    /// `|q_c + q_h + w_total|`.
    pub first_law_residual_paper: f64,
    /// `|−q_c − q_h + w_ledger|`: heat flowing in from both baths plus the
    /// switching work, which vanishes once the cycle closes.
    pub first_law_residual_ledger: f64,
    /// `Tr[H_S(ρ4 − ρ0)]`.
    pub energy_change: f64,
    /// Trace distance of `rho0` to the previous cycle's `rho0`.
    pub delta_prev: Option<f64>,
}

fn check_local(rho: &DensityMatrix, local: &ComplexMatrix, factor: usize) -> Result<()> {
    let dims = rho.factor_dims();
    if dims.len() < 2 || local.nrows() != dims[factor] || !local.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "local operator {}x{} does not fit factor {factor} of {dims:?}",
            local.nrows(),
            local.ncols()
        )));
    }
    Ok(())
}

/// `gibbs(h_a_local, β₁) ⊗ Tr_A[ρ]`.
pub fn stroke_thermalize_a(
    rho: &DensityMatrix,
    h_a_local: &ComplexMatrix,
    beta1: f64,
) -> Result<DensityMatrix> {
    check_local(rho, h_a_local, 0)?;
    let sigma = gibbs_state(h_a_local, beta1)?;
    let rest: Vec<usize> = (1..rho.factor_dims().len()).collect();
    Ok(sigma.tensor(&partial_trace(rho, &rest)?))
}

/// `Tr_B[ρ] ⊗ gibbs(h_b_local, β₂)`; B stays the last factor.
pub fn stroke_thermalize_b(
    rho: &DensityMatrix,
    h_b_local: &ComplexMatrix,
    beta2: f64,
) -> Result<DensityMatrix> {
    let last = rho.factor_dims().len().saturating_sub(1);
    check_local(rho, h_b_local, last)?;
    let sigma = gibbs_state(h_b_local, beta2)?;
    let rest: Vec<usize> = (0..last).collect();
    Ok(partial_trace(rho, &rest)?.tensor(&sigma))
}

pub fn conjugate(m: &ComplexMatrix, u: &ComplexMatrix) -> ComplexMatrix {
    u * m * u.adjoint()
}

pub fn apply_unitary(rho: &DensityMatrix, u: &ComplexMatrix) -> Result<DensityMatrix> {
    if u.shape() != rho.matrix().shape() {
        return Err(Error::DimensionMismatch(format!(
            "unitary {:?} vs state {:?}",
            u.shape(),
            rho.matrix().shape()
        )));
    }
    DensityMatrix::from_channel_output(conjugate(rho.matrix(), u), rho.factor_dims().to_vec())
}

/// `U ρ U†` with `U = e^{-i h_s τ}`.
pub fn stroke_unitary(rho: &DensityMatrix, h_s: &ComplexMatrix, tau: f64) -> Result<DensityMatrix> {
    let u = expm_unitary(h_s, tau, 1.0)?;
    apply_unitary(rho, &u)
}

/// `σ ⊗ Tr_1[m]` for any square `m`, where `σ` replaces the first factor.
pub fn replace_first(m: &ComplexMatrix, sigma: &ComplexMatrix) -> ComplexMatrix {
    let da = sigma.nrows();
    let rest = m.nrows() / da;
    let reduced = partial_trace_matrix(m, &[da, rest], &[1]).expect("dims divide");
    kron(sigma, &reduced)
}

/// `Tr_last[m] ⊗ σ` for any square `m`, where `σ` replaces the last factor.
pub fn replace_last(m: &ComplexMatrix, sigma: &ComplexMatrix) -> ComplexMatrix {
    let db = sigma.nrows();
    let rest = m.nrows() / db;
    let reduced = partial_trace_matrix(m, &[rest, db], &[0]).expect("dims divide");
    kron(&reduced, sigma)
}

/// Everything needed to run strokes repeatedly: bath states and the two
/// propagators are computed once.
#[derive(Clone, Debug)]
pub struct Cycle {
    pub parts: HamiltonianParts,
    pub params: CycleParams,
    pub sigma_a: DensityMatrix,
    pub sigma_b: DensityMatrix,
    pub u1: ComplexMatrix,
    pub u2: ComplexMatrix,
}

impl Cycle {
    pub fn new(parts: &HamiltonianParts, params: &CycleParams) -> Result<Self> {
        params.validate()?;
        Ok(Cycle {
            parts: parts.clone(),
            params: *params,
            sigma_a: gibbs_state(&parts.a_local, params.beta1)?,
            sigma_b: gibbs_state(&parts.b_local, params.beta2)?,
            u1: expm_unitary(&parts.h_s, params.tau1, 1.0)?,
            u2: expm_unitary(&parts.h_s, params.tau2, 1.0)?,
        })
    }

    fn check_state(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.parts.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} on a {}-qubit chain",
                rho.dim(),
                self.parts.n
            )));
        }
        Ok(())
    }

    pub fn thermalize_a(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let rest: Vec<usize> = (1..self.parts.n).collect();
        Ok(self.sigma_a.tensor(&partial_trace(rho, &rest)?))
    }

    pub fn thermalize_b(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        let rest: Vec<usize> = (0..self.parts.n - 1).collect();
        Ok(partial_trace(rho, &rest)?.tensor(&self.sigma_b))
    }

    /// Runs the four strokes from `rho0`.
    pub fn run(&self, rho0: &DensityMatrix) -> Result<(CycleState, CycleRecord)> {
        self.check_state(rho0)?;
        let rho0 =
            DensityMatrix::from_channel_output(rho0.matrix().clone(), self.parts.factor_dims())?;
        let rho1 = self.thermalize_a(&rho0)?;
        let rho2 = apply_unitary(&rho1, &self.u1)?;
        let rho3 = self.thermalize_b(&rho2)?;
        let rho4 = apply_unitary(&rho3, &self.u2)?;
        let state = CycleState {
            rho0,
            rho1,
            rho2,
            rho3,
            rho4,
        };
        let record = self.account(&state)?;
        Ok((state, record))
    }

    /// Heat and work bookkeeping for a given set of stroke states.
    pub fn account(&self, state: &CycleState) -> Result<CycleRecord> {
        let n = self.parts.n;
        let rho_a = partial_trace(&state.rho0, &[0])?;
        let rho_b = partial_trace(&state.rho2, &[n - 1])?;
        let q_c = expectation(&self.parts.a_local, &rho_a)
            - expectation(&self.parts.a_local, &self.sigma_a);
        let q_h = expectation(&self.parts.b_local, &rho_b)
            - expectation(&self.parts.b_local, &self.sigma_b);

        let h_ac = &self.parts.h_ac;
        let h_cb = &self.parts.h_cb;
        let w1 = expectation(h_ac, &state.rho1);
        let w2 = -expectation(h_ac, &state.rho2);
        let w3 = expectation(h_cb, &state.rho3);
        let w4 = -expectation(h_cb, &state.rho4);
        let w_total = w1 + w2 + w3 + w4;

        let w_ledger = expectation(h_ac, &state.rho1) - expectation(h_ac, &state.rho0)
            + expectation(h_cb, &state.rho3)
            - expectation(h_cb, &state.rho2);

        let energy_change =
            expectation(&self.parts.h_s, &state.rho4) - expectation(&self.parts.h_s, &state.rho0);

        Ok(CycleRecord {
            q_c,
            q_h,
            w1,
            w2,
            w3,
            w4,
            w_total,
            w_ledger,
            first_law_residual_paper: (q_c + q_h + w_total).abs(),
            first_law_residual_ledger: (-q_c - q_h + w_ledger).abs(),
            energy_change,
            delta_prev: None,
        })
    }
}

pub fn run_cycle(
    rho0: &DensityMatrix,
    parts: &HamiltonianParts,
    params: &CycleParams,
) -> Result<(CycleState, CycleRecord)> {
    Cycle::new(parts, params)?.run(rho0)
}

/// Runs up to `max_cycles` cycles, stopping once the start-of-cycle states of
/// two consecutive cycles are within `tol` in trace distance. Returns every
/// record and whether the run converged.
pub fn simulate(
    cycle: &Cycle,
    rho_init: &DensityMatrix,
    tol: f64,
    max_cycles: usize,
) -> Result<(Vec<CycleRecord>, bool)> {
    let mut records = Vec::new();
    let mut current = rho_init.clone();
    let mut previous: Option<DensityMatrix> = None;
    for _ in 0..max_cycles {
        let (state, mut record) = cycle.run(&current)?;
        if let Some(prev) = &previous {
            record.delta_prev = Some(trace_distance(&state.rho0, prev)?);
        }
        let converged = record.delta_prev.is_some_and(|d| d < tol);
        records.push(record);
        if converged {
            return Ok((records, true));
        }
        previous = Some(state.rho0);
        current = state.rho4;
    }
    Ok((records, false))
}
