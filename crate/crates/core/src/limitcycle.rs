//! Cycle superoperators on the `CB` and `AC` subsystems and their fixed
//! points.
//!
//! `Φ_CB` is anchored right after stroke 1: it attaches the cold Gibbs state
//! to `A`, runs strokes 2–4 and discards `A`. `Φ_AC` is anchored right after
//! stroke 3: it attaches the hot Gibbs state to `B`, runs stroke 4, stroke 1
//! and stroke 2, and discards `B`.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::linalg::Schur;
use num_complex::Complex64;

use crate::chain::HamiltonianParts;
use crate::engine::{
    conjugate, replace_first, replace_last, Cycle, CycleParams, CycleRecord, CycleState,
};
use crate::error::{Error, Result};
use crate::linalg::{
    c, devectorize, identity, kron, partial_trace, partial_trace_matrix, trace_distance, vectorize,
    ComplexMatrix, DensityMatrix,
};

/// Default stopping tolerance (trace distance between successive iterates).
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Eigenvalues within this distance of the unit circle count as fixed-point
/// candidates.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

type LinearMap = dyn Fn(&ComplexMatrix) -> ComplexMatrix + Send + Sync;

/// A linear map on operators of a fixed dimension. [`Channel::apply`] is the
/// state-level entry point; [`Channel::apply_linear`] extends the map to any
/// square matrix.
#[derive(Clone)]
pub struct Channel {
    label: String,
    factor_dims: Vec<usize>,
    map: Arc<LinearMap>,
}

impl fmt::Debug for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Channel")
            .field("label", &self.label)
            .field("factor_dims", &self.factor_dims)
            .finish()
    }
}

impl Channel {
    pub fn new<F>(label: impl Into<String>, factor_dims: Vec<usize>, map: F) -> Self
    where
        F: Fn(&ComplexMatrix) -> ComplexMatrix + Send + Sync + 'static,
    {
        Channel {
            label: label.into(),
            factor_dims,
            map: Arc::new(map),
        }
    }

    pub fn identity(factor_dims: Vec<usize>) -> Self {
        Channel::new("identity", factor_dims, |m| m.clone())
    }

    pub fn unitary(u: ComplexMatrix, factor_dims: Vec<usize>) -> Self {
        Channel::new("unitary", factor_dims, move |m| conjugate(m, &u))
    }

    /// `ρ ↦ Tr[ρ] σ`.
    pub fn replacement(sigma: DensityMatrix) -> Self {
        let dims = sigma.factor_dims().to_vec();
        let s = sigma.into_matrix();
        Channel::new("replacement", dims, move |m| s.map(|z| z * m.trace()))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn apply_linear(&self, m: &ComplexMatrix) -> ComplexMatrix {
        (self.map)(m)
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "channel '{}' acts on dimension {}, state has {}",
                self.label,
                self.dim(),
                rho.dim()
            )));
        }
        DensityMatrix::from_channel_output(
            self.apply_linear(rho.matrix()),
            self.factor_dims.clone(),
        )
    }
}

pub fn make_phi_cb(parts: &HamiltonianParts, params: &CycleParams) -> Result<Channel> {
    let cycle = Cycle::new(parts, params)?;
    let n = parts.n;
    let d = 1usize << (n - 1);
    let sigma_a = cycle.sigma_a.matrix().clone();
    let sigma_b = cycle.sigma_b.matrix().clone();
    let (u1, u2) = (cycle.u1, cycle.u2);
    Ok(Channel::new("phi_cb", vec![2; n - 1], move |m| {
        let full = kron(&sigma_a, m);
        let full = conjugate(&full, &u1);
        let full = replace_last(&full, &sigma_b);
        let full = conjugate(&full, &u2);
        partial_trace_matrix(&full, &[2, d], &[1]).expect("chain dims")
    }))
}

pub fn make_phi_ac(parts: &HamiltonianParts, params: &CycleParams) -> Result<Channel> {
    let cycle = Cycle::new(parts, params)?;
    let n = parts.n;
    let d = 1usize << (n - 1);
    let sigma_a = cycle.sigma_a.matrix().clone();
    let sigma_b = cycle.sigma_b.matrix().clone();
    let (u1, u2) = (cycle.u1, cycle.u2);
    Ok(Channel::new("phi_ac", vec![2; n - 1], move |m| {
        let full = kron(m, &sigma_b);
        let full = conjugate(&full, &u2);
        let full = replace_first(&full, &sigma_a);
        let full = conjugate(&full, &u1);
        partial_trace_matrix(&full, &[d, 2], &[0]).expect("chain dims")
    }))
}

/// Matrix of a channel acting on column-stacked operators.
#[derive(Clone, Debug)]
pub struct ChannelMatrix {
    pub matrix: ComplexMatrix,
    pub factor_dims: Vec<usize>,
}

impl ChannelMatrix {
    pub fn dim(&self) -> usize {
        self.factor_dims.iter().product()
    }

    pub fn apply_linear(&self, m: &ComplexMatrix) -> ComplexMatrix {
        devectorize(&(&self.matrix * vectorize(m)), self.dim())
    }

    /// Eigenvalues sorted by decreasing modulus.
    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        let n = self.matrix.nrows();
        let mut ev: Vec<Complex64> = Schur::new(self.matrix.clone())
            .eigenvalues()
            .ok_or(Error::EigenSolverFailed(n))?
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        Ok(ev)
    }
}

pub fn channel_matrix(ch: &Channel) -> ChannelMatrix {
    let d = ch.dim();
    let mut matrix = ComplexMatrix::zeros(d * d, d * d);
    let mut unit = ComplexMatrix::zeros(d, d);
    for col in 0..d {
        for row in 0..d {
            unit[(row, col)] = c(1.0);
            let image = ch.apply_linear(&unit);
            unit[(row, col)] = c(0.0);
            matrix
                .column_mut(col * d + row)
                .copy_from_slice(image.as_slice());
        }
    }
    ChannelMatrix {
        matrix,
        factor_dims: ch.factor_dims().to_vec(),
    }
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub rho_star: DensityMatrix,
    pub iterations: usize,
    /// Trace distance between the last two iterates (iterative solver) or
    /// between `Φ(ρ*)` and `ρ*` (spectral solver).
    pub final_delta: f64,
    /// `1 − |λ₂|`; only the spectral solver knows it.
    pub spectral_gap: Option<f64>,
    pub degenerate: bool,
    /// Successive trace distances of the iteration.
    pub history: Vec<f64>,
    /// Channel spectrum by decreasing modulus (spectral solver only).
    pub eigenvalues: Vec<Complex64>,
}

impl FixedPointResult {
    /// Whether the last `count` deltas are non-increasing up to `slack`.
    pub fn tail_non_increasing(&self, count: usize, slack: f64) -> bool {
        let h = &self.history;
        let start = h.len().saturating_sub(count);
        h[start..].windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

pub fn fixed_point_iterate(
    ch: &Channel,
    rho_init: &DensityMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParameter {
            field: "tol".into(),
            message: format!("must be > 0, got {tol}"),
        });
    }
    let mut current = rho_init.clone();
    let mut history = Vec::new();
    for k in 1..=max_iter {
        let next = ch.apply(&current)?;
        let delta = trace_distance(&next, &current)?;
        history.push(delta);
        current = next;
        if delta < tol {
            return Ok(FixedPointResult {
                rho_star: current,
                iterations: k,
                final_delta: delta,
                spectral_gap: None,
                degenerate: false,
                history,
                eigenvalues: Vec::new(),
            });
        }
    }
    let final_delta = history.last().copied().unwrap_or(f64::INFINITY);
    Err(Error::NoConvergence(Box::new(FixedPointResult {
        rho_star: current,
        iterations: max_iter,
        final_delta,
        spectral_gap: None,
        degenerate: false,
        history,
        eigenvalues: Vec::new(),
    })))
}

/// Inverse iteration for the eigenvector of `m` closest to `shift`.
fn eigenvector_near(
    m: &ComplexMatrix,
    shift: Complex64,
    start: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let n = m.nrows();
    let d = start.nrows();
    let shifted = m - identity(n).map(|z| z * shift);
    let lu = shifted.lu();
    let mut x = vectorize(start);
    for _ in 0..4 {
        x = lu.solve(&x).ok_or(Error::EigenSolverFailed(n))?;
        let norm = x.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::EigenSolverFailed(n));
        }
        x.unscale_mut(norm);
    }
    Ok(devectorize(&x, d))
}

/// Fixed point from the spectrum of the channel matrix. `tol` is the
/// distance from the unit circle within which an eigenvalue counts as a
/// fixed-point candidate.
pub fn fixed_point_spectral(cm: &ChannelMatrix, tol: f64) -> Result<FixedPointResult> {
    let d = cm.dim();
    let eigenvalues = cm.eigenvalues()?;
    let closest = eigenvalues
        .iter()
        .copied()
        .min_by(|a, b| (a - c(1.0)).norm().total_cmp(&(b - c(1.0)).norm()))
        .ok_or(Error::EigenSolverFailed(0))?;
    let near_unit: Vec<Complex64> = eigenvalues
        .iter()
        .copied()
        .filter(|z| (z.norm() - 1.0).abs() <= tol)
        .collect();
    let spectral_gap = 1.0 - eigenvalues.get(1).map_or(0.0, |z| z.norm());

    let start = identity(d).unscale(d as f64);
    let shift = closest + Complex64::new(1e-10, 1e-10);
    let v = eigenvector_near(&cm.matrix, shift, &start)?;
    let rho_star = DensityMatrix::from_hermitian_clipped(v, cm.factor_dims.clone())?;
    let image = crate::linalg::hermitize(&cm.apply_linear(rho_star.matrix()));
    let final_delta = crate::linalg::trace_distance_matrix(&image, rho_star.matrix())?;

    let degenerate = near_unit.len() > 1;
    let result = FixedPointResult {
        rho_star,
        iterations: 0,
        final_delta,
        spectral_gap: Some(spectral_gap),
        degenerate,
        history: Vec::new(),
        eigenvalues,
    };
    if degenerate {
        return Err(Error::DegenerateFixedPoint {
            near_unit,
            candidate: Box::new(result),
        });
    }
    Ok(result)
}

/// Replays the four strokes from the `CB` fixed point and checks that the
/// loop closes within `10 * tol`. The returned `rho0` is the end-of-cycle
/// state `ρ^{(4)*}`, i.e. the state entering stroke 1 on the limit cycle.
pub fn limit_cycle_states(
    rho_cb_star: &DensityMatrix,
    parts: &HamiltonianParts,
    params: &CycleParams,
    tol: f64,
) -> Result<CycleState> {
    let cycle = Cycle::new(parts, params)?;
    let expected = 1usize << (parts.n - 1);
    if rho_cb_star.dim() != expected {
        return Err(Error::DimensionMismatch(format!(
            "CB state of dimension {} for a {}-qubit chain",
            rho_cb_star.dim(),
            parts.n
        )));
    }
    let cb =
        DensityMatrix::from_channel_output(rho_cb_star.matrix().clone(), vec![2; parts.n - 1])?;
    let rho1 = cycle.sigma_a.tensor(&cb);
    let rho2 = crate::engine::apply_unitary(&rho1, &cycle.u1)?;
    let rho3 = cycle.thermalize_b(&rho2)?;
    let rho4 = crate::engine::apply_unitary(&rho3, &cycle.u2)?;
    let rest: Vec<usize> = (1..parts.n).collect();
    let closed = partial_trace(&rho4, &rest)?;
    let distance = trace_distance(&closed, &cb)?;
    let allowed = 10.0 * tol;
    if distance > allowed {
        return Err(Error::ClosureViolation { distance, allowed });
    }
    Ok(CycleState {
        rho0: rho4.clone(),
        rho1,
        rho2,
        rho3,
        rho4,
    })
}

/// One row of a convergence history export.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub cycle_index: usize,
    pub delta: Option<f64>,
    pub q_c: f64,
    pub q_h: f64,
    pub w_total: f64,
    pub w_ledger: f64,
}

impl From<(usize, &CycleRecord)> for ConvergenceRow {
    fn from((cycle_index, r): (usize, &CycleRecord)) -> Self {
        ConvergenceRow {
            cycle_index,
            delta: r.delta_prev,
            q_c: r.q_c,
            q_h: r.q_h,
            w_total: r.w_total,
            w_ledger: r.w_ledger,
        }
    }
}

pub const CONVERGENCE_CSV_HEADER: &str = "cycle_index,delta,q_c,q_h,w_total,w_ledger";

pub fn write_convergence_csv<W: Write>(out: &mut W, rows: &[ConvergenceRow]) -> io::Result<()> {
    use crate::report::fmt_f64;
    writeln!(out, "{CONVERGENCE_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.cycle_index,
            r.delta.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.q_c),
            fmt_f64(r.q_h),
            fmt_f64(r.w_total),
            fmt_f64(r.w_ledger)
        )?;
    }
    Ok(())
}
