//! Kraus decomposition of the cycle channels and their time reversal.
//!
//! Kraus operators come out of the Choi matrix `J = Σ_ij Φ(E_ij) ⊗ E_ij`
//! (output factor first). The reversed channel conjugates the adjoint of the
//! forward channel by the fixed point:
//!
//! ```text
//! Ã_α = ρ*^{1/2} A_α† ρ*^{-1/2},    Φ̃ = D ∘ Φ† ∘ D⁻¹,    D(X) = ρ*^{1/2} X ρ*^{1/2}
//! ```
//!
//! `Φ̃` is trace preserving exactly when `Φ(ρ*) = ρ*`, and then it also fixes
//! `ρ*`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::limitcycle::{Channel, ChannelMatrix};
use crate::linalg::{
    c, devectorize, eigh, identity, kron, max_abs, partial_trace_matrix, psd_sqrt_invsqrt,
    trace_distance_matrix, vectorize, ComplexMatrix, DensityMatrix,
};
use crate::random::random_density_matrix;

/// Choi eigenvalues below this (absolute) signal a broken channel.
pub const NOT_CP_THRESHOLD: f64 = 1e-8;
/// Relative eigenvalue cutoff for Kraus extraction and `ρ*^{-1/2}`.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;
/// Kraus outcomes with smaller probability have no conditional state.
pub const ZERO_PROBABILITY: f64 = 1e-14;

/// Choi matrix without the complete-positivity check.
pub fn choi_matrix_unchecked(ch: &Channel) -> ComplexMatrix {
    let d = ch.dim();
    let mut j = ComplexMatrix::zeros(d * d, d * d);
    let mut unit = ComplexMatrix::zeros(d, d);
    for r in 0..d {
        for s in 0..d {
            unit[(r, s)] = c(1.0);
            let image = ch.apply_linear(&unit);
            unit[(r, s)] = c(0.0);
            // block (a, b) of Φ(E_rs) ⊗ E_rs sits at rows a*d + r, cols b*d + s
            for a in 0..d {
                for b in 0..d {
                    j[(a * d + r, b * d + s)] += image[(a, b)];
                }
            }
        }
    }
    j
}

pub fn choi_matrix(ch: &Channel) -> Result<ComplexMatrix> {
    let j = choi_matrix_unchecked(ch);
    let min = crate::linalg::eigvalsh(&j)[0];
    if min < -NOT_CP_THRESHOLD {
        return Err(Error::NotCompletelyPositive {
            min_eigenvalue: min,
        });
    }
    Ok(j)
}

/// `Tr_out[J]`, which is the identity for a trace-preserving channel.
pub fn choi_input_marginal(j: &ComplexMatrix, d: usize) -> ComplexMatrix {
    partial_trace_matrix(j, &[d, d], &[1]).expect("square Choi matrix")
}

#[derive(Clone, Debug)]
pub struct KrausSet {
    pub operators: Vec<ComplexMatrix>,
    /// Choi weight of the eigenvalues that were dropped.
    pub discarded_weight: f64,
}

impl KrausSet {
    pub fn new(operators: Vec<ComplexMatrix>) -> Self {
        KrausSet {
            operators,
            discarded_weight: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.operators.first().map_or(0, |a| a.nrows())
    }

    /// `Σ A ρ A†` on any square matrix.
    pub fn apply_linear(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let d = m.nrows();
        self.operators
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, a| {
                acc + a * m * a.adjoint()
            })
    }

    /// `Σ A† X A`, the Hilbert–Schmidt adjoint.
    pub fn apply_adjoint(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let d = x.nrows();
        self.operators
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, a| {
                acc + a.adjoint() * x * a
            })
    }

    /// `‖Σ A†A − I‖_max`.
    pub fn completeness_residual(&self) -> f64 {
        max_abs(&(self.apply_adjoint(&identity(self.dim())) - identity(self.dim())))
    }

    /// Column-stacked superoperator `Σ conj(A) ⊗ A`.
    pub fn superoperator(&self) -> ComplexMatrix {
        let d = self.dim();
        self.operators
            .iter()
            .fold(ComplexMatrix::zeros(d * d, d * d), |acc, a| {
                acc + kron(&a.conjugate(), a)
            })
    }

    pub fn to_channel(&self, label: &str, factor_dims: Vec<usize>) -> Channel {
        let set = self.clone();
        Channel::new(label, factor_dims, move |m| set.apply_linear(m))
    }
}

/// Kraus operators `√λ · devec(v)` from the eigenpairs of `J` with
/// `λ ≥ rank_tol · λ_max`, in decreasing eigenvalue order.
pub fn kraus_from_choi(j: &ComplexMatrix, rank_tol: f64) -> Result<KrausSet> {
    let dd = j.nrows();
    let d = (dd as f64).sqrt().round() as usize;
    if d * d != dd || !j.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Choi matrix {}x{} is not d²×d²",
            j.nrows(),
            j.ncols()
        )));
    }
    let (values, vectors) = eigh(j);
    if values[0] < -NOT_CP_THRESHOLD {
        return Err(Error::NotCompletelyPositive {
            min_eigenvalue: values[0],
        });
    }
    let cutoff = rank_tol * values.last().copied().unwrap_or(0.0);
    let mut operators = Vec::new();
    let mut discarded_weight = 0.0;
    for k in (0..dd).rev() {
        let lambda = values[k];
        if lambda >= cutoff && lambda > 0.0 {
            let v = vectors.column(k);
            let scale = lambda.sqrt();
            operators.push(ComplexMatrix::from_fn(d, d, |a, i| v[a * d + i] * scale));
        } else {
            discarded_weight += lambda.max(0.0);
        }
    }
    Ok(KrausSet {
        operators,
        discarded_weight,
    })
}

fn check_ops(ops: &[ComplexMatrix], rho: &DensityMatrix) -> Result<()> {
    let d = rho.dim();
    if let Some(a) = ops.iter().find(|a| a.shape() != (d, d)) {
        return Err(Error::DimensionMismatch(format!(
            "Kraus operator {:?} on a state of dimension {d}",
            a.shape()
        )));
    }
    Ok(())
}

/// Probability `Tr[A_k ⋯ A_1 ρ A_1† ⋯ A_k†]` of observing `sequence[0]`
/// first, then `sequence[1]`, and so on.
pub fn sequence_probability(sequence: &[ComplexMatrix], rho: &DensityMatrix) -> Result<f64> {
    check_ops(sequence, rho)?;
    let d = rho.dim();
    let mut product = identity(d);
    for a in sequence {
        product = a * product;
    }
    let conditioned = &product * rho.matrix() * product.adjoint();
    Ok(conditioned.trace().re)
}

/// `(AρA†/p, p)` with `p = Tr[AρA†]`.
pub fn post_interaction_state(
    a: &ComplexMatrix,
    rho: &DensityMatrix,
) -> Result<(DensityMatrix, f64)> {
    check_ops(std::slice::from_ref(a), rho)?;
    let unnormalized = a * rho.matrix() * a.adjoint();
    let p = unnormalized.trace().re;
    if p.is_nan() || p < ZERO_PROBABILITY {
        return Err(Error::ZeroProbability(p));
    }
    let state =
        DensityMatrix::from_channel_output(unnormalized.unscale(p), rho.factor_dims().to_vec())?;
    Ok((state, p))
}

#[derive(Clone, Debug)]
pub struct ReversedChannel {
    pub kraus: KrausSet,
    pub rho_star: DensityMatrix,
    pub sqrt: ComplexMatrix,
    pub inv_sqrt: ComplexMatrix,
    /// `‖Σ Ã†Ã − I‖_max`.
    pub trace_preservation_residual: f64,
    /// Trace distance between `Φ(ρ*)` and `ρ*` under the forward Kraus set.
    pub forward_fixed_point_residual: f64,
    /// Largest entrywise gap between the Kraus-form reversal and
    /// `D ∘ Φ† ∘ D⁻¹` on sampled inputs.
    pub route_agreement: f64,
}

/// Agreement bound between the Kraus-form and superoperator-form reversals.
pub const ROUTE_AGREEMENT_TOL: f64 = 1e-9;

/// Builds `Ã_α = ρ*^{1/2} A_α† ρ*^{-1/2}` for the forward Kraus set.
///
/// `fixed_point_tol` is the tolerance the fixed point was solved to; the
/// forward residual `‖Φ(ρ*) − ρ*‖₁/2` may be at most 100 times that.
pub fn reverse_channel(
    kraus: &KrausSet,
    rho_star: &DensityMatrix,
    rank_tol: f64,
    fixed_point_tol: f64,
) -> Result<ReversedChannel> {
    check_ops(&kraus.operators, rho_star)?;
    let roots = psd_sqrt_invsqrt(rho_star, rank_tol)?;

    let forward_image = kraus.apply_linear(rho_star.matrix());
    let residual = trace_distance_matrix(&forward_image, rho_star.matrix())?;
    let allowed = 100.0 * fixed_point_tol;
    if residual > allowed {
        return Err(Error::NotFixedPoint { residual, allowed });
    }

    let operators: Vec<ComplexMatrix> = kraus
        .operators
        .iter()
        .map(|a| &roots.sqrt * a.adjoint() * &roots.inv_sqrt)
        .collect();
    let reversed = KrausSet {
        operators,
        discarded_weight: kraus.discarded_weight,
    };

    // Second route: D ∘ Φ† ∘ D⁻¹ with Φ† the Hilbert–Schmidt adjoint of the
    // forward superoperator matrix.
    let d = rho_star.dim();
    let forward_adjoint = kraus.superoperator().adjoint();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut route_agreement = 0.0f64;
    for _ in 0..4 {
        let x = random_density_matrix(rho_star.factor_dims(), &mut rng);
        let undressed = &roots.inv_sqrt * x.matrix() * &roots.inv_sqrt;
        let pulled = devectorize(&(&forward_adjoint * vectorize(&undressed)), d);
        let via_super = &roots.sqrt * pulled * &roots.sqrt;
        let via_kraus = reversed.apply_linear(x.matrix());
        route_agreement = route_agreement.max(max_abs(&(via_super - via_kraus)));
    }
    if route_agreement > ROUTE_AGREEMENT_TOL {
        return Err(Error::ReversalMismatch(route_agreement));
    }

    let trace_preservation_residual = reversed.completeness_residual();
    Ok(ReversedChannel {
        kraus: reversed,
        rho_star: rho_star.clone(),
        sqrt: roots.sqrt,
        inv_sqrt: roots.inv_sqrt,
        trace_preservation_residual,
        forward_fixed_point_residual: residual,
        route_agreement,
    })
}

impl ReversedChannel {
    pub fn apply_linear(&self, m: &ComplexMatrix) -> ComplexMatrix {
        self.kraus.apply_linear(m)
    }

    pub fn to_channel(&self) -> Channel {
        self.kraus
            .to_channel("reversed", self.rho_star.factor_dims().to_vec())
    }

    /// Trace distance between `Φ̃(ρ*)` and `ρ*`.
    pub fn fixed_point_distance(&self) -> Result<f64> {
        let image = self.apply_linear(self.rho_star.matrix());
        trace_distance_matrix(&image, self.rho_star.matrix())
    }
}

/// `|p(α₁, α₂ | ρ*) − p̃(α₂, α₁ | ρ*)|` for one index pair: forward applies
/// `A_{α₁}` then `A_{α₂}`; the reversed run applies `Ã_{α₂}` then `Ã_{α₁}`.
pub fn detailed_balance_violation(
    forward: &KrausSet,
    reversed: &ReversedChannel,
    pair: (usize, usize),
) -> Result<f64> {
    let (a1, a2) = pair;
    let rho = &reversed.rho_star;
    let fwd = sequence_probability(
        &[forward.operators[a1].clone(), forward.operators[a2].clone()],
        rho,
    )?;
    let rev = sequence_probability(
        &[
            reversed.kraus.operators[a2].clone(),
            reversed.kraus.operators[a1].clone(),
        ],
        rho,
    )?;
    Ok((fwd - rev).abs())
}

/// Max-abs entry of the difference of two superoperator matrices.
pub fn superoperator_distance(a: &ComplexMatrix, b: &ChannelMatrix) -> f64 {
    max_abs(&(a - &b.matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_hamiltonian, ChainSpec};
    use crate::engine::CycleParams;
    use crate::limitcycle::{
        channel_matrix, fixed_point_spectral, make_phi_ac, make_phi_cb, DEGENERACY_THRESHOLD,
    };
    use crate::linalg::{trace_distance, ComplexVector};
    use crate::random::{random_density_matrix, random_unitary};
    use num_complex::Complex64;

    fn engine_channels() -> Vec<Channel> {
        let spec = ChainSpec::new(
            vec![1.0, 0.8, 1.6],
            vec![0.9, 0.7],
            vec![0.3, -0.2],
            vec![0.25, 0.4],
        )
        .unwrap();
        let parts = build_hamiltonian(&spec).unwrap();
        let params = CycleParams::new(1.8, 0.6, 0.8, 1.3).unwrap();
        vec![
            make_phi_cb(&parts, &params).unwrap(),
            make_phi_ac(&parts, &params).unwrap(),
        ]
    }

    #[test]
    fn choi_of_identity_and_replacement() {
        let d = 3;
        let j = choi_matrix(&Channel::identity(vec![d])).unwrap();
        let ev = crate::linalg::eigvalsh(&j);
        assert!((ev[d * d - 1] - d as f64).abs() < 1e-12);
        assert!(ev[..d * d - 1].iter().all(|x| x.abs() < 1e-12));
        let mut expected = ComplexMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for k in 0..d {
                expected[(i * d + i, k * d + k)] = c(1.0);
            }
        }
        assert_eq!(j, expected);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sigma = random_density_matrix(&[d], &mut rng);
        let j = choi_matrix(&Channel::replacement(sigma.clone())).unwrap();
        assert!(max_abs(&(j - kron(sigma.matrix(), &identity(d)))) < 1e-15);
    }

    #[test]
    fn transpose_map_is_not_cp() {
        let ch = Channel::new("transpose", vec![2], |m| m.transpose());
        assert!(matches!(
            choi_matrix(&ch),
            Err(Error::NotCompletelyPositive { .. })
        ));
    }

    #[test]
    fn engine_choi_certifies_cptp() {
        for ch in engine_channels() {
            let j = choi_matrix(&ch).unwrap();
            assert!(crate::linalg::hermitian_deviation(&j) < 1e-10);
            assert!(crate::linalg::eigvalsh(&j)[0] > -1e-9);
            assert!(max_abs(&(choi_input_marginal(&j, 4) - identity(4))) < 1e-10);
        }
    }

    #[test]
    fn unitary_channel_has_single_kraus_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let u = random_unitary(3, &mut rng);
        let j = choi_matrix(&Channel::unitary(u.clone(), vec![3])).unwrap();
        let set = kraus_from_choi(&j, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(set.len(), 1);
        let a = &set.operators[0];
        // fix the global phase using the largest entry of u
        let (idx, _) = u
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .unwrap();
        let phase = u.as_slice()[idx] / a.as_slice()[idx];
        assert!((phase.norm() - 1.0).abs() < 1e-10);
        assert!(max_abs(&(a.map(|z| z * phase) - &u)) < 1e-10);

        let j = choi_matrix(&Channel::identity(vec![2])).unwrap();
        let set = kraus_from_choi(&j, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(set.len(), 1);
        let a = &set.operators[0];
        let phase = Complex64::new(1.0, 0.0) / a[(0, 0)];
        assert!(max_abs(&(a.map(|z| z * phase) - identity(2))) < 1e-12);
    }

    #[test]
    fn kraus_round_trip_and_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for ch in engine_channels() {
            let cm = channel_matrix(&ch);
            let set = kraus_from_choi(&choi_matrix(&ch).unwrap(), DEFAULT_RANK_TOL).unwrap();
            assert!(set.completeness_residual() < 1e-10);
            assert!(superoperator_distance(&set.superoperator(), &cm) < 1e-10);
            for _ in 0..20 {
                let rho = random_density_matrix(&[2, 2], &mut rng);
                let direct = ch.apply_linear(rho.matrix());
                assert!(max_abs(&(set.apply_linear(rho.matrix()) - &direct)) < 1e-10);

                let total: f64 = set
                    .operators
                    .iter()
                    .map(|a| sequence_probability(std::slice::from_ref(a), &rho).unwrap())
                    .sum();
                assert!((total - 1.0).abs() < 1e-10);

                let mut mixture = ComplexMatrix::zeros(4, 4);
                for a in &set.operators {
                    if let Ok((post, p)) = post_interaction_state(a, &rho) {
                        mixture += post.matrix().scale(p);
                    }
                }
                assert!(max_abs(&(mixture - direct)) < 1e-10);
            }
            let rho = random_density_matrix(&[2, 2], &mut rng);
            let mut pairs = 0.0;
            for a1 in &set.operators {
                for a2 in &set.operators {
                    let p = sequence_probability(&[a1.clone(), a2.clone()], &rho).unwrap();
                    assert!((-1e-12..=1.0 + 1e-12).contains(&p));
                    pairs += p;
                }
            }
            assert!((pairs - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn post_interaction_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let rho = random_density_matrix(&[3], &mut rng);
        let u = random_unitary(3, &mut rng);
        let (post, p) = post_interaction_state(&u, &rho).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        assert!(max_abs(&(post.matrix() - &u * rho.matrix() * u.adjoint())) < 1e-12);

        let proj =
            ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.0), c(1.0), c(0.0)]));
        let (post, p) = post_interaction_state(&proj, &rho).unwrap();
        let expected_p = (rho.matrix()[(0, 0)] + rho.matrix()[(1, 1)]).re;
        assert!((p - expected_p).abs() < 1e-14);
        let expected = (&proj * rho.matrix() * &proj).unscale(expected_p);
        assert!(max_abs(&(post.matrix() - expected)) < 1e-12);

        let pure = DensityMatrix::new(
            ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(1.0), c(0.0), c(0.0)])),
            vec![3],
        )
        .unwrap();
        let off =
            ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![c(0.0), c(1.0), c(0.0)]));
        assert!(matches!(
            post_interaction_state(&off, &pure),
            Err(Error::ZeroProbability(_))
        ));
        assert!(sequence_probability(&[identity(2)], &pure).is_err());
    }

    #[test]
    fn reversal_of_unitary_is_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let u = random_unitary(4, &mut rng);
        let set = KrausSet::new(vec![u.clone()]);
        let mixed = DensityMatrix::maximally_mixed(vec![4]);
        let rev = reverse_channel(&set, &mixed, DEFAULT_RANK_TOL, 1e-10).unwrap();
        assert!(max_abs(&(&rev.kraus.operators[0] - u.adjoint())) < 1e-12);
    }

    #[test]
    fn reversal_shares_fixed_point_and_balances_pairs() {
        for ch in engine_channels() {
            let fp = fixed_point_spectral(&channel_matrix(&ch), DEGENERACY_THRESHOLD).unwrap();
            let set = kraus_from_choi(&choi_matrix(&ch).unwrap(), DEFAULT_RANK_TOL).unwrap();
            let rev = reverse_channel(&set, &fp.rho_star, DEFAULT_RANK_TOL, 1e-10).unwrap();
            assert!(rev.fixed_point_distance().unwrap() < 1e-9);
            assert!(rev.trace_preservation_residual < 1e-9);
            for a1 in 0..set.len() {
                for a2 in 0..set.len() {
                    assert!(detailed_balance_violation(&set, &rev, (a1, a2)).unwrap() < 1e-9);
                }
            }

            // reversing twice gives the forward channel back
            let back = reverse_channel(&rev.kraus, &fp.rho_star, DEFAULT_RANK_TOL, 1e-10).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(26);
            for _ in 0..10 {
                let rho = random_density_matrix(&[2, 2], &mut rng);
                let fwd = ch.apply(&rho).unwrap();
                let twice =
                    DensityMatrix::from_channel_output(back.apply_linear(rho.matrix()), vec![2, 2])
                        .unwrap();
                assert!(trace_distance(&fwd, &twice).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn reversal_preconditions() {
        let ch = &engine_channels()[0];
        let set = kraus_from_choi(&choi_matrix(ch).unwrap(), DEFAULT_RANK_TOL).unwrap();
        let mixed = DensityMatrix::maximally_mixed(vec![2, 2]);
        assert!(matches!(
            reverse_channel(&set, &mixed, DEFAULT_RANK_TOL, 1e-10),
            Err(Error::NotFixedPoint { .. })
        ));
        let pure = DensityMatrix::new(
            ComplexMatrix::from_diagonal(&ComplexVector::from_vec(vec![
                c(1.0),
                c(0.0),
                c(0.0),
                c(0.0),
            ])),
            vec![2, 2],
        )
        .unwrap();
        assert!(matches!(
            reverse_channel(&set, &pure, DEFAULT_RANK_TOL, 1e-10),
            Err(Error::RankDeficient { .. })
        ));
    }
}
