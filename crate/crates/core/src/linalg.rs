//! Dense complex-matrix primitives.
//!
//! Every matrix function goes through a Hermitian eigendecomposition; the
//! dimensions handled here (at most 2^10) keep exact diagonalization cheap.
//!
//! Conventions: the first tensor factor is the most significant index, and
//! vectorization stacks columns.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Tolerances attached to the [`DensityMatrix`] invariants.
pub mod tolerance {
    /// Hermiticity of a validated density matrix.
    pub const HERMITIAN: f64 = 1e-12;
    /// Unit trace of a validated density matrix.
    pub const TRACE: f64 = 1e-12;
    /// Smallest admissible eigenvalue.
    pub const PSD: f64 = 1e-10;
    /// Hermiticity drift that channel outputs may carry before being
    /// symmetrized. Anything larger is rejected.
    pub const SYMMETRIZE: f64 = 1e-10;
    /// Trace drift that channel outputs may carry before renormalization.
    pub const RENORMALIZE: f64 = 1e-8;
}

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all<'a, I>(factors: I) -> ComplexMatrix
where
    I: IntoIterator<Item = &'a ComplexMatrix>,
{
    factors
        .into_iter()
        .fold(identity(1), |acc, f| acc.kronecker(f))
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(m - m.adjoint()))
}

pub fn hermitize(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.trace()
}

/// `Tr[a b]` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Real expectation value `Tr[op rho]` of a Hermitian observable.
pub fn expectation(op: &ComplexMatrix, rho: &DensityMatrix) -> f64 {
    trace_product(op, rho.matrix()).re
}

pub fn vectorize(m: &ComplexMatrix) -> ComplexVector {
    ComplexVector::from_column_slice(m.as_slice())
}

pub fn devectorize(v: &ComplexVector, d: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(d, d, v.as_slice())
}

fn require_square(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what} is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )))
    }
}

fn require_same_shape(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )))
    }
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix. The input
/// is symmetrized first, so only the Hermitian part is seen.
pub fn eigh(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors =
        ComplexMatrix::from_fn(m.nrows(), m.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

pub fn eigvalsh(m: &ComplexMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = hermitize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `V f(Λ) V†` for a Hermitian `m = V Λ V†`.
pub fn hermitian_function<F>(m: &ComplexMatrix, f: F) -> ComplexMatrix
where
    F: Fn(f64) -> Complex64,
{
    let (values, vectors) = eigh(m);
    reassemble(&values.iter().map(|&x| f(x)).collect::<Vec<_>>(), &vectors)
}

fn reassemble(diag: &[Complex64], vectors: &ComplexMatrix) -> ComplexMatrix {
    let mut scaled = vectors.clone();
    for (k, &w) in diag.iter().enumerate() {
        for r in 0..scaled.nrows() {
            scaled[(r, k)] *= w;
        }
    }
    scaled * vectors.adjoint()
}

/// `e^{-i h t / hbar}` for Hermitian `h`.
pub fn expm_unitary(h: &ComplexMatrix, t: f64, hbar: f64) -> Result<ComplexMatrix> {
    require_square(h, "Hamiltonian")?;
    let deviation = hermitian_deviation(h);
    if deviation > tolerance::HERMITIAN {
        return Err(Error::NotHermitian { deviation });
    }
    let phase = t / hbar;
    Ok(hermitian_function(h, |e| {
        Complex64::from_polar(1.0, -e * phase)
    }))
}

/// Max-abs entry of `ab - ba`.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    require_square(a, "left operand")?;
    require_same_shape(a, b)?;
    Ok(max_abs(&(a * b - b * a)))
}

fn factor_strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

/// Full-space offsets of every multi-index over `factors`, enumerated with
/// the first listed factor most significant.
fn factor_offsets(factors: &[usize], dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &f in factors {
        let mut next = Vec::with_capacity(offsets.len() * dims[f]);
        for &base in &offsets {
            for k in 0..dims[f] {
                next.push(base + k * strides[f]);
            }
        }
        offsets = next;
    }
    offsets
}

/// Partial trace of an arbitrary (not necessarily Hermitian) square matrix.
/// Kept factors stay in their original order.
pub fn partial_trace_matrix(
    m: &ComplexMatrix,
    dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    require_square(m, "operand")?;
    let total: usize = dims.iter().product();
    if total != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "factor dims {dims:?} multiply to {total}, matrix is {}",
            m.nrows()
        )));
    }
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if let Some(&bad) = kept.iter().find(|&&k| k >= dims.len()) {
        return Err(Error::FactorOutOfRange {
            index: bad,
            factors: dims.len(),
        });
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
    let strides = factor_strides(dims);
    let kept_off = factor_offsets(&kept, dims, &strides);
    let traced_off = factor_offsets(&traced, dims, &strides);

    let dk = kept_off.len();
    Ok(ComplexMatrix::from_fn(dk, dk, |a, b| {
        traced_off
            .iter()
            .map(|&t| m[(kept_off[a] + t, kept_off[b] + t)])
            .sum()
    }))
}

/// A validated quantum state together with its tensor-factor structure.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    factor_dims: Vec<usize>,
}

impl DensityMatrix {
    /// Strict constructor: the matrix must already satisfy every invariant.
    pub fn new(matrix: ComplexMatrix, factor_dims: Vec<usize>) -> Result<Self> {
        Self::check_dims(&matrix, &factor_dims)?;
        let deviation = hermitian_deviation(&matrix);
        if deviation > tolerance::HERMITIAN {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > tolerance::TRACE {
            return Err(Error::TraceNotUnit { trace: tr });
        }
        let min = eigvalsh(&matrix)[0];
        if min < -tolerance::PSD {
            return Err(Error::NotPositive {
                min_eigenvalue: min,
            });
        }
        Ok(Self {
            matrix,
            factor_dims,
        })
    }

    /// Constructor for the outputs of linear maps that should be states up to
    /// floating-point drift: symmetrizes, clips eigenvalues in `[-1e-10, 0)`
    /// and renormalizes. Larger violations are errors.
    pub fn from_channel_output(matrix: ComplexMatrix, factor_dims: Vec<usize>) -> Result<Self> {
        Self::check_dims(&matrix, &factor_dims)?;
        let deviation = hermitian_deviation(&matrix);
        if deviation > tolerance::SYMMETRIZE {
            return Err(Error::NotHermitian { deviation });
        }
        let mut h = hermitize(&matrix);
        let (values, vectors) = eigh(&h);
        if values[0] < -tolerance::PSD {
            return Err(Error::NotPositive {
                min_eigenvalue: values[0],
            });
        }
        if values[0] < 0.0 {
            let clipped: Vec<Complex64> = values.iter().map(|&x| c(x.max(0.0))).collect();
            h = hermitize(&reassemble(&clipped, &vectors));
        }
        let tr = h.trace().re;
        if (tr - 1.0).abs() > tolerance::RENORMALIZE {
            return Err(Error::TraceNotUnit { trace: tr });
        }
        h.unscale_mut(tr);
        Ok(Self {
            matrix: h,
            factor_dims,
        })
    }

    /// Projects an approximately Hermitian matrix with nonzero trace onto the
    /// state space: scales to unit trace, symmetrizes, sets every negative
    /// eigenvalue to zero and renormalizes.
    pub fn from_hermitian_clipped(matrix: ComplexMatrix, factor_dims: Vec<usize>) -> Result<Self> {
        Self::check_dims(&matrix, &factor_dims)?;
        let tr = matrix.trace();
        if tr.norm() == 0.0 {
            return Err(Error::TraceNotUnit { trace: 0.0 });
        }
        let h = hermitize(&matrix.map(|z| z / tr));
        let (values, vectors) = eigh(&h);
        let clipped: Vec<Complex64> = values.iter().map(|&x| c(x.max(0.0))).collect();
        let mut h = hermitize(&reassemble(&clipped, &vectors));
        let tr = h.trace().re;
        if tr <= 0.0 {
            return Err(Error::NotPositive {
                min_eigenvalue: values[0],
            });
        }
        h.unscale_mut(tr);
        Ok(Self {
            matrix: h,
            factor_dims,
        })
    }

    /// The maximally mixed state on the given factors.
    pub fn maximally_mixed(factor_dims: Vec<usize>) -> Self {
        let d: usize = factor_dims.iter().product();
        Self {
            matrix: identity(d).unscale(d as f64),
            factor_dims,
        }
    }

    fn check_dims(matrix: &ComplexMatrix, factor_dims: &[usize]) -> Result<()> {
        require_square(matrix, "density matrix")?;
        let d: usize = factor_dims.iter().product();
        if factor_dims.is_empty() || factor_dims.contains(&0) || d != matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "factor dims {factor_dims:?} do not match a {}x{} matrix",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn factor_dims(&self) -> &[usize] {
        &self.factor_dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigvalsh(&self.matrix)
    }

    /// Tensor product `self ⊗ other`, factors concatenated.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        let mut dims = self.factor_dims.clone();
        dims.extend_from_slice(&other.factor_dims);
        DensityMatrix {
            matrix: kron(&self.matrix, &other.matrix),
            factor_dims: dims,
        }
    }
}

pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let reduced = partial_trace_matrix(rho.matrix(), rho.factor_dims(), keep)?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    let dims = kept.iter().map(|&k| rho.factor_dims()[k]).collect();
    // Partial traces of valid states are valid; drift is summation order only.
    DensityMatrix::from_channel_output(reduced, dims)
}

/// Square root and support-restricted inverse square root of a PSD matrix.
#[derive(Clone, Debug)]
pub struct PsdRoots {
    pub sqrt: ComplexMatrix,
    pub inv_sqrt: ComplexMatrix,
    pub rank: usize,
    pub dim: usize,
}

/// `(ρ^{1/2}, ρ^{-1/2})` with eigenvalues below `rank_tol * λ_max` treated as
/// zero: the inverse square root is the pseudo-inverse on the support.
pub fn psd_roots(rho: &DensityMatrix, rank_tol: f64) -> PsdRoots {
    let (values, vectors) = eigh(rho.matrix());
    let cutoff = rank_tol * values.last().copied().unwrap_or(0.0).max(0.0);
    let mut rank = 0;
    let mut sq = Vec::with_capacity(values.len());
    let mut isq = Vec::with_capacity(values.len());
    for &x in &values {
        if x > cutoff && x > 0.0 {
            rank += 1;
            sq.push(c(x.sqrt()));
            isq.push(c(1.0 / x.sqrt()));
        } else {
            sq.push(c(x.max(0.0).sqrt()));
            isq.push(c(0.0));
        }
    }
    PsdRoots {
        sqrt: reassemble(&sq, &vectors),
        inv_sqrt: reassemble(&isq, &vectors),
        rank,
        dim: values.len(),
    }
}

/// Like [`psd_roots`] but fails when the state is not full rank.
pub fn psd_sqrt_invsqrt(rho: &DensityMatrix, rank_tol: f64) -> Result<PsdRoots> {
    let roots = psd_roots(rho, rank_tol);
    if roots.rank < roots.dim {
        return Err(Error::RankDeficient {
            rank: roots.rank,
            dim: roots.dim,
        });
    }
    Ok(roots)
}

/// Trace distance between two Hermitian matrices, `½ Σ |λ(a − b)|`.
pub fn trace_distance_matrix(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    require_square(a, "left operand")?;
    require_same_shape(a, b)?;
    Ok(0.5 * eigvalsh(&(a - b)).iter().map(|x| x.abs()).sum::<f64>())
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    trace_distance_matrix(a.matrix(), b.matrix())
}

/// `‖U†U − I‖_max`.
pub fn unitarity_defect(u: &ComplexMatrix) -> f64 {
    max_abs(&(u.adjoint() * u - identity(u.ncols())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density_matrix, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(xs: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_diagonal(&ComplexVector::from_iterator(
            xs.len(),
            xs.iter().map(|&x| c(x)),
        ))
    }

    #[test]
    fn kron_of_identities_and_diagonals() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
        let k = kron(&identity(2), &identity(4));
        assert_eq!(k.shape(), (8, 8));
        assert_eq!(
            kron(&diag(&[1.0, 2.0]), &diag(&[3.0, 4.0])),
            diag(&[3.0, 4.0, 6.0, 8.0])
        );
    }

    #[test]
    fn partial_trace_of_product_and_bell_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density_matrix(&[2], &mut rng);
        let cb = random_density_matrix(&[2, 2], &mut rng);
        let joint = a.tensor(&cb);
        let reduced = partial_trace(&joint, &[1, 2]).unwrap();
        assert!(max_abs(&(reduced.matrix() - cb.matrix())) < 1e-14);
        assert_eq!(reduced.factor_dims(), &[2, 2]);

        let all = partial_trace(&joint, &[0, 1, 2]).unwrap();
        assert!(max_abs(&(all.matrix() - joint.matrix())) < 1e-15);

        // (|00> + |11>)/√2
        let mut bell = ComplexMatrix::zeros(4, 4);
        for &(i, j) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            bell[(i, j)] = c(0.5);
        }
        let bell = DensityMatrix::new(bell, vec![2, 2]).unwrap();
        let first = partial_trace(&bell, &[0]).unwrap();
        assert!(max_abs(&(first.matrix() - identity(2).unscale(2.0))) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_bad_input() {
        let rho = DensityMatrix::maximally_mixed(vec![2, 2]);
        assert!(matches!(partial_trace(&rho, &[]), Err(Error::EmptyKeep)));
        assert!(matches!(
            partial_trace(&rho, &[2]),
            Err(Error::FactorOutOfRange { index: 2, .. })
        ));
        assert!(partial_trace_matrix(rho.matrix(), &[2, 3], &[0]).is_err());
    }

    #[test]
    fn expm_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_hermitian(6, &mut rng);
        assert!(max_abs(&(expm_unitary(&h, 0.0, 1.0).unwrap() - identity(6))) < 1e-13);

        let e = 1.7;
        let tau = 0.9;
        let u = expm_unitary(&diag(&[0.5 * e, -0.5 * e]), tau, 1.0).unwrap();
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, -e * tau / 2.0)).norm() < 1e-15);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, e * tau / 2.0)).norm() < 1e-15);
        assert!(u[(0, 1)].norm() < 1e-15);

        let u1 = expm_unitary(&h, 0.4, 1.0).unwrap();
        let u2 = expm_unitary(&h, 1.1, 1.0).unwrap();
        let u12 = expm_unitary(&h, 1.5, 1.0).unwrap();
        assert!(max_abs(&(&u1 * &u2 - u12)) < 1e-10);
        assert!(unitarity_defect(&u1) < 1e-10);

        let mut bad = h.clone();
        bad[(0, 1)] += c(1e-3);
        assert!(matches!(
            expm_unitary(&bad, 1.0, 1.0),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn psd_roots_identities() {
        let d = 4;
        let mixed = DensityMatrix::maximally_mixed(vec![d]);
        let r = psd_sqrt_invsqrt(&mixed, 1e-12).unwrap();
        assert!(max_abs(&(r.sqrt - identity(d).unscale(2.0))) < 1e-15);
        assert!(max_abs(&(r.inv_sqrt - identity(d).scale(2.0))) < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho = random_density_matrix(&[2, 3], &mut rng);
        let r = psd_sqrt_invsqrt(&rho, 1e-12).unwrap();
        assert!(max_abs(&(&r.sqrt * &r.sqrt - rho.matrix())) < 1e-12);

        // rank-2 state on a 3-dim space
        let rho = DensityMatrix::new(diag(&[0.25, 0.75, 0.0]), vec![3]).unwrap();
        assert!(matches!(
            psd_sqrt_invsqrt(&rho, 1e-12),
            Err(Error::RankDeficient { rank: 2, dim: 3 })
        ));
        let r = psd_roots(&rho, 1e-12);
        let proj = &r.inv_sqrt * rho.matrix() * &r.inv_sqrt;
        assert!(max_abs(&(proj - diag(&[1.0, 1.0, 0.0]))) < 1e-14);
    }

    #[test]
    fn trace_distance_basics() {
        let a = DensityMatrix::new(diag(&[1.0, 0.0]), vec![2]).unwrap();
        let b = DensityMatrix::new(diag(&[0.0, 1.0]), vec![2]).unwrap();
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(trace_distance(&a, &a).unwrap(), 0.0);
        let c3 = DensityMatrix::maximally_mixed(vec![3]);
        assert!(trace_distance(&a, &c3).is_err());
    }

    #[test]
    fn commutator_of_paulis() {
        let sx = ComplexMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let i = Complex64::i();
        let sy = ComplexMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)]);
        assert_eq!(commutator_norm(&sx, &sx).unwrap(), 0.0);
        assert!((commutator_norm(&sx, &sy).unwrap() - 2.0).abs() < 1e-15);
        assert!(commutator_norm(&sx, &identity(3)).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(matches!(
            DensityMatrix::new(diag(&[0.5, 0.6]), vec![2]),
            Err(Error::TraceNotUnit { .. })
        ));
        assert!(matches!(
            DensityMatrix::new(diag(&[1.5, -0.5]), vec![2]),
            Err(Error::NotPositive { .. })
        ));
        assert!(DensityMatrix::new(diag(&[0.5, 0.5]), vec![3]).is_err());

        // tiny negative eigenvalue gets clipped
        let s = DensityMatrix::from_channel_output(diag(&[1.0 + 5e-11, -5e-11]), vec![2]).unwrap();
        assert!(s.eigenvalues()[0] >= 0.0);
        assert!((s.matrix().trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn vec_is_column_stacking() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let v = vectorize(&m);
        assert_eq!(v[1], c(3.0));
        assert_eq!(devectorize(&v, 2), m);
    }
}
