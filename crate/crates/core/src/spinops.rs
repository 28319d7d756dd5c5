//! Complex operator algebra: spin-1 operators, the Gell-Mann basis, tensor
//! products, partial traces and Hermitian matrix functions.
//!
//! Basis convention for every spin-1 space in the crate: `m ∈ {+1, 0, −1}` in
//! that order. Tensor products put the electron/orbital factor on the left and
//! the nuclear factor on the right.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{c, cr, lit, Real};

pub type ComplexMatrix<T> = DMatrix<Complex<T>>;

/// Tolerance floor that stays meaningful for low-precision scalars.
pub(crate) fn tol<T: Real>(x: f64) -> T {
    let floor = T::default_epsilon() * lit(1e3);
    if lit::<T>(x) > floor {
        lit(x)
    } else {
        floor
    }
}

pub fn identity<T: Real>(n: usize) -> ComplexMatrix<T> {
    ComplexMatrix::identity(n, n)
}

/// Position of a spin-1 projection `m` in the `{+1, 0, −1}` basis.
#[inline]
pub fn spin1_index(m: i8) -> usize {
    debug_assert!((-1..=1).contains(&m));
    (1 - m) as usize
}

/// Projection `m` stored at position `idx` of the `{+1, 0, −1}` basis.
#[inline]
pub fn spin1_projection(idx: usize) -> i8 {
    1 - idx as i8
}

/// Spin-1 operators `(S_x, S_y, S_z)` with ħ = 1.
pub fn spin1_operators<T: Real>() -> (ComplexMatrix<T>, ComplexMatrix<T>, ComplexMatrix<T>) {
    let r = T::one() / lit::<T>(2.0).sqrt();
    let z = T::zero();
    let sx = ComplexMatrix::from_row_slice(
        3,
        3,
        &[cr(z), cr(r), cr(z), cr(r), cr(z), cr(r), cr(z), cr(r), cr(z)],
    );
    let sy = ComplexMatrix::from_row_slice(
        3,
        3,
        &[
            cr(z),
            c(z, -r),
            cr(z),
            c(z, r),
            cr(z),
            c(z, -r),
            cr(z),
            c(z, r),
            cr(z),
        ],
    );
    let sz = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![
        cr(T::one()),
        cr(z),
        cr(-T::one()),
    ]));
    (sx, sy, sz)
}

/// Raising operator `S₊ = S_x + i S_y` for spin 1.
pub fn spin1_raising<T: Real>() -> ComplexMatrix<T> {
    let s2 = cr(lit::<T>(2.0).sqrt());
    let mut m = ComplexMatrix::zeros(3, 3);
    m[(0, 1)] = s2;
    m[(1, 2)] = s2;
    m
}

/// The eight Gell-Mann matrices `λ₁ … λ₈`.
pub fn gellmann_basis<T: Real>() -> [ComplexMatrix<T>; 8] {
    let one = cr(T::one());
    let i = c(T::zero(), T::one());
    let mut out: [ComplexMatrix<T>; 8] = std::array::from_fn(|_| ComplexMatrix::zeros(3, 3));
    // symmetric / antisymmetric pairs on (0,1), (0,2), (1,2)
    let pairs = [(0, 1, 0usize), (0, 2, 3), (1, 2, 5)];
    for &(a, b, k) in &pairs {
        out[k][(a, b)] = one;
        out[k][(b, a)] = one;
        out[k + 1][(a, b)] = -i;
        out[k + 1][(b, a)] = i;
    }
    out[2][(0, 0)] = one;
    out[2][(1, 1)] = -one;
    let s = T::one() / lit::<T>(3.0).sqrt();
    out[7][(0, 0)] = cr(s);
    out[7][(1, 1)] = cr(s);
    out[7][(2, 2)] = cr(-lit::<T>(2.0) * s);
    out
}

/// `⟨λ_i⟩ = Tr[ρ λ_i]` for a qutrit state.
pub fn gellmann_expectations<T: Real>(rho: &ComplexMatrix<T>) -> [T; 8] {
    let basis = gellmann_basis::<T>();
    std::array::from_fn(|k| (rho * &basis[k]).trace().re)
}

/// Qutrit state from Gell-Mann expectation values: `ρ = I/3 + ½ Σ ⟨λ_i⟩ λ_i`.
pub fn gellmann_reconstruct<T: Real>(expectations: &[T; 8]) -> ComplexMatrix<T> {
    let basis = gellmann_basis::<T>();
    let mut rho = identity::<T>(3) * cr(T::one() / lit(3.0));
    for (lam, &e) in basis.iter().zip(expectations) {
        rho += lam * cr(e * lit(0.5));
    }
    rho
}

pub fn kron<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    a.kronecker(b)
}

pub fn commutator<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    a * b - b * a
}

/// Largest entrywise deviation `|m − m†|`.
pub fn hermiticity_deviation<T: Real>(m: &ComplexMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm_sqr().sqrt();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

/// `(m + m†)/2`.
pub fn symmetrize<T: Real>(m: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    (m + m.adjoint()) * cr(lit::<T>(0.5))
}

/// Reduced operator on subsystem `keep` of a multipartite space with the given
/// factor dimensions.
pub fn partial_trace<T: Real>(
    rho: &ComplexMatrix<T>,
    keep: usize,
    dims: &[usize],
) -> Result<ComplexMatrix<T>> {
    let total: usize = dims.iter().product();
    if rho.nrows() != total || rho.ncols() != total {
        return Err(Error::Dimension(format!(
            "operator is {}x{}, subsystem dimensions {:?} multiply to {}",
            rho.nrows(),
            rho.ncols(),
            dims,
            total
        )));
    }
    if keep >= dims.len() {
        return Err(Error::Dimension(format!(
            "subsystem {keep} out of range for {} factors",
            dims.len()
        )));
    }
    let dk = dims[keep];
    let inner: usize = dims[keep + 1..].iter().product();
    let outer: usize = dims[..keep].iter().product();
    let mut out = ComplexMatrix::zeros(dk, dk);
    for a in 0..dk {
        for b in 0..dk {
            let mut acc = cr(T::zero());
            for o in 0..outer {
                for n in 0..inner {
                    let i = (o * dk + a) * inner + n;
                    let j = (o * dk + b) * inner + n;
                    acc += rho[(i, j)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues ascending.
pub fn herm_eigh<T: Real>(m: &ComplexMatrix<T>) -> Result<(DVector<T>, ComplexMatrix<T>)> {
    if !m.is_square() {
        return Err(Error::Dimension("eigendecomposition needs a square matrix".into()));
    }
    let dev = hermiticity_deviation(m);
    let scale = m.iter().fold(T::one(), |acc, z| acc.max(z.norm_sqr().sqrt()));
    if dev > tol::<T>(1e-9) * scale {
        return Err(Error::NotHermitian(crate::scalar::to_f64(dev)));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    Ok((values, vectors))
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn herm_function<T: Real>(m: &ComplexMatrix<T>, f: impl Fn(T) -> T) -> Result<ComplexMatrix<T>> {
    let (vals, vecs) = herm_eigh(m)?;
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| cr(f(v))));
    Ok(&vecs * ComplexMatrix::from_diagonal(&d) * vecs.adjoint())
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Negative eigenvalues within numerical noise are clipped to zero.
pub fn herm_sqrt<T: Real>(m: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let (vals, vecs) = herm_eigh(m)?;
    let scale = vals.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let min = vals.iter().fold(T::zero(), |acc, &v| acc.min(v));
    if min < -tol::<T>(1e-9) * scale {
        return Err(Error::NotPositive(crate::scalar::to_f64(min)));
    }
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&v| cr(v.max(T::zero()).sqrt())));
    Ok(&vecs * ComplexMatrix::from_diagonal(&d) * vecs.adjoint())
}

/// Trace norm distance `½ ‖a − b‖₁` between Hermitian matrices.
pub fn trace_distance<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Result<T> {
    let (vals, _) = herm_eigh(&(a - b))?;
    Ok(vals.iter().fold(T::zero(), |acc, v| acc + v.abs()) * lit(0.5))
}

/// Hermitian, unit-trace, positive semidefinite operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: ComplexMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity (1e-10), trace (1 ± 1e-9) and positivity (−1e-9).
    pub fn new(matrix: ComplexMatrix<T>) -> Result<Self> {
        let rho = Self { matrix };
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix the caller knows to be a valid state.
    pub fn new_unchecked(matrix: ComplexMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn pure(amplitudes: &[Complex<T>]) -> Result<Self> {
        let v = DVector::from_column_slice(amplitudes);
        let norm = v.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr());
        if norm <= T::zero() {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = v / cr(norm.sqrt());
        Ok(Self { matrix: &v * v.adjoint() })
    }

    /// Projector onto basis state `k` of an `n`-dimensional space.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut m = ComplexMatrix::zeros(n, n);
        m[(k, k)] = cr(T::one());
        Self { matrix: m }
    }

    pub fn diagonal(populations: &[T]) -> Result<Self> {
        let m = ComplexMatrix::from_diagonal(&DVector::from_iterator(
            populations.len(),
            populations.iter().map(|&p| cr(p)),
        ));
        Self::new(m)
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self { matrix: identity::<T>(n) * cr(T::one() / lit(n as f64)) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> T {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn population(&self, k: usize) -> T {
        self.matrix[(k, k)].re
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        let (vals, _) = herm_eigh(&self.matrix)?;
        Ok(vals[0])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.matrix.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        if self.matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("density matrix"));
        }
        let dev = hermiticity_deviation(&self.matrix);
        if dev > tol::<T>(1e-10) {
            return Err(Error::NotHermitian(crate::scalar::to_f64(dev)));
        }
        let tr = self.trace();
        if (tr - T::one()).abs() > tol::<T>(1e-9) {
            return Err(Error::InvalidState(format!(
                "trace {} differs from 1",
                crate::scalar::to_f64(tr)
            )));
        }
        let min = self.min_eigenvalue()?;
        if min < -tol::<T>(1e-9) {
            return Err(Error::NotPositive(crate::scalar::to_f64(min)));
        }
        Ok(())
    }

    /// Reduced state on one factor of a tensor-product space.
    pub fn partial_trace(&self, keep: usize, dims: &[usize]) -> Result<Self> {
        Ok(Self { matrix: partial_trace(&self.matrix, keep, dims)? })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self { matrix: kron(&self.matrix, &other.matrix) }
    }

    /// Full-rank random state `AA†/Tr(AA†)` with Gaussian `A` (Ginibre ensemble).
    pub fn random<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut draw = || -> T { lit(StandardNormal.sample(&mut *rng)) };
        let a = ComplexMatrix::from_fn(n, n, |_, _| c(draw(), draw()));
        let m = &a * a.adjoint();
        let tr = m.trace();
        Self { matrix: symmetrize(&(m / tr)) }
    }

    /// Haar-random pure state.
    pub fn random_pure<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        use rand_distr::{Distribution, StandardNormal};
        let mut draw = || -> T { lit(StandardNormal.sample(&mut *rng)) };
        let v: Vec<Complex<T>> = (0..n).map(|_| c(draw(), draw())).collect();
        Self::pure(&v).expect("nonzero Gaussian vector")
    }
}
