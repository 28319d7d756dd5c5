use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{Complex, DMatrix, DVector};

use super::Jump;
use crate::levels::{Manifold, DIM};
use crate::scalar::{c, cr, lit, Real};
use crate::spinops::ComplexMatrix;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Column-stacked position of `ρ[(row, col)]`.
#[inline]
fn vec_index(row: usize, col: usize) -> usize {
    row + DIM * col
}

/// Real coordinates of a Hermitian 21×21 operator: `ρ_aa` for diagonal
/// entries and `(Re ρ_ab, Im ρ_ab)` for `a < b`.
///
/// The `intra` set keeps only entries inside the ground, excited and singlet
/// blocks (171 coordinates). The dynamics never couple those to optical
/// coherences, so states without optical coherence can be propagated in this
/// smaller space. The `full` set covers all 441 real degrees of freedom.
#[derive(Debug)]
pub struct Coordinates {
    coords: Vec<(usize, usize, bool)>,
    lookup: Vec<Option<usize>>,
}

impl Coordinates {
    fn build(keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut coords = Vec::new();
        let mut lookup = vec![None; DIM * DIM];
        for a in 0..DIM {
            for b in a..DIM {
                if !keep(a, b) {
                    continue;
                }
                lookup[a * DIM + b] = Some(coords.len());
                coords.push((a, b, false));
                if a != b {
                    coords.push((a, b, true));
                }
            }
        }
        Self { coords, lookup }
    }

    pub fn intra() -> &'static Coordinates {
        static SET: OnceLock<Coordinates> = OnceLock::new();
        SET.get_or_init(|| Coordinates::build(|a, b| Manifold::of(a) == Manifold::of(b)))
    }

    pub fn full() -> &'static Coordinates {
        static SET: OnceLock<Coordinates> = OnceLock::new();
        SET.get_or_init(|| Coordinates::build(|_, _| true))
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Position of the real part (or the diagonal value) of `ρ_ab`, `a ≤ b`.
    fn position(&self, a: usize, b: usize) -> Option<usize> {
        self.lookup[a * DIM + b]
    }

    /// Coordinate holding the population `ρ_aa`.
    pub fn diagonal_position(&self, a: usize) -> usize {
        self.position(a, a).expect("diagonal entries are always kept")
    }

    /// Whether every entry of `rho` outside this coordinate set vanishes.
    pub fn covers<T: Real>(&self, rho: &ComplexMatrix<T>) -> bool {
        for a in 0..DIM {
            for b in a..DIM {
                if self.position(a, b).is_none() && rho[(a, b)] != cr(T::zero()) {
                    return false;
                }
            }
        }
        true
    }

    /// Real coordinates of the Hermitian part of `rho`.
    pub fn encode<T: Real>(&self, rho: &ComplexMatrix<T>) -> DVector<T> {
        DVector::from_iterator(
            self.len(),
            self.coords.iter().map(|&(a, b, imag)| {
                let z = if a == b {
                    rho[(a, a)]
                } else {
                    (rho[(a, b)] + rho[(b, a)].conj()) * cr(lit::<T>(0.5))
                };
                if imag {
                    z.im
                } else {
                    z.re
                }
            }),
        )
    }

    pub fn decode<T: Real>(&self, x: &DVector<T>) -> ComplexMatrix<T> {
        let mut rho = ComplexMatrix::zeros(DIM, DIM);
        for (k, &(a, b, imag)) in self.coords.iter().enumerate() {
            if a == b {
                rho[(a, a)] = cr(x[k]);
            } else if imag {
                rho[(a, b)].im = x[k];
                rho[(b, a)].im = -x[k];
            } else {
                rho[(a, b)].re = x[k];
                rho[(b, a)].re = x[k];
            }
        }
        rho
    }

    /// Real generator in these coordinates from sparse superoperator terms.
    fn real_generator<T: Real>(&self, terms: &[(usize, usize, Complex<T>)]) -> DMatrix<T> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for &(to, from, coeff) in terms {
            let (i, j) = (to % DIM, to / DIM);
            if i > j {
                continue;
            }
            let Some(row) = self.position(i, j) else {
                continue;
            };
            let (k, l) = (from % DIM, from / DIM);
            let (lo, hi) = if k <= l { (k, l) } else { (l, k) };
            let Some(col) = self.position(lo, hi) else {
                continue;
            };
            // ρ_kl expressed through the coordinates of the upper triangle
            let sources: [(usize, Complex<T>); 2] = if k == l {
                [(col, cr(T::one())), (usize::MAX, cr(T::zero()))]
            } else if k < l {
                [(col, cr(T::one())), (col + 1, c(T::zero(), T::one()))]
            } else {
                [(col, cr(T::one())), (col + 1, c(T::zero(), -T::one()))]
            };
            for (src, w) in sources {
                if src == usize::MAX {
                    continue;
                }
                let z = coeff * w;
                g[(row, src)] += z.re;
                if i != j {
                    g[(row + 1, src)] += z.im;
                }
            }
        }
        g
    }
}

/// Which coordinate set a real generator is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Intra,
    Full,
}

impl Block {
    pub fn coordinates(self) -> &'static Coordinates {
        match self {
            Block::Intra => Coordinates::intra(),
            Block::Full => Coordinates::full(),
        }
    }
}

/// Lindblad generator `L ρ = −i[2πH, ρ] + Σ γ D[J]ρ`, time in µs.
///
/// Stored as sparse superoperator terms; the dense 441×441 complex matrix and
/// the real-coordinate matrices are built on first use.
#[derive(Debug, Clone)]
pub struct Liouvillian<T: Real> {
    id: u64,
    hamiltonian: ComplexMatrix<T>,
    jumps: Vec<Jump<T>>,
    field: T,
    laser_scale: T,
    radiative_rate: T,
    terms: Vec<(usize, usize, Complex<T>)>,
    dense: OnceLock<ComplexMatrix<T>>,
    intra: OnceLock<DMatrix<T>>,
    full: OnceLock<DMatrix<T>>,
    memo: Arc<RwLock<HashMap<(Block, u64), Arc<DMatrix<T>>>>>,
}

/// Propagators kept per Liouvillian before the memo is flushed.
const MEMO_CAPACITY: usize = 256;

impl<T: Real> Liouvillian<T> {
    /// `hamiltonian` in MHz, jump rates in µs⁻¹, `radiative_rate` is the
    /// excited-to-ground emission rate used for photoluminescence.
    pub fn new(
        hamiltonian: ComplexMatrix<T>,
        jumps: Vec<Jump<T>>,
        field: T,
        laser_scale: T,
        radiative_rate: T,
    ) -> Self {
        assert_eq!(hamiltonian.shape(), (DIM, DIM), "Hamiltonian must be 21x21");
        let terms = superoperator_terms(&hamiltonian, &jumps);
        Self {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            hamiltonian,
            jumps,
            field,
            laser_scale,
            radiative_rate,
            terms,
            dense: OnceLock::new(),
            intra: OnceLock::new(),
            full: OnceLock::new(),
            memo: Arc::default(),
        }
    }

    /// Same dissipators with a different Hamiltonian (MHz).
    pub fn with_hamiltonian(&self, hamiltonian: ComplexMatrix<T>) -> Self {
        Self::new(
            hamiltonian,
            self.jumps.clone(),
            self.field,
            self.laser_scale,
            self.radiative_rate,
        )
    }

    /// Unique per construction; used as a propagator cache key.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix<T> {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump<T>] {
        &self.jumps
    }

    pub fn field_g(&self) -> T {
        self.field
    }

    pub fn laser_scale(&self) -> T {
        self.laser_scale
    }

    pub fn laser_on(&self) -> bool {
        self.laser_scale > T::zero()
    }

    pub fn radiative_rate(&self) -> T {
        self.radiative_rate
    }

    /// Dense 441×441 generator acting on column-stacked `vec(ρ)`.
    pub fn generator(&self) -> &ComplexMatrix<T> {
        self.dense.get_or_init(|| {
            let n = DIM * DIM;
            let mut g = ComplexMatrix::zeros(n, n);
            for &(to, from, v) in &self.terms {
                g[(to, from)] += v;
            }
            g
        })
    }

    /// Real generator in the requested coordinate set.
    pub fn real_generator(&self, block: Block) -> &DMatrix<T> {
        let cell = match block {
            Block::Intra => &self.intra,
            Block::Full => &self.full,
        };
        cell.get_or_init(|| block.coordinates().real_generator(&self.terms))
    }

    /// Memoized `make()` keyed by block and duration bits. Concurrent callers
    /// may both compute a missing entry; the first insert wins.
    pub(crate) fn memoized(
        &self,
        block: Block,
        key: u64,
        make: impl FnOnce() -> crate::error::Result<DMatrix<T>>,
    ) -> crate::error::Result<Arc<DMatrix<T>>> {
        if let Some(hit) = self.memo.read().expect("memo lock").get(&(block, key)) {
            return Ok(Arc::clone(hit));
        }
        let fresh = Arc::new(make()?);
        let mut memo = self.memo.write().expect("memo lock");
        if memo.len() >= MEMO_CAPACITY {
            memo.clear();
        }
        Ok(Arc::clone(memo.entry((block, key)).or_insert(fresh)))
    }

    /// `dρ/dt` for an arbitrary 21×21 operator.
    pub fn apply(&self, rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        let mut out = ComplexMatrix::zeros(DIM, DIM);
        for &(to, from, v) in &self.terms {
            out[(to % DIM, to / DIM)] += v * rho[(from % DIM, from / DIM)];
        }
        out
    }
}

fn superoperator_terms<T: Real>(h: &ComplexMatrix<T>, jumps: &[Jump<T>]) -> Vec<(usize, usize, Complex<T>)> {
    let two_pi = lit::<T>(std::f64::consts::TAU);
    let zero = cr(T::zero());
    let mut terms = Vec::new();
    // −i[H, ρ]: (Hρ)_ij = Σ_k H_ik ρ_kj, (ρH)_ij = Σ_l ρ_il H_lj
    for a in 0..DIM {
        for b in 0..DIM {
            let v = h[(a, b)];
            if v == zero {
                continue;
            }
            let w = v * c(T::zero(), -two_pi);
            for j in 0..DIM {
                terms.push((vec_index(a, j), vec_index(b, j), w));
            }
            let w = v * c(T::zero(), two_pi);
            for i in 0..DIM {
                terms.push((vec_index(i, b), vec_index(i, a), w));
            }
        }
    }
    for jump in jumps {
        if jump.rate == T::zero() {
            continue;
        }
        let g = cr(jump.rate);
        for &(i, k, c1) in &jump.entries {
            for &(j, l, c2) in &jump.entries {
                terms.push((vec_index(i, j), vec_index(k, l), g * c1 * c2.conj()));
            }
        }
        // K = J†J
        let mut kmat = ComplexMatrix::<T>::zeros(DIM, DIM);
        for &(r1, c1, v1) in &jump.entries {
            for &(r2, c2, v2) in &jump.entries {
                if r1 == r2 {
                    kmat[(c1, c2)] += v1.conj() * v2;
                }
            }
        }
        let half = cr(-jump.rate * lit(0.5));
        for a in 0..DIM {
            for b in 0..DIM {
                let v = kmat[(a, b)];
                if v == zero {
                    continue;
                }
                for j in 0..DIM {
                    terms.push((vec_index(a, j), vec_index(b, j), half * v));
                }
                for i in 0..DIM {
                    terms.push((vec_index(i, b), vec_index(i, a), half * v));
                }
            }
        }
    }
    terms
}
