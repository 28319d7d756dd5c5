//! Time evolution under piecewise-constant generators, photoluminescence
//! integration, state contrast and optical pumping.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::levels::{BasisState, Manifold, DIM, ES_OFFSET, GS_OFFSET, SINGLET_OFFSET};
use crate::nvmodel::{build_liouvillian, Block, Liouvillian, ModelParams, RateTable};
use crate::scalar::{c, cr, lit, to_f64, Real};
use crate::spinops::{ComplexMatrix, DensityMatrix};

/// Readout window used throughout (µs).
pub const READOUT_WINDOW_US: f64 = 0.35;
/// PL sampling step (µs).
pub const READOUT_DT_US: f64 = 0.005;
/// Dark relaxation after optical pumping before anything else happens (µs).
pub const RELAX_US: f64 = 1.0;
/// Optical initialization time (µs).
pub const INIT_PUMP_US: f64 = 20.0;

/// `exp(L t)` in real Hermitian coordinates.
#[derive(Debug, Clone)]
pub struct Propagator<T: Real> {
    matrix: Arc<DMatrix<T>>,
    block: Block,
    duration: T,
    source: u64,
}

impl<T: Real> Propagator<T> {
    /// Looks the propagator up in the Liouvillian's memo, computing it on a miss.
    pub fn new(l: &Liouvillian<T>, t: T, block: Block) -> Result<Self> {
        if !(t >= T::zero()) || !t.is_finite() {
            return Err(Error::InvalidArgument(format!("duration must be finite and >= 0, got {}", to_f64(t))));
        }
        let key = to_f64(t).to_bits();
        let matrix = l.memoized(block, key, || {
            let m = expm(&(l.real_generator(block) * t))?;
            if m.iter().all(|x| x.is_finite()) {
                Ok(m)
            } else {
                Err(Error::NonFinite("propagator"))
            }
        })?;
        Ok(Self { matrix, block, duration: t, source: l.id() })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn block(&self) -> Block {
        self.block
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    /// Id of the Liouvillian this was built from.
    pub fn source(&self) -> u64 {
        self.source
    }

    pub fn apply(&self, rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        let coords = self.block.coordinates();
        coords.decode(&(&*self.matrix * coords.encode(rho)))
    }

    /// Complex 441×441 matrix acting on column-stacked `vec(ρ)`. Requires the
    /// full coordinate block.
    pub fn superoperator(&self) -> Result<ComplexMatrix<T>> {
        if self.block != Block::Full {
            return Err(Error::InvalidArgument("superoperator needs a full-block propagator".into()));
        }
        let n = DIM * DIM;
        let half = cr(lit::<T>(0.5));
        let mut s = ComplexMatrix::zeros(n, n);
        let unit = |a: usize, b: usize, v: nalgebra::Complex<T>| {
            let mut m = ComplexMatrix::zeros(DIM, DIM);
            m[(a, b)] += v;
            if a != b {
                m[(b, a)] += v.conj();
            }
            self.apply(&m)
        };
        for k in 0..DIM {
            for l in 0..DIM {
                let col = if k == l {
                    unit(k, k, cr(T::one()))
                } else {
                    // E_kl = ½(E_kl + E_lk) + (i/2)·(−i)(E_kl − E_lk)
                    let x = unit(k, l, cr(T::one()));
                    let y = unit(k, l, c(T::zero(), -T::one()));
                    (x + y * c(T::zero(), T::one())) * half
                };
                for (idx, v) in col.iter().enumerate() {
                    s[(idx, k + DIM * l)] = *v;
                }
            }
        }
        Ok(s)
    }
}

fn choose_block<T: Real>(rho: &ComplexMatrix<T>) -> Block {
    if crate::nvmodel::Coordinates::intra().covers(rho) {
        Block::Intra
    } else {
        Block::Full
    }
}

fn check_dim<T: Real>(rho: &DensityMatrix<T>) -> Result<()> {
    if rho.dim() != DIM {
        return Err(Error::Dimension(format!("expected a {DIM}-level state, got {}", rho.dim())));
    }
    Ok(())
}

/// `ρ(t) = exp(L t) ρ`.
pub fn propagate<T: Real>(l: &Liouvillian<T>, rho: &DensityMatrix<T>, t: T) -> Result<DensityMatrix<T>> {
    check_dim(rho)?;
    if t == T::zero() {
        return Ok(rho.clone());
    }
    let p = Propagator::new(l, t, choose_block(rho.matrix()))?;
    let out = p.apply(rho.matrix());
    if !out.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::NonFinite("propagation"));
    }
    Ok(DensityMatrix::new_unchecked(out))
}

/// Time-resolved photoluminescence during a laser-on window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLRecord<T = f64> {
    /// Integrated emission (dimensionless photon number per emitter).
    #[serde(rename = "yield")]
    pub yield_: T,
    /// `(t µs, instantaneous rate µs⁻¹)`.
    pub samples: Vec<(T, T)>,
}

/// Total excited-state population.
pub fn excited_population<T: Real>(rho: &ComplexMatrix<T>) -> T {
    (ES_OFFSET..ES_OFFSET + 9).fold(T::zero(), |acc, k| acc + rho[(k, k)].re)
}

/// PL record and the state at the end of the window.
pub fn pl_readout<T: Real>(
    l_on: &Liouvillian<T>,
    rho0: &DensityMatrix<T>,
    window: T,
    dt: T,
) -> Result<(PLRecord<T>, DensityMatrix<T>)> {
    check_dim(rho0)?;
    if !l_on.laser_on() {
        return Err(Error::InvalidArgument("PL readout needs a laser-on generator".into()));
    }
    if !(window > T::zero()) || !(dt > T::zero()) {
        return Err(Error::InvalidArgument("PL window and step must be positive".into()));
    }
    let steps = (to_f64(window) / to_f64(dt) - 1e-9).ceil().max(1.0) as usize;
    let h = window / lit(steps as f64);
    let block = choose_block(rho0.matrix());
    let coords = block.coordinates();
    let prop = Propagator::new(l_on, h, block)?;
    let es: Vec<usize> = (ES_OFFSET..ES_OFFSET + 9).map(|k| coords.diagonal_position(k)).collect();
    let gamma1 = l_on.radiative_rate();
    let rate = |x: &DVector<T>| es.iter().fold(T::zero(), |acc, &k| acc + x[k]) * gamma1;
    let mut x = coords.encode(rho0.matrix());
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((T::zero(), rate(&x)));
    for k in 1..=steps {
        x = prop.matrix() * x;
        samples.push((h * lit(k as f64), rate(&x)));
    }
    let yield_ = trapezoid(&samples);
    if !yield_.is_finite() {
        return Err(Error::NonFinite("PL integration"));
    }
    Ok((PLRecord { yield_, samples }, DensityMatrix::new_unchecked(coords.decode(&x))))
}

/// Integrated PL of `rho0` under `l_on` over `window`, sampled every `dt`.
pub fn pl_trace<T: Real>(l_on: &Liouvillian<T>, rho0: &DensityMatrix<T>, window: T, dt: T) -> Result<PLRecord<T>> {
    pl_readout(l_on, rho0, window, dt).map(|(rec, _)| rec)
}

pub(crate) fn trapezoid<T: Real>(samples: &[(T, T)]) -> T {
    samples
        .windows(2)
        .fold(T::zero(), |acc, w| acc + (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * lit(0.5))
}

/// Pure ground basis state embedded in the 21-level space.
pub fn ground_state<T: Real>(s: BasisState) -> DensityMatrix<T> {
    DensityMatrix::basis(DIM, s.ground_index())
}

/// Readout yield of every ground basis state, in [`BasisState::all`] order.
pub fn basis_yields<T: Real>(l_on: &Liouvillian<T>, window: T) -> Result<[T; 9]> {
    let mut out = [T::zero(); 9];
    for (k, s) in BasisState::all().into_iter().enumerate() {
        out[k] = pl_trace(l_on, &ground_state(s), window, lit(READOUT_DT_US))?.yield_;
    }
    Ok(out)
}

/// `C = (I_ref − I_state)/I_ref` with `|0,+1⟩` as the reference.
pub fn contrast<T: Real>(state: BasisState, p: &ModelParams<T>, r: &RateTable<T>, b: T, window: T) -> Result<T> {
    let l_on = build_liouvillian(p, r, b, T::one())?;
    let dt = lit(READOUT_DT_US);
    let reference = pl_trace(&l_on, &ground_state(BasisState::REFERENCE), window, dt)?.yield_;
    if state == BasisState::REFERENCE {
        return Ok(T::zero());
    }
    let own = pl_trace(&l_on, &ground_state(state), window, dt)?.yield_;
    Ok((reference - own) / reference)
}

/// Contrasts of all nine ground basis states at one field.
pub fn contrast_all<T: Real>(p: &ModelParams<T>, r: &RateTable<T>, b: T, window: T) -> Result<[T; 9]> {
    let l_on = build_liouvillian(p, r, b, T::one())?;
    let yields = basis_yields(&l_on, window)?;
    let reference = yields[BasisState::REFERENCE.ground_index()];
    Ok(yields.map(|y| (reference - y) / reference))
}

/// Populations of the nine ground basis states.
pub fn ground_populations<T: Real>(rho: &ComplexMatrix<T>) -> [T; 9] {
    std::array::from_fn(|k| rho[(GS_OFFSET + k, GS_OFFSET + k)].re)
}

/// Ground-manifold nuclear populations `(n₊₁, n₀, n₋₁)`.
pub fn ground_nuclear_populations<T: Real>(rho: &ComplexMatrix<T>) -> [T; 3] {
    let g = ground_populations(rho);
    std::array::from_fn(|mi| g[mi] + g[3 + mi] + g[6 + mi])
}

/// Ground-manifold 9×9 block of a 21-level state.
pub fn ground_block<T: Real>(rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    rho.view((GS_OFFSET, GS_OFFSET), (9, 9)).into_owned()
}

/// Electron (`keep = 0`) or nuclear (`keep = 1`) reduced state of the ground
/// block, renormalized to unit trace.
pub fn ground_reduced<T: Real>(rho: &ComplexMatrix<T>, keep: usize) -> Result<DensityMatrix<T>> {
    let red = crate::spinops::partial_trace(&ground_block(rho), keep, &[3, 3])?;
    let tr = (0..3).fold(T::zero(), |acc, k| acc + red[(k, k)].re);
    if !(tr > T::zero()) {
        return Err(Error::InvalidState("no ground-manifold population".into()));
    }
    Ok(DensityMatrix::new_unchecked(red / cr(tr)))
}

/// Nuclear 3×3 reduced state summed over every electronic level of all three
/// manifolds. Unnormalized: its trace is the trace of `rho`.
pub fn nuclear_reduced<T: Real>(rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let mut out = ComplexMatrix::zeros(3, 3);
    for offset in [GS_OFFSET, GS_OFFSET + 3, GS_OFFSET + 6, ES_OFFSET, ES_OFFSET + 3, ES_OFFSET + 6, SINGLET_OFFSET] {
        out += rho.view((offset, offset), (3, 3));
    }
    out
}

pub fn manifold_population<T: Real>(rho: &ComplexMatrix<T>, m: Manifold) -> T {
    (m.offset()..m.offset() + m.dim()).fold(T::zero(), |acc, k| acc + rho[(k, k)].re)
}

/// Nuclear polarization after pumping the fully mixed state for `pump` µs and
/// relaxing in the dark for 1 µs.
pub fn pump_polarization<T: Real>(p: &ModelParams<T>, r: &RateTable<T>, b: T, pump: T) -> Result<T> {
    if !(pump > T::zero()) {
        return Err(Error::InvalidArgument("pump time must be positive".into()));
    }
    let l_on = build_liouvillian(p, r, b, T::one())?;
    let l_off = build_liouvillian(p, r, b, T::zero())?;
    let rho = DensityMatrix::maximally_mixed(DIM);
    let rho = propagate(&l_on, &rho, pump)?;
    let rho = propagate(&l_off, &rho, lit(RELAX_US))?;
    let [np, n0, nm] = ground_nuclear_populations(rho.matrix());
    crate::analytics::polarization_metric(n0, nm, np)
}
