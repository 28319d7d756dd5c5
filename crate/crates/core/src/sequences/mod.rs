//! Pulse programs and the named experiments built from them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::quadrature::gauss_hermite;
use crate::engine::{
    ground_nuclear_populations, ground_populations, pl_readout, propagate, PLRecord, Propagator, INIT_PUMP_US,
    READOUT_DT_US, READOUT_WINDOW_US, RELAX_US,
};
use crate::error::{Error, Result};
use crate::fitting::{fit_ramsey, FitResult};
use crate::levels::{triplet_level, BasisState, Manifold, DIM, GS_OFFSET};
use crate::nvmodel::{build_liouvillian, full_hamiltonian, gs_hamiltonian, Block, Liouvillian, ModelParams, RateTable};
use crate::scalar::{c, cis, cr, lit, to_f64, Real};
use crate::spinops::{herm_eigh, ComplexMatrix, DensityMatrix};

const TAU: f64 = std::f64::consts::TAU;

/// Electron transition addressed by a microwave or swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `0 ↔ −1`
    Minus,
    /// `0 ↔ +1`
    Plus,
}

impl Branch {
    pub fn ms(self) -> i8 {
        match self {
            Branch::Minus => -1,
            Branch::Plus => 1,
        }
    }
}

fn zero<T: Real>() -> T {
    T::zero()
}

fn default_line() -> i8 {
    1
}

fn default_window<T: Real>() -> T {
    lit(READOUT_WINDOW_US)
}

fn default_dt<T: Real>() -> T {
    lit(READOUT_DT_US)
}

/// One step of a pulse program. Durations in µs, frequencies in MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub enum Segment<T = f64> {
    Laser {
        scale: T,
        #[serde(rename = "dur_us")]
        dur: T,
    },
    /// Microwave drive. The carrier sits `carrier_detuning` above the
    /// dressed `0 ↔ ms` transition of nuclear line `line` (an `m_I` value).
    Mw {
        branch: Branch,
        #[serde(rename = "rabi_MHz")]
        rabi: T,
        #[serde(rename = "carrier_detuning_MHz")]
        #[serde(default = "zero")]
        carrier_detuning: T,
        #[serde(rename = "phase_rad")]
        #[serde(default = "zero")]
        phase: T,
        #[serde(rename = "dur_us")]
        dur: T,
        #[serde(default = "default_line")]
        line: i8,
    },
    Wait {
        #[serde(rename = "dur_us")]
        dur: T,
    },
    DephaseElectron,
    AdiabaticSwap {
        branch: Branch,
    },
    /// Instantaneous rotation of the ground `m_S = 0` nuclear pair
    /// `{|0,+1⟩, |0,0⟩}`, with its azimuth in the frame rotating at the
    /// nuclear transition frequency from the start of the sequence.
    NuclearRotation {
        #[serde(rename = "angle_rad")]
        angle: T,
        #[serde(rename = "phase_rad")]
        #[serde(default = "zero")]
        phase: T,
    },
    /// Instantaneous ideal electron rotation on a branch, every nuclear line alike.
    ElectronRotation {
        branch: Branch,
        #[serde(rename = "angle_rad")]
        angle: T,
        #[serde(rename = "phase_rad")]
        #[serde(default = "zero")]
        phase: T,
    },
    Readout {
        #[serde(rename = "window_us")]
        #[serde(default = "default_window")]
        window: T,
        #[serde(rename = "dt_us")]
        #[serde(default = "default_dt")]
        dt: T,
    },
}

impl<T: Real> Segment<T> {
    /// Elapsed lab time of the segment (µs).
    pub fn duration(&self) -> T {
        match self {
            Segment::Laser { dur, .. } | Segment::Mw { dur, .. } | Segment::Wait { dur } => *dur,
            Segment::Readout { window, .. } => *window,
            _ => T::zero(),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite_nonneg = |x: T, what: &str| {
            if x >= T::zero() && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidSequence(format!("{what} must be finite and >= 0")))
            }
        };
        match self {
            Segment::Laser { scale, dur } => {
                finite_nonneg(*scale, "laser scale")?;
                finite_nonneg(*dur, "laser duration")
            }
            Segment::Mw { rabi, carrier_detuning, phase, dur, line, .. } => {
                finite_nonneg(*rabi, "Rabi frequency")?;
                finite_nonneg(*dur, "pulse duration")?;
                if !carrier_detuning.is_finite() || !phase.is_finite() {
                    return Err(Error::InvalidSequence("carrier detuning and phase must be finite".into()));
                }
                if !(-1..=1).contains(line) {
                    return Err(Error::InvalidSequence(format!("nuclear line {line} is not in {{-1, 0, 1}}")));
                }
                if *rabi == T::zero() && *dur > T::zero() {
                    return Err(Error::InvalidSequence("degenerate pulse: zero Rabi frequency".into()));
                }
                Ok(())
            }
            Segment::Wait { dur } => finite_nonneg(*dur, "wait duration"),
            Segment::NuclearRotation { angle, phase }
            | Segment::ElectronRotation { angle, phase, .. } => {
                if angle.is_finite() && phase.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidSequence("rotation angle and phase must be finite".into()))
                }
            }
            Segment::Readout { window, dt } => {
                if *window > T::zero() && *dt > T::zero() && window.is_finite() && dt.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidSequence("readout window and step must be positive".into()))
                }
            }
            Segment::DephaseElectron | Segment::AdiabaticSwap { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct Sequence<T = f64> {
    pub label: String,
    pub segments: Vec<Segment<T>>,
    #[serde(rename = "field_G")]
    pub field: T,
}

impl<T: Real> Sequence<T> {
    pub fn new(label: impl Into<String>, field_g: T, segments: Vec<Segment<T>>) -> Result<Self> {
        let seq = Self { label: label.into(), segments, field: field_g };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.field.is_finite()) {
            return Err(Error::InvalidSequence("field must be finite".into()));
        }
        for s in &self.segments {
            s.validate()?;
        }
        let readouts = self.segments.iter().filter(|s| matches!(s, Segment::Readout { .. })).count();
        if readouts > 1 {
            return Err(Error::InvalidSequence("more than one readout".into()));
        }
        if readouts == 1 && !matches!(self.segments.last(), Some(Segment::Readout { .. })) {
            return Err(Error::InvalidSequence("readout must be the last segment".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.duration())
    }
}

/// Normalized Ramsey signal over the second-pulse phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeData<T = f64> {
    pub thetas: Vec<T>,
    pub signal: Vec<T>,
}

impl<T: Real> FringeData<T> {
    pub fn new(thetas: Vec<T>, signal: Vec<T>) -> Result<Self> {
        if thetas.len() != signal.len() {
            return Err(Error::Dimension(format!("{} phases but {} signal values", thetas.len(), signal.len())));
        }
        if thetas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("phases must be strictly increasing".into()));
        }
        Ok(Self { thetas, signal })
    }
}

/// `n` equally spaced phases over `[0, 2π)`.
pub fn theta_grid<T: Real>(n: usize) -> Vec<T> {
    (0..n).map(|k| lit(TAU * k as f64 / n as f64)).collect()
}

/// Default number of fringe phases.
pub const THETA_POINTS: usize = 12;

/// Phenomenological Gaussian average over the microwave detuning, with
/// angular width `√2/T₂*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Broadening<T = f64> {
    pub t2star_us: T,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn default_nodes() -> usize {
    9
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct MwKey {
    branch: Branch,
    line: i8,
    rabi: u64,
    carrier: u64,
    phase: u64,
}

/// Everything needed to run sequences at one field, with caches for the
/// generators and the initialized state.
pub struct Simulator<T: Real> {
    params: ModelParams<T>,
    rates: RateTable<T>,
    field: T,
    broadening: Option<Broadening<T>>,
    l_off: Arc<Liouvillian<T>>,
    lasers: Mutex<HashMap<u64, Arc<Liouvillian<T>>>>,
    drives: Mutex<HashMap<MwKey, Arc<Liouvillian<T>>>>,
    gs_levels: [T; 9],
    initialized: OnceLock<DensityMatrix<T>>,
    reference: OnceLock<T>,
}

impl<T: Real> Simulator<T> {
    pub fn new(p: &ModelParams<T>, r: &RateTable<T>, b: T) -> Result<Self> {
        let l_off = Arc::new(build_liouvillian(p, r, b, T::zero())?);
        Ok(Self {
            params: p.clone(),
            rates: r.clone(),
            field: b,
            broadening: None,
            l_off,
            lasers: Mutex::default(),
            drives: Mutex::default(),
            gs_levels: dressed_levels(p, b)?,
            initialized: OnceLock::new(),
            reference: OnceLock::new(),
        })
    }

    pub fn with_broadening(mut self, broadening: Option<Broadening<T>>) -> Result<Self> {
        if let Some(bw) = broadening {
            if !(bw.t2star_us > T::zero()) || bw.nodes == 0 {
                return Err(Error::InvalidArgument("broadening needs T2* > 0 and at least one node".into()));
            }
        }
        self.broadening = broadening;
        Ok(self)
    }

    pub fn field_g(&self) -> T {
        self.field
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn rates(&self) -> &RateTable<T> {
        &self.rates
    }

    pub fn laser_off(&self) -> &Liouvillian<T> {
        &self.l_off
    }

    pub fn laser(&self, scale: T) -> Result<Arc<Liouvillian<T>>> {
        if scale == T::zero() {
            return Ok(self.l_off.clone());
        }
        let key = to_f64(scale).to_bits();
        let mut map = self.lasers.lock().expect("laser cache poisoned");
        if let Some(l) = map.get(&key) {
            return Ok(l.clone());
        }
        let l = Arc::new(build_liouvillian(&self.params, &self.rates, self.field, scale)?);
        map.insert(key, l.clone());
        Ok(l)
    }

    /// Dressed ground energy (MHz) of the level adiabatically connected to `|ms, mi⟩`.
    pub fn level(&self, ms: i8, mi: i8) -> T {
        self.gs_levels[triplet_level(Manifold::Ground, ms, mi) - GS_OFFSET]
    }

    /// Dressed `|0,mi⟩ → |ms,mi⟩` transition frequency (MHz).
    pub fn line_frequency(&self, branch: Branch, mi: i8) -> T {
        self.level(branch.ms(), mi) - self.level(0, mi)
    }

    /// Ground `|0,+1⟩ ↔ |0,0⟩` splitting (MHz) defining the nuclear rotating frame.
    pub fn nuclear_frequency(&self) -> T {
        self.level(0, 1) - self.level(0, 0)
    }

    /// Laser-off generator in the frame rotating at `carrier` (MHz) on the
    /// `ms` ground levels, plus the drive.
    fn drive(&self, branch: Branch, line: i8, rabi: T, carrier: T, phase: T) -> Arc<Liouvillian<T>> {
        let key = MwKey {
            branch,
            line,
            rabi: to_f64(rabi).to_bits(),
            carrier: to_f64(carrier).to_bits(),
            phase: to_f64(phase).to_bits(),
        };
        let mut map = self.drives.lock().expect("drive cache poisoned");
        if let Some(l) = map.get(&key) {
            return l.clone();
        }
        let mut h = full_hamiltonian(&self.params, self.field);
        // static couplings between the two driven sublevels oscillate at the
        // carrier in this frame and average out
        let zeros: Vec<usize> = [1i8, 0, -1].iter().map(|&mi| triplet_level(Manifold::Ground, 0, mi)).collect();
        let others: Vec<usize> =
            [1i8, 0, -1].iter().map(|&mi| triplet_level(Manifold::Ground, branch.ms(), mi)).collect();
        for &a in &zeros {
            for &b in &others {
                h[(a, b)] = cr(T::zero());
                h[(b, a)] = cr(T::zero());
            }
        }
        let half = cr(rabi * lit(0.5));
        for mi in [1i8, 0, -1] {
            let zero = triplet_level(Manifold::Ground, 0, mi);
            let other = triplet_level(Manifold::Ground, branch.ms(), mi);
            h[(other, other)] -= cr(carrier);
            h[(zero, other)] += half * cis(phase);
            h[(other, zero)] += half * cis(-phase);
        }
        let l = Arc::new(self.l_off.with_hamiltonian(h));
        map.insert(key, l.clone());
        l
    }

    fn mw(
        &self,
        rho: &DensityMatrix<T>,
        branch: Branch,
        rabi: T,
        detuning: T,
        phase: T,
        dur: T,
        line: i8,
    ) -> Result<DensityMatrix<T>> {
        if dur == T::zero() {
            return Ok(rho.clone());
        }
        let nominal = self.line_frequency(branch, line) + detuning;
        let offsets: Vec<(T, T)> = match self.broadening {
            None => vec![(T::zero(), T::one())],
            Some(bw) => {
                // σ_f = √2/(2π T₂*) and δ = √2 σ_f x for ∫ e^{−x²}
                let sigma = lit::<T>(2f64.sqrt() / TAU) / bw.t2star_us;
                let (x, w) = gauss_hermite(bw.nodes);
                let norm = std::f64::consts::PI.sqrt();
                x.iter()
                    .zip(&w)
                    .map(|(&x, &w)| (sigma * lit(2f64.sqrt() * x), lit(w / norm)))
                    .collect()
            }
        };
        let mut acc = ComplexMatrix::<T>::zeros(DIM, DIM);
        for (offset, weight) in offsets {
            let carrier = nominal + offset;
            let l = self.drive(branch, line, rabi, carrier, phase);
            let rotating = propagate(&l, rho, dur)?;
            // back to the lab frame: exp(−i 2π f τ P_ms)
            let angle = carrier * dur * lit(TAU);
            let mut m = rotating.into_matrix();
            for mi in [1i8, 0, -1] {
                let k = triplet_level(Manifold::Ground, branch.ms(), mi);
                let row = cis(-angle);
                for j in 0..DIM {
                    m[(k, j)] *= row;
                    m[(j, k)] *= row.conj();
                }
            }
            acc += m * cr(weight);
        }
        Ok(DensityMatrix::new_unchecked(acc))
    }

    /// Applies `seq` to `rho0`; `observe` sees the state after every segment.
    pub fn run_observed(
        &self,
        seq: &Sequence<T>,
        rho0: &DensityMatrix<T>,
        mut observe: impl FnMut(usize, &DensityMatrix<T>),
    ) -> Result<(DensityMatrix<T>, Option<PLRecord<T>>)> {
        seq.validate()?;
        if rho0.dim() != DIM {
            return Err(Error::Dimension(format!("expected a {DIM}-level state, got {}", rho0.dim())));
        }
        let mut rho = rho0.clone();
        let mut elapsed = T::zero();
        let mut record = None;
        for (k, seg) in seq.segments.iter().enumerate() {
            rho = match seg {
                Segment::Laser { scale, dur } => propagate(&*self.laser(*scale)?, &rho, *dur)?,
                Segment::Wait { dur } => propagate(&self.l_off, &rho, *dur)?,
                Segment::Mw { branch, rabi, carrier_detuning, phase, dur, line } => {
                    self.mw(&rho, *branch, *rabi, *carrier_detuning, *phase, *dur, *line)?
                }
                Segment::DephaseElectron => dephase_electron(&rho),
                Segment::AdiabaticSwap { branch } => adiabatic_swap(&rho, *branch),
                Segment::NuclearRotation { angle, phase } => {
                    let lab = *phase - self.nuclear_frequency() * elapsed * lit(TAU);
                    let pairs = [(triplet_level(Manifold::Ground, 0, 1), triplet_level(Manifold::Ground, 0, 0))];
                    rotate(&rho, &pairs, *angle, lab)
                }
                Segment::ElectronRotation { branch, angle, phase } => {
                    rotate(&rho, &electron_pairs(*branch), *angle, *phase)
                }
                Segment::Readout { window, dt } => {
                    let (rec, out) = pl_readout(&*self.laser(T::one())?, &rho, *window, *dt)?;
                    record = Some(rec);
                    out
                }
            };
            elapsed += seg.duration();
            observe(k, &rho);
        }
        Ok((rho, record))
    }

    pub fn run(&self, seq: &Sequence<T>, rho0: &DensityMatrix<T>) -> Result<(DensityMatrix<T>, Option<PLRecord<T>>)> {
        self.run_observed(seq, rho0, |_, _| {})
    }

    /// Fully mixed state pumped for 20 µs and relaxed in the dark for 1 µs.
    pub fn initialized(&self) -> Result<DensityMatrix<T>> {
        if let Some(rho) = self.initialized.get() {
            return Ok(rho.clone());
        }
        let rho = DensityMatrix::maximally_mixed(DIM);
        let rho = propagate(&*self.laser(T::one())?, &rho, lit(INIT_PUMP_US))?;
        let rho = propagate(&self.l_off, &rho, lit(RELAX_US))?;
        Ok(self.initialized.get_or_init(|| rho).clone())
    }

    /// Readout yield of the pure `|0,+1⟩` state.
    pub fn reference_yield(&self) -> Result<T> {
        if let Some(y) = self.reference.get() {
            return Ok(*y);
        }
        let rho = crate::engine::ground_state(BasisState::REFERENCE);
        let (rec, _) = pl_readout(&*self.laser(T::one())?, &rho, lit(READOUT_WINDOW_US), lit(READOUT_DT_US))?;
        Ok(*self.reference.get_or_init(|| rec.yield_))
    }

    /// One fringe point after initialization, normalized by the reference yield.
    pub fn ramsey_point(&self, kind: RamseyKind, repump: T, theta: T) -> Result<T> {
        let seq = ramsey_sequence(kind, self.field, repump, theta)?;
        let (_, rec) = self.run(&seq, &self.initialized()?)?;
        let rec = rec.ok_or_else(|| Error::InvalidSequence("Ramsey sequence without readout".into()))?;
        Ok(rec.yield_ / self.reference_yield()?)
    }

    pub fn ramsey(&self, kind: RamseyKind, repump: T, thetas: &[T]) -> Result<FringeData<T>> {
        if thetas.is_empty() {
            return Err(Error::InvalidArgument("no fringe phases".into()));
        }
        let signal = thetas
            .par_iter()
            .map(|&th| self.ramsey_point(kind, repump, th))
            .collect::<Result<Vec<_>>>()?;
        FringeData::new(thetas.to_vec(), signal)
    }

    pub fn repump_scan(&self, times: &[T], kind: RamseyKind, thetas: &[T]) -> Result<Vec<RepumpPoint<T>>> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("no repump times".into()));
        }
        times
            .par_iter()
            .map(|&t| {
                let fringe = self.ramsey(kind, t, thetas)?;
                Ok(RepumpPoint::from_fit(t, fit_ramsey(&fringe.thetas, &fringe.signal)))
            })
            .collect()
    }

    /// Readout yields of the initialized state and of its swaps to `m_S = ±1`.
    pub fn calibration_yields(&self) -> Result<CalibrationYields<T>> {
        let init = self.initialized()?;
        let read = |swap: Option<Branch>| -> Result<T> {
            let mut segments = Vec::new();
            if let Some(branch) = swap {
                segments.push(Segment::AdiabaticSwap { branch });
            }
            segments.push(Segment::Readout { window: lit(READOUT_WINDOW_US), dt: lit(READOUT_DT_US) });
            let seq = Sequence::new("calibration", self.field, segments)?;
            Ok(self.run(&seq, &init)?.1.map(|r| r.yield_).unwrap_or_else(T::zero))
        };
        Ok(CalibrationYields { zero: read(None)?, plus: read(Some(Branch::Plus))?, minus: read(Some(Branch::Minus))? })
    }
}

/// Ground eigenvalues (MHz), each assigned to the basis state it overlaps most.
fn dressed_levels<T: Real>(p: &ModelParams<T>, b: T) -> Result<[T; 9]> {
    Ok(dressed_ground(p, b)?.0)
}

/// Ground eigenvalues (MHz) and eigenvectors, column `k` being the eigenstate
/// that overlaps most with basis state `k`, phased so its `k`-th entry is
/// real and positive.
pub fn dressed_ground<T: Real>(p: &ModelParams<T>, b: T) -> Result<([T; 9], ComplexMatrix<T>)> {
    let (vals, vecs) = herm_eigh(&gs_hamiltonian(p, b))?;
    let mut levels = [T::zero(); 9];
    let mut basis = ComplexMatrix::zeros(9, 9);
    let mut taken = [false; 9];
    for k in 0..9 {
        let e = (0..9)
            .filter(|&e| !taken[e])
            .max_by(|&a, &b| {
                vecs[(k, a)]
                    .norm_sqr()
                    .partial_cmp(&vecs[(k, b)].norm_sqr())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or_else(|| Error::InvalidArgument("degenerate level assignment".into()))?;
        taken[e] = true;
        levels[k] = vals[e];
        let lead = vecs[(k, e)];
        let phase = cr(lead.norm_sqr().sqrt()) / lead;
        basis.set_column(k, &(vecs.column(e) * phase));
    }
    Ok((levels, basis))
}

fn electron_pairs(branch: Branch) -> Vec<(usize, usize)> {
    [1i8, 0, -1]
        .iter()
        .map(|&mi| (triplet_level(Manifold::Ground, 0, mi), triplet_level(Manifold::Ground, branch.ms(), mi)))
        .collect()
}

/// `exp(−i θ/2 (e^{iφ}|a⟩⟨b| + h.c.))` on each pair, applied as `U ρ U†`.
fn rotate<T: Real>(rho: &DensityMatrix<T>, pairs: &[(usize, usize)], angle: T, phase: T) -> DensityMatrix<T> {
    let mut u = ComplexMatrix::<T>::identity(DIM, DIM);
    let half = angle * lit(0.5);
    let (cos, sin) = (half.cos(), half.sin());
    for &(a, b) in pairs {
        u[(a, a)] = cr(cos);
        u[(b, b)] = cr(cos);
        u[(a, b)] = c(T::zero(), -sin) * cis(phase);
        u[(b, a)] = c(T::zero(), -sin) * cis(-phase);
    }
    DensityMatrix::new_unchecked(&u * rho.matrix() * u.adjoint())
}

fn ms_of_ground(k: usize) -> Option<i8> {
    match crate::levels::quantum_numbers(k) {
        (Manifold::Ground, ms, _) => ms,
        _ => None,
    }
}

/// Zeroes ground-manifold coherences between different `m_S`.
pub fn dephase_electron<T: Real>(rho: &DensityMatrix<T>) -> DensityMatrix<T> {
    let mut m = rho.matrix().clone();
    for i in 0..DIM {
        for j in 0..DIM {
            if let (Some(a), Some(b)) = (ms_of_ground(i), ms_of_ground(j)) {
                if a != b {
                    m[(i, j)] = Complex::new(T::zero(), T::zero());
                }
            }
        }
    }
    DensityMatrix::new_unchecked(m)
}

/// Exchanges the ground `m_S = 0` and `m_S = ms` sublevels, coherences included.
pub fn adiabatic_swap<T: Real>(rho: &DensityMatrix<T>, branch: Branch) -> DensityMatrix<T> {
    let mut perm: Vec<usize> = (0..DIM).collect();
    for (a, b) in electron_pairs(branch) {
        perm.swap(a, b);
    }
    let m = rho.matrix();
    DensityMatrix::new_unchecked(ComplexMatrix::from_fn(DIM, DIM, |i, j| m[(perm[i], perm[j])]))
}

/// Runs `seq` on `rho0` with a simulator built for the sequence's field.
pub fn run_sequence<T: Real>(
    seq: &Sequence<T>,
    rho0: &DensityMatrix<T>,
    p: &ModelParams<T>,
    r: &RateTable<T>,
) -> Result<(DensityMatrix<T>, Option<PLRecord<T>>)> {
    Simulator::new(p, r, seq.field)?.run(seq, rho0)
}

/// 1.23 rad on `0 ↔ −1`, π/2 on `0 ↔ +1` (both at 12 MHz), then electron dephasing.
pub fn thermal_prep_segments<T: Real>() -> Vec<Segment<T>> {
    let rabi = lit::<T>(12.0);
    let pulse = |branch, angle: f64| Segment::Mw {
        branch,
        rabi,
        carrier_detuning: T::zero(),
        phase: T::zero(),
        dur: lit::<T>(angle / TAU) / rabi,
        line: 1,
    };
    vec![pulse(Branch::Minus, 1.23), pulse(Branch::Plus, std::f64::consts::FRAC_PI_2), Segment::DephaseElectron]
}

pub fn prepare_thermal<T: Real>(
    rho: &DensityMatrix<T>,
    p: &ModelParams<T>,
    r: &RateTable<T>,
    b: T,
) -> Result<DensityMatrix<T>> {
    let seq = Sequence::new("thermal preparation", b, thermal_prep_segments())?;
    Ok(run_sequence(&seq, rho, p, r)?.0)
}

/// 625 ns, 0.8 MHz π pulse on the `|0,0⟩ → |−1,0⟩` line.
pub fn cnot_segment<T: Real>() -> Segment<T> {
    Segment::Mw {
        branch: Branch::Minus,
        rabi: lit(0.8),
        carrier_detuning: T::zero(),
        phase: T::zero(),
        dur: lit(0.625),
        line: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RamseyKind {
    Longitudinal,
    Transverse,
    Control,
}

impl RamseyKind {
    pub const ALL: [RamseyKind; 3] = [RamseyKind::Longitudinal, RamseyKind::Transverse, RamseyKind::Control];

    pub fn name(self) -> &'static str {
        match self {
            RamseyKind::Longitudinal => "longitudinal",
            RamseyKind::Transverse => "transverse",
            RamseyKind::Control => "control",
        }
    }
}

impl std::str::FromStr for RamseyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RamseyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown Ramsey kind '{s}'")))
    }
}

impl std::fmt::Display for RamseyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything after initialization for one fringe phase.
pub fn ramsey_sequence<T: Real>(kind: RamseyKind, b: T, repump: T, theta: T) -> Result<Sequence<T>> {
    let half_pi = lit::<T>(std::f64::consts::FRAC_PI_2);
    let first = Segment::NuclearRotation { angle: half_pi, phase: T::zero() };
    let second = Segment::NuclearRotation { angle: half_pi, phase: theta };
    let mut pump = Vec::new();
    if repump > T::zero() {
        pump.push(Segment::Laser { scale: T::one(), dur: repump });
    }
    pump.push(Segment::Wait { dur: lit(RELAX_US) });
    let mut segments = vec![first];
    match kind {
        RamseyKind::Longitudinal => {
            segments.push(second);
            segments.extend(thermal_prep_segments());
            segments.extend(pump);
        }
        RamseyKind::Transverse => {
            segments.extend(thermal_prep_segments());
            segments.extend(pump);
            segments.push(second);
        }
        RamseyKind::Control => {
            segments.push(second);
            segments.extend(pump);
        }
    }
    segments.push(cnot_segment());
    segments.push(Segment::Readout { window: lit(READOUT_WINDOW_US), dt: lit(READOUT_DT_US) });
    Sequence::new(format!("{kind} ramsey"), b, segments)
}

pub fn ramsey_experiment<T: Real>(
    kind: RamseyKind,
    b: T,
    repump: T,
    thetas: &[T],
    p: &ModelParams<T>,
    r: &RateTable<T>,
) -> Result<FringeData<T>> {
    Simulator::new(p, r, b)?.ramsey(kind, repump, thetas)
}

/// Fitted fringe at one repump time. A failed fit leaves `error` set and
/// the numbers at NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepumpPoint<T = f64> {
    pub repump_us: T,
    pub visibility: T,
    pub phase: T,
    pub phase_std: T,
    pub residual: T,
    pub converged: bool,
    pub error: Option<String>,
}

impl<T: Real> RepumpPoint<T> {
    fn from_fit(t: T, fit: Result<FitResult<T>>) -> Self {
        match fit {
            Ok(f) => Self {
                repump_us: t,
                visibility: f.value("V").unwrap_or_else(|| lit(f64::NAN)),
                phase: f.value("phi").unwrap_or_else(|| lit(f64::NAN)),
                phase_std: f.std_error("phi").unwrap_or_else(|| lit(f64::NAN)),
                residual: f.residual_norm,
                converged: f.converged,
                error: None,
            },
            Err(e) => Self {
                repump_us: t,
                visibility: lit(f64::NAN),
                phase: lit(f64::NAN),
                phase_std: lit(f64::NAN),
                residual: lit(f64::NAN),
                converged: false,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Visibility and phase versus repump time on a 12-point phase grid.
pub fn repump_scan<T: Real>(
    b: T,
    times: &[T],
    kind: RamseyKind,
    p: &ModelParams<T>,
    r: &RateTable<T>,
) -> Result<Vec<RepumpPoint<T>>> {
    Simulator::new(p, r, b)?.repump_scan(times, kind, &theta_grid(THETA_POINTS))
}

/// Starting state of [`population_track`]: thermal electron in the ground
/// manifold with the nuclear spin in `|m_I⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStart {
    ThermalPlus,
    ThermalZero,
}

impl TrackStart {
    pub fn state<T: Real>(self) -> DensityMatrix<T> {
        let mi = match self {
            TrackStart::ThermalPlus => 1,
            TrackStart::ThermalZero => 0,
        };
        thermal_electron_with_nucleus(mi)
    }
}

/// `(I/3) ⊗ |mi⟩⟨mi|` in the ground manifold.
pub fn thermal_electron_with_nucleus<T: Real>(mi: i8) -> DensityMatrix<T> {
    let mut m = ComplexMatrix::zeros(DIM, DIM);
    for ms in [1i8, 0, -1] {
        let k = triplet_level(Manifold::Ground, ms, mi);
        m[(k, k)] = cr(T::one() / lit(3.0));
    }
    DensityMatrix::new_unchecked(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrack<T = f64> {
    pub times: Vec<T>,
    /// Ground basis populations in [`BasisState::all`] order.
    pub ground: Vec<[T; 9]>,
    /// Ground nuclear populations `(n₊₁, n₀, n₋₁)`.
    pub nuclear: Vec<[T; 3]>,
    /// Nuclear populations summed over all three manifolds.
    pub nuclear_total: Vec<[T; 3]>,
}

impl<T: Real> PopulationTrack<T> {
    /// Time at which `|ms, mi⟩` is most populated once pumping has started
    /// to feed it, skipping the initial drop while population is shelved in
    /// the excited and singlet levels.
    pub fn peak_time(&self, s: BasisState) -> T {
        let k = s.ground_index() - GS_OFFSET;
        let mut start = 0;
        while start + 1 < self.ground.len() && self.ground[start + 1][k] <= self.ground[start][k] {
            start += 1;
        }
        if start + 1 == self.ground.len() {
            start = 0;
        }
        let mut best = start;
        for (i, g) in self.ground.iter().enumerate().skip(start) {
            if g[k] > self.ground[best][k] {
                best = i;
            }
        }
        self.times[best]
    }
}

/// Sampling intervals used by [`population_track`].
pub const TRACK_STEPS: usize = 200;

/// `(n₊₁, n₀, n₋₁)` over every level of the model.
pub fn total_nuclear_populations<T: Real>(rho: &ComplexMatrix<T>) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for k in 0..DIM {
        let (_, _, mi) = crate::levels::quantum_numbers(k);
        out[crate::spinops::spin1_index(mi)] += rho[(k, k)].re;
    }
    out
}

/// Laser-on evolution from `start` sampled on a uniform grid over `[0, horizon]`.
pub fn population_track<T: Real>(
    b: T,
    start: TrackStart,
    horizon: T,
    p: &ModelParams<T>,
    r: &RateTable<T>,
) -> Result<PopulationTrack<T>> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let l_on = build_liouvillian(p, r, b, T::one())?;
    let h = horizon / lit(TRACK_STEPS as f64);
    let prop = Propagator::new(&l_on, h, Block::Intra)?;
    let mut rho = start.state::<T>().into_matrix();
    let mut track =
        PopulationTrack { times: Vec::new(), ground: Vec::new(), nuclear: Vec::new(), nuclear_total: Vec::new() };
    for k in 0..=TRACK_STEPS {
        if k > 0 {
            rho = prop.apply(&rho);
        }
        track.times.push(h * lit(k as f64));
        track.ground.push(ground_populations(&rho));
        track.nuclear.push(ground_nuclear_populations(&rho));
        track.nuclear_total.push(total_nuclear_populations(&rho));
    }
    Ok(track)
}

/// Readout yields behind the tomography calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationYields<T = f64> {
    pub zero: T,
    pub plus: T,
    pub minus: T,
}

impl<T: Real> CalibrationYields<T> {
    /// `(C₊, C₋)` relative to the `m_S = 0` yield.
    pub fn contrasts(&self) -> (T, T) {
        ((self.zero - self.plus) / self.zero, (self.zero - self.minus) / self.zero)
    }
}

/// Contrasts of the swapped-to-`±1` initialized state relative to the initialized state.
pub fn qst_calibration<T: Real>(b: T, p: &ModelParams<T>, r: &RateTable<T>) -> Result<(T, T)> {
    Ok(Simulator::new(p, r, b)?.calibration_yields()?.contrasts())
}
