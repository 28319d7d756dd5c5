//! Closed-form models: the four-level excited-state phase susceptibility,
//! the sensitivity proportionality, the nuclear polarization metric and the
//! excitation-rate scaling rule.

pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nvmodel::ModelParams;
use crate::scalar::{lit, Real};

const TAU: f64 = std::f64::consts::TAU;

/// `P = 1 − (3/2)(I₀ + I₋)/(I₀ + I₋ + I₊)`.
pub fn polarization_metric<T: Real>(i0: T, iminus: T, iplus: T) -> Result<T> {
    for v in [i0, iminus, iplus] {
        if !(v >= T::zero()) || !v.is_finite() {
            return Err(Error::InvalidArgument("line intensities must be finite and non-negative".into()));
        }
    }
    let total = i0 + iminus + iplus;
    if total == T::zero() {
        return Err(Error::InvalidArgument("all line intensities are zero".into()));
    }
    Ok(T::one() - lit::<T>(1.5) * (i0 + iminus) / total)
}

/// Linear rule `Γ₀ = Γ₁ · P/P_sat` (MHz).
pub fn excitation_rate_from_power<T: Real>(power_mw: T, psat_mw: T, gamma1: T) -> Result<T> {
    if !(psat_mw > T::zero()) {
        return Err(Error::InvalidArgument("saturation power must be positive".into()));
    }
    if !(power_mw >= T::zero()) {
        return Err(Error::InvalidArgument("laser power must be non-negative".into()));
    }
    Ok(gamma1 * power_mw / psat_mw)
}

/// Inputs of the sensitivity proportionality `η ∝ 1/(V √(N T₂ₙ))`.
/// Only ratios between estimates carry meaning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityEstimate<T = f64> {
    pub visibility: T,
    #[serde(rename = "T2n_us")]
    pub t2n: T,
    pub n: T,
}

impl<T: Real> SensitivityEstimate<T> {
    pub fn relative_eta(&self) -> Result<T> {
        if self.visibility == T::zero() {
            return Err(Error::InvalidArgument("zero visibility".into()));
        }
        if !(self.n > T::zero()) || !(self.t2n > T::zero()) {
            return Err(Error::InvalidArgument("N and T2n must be positive".into()));
        }
        Ok(T::one() / (self.visibility * (self.n * self.t2n).sqrt()))
    }
}

pub fn sensitivity_ratio<T: Real>(a: &SensitivityEstimate<T>, b: &SensitivityEstimate<T>) -> Result<T> {
    Ok(a.relative_eta()? / b.relative_eta()?)
}

/// Frame in which the transverse nuclear phase is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseFrame {
    /// The closed-form velocity as is. It tends to `ω₀/2` when the
    /// flip-flop coupling vanishes.
    #[default]
    Literal,
    /// The same velocity minus `ω₀/2`, so that an uncoupled nuclear spin
    /// accumulates no phase in the frame rotating with it.
    NuclearRotating,
}

/// Reduced excited-state model on `|0,+1⟩, |0,0⟩, |−1,0⟩, |−1,+1⟩`.
/// Frequencies in MHz, lifetime in µs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ESFourLevelModel<T = f64> {
    pub omega0: T,
    pub omega_e: T,
    pub omega: T,
    pub big_omega: T,
    pub a_par: T,
    pub a_perp: T,
    pub t_es: T,
}

impl<T: Real> ESFourLevelModel<T> {
    pub fn new(p: &ModelParams<T>, b: T, t_es: T) -> Result<Self> {
        if !(t_es > T::zero()) {
            return Err(Error::InvalidArgument("excited-state lifetime must be positive".into()));
        }
        let omega0 = p.p_quad + p.gamma_n * b;
        let omega_e = p.d_es - p.gamma_e * b;
        let omega = omega0 + omega_e + p.a_par;
        let big_omega = (p.a_perp * p.a_perp + omega * omega).sqrt();
        Ok(Self { omega0, omega_e, omega, big_omega, a_par: p.a_par, a_perp: p.a_perp, t_es })
    }
}

/// Field (G) where the reduced model's `|0,0⟩` and `|−1,+1⟩` are degenerate (`ω = 0`).
pub fn four_level_crossing<T: Real>(p: &ModelParams<T>) -> T {
    (p.p_quad + p.d_es + p.a_par) / (p.gamma_e - p.gamma_n)
}

/// `∂φ/∂t` in rad/µs.
pub fn phase_velocity<T: Real>(m: &ESFourLevelModel<T>, t: T) -> T {
    let tau = lit::<T>(TAU);
    let (w, om) = (m.omega * tau, m.big_omega * tau);
    let x = om * t * lit(0.5);
    let (s, c) = (x.sin(), x.cos());
    let denom = om * om * c * c + w * w * s * s;
    let lead = if denom == T::zero() { T::zero() } else { om * om * w / denom };
    (lead - (m.omega_e + m.a_par) * tau) * lit(0.5)
}

fn framed_velocity<T: Real>(m: &ESFourLevelModel<T>, frame: PhaseFrame, t: T) -> T {
    match frame {
        PhaseFrame::Literal => phase_velocity(m, t),
        PhaseFrame::NuclearRotating => phase_velocity(m, t) - m.omega0 * lit(0.5 * TAU),
    }
}

/// `φ(t) − Φ₀` tabulated on an adaptive panel grid over `[0, horizon]`.
struct AccumulatedPhase<'a, T: Real> {
    model: &'a ESFourLevelModel<T>,
    frame: PhaseFrame,
    edges: Vec<T>,
    cumulative: Vec<T>,
}

impl<'a, T: Real> AccumulatedPhase<'a, T> {
    fn new(model: &'a ESFourLevelModel<T>, frame: PhaseFrame, horizon: T, tol: T) -> Result<Self> {
        let panels = quadrature::integrate_panels(|t| framed_velocity(model, frame, t), T::zero(), horizon, tol, T::zero())?;
        let mut edges = vec![T::zero()];
        let mut cumulative = vec![T::zero()];
        for (_, hi, v) in panels {
            edges.push(hi);
            let last = *cumulative.last().expect("non-empty");
            cumulative.push(last + v);
        }
        Ok(Self { model, frame, edges, cumulative })
    }

    fn at(&self, t: T) -> T {
        let k = match self.edges.binary_search_by(|e| e.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(k) => return self.cumulative[k],
            Err(k) => k.saturating_sub(1).min(self.edges.len() - 2),
        };
        let f = |s: T| framed_velocity(self.model, self.frame, s);
        self.cumulative[k] + quadrature::kronrod(&f, self.edges[k], t)
    }
}

/// Mean phase per excited-state visit and the susceptibilities derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSusceptibility<T = f64> {
    pub mean_phase_rad: T,
    /// `⟨Δφ⟩/T` (rad per µs of excited-state residence).
    pub per_es_time: T,
    /// `⟨Δφ⟩` times the optical cycling rate (rad per µs of pumping).
    pub per_pump_time: T,
    pub frame: PhaseFrame,
}

/// Number of lifetimes after which the exponential weight is truncated.
const HORIZON_LIFETIMES: f64 = 20.0;

/// `χ_φ = ⟨Δφ⟩/T` (rad/µs) in the literal frame.
pub fn phase_susceptibility<T: Real>(p: &ModelParams<T>, b: T, t_es: T) -> Result<T> {
    Ok(phase_susceptibility_with(p, b, t_es, PhaseFrame::Literal, lit(6.74))?.per_es_time)
}

/// Full susceptibility record. `excitation_rate` (MHz) sets the optical
/// cycle time `1/Γ_exc + T` for the per-pumping-time variant.
pub fn phase_susceptibility_with<T: Real>(
    p: &ModelParams<T>,
    b: T,
    t_es: T,
    frame: PhaseFrame,
    excitation_rate: T,
) -> Result<PhaseSusceptibility<T>> {
    let model = ESFourLevelModel::new(p, b, t_es)?;
    let horizon = t_es * lit(HORIZON_LIFETIMES);
    let tol = lit::<T>(1e-9);
    let phase = AccumulatedPhase::new(&model, frame, horizon, tol)?;
    let weight = |t: T| (-t / t_es).exp() / t_es;
    let (mean, _) = quadrature::integrate(|t| weight(t) * phase.at(t), T::zero(), horizon, tol, T::zero())?;
    let per_pump_time = if excitation_rate > T::zero() {
        mean / (T::one() / excitation_rate + t_es)
    } else {
        T::zero()
    };
    Ok(PhaseSusceptibility { mean_phase_rad: mean, per_es_time: mean / t_es, per_pump_time, frame })
}
