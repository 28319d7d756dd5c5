use serde::{Deserialize, Serialize};

use super::Model;
use crate::scalar::{lit, Real};

const TAU: f64 = std::f64::consts::TAU;

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// `(V/2) cos(θ + φ) + B` over `[V, phi, B]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RamseyFringe;

impl<T: Real> Model<T> for RamseyFringe {
    fn names(&self) -> Vec<String> {
        names(&["V", "phi", "B"])
    }

    fn eval(&self, x: T, p: &[T]) -> T {
        p[0] * lit(0.5) * (x + p[1]).cos() + p[2]
    }

    fn gradient(&self, x: T, p: &[T], out: &mut [T]) {
        let (s, c) = (x + p[1]).sin_cos();
        out[0] = c * lit(0.5);
        out[1] = -p[0] * lit(0.5) * s;
        out[2] = T::one();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationForm {
    /// `I₀ (P/P_sat)/(1 + P/P_sat) + B`, rising with power.
    Standard,
    /// `I₀/(1 + P/P_sat) + B`, falling with power.
    Literal,
}

impl SaturationForm {
    pub fn name(self) -> &'static str {
        match self {
            SaturationForm::Standard => "standard",
            SaturationForm::Literal => "literal",
        }
    }
}

/// Saturation curve over `[I0, Psat, B]`.
#[derive(Debug, Clone, Copy)]
pub struct Saturation {
    pub form: SaturationForm,
}

impl Saturation {
    /// Coefficient of `I₀`.
    pub fn shape<T: Real>(&self, power: T, psat: T) -> T {
        let u = power / psat;
        match self.form {
            SaturationForm::Standard => u / (T::one() + u),
            SaturationForm::Literal => T::one() / (T::one() + u),
        }
    }
}

impl<T: Real> Model<T> for Saturation {
    fn names(&self) -> Vec<String> {
        names(&["I0", "Psat", "B"])
    }

    fn eval(&self, x: T, p: &[T]) -> T {
        p[0] * self.shape(x, p[1]) + p[2]
    }

    fn gradient(&self, x: T, p: &[T], out: &mut [T]) {
        let u = x / p[1];
        let d = T::one() + u;
        out[0] = self.shape(x, p[1]);
        // ∂u/∂Psat = −u/Psat; standard shape' = 1/d², literal shape' = −1/d²
        let du = -u / p[1];
        let ds = match self.form {
            SaturationForm::Standard => T::one() / (d * d),
            SaturationForm::Literal => -T::one() / (d * d),
        };
        out[1] = p[0] * ds * du;
        out[2] = T::one();
    }
}

/// Unit-height Lorentzian with half width `w`.
pub(crate) fn lorentzian<T: Real>(f: T, f0: T, w: T) -> T {
    let d = f - f0;
    w * w / (d * d + w * w)
}

/// Three Lorentzians split by a fixed `hyperfine` (MHz) over
/// `[center, w.., a_low, a_mid, a_high, offset]`.
#[derive(Debug, Clone, Copy)]
pub struct OdmrTriplet<T = f64> {
    pub hyperfine: T,
    pub shared_width: bool,
}

impl<T: Real> OdmrTriplet<T> {
    fn widths(&self) -> usize {
        if self.shared_width {
            1
        } else {
            3
        }
    }
}

impl<T: Real> Model<T> for OdmrTriplet<T> {
    fn names(&self) -> Vec<String> {
        let mut n = names(&["center"]);
        if self.shared_width {
            n.push("width".into());
        } else {
            n.extend(names(&["width_low", "width_mid", "width_high"]));
        }
        n.extend(names(&["a_low", "a_mid", "a_high", "offset"]));
        n
    }

    fn eval(&self, x: T, p: &[T]) -> T {
        let nw = self.widths();
        let mut y = p[nw + 4];
        for k in 0..3 {
            let w = p[1 + if self.shared_width { 0 } else { k }];
            let f0 = p[0] + self.hyperfine * lit(k as f64 - 1.0);
            y += p[1 + nw + k] * lorentzian(x, f0, w);
        }
        y
    }

    fn gradient(&self, x: T, p: &[T], out: &mut [T]) {
        let nw = self.widths();
        out.iter_mut().for_each(|v| *v = T::zero());
        for k in 0..3 {
            let wi = 1 + if self.shared_width { 0 } else { k };
            let w = p[wi];
            let a = p[1 + nw + k];
            let d = x - (p[0] + self.hyperfine * lit(k as f64 - 1.0));
            let den = d * d + w * w;
            let l = w * w / den;
            // ∂L/∂f0 = 2 w² d/den², ∂L/∂w = 2 w d²/den²
            out[0] += a * lit::<T>(2.0) * w * w * d / (den * den);
            out[wi] += a * lit::<T>(2.0) * w * d * d / (den * den);
            out[1 + nw + k] = l;
        }
        out[nw + 4] = T::one();
    }
}

/// Decaying two-tone free-induction signal over
/// `[T2star, A1, A2, omega, phi1, phi2, B]`; the second tone sits `2π C∥` above the first.
#[derive(Debug, Clone, Copy)]
pub struct TwoToneDecay<T = f64> {
    pub c_par: T,
}

impl<T: Real> Model<T> for TwoToneDecay<T> {
    fn names(&self) -> Vec<String> {
        names(&["T2star", "A1", "A2", "omega", "phi1", "phi2", "B"])
    }

    fn eval(&self, x: T, p: &[T]) -> T {
        let e = (-x / p[0]).exp();
        let w2 = p[3] + self.c_par * lit(TAU);
        e * (p[1] * (p[3] * x + p[4]).cos() + p[2] * (w2 * x + p[5]).cos()) + p[6]
    }

    fn gradient(&self, x: T, p: &[T], out: &mut [T]) {
        let e = (-x / p[0]).exp();
        let w2 = p[3] + self.c_par * lit(TAU);
        let (s1, c1) = (p[3] * x + p[4]).sin_cos();
        let (s2, c2) = (w2 * x + p[5]).sin_cos();
        let osc = p[1] * c1 + p[2] * c2;
        out[0] = e * osc * x / (p[0] * p[0]);
        out[1] = e * c1;
        out[2] = e * c2;
        out[3] = -e * x * (p[1] * s1 + p[2] * s2);
        out[4] = -e * p[1] * s1;
        out[5] = -e * p[2] * s2;
        out[6] = T::one();
    }
}
