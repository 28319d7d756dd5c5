//! Damped Gauss–Newton least squares and the fringe, saturation, ODMR
//! triplet and free-induction-decay models.

mod models;

pub use models::{OdmrTriplet, RamseyFringe, Saturation, SaturationForm, TwoToneDecay};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

const PI: f64 = std::f64::consts::PI;

/// Parametric model `y = f(x; p)` with an analytic gradient in `p`.
pub trait Model<T: Real>: Sync {
    fn names(&self) -> Vec<String>;
    fn eval(&self, x: T, p: &[T]) -> T;
    /// Writes `∂f/∂p` into `out`.
    fn gradient(&self, x: T, p: &[T], out: &mut [T]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T = f64> {
    pub names: Vec<String>,
    pub params: Vec<T>,
    /// Gauss–Newton covariance `s² (JᵀJ)⁺`, row-major.
    pub covariance: Vec<Vec<T>>,
    /// False when `JᵀJ` is rank deficient and some parameter is undetermined.
    pub covariance_ok: bool,
    pub residual_norm: T,
    pub converged: bool,
    pub iterations: usize,
    pub seed: Option<u64>,
    /// Quantities computed from the parameters, such as integrated intensities.
    pub derived: Vec<(String, T)>,
    pub notes: Vec<String>,
}

impl<T: Real> FitResult<T> {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Fitted or derived value by name.
    pub fn value(&self, name: &str) -> Option<T> {
        self.index(name)
            .map(|k| self.params[k])
            .or_else(|| self.derived.iter().find(|(n, _)| n == name).map(|(_, v)| *v))
    }

    pub fn std_error(&self, name: &str) -> Option<T> {
        self.index(name).map(|k| self.covariance[k][k].max(T::zero()).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions<T = f64> {
    pub max_iterations: usize,
    pub step_tol: T,
    pub cost_rel_tol: T,
    /// Per-parameter `[lo, hi]`; steps are projected back into the box.
    pub bounds: Option<Vec<(T, T)>>,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        Self { max_iterations: 200, step_tol: lit(1e-10), cost_rel_tol: lit(1e-12), bounds: None }
    }
}

fn residuals<T: Real>(model: &dyn Model<T>, p: &[T], xs: &[T], ys: &[T]) -> DVector<T> {
    DVector::from_iterator(xs.len(), xs.iter().zip(ys).map(|(&x, &y)| model.eval(x, p) - y))
}

fn jacobian<T: Real>(model: &dyn Model<T>, p: &[T], xs: &[T]) -> DMatrix<T> {
    let mut j = DMatrix::zeros(xs.len(), p.len());
    let mut row = vec![T::zero(); p.len()];
    for (i, &x) in xs.iter().enumerate() {
        model.gradient(x, p, &mut row);
        for (k, v) in row.iter().enumerate() {
            j[(i, k)] = *v;
        }
    }
    j
}

fn project<T: Real>(p: &mut [T], bounds: Option<&[(T, T)]>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in p.iter_mut().zip(b) {
            *v = v.max(lo).min(hi);
        }
    }
}

/// Pseudo-inverse of a symmetric PSD matrix and whether it had full rank.
fn pinv_sym<T: Real>(a: &DMatrix<T>) -> (DMatrix<T>, bool) {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let cut = top * lit(1e-13);
    let mut full = top > T::zero();
    let mut inv = DMatrix::zeros(n, n);
    for k in 0..n {
        let v = eig.eigenvalues[k];
        if v > cut {
            let col = eig.eigenvectors.column(k);
            inv += col * col.transpose() / v;
        } else {
            full = false;
        }
    }
    (inv, full)
}

/// Levenberg–Marquardt minimization of `Σ (f(x; p) − y)²`.
///
/// Stops when the accepted step is below `step_tol` (relative to `1 + |p|`),
/// when the cost changes by less than `cost_rel_tol` relatively, or after
/// `max_iterations`; running out of iterations is reported through
/// `converged = false`.
pub fn nlls_fit<T: Real>(
    model: &dyn Model<T>,
    init: &[T],
    xs: &[T],
    ys: &[T],
    options: &FitOptions<T>,
) -> Result<FitResult<T>> {
    let n = init.len();
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} abscissae but {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < n {
        return Err(Error::Fit(format!("{} points cannot determine {n} parameters", xs.len())));
    }
    if model.names().len() != n {
        return Err(Error::Fit("initial guess does not match the model's parameter count".into()));
    }
    if xs.iter().chain(ys).chain(init).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit input"));
    }
    let bounds = options.bounds.as_deref();
    if bounds.is_some_and(|b| b.len() != n) {
        return Err(Error::Fit("bounds do not match the parameter count".into()));
    }
    let mut p = init.to_vec();
    project(&mut p, bounds);
    let mut r = residuals(model, &p, xs, ys);
    let mut cost = r.norm_squared();
    let mut lambda = lit::<T>(1e-3);
    let mut converged = cost == T::zero();
    let mut iterations = 0;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let j = jacobian(model, &p, xs);
        if j.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Jacobian"));
        }
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        let top = (0..n).fold(T::zero(), |m, k| m.max(a[(k, k)]));
        if top == T::zero() {
            return Err(Error::Fit("Jacobian vanishes identically".into()));
        }
        let floor = top * lit(1e-15);
        let mut accepted = false;
        while lambda < lit(1e16) {
            let mut m = a.clone();
            for k in 0..n {
                m[(k, k)] += lambda * a[(k, k)].max(floor);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= lit(10.0);
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut trial: Vec<T> = p.iter().zip(delta.iter()).map(|(a, b)| *a + *b).collect();
            project(&mut trial, bounds);
            let r_new = residuals(model, &trial, xs, ys);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new <= cost {
                let step = p.iter().zip(&trial).fold(T::zero(), |s, (a, b)| s + (*a - *b) * (*a - *b)).sqrt();
                let scale = T::one() + p.iter().fold(T::zero(), |s, v| s + *v * *v).sqrt();
                let change = cost - cost_new;
                p = trial;
                r = r_new;
                cost = cost_new;
                lambda = (lambda / lit(10.0)).max(lit(1e-12));
                accepted = true;
                if step < options.step_tol * scale || change <= options.cost_rel_tol * (cost + change) {
                    converged = true;
                }
                break;
            }
            lambda *= lit(10.0);
        }
        if !accepted {
            // no descent direction left at machine precision
            let (_, full) = pinv_sym(&a);
            if !full {
                return Err(Error::Fit("singular Jacobian and damping exhausted".into()));
            }
            converged = true;
        }
    }
    let j = jacobian(model, &p, xs);
    let (inv, covariance_ok) = pinv_sym(&(j.transpose() * &j));
    let dof = (xs.len() - n).max(1);
    let s2 = cost / lit(dof as f64);
    let cov = inv * s2;
    Ok(FitResult {
        names: model.names(),
        params: p,
        covariance: (0..n).map(|i| (0..n).map(|k| cov[(i, k)]).collect()).collect(),
        covariance_ok,
        residual_norm: cost.sqrt(),
        converged,
        iterations,
        seed: None,
        derived: Vec::new(),
        notes: Vec::new(),
    })
}

/// Largest relative difference between the analytic gradient and central
/// differences with step `h`, over all `xs`.
pub fn jacobian_check<T: Real>(model: &dyn Model<T>, p: &[T], xs: &[T], h: T) -> T {
    let n = p.len();
    let mut analytic = vec![T::zero(); n];
    let mut worst = T::zero();
    for &x in xs {
        model.gradient(x, p, &mut analytic);
        for k in 0..n {
            let step = h * (T::one() + p[k].abs());
            let mut hi = p.to_vec();
            let mut lo = p.to_vec();
            hi[k] += step;
            lo[k] -= step;
            let fd = (model.eval(x, &hi) - model.eval(x, &lo)) / (step + step);
            let scale = analytic[k].abs().max(fd.abs()).max(T::one());
            worst = worst.max((analytic[k] - fd).abs() / scale);
        }
    }
    worst
}

/// Linear least squares `min |A c − y|` by SVD.
fn linear_lsq<T: Real>(a: DMatrix<T>, y: &[T]) -> Result<(DVector<T>, T)> {
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, lit(1e-14)).map_err(|e| Error::Fit(e.to_string()))?;
    let res = (a * &c - b).norm_squared();
    Ok((c, res))
}

fn wrap_phase<T: Real>(phi: T) -> T {
    let two_pi = lit::<T>(2.0 * PI);
    let mut w = phi - two_pi * ((phi + lit(PI)) / two_pi).floor();
    // map −π onto π so the interval is (−π, π]
    if w <= lit(-PI) {
        w += two_pi;
    }
    w
}

/// Fits `S(θ) = (V/2) cos(θ + φ) + B`, reporting `V ≥ 0` and `φ ∈ (−π, π]`.
pub fn fit_ramsey<T: Real>(thetas: &[T], signal: &[T]) -> Result<FitResult<T>> {
    if thetas.len() != signal.len() {
        return Err(Error::Dimension("phases and signal differ in length".into()));
    }
    if thetas.len() < 4 {
        return Err(Error::Fit("a fringe fit needs at least 4 points".into()));
    }
    let (lo, hi) = thetas.iter().fold((thetas[0], thetas[0]), |(a, b), &t| (a.min(t), b.max(t)));
    if hi - lo < lit(PI - 1e-12) {
        return Err(Error::Fit("phases must span at least π".into()));
    }
    // first Fourier component: S = a cos θ + b sin θ + B
    let a = DMatrix::from_fn(thetas.len(), 3, |i, k| match k {
        0 => thetas[i].cos(),
        1 => thetas[i].sin(),
        _ => T::one(),
    });
    let (coef, _) = linear_lsq(a, signal)?;
    let half_v = (coef[0] * coef[0] + coef[1] * coef[1]).sqrt();
    let scale = signal.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(lit(f64::MIN_POSITIVE));
    let model = RamseyFringe;
    if half_v <= scale * lit(1e-13) {
        let init = [T::zero(), T::zero(), coef[2]];
        let mut fit = nlls_fit(&model, &init, thetas, signal, &FitOptions { max_iterations: 0, ..FitOptions::default() })?;
        fit.converged = true;
        fit.covariance_ok = false;
        fit.notes.push("constant signal: phase undefined".into());
        return Ok(fit);
    }
    let init = [half_v + half_v, (-coef[1]).atan2(coef[0]), coef[2]];
    let mut fit = nlls_fit(&model, &init, thetas, signal, &FitOptions::default())?;
    if fit.params[0] < T::zero() {
        fit.params[0] = -fit.params[0];
        fit.params[1] += lit(PI);
        // V → −V flips the sign of its correlations with φ and B
        for k in 1..3 {
            fit.covariance[0][k] = -fit.covariance[0][k];
            fit.covariance[k][0] = -fit.covariance[k][0];
        }
    }
    fit.params[1] = wrap_phase(fit.params[1]);
    Ok(fit)
}

/// Standard and literal saturation fits side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit<T = f64> {
    /// `I₀ (P/P_sat)/(1 + P/P_sat) + B`
    pub standard: FitResult<T>,
    /// `I₀/(1 + P/P_sat) + B`
    pub literal: FitResult<T>,
}

pub fn fit_saturation<T: Real>(powers: &[T], intensities: &[T]) -> Result<SaturationFit<T>> {
    if powers.len() != intensities.len() {
        return Err(Error::Dimension("powers and intensities differ in length".into()));
    }
    if powers.len() < 4 {
        return Err(Error::Fit("a saturation fit needs at least 4 points".into()));
    }
    if powers.iter().any(|&p| !(p >= T::zero())) {
        return Err(Error::Fit("laser powers must be non-negative".into()));
    }
    let pmax = powers.iter().fold(T::zero(), |m, &p| m.max(p));
    if pmax == T::zero() {
        return Err(Error::Fit("all powers are zero".into()));
    }
    let tiny = pmax * lit(1e-9);
    let bounds = vec![(lit(-1e300), lit(1e300)), (tiny, lit(1e300)), (lit(-1e300), lit(1e300))];
    let fit_form = |form: SaturationForm| -> Result<FitResult<T>> {
        let model = Saturation { form };
        // the model is linear in (I₀, B) for fixed P_sat: scan P_sat on a log grid
        let mut best: Option<(T, [T; 3])> = None;
        for k in 0..=60 {
            let psat = pmax * lit(10f64.powf(-2.0 + 4.0 * k as f64 / 60.0));
            let a = DMatrix::from_fn(powers.len(), 2, |i, c| {
                if c == 0 {
                    model.shape(powers[i], psat)
                } else {
                    T::one()
                }
            });
            let (coef, res) = linear_lsq(a, intensities)?;
            if best.is_none_or(|(r, _)| res < r) {
                best = Some((res, [coef[0], psat, coef[1]]));
            }
        }
        let init = best.map(|b| b.1).ok_or_else(|| Error::Fit("no saturation seed".into()))?;
        let options = FitOptions { bounds: Some(bounds.clone()), ..FitOptions::default() };
        let mut fit = nlls_fit(&model, &init, powers, intensities, &options)?;
        if fit.params[1] <= tiny * lit(1.000001) {
            fit.notes.push("P_sat pinned at its positive lower bound".into());
        }
        if form == SaturationForm::Literal && fit.params[0] < T::zero() {
            // I₀/(1+u) + B = (I₀ + B) − I₀ u/(1+u): a rising curve with I₀ < 0
            fit.notes.push("negative I0: rising data, I0 is not the saturation intensity".into());
        }
        fit.notes.push(format!("form: {}", form.name()));
        Ok(fit)
    };
    Ok(SaturationFit { standard: fit_form(SaturationForm::Standard)?, literal: fit_form(SaturationForm::Literal)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletOptions<T = f64> {
    #[serde(rename = "hyperfine_MHz")]
    pub hyperfine: T,
    pub shared_width: bool,
    /// The lowest-frequency line carries `m_I = +1` (true on the `0 ↔ −1` transition).
    pub plus_line_low: bool,
}

impl<T: Real> Default for TripletOptions<T> {
    fn default() -> Self {
        Self { hyperfine: lit(2.16), shared_width: true, plus_line_low: true }
    }
}

/// Three Lorentzians at `center − Δ, center, center + Δ` over a constant
/// background; reports the integrated intensities `|a| π w` per line.
pub fn fit_odmr_triplet<T: Real>(freqs: &[T], signal: &[T], options: &TripletOptions<T>) -> Result<FitResult<T>> {
    if freqs.len() != signal.len() {
        return Err(Error::Dimension("frequencies and signal differ in length".into()));
    }
    let model = OdmrTriplet { hyperfine: options.hyperfine, shared_width: options.shared_width };
    let n = model.names().len();
    if freqs.len() < n {
        return Err(Error::Fit(format!("a triplet fit needs at least {n} points")));
    }
    let (lo, hi) = freqs.iter().fold((freqs[0], freqs[0]), |(a, b), &f| (a.min(f), b.max(f)));
    let delta = options.hyperfine.abs();
    if hi - lo < delta + delta {
        return Err(Error::Fit("frequency span too narrow for three lines".into()));
    }
    // seed: best linear fit with the middle line on each sample inside the span
    let width0 = delta * lit(0.25);
    let mut best: Option<(T, T, DVector<T>)> = None;
    for &center in freqs {
        if center - delta < lo || center + delta > hi {
            continue;
        }
        let a = DMatrix::from_fn(freqs.len(), 4, |i, k| {
            if k == 3 {
                T::one()
            } else {
                let f0 = center + delta * lit(k as f64 - 1.0);
                models::lorentzian(freqs[i], f0, width0)
            }
        });
        let (coef, res) = linear_lsq(a, signal)?;
        if best.as_ref().is_none_or(|(r, _, _)| res < *r) {
            best = Some((res, center, coef));
        }
    }
    let (_, center, coef) = best.ok_or_else(|| Error::Fit("line centers fall outside the data range".into()))?;
    let mut init = vec![center];
    let widths = if options.shared_width { 1 } else { 3 };
    init.extend(std::iter::repeat_n(width0, widths));
    init.extend([coef[0], coef[1], coef[2], coef[3]]);
    let mut bounds = vec![(lo + delta, hi - delta)];
    bounds.extend(std::iter::repeat_n((delta * lit(1e-6), hi - lo), widths));
    bounds.extend(std::iter::repeat_n((lit(-1e300), lit(1e300)), 4));
    let mut fit = nlls_fit(&model, &init, freqs, signal, &FitOptions { bounds: Some(bounds), ..FitOptions::default() })?;
    let p = fit.params.clone();
    let width = |k: usize| if options.shared_width { p[1] } else { p[1 + k] };
    let amp = |k: usize| p[1 + widths + k];
    let intensity = |k: usize| amp(k).abs() * lit(PI) * width(k);
    let (low, mid, high) = (intensity(0), intensity(1), intensity(2));
    let (plus, minus) = if options.plus_line_low { (low, high) } else { (high, low) };
    fit.derived = vec![
        ("I_low".into(), low),
        ("I_mid".into(), mid),
        ("I_high".into(), high),
        ("I_plus".into(), plus),
        ("I_zero".into(), mid),
        ("I_minus".into(), minus),
    ];
    Ok(fit)
}

/// Fits `e^{−t/T₂*}[A₁ cos(ωt + φ₁) + A₂ cos((ω + 2π C∥)t + φ₂)] + B`
/// (`ω` in rad/µs, `C∥` in MHz).
pub fn fit_t2star<T: Real>(times: &[T], signal: &[T], c_par: T) -> Result<FitResult<T>> {
    if times.len() != signal.len() {
        return Err(Error::Dimension("times and signal differ in length".into()));
    }
    if times.len() < 20 {
        return Err(Error::Fit("a decay fit needs at least 20 points".into()));
    }
    let model = TwoToneDecay { c_par };
    let (t0, t1) = times.iter().fold((times[0], times[0]), |(a, b), &t| (a.min(t), b.max(t)));
    let span = t1 - t0;
    if !(span > T::zero()) {
        return Err(Error::Fit("times span no interval".into()));
    }
    let dt = span / lit((times.len() - 1) as f64);
    let two_pi = lit::<T>(2.0 * PI);
    // seed: for each (ω, T₂*) on a grid the model is linear in the rest
    let mut best: Option<(T, [T; 7])> = None;
    let omega_max = lit::<T>(PI) / dt;
    let omega_steps = 400;
    for wi in 0..=omega_steps {
        let omega = omega_max * lit(wi as f64 / omega_steps as f64);
        for ti in 0..8 {
            let tau = span * lit(0.125 * 2f64.powi(ti) / 2.0);
            let w2 = omega + two_pi * c_par;
            let a = DMatrix::from_fn(times.len(), 5, |i, k| {
                let t = times[i];
                let e = (-t / tau).exp();
                match k {
                    0 => e * (omega * t).cos(),
                    1 => e * (omega * t).sin(),
                    2 => e * (w2 * t).cos(),
                    3 => e * (w2 * t).sin(),
                    _ => T::one(),
                }
            });
            let (coef, res) = linear_lsq(a, signal)?;
            if best.is_none_or(|(r, _)| res < r) {
                // A cos(ωt + φ) = A cos φ cos ωt − A sin φ sin ωt
                let a1 = (coef[0] * coef[0] + coef[1] * coef[1]).sqrt();
                let a2 = (coef[2] * coef[2] + coef[3] * coef[3]).sqrt();
                let p1 = (-coef[1]).atan2(coef[0]);
                let p2 = (-coef[3]).atan2(coef[2]);
                best = Some((res, [tau, a1, a2, omega, p1, p2, coef[4]]));
            }
        }
    }
    let init = best.map(|b| b.1).ok_or_else(|| Error::Fit("no decay seed".into()))?;
    let big = lit::<T>(1e300);
    let bounds = vec![
        (span * lit(1e-6), big),
        (-big, big),
        (-big, big),
        (-big, big),
        (-big, big),
        (-big, big),
        (-big, big),
    ];
    let mut fit = nlls_fit(&model, &init, times, signal, &FitOptions { bounds: Some(bounds), ..FitOptions::default() })?;
    fit.notes.push("decay envelope exp(-t/T2star)".into());
    Ok(fit)
}

/// Spread of refits to residual-resampled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bootstrap<T = f64> {
    pub names: Vec<String>,
    pub std: Vec<T>,
    pub replicates: usize,
    pub failed: usize,
    pub seed: u64,
}

/// Default replicate count for [`bootstrap`].
pub const BOOTSTRAP_REPLICATES: usize = 200;

/// Residual bootstrap around `fit`: each replicate adds resampled residuals to
/// the fitted curve and refits from the fitted parameters. Replicate `k` draws
/// from stream `k` of a generator seeded with `seed`.
pub fn bootstrap<T: Real>(
    model: &dyn Model<T>,
    fit: &FitResult<T>,
    xs: &[T],
    ys: &[T],
    replicates: usize,
    seed: u64,
    options: &FitOptions<T>,
) -> Result<Bootstrap<T>> {
    use rand::Rng;
    if replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least two replicates".into()));
    }
    let fitted: Vec<T> = xs.iter().map(|&x| model.eval(x, &fit.params)).collect();
    let resid: Vec<T> = ys.iter().zip(&fitted).map(|(y, f)| *y - *f).collect();
    let runs: Vec<Option<Vec<T>>> = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let sample: Vec<T> = fitted.iter().map(|f| *f + resid[rng.random_range(0..resid.len())]).collect();
            nlls_fit(model, &fit.params, xs, &sample, options).ok().map(|f| f.params)
        })
        .collect();
    let ok: Vec<&Vec<T>> = runs.iter().flatten().collect();
    if ok.len() < 2 {
        return Err(Error::Fit("too few bootstrap replicates converged".into()));
    }
    let n = fit.params.len();
    let count = lit::<T>(ok.len() as f64);
    let std = (0..n)
        .map(|k| {
            let mean = ok.iter().fold(T::zero(), |s, p| s + p[k]) / count;
            let var = ok.iter().fold(T::zero(), |s, p| s + (p[k] - mean) * (p[k] - mean)) / (count - T::one());
            var.sqrt()
        })
        .collect();
    Ok(Bootstrap { names: fit.names.clone(), std, replicates, failed: replicates - ok.len(), seed })
}

/// `f64` view of a fit for reporting.
pub fn describe<T: Real>(fit: &FitResult<T>) -> Vec<(String, f64)> {
    fit.names.iter().cloned().zip(fit.params.iter().map(|v| to_f64(*v))).collect()
}
