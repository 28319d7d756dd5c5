//! Adaptive Gauss–Kronrod (7/15) integration by interval bisection.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel with its embedded 7-point Gauss estimate.
fn panel<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let half = (b - a) * lit(0.5);
    let mid = (a + b) * lit(0.5);
    let fc = f(mid);
    let mut kronrod = fc * lit(WGK[7]);
    let mut gauss = fc * lit(WG[3]);
    for j in 0..7 {
        let dx = half * lit(XGK[j]);
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += pair * lit(WGK[j]);
        if j % 2 == 1 {
            gauss += pair * lit(WG[j / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Single 15-point Kronrod estimate of `∫_a^b f`.
pub fn kronrod<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> T {
    panel(f, a, b).0
}

/// Adaptive subdivision of `[a, b]` until every panel meets its share of
/// `abs_tol` (or `rel_tol` of its own value). Returns `(lo, hi, value, error)`
/// panels ordered from `a` to `b`.
pub fn integrate_panels<T: Real>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
) -> Result<Vec<(T, T, T)>> {
    Ok(adapt(&f, a, b, abs_tol, rel_tol)?.into_iter().map(|(lo, hi, v, _)| (lo, hi, v)).collect())
}

fn adapt<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<Vec<(T, T, T, T)>> {
    const MAX_PANELS: usize = 20_000;
    if a == b {
        return Ok(Vec::new());
    }
    let (v0, e0) = panel(f, a, b);
    let mut done = Vec::new();
    let mut pending = vec![(a, b, v0, e0)];
    let mut panels = 1usize;
    let min_width = (b - a).abs() * lit(1e-12);
    // LIFO with the left half pushed last keeps `done` ordered
    while let Some((lo, hi, v, e)) = pending.pop() {
        let share = (hi - lo).abs() / (b - a).abs();
        let allowed = abs_tol * share + rel_tol * v.abs();
        if e <= allowed || (hi - lo).abs() < min_width {
            done.push((lo, hi, v, e));
            continue;
        }
        if panels >= MAX_PANELS {
            let err = done.iter().chain(pending.iter()).fold(e, |acc, p| acc + p.3);
            return Err(Error::Quadrature(to_f64(err)));
        }
        let mid = (lo + hi) * lit(0.5);
        let (lv, le) = panel(f, lo, mid);
        let (rv, re) = panel(f, mid, hi);
        panels += 2;
        pending.push((mid, hi, rv, re));
        pending.push((lo, mid, lv, le));
    }
    Ok(done)
}

/// `∫_a^b f` to within `abs_tol` (plus `rel_tol` per panel). Returns the
/// value and the summed error estimate.
pub fn integrate<T: Real>(f: impl Fn(T) -> T, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<(T, T)> {
    let panels = adapt(&f, a, b, abs_tol, rel_tol)?;
    let (v, e) = panels.iter().fold((T::zero(), T::zero()), |(v, e), p| (v + p.2, e + p.3));
    if !v.is_finite() {
        return Err(Error::NonFinite("quadrature"));
    }
    Ok((v, e))
}

/// Gauss–Hermite nodes and weights for `∫ e^{−x²} f(x) dx` (Golub–Welsch).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    pairs.into_iter().unzip()
}
