//! Dense real matrix exponential by scaling and squaring with Padé
//! approximants (Higham 2005 order/threshold table).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

fn norm1<T: Real>(a: &DMatrix<T>) -> T {
    let mut best = T::zero();
    for col in a.column_iter() {
        let s = col.iter().fold(T::zero(), |acc, x| acc + x.abs());
        if s > best {
            best = s;
        }
    }
    best
}

fn pade_low<T: Real>(a: &DMatrix<T>, coeffs: &[f64]) -> (DMatrix<T>, DMatrix<T>) {
    let n = a.nrows();
    let ident = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let mut pow = ident.clone();
    let mut u_acc = &ident * lit::<T>(coeffs[1]);
    let mut v = &ident * lit::<T>(coeffs[0]);
    let mut k = 2;
    while k < coeffs.len() {
        pow = &pow * &a2;
        v += &pow * lit::<T>(coeffs[k]);
        if k + 1 < coeffs.len() {
            u_acc += &pow * lit::<T>(coeffs[k + 1]);
        }
        k += 2;
    }
    (a * u_acc, v)
}

fn pade13<T: Real>(a: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let b = |k: usize| lit::<T>(PADE13[k]);
    let n = a.nrows();
    let ident = DMatrix::<T>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = a * (&a6 * inner_u + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = &a6 * inner_v + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);
    (u, v)
}

fn solve_pade<T: Real>(u: DMatrix<T>, v: DMatrix<T>) -> Option<DMatrix<T>> {
    let p = &v + &u;
    let q = v - u;
    q.lu().solve(&p)
}

fn is_finite<T: Real>(a: &DMatrix<T>) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// `exp(a)` for a square real matrix.
pub fn expm<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !a.is_square() {
        return Err(Error::Dimension("matrix exponential needs a square matrix".into()));
    }
    if !is_finite(a) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = norm1(a);
    for &(order, theta) in &THETA {
        if norm <= lit(theta) {
            let coeffs: &[f64] = match order {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(a, coeffs);
            if let Some(r) = solve_pade(u, v) {
                if is_finite(&r) {
                    return Ok(r);
                }
            }
            return taylor_fallback(a);
        }
    }
    let ratio = crate::scalar::to_f64(norm) / THETA13;
    let s = ratio.log2().ceil().max(0.0) as i32;
    let scaled = a * lit::<T>(0.5f64.powi(s));
    let (u, v) = pade13(&scaled);
    let Some(mut r) = solve_pade(u, v) else {
        return taylor_fallback(a);
    };
    for _ in 0..s {
        r = &r * &r;
    }
    if is_finite(&r) {
        Ok(r)
    } else {
        taylor_fallback(a)
    }
}

/// Truncated Taylor series on a heavily scaled matrix. Slower but free of
/// linear solves.
fn taylor_fallback<T: Real>(a: &DMatrix<T>) -> Result<DMatrix<T>> {
    let norm = crate::scalar::to_f64(norm1(a));
    let s = (norm / 0.25).log2().ceil().max(0.0) as i32;
    let scaled = a * lit::<T>(0.5f64.powi(s));
    let n = a.nrows();
    let mut term = DMatrix::<T>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=24 {
        term = &term * &scaled * lit::<T>(1.0 / k as f64);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    if is_finite(&sum) {
        Ok(sum)
    } else {
        Err(Error::NonFinite("matrix exponential"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn rotation_generator() {
        // exp([[0, -w], [w, 0]] t) is a rotation by w t
        for &wt in &[1e-4f64, 0.3, 2.0, 40.0, 1234.5] {
            let a = DMatrix::from_row_slice(2, 2, &[0.0, -wt, wt, 0.0]);
            let e = expm(&a).unwrap();
            let want = DMatrix::from_row_slice(2, 2, &[wt.cos(), -wt.sin(), wt.sin(), wt.cos()]);
            assert!(max_diff(&e, &want) < 1e-11 * (1.0 + wt), "wt={wt}");
        }
    }

    #[test]
    fn diagonal_and_nilpotent() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-3.0, 0.5, 2.0]));
        let e = expm(&a).unwrap();
        for (k, v) in [-3.0f64, 0.5, 2.0].iter().enumerate() {
            assert!((e[(k, k)] - v.exp()).abs() < 1e-13 * v.exp());
        }
        let n = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]) * 7.0;
        let e = expm(&n).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 7.0, 24.5, 0.0, 1.0, 7.0, 0.0, 0.0, 1.0]);
        assert!(max_diff(&e, &want) < 1e-12);
    }

    #[test]
    fn semigroup_and_taylor_agree() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i * 3 + j * 5) % 7) as f64 * 0.3 - 0.9);
        let full = expm(&(&a * 2.0)).unwrap();
        let half = expm(&a).unwrap();
        assert!(max_diff(&full, &(&half * &half)) < 1e-10 * full.norm());
        let t = taylor_fallback(&a).unwrap();
        assert!(max_diff(&t, &half) < 1e-11 * half.norm());
    }

    #[test]
    fn rejects_non_finite() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(expm(&a).is_err());
    }
}
