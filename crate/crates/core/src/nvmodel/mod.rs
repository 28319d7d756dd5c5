//! Physical model: parameters, ground/excited/singlet Hamiltonians, optical and
//! relaxation jump operators, the 21-level Lindblad generator, and the
//! excited-state anti-crossing field.

mod liouvillian;

pub use liouvillian::{Block, Coordinates, Liouvillian};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{singlet_level, triplet_level, Manifold, DIM};
use crate::scalar::{cr, lit, to_f64, Real};
use crate::spinops::{herm_eigh, identity, kron, spin1_index, spin1_operators, ComplexMatrix};

/// How the transverse excited-state hyperfine term enters the flip-flop
/// matrix element `⟨−1,+1|H_es|0,0⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipFlop {
    /// Spin-1 ladder algebra: the element equals `A_⊥`.
    #[default]
    SpinOne,
    /// Reduced four-level convention: the element equals `A_⊥/2`.
    Reduced,
}

/// Hamiltonian constants. Frequencies in MHz, gyromagnetic ratios in MHz/G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams<T = f64> {
    #[serde(rename = "D_gs_MHz")]
    pub d_gs: T,
    #[serde(rename = "D_es_MHz")]
    pub d_es: T,
    #[serde(rename = "gamma_e_MHz_per_G")]
    pub gamma_e: T,
    #[serde(rename = "gamma_n_MHz_per_G")]
    pub gamma_n: T,
    #[serde(rename = "P_quad_MHz")]
    pub p_quad: T,
    #[serde(rename = "A_par_MHz")]
    pub a_par: T,
    #[serde(rename = "A_perp_MHz")]
    pub a_perp: T,
    #[serde(rename = "C_par_MHz")]
    pub c_par: T,
    #[serde(rename = "C_perp_MHz")]
    pub c_perp: T,
    pub flip_flop: FlipFlop,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self {
            d_gs: lit(2870.0),
            d_es: lit(1420.0),
            gamma_e: lit(2.8),
            gamma_n: lit(3.0e-4),
            p_quad: lit(-4.85),
            a_par: lit(-43.0),
            a_perp: lit(-23.0),
            c_par: lit(2.1),
            c_perp: lit(2.1),
            flip_flop: FlipFlop::SpinOne,
        }
    }
}

/// Optical rates (MHz, i.e. µs⁻¹) and electron relaxation times (µs).
/// Relaxation times may be infinite to switch a channel off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateTable<T = f64> {
    #[serde(rename = "Gamma0_MHz")]
    pub gamma0: T,
    #[serde(rename = "Gamma1_MHz")]
    pub gamma1: T,
    #[serde(rename = "Gamma2_MHz")]
    pub gamma2: T,
    #[serde(rename = "Gamma3_MHz")]
    pub gamma3: T,
    #[serde(rename = "Gamma4_MHz")]
    pub gamma4: T,
    #[serde(rename = "Gamma5_MHz")]
    pub gamma5: T,
    #[serde(rename = "Gamma6_MHz")]
    pub gamma6: T,
    #[serde(rename = "Gamma7_MHz")]
    pub gamma7: T,
    #[serde(rename = "T1_gs_us")]
    pub t1_gs: T,
    #[serde(rename = "T2_gs_us")]
    pub t2_gs: T,
    #[serde(rename = "T1_es_us")]
    pub t1_es: T,
    #[serde(rename = "T2_es_us")]
    pub t2_es: T,
}

impl<T: Real> Default for RateTable<T> {
    fn default() -> Self {
        Self {
            gamma0: lit(6.74),
            gamma1: lit(67.4),
            gamma2: lit(91.6),
            gamma3: lit(91.6),
            gamma4: lit(9.9),
            gamma5: lit(1.06),
            gamma6: lit(1.06),
            gamma7: lit(4.83),
            t1_gs: lit(10_000.0),
            t2_gs: lit(100.0),
            t1_es: lit(1_000.0),
            t2_es: lit(0.01),
        }
    }
}

impl<T: Real> RateTable<T> {
    /// Every channel switched off: the dynamics become purely Hamiltonian.
    pub fn none() -> Self {
        let inf = lit::<T>(f64::INFINITY);
        Self {
            gamma0: T::zero(),
            gamma1: T::zero(),
            gamma2: T::zero(),
            gamma3: T::zero(),
            gamma4: T::zero(),
            gamma5: T::zero(),
            gamma6: T::zero(),
            gamma7: T::zero(),
            t1_gs: inf,
            t2_gs: inf,
            t1_es: inf,
            t2_es: inf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            (self.gamma0, "Gamma0"),
            (self.gamma1, "Gamma1"),
            (self.gamma2, "Gamma2"),
            (self.gamma3, "Gamma3"),
            (self.gamma4, "Gamma4"),
            (self.gamma5, "Gamma5"),
            (self.gamma6, "Gamma6"),
            (self.gamma7, "Gamma7"),
        ];
        for (v, name) in rates {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::NegativeRate(name));
            }
        }
        let times = [
            (self.t1_gs, "T1_gs"),
            (self.t2_gs, "T2_gs"),
            (self.t1_es, "T1_es"),
            (self.t2_es, "T2_es"),
        ];
        for (v, name) in times {
            if !(v > T::zero()) {
                return Err(Error::NegativeRate(name));
            }
        }
        Ok(())
    }
}

/// Sparse operator `Σ c |row⟩⟨col|` with a rate in µs⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump<T: Real> {
    pub label: String,
    pub rate: T,
    pub entries: Vec<(usize, usize, Complex<T>)>,
}

impl<T: Real> Jump<T> {
    pub fn dense(&self) -> ComplexMatrix<T> {
        let mut m = ComplexMatrix::zeros(DIM, DIM);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }
}

fn hyperfine_hamiltonian<T: Real>(
    zfs: T,
    p: &ModelParams<T>,
    b: T,
    a_par: T,
    a_perp: T,
) -> ComplexMatrix<T> {
    let (sx, sy, sz) = spin1_operators::<T>();
    let (ix, iy, iz) = (sx.clone(), sy.clone(), sz.clone());
    let e3 = identity::<T>(3);
    let s = |m: &ComplexMatrix<T>| kron(m, &e3);
    let n = |m: &ComplexMatrix<T>| kron(&e3, m);
    let sz2 = &sz * &sz;
    let iz2 = &iz * &iz;
    let h = s(&sz2) * cr(zfs)
        + s(&sz) * cr(p.gamma_e * b)
        + n(&iz2) * cr(p.p_quad)
        + n(&iz) * cr(p.gamma_n * b)
        + kron(&sz, &iz) * cr(a_par)
        + (kron(&sx, &ix) + kron(&sy, &iy)) * cr(a_perp);
    crate::spinops::symmetrize(&h)
}

/// Ground-state Hamiltonian (MHz) on electron ⊗ nuclear, field `b` in Gauss.
pub fn gs_hamiltonian<T: Real>(p: &ModelParams<T>, b: T) -> ComplexMatrix<T> {
    hyperfine_hamiltonian(p.d_gs, p, b, p.c_par, p.c_perp)
}

/// Excited-state Hamiltonian (MHz); the transverse term follows `p.flip_flop`.
pub fn es_hamiltonian<T: Real>(p: &ModelParams<T>, b: T) -> ComplexMatrix<T> {
    let a_perp = match p.flip_flop {
        FlipFlop::SpinOne => p.a_perp,
        FlipFlop::Reduced => p.a_perp * lit(0.5),
    };
    hyperfine_hamiltonian(p.d_es, p, b, p.a_par, a_perp)
}

/// Nuclear-only Hamiltonian (MHz) of the metastable singlet.
pub fn singlet_hamiltonian<T: Real>(p: &ModelParams<T>, b: T) -> ComplexMatrix<T> {
    let (_, _, iz) = spin1_operators::<T>();
    &iz * &iz * cr(p.p_quad) + iz * cr(p.gamma_n * b)
}

/// Block-diagonal 21-level Hamiltonian (MHz).
pub fn full_hamiltonian<T: Real>(p: &ModelParams<T>, b: T) -> ComplexMatrix<T> {
    let mut h = ComplexMatrix::zeros(DIM, DIM);
    h.view_mut((0, 0), (9, 9)).copy_from(&gs_hamiltonian(p, b));
    h.view_mut((9, 9), (9, 9)).copy_from(&es_hamiltonian(p, b));
    h.view_mut((18, 18), (3, 3)).copy_from(&singlet_hamiltonian(p, b));
    h
}

const MS: [i8; 3] = [1, 0, -1];

fn ms_label(m: i8) -> &'static str {
    match m {
        1 => "+1",
        0 => "0",
        _ => "-1",
    }
}

/// Electron-level operator `|to_m⟩⟨from_m| ⊗ I_nuc` between manifolds.
fn electron_transfer<T: Real>(
    from: Manifold,
    from_m: Option<i8>,
    to: Manifold,
    to_m: Option<i8>,
) -> Vec<(usize, usize, Complex<T>)> {
    let level = |m: Manifold, ms: Option<i8>, mi: i8| match ms {
        Some(ms) => triplet_level(m, ms, mi),
        None => singlet_level(mi),
    };
    MS.iter()
        .map(|&mi| (level(to, to_m, mi), level(from, from_m, mi), cr(T::one())))
        .collect()
}

/// All jump operators with their rates (µs⁻¹). Channels with zero rate are
/// still listed.
pub fn jump_operators<T: Real>(r: &RateTable<T>, laser_scale: T) -> Vec<Jump<T>> {
    use Manifold::{Excited as E, Ground as G, Singlet as S};
    let mut jumps = Vec::new();
    let mut push = |label: String, rate: T, entries| jumps.push(Jump { label, rate, entries });
    for &m in &MS {
        let l = ms_label(m);
        push(format!("excitation {l}"), laser_scale * r.gamma0, electron_transfer(G, Some(m), E, Some(m)));
        push(format!("emission {l}"), r.gamma1, electron_transfer(E, Some(m), G, Some(m)));
        let isc = match m {
            1 => r.gamma2,
            -1 => r.gamma3,
            _ => r.gamma4,
        };
        push(format!("isc {l}"), isc, electron_transfer(E, Some(m), S, None));
        let back = match m {
            1 => r.gamma5,
            -1 => r.gamma6,
            _ => r.gamma7,
        };
        push(format!("singlet decay {l}"), back, electron_transfer(S, None, G, Some(m)));
    }
    let three = lit::<T>(3.0);
    for (man, t1, t2, tag) in [(G, r.t1_gs, r.t2_gs, "gs"), (E, r.t1_es, r.t2_es, "es")] {
        for &from in &MS {
            for &to in &MS {
                if from != to {
                    push(
                        format!("t1 {tag} {}->{}", ms_label(from), ms_label(to)),
                        T::one() / (three * t1),
                        electron_transfer(man, Some(from), man, Some(to)),
                    );
                }
            }
        }
        for &m in &MS {
            push(
                format!("t2 {tag} {}", ms_label(m)),
                T::one() / t2,
                electron_transfer(man, Some(m), man, Some(m)),
            );
        }
    }
    jumps
}

/// Full generator at field `b` (Gauss) with the excitation rate scaled by
/// `laser_scale` (0 = laser off).
pub fn build_liouvillian<T: Real>(
    p: &ModelParams<T>,
    r: &RateTable<T>,
    b: T,
    laser_scale: T,
) -> Result<Liouvillian<T>> {
    r.validate()?;
    if !(laser_scale >= T::zero()) || !laser_scale.is_finite() {
        return Err(Error::NegativeRate("laser_scale"));
    }
    Ok(Liouvillian::new(
        full_hamiltonian(p, b),
        jump_operators(r, laser_scale),
        b,
        laser_scale,
        r.gamma1,
    ))
}

/// Gap (MHz) between the two excited-state levels adiabatically connected to
/// `|0,0⟩` and `|−1,+1⟩`.
pub fn eslac_gap<T: Real>(p: &ModelParams<T>, b: T) -> T {
    let h = es_hamiltonian(p, b);
    let idx = [block_index(1, -1), block_index(0, 0), block_index(-1, 1)];
    let block = ComplexMatrix::from_fn(3, 3, |i, j| h[(idx[i], idx[j])]);
    let (vals, vecs) = herm_eigh(&block).expect("Hamiltonian block is Hermitian");
    // drop the level that is mostly |+1,-1>
    let far = (0..3)
        .max_by(|&a, &b| {
            vecs[(0, a)]
                .norm_sqr()
                .partial_cmp(&vecs[(0, b)].norm_sqr())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(2);
    let keep: Vec<T> = (0..3).filter(|&k| k != far).map(|k| vals[k]).collect();
    (keep[1] - keep[0]).abs()
}

/// Field in [400, 620] G minimizing [`eslac_gap`].
pub fn find_eslac<T: Real>(p: &ModelParams<T>) -> T {
    let (lo, hi) = (400.0, 620.0);
    let gap = |b: f64| to_f64(eslac_gap(p, lit::<T>(b)));
    let mut best = lo;
    let mut best_gap = f64::INFINITY;
    let steps = 220;
    for k in 0..=steps {
        let b = lo + (hi - lo) * k as f64 / steps as f64;
        let g = gap(b);
        if g < best_gap {
            best_gap = g;
            best = b;
        }
    }
    // golden-section refinement inside the bracketing grid cells
    let mut a = (best - 1.0).max(lo);
    let mut d = (best + 1.0).min(hi);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = d - phi * (d - a);
    let mut x2 = a + phi * (d - a);
    let (mut f1, mut f2) = (gap(x1), gap(x2));
    while d - a > 1e-4 {
        if f1 < f2 {
            d = x2;
            x2 = x1;
            f2 = f1;
            x1 = d - phi * (d - a);
            f1 = gap(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (d - a);
            f2 = gap(x2);
        }
    }
    lit(0.5 * (a + d))
}

/// Index of `|m_S, m_I⟩` in the 9-dimensional ground (or excited) block.
pub fn block_index(ms: i8, mi: i8) -> usize {
    3 * spin1_index(ms) + spin1_index(mi)
}

#[cfg(test)]
mod tests;
