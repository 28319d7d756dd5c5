//! Qutrit state tomography of the ground-state electron and process
//! tomography of the nuclear qubit spanned by `|+1⟩, |0⟩`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{ground_reduced, nuclear_reduced, propagate, RELAX_US};
use crate::error::{Error, Result};
use crate::levels::{DIM, GS_OFFSET};
use crate::nvmodel::{ModelParams, RateTable};
use crate::scalar::{c, cr, lit, to_f64, Real};
use crate::sequences::{dressed_ground, Branch, Segment, Sequence, Simulator};
use crate::spinops::{gellmann_basis, gellmann_reconstruct, herm_eigh, herm_function, herm_sqrt, symmetrize, ComplexMatrix, DensityMatrix};

/// Tolerance on the positivity of process matrices handed to the fidelity.
const PSD_TOL: f64 = 1e-8;

/// `I, σx, σy, σz` on the nuclear qubit, index 0 = `|+1⟩`, index 1 = `|0⟩`.
pub fn paulis<T: Real>() -> [ComplexMatrix<T>; 4] {
    let o = cr(T::zero());
    let l = cr(T::one());
    let i = c(T::zero(), T::one());
    [
        ComplexMatrix::from_row_slice(2, 2, &[l, o, o, l]),
        ComplexMatrix::from_row_slice(2, 2, &[o, l, l, o]),
        ComplexMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        ComplexMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
    ]
}

/// Process matrix `χ` of a qubit channel, `ε(ρ) = Σ χ_mn P_m ρ P_n†` over
/// `P = (I, σx, σy, σz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix<T: Real = f64> {
    chi: ComplexMatrix<T>,
}

impl<T: Real> ProcessMatrix<T> {
    /// Checks shape, Hermiticity (1e-9) and unit trace (1e-9).
    pub fn new(chi: ComplexMatrix<T>) -> Result<Self> {
        if chi.shape() != (4, 4) {
            return Err(Error::Dimension("a qubit process matrix is 4×4".into()));
        }
        let dev = crate::spinops::hermiticity_deviation(&chi);
        if dev > lit(1e-9) {
            return Err(Error::NotHermitian(to_f64(dev)));
        }
        let tr = chi.trace();
        if (tr.re - T::one()).abs() > lit(1e-9) || tr.im.abs() > lit(1e-9) {
            return Err(Error::InvalidState(format!("process matrix trace {} differs from 1", to_f64(tr.re))));
        }
        Ok(Self { chi })
    }

    pub fn chi(&self) -> &ComplexMatrix<T> {
        &self.chi
    }

    /// Smallest eigenvalue; the channel is completely positive when it is ≥ 0.
    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(herm_eigh(&self.chi)?.0[0])
    }

    /// Applies the channel to a 2×2 operator.
    pub fn apply(&self, rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
        let p = paulis::<T>();
        let mut out = ComplexMatrix::zeros(2, 2);
        for m in 0..4 {
            for n in 0..4 {
                let w = self.chi[(m, n)];
                if w != cr(T::zero()) {
                    out += &p[m] * rho * p[n].adjoint() * w;
                }
            }
        }
        out
    }
}

/// `diag(1/2, 0, 0, 1/2)`: the population-preserving, coherence-erasing process.
pub fn chi_ideal<T: Real>() -> ProcessMatrix<T> {
    let half = cr(lit(0.5));
    let mut chi = ComplexMatrix::zeros(4, 4);
    chi[(0, 0)] = half;
    chi[(3, 3)] = half;
    ProcessMatrix { chi }
}

/// `ρ → ½ρ + ½ σz ρ σz`.
pub fn dephase_nuclear<T: Real>(rho: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let z = &paulis::<T>()[3];
    (rho + z * rho * z) * cr(lit(0.5))
}

/// `|j⟩⟨k|` on the nuclear qubit.
fn unit<T: Real>(j: usize, k: usize) -> ComplexMatrix<T> {
    let mut m = ComplexMatrix::zeros(2, 2);
    m[(j, k)] = cr(T::one());
    m
}

/// Reconstructs `χ` from the channel's action on `|+1⟩⟨+1|, |+1⟩⟨0|,
/// |0⟩⟨+1|, |0⟩⟨0|`. Two superposition inputs check linearity.
pub fn qpt_chi<T: Real>(channel: impl Fn(&ComplexMatrix<T>) -> Result<ComplexMatrix<T>>) -> Result<ProcessMatrix<T>> {
    let inputs = [unit::<T>(0, 0), unit(0, 1), unit(1, 0), unit(1, 1)];
    let outputs = inputs.iter().map(&channel).collect::<Result<Vec<_>>>()?;
    if outputs.iter().any(|o| o.shape() != (2, 2)) {
        return Err(Error::Dimension("channel must return 2×2 operators".into()));
    }
    let half = cr::<T>(lit(0.5));
    let i = c(T::zero(), T::one());
    let probes = [
        ((&inputs[0] + &inputs[1] + &inputs[2] + &inputs[3]) * half, [cr(T::one()); 4]),
        ((&inputs[0] - &inputs[1] * i + &inputs[2] * i + &inputs[3]) * half, [cr(T::one()), -i, i, cr(T::one())]),
    ];
    for (probe, w) in &probes {
        let direct = channel(probe)?;
        let mut combined = ComplexMatrix::zeros(2, 2);
        for (o, wk) in outputs.iter().zip(w) {
            combined += o * (*wk * half);
        }
        let dev = (direct - combined).camax();
        if dev > lit(1e-8) {
            return Err(Error::NonLinearChannel(to_f64(dev)));
        }
    }
    // Σ_mn χ_mn (P_m ρ_a P_n)_rs = ε(ρ_a)_rs, one row per (a, r, s)
    let p = paulis::<T>();
    let mut a = DMatrix::zeros(16, 16);
    let mut b = nalgebra::DVector::zeros(16);
    for (ai, rho) in inputs.iter().enumerate() {
        for m in 0..4 {
            for n in 0..4 {
                let term = &p[m] * rho * &p[n];
                for r in 0..2 {
                    for s in 0..2 {
                        a[(4 * ai + 2 * r + s, 4 * m + n)] = term[(r, s)];
                    }
                }
            }
        }
        for r in 0..2 {
            for s in 0..2 {
                b[4 * ai + 2 * r + s] = outputs[ai][(r, s)];
            }
        }
    }
    let x = a.lu().solve(&b).ok_or_else(|| Error::InvalidArgument("Pauli basis change is singular".into()))?;
    let chi = ComplexMatrix::from_fn(4, 4, |m, n| x[4 * m + n]);
    ProcessMatrix::new(symmetrize(&chi))
}

fn check_psd<T: Real>(chi: &ProcessMatrix<T>) -> Result<()> {
    let min = chi.min_eigenvalue()?;
    if min < lit(-PSD_TOL) {
        return Err(Error::NotPositive(to_f64(min)));
    }
    Ok(())
}

/// `F = Tr √(√χ_id χ_exp √χ_id)`: 1 for the ideal process, 1/2 when the
/// populations are scrambled completely.
pub fn process_fidelity<T: Real>(chi_exp: &ProcessMatrix<T>, chi_id: &ProcessMatrix<T>) -> Result<T> {
    check_psd(chi_exp)?;
    check_psd(chi_id)?;
    let s = sqrt_psd(&chi_id.chi)?;
    let inner = symmetrize(&(&s * &chi_exp.chi * &s));
    Ok(sqrt_psd(&inner)?.trace().re)
}

/// Square root that treats eigenvalues below `1e-13` of the largest as zero,
/// so rank-deficient inputs do not pick up `√ε` round-off.
fn sqrt_psd<T: Real>(m: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let (vals, _) = herm_eigh(m)?;
    let floor = vals.iter().fold(T::zero(), |a, v| a.max(v.abs())) * lit(1e-13);
    herm_function(m, |v| if v > floor { v.sqrt() } else { T::zero() })
}

/// `Tr[χ_id χ_exp]`, the linear alternative. It gives 1/2 for the ideal process.
pub fn process_fidelity_linear<T: Real>(chi_exp: &ProcessMatrix<T>, chi_id: &ProcessMatrix<T>) -> T {
    (&chi_id.chi * &chi_exp.chi).trace().re
}

/// Nuclear-qubit channel of one pump: thermal electron ⊗ `ρ_n`, laser for
/// `pump` µs, 1 µs dark, then the nuclear state restricted to `|+1⟩, |0⟩`.
#[derive(Debug, Clone)]
pub struct NuclearChannel<T: Real> {
    outputs: [ComplexMatrix<T>; 4],
    /// Trace kept in the qubit subspace for the inputs `|+1⟩` and `|0⟩`.
    pub retained: [T; 2],
}

impl<T: Real> NuclearChannel<T> {
    pub fn new(sim: &Simulator<T>, pump: T) -> Result<Self> {
        if !(pump >= T::zero()) {
            return Err(Error::InvalidArgument("pump time must be non-negative".into()));
        }
        let laser = sim.laser(T::one())?;
        // spin labels refer to the ground eigenstates, which adiabatic
        // preparation and readout address
        let (_, v) = dressed_ground(sim.params(), sim.field_g())?;
        let evolve = |n: &ComplexMatrix<T>| -> Result<ComplexMatrix<T>> {
            let mut n3 = ComplexMatrix::zeros(3, 3);
            n3.view_mut((0, 0), (2, 2)).copy_from(n);
            let block = crate::spinops::kron(&(crate::spinops::identity::<T>(3) * cr(T::one() / lit(3.0))), &n3);
            let mut rho = ComplexMatrix::zeros(DIM, DIM);
            rho.view_mut((GS_OFFSET, GS_OFFSET), (9, 9)).copy_from(&(&v * block * v.adjoint()));
            let rho = propagate(&laser, &DensityMatrix::new_unchecked(rho), pump)?;
            let mut rho = propagate(sim.laser_off(), &rho, lit(RELAX_US))?.into_matrix();
            let g = v.adjoint() * rho.view((GS_OFFSET, GS_OFFSET), (9, 9)) * &v;
            rho.view_mut((GS_OFFSET, GS_OFFSET), (9, 9)).copy_from(&g);
            Ok(nuclear_reduced(&rho).view((0, 0), (2, 2)).into_owned())
        };
        let pp = evolve(&unit(0, 0))?;
        let zz = evolve(&unit(1, 1))?;
        // |+1⟩⟨0| = X + iY with Hermitian X, Y; the map is Hermiticity preserving
        let half = cr::<T>(lit(0.5));
        let x = evolve(&((unit::<T>(0, 1) + unit(1, 0)) * half))?;
        let y = evolve(&((unit::<T>(0, 1) - unit(1, 0)) * c(T::zero(), lit(-0.5))))?;
        let pz = &x + &y * c(T::zero(), T::one());
        let retained = [pp.trace().re, zz.trace().re];
        if !(retained[0] > T::zero() && retained[1] > T::zero()) {
            return Err(Error::InvalidState("no population left in the nuclear qubit".into()));
        }
        // ε'(|j⟩⟨k|) = ε(|j⟩⟨k|)/√(t_j t_k) keeps the map CP and trace preserving
        let norm = |j: usize, k: usize| cr(T::one() / (retained[j] * retained[k]).sqrt());
        let zp = pz.adjoint();
        Ok(Self { outputs: [pp * norm(0, 0), pz * norm(0, 1), zp * norm(1, 0), zz * norm(1, 1)], retained })
    }

    pub fn apply(&self, rho: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
        if rho.shape() != (2, 2) {
            return Err(Error::Dimension("nuclear qubit operators are 2×2".into()));
        }
        Ok(&self.outputs[0] * rho[(0, 0)]
            + &self.outputs[1] * rho[(0, 1)]
            + &self.outputs[2] * rho[(1, 0)]
            + &self.outputs[3] * rho[(1, 1)])
    }

    /// Process matrix of the channel followed by nuclear dephasing.
    pub fn dephased_process(&self) -> Result<ProcessMatrix<T>> {
        qpt_chi(|rho| Ok(dephase_nuclear(&self.apply(rho)?)))
    }
}

/// One point of the nuclear fidelity map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint<T = f64> {
    #[serde(rename = "field_G")]
    pub field_g: T,
    pub pump_us: T,
    pub fidelity: T,
    pub fidelity_linear: T,
    /// Smaller of the two qubit-subspace traces before renormalization.
    pub retained: T,
}

pub fn nuclear_fidelity_point<T: Real>(sim: &Simulator<T>, pump: T) -> Result<FidelityPoint<T>> {
    let ch = NuclearChannel::new(sim, pump)?;
    let chi = ch.dephased_process()?;
    let ideal = chi_ideal();
    Ok(FidelityPoint {
        field_g: sim.field_g(),
        pump_us: pump,
        fidelity: process_fidelity(&chi, &ideal)?,
        fidelity_linear: process_fidelity_linear(&chi, &ideal),
        retained: ch.retained[0].min(ch.retained[1]),
    })
}

/// Fidelity on the `fields × pumps` grid, ordered field-major.
pub fn nuclear_fidelity_map<T: Real>(
    fields: &[T],
    pumps: &[T],
    p: &ModelParams<T>,
    r: &RateTable<T>,
) -> Result<Vec<FidelityPoint<T>>> {
    if fields.is_empty() || pumps.is_empty() {
        return Err(Error::InvalidArgument("fidelity map needs fields and pump times".into()));
    }
    let rows = fields
        .par_iter()
        .map(|&b| {
            let sim = Simulator::new(p, r, b)?;
            pumps.par_iter().map(|&t| nuclear_fidelity_point(&sim, t)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Nearest unit-trace positive semidefinite matrix by eigenvalue clipping:
/// negative eigenvalues are set to zero and the trace excess is removed
/// evenly from the survivors until none is negative.
pub fn physicalize<T: Real>(raw: &ComplexMatrix<T>) -> Result<DensityMatrix<T>> {
    let h = symmetrize(raw);
    let (vals, vecs) = herm_eigh(&h)?;
    let mut lam: Vec<T> = vals.iter().copied().collect();
    let mut active: Vec<bool> = vec![true; lam.len()];
    loop {
        let mut changed = false;
        for (l, a) in lam.iter_mut().zip(active.iter_mut()) {
            if *a && *l < T::zero() {
                *l = T::zero();
                *a = false;
                changed = true;
            }
        }
        let n = active.iter().filter(|a| **a).count();
        if n == 0 {
            return Err(Error::InvalidState("no positive eigenvalue to keep".into()));
        }
        let excess = lam.iter().fold(T::zero(), |s, l| s + *l) - T::one();
        if !changed && excess.abs() <= lit(1e-15) {
            break;
        }
        let share = excess / lit(n as f64);
        for (l, a) in lam.iter_mut().zip(&active) {
            if *a {
                *l -= share;
            }
        }
        if lam.iter().zip(&active).all(|(l, a)| !*a || *l >= T::zero()) {
            break;
        }
    }
    let d = nalgebra::DVector::from_iterator(lam.len(), lam.iter().map(|&v| cr(v)));
    let m = &vecs * ComplexMatrix::from_diagonal(&d) * vecs.adjoint();
    Ok(DensityMatrix::new_unchecked(symmetrize(&m)))
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`.
pub fn state_fidelity<T: Real>(rho: &DensityMatrix<T>, sigma: &DensityMatrix<T>) -> Result<T> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension("states differ in dimension".into()));
    }
    let s = herm_sqrt(rho.matrix())?;
    let inner = symmetrize(&(&s * sigma.matrix() * &s));
    let f = herm_sqrt(&inner)?.trace().re;
    Ok((f * f).min(T::one()).max(T::zero()))
}

/// Exact electron rotation on the qutrit ordered `(+1, 0, −1)`, matching the
/// simulator's `ElectronRotation`.
fn electron_unitary<T: Real>(branch: Branch, angle: T, phase: T) -> ComplexMatrix<T> {
    let (a, b) = (1, crate::spinops::spin1_index(branch.ms()));
    let mut u = crate::spinops::identity::<T>(3);
    let half = angle * lit(0.5);
    u[(a, a)] = cr(half.cos());
    u[(b, b)] = cr(half.cos());
    u[(a, b)] = c(T::zero(), -half.sin()) * crate::scalar::cis(phase);
    u[(b, a)] = c(T::zero(), -half.sin()) * crate::scalar::cis(-phase);
    u
}

/// One measurement setting: rotations that diagonalize the listed Gell-Mann
/// matrices (0-based), with the eigenvalue weights on `(p₊, p₀, p₋)`.
#[derive(Debug, Clone)]
pub struct QstSetting<T: Real> {
    pub rotations: Vec<(Branch, T, T)>,
    pub lambdas: Vec<usize>,
    pub weights: Vec<[T; 3]>,
}

/// The seven settings covering `λ₁ … λ₈`.
pub fn qst_settings<T: Real>() -> Result<Vec<QstSetting<T>>> {
    let pi = lit::<T>(std::f64::consts::PI);
    let half = pi * lit(0.5);
    let z = T::zero();
    let plans: [(Vec<(Branch, T, T)>, Vec<usize>); 7] = [
        (vec![], vec![2, 7]),
        (vec![(Branch::Plus, half, half)], vec![0]),
        (vec![(Branch::Plus, half, z)], vec![1]),
        (vec![(Branch::Minus, pi, z), (Branch::Plus, half, z)], vec![3]),
        (vec![(Branch::Minus, pi, half), (Branch::Plus, half, z)], vec![4]),
        (vec![(Branch::Minus, half, half)], vec![5]),
        (vec![(Branch::Minus, half, z)], vec![6]),
    ];
    let basis = gellmann_basis::<T>();
    plans
        .into_iter()
        .map(|(rotations, lambdas)| {
            let u = rotations
                .iter()
                .fold(crate::spinops::identity::<T>(3), |acc, &(br, a, ph)| electron_unitary(br, a, ph) * acc);
            let weights = lambdas
                .iter()
                .map(|&k| {
                    let d = &u * &basis[k] * u.adjoint();
                    let off = (0..3)
                        .flat_map(|i| (0..3).map(move |j| (i, j)))
                        .filter(|(i, j)| i != j)
                        .fold(T::zero(), |m, (i, j)| m.max(d[(i, j)].norm_sqr().sqrt()));
                    if off > lit(1e-12) {
                        return Err(Error::InvalidArgument(format!("setting does not diagonalize λ{}", k + 1)));
                    }
                    Ok([d[(0, 0)].re, d[(1, 1)].re, d[(2, 2)].re])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(QstSetting { rotations, lambdas, weights })
        })
        .collect()
}

/// Gaussian noise added to every normalized readout, as a fraction of the
/// `m_S = 0` yield.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutNoise<T = f64> {
    pub sigma: T,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QstResult<T: Real> {
    pub expectations: [T; 8],
    /// Linear reconstruction before physicalization.
    pub raw: ComplexMatrix<T>,
    pub rho: DensityMatrix<T>,
    /// `(C₊, C₋)` used for the readout inversion.
    pub contrasts: (T, T),
}

/// Rows: no swap, swap to `+1`, swap to `−1`; columns `(p₊, p₀, p₋)`.
fn calibration_matrix<T: Real>(contrasts: (T, T)) -> Result<nalgebra::Matrix3<T>> {
    let a = T::one() - contrasts.0;
    let b = T::one() - contrasts.1;
    let one = T::one();
    let m = nalgebra::Matrix3::new(a, one, b, one, a, b, a, b, one);
    let det = m.determinant();
    if det.abs() < lit(1e-9) {
        return Err(Error::SingularCalibration(to_f64(det)));
    }
    Ok(m)
}

/// Qutrit tomography of the state left by `prep` acting on `rho0`. The
/// readout is calibrated on `rho0` itself, which must be an `m_S = 0` state.
pub fn qst_qutrit_from<T: Real>(
    sim: &Simulator<T>,
    prep: &[Segment<T>],
    rho0: &DensityMatrix<T>,
    noise: Option<ReadoutNoise<T>>,
) -> Result<QstResult<T>> {
    let field = sim.field_g();
    let readout = Segment::Readout {
        window: lit(crate::engine::READOUT_WINDOW_US),
        dt: lit(crate::engine::READOUT_DT_US),
    };
    let measure = |start: &DensityMatrix<T>, mut segs: Vec<Segment<T>>, swap: Option<Branch>| -> Result<T> {
        if let Some(branch) = swap {
            segs.push(Segment::AdiabaticSwap { branch });
        }
        segs.push(readout.clone());
        let (_, rec) = sim.run(&Sequence::new("qst", field, segs)?, start)?;
        rec.map(|r| r.yield_).ok_or_else(|| Error::InvalidSequence("tomography readout missing".into()))
    };
    let swaps = [None, Some(Branch::Plus), Some(Branch::Minus)];
    let cal = swaps.iter().map(|&s| measure(rho0, vec![], s)).collect::<Result<Vec<_>>>()?;
    let contrasts = ((cal[0] - cal[1]) / cal[0], (cal[0] - cal[2]) / cal[0]);
    let inverse = calibration_matrix(contrasts)?
        .try_inverse()
        .ok_or_else(|| Error::SingularCalibration(0.0))?;
    let (state, _) = sim.run(&Sequence::new("prep", field, prep.to_vec())?, rho0)?;
    let mut rng = noise.map(|n| (n.sigma, ChaCha8Rng::seed_from_u64(n.seed)));
    let mut expectations = [T::zero(); 8];
    for setting in qst_settings::<T>()? {
        let rotations: Vec<Segment<T>> = setting
            .rotations
            .iter()
            .map(|&(branch, angle, phase)| Segment::ElectronRotation { branch, angle, phase })
            .collect();
        let mut r = nalgebra::Vector3::zeros();
        for (k, &swap) in swaps.iter().enumerate() {
            r[k] = measure(&state, rotations.clone(), swap)? / cal[0];
            if let Some((sigma, rng)) = rng.as_mut() {
                let g: f64 = StandardNormal.sample(rng);
                r[k] += *sigma * lit(g);
            }
        }
        let pops = inverse * r;
        for (&k, w) in setting.lambdas.iter().zip(&setting.weights) {
            expectations[k] = w[0] * pops[0] + w[1] * pops[1] + w[2] * pops[2];
        }
    }
    let raw = gellmann_reconstruct(&expectations);
    let rho = physicalize(&raw)?;
    Ok(QstResult { expectations, raw, rho, contrasts })
}

/// Tomography after `prep` applied to the initialized state at the
/// sequence's field.
pub fn qst_qutrit<T: Real>(
    prep: &Sequence<T>,
    p: &ModelParams<T>,
    r: &RateTable<T>,
    noise: Option<ReadoutNoise<T>>,
) -> Result<QstResult<T>> {
    let sim = Simulator::new(p, r, prep.field)?;
    qst_qutrit_from(&sim, &prep.segments, &sim.initialized()?, noise)
}

/// Electron state actually left by `prep`, for comparison with tomography.
pub fn electron_state<T: Real>(
    sim: &Simulator<T>,
    prep: &[Segment<T>],
    rho0: &DensityMatrix<T>,
) -> Result<DensityMatrix<T>> {
    let (state, _) = sim.run(&Sequence::new("prep", sim.field_g(), prep.to_vec())?, rho0)?;
    ground_reduced(state.matrix(), 0)
}

/// Spread of noisy reconstructions; replicate `k` uses noise seed `seed + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QstBootstrap<T = f64> {
    pub replicates: usize,
    pub seed: u64,
    pub sigma: T,
    pub fidelities: Vec<T>,
    pub fidelity_mean: T,
    pub fidelity_std: T,
    /// Standard deviation of `|ρ_ij|` across replicates.
    pub entry_std: [[T; 3]; 3],
}

pub fn qst_bootstrap<T: Real>(
    sim: &Simulator<T>,
    prep: &[Segment<T>],
    rho0: &DensityMatrix<T>,
    target: &DensityMatrix<T>,
    sigma: T,
    replicates: usize,
    seed: u64,
) -> Result<QstBootstrap<T>> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("bootstrap needs at least two replicates".into()));
    }
    let runs = (0..replicates)
        .into_par_iter()
        .map(|k| {
            let noise = ReadoutNoise { sigma, seed: seed.wrapping_add(k as u64) };
            let q = qst_qutrit_from(sim, prep, rho0, Some(noise))?;
            Ok((state_fidelity(&q.rho, target)?, q.rho))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = lit::<T>(replicates as f64);
    let mean = |xs: &mut dyn Iterator<Item = T>| xs.fold(T::zero(), |s, x| s + x) / n;
    let std = |xs: Vec<T>| {
        let m = mean(&mut xs.iter().copied());
        (xs.iter().fold(T::zero(), |s, x| s + (*x - m) * (*x - m)) / (n - T::one())).sqrt()
    };
    let fidelities: Vec<T> = runs.iter().map(|r| r.0).collect();
    let entry_std = std::array::from_fn(|i| {
        std::array::from_fn(|j| std(runs.iter().map(|r| r.1.matrix()[(i, j)].norm_sqr().sqrt()).collect()))
    });
    Ok(QstBootstrap {
        replicates,
        seed,
        sigma,
        fidelity_mean: mean(&mut fidelities.iter().copied()),
        fidelity_std: std(fidelities.clone()),
        fidelities,
        entry_std,
    })
}
