use super::liouvillian::Block;
use super::*;
use crate::expm::expm;
use crate::spinops::{DensityMatrix, ComplexMatrix};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type M = ComplexMatrix<f64>;

fn max_abs(m: &M) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

fn gs(ms: i8, mi: i8) -> usize {
    block_index(ms, mi)
}

#[test]
fn gs_zero_field_diagonal() {
    let p = ModelParams { c_perp: 0.0, ..ModelParams::<f64>::default() };
    let h = gs_hamiltonian(&p, 0.0);
    for i in 0..9 {
        for j in 0..9 {
            if i != j {
                assert_eq!(h[(i, j)].norm(), 0.0);
            }
        }
    }
    assert_eq!(h[(gs(0, 0), gs(0, 0))].norm(), 0.0);
}

#[test]
fn gs_term_by_term() {
    let p = ModelParams::<f64>::default();
    let h = gs_hamiltonian(&p, 500.0);
    let e = h[(gs(-1, 1), gs(-1, 1))];
    assert!((e.re - 1463.2).abs() < 1e-9, "{e}");
    assert!(e.im.abs() < 1e-15);
    let (vals, vecs) = herm_eigh(&h).unwrap();
    let pick = |k: usize| {
        (0..9)
            .max_by(|&a, &b| vecs[(k, a)].norm().partial_cmp(&vecs[(k, b)].norm()).unwrap())
            .unwrap()
    };
    let gap = vals[pick(gs(-1, 0))] - vals[pick(gs(0, 0))];
    assert!((gap - 1470.0).abs() < 2.0, "{gap}");
}

#[test]
fn es_flip_flop_element() {
    let p = ModelParams::<f64>::default();
    let h = es_hamiltonian(&p, 300.0);
    assert!((h[(gs(-1, 1), gs(0, 0))].re + 23.0).abs() < 1e-12);
    assert!((h[(gs(0, 0), gs(-1, 1))].re + 23.0).abs() < 1e-12);
    assert!((h[(gs(0, -1), gs(-1, 0))].re + 23.0).abs() < 1e-12);
    assert!((h[(gs(1, 0), gs(0, 1))].re + 23.0).abs() < 1e-12);
    // explicit ladder-operator algebra: A_perp/2 <-1,+1| S-I+ |0,0>, S-|0> = sqrt2 |-1>, I+|0> = sqrt2 |+1>
    let ladder = -23.0 / 2.0 * 2f64.sqrt() * 2f64.sqrt();
    assert!((h[(gs(-1, 1), gs(0, 0))].re - ladder).abs() < 1e-12);
    let reduced = ModelParams { flip_flop: FlipFlop::Reduced, ..p };
    let h = es_hamiltonian(&reduced, 300.0);
    assert!((h[(gs(-1, 1), gs(0, 0))].re + 11.5).abs() < 1e-12);
}

#[test]
fn es_zero_field_symmetry() {
    let p = ModelParams::<f64>::default();
    let h = es_hamiltonian(&p, 0.0);
    // m_S -> -m_S with m_I -> -m_I reverses the storage order within each factor
    let flip = |k: usize| 8 - k;
    for i in 0..9 {
        for j in 0..9 {
            assert!((h[(i, j)] - h[(flip(i), flip(j))]).norm() < 1e-12);
        }
    }
    let (vals, _) = herm_eigh(&h).unwrap();
    let (vflip, _) = herm_eigh(&M::from_fn(9, 9, |i, j| h[(flip(i), flip(j))])).unwrap();
    assert!((vals - vflip).amax() < 1e-10);
}

#[test]
fn es_diagonal_crossing_near_507() {
    let p = ModelParams::<f64>::default();
    let h = es_hamiltonian(&p, 507.0);
    let d = (h[(gs(0, 0), gs(0, 0))].re - h[(gs(-1, 1), gs(-1, 1))].re).abs();
    assert!(d < p.a_par.abs(), "{d}");
}

#[test]
fn singlet_levels() {
    let p = ModelParams::<f64>::default();
    let h = singlet_hamiltonian(&p, 0.0);
    let want = [-4.85, 0.0, -4.85];
    for k in 0..3 {
        assert!((h[(k, k)].re - want[k]).abs() < 1e-14);
        assert_eq!(h[(k, k)].im, 0.0);
    }
    let h = singlet_hamiltonian(&p, 500.0);
    assert!(((h[(0, 0)].re - h[(2, 2)].re) - 0.3).abs() < 1e-12);
    assert!(crate::spinops::hermiticity_deviation(&h) == 0.0);
}

#[test]
fn hamiltonians_conserve_total_projection() {
    let p = ModelParams::<f64>::default();
    for b in [0.0, 250.0, 510.0] {
        for h in [gs_hamiltonian(&p, b), es_hamiltonian(&p, b)] {
            assert_eq!(crate::spinops::hermiticity_deviation(&h), 0.0);
            for i in 0..9 {
                for j in 0..9 {
                    let q = |k: usize| {
                        crate::spinops::spin1_projection(k / 3) + crate::spinops::spin1_projection(k % 3)
                    };
                    if q(i) != q(j) {
                        assert_eq!(h[(i, j)].norm(), 0.0);
                    }
                }
            }
        }
    }
}

/// Oracle: column-stacked superoperator from Kronecker products,
/// vec(AXB) = (Bᵀ ⊗ A) vec(X).
fn kron_generator(h: &M, jumps: &[Jump<f64>]) -> M {
    let id = M::identity(DIM, DIM);
    let two_pi = std::f64::consts::TAU;
    let mut g = (kron(&id, h) - kron(&h.transpose(), &id)) * Complex::new(0.0, -two_pi);
    for j in jumps {
        let l = j.dense();
        let k = l.adjoint() * &l;
        let d = kron(&l.conjugate(), &l) - (kron(&id, &k) + kron(&k.transpose(), &id)) * Complex::new(0.5, 0.0);
        g += d * Complex::new(j.rate, 0.0);
    }
    g
}

#[test]
fn generator_matches_kron_oracle() {
    let p = ModelParams::<f64>::default();
    let r = RateTable::<f64>::default();
    let l = build_liouvillian(&p, &r, 480.0, 1.0).unwrap();
    let oracle = kron_generator(l.hamiltonian(), l.jumps());
    assert!(max_abs(&(l.generator() - &oracle)) < 1e-9);
}

#[test]
fn zero_rates_leave_pure_commutator() {
    let p = ModelParams::<f64>::default();
    let l = build_liouvillian(&p, &RateTable::<f64>::none(), 500.0, 0.0).unwrap();
    let commutator = kron_generator(l.hamiltonian(), &[]);
    let dissipative = l.generator() - commutator;
    assert!(max_abs(&dissipative) < 1e-9);
    assert!(l.jumps().iter().all(|j| j.rate == 0.0));
}

#[test]
fn negative_rate_rejected() {
    let p = ModelParams::<f64>::default();
    let r = RateTable { gamma4: -1.0, ..RateTable::<f64>::default() };
    assert!(matches!(build_liouvillian(&p, &r, 100.0, 1.0), Err(Error::NegativeRate(_))));
    assert!(build_liouvillian(&p, &RateTable::<f64>::default(), 100.0, -0.1).is_err());
}

#[test]
fn trace_and_hermiticity_preserved() {
    let p = ModelParams::<f64>::default();
    let l = build_liouvillian(&p, &RateTable::<f64>::default(), 510.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let rho = DensityMatrix::<f64>::random(DIM, &mut rng);
        let d = l.apply(rho.matrix());
        assert!(d.trace().norm() < 1e-10);
        assert!(crate::spinops::hermiticity_deviation(&d) < 1e-10);
    }
}

#[test]
fn jumps_preserve_nuclear_projection() {
    for j in jump_operators(&RateTable::<f64>::default(), 1.0) {
        let mut cols = std::collections::HashSet::new();
        for &(row, col, v) in &j.entries {
            assert_eq!(v, Complex::new(1.0, 0.0));
            assert!(cols.insert(col), "{} maps a state twice", j.label);
            let (_, _, mi_r) = crate::levels::quantum_numbers(row);
            let (_, _, mi_c) = crate::levels::quantum_numbers(col);
            assert_eq!(mi_r, mi_c, "{}", j.label);
        }
    }
}

fn evolve(l: &Liouvillian<f64>, rho: &M, t: f64) -> M {
    let coords = Block::Intra.coordinates();
    let g = l.real_generator(Block::Intra) * t;
    coords.decode(&(expm(&g).unwrap() * coords.encode(rho)))
}

#[test]
fn t1_population_relaxation() {
    let t1 = 7.0;
    let r = RateTable { t1_gs: t1, ..RateTable::<f64>::none() };
    let p = ModelParams { c_perp: 0.0, ..ModelParams::<f64>::default() };
    let l = build_liouvillian(&p, &r, 0.0, 0.0).unwrap();
    let rho = DensityMatrix::<f64>::basis(DIM, gs(1, 0)).into_matrix();
    for t in [0.5, 3.0, 11.0] {
        let out = evolve(&l, &rho, t);
        let diff = out[(gs(1, 0), gs(1, 0))].re - out[(gs(0, 0), gs(0, 0))].re;
        assert!((diff - (-t / t1).exp()).abs() < 1e-10, "{t}");
    }
    // rate-matrix oracle: k(J - 3I) has eigenvalues 0, -3k, -3k
    let k = 1.0 / (3.0 * t1);
    let rate = nalgebra::DMatrix::from_fn(3, 3, |i, j| if i == j { -2.0 * k } else { k });
    let eig = rate.symmetric_eigenvalues();
    let mut e: Vec<f64> = eig.iter().copied().collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!((e[0] + 1.0 / t1).abs() < 1e-12 && (e[1] + 1.0 / t1).abs() < 1e-12 && e[2].abs() < 1e-12);
}

#[test]
fn t2_coherence_decay() {
    let t2 = 0.3;
    let r = RateTable { t2_gs: t2, ..RateTable::<f64>::none() };
    let p = ModelParams { d_gs: 0.0, gamma_e: 0.0, c_par: 0.0, c_perp: 0.0, ..ModelParams::<f64>::default() };
    let l = build_liouvillian(&p, &r, 0.0, 0.0).unwrap();
    let h = 0.5f64.sqrt();
    let mut amp = vec![Complex::new(0.0, 0.0); DIM];
    amp[gs(0, 1)] = Complex::new(h, 0.0);
    amp[gs(-1, 1)] = Complex::new(h, 0.0);
    let rho = DensityMatrix::pure(&amp).unwrap().into_matrix();
    for t in [0.1, 0.4, 1.0] {
        let out = evolve(&l, &rho, t);
        let coh = out[(gs(0, 1), gs(-1, 1))].norm();
        assert!((coh - 0.5 * (-t / t2).exp()).abs() < 1e-10);
    }
}

#[test]
fn intra_block_is_invariant() {
    let p = ModelParams::<f64>::default();
    let l = build_liouvillian(&p, &RateTable::<f64>::default(), 505.0, 0.7).unwrap();
    let g = l.generator();
    let intra = |k: usize| Manifold::of(k % DIM) == Manifold::of(k / DIM);
    for to in 0..DIM * DIM {
        for from in 0..DIM * DIM {
            if intra(from) && !intra(to) {
                assert_eq!(g[(to, from)].norm(), 0.0);
            }
        }
    }
}

#[test]
fn coordinates_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rho = DensityMatrix::<f64>::random(DIM, &mut rng).into_matrix();
    let full = Coordinates::full();
    assert_eq!(full.len(), DIM * DIM);
    assert!(max_abs(&(full.decode(&full.encode(&rho)) - &rho)) < 1e-15);
    assert_eq!(Coordinates::intra().len(), 171);
    assert!(!Coordinates::intra().covers(&rho));
}

#[test]
fn real_generator_matches_complex() {
    let p = ModelParams::<f64>::default();
    let l = build_liouvillian(&p, &RateTable::<f64>::default(), 333.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rho = DensityMatrix::<f64>::random(DIM, &mut rng).into_matrix();
    let full = Coordinates::full();
    let via_real = full.decode(&(l.real_generator(Block::Full) * full.encode(&rho)));
    assert!(max_abs(&(via_real - l.apply(&rho))) < 1e-9);
    let x: DVector<f64> = full.encode(&rho);
    assert_eq!(x.len(), 441);
}

#[test]
fn eslac_dense_scan_oracle() {
    let p = ModelParams::<f64>::default();
    let found = find_eslac(&p);
    let mut best = (f64::INFINITY, 0.0);
    let mut b = 400.0;
    while b <= 620.0 {
        let g = eslac_gap(&p, b);
        if g < best.0 {
            best = (g, b);
        }
        b += 0.01;
    }
    assert!((found - best.1).abs() < 0.1, "{found} vs {}", best.1);
    assert!((400.0..=620.0).contains(&found));
}

#[test]
fn eslac_bare_limit() {
    let p = ModelParams { gamma_n: 0.0, a_par: 0.0, p_quad: 0.0, ..ModelParams::<f64>::default() };
    let found = find_eslac(&p);
    assert!((found - 1420.0 / 2.8).abs() < 0.1, "{found}");
}

#[test]
fn eslac_independent_of_transverse_sign() {
    let p = ModelParams::<f64>::default();
    let q = ModelParams { a_perp: -p.a_perp, ..p };
    assert!((find_eslac(&p) - find_eslac(&q)).abs() < 0.1);
    for b in [450.0, 500.0, 530.0] {
        assert!((eslac_gap(&p, b) - eslac_gap(&q, b)).abs() < 1e-9);
    }
}

#[test]
fn config_round_trip_rejects_unknown_keys() {
    let p = ModelParams::<f64>::default();
    let s = serde_json::to_string(&p).unwrap();
    assert!(s.contains("\"A_perp_MHz\""));
    let back: ModelParams = serde_json::from_str(&s).unwrap();
    assert_eq!(back, p);
    let partial: RateTable = serde_json::from_str(r#"{"Gamma4_MHz": 5.0}"#).unwrap();
    assert_eq!(partial.gamma4, 5.0);
    assert_eq!(partial.gamma1, 67.4);
    assert!(serde_json::from_str::<RateTable>(r#"{"Gamma9_MHz": 5.0}"#).is_err());
}
