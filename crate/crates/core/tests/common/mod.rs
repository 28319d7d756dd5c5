//! Test-only reference implementations that share no code with the
//! production propagators.

#![allow(dead_code)]

use nvsim::nvmodel::Liouvillian;
use nvsim::ComplexMatrix;
use num_complex::Complex64;

/// Lindblad right-hand side rebuilt from the dense Hamiltonian and jump list.
pub struct DenseLindblad {
    h: ComplexMatrix,
    jumps: Vec<(f64, ComplexMatrix, ComplexMatrix)>,
}

impl DenseLindblad {
    pub fn new(l: &Liouvillian<f64>) -> Self {
        let jumps = l
            .jumps()
            .iter()
            .filter(|j| j.rate != 0.0)
            .map(|j| {
                let op = j.dense();
                let k = op.adjoint() * &op;
                (j.rate, op, k)
            })
            .collect();
        Self { h: l.hamiltonian() * Complex64::new(std::f64::consts::TAU, 0.0), jumps }
    }

    pub fn rhs(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let minus_i = Complex64::new(0.0, -1.0);
        let mut out = (&self.h * rho - rho * &self.h) * minus_i;
        for (rate, op, k) in &self.jumps {
            let g = Complex64::new(*rate, 0.0);
            out += (op * rho * op.adjoint() - (k * rho + rho * k) * Complex64::new(0.5, 0.0)) * g;
        }
        out
    }
}

// Dormand–Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Adaptive DOPRI5 integration of `dρ/dt = f(ρ)` over `[0, t]`.
pub fn dopri5(f: impl Fn(&ComplexMatrix) -> ComplexMatrix, rho0: &ComplexMatrix, t: f64, tol: f64) -> ComplexMatrix {
    let mut y = rho0.clone();
    let mut now = 0.0;
    let mut h = 1e-5f64;
    let mut k: Vec<ComplexMatrix> = Vec::with_capacity(7);
    let mut first = f(&y);
    while now < t {
        h = h.min(t - now);
        k.clear();
        k.push(first.clone());
        for s in 1..7 {
            let mut stage = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    stage += kj * Complex64::new(h * A[s][j], 0.0);
                }
            }
            k.push(f(&stage));
        }
        let mut y5 = y.clone();
        let mut err = ComplexMatrix::zeros(y.nrows(), y.ncols());
        for s in 0..7 {
            y5 += &k[s] * Complex64::new(h * B5[s], 0.0);
            err += &k[s] * Complex64::new(h * (B5[s] - B4[s]), 0.0);
        }
        let scale = tol * (1.0 + y.camax().max(y5.camax()));
        let ratio = err.camax() / scale;
        if ratio <= 1.0 {
            now += h;
            y = y5;
            // first-same-as-last: the seventh stage is f at the new point
            first = k[6].clone();
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}
