use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nvsim::analytics::{four_level_crossing, phase_susceptibility_with};
use nvsim::engine::{contrast_all, pump_polarization, READOUT_WINDOW_US};
use nvsim::fitting::{
    bootstrap, fit_odmr_triplet, fit_ramsey, fit_saturation, fit_t2star, FitOptions, FitResult, OdmrTriplet,
    RamseyFringe, Saturation, TripletOptions, TwoToneDecay,
};
use nvsim::nvmodel::{eslac_gap, find_eslac};
use nvsim::sequences::{theta_grid, thermal_prep_segments, Broadening, RamseyKind, RepumpPoint, Simulator};
use nvsim::tomography::{electron_state, nuclear_fidelity_map, qst_bootstrap, qst_qutrit_from, state_fidelity};
use nvsim::{BasisState, DensityMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{FieldSweep, RunConfig, TimeGrid};
use crate::output::{Cell, Run, Table};
use crate::{FitModel, UsageError};

const WIDE: FieldSweep = FieldSweep { start_G: 200.0, stop_G: 800.0, step_G: 25.0 };
const COARSE: FieldSweep = FieldSweep { start_G: 200.0, stop_G: 800.0, step_G: 50.0 };

fn simulator(cfg: &RunConfig, b: f64) -> Result<Simulator<f64>> {
    let sim = Simulator::new(&cfg.params, &cfg.rates, b)?;
    Ok(sim.with_broadening(cfg.T2star_us.map(|t2star_us| Broadening { t2star_us, nodes: 9 }))?)
}

fn times_or(grid: &Option<TimeGrid>, default: TimeGrid) -> Result<Vec<f64>, UsageError> {
    grid.unwrap_or(default).points()
}

fn projection(m: i8) -> &'static str {
    match m {
        1 => "+1",
        0 => "0",
        _ => "-1",
    }
}

pub fn contrast_sweep(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let fields = cfg.fields_or(WIDE)?;
    let states = BasisState::all();
    let names: Vec<String> = states.iter().map(|s| format!("ms{}_mI{}", projection(s.ms), projection(s.mi))).collect();
    let mut header = vec!["field_G"];
    header.extend(names.iter().map(String::as_str));
    let rows = fields
        .par_iter()
        .map(|&b| contrast_all(&cfg.params, &cfg.rates, b, READOUT_WINDOW_US))
        .collect::<nvsim::Result<Vec<_>>>()?;
    let mut table = Table::new(&header);
    for (b, row) in fields.iter().zip(rows) {
        let mut r = vec![*b];
        r.extend(row);
        table.nums(&r);
    }
    run.csv("contrast_sweep.csv", &table)
}

fn fringe_name(kind: RamseyKind, b: f64, t: f64) -> String {
    format!("fringes/{kind}_{b:.1}G_{t:.4}us.csv")
}

pub fn repump(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let fields = cfg.fields_or(COARSE)?;
    let times = times_or(&cfg.repump, TimeGrid { start_us: 0.0, stop_us: 3.0, step_us: 0.25 })?;
    let thetas = theta_grid::<f64>(cfg.theta_points);
    let kinds = cfg.kinds.clone();
    // per field, per kind
    let scans: Vec<Vec<Vec<RepumpPoint>>> = fields
        .par_iter()
        .map(|&b| {
            let sim = simulator(cfg, b)?;
            kinds.iter().map(|&k| Ok(sim.repump_scan(&times, k, &thetas)?)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Table::new(&["field_G", "kind", "max_visibility", "max_at_us"]);
    for (ki, kind) in kinds.iter().enumerate() {
        let mut table = Table::new(&["field_G", "repump_us", "visibility", "phase_rad", "fit_residual", "converged"]);
        for (b, scan) in fields.iter().zip(&scans) {
            for q in &scan[ki] {
                if let Some(e) = &q.error {
                    run.notes.push(format!("{kind} fit failed at {b} G, {} us: {e}", q.repump_us));
                }
                table.push(vec![
                    Cell::Num(*b),
                    Cell::Num(q.repump_us),
                    Cell::Num(q.visibility),
                    Cell::Num(q.phase),
                    Cell::Num(q.residual),
                    Cell::Int(q.converged as i64),
                ]);
            }
            let best = scan[ki].iter().filter(|q| q.visibility.is_finite()).max_by(|a, b| a.visibility.total_cmp(&b.visibility));
            if let Some(best) = best {
                summary.push(vec![
                    Cell::Num(*b),
                    Cell::Text(kind.to_string()),
                    Cell::Num(best.visibility),
                    Cell::Num(best.repump_us),
                ]);
            }
        }
        run.csv(&format!("repump_{kind}.csv"), &table)?;
    }
    run.csv("repump_summary.csv", &summary)?;

    if let Some(ci) = kinds.iter().position(|&k| k == RamseyKind::Control) {
        let mut check = Table::new(&["field_G", "repump_us", "kind", "visibility", "control_visibility", "margin"]);
        let mut violations = 0;
        for (b, scan) in fields.iter().zip(&scans) {
            for (ki, kind) in kinds.iter().enumerate().filter(|&(ki, _)| ki != ci) {
                for (q, c) in scan[ki].iter().zip(&scan[ci]) {
                    let margin = c.visibility - q.visibility;
                    violations += (margin < 0.0) as usize;
                    check.push(vec![
                        Cell::Num(*b),
                        Cell::Num(q.repump_us),
                        Cell::Text(kind.to_string()),
                        Cell::Num(q.visibility),
                        Cell::Num(c.visibility),
                        Cell::Num(margin),
                    ]);
                }
            }
        }
        if violations > 0 {
            run.notes.push(format!("control visibility below thermal visibility in {violations} rows"));
        }
        run.csv("repump_control_check.csv", &check)?;
    }

    if cfg.write_fringes {
        for &b in &fields {
            let sim = simulator(cfg, b)?;
            for &kind in &kinds {
                for &t in &times {
                    let f = sim.ramsey(kind, t, &thetas)?;
                    let mut table = Table::new(&["theta_rad", "signal"]);
                    for (th, s) in f.thetas.iter().zip(&f.signal) {
                        table.nums(&[*th, *s]);
                    }
                    run.csv(&fringe_name(kind, b, t), &table)?;
                }
            }
        }
    }
    Ok(())
}

pub fn fidelity_map(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let fields = cfg.fields_or(WIDE)?;
    let pumps = times_or(&cfg.pump, TimeGrid { start_us: 0.0, stop_us: 1.9, step_us: 0.1 })?;
    let map = nuclear_fidelity_map(&fields, &pumps, &cfg.params, &cfg.rates)?;
    let mut table = Table::new(&["field_G", "pump_us", "F"]);
    for q in &map {
        table.nums(&[q.field_g, q.pump_us, q.fidelity]);
    }
    run.csv("fidelity_map.csv", &table)
}

pub fn phase_susceptibility(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let fields = cfg.fields_or(FieldSweep { start_G: 350.0, stop_G: 650.0, step_G: 5.0 })?;
    let values = fields
        .par_iter()
        .map(|&b| {
            phase_susceptibility_with(&cfg.params, b, cfg.es_lifetime_us, cfg.phase_frame, cfg.excitation_rate_MHz)
                .map(|s| s.per_es_time)
        })
        .collect::<nvsim::Result<Vec<_>>>()?;
    let mut table = Table::new(&["field_G", "chi_phi"]);
    for (b, v) in fields.iter().zip(values) {
        table.nums(&[*b, v]);
    }
    run.notes.push(format!("chi_phi in rad/us, {:?} frame", cfg.phase_frame));
    run.csv("phase_susceptibility.csv", &table)
}

#[derive(Serialize)]
struct NoisyTomography {
    sigma: f64,
    seeds: Vec<u64>,
    fidelities: Vec<f64>,
    fidelity_mean: f64,
    fidelity_std: f64,
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct TomographyRecord {
    field_G: f64,
    /// Row-major `[re, im]` pairs.
    rho: Vec<[f64; 2]>,
    /// Against `I/3`.
    fidelity: f64,
    /// Against the simulated electron state the readout actually saw.
    fidelity_to_prepared: f64,
    max_off_diagonal: f64,
    C_plus: f64,
    C_minus: f64,
    gell_mann_expectations: [f64; 8],
    noisy: Option<NoisyTomography>,
}

pub fn tomography(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let b = cfg.field_or(500.0);
    let sim = simulator(cfg, b)?;
    let start = sim.initialized()?;
    let prep = thermal_prep_segments();
    let target = DensityMatrix::maximally_mixed(3);
    let q = qst_qutrit_from(&sim, &prep, &start, None)?;
    let fidelity = state_fidelity(&q.rho, &target)?;
    let fidelity_to_prepared = state_fidelity(&q.rho, &electron_state(&sim, &prep, &start)?)?;
    let noisy = if cfg.readout_noise > 0.0 {
        let n = cfg.noise_seeds.max(2);
        let boot = qst_bootstrap(&sim, &prep, &start, &target, cfg.readout_noise, n, cfg.seed)?;
        Some(NoisyTomography {
            sigma: boot.sigma,
            seeds: (0..n as u64).map(|k| cfg.seed + k).collect(),
            fidelities: boot.fidelities,
            fidelity_mean: boot.fidelity_mean,
            fidelity_std: boot.fidelity_std,
        })
    } else {
        None
    };
    let m = q.rho.matrix();
    let record = TomographyRecord {
        field_G: b,
        rho: (0..3).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| [m[(i, j)].re, m[(i, j)].im]).collect(),
        fidelity,
        fidelity_to_prepared,
        max_off_diagonal: (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .fold(0.0, |a, (i, j)| a.max(m[(i, j)].norm())),
        C_plus: q.contrasts.0,
        C_minus: q.contrasts.1,
        gell_mann_expectations: q.expectations,
        noisy,
    };
    run.json("tomography.json", &record)
}

pub fn polarization(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let fields = cfg.fields_or(COARSE)?;
    let pumps = match &cfg.pump {
        Some(g) => g.points()?,
        None => vec![20.0],
    };
    if pumps.iter().any(|&t| t <= 0.0) {
        return Err(UsageError("polarization pump times must be > 0".into()).into());
    }
    let grid: Vec<(f64, f64)> = fields.iter().flat_map(|&b| pumps.iter().map(move |&t| (b, t))).collect();
    let values = grid
        .par_iter()
        .map(|&(b, t)| pump_polarization(&cfg.params, &cfg.rates, b, t))
        .collect::<nvsim::Result<Vec<_>>>()?;
    let mut table = Table::new(&["field_G", "pump_us", "polarization"]);
    for ((b, t), v) in grid.iter().zip(values) {
        table.nums(&[*b, *t, v]);
    }
    run.csv("polarization.csv", &table)
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct EslacRecord {
    eslac_G: f64,
    gap_MHz: f64,
    four_level_crossing_G: f64,
}

pub fn eslac(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let fields = cfg.fields_or(FieldSweep { start_G: 400.0, stop_G: 620.0, step_G: 1.0 })?;
    let mut table = Table::new(&["field_G", "gap_MHz"]);
    for &b in &fields {
        table.nums(&[b, eslac_gap(&cfg.params, b)]);
    }
    run.csv("eslac.csv", &table)?;
    let at = find_eslac(&cfg.params);
    let record =
        EslacRecord { eslac_G: at, gap_MHz: eslac_gap(&cfg.params, at), four_level_crossing_G: four_level_crossing(&cfg.params) };
    run.json("eslac.json", &record)
}

/// Two numeric columns from a CSV with an optional header row.
pub fn read_xy(path: &Path, x: Option<&str>, y: Option<&str>) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let first = lines.peek().ok_or_else(|| anyhow!("{}: empty file", path.display()))?.1;
    let cells: Vec<&str> = first.split(',').map(str::trim).collect();
    let header = cells.iter().any(|c| c.parse::<f64>().is_err());
    let (xi, yi) = if header {
        let find = |name: Option<&str>, fallback: usize| -> Result<usize> {
            match name {
                None => Ok(fallback),
                Some(n) => cells.iter().position(|c| *c == n).ok_or_else(|| anyhow!("{}: no column {n}", path.display())),
            }
        };
        let pos = (find(x, 0)?, find(y, 1)?);
        lines.next();
        pos
    } else {
        if x.is_some() || y.is_some() {
            bail!("{}: column names given but the file has no header", path.display());
        }
        (0, 1)
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (n, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |k: usize| -> Result<f64> {
            let c = cells.get(k).ok_or_else(|| anyhow!("{}:{}: missing column {}", path.display(), n + 1, k + 1))?;
            c.parse().map_err(|_| anyhow!("{}:{}: not a number: {c}", path.display(), n + 1))
        };
        xs.push(get(xi)?);
        ys.push(get(yi)?);
    }
    if xs.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok((xs, ys))
}

#[derive(Serialize)]
struct FitRecord {
    model: &'static str,
    points: usize,
    fit: FitResult<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alternative: Option<FitResult<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<nvsim::fitting::Bootstrap<f64>>,
}

pub fn fit(cfg: &RunConfig, run: &mut Run, input: &Path, model: FitModel, x: Option<&str>, y: Option<&str>) -> Result<()> {
    let (xs, ys) = read_xy(input, x, y)?;
    let fc = &cfg.fit;
    let (fit, alternative, boot_model): (FitResult<f64>, Option<FitResult<f64>>, Box<dyn nvsim::fitting::Model<f64>>) =
        match model {
            FitModel::Ramsey => (fit_ramsey(&xs, &ys)?, None, Box::new(RamseyFringe)),
            FitModel::Saturation => {
                let both = fit_saturation(&xs, &ys)?;
                let (main, other) = match fc.saturation_form {
                    nvsim::fitting::SaturationForm::Standard => (both.standard, both.literal),
                    nvsim::fitting::SaturationForm::Literal => (both.literal, both.standard),
                };
                (main, Some(other), Box::new(Saturation { form: fc.saturation_form }))
            }
            FitModel::Triplet => {
                let opts = TripletOptions { hyperfine: fc.hyperfine_MHz, shared_width: fc.shared_width, plus_line_low: fc.plus_line_low };
                let model = OdmrTriplet { hyperfine: fc.hyperfine_MHz, shared_width: fc.shared_width };
                (fit_odmr_triplet(&xs, &ys, &opts)?, None, Box::new(model))
            }
            FitModel::T2star => (fit_t2star(&xs, &ys, fc.C_par_MHz)?, None, Box::new(TwoToneDecay { c_par: fc.C_par_MHz })),
        };
    let bootstrap = if fc.bootstrap > 0 {
        Some(bootstrap(boot_model.as_ref(), &fit, &xs, &ys, fc.bootstrap, cfg.seed, &FitOptions::default())?)
    } else {
        None
    };
    let record = FitRecord { model: model.name(), points: xs.len(), fit, alternative, bootstrap };
    run.json(&format!("fit_{}.json", model.name()), &record)
}
