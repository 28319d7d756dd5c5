//! Run configuration. One JSON document; every key carries its unit in the
//! name and unknown keys are rejected.

use std::path::Path;

use nvsim::analytics::PhaseFrame;
use nvsim::fitting::SaturationForm;
use nvsim::nvmodel::{ModelParams, RateTable};
use nvsim::sequences::RamseyKind;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSweep {
    pub start_G: f64,
    pub stop_G: f64,
    pub step_G: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub start_us: f64,
    pub stop_us: f64,
    pub step_us: f64,
}

fn grid(start: f64, stop: f64, step: f64, what: &str) -> Result<Vec<f64>, UsageError> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(UsageError(format!("{what}: need finite start <= stop and step > 0")));
    }
    // tolerate round-off at the end point
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + step * k as f64).collect())
}

impl FieldSweep {
    pub fn points(&self) -> Result<Vec<f64>, UsageError> {
        grid(self.start_G, self.stop_G, self.step_G, "field sweep")
    }
}

impl TimeGrid {
    pub fn points(&self) -> Result<Vec<f64>, UsageError> {
        if self.start_us < 0.0 {
            return Err(UsageError("time grid: times must be >= 0".into()));
        }
        grid(self.start_us, self.stop_us, self.step_us, "time grid")
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ModelParams<f64>,
    pub rates: RateTable<f64>,
    /// Single field; takes precedence over `sweep` where a command needs one field.
    pub field_G: Option<f64>,
    pub sweep: Option<FieldSweep>,
    pub repump: Option<TimeGrid>,
    pub pump: Option<TimeGrid>,
    pub kinds: Vec<RamseyKind>,
    pub theta_points: usize,
    /// Ensemble T2* for microwave detuning broadening; off when absent.
    pub T2star_us: Option<f64>,
    /// Write the raw fringe behind every repump row.
    pub write_fringes: bool,
    pub es_lifetime_us: f64,
    pub excitation_rate_MHz: f64,
    pub phase_frame: PhaseFrame,
    pub readout_noise: f64,
    pub noise_seeds: usize,
    pub fit: FitConfig,
    pub seed: u64,
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            rates: RateTable::default(),
            field_G: None,
            sweep: None,
            repump: None,
            pump: None,
            kinds: vec![RamseyKind::Longitudinal, RamseyKind::Transverse, RamseyKind::Control],
            theta_points: 12,
            T2star_us: None,
            write_fringes: false,
            es_lifetime_us: 0.01,
            excitation_rate_MHz: 6.74,
            phase_frame: PhaseFrame::NuclearRotating,
            readout_noise: 0.0,
            noise_seeds: 50,
            fit: FitConfig::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub hyperfine_MHz: f64,
    pub shared_width: bool,
    pub plus_line_low: bool,
    pub C_par_MHz: f64,
    pub saturation_form: SaturationForm,
    /// Residual-bootstrap replicates; 0 disables the bootstrap.
    pub bootstrap: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            hyperfine_MHz: 2.16,
            shared_width: true,
            plus_line_low: true,
            C_par_MHz: 2.1,
            saturation_form: SaturationForm::Standard,
            bootstrap: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        let cfg: RunConfig = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        self.rates.validate().map_err(|e| UsageError(format!("rates: {e}")))?;
        if let Some(b) = self.field_G {
            if !b.is_finite() || b < 0.0 {
                return Err(UsageError(format!("field_G must be finite and >= 0, got {b}")));
            }
        }
        if let Some(s) = &self.sweep {
            s.points()?;
            if s.start_G < 0.0 {
                return Err(UsageError("field sweep: fields must be >= 0".into()));
            }
        }
        for g in [&self.repump, &self.pump].into_iter().flatten() {
            g.points()?;
        }
        if self.theta_points < 4 {
            return Err(UsageError("theta_points must be at least 4".into()));
        }
        if let Some(t) = self.T2star_us {
            if !(t > 0.0) {
                return Err(UsageError("T2star_us must be > 0".into()));
            }
        }
        if !(self.es_lifetime_us > 0.0) {
            return Err(UsageError("es_lifetime_us must be > 0".into()));
        }
        if !(self.readout_noise >= 0.0) {
            return Err(UsageError("readout_noise must be >= 0".into()));
        }
        if self.kinds.is_empty() {
            return Err(UsageError("kinds must not be empty".into()));
        }
        Ok(())
    }

    pub fn fields_or(&self, default: FieldSweep) -> Result<Vec<f64>, UsageError> {
        match (self.field_G, &self.sweep) {
            (Some(b), _) => Ok(vec![b]),
            (None, Some(s)) => s.points(),
            (None, None) => default.points(),
        }
    }

    pub fn field_or(&self, default: f64) -> f64 {
        self.field_G.unwrap_or(default)
    }
}
