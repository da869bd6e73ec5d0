//! Flat `key = value` configuration files.
//!
//! Powers and noise variances are written in dBm and stored in watts.
//! Unknown keys are rejected.

use std::path::Path;

use crate::bs_solver::{BsSolverParams, MuIndexVariant};
use crate::error::{Error, Result};
use crate::scenario::{dbm_to_watts, ScenarioConfig};
use crate::scheme::Scheme;
use crate::training::{OverheadModel, PilotMode};
use crate::ue_solver::{HeuristicWeights, UeSolverParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingParams {
    /// Pilot length; `None` means `K * S`.
    pub tau: Option<usize>,
    pub pilot_mode: PilotMode,
    /// Pilot-observation noise variance as a multiple of the receiver noise.
    pub pilot_noise_scale: f64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            tau: None,
            pilot_mode: PilotMode::Orthogonal,
            pilot_noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scenario: ScenarioConfig,
    pub bs: BsSolverParams,
    pub ue: UeSolverParams,
    pub heuristic_a: f64,
    pub heuristic_b: f64,
    /// Per-iteration `(a, b)`; the last entry repeats.
    pub heuristic_schedule: Vec<(f64, f64)>,
    pub training: TrainingParams,
    pub overhead: OverheadModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            bs: BsSolverParams::default(),
            ue: UeSolverParams::default(),
            heuristic_a: 1.0,
            heuristic_b: 0.0,
            heuristic_schedule: Vec::new(),
            training: TrainingParams::default(),
            overhead: OverheadModel::default(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_schedule(value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let (a, b) = entry
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("heuristic_schedule entry '{entry}' is not a:b")))?;
            Ok((
                num("heuristic_schedule", a.trim())?,
                num("heuristic_schedule", b.trim())?,
            ))
        })
        .collect()
}

impl SimConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut overrides = Vec::new();
        let mut slots = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let sc = &mut cfg.scenario;
            match key {
                "num_bs" => sc.num_bs = num(key, value)?,
                "antennas_per_bs" => sc.antennas_per_bs = num(key, value)?,
                "num_ue" => sc.num_ue = num(key, value)?,
                "antennas_per_ue" => sc.antennas_per_ue = num(key, value)?,
                "streams_per_ue" => sc.streams_per_ue = num(key, value)?,
                "grid_spacing" => sc.grid_spacing = num(key, value)?,
                "carrier_freq" => sc.carrier_freq = num(key, value)?,
                "rho_bs" => sc.rho_bs = dbm_to_watts(num(key, value)?),
                "rho_ue" => sc.rho_ue = dbm_to_watts(num(key, value)?),
                "sigma2_bs" => sc.sigma2_bs = dbm_to_watts(num(key, value)?),
                "sigma2_ue" => sc.sigma2_ue = dbm_to_watts(num(key, value)?),
                "alpha" => sc.alpha = num(key, value)?,
                "min_bs_ue_distance" => sc.min_bs_ue_distance = num(key, value)?,
                "seed" => sc.seed = num(key, value)?,
                "delta0" => cfg.bs.delta0 = num(key, value)?,
                "inner_iters_max" => cfg.bs.inner_iters_max = num(key, value)?,
                "dual_tol" => cfg.bs.dual_tol = num(key, value)?,
                "lambda_step" => cfg.bs.lambda_step = num(key, value)?,
                "mu_index_variant" => {
                    let v: MuIndexVariant = value.parse()?;
                    cfg.bs.mu_variant = v;
                    cfg.ue.mu_variant = v;
                }
                "heuristic_a" => cfg.heuristic_a = num(key, value)?,
                "heuristic_b" => cfg.heuristic_b = num(key, value)?,
                "heuristic_schedule" => cfg.heuristic_schedule = parse_schedule(value)?,
                "bisect_tol" => cfg.ue.bisect_tol = num(key, value)?,
                "tau" => {
                    cfg.training.tau = if value == "auto" { None } else { Some(num(key, value)?) };
                }
                "pilot_mode" => cfg.training.pilot_mode = value.parse()?,
                "pilot_noise_scale" => cfg.training.pilot_noise_scale = num(key, value)?,
                "slots_per_pilot_block" => slots = Some(num::<f64>(key, value)?),
                _ => match key.strip_prefix("pilot_blocks_override.") {
                    Some(label) => overrides.push((label.parse::<Scheme>()?, num::<f64>(key, value)?)),
                    None => return Err(Error::Config(format!("unknown key '{key}'"))),
                },
            }
        }
        if let Some(slots) = slots {
            cfg.overhead = OverheadModel::new(slots)?;
        }
        for (scheme, blocks) in overrides {
            cfg.overhead.set_blocks(scheme, blocks)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        let bs = &self.bs;
        if !(bs.delta0 > 0.0) || !(bs.dual_tol > 0.0) || !(bs.lambda_step >= 0.0) {
            return Err(Error::Config(
                "delta0 and dual_tol must be positive, lambda_step nonnegative".into(),
            ));
        }
        if !(self.ue.bisect_tol > 0.0 && self.ue.bisect_tol < 1.0) {
            return Err(Error::Config("bisect_tol must lie in (0, 1)".into()));
        }
        if !(self.training.pilot_noise_scale >= 0.0) {
            return Err(Error::Config("pilot_noise_scale must be nonnegative".into()));
        }
        let streams = self.scenario.num_streams();
        if self.training.pilot_mode == PilotMode::Orthogonal && self.tau() < streams {
            return Err(Error::Config(format!(
                "orthogonal pilots need tau >= {streams}, got {}",
                self.tau()
            )));
        }
        if self.tau() == 0 {
            return Err(Error::Config("tau must be positive".into()));
        }
        HeuristicWeights::uniform(1, self.heuristic_a, self.heuristic_b).map_err(|e| Error::Config(e.to_string()))?;
        for &(a, b) in &self.heuristic_schedule {
            HeuristicWeights::uniform(1, a, b).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn tau(&self) -> usize {
        self.training.tau.unwrap_or(self.scenario.num_streams())
    }

    /// Heuristic weights used at bi-directional iteration `iteration` (1-based).
    pub fn heuristic_weights(&self, iteration: usize) -> Result<HeuristicWeights> {
        let (a, b) = match self.heuristic_schedule.len() {
            0 => (self.heuristic_a, self.heuristic_b),
            len => self.heuristic_schedule[iteration.saturating_sub(1).min(len - 1)],
        };
        HeuristicWeights::uniform(self.scenario.num_streams(), a, b)
    }

    pub fn pilot_noise(&self) -> f64 {
        self.training.pilot_noise_scale * self.scenario.sigma2_ue
    }

    pub fn pilot_noise_bs(&self) -> f64 {
        self.training.pilot_noise_scale * self.scenario.sigma2_bs
    }
}
