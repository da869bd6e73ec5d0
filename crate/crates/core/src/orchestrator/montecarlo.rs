use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{compose_separate, run_single, CsiMode, RunResult};
use crate::config::SimConfig;
use crate::error::Result;
use crate::rng::{derive_seed, stream};
use crate::scenario::{draw_channels, generate_geometry};
use crate::scheme::Scheme;
use crate::training::{overhead_slots, OverheadModel};

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSpec {
    pub schemes: Vec<Scheme>,
    pub drops: usize,
    pub iters: usize,
    pub csi: CsiMode,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct DropResult {
    pub drop: usize,
    pub runs: BTreeMap<Scheme, RunResult>,
}

#[derive(Debug, Clone)]
pub struct MonteCarloReport {
    pub spec: MonteCarloSpec,
    pub drops: Vec<DropResult>,
}

/// One drop: fresh geometry and channels, every requested scheme. Single-phase
/// runs are shared between the schemes that contain them.
pub fn run_drop(cfg: &SimConfig, spec: &MonteCarloSpec, drop: usize) -> Result<DropResult> {
    let drop_seed = derive_seed(spec.seed, &[drop as u64]);
    let geometry = generate_geometry(&cfg.scenario, derive_seed(drop_seed, &[stream::GEOMETRY]))?;
    let channels = draw_channels(&geometry, &cfg.scenario, derive_seed(drop_seed, &[stream::CHANNELS]))?;
    let run_seed = derive_seed(drop_seed, &[stream::RUN]);

    let mut base: BTreeMap<Scheme, RunResult> = BTreeMap::new();
    let mut needed = Vec::new();
    for scheme in &spec.schemes {
        match scheme.components() {
            Some((dl, ul)) => needed.extend([dl, ul]),
            None => needed.push(*scheme),
        }
    }
    for scheme in needed {
        if let Entry::Vacant(slot) = base.entry(scheme) {
            slot.insert(run_single(scheme, &channels, cfg, spec.iters, spec.csi, run_seed)?);
        }
    }
    let runs = spec
        .schemes
        .iter()
        .map(|&scheme| {
            let run = match scheme.components() {
                Some((dl, ul)) => compose_separate(scheme, &base[&dl], &base[&ul], cfg.scenario.alpha),
                None => base[&scheme].clone(),
            };
            (scheme, run)
        })
        .collect();
    Ok(DropResult { drop, runs })
}

/// Independent drops in parallel, merged in drop order.
pub fn monte_carlo(cfg: &SimConfig, spec: &MonteCarloSpec) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let drops = (0..spec.drops)
        .into_par_iter()
        .map(|d| run_drop(cfg, spec, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonteCarloReport {
        spec: spec.clone(),
        drops,
    })
}

impl MonteCarloReport {
    fn mean_over_drops(&self, f: impl Fn(&DropResult) -> f64) -> f64 {
        if self.drops.is_empty() {
            return f64::NAN;
        }
        self.drops.iter().map(f).sum::<f64>() / self.drops.len() as f64
    }

    /// Mean objective at iteration `i` (0 is the initialization).
    pub fn mean_objective(&self, scheme: Scheme, i: usize) -> f64 {
        self.mean_over_drops(|d| d.runs[&scheme].at(i).objective)
    }

    pub fn mean_min_dl(&self, scheme: Scheme, i: usize) -> f64 {
        self.mean_over_drops(|d| d.runs[&scheme].at(i).min_dl)
    }

    pub fn mean_min_ul(&self, scheme: Scheme, i: usize) -> f64 {
        self.mean_over_drops(|d| d.runs[&scheme].at(i).min_ul)
    }

    /// Mean objective per iteration `1..=iters`.
    pub fn mean_curve(&self, scheme: Scheme) -> Vec<f64> {
        (1..=self.spec.iters).map(|i| self.mean_objective(scheme, i)).collect()
    }

    pub fn converged_mean(&self, scheme: Scheme) -> f64 {
        self.mean_objective(scheme, self.spec.iters)
    }

    /// Overhead-discounted mean objective per iteration `1..=iters`.
    pub fn effective_curve(&self, scheme: Scheme, overhead: &OverheadModel, block_slots: f64) -> Vec<f64> {
        self.mean_curve(scheme)
            .into_iter()
            .enumerate()
            .map(|(idx, rate)| {
                crate::metrics::effective_rate(rate, overhead_slots(scheme, idx + 1, overhead), block_slots)
            })
            .collect()
    }

    /// `(iteration, value)` of the best point of the effective curve.
    pub fn best_effective(&self, scheme: Scheme, overhead: &OverheadModel, block_slots: f64) -> (usize, f64) {
        self.effective_curve(scheme, overhead, block_slots)
            .into_iter()
            .enumerate()
            .fold((0, 0.0), |best, (idx, x)| if x > best.1 { (idx + 1, x) } else { best })
    }

    pub fn all_feasible(&self, rel_tol: f64) -> bool {
        self.drops.iter().all(|d| d.runs.values().all(|r| r.feasible(rel_tol)))
    }
}
