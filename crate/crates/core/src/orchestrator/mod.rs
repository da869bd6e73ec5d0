//! The bi-directional training loop, the Monte Carlo harness and CSV output.

mod csv;
mod montecarlo;

pub use csv::{emit_csv, format_sig9, write_csv, CSV_HEADER};
pub use montecarlo::{monte_carlo, run_drop, DropResult, MonteCarloReport, MonteCarloSpec};

use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::bs_solver::{
    sca_step, scale_to_bs_budget, sinr_dual, BsDualState, BsStepInput, OperatingPoint, IMPROVEMENT_REL,
};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sq, real, CVec};
use crate::metrics::{
    compute_rates, compute_sinr, effective_uplink, power_audit, sinr_from_effective, BeamformerSet, Directions,
};
use crate::rng::{complex_normal, derive_seed, rng_from, stream};
use crate::scenario::ChannelSet;
use crate::scheme::{Scheme, UeVariant};
use crate::training::{
    dl_pilot_phase, ls_estimate_all, make_pilots, overhead_slots, ul_pilot_phase, OverheadModel, PilotBook,
};
use crate::ue_solver::{
    compute_nu_mu_bar, solve_ue_beamformers_estimated, solve_ue_beamformers_heuristic, solve_ue_beamformers_ideal,
    solve_ue_heuristic_ideal, EstimatedUeInput,
};

/// Where the solvers get their channel knowledge from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// True effective channels, no pilot phases.
    Ideal,
    /// Pilot phases and least-squares estimates.
    Trained,
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ideal" => Ok(CsiMode::Ideal),
            "trained" => Ok(CsiMode::Trained),
            other => Err(Error::Config(format!("unknown CSI mode '{other}' (ideal | trained)"))),
        }
    }
}

/// Metrics after one bi-directional iteration, on the true channels.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub min_dl: f64,
    pub min_ul: f64,
    pub objective: f64,
    /// Largest per-BS power over `rho_bs`.
    pub bs_load: f64,
    /// Largest per-UE power over `rho_ue`.
    pub ue_load: f64,
}

impl IterationMetrics {
    pub fn feasible(&self, rel_tol: f64) -> bool {
        self.bs_load <= 1.0 + rel_tol && self.ue_load <= 1.0 + rel_tol
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub scheme: Scheme,
    /// Metrics of the initialization.
    pub initial: IterationMetrics,
    /// Iterations `1..=iters`.
    pub series: Vec<IterationMetrics>,
    /// Final beamformers; two sets (DL phase, UL phase) for separate schemes.
    pub beamformers: Vec<BeamformerSet>,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.series.len()
    }

    /// Metrics at iteration `i`, where 0 is the initialization.
    pub fn at(&self, i: usize) -> &IterationMetrics {
        if i == 0 {
            &self.initial
        } else {
            &self.series[i - 1]
        }
    }

    pub fn last(&self) -> &IterationMetrics {
        self.series.last().unwrap_or(&self.initial)
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.series.iter().map(|m| m.objective).collect()
    }

    pub fn effective_rates(&self, overhead: &OverheadModel, block_slots: f64) -> Vec<f64> {
        self.series
            .iter()
            .map(|m| {
                crate::metrics::effective_rate(
                    m.objective,
                    overhead_slots(self.scheme, m.iteration, overhead),
                    block_slots,
                )
            })
            .collect()
    }

    pub fn feasible(&self, rel_tol: f64) -> bool {
        self.initial.feasible(rel_tol) && self.series.iter().all(|m| m.feasible(rel_tol))
    }
}

/// `g[k][l] = H_k^H w_l`.
pub fn downlink_effective_all(channels: &ChannelSet, w: &[CVec]) -> Vec<Vec<CVec>> {
    (0..channels.num_ue())
        .map(|k| w.iter().map(|wl| channels.downlink_effective(k, wl)).collect())
        .collect()
}

fn check_dimensions(channels: &ChannelSet, cfg: &SimConfig) -> Result<()> {
    let sc = &cfg.scenario;
    if channels.num_bs != sc.num_bs
        || channels.antennas_per_bs != sc.antennas_per_bs
        || channels.antennas_per_ue != sc.antennas_per_ue
        || channels.num_ue() != sc.num_ue
    {
        return Err(Error::Dimension(
            "channel set does not match the scenario configuration".into(),
        ));
    }
    Ok(())
}

fn snapshot(iteration: usize, channels: &ChannelSet, cfg: &SimConfig, bf: &BeamformerSet) -> Result<IterationMetrics> {
    let sc = &cfg.scenario;
    let sinr = compute_sinr(channels, bf, sc.sigma2_ue, sc.sigma2_bs)?;
    let rates = compute_rates(&sinr, sc.alpha)?;
    let (bs_load, ue_load) = power_audit(bf, sc.num_bs, sc.antennas_per_bs).max_load(sc.rho_bs, sc.rho_ue);
    Ok(IterationMetrics {
        iteration,
        min_dl: rates.min_dl,
        min_ul: rates.min_ul,
        objective: rates.objective,
        bs_load,
        ue_load,
    })
}

/// Random isotropic UE beamformers with `ρ_UE / S` per stream.
pub fn initial_ue_beamformers(cfg: &SimConfig, seed: u64) -> Vec<CVec> {
    let sc = &cfg.scenario;
    let mut rng = rng_from(seed, &[stream::INIT]);
    let per_stream = sc.rho_ue / sc.streams_per_ue as f64;
    (0..sc.num_streams())
        .map(|_| {
            let mut v = CVec::from_fn(sc.antennas_per_ue, |_, _| complex_normal(&mut rng, 1.0));
            let n = norm_sq(&v).sqrt();
            v.scale_mut(per_stream.sqrt() / n);
            v
        })
        .collect()
}

/// Unit-norm matched filters to `h`, scaled so the most loaded BS is at
/// `ρ_BS`.
pub fn matched_filter(h: &[CVec], cfg: &SimConfig) -> Vec<CVec> {
    let sc = &cfg.scenario;
    let mut w: Vec<CVec> = h
        .iter()
        .map(|hj| {
            let n = norm_sq(hj).sqrt();
            if n > 0.0 {
                hj * real(1.0 / n)
            } else {
                hj.clone()
            }
        })
        .collect();
    scale_to_bs_budget(&mut w, sc.num_bs, sc.antennas_per_bs, sc.rho_bs);
    w
}

struct Runner<'a> {
    scheme: Scheme,
    channels: &'a ChannelSet,
    cfg: &'a SimConfig,
    csi: CsiMode,
    seed: u64,
    pilots: Option<PilotBook>,
    directions: Directions,
    alpha: f64,
}

impl Runner<'_> {
    fn phase_rng(&self, phase: u64, iteration: usize) -> impl Rng {
        rng_from(self.seed, &[phase, iteration as u64])
    }

    fn pilots(&self) -> &PilotBook {
        self.pilots.as_ref().expect("pilot book exists in trained mode")
    }

    fn uplink_csi(&self, iteration: usize, v: &[CVec]) -> Result<Vec<CVec>> {
        let s = self.cfg.scenario.streams_per_ue;
        match self.csi {
            CsiMode::Ideal => Ok(effective_uplink(self.channels, v, s)),
            CsiMode::Trained => {
                let mut rng = self.phase_rng(stream::PHASE_UL, iteration);
                let y = ul_pilot_phase(self.channels, v, self.pilots(), self.cfg.pilot_noise_bs(), &mut rng)?;
                ls_estimate_all(&y, self.pilots())
            }
        }
    }

    /// Objective the CPU sees on the estimated effective channels; a
    /// degenerate evaluation counts as zero.
    fn estimated_objective(&self, h: &[CVec], w: &[CVec], v: &[CVec]) -> f64 {
        let sc = &self.cfg.scenario;
        let v_norm_sq: Vec<f64> = v.iter().map(norm_sq).collect();
        sinr_from_effective(h, w, &v_norm_sq, sc.sigma2_ue, sc.sigma2_bs, sc.streams_per_ue)
            .and_then(|t| compute_rates(&t, self.alpha))
            .map(|r| r.objective_for(self.directions, self.alpha))
            .unwrap_or(0.0)
    }

    fn bs_step(
        &self,
        h: &[CVec],
        w: &[CVec],
        v: &[CVec],
        duals: &BsDualState,
    ) -> Result<crate::bs_solver::BsStepOutput> {
        let sc = &self.cfg.scenario;
        let v_norm_sq: Vec<f64> = v.iter().map(norm_sq).collect();
        let input = BsStepInput {
            h,
            v_norm_sq: &v_norm_sq,
            w_prev: w,
            v_prev: v,
            num_bs: sc.num_bs,
            antennas_per_bs: sc.antennas_per_bs,
            streams_per_ue: sc.streams_per_ue,
            alpha: self.alpha,
            directions: self.directions,
            sigma2_bs: sc.sigma2_bs,
            sigma2_ue: sc.sigma2_ue,
            rho_bs: sc.rho_bs,
        };
        sca_step(&input, duals, &self.cfg.bs)
    }

    fn ue_step(
        &self,
        iteration: usize,
        h_est: &[CVec],
        w: &[CVec],
        v: &[CVec],
        duals: &BsDualState,
    ) -> Result<Vec<CVec>> {
        let sc = &self.cfg.scenario;
        let s = sc.streams_per_ue;
        let alpha = self.alpha;
        let params = &crate::ue_solver::UeSolverParams {
            equal_power_streams: self.directions == Directions::DlOnly,
            ..self.cfg.ue.clone()
        };
        let solution = match (self.scheme.ue_variant(), self.csi) {
            (UeVariant::Optimal, CsiMode::Ideal) => {
                let g = downlink_effective_all(self.channels, w);
                let bf = BeamformerSet {
                    streams_per_ue: s,
                    w: w.to_vec(),
                    v: v.to_vec(),
                };
                let sinr = compute_sinr(self.channels, &bf, sc.sigma2_ue, sc.sigma2_bs)?;
                let op = OperatingPoint::from_sinr(&sinr, bf.w, bf.v);
                let gains: Vec<f64> = (0..v.len()).map(|j| inner(&v[j], &g[j / s][j]).norm_sqr()).collect();
                let (nu_bar, mu_bar) =
                    compute_nu_mu_bar(&duals.eta, &duals.zeta, alpha, &op.gamma, &op.gamma_bar, &gains, s);
                solve_ue_beamformers_ideal(&g, &nu_bar, &mu_bar, &op, alpha, sc.sigma2_ue, sc.rho_ue, s, params)?
            }
            (UeVariant::Optimal, CsiMode::Trained) => {
                // CPU side: UL SINRs and mu_bar from the UL estimates.
                let v_norm_sq: Vec<f64> = v.iter().map(norm_sq).collect();
                let sinr = sinr_from_effective(h_est, w, &v_norm_sq, sc.sigma2_ue, sc.sigma2_bs, s)?;
                let op = OperatingPoint::from_sinr(&sinr, w.to_vec(), v.to_vec());
                let mu_bar: Vec<f64> = (0..w.len())
                    .map(|j| {
                        sinr_dual(
                            duals.zeta[j / s],
                            1.0 - alpha,
                            op.gamma_bar[j],
                            inner(&h_est[j], &w[j]).norm_sqr(),
                        )
                    })
                    .collect();
                let noise = self.cfg.pilot_noise();
                let y1 = if alpha > 0.0 {
                    let mut rng = self.phase_rng(stream::PHASE_DL1, iteration);
                    Some(dl_pilot_phase(self.channels, w, self.pilots(), None, noise, &mut rng)?)
                } else {
                    None
                };
                let y2 = if alpha < 1.0 {
                    let amplitudes: Vec<f64> = mu_bar.iter().map(|m| m.max(0.0).sqrt()).collect();
                    let mut rng = self.phase_rng(stream::PHASE_DL2, iteration);
                    Some(dl_pilot_phase(
                        self.channels,
                        w,
                        self.pilots(),
                        Some(&amplitudes),
                        noise,
                        &mut rng,
                    )?)
                } else {
                    None
                };
                let input = EstimatedUeInput {
                    y_dl1: y1.as_deref(),
                    y_dl2: y2.as_deref(),
                    pilots: self.pilots(),
                    eta: &duals.eta,
                    zeta: &duals.zeta,
                    gamma_bar: &op.gamma_bar,
                    v_prev: v,
                    alpha,
                    sigma2_ue: sc.sigma2_ue,
                    pilot_noise: noise,
                    streams_per_ue: s,
                };
                solve_ue_beamformers_estimated(&input, sc.rho_ue, params)?.0
            }
            (UeVariant::Heuristic, CsiMode::Ideal) => {
                let g = downlink_effective_all(self.channels, w);
                let weights = self.cfg.heuristic_weights(iteration)?;
                solve_ue_heuristic_ideal(&g, &weights, sc.sigma2_ue, v, sc.rho_ue, s, params)?
            }
            (UeVariant::Heuristic, CsiMode::Trained) => {
                let weights = self.cfg.heuristic_weights(iteration)?;
                let amplitudes: Vec<f64> = weights.a.iter().map(|a| a.sqrt()).collect();
                let noise = self.cfg.pilot_noise();
                let mut rng = self.phase_rng(stream::PHASE_DL2, iteration);
                let y2 = dl_pilot_phase(self.channels, w, self.pilots(), Some(&amplitudes), noise, &mut rng)?;
                solve_ue_beamformers_heuristic(&y2, self.pilots(), &weights, noise, v, sc.rho_ue, s, params)?
            }
        };
        Ok(solution.v)
    }

    fn run(&self, iters: usize) -> Result<RunResult> {
        let started = Instant::now();
        let sc = &self.cfg.scenario;
        let s = sc.streams_per_ue;
        let mut v = initial_ue_beamformers(self.cfg, self.seed);
        // The first UL phase both initializes w and feeds iteration 1.
        let mut h_est = self.uplink_csi(1, &v).map_err(|e| e.at_iteration(1))?;
        let mut w = matched_filter(&h_est, self.cfg);
        let bf = |w: &[CVec], v: &[CVec]| BeamformerSet {
            streams_per_ue: s,
            w: w.to_vec(),
            v: v.to_vec(),
        };
        let initial = snapshot(0, self.channels, self.cfg, &bf(&w, &v))?;
        let mut duals = BsDualState::initial(sc.num_ue, s, sc.num_bs, self.directions, self.cfg.bs.delta0);
        let mut series = Vec::with_capacity(iters);
        for i in 1..=iters {
            let step = || -> Result<_> {
                let bs = self.bs_step(&h_est, &w, &v, &duals)?;
                let v_new = self.ue_step(i, &h_est, &bs.w, &v, &bs.duals)?;
                // The next UL phase doubles as the acceptance check: the new
                // receivers are kept only if they do not lower the objective.
                let h_new = self.uplink_csi(i + 1, &v_new)?;
                let accept = self.estimated_objective(&h_new, &bs.w, &v_new)
                    >= bs.objective - IMPROVEMENT_REL * bs.objective.abs();
                Ok((bs, accept.then_some((v_new, h_new))))
            };
            let (bs, update) = step().map_err(|e| e.at_iteration(i))?;
            w = bs.w;
            duals = bs.next_duals;
            if let Some((v_new, h_new)) = update {
                v = v_new;
                h_est = h_new;
            }
            series.push(snapshot(i, self.channels, self.cfg, &bf(&w, &v)).map_err(|e| e.at_iteration(i))?);
        }
        Ok(RunResult {
            scheme: self.scheme,
            initial,
            series,
            beamformers: vec![bf(&w, &v)],
            wall_time: started.elapsed(),
        })
    }
}

fn run_single(
    scheme: Scheme,
    channels: &ChannelSet,
    cfg: &SimConfig,
    iters: usize,
    csi: CsiMode,
    seed: u64,
) -> Result<RunResult> {
    let sc = &cfg.scenario;
    let pilots = match csi {
        CsiMode::Ideal => None,
        CsiMode::Trained => Some(make_pilots(
            sc.num_ue,
            sc.streams_per_ue,
            cfg.tau(),
            cfg.training.pilot_mode,
            derive_seed(seed, &[stream::PILOTS]),
        )?),
    };
    let directions = scheme.directions();
    Runner {
        scheme,
        channels,
        cfg,
        csi,
        seed,
        pilots,
        directions,
        alpha: directions.effective_alpha(sc.alpha),
    }
    .run(iters)
}

/// Runs `scheme` for `iters` bi-directional iterations. Separate schemes
/// delegate to [`run_separate`].
pub fn run_scheme(
    scheme: Scheme,
    channels: &ChannelSet,
    cfg: &SimConfig,
    iters: usize,
    csi: CsiMode,
    seed: u64,
) -> Result<RunResult> {
    check_dimensions(channels, cfg)?;
    cfg.validate()?;
    match scheme.components() {
        Some(_) => run_separate(scheme, channels, cfg, iters, csi, seed),
        None => run_single(scheme, channels, cfg, iters, csi, seed),
    }
}

/// Runs the DL-only and UL-only phases of a separate scheme with the same
/// seed and reports DL rates from the first and UL rates from the second.
pub fn run_separate(
    scheme: Scheme,
    channels: &ChannelSet,
    cfg: &SimConfig,
    iters: usize,
    csi: CsiMode,
    seed: u64,
) -> Result<RunResult> {
    let (dl, ul) = scheme
        .components()
        .ok_or_else(|| Error::Config(format!("{scheme} is not a two-phase scheme")))?;
    check_dimensions(channels, cfg)?;
    let dl_run = run_single(dl, channels, cfg, iters, csi, seed)?;
    let ul_run = run_single(ul, channels, cfg, iters, csi, seed)?;
    Ok(compose_separate(scheme, &dl_run, &ul_run, cfg.scenario.alpha))
}

fn compose_metrics(dl: &IterationMetrics, ul: &IterationMetrics, alpha: f64) -> IterationMetrics {
    IterationMetrics {
        iteration: dl.iteration,
        min_dl: dl.min_dl,
        min_ul: ul.min_ul,
        objective: (alpha * dl.min_dl).min((1.0 - alpha) * ul.min_ul),
        bs_load: dl.bs_load.max(ul.bs_load),
        ue_load: dl.ue_load.max(ul.ue_load),
    }
}

/// Combines the two phases of a separate scheme.
pub fn compose_separate(scheme: Scheme, dl_run: &RunResult, ul_run: &RunResult, alpha: f64) -> RunResult {
    RunResult {
        scheme,
        initial: compose_metrics(&dl_run.initial, &ul_run.initial, alpha),
        series: dl_run
            .series
            .iter()
            .zip(&ul_run.series)
            .map(|(d, u)| compose_metrics(d, u, alpha))
            .collect(),
        beamformers: dl_run.beamformers.iter().chain(&ul_run.beamformers).cloned().collect(),
        wall_time: dl_run.wall_time + ul_run.wall_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csi_mode_parses() {
        assert_eq!("trained".parse::<CsiMode>().unwrap(), CsiMode::Trained);
        assert!("perfect".parse::<CsiMode>().is_err());
    }

    #[test]
    fn composed_objective_uses_both_phases() {
        let m = |dl: f64, ul: f64| IterationMetrics {
            iteration: 1,
            min_dl: dl,
            min_ul: ul,
            objective: 0.0,
            bs_load: 0.5,
            ue_load: 1.0,
        };
        let c = compose_metrics(&m(4.0, 0.0), &m(0.0, 2.0), 0.5);
        assert_eq!((c.min_dl, c.min_ul, c.objective), (4.0, 2.0, 1.0));
    }
}
