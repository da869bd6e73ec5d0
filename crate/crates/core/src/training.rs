//! Pilot books, the UL / DL-1 / DL-2 pilot phases, least-squares estimation
//! and the training-overhead model.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{real, CMat, CVec};
use crate::metrics::effective_rate;
use crate::rng::{complex_normal, rng_from, stream};
use crate::scenario::ChannelSet;
use crate::scheme::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    /// Columns of a `tau x tau` DFT matrix; requires `tau >= K S`.
    Orthogonal,
    /// I.i.d. unit-modulus entries with uniform phase.
    Random,
}

impl std::str::FromStr for PilotMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "orthogonal" => Ok(PilotMode::Orthogonal),
            "random" => Ok(PilotMode::Random),
            other => Err(Error::Config(format!("unknown pilot_mode '{other}'"))),
        }
    }
}

/// One pilot per stream, `‖p‖² = tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotBook {
    pub tau: usize,
    pub pilots: Vec<CVec>,
}

impl PilotBook {
    pub fn get(&self, j: usize) -> &CVec {
        &self.pilots[j]
    }

    pub fn len(&self) -> usize {
        self.pilots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pilots.is_empty()
    }
}

pub fn make_pilots(num_ue: usize, streams_per_ue: usize, tau: usize, mode: PilotMode, seed: u64) -> Result<PilotBook> {
    let count = num_ue * streams_per_ue;
    if tau == 0 {
        return Err(Error::Config("tau must be at least 1".into()));
    }
    let pilots = match mode {
        PilotMode::Orthogonal => {
            if tau < count {
                return Err(Error::Config(format!(
                    "orthogonal pilots need tau >= K*S = {count}, got {tau}"
                )));
            }
            (0..count)
                .map(|j| {
                    CVec::from_fn(tau, |t, _| {
                        let phase = -2.0 * PI * ((j * t) % tau) as f64 / tau as f64;
                        Complex64::from_polar(1.0, phase)
                    })
                })
                .collect()
        }
        PilotMode::Random => {
            let mut rng = rng_from(seed, &[stream::PILOTS]);
            (0..count)
                .map(|_| CVec::from_fn(tau, |_, _| Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))))
                .collect()
        }
    };
    Ok(PilotBook { tau, pilots })
}

fn add_noise<R: Rng + ?Sized>(y: &mut CMat, variance: f64, rng: &mut R) {
    if variance > 0.0 {
        for z in y.iter_mut() {
            *z += complex_normal(rng, variance);
        }
    }
}

/// `Y^UL = Σ_j h_j p_j^H + Z` with `h_j = H_k v_j`; `BM x tau`.
pub fn ul_pilot_phase<R: Rng + ?Sized>(
    channels: &ChannelSet,
    v: &[CVec],
    pilots: &PilotBook,
    noise_var: f64,
    rng: &mut R,
) -> Result<CMat> {
    if v.len() != pilots.len() {
        return Err(Error::Dimension(format!(
            "{} UE vectors for {} pilots",
            v.len(),
            pilots.len()
        )));
    }
    let streams_per_ue = v.len() / channels.num_ue().max(1);
    let mut y = CMat::zeros(channels.bs_antennas_total(), pilots.tau);
    for (j, vj) in v.iter().enumerate() {
        let h = channels.uplink_effective(j / streams_per_ue, vj);
        y.gerc(Complex64::new(1.0, 0.0), &h, pilots.get(j), Complex64::new(1.0, 0.0));
    }
    add_noise(&mut y, noise_var, rng);
    Ok(y)
}

/// Least-squares estimate `(1/tau) Y p`.
pub fn ls_estimate(y: &CMat, pilot: &CVec, tau: usize) -> Result<CVec> {
    if y.ncols() != pilot.len() {
        return Err(Error::Dimension(format!(
            "observation has {} columns, pilot has {} symbols",
            y.ncols(),
            pilot.len()
        )));
    }
    Ok((y * pilot) * real(1.0 / tau as f64))
}

pub fn ls_estimate_all(y: &CMat, pilots: &PilotBook) -> Result<Vec<CVec>> {
    pilots.pilots.iter().map(|p| ls_estimate(y, p, pilots.tau)).collect()
}

/// DL pilot phase: the BSs send `X = Σ_j c_j w_j p_j^H` and UE `k` observes
/// `Y_k = H_k^H X + Z_k` (`N x tau`). `amplitudes` are the per-stream weights
/// `c_j` (all ones when `None`).
pub fn dl_pilot_phase<R: Rng + ?Sized>(
    channels: &ChannelSet,
    w: &[CVec],
    pilots: &PilotBook,
    amplitudes: Option<&[f64]>,
    noise_var: f64,
    rng: &mut R,
) -> Result<Vec<CMat>> {
    if w.len() != pilots.len() {
        return Err(Error::Dimension(format!(
            "{} BS vectors for {} pilots",
            w.len(),
            pilots.len()
        )));
    }
    if let Some(a) = amplitudes {
        if a.len() != w.len() {
            return Err(Error::Dimension("one pilot weight per stream expected".into()));
        }
        if let Some(bad) = a.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::Domain(format!("pilot weights must be nonnegative, got {bad}")));
        }
    }
    let mut x = CMat::zeros(channels.bs_antennas_total(), pilots.tau);
    for (j, wj) in w.iter().enumerate() {
        let c = amplitudes.map_or(1.0, |a| a[j]);
        if c != 0.0 {
            x.gerc(real(c), wj, pilots.get(j), Complex64::new(1.0, 0.0));
        }
    }
    let mut out = Vec::with_capacity(channels.num_ue());
    for hk in &channels.h {
        let mut y = hk.ad_mul(&x);
        add_noise(&mut y, noise_var, rng);
        out.push(y);
    }
    Ok(out)
}

/// Pilot blocks consumed per bi-directional iteration and their length in
/// slots. Separate schemes always cost the sum of their two phases.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadModel {
    pub slots_per_pilot_block: f64,
    blocks: BTreeMap<Scheme, f64>,
}

impl Default for OverheadModel {
    fn default() -> Self {
        let blocks = BTreeMap::from([
            // UL + DL-1 + DL-2
            (Scheme::JointOpt, 3.0),
            // UL + DL-2
            (Scheme::JointHeur, 2.0),
            // UL + DL-1
            (Scheme::DlOpt, 2.0),
            // UL + DL-2
            (Scheme::UlOpt, 2.0),
            (Scheme::UlHeur, 2.0),
        ]);
        Self {
            slots_per_pilot_block: 0.5,
            blocks,
        }
    }
}

impl OverheadModel {
    pub fn new(slots_per_pilot_block: f64) -> Result<Self> {
        if !(slots_per_pilot_block > 0.0) {
            return Err(Error::Config("slots_per_pilot_block must be positive".into()));
        }
        Ok(Self {
            slots_per_pilot_block,
            ..Self::default()
        })
    }

    pub fn set_blocks(&mut self, scheme: Scheme, blocks: f64) -> Result<()> {
        if scheme.is_separate() {
            return Err(Error::Config(format!(
                "{scheme} is composed from its two phases and cannot be overridden"
            )));
        }
        if !(blocks > 0.0) {
            return Err(Error::Config(format!("pilot blocks for {scheme} must be positive")));
        }
        self.blocks.insert(scheme, blocks);
        Ok(())
    }

    pub fn pilot_blocks_per_iter(&self, scheme: Scheme) -> f64 {
        match scheme.components() {
            Some((dl, ul)) => self.blocks[&dl] + self.blocks[&ul],
            None => self.blocks[&scheme],
        }
    }
}

/// Training overhead in slots after `iters` bi-directional iterations.
pub fn overhead_slots(scheme: Scheme, iters: usize, model: &OverheadModel) -> f64 {
    iters as f64 * model.pilot_blocks_per_iter(scheme) * model.slots_per_pilot_block
}

pub fn scheme_effective_rate(rate: f64, iters: usize, scheme: Scheme, model: &OverheadModel, block_slots: f64) -> f64 {
    effective_rate(rate, overhead_slots(scheme, iters, model), block_slots)
}
