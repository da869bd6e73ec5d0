//! Network geometry, large-scale fading and Rayleigh channel draws.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::rng::{complex_normal, rng_from, stream, SimRng};

/// Physical scenario. Powers and noise variances are linear watts.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_bs: usize,
    pub antennas_per_bs: usize,
    pub num_ue: usize,
    pub antennas_per_ue: usize,
    pub streams_per_ue: usize,
    /// Meters between neighbouring BSs.
    pub grid_spacing: f64,
    /// GHz.
    pub carrier_freq: f64,
    pub rho_bs: f64,
    pub rho_ue: f64,
    pub sigma2_bs: f64,
    pub sigma2_ue: f64,
    pub alpha: f64,
    /// Meters.
    pub min_bs_ue_distance: f64,
    pub seed: u64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

impl Default for ScenarioConfig {
    /// 25 BSs with 4 antennas on a 100 m grid, 16 two-antenna UEs with two
    /// streams each, 28 GHz, 30/20 dBm transmit power and -95 dBm noise.
    fn default() -> Self {
        Self {
            num_bs: 25,
            antennas_per_bs: 4,
            num_ue: 16,
            antennas_per_ue: 2,
            streams_per_ue: 2,
            grid_spacing: 100.0,
            carrier_freq: 28.0,
            rho_bs: dbm_to_watts(30.0),
            rho_ue: dbm_to_watts(20.0),
            sigma2_bs: dbm_to_watts(-95.0),
            sigma2_ue: dbm_to_watts(-95.0),
            alpha: 0.5,
            min_bs_ue_distance: 1.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_bs", self.num_bs),
            ("antennas_per_bs", self.antennas_per_bs),
            ("num_ue", self.num_ue),
            ("antennas_per_ue", self.antennas_per_ue),
            ("streams_per_ue", self.streams_per_ue),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.streams_per_ue > self.antennas_per_ue {
            return Err(Error::Config(format!(
                "streams_per_ue ({}) exceeds antennas_per_ue ({})",
                self.streams_per_ue, self.antennas_per_ue
            )));
        }
        let positive = [
            ("rho_bs", self.rho_bs),
            ("rho_ue", self.rho_ue),
            ("sigma2_bs", self.sigma2_bs),
            ("sigma2_ue", self.sigma2_ue),
            ("grid_spacing", self.grid_spacing),
            ("carrier_freq", self.carrier_freq),
            ("min_bs_ue_distance", self.min_bs_ue_distance),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        grid_side(self.num_bs)?;
        Ok(())
    }

    pub fn bs_antennas_total(&self) -> usize {
        self.num_bs * self.antennas_per_bs
    }

    pub fn num_streams(&self) -> usize {
        self.num_ue * self.streams_per_ue
    }
}

fn grid_side(num_bs: usize) -> Result<usize> {
    let side = (num_bs as f64).sqrt().round() as usize;
    if side * side != num_bs {
        return Err(Error::Config(format!(
            "num_bs = {num_bs} is not a perfect square; BSs sit on a square grid"
        )));
    }
    Ok(side)
}

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    pub bs_positions: Vec<Point>,
    pub ue_positions: Vec<Point>,
    /// `distances[(b, k)]`, meters, already floored at the minimum distance.
    pub distances: DMatrix<f64>,
}

fn euclid(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl NetworkGeometry {
    /// Builds a geometry from explicit positions. Distances below
    /// `min_distance` are clamped to it.
    pub fn from_positions(bs_positions: Vec<Point>, ue_positions: Vec<Point>, min_distance: f64) -> Self {
        let distances = DMatrix::from_fn(bs_positions.len(), ue_positions.len(), |b, k| {
            euclid(bs_positions[b], ue_positions[k]).max(min_distance)
        });
        Self {
            bs_positions,
            ue_positions,
            distances,
        }
    }
}

const MAX_RESAMPLES: usize = 100_000;

/// BSs on a `sqrt(B) x sqrt(B)` grid starting at the origin; UEs uniform over
/// the square spanned by the grid (a `grid_spacing`-wide square centred on
/// the BS when `B = 1`). UEs closer than the minimum distance to any BS are
/// redrawn.
pub fn generate_geometry(config: &ScenarioConfig, seed: u64) -> Result<NetworkGeometry> {
    let side = grid_side(config.num_bs)?;
    let s = config.grid_spacing;
    let bs_positions: Vec<Point> = (0..side)
        .flat_map(|i| (0..side).map(move |j| [i as f64 * s, j as f64 * s]))
        .collect();
    let (lo, hi) = if side == 1 {
        (-0.5 * s, 0.5 * s)
    } else {
        (0.0, (side - 1) as f64 * s)
    };

    let mut rng = rng_from(seed, &[stream::GEOMETRY]);
    let mut ue_positions = Vec::with_capacity(config.num_ue);
    for k in 0..config.num_ue {
        let mut placed = None;
        for _ in 0..MAX_RESAMPLES {
            let p = [rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
            if bs_positions.iter().all(|&b| euclid(b, p) >= config.min_bs_ue_distance) {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or_else(|| {
            Error::Config(format!(
                "could not place UE {k} at least {} m from every BS",
                config.min_bs_ue_distance
            ))
        })?;
        ue_positions.push(p);
    }
    Ok(NetworkGeometry::from_positions(
        bs_positions,
        ue_positions,
        config.min_bs_ue_distance,
    ))
}

/// Large-scale fading in dB: `-61.3 - 30 log10(d) - 20 log10(f_c)` with `d`
/// in meters and `f_c` in GHz.
pub fn pathloss_db(d: f64, f_c: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    if !(f_c > 0.0) {
        return Err(Error::Domain(format!("carrier frequency must be positive, got {f_c}")));
    }
    Ok(-61.3 - 30.0 * d.log10() - 20.0 * f_c.log10())
}

pub fn pathloss_linear(d: f64, f_c: f64) -> Result<f64> {
    Ok(10f64.powf(pathloss_db(d, f_c)? / 10.0))
}

/// Aggregate uplink channels. `h[k]` is `BM x N`, BS-major: rows
/// `b*M..(b+1)*M` hold the block of BS `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub num_bs: usize,
    pub antennas_per_bs: usize,
    pub antennas_per_ue: usize,
    pub h: Vec<CMat>,
    /// `large_scale[(b, k)]`, linear power gain.
    pub large_scale: DMatrix<f64>,
}

impl ChannelSet {
    pub fn num_ue(&self) -> usize {
        self.h.len()
    }

    pub fn bs_antennas_total(&self) -> usize {
        self.num_bs * self.antennas_per_bs
    }

    pub fn block(&self, b: usize, k: usize) -> CMat {
        self.h[k]
            .rows(b * self.antennas_per_bs, self.antennas_per_bs)
            .into_owned()
    }

    /// `H_k v`.
    pub fn uplink_effective(&self, k: usize, v: &CVec) -> CVec {
        &self.h[k] * v
    }

    /// `H_k^H w`.
    pub fn downlink_effective(&self, k: usize, w: &CVec) -> CVec {
        self.h[k].ad_mul(w)
    }
}

/// Draws one `M x N` block with i.i.d. CN(0, variance) entries, column-major.
pub fn draw_block(rng: &mut SimRng, variance: f64, m: usize, n: usize) -> CMat {
    let mut block = CMat::zeros(m, n);
    for c in 0..n {
        for r in 0..m {
            block[(r, c)] = complex_normal(rng, variance);
        }
    }
    block
}

/// Uncorrelated Rayleigh fading, `vec(H_{b,k}) ~ CN(0, delta_{b,k} I)`.
/// Blocks are drawn UE by UE, BS by BS, from a single stream seeded by `seed`.
pub fn draw_channels(geometry: &NetworkGeometry, config: &ScenarioConfig, seed: u64) -> Result<ChannelSet> {
    let b_count = geometry.bs_positions.len();
    let k_count = geometry.ue_positions.len();
    if b_count != config.num_bs || k_count != config.num_ue {
        return Err(Error::Dimension(format!(
            "geometry has {b_count} BSs / {k_count} UEs, config expects {} / {}",
            config.num_bs, config.num_ue
        )));
    }
    let mut large_scale = DMatrix::zeros(b_count, k_count);
    for b in 0..b_count {
        for k in 0..k_count {
            large_scale[(b, k)] = pathloss_linear(geometry.distances[(b, k)], config.carrier_freq)?;
        }
    }
    Ok(draw_channels_with_gains(large_scale, config, seed))
}

/// Same as [`draw_channels`] with the large-scale gains supplied directly.
pub fn draw_channels_with_gains(large_scale: DMatrix<f64>, config: &ScenarioConfig, seed: u64) -> ChannelSet {
    let (m, n) = (config.antennas_per_bs, config.antennas_per_ue);
    let (b_count, k_count) = large_scale.shape();
    let mut rng = rng_from(seed, &[stream::CHANNELS]);
    let mut h = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let mut hk = CMat::zeros(b_count * m, n);
        for b in 0..b_count {
            let block = draw_block(&mut rng, large_scale[(b, k)], m, n);
            hk.rows_mut(b * m, m).copy_from(&block);
        }
        h.push(hk);
    }
    ChannelSet {
        num_bs: b_count,
        antennas_per_bs: m,
        antennas_per_ue: n,
        h,
        large_scale,
    }
}
