//! SINR, rate, objective and power evaluation.
//!
//! Streams are indexed `j = k * S + s` throughout the crate.

use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sq, CVec};
use crate::scenario::ChannelSet;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub streams_per_ue: usize,
    /// BS-side vectors, `BM` entries each.
    pub w: Vec<CVec>,
    /// UE-side vectors, `N` entries each.
    pub v: Vec<CVec>,
}

impl BeamformerSet {
    pub fn num_streams(&self) -> usize {
        self.w.len()
    }

    pub fn num_ue(&self) -> usize {
        self.w.len() / self.streams_per_ue
    }

    #[inline]
    pub fn index(&self, k: usize, s: usize) -> usize {
        k * self.streams_per_ue + s
    }

    fn check(&self, channels: &ChannelSet) -> Result<()> {
        let bm = channels.bs_antennas_total();
        let n = channels.antennas_per_ue;
        if self.w.len() != self.v.len() || self.w.len() != channels.num_ue() * self.streams_per_ue {
            return Err(Error::Dimension(format!(
                "{} BS vectors / {} UE vectors for {} UEs x {} streams",
                self.w.len(),
                self.v.len(),
                channels.num_ue(),
                self.streams_per_ue
            )));
        }
        if self.w.iter().any(|w| w.len() != bm) || self.v.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension(
                "beamformer length does not match antenna counts".into(),
            ));
        }
        Ok(())
    }
}

/// `E_b w`: the `M` entries of `w` belonging to BS `b` (zero-based).
pub fn extract_bs_block(w: &CVec, b: usize, antennas_per_bs: usize) -> Result<CVec> {
    let start = b * antennas_per_bs;
    if antennas_per_bs == 0 || start + antennas_per_bs > w.len() {
        return Err(Error::Domain(format!(
            "BS index {b} out of range for a vector of length {} with M = {antennas_per_bs}",
            w.len()
        )));
    }
    Ok(w.rows(start, antennas_per_bs).into_owned())
}

/// Effective uplink channels `h_j = H_k v_j` for every stream.
pub fn effective_uplink(channels: &ChannelSet, v: &[CVec], streams_per_ue: usize) -> Vec<CVec> {
    v.iter()
        .enumerate()
        .map(|(j, vj)| channels.uplink_effective(j / streams_per_ue, vj))
        .collect()
}

/// Per-stream SINRs in linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTable {
    pub streams_per_ue: usize,
    pub dl: Vec<f64>,
    pub ul: Vec<f64>,
}

impl SinrTable {
    pub fn dl_at(&self, s: usize, k: usize) -> f64 {
        self.dl[k * self.streams_per_ue + s]
    }

    pub fn ul_at(&self, s: usize, k: usize) -> f64 {
        self.ul[k * self.streams_per_ue + s]
    }
}

fn ratio(num: f64, den: f64, what: &str, j: usize) -> Result<f64> {
    if den > 0.0 {
        Ok(num / den)
    } else if num == 0.0 {
        Err(Error::Evaluation(format!(
            "{what} SINR of stream {j} is 0/0 (no noise, no interference, zero beamformer)"
        )))
    } else {
        Ok(f64::INFINITY)
    }
}

/// SINRs from effective uplink channels `h_j = H_k v_j`. Both directions only
/// need the cross gains `h_j^H w_l`: the downlink interference of stream `j`
/// sums row `j`, the uplink interference sums column `j`. Interference is
/// accumulated term by term.
pub fn sinr_from_effective(
    h: &[CVec],
    w: &[CVec],
    v_norm_sq: &[f64],
    sigma2_ue: f64,
    sigma2_bs: f64,
    streams_per_ue: usize,
) -> Result<SinrTable> {
    let n = h.len();
    if w.len() != n || v_norm_sq.len() != n {
        return Err(Error::Dimension("stream counts differ between h, w and v".into()));
    }
    let cross: Vec<Vec<f64>> = h
        .iter()
        .map(|hj| w.iter().map(|wl| inner(hj, wl).norm_sqr()).collect())
        .collect();
    let mut dl = Vec::with_capacity(n);
    let mut ul = Vec::with_capacity(n);
    for j in 0..n {
        let mut dl_interf = 0.0;
        let mut ul_interf = 0.0;
        for l in 0..n {
            if l != j {
                dl_interf += cross[j][l];
                ul_interf += cross[l][j];
            }
        }
        let signal = cross[j][j];
        dl.push(ratio(signal, dl_interf + sigma2_ue * v_norm_sq[j], "DL", j)?);
        ul.push(ratio(signal, ul_interf + sigma2_bs * norm_sq(&w[j]), "UL", j)?);
    }
    Ok(SinrTable { streams_per_ue, dl, ul })
}

/// Downlink and uplink SINRs of every stream on the given channels.
pub fn compute_sinr(channels: &ChannelSet, bf: &BeamformerSet, sigma2_ue: f64, sigma2_bs: f64) -> Result<SinrTable> {
    bf.check(channels)?;
    let h = effective_uplink(channels, &bf.v, bf.streams_per_ue);
    let v_norm_sq: Vec<f64> = bf.v.iter().map(norm_sq).collect();
    sinr_from_effective(&h, &bf.w, &v_norm_sq, sigma2_ue, sigma2_bs, bf.streams_per_ue)
}

/// Which rate constraints take part in the max-min problem. Single-direction
/// designs drop the other direction entirely instead of weighting it by zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Directions {
    Both,
    DlOnly,
    UlOnly,
}

impl Directions {
    pub fn has_dl(self) -> bool {
        !matches!(self, Directions::UlOnly)
    }

    pub fn has_ul(self) -> bool {
        !matches!(self, Directions::DlOnly)
    }

    /// The DL weight the solvers use for this direction set.
    pub fn effective_alpha(self, alpha: f64) -> f64 {
        match self {
            Directions::Both => alpha,
            Directions::DlOnly => 1.0,
            Directions::UlOnly => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    /// Per-UE rates, bits/s/Hz.
    pub dl: Vec<f64>,
    pub ul: Vec<f64>,
    pub min_dl: f64,
    pub min_ul: f64,
    /// `min(alpha * min_dl, (1 - alpha) * min_ul)`.
    pub objective: f64,
}

impl RateSummary {
    /// Max-min objective restricted to the active directions; with
    /// `Directions::Both` this is the weighted objective.
    pub fn objective_for(&self, directions: Directions, alpha: f64) -> f64 {
        match directions {
            Directions::Both => weighted(alpha, self.min_dl, self.min_ul),
            Directions::DlOnly => self.min_dl,
            Directions::UlOnly => self.min_ul,
        }
    }
}

fn weighted(alpha: f64, min_dl: f64, min_ul: f64) -> f64 {
    (alpha * min_dl).min((1.0 - alpha) * min_ul)
}

pub fn per_ue_rates(sinr: &[f64], streams_per_ue: usize) -> Result<Vec<f64>> {
    if let Some(bad) = sinr.iter().find(|&&x| x.is_nan() || x < 0.0) {
        return Err(Error::Domain(format!("negative or NaN SINR {bad}")));
    }
    Ok(sinr
        .chunks(streams_per_ue)
        .map(|c| c.iter().map(|&x| (1.0 + x).log2()).sum())
        .collect())
}

pub fn compute_rates(sinr: &SinrTable, alpha: f64) -> Result<RateSummary> {
    let dl = per_ue_rates(&sinr.dl, sinr.streams_per_ue)?;
    let ul = per_ue_rates(&sinr.ul, sinr.streams_per_ue)?;
    let min_dl = dl.iter().copied().fold(f64::INFINITY, f64::min);
    let min_ul = ul.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(RateSummary {
        objective: weighted(alpha, min_dl, min_ul),
        dl,
        ul,
        min_dl,
        min_ul,
    })
}

/// Left-hand sides of the per-BS and per-UE power constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAudit {
    pub bs: Vec<f64>,
    pub ue: Vec<f64>,
}

impl PowerAudit {
    /// Largest `power / budget` over BSs and UEs respectively.
    pub fn max_load(&self, rho_bs: f64, rho_ue: f64) -> (f64, f64) {
        let bs = self.bs.iter().fold(0.0f64, |m, &p| m.max(p / rho_bs));
        let ue = self.ue.iter().fold(0.0f64, |m, &p| m.max(p / rho_ue));
        (bs, ue)
    }

    pub fn feasible(&self, rho_bs: f64, rho_ue: f64, rel_tol: f64) -> bool {
        let (bs, ue) = self.max_load(rho_bs, rho_ue);
        bs <= 1.0 + rel_tol && ue <= 1.0 + rel_tol
    }
}

pub fn bs_powers(w: &[CVec], num_bs: usize, antennas_per_bs: usize) -> Vec<f64> {
    let mut bs = vec![0.0; num_bs];
    for wj in w {
        for (b, p) in bs.iter_mut().enumerate() {
            *p += wj
                .rows(b * antennas_per_bs, antennas_per_bs)
                .iter()
                .map(|z| z.norm_sqr())
                .sum::<f64>();
        }
    }
    bs
}

pub fn ue_powers(v: &[CVec], streams_per_ue: usize) -> Vec<f64> {
    v.chunks(streams_per_ue).map(|c| c.iter().map(norm_sq).sum()).collect()
}

pub fn power_audit(bf: &BeamformerSet, num_bs: usize, antennas_per_bs: usize) -> PowerAudit {
    PowerAudit {
        bs: bs_powers(&bf.w, num_bs, antennas_per_bs),
        ue: ue_powers(&bf.v, bf.streams_per_ue),
    }
}

/// Rate left after training overhead: `max(0, 1 - overhead/block) * rate`.
pub fn effective_rate(rate: f64, overhead_slots: f64, block_slots: f64) -> f64 {
    (1.0 - overhead_slots / block_slots).max(0.0) * rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real;
    use num_complex::Complex64;

    fn cv(xs: &[f64]) -> CVec {
        CVec::from_iterator(xs.len(), xs.iter().map(|&x| real(x)))
    }

    #[test]
    fn block_extraction() {
        let w = cv(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(extract_bs_block(&w, 0, 2).unwrap(), cv(&[1.0, 2.0]));
        assert_eq!(extract_bs_block(&w, 1, 2).unwrap(), cv(&[3.0, 4.0]));
        assert!(extract_bs_block(&w, 2, 2).is_err());
    }

    #[test]
    fn single_link_dl_sinr() {
        let h = vec![CVec::from_vec(vec![Complex64::new(0.3, -0.4)])];
        let w = vec![CVec::from_vec(vec![Complex64::new(2.0, 1.0)])];
        let g = inner(&h[0], &w[0]).norm_sqr();
        let t = sinr_from_effective(&h, &w, &[1.0], 0.5, 0.25, 1).unwrap();
        assert!((t.dl[0] - g / 0.5).abs() < 1e-15);
        assert!((t.ul[0] - g / (0.25 * 5.0)).abs() < 1e-15);
    }

    #[test]
    fn zero_everything_is_evaluation_error() {
        let h = vec![CVec::zeros(2)];
        let w = vec![CVec::zeros(2)];
        assert!(matches!(
            sinr_from_effective(&h, &w, &[0.0], 0.0, 0.0, 1),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn rate_arithmetic() {
        let t = SinrTable {
            streams_per_ue: 2,
            dl: vec![1.0, 1.0],
            ul: vec![1.0, 1.0],
        };
        let r = compute_rates(&t, 0.5).unwrap();
        assert_eq!(r.dl, vec![2.0]);
        assert_eq!(r.objective, 1.0);
        assert_eq!(weighted(0.5, 4.0, 2.0), 1.0);
        assert!((weighted(0.3, 2.0, 3.0) - 0.6).abs() < 1e-15);
        let bad = SinrTable {
            streams_per_ue: 1,
            dl: vec![-1.0],
            ul: vec![1.0],
        };
        assert!(matches!(compute_rates(&bad, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn alpha_one_objective_is_zero() {
        let t = SinrTable {
            streams_per_ue: 1,
            dl: vec![3.0],
            ul: vec![3.0],
        };
        let r = compute_rates(&t, 1.0).unwrap();
        assert_eq!(r.objective, 0.0);
        assert_eq!(r.objective_for(Directions::DlOnly, 1.0), 2.0);
    }

    #[test]
    fn audit_simple_cases() {
        let bf = BeamformerSet {
            streams_per_ue: 1,
            w: vec![cv(&[0.6, 0.8, 0.0, 0.0])],
            v: vec![cv(&[0.0, 0.0])],
        };
        let a = power_audit(&bf, 2, 2);
        assert!((a.bs[0] - 1.0).abs() < 1e-15);
        assert_eq!(a.bs[1], 0.0);
        assert_eq!(a.ue, vec![0.0]);
    }

    #[test]
    fn effective_rate_cases() {
        assert_eq!(effective_rate(4.0, 1.0, 4.0), 3.0);
        assert_eq!(effective_rate(4.0, 4.0, 4.0), 0.0);
        assert_eq!(effective_rate(4.0, 6.0, 4.0), 0.0);
    }
}
