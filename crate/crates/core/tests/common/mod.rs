#![allow(dead_code)]

use cellfree::bs_solver::{BsDualState, OperatingPoint};
use cellfree::linalg::{CMat, CVec};
use cellfree::rng::{complex_normal, rng_from, SimRng};
use cellfree::scenario::{draw_channels_with_gains, ChannelSet, ScenarioConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub fn rng(seed: u64) -> SimRng {
    rng_from(seed, &[0xC0FFEE])
}

pub fn random_vec(rng: &mut SimRng, n: usize, var: f64) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng, var))
}

pub fn random_mat(rng: &mut SimRng, r: usize, c: usize, var: f64) -> CMat {
    CMat::from_fn(r, c, |_, _| complex_normal(rng, var))
}

/// Small scenario with unit-variance channels and unit noise.
pub fn small_config(num_bs: usize, m: usize, k: usize, n: usize, s: usize) -> ScenarioConfig {
    ScenarioConfig {
        num_bs,
        antennas_per_bs: m,
        num_ue: k,
        antennas_per_ue: n,
        streams_per_ue: s,
        rho_bs: 1.0,
        rho_ue: 0.5,
        sigma2_bs: 0.1,
        sigma2_ue: 0.1,
        ..ScenarioConfig::default()
    }
}

pub fn unit_channels(cfg: &ScenarioConfig, seed: u64) -> ChannelSet {
    draw_channels_with_gains(DMatrix::from_element(cfg.num_bs, cfg.num_ue, 1.0), cfg, seed)
}

fn dot_conj(a: &CVec, b: &CVec) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.len() {
        acc += a[i].conj() * b[i];
    }
    acc
}

fn norm2(a: &CVec) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i].re * a[i].re + a[i].im * a[i].im;
    }
    acc
}

fn mat_vec(h: &CMat, x: &CVec) -> CVec {
    let mut out = CVec::zeros(h.nrows());
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            out[r] += h[(r, c)] * x[c];
        }
    }
    out
}

fn mat_adj_vec(h: &CMat, x: &CVec) -> CVec {
    let mut out = CVec::zeros(h.ncols());
    for c in 0..h.ncols() {
        for r in 0..h.nrows() {
            out[c] += h[(r, c)].conj() * x[r];
        }
    }
    out
}

/// Element-wise DL and UL SINRs straight from the definitions.
pub fn naive_sinr(
    ch: &ChannelSet,
    w: &[CVec],
    v: &[CVec],
    s: usize,
    sigma2_ue: f64,
    sigma2_bs: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = w.len();
    let mut dl = vec![0.0; n];
    let mut ul = vec![0.0; n];
    for j in 0..n {
        let k = j / s;
        let hk = &ch.h[k];
        let own = dot_conj(&v[j], &mat_adj_vec(hk, &w[j])).norm_sqr();
        let mut interf = 0.0;
        for l in 0..n {
            if l != j {
                interf += dot_conj(&v[j], &mat_adj_vec(hk, &w[l])).norm_sqr();
            }
        }
        dl[j] = own / (interf + sigma2_ue * norm2(&v[j]));
        let mut interf = 0.0;
        for l in 0..n {
            if l != j {
                let hl = mat_vec(&ch.h[l / s], &v[l]);
                interf += dot_conj(&w[j], &hl).norm_sqr();
            }
        }
        let hj = mat_vec(hk, &v[j]);
        ul[j] = dot_conj(&w[j], &hj).norm_sqr() / (interf + sigma2_bs * norm2(&w[j]));
    }
    (dl, ul)
}

/// Gradient of the convexified BS Lagrangian with respect to `w_j^*`,
/// relative to the sum of the norms of its terms.
pub fn bs_stationarity_residual(
    h: &[CVec],
    w: &[CVec],
    duals: &BsDualState,
    op: &OperatingPoint,
    alpha: f64,
    sigma2_bs: f64,
    m: usize,
) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..h.len() {
        let len = w[j].len();
        let mut grad = CVec::zeros(len);
        let mut scale = 0.0;
        let mut add = |term: CVec, grad: &mut CVec| {
            scale += norm2(&term).sqrt();
            *grad += term;
        };
        for l in 0..h.len() {
            if l == j {
                continue;
            }
            let c = alpha * duals.nu[l] + (1.0 - alpha) * duals.mu[j];
            let t = dot_conj(&h[l], &w[j]) * c;
            add(CVec::from_fn(len, |i, _| h[l][i] * t), &mut grad);
        }
        let noise = (1.0 - alpha) * duals.mu[j] * sigma2_bs;
        add(CVec::from_fn(len, |i, _| w[j][i] * noise), &mut grad);
        add(CVec::from_fn(len, |i, _| w[j][i] * duals.lambda[i / m]), &mut grad);
        let coef = alpha * duals.nu[j] / op.gamma[j] + (1.0 - alpha) * duals.mu[j] / op.gamma_bar[j];
        let t = dot_conj(&h[j], &op.w_prev[j]) * coef;
        add(CVec::from_fn(len, |i, _| -h[j][i] * t), &mut grad);
        worst = worst.max(norm2(&grad).sqrt() / scale);
    }
    worst
}

/// Same for the UE Lagrangian of UE `k`; `g[l] = H_k^H w_l`.
pub fn ue_stationarity_residual(
    k: usize,
    s: usize,
    g: &[CVec],
    v: &[CVec],
    nu_bar: &[f64],
    mu_bar: &[f64],
    lambda_bar: f64,
    op: &OperatingPoint,
    alpha: f64,
    sigma2_ue: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for j in k * s..(k + 1) * s {
        let len = v[j].len();
        let mut grad = CVec::zeros(len);
        let mut scale = 0.0;
        let mut add = |term: CVec, grad: &mut CVec| {
            scale += norm2(&term).sqrt();
            *grad += term;
        };
        for l in 0..g.len() {
            if l == j {
                continue;
            }
            let c = alpha * nu_bar[j] + (1.0 - alpha) * mu_bar[l];
            let t = dot_conj(&g[l], &v[j]) * c;
            add(CVec::from_fn(len, |i, _| g[l][i] * t), &mut grad);
        }
        add(
            CVec::from_fn(len, |i, _| v[j][i] * (alpha * nu_bar[j] * sigma2_ue + lambda_bar)),
            &mut grad,
        );
        let coef = alpha * nu_bar[j] / op.gamma[j] + (1.0 - alpha) * mu_bar[j] / op.gamma_bar[j];
        let t = dot_conj(&g[j], &op.v_prev[j]) * coef;
        add(CVec::from_fn(len, |i, _| -g[j][i] * t), &mut grad);
        worst = worst.max(norm2(&grad).sqrt() / scale);
    }
    worst
}

/// Max-min objective of a single BS / UE / stream link by exhaustive search
/// over unit UE directions `(cos θ, e^{iφ} sin θ)`, with the BS vector
/// matched to `H v` at full power.
pub fn brute_force_single_link(
    h: &CMat,
    rho_bs: f64,
    rho_ue: f64,
    sigma2_bs: f64,
    sigma2_ue: f64,
    alpha: f64,
    grid: usize,
) -> f64 {
    assert_eq!(h.ncols(), 2);
    let mut best: f64 = 0.0;
    for a in 0..=grid {
        let theta = std::f64::consts::FRAC_PI_2 * a as f64 / grid as f64;
        for b in 0..grid {
            let phi = 2.0 * std::f64::consts::PI * b as f64 / grid as f64;
            let v = CVec::from_vec(vec![
                Complex64::new(theta.cos(), 0.0),
                Complex64::from_polar(theta.sin(), phi),
            ]);
            let gain = norm2(&mat_vec(h, &v));
            let dl = (1.0 + rho_bs * gain / sigma2_ue).log2();
            let ul = (1.0 + rho_ue * gain / sigma2_bs).log2();
            best = best.max((alpha * dl).min((1.0 - alpha) * ul));
        }
    }
    best
}

pub fn uniform_in(rng: &mut SimRng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}
