//! BS-side SCA step: tangent surrogates, dual updates and the closed-form
//! Lagrangian beamformers.
//!
//! The closed form for stream `j` solves `A_j w_j = kappa_j h_j` with
//! `A_j = Σ_{l≠j} c_l h_l h_l^H + D_j`, where `D_j` is block diagonal per BS.
//! `A_j` is a low-rank update of `D_j`, so the solve goes through the
//! `KS x KS` push-through identity instead of a dense `BM x BM` factorization.

use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{inner, norm_sq, real, CMat, CVec};
use crate::metrics::{bs_powers, per_ue_rates, sinr_from_effective, Directions, SinrTable};

/// Achieved SINRs used as operating points are floored here.
pub const GAMMA_FLOOR: f64 = 1e-12;
/// Floor on `|h^H w|²` in the dual formulas.
pub const GAIN_FLOOR: f64 = 1e-18;
/// Relative margin an iterate must clear to count as an improvement, so
/// that rounding-level differences never decide between candidates.
pub const IMPROVEMENT_REL: f64 = 1e-9;
const RIDGE_REL: f64 = 1e-12;

/// Which SINR dual multiplies the interference terms of the closed forms.
/// `Printed` uses the own-stream UL dual at the BS and the own-stream DL dual
/// at the UE; `Summation` uses the interfering stream's dual in both places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MuIndexVariant {
    #[default]
    Printed,
    Summation,
}

impl FromStr for MuIndexVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "printed" => Ok(MuIndexVariant::Printed),
            "summation" => Ok(MuIndexVariant::Summation),
            other => Err(Error::Config(format!("unknown mu_index_variant '{other}'"))),
        }
    }
}

/// SCA linearization point.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub gamma: Vec<f64>,
    pub gamma_bar: Vec<f64>,
    pub w_prev: Vec<CVec>,
    pub v_prev: Vec<CVec>,
}

impl OperatingPoint {
    pub fn new(gamma: Vec<f64>, gamma_bar: Vec<f64>, w_prev: Vec<CVec>, v_prev: Vec<CVec>) -> Result<Self> {
        let n = gamma.len();
        if gamma_bar.len() != n || w_prev.len() != n || v_prev.len() != n {
            return Err(Error::Dimension("operating point vectors differ in length".into()));
        }
        if let Some(g) = gamma.iter().chain(&gamma_bar).find(|g| !(**g > 0.0)) {
            return Err(Error::Domain(format!("operating-point SINR must be positive, got {g}")));
        }
        Ok(Self {
            gamma,
            gamma_bar,
            w_prev,
            v_prev,
        })
    }

    /// Operating point at achieved SINRs, floored at [`GAMMA_FLOOR`].
    pub fn from_sinr(sinr: &SinrTable, w_prev: Vec<CVec>, v_prev: Vec<CVec>) -> Self {
        let floor = |x: &f64| {
            if x.is_finite() {
                x.max(GAMMA_FLOOR)
            } else {
                1.0 / GAMMA_FLOOR
            }
        };
        Self {
            gamma: sinr.dl.iter().map(floor).collect(),
            gamma_bar: sinr.ul.iter().map(floor).collect(),
            w_prev,
            v_prev,
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

fn tangent(gain_op: Complex64, gain: Complex64, ratio: f64, gamma_op: f64) -> Result<f64> {
    if !(gamma_op > 0.0) {
        return Err(Error::Domain(format!(
            "operating-point SINR must be positive, got {gamma_op}"
        )));
    }
    Ok(-gain_op.norm_sqr() / gamma_op * ratio + 2.0 * (gain_op.conj() * gain).re / gamma_op)
}

/// Tangent minorant of `p(w, γ) = |h^H w|² / γ` at `(w_op, γ_op)`.
pub fn surrogate_p(w: &CVec, gamma: f64, w_op: &CVec, gamma_op: f64, h: &CVec) -> Result<f64> {
    tangent(inner(h, w_op), inner(h, w), gamma / gamma_op, gamma_op)
}

/// Tangent minorant of `q(w, γ̄) = |w^H h|² / γ̄` at `(w_op, γ̄_op)`.
pub fn surrogate_q(w: &CVec, gamma_bar: f64, w_op: &CVec, gamma_bar_op: f64, h: &CVec) -> Result<f64> {
    tangent(inner(h, w_op), inner(h, w), gamma_bar / gamma_bar_op, gamma_bar_op)
}

pub fn exact_p(w: &CVec, gamma: f64, h: &CVec) -> f64 {
    inner(h, w).norm_sqr() / gamma
}

pub fn exact_q(w: &CVec, gamma_bar: f64, h: &CVec) -> f64 {
    inner(w, h).norm_sqr() / gamma_bar
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsDualState {
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Sub-gradient step for `(eta, zeta)`.
    pub step: f64,
}

impl BsDualState {
    /// Uniform common duals over the active directions, zero SINR and power
    /// duals.
    pub fn initial(num_ue: usize, streams_per_ue: usize, num_bs: usize, directions: Directions, step: f64) -> Self {
        let active = (directions.has_dl() as usize + directions.has_ul() as usize) * num_ue;
        let share = 1.0 / active as f64;
        Self {
            eta: vec![if directions.has_dl() { share } else { 0.0 }; num_ue],
            zeta: vec![if directions.has_ul() { share } else { 0.0 }; num_ue],
            nu: vec![0.0; num_ue * streams_per_ue],
            mu: vec![0.0; num_ue * streams_per_ue],
            lambda: vec![0.0; num_bs],
            step,
        }
    }
}

/// Raw sub-gradient step on `(eta, zeta)`, before projection. Inactive
/// directions stay at zero.
pub fn subgradient_step(
    eta: &[f64],
    zeta: &[f64],
    dl_rates: &[f64],
    ul_rates: &[f64],
    r: f64,
    alpha: f64,
    delta: f64,
    directions: Directions,
) -> (Vec<f64>, Vec<f64>) {
    let eta = eta
        .iter()
        .zip(dl_rates)
        .map(|(e, rate)| {
            if directions.has_dl() {
                e - delta * (alpha * rate - r)
            } else {
                0.0
            }
        })
        .collect();
    let zeta = zeta
        .iter()
        .zip(ul_rates)
        .map(|(z, rate)| {
            if directions.has_ul() {
                z - delta * ((1.0 - alpha) * rate - r)
            } else {
                0.0
            }
        })
        .collect();
    (eta, zeta)
}

/// Clips negative entries and rescales the active entries to sum to one;
/// falls back to the uniform point when everything was clipped.
pub fn project_common_duals(eta: &mut [f64], zeta: &mut [f64], directions: Directions) {
    let mut active: Vec<&mut f64> = Vec::with_capacity(eta.len() + zeta.len());
    if directions.has_dl() {
        active.extend(eta.iter_mut());
    } else {
        eta.iter_mut().for_each(|e| *e = 0.0);
    }
    if directions.has_ul() {
        active.extend(zeta.iter_mut());
    } else {
        zeta.iter_mut().for_each(|z| *z = 0.0);
    }
    for x in active.iter_mut() {
        if !(**x > 0.0) {
            **x = 0.0;
        }
    }
    let total: f64 = active.iter().map(|x| **x).sum();
    let count = active.len() as f64;
    for x in active {
        *x = if total > 0.0 { *x / total } else { 1.0 / count };
    }
}

/// Sub-gradient step with `state.step` followed by the simplex projection.
pub fn update_common_duals(
    state: &BsDualState,
    dl_rates: &[f64],
    ul_rates: &[f64],
    r: f64,
    alpha: f64,
    directions: Directions,
) -> BsDualState {
    let (mut eta, mut zeta) = subgradient_step(
        &state.eta,
        &state.zeta,
        dl_rates,
        ul_rates,
        r,
        alpha,
        state.step,
        directions,
    );
    project_common_duals(&mut eta, &mut zeta, directions);
    BsDualState {
        eta,
        zeta,
        ..state.clone()
    }
}

/// `η α γ² ln2 / ((γ + 1) gain)`, the shared shape of all four SINR duals.
pub(crate) fn sinr_dual(common: f64, weight: f64, gamma: f64, gain: f64) -> f64 {
    if common == 0.0 || weight == 0.0 {
        return 0.0;
    }
    common * weight * gamma * gamma * std::f64::consts::LN_2 / ((gamma + 1.0) * gain.max(GAIN_FLOOR))
}

/// SINR duals `(nu, mu)` at the operating point; `h` are the (estimated)
/// effective uplink channels `H_k v_j`.
pub fn compute_nu_mu(
    eta: &[f64],
    zeta: &[f64],
    alpha: f64,
    op: &OperatingPoint,
    h: &[CVec],
    streams_per_ue: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut nu = Vec::with_capacity(h.len());
    let mut mu = Vec::with_capacity(h.len());
    for (j, hj) in h.iter().enumerate() {
        let k = j / streams_per_ue;
        let gain = inner(hj, &op.w_prev[j]).norm_sqr();
        nu.push(sinr_dual(eta[k], alpha, op.gamma[j], gain));
        mu.push(sinr_dual(zeta[k], 1.0 - alpha, op.gamma_bar[j], gain));
    }
    (nu, mu)
}

/// Channel-dependent part of the closed form, reusable across dual updates.
pub struct BsSystem<'a> {
    h: &'a [CVec],
    num_bs: usize,
    antennas_per_bs: usize,
    g: CMat,
    grams: Vec<CMat>,
    total: CMat,
}

impl<'a> BsSystem<'a> {
    pub fn new(h: &'a [CVec], num_bs: usize, antennas_per_bs: usize) -> Result<Self> {
        let bm = num_bs * antennas_per_bs;
        if h.iter().any(|x| x.len() != bm) {
            return Err(Error::Dimension(format!("effective channels must have {bm} entries")));
        }
        let g = CMat::from_columns(h);
        let r = h.len();
        let mut total = CMat::zeros(r, r);
        let mut grams = Vec::with_capacity(num_bs);
        for b in 0..num_bs {
            let gb = g.rows(b * antennas_per_bs, antennas_per_bs);
            let gram = gb.ad_mul(&gb);
            total += &gram;
            grams.push(gram);
        }
        Ok(Self {
            h,
            num_bs,
            antennas_per_bs,
            g,
            grams,
            total,
        })
    }

    /// Closed-form beamformers for every stream at fixed duals.
    pub fn solve(
        &self,
        duals: &BsDualState,
        op: &OperatingPoint,
        alpha: f64,
        sigma2_bs: f64,
        variant: MuIndexVariant,
    ) -> Result<Vec<CVec>> {
        (0..self.h.len())
            .map(|j| self.solve_stream(j, duals, op, alpha, sigma2_bs, variant))
            .collect()
    }

    fn solve_stream(
        &self,
        j: usize,
        duals: &BsDualState,
        op: &OperatingPoint,
        alpha: f64,
        sigma2_bs: f64,
        variant: MuIndexVariant,
    ) -> Result<CVec> {
        let r = self.h.len();
        let m = self.antennas_per_bs;
        let bm = self.num_bs * m;
        let hj = &self.h[j];
        let kappa = (alpha * duals.nu[j] / op.gamma[j] + (1.0 - alpha) * duals.mu[j] / op.gamma_bar[j])
            * inner(hj, &op.w_prev[j]);
        if kappa == Complex64::new(0.0, 0.0) {
            return Ok(CVec::zeros(bm));
        }

        let c: Vec<f64> = (0..r)
            .map(|l| {
                if l == j {
                    return 0.0;
                }
                let mu = match variant {
                    MuIndexVariant::Printed => duals.mu[j],
                    MuIndexVariant::Summation => duals.mu[l],
                };
                alpha * duals.nu[l] + (1.0 - alpha) * mu
            })
            .collect();
        let base = (1.0 - alpha) * duals.mu[j] * sigma2_bs;
        let mut d: Vec<f64> = duals.lambda.iter().map(|l| base + l).collect();
        let trace: f64 = (0..r).map(|l| c[l] * self.total[(l, l)].re).sum::<f64>() + m as f64 * d.iter().sum::<f64>();
        if !(trace > 0.0 && trace.is_finite()) {
            return Err(Error::numerical(
                format!("BS closed form, stream {j}"),
                format!("system matrix has trace {trace}"),
            ));
        }
        let ridge = RIDGE_REL * trace / bm as f64;
        if d.iter().copied().fold(f64::INFINITY, f64::min) <= ridge {
            d.iter_mut().for_each(|x| *x += ridge);
        }

        // Γ = G^H D^{-1} G
        let uniform = d.iter().all(|x| *x == d[0]);
        let gamma_mat = if uniform {
            &self.total * real(1.0 / d[0])
        } else {
            let mut acc = CMat::zeros(r, r);
            for (gram, db) in self.grams.iter().zip(&d) {
                acc += gram * real(1.0 / db);
            }
            acc
        };
        let mut system = DMatrix::from_fn(r, r, |a, b| real(c[a]) * gamma_mat[(a, b)]);
        for a in 0..r {
            system[(a, a)] += real(1.0);
        }
        let mut rhs = CVec::zeros(r);
        rhs[j] = kappa;
        let u = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::numerical(format!("BS closed form, stream {j}"), "reduced system is singular"))?;
        let mut w = &self.g * u;
        for (b, db) in d.iter().enumerate() {
            w.rows_mut(b * m, m).scale_mut(1.0 / db);
        }
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::numerical(
                format!("BS closed form, stream {j}"),
                "non-finite solution",
            ));
        }
        Ok(w)
    }
}

/// Closed-form BS beamformers for all streams at fixed duals.
pub fn solve_bs_beamformers(
    h: &[CVec],
    num_bs: usize,
    antennas_per_bs: usize,
    duals: &BsDualState,
    op: &OperatingPoint,
    alpha: f64,
    sigma2_bs: f64,
    variant: MuIndexVariant,
) -> Result<Vec<CVec>> {
    BsSystem::new(h, num_bs, antennas_per_bs)?.solve(duals, op, alpha, sigma2_bs, variant)
}

/// Projected sub-gradient ascent on the per-BS power duals.
pub fn update_lambda_bs(lambda: &[f64], bs_power: &[f64], rho_bs: f64, step: f64) -> Vec<f64> {
    lambda
        .iter()
        .zip(bs_power)
        .map(|(l, p)| (l + step * (p - rho_bs)).max(0.0))
        .collect()
}

/// Scales every vector by the common factor that puts the most loaded BS
/// exactly at `rho_bs`. Returns the factor (1 for all-zero input).
pub fn scale_to_bs_budget(w: &mut [CVec], num_bs: usize, antennas_per_bs: usize, rho_bs: f64) -> f64 {
    let worst = bs_powers(w, num_bs, antennas_per_bs).into_iter().fold(0.0, f64::max);
    if !(worst > 0.0) {
        return 1.0;
    }
    let factor = (rho_bs / worst).sqrt();
    for x in w.iter_mut() {
        x.scale_mut(factor);
    }
    factor
}

#[derive(Debug, Clone, PartialEq)]
pub struct BsSolverParams {
    pub delta0: f64,
    pub inner_iters_max: usize,
    pub dual_tol: f64,
    pub lambda_step: f64,
    pub mu_variant: MuIndexVariant,
}

impl Default for BsSolverParams {
    fn default() -> Self {
        Self {
            delta0: 0.05,
            inner_iters_max: 50,
            dual_tol: 1e-4,
            lambda_step: 0.1,
            mu_variant: MuIndexVariant::Printed,
        }
    }
}

/// Everything the CPU knows when it runs the BS step.
#[derive(Debug, Clone, Copy)]
pub struct BsStepInput<'a> {
    /// Effective uplink channels (true or estimated).
    pub h: &'a [CVec],
    /// `‖v_j‖²`, known from the UE power policy.
    pub v_norm_sq: &'a [f64],
    pub w_prev: &'a [CVec],
    pub v_prev: &'a [CVec],
    pub num_bs: usize,
    pub antennas_per_bs: usize,
    pub streams_per_ue: usize,
    /// Effective DL weight for `directions`.
    pub alpha: f64,
    pub directions: Directions,
    pub sigma2_bs: f64,
    pub sigma2_ue: f64,
    pub rho_bs: f64,
}

#[derive(Debug, Clone)]
pub struct BsStepOutput {
    pub w: Vec<CVec>,
    /// Duals that produced `w`.
    pub duals: BsDualState,
    /// Duals after the last inner iteration, for warm starts.
    pub next_duals: BsDualState,
    pub operating_point: OperatingPoint,
    /// Objective of `w` on the channels the step was given.
    pub objective: f64,
    pub inner_iters: usize,
}

struct Achieved {
    dl: Vec<f64>,
    ul: Vec<f64>,
    objective: f64,
}

fn achieved(input: &BsStepInput, w: &[CVec]) -> Result<Achieved> {
    let sinr = sinr_from_effective(
        input.h,
        w,
        input.v_norm_sq,
        input.sigma2_ue,
        input.sigma2_bs,
        input.streams_per_ue,
    )?;
    let dl = per_ue_rates(&sinr.dl, input.streams_per_ue)?;
    let ul = per_ue_rates(&sinr.ul, input.streams_per_ue)?;
    let min = |x: &[f64]| x.iter().copied().fold(f64::INFINITY, f64::min);
    let objective = match input.directions {
        Directions::Both => (input.alpha * min(&dl)).min((1.0 - input.alpha) * min(&ul)),
        Directions::DlOnly => min(&dl),
        Directions::UlOnly => min(&ul),
    };
    Ok(Achieved { dl, ul, objective })
}

/// One SCA step at the BSs: linearize at the previous iterate, then run the
/// inner sub-gradient loop over `(eta, zeta)` with the closed form and the
/// power duals in the loop. Returns the best inner iterate by achieved
/// objective (the previous iterate included).
pub fn sca_step(input: &BsStepInput, duals: &BsDualState, params: &BsSolverParams) -> Result<BsStepOutput> {
    let sinr = sinr_from_effective(
        input.h,
        input.w_prev,
        input.v_norm_sq,
        input.sigma2_ue,
        input.sigma2_bs,
        input.streams_per_ue,
    )?;
    let op = OperatingPoint::from_sinr(&sinr, input.w_prev.to_vec(), input.v_prev.to_vec());
    let system = BsSystem::new(input.h, input.num_bs, input.antennas_per_bs)?;
    let bm = (input.num_bs * input.antennas_per_bs) as f64;
    let s = input.streams_per_ue;

    let start = achieved(input, input.w_prev)?;
    let mut best_objective = start.objective;
    let mut best_w = input.w_prev.to_vec();
    let mut best_duals = duals.clone();
    let mut state = duals.clone();
    let mut inner_iters = 0;

    for t in 1..=params.inner_iters_max {
        inner_iters = t;
        let (nu, mu) = compute_nu_mu(&state.eta, &state.zeta, input.alpha, &op, input.h, s);
        state.nu = nu;
        state.mu = mu;
        let mut w = system.solve(&state, &op, input.alpha, input.sigma2_bs, params.mu_variant)?;
        for (j, wj) in w.iter_mut().enumerate() {
            let k = j / s;
            if state.eta[k] == 0.0 && state.zeta[k] == 0.0 {
                *wj = input.w_prev[j].clone();
            }
        }
        let used = state.clone();

        let lambda_ref = {
            let weighted: f64 = (0..input.h.len())
                .map(|l| (input.alpha * state.nu[l] + (1.0 - input.alpha) * state.mu[l]) * norm_sq(&input.h[l]))
                .sum();
            let noise: f64 = state.mu.iter().map(|m| (1.0 - input.alpha) * m).sum::<f64>() / state.mu.len() as f64;
            weighted / bm + noise * input.sigma2_bs
        };
        if lambda_ref > 0.0 {
            let powers: Vec<f64> = bs_powers(&w, input.num_bs, input.antennas_per_bs)
                .into_iter()
                .map(|p| p.min(2.0 * input.rho_bs))
                .collect();
            let step = params.lambda_step * lambda_ref / input.rho_bs;
            state.lambda = update_lambda_bs(&state.lambda, &powers, input.rho_bs, step);
        }

        scale_to_bs_budget(&mut w, input.num_bs, input.antennas_per_bs, input.rho_bs);
        let now = achieved(input, &w)?;
        if now.objective > best_objective + IMPROVEMENT_REL * best_objective.abs() {
            best_objective = now.objective;
            best_w = w;
            best_duals = used;
        }

        let delta = params.delta0 / (t as f64).sqrt();
        let (mut eta, mut zeta) = subgradient_step(
            &state.eta,
            &state.zeta,
            &now.dl,
            &now.ul,
            now.objective,
            input.alpha,
            delta,
            input.directions,
        );
        project_common_duals(&mut eta, &mut zeta, input.directions);
        let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let change = max_diff(&eta, &state.eta) + max_diff(&zeta, &state.zeta);
        state.eta = eta;
        state.zeta = zeta;
        state.step = delta;
        if change < params.dual_tol {
            break;
        }
    }

    Ok(BsStepOutput {
        w: best_w,
        duals: best_duals,
        next_duals: state,
        operating_point: op,
        objective: best_objective,
        inner_iters,
    })
}
