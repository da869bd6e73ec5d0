//! UE-side SCA step: surrogates, UE duals, and the ideal, estimated and
//! heuristic receive/transmit beamformers with the per-UE power bisection.
//!
//! Every variant reduces to one Hermitian system per stream,
//! `(base_j + λ̄_k I) v_j = rhs_j`, sharing `λ̄_k` across the streams of UE `k`.

use crate::bs_solver::{sinr_dual, MuIndexVariant, OperatingPoint, GAMMA_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{
    add_outer_scaled, inner, min_eigenvalue_hermitian, norm_sq, real, solve_hermitian, trace_re, CMat, CVec,
};
use crate::training::PilotBook;

const GUARD_REL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 400;

fn tangent(gain_op: num_complex::Complex64, gain: num_complex::Complex64, ratio: f64, gamma_op: f64) -> Result<f64> {
    if !(gamma_op > 0.0) {
        return Err(Error::Domain(format!(
            "operating-point SINR must be positive, got {gamma_op}"
        )));
    }
    Ok(-gain_op.norm_sqr() / gamma_op * ratio + 2.0 * (gain_op.conj() * gain).re / gamma_op)
}

/// Tangent minorant of `r(v, γ) = |v^H g|² / γ` at `(v_op, γ_op)`.
pub fn surrogate_r(v: &CVec, gamma: f64, v_op: &CVec, gamma_op: f64, g: &CVec) -> Result<f64> {
    tangent(inner(g, v_op), inner(g, v), gamma / gamma_op, gamma_op)
}

/// Tangent minorant of `t(v, γ̄) = |g^H v|² / γ̄` at `(v_op, γ̄_op)`.
pub fn surrogate_t(v: &CVec, gamma_bar: f64, v_op: &CVec, gamma_bar_op: f64, g: &CVec) -> Result<f64> {
    tangent(inner(g, v_op), inner(g, v), gamma_bar / gamma_bar_op, gamma_bar_op)
}

pub fn exact_r(v: &CVec, gamma: f64, g: &CVec) -> f64 {
    inner(v, g).norm_sqr() / gamma
}

pub fn exact_t(v: &CVec, gamma_bar: f64, g: &CVec) -> f64 {
    inner(g, v).norm_sqr() / gamma_bar
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct UeDualState {
    pub nu_bar: Vec<f64>,
    pub mu_bar: Vec<f64>,
    pub lambda_bar: Vec<f64>,
}

/// `(nu_bar, mu_bar)` from the common duals, the operating-point SINRs and
/// the gains `|v_prev^H H_k^H w_j|²`.
pub fn compute_nu_mu_bar(
    eta: &[f64],
    zeta: &[f64],
    alpha: f64,
    gamma: &[f64],
    gamma_bar: &[f64],
    gains: &[f64],
    streams_per_ue: usize,
) -> (Vec<f64>, Vec<f64>) {
    let nu = (0..gains.len())
        .map(|j| sinr_dual(eta[j / streams_per_ue], alpha, gamma[j], gains[j]))
        .collect();
    let mu = (0..gains.len())
        .map(|j| sinr_dual(zeta[j / streams_per_ue], 1.0 - alpha, gamma_bar[j], gains[j]))
        .collect();
    (nu, mu)
}

/// Per-stream weights of the heuristic UE design.
#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicWeights {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl HeuristicWeights {
    pub fn uniform(num_streams: usize, a: f64, b: f64) -> Result<Self> {
        let w = Self {
            a: vec![a; num_streams],
            b: vec![b; num_streams],
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.b.len() {
            return Err(Error::Dimension("heuristic a and b differ in length".into()));
        }
        if let Some(a) = self.a.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Domain(format!("heuristic weight a must be positive, got {a}")));
        }
        if let Some(b) = self.b.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::Domain(format!(
                "heuristic weight b must be nonnegative, got {b}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeSolverParams {
    /// Relative tolerance on the per-UE power at the bisection end point.
    pub bisect_tol: f64,
    pub mu_variant: MuIndexVariant,
    /// Receive-only designs: solve with `λ̄ = 0` and give every stream
    /// `ρ_UE / S`, since the receive SINR does not depend on the scale.
    pub equal_power_streams: bool,
}

impl Default for UeSolverParams {
    fn default() -> Self {
        Self {
            bisect_tol: 1e-8,
            mu_variant: MuIndexVariant::Printed,
            equal_power_streams: false,
        }
    }
}

/// The streams of one UE: `(base_j + λ̄ I) v_j = rhs_j`.
#[derive(Debug, Clone)]
pub struct UeSystem {
    pub base: Vec<CMat>,
    pub rhs: Vec<CVec>,
}

/// Shifts `m` so its smallest eigenvalue is at least `1e-10 trace / N`.
fn guard_definite(m: &mut CMat) {
    let n = m.nrows();
    let lambda_min = min_eigenvalue_hermitian(m);
    if lambda_min > 0.0 {
        return;
    }
    let trace = trace_re(m).abs();
    let shift = -lambda_min + GUARD_REL * trace / n as f64;
    if shift > 0.0 {
        for i in 0..n {
            m[(i, i)] += real(shift);
        }
    }
}

impl UeSystem {
    fn new(mut base: Vec<CMat>, rhs: Vec<CVec>) -> Self {
        base.iter_mut().for_each(guard_definite);
        Self { base, rhs }
    }

    pub fn is_trivial(&self) -> bool {
        self.rhs.iter().all(|r| r.iter().all(|z| z.re == 0.0 && z.im == 0.0))
    }

    pub fn solve(&self, lambda_bar: f64) -> Result<Vec<CVec>> {
        self.base
            .iter()
            .zip(&self.rhs)
            .map(|(base, rhs)| {
                let mut m = base.clone();
                for i in 0..m.nrows() {
                    m[(i, i)] += real(lambda_bar);
                }
                solve_hermitian(&m, rhs).ok_or_else(|| {
                    Error::numerical(
                        "UE closed form",
                        format!("singular system at lambda_bar = {lambda_bar}"),
                    )
                })
            })
            .collect()
    }

    /// Smallest `λ̄ ≥ 0` (to `tol` relative power) whose solution meets
    /// `Σ_s ‖v_s‖² ≤ rho`; returns the feasible end of the bracket.
    pub fn power_constrained(&self, rho: f64, tol: f64) -> Result<(Vec<CVec>, f64)> {
        let power = |v: &[CVec]| v.iter().map(norm_sq).sum::<f64>();
        if let Ok(v) = self.solve(0.0) {
            if power(&v) <= rho {
                return Ok((v, 0.0));
            }
        }
        let rhs_bound: f64 = self.rhs.iter().map(|r| norm_sq(r).sqrt()).sum::<f64>() / rho.sqrt();
        let trace_scale = self
            .base
            .iter()
            .map(|b| trace_re(b) / b.nrows() as f64)
            .fold(0.0, f64::max);
        let mut lo = 0.0;
        let mut hi = if trace_scale > 0.0 {
            trace_scale.min(rhs_bound)
        } else {
            rhs_bound
        };
        if !(hi > 0.0) {
            hi = f64::MIN_POSITIVE;
        }
        let mut v_hi;
        let mut steps = 0;
        loop {
            v_hi = self.solve(hi)?;
            if power(&v_hi) <= rho {
                break;
            }
            lo = hi;
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BISECTIONS || !hi.is_finite() {
                return Err(Error::numerical(
                    "UE power bisection",
                    "could not bracket the power budget",
                ));
            }
        }
        for _ in 0..MAX_BISECTIONS {
            if rho - power(&v_hi) <= tol * rho || hi - lo <= 1e-15 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let v_mid = self.solve(mid)?;
            if power(&v_mid) > rho {
                lo = mid;
            } else {
                hi = mid;
                v_hi = v_mid;
            }
        }
        Ok((v_hi, hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeSolution {
    pub v: Vec<CVec>,
    pub lambda_bar: Vec<f64>,
}

fn solve_all<F>(
    num_ue: usize,
    streams_per_ue: usize,
    v_prev: &[CVec],
    rho_ue: f64,
    params: &UeSolverParams,
    mut build: F,
) -> Result<UeSolution>
where
    F: FnMut(usize) -> Result<Option<UeSystem>>,
{
    let mut v = Vec::with_capacity(num_ue * streams_per_ue);
    let mut lambda_bar = Vec::with_capacity(num_ue);
    for k in 0..num_ue {
        let own = &v_prev[k * streams_per_ue..(k + 1) * streams_per_ue];
        match build(k)? {
            Some(system) if !system.is_trivial() && params.equal_power_streams => {
                let per_stream = (rho_ue / streams_per_ue as f64).sqrt();
                let vk = system
                    .solve(0.0)
                    .map_err(|e| Error::numerical(format!("UE {k}"), e.to_string()))?;
                for (vs, prev) in vk.into_iter().zip(own) {
                    let peak = vs.iter().map(|z| z.norm()).fold(0.0, f64::max);
                    let vs = if peak > 0.0 {
                        vs.map(|z| z.unscale(peak))
                    } else {
                        prev.clone()
                    };
                    let n = norm_sq(&vs).sqrt();
                    v.push(if n > 0.0 { vs * real(per_stream / n) } else { vs });
                }
                lambda_bar.push(0.0);
            }
            Some(system) if !system.is_trivial() => {
                let (vk, lk) = system
                    .power_constrained(rho_ue, params.bisect_tol)
                    .map_err(|e| Error::numerical(format!("UE {k}"), e.to_string()))?;
                v.extend(vk);
                lambda_bar.push(lk);
            }
            _ => {
                v.extend(own.iter().cloned());
                lambda_bar.push(0.0);
            }
        }
    }
    Ok(UeSolution { v, lambda_bar })
}

/// Ideal-CSI system of UE `k`; `g[l] = H_k^H w_l` for every stream `l`.
pub fn ideal_system(
    k: usize,
    g: &[CVec],
    nu_bar: &[f64],
    mu_bar: &[f64],
    op: &OperatingPoint,
    alpha: f64,
    sigma2_ue: f64,
    streams_per_ue: usize,
    variant: MuIndexVariant,
) -> UeSystem {
    let n = g[0].len();
    let mut base = Vec::with_capacity(streams_per_ue);
    let mut rhs = Vec::with_capacity(streams_per_ue);
    for j in k * streams_per_ue..(k + 1) * streams_per_ue {
        let mut m = CMat::zeros(n, n);
        for (l, gl) in g.iter().enumerate() {
            if l != j {
                let nu = match variant {
                    MuIndexVariant::Printed => nu_bar[j],
                    MuIndexVariant::Summation => nu_bar[l],
                };
                add_outer_scaled(&mut m, gl, alpha * nu + (1.0 - alpha) * mu_bar[l]);
            }
        }
        for i in 0..n {
            m[(i, i)] += real(alpha * nu_bar[j] * sigma2_ue);
        }
        let coef = alpha * nu_bar[j] / op.gamma[j] + (1.0 - alpha) * mu_bar[j] / op.gamma_bar[j];
        rhs.push(&g[j] * (inner(&g[j], &op.v_prev[j]) * coef));
        base.push(m);
    }
    UeSystem::new(base, rhs)
}

/// Ideal-CSI UE beamformers; `g[k][l] = H_k^H w_l`.
pub fn solve_ue_beamformers_ideal(
    g: &[Vec<CVec>],
    nu_bar: &[f64],
    mu_bar: &[f64],
    op: &OperatingPoint,
    alpha: f64,
    sigma2_ue: f64,
    rho_ue: f64,
    streams_per_ue: usize,
    params: &UeSolverParams,
) -> Result<UeSolution> {
    solve_all(g.len(), streams_per_ue, &op.v_prev, rho_ue, params, |k| {
        Ok(Some(ideal_system(
            k,
            &g[k],
            nu_bar,
            mu_bar,
            op,
            alpha,
            sigma2_ue,
            streams_per_ue,
            params.mu_variant,
        )))
    })
}

fn pilot_projection(y: &CMat, pilots: &PilotBook, j: usize) -> CVec {
    (y * pilots.get(j)) * real(1.0 / pilots.tau as f64)
}

/// `(1/τ) Y Y^H − e_j e_j^H − σ²_tr (1 − 1/τ) I` with `e_j = (1/τ) Y p_j`.
fn interference_estimate(y: &CMat, e: &CVec, tau: usize, pilot_noise: f64) -> CMat {
    let n = y.nrows();
    let mut m = y * y.adjoint() * real(1.0 / tau as f64);
    add_outer_scaled(&mut m, e, -1.0);
    let bias = pilot_noise * (1.0 - 1.0 / tau as f64);
    for i in 0..n {
        m[(i, i)] -= real(bias);
    }
    m
}

/// DL SINR of stream `j` at `v`, measured at the UE from the DL-1 block.
pub fn local_dl_sinr(y1: &CMat, pilots: &PilotBook, v: &CVec, j: usize, sigma2_ue: f64) -> f64 {
    let gains: Vec<f64> = (0..pilots.len())
        .map(|l| inner(v, &pilot_projection(y1, pilots, l)).norm_sqr())
        .collect();
    let interference: f64 = gains.iter().enumerate().filter(|(l, _)| *l != j).map(|(_, x)| x).sum();
    gains[j] / (interference + sigma2_ue * norm_sq(v))
}

/// Inputs to the trained-CSI UE design. `y_dl1` is only read when
/// `alpha > 0` and `y_dl2` only when `alpha < 1`.
#[derive(Debug, Clone, Copy)]
pub struct EstimatedUeInput<'a> {
    pub y_dl1: Option<&'a [CMat]>,
    pub y_dl2: Option<&'a [CMat]>,
    pub pilots: &'a PilotBook,
    pub eta: &'a [f64],
    pub zeta: &'a [f64],
    /// UL SINRs at the operating point, computed at the CPU.
    pub gamma_bar: &'a [f64],
    pub v_prev: &'a [CVec],
    pub alpha: f64,
    pub sigma2_ue: f64,
    /// Noise variance of the pilot observations.
    pub pilot_noise: f64,
    pub streams_per_ue: usize,
}

/// Trained-CSI system of UE `k`, built only from its own observations,
/// the pilot book and the scalars it receives. Returns the system and the
/// locally computed `nu_bar` of its streams.
pub fn estimated_system(input: &EstimatedUeInput, k: usize) -> Result<(UeSystem, Vec<f64>)> {
    let s = input.streams_per_ue;
    let tau = input.pilots.tau;
    let alpha = input.alpha;
    let use_dl1 = alpha > 0.0;
    let use_dl2 = alpha < 1.0;
    let y1 = match (use_dl1, input.y_dl1) {
        (true, Some(y)) => Some(&y[k]),
        (true, None) => return Err(Error::Dimension("DL-1 observations required for alpha > 0".into())),
        _ => None,
    };
    let y2 = match (use_dl2, input.y_dl2) {
        (true, Some(y)) => Some(&y[k]),
        (true, None) => return Err(Error::Dimension("DL-2 observations required for alpha < 1".into())),
        _ => None,
    };
    let n = input.v_prev[k * s].len();
    for y in y1.iter().chain(y2.iter()) {
        if y.nrows() != n || y.ncols() != tau {
            return Err(Error::Dimension(format!("observation block must be {n} x {tau}")));
        }
    }

    let mut base = Vec::with_capacity(s);
    let mut rhs = Vec::with_capacity(s);
    let mut nu_local = Vec::with_capacity(s);
    for j in k * s..(k + 1) * s {
        let v_prev = &input.v_prev[j];
        let mut m = CMat::zeros(n, n);
        let mut r = CVec::zeros(n);
        let mut nu = 0.0;
        if let Some(y1) = y1 {
            let e1 = pilot_projection(y1, input.pilots, j);
            let gamma = local_dl_sinr(y1, input.pilots, v_prev, j, input.sigma2_ue).max(GAMMA_FLOOR);
            nu = sinr_dual(input.eta[k], alpha, gamma, inner(v_prev, &e1).norm_sqr());
            if nu > 0.0 {
                m += interference_estimate(y1, &e1, tau, input.pilot_noise) * real(alpha * nu);
                for i in 0..n {
                    m[(i, i)] += real(alpha * nu * input.sigma2_ue);
                }
                r += &e1 * (inner(&e1, v_prev) * (alpha * nu / gamma));
            }
        }
        if let Some(y2) = y2 {
            let e2 = pilot_projection(y2, input.pilots, j);
            m += interference_estimate(y2, &e2, tau, input.pilot_noise) * real(1.0 - alpha);
            r += &e2 * (inner(&e2, v_prev) * ((1.0 - alpha) / input.gamma_bar[j].max(GAMMA_FLOOR)));
        }
        nu_local.push(nu);
        base.push(m);
        rhs.push(r);
    }
    Ok((UeSystem::new(base, rhs), nu_local))
}

/// Trained-CSI UE beamformers for every UE; UEs whose common duals are both
/// zero keep their previous beamformers. Also returns the local `nu_bar`.
pub fn solve_ue_beamformers_estimated(
    input: &EstimatedUeInput,
    rho_ue: f64,
    params: &UeSolverParams,
) -> Result<(UeSolution, Vec<f64>)> {
    let s = input.streams_per_ue;
    let num_ue = input.v_prev.len() / s;
    let mut nu_bar = vec![0.0; num_ue * s];
    let solution = solve_all(num_ue, s, input.v_prev, rho_ue, params, |k| {
        if input.eta[k] == 0.0 && input.zeta[k] == 0.0 {
            return Ok(None);
        }
        let (system, nu) = estimated_system(input, k)?;
        nu_bar[k * s..(k + 1) * s].copy_from_slice(&nu);
        Ok(Some(system))
    })?;
    Ok((solution, nu_bar))
}

/// Heuristic system of UE `k` from its DL-2 block (built with `√a` weights):
/// `((1/τ) Y Y^H − (1 − b_j) σ²_tr I + λ̄ I) v_j = (1/τ) Y p_j / √a_j`.
pub fn heuristic_system(
    y_dl2: &CMat,
    pilots: &PilotBook,
    weights: &HeuristicWeights,
    pilot_noise: f64,
    k: usize,
    streams_per_ue: usize,
) -> UeSystem {
    let n = y_dl2.nrows();
    let tau = pilots.tau as f64;
    let gram = y_dl2 * y_dl2.adjoint() * real(1.0 / tau);
    let mut base = Vec::with_capacity(streams_per_ue);
    let mut rhs = Vec::with_capacity(streams_per_ue);
    for j in k * streams_per_ue..(k + 1) * streams_per_ue {
        let mut m = gram.clone();
        let bias = (1.0 - weights.b[j]) * pilot_noise;
        if bias != 0.0 {
            for i in 0..n {
                m[(i, i)] -= real(bias);
            }
        }
        base.push(m);
        rhs.push(pilot_projection(y_dl2, pilots, j) * real(1.0 / weights.a[j].sqrt()));
    }
    UeSystem::new(base, rhs)
}

/// The heuristic system on true channels: `(Σ_l a_l g_l g_l^H + b_j σ² I) v_j = g_j`.
pub fn heuristic_ideal_system(
    g: &[CVec],
    weights: &HeuristicWeights,
    sigma2_ue: f64,
    k: usize,
    streams_per_ue: usize,
) -> UeSystem {
    let n = g[0].len();
    let mut gram = CMat::zeros(n, n);
    for (gl, a) in g.iter().zip(&weights.a) {
        add_outer_scaled(&mut gram, gl, *a);
    }
    let mut base = Vec::with_capacity(streams_per_ue);
    let mut rhs = Vec::with_capacity(streams_per_ue);
    for j in k * streams_per_ue..(k + 1) * streams_per_ue {
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += real(weights.b[j] * sigma2_ue);
        }
        base.push(m);
        rhs.push(g[j].clone());
    }
    UeSystem::new(base, rhs)
}

pub fn solve_ue_beamformers_heuristic(
    y_dl2: &[CMat],
    pilots: &PilotBook,
    weights: &HeuristicWeights,
    pilot_noise: f64,
    v_prev: &[CVec],
    rho_ue: f64,
    streams_per_ue: usize,
    params: &UeSolverParams,
) -> Result<UeSolution> {
    weights.validate()?;
    solve_all(y_dl2.len(), streams_per_ue, v_prev, rho_ue, params, |k| {
        Ok(Some(heuristic_system(
            &y_dl2[k],
            pilots,
            weights,
            pilot_noise,
            k,
            streams_per_ue,
        )))
    })
}

pub fn solve_ue_heuristic_ideal(
    g: &[Vec<CVec>],
    weights: &HeuristicWeights,
    sigma2_ue: f64,
    v_prev: &[CVec],
    rho_ue: f64,
    streams_per_ue: usize,
    params: &UeSolverParams,
) -> Result<UeSolution> {
    weights.validate()?;
    solve_all(g.len(), streams_per_ue, v_prev, rho_ue, params, |k| {
        Ok(Some(heuristic_ideal_system(
            &g[k],
            weights,
            sigma2_ue,
            k,
            streams_per_ue,
        )))
    })
}
