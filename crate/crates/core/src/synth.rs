//! Sampled numerical certificates for the constants that the stability argument
//! only asserts to exist: `k_i`, `l_i`, the decay constant `C`, the
//! minimum-amplitude threshold `A`, the fixed-time level `E`, and the bounds
//! `T_u`, `T_f`.
//!
//! Every maximization is a low-discrepancy sample of a homogeneous sphere followed by
//! a Nelder-Mead polish in the chart `y -> project(y)`. Reductions run in a fixed
//! order so that reports are reproducible for a given seed.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{
    max_weight_over_family, project_to_sphere, random_dilations, sphere_sample, ChainParams,
};
use crate::control::{lyapunov, lyapunov_grad_analytic, lyapunov_pieces, GainSet};
use crate::error::{Error, Result};

/// The chain family `{ChainParams(r, kappa, c) : kappa on a grid of [-1/r, 1/r]}`
/// over which gains are required to work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFamily {
    pub order: usize,
    pub c: f64,
    pub kappas: Vec<f64>,
}

impl KappaFamily {
    /// `grid_n` evenly spaced degrees with both endpoints.
    pub fn new(order: usize, c: f64, grid_n: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidOrder(0));
        }
        let need = max_weight_over_family(order);
        if !(c >= need) {
            return Err(Error::ExponentTooSmall { c, max_p: need });
        }
        let b = 1.0 / order as f64;
        let kappas = if grid_n <= 1 {
            vec![0.0]
        } else {
            (0..grid_n)
                .map(|j| -b + 2.0 * b * j as f64 / (grid_n - 1) as f64)
                .collect()
        };
        Ok(Self { order, c, kappas })
    }

    /// `c = max_{kappa, i} p_i + 1`, valid for every member of the family.
    pub fn default_c(order: usize) -> f64 {
        max_weight_over_family(order) + 1.0
    }

    pub fn params(&self, kappa: f64) -> ChainParams {
        ChainParams::new(self.order, kappa, self.c).expect("family members are valid by construction")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub sphere_n: usize,
    pub kappa_grid_n: usize,
    pub seed: u64,
    pub safety_l: f64,
    pub floor_l: f64,
    pub safety_a: f64,
    pub polish_iters: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sphere_n: 20_000,
            kappa_grid_n: 33,
            seed: 0,
            safety_l: 1.1,
            floor_l: 1.0,
            safety_a: 0.95,
            polish_iters: 300,
        }
    }
}

/// A sampled-and-polished extremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub value: f64,
    pub point: Vec<f64>,
    pub kappa: f64,
    /// Best raw sample before polishing.
    pub raw: f64,
    /// Best value over the other kappa cells (`NaN` for a single cell).
    pub second_cell: f64,
}

impl Extremum {
    /// Gap between the best and second-best kappa cell, relative to the best.
    pub fn cell_gap(&self) -> f64 {
        (self.value - self.second_cell).abs() / self.value.abs().max(f64::MIN_POSITIVE)
    }
}

struct Chart<'a, F: Fn(&[f64]) -> Option<f64>> {
    f: &'a F,
}

impl<F: Fn(&[f64]) -> Option<f64>> CostFunction for Chart<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, y: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(match (self.f)(y) {
            Some(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        })
    }
}

/// Nelder-Mead ascent of `f` starting at `x0`; never returns less than `f(x0)`.
fn polish<F>(f: &F, x0: &[f64], iters: u64) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let start = f(x0).unwrap_or(f64::NEG_INFINITY);
    if iters == 0 {
        return (start, x0.to_vec());
    }
    let mut simplex = vec![x0.to_vec()];
    for j in 0..x0.len() {
        let mut v = x0.to_vec();
        let h = 0.05 * v[j].abs().max(0.05);
        v[j] += h;
        simplex.push(v);
    }
    let solver = match NelderMead::new(simplex).with_sd_tolerance(1e-13) {
        Ok(s) => s,
        Err(_) => return (start, x0.to_vec()),
    };
    let res = Executor::new(Chart { f }, solver)
        .configure(|s| s.max_iters(iters))
        .run();
    match res {
        Ok(r) => {
            let best = -r.state().get_best_cost();
            match r.state().get_best_param() {
                Some(p) if best > start => (best, p.clone()),
                _ => (start, x0.to_vec()),
            }
        }
        Err(_) => (start, x0.to_vec()),
    }
}

/// Maximizes `objective(params_kappa, z)` over `S_dim` for every kappa in `kappas`,
/// then polishes the winning cell.
fn maximize_over_family<F>(kappas: &[f64], family: &KappaFamily, dim: usize, cfg: &SynthConfig, objective: F) -> Result<Extremum>
where
    F: Fn(&ChainParams, &[f64]) -> Option<f64> + Sync,
{
    let cells: Vec<(f64, f64, Vec<f64>)> = kappas
        .par_iter()
        .enumerate()
        .map(|(cell, &kappa)| {
            let params = family.params(kappa);
            let pts = sphere_sample(dim, cfg.sphere_n, &params, cfg.seed.wrapping_add(cell as u64));
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for z in pts {
                if let Some(v) = objective(&params, &z) {
                    if v > best.0 {
                        best = (v, z);
                    }
                }
            }
            (kappa, best.0, best.1)
        })
        .collect();
    let (idx, _) = cells
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, c)| if c.1 > acc.1 { (i, c.1) } else { acc });
    let (kappa, raw, point) = cells[idx].clone();
    if !raw.is_finite() {
        return Err(Error::Synthesis(format!(
            "sampled maximum is not finite ({raw}); resample away from switching surfaces"
        )));
    }
    let second_cell = cells
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != idx)
        .map(|(_, c)| c.1)
        .fold(f64::NAN, f64::max);
    let params = family.params(kappa);
    let on_sphere = |y: &[f64]| project_to_sphere(y, &params).and_then(|z| objective(&params, &z));
    let (value, y) = polish(&on_sphere, &point, cfg.polish_iters);
    let point = if value > raw {
        project_to_sphere(&y, &params).unwrap_or(point)
    } else {
        point
    };
    Ok(Extremum {
        value: value.max(raw),
        point,
        kappa,
        raw,
        second_cell,
    })
}

fn with_dummy_gain(prior: &[f64]) -> Vec<f64> {
    let mut l = prior.to_vec();
    l.push(1.0);
    l
}

/// `W̄_i` on a length-`i` prefix; depends on `l_1 .. l_{i-1}` only.
pub fn stage_w_bar(z: &[f64], params: &ChainParams, prior_l: &[f64]) -> f64 {
    let l = with_dummy_gain(prior_l);
    *lyapunov_pieces(z, params, &l).w_bar.last().expect("non-empty prefix")
}

/// `k_i = max_kappa max_{S_i} W̄_i`, so that `W̄_i <= k_i |w_i|^{(c+1)/c}`.
pub fn compute_ki(i: usize, family: &KappaFamily, prior_l: &[f64], cfg: &SynthConfig) -> Result<Extremum> {
    check_stage(i, family, prior_l)?;
    maximize_over_family(&family.kappas, family, i, cfg, |p, z| Some(stage_w_bar(z, p, prior_l)))
}

/// The bracket `sum_{j<i} dW̄_i/dz_j z_{j+1} + dV_{i-1}/dz_{i-1} (z_i - v_{i-1})`
/// on a length-`i` prefix. `None` where a derivative is unbounded.
pub fn gain_bracket(z: &[f64], params: &ChainParams, prior_l: &[f64]) -> Option<f64> {
    let s = z.len() - 1;
    if s == 0 {
        return Some(0.0);
    }
    let l = with_dummy_gain(prior_l);
    let g = lyapunov_grad_analytic(z, params, &l);
    if g.singular {
        return None;
    }
    let cross: f64 = (0..s).map(|j| g.stage[s][j] * z[j + 1]).sum();
    let dv_prev: f64 = (0..s).map(|m| g.stage[m].get(s - 1).copied().unwrap_or(0.0)).sum();
    let v = cross + dv_prev * (z[s] - g.pieces.nested.v_prev(s));
    v.is_finite().then_some(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainStage {
    pub i: usize,
    pub k: Extremum,
    /// `None` for the first stage, whose bracket is empty.
    pub bracket: Option<Extremum>,
    /// `2 k_i^{c/(c+1)} max bracket`.
    pub bound: f64,
    pub l: f64,
}

/// `l_i = safety * 2 k_i^{c/(c+1)} max_{kappa, S_i} bracket`, never below `floor_l`.
pub fn compute_li(i: usize, family: &KappaFamily, prior_l: &[f64], k_i: f64, cfg: &SynthConfig) -> Result<(f64, Option<Extremum>, f64)> {
    check_stage(i, family, prior_l)?;
    if i == 1 {
        return Ok((cfg.floor_l, None, 0.0));
    }
    let ext = maximize_over_family(&family.kappas, family, i, cfg, |p, z| gain_bracket(z, p, prior_l))?;
    let bound = 2.0 * k_i.powf(family.c / (family.c + 1.0)) * ext.value.max(0.0);
    let l = (cfg.safety_l * bound).max(cfg.floor_l);
    Ok((l, Some(ext), bound))
}

fn check_stage(i: usize, family: &KappaFamily, prior_l: &[f64]) -> Result<()> {
    if i == 0 || i > family.order {
        return Err(Error::Synthesis(format!("stage {i} outside 1..={}", family.order)));
    }
    if prior_l.len() != i - 1 {
        return Err(Error::Synthesis(format!(
            "stage {i} needs {} prior gains, got {}",
            i - 1,
            prior_l.len()
        )));
    }
    Ok(())
}

/// Runs `k_i`, `l_i` for every stage in order.
pub fn synthesize_gains(family: &KappaFamily, cfg: &SynthConfig) -> Result<(GainSet, Vec<GainStage>)> {
    let mut l = Vec::with_capacity(family.order);
    let mut k = Vec::with_capacity(family.order);
    let mut stages = Vec::with_capacity(family.order);
    for i in 1..=family.order {
        let ki = compute_ki(i, family, &l, cfg)?;
        let (li, bracket, bound) = compute_li(i, family, &l, ki.value, cfg)?;
        k.push(ki.value);
        l.push(li);
        stages.push(GainStage {
            i,
            k: ki,
            bracket,
            bound,
            l: li,
        });
    }
    let eta = l
        .iter()
        .zip(&k)
        .map(|(li, ki)| li / (2.0 * ki.powf(family.c / (family.c + 1.0))))
        .collect();
    Ok((
        GainSet {
            l,
            k,
            decay: None,
            eta,
        },
        stages,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayViolation {
    pub z: Vec<f64>,
    /// `dV/dt / Gamma^{c+1+kappa}` at the point.
    pub scaled_vdot: f64,
}

/// Sampled check of `dV/dt <= -C V^{(c+1+kappa)/(c+1)}` along the unperturbed closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub kappa: f64,
    pub samples: usize,
    /// Points skipped because a derivative was unbounded there.
    pub skipped: usize,
    /// Largest `dV/dt / Gamma^{c+1+kappa}`; negative when the decay holds everywhere sampled.
    pub worst_scaled_vdot: f64,
    pub worst_point: Vec<f64>,
    /// `delta = -worst_scaled_vdot`.
    pub margin: f64,
    /// Sampled minimum of `-dV/dt / V^{(c+1+kappa)/(c+1)}`.
    pub c_estimate: f64,
    pub c_estimate_point: Vec<f64>,
    /// `min eta_i * 2^{(r-1)/(r(c+1))}`, when the `k_i` are known.
    pub c_lower_bound: Option<f64>,
    pub eta: Vec<f64>,
    pub violations: Vec<DecayViolation>,
    pub passed: bool,
}

const MAX_LISTED: usize = 32;

/// Closed-loop `dV/dt` along `(z_2, ..., z_r, omega(z))`; `None` where not defined.
pub fn closed_loop_vdot(z: &[f64], params: &ChainParams, gains: &GainSet) -> Option<f64> {
    let g = lyapunov_grad_analytic(z, params, &gains.l);
    if g.singular {
        return None;
    }
    let r = z.len();
    let omega = g.pieces.nested.omega();
    let mut vdot = 0.0;
    for j in 0..r {
        let f = if j + 1 < r { z[j + 1] } else { omega };
        vdot += g.total[j] * f;
    }
    vdot.is_finite().then_some(vdot)
}

/// Samples `S_r` plus random dilations and estimates the decay constant.
pub fn verify_gains(params: &ChainParams, gains: &GainSet, sphere_n: usize, seed: u64) -> DecayReport {
    let r = params.order();
    let c = params.c();
    let kappa = params.kappa();
    let alpha = (c + 1.0 + kappa) / (c + 1.0);
    let mut pts = sphere_sample(r, sphere_n, params, seed);
    let eps = random_dilations(sphere_n / 4, 1e-2, 1e2, seed.wrapping_add(1));
    let extra: Vec<Vec<f64>> = pts
        .iter()
        .zip(&eps)
        .filter_map(|(z, e)| params.dilate(z, *e).ok())
        .collect();
    pts.extend(extra);

    let evals: Vec<Option<(f64, f64)>> = pts
        .par_iter()
        .map(|z| {
            let vdot = closed_loop_vdot(z, params, gains)?;
            let v = lyapunov(z, params, gains);
            let gn = params.hom_norm(z);
            Some((vdot / gn.powf(c + 1.0 + kappa), -vdot / v.powf(alpha)))
        })
        .collect();

    let mut skipped = 0;
    let mut worst = (f64::NEG_INFINITY, Vec::new());
    let mut cmin = (f64::INFINITY, Vec::new());
    let mut violations = Vec::new();
    for (z, e) in pts.iter().zip(evals) {
        let Some((scaled, ratio)) = e else {
            skipped += 1;
            continue;
        };
        if scaled > worst.0 {
            worst = (scaled, z.clone());
        }
        if ratio < cmin.0 {
            cmin = (ratio, z.clone());
        }
        if scaled >= 0.0 && violations.len() < MAX_LISTED {
            violations.push(DecayViolation {
                z: z.clone(),
                scaled_vdot: scaled,
            });
        }
    }
    let eta: Vec<f64> = if gains.k.len() == r {
        gains
            .l
            .iter()
            .zip(&gains.k)
            .map(|(l, k)| l / (2.0 * k.powf(c / (c + 1.0))))
            .collect()
    } else {
        Vec::new()
    };
    let c_lower_bound = (!eta.is_empty()).then(|| {
        let eta_min = eta.iter().cloned().fold(f64::INFINITY, f64::min);
        eta_min * 2f64.powf((r as f64 - 1.0) / (r as f64 * (c + 1.0)))
    });
    let passed = worst.0 < 0.0 && cmin.0 > 0.0;
    DecayReport {
        kappa,
        samples: pts.len(),
        skipped,
        worst_scaled_vdot: worst.0,
        worst_point: worst.1,
        margin: -worst.0,
        c_estimate: cmin.0,
        c_estimate_point: cmin.1,
        c_lower_bound,
        eta,
        violations,
        passed,
    }
}

/// Decay-constant estimate restricted to the shell `Gamma = radius`.
pub fn decay_on_shell(params: &ChainParams, gains: &GainSet, sphere_n: usize, seed: u64, radius: f64) -> f64 {
    let c = params.c();
    let alpha = (c + 1.0 + params.kappa()) / (c + 1.0);
    sphere_sample(params.order(), sphere_n, params, seed)
        .par_iter()
        .filter_map(|z| {
            let z = params.dilate(z, radius).ok()?;
            let vdot = closed_loop_vdot(&z, params, gains)?;
            Some(-vdot / lyapunov(&z, params, gains).powf(alpha))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Dilates a sphere point onto `{V(z) = level}` using the exact degree `c + 1`.
pub fn to_level_set(z: &[f64], params: &ChainParams, gains: &GainSet, level: f64) -> Option<Vec<f64>> {
    let v = lyapunov(z, params, gains);
    if !(v > 0.0 && v.is_finite()) {
        return None;
    }
    let eps = (level / v).powf(1.0 / (params.c() + 1.0));
    params.dilate(z, eps).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdA {
    /// Largest level on the bisection grid satisfying the saturation condition.
    pub critical: f64,
    /// `safety_a * critical`, the value to put in the law.
    pub a: f64,
    /// Sampled `max |omega_k|` on `{V_k = a}`.
    pub max_omega_at_a: f64,
    pub l_r: f64,
    pub validated: bool,
}

fn max_abs_omega_on_level(dirs: &[Vec<f64>], inner: &ChainParams, gains: &GainSet, level: f64) -> f64 {
    dirs.iter()
        .filter_map(|z| to_level_set(z, inner, gains, level))
        .map(|z| crate::control::nominal_control(&z, inner, gains).abs())
        .fold(0.0, f64::max)
}

/// Largest `A` with `max_{V_k = A} |omega_k| <= l_r`, found by bisection on `ln A`,
/// then scaled by `safety_a`.
pub fn find_a(base: &ChainParams, gains: &GainSet, inner_kappa: f64, cfg: &SynthConfig) -> Result<ThresholdA> {
    let r = base.order();
    gains.validate(r)?;
    if !(inner_kappa > -1.0 / r as f64 && inner_kappa < 0.0) {
        return Err(Error::Synthesis(format!("inner kappa {inner_kappa} outside (-1/r, 0)")));
    }
    let inner = base.with_kappa(inner_kappa)?;
    let l_r = gains.l[r - 1];
    let dirs = sphere_sample(r, cfg.sphere_n, &inner, cfg.seed);
    let ok = |level: f64| max_abs_omega_on_level(&dirs, &inner, gains, level) <= l_r;
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    if !ok(lo.exp()) {
        return Err(Error::Synthesis("saturation condition fails even for tiny A; gains are inconsistent".into()));
    }
    if ok(hi.exp()) {
        lo = hi;
    } else {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ok(mid.exp()) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let critical = lo.exp();
    let a = cfg.safety_a * critical;
    let max_omega_at_a = max_abs_omega_on_level(&dirs, &inner, gains, a);
    Ok(ThresholdA {
        critical,
        a,
        max_omega_at_a,
        l_r,
        validated: max_omega_at_a <= l_r,
    })
}

/// Re-checks the saturation condition for a given `A` with a fresh sample.
pub fn validate_a(base: &ChainParams, gains: &GainSet, inner_kappa: f64, a: f64, sphere_n: usize, seed: u64) -> Result<(bool, f64)> {
    let inner = base.with_kappa(inner_kappa)?;
    let dirs = sphere_sample(base.order(), sphere_n, &inner, seed);
    let m = max_abs_omega_on_level(&dirs, &inner, gains, a);
    Ok((m <= gains.l[base.order() - 1], m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelE {
    pub e: f64,
    pub raw: f64,
    pub point: Vec<f64>,
}

/// `E = min_{V_k(z) = B} V_{-k}(z)`.
pub fn find_e(base: &ChainParams, gains: &GainSet, inner_kappa: f64, b: f64, cfg: &SynthConfig) -> Result<LevelE> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Synthesis(format!("level B = {b} must be positive")));
    }
    let inner = base.with_kappa(inner_kappa)?;
    let outer = base.with_kappa(-inner_kappa)?;
    let neg_outer = |y: &[f64]| {
        let z = project_to_sphere(y, &inner)?;
        let z = to_level_set(&z, &inner, gains, b)?;
        Some(-lyapunov(&z, &outer, gains))
    };
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for z in sphere_sample(base.order(), cfg.sphere_n, &inner, cfg.seed) {
        if let Some(v) = neg_outer(&z) {
            if v > best.0 {
                best = (v, z);
            }
        }
    }
    let raw = -best.0;
    let (pol, y) = polish(&neg_outer, &best.1, cfg.polish_iters);
    let e = -pol.max(best.0);
    let point = project_to_sphere(&y, &inner)
        .and_then(|z| to_level_set(&z, &inner, gains, b))
        .unwrap_or_default();
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::Synthesis(format!("level-set minimum E = {e} is not positive")));
    }
    Ok(LevelE { e, raw, point })
}

/// `(T_u, T_f)` with `T_u = E^{k/(c+1)} / ((-k/(c+1)) C_outer)` and
/// `T_f = B^{-k/(c+1)} / ((-k/(c+1)) C_inner)`.
pub fn fixed_time_bound(e: f64, b: f64, c_outer: f64, c_inner: f64, c: f64, k: f64) -> Result<(f64, f64)> {
    if !(e > 0.0 && b > 0.0 && c_outer > 0.0 && c_inner > 0.0 && c > 0.0 && k < 0.0) {
        return Err(Error::Synthesis(format!(
            "fixed-time bound needs E, B, C > 0 and k < 0 (E={e}, B={b}, C_outer={c_outer}, C_inner={c_inner}, k={k})"
        )));
    }
    let rate = -k / (c + 1.0);
    Ok((e.powf(k / (c + 1.0)) / (rate * c_outer), b.powf(rate) / (rate * c_inner)))
}

/// Everything needed to evaluate the fixed-time bound for `U_{k,B}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedTimeCertificate {
    pub inner_kappa: f64,
    pub b: f64,
    pub e: f64,
    /// Sampled decay constant of `V_{-k}` under `omega_{-k}`.
    pub c_outer: f64,
    /// Sampled decay constant of `V_k` under `omega_k`.
    pub c_inner: f64,
    pub t_u: Option<f64>,
    pub t_f: Option<f64>,
    /// `T_u + T_f`, absent when either decay constant is not positive.
    pub bound: Option<f64>,
    pub note: Option<String>,
}

/// Estimates `E`, both decay constants and, when they are positive, `T_u + T_f`.
pub fn fixed_time_certificate(
    base: &ChainParams,
    gains: &GainSet,
    inner_kappa: f64,
    b: f64,
    cfg: &SynthConfig,
) -> Result<FixedTimeCertificate> {
    let inner = base.with_kappa(inner_kappa)?;
    let outer = base.with_kappa(-inner_kappa)?;
    let e = find_e(base, gains, inner_kappa, b, cfg)?.e;
    let c_outer = verify_gains(&outer, gains, cfg.sphere_n, cfg.seed).c_estimate;
    let c_inner = verify_gains(&inner, gains, cfg.sphere_n, cfg.seed).c_estimate;
    let mut cert = FixedTimeCertificate {
        inner_kappa,
        b,
        e,
        c_outer,
        c_inner,
        t_u: None,
        t_f: None,
        bound: None,
        note: None,
    };
    match fixed_time_bound(e, b, c_outer, c_inner, base.c(), inner_kappa) {
        Ok((t_u, t_f)) => {
            cert.t_u = Some(t_u);
            cert.t_f = Some(t_f);
            cert.bound = Some(t_u + t_f);
        }
        Err(err) => cert.note = Some(err.to_string()),
    }
    Ok(cert)
}
