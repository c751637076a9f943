//! Nested homogeneous controller `omega_kappa`, its Lyapunov function `V_kappa`,
//! and the robustified, relay, minimum-amplitude and fixed-time variants.

use serde::{Deserialize, Serialize};

use crate::algebra::{abs_power, random_dilations, sgn, signed_power, sphere_sample, ChainParams};
use crate::error::{Error, Result};

/// Gains of the nested controller plus the synthesis constants that certify them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub l: Vec<f64>,
    /// Per-stage decay constants `k_i`; empty when the gains were chosen by hand.
    #[serde(default)]
    pub k: Vec<f64>,
    /// Decay constant `C` in `dV/dt <= -C V^{(c+1+kappa)/(c+1)}`, if estimated.
    #[serde(default)]
    pub decay: Option<f64>,
    /// Per-stage margins `eta_i = l_i / (2 k_i^{c/(c+1)})`.
    #[serde(default)]
    pub eta: Vec<f64>,
}

impl GainSet {
    pub fn from_l(l: Vec<f64>) -> Self {
        Self {
            l,
            k: Vec::new(),
            decay: None,
            eta: Vec::new(),
        }
    }

    pub fn validate(&self, r: usize) -> Result<()> {
        if self.l.len() != r {
            return Err(Error::InvalidGains(format!(
                "expected {r} gains, got {}",
                self.l.len()
            )));
        }
        if let Some(i) = self.l.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidGains(format!("l_{} = {} is not positive", i + 1, self.l[i])));
        }
        if let Some(c) = self.decay {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidGains(format!("decay constant {c} is not positive")));
            }
        }
        Ok(())
    }
}

/// Intermediate quantities of the recursion `v_i = -l_i N_i sgn(z_i - v_{i-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedEval {
    /// `v_1 .. v_r`; `v_r` is the control `omega_kappa(z)`.
    pub v: Vec<f64>,
    /// `N_1 .. N_r`.
    pub n: Vec<f64>,
    /// `sgn(z_i - v_{i-1})`, possibly saturated inside a boundary layer.
    pub sigma: Vec<f64>,
    /// Partial sums `S_i = Gamma_i(z)^c`.
    pub sums: Vec<f64>,
}

impl NestedEval {
    pub fn omega(&self) -> f64 {
        *self.v.last().expect("non-empty chain")
    }

    /// `v_{i-1}` for 0-based stage `i`, with `v_0 = 0`.
    pub fn v_prev(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.v[i - 1]
        }
    }
}

/// Sign function used inside the control laws.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "width")]
pub enum SignMode {
    #[default]
    Discontinuous,
    /// `sat(x / width)`.
    BoundaryLayer(f64),
}

impl SignMode {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            SignMode::Discontinuous => sgn(x),
            SignMode::BoundaryLayer(w) => (x / w).clamp(-1.0, 1.0),
        }
    }
}

/// Exponent `(p_i + kappa)/c` of `N_i`, computed as `(1 + i kappa)/c` so that
/// `kappa = -1/r` gives an exactly vanishing exponent at the last stage.
#[inline]
fn n_exponent(params: &ChainParams, stage: usize) -> f64 {
    (1.0 + (stage + 1) as f64 * params.kappa()) / params.c()
}

pub fn nested_eval(z: &[f64], params: &ChainParams, gains: &GainSet, sign: SignMode) -> NestedEval {
    nested_eval_prefix(z, params, &gains.l, sign)
}

/// Runs the recursion on a prefix of length `z.len()` using the first `z.len()` gains.
pub fn nested_eval_prefix(z: &[f64], params: &ChainParams, l: &[f64], sign: SignMode) -> NestedEval {
    let r = z.len();
    let p = params.weights();
    let c = params.c();
    let mut out = NestedEval {
        v: Vec::with_capacity(r),
        n: Vec::with_capacity(r),
        sigma: Vec::with_capacity(r),
        sums: Vec::with_capacity(r),
    };
    let mut s = 0.0;
    let mut v_prev = 0.0;
    for i in 0..r {
        s += abs_power(z[i], c / p[i]);
        let ni = abs_power(s, n_exponent(params, i));
        let sigma = sign.apply(z[i] - v_prev);
        let vi = -l[i] * ni * sigma;
        out.sums.push(s);
        out.n.push(ni);
        out.sigma.push(sigma);
        out.v.push(vi);
        v_prev = vi;
    }
    out
}

/// `omega_kappa(z) = v_r`.
pub fn nominal_control(z: &[f64], params: &ChainParams, gains: &GainSet) -> f64 {
    nested_eval(z, params, gains, SignMode::Discontinuous).omega()
}

/// Per-stage pieces `W_i` and `W̄_i = W_i^{delta_i}` of the Lyapunov function.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovPieces {
    pub w: Vec<f64>,
    pub w_bar: Vec<f64>,
    pub nested: NestedEval,
}

impl LyapunovPieces {
    pub fn value(&self) -> f64 {
        self.w_bar.iter().sum()
    }
}

/// `delta_i = (c + 1)/(c + p_i)`.
#[inline]
pub fn stage_delta(params: &ChainParams, i: usize) -> f64 {
    (params.c() + 1.0) / (params.c() + params.weights()[i])
}

/// Closed-form antiderivative `W_i` for 0-based stage `i`.
#[inline]
fn stage_w(z: &[f64], params: &ChainParams, nested: &NestedEval, i: usize) -> f64 {
    let p = params.weights();
    let c = params.c();
    let s_prev = if i == 0 { 0.0 } else { nested.sums[i - 1] };
    let vp = nested.v_prev(i);
    let q = c / p[i] + 1.0;
    s_prev * (z[i] - vp).abs() + (signed_power(z[i], q) - signed_power(vp, q)).abs() / q
}

pub fn lyapunov_pieces(z: &[f64], params: &ChainParams, l: &[f64]) -> LyapunovPieces {
    let nested = nested_eval_prefix(z, params, l, SignMode::Discontinuous);
    let mut w = Vec::with_capacity(z.len());
    let mut w_bar = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let wi = stage_w(z, params, &nested, i);
        w.push(wi);
        w_bar.push(abs_power(wi, stage_delta(params, i)));
    }
    LyapunovPieces { w, w_bar, nested }
}

/// `V_kappa(z) = sum_i W̄_i(z)`, evaluated on the prefix `z` (so `V_i` for shorter slices).
pub fn lyapunov(z: &[f64], params: &ChainParams, gains: &GainSet) -> f64 {
    lyapunov_pieces(z, params, &gains.l[..z.len()]).value()
}

/// Analytic partial derivatives away from the switching surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGrad {
    /// `dW̄_i/dz_j` stored row-major: `stage[i][j]` for `j <= i`.
    pub stage: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub pieces: LyapunovPieces,
    /// True when some `W_i` vanished and `delta_i < 1` made its derivative unbounded.
    pub singular: bool,
}

pub fn lyapunov_grad_analytic(z: &[f64], params: &ChainParams, l: &[f64]) -> AnalyticGrad {
    let r = z.len();
    let p = params.weights();
    let c = params.c();
    let pieces = lyapunov_pieces(z, params, l);
    let nested = &pieces.nested;

    // dS_j/dz_j contributions and dv_i/dz_j for j <= i
    let ds: Vec<f64> = (0..r).map(|j| (c / p[j]) * signed_power(z[j], c / p[j] - 1.0)).collect();
    let mut dv = vec![vec![0.0; r]; r];
    for i in 0..r {
        let a = n_exponent(params, i);
        let si = nested.sums[i];
        if a == 0.0 || si <= 0.0 {
            continue;
        }
        let coef = -l[i] * nested.sigma[i] * a * si.powf(a - 1.0);
        for j in 0..=i {
            dv[i][j] = coef * ds[j];
        }
    }

    let mut singular = false;
    let mut stage = Vec::with_capacity(r);
    let mut total = vec![0.0; r];
    for i in 0..r {
        let mut dw = vec![0.0; i + 1];
        let sigma = sgn(z[i] - nested.v_prev(i));
        let s_prev = if i == 0 { 0.0 } else { nested.sums[i - 1] };
        let e = (z[i] - nested.v_prev(i)).abs();
        let vp = nested.v_prev(i);
        for j in 0..i {
            dw[j] = ds[j] * e - sigma * (s_prev + abs_power(vp, c / p[i])) * dv[i - 1][j];
        }
        dw[i] = sigma * nested.sums[i];

        let delta = stage_delta(params, i);
        let wi = pieces.w[i];
        let factor = if wi > 0.0 {
            delta * wi.powf(delta - 1.0)
        } else {
            if delta < 1.0 {
                singular = true;
            }
            0.0
        };
        for (j, d) in dw.iter_mut().enumerate() {
            *d *= factor;
            total[j] += *d;
        }
        stage.push(dw);
    }
    AnalyticGrad {
        stage,
        total,
        pieces,
        singular,
    }
}

/// Central finite-difference gradient of `V` with kink detection.
#[derive(Debug, Clone, PartialEq)]
pub struct FdGrad {
    pub grad: Vec<f64>,
    pub steps: Vec<f64>,
    /// Some `|z_i - v_{i-1}| < 2 h_i`: the stencil straddles a switching surface.
    pub near_kink: bool,
}

/// Step `h_i = 1e-5 max(1, Gamma_r(z)^{p_i})`.
pub fn fd_steps(z: &[f64], params: &ChainParams) -> Vec<f64> {
    let g = params.hom_norm(z);
    params.weights()[..z.len()]
        .iter()
        .map(|pi| 1e-5 * g.powf(*pi).max(1.0))
        .collect()
}

pub fn lyapunov_grad(z: &[f64], params: &ChainParams, gains: &GainSet) -> FdGrad {
    let steps = fd_steps(z, params);
    lyapunov_grad_with_steps(z, params, gains, &steps)
}

pub fn lyapunov_grad_with_steps(z: &[f64], params: &ChainParams, gains: &GainSet, steps: &[f64]) -> FdGrad {
    let l = &gains.l[..z.len()];
    let nested = nested_eval_prefix(z, params, l, SignMode::Discontinuous);
    let near_kink = (0..z.len()).any(|i| (z[i] - nested.v_prev(i)).abs() < 2.0 * steps[i]);
    let mut grad = Vec::with_capacity(z.len());
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        let h = steps[i];
        zp[i] = z[i] + h;
        let up = lyapunov_pieces(&zp, params, l).value();
        zp[i] = z[i] - h;
        let dn = lyapunov_pieces(&zp, params, l).value();
        zp[i] = z[i];
        grad.push((up - dn) / (2.0 * h));
    }
    FdGrad {
        grad,
        steps: steps.to_vec(),
        near_kink,
    }
}

/// Constants of the robustifying map `u = (m/gamma_m)(omega + n phi_bar sgn(omega))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Robustifier {
    pub m: f64,
    pub n: f64,
    pub phi_bar: f64,
    pub gamma_m: f64,
}

impl Robustifier {
    pub fn new(phi_bar: f64, gamma_m: f64) -> Self {
        Self {
            m: 1.0,
            n: 1.0,
            phi_bar,
            gamma_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 1.0 && self.n >= 1.0) {
            return Err(Error::InvalidLaw(format!("m = {}, n = {} must both be >= 1", self.m, self.n)));
        }
        if !(self.gamma_m.is_finite() && self.gamma_m > 0.0) {
            return Err(Error::InvalidLaw(format!("gamma_m = {} must be positive", self.gamma_m)));
        }
        if !(self.phi_bar.is_finite() && self.phi_bar >= 0.0) {
            return Err(Error::InvalidLaw(format!("phi_bar = {} must be non-negative", self.phi_bar)));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, omega: f64, sign: SignMode) -> f64 {
        (self.m / self.gamma_m) * (omega + self.n * self.phi_bar * sign.apply(omega))
    }

    /// `M_min = phi_bar / gamma_m`.
    pub fn min_amplitude(&self) -> f64 {
        self.phi_bar / self.gamma_m
    }

    /// Relay amplitude `M = m (l_r + n phi_bar) / gamma_m`.
    pub fn relay_amplitude(&self, l_r: f64) -> f64 {
        self.m * (l_r + self.n * self.phi_bar) / self.gamma_m
    }
}

/// Robustified nominal law.
pub fn robust_control(z: &[f64], params: &ChainParams, gains: &GainSet, rob: &Robustifier) -> f64 {
    rob.apply(nominal_control(z, params, gains), SignMode::Discontinuous)
}

/// Relay form `u = -M sgn(phi_{r-1})` with `phi_0 = z_1`,
/// `phi_i = z_{i+1} + l_i N_i sgn(phi_{i-1})`, all at `kappa = -1/r`.
pub fn relay_control(z: &[f64], params: &ChainParams, gains: &GainSet, rob: &Robustifier, sign: SignMode) -> f64 {
    let relay = params.relay();
    let r = z.len();
    let p = relay.weights();
    let c = relay.c();
    let mut s = abs_power(z[0], c / p[0]);
    let mut phi = z[0];
    for i in 1..r {
        // N_i of stage i (1-based) uses the prefix z_1..z_i
        let ni = abs_power(s, (r - i) as f64 / (r as f64 * c));
        phi = z[i] + gains.l[i - 1] * ni * sign.apply(phi);
        s += abs_power(z[i], c / p[i]);
    }
    -rob.relay_amplitude(gains.l[r - 1]) * sign.apply(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Single,
    Inner,
    Outer,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Single => "single",
            Branch::Inner => "inner",
            Branch::Outer => "outer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Nominal,
    Robust,
    Relay,
    MinAmplitude,
    FixedTime,
}

impl Variant {
    pub fn is_switching(self) -> bool {
        matches!(self, Variant::MinAmplitude | Variant::FixedTime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LawOutput {
    pub u: f64,
    /// The homogeneous part before robustification (`omega` or `U_{k,A}`, `U_{k,B}`).
    pub omega: f64,
    pub branch: Branch,
}

/// An immutable, validated control law.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    variant: Variant,
    /// Degree used by single-branch laws; for switching laws this is the inner branch.
    params: ChainParams,
    /// Outer branch for switching laws.
    outer: Option<ChainParams>,
    gains: GainSet,
    rob: Robustifier,
    threshold: Option<f64>,
    sign: SignMode,
}

fn check_inner_kappa(r: usize, k: f64) -> Result<()> {
    let lo = -1.0 / r as f64;
    if !(k > lo && k < 0.0) {
        return Err(Error::InvalidLaw(format!("inner kappa {k} must lie in ({lo}, 0)")));
    }
    Ok(())
}

fn check_threshold(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidLaw(format!("threshold {t} must be positive")));
    }
    Ok(())
}

impl ControlLaw {
    pub fn nominal(params: ChainParams, gains: GainSet) -> Result<Self> {
        gains.validate(params.order())?;
        Ok(Self {
            variant: Variant::Nominal,
            params,
            outer: None,
            gains,
            rob: Robustifier {
                m: 1.0,
                n: 1.0,
                phi_bar: 0.0,
                gamma_m: 1.0,
            },
            threshold: None,
            sign: SignMode::Discontinuous,
        })
    }

    pub fn robust(params: ChainParams, gains: GainSet, rob: Robustifier) -> Result<Self> {
        gains.validate(params.order())?;
        rob.validate()?;
        Ok(Self {
            variant: Variant::Robust,
            params,
            outer: None,
            gains,
            rob,
            threshold: None,
            sign: SignMode::Discontinuous,
        })
    }

    /// Relay law; `params` only contributes `r` and `c`.
    pub fn relay(params: &ChainParams, gains: GainSet, rob: Robustifier) -> Result<Self> {
        gains.validate(params.order())?;
        rob.validate()?;
        Ok(Self {
            variant: Variant::Relay,
            params: params.relay(),
            outer: None,
            gains,
            rob,
            threshold: None,
            sign: SignMode::Discontinuous,
        })
    }

    /// `U_{k,A}`: relay branch while `V_k > A`, `omega_k` inside.
    ///
    /// `a_validated` is the outcome of checking the saturation condition for `a`;
    /// a failed validation is rejected.
    pub fn min_amplitude(
        base: &ChainParams,
        gains: GainSet,
        rob: Robustifier,
        inner_kappa: f64,
        a: f64,
        a_validated: bool,
    ) -> Result<Self> {
        let r = base.order();
        gains.validate(r)?;
        rob.validate()?;
        check_inner_kappa(r, inner_kappa)?;
        check_threshold(a)?;
        if !a_validated {
            return Err(Error::InvalidLaw(format!(
                "threshold A = {a} failed the saturation check max |omega_k| <= l_r"
            )));
        }
        Ok(Self {
            variant: Variant::MinAmplitude,
            params: base.with_kappa(inner_kappa)?,
            outer: Some(base.relay()),
            gains,
            rob,
            threshold: Some(a),
            sign: SignMode::Discontinuous,
        })
    }

    /// `U_{k,B}`: `omega_{-k}` while `V_k > B`, `omega_k` inside.
    pub fn fixed_time(base: &ChainParams, gains: GainSet, rob: Robustifier, inner_kappa: f64, b: f64) -> Result<Self> {
        let r = base.order();
        gains.validate(r)?;
        rob.validate()?;
        check_inner_kappa(r, inner_kappa)?;
        check_threshold(b)?;
        Ok(Self {
            variant: Variant::FixedTime,
            params: base.with_kappa(inner_kappa)?,
            outer: Some(base.with_kappa(-inner_kappa)?),
            gains,
            rob,
            threshold: Some(b),
            sign: SignMode::Discontinuous,
        })
    }

    pub fn with_sign_mode(mut self, sign: SignMode) -> Result<Self> {
        if let SignMode::BoundaryLayer(w) = sign {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidLaw(format!("boundary layer width {w} must be positive")));
            }
        }
        self.sign = sign;
        Ok(self)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Parameters of the Lyapunov function and norm attached to this law
    /// (the inner branch for switching laws).
    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn outer_params(&self) -> Option<&ChainParams> {
        self.outer.as_ref()
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    pub fn robustifier(&self) -> &Robustifier {
        &self.rob
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn order(&self) -> usize {
        self.params.order()
    }

    /// Lyapunov function attached to the law (`V_k` of the inner branch when switching).
    pub fn lyapunov(&self, z: &[f64]) -> f64 {
        lyapunov(z, &self.params, &self.gains)
    }

    /// Homogeneous norm used for settling checks.
    pub fn norm(&self, z: &[f64]) -> f64 {
        self.params.hom_norm(z)
    }

    pub fn evaluate(&self, z: &[f64]) -> LawOutput {
        match self.variant {
            Variant::Nominal => {
                let omega = nested_eval(z, &self.params, &self.gains, self.sign).omega();
                LawOutput {
                    u: omega,
                    omega,
                    branch: Branch::Single,
                }
            }
            Variant::Robust => {
                let omega = nested_eval(z, &self.params, &self.gains, self.sign).omega();
                LawOutput {
                    u: self.rob.apply(omega, self.sign),
                    omega,
                    branch: Branch::Single,
                }
            }
            Variant::Relay => {
                let u = relay_control(z, &self.params, &self.gains, &self.rob, self.sign);
                LawOutput {
                    u,
                    omega: self.gains.l[self.order() - 1] * sgn(u),
                    branch: Branch::Single,
                }
            }
            Variant::MinAmplitude | Variant::FixedTime => {
                let level = self.lyapunov(z);
                let threshold = self.threshold.expect("switching law has a threshold");
                let (branch, p) = if level > threshold {
                    (Branch::Outer, self.outer.as_ref().expect("switching law has an outer branch"))
                } else {
                    (Branch::Inner, &self.params)
                };
                let omega = nested_eval(z, p, &self.gains, self.sign).omega();
                LawOutput {
                    u: self.rob.apply(omega, self.sign),
                    omega,
                    branch,
                }
            }
        }
    }

    pub fn control(&self, z: &[f64]) -> f64 {
        self.evaluate(z).u
    }
}

/// Minimum-amplitude switched law evaluated directly.
pub fn min_amplitude_control(z: &[f64], law: &ControlLaw) -> Result<LawOutput> {
    if law.variant() != Variant::MinAmplitude {
        return Err(Error::InvalidLaw("expected a min_amplitude law".into()));
    }
    Ok(law.evaluate(z))
}

/// Fixed-time switched law evaluated directly.
pub fn fixed_time_control(z: &[f64], law: &ControlLaw) -> Result<LawOutput> {
    if law.variant() != Variant::FixedTime {
        return Err(Error::InvalidLaw("expected a fixed_time law".into()));
    }
    Ok(law.evaluate(z))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisViolation {
    pub z: Vec<f64>,
    pub value: f64,
}

/// Outcome of sampling the two sign/gradient conditions required for robustification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub samples: usize,
    /// Largest sampled `dV/dz_r * omega`.
    pub worst_product: f64,
    pub worst_point: Vec<f64>,
    pub tolerance: f64,
    pub violations: Vec<HypothesisViolation>,
    /// Points with `|omega| < tolerance` at which `|dV/dz_r|` was not also negligible.
    pub implication_violations: Vec<HypothesisViolation>,
    pub passed: bool,
}

const MAX_LISTED_VIOLATIONS: usize = 32;

/// Samples `S_r` (and random dilations of it) and checks
/// `dV/dz_r omega <= 0` and `omega = 0 => dV/dz_r = 0`.
pub fn check_hypotheses(params: &ChainParams, gains: &GainSet, n_samples: usize, seed: u64) -> HypothesisReport {
    let r = params.order();
    let tol = 1e-9;
    let mut pts = sphere_sample(r, n_samples, params, seed);
    let eps = random_dilations(n_samples / 4, 1e-2, 1e2, seed);
    let dilated: Vec<Vec<f64>> = pts
        .iter()
        .zip(&eps)
        .filter_map(|(z, e)| params.dilate(z, *e).ok())
        .collect();
    pts.extend(dilated);

    let mut worst = f64::NEG_INFINITY;
    let mut worst_point = Vec::new();
    let mut violations = Vec::new();
    let mut implication_violations = Vec::new();
    for z in &pts {
        let g = lyapunov_grad_analytic(z, params, &gains.l);
        let omega = g.pieces.nested.omega();
        let dvr = g.total[r - 1];
        // scale the product onto the unit sphere so the tolerance is dilation-free
        let gnorm = params.hom_norm(z);
        let degree = params.c() + 1.0 - params.weights()[r - 1] + 1.0 + r as f64 * params.kappa();
        let product = dvr * omega / gnorm.powf(degree);
        if product > worst {
            worst = product;
            worst_point = z.clone();
        }
        if product > tol && violations.len() < MAX_LISTED_VIOLATIONS {
            violations.push(HypothesisViolation {
                z: z.clone(),
                value: product,
            });
        }
        let dvr_scaled = dvr / gnorm.powf(params.c() + 1.0 - params.weights()[r - 1]);
        if omega.abs() < tol && dvr_scaled.abs() > tol.sqrt() && implication_violations.len() < MAX_LISTED_VIOLATIONS {
            implication_violations.push(HypothesisViolation {
                z: z.clone(),
                value: dvr_scaled,
            });
        }
    }
    let passed = worst <= tol && implication_violations.is_empty();
    HypothesisReport {
        samples: pts.len(),
        worst_product: worst,
        worst_point,
        tolerance: tol,
        violations,
        implication_violations,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn triple_gains() -> GainSet {
        GainSet::from_l(vec![1.0, 4.0, 7.0])
    }

    #[test]
    fn scalar_nominal_control() {
        for kappa in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let p = ChainParams::with_default_c(1, kappa).unwrap();
            let g = GainSet::from_l(vec![1.0]);
            assert_relative_eq!(nominal_control(&[1.0], &p, &g), -1.0, epsilon = 1e-14);
            let z = 0.3;
            assert_relative_eq!(
                nominal_control(&[z], &p, &g),
                -signed_power(z, 1.0 + kappa),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn origin_gives_zero_control() {
        for kappa in [-0.2, 0.0, 0.3] {
            let p = ChainParams::with_default_c(3, kappa).unwrap();
            assert_eq!(nominal_control(&[0.0; 3], &p, &triple_gains()), 0.0);
        }
    }

    #[test]
    fn relay_degree_has_unit_last_n() {
        let p = ChainParams::with_default_c(3, -1.0 / 3.0).unwrap();
        for z in [[0.3, -1.2, 0.7], [1e-3, 5.0, -2.0], [-4.0, 0.1, 0.0]] {
            let e = nested_eval(&z, &p, &triple_gains(), SignMode::Discontinuous);
            assert_eq!(e.n[2], 1.0);
            assert_relative_eq!(e.omega().abs(), 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn scalar_lyapunov() {
        let p = ChainParams::new(1, 0.0, 2.0).unwrap();
        let g = GainSet::from_l(vec![1.0]);
        assert_relative_eq!(lyapunov(&[1.0], &p, &g), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(lyapunov(&[0.0], &p, &g), 0.0);
        let p3 = ChainParams::with_default_c(3, -0.1).unwrap();
        assert_eq!(lyapunov(&[0.0; 3], &p3, &triple_gains()), 0.0);
    }

    /// Quadrature of `w_i` between `v_{i-1}` and `z_i` reproduces the closed form.
    #[test]
    fn closed_form_w_matches_quadrature() {
        let p = ChainParams::new(3, -0.2, 2.3).unwrap();
        let l = [1.0, 4.0, 7.0];
        for z in [[0.4, -0.9, 0.3], [-1.1, 0.2, 2.0], [0.05, 0.6, -0.8]] {
            let pieces = lyapunov_pieces(&z, &p, &l);
            for i in 0..3 {
                let vp = pieces.nested.v_prev(i);
                let s_prev = if i == 0 { 0.0 } else { pieces.nested.sums[i - 1] };
                let q = p.c() / p.weights()[i];
                let (a, b) = (vp.min(z[i]), vp.max(z[i]));
                let m = 200_000;
                let h = (b - a) / m as f64;
                let mut acc = 0.0;
                for k in 0..m {
                    let s = a + (k as f64 + 0.5) * h;
                    acc += s_prev + abs_power(s, q);
                }
                assert_relative_eq!(pieces.w[i], acc * h, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn scalar_gradient() {
        let p = ChainParams::new(1, 0.0, 2.0).unwrap();
        let g = GainSet::from_l(vec![1.0]);
        let fd = lyapunov_grad(&[1.0], &p, &g);
        assert_relative_eq!(fd.grad[0], 1.0, epsilon = 1e-9);
        assert!(!fd.near_kink);
        let an = lyapunov_grad_analytic(&[1.0], &p, &g.l);
        assert_relative_eq!(an.total[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn richardson_ratio_of_central_stencil() {
        let p = ChainParams::new(2, -0.25, 2.0).unwrap();
        let g = GainSet::from_l(vec![1.0, 3.0]);
        let z = [0.7, 0.4];
        let exact = lyapunov_grad_analytic(&z, &p, &g.l).total;
        let base = fd_steps(&z, &p).iter().map(|h| h * 1e3).collect::<Vec<_>>();
        let e1 = lyapunov_grad_with_steps(&z, &p, &g, &base);
        let half: Vec<f64> = base.iter().map(|h| h / 2.0).collect();
        let e2 = lyapunov_grad_with_steps(&z, &p, &g, &half);
        for i in 0..2 {
            let ratio = (e1.grad[i] - exact[i]) / (e2.grad[i] - exact[i]);
            assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
        }
    }

    #[test]
    fn analytic_gradient_matches_fd_away_from_kinks() {
        let l = [1.0, 4.0, 7.0];
        for kappa in [-1.0 / 3.0, -0.1, 0.0, 0.2] {
            let p = ChainParams::new(3, kappa, 2.7).unwrap();
            let g = GainSet::from_l(l.to_vec());
            for z in sphere_sample(3, 200, &p, 1) {
                let fd = lyapunov_grad(&z, &p, &g);
                if fd.near_kink {
                    continue;
                }
                let an = lyapunov_grad_analytic(&z, &p, &l);
                if an.singular {
                    continue;
                }
                for i in 0..3 {
                    let scale = an.total.iter().fold(1.0f64, |a, b| a.max(b.abs()));
                    assert!(
                        (fd.grad[i] - an.total[i]).abs() <= 1e-5 * scale,
                        "kappa {kappa} z {z:?} i {i}: fd {} an {}",
                        fd.grad[i],
                        an.total[i]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_degree() {
        let p = ChainParams::new(3, -0.15, 2.5).unwrap();
        let g = GainSet::from_l(vec![1.0, 4.0, 7.0]);
        let z = [0.4, -0.3, 0.5];
        let eps: f64 = 3.0;
        let a = lyapunov_grad_analytic(&z, &p, &g.l).total;
        let b = lyapunov_grad_analytic(&p.dilate(&z, eps).unwrap(), &p, &g.l).total;
        for i in 0..3 {
            let expect = eps.powf(p.c() + 1.0 - p.weights()[i]) * a[i];
            assert_relative_eq!(b[i], expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn robust_control_examples() {
        let p = ChainParams::with_default_c(3, -1.0 / 3.0).unwrap();
        let rob = Robustifier::new(1.0, 2.0);
        assert_eq!(robust_control(&[0.0; 3], &p, &triple_gains(), &rob), 0.0);
        for z in sphere_sample(3, 50, &p, 2) {
            let omega = nominal_control(&z, &p, &triple_gains());
            let u = robust_control(&z, &p, &triple_gains(), &rob);
            if omega != 0.0 {
                assert_relative_eq!(u.abs(), 4.0, epsilon = 1e-12);
                assert_eq!(sgn(u), sgn(omega));
            }
        }
    }

    #[test]
    fn relay_amplitude_and_axis_point() {
        let p = ChainParams::with_default_c(3, -1.0 / 3.0).unwrap();
        let rob = Robustifier::new(1.0, 2.0);
        assert_eq!(rob.relay_amplitude(7.0), 4.0);
        let u = relay_control(&[0.5, 0.0, 0.0], &p, &triple_gains(), &rob, SignMode::Discontinuous);
        assert_eq!(u, -4.0);
        let u1 = relay_control(&[-2.0], &ChainParams::with_default_c(1, -1.0).unwrap(), &GainSet::from_l(vec![3.0]), &rob, SignMode::Discontinuous);
        assert_eq!(u1, 2.0);
    }

    #[test]
    fn min_amplitude_rejects_unvalidated_threshold() {
        let p = ChainParams::new(3, -1.0 / 3.0, 2.0).unwrap();
        let rob = Robustifier::new(1.0, 2.0);
        assert!(ControlLaw::min_amplitude(&p, triple_gains(), rob, -0.125, 0.1, false).is_err());
        assert!(ControlLaw::min_amplitude(&p, triple_gains(), rob, -0.5, 0.1, true).is_err());
        assert!(ControlLaw::min_amplitude(&p, triple_gains(), rob, -0.125, 0.0, true).is_err());
        let law = ControlLaw::min_amplitude(&p, triple_gains(), rob, -0.125, 0.1, true).unwrap();
        assert!(min_amplitude_control(&[0.1, 0.0, 0.0], &law).is_ok());
        assert!(fixed_time_control(&[0.1, 0.0, 0.0], &law).is_err());
    }

    #[test]
    fn switching_branches_follow_threshold() {
        let base = ChainParams::new(3, -1.0 / 3.0, 2.0).unwrap();
        let rob = Robustifier::new(1.0, 2.0);
        let law = ControlLaw::min_amplitude(&base, triple_gains(), rob, -0.125, 0.05, true).unwrap();
        let relay = ControlLaw::relay(&base, triple_gains(), rob).unwrap();
        for z in sphere_sample(3, 100, &base, 9) {
            let z = base.dilate(&z, 2.0).unwrap();
            let out = law.evaluate(&z);
            if law.lyapunov(&z) > 0.05 {
                assert_eq!(out.branch, Branch::Outer);
                assert_relative_eq!(out.u, relay.control(&z), epsilon = 1e-12);
            } else {
                assert_eq!(out.branch, Branch::Inner);
            }
        }
        let tiny = [1e-6, 0.0, 0.0];
        let out = law.evaluate(&tiny);
        assert_eq!(out.branch, Branch::Inner);
        assert!((out.u.abs() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn fixed_time_far_field_grows() {
        let base = ChainParams::new(3, -0.25, 2.5).unwrap();
        let rob = Robustifier::new(1.0, 2.0);
        let law = ControlLaw::fixed_time(&base, triple_gains(), rob, -0.25, 1.0).unwrap();
        let z = [1.0, 0.3, -0.2];
        let u1 = law.control(&base.dilate(&z, 10.0).unwrap()).abs();
        let u2 = law.control(&base.dilate(&z, 1000.0).unwrap()).abs();
        assert!(u2 > 100.0 * u1);
        // inside the threshold both switching laws share the inner expression
        let inner = law.evaluate(&[1e-3, 0.0, 0.0]);
        assert_eq!(inner.branch, Branch::Inner);
        let other = ControlLaw::min_amplitude(&base, triple_gains(), rob, -0.25, 1.0, true).unwrap();
        assert_eq!(inner.u, other.control(&[1e-3, 0.0, 0.0]));
    }

    #[test]
    fn hypotheses_scalar_and_corrupted() {
        let p = ChainParams::new(1, 0.0, 2.0).unwrap();
        let rep = check_hypotheses(&p, &GainSet::from_l(vec![1.0]), 200, 1);
        assert!(rep.passed);
        assert!(rep.worst_product <= 0.0);

        let p2 = ChainParams::with_default_c(2, -0.25).unwrap();
        let bad = GainSet::from_l(vec![1.0, -3.0]);
        let rep = check_hypotheses(&p2, &bad, 500, 1);
        assert!(!rep.passed);
        assert!(!rep.violations.is_empty());
    }

    #[test]
    fn gain_validation() {
        assert!(GainSet::from_l(vec![1.0, 2.0]).validate(2).is_ok());
        assert!(GainSet::from_l(vec![1.0, -2.0]).validate(2).is_err());
        assert!(GainSet::from_l(vec![1.0]).validate(2).is_err());
    }
}
