//! Scenario documents for the command-line front end.
//!
//! A scenario is a JSON object. When it names a `preset`, the preset is expanded
//! first and the document is deep-merged over it; dotted `path=value` overrides
//! are applied last. [`resolve`] turns the result into a validated law, model and
//! simulation setup, and the `run_*` functions produce the reports the CLI writes.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::algebra::{check_kappa, chain_weights, sphere_sample, ChainParams};
use crate::control::{check_hypotheses, ControlLaw, GainSet, HypothesisReport, Robustifier, SignMode, Variant};
use crate::error::{Error, Result};
use crate::sim::{
    amplitude_probe, settling_sweep, simulate, Perturbation, PerturbationModel, SimConfig, SweepEntry, Trajectory,
};
use crate::synth::{
    find_a, fixed_time_certificate, synthesize_gains, validate_a, verify_gains, DecayReport, FixedTimeCertificate,
    GainStage, KappaFamily, SynthConfig, ThresholdA,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Upper limit on sweep sizes accepted from a z0 spec.
pub const MAX_SWEEP_POINTS: usize = 100_000;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Name of the preset this document was expanded from, if any.
    #[serde(default)]
    pub preset: Option<String>,
    /// Drives gain synthesis, certificate sampling and random sweep directions.
    #[serde(default)]
    pub seed: u64,
    pub chain: ChainConfig,
    pub law: LawConfig,
    pub gains: GainsConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sim: SimConfig,
    pub z0: Vec<f64>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub synth: SynthSettings,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub order: usize,
    /// Homogeneity degree. Required by `nominal` and `robust`; optional elsewhere,
    /// where it must agree with the law.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Norm exponent; `null` picks the default for the law.
    #[serde(default)]
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoKeyword {
    #[serde(rename = "auto")]
    Auto,
}

/// A switching level, either given or computed (`"auto"`, minimum-amplitude only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Threshold {
    Value(f64),
    Auto(AutoKeyword),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub variant: Variant,
    #[serde(default = "one")]
    pub m: f64,
    #[serde(default = "one")]
    pub n: f64,
    #[serde(default)]
    pub inner_kappa: Option<f64>,
    /// `A` for `min_amplitude`, `B` for `fixed_time`.
    #[serde(default)]
    pub threshold: Option<Threshold>,
    /// Saturation width replacing `sgn`; `null` keeps the discontinuous law.
    #[serde(default)]
    pub boundary_layer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum GainsConfig {
    Manual { l: Vec<f64> },
    Synthesized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub signal: Perturbation,
    /// Bounds default to the exact ones of the signal.
    #[serde(default)]
    pub phi_bar: Option<f64>,
    #[serde(default)]
    pub gamma_m: Option<f64>,
    #[serde(default)]
    pub gamma_max: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            signal: Perturbation::SinCos,
            phi_bar: None,
            gamma_m: None,
            gamma_max: None,
        }
    }
}

impl ModelConfig {
    /// `(phi_bar, gamma_m, gamma_M)` of the signal itself. Piecewise-linear tables
    /// attain their extremes at the knots, so these are exact.
    fn signal_bounds(&self) -> (f64, f64, f64) {
        match &self.signal {
            Perturbation::SinCos => (1.0, 2.0, 4.0),
            Perturbation::Constant { phi, gamma } => (phi.abs(), *gamma, *gamma),
            Perturbation::Table { phi, gamma, .. } => (
                phi.iter().fold(0.0, |a, x| a.max(x.abs())),
                gamma.iter().cloned().fold(f64::INFINITY, f64::min),
                gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ),
        }
    }

    pub fn build(&self, t_max: f64) -> Result<PerturbationModel> {
        let (p, lo, hi) = self.signal_bounds();
        PerturbationModel::new(
            self.signal.clone(),
            self.phi_bar.unwrap_or(p),
            self.gamma_m.unwrap_or(lo),
            self.gamma_max.unwrap_or(hi),
            t_max,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// See [`Z0Spec`].
    pub z0_spec: Option<String>,
}

/// Sampling sizes for synthesis; the seed comes from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub sphere_n: usize,
    pub kappa_grid_n: usize,
    pub safety_l: f64,
    pub floor_l: f64,
    pub safety_a: f64,
    pub polish_iters: u64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            sphere_n: d.sphere_n,
            kappa_grid_n: d.kappa_grid_n,
            safety_l: d.safety_l,
            floor_l: d.floor_l,
            safety_a: d.safety_a,
            polish_iters: d.polish_iters,
        }
    }
}

impl SynthSettings {
    pub fn to_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            sphere_n: self.sphere_n,
            kappa_grid_n: self.kappa_grid_n,
            seed,
            safety_l: self.safety_l,
            floor_l: self.floor_l,
            safety_a: self.safety_a,
            polish_iters: self.polish_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub sphere_n: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { sphere_n: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    /// Write every `csv_stride`-th trajectory sample.
    pub csv_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: ".".into(),
            csv_stride: 10,
        }
    }
}

pub const PRESETS: [&str; 5] = [
    "paper-triple-posk",
    "paper-triple-negk",
    "paper-triple-relay",
    "paper-triple-minamp",
    "paper-triple-fixed",
];

fn triple(name: &str, variant: Variant) -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        preset: Some(name.into()),
        seed: 0,
        chain: ChainConfig {
            order: 3,
            kappa: None,
            c: None,
        },
        law: LawConfig {
            variant,
            m: 1.0,
            n: 1.0,
            inner_kappa: None,
            threshold: None,
            boundary_layer: None,
        },
        gains: GainsConfig::Manual { l: vec![1.0, 4.0, 7.0] },
        model: ModelConfig::default(),
        sim: SimConfig::default(),
        z0: vec![1.0, 0.0, 0.0],
        sweep: SweepConfig {
            z0_spec: Some("log:1e-2:1e3:24@0".into()),
        },
        synth: SynthSettings::default(),
        verify: VerifyConfig::default(),
        outputs: OutputConfig::default(),
    }
}

/// The triple-integrator scenarios with `l = (1, 4, 7)`, `phi = sin t`, `gamma = 3 + cos t`.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let mut s = match name {
        "paper-triple-posk" => triple(name, Variant::Robust),
        "paper-triple-negk" => triple(name, Variant::Robust),
        "paper-triple-relay" => triple(name, Variant::Relay),
        "paper-triple-minamp" => triple(name, Variant::MinAmplitude),
        "paper-triple-fixed" => triple(name, Variant::FixedTime),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}`; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    match name {
        "paper-triple-posk" => s.chain.kappa = Some(0.125),
        "paper-triple-negk" => s.chain.kappa = Some(-0.125),
        "paper-triple-relay" => s.chain.kappa = Some(-1.0 / 3.0),
        "paper-triple-minamp" => {
            s.law.inner_kappa = Some(-0.125);
            s.law.threshold = Some(Threshold::Auto(AutoKeyword::Auto));
        }
        _ => {
            s.law.inner_kappa = Some(-0.125);
            s.law.threshold = Some(Threshold::Value(1.0));
        }
    }
    Ok(s)
}

/// Recursive object merge; anything that is not an object on both sides is replaced.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// A parsed `a.b.c=value` override. The value is JSON when it parses as JSON and
/// a plain string otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

pub fn parse_override(s: &str) -> Result<Override> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` must look like path=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override `{s}` has an empty path")));
    }
    let mut path = Vec::new();
    for seg in key.split('.') {
        if seg.is_empty() || !seg.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
            return Err(Error::Config(format!("override path `{key}` has an invalid segment `{seg}`")));
        }
        path.push(seg.to_string());
    }
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Error::Config(format!("override `{key}` has no value")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(Override { path, value })
}

/// Sets `path` inside `doc`, creating intermediate objects. Array elements are
/// addressed by index; an index equal to the length appends.
pub fn apply_override(doc: &mut Value, ov: &Override) -> Result<()> {
    let dotted = ov.path.join(".");
    let mut cur = doc;
    for (depth, seg) in ov.path.iter().enumerate() {
        let last = depth + 1 == ov.path.len();
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(seg.clone(), ov.value.clone());
                    return Ok(());
                }
                map.entry(seg.clone()).or_insert(Value::Null)
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::Config(format!("override `{dotted}`: `{seg}` is not an array index")))?;
                if idx > items.len() {
                    return Err(Error::Config(format!(
                        "override `{dotted}`: index {idx} is past the end of an array of length {}",
                        items.len()
                    )));
                }
                if idx == items.len() {
                    items.push(Value::Null);
                }
                if last {
                    items[idx] = ov.value.clone();
                    return Ok(());
                }
                &mut items[idx]
            }
            _ => {
                return Err(Error::Config(format!(
                    "override `{dotted}`: `{seg}` is below a scalar value"
                )))
            }
        };
    }
    Ok(())
}

/// Where a scenario comes from, in increasing precedence after the document itself.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Replaces the document's `preset`.
    pub preset: Option<String>,
    /// The raw value of `HOSM_SEED`.
    pub env_seed: Option<String>,
    /// Applied in order after the environment seed.
    pub overrides: Vec<String>,
}

fn parse_document(text: &str) -> Result<Value> {
    let v: Value = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!("line {} column {}: {e}", e.line(), e.column()))
    })?;
    if !v.is_object() {
        return Err(Error::Config("scenario document must be a JSON object".into()));
    }
    Ok(v)
}

/// Expands the preset, merges the document, then applies the seed and overrides.
pub fn load_config(text: Option<&str>, opts: &LoadOptions) -> Result<ScenarioConfig> {
    let doc = match text {
        Some(t) => parse_document(t)?,
        None => Value::Object(Map::new()),
    };
    let name = match &opts.preset {
        Some(p) => Some(p.clone()),
        None => match doc.get("preset") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => return Err(Error::Config(format!("preset: expected a string, got {other}"))),
        },
    };
    let mut merged = match &name {
        Some(n) => {
            let mut base = serde_json::to_value(preset(n)?).expect("presets serialize");
            merge(&mut base, doc);
            base["preset"] = Value::String(n.clone());
            base
        }
        None if text.is_none() => return Err(Error::Config("no scenario document or preset given".into())),
        None => doc,
    };
    if let Some(raw) = &opts.env_seed {
        let seed: u64 = raw
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("HOSM_SEED = `{raw}` is not an unsigned integer")))?;
        merged["seed"] = Value::from(seed);
    }
    for s in &opts.overrides {
        apply_override(&mut merged, &parse_override(s)?)?;
    }
    from_value(merged)
}

fn from_value(v: Value) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            Error::Config(format!("document: {}", e.inner()))
        } else {
            Error::Config(format!("field `{path}`: {}", e.inner()))
        }
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

/// Parses a complete scenario document with no extra options.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig> {
    load_config(Some(text), &LoadOptions::default())
}

/// Serialized form used by `--dump-config`; re-parses to the same scenario.
pub fn dump_config(cfg: &ScenarioConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("scenario serializes");
    s.push('\n');
    s
}

/// A family of initial conditions for sweeps: Gamma values plus a direction rule.
///
/// Text form: `log:LO:HI:N` (N log-spaced values) or `list:G1,G2,...`, optionally
/// followed by `@SEED`. With a seed every entry gets its own quasi-random direction
/// on the unit sphere; without one all entries share the direction of `z0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Z0Spec {
    pub gammas: Vec<f64>,
    pub direction_seed: Option<u64>,
}

fn positive(s: &str, what: &str) -> Result<f64> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("z0 spec: {what} `{s}` is not a number")))?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Config(format!("z0 spec: {what} {x} must be positive and finite")));
    }
    Ok(x)
}

pub fn parse_z0_spec(s: &str) -> Result<Z0Spec> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::Config("z0 spec is empty".into()));
    }
    let (body, seed) = match s.split_once('@') {
        Some((b, seed)) => {
            let seed: u64 = seed
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("z0 spec: seed `{seed}` is not an unsigned integer")))?;
            (b.trim(), Some(seed))
        }
        None => (s, None),
    };
    let (kind, rest) = body
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("z0 spec `{s}` must start with `log:` or `list:`")))?;
    let gammas = match kind.trim() {
        "log" => {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Config("z0 spec: expected log:LO:HI:N".into()));
            }
            let lo = positive(parts[0], "LO")?;
            let hi = positive(parts[1], "HI")?;
            let n: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("z0 spec: N `{}` is not a count", parts[2])))?;
            if lo > hi {
                return Err(Error::Config(format!("z0 spec: LO {lo} exceeds HI {hi}")));
            }
            if n == 0 || n > MAX_SWEEP_POINTS {
                return Err(Error::Config(format!("z0 spec: N must lie in 1..={MAX_SWEEP_POINTS}")));
            }
            log_space(lo, hi, n)
        }
        "list" => {
            let g = rest
                .split(',')
                .map(|x| positive(x, "Gamma"))
                .collect::<Result<Vec<_>>>()?;
            if g.len() > MAX_SWEEP_POINTS {
                return Err(Error::Config(format!("z0 spec: at most {MAX_SWEEP_POINTS} entries")));
            }
            g
        }
        other => return Err(Error::Config(format!("z0 spec: unknown form `{other}`"))),
    };
    Ok(Z0Spec {
        gammas,
        direction_seed: seed,
    })
}

/// `n` log-spaced values with exact endpoints.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

impl Z0Spec {
    /// Initial conditions with `Gamma(z0) = gamma` under `params`.
    pub fn initial_conditions(&self, params: &ChainParams, z0: &[f64]) -> Result<Vec<Vec<f64>>> {
        let dirs: Vec<Vec<f64>> = match self.direction_seed {
            Some(seed) => sphere_sample(params.order(), self.gammas.len(), params, seed),
            None => {
                params.check_state(z0)?;
                let g = params.hom_norm(z0);
                if !(g > 0.0) {
                    return Err(Error::Config("z0 spec without a seed needs a nonzero z0 direction".into()));
                }
                return self.gammas.iter().map(|t| params.dilate(z0, t / g)).collect();
            }
        };
        dirs.iter().zip(&self.gammas).map(|(d, g)| params.dilate(d, *g)).collect()
    }
}

/// A scenario turned into runnable objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ScenarioConfig,
    /// Chain parameters of the law (inner branch for switching laws).
    pub params: ChainParams,
    pub gains: GainSet,
    pub synthesis: Option<Vec<GainStage>>,
    pub model: PerturbationModel,
    pub law: ControlLaw,
    /// Present when `A` was computed by the threshold search.
    pub threshold: Option<ThresholdA>,
}

fn law_kappas(cfg: &ScenarioConfig) -> Result<(f64, Vec<f64>)> {
    let r = cfg.chain.order;
    if r == 0 {
        return Err(Error::InvalidOrder(0));
    }
    let relay = -1.0 / r as f64;
    if let Some(k) = cfg.chain.kappa {
        check_kappa(r, k)?;
    }
    if let Some(k) = cfg.law.inner_kappa {
        check_kappa(r, k)?;
    }
    let agree = |given: Option<f64>, want: f64, what: &str| -> Result<()> {
        match given {
            Some(k) if (k - want).abs() > 1e-12 => Err(Error::Config(format!(
                "chain.kappa = {k} conflicts with {what} = {want}"
            ))),
            _ => Ok(()),
        }
    };
    let v = cfg.law.variant;
    if !v.is_switching() {
        if cfg.law.inner_kappa.is_some() {
            return Err(Error::Config(format!("law.inner_kappa does not apply to variant {v:?}")));
        }
        if cfg.law.threshold.is_some() {
            return Err(Error::Config(format!("law.threshold does not apply to variant {v:?}")));
        }
    }
    match v {
        Variant::Nominal | Variant::Robust => {
            let k = cfg
                .chain
                .kappa
                .ok_or_else(|| Error::Config(format!("chain.kappa is required for variant {v:?}")))?;
            Ok((k, vec![k]))
        }
        Variant::Relay => {
            agree(cfg.chain.kappa, relay, "the relay degree -1/r")?;
            Ok((relay, vec![relay]))
        }
        Variant::MinAmplitude | Variant::FixedTime => {
            let k = cfg
                .law
                .inner_kappa
                .ok_or_else(|| Error::Config(format!("law.inner_kappa is required for variant {v:?}")))?;
            agree(cfg.chain.kappa, k, "law.inner_kappa")?;
            if cfg.law.threshold.is_none() {
                return Err(Error::Config(format!("law.threshold is required for variant {v:?}")));
            }
            let other = if v == Variant::MinAmplitude { relay } else { -k };
            Ok((k, vec![k, other]))
        }
    }
}

/// Default `c`: one more than the largest weight the law will use.
fn default_c(r: usize, kappas: &[f64], synthesized: bool) -> f64 {
    if synthesized {
        return KappaFamily::default_c(r);
    }
    kappas
        .iter()
        .flat_map(|k| chain_weights(r, *k))
        .fold(f64::MIN, f64::max)
        + 1.0
}

/// Validates the scenario and builds every object the subcommands need.
pub fn resolve(cfg: &ScenarioConfig) -> Result<Resolved> {
    let (kappa, kappas) = law_kappas(cfg)?;
    let r = cfg.chain.order;
    let synthesized = matches!(cfg.gains, GainsConfig::Synthesized);
    let c = cfg.chain.c.unwrap_or_else(|| default_c(r, &kappas, synthesized));
    let params = ChainParams::new(r, kappa, c)?;
    for k in &kappas {
        params.with_kappa(*k)?;
    }
    params.check_state(&cfg.z0)?;
    cfg.sim.validate()?;
    let scfg = cfg.synth.to_config(cfg.seed);

    let (gains, synthesis) = match &cfg.gains {
        GainsConfig::Manual { l } => {
            let g = GainSet::from_l(l.clone());
            g.validate(r)?;
            (g, None)
        }
        GainsConfig::Synthesized => {
            let family = KappaFamily::new(r, c, scfg.kappa_grid_n)?;
            let (g, stages) = synthesize_gains(&family, &scfg)?;
            (g, Some(stages))
        }
    };

    let model = cfg.model.build(cfg.sim.t_max)?;
    let rob = Robustifier {
        m: cfg.law.m,
        n: cfg.law.n,
        phi_bar: model.phi_bar,
        gamma_m: model.gamma_m,
    };
    let mut threshold = None;
    let law = match cfg.law.variant {
        Variant::Nominal => ControlLaw::nominal(params.clone(), gains.clone())?,
        Variant::Robust => ControlLaw::robust(params.clone(), gains.clone(), rob)?,
        Variant::Relay => ControlLaw::relay(&params, gains.clone(), rob)?,
        Variant::MinAmplitude => {
            let (a, ok) = match cfg.law.threshold.expect("checked above") {
                Threshold::Auto(_) => {
                    let t = find_a(&params, &gains, kappa, &scfg)?;
                    let out = (t.a, t.validated);
                    threshold = Some(t);
                    out
                }
                Threshold::Value(a) => {
                    if !(a.is_finite() && a > 0.0) {
                        return Err(Error::Config(format!("law.threshold = {a} must be positive")));
                    }
                    validate_a(&params, &gains, kappa, a, scfg.sphere_n, scfg.seed)
                        .map(|(ok, _)| (a, ok))?
                }
            };
            ControlLaw::min_amplitude(&params, gains.clone(), rob, kappa, a, ok)?
        }
        Variant::FixedTime => {
            let b = match cfg.law.threshold.expect("checked above") {
                Threshold::Value(b) => b,
                Threshold::Auto(_) => {
                    return Err(Error::Config("law.threshold = \"auto\" is only available for min_amplitude".into()))
                }
            };
            ControlLaw::fixed_time(&params, gains.clone(), rob, kappa, b)?
        }
    };
    let law = match cfg.law.boundary_layer {
        Some(w) => law.with_sign_mode(SignMode::BoundaryLayer(w))?,
        None => law,
    };
    Ok(Resolved {
        config: cfg.clone(),
        params: law.params().clone(),
        gains,
        synthesis,
        model,
        law,
        threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub schema_version: u32,
    pub seed: u64,
    pub order: usize,
    pub c: f64,
    pub kappa_grid: Vec<f64>,
    pub gains: GainSet,
    pub stages: Vec<GainStage>,
    pub eta: Vec<f64>,
    pub eta_min: f64,
    pub c_lower_bound: f64,
    /// Decay check at every grid degree.
    pub validation: Vec<DecayReport>,
    pub passed: bool,
}

/// Synthesizes gains for the scenario's order and exponent, then verifies them
/// across the whole degree grid.
pub fn run_synth(cfg: &ScenarioConfig) -> Result<SynthesisReport> {
    let r = cfg.chain.order;
    if r == 0 {
        return Err(Error::InvalidOrder(0));
    }
    if let Some(k) = cfg.chain.kappa {
        check_kappa(r, k)?;
    }
    let c = cfg.chain.c.unwrap_or_else(|| KappaFamily::default_c(r));
    let scfg = cfg.synth.to_config(cfg.seed);
    let family = KappaFamily::new(r, c, scfg.kappa_grid_n)?;
    let (gains, stages) = synthesize_gains(&family, &scfg)?;
    let validation: Vec<DecayReport> = family
        .kappas
        .iter()
        .map(|k| verify_gains(&family.params(*k), &gains, cfg.verify.sphere_n, cfg.seed))
        .collect();
    let eta_min = gains.eta.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_lower_bound = eta_min * 2f64.powf((r as f64 - 1.0) / (r as f64 * (c + 1.0)));
    let passed = validation.iter().all(|v| v.passed);
    Ok(SynthesisReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        order: r,
        c,
        kappa_grid: family.kappas.clone(),
        eta: gains.eta.clone(),
        gains,
        stages,
        eta_min,
        c_lower_bound,
        validation,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub variant: Variant,
    pub kappa: f64,
    pub c: f64,
    pub gains: Vec<f64>,
    pub threshold: Option<f64>,
    pub z0: Vec<f64>,
    pub steps: usize,
    pub t_final: f64,
    pub final_norm: f64,
    pub settling_time: Option<f64>,
    pub limit_amplitude: Option<f64>,
    pub max_amplitude: f64,
    /// `M_min = phi_bar / gamma_m` for comparison with the limit amplitude.
    pub min_amplitude_bound: f64,
    pub chatter_count: usize,
    pub branch_flips: usize,
    pub diverged: bool,
}

pub fn run_simulate(res: &Resolved) -> Result<(Trajectory, SimulationSummary)> {
    let cfg = &res.config;
    let traj = simulate(&cfg.z0, &res.law, &res.model, &cfg.sim)?;
    let max_amplitude = traj.controls.iter().fold(0.0f64, |a, u| a.max(u.abs()));
    let limit_amplitude = amplitude_probe(&traj).ok().map(|(l, _)| l);
    let last = traj.states.last().expect("trajectory has a sample");
    let summary = SimulationSummary {
        schema_version: SCHEMA_VERSION,
        preset: cfg.preset.clone(),
        variant: res.law.variant(),
        kappa: res.params.kappa(),
        c: res.params.c(),
        gains: res.gains.l.clone(),
        threshold: res.law.threshold(),
        z0: cfg.z0.clone(),
        steps: traj.len().saturating_sub(1),
        t_final: *traj.times.last().expect("trajectory has a sample"),
        final_norm: res.law.norm(last),
        settling_time: traj.settling_time,
        limit_amplitude,
        max_amplitude,
        min_amplitude_bound: res.law.robustifier().min_amplitude(),
        chatter_count: traj.chatter_count,
        branch_flips: traj.branch_flips,
        diverged: traj.diverged,
    };
    Ok((traj, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub variant: Variant,
    pub z0_spec: String,
    pub count: usize,
    /// Largest settling time among runs that settled.
    pub max_settling_time: Option<f64>,
    pub unsettled: usize,
    pub diverged: usize,
    /// Fixed-time laws only.
    pub certificate: Option<FixedTimeCertificate>,
    /// Whether the observed maximum stays within `T_u + T_f`, when both exist.
    pub within_bound: Option<bool>,
}

pub fn sweep_spec(cfg: &ScenarioConfig, cli_spec: Option<&str>) -> Result<(String, Z0Spec)> {
    let text = match cli_spec {
        Some(s) => s.to_string(),
        None => cfg
            .sweep
            .z0_spec
            .clone()
            .ok_or_else(|| Error::Config("no z0 spec given (sweep.z0_spec or --z0-spec)".into()))?,
    };
    let spec = parse_z0_spec(&text)?;
    Ok((text, spec))
}

pub fn run_sweep(res: &Resolved, spec_text: &str, spec: &Z0Spec) -> Result<(Vec<SweepEntry>, SweepSummary)> {
    let cfg = &res.config;
    let z0s = spec.initial_conditions(&res.params, &cfg.z0)?;
    let entries = settling_sweep(&res.law, &res.model, &cfg.sim, &z0s)?;
    let max_settling_time = entries
        .iter()
        .filter_map(|e| e.settling_time)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
    let certificate = match res.law.variant() {
        Variant::FixedTime => Some(fixed_time_certificate(
            &res.params,
            &res.gains,
            res.params.kappa(),
            res.law.threshold().expect("fixed-time law has B"),
            &cfg.synth.to_config(cfg.seed),
        )?),
        _ => None,
    };
    let within_bound = match (&certificate, max_settling_time) {
        (Some(FixedTimeCertificate { bound: Some(b), .. }), Some(t)) => Some(t <= *b),
        _ => None,
    };
    let summary = SweepSummary {
        schema_version: SCHEMA_VERSION,
        preset: cfg.preset.clone(),
        variant: res.law.variant(),
        z0_spec: spec_text.to_string(),
        count: entries.len(),
        max_settling_time,
        unsettled: entries.iter().filter(|e| e.settling_time.is_none()).count(),
        diverged: entries.iter().filter(|e| e.diverged).count(),
        certificate,
        within_bound,
    };
    Ok((entries, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCheck {
    pub kappa: f64,
    pub hypotheses: HypothesisReport,
    pub decay: DecayReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub preset: Option<String>,
    pub variant: Variant,
    pub gains: Vec<f64>,
    pub branches: Vec<BranchCheck>,
    pub passed: bool,
}

/// Sign/gradient hypotheses and decay for every homogeneous branch the law uses.
pub fn run_verify(res: &Resolved) -> Result<VerifyReport> {
    let cfg = &res.config;
    let mut ps = vec![res.params.clone()];
    if let Some(o) = res.law.outer_params() {
        ps.push(o.clone());
    }
    let n = cfg.verify.sphere_n;
    let branches: Vec<BranchCheck> = ps
        .iter()
        .map(|p| BranchCheck {
            kappa: p.kappa(),
            hypotheses: check_hypotheses(p, &res.gains, n, cfg.seed),
            decay: verify_gains(p, &res.gains, n, cfg.seed),
        })
        .collect();
    let passed = branches.iter().all(|b| b.hypotheses.passed && b.decay.passed);
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        preset: cfg.preset.clone(),
        variant: res.law.variant(),
        gains: res.gains.l.clone(),
        branches,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            let res = resolve(&cfg).unwrap();
            assert_eq!(res.law.order(), 3, "{name}");
        }
    }

    #[test]
    fn preset_defaults_for_c() {
        let c = |n: &str| resolve(&preset(n).unwrap()).unwrap().params.c();
        assert_eq!(c("paper-triple-relay"), 2.0);
        assert_eq!(c("paper-triple-negk"), 2.0);
        assert_eq!(c("paper-triple-minamp"), 2.0);
        assert!((c("paper-triple-posk") - 2.25).abs() < 1e-15);
        assert!((c("paper-triple-fixed") - 2.25).abs() < 1e-15);
    }

    #[test]
    fn merge_is_recursive() {
        let mut a = serde_json::json!({"x": {"y": 1, "z": 2}, "w": [1, 2]});
        merge(&mut a, serde_json::json!({"x": {"y": 5}, "w": [3]}));
        assert_eq!(a, serde_json::json!({"x": {"y": 5, "z": 2}, "w": [3]}));
    }

    #[test]
    fn override_parsing() {
        let o = parse_override("sim.dt=1e-5").unwrap();
        assert_eq!(o.path, vec!["sim", "dt"]);
        assert_eq!(o.value, serde_json::json!(1e-5));
        let o = parse_override("law.variant=relay").unwrap();
        assert_eq!(o.value, Value::String("relay".into()));
        for bad in ["", "=1", "a..b=1", "a b=1", "novalue", "a="] {
            assert!(parse_override(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn override_into_arrays() {
        let mut v = serde_json::json!({"z0": [1.0, 0.0]});
        apply_override(&mut v, &parse_override("z0.1=0.5").unwrap()).unwrap();
        apply_override(&mut v, &parse_override("z0.2=2").unwrap()).unwrap();
        assert_eq!(v["z0"], serde_json::json!([1.0, 0.5, 2]));
        assert!(apply_override(&mut v, &parse_override("z0.7=2").unwrap()).is_err());
        assert!(apply_override(&mut v, &parse_override("z0.0.x=2").unwrap()).is_err());
    }

    #[test]
    fn overrides_take_effect() {
        let opts = LoadOptions {
            preset: Some("paper-triple-relay".into()),
            env_seed: Some("9".into()),
            overrides: vec!["sim.dt=5e-5".into(), "seed=11".into()],
        };
        let cfg = load_config(None, &opts).unwrap();
        assert_eq!(cfg.sim.dt, 5e-5);
        assert_eq!(cfg.seed, 11);
        let opts = LoadOptions {
            env_seed: Some("9".into()),
            ..opts
        };
        let cfg = load_config(Some(r#"{"seed": 3}"#), &LoadOptions { overrides: vec![], ..opts }).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn document_merges_over_preset() {
        let cfg = parse_config_str(r#"{"preset": "paper-triple-negk", "sim": {"t_max": 5}}"#).unwrap();
        assert_eq!(cfg.sim.t_max, 5.0);
        assert_eq!(cfg.sim.dt, 1e-4);
        assert_eq!(cfg.chain.kappa, Some(-0.125));
    }

    #[test]
    fn dump_round_trips() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            let text = dump_config(&cfg);
            assert_eq!(parse_config_str(&text).unwrap(), cfg);
            let mut bare = cfg.clone();
            bare.preset = None;
            assert_eq!(parse_config_str(&dump_config(&bare)).unwrap(), bare);
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = parse_config_str(r#"{"preset": "paper-triple-relay", "sim": {"dtt": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("sim"), "{err}");
        let err = parse_config_str("{\n  \"seed\": ,\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = load_config(None, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn kappa_bound_is_reported() {
        let opts = LoadOptions {
            preset: Some("paper-triple-negk".into()),
            overrides: vec!["chain.kappa=0.5".into()],
            ..Default::default()
        };
        let cfg = load_config(None, &opts).unwrap();
        let err = resolve(&cfg).unwrap_err();
        assert!(matches!(err, Error::KappaOutOfRange { .. }), "{err}");
    }

    #[test]
    fn referential_checks() {
        let mut cfg = preset("paper-triple-fixed").unwrap();
        cfg.law.threshold = None;
        assert!(resolve(&cfg).is_err());
        let mut cfg = preset("paper-triple-fixed").unwrap();
        cfg.law.inner_kappa = None;
        assert!(resolve(&cfg).is_err());
        let mut cfg = preset("paper-triple-fixed").unwrap();
        cfg.law.threshold = Some(Threshold::Auto(AutoKeyword::Auto));
        assert!(resolve(&cfg).is_err());
        let mut cfg = preset("paper-triple-relay").unwrap();
        cfg.chain.kappa = Some(-0.125);
        assert!(resolve(&cfg).is_err());
        let mut cfg = preset("paper-triple-negk").unwrap();
        cfg.law.threshold = Some(Threshold::Value(1.0));
        assert!(resolve(&cfg).is_err());
    }

    #[test]
    fn z0_specs() {
        let s = parse_z0_spec("log:1e-2:1e3:24@5").unwrap();
        assert_eq!(s.gammas.len(), 24);
        assert_eq!(s.gammas[0], 1e-2);
        assert_eq!(s.gammas[23], 1e3);
        assert!(s.gammas.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(s.direction_seed, Some(5));
        let s = parse_z0_spec("list:1,2.5").unwrap();
        assert_eq!(s.gammas, vec![1.0, 2.5]);
        assert_eq!(s.direction_seed, None);
        for bad in ["", "  ", "log:1:2", "log:2:1:3", "log:1:2:0", "list:", "list:1,-1", "grid:1", "list:1@x", "log:0:1:2"] {
            assert!(parse_z0_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn sweep_points_have_requested_norm() {
        let p = ChainParams::new(3, -0.125, 2.0).unwrap();
        for spec in ["log:1e-2:1e3:7@3", "list:0.5,4"] {
            let s = parse_z0_spec(spec).unwrap();
            let zs = s.initial_conditions(&p, &[1.0, 0.0, 0.0]).unwrap();
            for (z, g) in zs.iter().zip(&s.gammas) {
                assert!((p.hom_norm(z) / g - 1.0).abs() < 1e-12);
            }
        }
        let s = parse_z0_spec("list:1").unwrap();
        assert_eq!(s.initial_conditions(&p, &[1.0, 0.0, 0.0]).unwrap(), vec![vec![1.0, 0.0, 0.0]]);
    }

    #[test]
    fn tables_derive_exact_bounds() {
        let m = ModelConfig {
            signal: Perturbation::Table {
                t: vec![0.0, 1.0, 2.0],
                phi: vec![0.0, -0.7, 0.2],
                gamma: vec![1.5, 2.0, 1.2],
            },
            phi_bar: None,
            gamma_m: None,
            gamma_max: None,
        };
        let built = m.build(3.0).unwrap();
        assert_eq!((built.phi_bar, built.gamma_m, built.gamma_max), (0.7, 1.2, 2.0));
    }
}
