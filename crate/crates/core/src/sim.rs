//! Fixed-step simulation of the perturbed chain
//! `z_i' = z_{i+1}` (i < r), `z_r' = phi(t) + gamma(t) u(z)`.
//!
//! The control is sampled once per step and held through the Runge-Kutta stages.
//! No Filippov convexification is attempted: switching surfaces are crossed by the
//! fixed step and the resulting chattering is measured instead.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{Branch, ControlLaw};
use crate::error::{Error, Result};

/// Time-varying perturbation signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Perturbation {
    /// `phi = sin t`, `gamma = 3 + cos t`.
    SinCos,
    Constant { phi: f64, gamma: f64 },
    /// Piecewise-linear interpolation of `phi` and `gamma` at the knots `t`;
    /// held constant outside the table.
    Table { t: Vec<f64>, phi: Vec<f64>, gamma: Vec<f64> },
}

fn interp(ts: &[f64], ys: &[f64], t: f64) -> f64 {
    if t <= ts[0] {
        return ys[0];
    }
    let n = ts.len();
    if t >= ts[n - 1] {
        return ys[n - 1];
    }
    let k = ts.partition_point(|x| *x <= t);
    let (t0, t1) = (ts[k - 1], ts[k]);
    let w = (t - t0) / (t1 - t0);
    ys[k - 1] * (1.0 - w) + ys[k] * w
}

impl Perturbation {
    #[inline]
    pub fn phi(&self, t: f64) -> f64 {
        match self {
            Perturbation::SinCos => t.sin(),
            Perturbation::Constant { phi, .. } => *phi,
            Perturbation::Table { t: ts, phi, .. } => interp(ts, phi, t),
        }
    }

    #[inline]
    pub fn gamma(&self, t: f64) -> f64 {
        match self {
            Perturbation::SinCos => 3.0 + t.cos(),
            Perturbation::Constant { gamma, .. } => *gamma,
            Perturbation::Table { t: ts, gamma, .. } => interp(ts, gamma, t),
        }
    }

    fn check_shape(&self) -> Result<()> {
        if let Perturbation::Table { t, phi, gamma } = self {
            if t.is_empty() || t.len() != phi.len() || t.len() != gamma.len() {
                return Err(Error::InvalidModel("table columns must be non-empty and of equal length".into()));
            }
            if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().chain(phi).chain(gamma).any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel("table times must be finite and strictly increasing".into()));
            }
        }
        if let Perturbation::Constant { phi, gamma } = self {
            if !phi.is_finite() || !gamma.is_finite() {
                return Err(Error::InvalidModel("constant perturbation must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Perturbation signals together with their certified bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationModel {
    pub signal: Perturbation,
    pub phi_bar: f64,
    pub gamma_m: f64,
    pub gamma_max: f64,
}

pub const MODEL_GRID_POINTS: usize = 100_000;

impl PerturbationModel {
    /// Validates `|phi| <= phi_bar` and `gamma in [gamma_m, gamma_M]` on a dense grid of `[0, t_max]`.
    pub fn new(signal: Perturbation, phi_bar: f64, gamma_m: f64, gamma_max: f64, t_max: f64) -> Result<Self> {
        signal.check_shape()?;
        if !(phi_bar.is_finite() && phi_bar >= 0.0) {
            return Err(Error::InvalidModel(format!("phi_bar = {phi_bar} must be non-negative")));
        }
        if !(gamma_m > 0.0 && gamma_m <= gamma_max && gamma_max.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "need 0 < gamma_m <= gamma_M, got {gamma_m}, {gamma_max}"
            )));
        }
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::InvalidModel(format!("validation horizon {t_max} must be positive")));
        }
        let slack = 1e-12;
        for k in 0..=MODEL_GRID_POINTS {
            let t = t_max * k as f64 / MODEL_GRID_POINTS as f64;
            let phi = signal.phi(t);
            let gamma = signal.gamma(t);
            if phi.abs() > phi_bar + slack {
                return Err(Error::InvalidModel(format!("|phi({t})| = {} exceeds phi_bar = {phi_bar}", phi.abs())));
            }
            if gamma < gamma_m - slack || gamma > gamma_max + slack {
                return Err(Error::InvalidModel(format!(
                    "gamma({t}) = {gamma} outside [{gamma_m}, {gamma_max}]"
                )));
            }
        }
        Ok(Self {
            signal,
            phi_bar,
            gamma_m,
            gamma_max,
        })
    }

    /// The triple-integrator test model: `phi = sin t`, `gamma = 3 + cos t`.
    pub fn sin_cos(t_max: f64) -> Result<Self> {
        Self::new(Perturbation::SinCos, 1.0, 2.0, 4.0, t_max)
    }

    /// `phi = 0`, `gamma = 1`.
    pub fn pure_chain(t_max: f64) -> Result<Self> {
        Self::new(Perturbation::Constant { phi: 0.0, gamma: 1.0 }, 0.0, 1.0, 1.0, t_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub settle_radius: f64,
    pub settle_dwell: f64,
    pub method: Method,
    /// Attach the law's Lyapunov function to every sample.
    pub record_lyapunov: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_max: 20.0,
            settle_radius: 1e-3,
            settle_dwell: 0.5,
            method: Method::Rk4,
            record_lyapunov: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidSimConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_max.is_finite() && self.t_max > self.dt) {
            return Err(Error::InvalidSimConfig(format!("t_max = {} must exceed dt", self.t_max)));
        }
        if !(self.settle_radius.is_finite() && self.settle_radius > 0.0) {
            return Err(Error::InvalidSimConfig(format!("settle_radius = {} must be positive", self.settle_radius)));
        }
        if !(self.settle_dwell.is_finite() && self.settle_dwell >= 0.0) {
            return Err(Error::InvalidSimConfig(format!("settle_dwell = {} must be non-negative", self.settle_dwell)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }
}

/// Divergence guard on `Gamma_r(z)`.
pub const DIVERGENCE_NORM: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diverged;

#[inline]
fn rhs(z: &[f64], t: f64, u: f64, model: &PerturbationModel, out: &mut [f64]) {
    let r = z.len();
    out[..r - 1].copy_from_slice(&z[1..]);
    out[r - 1] = model.signal.phi(t) + model.signal.gamma(t) * u;
}

/// One step with the control `u` held over `[t, t + dt]`.
pub fn step_with_control(z: &[f64], t: f64, u: f64, model: &PerturbationModel, dt: f64, method: Method) -> Vec<f64> {
    let r = z.len();
    let mut k1 = vec![0.0; r];
    rhs(z, t, u, model, &mut k1);
    match method {
        Method::Euler => z.iter().zip(&k1).map(|(a, b)| a + dt * b).collect(),
        Method::Rk4 => {
            let mut tmp = vec![0.0; r];
            let mut k2 = vec![0.0; r];
            let mut k3 = vec![0.0; r];
            let mut k4 = vec![0.0; r];
            for i in 0..r {
                tmp[i] = z[i] + 0.5 * dt * k1[i];
            }
            rhs(&tmp, t + 0.5 * dt, u, model, &mut k2);
            for i in 0..r {
                tmp[i] = z[i] + 0.5 * dt * k2[i];
            }
            rhs(&tmp, t + 0.5 * dt, u, model, &mut k3);
            for i in 0..r {
                tmp[i] = z[i] + dt * k3[i];
            }
            rhs(&tmp, t + dt, u, model, &mut k4);
            (0..r)
                .map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    }
}

/// One closed-loop step; errors when the new state leaves `Gamma_r <= 1e9`.
pub fn step(z: &[f64], t: f64, law: &ControlLaw, model: &PerturbationModel, dt: f64, method: Method) -> std::result::Result<Vec<f64>, Diverged> {
    let u = law.control(z);
    let next = step_with_control(z, t, u, model, dt, method);
    if next.iter().any(|x| !x.is_finite()) || law.norm(&next) > DIVERGENCE_NORM {
        return Err(Diverged);
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<f64>,
    /// Empty unless Lyapunov recording was requested.
    pub lyapunov_values: Vec<f64>,
    pub branch_flags: Vec<Branch>,
    pub settling_time: Option<f64>,
    /// Sign flips of `u` during the last second of the run.
    pub chatter_count: usize,
    pub branch_flips: usize,
    pub diverged: bool,
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,z1,...,zr,u,V,branch`; floats carry 17 significant digits.
    /// The `V` column is empty when no Lyapunov values were recorded. Every
    /// `stride`-th sample is written (at least 1).
    pub fn write_csv<W: Write>(&self, mut w: W, stride: usize) -> io::Result<()> {
        let r = self.states.first().map_or(0, |s| s.len());
        let mut header = String::from("t");
        for i in 1..=r {
            header.push_str(&format!(",z{i}"));
        }
        header.push_str(",u,V,branch");
        writeln!(w, "{header}")?;
        let stride = stride.max(1);
        for k in (0..self.len()).step_by(stride) {
            write!(w, "{:.16e}", self.times[k])?;
            for x in &self.states[k] {
                write!(w, ",{x:.16e}")?;
            }
            write!(w, ",{:.16e},", self.controls[k])?;
            if let Some(v) = self.lyapunov_values.get(k) {
                write!(w, "{v:.16e}")?;
            }
            writeln!(w, ",{}", self.branch_flags[k].as_str())?;
        }
        Ok(())
    }
}

/// First time after which `norm(z) <= radius` for at least `dwell` seconds.
pub fn settling_time(times: &[f64], norms: &[f64], radius: f64, dwell: f64) -> Option<f64> {
    let mut entry: Option<f64> = None;
    for (t, g) in times.iter().zip(norms) {
        if *g <= radius {
            let start = *entry.get_or_insert(*t);
            if t - start >= dwell {
                return Some(start);
            }
        } else {
            entry = None;
        }
    }
    None
}

fn count_sign_flips(us: &[f64]) -> usize {
    let mut last = 0.0;
    let mut flips = 0;
    for &u in us {
        let s = crate::algebra::sgn(u);
        if s != 0.0 {
            if last != 0.0 && s != last {
                flips += 1;
            }
            last = s;
        }
    }
    flips
}

/// Runs the closed loop from `z0` until `t_max` or divergence.
pub fn simulate(z0: &[f64], law: &ControlLaw, model: &PerturbationModel, config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    law.params().check_state(z0)?;
    let n = config.steps();
    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        controls: Vec::with_capacity(n + 1),
        lyapunov_values: Vec::with_capacity(if config.record_lyapunov { n + 1 } else { 0 }),
        branch_flags: Vec::with_capacity(n + 1),
        settling_time: None,
        chatter_count: 0,
        branch_flips: 0,
        diverged: false,
        dt: config.dt,
    };
    let mut norms = Vec::with_capacity(n + 1);
    let mut z = z0.to_vec();
    for k in 0..=n {
        let t = k as f64 * config.dt;
        let out = law.evaluate(&z);
        traj.times.push(t);
        traj.controls.push(out.u);
        if config.record_lyapunov {
            traj.lyapunov_values.push(law.lyapunov(&z));
        }
        if let Some(prev) = traj.branch_flags.last() {
            if *prev != out.branch {
                traj.branch_flips += 1;
            }
        }
        traj.branch_flags.push(out.branch);
        norms.push(law.norm(&z));
        if k == n {
            traj.states.push(z);
            break;
        }
        let next = step_with_control(&z, t, out.u, model, config.dt, config.method);
        traj.states.push(z);
        if next.iter().any(|x| !x.is_finite()) || law.norm(&next) > DIVERGENCE_NORM {
            traj.diverged = true;
            break;
        }
        z = next;
    }
    traj.settling_time = if traj.diverged {
        None
    } else {
        settling_time(&traj.times, &norms, config.settle_radius, config.settle_dwell)
    };
    let tail = ((1.0 / config.dt).round() as usize).min(traj.controls.len());
    traj.chatter_count = count_sign_flips(&traj.controls[traj.controls.len() - tail..]);
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub z0: Vec<f64>,
    pub gamma_norm: f64,
    pub settling_time: Option<f64>,
    pub diverged: bool,
}

/// Independent simulations per initial condition, evaluated in parallel and
/// returned in input order. Trajectories are not retained.
pub fn settling_sweep(law: &ControlLaw, model: &PerturbationModel, config: &SimConfig, z0_list: &[Vec<f64>]) -> Result<Vec<SweepEntry>> {
    config.validate()?;
    for z0 in z0_list {
        law.params().check_state(z0)?;
    }
    let cfg = SimConfig {
        record_lyapunov: false,
        ..config.clone()
    };
    z0_list
        .par_iter()
        .map(|z0| {
            let traj = simulate(z0, law, model, &cfg)?;
            Ok(SweepEntry {
                z0: z0.clone(),
                gamma_norm: law.norm(z0),
                settling_time: traj.settling_time,
                diverged: traj.diverged,
            })
        })
        .collect()
}

/// CSV `gamma_norm_z0,settling_time,diverged`; `nan` marks runs that never settled.
pub fn write_sweep_csv<W: Write>(mut w: W, entries: &[SweepEntry]) -> io::Result<()> {
    writeln!(w, "gamma_norm_z0,settling_time,diverged")?;
    for e in entries {
        let t = e.settling_time.unwrap_or(f64::NAN);
        writeln!(w, "{:.16e},{:.16e},{}", e.gamma_norm, t, e.diverged)?;
    }
    Ok(())
}

/// `(limit_amplitude, max_amplitude)`: the largest `|u|` after settling and over the whole run.
pub fn amplitude_probe(traj: &Trajectory) -> Result<(f64, f64)> {
    let ts = traj.settling_time.ok_or(Error::NotSettled)?;
    let mut limit: f64 = 0.0;
    let mut max: f64 = 0.0;
    for (t, u) in traj.times.iter().zip(&traj.controls) {
        max = max.max(u.abs());
        if *t >= ts {
            limit = limit.max(u.abs());
        }
    }
    Ok((limit, max))
}
