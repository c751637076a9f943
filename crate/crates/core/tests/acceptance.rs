//! Acceptance criteria, each at its pinned tolerance and runtime budget.
//!
//! Runs without the libtest harness so that every criterion prints its own
//! PASS/FAIL line; the process fails if any criterion fails.

use std::time::{Duration, Instant};

use hosm_core::algebra::ChainParams;
use hosm_core::control::{check_hypotheses, lyapunov, nominal_control, ControlLaw, GainSet, Robustifier};
use hosm_core::scenario::{self, preset, resolve, run_simulate};
use hosm_core::sim::{amplitude_probe, simulate, PerturbationModel, SimConfig, Trajectory};
use hosm_core::synth::{find_a, synthesize_gains, KappaFamily, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn preset_traj(name: &str, settle_radius: Option<f64>) -> Trajectory {
    let mut cfg = preset(name).unwrap();
    if let Some(r) = settle_radius {
        cfg.sim.settle_radius = r;
    }
    run_simulate(&resolve(&cfg).unwrap()).unwrap().0
}

fn random_state(rng: &mut ChaCha8Rng, r: usize, half_width: f64) -> Vec<f64> {
    loop {
        let z: Vec<f64> = (0..r).map(|_| rng.gen_range(-half_width..half_width)).collect();
        if z.iter().any(|x| x.abs() > 1e-3) {
            return z;
        }
    }
}

fn synthesized(r: usize) -> (KappaFamily, GainSet) {
    let family = KappaFamily::new(r, KappaFamily::default_c(r), 33).unwrap();
    let (g, _) = synthesize_gains(&family, &SynthConfig::default()).unwrap();
    (family, g)
}

fn relay_amplitude() -> Outcome {
    let tr = preset_traj("paper-triple-relay", None);
    let dev = tr
        .controls
        .iter()
        .filter(|u| **u != 0.0)
        .map(|u| (u.abs() - 4.0).abs())
        .fold(0.0, f64::max);
    outcome(
        dev <= 1e-9 && tr.settling_time.is_some(),
        format!("max ||u| - 4| = {dev:.3e}, settling {:?}", tr.settling_time),
    )
}

fn min_amplitude_limit() -> Outcome {
    let mut parts = Vec::new();
    let mut gaps = Vec::new();
    for radius in [1e-3, 1e-4] {
        match amplitude_probe(&preset_traj("paper-triple-minamp", Some(radius))) {
            Ok((limit, _)) => {
                gaps.push((limit - 0.5).abs());
                parts.push(format!("radius {radius:e}: limit |u| = {limit:.4}"));
            }
            Err(_) => {
                gaps.push(f64::INFINITY);
                parts.push(format!("radius {radius:e}: never settled"));
            }
        }
    }
    let in_band = gaps[0] <= 0.05;
    outcome(in_band && gaps[1] < gaps[0], parts.join(", "))
}

fn scalar_oracle() -> Outcome {
    let p = ChainParams::with_default_c(1, -0.5).unwrap();
    let law = ControlLaw::nominal(p, GainSet::from_l(vec![1.0])).unwrap();
    let model = PerturbationModel::pure_chain(5.0).unwrap();
    // the analytic time reaches z = 0 exactly; a 1e-6 ball biases it by 2e-3 only
    let cfg = SimConfig {
        t_max: 5.0,
        settle_radius: 1e-6,
        ..Default::default()
    };
    let tr = simulate(&[1.0], &law, &model, &cfg).unwrap();
    match tr.settling_time {
        Some(t) => {
            let err = (t - 2.0).abs() / 2.0;
            outcome(err < 0.02, format!("settling {t:.5} vs 2.0 (relative error {err:.2e})"))
        }
        None => outcome(false, "never settled"),
    }
}

fn fixed_time_uniformity() -> Outcome {
    let cfg = preset("paper-triple-fixed").unwrap();
    let res = resolve(&cfg).unwrap();
    let (text, spec) = scenario::sweep_spec(&cfg, Some("log:1e-2:1e3:24@0")).unwrap();
    let (entries, summary) = scenario::run_sweep(&res, &text, &spec).unwrap();
    let finite = entries.iter().all(|e| e.settling_time.is_some());
    let upper: Vec<f64> = entries
        .iter()
        .filter(|e| e.gamma_norm >= 10.0 * (1.0 - 1e-12))
        .filter_map(|e| e.settling_time)
        .collect();
    let hi = upper.iter().cloned().fold(f64::MIN, f64::max);
    let lo = upper.iter().cloned().fold(f64::MAX, f64::min);
    let ratio = hi / lo;
    let cert = summary.certificate.expect("fixed-time sweep carries a certificate");
    let bound_ok = summary.within_bound == Some(true);
    let bound = match cert.bound {
        Some(b) => format!("T_u + T_f = {b:.4}"),
        None => format!(
            "T_u + T_f unavailable (C_outer = {:.3e}, C_inner = {:.3e})",
            cert.c_outer, cert.c_inner
        ),
    };
    outcome(
        finite && ratio < 2.0 && bound_ok,
        format!(
            "max settling {:?}, spread over Gamma in [10, 1e3] = {ratio:.3}, {bound}; {}",
            summary.max_settling_time,
            certified_fixed_time_diagnostic()
        ),
    )
}

// r = 2 synthesized gains do yield a bound; reported, not asserted
fn certified_fixed_time_diagnostic() -> String {
    let mut cfg = preset("paper-triple-fixed").unwrap();
    cfg.chain.order = 2;
    cfg.gains = scenario::GainsConfig::Synthesized;
    cfg.law.inner_kappa = Some(-0.25);
    cfg.z0 = vec![1.0, 0.0];
    let res = resolve(&cfg).unwrap();
    let (text, spec) = scenario::sweep_spec(&cfg, None).unwrap();
    let (_, summary) = scenario::run_sweep(&res, &text, &spec).unwrap();
    let bound = summary.certificate.and_then(|c| c.bound);
    format!(
        "r=2 synthesized: max settling {:?} vs T_u + T_f {:?}",
        summary.max_settling_time, bound
    )
}

fn homogeneity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_u: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    let mut cases = 0;
    for r in 1..=3usize {
        let g = GainSet::from_l([1.0, 4.0, 7.0][..r].to_vec());
        let rf = r as f64;
        for kappa in [-1.0 / rf, -0.5 / rf, 0.0, 0.5 / rf, 1.0 / rf] {
            let p = ChainParams::with_default_c(r, kappa).unwrap();
            let deg_u = p.weights()[r - 1] + kappa;
            for _ in 0..1000 {
                let z = random_state(&mut rng, r, 2.0);
                let eps = (rng.gen_range(-2.0f64..2.0) * std::f64::consts::LN_10).exp();
                let zd = p.dilate(&z, eps).unwrap();
                let u = nominal_control(&z, &p, &g);
                let ud = nominal_control(&zd, &p, &g);
                let v = lyapunov(&z, &p, &g);
                let vd = lyapunov(&zd, &p, &g);
                worst_u = worst_u.max((ud - eps.powf(deg_u) * u).abs() / ud.abs().max(1e-300));
                worst_v = worst_v.max((vd - eps.powf(p.c() + 1.0) * v).abs() / vd.abs().max(1e-300));
                cases += 1;
            }
        }
    }
    outcome(
        worst_u <= 1e-9 && worst_v <= 1e-9,
        format!("{cases} pairs, worst relative error: control {worst_u:.2e}, V {worst_v:.2e}"),
    )
}

fn lyapunov_decrease() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for r in [2usize, 3] {
        let (family, g) = synthesized(r);
        let kappa = -0.5 / r as f64;
        let law = ControlLaw::nominal(family.params(kappa), g.clone()).unwrap();
        let model = PerturbationModel::pure_chain(5.0).unwrap();
        let cfg = SimConfig {
            t_max: 5.0,
            ..Default::default()
        };
        let mut worst = f64::NEG_INFINITY;
        let mut diverged = 0;
        for _ in 0..20 {
            let z0 = random_state(&mut rng, r, 2.0);
            let tr = simulate(&z0, &law, &model, &cfg).unwrap();
            if tr.diverged {
                diverged += 1;
                continue;
            }
            let v0 = tr.lyapunov_values[0];
            for w in tr.lyapunov_values.windows(2) {
                worst = worst.max((w[1] - w[0]) / v0);
            }
        }
        pass &= diverged == 0 && worst <= 1e-6;
        parts.push(format!(
            "r={r} (l_r = {:.3e}): worst per-step rise {worst:.3e} V(0), {diverged} of 20 diverged",
            g.l[r - 1]
        ));
    }
    outcome(pass, parts.join("; "))
}

fn hypothesis_certificate() -> Outcome {
    let (family, g) = synthesized(3);
    let mut worst = f64::NEG_INFINITY;
    let mut pass = true;
    for kappa in [-1.0 / 3.0, -1.0 / 6.0, 0.0, 1.0 / 6.0, 1.0 / 3.0] {
        let rep = check_hypotheses(&family.params(kappa), &g, 20_000, 7);
        worst = worst.max(rep.worst_product);
        pass &= rep.passed;
    }
    let mut bad = g.clone();
    bad.l[2] = -bad.l[2];
    let neg = check_hypotheses(&family.params(0.0), &bad, 20_000, 7);
    outcome(
        pass && !neg.passed && !neg.violations.is_empty(),
        format!(
            "worst scaled dV/dz_r*omega = {worst:.3e}; with l_3 sign-flipped: {} violations listed",
            neg.violations.len()
        ),
    )
}

fn regime_taxonomy() -> Outcome {
    let pos = preset_traj("paper-triple-posk", None);
    let neg = preset_traj("paper-triple-negk", None);
    let neg_tight = preset_traj("paper-triple-negk", Some(1e-4));
    let relay = preset_traj("paper-triple-relay", None);
    let a_pos = pos.settling_time.is_none();
    let neg_amp = amplitude_probe(&neg).map(|x| x.0).unwrap_or(f64::NAN);
    let neg_tight_amp = amplitude_probe(&neg_tight).map(|x| x.0).unwrap_or(f64::NAN);
    let b_neg = (neg_amp - 0.5).abs() <= 0.05 && (neg_tight_amp - 0.5).abs() < (neg_amp - 0.5).abs();
    let relay_amp = amplitude_probe(&relay).map(|x| x.0).unwrap_or(f64::NAN);
    let c_relay = (relay_amp - 4.0).abs() <= 1e-9;
    outcome(
        a_pos && b_neg && c_relay,
        format!(
            "kappa=1/8 settling {:?} (expected none) [{}]; kappa=-1/8 limit |u| {neg_amp:.4} -> {neg_tight_amp:.4} [{}]; kappa=-1/3 limit |u| {relay_amp:.6} [{}]",
            pos.settling_time,
            if a_pos { "ok" } else { "FAIL" },
            if b_neg { "ok" } else { "FAIL" },
            if c_relay { "ok" } else { "FAIL" },
        ),
    )
}

fn worst_after_entry(tr: &Trajectory, a: f64) -> Option<f64> {
    let first = tr.lyapunov_values.iter().position(|v| *v <= a)?;
    Some(tr.lyapunov_values[first..].iter().fold(0.0f64, |m, v| m.max(v / a)))
}

fn inner_set_invariance() -> Outcome {
    // synthesized gains make V_k a certified Lyapunov function, which the invariance
    // argument relies on; r = 2 is the largest order whose synthesized gains simulate
    let (family, g) = synthesized(2);
    let base = family.params(0.0);
    let inner = -0.25;
    let th = find_a(&base, &g, inner, &SynthConfig::default()).unwrap();
    let law =
        ControlLaw::min_amplitude(&base, g.clone(), Robustifier::new(1.0, 2.0), inner, th.a, th.validated).unwrap();
    let model = PerturbationModel::sin_cos(10.0).unwrap();
    let cfg = SimConfig {
        t_max: 10.0,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut entered = 0;
    for _ in 0..10 {
        let z0 = random_state(&mut rng, 2, 3.0);
        let tr = simulate(&z0, &law, &model, &cfg).unwrap();
        if let Some(w) = worst_after_entry(&tr, th.a) {
            entered += 1;
            worst = worst.max(w);
        }
    }

    let mut detail = format!("r=2, A = {:.4e}: {entered}/10 entered, worst V_k/A after entry {worst:.6}", th.a);
    let triple = resolve(&preset("paper-triple-minamp").unwrap()).unwrap();
    let tr = run_simulate(&triple).unwrap().0;
    if let Some(a) = triple.law.threshold() {
        if let Some(w) = worst_after_entry(&tr, a) {
            detail.push_str(&format!(" (triple preset with l = (1,4,7), not asserted: {w:.3})"));
        }
    }
    outcome(entered == 10 && worst <= 1.001, detail)
}

fn main() {
    type Criterion = (&'static str, u64, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("relay amplitude identity", 10, relay_amplitude),
        ("minimum-amplitude limit", 30, min_amplitude_limit),
        ("scalar settling-time oracle", 5, scalar_oracle),
        ("fixed-time uniformity and bound", 600, fixed_time_uniformity),
        ("homogeneity property suite", 60, homogeneity_suite),
        ("Lyapunov decrease along trajectories", 120, lyapunov_decrease),
        ("sign-hypothesis certificate", 60, hypothesis_certificate),
        ("regime taxonomy", 60, regime_taxonomy),
        ("inner-set invariance", 120, inner_set_invariance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let elapsed = t.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let pass = o.pass && in_time;
        failed += usize::from(!pass);
        println!(
            "[{}] {} {name}: {} ({:.1}s of {budget}s{})",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
