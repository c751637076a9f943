//! Homogeneous finite-time and fixed-time stabilization of perturbed integrator chains.
//!
//! * [`algebra`]: dilations, signed powers, homogeneous norms, sphere sampling.
//! * [`control`]: the nested law `omega_kappa`, its Lyapunov function and the
//!   robust, relay, minimum-amplitude and fixed-time variants.
//! * [`synth`]: sampled computation of the gains and certificate constants.
//! * [`sim`]: fixed-step closed-loop simulation, settling detection, sweeps.
//! * [`scenario`]: JSON scenario documents, presets and dotted-path overrides.

pub mod algebra;
pub mod control;
pub mod error;
pub mod scenario;
pub mod sim;
pub mod synth;

pub use algebra::{dilate_weighted, hom_norm_weighted, signed_power, sphere_sample, ChainParams};
pub use control::{
    check_hypotheses, lyapunov, lyapunov_grad, nominal_control, relay_control, robust_control, Branch, ControlLaw,
    GainSet, Robustifier, SignMode, Variant,
};
pub use error::{Error, Result};
pub use sim::{amplitude_probe, settling_sweep, simulate, Method, Perturbation, PerturbationModel, SimConfig, Trajectory};
pub use scenario::{load_config, parse_config_str, parse_override, parse_z0_spec, preset, resolve, ScenarioConfig};
pub use synth::{
    compute_ki, compute_li, find_a, find_e, fixed_time_bound, synthesize_gains, verify_gains, KappaFamily, SynthConfig,
};
