//! Flat JSON run configuration with materialized defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControlParams;
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::fock::{check_a1, coherent_state, fock_state, ModelParams, StateVector};
use crate::lyapunov::LyapunovParams;
use crate::markov::{FeedbackSystem, DEFAULT_LEAKAGE_BUDGET};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// Lyapunov weight: a number or `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    Value(f64),
    Auto(Auto),
}

impl Default for DeltaSpec {
    fn default() -> Self {
        DeltaSpec::Auto(Auto::Auto)
    }
}

impl DeltaSpec {
    pub fn value(self) -> Option<f64> {
        match self {
            DeltaSpec::Value(v) => Some(v),
            DeltaSpec::Auto(_) => None,
        }
    }
}

impl std::fmt::Display for DeltaSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeltaSpec::Value(v) => write!(f, "{v}"),
            DeltaSpec::Auto(_) => f.write_str("auto"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    Coherent { alpha: f64 },
    Fock { n: usize },
    /// Unnormalized amplitudes; `im` defaults to zeros.
    Amplitudes {
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

impl InitialState {
    pub fn build(&self, model: &ModelParams) -> Result<StateVector> {
        match self {
            InitialState::Coherent { alpha } => coherent_state(*alpha, model),
            InitialState::Fock { n } => fock_state(*n, model),
            InitialState::Amplitudes { re, im } => {
                if re.len() > model.dim() || im.len() > re.len() {
                    return Err(Error::DimensionMismatch {
                        expected: model.dim(),
                        got: re.len().max(im.len()),
                    });
                }
                let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); model.dim()];
                for (n, &r) in re.iter().enumerate() {
                    amps[n].re = r;
                }
                for (n, &i) in im.iter().enumerate() {
                    amps[n].im = i;
                }
                StateVector::from_amplitudes(amps)
            }
        }
    }
}

mod defaults {
    pub fn theta() -> f64 {
        0.25
    }
    pub fn phi() -> f64 {
        0.61
    }
    pub fn n_bar() -> usize {
        2
    }
    pub fn n_max() -> usize {
        40
    }
    pub fn alpha_bar() -> f64 {
        0.2
    }
    pub fn grid_points() -> usize {
        41
    }
    pub fn steps() -> usize {
        200
    }
    pub fn trajectories() -> usize {
        1000
    }
    pub fn master_seed() -> u64 {
        42
    }
    pub fn convergence_fidelity() -> f64 {
        0.99
    }
    pub fn record_stride() -> usize {
        1
    }
    pub fn leakage_budget() -> f64 {
        super::DEFAULT_LEAKAGE_BUDGET
    }
    pub fn a1_tol() -> f64 {
        1e-6
    }
    pub fn stats_file() -> String {
        "stats.csv".into()
    }
}

/// Every knob of a run. Absent keys take defaults; unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "defaults::theta")]
    pub theta: f64,
    #[serde(default = "defaults::phi")]
    pub phi: f64,
    #[serde(default = "defaults::n_bar")]
    pub n_bar: usize,
    #[serde(default = "defaults::n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub delta: DeltaSpec,
    #[serde(default = "defaults::alpha_bar")]
    pub alpha_bar: f64,
    #[serde(default = "defaults::grid_points")]
    pub grid_points: usize,
    /// Defaults to `alpha_bar * 1e-6`.
    #[serde(default)]
    pub refine_tol: Option<f64>,
    #[serde(default = "defaults::steps")]
    pub steps: usize,
    #[serde(default = "defaults::trajectories")]
    pub trajectories: usize,
    #[serde(default = "defaults::master_seed")]
    pub master_seed: u64,
    #[serde(default = "defaults::convergence_fidelity")]
    pub convergence_fidelity: f64,
    #[serde(default = "defaults::record_stride")]
    pub record_stride: usize,
    /// Defaults to the coherent state with amplitude `sqrt(n_bar)`.
    #[serde(default)]
    pub initial: Option<InitialState>,
    #[serde(default = "defaults::leakage_budget")]
    pub leakage_budget: f64,
    #[serde(default = "defaults::a1_tol")]
    pub a1_tol: f64,
    #[serde(default = "defaults::stats_file")]
    pub stats_file: String,
    /// Per-trajectory step records are written only when set.
    #[serde(default)]
    pub trajectory_file: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str::<RunConfig>("{}")
            .expect("empty config")
            .materialized()
    }
}

/// Validated objects built from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Resolved {
    pub system: FeedbackSystem,
    pub ensemble: EnsembleConfig,
    pub initial: StateVector,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<RunConfig>(text)
            .map(Self::materialized)
            .map_err(|e| Error::InvalidParams(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParams(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills in defaults that depend on other fields.
    pub fn materialized(mut self) -> Self {
        self.refine_tol.get_or_insert(self.alpha_bar * 1e-6);
        self.initial.get_or_insert(InitialState::Coherent {
            alpha: (self.n_bar as f64).sqrt(),
        });
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.theta, self.phi, self.n_bar, self.n_max)
    }

    pub fn control(&self) -> ControlParams {
        ControlParams {
            alpha_bar: self.alpha_bar,
            grid_points: self.grid_points,
            refine_tol: self.refine_tol.unwrap_or(self.alpha_bar * 1e-6),
        }
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            trajectories: self.trajectories,
            steps: self.steps,
            master_seed: self.master_seed,
            convergence_fidelity: self.convergence_fidelity,
            record_stride: self.record_stride,
        }
    }

    /// Model and Lyapunov parameters after the model, distinctness and
    /// weight checks.
    pub fn lyapunov(&self) -> Result<(ModelParams, LyapunovParams)> {
        let model = self.model()?;
        let a1 = check_a1(&model, self.a1_tol);
        if !a1.passed() {
            let pairs: Vec<String> = a1
                .collisions
                .iter()
                .take(8)
                .map(|(m, n)| format!("({m}, {n})"))
                .collect();
            return Err(Error::InvalidParams(format!(
                "measurement eigenvalues cos^2(theta + n phi) not distinct within {}: colliding levels {}{}",
                self.a1_tol,
                pairs.join(", "),
                if a1.collisions.len() > 8 { ", ..." } else { "" }
            )));
        }
        let lp = LyapunovParams::new(&model, self.delta.value())?;
        Ok((model, lp))
    }

    pub fn resolve(&self) -> Result<Resolved> {
        if !(self.leakage_budget > 0.0) {
            return Err(Error::InvalidParams("leakage_budget must be positive".into()));
        }
        let (model, lp) = self.lyapunov()?;
        let system = FeedbackSystem::new(model, lp, self.control())?.with_leakage_budget(self.leakage_budget);
        let ensemble = self.ensemble();
        ensemble.validate()?;
        let initial = self
            .initial
            .clone()
            .unwrap_or(InitialState::Coherent {
                alpha: (self.n_bar as f64).sqrt(),
            })
            .build(&model)?;
        Ok(Resolved {
            system,
            ensemble,
            initial,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_materialize() {
        let c = RunConfig::default();
        assert_eq!(c.theta, 0.25);
        assert_eq!(c.phi, 0.61);
        assert_eq!(c.n_bar, 2);
        assert_eq!(c.n_max, 40);
        assert_eq!(c.alpha_bar, 0.2);
        assert_eq!(c.delta, DeltaSpec::Auto(Auto::Auto));
        assert_eq!(c.steps, 200);
        assert_eq!(c.trajectories, 1000);
        assert_eq!(c.master_seed, 42);
        assert_eq!(c.refine_tol, Some(0.2 * 1e-6));
        assert_eq!(c.initial, Some(InitialState::Coherent { alpha: 2f64.sqrt() }));
        let r = c.resolve().unwrap();
        assert!((r.system.lyapunov.delta - 0.0375).abs() < 1e-15);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let c = RunConfig::from_json(r#"{"delta": 0.01, "initial": {"kind": "fock", "n": 3}}"#).unwrap();
        let once = c.to_json();
        let twice = RunConfig::from_json(&once).unwrap().to_json();
        assert_eq!(once, twice);
        assert_eq!(RunConfig::from_json(&once).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"thetta": 0.3}"#).unwrap_err();
        assert!(err.to_string().contains("thetta"));
    }

    #[test]
    fn delta_forms() {
        let auto = RunConfig::from_json(r#"{"delta": "auto"}"#).unwrap();
        assert_eq!(auto.delta.value(), None);
        assert!(RunConfig::from_json(r#"{"delta": "big"}"#).is_err());
        let too_big = RunConfig::from_json(r#"{"delta": 0.2}"#).unwrap();
        assert!(too_big.resolve().is_err());
    }

    #[test]
    fn degenerate_phase_names_levels() {
        let c = RunConfig::from_json(r#"{"phi": 1.5707963267948966, "theta": 0.25}"#).unwrap();
        let msg = c.resolve().unwrap_err().to_string();
        assert!(msg.contains("(0, 2)"), "{msg}");
    }

    #[test]
    fn small_target_rejected() {
        let c = RunConfig::from_json(r#"{"n_bar": 1}"#).unwrap();
        assert!(c.resolve().unwrap_err().to_string().contains("n_bar >= 2"));
    }

    #[test]
    fn amplitude_initial_state() {
        let c = RunConfig::from_json(r#"{"initial": {"kind": "amplitudes", "re": [1.0, 0.0, 1.0]}}"#).unwrap();
        let r = c.resolve().unwrap();
        assert!((r.initial.population(0) - 0.5).abs() < 1e-15);
        assert!((r.initial.population(2) - 0.5).abs() < 1e-15);
    }
}
