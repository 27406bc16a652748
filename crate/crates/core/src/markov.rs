//! One closed-loop transition (QND measurement, then feedback displacement)
//! and whole sample paths.

use serde::Serialize;

use crate::controller::{choose_alpha, ControlParams};
use crate::displacement::DisplacementTable;
use crate::error::{Error, Result};
use crate::fock::{ModelParams, Outcome, StateVector};
use crate::lyapunov::{lyapunov_value, LyapunovParams};
use crate::rng::RngStream;

pub const DEFAULT_LEAKAGE_BUDGET: f64 = 1e-6;

/// Everything a transition needs; immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct FeedbackSystem {
    pub model: ModelParams,
    pub lyapunov: LyapunovParams,
    pub control: ControlParams,
    pub table: DisplacementTable,
    pub leakage_budget: f64,
}

impl FeedbackSystem {
    pub fn new(model: ModelParams, lyapunov: LyapunovParams, control: ControlParams) -> Result<Self> {
        model.validate()?;
        control.validate()?;
        if lyapunov.n_max() != model.n_max {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: lyapunov.sigma.len(),
            });
        }
        let table = DisplacementTable::new(model.n_max, control.alpha_bar)?;
        Ok(Self {
            model,
            lyapunov,
            control,
            table,
            leakage_budget: DEFAULT_LEAKAGE_BUDGET,
        })
    }

    pub fn with_leakage_budget(mut self, budget: f64) -> Self {
        self.leakage_budget = budget;
        self
    }

    pub fn value(&self, state: &StateVector) -> f64 {
        lyapunov_value(state, &self.lyapunov).total
    }

    /// Displacement and its leakage indicator: population on the top level
    /// plus the squared-norm drift removed by renormalization.
    fn displace(&self, state: &StateVector, alpha: f64) -> (StateVector, f64) {
        if alpha == 0.0 {
            let edge = state.population(self.model.n_max);
            return (state.clone(), edge);
        }
        let (next, drift) = self.table.apply_with_drift(state, alpha);
        let edge = next.population(self.model.n_max);
        (next, edge + drift)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step_index: usize,
    pub outcome: Outcome,
    pub p_g: f64,
    pub alpha: f64,
    pub v_before: f64,
    pub v_half: f64,
    pub v_after: f64,
    /// `|<n_bar|psi>|^2` after the step.
    pub fidelity: f64,
    pub leakage: f64,
}

/// Samples the measurement with one uniform draw (`u < P_g` selects `g`),
/// collapses, chooses the feedback for the collapsed state and displaces.
pub fn markov_step(
    state: &StateVector,
    rng: &mut RngStream,
    sys: &FeedbackSystem,
    step_index: usize,
) -> (StateVector, StepRecord) {
    let lp = &sys.lyapunov;
    let meas = lp.measurement();
    let v_before = lyapunov_value(state, lp).total;
    let p_g = meas.probability(state, Outcome::Ground);
    let u = rng.next_f64();
    let outcome = if u < p_g { Outcome::Ground } else { Outcome::Excited };
    let (half, _) = meas
        .collapse(state, outcome)
        .expect("sampled branch has positive probability");
    let v_half = lyapunov_value(&half, lp).total;
    let (alpha, _) = choose_alpha(&half, &sys.control, lp, &sys.table);
    let (next, leakage) = sys.displace(&half, alpha);
    let v_after = lyapunov_value(&next, lp).total;
    let record = StepRecord {
        step_index,
        outcome,
        p_g,
        alpha,
        v_before,
        v_half,
        v_after,
        fidelity: next.population(sys.model.n_bar),
        leakage,
    };
    (next, record)
}

/// `E[V(psi_{k+1}) | psi_k = psi]` as an exact two-outcome sum, with the
/// feedback chosen separately for each collapsed branch.
pub fn expected_next_value(state: &StateVector, sys: &FeedbackSystem) -> f64 {
    let lp = &sys.lyapunov;
    [Outcome::Ground, Outcome::Excited]
        .into_iter()
        .filter_map(|s| lp.measurement().collapse(state, s).ok())
        .map(|(half, p)| p * choose_alpha(&half, &sys.control, lp, &sys.table).1)
        .sum()
}

/// A sample path being advanced one step at a time.
#[derive(Clone, Debug)]
pub struct Trajectory<'a> {
    sys: &'a FeedbackSystem,
    state: StateVector,
    rng: RngStream,
    step: usize,
    cumulative_leakage: f64,
}

impl<'a> Trajectory<'a> {
    pub fn new(sys: &'a FeedbackSystem, initial: StateVector, rng: RngStream) -> Result<Self> {
        if initial.dim() != sys.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.model.dim(),
                got: initial.dim(),
            });
        }
        Ok(Self {
            sys,
            state: initial,
            rng,
            step: 0,
            cumulative_leakage: 0.0,
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn cumulative_leakage(&self) -> f64 {
        self.cumulative_leakage
    }

    /// Advances one step. The record is returned even when the step pushes
    /// cumulative leakage over budget; the error is reported alongside.
    pub fn advance(&mut self) -> (StepRecord, Result<()>) {
        let (next, record) = markov_step(&self.state, &mut self.rng, self.sys, self.step);
        self.state = next;
        self.step += 1;
        self.cumulative_leakage += record.leakage;
        let status = if self.cumulative_leakage > self.sys.leakage_budget {
            Err(Error::LeakageBudget {
                step: record.step_index,
                cumulative: self.cumulative_leakage,
                budget: self.sys.leakage_budget,
            })
        } else {
            Ok(())
        };
        (record, status)
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryRun {
    pub records: Vec<StepRecord>,
    pub final_state: StateVector,
    /// Set when the run stopped early on the leakage budget.
    pub aborted: Option<Error>,
}

/// Runs `steps` transitions from `initial` with the stream seeded by `seed`.
pub fn simulate_trajectory(
    initial: &StateVector,
    steps: usize,
    seed: u64,
    sys: &FeedbackSystem,
) -> Result<TrajectoryRun> {
    let mut traj = Trajectory::new(sys, initial.clone(), RngStream::new(seed))?;
    let mut records = Vec::with_capacity(steps);
    let mut aborted = None;
    for _ in 0..steps {
        let (rec, status) = traj.advance();
        records.push(rec);
        if let Err(e) = status {
            aborted = Some(e);
            break;
        }
    }
    Ok(TrajectoryRun {
        records,
        final_state: traj.state,
        aborted,
    })
}
