//! Monte Carlo ensembles of closed-loop trajectories and the statistical
//! audits run on them.
//!
//! Trajectory `i` draws from `RngStream::for_trajectory(master_seed, i)`, so
//! results do not depend on how trajectories are scheduled over workers.
//! Per-step moments are reduced by pairwise summation in trajectory order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::StateVector;
use crate::markov::{FeedbackSystem, StepRecord, Trajectory};
use crate::rng::{trajectory_seed, RngStream};

/// Fraction of aborted trajectories above which a run fails.
pub const MAX_ABORT_FRACTION: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub trajectories: usize,
    pub steps: usize,
    pub master_seed: u64,
    pub convergence_fidelity: f64,
    pub record_stride: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            trajectories: 1000,
            steps: 200,
            master_seed: 42,
            convergence_fidelity: 0.99,
            record_stride: 1,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::InvalidParams("trajectories must be >= 1".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParams("record_stride must be >= 1".into()));
        }
        if !(self.convergence_fidelity > 0.0 && self.convergence_fidelity < 1.0) {
            return Err(Error::InvalidParams(
                "convergence_fidelity must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Step indices at which statistics are taken: `0, stride, 2 stride, ...`
    /// and always the final step.
    pub fn recorded_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.steps).step_by(self.record_stride).collect();
        if steps.last() != Some(&self.steps) {
            steps.push(self.steps);
        }
        steps
    }

    fn keeps_record(&self, step_index: usize) -> bool {
        step_index % self.record_stride == 0 || step_index + 1 == self.steps
    }
}

/// State summary of one trajectory at one recorded step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub v: f64,
    pub fidelity: f64,
    pub max_population: f64,
    pub cumulative_leakage: f64,
}

impl Sample {
    fn of(state: &StateVector, sys: &FeedbackSystem, cumulative_leakage: f64) -> Self {
        Self {
            v: sys.value(state),
            fidelity: state.population(sys.model.n_bar),
            max_population: state.dominant_level().1,
            cumulative_leakage,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectorySummary {
    pub index: usize,
    pub seed: u64,
    /// One sample per entry of [`EnsembleConfig::recorded_steps`]. After an
    /// abort the last state is carried forward.
    pub samples: Vec<Sample>,
    /// `max_k V(psi_k)` over every step taken, including `k = 0`.
    pub running_max_v: f64,
    pub final_state: StateVector,
    /// Strided step records, kept only when requested.
    pub records: Vec<StepRecord>,
    pub aborted: Option<Error>,
}

impl TrajectorySummary {
    pub fn final_sample(&self) -> &Sample {
        self.samples.last().expect("at least the initial sample")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsRow {
    pub step: usize,
    pub mean_v: f64,
    pub se_v: f64,
    pub mean_fidelity: f64,
    pub conv_fraction: f64,
    pub fock_fraction: f64,
    pub mean_leakage: f64,
}

#[derive(Clone, Debug)]
pub struct EnsembleStats {
    pub rows: Vec<StatsRow>,
    /// Final-step count of trajectories by dominant Fock level.
    pub dominant_histogram: Vec<usize>,
    pub n_bar: usize,
    pub trajectories: usize,
    pub aborted: usize,
}

impl EnsembleStats {
    pub fn final_row(&self) -> &StatsRow {
        self.rows.last().expect("stats have at least one row")
    }

    /// Fraction of trajectories whose final dominant level is the target.
    pub fn target_mass(&self) -> f64 {
        self.dominant_histogram[self.n_bar] as f64 / self.trajectories as f64
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub config: EnsembleConfig,
    pub stats: EnsembleStats,
    pub trajectories: Vec<TrajectorySummary>,
}

/// Sum in fixed pairwise order; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn fraction(flags: impl Iterator<Item = bool>, n: usize) -> f64 {
    flags.filter(|&f| f).count() as f64 / n as f64
}

/// Runs one trajectory of the ensemble.
pub fn run_single(
    index: usize,
    initial: &StateVector,
    cfg: &EnsembleConfig,
    sys: &FeedbackSystem,
    keep_records: bool,
) -> Result<TrajectorySummary> {
    let seed = trajectory_seed(cfg.master_seed, index as u64);
    let mut traj = Trajectory::new(sys, initial.clone(), RngStream::new(seed))?;
    let recorded = cfg.recorded_steps();
    let mut samples = Vec::with_capacity(recorded.len());
    let mut next_record = recorded.iter().peekable();
    let mut current = Sample::of(initial, sys, 0.0);
    let mut running_max_v = current.v;
    let mut records = Vec::new();
    let mut aborted = None;

    if next_record.peek() == Some(&&0) {
        samples.push(current);
        next_record.next();
    }
    for _ in 0..cfg.steps {
        let (rec, status) = traj.advance();
        running_max_v = running_max_v.max(rec.v_after);
        if keep_records && cfg.keeps_record(rec.step_index) {
            records.push(rec.clone());
        }
        current = Sample::of(traj.state(), sys, traj.cumulative_leakage());
        if next_record.peek() == Some(&&traj.steps_taken()) {
            samples.push(current);
            next_record.next();
        }
        if let Err(e) = status {
            aborted = Some(e);
            break;
        }
    }
    // carry the last state forward after an abort
    samples.extend(next_record.map(|_| current));

    Ok(TrajectorySummary {
        index,
        seed,
        samples,
        running_max_v,
        final_state: traj.state().clone(),
        records,
        aborted,
    })
}

fn aggregate(cfg: &EnsembleConfig, sys: &FeedbackSystem, trajs: &[TrajectorySummary]) -> EnsembleStats {
    let n = trajs.len();
    let rows = cfg
        .recorded_steps()
        .into_iter()
        .enumerate()
        .map(|(k, step)| {
            let col = |f: fn(&Sample) -> f64| trajs.iter().map(|t| f(&t.samples[k])).collect::<Vec<f64>>();
            let (mean_v, se_v) = mean_and_se(&col(|s| s.v));
            let fidelity = col(|s| s.fidelity);
            StatsRow {
                step,
                mean_v,
                se_v,
                mean_fidelity: pairwise_sum(&fidelity) / n as f64,
                conv_fraction: fraction(fidelity.iter().map(|&f| f > cfg.convergence_fidelity), n),
                fock_fraction: fraction(
                    trajs.iter().map(|t| t.samples[k].max_population > cfg.convergence_fidelity),
                    n,
                ),
                mean_leakage: pairwise_sum(&col(|s| s.cumulative_leakage)) / n as f64,
            }
        })
        .collect();
    let mut dominant_histogram = vec![0; sys.model.dim()];
    for t in trajs {
        dominant_histogram[t.final_state.dominant_level().0] += 1;
    }
    EnsembleStats {
        rows,
        dominant_histogram,
        n_bar: sys.model.n_bar,
        trajectories: n,
        aborted: trajs.iter().filter(|t| t.aborted.is_some()).count(),
    }
}

/// Runs the ensemble on `workers` threads (`0` = rayon default).
///
/// Fails when more than 1% of trajectories abort on the leakage budget.
pub fn run_ensemble(
    cfg: &EnsembleConfig,
    sys: &FeedbackSystem,
    initial: &StateVector,
    workers: usize,
    keep_records: bool,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start worker pool: {e}")))?;
    let trajectories: Vec<TrajectorySummary> = pool.install(|| {
        (0..cfg.trajectories)
            .into_par_iter()
            .map(|i| run_single(i, initial, cfg, sys, keep_records))
            .collect::<Result<Vec<_>>>()
    })?;
    let stats = aggregate(cfg, sys, &trajectories);
    if stats.aborted as f64 > MAX_ABORT_FRACTION * cfg.trajectories as f64 {
        return Err(Error::EnsembleAborted {
            aborted: stats.aborted,
            total: cfg.trajectories,
        });
    }
    Ok(EnsembleResult {
        config: *cfg,
        stats,
        trajectories,
    })
}

/// Consecutive recorded steps where the mean of `V` rose by more than
/// `k_se` standard errors (of the later step).
pub fn mean_value_increases(stats: &EnsembleStats, k_se: f64) -> Vec<(usize, f64, f64)> {
    stats
        .rows
        .windows(2)
        .filter(|w| w[1].mean_v > w[0].mean_v + k_se * w[1].se_v)
        .map(|w| (w[1].step, w[0].mean_v, w[1].mean_v))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoobReport {
    pub gamma: f64,
    pub initial_value: f64,
    /// `min(1, V(x) / gamma)`.
    pub bound: f64,
    pub exceedances: usize,
    pub trajectories: usize,
    pub empirical: f64,
    /// Binomial standard error at the bound.
    pub standard_error: f64,
    pub passed: bool,
}

/// Compares the fraction of trajectories whose running maximum of `V`
/// reached `gamma` with `V(x) / gamma`. Passes if the empirical fraction is
/// within three binomial standard errors above the bound.
pub fn doob_audit(result: &EnsembleResult, initial_value: f64, gamma: f64) -> DoobReport {
    let n = result.trajectories.len();
    let exceedances = result
        .trajectories
        .iter()
        .filter(|t| t.running_max_v >= gamma)
        .count();
    let bound = (initial_value / gamma).min(1.0);
    let empirical = exceedances as f64 / n as f64;
    let standard_error = (bound * (1.0 - bound) / n as f64).sqrt();
    DoobReport {
        gamma,
        initial_value,
        bound,
        exceedances,
        trajectories: n,
        empirical,
        standard_error,
        passed: empirical <= bound + 3.0 * standard_error,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub threshold: f64,
    /// Fraction of final states with `max_n |c_n|^2 > threshold`.
    pub fraction: f64,
    /// Dominant-level histogram of the final states.
    pub histogram: Vec<usize>,
    /// Empirical mass of the target level.
    pub target_mass: f64,
}

pub fn fock_concentration_audit(final_states: &[&StateVector], n_bar: usize, threshold: f64) -> ConcentrationReport {
    let n = final_states.len();
    let dim = final_states.first().map_or(0, |s| s.dim());
    let mut histogram = vec![0; dim];
    let mut concentrated = 0;
    for s in final_states {
        let (level, p) = s.dominant_level();
        histogram[level] += 1;
        concentrated += (p > threshold) as usize;
    }
    ConcentrationReport {
        threshold,
        fraction: concentrated as f64 / n as f64,
        target_mass: histogram.get(n_bar).copied().unwrap_or(0) as f64 / n as f64,
        histogram,
    }
}

impl EnsembleResult {
    pub fn concentration(&self) -> ConcentrationReport {
        let finals: Vec<&StateVector> = self.trajectories.iter().map(|t| &t.final_state).collect();
        fock_concentration_audit(&finals, self.stats.n_bar, self.config.convergence_fidelity)
    }
}
