//! Deterministic identity suite: each check reports its measured error
//! against a fixed tolerance.

use std::fmt;

use serde::Serialize;

use crate::displacement::{displacement_oracle_entry, displacement_series, DisplacementTable};
use crate::error::Result;
use crate::fock::{fock_state, ModelParams, Outcome, StateVector};
use crate::lyapunov::{
    expected_halfstep_value, f1_slope, f2_curvature, k2_closed_form, sigma_curvature_coefficient, LyapunovParams,
};
use crate::markov::{expected_next_value, FeedbackSystem};
use crate::rng::RngStream;

pub const SIGMA_TOL: f64 = 1e-14;
pub const K2_TOL: f64 = 1e-10;
pub const F1_REL_TOL: f64 = 1e-6;
pub const F1_STEP: f64 = 1e-4;
pub const F2_REL_TOL: f64 = 1e-5;
pub const F2_STEP: f64 = 1e-3;
pub const FOCK_CURVATURE_TOL: f64 = 1e-12;
pub const ORACLE_TOL: f64 = 1e-8;
pub const ORTHOGONALITY_TOL: f64 = 1e-10;
pub const SUPERMARTINGALE_TOL: f64 = 1e-12;
pub const POPULATION_TOL: f64 = 1e-12;

pub const ORACLE_N_MAX: usize = 60;
pub const ORACLE_BLOCK: usize = 30;
pub const ORACLE_ALPHAS: [f64; 3] = [0.1, 0.5, 1.0];
/// Highest level at which the curvature identities are checked.
pub const IDENTITY_MAX_LEVEL: usize = 39;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= tolerance`; NaN fails.
    fn at_most(name: &str, measured: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<24} measured {:.3e}  tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, "  ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Levels `2 <= n <= min(n_max - 1, 39)` away from the target and its
/// neighbours.
pub fn sigma_identity_levels(n_bar: usize, n_max: usize) -> Vec<usize> {
    (2..n_max.min(IDENTITY_MAX_LEVEL + 1))
        .filter(|&n| n != n_bar && n + 1 != n_bar && n != n_bar + 1)
        .collect()
}

fn worst(errors: impl Iterator<Item = (usize, f64)>) -> (f64, Option<usize>) {
    errors.fold((0.0, None), |(e, at), (n, x)| {
        if x > e || x.is_nan() {
            (x, Some(n))
        } else {
            (e, at)
        }
    })
}

/// `(n+1) s_{n+1} + n s_{n-1} - (2n+1) s_n = -1/(n(n+1))` on the table held
/// by `lp`.
pub fn sigma_identity_check(lp: &LyapunovParams) -> Check {
    let levels = sigma_identity_levels(lp.n_bar, lp.n_max());
    let errors: Vec<(usize, f64)> = levels
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let err = (sigma_curvature_coefficient(&lp.sigma, n) + 1.0 / (nf * (nf + 1.0))).abs();
            (n, err)
        })
        .collect();
    let (max_err, _) = worst(errors.iter().copied());
    let bad: Vec<String> = errors
        .iter()
        .filter(|(_, e)| !(*e <= SIGMA_TOL))
        .map(|(n, e)| format!("n = {n}: {e:.3e}"))
        .collect();
    let detail = if bad.is_empty() {
        format!("{} levels", levels.len())
    } else {
        format!("offending {}", bad.join(", "))
    };
    Check::at_most("sigma_identity", max_err, SIGMA_TOL, detail)
}

/// States with support `0..s`, `s` uniform in `min_support..=max_support`.
pub fn random_states(
    rng: &mut RngStream,
    count: usize,
    min_support: usize,
    max_support: usize,
    n_max: usize,
) -> Vec<StateVector> {
    let span = (max_support - min_support + 1) as u64;
    (0..count)
        .map(|_| {
            let support = min_support + (rng.next_u64() % span) as usize;
            StateVector::random(rng, support, n_max)
        })
        .collect()
}

/// Branch-sum measurement decrement against its closed form.
pub fn k2_check(lp: &LyapunovParams, states: &[StateVector]) -> Check {
    let (err, at) = worst(
        states
            .iter()
            .enumerate()
            .map(|(i, s)| (i, (expected_halfstep_value(s, lp) - k2_closed_form(s, lp)).abs())),
    );
    Check::at_most(
        "k2_closed_form",
        err,
        K2_TOL,
        format!("{} states, worst #{}", states.len(), at.unwrap_or(0)),
    )
}

/// Fourth-order central differences of `V1(D_alpha psi)` at zero against
/// the analytic slope and curvature coefficients. The displaced states come
/// from the power series of the exponential. `states` must vanish on the
/// top three levels.
pub fn finite_difference_checks(lp: &LyapunovParams, states: &[StateVector]) -> [Check; 2] {
    let mut f1_errs = Vec::with_capacity(states.len());
    let mut f2_errs = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let v1 = |a: f64| lp.weighted_population(&displacement_series(s.amplitudes(), a));
        let v0 = lp.weighted_population(s.amplitudes());
        let h = F1_STEP;
        let fd1 = (8.0 * (v1(h) - v1(-h)) - (v1(2.0 * h) - v1(-2.0 * h))) / (12.0 * h);
        let h = F2_STEP;
        let fd2 = (16.0 * (v1(h) + v1(-h)) - (v1(2.0 * h) + v1(-2.0 * h)) - 30.0 * v0) / (24.0 * h * h);
        let (f1, f2) = (f1_slope(s, lp), f2_curvature(s, lp));
        f1_errs.push((i, ((fd1 - f1) / f1).abs()));
        f2_errs.push((i, ((fd2 - f2) / f2).abs()));
    }
    let (e1, a1) = worst(f1_errs.into_iter());
    let (e2, a2) = worst(f2_errs.into_iter());
    [
        Check::at_most(
            "f1_finite_difference",
            e1,
            F1_REL_TOL,
            format!("relative, h = {F1_STEP}, worst #{}", a1.unwrap_or(0)),
        ),
        Check::at_most(
            "f2_finite_difference",
            e2,
            F2_REL_TOL,
            format!("relative, h = {F2_STEP}, worst #{}", a2.unwrap_or(0)),
        ),
    ]
}

/// Curvature at Fock states: `-1/(m(m+1))` away from the target, positive
/// at the target.
pub fn fock_curvature_checks(lp: &LyapunovParams, model: &ModelParams) -> Result<[Check; 2]> {
    let mut errs = Vec::new();
    for m in sigma_identity_levels(lp.n_bar, lp.n_max()) {
        let mf = m as f64;
        let f2 = f2_curvature(&fock_state(m, model)?, lp);
        errs.push((m, (f2 + 1.0 / (mf * (mf + 1.0))).abs()));
    }
    let (err, at) = worst(errs.into_iter());
    let target = f2_curvature(&fock_state(lp.n_bar, model)?, lp);
    Ok([
        Check::at_most(
            "f2_fock_levels",
            err,
            FOCK_CURVATURE_TOL,
            format!("worst m = {}", at.unwrap_or(0)),
        ),
        Check {
            name: "f2_target_positive".into(),
            measured: target,
            tolerance: 0.0,
            passed: target > 0.0,
            detail: format!("f2(|{}>) must exceed 0", lp.n_bar),
        },
    ])
}

/// Truncated displacement against the Laguerre closed form on the top-left
/// block at `n_max = 60`, and orthogonality of the truncated matrix.
pub fn displacement_checks() -> Result<[Check; 2]> {
    let max_alpha = ORACLE_ALPHAS.iter().copied().fold(0.0, f64::max);
    let table = DisplacementTable::new(ORACLE_N_MAX, max_alpha)?;
    let mut entry_err = 0.0f64;
    let mut orth_err = 0.0f64;
    for &alpha in &ORACLE_ALPHAS {
        let d = table.matrix(alpha);
        for m in 0..ORACLE_BLOCK {
            for n in 0..ORACLE_BLOCK {
                entry_err = entry_err.max((d[(m, n)] - displacement_oracle_entry(m, n, alpha)).abs());
            }
        }
        orth_err = orth_err.max(table.orthogonality_error(alpha));
    }
    Ok([
        Check::at_most(
            "displacement_oracle",
            entry_err,
            ORACLE_TOL,
            format!("{ORACLE_BLOCK}x{ORACLE_BLOCK} block, n_max = {ORACLE_N_MAX}"),
        ),
        Check::at_most(
            "displacement_orthogonal",
            orth_err,
            ORTHOGONALITY_TOL,
            format!("n_max = {ORACLE_N_MAX}"),
        ),
    ])
}

/// `E[V(psi_{k+1})] - V(psi) <= 0` under the full feedback law.
pub fn supermartingale_check(sys: &FeedbackSystem, states: &[StateVector]) -> Check {
    let (inc, at) = worst(
        states
            .iter()
            .enumerate()
            .map(|(i, s)| (i, expected_next_value(s, sys) - sys.value(s))),
    );
    Check::at_most(
        "supermartingale",
        inc,
        SUPERMARTINGALE_TOL,
        format!("largest increase, {} states, worst #{}", states.len(), at.unwrap_or(0)),
    )
}

/// `P_g |<n|psi_g>|^2 + P_e |<n|psi_e>|^2 = |<n|psi>|^2` for every level.
pub fn population_martingale_check(lp: &LyapunovParams, states: &[StateVector]) -> Check {
    let meas = lp.measurement();
    let mut err = 0.0f64;
    for s in states {
        let mut mixed = vec![0.0; s.dim()];
        for o in [Outcome::Ground, Outcome::Excited] {
            if let Ok((post, p)) = meas.collapse(s, o) {
                for (m, q) in mixed.iter_mut().zip(post.populations()) {
                    *m += p * q;
                }
            }
        }
        for (m, q) in mixed.iter().zip(s.populations()) {
            err = err.max((m - q).abs());
        }
    }
    Check::at_most(
        "population_martingale",
        err,
        POPULATION_TOL,
        format!("{} states, all levels", states.len()),
    )
}

/// Sample sizes of the randomized checks.
#[derive(Clone, Copy, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    pub k2_states: usize,
    pub fd_states: usize,
    pub supermartingale_states: usize,
    pub population_states: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            k2_states: 200,
            fd_states: 100,
            supermartingale_states: 100,
            population_states: 100,
        }
    }
}

/// Runs every check for the system. The Lyapunov parameters are taken
/// from `sys`, so a tampered weight table shows up here.
pub fn run_suite(sys: &FeedbackSystem, opts: &SuiteOptions) -> Result<VerifyReport> {
    let lp = &sys.lyapunov;
    let n_max = sys.model.n_max;
    let mut rng = RngStream::new(opts.seed);
    let mut checks = vec![sigma_identity_check(lp)];

    let states = random_states(&mut rng, opts.k2_states, 1, n_max + 1, n_max);
    checks.push(k2_check(lp, &states));

    let interior = random_states(&mut rng, opts.fd_states, 2, n_max - 2, n_max);
    checks.extend(finite_difference_checks(lp, &interior));
    checks.extend(fock_curvature_checks(lp, &sys.model)?);
    checks.extend(displacement_checks()?);

    let states = random_states(&mut rng, opts.supermartingale_states, 1, n_max + 1, n_max);
    checks.push(supermartingale_check(sys, &states));
    let states = random_states(&mut rng, opts.population_states, 1, n_max + 1, n_max);
    checks.push(population_martingale_check(lp, &states));
    Ok(VerifyReport { checks })
}
