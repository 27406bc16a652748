//! Truncated Fock space: states, ladder and QND measurement operators.
//!
//! The basis is `|0>, ..., |n_max>`; all operators act on this
//! `n_max + 1` dimensional space.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Physical constants of the cavity model and the truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Measurement phase offset (radians).
    pub theta: f64,
    /// Phase shift per photon (radians).
    pub phi: f64,
    /// Target photon number.
    pub n_bar: usize,
    /// Highest retained photon number.
    pub n_max: usize,
}

impl ModelParams {
    pub fn new(theta: f64, phi: f64, n_bar: usize, n_max: usize) -> Result<Self> {
        let params = Self { theta, phi, n_bar, n_max };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return Err(Error::InvalidParams("theta and phi must be finite".into()));
        }
        if self.phi == 0.0 {
            return Err(Error::InvalidParams("phi must be nonzero".into()));
        }
        if self.n_bar < 2 {
            return Err(Error::InvalidParams(format!(
                "sigma table requires n_bar >= 2 (got n_bar = {})",
                self.n_bar
            )));
        }
        if self.n_bar + 2 > self.n_max {
            return Err(Error::InvalidParams(format!(
                "target must sit inside the truncation: n_bar + 2 <= n_max (got n_bar = {}, n_max = {})",
                self.n_bar, self.n_max
            )));
        }
        Ok(())
    }

    /// Dimension of the truncated space.
    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// Measurement angle `theta + n phi` of level `n`.
    pub fn level_angle(&self, n: usize) -> f64 {
        self.theta + n as f64 * self.phi
    }
}

/// Unit vector over the truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Normalizes `amps`; fails on the zero vector.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let norm_sqr: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        if !(norm_sqr > 0.0) || !norm_sqr.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let norm = norm_sqr.sqrt();
        Ok(Self {
            amps: amps.into_iter().map(|c| c / norm).collect(),
        })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Renormalizes and returns the squared-norm drift `| ||v||^2 - 1 |`.
    pub(crate) fn from_unnormalized(amps: Vec<Complex64>) -> Result<(Self, f64)> {
        let norm_sqr: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        let state = Self::from_amplitudes(amps)?;
        Ok((state, (norm_sqr - 1.0).abs()))
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_max(&self) -> usize {
        self.amps.len() - 1
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amps.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn population(&self, n: usize) -> f64 {
        self.amps.get(n).map_or(0.0, |c| c.norm_sqr())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(n, c)| n as f64 * c.norm_sqr())
            .sum()
    }

    /// Largest level population and its index (lowest index on ties).
    pub fn dominant_level(&self) -> (usize, f64) {
        let mut best = (0, self.amps[0].norm_sqr());
        for (n, c) in self.amps.iter().enumerate().skip(1) {
            let p = c.norm_sqr();
            if p > best.1 {
                best = (n, p);
            }
        }
        best
    }

    /// Random state supported on levels `0..support` of an `n_max`
    /// truncation. Real and imaginary parts are drawn uniformly on `[-1, 1)`.
    pub fn random(rng: &mut RngStream, support: usize, n_max: usize) -> Self {
        assert!(support >= 1 && support <= n_max + 1);
        loop {
            let mut amps = vec![Complex64::new(0.0, 0.0); n_max + 1];
            for c in amps.iter_mut().take(support) {
                *c = Complex64::new(rng.next_signed(), rng.next_signed());
            }
            if let Ok(state) = Self::from_amplitudes(amps) {
                return state;
            }
        }
    }
}

/// `|n>` in the truncated basis.
pub fn fock_state(n: usize, params: &ModelParams) -> Result<StateVector> {
    if n > params.n_max {
        return Err(Error::IndexOutOfRange { index: n, n_max: params.n_max });
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); params.dim()];
    amps[n] = Complex64::new(1.0, 0.0);
    Ok(StateVector { amps })
}

/// Probability mass a coherent state of real amplitude `alpha` places above
/// `n_max`, summed term by term.
pub fn coherent_tail(alpha: f64, n_max: usize) -> f64 {
    let mean = alpha * alpha;
    if mean == 0.0 {
        return 0.0;
    }
    // log of the Poisson weight of level n_max + 1
    let mut log_p = -mean;
    for k in 1..=n_max + 1 {
        log_p += mean.ln() - (k as f64).ln();
    }
    let mut term = log_p.exp();
    let mut tail = 0.0;
    let mut k = n_max + 1;
    loop {
        tail += term;
        k += 1;
        term *= mean / k as f64;
        if term < tail * 1e-17 || term == 0.0 {
            break;
        }
    }
    tail
}

/// Coherent state `D_alpha |0>` restricted to the truncation and renormalized.
pub fn coherent_state(alpha: f64, params: &ModelParams) -> Result<StateVector> {
    let tail = coherent_tail(alpha, params.n_max);
    if tail >= 1e-9 {
        return Err(Error::TruncationLeakage { alpha, n_max: params.n_max, tail });
    }
    let mut amps = Vec::with_capacity(params.dim());
    let mut c = (-alpha * alpha / 2.0).exp();
    amps.push(Complex64::new(c, 0.0));
    for n in 1..=params.n_max {
        c *= alpha / (n as f64).sqrt();
        amps.push(Complex64::new(c, 0.0));
    }
    StateVector::from_amplitudes(amps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    Annihilation,
    Creation,
}

/// Exact truncated action of `a` or `a^dagger`, not renormalized. For
/// creation the amplitude pushed past `n_max` is dropped and its squared
/// magnitude returned as leakage.
pub fn apply_ladder(state: &StateVector, which: Ladder) -> (Vec<Complex64>, f64) {
    let c = state.amplitudes();
    let d = c.len();
    let mut out = vec![Complex64::new(0.0, 0.0); d];
    match which {
        Ladder::Annihilation => {
            for n in 1..d {
                out[n - 1] = c[n] * (n as f64).sqrt();
            }
            (out, 0.0)
        }
        Ladder::Creation => {
            for n in 0..d - 1 {
                out[n + 1] = c[n] * ((n + 1) as f64).sqrt();
            }
            let leak = c[d - 1].norm_sqr() * d as f64;
            (out, leak)
        }
    }
}

/// `(a^dagger - a) psi` on the truncated space.
pub fn apply_generator(amps: &[Complex64]) -> Vec<Complex64> {
    let d = amps.len();
    (0..d)
        .map(|n| {
            let up = if n > 0 { amps[n - 1] * (n as f64).sqrt() } else { Complex64::new(0.0, 0.0) };
            let down = if n + 1 < d {
                amps[n + 1] * ((n + 1) as f64).sqrt()
            } else {
                Complex64::new(0.0, 0.0)
            };
            up - down
        })
        .collect()
}

/// Diagonal entries of `M_g = cos(theta + N phi)` and `M_e = sin(theta + N phi)`.
pub fn measurement_values(params: &ModelParams) -> (Vec<f64>, Vec<f64>) {
    (0..params.dim())
        .map(|n| {
            let (s, c) = params.level_angle(n).sin_cos();
            (c, s)
        })
        .unzip()
}

/// Measurement outcome of one QND probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "g")]
    Ground,
    #[serde(rename = "e")]
    Excited,
}

impl Outcome {
    pub fn label(self) -> char {
        match self {
            Outcome::Ground => 'g',
            Outcome::Excited => 'e',
        }
    }
}

/// Cached diagonals of the two measurement operators and their squares.
#[derive(Clone, Debug)]
pub struct Measurement {
    pub g: Vec<f64>,
    pub e: Vec<f64>,
    pub g2: Vec<f64>,
    pub e2: Vec<f64>,
}

impl Measurement {
    pub fn new(params: &ModelParams) -> Self {
        let (g, e) = measurement_values(params);
        let g2 = g.iter().map(|x| x * x).collect();
        let e2 = e.iter().map(|x| x * x).collect();
        Self { g, e, g2, e2 }
    }

    fn diag(&self, s: Outcome) -> &[f64] {
        match s {
            Outcome::Ground => &self.g,
            Outcome::Excited => &self.e,
        }
    }

    fn diag_sqr(&self, s: Outcome) -> &[f64] {
        match s {
            Outcome::Ground => &self.g2,
            Outcome::Excited => &self.e2,
        }
    }

    /// `P_s = ||M_s psi||^2`.
    pub fn probability(&self, state: &StateVector, s: Outcome) -> f64 {
        state
            .amplitudes()
            .iter()
            .zip(self.diag_sqr(s))
            .map(|(c, w)| w * c.norm_sqr())
            .sum()
    }

    /// `M_s psi / ||M_s psi||` together with `P_s`.
    pub fn collapse(&self, state: &StateVector, s: Outcome) -> Result<(StateVector, f64)> {
        let p = self.probability(state, s);
        if !(p > 0.0) {
            return Err(Error::ZeroProbabilityBranch(s.label()));
        }
        let amps = state
            .amplitudes()
            .iter()
            .zip(self.diag(s))
            .map(|(c, m)| c * m)
            .collect();
        Ok((StateVector::from_amplitudes(amps)?, p))
    }
}

/// Convenience wrapper around [`Measurement::collapse`].
pub fn collapse(state: &StateVector, s: Outcome, params: &ModelParams) -> Result<(StateVector, f64)> {
    Measurement::new(params).collapse(state, s)
}

/// Outcome of the finite-truncation non-degeneracy scan.
#[derive(Clone, Debug, PartialEq)]
pub struct DegeneracyReport {
    pub tol: f64,
    /// Pairs `(m, n)`, `m < n`, with `|cos^2(phi_m) - cos^2(phi_n)| <= tol`.
    pub collisions: Vec<(usize, usize)>,
}

impl DegeneracyReport {
    pub fn passed(&self) -> bool {
        self.collisions.is_empty()
    }
}

/// Checks that the eigenvalues `cos^2(theta + n phi)`, `0 <= n <= n_max`,
/// are pairwise distinct within `tol`.
pub fn check_a1(params: &ModelParams, tol: f64) -> DegeneracyReport {
    let vals: Vec<f64> = (0..params.dim())
        .map(|n| params.level_angle(n).cos().powi(2))
        .collect();
    let mut collisions = Vec::new();
    for m in 0..vals.len() {
        for n in m + 1..vals.len() {
            if (vals[m] - vals[n]).abs() <= tol {
                collisions.push((m, n));
            }
        }
    }
    DegeneracyReport { tol, collisions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    fn params(n_max: usize) -> ModelParams {
        ModelParams::new(0.25, 0.61, 2, n_max).unwrap()
    }

    #[test]
    fn fock_state_one_hot_and_orthonormal() {
        let p = params(10);
        let zero = fock_state(0, &p).unwrap();
        assert_eq!(zero.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert!(zero.amplitudes()[1..].iter().all(|c| c.norm() == 0.0));
        let top = fock_state(10, &p).unwrap();
        assert_eq!(top.amplitudes()[10].re, 1.0);
        for m in 0..=5 {
            for n in 0..=5 {
                let ip = fock_state(m, &p).unwrap().inner(&fock_state(n, &p).unwrap());
                assert_eq!(ip.re, if m == n { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(
            fock_state(11, &p),
            Err(Error::IndexOutOfRange { index: 11, n_max: 10 })
        );
    }

    #[test]
    fn param_validation() {
        assert!(ModelParams::new(0.25, 0.61, 1, 40).is_err());
        assert!(ModelParams::new(0.25, 0.61, 2, 3).is_err());
        assert!(ModelParams::new(0.25, 0.0, 2, 40).is_err());
        assert!(ModelParams::new(0.25, 0.61, 2, 4).is_ok());
    }

    #[test]
    fn coherent_vacuum_and_ratio() {
        let vac = coherent_state(0.0, &params(30)).unwrap();
        assert_eq!(vac, fock_state(0, &params(30)).unwrap());
        let s = coherent_state(1.0, &params(30)).unwrap();
        let r = s.amplitudes()[1].re / s.amplitudes()[0].re;
        assert!((r - 1.0).abs() < 1e-15);
    }

    #[test]
    fn coherent_mean_photon_number_by_direct_summation() {
        let s = coherent_state(1.5, &params(40)).unwrap();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        assert!((s.mean_photon_number() - 2.25).abs() < 1e-8);
    }

    #[test]
    fn coherent_rejects_heavy_tail() {
        let err = coherent_state(4.0, &params(10)).unwrap_err();
        assert!(matches!(err, Error::TruncationLeakage { .. }));
    }

    #[test]
    fn coherent_tail_matches_complement() {
        // tail of Poisson(4) above 10 by complement of the head sum
        let mean: f64 = 4.0;
        let mut head = 0.0;
        let mut w = (-mean).exp();
        for k in 0..=10 {
            if k > 0 {
                w *= mean / k as f64;
            }
            head += w;
        }
        assert!((coherent_tail(2.0, 10) - (1.0 - head)).abs() < 1e-13);
    }

    #[test]
    fn ladder_actions() {
        let p = params(10);
        let (v, leak) = apply_ladder(&fock_state(3, &p).unwrap(), Ladder::Annihilation);
        assert!((v[2].re - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(leak, 0.0);
        assert_eq!(v.iter().filter(|c| c.norm() > 0.0).count(), 1);

        let (v, leak) = apply_ladder(&fock_state(0, &p).unwrap(), Ladder::Annihilation);
        assert!(v.iter().all(|c| c.norm() == 0.0));
        assert_eq!(leak, 0.0);

        let (v, leak) = apply_ladder(&fock_state(10, &p).unwrap(), Ladder::Creation);
        assert!(v.iter().all(|c| c.norm() == 0.0));
        assert!((leak - 11.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_value_table() {
        let p = ModelParams { theta: 0.0, phi: 0.61, n_bar: 2, n_max: 40 };
        let (g, e) = measurement_values(&p);
        assert_eq!((g[0], e[0]), (1.0, 0.0));
        for (a, b) in g.iter().zip(&e) {
            assert!((a * a + b * b - 1.0).abs() <= 1e-15);
        }
        // phi = 0 is only reachable by bypassing validation
        let flat = ModelParams { theta: FRAC_PI_4, phi: 0.0, n_bar: 2, n_max: 5 };
        let (g, e) = measurement_values(&flat);
        for n in 0..=5 {
            assert!((g[n] - 0.5f64.sqrt()).abs() < 1e-15);
            assert!((e[n] - 0.5f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn collapse_fixes_fock_states() {
        let p = params(20);
        let m = Measurement::new(&p);
        for n in [0, 3, 7] {
            let s = fock_state(n, &p).unwrap();
            let (out, pg) = m.collapse(&s, Outcome::Ground).unwrap();
            assert!((out.population(n) - 1.0).abs() < 1e-15);
            assert!((pg - p.level_angle(n).cos().powi(2)).abs() < 1e-15);
            let (out_e, _) = m.collapse(&s, Outcome::Excited).unwrap();
            assert!((out_e.population(n) - 1.0).abs() < 1e-15);
            // idempotent
            let (again, pg2) = m.collapse(&out, Outcome::Ground).unwrap();
            assert!((pg2 - pg).abs() < 1e-15);
            assert!((again.population(n) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn collapse_zero_branch_is_error() {
        // theta = 0 makes |0> a g-eigenstate with P_e = 0
        let p = ModelParams { theta: 0.0, phi: 0.61, n_bar: 2, n_max: 10 };
        let s = fock_state(0, &p).unwrap();
        assert_eq!(
            collapse(&s, Outcome::Excited, &p),
            Err(Error::ZeroProbabilityBranch('e'))
        );
    }

    #[test]
    fn branch_probabilities_and_population_martingale() {
        let p = params(40);
        let m = Measurement::new(&p);
        let mut rng = RngStream::new(11);
        for _ in 0..100 {
            let s = StateVector::random(&mut rng, 41, 40);
            let (sg, pg) = m.collapse(&s, Outcome::Ground).unwrap();
            let (se, pe) = m.collapse(&s, Outcome::Excited).unwrap();
            assert!((pg + pe - 1.0).abs() <= 1e-14);
            for n in 0..=40 {
                let mixed = pg * sg.population(n) + pe * se.population(n);
                assert!((mixed - s.population(n)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn a1_scan() {
        let quarter = ModelParams { theta: 0.0, phi: FRAC_PI_2, n_bar: 2, n_max: 40 };
        let rep = check_a1(&quarter, 1e-6);
        assert!(!rep.passed());
        assert!(rep.collisions.contains(&(0, 2)));

        let rep = check_a1(&params(40), 1e-6);
        assert!(rep.passed(), "{:?}", rep.collisions);

        // cos^2 has period pi, so levels three apart coincide when phi = pi/3
        let third = ModelParams { theta: 0.25, phi: FRAC_PI_3, n_bar: 2, n_max: 40 };
        let rep = check_a1(&third, 1e-6);
        assert!(!rep.passed());
        assert!(rep.collisions.contains(&(0, 3)));
        assert!(rep.collisions.contains(&(0, 6)));
    }
}
