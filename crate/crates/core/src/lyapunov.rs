//! The strict Lyapunov function for the target Fock state, its weight table,
//! the measurement-induced decrement and the Taylor coefficients of the
//! weighted population term under displacement.
//!
//! `V(psi) = V1 + V2` with
//!
//! ```text
//! V1 = sum_n sigma_n |c_n|^2
//! V2 = delta (cos^4 phi_nbar + sin^4 phi_nbar - ||M_g psi||^4 - ||M_e psi||^4)
//! ```

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{apply_generator, Measurement, ModelParams, Outcome, StateVector};

/// Weights `sigma_0 .. sigma_{n_max}` for target `n_bar`.
///
/// Decreasing from `1/8 + sum_{k=1}^{n_bar} (1/k - 1/k^2)` at `n = 0` to zero
/// at `n_bar`, then growing like `sum_{k=n_bar+1}^{n} (1/k + 1/k^2)`.
pub fn sigma_table(n_bar: usize, n_max: usize) -> Result<Vec<f64>> {
    if n_bar < 2 {
        return Err(Error::InvalidParams(format!(
            "sigma table requires n_bar >= 2 (got {n_bar})"
        )));
    }
    if n_bar + 2 > n_max {
        return Err(Error::InvalidParams(format!(
            "sigma table requires n_bar + 2 <= n_max (got n_bar = {n_bar}, n_max = {n_max})"
        )));
    }
    let below = |from: usize| -> f64 {
        (from..=n_bar)
            .map(|k| {
                let k = k as f64;
                1.0 / k - 1.0 / (k * k)
            })
            .sum()
    };
    let mut sigma = vec![0.0; n_max + 1];
    sigma[0] = 0.125 + below(1);
    for (n, s) in sigma.iter_mut().enumerate().take(n_bar).skip(1) {
        *s = below(n + 1);
    }
    let mut acc = 0.0;
    for (n, s) in sigma.iter_mut().enumerate().skip(n_bar + 1) {
        let k = n as f64;
        acc += 1.0 / k + 1.0 / (k * k);
        *s = acc;
    }
    Ok(sigma)
}

/// `(n+1) sigma_{n+1} + n sigma_{n-1} - (2n+1) sigma_n`, the diagonal
/// coefficient of the curvature at `|n>`. Terms outside the table are dropped.
///
/// Evaluated as `(n+1)(sigma_{n+1} - sigma_n) - n(sigma_n - sigma_{n-1})`;
/// neighbouring differences are exact in floating point, which keeps the
/// rounding error independent of the magnitude of `sigma_n`.
pub fn sigma_curvature_coefficient(sigma: &[f64], n: usize) -> f64 {
    let nf = n as f64;
    let up = sigma.get(n + 1).map_or(-sigma[n], |s| s - sigma[n]);
    let down = if n > 0 { sigma[n] - sigma[n - 1] } else { 0.0 };
    (nf + 1.0) * up - nf * down
}

/// Largest admissible `delta` (exclusive): `min(sigma_{n_bar-1}, sigma_{n_bar+1}) / 2`.
pub fn delta_upper_bound(sigma: &[f64], n_bar: usize) -> f64 {
    sigma[n_bar - 1].min(sigma[n_bar + 1]) / 2.0
}

/// `0.3 * min(sigma_{n_bar-1}, sigma_{n_bar+1}) / 2`.
pub fn default_delta(sigma: &[f64], n_bar: usize) -> f64 {
    0.3 * delta_upper_bound(sigma, n_bar)
}

#[derive(Clone, Debug)]
pub struct LyapunovParams {
    pub delta: f64,
    pub sigma: Vec<f64>,
    /// `phi_n = theta + n phi`.
    pub phi_table: Vec<f64>,
    pub n_bar: usize,
    measurement: Measurement,
    v2_offset: f64,
}

impl LyapunovParams {
    /// Builds the weights for `model`; `delta = None` selects [`default_delta`].
    pub fn new(model: &ModelParams, delta: Option<f64>) -> Result<Self> {
        model.validate()?;
        let sigma = sigma_table(model.n_bar, model.n_max)?;
        let delta = delta.unwrap_or_else(|| default_delta(&sigma, model.n_bar));
        let bound = delta_upper_bound(&sigma, model.n_bar);
        if !(delta >= 0.0) || delta >= bound {
            return Err(Error::InvalidParams(format!(
                "delta = {delta} violates the non-negativity bound 0 <= delta < {bound}"
            )));
        }
        Ok(Self::from_parts(model, delta, sigma))
    }

    /// Assembles parameters from an explicit weight table without checking
    /// any invariant. Used to inject faulty tables into the verification suite.
    pub fn from_parts(model: &ModelParams, delta: f64, sigma: Vec<f64>) -> Self {
        let measurement = Measurement::new(model);
        let nb = model.n_bar;
        let v2_offset = measurement.g2[nb] * measurement.g2[nb] + measurement.e2[nb] * measurement.e2[nb];
        Self {
            delta,
            phi_table: (0..model.dim()).map(|n| model.level_angle(n)).collect(),
            sigma,
            n_bar: nb,
            measurement,
            v2_offset,
        }
    }

    pub fn measurement(&self) -> &Measurement {
        &self.measurement
    }

    pub fn n_max(&self) -> usize {
        self.sigma.len() - 1
    }

    /// Checks the weight-table invariants and the delta bound.
    pub fn validate(&self) -> Result<()> {
        let nb = self.n_bar;
        if self.sigma[nb] != 0.0 {
            return Err(Error::InvalidParams(format!("sigma[{nb}] must be zero")));
        }
        if let Some((n, _)) = self
            .sigma
            .iter()
            .enumerate()
            .find(|&(n, &s)| n != nb && !(s > 0.0))
        {
            return Err(Error::InvalidParams(format!("sigma[{n}] must be positive")));
        }
        if let Some(n) = (nb + 2..self.sigma.len()).find(|&n| self.sigma[n] <= self.sigma[n - 1]) {
            return Err(Error::InvalidParams(format!(
                "sigma must increase above n_bar (fails at n = {n})"
            )));
        }
        let bound = delta_upper_bound(&self.sigma, nb);
        if !(self.delta >= 0.0) || self.delta >= bound {
            return Err(Error::InvalidParams(format!(
                "delta = {} violates the non-negativity bound 0 <= delta < {bound}",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovBreakdown {
    pub v1: f64,
    pub v2: f64,
    pub total: f64,
}

impl LyapunovParams {
    /// `V` evaluated from level populations `|c_n|^2` (assumed to sum to one).
    pub fn value_from_populations(&self, pops: impl Iterator<Item = f64>) -> LyapunovBreakdown {
        let m = &self.measurement;
        let (mut v1, mut tg, mut te) = (0.0, 0.0, 0.0);
        for (n, p) in pops.enumerate() {
            v1 += self.sigma[n] * p;
            tg += m.g2[n] * p;
            te += m.e2[n] * p;
        }
        let v2 = self.delta * (self.v2_offset - tg * tg - te * te);
        LyapunovBreakdown { v1, v2, total: v1 + v2 }
    }

    /// `V` of the normalized version of `amps`.
    pub fn value_of_amplitudes(&self, amps: &[Complex64]) -> f64 {
        let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        let inv = norm.recip();
        self.value_from_populations(amps.iter().map(|c| c.norm_sqr() * inv))
            .total
    }

    /// `V1 = sum sigma_n |c_n|^2` of the normalized version of `amps`.
    pub fn weighted_population(&self, amps: &[Complex64]) -> f64 {
        let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
        amps.iter()
            .zip(&self.sigma)
            .map(|(c, s)| s * c.norm_sqr())
            .sum::<f64>()
            / norm
    }
}

pub fn lyapunov_value(state: &StateVector, lp: &LyapunovParams) -> LyapunovBreakdown {
    lp.value_from_populations(state.amplitudes().iter().map(|c| c.norm_sqr()))
}

/// Closed-form measurement decrement
/// `delta * (-2) (t4 - t2^2)^2 / (t2 (1 - t2))` with
/// `t2 = tr(M_g^2 rho)`, `t4 = tr(M_g^4 rho)`. Zero when either branch is
/// impossible.
pub fn k2_closed_form(state: &StateVector, lp: &LyapunovParams) -> f64 {
    let m = lp.measurement();
    let (mut t2, mut t4, mut te) = (0.0, 0.0, 0.0);
    for (n, c) in state.amplitudes().iter().enumerate() {
        let p = c.norm_sqr();
        t2 += m.g2[n] * p;
        t4 += m.g2[n] * m.g2[n] * p;
        te += m.e2[n] * p;
    }
    if !(t2 > 0.0) || !(te > 0.0) {
        return 0.0;
    }
    let spread = t4 - t2 * t2;
    -2.0 * lp.delta * spread * spread / (t2 * te)
}

/// Exact two-outcome expectation `E[V(psi_{k+1/2})] - V(psi)`.
pub fn expected_halfstep_value(state: &StateVector, lp: &LyapunovParams) -> f64 {
    let v = lyapunov_value(state, lp).total;
    let mut expected = 0.0;
    for s in [Outcome::Ground, Outcome::Excited] {
        if let Ok((post, p)) = lp.measurement().collapse(state, s) {
            expected += p * lyapunov_value(&post, lp).total;
        }
    }
    expected - v
}

/// Second-order coefficient of `V1(D_alpha psi)` at `alpha = 0`.
///
/// Indices outside the truncation are dropped, so the result is exact only
/// for states with negligible weight on the top two levels.
pub fn f2_curvature(state: &StateVector, lp: &LyapunovParams) -> f64 {
    let c = state.amplitudes();
    let sigma = &lp.sigma;
    let d = c.len();
    let diag: f64 = (0..d)
        .map(|n| c[n].norm_sqr() * sigma_curvature_coefficient(sigma, n))
        .sum();
    let off: f64 = (1..d.saturating_sub(1))
        .map(|n| {
            let nf = n as f64;
            (c[n - 1] * c[n + 1].conj()).re
                * (nf * (nf + 1.0)).sqrt()
                * (sigma[n - 1] + sigma[n + 1] - 2.0 * sigma[n])
        })
        .sum();
    diag + off
}

/// First-order coefficient of `V1(D_alpha psi)` at `alpha = 0`:
/// `sum_n sigma_n 2 Re{<n|(a^dagger - a)|psi> conj(c_n)}`.
pub fn f1_slope(state: &StateVector, lp: &LyapunovParams) -> f64 {
    let c = state.amplitudes();
    apply_generator(c)
        .iter()
        .zip(c)
        .zip(&lp.sigma)
        .map(|((g, cn), s)| 2.0 * s * (g * cn.conj()).re)
        .sum()
}
