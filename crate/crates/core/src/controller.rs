//! Feedback law: the displacement in `[-alpha_bar, alpha_bar]` that
//! minimizes `V(D_alpha psi)` for the post-measurement state.
//!
//! The minimization is a symmetric grid scan followed by golden-section
//! refinement inside the cell around the best grid point.

use serde::{Deserialize, Serialize};

use crate::displacement::{DisplacementTable, PreparedDisplacement};
use crate::error::{Error, Result};
use crate::fock::StateVector;
use crate::lyapunov::{lyapunov_value, LyapunovParams};

const MAX_GOLDEN_ITERS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub alpha_bar: f64,
    /// Odd, at least 3, so that `alpha = 0` is a grid point.
    pub grid_points: usize,
    /// Golden-section stops when the bracket is narrower than this.
    pub refine_tol: f64,
}

impl ControlParams {
    pub fn new(alpha_bar: f64) -> Self {
        Self {
            alpha_bar,
            grid_points: 41,
            refine_tol: alpha_bar * 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_bar >= 0.0) || !self.alpha_bar.is_finite() {
            return Err(Error::InvalidParams(format!(
                "alpha_bar must be finite and nonnegative (got {})",
                self.alpha_bar
            )));
        }
        if self.grid_points < 3 || self.grid_points % 2 == 0 {
            return Err(Error::InvalidParams(format!(
                "grid_points must be odd and >= 3 (got {})",
                self.grid_points
            )));
        }
        if !(self.refine_tol > 0.0) && self.alpha_bar > 0.0 {
            return Err(Error::InvalidParams("refine_tol must be positive".into()));
        }
        Ok(())
    }

    /// Grid `alpha_j = alpha_bar (j - h) / h`, `h = (grid_points - 1) / 2`;
    /// the middle point is exactly zero and the grid is exactly symmetric.
    pub fn grid(&self) -> Vec<f64> {
        let h = (self.grid_points - 1) / 2;
        (0..self.grid_points)
            .map(|j| {
                let k = j as i64 - h as i64;
                self.alpha_bar * k as f64 / h as f64
            })
            .collect()
    }
}

/// Golden-section search for a minimum of `f` on `[a, b]`.
///
/// Returns `(x_min, f_min)` after the bracket shrinks below `tol`.
pub fn golden_section_minimize(
    f: impl Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..MAX_GOLDEN_ITERS {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn objective(prepared: &PreparedDisplacement<'_>, lp: &LyapunovParams, alpha: f64) -> f64 {
    lp.value_of_amplitudes(&prepared.apply(alpha))
}

/// Sampled objective: `(alpha, V(D_alpha psi))` on the control grid.
/// The `alpha = 0` entry is `V(psi)` itself.
pub fn landscape(
    state: &StateVector,
    cp: &ControlParams,
    lp: &LyapunovParams,
    table: &DisplacementTable,
) -> Vec<(f64, f64)> {
    let prepared = table.prepare(state);
    let v0 = lyapunov_value(state, lp).total;
    cp.grid()
        .into_iter()
        .map(|a| {
            let v = if a == 0.0 { v0 } else { objective(&prepared, lp, a) };
            (a, v)
        })
        .collect()
}

/// `(alpha*, V(D_alpha* psi))`, with `V(D_alpha* psi) <= V(psi)` always.
///
/// Among grid values exactly equal to the minimum the smallest `|alpha|` wins,
/// then the negative one. The winner's neighbouring cell is refined by
/// golden section and the refined point replaces it only on strict
/// improvement.
pub fn choose_alpha(
    state_half: &StateVector,
    cp: &ControlParams,
    lp: &LyapunovParams,
    table: &DisplacementTable,
) -> (f64, f64) {
    let v0 = lyapunov_value(state_half, lp).total;
    if cp.alpha_bar == 0.0 {
        return (0.0, v0);
    }
    let prepared = table.prepare(state_half);
    let grid = cp.grid();
    let values: Vec<f64> = grid
        .iter()
        .map(|&a| if a == 0.0 { v0 } else { objective(&prepared, lp, a) })
        .collect();

    let v_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let best = (0..grid.len())
        .filter(|&j| values[j] == v_min)
        .min_by(|&i, &j| {
            grid[i]
                .abs()
                .total_cmp(&grid[j].abs())
                .then(grid[i].total_cmp(&grid[j]))
        })
        .expect("grid is nonempty");

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (a_ref, v_ref) = golden_section_minimize(|a| objective(&prepared, lp, a), lo, hi, cp.refine_tol);
    if v_ref < values[best] {
        (a_ref, v_ref)
    } else {
        (grid[best], values[best])
    }
}
