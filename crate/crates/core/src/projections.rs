//! Projections used by the primal-dual iteration.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::image::{ChannelStack, GradientStack, MaskStack};

/// Per-pixel constraint on the masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplexMode {
    /// `u ≥ 0`, `Σ_k u_k = 1`.
    #[default]
    Equality,
    /// `u ≥ 0`, `Σ_k u_k ≤ 1`; the remainder `u_0 = 1 - Σ_k u_k` is the
    /// implicit background.
    Inequality,
}

/// Radial projection of every 2-vector onto the ball of radius `radius`,
/// i.e. `radius · P_{2,∞}(v / radius)`.
pub fn project_ball_2inf_in_place(v: &mut GradientStack, radius: f64) {
    let k = v.channels();
    for c in 0..k {
        let mut pair = v.data_mut().index_axis_mut(Axis(0), c);
        let (mut a, mut b) = pair.view_mut().split_at(Axis(0), 1);
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            let scale = (x.hypot(*y) / radius).max(1.0);
            *x /= scale;
            *y /= scale;
        }
    }
}

/// Projection of the gradient duals onto the dual feasible set of
/// `λ‖·‖_{2,1}`: every per-pixel 2-vector is pulled into the ball of radius
/// `lambda`. At `lambda = 1` this is exactly `P_{2,∞}`.
pub fn project_ball_2inf(v: &GradientStack, lambda: f64) -> Result<GradientStack> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    let mut out = v.clone();
    project_ball_2inf_in_place(&mut out, lambda);
    Ok(out)
}

pub fn project_ball_infinf_in_place(w: &mut ChannelStack) {
    w.data_mut().mapv_inplace(clamp_unit);
}

/// Entrywise clamp to `[-1, 1]`.
pub fn project_ball_infinf(w: &ChannelStack) -> ChannelStack {
    let mut out = w.clone();
    project_ball_infinf_in_place(&mut out);
    out
}

fn clamp_unit(x: f64) -> f64 {
    x / x.abs().max(1.0)
}

/// Euclidean projection of `y` onto `{x ≥ 0, Σx = 1}` by Michelot's finite
/// algorithm: project onto the affine hyperplane restricted to the active
/// coordinates, drop the coordinates that came out negative, repeat. Each
/// pass either terminates or removes at least one coordinate.
pub fn project_simplex_equality(y: &mut [f64]) {
    let n = y.len();
    if n == 0 {
        return;
    }
    let mut active = vec![true; n];
    let mut count = n;
    let orig: Vec<f64> = y.to_vec();
    loop {
        let sum: f64 = orig
            .iter()
            .zip(&active)
            .filter(|(_, a)| **a)
            .map(|(v, _)| *v)
            .sum();
        let shift = (sum - 1.0) / count as f64;
        let mut dropped = false;
        for i in 0..n {
            if active[i] {
                let x = orig[i] - shift;
                if x < 0.0 {
                    active[i] = false;
                    count -= 1;
                    dropped = true;
                    y[i] = 0.0;
                } else {
                    y[i] = x;
                }
            } else {
                y[i] = 0.0;
            }
        }
        if !dropped {
            return;
        }
    }
}

/// Projection of a single pixel's channel vector onto the admissible set.
pub fn project_simplex_point(y: &mut [f64], mode: SimplexMode) {
    match mode {
        SimplexMode::Equality => project_simplex_equality(y),
        SimplexMode::Inequality => {
            let clipped: f64 = y.iter().map(|v| v.max(0.0)).sum();
            if clipped <= 1.0 {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                project_simplex_equality(y);
            }
        }
    }
}

pub fn project_simplex_in_place(u: &mut MaskStack, mode: SimplexMode) {
    let k = u.channels();
    let (n1, n2) = u.dims();
    let mut buf = vec![0.0; k];
    let data = u.data_mut();
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for (c, b) in buf.iter_mut().enumerate() {
                *b = data[[c, i1, i2]];
            }
            project_simplex_point(&mut buf, mode);
            for (c, b) in buf.iter().enumerate() {
                data[[c, i1, i2]] = *b;
            }
        }
    }
}

/// Per-pixel projection of the masks onto the admissible set.
pub fn project_simplex(u: &MaskStack, mode: SimplexMode) -> MaskStack {
    let mut out = u.clone();
    project_simplex_in_place(&mut out, mode);
    out
}

/// Largest violation of the admissible-set constraints: the most negative
/// entry and the worst per-pixel sum defect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub min_value: f64,
    pub max_sum_defect: f64,
}

impl Feasibility {
    pub fn holds(&self, neg_tol: f64, sum_tol: f64) -> bool {
        self.min_value >= -neg_tol && self.max_sum_defect <= sum_tol
    }
}

pub fn feasibility(u: &MaskStack, mode: SimplexMode) -> Feasibility {
    let (n1, n2) = u.dims();
    let data = u.data();
    let mut min_value = f64::INFINITY;
    let mut max_sum_defect: f64 = 0.0;
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let mut s = 0.0;
            for c in 0..u.channels() {
                let v = data[[c, i1, i2]];
                min_value = min_value.min(v);
                s += v;
            }
            let defect = match mode {
                SimplexMode::Equality => (s - 1.0).abs(),
                SimplexMode::Inequality => (s - 1.0).max(0.0),
            };
            if defect.is_nan() {
                max_sum_defect = f64::INFINITY;
            } else {
                max_sum_defect = max_sum_defect.max(defect);
            }
        }
    }
    Feasibility {
        min_value,
        max_sum_defect,
    }
}
