//! Nonlinear primal-dual hybrid gradient iteration for the reduced energy
//!
//! ```text
//! R(u) = i_A(u) + λ Σ_k TV(u_k) + ‖M(u)‖_{1,1}
//! ```
//!
//! with `K = (∇, M)`, `F(v, w) = λ‖v‖_{2,1} + ‖w‖_{1,1}` and `G = i_A`. One
//! iteration reads
//!
//! ```text
//! v ← proj_{λ-ball}(v + σ ∇ū)
//! w ← clamp_{[-1,1]}(w + σ M(ū))
//! u⁺ ← P_A(u - τ ∇* v - τ DM(u)* w)
//! ū ← u⁺ + θ (u⁺ - u)
//! ```

use serde::{Deserialize, Serialize};

use crate::datafit::{data_operator, DataJacobian, DerivativeForm, SmoothingEps};
use crate::error::{invalid, Result, SegError};
use crate::grid_ops::{adjoint_into, check_grid, gradient_into, tv_of};
use crate::image::{ChannelStack, DataFitValue, FeatureStack, GradientStack, MaskStack};
use crate::projections::{
    feasibility, project_ball_2inf_in_place, project_ball_infinf_in_place,
    project_simplex_in_place, SimplexMode,
};

/// Which linear map carries the data dual back to the primal space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalOperator {
    /// `DM(u)* w`, the adjoint of the derivative.
    #[default]
    Adjoint,
    /// The untransposed per-channel blocks `Dm(u_k) w_a - Dm(1-u_k) w_b`.
    Forward,
}

/// Feasibility tolerances applied to the masks after projection.
pub const MASK_NEG_TOL: f64 = 1e-12;
pub const MASK_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Regularization weight λ.
    pub lambda: f64,
    /// Dual step σ. `None` picks `1/sqrt(L² + δ)` from an operator-norm
    /// estimate at the initial point.
    pub sigma: Option<f64>,
    /// Primal step τ, same default as σ.
    pub tau: Option<f64>,
    /// Extrapolation θ ∈ [0, 1].
    pub theta: f64,
    pub eps: SmoothingEps,
    pub max_iters: usize,
    pub mode: SimplexMode,
    /// History cadence; iteration 0 and the last iteration are always logged.
    pub log_every: usize,
    pub derivative: DerivativeForm,
    pub primal_operator: PrimalOperator,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            sigma: None,
            tau: None,
            theta: 1.0,
            eps: SmoothingEps::default(),
            max_iters: 200,
            mode: SimplexMode::Equality,
            log_every: 1,
            derivative: DerivativeForm::Exact,
            primal_operator: PrimalOperator::Adjoint,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid(
                "lambda",
                format!("must be positive, got {}", self.lambda),
            ));
        }
        for (name, step) in [("sigma", self.sigma), ("tau", self.tau)] {
            if let Some(s) = step {
                if !(s.is_finite() && s > 0.0) {
                    return Err(invalid(name, format!("must be positive, got {s}")));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid(
                "theta",
                format!("must lie in [0, 1], got {}", self.theta),
            ));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(invalid("log_every", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    /// `λ Σ_k TV(u_k)`
    pub tv_term: f64,
    /// `‖M(u)‖_{1,1}`
    pub data_term: f64,
    pub feasible: bool,
}

/// One row of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryEntry {
    pub iter: usize,
    pub energy: f64,
    /// `Σ_k TV(u_k)`, without the λ weight.
    pub tv: f64,
    pub datafit: f64,
    /// Mean absolute deviation from the reference masks, per pixel.
    pub abs_error: Option<f64>,
}

pub fn energy(u: &MaskStack, phi: &FeatureStack, cfg: &SolverConfig) -> Result<EnergyBreakdown> {
    let m = data_operator(u, phi, cfg.eps)?;
    let (n1, n2) = u.dims();
    check_grid(n1, n2)?;
    let tv: f64 = (0..u.channels())
        .map(|c| tv_of(u.channel(c), u.spacing()))
        .sum();
    let tv_term = cfg.lambda * tv;
    let data_term = m.data().iter().map(|v| v.abs()).sum();
    let feasible = feasibility(u, cfg.mode).holds(MASK_NEG_TOL, MASK_SUM_TOL);
    let total = if feasible {
        tv_term + data_term
    } else {
        f64::INFINITY
    };
    Ok(EnergyBreakdown {
        total,
        tv_term,
        data_term,
        feasible,
    })
}

/// Mean over pixels of `Σ_k |u_k - r_k|`.
pub fn mean_abs_error(u: &MaskStack, reference: &MaskStack) -> Result<f64> {
    u.same_shape(reference)?;
    let total: f64 = u
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / u.pixels() as f64)
}

/// `u ≡ 1/K` in equality mode; `u ≡ 1/(K+1)` in inequality mode so that the
/// implicit background shares the same weight.
pub fn uniform_init(
    channels: usize,
    n1: usize,
    n2: usize,
    spacing: f64,
    mode: SimplexMode,
) -> MaskStack {
    let value = match mode {
        SimplexMode::Equality => 1.0 / channels as f64,
        SimplexMode::Inequality => 1.0 / (channels as f64 + 1.0),
    };
    ChannelStack::filled(channels, n1, n2, spacing, value)
}

/// Step sizes `σ = τ = 1/sqrt(L² + δ)` with `L² = ‖∇‖² + ‖DM(u)‖²`,
/// `‖∇‖² ≤ 8/h²`.
pub fn default_step(u: &MaskStack, phi: &FeatureStack, cfg: &SolverConfig) -> Result<f64> {
    let jac = DataJacobian::new(u, phi, cfg.eps, cfg.derivative)?;
    let dm = jac.norm_estimate(30);
    let h = u.spacing();
    let l_sq = 8.0 / (h * h) + dm * dm;
    Ok(1.0 / (l_sq + 1e-9).sqrt())
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub u: MaskStack,
    pub u_bar: MaskStack,
    pub v: GradientStack,
    pub w: DataFitValue,
    pub iter: usize,
    pub sigma: f64,
    pub tau: f64,
    pub history: Vec<HistoryEntry>,
    reference: Option<MaskStack>,
}

impl SolverState {
    /// `u⁰ = ū⁰ = init` (uniform if absent), `v⁰ = 0`, `w⁰ = 0`.
    pub fn new(phi: &FeatureStack, cfg: &SolverConfig, init: Option<MaskStack>) -> Result<Self> {
        cfg.validate()?;
        let k = phi.channels();
        let (n1, n2) = phi.dims();
        check_grid(n1, n2)?;
        if !phi.is_finite() {
            return Err(invalid("phi", "feature stack contains non-finite values"));
        }
        let u = match init {
            Some(u) => {
                if u.channels() != k {
                    return Err(SegError::ChannelMismatch {
                        expected: k,
                        actual: u.channels(),
                    });
                }
                u.same_shape(phi)?;
                let mut u = u;
                project_simplex_in_place(&mut u, cfg.mode);
                u
            }
            None => uniform_init(k, n1, n2, phi.spacing(), cfg.mode),
        };
        let (sigma, tau) = match (cfg.sigma, cfg.tau) {
            (Some(s), Some(t)) => (s, t),
            (s, t) => {
                let step = default_step(&u, phi, cfg)?;
                (s.unwrap_or(step), t.unwrap_or(step))
            }
        };
        Ok(Self {
            u_bar: u.clone(),
            u,
            v: GradientStack::zeros(k, n1, n2),
            w: ChannelStack::zeros(2 * k, n1, n2, phi.spacing()),
            iter: 0,
            sigma,
            tau,
            history: Vec::new(),
            reference: None,
        })
    }

    /// Masks against which `abs_error` is logged.
    pub fn with_reference(mut self, reference: MaskStack) -> Result<Self> {
        self.u.same_shape(&reference)?;
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn record(&mut self, phi: &FeatureStack, cfg: &SolverConfig) -> Result<()> {
        let e = energy(&self.u, phi, cfg)?;
        let abs_error = match &self.reference {
            Some(r) => Some(mean_abs_error(&self.u, r)?),
            None => None,
        };
        self.history.push(HistoryEntry {
            iter: self.iter,
            energy: e.total,
            tv: e.tv_term / cfg.lambda,
            datafit: e.data_term,
            abs_error,
        });
        Ok(())
    }
}

/// Runs one iteration in place and logs it when due.
pub fn pdhg_step(state: &mut SolverState, phi: &FeatureStack, cfg: &SolverConfig) -> Result<()> {
    let k = phi.channels();
    let (n1, n2) = phi.dims();
    let h = phi.spacing();
    let sigma = state.sigma;
    let tau = state.tau;
    let next_iter = state.iter + 1;

    // dual ascent on the TV part
    let mut g1 = ndarray::Array2::zeros((n1, n2));
    let mut g2 = ndarray::Array2::zeros((n1, n2));
    for c in 0..k {
        gradient_into(state.u_bar.channel(c), h, g1.view_mut(), g2.view_mut());
        state.v.component_mut(c, 0).scaled_add(sigma, &g1);
        state.v.component_mut(c, 1).scaled_add(sigma, &g2);
    }
    project_ball_2inf_in_place(&mut state.v, cfg.lambda);

    // dual ascent on the data part
    let m_bar = data_operator(&state.u_bar, phi, cfg.eps)?;
    state.w.data_mut().scaled_add(sigma, m_bar.data());
    project_ball_infinf_in_place(&mut state.w);
    if !state.v.is_finite() || !state.w.is_finite() {
        return Err(SegError::NonFinite {
            what: "dual variables",
            iter: next_iter,
        });
    }

    // primal descent
    let jac = DataJacobian::new(&state.u, phi, cfg.eps, cfg.derivative)?;
    let back = match cfg.primal_operator {
        PrimalOperator::Adjoint => jac.adjoint(&state.w)?,
        PrimalOperator::Forward => jac.forward_on_dual(&state.w)?,
    };
    let mut u_next = state.u.clone();
    let mut div = ndarray::Array2::zeros((n1, n2));
    for c in 0..k {
        adjoint_into(
            state.v.component(c, 0),
            state.v.component(c, 1),
            h,
            div.view_mut(),
        );
        let mut uc = u_next.channel_mut(c);
        uc.scaled_add(-tau, &div);
        uc.scaled_add(-tau, &back.channel(c));
    }
    if !u_next.is_finite() {
        return Err(SegError::NonFinite {
            what: "primal update",
            iter: next_iter,
        });
    }
    project_simplex_in_place(&mut u_next, cfg.mode);

    // over-relaxation
    let theta = cfg.theta;
    let mut u_bar = u_next.clone();
    ndarray::Zip::from(u_bar.data_mut())
        .and(u_next.data())
        .and(state.u.data())
        .for_each(|b, &new, &old| *b = new + theta * (new - old));
    state.u = u_next;
    state.u_bar = u_bar;
    state.iter = next_iter;

    if state.iter.is_multiple_of(cfg.log_every) || state.iter == cfg.max_iters {
        state.record(phi, cfg)?;
    }
    Ok(())
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub masks: MaskStack,
    pub history: Vec<HistoryEntry>,
    pub sigma: f64,
    pub tau: f64,
}

/// Runs `cfg.max_iters` iterations from `init` (uniform masks if absent).
pub fn solve(phi: &FeatureStack, cfg: &SolverConfig, init: Option<MaskStack>) -> Result<Solution> {
    solve_with(phi, cfg, init, None, |_| {})
}

/// As [`solve`], additionally logging the deviation from `reference` and
/// invoking `observe` after every iteration.
pub fn solve_with(
    phi: &FeatureStack,
    cfg: &SolverConfig,
    init: Option<MaskStack>,
    reference: Option<MaskStack>,
    mut observe: impl FnMut(&SolverState),
) -> Result<Solution> {
    let mut state = SolverState::new(phi, cfg, init)?;
    if let Some(r) = reference {
        state = state.with_reference(r)?;
    }
    state.record(phi, cfg)?;
    while state.iter < cfg.max_iters {
        pdhg_step(&mut state, phi, cfg)?;
        observe(&state);
    }
    Ok(Solution {
        masks: state.u,
        history: state.history,
        sigma: state.sigma,
        tau: state.tau,
    })
}

/// Convergence log as CSV with header `iter,energy,tv,datafit,abs_error`;
/// `abs_error` is left empty when no reference was given.
pub fn history_csv(history: &[HistoryEntry]) -> String {
    let mut s = String::from("iter,energy,tv,datafit,abs_error\n");
    for h in history {
        let err = h.abs_error.map(|e| e.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{err}\n",
            h.iter, h.energy, h.tv, h.datafit
        ));
    }
    s
}
