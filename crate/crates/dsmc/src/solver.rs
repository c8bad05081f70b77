//! Alternating-direction solver that fuses per-view spectral embeddings into
//! a consensus indicator matrix.
//!
//! Each view v keeps an orthogonal alignment R, an entry-weight matrix M
//! (columns on the probability simplex), an auxiliary residual U, a Lagrange
//! multiplier C, and a scalar view weight w. One iteration updates, in
//! order: the consensus Y (average over views), then per view R (Procrustes
//! via SVD), M (closed form with a simplex-projection fallback), U
//! (elementwise shrinkage), w (reciprocal of the weighted residual norm by
//! default), and C (multiplier ascent). The shared penalty mu grows by a
//! factor rho once per iteration up to mu_max.
//!
//! The objective tracked per iteration is the augmented Lagrangian summed
//! over views,
//!
//! ```text
//! sum_v  w_v ||sqrt(M) .* U||_F^2  +  (mu/2) ||M||_F^2
//!        + (mu/2) ||Y - F R - U + C/mu||_F^2
//! ```
//!
//! evaluated after the iteration's updates with the mu that was in force
//! during the iteration. Every update is the exact minimizer of this
//! objective in its own block, so the objective never increases within a
//! step; across whole iterations it may rise because mu grows and w is
//! re-estimated.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::graph::SpectralEmbedding;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// w = min(1 / (2 max(r, eps_w)), w_cap): noisy views are downweighted.
    Reciprocal,
    /// w = r: the raw weighted residual norm.
    Norm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Cluster count; also the embedding width.
    pub k: usize,
    /// Initial penalty mu.
    pub mu0: f64,
    pub mu_max: f64,
    /// Penalty growth factor per iteration.
    pub rho: f64,
    pub max_iter: usize,
    /// Stop when max over views of ||Y - F R - U||_F drops to this.
    pub tol_residual: f64,
    /// Stop when the relative objective change over one iteration drops to
    /// this.
    pub tol_objective: f64,
    pub w_mode: WeightMode,
    pub w_cap: f64,
    pub eps_w: f64,
    /// Keep M at its uniform initialization (entry weighting disabled).
    pub ablation_uniform_m: bool,
    /// Consumed by label extraction downstream; the solver itself is
    /// deterministic without randomness.
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(k: usize) -> Self {
        SolverConfig {
            k,
            mu0: 0.01,
            mu_max: 1e6,
            rho: 1.1,
            max_iter: 100,
            tol_residual: 1e-4,
            tol_objective: 1e-6,
            w_mode: WeightMode::Reciprocal,
            w_cap: 1e8,
            eps_w: 1e-8,
            ablation_uniform_m: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput("cluster count k must be >= 1".into()));
        }
        if self.mu0 <= 0.0 || self.mu0.is_nan() {
            return Err(Error::InvalidInput(format!("mu0 must be > 0, got {}", self.mu0)));
        }
        if self.rho <= 1.0 || self.rho.is_nan() {
            return Err(Error::InvalidInput(format!("rho must be > 1, got {}", self.rho)));
        }
        if self.mu_max < self.mu0 || self.mu_max.is_nan() {
            return Err(Error::InvalidInput(format!(
                "mu_max must be >= mu0, got mu_max={} mu0={}",
                self.mu_max, self.mu0
            )));
        }
        let not_positive = |t: f64| t <= 0.0 || t.is_nan();
        if not_positive(self.tol_residual) || not_positive(self.tol_objective) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be > 0, got tol_residual={} tol_objective={}",
                self.tol_residual, self.tol_objective
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be >= 1".into()));
        }
        if not_positive(self.w_cap) || not_positive(self.eps_w) {
            return Err(Error::InvalidInput(format!(
                "w_cap and eps_w must be > 0, got w_cap={} eps_w={}",
                self.w_cap, self.eps_w
            )));
        }
        Ok(())
    }
}

/// Per-view solver variables. `f` is the fixed spectral embedding input; the
/// rest evolve across iterations.
#[derive(Debug, Clone)]
pub struct ViewState {
    pub f: DMatrix<f64>,
    /// k x k orthogonal alignment.
    pub r: DMatrix<f64>,
    /// p x k nonnegative entry weights; every column sums to 1.
    pub m: DMatrix<f64>,
    /// p x k auxiliary residual.
    pub u: DMatrix<f64>,
    /// p x k Lagrange multiplier.
    pub c: DMatrix<f64>,
    /// Scalar view weight.
    pub w: f64,
}

/// Relaxed consensus indicator shared by all views.
#[derive(Debug, Clone)]
pub struct Consensus {
    pub y: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iter: usize,
    pub objective: f64,
    /// max over views of ||Y - F R - U||_F after the iteration's updates.
    pub primal_residual: f64,
    /// The penalty in force during the iteration (before its growth step).
    pub mu: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ResidualTolerance,
    ObjectiveTolerance,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub consensus: Consensus,
    pub states: Vec<ViewState>,
    pub trace: IterationTrace,
    pub stop_reason: StopReason,
}

impl SolveOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.records.len()
    }
}

/// Initial variables: R = I, U = C = 0, M uniform at 1/p, w = 1/n, mu = mu0,
/// and Y the elementwise mean of the embeddings.
pub fn init_states(
    embeddings: &[SpectralEmbedding],
    cfg: &SolverConfig,
) -> Result<(Consensus, Vec<ViewState>, f64)> {
    cfg.validate()?;
    if embeddings.is_empty() {
        return Err(Error::InvalidInput("solver needs at least one view".into()));
    }
    let p = embeddings[0].f.nrows();
    for (v, emb) in embeddings.iter().enumerate() {
        if emb.f.nrows() != p || emb.f.ncols() != cfg.k {
            return Err(Error::InvalidInput(format!(
                "embedding {v} is {}x{} but {}x{} was expected",
                emb.f.nrows(),
                emb.f.ncols(),
                p,
                cfg.k
            )));
        }
    }
    let n = embeddings.len();
    let mut y = DMatrix::zeros(p, cfg.k);
    for emb in embeddings {
        y += &emb.f;
    }
    y /= n as f64;

    let states = embeddings
        .iter()
        .map(|emb| ViewState {
            f: emb.f.clone(),
            r: DMatrix::identity(cfg.k, cfg.k),
            m: DMatrix::from_element(p, cfg.k, 1.0 / p as f64),
            u: DMatrix::zeros(p, cfg.k),
            c: DMatrix::zeros(p, cfg.k),
            w: 1.0 / n as f64,
        })
        .collect();
    Ok((Consensus { y }, states, cfg.mu0))
}

/// Consensus update: the stationary point of the summed quadratic,
/// Y = (1/n) sum_v (F R + U - C/mu).
pub fn update_y(states: &[ViewState], mu: f64) -> Consensus {
    let p = states[0].f.nrows();
    let k = states[0].r.ncols();
    let mut y = DMatrix::zeros(p, k);
    for st in states {
        y += &st.f * &st.r + &st.u - &st.c / mu;
    }
    y /= states.len() as f64;
    Consensus { y }
}

/// Alignment update: the orthogonal Procrustes solution. With
/// A = F^T (Y - U + C/mu) and SVD A = P S Q^T, the minimizer is R = P Q^T.
pub fn update_r(state: &ViewState, consensus: &Consensus, mu: f64) -> Result<DMatrix<f64>> {
    let target = &consensus.y - &state.u + &state.c / mu;
    let a = state.f.transpose() * target;
    let svd = nalgebra::SVD::try_new(a, true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let p = svd.u.expect("left singular vectors were requested");
    let q_t = svd.v_t.expect("right singular vectors were requested");
    Ok(p * q_t)
}

/// Entry-weight update, each column independently. The closed form
/// m = max(alpha 1 - k/mu, 0) with alpha = 1/p + sum(k)/(p mu) is kept when
/// its clipped sum still hits 1; otherwise the column is the exact Euclidean
/// projection of -k/mu onto the probability simplex. (Whenever the clipped
/// closed form sums to 1 it coincides with that projection, so either branch
/// returns the exact column minimizer.)
pub fn update_m(state: &ViewState, mu: f64) -> DMatrix<f64> {
    let p = state.u.nrows();
    let mut m = DMatrix::zeros(p, state.u.ncols());
    let mut column = vec![0.0; p];
    for j in 0..state.u.ncols() {
        for (i, slot) in column.iter_mut().enumerate() {
            *slot = state.w * state.u[(i, j)] * state.u[(i, j)];
        }
        let alpha = 1.0 / p as f64 + column.iter().sum::<f64>() / (p as f64 * mu);
        let mut sum = 0.0;
        for i in 0..p {
            let candidate = (alpha - column[i] / mu).max(0.0);
            m[(i, j)] = candidate;
            sum += candidate;
        }
        if (sum - 1.0).abs() > 1e-10 {
            let projected = project_to_simplex(&column.iter().map(|k| -k / mu).collect::<Vec<_>>());
            for i in 0..p {
                m[(i, j)] = projected[i];
            }
        }
    }
    m
}

/// Euclidean projection onto { m : m >= 0, sum m = 1 } by sort-and-threshold.
fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, value) in sorted.iter().enumerate() {
        cumulative += value;
        let candidate = (1.0 - cumulative) / (j + 1) as f64;
        if value + candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x + theta).max(0.0)).collect()
}

/// Auxiliary update: elementwise u = mu h / (mu + 2 w m) with
/// H = Y - F R + C/mu.
pub fn update_u(state: &ViewState, consensus: &Consensus, mu: f64) -> DMatrix<f64> {
    let h = &consensus.y - &state.f * &state.r + &state.c / mu;
    let mut u = h;
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            u[(i, j)] = mu * u[(i, j)] / (mu + 2.0 * state.w * state.m[(i, j)]);
        }
    }
    u
}

/// View-weight update from the weighted alignment residual
/// r = ||sqrt(M) .* (Y - F R)||_F.
pub fn update_w(
    state: &ViewState,
    consensus: &Consensus,
    mode: WeightMode,
    eps_w: f64,
    w_cap: f64,
) -> f64 {
    let diff = &consensus.y - &state.f * &state.r;
    let mut r2 = 0.0;
    for i in 0..diff.nrows() {
        for j in 0..diff.ncols() {
            r2 += state.m[(i, j)] * diff[(i, j)] * diff[(i, j)];
        }
    }
    let r = r2.sqrt();
    match mode {
        WeightMode::Reciprocal => (1.0 / (2.0 * r.max(eps_w))).min(w_cap),
        WeightMode::Norm => r,
    }
}

/// Multiplier ascent C + mu (Y - F R - U), paired with the penalty the
/// caller should adopt after the iteration: min(mu_max, rho mu). The caller
/// advances mu exactly once per iteration, after all views' C updates.
pub fn update_c(
    state: &ViewState,
    consensus: &Consensus,
    mu: f64,
    rho: f64,
    mu_max: f64,
) -> (DMatrix<f64>, f64) {
    let c = &state.c + (&consensus.y - &state.f * &state.r - &state.u) * mu;
    (c, (rho * mu).min(mu_max))
}

/// The tracked objective: see the module doc for the exact expression.
pub fn augmented_lagrangian(consensus: &Consensus, states: &[ViewState], mu: f64) -> f64 {
    let mut total = 0.0;
    for st in states {
        let mut weighted_u = 0.0;
        for i in 0..st.u.nrows() {
            for j in 0..st.u.ncols() {
                weighted_u += st.m[(i, j)] * st.u[(i, j)] * st.u[(i, j)];
            }
        }
        let coupling = &consensus.y - &st.f * &st.r - &st.u + &st.c / mu;
        total += st.w * weighted_u
            + 0.5 * mu * st.m.norm_squared()
            + 0.5 * mu * coupling.norm_squared();
    }
    total
}

/// max over views of ||Y - F R - U||_F.
pub fn primal_residual(consensus: &Consensus, states: &[ViewState]) -> f64 {
    states
        .iter()
        .map(|st| (&consensus.y - &st.f * &st.r - &st.u).norm())
        .fold(0.0, f64::max)
}

/// Run the solver to convergence. Stops when the primal residual reaches
/// `tol_residual`, when the relative objective change over one iteration
/// reaches `tol_objective` (checked from the second iteration), or after
/// `max_iter` iterations.
pub fn run(embeddings: &[SpectralEmbedding], cfg: &SolverConfig) -> Result<SolveOutcome> {
    run_observed(embeddings, cfg, |_, _, _| {})
}

/// `run` with a per-iteration inspector, called after each iteration's
/// updates with the consensus, the view states, and the 1-based iteration
/// number. Used by tests to watch invariants while the solver runs.
pub fn run_observed<F>(
    embeddings: &[SpectralEmbedding],
    cfg: &SolverConfig,
    mut inspector: F,
) -> Result<SolveOutcome>
where
    F: FnMut(&Consensus, &[ViewState], usize),
{
    let (mut consensus, mut states, mut mu) = init_states(embeddings, cfg)?;
    let mut trace = IterationTrace::default();
    let mut previous_objective: Option<f64> = None;
    let mut stop_reason = StopReason::MaxIterations;

    for iter in 1..=cfg.max_iter {
        consensus = update_y(&states, mu);
        let mut next_mu = mu;
        for (v, st) in states.iter_mut().enumerate() {
            st.r = update_r(st, &consensus, mu).map_err(|e| {
                Error::Numerical(format!("iteration {iter}, view {v}: {e}"))
            })?;
            if !cfg.ablation_uniform_m {
                st.m = update_m(st, mu);
            }
            st.u = update_u(st, &consensus, mu);
            st.w = update_w(st, &consensus, cfg.w_mode, cfg.eps_w, cfg.w_cap);
            let (c, advanced) = update_c(st, &consensus, mu, cfg.rho, cfg.mu_max);
            st.c = c;
            next_mu = advanced;
        }

        let objective = augmented_lagrangian(&consensus, &states, mu);
        let residual = primal_residual(&consensus, &states);
        trace.records.push(IterationRecord {
            iter,
            objective,
            primal_residual: residual,
            mu,
            weights: states.iter().map(|st| st.w).collect(),
        });
        inspector(&consensus, &states, iter);

        if residual <= cfg.tol_residual {
            stop_reason = StopReason::ResidualTolerance;
            break;
        }
        if let Some(previous) = previous_objective {
            let change = (objective - previous).abs() / f64::max(previous.abs(), 1e-300);
            if change <= cfg.tol_objective {
                stop_reason = StopReason::ObjectiveTolerance;
                break;
            }
        }
        previous_objective = Some(objective);
        mu = next_mu;
    }

    Ok(SolveOutcome {
        consensus,
        states,
        trace,
        stop_reason,
    })
}
