//! The outer iteration.
//!
//! Each outer loop freezes the current network as the anchor `u_k`, builds
//! the surrogate loss around it, minimizes that loss with Adam warm-started
//! from `u_k`, and estimates the dual potential `Φ* = -min L^k` from the
//! interior loss at the result. The step size then follows
//! `λ_{k+1} = c_s Φ*^α` (unchanged when `α = 0`), the boundary penalty grows
//! geometrically, and the loop stops once `Φ* <= eps_tol` (when positive).

mod marching;

use serde::{Deserialize, Serialize};

use crate::loss::{dual_potential_estimate, LossBreakdown, SurrogateConfig, SurrogateLoss};
use crate::mlp::MlpNet;
use crate::problems::{DiscreteField, ProblemSpec};
use crate::quadrature::{derive_seed, grid_quad, sample_batch, gauss_legendre, SampleBatch, TRule};
use crate::trainer::{minimize_with_state, AdamConfig, AdamState};
use crate::{Error, Result};

pub use marching::{run_time_marching, TimeLevel};

/// Rate exponents of the step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    /// Whether `0 < p(p-1) - (ρ-1)² < 1`, the range where the rate
    /// guarantees apply.
    pub rate_condition: bool,
}

/// `α = -(ρ²(ρ-1) - p²(p-1)) / (pρ[p(p-1) - (ρ-1)²])` and
/// `β = (p-1)(ρ² - p(ρ-1)) / (ρ[p(p-1) - (ρ-1)²])`.
pub fn compute_exponents(p: f64, rho: f64) -> Result<Exponents> {
    let gap = p * (p - 1.0) - (rho - 1.0) * (rho - 1.0);
    let degenerate = |reason: &str| Error::DegenerateExponents {
        p,
        rho,
        reason: reason.to_string(),
    };
    if !p.is_finite() || !rho.is_finite() || p == 0.0 || rho == 0.0 {
        return Err(degenerate("p and rho must be finite and nonzero"));
    }
    if gap == 0.0 {
        return Err(degenerate("p(p-1) - (rho-1)^2 = 0"));
    }
    let alpha = -(rho * rho * (rho - 1.0) - p * p * (p - 1.0)) / (p * rho * gap);
    let beta = (p - 1.0) * (rho * rho - p * (rho - 1.0)) / (rho * gap);
    Ok(Exponents {
        // Adding zero turns a negative zero into a positive one.
        alpha: alpha + 0.0,
        beta,
        rate_condition: gap > 0.0 && gap < 1.0,
    })
}

/// `α` either computed from `(p, ρ)` or given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

impl AlphaSetting {
    pub const AUTO: AlphaSetting = AlphaSetting::Auto(AutoTag::Auto);

    pub fn resolve(&self, p: f64, rho: f64) -> Result<f64> {
        match self {
            AlphaSetting::Value(a) => Ok(*a),
            AlphaSetting::Auto(_) => compute_exponents(p, rho).map(|e| e.alpha),
        }
    }
}

/// How the loss integrals are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Quadrature {
    /// Uniform random samples with one random `t` per interior point.
    MonteCarlo { interior: usize, boundary: usize },
    /// Trapezoidal grid of step `h` with a Gauss-Legendre rule in `t`.
    Grid { h: f64, t_nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdrmConfig {
    pub lambda0: f64,
    pub c_s: f64,
    pub alpha: AlphaSetting,
    pub mu: f64,
    /// Stop once `Φ* <= eps_tol`; zero disables the test and runs all
    /// `outer_loops`.
    pub eps_tol: f64,
    pub outer_loops: usize,
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub resample_every_outer: bool,
    /// Keep the Adam moments from one outer loop to the next instead of
    /// restarting the optimizer on every surrogate.
    pub carry_adam_state: bool,
    /// Learning rate of outer loop `k` is `adam.learning_rate * lr_decay^k`.
    pub lr_decay: f64,
    pub quadrature: Quadrature,
}

impl Default for IdrmConfig {
    fn default() -> Self {
        Self {
            lambda0: 1.0,
            c_s: 1.0,
            alpha: AlphaSetting::Value(0.0),
            mu: 0.0,
            eps_tol: 0.0,
            outer_loops: 8,
            sigma0: 100.0,
            sigma_growth: 1.0,
            resample_every_outer: true,
            carry_adam_state: false,
            lr_decay: 1.0,
            quadrature: Quadrature::MonteCarlo {
                interior: 10_000,
                boundary: 800,
            },
        }
    }
}

impl IdrmConfig {
    /// Every problem with the configuration for `spec`.
    pub fn errors(&self, spec: &ProblemSpec) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.lambda0 > 0.0) || !self.lambda0.is_finite() {
            errs.push(format!("lambda0 must be positive and finite, got {}", self.lambda0));
        }
        if !(self.c_s > 0.0) {
            errs.push(format!("c_s must be positive, got {}", self.c_s));
        }
        if !(self.mu >= 0.0) {
            errs.push(format!("mu must be nonnegative, got {}", self.mu));
        }
        if !(self.eps_tol >= 0.0) {
            errs.push(format!("eps_tol must be nonnegative, got {}", self.eps_tol));
        }
        if self.outer_loops == 0 {
            errs.push("outer_loops must be >= 1".into());
        }
        if !(self.sigma0 >= 0.0) {
            errs.push(format!("sigma0 must be nonnegative, got {}", self.sigma0));
        }
        if !(self.sigma_growth >= 1.0) {
            errs.push(format!("sigma_growth must be >= 1, got {}", self.sigma_growth));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            errs.push(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if let Err(e) = self.alpha.resolve(spec.p_exponent, spec.rho_exponent) {
            errs.push(e.to_string());
        }
        match self.quadrature {
            Quadrature::MonteCarlo { interior, boundary } => {
                if interior == 0 || boundary == 0 {
                    errs.push(format!(
                        "sample counts must be >= 1, got {interior} interior and {boundary} boundary"
                    ));
                }
            }
            Quadrature::Grid { h, t_nodes } => {
                if let Err(e) = grid_quad(&spec.domain, h) {
                    errs.push(e.to_string());
                }
                if t_nodes == 0 {
                    errs.push("t_nodes must be >= 1".into());
                }
            }
        }
        errs
    }
}

/// `σ_k = σ_0 · growth^k`.
pub fn sigma_at(cfg: &IdrmConfig, k: usize) -> f64 {
    cfg.sigma0 * cfg.sigma_growth.powi(k as i32)
}

/// Next step size; the flag is set when `Φ* = 0` leaves it unchanged.
pub fn update_lambda(lambda: f64, phi_star: f64, alpha: f64, c_s: f64) -> (f64, bool) {
    if alpha == 0.0 {
        return (lambda, false);
    }
    if phi_star == 0.0 {
        return (lambda, true);
    }
    let next = c_s * phi_star.powf(alpha);
    if next > 0.0 && next.is_finite() {
        (next, false)
    } else {
        (lambda, true)
    }
}

/// Per-outer-loop summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterSummary {
    pub k: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub phi_star: f64,
    pub inner_steps: usize,
    pub inner_initial_total: f64,
    pub inner_final_total: f64,
    pub inner_final_interior: f64,
    /// Relative L² error after the loop, per component, when measured.
    pub rel_error: Option<Vec<f64>>,
    pub plateau: bool,
    pub truncated: bool,
    pub batch_seed: u64,
}

/// One inner Adam step of the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub outer: usize,
    pub step: usize,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
}

/// Outer-loop state.
#[derive(Debug, Clone)]
pub struct IdrmState {
    pub k: usize,
    pub anchor: DiscreteField,
    pub lambda_k: f64,
    pub sigma_k: f64,
    pub phi_star: Option<f64>,
    pub history: Vec<OuterSummary>,
}

/// Result of [`run_idrm`].
#[derive(Debug, Clone)]
pub struct IdrmOutcome {
    pub summaries: Vec<OuterSummary>,
    pub trajectory: Vec<TrajectoryRow>,
    pub net: MlpNet,
    pub alpha: f64,
    /// Set when a non-finite inner loss ended the run early.
    pub aborted: Option<String>,
    pub converged: bool,
}

/// Seed streams used by one run.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const TRAIN_BATCH: u64 = 1_000;
    pub const EVAL_BATCH: u64 = 2_000;
    pub const TEST_SET: u64 = 3_000;
    pub const TIME_LEVEL: u64 = 10_000;
}

/// Builds the training batch for outer loop `k` (or the evaluation batch
/// when `eval` is set).
pub fn make_batch(spec: &ProblemSpec, cfg: &IdrmConfig, seed: u64, k: usize, eval: bool) -> Result<SampleBatch> {
    let batch = match cfg.quadrature {
        Quadrature::MonteCarlo { interior, boundary } => {
            let stream = if eval { streams::EVAL_BATCH } else { streams::TRAIN_BATCH } + k as u64;
            sample_batch(&spec.domain, interior, boundary, derive_seed(seed, stream))?
        }
        Quadrature::Grid { h, t_nodes } => grid_quad(&spec.domain, h)?.batch(t_nodes),
    };
    Ok(match &spec.singular_set {
        Some(s) => batch.exclude(|x| s(x)),
        None => batch,
    })
}

/// Replaces a batch's random `t` values by a Gauss-Legendre rule.
pub fn with_gauss_t(batch: SampleBatch, nodes: usize) -> SampleBatch {
    let (n, w) = gauss_legendre(nodes);
    batch.with_t_rule(TRule::Shared { nodes: n, weights: w })
}

/// Runs the outer iteration from `net`.
///
/// `probe` measures the relative error after every outer loop.
pub fn run_idrm(
    spec: &ProblemSpec,
    cfg: &IdrmConfig,
    adam: &AdamConfig,
    seed: u64,
    net: MlpNet,
    mut probe: Option<&mut dyn FnMut(&MlpNet) -> Result<Vec<f64>>>,
) -> Result<IdrmOutcome> {
    let mut errs = cfg.errors(spec);
    errs.extend(adam.errors());
    if let Err(Error::Config(e)) = spec.validate() {
        errs.extend(e);
    }
    let outputs = spec.ansatz.net_outputs(spec.n_components);
    if net.input_dim() != spec.dim() || net.output_dim() != outputs {
        errs.push(format!(
            "network {} does not map R^{} to R^{}",
            net.arch().label(),
            spec.dim(),
            outputs
        ));
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let alpha = cfg.alpha.resolve(spec.p_exponent, spec.rho_exponent)?;

    let mut state = IdrmState {
        k: 0,
        anchor: DiscreteField::from_net(&net, spec.ansatz),
        lambda_k: cfg.lambda0,
        sigma_k: cfg.sigma0,
        phi_star: None,
        history: Vec::new(),
    };
    let mut net = net;
    let mut trajectory = Vec::new();
    let mut batch: Option<SampleBatch> = None;
    let mut aborted = None;
    let mut converged = false;
    let mut iter = 0;
    let mut adam_state = AdamState::new(net.n_params());

    for k in 0..cfg.outer_loops {
        state.k = k;
        state.anchor = DiscreteField::from_net(&net, spec.ansatz);
        if batch.is_none() || cfg.resample_every_outer {
            batch = Some(make_batch(spec, cfg, seed, k, false)?);
        }
        let train = batch.as_ref().expect("batch built above");
        let scfg = SurrogateConfig {
            lambda_k: state.lambda_k,
            mu: cfg.mu,
            sigma: state.sigma_k,
            p_exponent: spec.p_exponent,
        };
        let loss = SurrogateLoss::new(spec, &state.anchor, scfg, train)?;
        if !cfg.carry_adam_state {
            adam_state = AdamState::new(net.n_params());
        }
        let adam_k = AdamConfig {
            learning_rate: adam.learning_rate * cfg.lr_decay.powi(k as i32),
            ..*adam
        };
        let trace = minimize_with_state(|n: &MlpNet| loss.evaluate_with_grad(n), net.clone(), &adam_k, &mut adam_state)?;
        for r in &trace.records {
            trajectory.push(TrajectoryRow {
                iter,
                outer: k,
                step: r.step,
                loss: r.loss,
                grad_norm: r.grad_norm,
            });
            iter += 1;
        }
        net = trace.net.clone();

        let final_loss = if cfg.resample_every_outer && matches!(cfg.quadrature, Quadrature::MonteCarlo { .. }) {
            let eval = make_batch(spec, cfg, seed, k, true)?;
            SurrogateLoss::new(spec, &state.anchor, scfg, &eval)?.evaluate(&net)
        } else {
            loss.evaluate(&net)
        };
        let final_loss = match final_loss {
            Ok(l) => l,
            Err(e) => {
                aborted = Some(format!("outer loop {k}: {e}"));
                break;
            }
        };
        let phi = dual_potential_estimate(&final_loss);
        state.phi_star = Some(phi);
        let rel_error = match probe.as_mut() {
            Some(p) => Some(p(&net)?),
            None => None,
        };
        let (next_lambda, plateau) = update_lambda(state.lambda_k, phi, alpha, cfg.c_s);
        let summary = OuterSummary {
            k,
            lambda: state.lambda_k,
            sigma: state.sigma_k,
            phi_star: phi,
            inner_steps: trace.records.len(),
            inner_initial_total: trace.records.first().map_or(f64::NAN, |r| r.loss.total),
            inner_final_total: final_loss.total,
            inner_final_interior: final_loss.interior,
            rel_error,
            plateau,
            truncated: trace.truncated,
            batch_seed: train.seed,
        };
        state.history.push(summary);
        if trace.truncated {
            aborted = Some(format!("outer loop {k}: non-finite loss, inner minimization truncated"));
            break;
        }
        state.lambda_k = next_lambda;
        state.sigma_k = sigma_at(cfg, k + 1);
        if cfg.eps_tol > 0.0 && phi <= cfg.eps_tol {
            converged = true;
            break;
        }
    }
    Ok(IdrmOutcome {
        summaries: state.history,
        trajectory,
        net,
        alpha,
        aborted,
        converged,
    })
}
