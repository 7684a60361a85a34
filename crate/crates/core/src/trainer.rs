//! Adam minimization over network parameters.

use serde::{Deserialize, Serialize};

use crate::loss::LossBreakdown;
use crate::mlp::{MlpNet, ParamGradient};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_steps: usize,
    pub grad_clip: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_steps: 500,
            grad_clip: None,
        }
    }
}

impl AdamConfig {
    pub fn errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.learning_rate > 0.0) {
            errs.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            errs.push(format!("beta1 must lie in [0, 1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            errs.push(format!("beta2 must lie in [0, 1), got {}", self.beta2));
        }
        if !(self.epsilon > 0.0) {
            errs.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_steps == 0 {
            errs.push("max_steps must be >= 1".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                errs.push(format!("grad_clip must be positive, got {c}"));
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// First and second moment estimates and the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update in canonical parameter order, followed by
/// the parameter-bound projection when the architecture has one.
pub fn adam_step(net: &mut MlpNet, grad: &ParamGradient, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let n = net.n_params();
    for given in [grad.len(), state.m.len(), state.v.len()] {
        if given != n {
            return Err(Error::DimensionMismatch { expected: n, given });
        }
    }
    if let Some(i) = grad.0.iter().position(|g| !g.is_finite()) {
        return Err(Error::non_finite("gradient entry", i));
    }
    let scale = match cfg.grad_clip {
        Some(c) => {
            let norm = grad.norm();
            if norm > c {
                c / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let params = net.params_mut();
    for i in 0..n {
        let g = grad.0[i] * scale;
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    net.clamp_to_bound();
    Ok(())
}

/// A loss value that exposes a scalar total.
pub trait LossRecord: Clone {
    fn total(&self) -> f64;
}

impl LossRecord for f64 {
    fn total(&self) -> f64 {
        *self
    }
}

/// `(total, interior, boundary)` of the residual loss.
impl LossRecord for (f64, f64, f64) {
    fn total(&self) -> f64 {
        self.0
    }
}

impl LossRecord for LossBreakdown {
    fn total(&self) -> f64 {
        self.total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<R> {
    pub step: usize,
    pub loss: R,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainTrace<R> {
    /// Loss and gradient norm at the parameters before each update.
    pub records: Vec<StepRecord<R>>,
    pub net: MlpNet,
    /// Set when a non-finite value stopped the run early; `net` is then the
    /// last parameter set with a finite loss.
    pub truncated: bool,
}

impl<R: LossRecord> TrainTrace<R> {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss.total())
    }
}

fn is_numerical(e: &Error) -> bool {
    matches!(e, Error::NonFinite { .. } | Error::Numerical(_))
}

/// Runs at most `cfg.max_steps` Adam steps from `net`.
///
/// A non-finite loss or gradient at the first step is an error; later it
/// truncates the trace.
pub fn minimize<R, F>(loss: F, net: MlpNet, cfg: &AdamConfig) -> Result<TrainTrace<R>>
where
    R: LossRecord,
    F: FnMut(&MlpNet) -> Result<(R, ParamGradient)>,
{
    let mut state = AdamState::new(net.n_params());
    minimize_with_state(loss, net, cfg, &mut state)
}

/// [`minimize`] continuing from existing Adam moments.
pub fn minimize_with_state<R, F>(
    mut loss: F,
    net: MlpNet,
    cfg: &AdamConfig,
    state: &mut AdamState,
) -> Result<TrainTrace<R>>
where
    R: LossRecord,
    F: FnMut(&MlpNet) -> Result<(R, ParamGradient)>,
{
    cfg.validate()?;
    if !net.all_finite() {
        return Err(Error::Numerical("initial network has non-finite parameters".into()));
    }
    if state.m.len() != net.n_params() {
        return Err(Error::DimensionMismatch {
            expected: net.n_params(),
            given: state.m.len(),
        });
    }
    let mut current = net;
    let mut records = Vec::with_capacity(cfg.max_steps);
    for step in 0..cfg.max_steps {
        let evaluated = loss(&current).and_then(|(rec, grad)| {
            if rec.total().is_finite() {
                Ok((rec, grad))
            } else {
                Err(Error::Numerical(format!("loss is {} at step {step}", rec.total())))
            }
        });
        let (rec, grad) = match evaluated {
            Ok(v) => v,
            Err(e) if step > 0 && is_numerical(&e) => {
                return Ok(TrainTrace {
                    records,
                    net: current,
                    truncated: true,
                })
            }
            Err(e) => return Err(e),
        };
        records.push(StepRecord {
            step,
            loss: rec,
            grad_norm: grad.norm(),
        });
        let mut next = current.clone();
        match adam_step(&mut next, &grad, state, cfg) {
            Ok(()) if next.all_finite() => current = next,
            Ok(()) => {
                return Ok(TrainTrace {
                    records,
                    net: current,
                    truncated: true,
                })
            }
            Err(e) if step > 0 && is_numerical(&e) => {
                return Ok(TrainTrace {
                    records,
                    net: current,
                    truncated: true,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainTrace {
        records,
        net: current,
        truncated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NetArch;

    fn scalar_net(theta: f64) -> MlpNet {
        // Only the output bias matters for these tests.
        let mut net = MlpNet::zeros(NetArch::new(1, vec![1], 1).unwrap()).unwrap();
        net.params_mut()[3] = theta;
        net
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = scalar_net(1.5);
        let before = net.clone();
        let mut st = AdamState::new(net.n_params());
        adam_step(&mut net, &ParamGradient::zeros(4), &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn non_finite_gradient_rejected_without_update() {
        let mut net = scalar_net(1.5);
        let before = net.clone();
        let mut st = AdamState::new(4);
        let g = ParamGradient(vec![0.0, f64::NAN, 0.0, 1.0]);
        assert!(adam_step(&mut net, &g, &mut st, &AdamConfig::default()).is_err());
        assert_eq!(net, before);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn mid_run_nan_truncates() {
        let cfg = AdamConfig {
            learning_rate: 0.1,
            max_steps: 10,
            ..AdamConfig::default()
        };
        let mut calls = 0;
        let trace = minimize(
            |net: &MlpNet| {
                calls += 1;
                let th = net.params()[3];
                let l = if calls > 3 { f64::NAN } else { th * th };
                Ok((l, ParamGradient(vec![0.0, 0.0, 0.0, 2.0 * th])))
            },
            scalar_net(1.0),
            &cfg,
        )
        .unwrap();
        assert!(trace.truncated);
        assert_eq!(trace.records.len(), 3);
        assert!(trace.net.all_finite());
    }

    #[test]
    fn nan_at_start_is_an_error() {
        let r = minimize(
            |_: &MlpNet| Ok((f64::NAN, ParamGradient::zeros(4))),
            scalar_net(0.0),
            &AdamConfig::default(),
        );
        assert!(r.is_err());
    }
}
