//! Backward-Euler time marching for the quasilinear diffusion family.

use super::{run_idrm, streams, IdrmConfig, IdrmOutcome};
use crate::mlp::MlpNet;
use crate::problems::{Ansatz, DiscreteField, HeatFamily, ProblemSpec};
use crate::quadrature::derive_seed;
use crate::trainer::AdamConfig;
use crate::{Error, Result};

/// Outcome of one time level.
#[derive(Debug, Clone)]
pub struct TimeLevel {
    pub level: usize,
    pub t: f64,
    pub outcome: IdrmOutcome,
}

/// Solves `n_steps` backward-Euler steps of size `t_final / n_steps`, each
/// with the outer iteration warm-started from the previous level's network.
///
/// `probe(spec, net)` measures errors against the exact solution of the level.
pub fn run_time_marching(
    family: &HeatFamily,
    n_steps: usize,
    t_final: f64,
    cfg: &IdrmConfig,
    adam: &AdamConfig,
    seed: u64,
    net: MlpNet,
    mut probe: Option<&mut dyn FnMut(&ProblemSpec, &MlpNet) -> Result<Vec<f64>>>,
) -> Result<Vec<TimeLevel>> {
    if !(t_final > 0.0) || n_steps == 0 {
        return Err(Error::Config(vec![format!(
            "time marching needs T > 0 and at least one step, got T = {t_final}, {n_steps} steps"
        )]));
    }
    let dt = t_final / n_steps as f64;
    let mut levels = Vec::with_capacity(n_steps);
    let mut prev = family.initial();
    let mut net = net;
    for k in 0..n_steps {
        let t = (k + 1) as f64 * dt;
        let spec = family.step(dt, t, prev.clone());
        let level_seed = derive_seed(seed, streams::TIME_LEVEL + k as u64);
        let annotate = |e: Error| Error::AtTimeLevel {
            level: k + 1,
            source: Box::new(e),
        };
        let outcome = match probe.as_mut() {
            Some(p) => {
                let mut level_probe = |n: &MlpNet| p(&spec, n);
                run_idrm(&spec, cfg, adam, level_seed, net, Some(&mut level_probe))
            }
            None => run_idrm(&spec, cfg, adam, level_seed, net, None),
        }
        .map_err(annotate)?;
        net = outcome.net.clone();
        prev = DiscreteField::from_net(&net, Ansatz::Direct);
        let aborted = outcome.aborted.clone();
        levels.push(TimeLevel { level: k + 1, t, outcome });
        if let Some(reason) = aborted {
            return Err(annotate(Error::Numerical(reason)));
        }
    }
    Ok(levels)
}
