//! Adam updates and the minimization driver.

use idrm_core::trainer::{adam_step, minimize, AdamConfig, AdamState};
use idrm_core::{MlpNet, NetArch, ParamGradient};

/// Net whose output bias (parameter 3) is the only parameter in use.
fn scalar_net(theta: f64) -> MlpNet {
    let mut net = MlpNet::zeros(NetArch::new(1, vec![1], 1).unwrap()).unwrap();
    net.params_mut()[3] = theta;
    net
}

fn adam(lr: f64, steps: usize) -> AdamConfig {
    AdamConfig {
        learning_rate: lr,
        max_steps: steps,
        ..AdamConfig::default()
    }
}

fn quadratic(target: f64) -> impl FnMut(&MlpNet) -> idrm_core::Result<(f64, ParamGradient)> {
    move |n: &MlpNet| {
        let b = n.params()[3];
        let mut g = ParamGradient::zeros(n.n_params());
        g.0[3] = 2.0 * (b - target);
        Ok(((b - target) * (b - target), g))
    }
}

#[test]
fn first_adam_step_moves_by_the_learning_rate() {
    let mut net = scalar_net(1.0);
    let mut st = AdamState::new(net.n_params());
    let mut g = ParamGradient::zeros(net.n_params());
    g.0[3] = 0.37;
    adam_step(&mut net, &g, &mut st, &adam(0.1, 1)).unwrap();
    // m̂ / √v̂ = g / |g| after one bias-corrected step.
    assert!((net.params()[3] - 0.9).abs() < 1e-7);
    assert_eq!(st.step, 1);
    assert!(net.params()[..3].iter().all(|&p| p == 0.0));
}

#[test]
fn gradient_clipping_rescales_the_update_direction() {
    let cfg = AdamConfig {
        grad_clip: Some(1.0),
        ..adam(0.1, 1)
    };
    let mut net = scalar_net(0.0);
    let mut st = AdamState::new(net.n_params());
    let mut g = ParamGradient::zeros(net.n_params());
    g.0[0] = 30.0;
    g.0[3] = 40.0;
    adam_step(&mut net, &g, &mut st, &cfg).unwrap();
    // First moments hold the clipped gradient (0.6, 0.8) scaled by 1 - β1.
    assert!((st.m[0] - 0.06).abs() < 1e-15 && (st.m[3] - 0.08).abs() < 1e-15);
}

#[test]
fn non_finite_gradients_are_rejected() {
    let mut net = scalar_net(0.0);
    let mut st = AdamState::new(net.n_params());
    let mut g = ParamGradient::zeros(net.n_params());
    g.0[1] = f64::NAN;
    assert!(adam_step(&mut net, &g, &mut st, &adam(0.1, 1)).is_err());
}

#[test]
fn parameter_bound_is_enforced_after_each_step() {
    let arch = NetArch::new(1, vec![1], 1).unwrap().with_param_bound(0.5).unwrap();
    let mut net = MlpNet::from_params(arch, vec![0.0, 0.0, 0.0, 0.45]).unwrap();
    let mut st = AdamState::new(net.n_params());
    let mut g = ParamGradient::zeros(net.n_params());
    g.0[3] = -1.0;
    adam_step(&mut net, &g, &mut st, &adam(0.1, 1)).unwrap();
    assert_eq!(net.params()[3], 0.5);
}

#[test]
fn adam_minimizes_a_shifted_quadratic() {
    let trace = minimize(quadratic(3.0), scalar_net(0.0), &adam(0.05, 2000)).unwrap();
    assert_eq!(trace.records.len(), 2000);
    assert!(!trace.truncated);
    assert!((trace.net.params()[3] - 3.0).abs() <= 1e-3);
    assert!(trace.final_loss().unwrap() < trace.records[0].loss);
}

#[test]
fn constant_loss_leaves_the_network_unchanged() {
    let net = scalar_net(0.4);
    let trace = minimize(|n: &MlpNet| Ok((2.0, ParamGradient::zeros(n.n_params()))), net.clone(), &adam(0.1, 20)).unwrap();
    assert_eq!(trace.net, net);
    assert!(trace.records.iter().all(|r| r.loss == 2.0 && r.grad_norm == 0.0));
}

/// Least squares over the output layer of a net with a frozen hidden layer.
#[test]
fn linear_in_parameters_fit_reaches_the_normal_equations() {
    let arch = NetArch::new(1, vec![2], 1).unwrap();
    // Hidden: tanh(1.0 x + 0.2), tanh(-0.7 x + 0.5); output weights and bias trained.
    let init = MlpNet::from_params(arch, vec![1.0, -0.7, 0.2, 0.5, 0.0, 0.0, 0.0]).unwrap();
    let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
    let feats: Vec<[f64; 3]> = xs
        .iter()
        .map(|x| [(x + 0.2f64).tanh(), (-0.7 * x + 0.5f64).tanh(), 1.0])
        .collect();
    let loss = |n: &MlpNet| {
        let p = n.params();
        let (a, b, c) = (p[4], p[5], p[6]);
        let mut g = ParamGradient::zeros(n.n_params());
        let mut l = 0.0;
        for (f, y) in feats.iter().zip(&ys) {
            let r = a * f[0] + b * f[1] + c - y;
            l += r * r;
            for k in 0..3 {
                g.0[4 + k] += 2.0 * r * f[k];
            }
        }
        Ok((l, g))
    };
    let trace = minimize(loss, init, &adam(1e-2, 30_000)).unwrap();

    // Normal equations FᵀF θ = Fᵀy by Gaussian elimination.
    let mut m = [[0.0; 4]; 3];
    for (f, y) in feats.iter().zip(&ys) {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += f[i] * f[j];
            }
            m[i][3] += f[i] * y;
        }
    }
    for i in 0..3 {
        for r in i + 1..3 {
            let q = m[r][i] / m[i][i];
            for c in i..4 {
                m[r][c] -= q * m[i][c];
            }
        }
    }
    let mut theta = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|j| m[i][j] * theta[j]).sum();
        theta[i] = (m[i][3] - s) / m[i][i];
    }
    for k in 0..3 {
        assert!((trace.net.params()[4 + k] - theta[k]).abs() <= 1e-6, "{k}: {} vs {}", trace.net.params()[4 + k], theta[k]);
    }
}

#[test]
fn runs_are_bit_reproducible() {
    let a = minimize(quadratic(-1.5), scalar_net(0.3), &adam(0.01, 300)).unwrap();
    let b = minimize(quadratic(-1.5), scalar_net(0.3), &adam(0.01, 300)).unwrap();
    assert_eq!(a.net, b.net);
    assert_eq!(a.records, b.records);
}

#[test]
fn late_non_finite_loss_truncates_the_trace() {
    let mut calls = 0;
    let loss = |n: &MlpNet| {
        calls += 1;
        let (l, g) = quadratic(1.0)(n)?;
        Ok((if calls > 5 { f64::NAN } else { l }, g))
    };
    let trace = minimize(loss, scalar_net(0.0), &adam(0.1, 50)).unwrap();
    assert!(trace.truncated);
    assert_eq!(trace.records.len(), 5);
    assert!(trace.net.all_finite());
}

#[test]
fn non_finite_initial_loss_is_an_error() {
    let loss = |n: &MlpNet| Ok((f64::INFINITY, ParamGradient::zeros(n.n_params())));
    assert!(minimize(loss, scalar_net(0.0), &adam(0.1, 5)).is_err());
}

#[test]
fn invalid_optimizer_settings_are_rejected() {
    for cfg in [adam(0.0, 10), adam(0.1, 0), AdamConfig { beta1: 1.0, ..adam(0.1, 10) }] {
        assert!(minimize(quadratic(0.0), scalar_net(0.0), &cfg).is_err());
    }
}
