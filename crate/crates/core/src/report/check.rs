//! Self-checks of the differentiation, loss and operator code.
//!
//! Each check compares a computed quantity with an independent reference
//! (central differences, the Ritz energy, closed-form inequalities) on
//! seeded random inputs.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::idrm::{compute_exponents, with_gauss_t};
use crate::loss::{SurrogateConfig, SurrogateLoss};
use crate::mlp::{curl_field, evaluate_points, JetSpec, MlpNet, NetArch};
use crate::problems::{
    check_monotonicity, continuity_violation, conv_diffusion, linear_smooth, monotone_violation, navier_stokes,
    plaplace_large, plaplace_small, Ansatz, DiscreteField, ProblemSpec,
};
use crate::quadrature::{derive_seed, rng_from_seed, sample_batch, uniform_points, SampleBatch};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckOutcome {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckOutcome {
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn random_net(rng: &mut ChaCha8Rng, d: usize, widths: Vec<usize>, out: usize) -> Result<MlpNet> {
    let mut net = MlpNet::glorot(NetArch::new(d, widths, out)?, rng)?;
    // Nonzero biases so that no layer sits at the symmetric point.
    for p in net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    Ok(net)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Largest relative error of the forward-mode spatial gradient against
/// central differences over `n` random nets and points.
pub fn spatial_gradient_error(n: usize, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let d = rng.random_range(1..=10);
        let depth = rng.random_range(1..=3);
        let widths = (0..depth).map(|_| rng.random_range(3..=12)).collect();
        let net = random_net(&mut rng, d, widths, 1)?;
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        let pts = Array2::from_shape_vec((1, d), x.clone()).expect("shape matches");
        let jets = evaluate_points(&net, pts.view(), &JetSpec::first_order(d))?;
        let g: Vec<f64> = jets.jet(0).grad(0).to_vec();
        let mut fd = vec![0.0; d];
        for (j, fdj) in fd.iter_mut().enumerate() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            *fdj = (net.eval(&xp)?[0] - net.eval(&xm)?[0]) / (2.0 * h);
        }
        worst = worst.max(rel_diff(&g, &fd));
    }
    Ok(worst)
}

fn small_problem(i: usize) -> ProblemSpec {
    match i % 5 {
        0 => conv_diffusion(2),
        1 => plaplace_large(3),
        2 => plaplace_small(2, Some(0.01)),
        3 => linear_smooth(2, vec![0.5, -1.0], 1.0),
        _ => navier_stokes(0.1),
    }
}

fn small_batch(spec: &ProblemSpec, n: usize, seed: u64) -> Result<SampleBatch> {
    let b = sample_batch(&spec.domain, n, n / 2, seed)?;
    Ok(match &spec.singular_set {
        Some(s) => b.exclude(|x| s(x)),
        None => b,
    })
}

fn widths_for(spec: &ProblemSpec) -> Vec<usize> {
    if spec.ansatz == Ansatz::Curl {
        vec![5, 5]
    } else {
        vec![6, 5]
    }
}

/// Largest relative error of the reverse-mode parameter gradient of random
/// surrogate losses against central differences over all parameters.
pub fn parameter_gradient_error(n: usize, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let spec = small_problem(i);
        let out = spec.ansatz.net_outputs(spec.n_components);
        let net = random_net(&mut rng, spec.dim(), widths_for(&spec), out)?;
        let anchor_net = random_net(&mut rng, spec.dim(), widths_for(&spec), out)?;
        let anchor = DiscreteField::from_net(&anchor_net, spec.ansatz);
        let batch = small_batch(&spec, 16, derive_seed(seed, i as u64))?;
        let cfg = SurrogateConfig {
            lambda_k: rng.random_range(0.5..2.0),
            mu: if i % 2 == 0 { 0.0 } else { rng.random_range(0.1..2.0) },
            sigma: rng.random_range(1.0..50.0),
            p_exponent: spec.p_exponent,
        };
        let loss = SurrogateLoss::new(&spec, &anchor, cfg, &batch)?;
        let (_, grad) = loss.evaluate_with_grad(&net)?;
        let mut fd = vec![0.0; net.n_params()];
        for (j, fdj) in fd.iter_mut().enumerate() {
            let mut np = net.clone();
            np.params_mut()[j] += h;
            let lp = loss.evaluate(&np)?.total;
            np.params_mut()[j] -= 2.0 * h;
            let lm = loss.evaluate(&np)?.total;
            *fdj = (lp - lm) / (2.0 * h);
        }
        worst = worst.max(rel_diff(grad.as_slice(), &fd));
    }
    Ok(worst)
}

/// Largest `|∇·(∇×Ψ)|` of a random potential over `n` random points.
pub fn curl_divergence(n: usize, seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let psi = random_net(&mut rng, 3, vec![10, 10], 3)?;
    let pts = uniform_points(&crate::Domain::unit_cube(3), n, derive_seed(seed, 1));
    let evals = curl_field(&psi, pts.view())?;
    Ok(evals.iter().map(|e| e.divergence().abs()).fold(0.0, f64::max))
}

/// Largest `|I1| + |I2| + |I3|` when the network equals its anchor.
pub fn zero_increment_residual(seed: u64) -> Result<f64> {
    let mut rng = rng_from_seed(seed);
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let spec = small_problem(i);
        let out = spec.ansatz.net_outputs(spec.n_components);
        let net = random_net(&mut rng, spec.dim(), widths_for(&spec), out)?;
        let anchor = DiscreteField::from_net(&net, spec.ansatz);
        let batch = small_batch(&spec, 64, derive_seed(seed, i as u64))?;
        let cfg = SurrogateConfig {
            lambda_k: 1.3,
            mu: 0.7,
            sigma: 10.0,
            p_exponent: spec.p_exponent,
        };
        let l = SurrogateLoss::new(&spec, &anchor, cfg, &batch)?.evaluate(&net)?;
        worst = worst.max(l.i1.abs() + l.i2.abs() + l.i3.abs() + l.interior.abs());
    }
    Ok(worst)
}

/// `Σ ω [½(|∇u|² + c u²) - f0 u - f1·∇u]` for a symmetric linear problem.
pub fn ritz_energy(spec: &ProblemSpec, c: f64, net: &MlpNet, batch: &SampleBatch) -> Result<f64> {
    let d = spec.dim();
    let jets = evaluate_points(net, batch.interior.points.view(), &JetSpec::first_order(d))?;
    let mut acc = 0.0;
    for (i, x) in batch.interior.points.outer_iter().enumerate() {
        let jet = jets.jet(i);
        let u = jet.value(0);
        let g = jet.grad(0);
        let src = (spec.source)(x.as_slice().expect("standard layout"));
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let f1g: f64 = g.iter().zip(&src.f1).map(|(a, b)| a * b).sum();
        acc += batch.interior.weights[i] * (0.5 * (g2 + c * u * u) - src.f0[0] * u - f1g);
    }
    Ok(acc)
}

/// Largest `|ΔL̂ - ΔR̂|` over `pairs` random network pairs on a symmetric
/// linear problem with `λ = 1`, `μ = 0` and a shared batch.
pub fn ritz_equivalence_gap(pairs: usize, seed: u64) -> Result<f64> {
    let c = 1.5;
    let spec = linear_smooth(3, vec![0.0; 3], c);
    let mut rng = rng_from_seed(seed);
    let batch = with_gauss_t(sample_batch(&spec.domain, 400, 100, derive_seed(seed, 1))?, 2);
    let anchor_net = random_net(&mut rng, 3, vec![8, 8], 1)?;
    let anchor = DiscreteField::from_net(&anchor_net, Ansatz::Direct);
    let cfg = SurrogateConfig {
        lambda_k: 1.0,
        mu: 0.0,
        sigma: 0.0,
        p_exponent: 2.0,
    };
    let loss = SurrogateLoss::new(&spec, &anchor, cfg, &batch)?;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let u = random_net(&mut rng, 3, vec![8, 8], 1)?;
        let v = random_net(&mut rng, 3, vec![8, 8], 1)?;
        let dl = loss.evaluate(&u)?.interior - loss.evaluate(&v)?.interior;
        let dr = ritz_energy(&spec, c, &u, &batch)? - ritz_energy(&spec, c, &v, &batch)?;
        worst = worst.max((dl - dr).abs());
    }
    Ok(worst)
}

/// Draws a vector in `R^d` with a random scale spanning several decades.
pub fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    (0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

/// Number of violations of the pointwise monotonicity and continuity
/// inequalities over `n` random pairs in `R^10`, beyond rounding.
pub fn pointwise_violations(n: usize, p: f64, seed: u64) -> (usize, usize) {
    let mut rng = rng_from_seed(seed);
    let mut mono = 0;
    let mut cont = 0;
    for _ in 0..n {
        let a = random_vector(&mut rng, 10);
        let b = if rng.random::<f64>() < 0.1 {
            // Nearby pairs probe the small-difference regime.
            a.iter().map(|v| v * (1.0 + 1e-3 * rng.random_range(-1.0..1.0))).collect()
        } else {
            random_vector(&mut rng, 10)
        };
        let scale = 1.0
            + a.iter().chain(&b).map(|v| v * v).sum::<f64>().powf(p / 2.0)
            + a.iter().chain(&b).map(|v| v * v).sum::<f64>();
        if monotone_violation(&a, &b, p) > 1e-12 * scale {
            mono += 1;
        }
        if continuity_violation(&a, &b, p) > 1e-12 * scale {
            cont += 1;
        }
    }
    (mono, cont)
}

/// Runs every check with reduced sizes suitable for interactive use.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.push(timed("spatial gradient vs central differences", || {
        let e = spatial_gradient_error(100, seed)?;
        Ok((e <= 1e-7, format!("max rel. error {e:.2e} (tol 1e-7)")))
    }));
    out.push(timed("parameter gradient vs central differences", || {
        let e = parameter_gradient_error(20, seed)?;
        Ok((e <= 1e-6, format!("max rel. error {e:.2e} (tol 1e-6)")))
    }));
    out.push(timed("divergence of curl ansatz", || {
        let e = curl_divergence(1000, seed)?;
        Ok((e <= 1e-12, format!("max |div| {e:.2e} (tol 1e-12)")))
    }));
    out.push(timed("zero increment annihilates interior terms", || {
        let e = zero_increment_residual(seed)?;
        Ok((e == 0.0, format!("max |I1|+|I2|+|I3| = {e:e}")))
    }));
    out.push(timed("surrogate differences equal Ritz differences", || {
        let e = ritz_equivalence_gap(20, seed)?;
        Ok((e <= 1e-10, format!("max gap {e:.2e} (tol 1e-10)")))
    }));
    for p in [1.5, 2.0] {
        out.push(timed(
            if p == 1.5 {
                "pointwise inequalities, p = 1.5"
            } else {
                "pointwise inequalities, p = 2"
            },
            move || {
                let (m, c) = pointwise_violations(100_000, p, seed);
                Ok((m == 0 && c == 0, format!("{m} monotonicity and {c} continuity violations in 1e5 pairs")))
            },
        ));
    }
    out.push(timed("rate exponents", || {
        let a = compute_exponents(2.0, 2.0)?;
        let b = compute_exponents(1.8, 2.0)?;
        let ok = a.alpha == 0.0 && a.beta == 1.0 && (b.alpha + 1.408 / 1.584).abs() <= 1e-12 && (b.beta - 2.0).abs() <= 1e-12;
        Ok((ok, format!("(2,2) -> ({}, {}); (1.8,2) -> ({}, {})", a.alpha, a.beta, b.alpha, b.beta)))
    }));
    out.push(timed("operator monotonicity on zero-trace fields", || {
        let mut lines = Vec::new();
        let mut ok = true;
        for spec in [conv_diffusion(3), plaplace_large(3), linear_smooth(2, vec![1.0, 0.0], 0.5)] {
            let quad = crate::quadrature::grid_quad(&spec.domain, 0.05)?.volume_points();
            let r = check_monotonicity(&spec, 20, &quad, 1.0, seed)?;
            ok &= r.violations == 0;
            lines.push(format!("{}: {} of {} pairs violate", spec.name, r.violations, r.checked));
        }
        Ok((ok, lines.join("; ")))
    }));
    out
}
