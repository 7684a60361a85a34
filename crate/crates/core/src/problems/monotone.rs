//! Numerical checks of monotonicity.

use rand::Rng;

use super::{FieldArg, ProblemSpec};
use crate::dual::Real;
use crate::mlp::{evaluate_points, JetSpec, MlpNet, NetArch};
use crate::quadrature::{rng_from_seed, WeightedPoints};
use crate::Result;

/// Outcome of [`check_monotonicity`].
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Smallest `<u-v, A(u)-A(v)> / ‖u-v‖^ρ` over the checked pairs.
    pub min_ratio: f64,
    /// Pairs with a negative pairing difference.
    pub violations: usize,
    /// Pairs with `u ≠ v` that entered the ratio.
    pub checked: usize,
}

/// Random fields vanishing on the boundary: `s · bump(x) · N(x)` for a small
/// random network `N`, so that differences stay in the zero-trace space.
struct BumpField {
    values: Vec<f64>,
    grads: Vec<f64>,
}

fn bump_field(spec: &ProblemSpec, quad: &WeightedPoints, net: &MlpNet) -> Result<BumpField> {
    let d = spec.dim();
    let n = spec.n_components;
    let dom = &spec.domain;
    let jets = evaluate_points(net, quad.points.view(), &JetSpec::first_order(d))?;
    let mut values = Vec::with_capacity(quad.len() * n);
    let mut grads = Vec::with_capacity(quad.len() * n * d);
    for (i, x) in quad.points.outer_iter().enumerate() {
        let s: Vec<f64> = (0..d).map(|j| (x[j] - dom.lower()[j]) / dom.edge(j)).collect();
        let factors: Vec<f64> = s.iter().map(|v| 4.0 * v * (1.0 - v)).collect();
        let b: f64 = factors.iter().product();
        let db: Vec<f64> = (0..d)
            .map(|j| {
                let others: f64 = (0..d).filter(|&k| k != j).map(|k| factors[k]).product();
                others * 4.0 * (1.0 - 2.0 * s[j]) / dom.edge(j)
            })
            .collect();
        let jet = jets.jet(i);
        for o in 0..n {
            let v = jet.value(o);
            values.push(b * v);
            let g = jet.grad(o);
            for j in 0..d {
                grads.push(db[j] * v + b * g[j]);
            }
        }
    }
    Ok(BumpField { values, grads })
}

fn w1p_norm(values: &[f64], grads: &[f64], quad: &WeightedPoints, n: usize, d: usize, p: f64) -> f64 {
    let mut acc = 0.0;
    for (i, w) in quad.weights.iter().enumerate() {
        let v: f64 = values[i * n..(i + 1) * n].iter().map(|t| t * t).sum::<f64>().sqrt();
        let g: f64 = grads[i * n * d..(i + 1) * n * d].iter().map(|t| t * t).sum::<f64>().sqrt();
        acc += w * (v.powf(p) + g.powf(p));
    }
    acc.powf(1.0 / p)
}

/// Estimates `<u-v, A(u)-A(v)> / ‖u-v‖_{W^{1,p}}^ρ` for `n_pairs` random
/// zero-trace field pairs with `‖u‖, ‖v‖ <= radius`, sharing one quadrature
/// set between the pairing and the norm.
pub fn check_monotonicity(
    spec: &ProblemSpec,
    n_pairs: usize,
    quad: &WeightedPoints,
    radius: f64,
    seed: u64,
) -> Result<MonotonicityReport> {
    let d = spec.dim();
    let n = spec.n_components;
    let p = spec.p_exponent;
    let mut rng = rng_from_seed(seed);
    let arch = NetArch::new(d, vec![8], n)?;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<BumpField> {
        let mut net = MlpNet::glorot(arch.clone(), rng)?;
        for b in net.params_mut() {
            *b += rng.random_range(-0.5..0.5);
        }
        let mut f = bump_field(spec, quad, &net)?;
        let norm = w1p_norm(&f.values, &f.grads, quad, n, d, p);
        let target = radius * rng.random_range(0.05..1.0);
        let s = if norm > 0.0 { target / norm } else { 0.0 };
        f.values.iter_mut().for_each(|v| *v *= s);
        f.grads.iter_mut().for_each(|v| *v *= s);
        Ok(f)
    };
    let mut report = MonotonicityReport {
        min_ratio: f64::INFINITY,
        violations: 0,
        checked: 0,
    };
    let pairing = spec.pairing.as_ref();
    for _ in 0..n_pairs {
        let u = draw(&mut rng)?;
        let v = draw(&mut rng)?;
        let dv: Vec<f64> = u.values.iter().zip(&v.values).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = u.grads.iter().zip(&v.grads).map(|(a, b)| a - b).collect();
        let mut diff = 0.0;
        for (i, w) in quad.weights.iter().enumerate() {
            let x = quad.points.row(i);
            let x = x.as_slice().expect("standard layout");
            let vs = i * n..(i + 1) * n;
            let gs = i * n * d..(i + 1) * n * d;
            let test = FieldArg::new(&dv[vs.clone()], &dg[gs.clone()]);
            let au = f64::pairing(pairing, x, FieldArg::new(&u.values[vs.clone()], &u.grads[gs.clone()]), test);
            let av = f64::pairing(pairing, x, FieldArg::new(&v.values[vs], &v.grads[gs]), test);
            diff += w * (au - av);
        }
        let norm = w1p_norm(&dv, &dg, quad, n, d, p);
        if norm == 0.0 {
            continue;
        }
        report.checked += 1;
        if diff < 0.0 {
            report.violations += 1;
        }
        report.min_ratio = report.min_ratio.min(diff / norm.powf(spec.rho_exponent));
    }
    Ok(report)
}

fn flux(a: &[f64], p: f64) -> Vec<f64> {
    let n2: f64 = a.iter().map(|v| v * v).sum();
    let c = if n2 == 0.0 { 0.0 } else { n2.powf((p - 2.0) / 2.0) };
    a.iter().map(|v| c * v).collect()
}

/// Violation margin of
/// `(|b|^{p-2}b - |a|^{p-2}a)·(b-a) >= (p-1)|b-a|²(1+|a|²+|b|²)^{(p-2)/2}`;
/// positive values are violations.
pub fn monotone_violation(a: &[f64], b: &[f64], p: f64) -> f64 {
    let fa = flux(a, p);
    let fb = flux(b, p);
    let lhs: f64 = (0..a.len()).map(|i| (fb[i] - fa[i]) * (b[i] - a[i])).sum();
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum();
    let a2: f64 = a.iter().map(|v| v * v).sum();
    let b2: f64 = b.iter().map(|v| v * v).sum();
    let rhs = (p - 1.0) * d2 * (1.0 + a2 + b2).powf((p - 2.0) / 2.0);
    rhs - lhs
}

/// Violation margin of `||b|^{p-2}b - |a|^{p-2}a| <= 2^{2-p}|b-a|^{p-1}`;
/// positive values are violations.
pub fn continuity_violation(a: &[f64], b: &[f64], p: f64) -> f64 {
    let fa = flux(a, p);
    let fb = flux(b, p);
    let lhs: f64 = fa.iter().zip(&fb).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
    let d: f64 = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
    lhs - 2f64.powf(2.0 - p) * d.powf(p - 1.0)
}
