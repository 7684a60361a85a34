//! Empirical losses.
//!
//! With `w = u - u_k` the surrogate loss of outer iteration `k` is
//!
//! ```text
//! L^k(u) = λ Σ ω_i I1_i + μ λ² (Σ ω_i I2_i)^(2/p) + λ Σ ω_i I3_i + σ Σ ω_b |u - g|²
//! I1 = ∫_0^1 P(x, tλw, tλ∇w; w, ∇w) dt
//! I2 = |w|^p + |∇w|^p
//! I3 = P(x, u_k, ∇u_k; w, ∇w) - f0·w - f1:∇w
//! ```
//!
//! where `ω` are the quadrature weights of the interior and boundary samples.
//! For a symmetric linear operator the interior part equals the Ritz energy
//! up to a constant.

mod pinn;

use crate::dual::Real;
use crate::mlp::{evaluate_objective, JetSpec, MlpNet, ParamGradient, PointGroup, PointJet, PointObjective};
use crate::problems::{Ansatz, DiscreteField, FieldArg, FieldSamples, Pairing, ProblemSpec};
use crate::quadrature::{SampleBatch, TRule};
use crate::{Error, Result};

pub use pinn::{pinn_compatibility, PinnLoss};

/// Weights of one surrogate loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub lambda_k: f64,
    pub mu: f64,
    pub sigma: f64,
    pub p_exponent: f64,
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.lambda_k > 0.0) || !self.lambda_k.is_finite() {
            errs.push(format!("lambda_k must be positive and finite, got {}", self.lambda_k));
        }
        if !(self.mu >= 0.0) {
            errs.push(format!("mu must be nonnegative, got {}", self.mu));
        }
        if !(self.sigma >= 0.0) {
            errs.push(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.p_exponent > 1.0) {
            errs.push(format!("p exponent must exceed 1, got {}", self.p_exponent));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Raw quadrature sums of the loss terms and their weighted combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// `Σ ω_i I1_i`.
    pub i1: f64,
    /// `Σ ω_i I2_i`.
    pub i2: f64,
    /// `Σ ω_i I3_i`.
    pub i3: f64,
    /// `Σ ω_b |u - g|²`.
    pub boundary: f64,
    /// `λ i1 + μ λ² i2^(2/p) + λ i3`.
    pub interior: f64,
    /// `interior + σ boundary`.
    pub total: f64,
}

/// `Φ*` estimate `max(0, -interior)`; the boundary penalty is left out.
pub fn dual_potential_estimate(last: &LossBreakdown) -> f64 {
    (-last.interior).max(0.0)
}

/// Number of field components and their values/Jacobians from a net jet.
fn field_at<S: Real>(ansatz: Ansatz, n: usize, d: usize, jet: &PointJet<'_, S>) -> (Vec<S>, Vec<S>) {
    let mut v = vec![S::zero(); n];
    let mut g = vec![S::zero(); n * d];
    ansatz.field_from_jet(jet, &mut v, &mut g);
    (v, g)
}

fn boundary_value<S: Real>(ansatz: Ansatz, n: usize, jet: &PointJet<'_, S>) -> Vec<S> {
    match ansatz {
        Ansatz::Direct => (0..n).map(|o| jet.value(o)).collect(),
        Ansatz::Curl => {
            let d = |o: usize, m: usize| jet.grad(o)[m];
            vec![d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
        }
    }
}

fn boundary_spec(ansatz: Ansatz, d: usize) -> JetSpec {
    match ansatz {
        Ansatz::Direct => JetSpec::value_only(d),
        Ansatz::Curl => JetSpec::first_order(d),
    }
}

fn check_finite(what: &str, values: &[f64], stride: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(pos) => Err(Error::non_finite(what, pos / stride.max(1))),
        None => Ok(()),
    }
}

struct SurrogateObjective {
    groups: Vec<PointGroup>,
    pairing: std::sync::Arc<dyn Pairing>,
    ansatz: Ansatz,
    n: usize,
    d: usize,
    cfg: SurrogateConfig,
    anchor: FieldSamples,
    f0: Vec<f64>,
    f1: Vec<f64>,
    weights: Vec<f64>,
    t_rule: TRule,
    g: Vec<f64>,
    bweights: Vec<f64>,
}

const SURROGATE_TERMS: [&str; 4] = ["I1", "I2", "I3", "boundary misfit"];

impl SurrogateObjective {
    fn interior_terms<S: Real>(&self, i: usize, jet: &PointJet<'_, S>, out: &mut [S]) {
        let (n, d) = (self.n, self.d);
        let x = self.groups[0].points.row(i);
        let x = x.as_slice().expect("standard layout");
        let (u, gu) = field_at(self.ansatz, n, d, jet);
        let anchor = self.anchor.at(i);
        let w: Vec<S> = u.iter().zip(anchor.value).map(|(a, b)| *a - *b).collect();
        let gw: Vec<S> = gu.iter().zip(anchor.grad).map(|(a, b)| *a - *b).collect();
        let test = FieldArg::new(&w[..], &gw[..]);
        let pairing = self.pairing.as_ref();
        let lam = self.cfg.lambda_k;

        let mut scaled_w = vec![S::zero(); n];
        let mut scaled_g = vec![S::zero(); n * d];
        let mut i1 = S::zero();
        let mut add_node = |t: f64, omega: f64| {
            for (s, v) in scaled_w.iter_mut().zip(&w) {
                *s = *v * (t * lam);
            }
            for (s, v) in scaled_g.iter_mut().zip(&gw) {
                *s = *v * (t * lam);
            }
            i1 += S::pairing(pairing, x, FieldArg::new(&scaled_w, &scaled_g), test) * omega;
        };
        match &self.t_rule {
            TRule::PerPoint(ts) => add_node(ts[i], 1.0),
            TRule::Shared { nodes, weights } => {
                for (t, om) in nodes.iter().zip(weights) {
                    add_node(*t, *om);
                }
            }
        }

        let p = self.cfg.p_exponent;
        let i2 = if n == 1 {
            w[0].abs_powf(p) + crate::dual::norm_sq(&gw).powf(p / 2.0)
        } else {
            crate::dual::norm_sq(&w).powf(p / 2.0) + crate::dual::norm_sq(&gw).powf(p / 2.0)
        };

        let uk: Vec<S> = anchor.value.iter().map(|v| S::cst(*v)).collect();
        let guk: Vec<S> = anchor.grad.iter().map(|v| S::cst(*v)).collect();
        let mut i3 = S::pairing(pairing, x, FieldArg::new(&uk, &guk), test);
        for (f, v) in self.f0[i * n..(i + 1) * n].iter().zip(&w) {
            i3 -= *v * *f;
        }
        for (f, v) in self.f1[i * n * d..(i + 1) * n * d].iter().zip(&gw) {
            i3 -= *v * *f;
        }

        let wt = self.weights[i];
        out[0] = i1 * wt;
        out[1] = i2 * wt;
        out[2] = i3 * wt;
        out[3] = S::zero();
    }

    fn boundary_terms<S: Real>(&self, i: usize, jet: &PointJet<'_, S>, out: &mut [S]) {
        let u = boundary_value(self.ansatz, self.n, jet);
        let mut mis = S::zero();
        for (v, g) in u.iter().zip(&self.g[i * self.n..(i + 1) * self.n]) {
            let e = *v - *g;
            mis += e * e;
        }
        out[0] = S::zero();
        out[1] = S::zero();
        out[2] = S::zero();
        out[3] = mis * self.bweights[i];
    }

    fn breakdown(&self, sums: &[f64]) -> LossBreakdown {
        let c = &self.cfg;
        let lam = c.lambda_k;
        let smooth = if c.mu == 0.0 {
            0.0
        } else {
            c.mu * lam * lam * sums[1].max(0.0).powf(2.0 / c.p_exponent)
        };
        let interior = lam * sums[0] + smooth + lam * sums[2];
        LossBreakdown {
            i1: sums[0],
            i2: sums[1],
            i3: sums[2],
            boundary: sums[3],
            interior,
            total: interior + c.sigma * sums[3],
        }
    }
}

impl PointObjective for SurrogateObjective {
    fn groups(&self) -> &[PointGroup] {
        &self.groups
    }

    fn term_names(&self) -> &[&'static str] {
        &SURROGATE_TERMS
    }

    fn terms<S: Real>(&self, group: usize, index: usize, jet: &PointJet<'_, S>, out: &mut [S]) {
        if group == 0 {
            self.interior_terms(index, jet, out)
        } else {
            self.boundary_terms(index, jet, out)
        }
    }

    fn combine(&self, sums: &[f64]) -> (f64, Vec<f64>) {
        let c = &self.cfg;
        let lam = c.lambda_k;
        let q = 2.0 / c.p_exponent;
        let dsmooth = if c.mu == 0.0 || sums[1] <= 0.0 {
            0.0
        } else {
            c.mu * lam * lam * q * sums[1].powf(q - 1.0)
        };
        (self.breakdown(sums).total, vec![lam, dsmooth, lam, c.sigma])
    }

    fn is_affine(&self) -> bool {
        self.cfg.mu == 0.0
    }
}

/// The surrogate loss of one outer iteration with its anchor and samples
/// frozen.
pub struct SurrogateLoss {
    obj: SurrogateObjective,
}

impl SurrogateLoss {
    pub fn new(spec: &ProblemSpec, anchor: &DiscreteField, cfg: SurrogateConfig, batch: &SampleBatch) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        let d = spec.dim();
        let n = spec.n_components;
        if batch.interior.points.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                given: batch.interior.points.ncols(),
            });
        }
        if let TRule::PerPoint(ts) = &batch.t_rule {
            if ts.len() != batch.interior.len() {
                return Err(Error::DimensionMismatch {
                    expected: batch.interior.len(),
                    given: ts.len(),
                });
            }
        }
        if anchor.components() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                given: anchor.components(),
            });
        }
        let anchor_samples = anchor.sample(batch.interior.points.view())?;
        let mut f0 = Vec::with_capacity(batch.interior.len() * n);
        let mut f1 = Vec::with_capacity(batch.interior.len() * n * d);
        for x in batch.interior.points.outer_iter() {
            let s = (spec.source)(x.as_slice().expect("standard layout"));
            f0.extend_from_slice(&s.f0);
            f1.extend_from_slice(&s.f1);
        }
        check_finite("source f0", &f0, n)?;
        check_finite("source f1", &f1, n * d)?;
        let mut g = Vec::with_capacity(batch.boundary.len() * n);
        for x in batch.boundary.points.outer_iter() {
            g.extend((spec.boundary)(x.as_slice().expect("standard layout")));
        }
        check_finite("boundary data", &g, n)?;
        let groups = vec![
            PointGroup {
                name: "interior",
                points: batch.interior.points.clone(),
                spec: spec.ansatz.jet_spec(d),
            },
            PointGroup {
                name: "boundary",
                points: batch.boundary.points.clone(),
                spec: boundary_spec(spec.ansatz, d),
            },
        ];
        let pairing = match &spec.regularization {
            Some(r) => r.pairing.clone(),
            None => spec.pairing.clone(),
        };
        Ok(Self {
            obj: SurrogateObjective {
                groups,
                pairing,
                ansatz: spec.ansatz,
                n,
                d,
                cfg,
                anchor: anchor_samples,
                f0,
                f1,
                weights: batch.interior.weights.clone(),
                t_rule: batch.t_rule.clone(),
                g,
                bweights: batch.boundary.weights.clone(),
            },
        })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.obj.cfg
    }

    pub fn evaluate(&self, net: &MlpNet) -> Result<LossBreakdown> {
        let v = evaluate_objective(net, &self.obj, false)?;
        Ok(self.obj.breakdown(&v.sums))
    }

    pub fn evaluate_with_grad(&self, net: &MlpNet) -> Result<(LossBreakdown, ParamGradient)> {
        let v = evaluate_objective(net, &self.obj, true)?;
        Ok((self.obj.breakdown(&v.sums), v.grad.expect("gradient requested")))
    }
}

/// One-shot evaluation of the surrogate loss.
pub fn surrogate_loss(
    spec: &ProblemSpec,
    anchor: &DiscreteField,
    net: &MlpNet,
    cfg: SurrogateConfig,
    batch: &SampleBatch,
) -> Result<LossBreakdown> {
    SurrogateLoss::new(spec, anchor, cfg, batch)?.evaluate(net)
}
