//! Relative L² errors against exact solutions.

use ndarray::Array2;

use crate::idrm::streams;
use crate::mlp::MlpNet;
use crate::problems::{Ansatz, DiscreteField, ProblemSpec};
use crate::quadrature::{derive_seed, grid_quad, uniform_points, WeightedPoints};
use crate::{Error, Result};

/// Per-component `‖u - û‖ / ‖u‖` from values laid out `points x components`.
pub fn relative_l2(approx: &[f64], exact: &[f64], weights: &[f64], components: usize) -> Result<Vec<f64>> {
    if approx.len() != exact.len() || exact.len() != weights.len() * components {
        return Err(Error::DimensionMismatch {
            expected: weights.len() * components,
            given: approx.len(),
        });
    }
    let mut num = vec![0.0; components];
    let mut den = vec![0.0; components];
    for (i, w) in weights.iter().enumerate() {
        for c in 0..components {
            let e = exact[i * components + c];
            let a = approx[i * components + c];
            num[c] += w * (e - a) * (e - a);
            den[c] += w * e * e;
        }
    }
    num.iter()
        .zip(&den)
        .map(|(n, d)| {
            if *d == 0.0 {
                Err(Error::ZeroReferenceNorm)
            } else {
                Ok((n / d).sqrt())
            }
        })
        .collect()
}

/// Where errors are measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestSet {
    /// Uniform points with equal weights.
    MonteCarlo { points: usize },
    /// Trapezoidal grid nodes.
    Grid { h: f64 },
}

impl TestSet {
    /// 50,000 random points in high dimension, a grid in three or fewer.
    pub fn default_for(spec: &ProblemSpec) -> Self {
        if spec.dim() <= 3 {
            TestSet::Grid { h: 0.05 }
        } else {
            TestSet::MonteCarlo { points: 50_000 }
        }
    }
}

/// A fixed evaluation set with the exact solution sampled on it.
#[derive(Debug, Clone)]
pub struct ErrorProbe {
    pub points: WeightedPoints,
    pub exact: Vec<f64>,
    pub components: usize,
    pub ansatz: Ansatz,
}

impl ErrorProbe {
    /// The random variant draws from a stream disjoint from all training
    /// batches of `seed`. Singular nodes of the problem are dropped.
    pub fn new(spec: &ProblemSpec, set: TestSet, seed: u64) -> Result<Self> {
        let exact_sol = spec
            .exact
            .as_ref()
            .ok_or_else(|| Error::Config(vec![format!("{} has no exact solution", spec.name)]))?;
        let pts = match set {
            TestSet::MonteCarlo { points } => {
                let x: Array2<f64> = uniform_points(&spec.domain, points, derive_seed(seed, streams::TEST_SET));
                WeightedPoints {
                    points: x,
                    weights: vec![spec.domain.volume() / points as f64; points],
                }
            }
            TestSet::Grid { h } => grid_quad(&spec.domain, h)?.volume_points(),
        };
        let pts = match &spec.singular_set {
            Some(s) => pts.filter(|x| !s(x)),
            None => pts,
        };
        let exact: Vec<f64> = pts
            .points
            .outer_iter()
            .flat_map(|x| (exact_sol.value)(x.as_slice().expect("standard layout")))
            .collect();
        if let Some(i) = exact.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite("exact solution", i / spec.n_components));
        }
        Ok(Self {
            points: pts,
            exact,
            components: spec.n_components,
            ansatz: spec.ansatz,
        })
    }

    pub fn errors(&self, net: &MlpNet) -> Result<Vec<f64>> {
        let field = DiscreteField::from_net(net, self.ansatz);
        let approx = field.values(self.points.points.view())?;
        relative_l2(&approx, &self.exact, &self.points.weights, self.components)
    }
}

/// Relative L² error of a field on a weighted point set.
pub fn relative_l2_error(field: &DiscreteField, spec: &ProblemSpec, points: &WeightedPoints) -> Result<Vec<f64>> {
    let exact_sol = spec
        .exact
        .as_ref()
        .ok_or_else(|| Error::Config(vec![format!("{} has no exact solution", spec.name)]))?;
    let exact: Vec<f64> = points
        .points
        .outer_iter()
        .flat_map(|x| (exact_sol.value)(x.as_slice().expect("standard layout")))
        .collect();
    let approx = field.values(points.points.view())?;
    relative_l2(&approx, &exact, &points.weights, spec.n_components)
}
