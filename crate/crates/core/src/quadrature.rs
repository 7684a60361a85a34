//! Collocation samples and tensor trapezoidal grids.
//!
//! All randomness in the crate flows from 64-bit seeds through
//! [`rng_from_seed`] (ChaCha with 8 rounds, identified as [`PRNG_ID`] in run
//! reports). Independent streams for outer iterations, evaluation sets and
//! initialization are obtained with [`derive_seed`].

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problems::Domain;
use crate::{Error, Result};

/// Identifier of the pseudo-random generator recorded in reports.
pub const PRNG_ID: &str = "chacha8 (rand_chacha 0.9, seed_from_u64)";

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 mix of a seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Points (one per row) with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoints {
    pub points: Array2<f64>,
    pub weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Keeps the points for which `keep` holds.
    pub fn filter(&self, keep: impl Fn(&[f64]) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep(self.points.row(i).as_slice().expect("standard layout")))
            .collect();
        let d = self.points.ncols();
        let mut points = Array2::zeros((idx.len(), d));
        for (r, &i) in idx.iter().enumerate() {
            points.row_mut(r).assign(&self.points.row(i));
        }
        Self {
            points,
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
        }
    }
}

/// How the auxiliary variable `t ∈ (0, 1)` of the surrogate loss is
/// integrated.
#[derive(Debug, Clone, PartialEq)]
pub enum TRule {
    /// One uniform `t` per interior point.
    PerPoint(Vec<f64>),
    /// A fixed rule `Σ_q ω_q g(t_q)` applied at every point.
    Shared { nodes: Vec<f64>, weights: Vec<f64> },
}

/// Interior and boundary quadrature for one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub interior: WeightedPoints,
    pub t_rule: TRule,
    pub boundary: WeightedPoints,
    pub volume: f64,
    pub surface: f64,
    pub seed: u64,
}

impl SampleBatch {
    /// Replaces the auxiliary `t` rule, e.g. by an exact Gauss rule.
    pub fn with_t_rule(mut self, t_rule: TRule) -> Self {
        self.t_rule = t_rule;
        self
    }

    /// Drops interior and boundary nodes for which `singular` holds.
    pub fn exclude(mut self, singular: impl Fn(&[f64]) -> bool) -> Self {
        let keep: Vec<bool> = self
            .interior
            .points
            .outer_iter()
            .map(|r| !singular(r.as_slice().expect("standard layout")))
            .collect();
        if let TRule::PerPoint(ts) = &mut self.t_rule {
            *ts = ts.iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| *t).collect();
        }
        self.interior = self.interior.filter(|x| !singular(x));
        self.boundary = self.boundary.filter(|x| !singular(x));
        self
    }
}

fn open_uniform<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Integer allocation of `n` proportional to `shares` (largest remainder,
/// ties to the lower index).
fn allocate(n: usize, shares: &[f64]) -> Vec<usize> {
    let total: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

/// Uniform interior points, each with its own uniform `t`, plus boundary
/// points stratified by face in proportion to face area.
pub fn sample_batch(domain: &Domain, n_interior: usize, n_boundary: usize, seed: u64) -> Result<SampleBatch> {
    if n_interior == 0 || n_boundary == 0 {
        return Err(Error::Config(vec![format!(
            "sample counts must be >= 1, got {n_interior} interior and {n_boundary} boundary"
        )]));
    }
    let d = domain.dim();
    let mut rng = rng_from_seed(seed);
    let mut interior = Array2::zeros((n_interior, d));
    let mut ts = Vec::with_capacity(n_interior);
    for mut row in interior.outer_iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = domain.lower()[j] + domain.edge(j) * open_uniform(&mut rng);
        }
        ts.push(open_uniform(&mut rng));
    }
    let volume = domain.volume();
    let surface = domain.surface();

    // Faces are ordered (axis 0 low, axis 0 high, axis 1 low, ...).
    let areas: Vec<f64> = (0..2 * d).map(|f| domain.face_area(f / 2)).collect();
    let counts = allocate(n_boundary, &areas);
    let mut boundary = Array2::zeros((n_boundary, d));
    let mut bweights = Vec::with_capacity(n_boundary);
    let mut r = 0;
    for (f, &count) in counts.iter().enumerate() {
        let axis = f / 2;
        let fixed = if f % 2 == 0 { domain.lower()[axis] } else { domain.upper()[axis] };
        for _ in 0..count {
            let mut row = boundary.row_mut(r);
            for j in 0..d {
                row[j] = if j == axis {
                    fixed
                } else {
                    domain.lower()[j] + domain.edge(j) * open_uniform(&mut rng)
                };
            }
            bweights.push(areas[f] / count as f64);
            r += 1;
        }
    }
    Ok(SampleBatch {
        interior: WeightedPoints {
            points: interior,
            weights: vec![volume / n_interior as f64; n_interior],
        },
        t_rule: TRule::PerPoint(ts),
        boundary: WeightedPoints {
            points: boundary,
            weights: bweights,
        },
        volume,
        surface,
        seed,
    })
}

/// Uniform points in the open box, without weights bookkeeping.
pub fn uniform_points(domain: &Domain, n: usize, seed: u64) -> Array2<f64> {
    let d = domain.dim();
    let mut rng = rng_from_seed(seed);
    Array2::from_shape_fn((n, d), |(_, j)| domain.lower()[j] + domain.edge(j) * open_uniform(&mut rng))
}

/// Gauss-Legendre rule with `n` nodes on `(0, 1)`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Newton iteration on P_n from the Chebyshev guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Tensor-product composite trapezoidal rule of step `h` on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridQuad {
    domain: Domain,
    h: f64,
    nodes: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
}

fn trapezoid_axis(lo: f64, n: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let nodes = (0..=n).map(|k| lo + k as f64 * h).collect();
    let weights = (0..=n).map(|k| if k == 0 || k == n { h / 2.0 } else { h }).collect();
    (nodes, weights)
}

/// Trapezoidal grid of step `h`; `h` must divide every edge.
pub fn grid_quad(domain: &Domain, h: f64) -> Result<GridQuad> {
    if !(h > 0.0) {
        return Err(Error::Config(vec![format!("grid step must be positive, got {h}")]));
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for j in 0..domain.dim() {
        let edge = domain.edge(j);
        let n = (edge / h).round();
        if n < 1.0 || (n * h - edge).abs() > 1e-12 * edge.max(1.0) {
            let suggested = edge / n.max(1.0);
            return Err(Error::GridStep { h, edge, suggested });
        }
        let (x, w) = trapezoid_axis(domain.lower()[j], n as usize, edge / n);
        nodes.push(x);
        weights.push(w);
    }
    Ok(GridQuad {
        domain: domain.clone(),
        h,
        nodes,
        weights,
    })
}

fn tensor(nodes: &[&[f64]], weights: &[&[f64]]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut pts = vec![Vec::new()];
    let mut ws = vec![1.0];
    for (xs, wts) in nodes.iter().zip(weights) {
        let mut next_p = Vec::with_capacity(pts.len() * xs.len());
        let mut next_w = Vec::with_capacity(pts.len() * xs.len());
        for (p, w) in pts.iter().zip(&ws) {
            for (x, wx) in xs.iter().zip(wts.iter()) {
                let mut q = p.clone();
                q.push(*x);
                next_p.push(q);
                next_w.push(w * wx);
            }
        }
        pts = next_p;
        ws = next_w;
    }
    (pts, ws)
}

fn to_weighted(pts: Vec<Vec<f64>>, weights: Vec<f64>, d: usize) -> WeightedPoints {
    let n = pts.len();
    let flat: Vec<f64> = pts.into_iter().flatten().collect();
    WeightedPoints {
        points: Array2::from_shape_vec((n, d), flat).expect("consistent sizes"),
        weights,
    }
}

impl GridQuad {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn axis_nodes(&self, j: usize) -> &[f64] {
        &self.nodes[j]
    }

    pub fn axis_weights(&self, j: usize) -> &[f64] {
        &self.weights[j]
    }

    /// All tensor nodes with product trapezoid weights (volume integral).
    pub fn volume_points(&self) -> WeightedPoints {
        let n: Vec<&[f64]> = self.nodes.iter().map(|v| v.as_slice()).collect();
        let w: Vec<&[f64]> = self.weights.iter().map(|v| v.as_slice()).collect();
        let (p, w) = tensor(&n, &w);
        to_weighted(p, w, self.domain.dim())
    }

    /// Nodes on every face with the face's own trapezoid weights (surface
    /// integral). Nodes on edges appear once per adjacent face.
    pub fn surface_points(&self) -> WeightedPoints {
        let d = self.domain.dim();
        let mut all_p = Vec::new();
        let mut all_w = Vec::new();
        for f in 0..2 * d {
            let axis = f / 2;
            let fixed = if f % 2 == 0 { self.domain.lower()[axis] } else { self.domain.upper()[axis] };
            let fixed_node = [fixed];
            let one = [1.0];
            let n: Vec<&[f64]> = (0..d)
                .map(|j| if j == axis { &fixed_node[..] } else { self.nodes[j].as_slice() })
                .collect();
            let w: Vec<&[f64]> = (0..d)
                .map(|j| if j == axis { &one[..] } else { self.weights[j].as_slice() })
                .collect();
            let (p, w) = tensor(&n, &w);
            all_p.extend(p);
            all_w.extend(w);
        }
        to_weighted(all_p, all_w, d)
    }

    /// A deterministic batch: grid nodes inside and on the boundary, and a
    /// Gauss-Legendre rule with `t_nodes` nodes for the auxiliary variable.
    pub fn batch(&self, t_nodes: usize) -> SampleBatch {
        let (nodes, weights) = gauss_legendre(t_nodes);
        SampleBatch {
            interior: self.volume_points(),
            t_rule: TRule::Shared { nodes, weights },
            boundary: self.surface_points(),
            volume: self.domain.volume(),
            surface: self.domain.surface(),
            seed: 0,
        }
    }
}

/// Estimate of an integral and its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// `Σ w_i f(x_i)` over weighted points with the sample standard error of the
/// sum.
pub fn integrate_weighted(pts: &WeightedPoints, values: &[f64]) -> Result<McEstimate> {
    let n = pts.len();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::non_finite("density", i));
    }
    let terms: Vec<f64> = values.iter().zip(&pts.weights).map(|(f, w)| f * w).collect();
    let estimate: f64 = terms.iter().sum();
    let std_error = if n > 1 {
        let m = estimate / n as f64;
        let ss: f64 = terms.iter().map(|t| (t - m) * (t - m)).sum();
        (n as f64 * ss / (n as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate { estimate, std_error })
}

/// Monte Carlo integral of `density` over the interior samples.
pub fn mc_integrate(batch: &SampleBatch, density: impl Fn(&[f64]) -> f64) -> Result<McEstimate> {
    let values: Vec<f64> = batch
        .interior
        .points
        .outer_iter()
        .map(|x| density(x.as_slice().expect("standard layout")))
        .collect();
    integrate_weighted(&batch.interior, &values)
}
