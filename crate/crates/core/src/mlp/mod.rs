//! Tanh multilayer perceptrons with exact derivatives.
//!
//! A network with hidden widths `N_1..N_{L-1}` computes
//!
//! ```text
//! y_0 = x
//! y_l = tanh(A_l y_{l-1} + b_l)    l = 1..L-1
//! u   = A_L y_{L-1} + b_L
//! ```
//!
//! Parameters live in one flat vector in the canonical order used by
//! gradients, Adam moments and serialization: layer by layer, the weight
//! matrix `A_l` in row-major order (shape `N_l x N_{l-1}`) followed by the
//! bias `b_l`.
//!
//! Spatial derivatives are propagated in forward mode as extra channels of
//! the same batched matrix products (see [`JetSpec`]); parameter gradients
//! of pointwise functionals run reverse mode through those channels, so mixed
//! `d²u/dθdx` terms are exact.

mod curl;
mod engine;

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use curl::{curl_field, curl_from_jet, CurlEval};
pub use engine::{
    evaluate_objective, evaluate_points, param_grad_of_functional, BatchJets, ObjectiveValue,
    PointFunctional, PointGroup, PointJet, PointObjective,
};

/// Layer sizes of a network, plus the optional parameter bound `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub input_dim: usize,
    pub layer_widths: Vec<usize>,
    pub output_dim: usize,
    #[serde(default)]
    pub param_bound: Option<f64>,
}

impl NetArch {
    pub fn new(input_dim: usize, layer_widths: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            layer_widths,
            output_dim,
            param_bound: None,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_param_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound >= 0.0) {
            return Err(Error::InvalidArch(format!(
                "parameter bound must be nonnegative, got {bound}"
            )));
        }
        self.param_bound = Some(bound);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArch("input and output dims must be >= 1".into()));
        }
        if self.layer_widths.is_empty() {
            return Err(Error::InvalidArch("at least one hidden layer is required".into()));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::InvalidArch(format!(
                "hidden widths must be >= 1, got {:?}",
                self.layer_widths
            )));
        }
        Ok(())
    }

    /// `(rows, cols)` of every weight matrix, input layer first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.layer_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.layer_widths);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }

    /// Compact `10-20-20-1` style label.
    pub fn label(&self) -> String {
        let mut parts = vec![self.input_dim.to_string()];
        parts.extend(self.layer_widths.iter().map(|w| w.to_string()));
        parts.push(self.output_dim.to_string());
        parts.join("-")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LayerSlot {
    pub rows: usize,
    pub cols: usize,
    pub w_off: usize,
    pub b_off: usize,
}

fn layout(arch: &NetArch) -> Vec<LayerSlot> {
    let mut off = 0;
    arch.layer_shapes()
        .into_iter()
        .map(|(rows, cols)| {
            let slot = LayerSlot {
                rows,
                cols,
                w_off: off,
                b_off: off + rows * cols,
            };
            off += rows * cols + rows;
            slot
        })
        .collect()
}

/// Value and spatial Jacobian of a network at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub value: Vec<f64>,
    /// `spatial_grad[[i, j]] = d u_i / d x_j`, shape `output_dim x input_dim`.
    pub spatial_grad: Array2<f64>,
}

/// Gradient of a scalar functional with respect to the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient(pub Vec<f64>);

impl ParamGradient {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// A tanh feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    arch: NetArch,
    params: Vec<f64>,
    slots: Vec<LayerSlot>,
}

impl MlpNet {
    pub fn zeros(arch: NetArch) -> Result<Self> {
        arch.validate()?;
        let params = vec![0.0; arch.n_params()];
        let slots = layout(&arch);
        Ok(Self {
            arch,
            params,
            slots,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(arch: NetArch, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        for slot in net.slots.clone() {
            let limit = (6.0 / (slot.rows + slot.cols) as f64).sqrt();
            for w in &mut net.params[slot.w_off..slot.b_off] {
                *w = rng.random_range(-limit..limit);
            }
        }
        net.clamp_to_bound();
        Ok(net)
    }

    pub fn from_params(arch: NetArch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.n_params() {
            return Err(Error::DimensionMismatch {
                expected: arch.n_params(),
                given: params.len(),
            });
        }
        let slots = layout(&arch);
        Ok(Self {
            arch,
            params,
            slots,
        })
    }

    pub fn arch(&self) -> &NetArch {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.arch.output_dim
    }

    pub fn n_layers(&self) -> usize {
        self.slots.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Flat parameters in canonical order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let s = self.slots[layer];
        ArrayView2::from_shape((s.rows, s.cols), &self.params[s.w_off..s.b_off])
            .expect("layout matches arch")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let s = self.slots[layer];
        ArrayView1::from(&self.params[s.b_off..s.b_off + s.rows])
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let s = self.slots[layer];
        ArrayViewMut2::from_shape((s.rows, s.cols), &mut self.params[s.w_off..s.b_off])
            .expect("layout matches arch")
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
        let s = self.slots[layer];
        ArrayViewMut1::from(&mut self.params[s.b_off..s.b_off + s.rows])
    }

    /// Projects every parameter onto `[-B, B]` when a bound is set.
    pub fn clamp_to_bound(&mut self) {
        if let Some(b) = self.arch.param_bound {
            for p in &mut self.params {
                *p = p.clamp(-b, b);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                given: x.len(),
            });
        }
        Ok(())
    }

    /// Network value at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut y = x.to_vec();
        let last = self.slots.len() - 1;
        for (l, s) in self.slots.iter().enumerate() {
            let w = &self.params[s.w_off..s.b_off];
            let b = &self.params[s.b_off..s.b_off + s.rows];
            let mut z: Vec<f64> = (0..s.rows)
                .map(|r| {
                    let row = &w[r * s.cols..(r + 1) * s.cols];
                    row.iter().zip(&y).map(|(a, v)| a * v).sum::<f64>() + b[r]
                })
                .collect();
            if l < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            y = z;
        }
        Ok(y)
    }

    /// Value and exact spatial Jacobian at `x`, by forward propagation of
    /// `d` tangent directions.
    pub fn eval_with_grad(&self, x: &[f64]) -> Result<EvalResult> {
        self.check_input(x)?;
        let d = self.arch.input_dim;
        let mut y = x.to_vec();
        // tangents[j][r] = d y_r / d x_j
        let mut tangents: Vec<Vec<f64>> = (0..d)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 1.0;
                e
            })
            .collect();
        let last = self.slots.len() - 1;
        for (l, s) in self.slots.iter().enumerate() {
            let w = &self.params[s.w_off..s.b_off];
            let b = &self.params[s.b_off..s.b_off + s.rows];
            let matvec = |v: &[f64]| -> Vec<f64> {
                (0..s.rows)
                    .map(|r| {
                        let row = &w[r * s.cols..(r + 1) * s.cols];
                        row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>()
                    })
                    .collect()
            };
            let mut z = matvec(&y);
            z.iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
            let mut tz: Vec<Vec<f64>> = tangents.iter().map(|t| matvec(t)).collect();
            if l < last {
                for r in 0..s.rows {
                    let a = z[r].tanh();
                    let slope = 1.0 - a * a;
                    z[r] = a;
                    for t in tz.iter_mut() {
                        t[r] *= slope;
                    }
                }
            }
            y = z;
            tangents = tz;
        }
        let out = self.arch.output_dim;
        let mut spatial_grad = Array2::zeros((out, d));
        for (j, t) in tangents.iter().enumerate() {
            for i in 0..out {
                spatial_grad[[i, j]] = t[i];
            }
        }
        Ok(EvalResult {
            value: y,
            spatial_grad,
        })
    }

    const MAGIC: &'static [u8; 8] = b"IDRMNET1";

    /// Binary record: magic, architecture, then parameters as little-endian
    /// `f64` in canonical order. Round trips are bit-exact.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.params.len());
        out.extend_from_slice(Self::MAGIC);
        let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        put_u32(&mut out, self.arch.input_dim);
        put_u32(&mut out, self.arch.output_dim);
        put_u32(&mut out, self.arch.layer_widths.len());
        for &w in &self.arch.layer_widths {
            put_u32(&mut out, w);
        }
        match self.arch.param_bound {
            Some(b) => {
                out.push(1);
                out.extend_from_slice(&b.to_le_bytes());
            }
            None => {
                out.push(0);
                out.extend_from_slice(&0f64.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Format("truncated network record".into()));
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(8)? != Self::MAGIC {
            return Err(Error::Format("not a network record (bad magic)".into()));
        }
        let mut u32_at = || -> Result<usize> {
            let b = take(4)?;
            Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
        };
        let input_dim = u32_at()?;
        let output_dim = u32_at()?;
        let n_hidden = u32_at()?;
        let layer_widths = (0..n_hidden).map(|_| u32_at()).collect::<Result<Vec<_>>>()?;
        let has_bound = take(1)?[0];
        let bound = f64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let n = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let mut arch = NetArch::new(input_dim, layer_widths, output_dim)?;
        if has_bound == 1 {
            arch.param_bound = Some(bound);
        }
        let raw = take(8 * n)?;
        let params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::from_params(arch, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

/// Which derivative channels a batched evaluation propagates.
///
/// Channel 0 is the value; channels `1..=d` the first derivatives (when
/// enabled); then one channel per requested second-derivative pair `(j, k)`
/// with `j <= k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JetSpec {
    input_dim: usize,
    first: bool,
    pairs: Vec<(usize, usize)>,
}

impl JetSpec {
    pub fn value_only(input_dim: usize) -> Self {
        Self {
            input_dim,
            first: false,
            pairs: Vec::new(),
        }
    }

    pub fn first_order(input_dim: usize) -> Self {
        Self {
            input_dim,
            first: true,
            pairs: Vec::new(),
        }
    }

    /// First derivatives plus the listed second-derivative pairs.
    pub fn with_pairs(input_dim: usize, pairs: Vec<(usize, usize)>) -> Self {
        let pairs = pairs
            .into_iter()
            .map(|(j, k)| if j <= k { (j, k) } else { (k, j) })
            .collect();
        Self {
            input_dim,
            first: true,
            pairs,
        }
    }

    /// Diagonal second derivatives, enough for a Laplacian.
    pub fn laplacian(input_dim: usize) -> Self {
        Self::with_pairs(input_dim, (0..input_dim).map(|j| (j, j)).collect())
    }

    /// Every `(j, k)` with `j <= k`.
    pub fn full_hessian(input_dim: usize) -> Self {
        let mut pairs = Vec::new();
        for j in 0..input_dim {
            for k in j..input_dim {
                pairs.push((j, k));
            }
        }
        Self::with_pairs(input_dim, pairs)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn has_first(&self) -> bool {
        self.first
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_first(&self) -> usize {
        if self.first {
            self.input_dim
        } else {
            0
        }
    }

    pub fn channels(&self) -> usize {
        1 + self.n_first() + self.pairs.len()
    }

    pub fn pair_index(&self, j: usize, k: usize) -> Option<usize> {
        let key = if j <= k { (j, k) } else { (k, j) };
        self.pairs.iter().position(|&p| p == key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_network_has_zero_gradient() {
        let arch = NetArch::new(3, vec![4], 1).unwrap();
        let mut net = MlpNet::zeros(arch).unwrap();
        net.bias_mut(1)[0] = 0.7;
        let r = net.eval_with_grad(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(r.value, vec![0.7]);
        assert!(r.spatial_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_neuron_closed_form() {
        let arch = NetArch::new(1, vec![1], 1).unwrap();
        let net = MlpNet::from_params(arch, vec![2.0, 0.0, 3.0, 0.0]).unwrap();
        let r = net.eval_with_grad(&[0.5]).unwrap();
        let t = 1f64.tanh();
        assert!((r.value[0] - 3.0 * t).abs() < 1e-15);
        assert!((r.spatial_grad[[0, 0]] - 6.0 * (1.0 - t * t)).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_names_both_sizes() {
        let arch = NetArch::new(2, vec![3], 1).unwrap();
        let net = MlpNet::zeros(arch).unwrap();
        let err = net.eval_with_grad(&[1.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                given: 1
            }
        ));
    }

    #[test]
    fn canonical_layout_is_row_major_weights_then_bias() {
        let arch = NetArch::new(2, vec![3], 1).unwrap();
        let params: Vec<f64> = (0..arch.n_params()).map(|i| i as f64).collect();
        let net = MlpNet::from_params(arch, params).unwrap();
        assert_eq!(net.weight(0)[[1, 0]], 2.0);
        assert_eq!(net.bias(0)[2], 8.0);
        assert_eq!(net.weight(1)[[0, 2]], 11.0);
        assert_eq!(net.bias(1)[0], 12.0);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let arch = NetArch::new(4, vec![7, 3], 2)
            .unwrap()
            .with_param_bound(2.5)
            .unwrap();
        let net = MlpNet::glorot(arch, &mut rng).unwrap();
        let back = MlpNet::from_bytes(&net.to_bytes()).unwrap();
        assert_eq!(net, back);
        assert!(MlpNet::from_bytes(&net.to_bytes()[..20]).is_err());
    }

    #[test]
    fn clamp_enforces_bound() {
        let arch = NetArch::new(1, vec![2], 1)
            .unwrap()
            .with_param_bound(0.5)
            .unwrap();
        let mut net = MlpNet::from_params(arch, vec![3.0, -4.0, 0.1, 0.2, 9.0, -9.0, 0.3]).unwrap();
        net.clamp_to_bound();
        assert!(net.params().iter().all(|p| p.abs() <= 0.5));
    }

    #[test]
    fn empty_hidden_layers_rejected() {
        assert!(NetArch::new(2, vec![], 1).is_err());
        assert!(NetArch::new(2, vec![3, 0], 1).is_err());
    }
}
