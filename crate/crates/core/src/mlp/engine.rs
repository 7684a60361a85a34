//! Batched forward propagation of derivative channels and the matching
//! reverse sweep for parameter gradients.
//!
//! Points are processed in fixed chunks. For a chunk of `n` points and a
//! [`JetSpec`] with `C` channels, every layer works on a stack matrix of shape
//! `width x (C n)` whose column block `c` holds channel `c` of all points, so a
//! linear layer is one matrix product. The tanh layer maps channels with
//!
//! ```text
//! y   = tanh z            s = 1 - y²          q = -2 y s
//! y_j = s z_j             y_jk = s z_jk + q z_j z_k
//! ```
//!
//! Per-point loss densities are differentiated with respect to the output
//! channels by dual numbers; the resulting output adjoints are pulled back
//! through the stack by hand-written transposes of the kernels above.

use std::cell::RefCell;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis, Ix2};

use super::{JetSpec, MlpNet, ParamGradient};
use crate::dual::{Dual, Real, LANES};
use crate::{Error, Result};

const CHUNK: usize = 256;
const POOL_LIMIT: usize = 64;

thread_local! {
    /// Stack buffers reused across chunks and calls; second-order stacks run
    /// to megabytes and reallocating them dominated training time.
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

/// A zeroed `rows x cols` matrix backed by a pooled buffer.
fn take(rows: usize, cols: usize) -> Array2<f64> {
    let len = rows * cols;
    let mut buf = POOL.with(|p| {
        let mut p = p.borrow_mut();
        match p.iter().position(|b| b.capacity() >= len) {
            Some(i) => p.swap_remove(i),
            None => p.pop().unwrap_or_default(),
        }
    });
    buf.clear();
    buf.resize(len, 0.0);
    Array2::from_shape_vec((rows, cols), buf).expect("buffer length matches shape")
}

fn give(a: Array2<f64>) {
    let (buf, _) = a.into_raw_vec_and_offset();
    POOL.with(|p| {
        let mut p = p.borrow_mut();
        if p.len() < POOL_LIMIT {
            p.push(buf);
        }
    });
}

fn take_like(a: &Array2<f64>) -> Array2<f64> {
    let d: Ix2 = a.raw_dim();
    take(d[0], d[1])
}

/// Output channels of a network at one point, laid out `[output][channel]`.
#[derive(Debug, Clone, Copy)]
pub struct PointJet<'a, S> {
    spec: &'a JetSpec,
    outputs: usize,
    data: &'a [S],
}

impl<'a, S: Real> PointJet<'a, S> {
    pub fn new(spec: &'a JetSpec, outputs: usize, data: &'a [S]) -> Self {
        debug_assert_eq!(data.len(), outputs * spec.channels());
        Self {
            spec,
            outputs,
            data,
        }
    }

    pub fn spec(&self) -> &'a JetSpec {
        self.spec
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn value(&self, o: usize) -> S {
        self.data[o * self.spec.channels()]
    }

    /// `d u_o / d x_j` for all `j`.
    pub fn grad(&self, o: usize) -> &'a [S] {
        assert!(self.spec.has_first(), "jet carries no first derivatives");
        let base = o * self.spec.channels() + 1;
        &self.data[base..base + self.spec.input_dim()]
    }

    /// `d² u_o / d x_j d x_k`; the pair must be part of the jet spec.
    pub fn second(&self, o: usize, j: usize, k: usize) -> S {
        let p = self
            .spec
            .pair_index(j, k)
            .unwrap_or_else(|| panic!("second derivative ({j}, {k}) not propagated"));
        self.data[o * self.spec.channels() + 1 + self.spec.n_first() + p]
    }

    pub fn raw(&self) -> &'a [S] {
        self.data
    }
}

/// Jets of one network at many points.
#[derive(Debug, Clone)]
pub struct BatchJets {
    spec: JetSpec,
    outputs: usize,
    data: Vec<f64>,
}

impl BatchJets {
    pub fn len(&self) -> usize {
        self.data.len() / (self.outputs * self.spec.channels())
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn spec(&self) -> &JetSpec {
        &self.spec
    }

    pub fn jet(&self, i: usize) -> PointJet<'_, f64> {
        let m = self.outputs * self.spec.channels();
        PointJet::new(&self.spec, self.outputs, &self.data[i * m..(i + 1) * m])
    }
}

/// A set of points sharing one jet spec, e.g. interior or boundary samples.
#[derive(Debug, Clone)]
pub struct PointGroup {
    pub name: &'static str,
    /// One point per row.
    pub points: Array2<f64>,
    pub spec: JetSpec,
}

/// A loss of the form `combine(Σ_points terms(point))`.
///
/// `terms` writes a fixed number of per-point contributions (quadrature
/// weights already applied); `combine` maps their sums to the total and
/// returns `d total / d sums`.
pub trait PointObjective {
    fn groups(&self) -> &[PointGroup];

    fn term_names(&self) -> &[&'static str];

    fn terms<S: Real>(&self, group: usize, index: usize, jet: &PointJet<'_, S>, out: &mut [S]);

    fn combine(&self, sums: &[f64]) -> (f64, Vec<f64>);

    /// True when `combine` is affine, so its weights are known before the
    /// sums and one pass suffices.
    fn is_affine(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveValue {
    pub total: f64,
    pub sums: Vec<f64>,
    pub grad: Option<ParamGradient>,
}

/// A sum of pointwise densities of `(u(x_i), ∇u(x_i))`.
pub trait PointFunctional {
    /// `value` has one entry per output; `grad` is `outputs x d` row-major.
    fn density<S: Real>(&self, index: usize, value: &[S], grad: &[S]) -> S;
}

struct ChunkCache {
    n: usize,
    /// `ys[0]` is the input stack, `ys[l]` the input of layer `l`.
    ys: Vec<Array2<f64>>,
    /// Pre-activations of every layer; the last one is the network output.
    zs: Vec<Array2<f64>>,
}

impl Drop for ChunkCache {
    fn drop(&mut self) {
        for a in self.ys.drain(..).chain(self.zs.drain(..)) {
            give(a);
        }
    }
}

impl ChunkCache {
    fn output(&self) -> &Array2<f64> {
        self.zs.last().expect("at least one layer")
    }
}

fn input_stack(spec: &JetSpec, pts: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = pts.nrows();
    let d = spec.input_dim();
    let mut y = take(d, spec.channels() * n);
    y.slice_mut(s![.., 0..n]).assign(&pts.t());
    for j in 0..spec.n_first() {
        y.slice_mut(s![j, (1 + j) * n..(2 + j) * n]).fill(1.0);
    }
    y
}

fn tanh_forward(z: &Array2<f64>, spec: &JetSpec, n: usize) -> Array2<f64> {
    let nf = spec.n_first();
    let mut y = take_like(z);
    let mut sv = vec![0.0; n];
    let mut qv = vec![0.0; n];
    for (zr, mut yr) in z.outer_iter().zip(y.outer_iter_mut()) {
        let zr = zr.as_slice().expect("standard layout");
        let yr = yr.as_slice_mut().expect("standard layout");
        for i in 0..n {
            let t = zr[i].tanh();
            let s = 1.0 - t * t;
            yr[i] = t;
            sv[i] = s;
            qv[i] = -2.0 * t * s;
        }
        for c in 1..=nf {
            let (zc, yc) = (&zr[c * n..(c + 1) * n], &mut yr[c * n..(c + 1) * n]);
            for i in 0..n {
                yc[i] = sv[i] * zc[i];
            }
        }
        for (p, &(j, k)) in spec.pairs().iter().enumerate() {
            let c = 1 + nf + p;
            let zj = &zr[(1 + j) * n..(2 + j) * n];
            let zk = &zr[(1 + k) * n..(2 + k) * n];
            let zc = &zr[c * n..(c + 1) * n];
            let yc = &mut yr[c * n..(c + 1) * n];
            for i in 0..n {
                yc[i] = sv[i] * zc[i] + qv[i] * zj[i] * zk[i];
            }
        }
    }
    y
}

/// Transpose of [`tanh_forward`]: maps the adjoint of `y` to that of `z`.
fn tanh_backward(ybar: &Array2<f64>, z: &Array2<f64>, y: &Array2<f64>, spec: &JetSpec, n: usize) -> Array2<f64> {
    let nf = spec.n_first();
    let mut zbar = take_like(z);
    let mut sv = vec![0.0; n];
    let mut qv = vec![0.0; n];
    let mut sbar = vec![0.0; n];
    let mut qbar = vec![0.0; n];
    for ((yb, zr), (yr, mut zb)) in ybar
        .outer_iter()
        .zip(z.outer_iter())
        .zip(y.outer_iter().zip(zbar.outer_iter_mut()))
    {
        let yb = yb.as_slice().expect("standard layout");
        let zr = zr.as_slice().expect("standard layout");
        let yr = yr.as_slice().expect("standard layout");
        let zb = zb.as_slice_mut().expect("standard layout");
        for i in 0..n {
            let t = yr[i];
            let s = 1.0 - t * t;
            sv[i] = s;
            qv[i] = -2.0 * t * s;
            sbar[i] = 0.0;
            qbar[i] = 0.0;
        }
        for c in 1..=nf {
            let r = c * n..(c + 1) * n;
            let (ybc, zc) = (&yb[r.clone()], &zr[r.clone()]);
            let zbc = &mut zb[r];
            for i in 0..n {
                sbar[i] += ybc[i] * zc[i];
                zbc[i] = sv[i] * ybc[i];
            }
        }
        for (p, &(j, k)) in spec.pairs().iter().enumerate() {
            let c = 1 + nf + p;
            let rj = (1 + j) * n;
            let rk = (1 + k) * n;
            for i in 0..n {
                let ybp = yb[c * n + i];
                let zj = zr[rj + i];
                let zk = zr[rk + i];
                sbar[i] += ybp * zr[c * n + i];
                qbar[i] += ybp * zj * zk;
                zb[c * n + i] = sv[i] * ybp;
                let qy = qv[i] * ybp;
                zb[rj + i] += qy * zk;
                zb[rk + i] += qy * zj;
            }
        }
        for i in 0..n {
            let t = yr[i];
            let s = sv[i];
            let t3 = -2.0 * s * s + 4.0 * t * t * s;
            zb[i] = s * yb[i] + qv[i] * sbar[i] + t3 * qbar[i];
        }
    }
    zbar
}

fn forward_chunk(net: &MlpNet, spec: &JetSpec, pts: ArrayView2<'_, f64>) -> ChunkCache {
    let n = pts.nrows();
    let n_layers = net.n_layers();
    let mut ys = Vec::with_capacity(n_layers);
    let mut zs = Vec::with_capacity(n_layers);
    ys.push(input_stack(spec, pts));
    for l in 0..n_layers {
        let w = net.weight(l);
        let b = net.bias(l);
        let mut z = take(w.nrows(), spec.channels() * n);
        general_mat_mul(1.0, &w, &ys[l], 0.0, &mut z);
        for (mut row, &bb) in z.outer_iter_mut().zip(b.iter()) {
            row.slice_mut(s![0..n]).mapv_inplace(|v| v + bb);
        }
        if l + 1 < n_layers {
            ys.push(tanh_forward(&z, spec, n));
        }
        zs.push(z);
    }
    ChunkCache { n, ys, zs }
}

fn backward_chunk(net: &MlpNet, spec: &JetSpec, cache: &ChunkCache, out_bar: Array2<f64>, grad: &mut [f64]) {
    let n = cache.n;
    let mut zbar = out_bar;
    for l in (0..net.n_layers()).rev() {
        let slot = net.slots()[l];
        {
            let mut gw = ArrayViewMut2::from_shape((slot.rows, slot.cols), &mut grad[slot.w_off..slot.b_off])
                .expect("layout matches arch");
            general_mat_mul(1.0, &zbar, &cache.ys[l].t(), 1.0, &mut gw);
        }
        let value_block = zbar.slice(s![.., 0..n]).sum_axis(Axis(1));
        for (g, v) in grad[slot.b_off..slot.b_off + slot.rows].iter_mut().zip(value_block.iter()) {
            *g += v;
        }
        if l > 0 {
            let w = net.weight(l);
            let mut ybar = take_like(&cache.ys[l]);
            general_mat_mul(1.0, &w.t(), &zbar, 0.0, &mut ybar);
            let next = tanh_backward(&ybar, &cache.zs[l - 1], &cache.ys[l], spec, n);
            give(ybar);
            give(std::mem::replace(&mut zbar, next));
        }
    }
    give(zbar);
}

/// Per-point output jets, `[point][output][channel]`.
fn gather_jets(cache: &ChunkCache, spec: &JetSpec) -> Vec<f64> {
    let n = cache.n;
    let ch = spec.channels();
    let out = cache.output();
    let outputs = out.nrows();
    let mut data = vec![0.0; n * outputs * ch];
    for o in 0..outputs {
        let row = out.row(o);
        let row = row.as_slice().expect("standard layout");
        for c in 0..ch {
            for i in 0..n {
                data[(i * outputs + o) * ch + c] = row[c * n + i];
            }
        }
    }
    data
}

fn check_dim(net: &MlpNet, points: &ArrayView2<'_, f64>, spec: &JetSpec) -> Result<()> {
    for given in [points.ncols(), spec.input_dim()] {
        if given != net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim(),
                given,
            });
        }
    }
    Ok(())
}

fn check_finite(data: &[f64], m: usize, offset: usize) -> Result<()> {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::non_finite("network output", offset + pos / m));
    }
    Ok(())
}

/// Evaluates the network jets at every row of `points`.
pub fn evaluate_points(net: &MlpNet, points: ArrayView2<'_, f64>, spec: &JetSpec) -> Result<BatchJets> {
    check_dim(net, &points, spec)?;
    let m = net.output_dim() * spec.channels();
    let mut data = Vec::with_capacity(points.nrows() * m);
    for start in (0..points.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(points.nrows());
        let cache = forward_chunk(net, spec, points.slice(s![start..end, ..]));
        let jets = gather_jets(&cache, spec);
        check_finite(&jets, m, start)?;
        data.extend_from_slice(&jets);
    }
    Ok(BatchJets {
        spec: spec.clone(),
        outputs: net.output_dim(),
        data,
    })
}

fn check_terms<S: Real>(out: &[S], names: &[&'static str], group: &PointGroup, index: usize) -> Result<()> {
    for (t, v) in out.iter().enumerate() {
        if !v.is_finite() {
            let name = names.get(t).copied().unwrap_or("term");
            return Err(Error::non_finite(format!("{name} ({} group)", group.name), index));
        }
    }
    Ok(())
}

fn sums_only<O: PointObjective>(net: &MlpNet, obj: &O) -> Result<Vec<f64>> {
    let nt = obj.term_names().len();
    let mut sums = vec![0.0; nt];
    let mut out = vec![0.0; nt];
    for (g, group) in obj.groups().iter().enumerate() {
        let jets = evaluate_points(net, group.points.view(), &group.spec)?;
        for i in 0..jets.len() {
            obj.terms(g, i, &jets.jet(i), &mut out);
            check_terms(&out, obj.term_names(), group, i)?;
            for (s, v) in sums.iter_mut().zip(&out) {
                *s += v;
            }
        }
    }
    Ok(sums)
}

/// One gradient pass with fixed term weights `coef`; returns the term sums.
fn gradient_pass<O: PointObjective>(net: &MlpNet, obj: &O, coef: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
    let nt = obj.term_names().len();
    let outputs = net.output_dim();
    let mut sums = vec![0.0; nt];
    let mut out = vec![Dual::constant(0.0); nt];
    for (g, group) in obj.groups().iter().enumerate() {
        let spec = &group.spec;
        check_dim(net, &group.points.view(), spec)?;
        let ch = spec.channels();
        let m = outputs * ch;
        let mut seeded = vec![Dual::constant(0.0); m];
        let mut adj = vec![0.0; m];
        for start in (0..group.points.nrows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(group.points.nrows());
            let n = end - start;
            let cache = forward_chunk(net, spec, group.points.slice(s![start..end, ..]));
            let jets = gather_jets(&cache, spec);
            check_finite(&jets, m, start)?;
            let mut out_bar = take(outputs, ch * n);
            for i in 0..n {
                let jet = &jets[i * m..(i + 1) * m];
                for lane0 in (0..m).step_by(LANES) {
                    for (e, sd) in seeded.iter_mut().enumerate() {
                        *sd = if e >= lane0 && e < lane0 + LANES {
                            Dual::variable(jet[e], e - lane0)
                        } else {
                            Dual::constant(jet[e])
                        };
                    }
                    obj.terms(g, start + i, &PointJet::new(spec, outputs, &seeded), &mut out);
                    if lane0 == 0 {
                        check_terms(&out, obj.term_names(), group, start + i)?;
                        for (s, v) in sums.iter_mut().zip(&out) {
                            *s += v.re;
                        }
                    }
                    for (l, a) in adj[lane0..(lane0 + LANES).min(m)].iter_mut().enumerate() {
                        *a = out.iter().zip(coef).map(|(v, c)| if *c == 0.0 { 0.0 } else { c * v.eps[l] }).sum();
                    }
                }
                for o in 0..outputs {
                    for c in 0..ch {
                        out_bar[[o, c * n + i]] = adj[o * ch + c];
                    }
                }
            }
            if let Some(pos) = out_bar.iter().position(|v| !v.is_finite()) {
                return Err(Error::non_finite("loss derivative", start + (pos % (ch * n)) % n));
            }
            backward_chunk(net, spec, &cache, out_bar, grad);
        }
    }
    Ok(sums)
}

/// Evaluates an objective and, when asked, its exact parameter gradient.
///
/// Points are visited in a fixed order, so results are bit-reproducible.
pub fn evaluate_objective<O: PointObjective>(net: &MlpNet, obj: &O, with_grad: bool) -> Result<ObjectiveValue> {
    if !with_grad {
        let sums = sums_only(net, obj)?;
        let (total, _) = obj.combine(&sums);
        return Ok(ObjectiveValue { total, sums, grad: None });
    }
    let mut grad = vec![0.0; net.n_params()];
    let nt = obj.term_names().len();
    let (sums, total) = if obj.is_affine() {
        let (_, coef) = obj.combine(&vec![0.0; nt]);
        let sums = gradient_pass(net, obj, &coef, &mut grad)?;
        let (total, _) = obj.combine(&sums);
        (sums, total)
    } else {
        let sums = sums_only(net, obj)?;
        let (total, coef) = obj.combine(&sums);
        gradient_pass(net, obj, &coef, &mut grad)?;
        (sums, total)
    };
    if let Some(pos) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::non_finite("parameter gradient entry", pos));
    }
    Ok(ObjectiveValue {
        total,
        sums,
        grad: Some(ParamGradient(grad)),
    })
}

struct FunctionalObjective<'a, F> {
    groups: Vec<PointGroup>,
    functional: &'a F,
}

impl<F: PointFunctional> PointObjective for FunctionalObjective<'_, F> {
    fn groups(&self) -> &[PointGroup] {
        &self.groups
    }

    fn term_names(&self) -> &[&'static str] {
        &["functional"]
    }

    fn terms<S: Real>(&self, _group: usize, index: usize, jet: &PointJet<'_, S>, out: &mut [S]) {
        let outputs = jet.outputs();
        let d = jet.input_dim();
        let value: Vec<S> = (0..outputs).map(|o| jet.value(o)).collect();
        let mut grad = Vec::with_capacity(outputs * d);
        for o in 0..outputs {
            grad.extend_from_slice(jet.grad(o));
        }
        out[0] = self.functional.density(index, &value, &grad);
    }

    fn combine(&self, sums: &[f64]) -> (f64, Vec<f64>) {
        (sums[0], vec![1.0])
    }

    fn is_affine(&self) -> bool {
        true
    }
}

/// Value and parameter gradient of `Σ_i density(i, u(x_i), ∇u(x_i))` over the
/// rows of `points`, with exact mixed `d²u/dθdx` contributions.
pub fn param_grad_of_functional<F: PointFunctional>(
    net: &MlpNet,
    points: ArrayView2<'_, f64>,
    functional: &F,
) -> Result<(f64, ParamGradient)> {
    if points.nrows() == 0 {
        return Err(Error::Numerical("functional needs at least one point".into()));
    }
    let obj = FunctionalObjective {
        groups: vec![PointGroup {
            name: "points",
            points: points.to_owned(),
            spec: JetSpec::first_order(net.input_dim()),
        }],
        functional,
    };
    check_dim(net, &points, &obj.groups[0].spec)?;
    let v = evaluate_objective(net, &obj, true)?;
    Ok((v.total, v.grad.expect("gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NetArch;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(d: usize, widths: Vec<usize>, out: usize, seed: u64) -> MlpNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = MlpNet::glorot(NetArch::new(d, widths, out).unwrap(), &mut rng).unwrap();
        use rand::Rng;
        for p in net.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        net
    }

    #[test]
    fn batched_first_order_matches_pointwise() {
        let net = random_net(3, vec![5, 4], 2, 1);
        let pts = array![[0.1, 0.2, 0.3], [-0.5, 0.7, 0.2], [1.0, 0.0, -1.0]];
        let jets = evaluate_points(&net, pts.view(), &JetSpec::first_order(3)).unwrap();
        for i in 0..3 {
            let r = net.eval_with_grad(pts.row(i).as_slice().unwrap()).unwrap();
            let jet = jets.jet(i);
            for o in 0..2 {
                assert!((jet.value(o) - r.value[o]).abs() < 1e-14);
                for j in 0..3 {
                    assert!((jet.grad(o)[j] - r.spatial_grad[[o, j]]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn second_derivatives_match_finite_differences_of_gradient() {
        let net = random_net(3, vec![6, 5], 1, 2);
        let x = [0.3, -0.2, 0.5];
        let pts = Array2::from_shape_vec((1, 3), x.to_vec()).unwrap();
        let jets = evaluate_points(&net, pts.view(), &JetSpec::full_hessian(3)).unwrap();
        let jet = jets.jet(0);
        let h = 1e-5;
        for j in 0..3 {
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let gp = net.eval_with_grad(&xp).unwrap().spatial_grad[[0, j]];
                let gm = net.eval_with_grad(&xm).unwrap().spatial_grad[[0, j]];
                let fd = (gp - gm) / (2.0 * h);
                assert!((jet.second(0, j, k) - fd).abs() < 1e-8, "({j},{k})");
            }
        }
    }

    struct HessianTrace;

    impl PointObjective for (Vec<PointGroup>, HessianTrace) {
        fn groups(&self) -> &[PointGroup] {
            &self.0
        }
        fn term_names(&self) -> &[&'static str] {
            &["lap2"]
        }
        fn terms<S: Real>(&self, _g: usize, _i: usize, jet: &PointJet<'_, S>, out: &mut [S]) {
            let lap = jet.second(0, 0, 0) + jet.second(0, 1, 1) + jet.second(0, 0, 1) * 0.5;
            out[0] = lap * lap + jet.grad(0)[1] * jet.value(0);
        }
        fn combine(&self, sums: &[f64]) -> (f64, Vec<f64>) {
            (sums[0] * sums[0], vec![2.0 * sums[0]])
        }
    }

    #[test]
    fn second_order_param_gradient_matches_finite_differences() {
        let mut net = random_net(2, vec![4, 3], 1, 3);
        let pts = array![[0.1, 0.4], [0.7, -0.3], [0.2, 0.9]];
        let obj = (
            vec![PointGroup {
                name: "interior",
                points: pts,
                spec: JetSpec::with_pairs(2, vec![(0, 0), (1, 1), (0, 1)]),
            }],
            HessianTrace,
        );
        let v = evaluate_objective(&net, &obj, true).unwrap();
        let g = v.grad.unwrap();
        let h = 1e-6;
        for k in 0..net.n_params() {
            let p0 = net.params()[k];
            net.params_mut()[k] = p0 + h;
            let fp = evaluate_objective(&net, &obj, false).unwrap().total;
            net.params_mut()[k] = p0 - h;
            let fm = evaluate_objective(&net, &obj, false).unwrap().total;
            net.params_mut()[k] = p0;
            let fd = (fp - fm) / (2.0 * h);
            let scale = fd.abs().max(g.0[k].abs()).max(1e-3);
            assert!((fd - g.0[k]).abs() / scale < 1e-6, "param {k}: {fd} vs {}", g.0[k]);
        }
    }
}
