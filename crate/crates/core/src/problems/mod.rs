//! Weak-form problem descriptions.
//!
//! A problem `A(u) = f` is given by the pairing density
//!
//! ```text
//! P(x, u, ∇u; v, ∇v) = v · a0(x, u, ∇u) + ∇v : a1(x, u, ∇u)
//! ```
//!
//! so that `<v, A(u)> = ∫ P dx`, and a source in the same split form
//! `<v, f> = ∫ f0 · v + f1 : ∇v dx`. Only first derivatives of the state and
//! the exact solution are ever needed.

mod catalog;
mod monotone;

use std::fmt;
use std::sync::Arc;

use ndarray::ArrayView2;

use crate::dual::{dot, norm_sq, Dual, Real};
use crate::mlp::{curl_from_jet, evaluate_points, JetSpec, MlpNet, PointJet};
use crate::{Error, Result};

pub use catalog::{
    catalog, catalog_names, conv_diffusion, conv_diffusion_exact, heat_exact, linear_smooth, navier_stokes, navier_stokes_exact,
    plaplace_large, plaplace_small, quasilinear_step, HeatFamily, HeatProfile,
};
pub use monotone::{
    check_monotonicity, continuity_violation, monotone_violation, MonotonicityReport,
};

/// An axis-aligned box `∏ (lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                given: upper.len(),
            });
        }
        if lower.is_empty() || lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::Config(vec![format!(
                "domain bounds must satisfy lower < upper componentwise, got {lower:?} and {upper:?}"
            )]));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit_cube(d: usize) -> Self {
        Self {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.edge(i)).product()
    }

    /// Measure of the face orthogonal to axis `i` (each axis has two).
    pub fn face_area(&self, i: usize) -> f64 {
        (0..self.dim()).filter(|&j| j != i).map(|j| self.edge(j)).product()
    }

    pub fn surface(&self) -> f64 {
        (0..self.dim()).map(|i| 2.0 * self.face_area(i)).sum()
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| a < v && v < b)
    }

    /// True when `x` lies in the closed box and on at least one face.
    pub fn on_boundary(&self, x: &[f64]) -> bool {
        let inside = x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| a <= v && v <= b);
        inside && x.iter().zip(self.lower.iter().zip(&self.upper)).any(|(v, (a, b))| v == a || v == b)
    }
}

/// A field value and its Jacobian at one point, `grad` being
/// `components x d` row-major.
#[derive(Debug, Clone, Copy)]
pub struct FieldArg<'a, S> {
    pub value: &'a [S],
    pub grad: &'a [S],
}

impl<'a, S> FieldArg<'a, S> {
    pub fn new(value: &'a [S], grad: &'a [S]) -> Self {
        Self { value, grad }
    }
}

/// Pairing density `P(x, state; test)` of a weak-form operator.
///
/// Implementors write one generic density and derive both entry points with
/// [`impl_pairing_eval!`](crate::impl_pairing_eval).
pub trait Pairing: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    fn eval_f64(&self, x: &[f64], state: FieldArg<'_, f64>, test: FieldArg<'_, f64>) -> f64;

    fn eval_dual(&self, x: &[f64], state: FieldArg<'_, Dual>, test: FieldArg<'_, Dual>) -> Dual;
}

/// Implements the two [`Pairing`] entry points from an inherent
/// `fn density<S: Real>(&self, x, state, test) -> S`.
#[macro_export]
macro_rules! impl_pairing_eval {
    () => {
        fn eval_f64(
            &self,
            x: &[f64],
            state: $crate::problems::FieldArg<'_, f64>,
            test: $crate::problems::FieldArg<'_, f64>,
        ) -> f64 {
            self.density(x, state, test)
        }

        fn eval_dual(
            &self,
            x: &[f64],
            state: $crate::problems::FieldArg<'_, $crate::dual::Dual>,
            test: $crate::problems::FieldArg<'_, $crate::dual::Dual>,
        ) -> $crate::dual::Dual {
            self.density(x, state, test)
        }
    };
}

/// `-Δu + b·∇u + c u`: `a0 = b·∇u + c u`, `a1 = ∇u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearElliptic {
    pub b: Vec<f64>,
    pub c: f64,
}

impl LinearElliptic {
    fn density<S: Real>(&self, _x: &[f64], state: FieldArg<'_, S>, test: FieldArg<'_, S>) -> S {
        let mut a0 = state.value[0] * self.c;
        for (bi, gi) in self.b.iter().zip(state.grad) {
            a0 += *gi * *bi;
        }
        test.value[0] * a0 + dot(state.grad, test.grad)
    }
}

impl Pairing for LinearElliptic {
    fn name(&self) -> String {
        "linear-elliptic".into()
    }
    impl_pairing_eval!();
}

/// `|g|^(p-2)`, continuously extended by its limit at `g = 0`.
fn plap_coef<S: Real>(g2: S, p: f64) -> S {
    if g2.re() == 0.0 {
        S::cst(if p == 2.0 { 1.0 } else { 0.0 })
    } else if p == 2.0 {
        S::cst(1.0)
    } else {
        g2.powf((p - 2.0) / 2.0)
    }
}

/// `-∇·(|∇u|^(p-2) ∇u) + b·∇u`.
///
/// With `delta` set, the flux term is replaced by the one-sided difference
/// `(1/p)(|∇u + δ∇v|^p - |∇u|^p)/δ`, which stays finite for `p < 2` but is
/// only approximately linear in the test slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PLaplace {
    pub p: f64,
    pub b: Vec<f64>,
    pub delta: Option<f64>,
}

impl PLaplace {
    fn density<S: Real>(&self, _x: &[f64], state: FieldArg<'_, S>, test: FieldArg<'_, S>) -> S {
        let g = state.grad;
        let h = test.grad;
        let mut conv = S::zero();
        for (bi, gi) in self.b.iter().zip(g) {
            conv += *gi * *bi;
        }
        let flux = match self.delta {
            None => plap_coef(norm_sq(g), self.p) * dot(g, h),
            Some(delta) => {
                let mut shifted = S::zero();
                for (gi, hi) in g.iter().zip(h) {
                    let v = *gi + *hi * delta;
                    shifted += v * v;
                }
                let half = self.p / 2.0;
                (shifted.powf(half) - norm_sq(g).powf(half)) / (self.p * delta)
            }
        };
        flux + test.value[0] * conv
    }
}

impl Pairing for PLaplace {
    fn name(&self) -> String {
        match self.delta {
            None => format!("p-laplace(p={})", self.p),
            Some(d) => format!("p-laplace(p={}, delta={d})", self.p),
        }
    }
    impl_pairing_eval!();
}

/// One backward-Euler step of `u_t = ∇·(u∇u) + f`:
/// `a0 = u`, `a1 = Δt u ∇u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quasilinear {
    pub dt: f64,
}

impl Quasilinear {
    fn density<S: Real>(&self, _x: &[f64], state: FieldArg<'_, S>, test: FieldArg<'_, S>) -> S {
        let u = state.value[0];
        test.value[0] * u + u * dot(state.grad, test.grad) * self.dt
    }
}

impl Pairing for Quasilinear {
    fn name(&self) -> String {
        format!("quasilinear(dt={})", self.dt)
    }
    impl_pairing_eval!();
}

/// Stationary Navier-Stokes on divergence-free fields:
/// `μ ∇u : ∇v + ((u·∇)u) · v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NavierStokes {
    pub viscosity: f64,
}

impl NavierStokes {
    fn density<S: Real>(&self, _x: &[f64], state: FieldArg<'_, S>, test: FieldArg<'_, S>) -> S {
        let n = state.value.len();
        let d = state.grad.len() / n;
        let mut acc = dot(state.grad, test.grad) * self.viscosity;
        for i in 0..n {
            let mut conv = S::zero();
            for j in 0..d {
                conv += state.value[j] * state.grad[i * d + j];
            }
            acc += conv * test.value[i];
        }
        acc
    }
}

impl Pairing for NavierStokes {
    fn name(&self) -> String {
        format!("navier-stokes(viscosity={})", self.viscosity)
    }
    impl_pairing_eval!();
}

/// Source in split form: `f0` has one entry per component, `f1` is
/// `components x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceValue {
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
}

pub type PointFn<T> = Arc<dyn Fn(&[f64]) -> T + Send + Sync>;

/// Exact solution `u*` and its Jacobian (`components x d` row-major).
#[derive(Clone)]
pub struct ExactSolution {
    pub value: PointFn<Vec<f64>>,
    pub grad: PointFn<Vec<f64>>,
}

/// How network outputs become the unknown field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ansatz {
    /// The network output is the field.
    Direct,
    /// The field is the curl of a 3-output potential network.
    Curl,
}

impl Ansatz {
    pub fn jet_spec(self, d: usize) -> JetSpec {
        match self {
            Ansatz::Direct => JetSpec::first_order(d),
            Ansatz::Curl => JetSpec::full_hessian(d),
        }
    }

    pub fn net_outputs(self, components: usize) -> usize {
        match self {
            Ansatz::Direct => components,
            Ansatz::Curl => 3,
        }
    }

    /// Writes the field value and Jacobian encoded by a network jet.
    pub fn field_from_jet<S: Real>(self, jet: &PointJet<'_, S>, value: &mut [S], grad: &mut [S]) {
        match self {
            Ansatz::Direct => {
                let d = jet.input_dim();
                for o in 0..jet.outputs() {
                    value[o] = jet.value(o);
                    grad[o * d..(o + 1) * d].copy_from_slice(jet.grad(o));
                }
            }
            Ansatz::Curl => {
                let (v, jac) = curl_from_jet(jet);
                value[..3].copy_from_slice(&v);
                for i in 0..3 {
                    grad[i * 3..(i + 1) * 3].copy_from_slice(&jac[i]);
                }
            }
        }
    }
}

/// The strong-form operator used by the residual (PINN) loss.
#[derive(Debug, Clone, PartialEq)]
pub enum StrongOperator {
    /// `-Δu + b·∇u + c u`.
    Linear { b: Vec<f64>, c: f64 },
    /// `-∇·(φ ∇u) + b·∇u` with `φ = (|∇u|² + eps²)^((p-2)/2)`.
    PLaplace { p: f64, b: Vec<f64>, eps: f64 },
}

impl StrongOperator {
    pub fn jet_spec(&self, d: usize) -> JetSpec {
        match self {
            StrongOperator::Linear { .. } => JetSpec::laplacian(d),
            StrongOperator::PLaplace { .. } => JetSpec::full_hessian(d),
        }
    }

    /// `L u` at a point from a jet with the needed second derivatives.
    pub fn apply<S: Real>(&self, jet: &PointJet<'_, S>) -> S {
        let d = jet.input_dim();
        let g = jet.grad(0);
        let mut lap = S::zero();
        for j in 0..d {
            lap += jet.second(0, j, j);
        }
        match self {
            StrongOperator::Linear { b, c } => {
                let mut r = jet.value(0) * *c - lap;
                for (bi, gi) in b.iter().zip(g) {
                    r += *gi * *bi;
                }
                r
            }
            StrongOperator::PLaplace { p, b, eps } => {
                let s = norm_sq(g) + eps * eps;
                let e = (p - 2.0) / 2.0;
                let phi = s.powf(e);
                let dphi = s.powf(e - 1.0) * e;
                let mut ghg = S::zero();
                for j in 0..d {
                    for k in 0..d {
                        ghg += g[j] * jet.second(0, j, k) * g[k];
                    }
                }
                let mut r = -(phi * lap) - dphi * ghg * 2.0;
                for (bi, gi) in b.iter().zip(g) {
                    r += *gi * *bi;
                }
                r
            }
        }
    }
}

/// Strong form `L u = f` of a scalar problem.
#[derive(Clone)]
pub struct StrongForm {
    pub operator: StrongOperator,
    pub rhs: PointFn<f64>,
}

impl fmt::Debug for StrongForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StrongForm").field("operator", &self.operator).finish_non_exhaustive()
    }
}

/// Difference-quotient regularization of a pairing, used where the exact
/// flux is singular.
#[derive(Debug, Clone)]
pub struct Regularization {
    pub delta: f64,
    pub pairing: Arc<dyn Pairing>,
}

/// A weak-form elliptic problem on a box.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Domain,
    pub n_components: usize,
    pub pairing: Arc<dyn Pairing>,
    pub source: PointFn<SourceValue>,
    pub boundary: PointFn<Vec<f64>>,
    pub p_exponent: f64,
    pub rho_exponent: f64,
    pub exact: Option<ExactSolution>,
    pub regularization: Option<Regularization>,
    pub strong_form: Option<StrongForm>,
    pub ansatz: Ansatz,
    /// Points where the data are singular; quadrature nodes in this set are
    /// dropped.
    pub singular_set: Option<PointFn<bool>>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("n_components", &self.n_components)
            .field("pairing", &self.pairing.name())
            .field("p_exponent", &self.p_exponent)
            .field("rho_exponent", &self.rho_exponent)
            .field("regularization", &self.regularization.as_ref().map(|r| r.delta))
            .field("ansatz", &self.ansatz)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// The pairing used in losses: the regularized one when present.
    pub fn active_pairing(&self) -> &dyn Pairing {
        match &self.regularization {
            Some(r) => r.pairing.as_ref(),
            None => self.pairing.as_ref(),
        }
    }

    pub fn is_singular(&self, x: &[f64]) -> bool {
        self.singular_set.as_ref().is_some_and(|s| s(x))
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n_components == 0 {
            errs.push("n_components must be >= 1".to_string());
        }
        if !(self.p_exponent > 1.0) {
            errs.push(format!("p exponent must exceed 1, got {}", self.p_exponent));
        }
        if !(self.rho_exponent >= 2.0) {
            errs.push(format!("rho exponent must be >= 2, got {}", self.rho_exponent));
        }
        if self.ansatz == Ansatz::Curl && (self.n_components != 3 || self.dim() != 3) {
            errs.push("the curl ansatz needs a 3-component field in 3 dimensions".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Evaluates the active pairing density, rejecting non-finite results.
pub fn pairing_eval(
    spec: &ProblemSpec,
    x: &[f64],
    state: FieldArg<'_, f64>,
    test: FieldArg<'_, f64>,
) -> Result<f64> {
    let n = spec.n_components;
    let d = spec.dim();
    for (len, want) in [
        (x.len(), d),
        (state.value.len(), n),
        (test.value.len(), n),
        (state.grad.len(), n * d),
        (test.grad.len(), n * d),
    ] {
        if len != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                given: len,
            });
        }
    }
    let v = spec.active_pairing().eval_f64(x, state, test);
    if !v.is_finite() {
        return Err(Error::Numerical(format!(
            "pairing `{}` is not finite at x = {x:?}",
            spec.active_pairing().name()
        )));
    }
    Ok(v)
}

/// Values and Jacobians of a field at a list of points.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    pub components: usize,
    pub dim: usize,
    /// `points x components`.
    pub values: Vec<f64>,
    /// `points x components x dim`.
    pub grads: Vec<f64>,
}

impl FieldSamples {
    pub fn len(&self) -> usize {
        self.values.len() / self.components
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, i: usize) -> FieldArg<'_, f64> {
        let n = self.components;
        let m = n * self.dim;
        FieldArg::new(&self.values[i * n..(i + 1) * n], &self.grads[i * m..(i + 1) * m])
    }
}

/// A frozen field usable as the anchor `u_k` or as the previous time level.
#[derive(Clone)]
pub enum DiscreteField {
    Net { net: Arc<MlpNet>, ansatz: Ansatz },
    Analytic { components: usize, exact: ExactSolution },
}

impl fmt::Debug for DiscreteField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiscreteField::Net { net, ansatz } => {
                write!(f, "DiscreteField::Net({}, {ansatz:?})", net.arch().label())
            }
            DiscreteField::Analytic { components, .. } => {
                write!(f, "DiscreteField::Analytic({components} components)")
            }
        }
    }
}

impl DiscreteField {
    pub fn from_net(net: &MlpNet, ansatz: Ansatz) -> Self {
        DiscreteField::Net {
            net: Arc::new(net.clone()),
            ansatz,
        }
    }

    pub fn components(&self) -> usize {
        match self {
            DiscreteField::Net { net, ansatz } => match ansatz {
                Ansatz::Direct => net.output_dim(),
                Ansatz::Curl => 3,
            },
            DiscreteField::Analytic { components, .. } => *components,
        }
    }

    /// Values and Jacobians at every row of `points`.
    pub fn sample(&self, points: ArrayView2<'_, f64>) -> Result<FieldSamples> {
        let n_pts = points.nrows();
        let d = points.ncols();
        let n = self.components();
        let mut values = Vec::with_capacity(n_pts * n);
        let mut grads = Vec::with_capacity(n_pts * n * d);
        match self {
            DiscreteField::Net { net, ansatz } => {
                let jets = evaluate_points(net, points, &ansatz.jet_spec(d))?;
                let mut v = vec![0.0; n];
                let mut g = vec![0.0; n * d];
                for i in 0..n_pts {
                    ansatz.field_from_jet(&jets.jet(i), &mut v, &mut g);
                    values.extend_from_slice(&v);
                    grads.extend_from_slice(&g);
                }
            }
            DiscreteField::Analytic { exact, .. } => {
                for (i, x) in points.outer_iter().enumerate() {
                    let x = x.to_vec();
                    let v = (exact.value)(&x);
                    let g = (exact.grad)(&x);
                    if v.iter().chain(&g).any(|t| !t.is_finite()) {
                        return Err(Error::non_finite("analytic field", i));
                    }
                    values.extend_from_slice(&v);
                    grads.extend_from_slice(&g);
                }
            }
        }
        Ok(FieldSamples {
            components: n,
            dim: d,
            values,
            grads,
        })
    }

    /// Values only.
    pub fn values(&self, points: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        match self {
            DiscreteField::Net {
                net,
                ansatz: Ansatz::Direct,
            } => {
                let jets = evaluate_points(net, points, &JetSpec::value_only(points.ncols()))?;
                Ok((0..jets.len())
                    .flat_map(|i| {
                        let j = jets.jet(i);
                        (0..net.output_dim()).map(move |o| j.value(o))
                    })
                    .collect())
            }
            DiscreteField::Analytic { exact, .. } => Ok(points
                .outer_iter()
                .flat_map(|x| (exact.value)(&x.to_vec()))
                .collect()),
            _ => Ok(self.sample(points)?.values),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_measures() {
        let d = Domain::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.volume(), 6.0);
        assert_eq!(d.surface(), 2.0 * (6.0 + 3.0 + 2.0));
        assert!(Domain::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn plaplace_two_reduces_to_dot_product() {
        let p = PLaplace {
            p: 2.0,
            b: vec![0.0; 3],
            delta: None,
        };
        let g = [0.3, -1.2, 0.5];
        let h = [1.0, 0.4, -2.0];
        let v = p.eval_f64(&[0.0; 3], FieldArg::new(&[0.0], &g), FieldArg::new(&[0.0], &h));
        assert!((v - dot(&g, &h)).abs() < 1e-15);
    }

    #[test]
    fn plaplace_flux_vanishes_at_zero_gradient() {
        let p = PLaplace {
            p: 1.5,
            b: vec![0.0; 2],
            delta: None,
        };
        let v = p.eval_f64(&[0.0; 2], FieldArg::new(&[0.0], &[0.0, 0.0]), FieldArg::new(&[1.0], &[1.0, 1.0]));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn navier_stokes_convection_term() {
        let ns = NavierStokes { viscosity: 0.0 };
        let u = [1.0, 2.0, 3.0];
        let j = [1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0];
        let v = ns.eval_f64(&[0.0; 3], FieldArg::new(&u, &j), FieldArg::new(&[1.0, 1.0, 1.0], &[0.0; 9]));
        assert_eq!(v, 1.0 + 4.0 + 9.0);
    }
}
