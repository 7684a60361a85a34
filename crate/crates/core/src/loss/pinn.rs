//! Strong-form residual loss used as a baseline.

use crate::dual::Real;
use crate::mlp::{evaluate_objective, JetSpec, MlpNet, ParamGradient, PointGroup, PointJet, PointObjective};
use crate::problems::{Ansatz, ProblemSpec, StrongOperator};
use crate::quadrature::SampleBatch;
use crate::{Error, Result};

/// Why the residual loss cannot be used for `spec`, if it cannot.
///
/// `eps` overrides the gradient regularization of a p-Laplace operator.
pub fn pinn_compatibility(spec: &ProblemSpec, eps: Option<f64>) -> std::result::Result<(), String> {
    let Some(sf) = &spec.strong_form else {
        return Err(format!("{} has no strong form", spec.name));
    };
    if spec.ansatz != Ansatz::Direct || spec.n_components != 1 {
        return Err(format!("{} is not a scalar problem", spec.name));
    }
    if let StrongOperator::PLaplace { p, eps: e0, .. } = &sf.operator {
        let e = eps.unwrap_or(*e0);
        if *p < 2.0 && e == 0.0 {
            return Err(format!(
                "{}: the p = {p} flux is singular where the gradient vanishes; set a gradient regularization",
                spec.name
            ));
        }
    }
    Ok(())
}

struct PinnObjective {
    groups: Vec<PointGroup>,
    operator: StrongOperator,
    rhs: Vec<f64>,
    weights: Vec<f64>,
    g: Vec<f64>,
    bweights: Vec<f64>,
    sigma: f64,
}

impl PointObjective for PinnObjective {
    fn groups(&self) -> &[PointGroup] {
        &self.groups
    }

    fn term_names(&self) -> &[&'static str] {
        &["residual", "boundary misfit"]
    }

    fn terms<S: Real>(&self, group: usize, index: usize, jet: &PointJet<'_, S>, out: &mut [S]) {
        if group == 0 {
            let r = self.operator.apply(jet) - self.rhs[index];
            out[0] = r * r * self.weights[index];
            out[1] = S::zero();
        } else {
            let e = jet.value(0) - self.g[index];
            out[0] = S::zero();
            out[1] = e * e * self.bweights[index];
        }
    }

    fn combine(&self, sums: &[f64]) -> (f64, Vec<f64>) {
        (sums[0] + self.sigma * sums[1], vec![1.0, self.sigma])
    }

    fn is_affine(&self) -> bool {
        true
    }
}

/// `Σ ω_i r(x_i)² + σ Σ ω_b (u - g)²` with `r = L u - f`.
pub struct PinnLoss {
    obj: PinnObjective,
}

impl PinnLoss {
    /// `eps` overrides the gradient regularization of a p-Laplace operator.
    pub fn new(spec: &ProblemSpec, batch: &SampleBatch, sigma: f64, eps: Option<f64>) -> Result<Self> {
        let sf = spec
            .strong_form
            .as_ref()
            .ok_or_else(|| Error::Config(vec![format!("{} has no strong form", spec.name)]))?;
        if spec.n_components != 1 || spec.ansatz != Ansatz::Direct {
            return Err(Error::Config(vec![format!("{} is not a scalar problem", spec.name)]));
        }
        let mut operator = sf.operator.clone();
        if let (StrongOperator::PLaplace { eps: e, .. }, Some(v)) = (&mut operator, eps) {
            *e = v;
        }
        let d = spec.dim();
        let rhs: Vec<f64> = batch
            .interior
            .points
            .outer_iter()
            .map(|x| (sf.rhs)(x.as_slice().expect("standard layout")))
            .collect();
        if let Some(i) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite("strong right-hand side", i));
        }
        let g: Vec<f64> = batch
            .boundary
            .points
            .outer_iter()
            .map(|x| (spec.boundary)(x.as_slice().expect("standard layout"))[0])
            .collect();
        Ok(Self {
            obj: PinnObjective {
                groups: vec![
                    PointGroup {
                        name: "interior",
                        points: batch.interior.points.clone(),
                        spec: operator.jet_spec(d),
                    },
                    PointGroup {
                        name: "boundary",
                        points: batch.boundary.points.clone(),
                        spec: JetSpec::value_only(d),
                    },
                ],
                operator,
                rhs,
                weights: batch.interior.weights.clone(),
                g,
                bweights: batch.boundary.weights.clone(),
                sigma,
            },
        })
    }

    /// Returns `(total, interior residual sum, boundary misfit sum)`.
    pub fn evaluate(&self, net: &MlpNet) -> Result<(f64, f64, f64)> {
        let v = evaluate_objective(net, &self.obj, false)?;
        Ok((v.total, v.sums[0], v.sums[1]))
    }

    pub fn evaluate_with_grad(&self, net: &MlpNet) -> Result<((f64, f64, f64), ParamGradient)> {
        let v = evaluate_objective(net, &self.obj, true)?;
        Ok(((v.total, v.sums[0], v.sums[1]), v.grad.expect("gradient requested")))
    }
}
