//! Divergence-free fields `v = ∇×Ψ` of a vector potential network.

use ndarray::{Array2, ArrayView2};

use super::{engine::evaluate_points, JetSpec, MlpNet, PointJet};
use crate::dual::Real;
use crate::{Error, Result};

/// Value and Jacobian `jacobian[[i, m]] = d v_i / d x_m` of a curl field.
#[derive(Debug, Clone, PartialEq)]
pub struct CurlEval {
    pub value: [f64; 3],
    pub jacobian: Array2<f64>,
}

impl CurlEval {
    pub fn divergence(&self) -> f64 {
        self.jacobian[[0, 0]] + self.jacobian[[1, 1]] + self.jacobian[[2, 2]]
    }
}

/// `∇×Ψ` and its Jacobian from a jet of `Ψ` carrying the full Hessian.
///
/// The mixed partials of `Ψ` are stored once per unordered pair, so the
/// divergence of the result cancels term by term.
pub fn curl_from_jet<S: Real>(jet: &PointJet<'_, S>) -> ([S; 3], [[S; 3]; 3]) {
    let d = |o: usize, m: usize| jet.grad(o)[m];
    let h = |o: usize, j: usize, k: usize| jet.second(o, j, k);
    let value = [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)];
    let mut jac = [[S::zero(); 3]; 3];
    for m in 0..3 {
        jac[0][m] = h(2, 1, m) - h(1, 2, m);
        jac[1][m] = h(0, 2, m) - h(2, 0, m);
        jac[2][m] = h(1, 0, m) - h(0, 1, m);
    }
    (value, jac)
}

fn check_potential(potential: &MlpNet) -> Result<()> {
    for given in [potential.input_dim(), potential.output_dim()] {
        if given != 3 {
            return Err(Error::DimensionMismatch { expected: 3, given });
        }
    }
    Ok(())
}

/// Curl of a `ℝ³ → ℝ³` potential network at each row of `points`.
pub fn curl_field(potential: &MlpNet, points: ArrayView2<'_, f64>) -> Result<Vec<CurlEval>> {
    check_potential(potential)?;
    let jets = evaluate_points(potential, points, &JetSpec::full_hessian(3))?;
    Ok((0..jets.len())
        .map(|i| {
            let (value, jac) = curl_from_jet(&jets.jet(i));
            CurlEval {
                value,
                jacobian: Array2::from_shape_fn((3, 3), |(a, b)| jac[a][b]),
            }
        })
        .collect())
}
