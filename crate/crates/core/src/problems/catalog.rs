//! Benchmark problems with known solutions.
//!
//! Every source is assembled in split form from the exact solution,
//! `f0 = a0(x, u*, ∇u*)` and `f1 = a1(x, u*, ∇u*)`, so `u*` is an exact
//! stationary point of the discrete weak form even where it is not twice
//! differentiable. Strong right-hand sides are kept separately for the
//! residual baseline.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{
    Ansatz, DiscreteField, Domain, ExactSolution, LinearElliptic, NavierStokes, PLaplace, ProblemSpec,
    Quasilinear, Regularization, SourceValue, StrongForm, StrongOperator,
};
use crate::{Error, Result};

const NAMES: [&str; 5] = [
    "conv-diffusion-10d",
    "plaplace-2.5",
    "plaplace-1.5",
    "quasilinear-heat-10d",
    "navier-stokes-3d",
];

pub fn catalog_names() -> Vec<String> {
    NAMES.iter().map(|s| s.to_string()).collect()
}

/// Looks up a catalog problem by its stable name.
///
/// `quasilinear-heat-10d` resolves to the first step of the default time
/// marching (`Δt = 0.1` from the exact initial state).
pub fn catalog(name: &str) -> Result<ProblemSpec> {
    match name {
        "conv-diffusion-10d" => Ok(conv_diffusion(10)),
        "plaplace-2.5" => Ok(plaplace_large(10)),
        "plaplace-1.5" => Ok(plaplace_small(10, Some(0.01))),
        "quasilinear-heat-10d" => {
            let fam = HeatFamily::new(10);
            Ok(fam.step(0.1, 0.1, fam.initial()))
        }
        "navier-stokes-3d" => Ok(navier_stokes(0.1)),
        _ => Err(Error::UnknownName {
            kind: "problem",
            name: name.to_string(),
            valid: catalog_names(),
        }),
    }
}

fn unit(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Clamp level of the convection-diffusion solution.
const CLAMP: f64 = 0.9;

fn on_sine_branch(xi: f64) -> bool {
    (PI * xi / 2.0).sin() <= CLAMP
}

/// `u*(x) = Σ min(sin(π x_i / 2), 0.9)`; ties take the sine branch.
pub fn conv_diffusion_exact() -> ExactSolution {
    ExactSolution {
        value: Arc::new(|x: &[f64]| vec![x.iter().map(|&xi| (PI * xi / 2.0).sin().min(CLAMP)).sum()]),
        grad: Arc::new(|x: &[f64]| {
            x.iter()
                .map(|&xi| if on_sine_branch(xi) { PI / 2.0 * (PI * xi / 2.0).cos() } else { 0.0 })
                .collect()
        }),
    }
}

/// `-Δu + ∂_1 u + (π²/4) u = f` on the unit cube.
pub fn conv_diffusion(d: usize) -> ProblemSpec {
    let c = PI * PI / 4.0;
    let exact = conv_diffusion_exact();
    let (ev, eg) = (exact.value.clone(), exact.grad.clone());
    let source = Arc::new(move |x: &[f64]| {
        let u = ev(x)[0];
        let g = eg(x);
        SourceValue {
            f0: vec![g[0] + c * u],
            f1: g,
        }
    });
    let (ev, eg) = (exact.value.clone(), exact.grad.clone());
    let rhs = Arc::new(move |x: &[f64]| {
        let lap: f64 = x
            .iter()
            .map(|&xi| if on_sine_branch(xi) { -c * (PI * xi / 2.0).sin() } else { 0.0 })
            .sum();
        -lap + eg(x)[0] + c * ev(x)[0]
    });
    ProblemSpec {
        name: if d == 10 { "conv-diffusion-10d".into() } else { format!("conv-diffusion-{d}d") },
        domain: Domain::unit_cube(d),
        n_components: 1,
        pairing: Arc::new(LinearElliptic { b: unit(d, 0), c }),
        source,
        boundary: exact.value.clone(),
        p_exponent: 2.0,
        rho_exponent: 2.0,
        exact: Some(exact),
        regularization: None,
        strong_form: Some(StrongForm {
            operator: StrongOperator::Linear { b: unit(d, 0), c },
            rhs,
        }),
        ansatz: Ansatz::Direct,
        singular_set: None,
    }
}

/// `-Δu + b·∇u + c u = f` on the unit cube with the smooth solution
/// `u* = exp(Σ x_i / d)`.
pub fn linear_smooth(d: usize, b: Vec<f64>, c: f64) -> ProblemSpec {
    let s = |x: &[f64]| (x.iter().sum::<f64>() / x.len() as f64).exp();
    let exact = ExactSolution {
        value: Arc::new(move |x: &[f64]| vec![s(x)]),
        grad: Arc::new(move |x: &[f64]| vec![s(x) / x.len() as f64; x.len()]),
    };
    let bsum: f64 = b.iter().sum();
    let bs = b.clone();
    let source = Arc::new(move |x: &[f64]| {
        let u = s(x);
        let g = u / x.len() as f64;
        SourceValue {
            f0: vec![bsum * g + c * u],
            f1: vec![g; x.len()],
        }
    });
    let rhs = Arc::new(move |x: &[f64]| {
        let u = s(x);
        let n = x.len() as f64;
        -u / n + bsum * u / n + c * u
    });
    ProblemSpec {
        name: format!("linear-smooth-{d}d"),
        domain: Domain::unit_cube(d),
        n_components: 1,
        pairing: Arc::new(LinearElliptic { b: bs.clone(), c }),
        source,
        boundary: exact.value.clone(),
        p_exponent: 2.0,
        rho_exponent: 2.0,
        exact: Some(exact),
        regularization: None,
        strong_form: Some(StrongForm {
            operator: StrongOperator::Linear { b: bs, c },
            rhs,
        }),
        ansatz: Ansatz::Direct,
        singular_set: None,
    }
}

/// `-Δ_p u + ∂_1 u = f` with `p = 2.5` and `u* = (1 - r²)/∛50`.
///
/// The strong right-hand side is `(2c)^(p-1) (d+p-2) r^(p-2) - 2c x_1` with
/// `c = 50^(-1/3)`, which is `4.2 r^(1/2) - (2/5)^(2/3) x_1` in ten dimensions.
pub fn plaplace_large(d: usize) -> ProblemSpec {
    let p = 2.5;
    let cc = 50f64.powf(-1.0 / 3.0);
    let exact = ExactSolution {
        value: Arc::new(move |x: &[f64]| vec![cc * (1.0 - x.iter().map(|v| v * v).sum::<f64>())]),
        grad: Arc::new(move |x: &[f64]| x.iter().map(|v| -2.0 * cc * v).collect()),
    };
    let source = Arc::new(move |x: &[f64]| {
        let r = norm(x);
        let coef = (2.0 * cc * r).powf(p - 2.0);
        SourceValue {
            f0: vec![-2.0 * cc * x[0]],
            f1: x.iter().map(|v| -2.0 * cc * v * coef).collect(),
        }
    });
    let dd = d as f64;
    let rhs = Arc::new(move |x: &[f64]| {
        let r = norm(x);
        (2.0 * cc).powf(p - 1.0) * (dd + p - 2.0) * r.powf(p - 2.0) - 2.0 * cc * x[0]
    });
    ProblemSpec {
        name: if d == 10 { "plaplace-2.5".into() } else { format!("plaplace-2.5-{d}d") },
        domain: Domain::unit_cube(d),
        n_components: 1,
        pairing: Arc::new(PLaplace {
            p,
            b: unit(d, 0),
            delta: None,
        }),
        source,
        boundary: exact.value.clone(),
        p_exponent: p,
        rho_exponent: 2.0,
        exact: Some(exact),
        regularization: None,
        strong_form: Some(StrongForm {
            operator: StrongOperator::PLaplace {
                p,
                b: unit(d, 0),
                eps: 0.0,
            },
            rhs,
        }),
        ansatz: Ansatz::Direct,
        singular_set: None,
    }
}

/// `-Δ_p u + ∂_1 u = f` with `p = 1.5` and `u* = 1 - r`, optionally with the
/// difference-quotient pairing of step `delta`.
pub fn plaplace_small(d: usize, delta: Option<f64>) -> ProblemSpec {
    let p = 1.5;
    let exact = ExactSolution {
        value: Arc::new(|x: &[f64]| vec![1.0 - norm(x)]),
        grad: Arc::new(|x: &[f64]| {
            let r = norm(x);
            x.iter().map(|v| -v / r).collect()
        }),
    };
    let source = Arc::new(|x: &[f64]| {
        let r = norm(x);
        // |∇u*| = 1, so the flux equals ∇u*.
        SourceValue {
            f0: vec![-x[0] / r],
            f1: x.iter().map(|v| -v / r).collect(),
        }
    });
    let dd = d as f64;
    let rhs = Arc::new(move |x: &[f64]| (dd - 1.0 - x[0]) / norm(x));
    let regularization = delta.map(|delta| Regularization {
        delta,
        pairing: Arc::new(PLaplace {
            p,
            b: unit(d, 0),
            delta: Some(delta),
        }),
    });
    ProblemSpec {
        name: if d == 10 { "plaplace-1.5".into() } else { format!("plaplace-1.5-{d}d") },
        domain: Domain::unit_cube(d),
        n_components: 1,
        pairing: Arc::new(PLaplace {
            p,
            b: unit(d, 0),
            delta: None,
        }),
        source,
        boundary: exact.value.clone(),
        p_exponent: p,
        rho_exponent: 2.0,
        exact: Some(exact),
        regularization,
        strong_form: Some(StrongForm {
            operator: StrongOperator::PLaplace {
                p,
                b: unit(d, 0),
                eps: 0.0,
            },
            rhs,
        }),
        ansatz: Ansatz::Direct,
        singular_set: None,
    }
}

/// `u*(x, t) = (Σ x_i + 1 + t + sin(5πt)/5)^(1/2)`.
pub fn heat_exact(t: f64) -> ExactSolution {
    let shift = 1.0 + t + (5.0 * PI * t).sin() / 5.0;
    ExactSolution {
        value: Arc::new(move |x: &[f64]| vec![(x.iter().sum::<f64>() + shift).sqrt()]),
        grad: Arc::new(move |x: &[f64]| {
            let u = (x.iter().sum::<f64>() + shift).sqrt();
            vec![0.5 / u; x.len()]
        }),
    }
}

/// Exact solution of a quasilinear diffusion family `u_t = ∇·(u∇u) + f`.
#[derive(Debug, Clone, PartialEq)]
pub enum HeatProfile {
    /// [`heat_exact`]; since `u*∇u* = (1/2, …, 1/2)` is constant, `f = u*_t`.
    SqrtSum,
    /// `u*(x, t) = a·x + 1 + t`, for which backward Euler is exact in time.
    Linear { slope: Vec<f64> },
}

/// A quasilinear diffusion problem on the unit cube with a known solution.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatFamily {
    pub dim: usize,
    pub profile: HeatProfile,
}

impl HeatFamily {
    /// The benchmark family with solution [`heat_exact`].
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            profile: HeatProfile::SqrtSum,
        }
    }

    pub fn linear(slope: Vec<f64>) -> Self {
        Self {
            dim: slope.len(),
            profile: HeatProfile::Linear { slope },
        }
    }

    pub fn exact(&self, t: f64) -> ExactSolution {
        match &self.profile {
            HeatProfile::SqrtSum => heat_exact(t),
            HeatProfile::Linear { slope } => {
                let (a, g) = (slope.clone(), slope.clone());
                ExactSolution {
                    value: Arc::new(move |x: &[f64]| vec![a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() + 1.0 + t]),
                    grad: Arc::new(move |_: &[f64]| g.clone()),
                }
            }
        }
    }

    pub fn initial(&self) -> DiscreteField {
        DiscreteField::Analytic {
            components: 1,
            exact: self.exact(0.0),
        }
    }

    /// `u*_t(x, t)`.
    pub fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        match &self.profile {
            HeatProfile::SqrtSum => {
                let u = heat_exact(t).value.as_ref()(x)[0];
                (1.0 + PI * (5.0 * PI * t).cos()) / (2.0 * u)
            }
            HeatProfile::Linear { .. } => 1.0,
        }
    }

    /// `f = u*_t - ∇·(u*∇u*)`.
    pub fn forcing(&self, x: &[f64], t: f64) -> f64 {
        match &self.profile {
            HeatProfile::SqrtSum => self.time_derivative(x, t),
            HeatProfile::Linear { slope } => 1.0 - slope.iter().map(|a| a * a).sum::<f64>(),
        }
    }

    pub fn step(&self, dt: f64, t_next: f64, u_prev: DiscreteField) -> ProblemSpec {
        quasilinear_step(self, dt, t_next, u_prev)
    }
}

/// One backward-Euler step `-Δt ∇·(u∇u) + u = Δt f(·, t_next) + u_prev`.
///
/// In split form `f0 = u_prev + Δt u*_t` and `f1 = Δt u*∇u*`, which carries
/// the boundary flux of the exact solution. The previous level is evaluated
/// lazily at each quadrature point.
pub fn quasilinear_step(fam: &HeatFamily, dt: f64, t_next: f64, u_prev: DiscreteField) -> ProblemSpec {
    let d = fam.dim;
    let exact = fam.exact(t_next);
    let prev: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = match u_prev {
        DiscreteField::Net { net, ansatz: _ } => Arc::new(move |x: &[f64]| net.eval(x).map(|v| v[0]).unwrap_or(f64::NAN)),
        DiscreteField::Analytic { exact, .. } => Arc::new(move |x: &[f64]| exact.value.as_ref()(x)[0]),
    };
    let f = fam.clone();
    let (ev, eg) = (exact.value.clone(), exact.grad.clone());
    let source = Arc::new(move |x: &[f64]| {
        let u = ev(x)[0];
        SourceValue {
            f0: vec![dt * f.time_derivative(x, t_next) + prev(x)],
            f1: eg(x).iter().map(|g| dt * u * g).collect(),
        }
    });
    let name = match fam.profile {
        HeatProfile::SqrtSum => format!("quasilinear-heat-{d}d(dt={dt}, t={t_next})"),
        HeatProfile::Linear { .. } => format!("quasilinear-linear-{d}d(dt={dt}, t={t_next})"),
    };
    ProblemSpec {
        name,
        domain: Domain::unit_cube(d),
        n_components: 1,
        pairing: Arc::new(Quasilinear { dt }),
        source,
        boundary: exact.value.clone(),
        p_exponent: 2.0,
        rho_exponent: 2.0,
        exact: Some(exact),
        regularization: None,
        strong_form: None,
        ansatz: Ansatz::Direct,
        singular_set: None,
    }
}

/// Velocity and Jacobian of the Navier-Stokes benchmark. Both blow up at
/// `x_3 = 0`.
pub fn navier_stokes_exact() -> ExactSolution {
    ExactSolution {
        value: Arc::new(|x: &[f64]| {
            let (x1, x2, x3) = (x[0], x[1], x[2]);
            let a = x3.powf(2.0 / 3.0);
            let b = x3.powf(-1.0 / 3.0);
            vec![
                x1 * a - 2.0 / 3.0 * x1 * x2 * b,
                2.0 / 3.0 * x1 * x2 * b - x2 * a,
                x2 * a - x1 * a,
            ]
        }),
        grad: Arc::new(|x: &[f64]| {
            let (x1, x2, x3) = (x[0], x[1], x[2]);
            let a = x3.powf(2.0 / 3.0);
            let b = x3.powf(-1.0 / 3.0);
            let c = x3.powf(-4.0 / 3.0);
            vec![
                a - 2.0 / 3.0 * x2 * b,
                -2.0 / 3.0 * x1 * b,
                2.0 / 3.0 * x1 * b + 2.0 / 9.0 * x1 * x2 * c,
                2.0 / 3.0 * x2 * b,
                2.0 / 3.0 * x1 * b - a,
                -2.0 / 9.0 * x1 * x2 * c - 2.0 / 3.0 * x2 * b,
                -a,
                a,
                2.0 / 3.0 * (x2 - x1) * b,
            ]
        }),
    }
}

/// Stationary Navier-Stokes on the unit cube, solved for the velocity in the
/// divergence-free weak form; the pressure never enters.
pub fn navier_stokes(viscosity: f64) -> ProblemSpec {
    let exact = navier_stokes_exact();
    let (ev, eg) = (exact.value.clone(), exact.grad.clone());
    let source = Arc::new(move |x: &[f64]| {
        let u = ev(x);
        let j = eg(x);
        let conv = (0..3).map(|i| (0..3).map(|k| u[k] * j[i * 3 + k]).sum()).collect();
        SourceValue {
            f0: conv,
            f1: j.iter().map(|v| viscosity * v).collect(),
        }
    });
    ProblemSpec {
        name: "navier-stokes-3d".into(),
        domain: Domain::unit_cube(3),
        n_components: 3,
        pairing: Arc::new(NavierStokes { viscosity }),
        source,
        boundary: exact.value.clone(),
        p_exponent: 2.0,
        rho_exponent: 2.0,
        exact: Some(exact),
        regularization: None,
        strong_form: None,
        ansatz: Ansatz::Curl,
        singular_set: Some(Arc::new(|x: &[f64]| x[2] <= 0.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_valid_names() {
        let err = catalog("heat").unwrap_err().to_string();
        for n in NAMES {
            assert!(err.contains(n), "{err}");
        }
    }

    #[test]
    fn conv_diffusion_clamps_at_corner() {
        let spec = catalog("conv-diffusion-10d").unwrap();
        let u = (spec.exact.unwrap().value)(&[1.0; 10]);
        assert!((u[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn plaplace_small_vanishes_on_unit_sphere() {
        let spec = catalog("plaplace-1.5").unwrap();
        let mut x = [0.0; 10];
        x[3] = 0.6;
        x[7] = 0.8;
        assert!((spec.exact.unwrap().value)(&x)[0].abs() < 1e-15);
    }

    #[test]
    fn ten_dimensional_rhs_matches_closed_form() {
        let spec = plaplace_large(10);
        let rhs = spec.strong_form.unwrap().rhs;
        let x = [0.3; 10];
        let r = norm(&x);
        let want = 4.2 * r.sqrt() - 0.4f64.powf(2.0 / 3.0) * 0.3;
        assert!((rhs(&x) - want).abs() < 1e-12);
    }
}
