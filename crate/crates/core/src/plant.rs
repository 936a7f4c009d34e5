//! Follower dynamics: an order-`r` integrator chain whose top state obeys
//! `ẋ_r = fᵀ(x, t) θ + d(w) + u`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::expr::Polynomial;

/// Known regressor `f(x, t)`; must be locally Lipschitz in `x`.
pub trait Regressor: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], t: f64) -> DVector<f64>;
}

/// Disturbance `d(w)`; must be continuously differentiable.
pub trait Disturbance: fmt::Debug + Send + Sync {
    fn eval(&self, w: &[f64]) -> f64;
}

/// `f(x) = col(-x₁, x₂(1 - x₁²))`.
#[derive(Debug, Clone, Copy, Default)]
pub struct VanDerPol;

impl Regressor for VanDerPol {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], _t: f64) -> DVector<f64> {
        DVector::from_vec(vec![-x[0], x[1] * (1.0 - x[0] * x[0])])
    }
}

/// One polynomial in `x1..xr, t` per regressor component.
#[derive(Debug, Clone)]
pub struct PolynomialRegressor {
    components: Vec<Polynomial>,
}

impl PolynomialRegressor {
    pub fn new(components: Vec<Polynomial>) -> Self {
        PolynomialRegressor { components }
    }

    pub fn parse<S: AsRef<str>>(components: &[S]) -> Result<Self> {
        components
            .iter()
            .map(|c| Polynomial::parse(c.as_ref(), 'x', true))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    /// Number of state components the expressions reference.
    pub fn arity(&self) -> usize {
        self.components.iter().map(Polynomial::arity).max().unwrap_or(0)
    }
}

impl Regressor for PolynomialRegressor {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, x: &[f64], t: f64) -> DVector<f64> {
        DVector::from_iterator(self.components.len(), self.components.iter().map(|p| p.eval(x, t)))
    }
}

impl Disturbance for Polynomial {
    fn eval(&self, w: &[f64]) -> f64 {
        Polynomial::eval(self, w, 0.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoDisturbance;

impl Disturbance for NoDisturbance {
    fn eval(&self, _w: &[f64]) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct AgentModel {
    r: usize,
    regressor: Arc<dyn Regressor>,
    theta: DVector<f64>,
    disturbance: Arc<dyn Disturbance>,
}

impl AgentModel {
    pub fn new(
        r: usize,
        regressor: Arc<dyn Regressor>,
        theta: DVector<f64>,
        disturbance: Arc<dyn Disturbance>,
    ) -> Result<Self> {
        if r == 0 {
            return Err(Error::param("r", "plant order must be at least 1"));
        }
        if theta.len() != regressor.dim() {
            return Err(Error::dim("theta", regressor.dim(), theta.len()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        Ok(AgentModel {
            r,
            regressor,
            theta,
            disturbance,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Regressor dimension `m`.
    pub fn m(&self) -> usize {
        self.theta.len()
    }

    pub fn regressor(&self) -> &dyn Regressor {
        self.regressor.as_ref()
    }

    pub fn disturbance(&self) -> &dyn Disturbance {
        self.disturbance.as_ref()
    }

    /// The true parameter. Reserved for the plant itself and for
    /// diagnostics; the control law never sees it.
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn with_theta(&self, theta: DVector<f64>) -> Result<Self> {
        Self::new(self.r, self.regressor.clone(), theta, self.disturbance.clone())
    }
}

/// `ẋ_s = x_{s+1}` for `s < r`, and `ẋ_r = fᵀθ + d(w) + u`.
pub fn plant_derivative(
    model: &AgentModel,
    x: &DVector<f64>,
    u: f64,
    w: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    if x.len() != model.r {
        return Err(Error::dim("plant state", model.r, x.len()));
    }
    if !u.is_finite() || !t.is_finite() || x.iter().chain(w.iter()).any(|e| !e.is_finite()) {
        return Err(Error::NonFinite("plant input".into()));
    }
    let r = model.r;
    let mut dx = DVector::zeros(r);
    for s in 0..r - 1 {
        dx[s] = x[s + 1];
    }
    let f = model.regressor.eval(x.as_slice(), t);
    dx[r - 1] = f.dot(&model.theta) + model.disturbance.eval(w.as_slice()) + u;
    Ok(dx)
}

/// The four van der Pol followers with their parameters and disturbances.
pub fn van_der_pol_fleet() -> Vec<AgentModel> {
    let specs: [([f64; 2], &str); 4] = [
        ([4.0, 5.0], "w1^2*w2^2"),
        ([3.0, 1.0], "w1*w2^3"),
        ([2.0, 5.0], "w1^3 + w1*w2"),
        ([5.0, 3.0], "w2^4"),
    ];
    specs
        .iter()
        .map(|(theta, d)| {
            let d = Polynomial::parse(d, 'w', false).expect("built-in disturbance");
            AgentModel::new(2, Arc::new(VanDerPol), DVector::from_column_slice(theta), Arc::new(d))
                .expect("built-in model")
        })
        .collect()
}
