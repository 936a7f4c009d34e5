//! The distributed adaptive control law and its decentralized counterpart.
//!
//! Each follower builds the filtered error `sᵢ = x_ri - p_ri`, where `p_ri`
//! blends the top estimate `x̂_ri` with a stable polynomial of the lower-state
//! estimation errors, then applies the certainty-equivalence law
//! `uᵢ = -fᵢᵀθ̂ᵢ - dᵢ(ŵᵢ) - kᵢsᵢ + ṗ_ri` with adaptation `θ̂̇ᵢ = Λᵢ⁻¹ fᵢ sᵢ`.

use nalgebra::DMatrix;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::leader::companion;
use crate::plant::{Disturbance, Regressor};

/// Smallest feedback gain for which the Lyapunov decrease bound holds.
pub const MIN_FEEDBACK_GAIN: f64 = 1.25;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    beta: Vec<f64>,
    k: f64,
    lambda: DMatrix<f64>,
    lambda_inv: DMatrix<f64>,
}

impl ControllerParams {
    /// Validates `beta` (positive, Hurwitz), `k` (at least
    /// [`MIN_FEEDBACK_GAIN`] unless `allow_small_k`) and `lambda` (symmetric
    /// positive definite).
    pub fn new(beta: Vec<f64>, k: f64, lambda: DMatrix<f64>, allow_small_k: bool) -> Result<Self> {
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::param("beta", format!("coefficients must be positive, got {b}")));
        }
        if !hurwitz_check(&beta)? {
            return Err(Error::param("beta", "filter polynomial is not Hurwitz"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::param("k", format!("must be positive, got {k}")));
        }
        if k < MIN_FEEDBACK_GAIN && !allow_small_k {
            return Err(Error::param(
                "k",
                format!("{k} is below {MIN_FEEDBACK_GAIN}; set allow_small_k to override"),
            ));
        }
        if !lambda.is_square() {
            return Err(Error::dim("Lambda columns", lambda.nrows(), lambda.ncols()));
        }
        let scale = lambda.amax().max(1.0);
        if (&lambda - lambda.transpose()).amax() > 1e-12 * scale {
            return Err(Error::param("Lambda", "must be symmetric"));
        }
        let lambda_inv = lambda.clone().cholesky().ok_or(Error::SingularGain)?.inverse();
        Ok(ControllerParams {
            beta,
            k,
            lambda,
            lambda_inv,
        })
    }

    /// Identity adaptation gain of size `m`.
    pub fn with_identity_gain(beta: Vec<f64>, k: f64, m: usize) -> Result<Self> {
        Self::new(beta, k, DMatrix::identity(m, m), false)
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }

    pub fn lambda_inv(&self) -> &DMatrix<f64> {
        &self.lambda_inv
    }

    /// Plant order these parameters are built for.
    pub fn r(&self) -> usize {
        self.beta.len() + 1
    }

    /// Regressor dimension `m`.
    pub fn m(&self) -> usize {
        self.lambda.nrows()
    }

    /// The Hurwitz matrix of the lower-state error dynamics: companion form
    /// with bottom row `(-β_{r-1}, ..., -β₁)`.
    pub fn error_dynamics_matrix(&self) -> DMatrix<f64> {
        let bottom: Vec<f64> = self.beta.iter().rev().map(|b| -b).collect();
        companion(&bottom)
    }
}

/// Routh–Hurwitz test for `λⁿ + β₁λⁿ⁻¹ + ... + βₙ`. Degree zero is
/// vacuously stable.
pub fn hurwitz_check(beta: &[f64]) -> Result<bool> {
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::NonFinite("Hurwitz coefficients".into()));
    }
    let n = beta.len();
    if n == 0 {
        return Ok(true);
    }
    let coeffs: Vec<f64> = std::iter::once(1.0).chain(beta.iter().copied()).collect();
    let width = n / 2 + 1;
    let row = |offset: usize| -> Vec<f64> {
        (0..width)
            .map(|j| coeffs.get(offset + 2 * j).copied().unwrap_or(0.0))
            .collect()
    };
    let mut prev = row(0);
    let mut cur = row(1);
    for _ in 1..n {
        if !(cur[0] > 0.0) {
            return Ok(false);
        }
        let next: Vec<f64> = (0..width)
            .map(|j| {
                let a = prev.get(j + 1).copied().unwrap_or(0.0);
                let b = cur.get(j + 1).copied().unwrap_or(0.0);
                (cur[0] * a - prev[0] * b) / cur[0]
            })
            .collect();
        prev = std::mem::replace(&mut cur, next);
    }
    Ok(cur[0] > 0.0)
}

/// `p_ri`, its time derivative, and `sᵢ = x_ri - p_ri`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredError {
    pub p: f64,
    pub p_dot: f64,
    pub s: f64,
}

/// Builds `p_ri = x̂_r - Σⱼ βⱼ (x_{r-j} - x̂_{r-j})` and
/// `ṗ_ri = x̂̇_r - Σⱼ βⱼ (x_{r-j+1} - x̂̇_{r-j})`, where `x_hat_dot` must be
/// the observer derivative at the same instant.
pub fn compute_p_and_s(
    x: &DVector<f64>,
    x_hat: &DVector<f64>,
    x_hat_dot: &DVector<f64>,
    beta: &[f64],
) -> Result<FilteredError> {
    let r = beta.len() + 1;
    for (name, v) in [("x", x), ("x_hat", x_hat), ("x_hat_dot", x_hat_dot)] {
        if v.len() != r {
            return Err(Error::dim(name, r, v.len()));
        }
    }
    let mut p = x_hat[r - 1];
    let mut p_dot = x_hat_dot[r - 1];
    for (j, &b) in beta.iter().enumerate().map(|(k, b)| (k + 1, b)) {
        let lower = r - 1 - j;
        p -= b * (x[lower] - x_hat[lower]);
        p_dot -= b * (x[lower + 1] - x_hat_dot[lower]);
    }
    Ok(FilteredError {
        p,
        p_dot,
        s: x[r - 1] - p,
    })
}

/// Residual of `x_r + Σ βⱼ x_{r-j} = s + x̂_r + Σ βⱼ x̂_{r-j}`, which holds
/// identically by construction of `s`.
pub fn filtered_identity_residual(x: &DVector<f64>, x_hat: &DVector<f64>, s: f64, beta: &[f64]) -> f64 {
    let r = beta.len() + 1;
    let mut lhs = x[r - 1];
    let mut rhs = s + x_hat[r - 1];
    for (j, &b) in beta.iter().enumerate().map(|(k, b)| (k + 1, b)) {
        lhs += b * x[r - 1 - j];
        rhs += b * x_hat[r - 1 - j];
    }
    (lhs - rhs).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: f64,
    pub theta_hat_dot: DVector<f64>,
}

/// `u = -fᵀθ̂ - d(ŵ) - k s + ṗ` and `θ̂̇ = Λ⁻¹ f s`. The disturbance is
/// evaluated at the estimate `w_hat`.
#[allow(clippy::too_many_arguments)]
pub fn control_and_adaptation(
    regressor: &dyn Regressor,
    disturbance: &dyn Disturbance,
    x: &DVector<f64>,
    t: f64,
    w_hat: &DVector<f64>,
    s: f64,
    p_dot: f64,
    theta_hat: &DVector<f64>,
    params: &ControllerParams,
) -> Result<ControlOutput> {
    let f = regressor.eval(x.as_slice(), t);
    if f.len() != theta_hat.len() || f.len() != params.m() {
        return Err(Error::dim("theta_hat", f.len(), theta_hat.len()));
    }
    let u = -f.dot(theta_hat) - disturbance.eval(w_hat.as_slice()) - params.k * s + p_dot;
    let theta_hat_dot = &params.lambda_inv * f * s;
    Ok(ControlOutput { u, theta_hat_dot })
}

/// The decentralized law, which reads the leader's reference `x0`, its
/// derivative and the true disturbance state `w` directly.
#[allow(clippy::too_many_arguments)]
pub fn decentralized_baseline(
    regressor: &dyn Regressor,
    disturbance: &dyn Disturbance,
    x: &DVector<f64>,
    t: f64,
    x0: &DVector<f64>,
    x0_dot: &DVector<f64>,
    w: &DVector<f64>,
    theta_hat: &DVector<f64>,
    params: &ControllerParams,
) -> Result<(ControlOutput, FilteredError)> {
    let fe = compute_p_and_s(x, x0, x0_dot, &params.beta)?;
    let out = control_and_adaptation(regressor, disturbance, x, t, w, fe.s, fe.p_dot, theta_hat, params)?;
    Ok((out, fe))
}
