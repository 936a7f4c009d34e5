//! Distributed observers for the leader. Each follower keeps an estimate
//! `v̂ᵢ` of the leader state and, in the adaptive variant, an estimate `Ŝᵢ`
//! of the leader's system matrix, both driven by neighbor differences only.
//!
//! The leader acts as virtual node 0 in every neighbor sum, contributing
//! `Ŝ₀ = S` and `v̂₀ = v`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::leader::companion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverParams {
    /// Gain of the static observer, which gives every follower the true `S`.
    pub mu0: f64,
    /// Consensus gain on `Ŝᵢ`.
    pub mu1: f64,
    /// Consensus gain on `v̂ᵢ`.
    pub mu2: f64,
}

impl ObserverParams {
    pub fn new(mu0: f64, mu1: f64, mu2: f64) -> Result<Self> {
        for (name, value) in [("mu0", mu0), ("mu1", mu1), ("mu2", mu2)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {value}")));
            }
        }
        Ok(ObserverParams { mu0, mu1, mu2 })
    }
}

/// One follower's estimate pair `(Ŝᵢ, v̂ᵢ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub s_hat: DMatrix<f64>,
    pub v_hat: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDerivative {
    pub s_hat_dot: DMatrix<f64>,
    pub v_hat_dot: DVector<f64>,
}

/// `(S̃ᵢ, ṽᵢ) = (Ŝᵢ - S, v̂ᵢ - v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateError {
    pub s_tilde: DMatrix<f64>,
    pub v_tilde: DVector<f64>,
}

impl ObserverState {
    pub fn new(s_hat: DMatrix<f64>, v_hat: DVector<f64>) -> Self {
        ObserverState { s_hat, v_hat }
    }

    /// The estimate that already equals the leader.
    pub fn exact(s: &DMatrix<f64>, v: &DVector<f64>) -> Self {
        ObserverState {
            s_hat: s.clone(),
            v_hat: v.clone(),
        }
    }

    pub fn error(&self, s: &DMatrix<f64>, v: &DVector<f64>) -> EstimateError {
        EstimateError {
            s_tilde: &self.s_hat - s,
            v_tilde: &self.v_hat - v,
        }
    }
}

/// Frobenius norm of the stacked `S̃` and Euclidean norm of the stacked `ṽ`.
pub fn stacked_error_norms(bank: &[ObserverState], s: &DMatrix<f64>, v: &DVector<f64>) -> (f64, f64) {
    let (mut ss, mut vv) = (0.0, 0.0);
    for o in bank {
        let e = o.error(s, v);
        ss += e.s_tilde.norm_squared();
        vv += e.v_tilde.norm_squared();
    }
    (ss.sqrt(), vv.sqrt())
}

fn check_bank_len(g: &Digraph, found: usize) -> Result<()> {
    if found != g.follower_count() {
        return Err(Error::dim("observer bank length", g.follower_count(), found));
    }
    Ok(())
}

fn check_vec(context: &str, agent: usize, q: usize, v: &DVector<f64>) -> Result<()> {
    if v.len() != q {
        return Err(Error::dim(context, q, v.len()).for_agent(agent));
    }
    Ok(())
}

/// `Σ_{j=0}^{N} ā_ij (zⱼ - zᵢ)` where `z₀` is the leader's value.
fn consensus_sum<T>(g: &Digraph, i: usize, leader: &T, followers: &[T], own: &T) -> T
where
    T: Clone + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::AddAssign,
    for<'a> &'a T: std::ops::Sub<&'a T, Output = T>,
{
    let mut acc = own.clone() * 0.0;
    for (j, w) in g.in_neighbors(i) {
        let zj = if j == 0 { leader } else { &followers[j - 1] };
        acc += (zj - own) * w;
    }
    acc
}

/// Right-hand side of the adaptive distributed observer:
/// `dŜᵢ = μ₁ Σ ā_ij (Ŝⱼ - Ŝᵢ)` and `dv̂ᵢ = Ŝᵢ v̂ᵢ + μ₂ Σ ā_ij (v̂ⱼ - v̂ᵢ)`.
pub fn adaptive_observer_derivative(
    bank: &[ObserverState],
    g: &Digraph,
    s: &DMatrix<f64>,
    v: &DVector<f64>,
    p: &ObserverParams,
) -> Result<Vec<ObserverDerivative>> {
    check_bank_len(g, bank.len())?;
    let q = v.len();
    if s.shape() != (q, q) {
        return Err(Error::dim("leader system matrix", q, s.nrows()));
    }
    for (i, o) in bank.iter().enumerate() {
        if o.s_hat.shape() != (q, q) {
            return Err(Error::dim("S_hat order", q, o.s_hat.nrows()).for_agent(i + 1));
        }
        check_vec("v_hat", i + 1, q, &o.v_hat)?;
    }
    let s_hats: Vec<DMatrix<f64>> = bank.iter().map(|o| o.s_hat.clone()).collect();
    let v_hats: Vec<DVector<f64>> = bank.iter().map(|o| o.v_hat.clone()).collect();
    Ok(bank
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let i = k + 1;
            let s_sum = consensus_sum(g, i, s, &s_hats, &o.s_hat);
            let v_sum = consensus_sum(g, i, v, &v_hats, &o.v_hat);
            ObserverDerivative {
                s_hat_dot: s_sum * p.mu1,
                v_hat_dot: &o.s_hat * &o.v_hat + v_sum * p.mu2,
            }
        })
        .collect())
}

/// Right-hand side of the static distributed observer, where every follower
/// uses the true `S`: `dv̂ᵢ = S v̂ᵢ + μ₀ Σ ā_ij (v̂ⱼ - v̂ᵢ)`.
pub fn static_observer_derivative(
    v_hats: &[DVector<f64>],
    g: &Digraph,
    s: &DMatrix<f64>,
    v: &DVector<f64>,
    p: &ObserverParams,
) -> Result<Vec<DVector<f64>>> {
    check_bank_len(g, v_hats.len())?;
    let q = v.len();
    if s.shape() != (q, q) {
        return Err(Error::dim("leader system matrix", q, s.nrows()));
    }
    for (i, vh) in v_hats.iter().enumerate() {
        check_vec("v_hat", i + 1, q, vh)?;
    }
    Ok(v_hats
        .iter()
        .enumerate()
        .map(|(k, vh)| s * vh + consensus_sum(g, k + 1, v, v_hats, vh) * p.mu0)
        .collect())
}

/// `dS̃ = -μ₁ (H ⊗ I_q) S̃`, the matrix-error dynamics written through the
/// follower matrix `H` instead of neighbor sums.
pub fn matrix_error_derivative(s_tilde: &[DMatrix<f64>], h: &DMatrix<f64>, mu1: f64) -> Result<Vec<DMatrix<f64>>> {
    if h.nrows() != s_tilde.len() {
        return Err(Error::dim("matrix error stack", h.nrows(), s_tilde.len()));
    }
    Ok((0..s_tilde.len())
        .map(|i| {
            let mut acc = &s_tilde[i] * 0.0;
            for (j, sj) in s_tilde.iter().enumerate() {
                let hij = h[(i, j)];
                if hij != 0.0 {
                    acc -= sj * (mu1 * hij);
                }
            }
            acc
        })
        .collect())
}

/// The block view of an observer state used by the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEstimate {
    pub x_hat: DVector<f64>,
    pub w_hat: DVector<f64>,
    pub s_a_hat: DMatrix<f64>,
    pub s_b_hat: DMatrix<f64>,
    /// Bottom row of `Ŝ_a`.
    pub alpha_hat: DVector<f64>,
}

impl SplitEstimate {
    /// Rebuilds a block-diagonal observer state from the pieces.
    pub fn reassemble(&self) -> ObserverState {
        let (r, n_w) = (self.x_hat.len(), self.w_hat.len());
        let q = r + n_w;
        let mut s_hat = DMatrix::zeros(q, q);
        s_hat.view_mut((0, 0), (r, r)).copy_from(&self.s_a_hat);
        s_hat.view_mut((r, r), (n_w, n_w)).copy_from(&self.s_b_hat);
        let v_hat = DVector::from_iterator(q, self.x_hat.iter().chain(self.w_hat.iter()).copied());
        ObserverState { s_hat, v_hat }
    }
}

/// Splits `v̂ᵢ = col(x̂ᵢ, ŵᵢ)` and the diagonal blocks of `Ŝᵢ`.
pub fn split_estimate(state: &ObserverState, r: usize, n_w: usize) -> Result<SplitEstimate> {
    let q = r + n_w;
    if state.v_hat.len() != q || state.s_hat.shape() != (q, q) {
        return Err(Error::dim("observer state for split", q, state.v_hat.len()));
    }
    let s_a_hat = state.s_hat.view((0, 0), (r, r)).into_owned();
    let alpha_hat = s_a_hat.row(r - 1).transpose();
    Ok(SplitEstimate {
        x_hat: state.v_hat.rows(0, r).into_owned(),
        w_hat: state.v_hat.rows(r, n_w).into_owned(),
        s_b_hat: state.s_hat.view((r, r), (n_w, n_w)).into_owned(),
        s_a_hat,
        alpha_hat,
    })
}

/// Per-follower coupling vectors `x̃_dsi = μ₂ Σ_{j=0}^{N} ā_ij (x̂_sj - x̂_si)`
/// for `s = 1..r`, using the reference part of each `v̂`.
pub fn coupling_terms(
    v_hats: &[DVector<f64>],
    g: &Digraph,
    v: &DVector<f64>,
    r: usize,
    mu2: f64,
) -> Result<Vec<DVector<f64>>> {
    check_bank_len(g, v_hats.len())?;
    let q = v.len();
    if r > q {
        return Err(Error::dim("reference order", q, r));
    }
    for (i, vh) in v_hats.iter().enumerate() {
        check_vec("v_hat", i + 1, q, vh)?;
    }
    let x0 = v.rows(0, r).into_owned();
    let x_hats: Vec<DVector<f64>> = v_hats.iter().map(|vh| vh.rows(0, r).into_owned()).collect();
    Ok(x_hats
        .iter()
        .enumerate()
        .map(|(k, xh)| consensus_sum(g, k + 1, &x0, &x_hats, xh) * mu2)
        .collect())
}

/// Largest deviation of `Ŝ_a`'s fixed rows from the companion scaffold
/// (superdiagonal ones, zeros elsewhere above the bottom row).
pub fn scaffold_deviation(s_hat: &DMatrix<f64>, r: usize) -> f64 {
    let scaffold = companion(&vec![0.0; r]);
    let mut worst: f64 = 0.0;
    for row in 0..r.saturating_sub(1) {
        for col in 0..r {
            worst = worst.max((s_hat[(row, col)] - scaffold[(row, col)]).abs());
        }
    }
    worst
}
