//! Post-run diagnostics computed from a [`TrajectoryLog`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{GraphFamily, SwitchingSchedule};
use crate::leader::companion;
use crate::observer::{coupling_terms, matrix_error_derivative};
use crate::sim::closed_loop::ControlLaw;
use crate::sim::config::SimConfig;
use crate::sim::integrator::{rk4_step, subdivide};
use crate::sim::log::TrajectoryLog;

/// Norms at or below this value are treated as zero by [`fit_rate`].
pub const FIT_FLOOR: f64 = 1e-12;
pub const MIN_FIT_SAMPLES: usize = 10;

/// `V = ½ Σᵢ (sᵢ² + θ̃ᵢᵀ Λᵢ θ̃ᵢ)` at every logged point.
pub fn compute_v(log: &TrajectoryLog, config: &SimConfig) -> Vec<f64> {
    log.records
        .iter()
        .map(|rec| {
            rec.agents
                .iter()
                .zip(&config.agents)
                .zip(&config.controllers)
                .map(|((a, model), params)| {
                    let tt = &a.theta_hat - model.theta();
                    a.s * a.s + tt.dot(&(params.lambda() * &tt))
                })
                .sum::<f64>()
                * 0.5
        })
        .collect()
}

/// Least-squares exponential rate over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// Decay rate: the negated slope of `log‖·‖` against `t`.
    pub lambda: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fits `log‖·‖ ≈ c − λ t` to the samples with `t ∈ [a, b]` whose norm is
/// above [`FIT_FLOOR`].
pub fn fit_rate(times: &[f64], norms: &[f64], window: (f64, f64)) -> Result<RateFit> {
    if times.len() != norms.len() {
        return Err(Error::dim("fit samples", times.len(), norms.len()));
    }
    let (a, b) = window;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|&(&t, &y)| t >= a && t <= b && y.is_finite() && y > FIT_FLOOR)
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            found: pts.len(),
            required: MIN_FIT_SAMPLES,
        });
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        let (dt, dy) = (t - t_mean, y - y_mean);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(Error::param("window", "samples share a single time"));
    }
    let slope = sty / stt;
    let ss_res = (syy - slope * sty).max(0.0);
    // log-values equal up to rounding count as an exact (flat) fit
    let flat = syy <= n * (16.0 * f64::EPSILON * (1.0 + y_mean.abs())).powi(2);
    let r_squared = if flat {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        lambda: if flat || slope == 0.0 { 0.0 } else { -slope },
        r_squared,
        window,
        samples: pts.len(),
    })
}

/// `max_t |‖v(t)‖ − ‖v(0)‖|`.
pub fn leader_norm_drift(log: &TrajectoryLog) -> f64 {
    let Some(first) = log.records.first() else {
        return 0.0;
    };
    let n0 = first.v.norm();
    log.records.iter().map(|r| (r.v.norm() - n0).abs()).fold(0.0, f64::max)
}

/// Largest residual of `x_r + Σ βⱼ x_{r−j} = s + x̂_r + Σ βⱼ x̂_{r−j}` over
/// every logged point and follower. For the decentralized law the leader's
/// `x₀` plays the role of `x̂`.
pub fn identity_residual_max(log: &TrajectoryLog, config: &SimConfig) -> f64 {
    let r = config.exosystem.r();
    let mut worst: f64 = 0.0;
    for rec in &log.records {
        let x0 = rec.x0(r);
        for (a, params) in rec.agents.iter().zip(&config.controllers) {
            let x_hat = match log.law {
                ControlLaw::Distributed => a.v_hat.rows(0, r).into_owned(),
                ControlLaw::Decentralized => x0.clone(),
            };
            worst = worst.max(crate::controller::filtered_identity_residual(
                &a.x,
                &x_hat,
                a.s,
                params.beta(),
            ));
        }
    }
    worst
}

/// One follower's `zᵢ = (x_s − x̂_s)_{s<r}` and the finite-difference residual
/// of `żᵢ = A zᵢ + ūᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSeries {
    pub z: Vec<DVector<f64>>,
    /// `None` at the ends of the log and where the centered stencil spans a
    /// switching instant.
    pub residual: Vec<Option<f64>>,
}

impl ZSeries {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Computes `zᵢ` and the residual `‖żᵢ − (A zᵢ + ūᵢ)‖` with
/// `A = companion(−β_{r−1}, …, −β₁)` and
/// `ūᵢ = (−x̃_d1, …, −x̃_d(r−2), sᵢ − x̃_d(r−1))`. The relation assumes the
/// fixed rows of each `Ŝᵢ` keep their companion scaffold.
pub fn z_diagnostics(log: &TrajectoryLog, config: &SimConfig) -> Result<Vec<ZSeries>> {
    let r = config.exosystem.r();
    if r < 2 {
        return Err(Error::param("r", "z-coordinates need r >= 2"));
    }
    let n = config.agent_count();
    let mu2 = config.observer.mu2;
    let a_mats: Vec<DMatrix<f64>> = config
        .controllers
        .iter()
        .map(|c| companion(&c.beta().iter().rev().map(|b| -b).collect::<Vec<_>>()))
        .collect();
    let z_at = |k: usize, i: usize| -> DVector<f64> {
        let a = &log.records[k].agents[i];
        (a.x.rows(0, r - 1) - a.v_hat.rows(0, r - 1)).into_owned()
    };

    let len = log.len();
    let mut out: Vec<ZSeries> = (0..n)
        .map(|i| ZSeries {
            z: (0..len).map(|k| z_at(k, i)).collect(),
            residual: vec![None; len],
        })
        .collect();
    for k in 1..len.saturating_sub(1) {
        let rec = &log.records[k];
        if log.is_switch(rec.t) {
            continue;
        }
        let g = config
            .family
            .get(rec.sigma)
            .ok_or_else(|| Error::param("sigma", format!("graph {} not in family", rec.sigma)))?;
        let v_hats: Vec<DVector<f64>> = rec.agents.iter().map(|a| a.v_hat.clone()).collect();
        let coupling = coupling_terms(&v_hats, g, &rec.v, r, mu2)?;
        let span = log.records[k + 1].t - log.records[k - 1].t;
        for i in 0..n {
            let series = &mut out[i];
            let z_dot = (&series.z[k + 1] - &series.z[k - 1]) / span;
            let mut u_bar = -coupling[i].rows(0, r - 1).into_owned();
            u_bar[r - 2] += rec.agents[i].s;
            let model = &a_mats[i] * &series.z[k] + u_bar;
            series.residual[k] = Some((z_dot - model).norm());
        }
    }
    Ok(out)
}

/// Integrates the matrix-estimate error `dS̃ = −μ₁ (H_σ ⊗ I) S̃` alone over the
/// schedule and returns the grid times with the stacked norm `‖S̃‖`.
pub fn simulate_matrix_error(
    family: &GraphFamily,
    schedule: &SwitchingSchedule,
    s_tilde0: &[DMatrix<f64>],
    mu1: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    schedule.check_against(family)?;
    let Some(first) = s_tilde0.first() else {
        return Err(Error::param("s_tilde0", "must not be empty"));
    };
    let shape = first.shape();
    let block = shape.0 * shape.1;
    let h_mats: Vec<DMatrix<f64>> = family.graphs().iter().map(|g| g.h_matrix()).collect::<Result<_>>()?;
    let mut y: Vec<f64> = s_tilde0.iter().flat_map(|m| m.iter().copied()).collect();
    let norm = |y: &[f64]| y.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut times = vec![0.0];
    let mut norms = vec![norm(&y)];
    let switch_times = schedule.switch_times();
    for (a, b, idx) in schedule.intervals() {
        let h = &h_mats[idx - 1];
        let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
            let mats: Vec<DMatrix<f64>> = y
                .chunks(block)
                .map(|c| DMatrix::from_column_slice(shape.0, shape.1, c))
                .collect();
            let d = matrix_error_derivative(&mats, h, mu1)?;
            for (out, m) in dy.chunks_mut(block).zip(d) {
                out.copy_from_slice(m.as_slice());
            }
            Ok(())
        };
        let (n, step) = subdivide(a, b, dt);
        for k in 0..n {
            let t = a + k as f64 * step;
            let t_next = if k + 1 == n { b } else { a + (k + 1) as f64 * step };
            y = rk4_step(&y, t, t_next - t, switch_times, &mut rhs)?;
            times.push(t_next);
            norms.push(norm(&y));
        }
    }
    Ok((times, norms))
}
