//! Classical fixed-step fourth-order Runge–Kutta over flat state vectors.

use crate::error::{Error, Result};

/// Derivative callback `f(t, y, dy)`.
pub trait Rhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl<F> Rhs for F
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy)
    }
}

/// First switching instant strictly inside `(t, t + dt)`, allowing a small
/// relative slack at both ends for steps that are meant to land on a switch.
pub fn straddled_switch(switch_times: &[f64], t: f64, dt: f64) -> Option<f64> {
    let slack = 1e-9 * dt.abs();
    let from = switch_times.partition_point(|&s| s <= t + slack);
    switch_times.get(from).copied().filter(|&s| s < t + dt - slack)
}

/// One RK4 step from `(t, y)`. Fails if a switching instant lies inside the
/// step; callers are expected to pre-split steps at switches.
pub fn rk4_step<F: Rhs>(y: &[f64], t: f64, dt: f64, switch_times: &[f64], f: &mut F) -> Result<Vec<f64>> {
    if let Some(switch_time) = straddled_switch(switch_times, t, dt) {
        return Err(Error::StepStraddlesSwitch { t, dt, switch_time });
    }
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let half = 0.5 * dt;

    f.eval(t, y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + half * k1[i];
    }
    f.eval(t + half, &tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + half * k2[i];
    }
    f.eval(t + half, &tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + dt * k3[i];
    }
    f.eval(t + dt, &tmp, &mut k4)?;

    let sixth = dt / 6.0;
    Ok((0..n)
        .map(|i| y[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]))
        .collect())
}

/// Step count and uniform step size that cover `[a, b]` with steps no longer
/// than `dt`.
pub fn subdivide(a: f64, b: f64, dt: f64) -> (usize, f64) {
    let span = b - a;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let n = ((span / dt) - 1e-9).ceil().max(1.0) as usize;
    (n, span / n as f64)
}
