//! Time-indexed record of a closed-loop run.

use nalgebra::DVector;

use crate::sim::closed_loop::ControlLaw;

/// One follower's logged values at a grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRecord {
    pub x: DVector<f64>,
    pub v_hat: DVector<f64>,
    /// Frobenius norm of `Ŝᵢ − S`.
    pub s_tilde_norm: f64,
    pub theta_hat: DVector<f64>,
    pub p: f64,
    pub p_dot: f64,
    pub s: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// 1-based index of the graph active on `[t, next switch)`.
    pub sigma: usize,
    pub v: DVector<f64>,
    pub agents: Vec<AgentRecord>,
}

impl StepRecord {
    /// `x₀ = col(v₁..v_r)`.
    pub fn x0(&self, r: usize) -> DVector<f64> {
        self.v.rows(0, r).into_owned()
    }

    /// `max_i ‖v̂ᵢ − v‖`.
    pub fn max_estimation_error(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| (&a.v_hat - &self.v).norm())
            .fold(0.0, f64::max)
    }

    /// `max_i ‖xᵢ − x₀‖`.
    pub fn max_tracking_error(&self) -> f64 {
        let r = self.agents.first().map_or(0, |a| a.x.len());
        let x0 = self.x0(r);
        self.agents.iter().map(|a| (&a.x - &x0).norm()).fold(0.0, f64::max)
    }

    /// Stacked `‖col(ṽ₁, …, ṽ_N)‖`.
    pub fn stacked_v_error(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| (&a.v_hat - &self.v).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Stacked `‖col(S̃₁, …, S̃_N)‖`.
    pub fn stacked_s_error(&self) -> f64 {
        self.agents
            .iter()
            .map(|a| a.s_tilde_norm * a.s_tilde_norm)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub law: ControlLaw,
    /// Switching instants inside the horizon, starting at 0.
    pub switch_times: Vec<f64>,
    pub records: Vec<StepRecord>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn agent_count(&self) -> usize {
        self.records.first().map_or(0, |r| r.agents.len())
    }

    /// Applies `f` to every record.
    pub fn series(&self, f: impl Fn(&StepRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    /// Records whose time lies in `[a, b]`.
    pub fn window(&self, a: f64, b: f64) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(move |r| r.t >= a && r.t <= b)
    }

    /// True when `t` is a switching instant other than the initial time.
    pub fn is_switch(&self, t: f64) -> bool {
        self.switch_times[1.min(self.switch_times.len())..]
            .binary_search_by(|s| s.total_cmp(&t))
            .is_ok()
    }
}
