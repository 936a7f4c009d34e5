//! The full closed loop: leader, adaptive observers, plants and adaptation
//! laws, flattened into one state vector for the integrator.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::controller::{
    compute_p_and_s, control_and_adaptation, decentralized_baseline, ControlOutput, ControllerParams, FilteredError,
};
use crate::error::{Error, Result};
use crate::graph::Digraph;
use crate::leader::Exosystem;
use crate::observer::{adaptive_observer_derivative, split_estimate, ObserverParams, ObserverState};
use crate::plant::{plant_derivative, AgentModel};

/// Which feedback law drives the followers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    /// Observer-based law: uses only `(Ŝᵢ, v̂ᵢ)` in place of the leader.
    #[default]
    Distributed,
    /// Reads the leader's reference and the true disturbance state directly.
    Decentralized,
}

/// Offsets of each block in the flat state
/// `(v, Ŝ₁, v̂₁, x₁, θ̂₁, ..., Ŝ_N, v̂_N, x_N, θ̂_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateLayout {
    q: usize,
    r: usize,
    agent_offsets: Vec<usize>,
    m: Vec<usize>,
    len: usize,
}

impl StateLayout {
    pub fn new(q: usize, r: usize, m: &[usize]) -> Self {
        let mut offset = q;
        let mut agent_offsets = Vec::with_capacity(m.len());
        for &mi in m {
            agent_offsets.push(offset);
            offset += q * q + q + r + mi;
        }
        StateLayout {
            q,
            r,
            agent_offsets,
            m: m.to_vec(),
            len: offset,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn agents(&self) -> usize {
        self.m.len()
    }

    pub fn v(&self) -> Range<usize> {
        0..self.q
    }

    pub fn s_hat(&self, i: usize) -> Range<usize> {
        let o = self.agent_offsets[i];
        o..o + self.q * self.q
    }

    pub fn v_hat(&self, i: usize) -> Range<usize> {
        let o = self.s_hat(i).end;
        o..o + self.q
    }

    pub fn x(&self, i: usize) -> Range<usize> {
        let o = self.v_hat(i).end;
        o..o + self.r
    }

    pub fn theta_hat(&self, i: usize) -> Range<usize> {
        let o = self.x(i).end;
        o..o + self.m[i]
    }
}

/// Structured view of the closed-loop state (or of its derivative).
#[derive(Debug, Clone, PartialEq)]
pub struct LoopState {
    pub v: DVector<f64>,
    pub observers: Vec<ObserverState>,
    pub x: Vec<DVector<f64>>,
    pub theta_hat: Vec<DVector<f64>>,
}

impl LoopState {
    pub fn pack(&self, layout: &StateLayout) -> Vec<f64> {
        let mut out = vec![0.0; layout.len()];
        self.pack_into(layout, &mut out);
        out
    }

    pub fn pack_into(&self, layout: &StateLayout, out: &mut [f64]) {
        out[layout.v()].copy_from_slice(self.v.as_slice());
        for i in 0..layout.agents() {
            out[layout.s_hat(i)].copy_from_slice(self.observers[i].s_hat.as_slice());
            out[layout.v_hat(i)].copy_from_slice(self.observers[i].v_hat.as_slice());
            out[layout.x(i)].copy_from_slice(self.x[i].as_slice());
            out[layout.theta_hat(i)].copy_from_slice(self.theta_hat[i].as_slice());
        }
    }

    pub fn unpack(layout: &StateLayout, flat: &[f64]) -> Self {
        let q = layout.q;
        let vec = |r: Range<usize>| DVector::from_column_slice(&flat[r]);
        LoopState {
            v: vec(layout.v()),
            observers: (0..layout.agents())
                .map(|i| ObserverState {
                    s_hat: DMatrix::from_column_slice(q, q, &flat[layout.s_hat(i)]),
                    v_hat: vec(layout.v_hat(i)),
                })
                .collect(),
            x: (0..layout.agents()).map(|i| vec(layout.x(i))).collect(),
            theta_hat: (0..layout.agents()).map(|i| vec(layout.theta_hat(i))).collect(),
        }
    }
}

/// Per-follower control-law internals at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSignals {
    pub p: f64,
    pub p_dot: f64,
    pub s: f64,
    pub u: f64,
}

#[derive(Debug, Clone)]
pub struct ClosedLoop {
    exosystem: Exosystem,
    s: DMatrix<f64>,
    agents: Vec<AgentModel>,
    controllers: Vec<ControllerParams>,
    observer: ObserverParams,
    law: ControlLaw,
    layout: StateLayout,
}

impl ClosedLoop {
    pub fn new(
        exosystem: Exosystem,
        agents: Vec<AgentModel>,
        controllers: Vec<ControllerParams>,
        observer: ObserverParams,
        law: ControlLaw,
    ) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::param("agents", "at least one follower is required"));
        }
        if agents.len() != controllers.len() {
            return Err(Error::dim("controller list", agents.len(), controllers.len()));
        }
        let r = exosystem.r();
        for (i, (a, c)) in agents.iter().zip(&controllers).enumerate() {
            if a.r() != r {
                return Err(Error::dim("plant order", r, a.r()).for_agent(i + 1));
            }
            if c.r() != r {
                return Err(Error::dim("beta length + 1", r, c.r()).for_agent(i + 1));
            }
            if c.m() != a.m() {
                return Err(Error::dim("Lambda order", a.m(), c.m()).for_agent(i + 1));
            }
        }
        let m: Vec<usize> = agents.iter().map(AgentModel::m).collect();
        let layout = StateLayout::new(exosystem.q(), r, &m);
        Ok(ClosedLoop {
            s: exosystem.build_s(),
            exosystem,
            agents,
            controllers,
            observer,
            law,
            layout,
        })
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn exosystem(&self) -> &Exosystem {
        &self.exosystem
    }

    pub fn agents(&self) -> &[AgentModel] {
        &self.agents
    }

    pub fn controllers(&self) -> &[ControllerParams] {
        &self.controllers
    }

    pub fn law(&self) -> ControlLaw {
        self.law
    }

    /// Derivative of the whole loop under graph `g`, plus each follower's
    /// control signals, all evaluated at the same instant.
    pub fn evaluate(&self, t: f64, state: &LoopState, g: &Digraph) -> Result<(LoopState, Vec<AgentSignals>)> {
        let (r, n_w) = (self.exosystem.r(), self.exosystem.n_w());
        let v_dot = self.exosystem.derivative(&state.v)?;
        let obs_dot = adaptive_observer_derivative(&state.observers, g, &self.s, &state.v, &self.observer)?;
        let w = state.v.rows(r, n_w).into_owned();

        let mut x_dot = Vec::with_capacity(self.agents.len());
        let mut theta_hat_dot = Vec::with_capacity(self.agents.len());
        let mut signals = Vec::with_capacity(self.agents.len());
        for (i, model) in self.agents.iter().enumerate() {
            let tag = |e: Error| e.for_agent(i + 1);
            let params = &self.controllers[i];
            let x = &state.x[i];
            let theta_hat = &state.theta_hat[i];
            let (out, fe): (ControlOutput, FilteredError) = match self.law {
                ControlLaw::Distributed => {
                    let est = split_estimate(&state.observers[i], r, n_w).map_err(tag)?;
                    let x_hat_dot = obs_dot[i].v_hat_dot.rows(0, r).into_owned();
                    let fe = compute_p_and_s(x, &est.x_hat, &x_hat_dot, params.beta()).map_err(tag)?;
                    let out = control_and_adaptation(
                        model.regressor(),
                        model.disturbance(),
                        x,
                        t,
                        &est.w_hat,
                        fe.s,
                        fe.p_dot,
                        theta_hat,
                        params,
                    )
                    .map_err(tag)?;
                    (out, fe)
                }
                ControlLaw::Decentralized => {
                    let x0 = state.v.rows(0, r).into_owned();
                    let x0_dot = v_dot.rows(0, r).into_owned();
                    decentralized_baseline(
                        model.regressor(),
                        model.disturbance(),
                        x,
                        t,
                        &x0,
                        &x0_dot,
                        &w,
                        theta_hat,
                        params,
                    )
                    .map_err(tag)?
                }
            };
            x_dot.push(plant_derivative(model, x, out.u, &w, t).map_err(tag)?);
            theta_hat_dot.push(out.theta_hat_dot);
            signals.push(AgentSignals {
                p: fe.p,
                p_dot: fe.p_dot,
                s: fe.s,
                u: out.u,
            });
        }

        let derivative = LoopState {
            v: v_dot,
            observers: obs_dot
                .into_iter()
                .map(|d| ObserverState {
                    s_hat: d.s_hat_dot,
                    v_hat: d.v_hat_dot,
                })
                .collect(),
            x: x_dot,
            theta_hat: theta_hat_dot,
        };
        Ok((derivative, signals))
    }

    /// Flat-vector form of [`ClosedLoop::evaluate`] for the integrator.
    pub fn derivative(&self, t: f64, y: &[f64], g: &Digraph, dy: &mut [f64]) -> Result<()> {
        let state = LoopState::unpack(&self.layout, y);
        let (d, _) = self.evaluate(t, &state, g)?;
        d.pack_into(&self.layout, dy);
        Ok(())
    }
}
