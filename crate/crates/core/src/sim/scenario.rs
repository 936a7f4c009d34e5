//! The built-in van der Pol fleet example and variants of it used for
//! verification.

use nalgebra::DVector;

use crate::graph::{Digraph, GraphFamily};
use crate::observer::ObserverState;
use crate::sim::config::{
    AgentSpec, ConfigFile, ControllerSpec, ControllerSpecs, ExosystemSpec, ExprSpec, GraphSpec, InitSpec, ObserverSpec,
    RegressorSpec, ScheduleSpec, SimConfig, SimSpec,
};

/// Period of the default switching cycle.
pub const DEFAULT_PERIOD: f64 = 1.0;

/// The default chain edges `0→1`, `1→2`, `2→3`, `3→4`, one per graph.
const CHAIN: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 4)];

fn graph_specs() -> Vec<GraphSpec> {
    CHAIN
        .iter()
        .map(|&(from, to)| GraphSpec {
            nodes: Some(5),
            edges: Some(vec![vec![from as f64, to as f64]]),
            ..Default::default()
        })
        .collect()
}

/// Four single-edge digraphs over nodes `0..=4`; none is connected on its
/// own, and their union is the chain rooted at the leader.
pub fn default_family() -> GraphFamily {
    GraphFamily::new(
        CHAIN
            .iter()
            .map(|&e| Digraph::from_unit_edges(5, &[e]).expect("valid edge"))
            .collect(),
    )
    .expect("uniform node count")
}

/// Four van der Pol followers tracking a unit-frequency reference under a
/// half-frequency disturbance, with the default topology cycled once per
/// second.
pub fn example_config() -> ConfigFile {
    let agent = |theta: [f64; 2], d: &str| AgentSpec {
        r: Some(2),
        theta: theta.to_vec(),
        regressor: RegressorSpec::VanDerPol,
        disturbance: Some(ExprSpec::Expr(d.into())),
    };
    ConfigFile {
        exosystem: ExosystemSpec {
            r: Some(2),
            alpha: Some(vec![-1.0, 0.0]),
            sb: Some(vec![vec![0.0, 0.5], vec![-0.5, 0.0]]),
            frequencies: None,
            v0: vec![-2.0, 1.0, -1.0, 3.0],
        },
        agents: vec![
            agent([4.0, 5.0], "w1^2*w2^2"),
            agent([3.0, 1.0], "w1*w2^3"),
            agent([2.0, 5.0], "w1^3 + w1*w2"),
            agent([5.0, 3.0], "w2^4"),
        ],
        graphs: graph_specs(),
        schedule: ScheduleSpec::Periodic {
            period: DEFAULT_PERIOD,
            cycle: vec![1, 2, 3, 4],
        },
        observer: ObserverSpec {
            mu0: None,
            mu1: 3.0,
            mu2: 12.0,
        },
        controller: ControllerSpecs::Shared(ControllerSpec {
            beta: vec![1.0],
            k: 3.0,
            lambda: None,
            allow_small_k: false,
        }),
        init: InitSpec {
            x: vec![vec![1.0, -4.0], vec![-2.0, 3.0], vec![3.0, 1.0], vec![-5.0, 2.0]],
            vhat: vec![
                vec![1.0, -2.0, 2.0, 1.0],
                vec![-5.0, 4.0, 1.0, 5.0],
                vec![0.0, 2.0, -4.0, 3.0],
                vec![-3.0, 1.0, -2.0, 4.0],
            ],
            s_hat: None,
            theta_hat: None,
        },
        sim: SimSpec::default(),
    }
}

pub fn example_sim_config() -> SimConfig {
    SimConfig::from_file(&example_config()).expect("built-in config is valid")
}

/// Observers start at the truth: `v̂ᵢ(0) = v(0)` and `Ŝᵢ(0) = S`.
pub fn with_truth_observers(mut cfg: SimConfig) -> SimConfig {
    let s = cfg.s();
    for obs in &mut cfg.init.observers {
        *obs = ObserverState::exact(&s, &cfg.init.v);
    }
    cfg
}

/// Observers, plants and parameter estimates all start at the truth, so the
/// whole loop sits on its zero-error trajectory.
pub fn fully_truth_initialized(cfg: SimConfig) -> SimConfig {
    let mut cfg = with_truth_observers(cfg);
    let r = cfg.exosystem.r();
    let x0: DVector<f64> = cfg.init.v.rows(0, r).into_owned();
    for x in &mut cfg.init.x {
        *x = x0.clone();
    }
    cfg.init.theta_hat = cfg.agents.iter().map(|a| a.theta().clone()).collect();
    cfg
}

/// Horizon of [`never_connected_config`]. Without the leader's information
/// the estimates drift as ramps, the regressor grows like `x₁²x₂`, and the
/// adaptation loop becomes too stiff for fixed steps of `1e-3` beyond about
/// `t = 15`.
pub const NEGATIVE_CONTROL_HORIZON: f64 = 10.0;

/// The example with a single edgeless graph held forever, run over
/// [`NEGATIVE_CONTROL_HORIZON`]. Assumption checks are waived so the run
/// proceeds.
pub fn never_connected_config() -> SimConfig {
    let mut file = example_config();
    file.graphs = vec![GraphSpec {
        nodes: Some(5),
        edges: Some(vec![]),
        ..Default::default()
    }];
    file.schedule = ScheduleSpec::Periodic {
        period: DEFAULT_PERIOD,
        cycle: vec![1],
    };
    file.sim.waive_assumptions = true;
    file.sim.horizon = NEGATIVE_CONTROL_HORIZON;
    SimConfig::from_file(&file).expect("built-in config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::default_s_hat;

    #[test]
    fn default_family_matches_config_graphs() {
        let cfg = example_sim_config();
        assert_eq!(cfg.family.graphs(), default_family().graphs());
        for g in default_family().graphs() {
            assert_eq!(g.edge_count(), 1);
            assert!(!g.has_spanning_tree_from(0));
        }
    }

    #[test]
    fn example_defaults() {
        let cfg = example_sim_config();
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.horizon, 100.0);
        assert_eq!(cfg.schedule.dwell(), 0.25);
        assert_eq!(cfg.observer.mu1, 3.0);
        assert_eq!(cfg.observer.mu2, 12.0);
        for obs in &cfg.init.observers {
            assert_eq!(obs.s_hat, default_s_hat(2, 2));
        }
        assert!(cfg.init.theta_hat.iter().all(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn truth_initialization() {
        let cfg = fully_truth_initialized(example_sim_config());
        let s = cfg.s();
        for (i, obs) in cfg.init.observers.iter().enumerate() {
            assert_eq!(obs.s_hat, s);
            assert_eq!(obs.v_hat, cfg.init.v);
            assert_eq!(cfg.init.x[i].as_slice(), &[-2.0, 1.0]);
            assert_eq!(&cfg.init.theta_hat[i], cfg.agents[i].theta());
        }
    }
}
