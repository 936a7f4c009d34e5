//! Closed-loop assembly, integration, diagnostics and output.

pub mod closed_loop;
pub mod config;
pub mod diagnostics;
pub mod integrator;
pub mod log;
pub mod output;
pub mod scenario;

use crate::error::{Error, Result};
use crate::graph::{check_jointly_connected, Digraph};
use closed_loop::{AgentSignals, ClosedLoop, LoopState};
use config::{ScheduleSpec, SimConfig};
use integrator::{rk4_step, subdivide};
use log::{AgentRecord, StepRecord, TrajectoryLog};

pub use closed_loop::ControlLaw;
pub use config::periodic_schedule;

/// Verifies the leader-spectrum and joint-connectivity assumptions for
/// `config`. For periodic schedules the connectivity check covers at least
/// two full windows so that short horizons are still judged on the pattern.
pub fn check_assumptions(config: &SimConfig) -> Result<()> {
    let report = config.exosystem.check_assumption1(config.spectrum_tol)?;
    if !report.satisfied {
        return Err(Error::AssumptionViolated(
            "leader eigenvalues must be distinct and on the imaginary axis".into(),
        ));
    }
    let epsilon = config.connectivity_window();
    let span = match config.schedule {
        ScheduleSpec::Periodic { .. } => config.horizon.max(2.0 * epsilon),
        // past its last switch an explicit schedule holds one graph forever,
        // so only the simulated span is meaningful
        ScheduleSpec::Explicit { .. } => config.horizon,
    };
    let schedule = config.schedule.materialize(span)?;
    let joint = check_jointly_connected(&config.family, &schedule, epsilon)?;
    if !joint.connected {
        return Err(Error::AssumptionViolated(format!(
            "switching graph is not jointly connected within windows of length {epsilon}"
        )));
    }
    Ok(())
}

fn closed_loop(config: &SimConfig) -> Result<ClosedLoop> {
    ClosedLoop::new(
        config.exosystem.clone(),
        config.agents.clone(),
        config.controllers.clone(),
        config.observer,
        config.law,
    )
}

fn initial_state(config: &SimConfig) -> LoopState {
    LoopState {
        v: config.init.v.clone(),
        observers: config.init.observers.clone(),
        x: config.init.x.clone(),
        theta_hat: config.init.theta_hat.clone(),
    }
}

fn record(cl: &ClosedLoop, t: f64, sigma: usize, state: LoopState, signals: &[AgentSignals]) -> StepRecord {
    let s = cl.s();
    let agents = state
        .observers
        .into_iter()
        .zip(state.x)
        .zip(state.theta_hat)
        .zip(signals)
        .map(|(((obs, x), theta_hat), sig)| AgentRecord {
            s_tilde_norm: (&obs.s_hat - s).norm(),
            x,
            v_hat: obs.v_hat,
            theta_hat,
            p: sig.p,
            p_dot: sig.p_dot,
            s: sig.s,
            u: sig.u,
        })
        .collect();
    StepRecord {
        t,
        sigma,
        v: state.v,
        agents,
    }
}

fn as_blowup(err: Error, t: f64) -> Error {
    fn non_finite(e: &Error) -> bool {
        match e {
            Error::NonFinite(_) => true,
            Error::Agent { source, .. } => non_finite(source),
            _ => false,
        }
    }
    if non_finite(&err) {
        Error::BlowUp { t }
    } else {
        err
    }
}

/// Integrates the closed loop over `[0, T]`.
///
/// Every switching instant is a grid point; inside each dwell interval the
/// step is the largest uniform size not exceeding `dt`. Every step is
/// logged, including the initial state.
pub fn run(config: &SimConfig) -> Result<TrajectoryLog> {
    config.validate()?;
    let schedule = config.switching_schedule()?;
    schedule.check_against(&config.family)?;
    if !config.waive_assumptions {
        check_assumptions(config)?;
    }
    let cl = closed_loop(config)?;
    let layout = cl.layout().clone();
    let graph = |idx: usize| -> &Digraph { config.family.get(idx).expect("schedule checked against family") };
    let switch_times = schedule.switch_times().to_vec();

    let mut y = initial_state(config).pack(&layout);
    let mut records = Vec::with_capacity((config.horizon / config.dt).ceil() as usize + switch_times.len() + 1);

    let log_point = |t: f64, y: &[f64], records: &mut Vec<StepRecord>| -> Result<()> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t });
        }
        let sigma = schedule.index_at(t);
        let state = LoopState::unpack(&layout, y);
        let (_, signals) = cl.evaluate(t, &state, graph(sigma)).map_err(|e| as_blowup(e, t))?;
        if signals.iter().any(|s| !(s.u.is_finite() && s.s.is_finite())) {
            return Err(Error::BlowUp { t });
        }
        records.push(record(&cl, t, sigma, state, &signals));
        Ok(())
    };

    log_point(0.0, &y, &mut records)?;
    for (a, b, idx) in schedule.intervals() {
        let b = b.min(config.horizon);
        let (n, h) = subdivide(a, b, config.dt);
        let g = graph(idx);
        let mut rhs = |t: f64, y: &[f64], dy: &mut [f64]| cl.derivative(t, y, g, dy);
        for k in 0..n {
            let t = a + k as f64 * h;
            let t_next = if k + 1 == n { b } else { a + (k + 1) as f64 * h };
            y = rk4_step(&y, t, t_next - t, &switch_times, &mut rhs).map_err(|e| as_blowup(e, t_next))?;
            log_point(t_next, &y, &mut records)?;
        }
    }

    Ok(TrajectoryLog {
        law: config.law,
        switch_times,
        records,
    })
}

/// Runs independent configurations in parallel; results keep input order.
pub fn run_many(configs: &[SimConfig]) -> Vec<Result<TrajectoryLog>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|c| scope.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{example_sim_config, never_connected_config};

    fn short(horizon: f64) -> SimConfig {
        let mut cfg = example_sim_config();
        cfg.horizon = horizon;
        cfg
    }

    #[test]
    fn zero_horizon_logs_only_initial_record() {
        let log = run(&short(0.0)).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log.records[0].t, 0.0);
        assert_eq!(log.records[0].sigma, 1);
    }

    #[test]
    fn switches_are_grid_points_and_steps_never_straddle() {
        let log = run(&short(2.0)).unwrap();
        let times = log.times();
        assert_eq!(*times.last().unwrap(), 2.0);
        for s in &log.switch_times {
            assert!(times.contains(s), "switch {s} missing from grid");
        }
        for w in times.windows(2) {
            assert!(w[1] > w[0]);
            assert!(w[1] - w[0] <= 1e-3 + 1e-15);
            assert!(integrator::straddled_switch(&log.switch_times, w[0], w[1] - w[0]).is_none());
        }
        assert_eq!(log.len(), 2001);
        assert_eq!(log.records[300].sigma, 2);
    }

    #[test]
    fn deterministic() {
        let a = run(&short(0.5)).unwrap();
        let b = run(&short(0.5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn run_many_matches_sequential() {
        let cfgs = vec![short(0.3), short(0.6)];
        let par = run_many(&cfgs);
        for (c, p) in cfgs.iter().zip(par) {
            assert_eq!(run(c).unwrap(), p.unwrap());
        }
    }

    #[test]
    fn assumption_checks_gate_the_run() {
        let mut cfg = never_connected_config();
        cfg.waive_assumptions = false;
        assert!(matches!(run(&cfg), Err(Error::AssumptionViolated(_))));
        cfg.waive_assumptions = true;
        cfg.horizon = 0.1;
        assert!(run(&cfg).is_ok());

        let mut cfg = short(0.1);
        cfg.exosystem = crate::leader::Exosystem::new(vec![1.0, 0.0], cfg.exosystem.s_b().clone()).unwrap();
        assert!(matches!(run(&cfg), Err(Error::AssumptionViolated(_))));
    }

    #[test]
    fn blow_up_reports_time() {
        // a huge initial velocity overflows the adaptation within a few steps
        let mut cfg = short(50.0);
        cfg.init.x[0][1] = 1e150;
        let err = run(&cfg).unwrap_err();
        assert!(err.is_runtime_blowup(), "{err}");
    }
}
