use adaptive_consensus::sim::config::{
    ConfigFile, ControllerSpecs, ExosystemSpec, FrequencySpec, GraphSpec, ScheduleSpec, SimConfig,
};
use adaptive_consensus::sim::diagnostics::{compute_v, identity_residual_max};
use adaptive_consensus::sim::integrator::straddled_switch;
use adaptive_consensus::sim::run;
use adaptive_consensus::sim::scenario::{example_config, with_truth_observers};

fn single_agent() -> ConfigFile {
    let mut file = example_config();
    file.agents.truncate(1);
    file.graphs = vec![GraphSpec {
        nodes: Some(2),
        edges: Some(vec![vec![0.0, 1.0]]),
        ..Default::default()
    }];
    file.schedule = ScheduleSpec::Periodic {
        period: 1.0,
        cycle: vec![1],
    };
    file.init.x.truncate(1);
    file.init.vhat.truncate(1);
    file
}

#[test]
fn lyapunov_value_of_a_single_agent_is_half_s_squared() {
    let mut file = single_agent();
    if let ControllerSpecs::Shared(c) = &mut file.controller {
        c.lambda = Some(vec![vec![3.0, 0.0], vec![0.0, 7.0]]);
    }
    // x̂ = x₀ = (-2, 1) and β = 1, so x = (-2, 3) gives s = 2
    file.init.x = vec![vec![-2.0, 3.0]];
    file.init.theta_hat = Some(vec![file.agents[0].theta.clone()]);
    file.sim.horizon = 0.0;
    let cfg = with_truth_observers(SimConfig::from_file(&file).unwrap());
    let log = run(&cfg).unwrap();
    assert_eq!(log.records[0].agents[0].s, 2.0);
    assert_eq!(compute_v(&log, &cfg), vec![2.0]);
}

#[test]
fn tiny_gains_without_links_do_not_converge() {
    let mut file = example_config();
    file.observer.mu1 = 1e-9;
    file.observer.mu2 = 1e-9;
    file.graphs = vec![GraphSpec {
        nodes: Some(5),
        edges: Some(vec![]),
        ..Default::default()
    }];
    file.schedule = ScheduleSpec::Periodic {
        period: 1.0,
        cycle: vec![1],
    };
    file.sim.horizon = 10.0;
    file.sim.waive_assumptions = true;
    let log = run(&SimConfig::from_file(&file).unwrap()).unwrap();
    let first = &log.records[0];
    let last = log.last().unwrap();
    for (a0, a1) in first.agents.iter().zip(&last.agents) {
        let e0 = (&a0.v_hat - &first.v).norm();
        let e1 = (&a1.v_hat - &last.v).norm();
        assert!(e1 > 0.1 * e0, "{e0} -> {e1}");
    }
}

#[test]
fn frequency_form_with_explicit_schedule() {
    let mut file = example_config();
    file.exosystem = ExosystemSpec {
        frequencies: Some(FrequencySpec {
            reference: 1.0,
            disturbance: vec![0.5],
        }),
        v0: vec![-2.0, 1.0, -1.0, 3.0],
        ..Default::default()
    };
    // uneven dwell times; every switch must still land on the grid
    file.schedule = ScheduleSpec::Explicit {
        switch_times: vec![0.0, 0.3, 0.55, 1.0, 1.2, 1.7, 2.05, 2.4],
        indices: vec![1, 2, 3, 4, 1, 2, 3, 4],
        dwell: Some(0.2),
    };
    file.sim.horizon = 3.0;
    file.sim.epsilon = Some(1.5);
    // the second window, [1.2, 3.0), needs longer than 1.5 to connect
    let cfg = SimConfig::from_file(&file).unwrap();
    assert!(run(&cfg).is_err());
    file.sim.epsilon = Some(2.0);
    let cfg = SimConfig::from_file(&file).unwrap();
    let log = run(&cfg).unwrap();
    let times = log.times();
    for s in &log.switch_times {
        assert!(times.contains(s), "switch {s} missing");
    }
    for w in times.windows(2) {
        assert!(straddled_switch(&log.switch_times, w[0], w[1] - w[0]).is_none());
    }
    assert_eq!(log.records.iter().find(|r| r.t == 0.3).unwrap().sigma, 2);
    assert_eq!(log.last().unwrap().sigma, 4);
    assert!(identity_residual_max(&log, &cfg) < 1e-12);
}

#[test]
fn config_file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, example_config().to_json()).unwrap();
    let cfg = SimConfig::from_path(&path).unwrap();
    assert_eq!(cfg.agent_count(), 4);
    assert!(SimConfig::from_path(dir.path().join("absent.json")).is_err());
}
