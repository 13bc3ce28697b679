//! Closed-loop behavior on the committed surrogate benchmark: trigger
//! logic, zero-order hold, certificate evaluation, and the recursive
//! feasibility audit.

mod common;

use common::*;
use etmpc::analysis::{
    self, check_decrease_condition, check_invariant_set, lyapunov_value, steady_state_time,
    trigger_statistics,
};
use etmpc::controller::{self, EtmMode};
use etmpc::model::DisturbanceSignal;
use nalgebra::DVector;

#[test]
fn equilibrium_run_stays_at_origin() {
    let scenario = equilibrium_scenario();
    let traj = controller::run(&scenario).unwrap();
    assert!(traj.certified, "notes: {:?}", traj.notes);
    // Only the forced trigger at k = 0.
    assert_eq!(traj.trigger_instants(), vec![0]);
    for s in &traj.steps {
        assert!(s.x.norm() == 0.0, "state moved at k = {}", s.k);
        assert!(s.u_pre.norm() == 0.0, "input nonzero at k = {}", s.k);
    }
    // gamma* >= beta0 since V_0 = beta0 at the origin.
    assert!(traj.triggers[0].gamma >= scenario.etm.beta0 - 1e-6);
    assert_eq!(steady_state_time(&traj, scenario.zeta).unwrap(), Some(0));
}

#[test]
fn forced_first_trigger_and_zoh() {
    let traj = controller::run(&surrogate_scenario(3)).unwrap();
    assert!(traj.steps[0].triggered);
    assert_eq!(traj.triggers[0].k, 0);
    // Between consecutive triggers the pre-saturation input is constant.
    for pair in traj.steps.windows(2) {
        if !pair[1].triggered {
            assert_eq!(
                pair[0].u_pre, pair[1].u_pre,
                "held input changed without a trigger at k = {}",
                pair[1].k
            );
        }
    }
    // The held input is F x_{k_t} of the most recent trigger.
    for s in &traj.steps {
        if s.triggered {
            let snap = &traj.triggers[s.trigger_idx];
            let expect = &snap.f * &s.x;
            assert!((expect - &s.u_pre).norm() < 1e-12);
        }
    }
}

#[test]
fn cost_bound_chain_holds_at_triggers() {
    let traj = controller::run(&surrogate_scenario(5)).unwrap();
    for t in &traj.triggers {
        let v = lyapunov_value(
            &traj.buffer_at(t.k).unwrap(),
            &t.p,
            &t.p_tau,
            traj.steps[t.k].beta,
        )
        .unwrap();
        assert!(
            v.total <= t.gamma * (1.0 + 1e-6),
            "V = {} exceeds gamma* = {} at trigger k = {}",
            v.total,
            t.gamma,
            t.k
        );
    }
}

#[test]
fn certificates_hold_along_certified_runs() {
    let scenario = surrogate_scenario(7);
    for mode in [EtmMode::Adaptive, EtmMode::Static] {
        let traj = controller::run_with_mode(&scenario, mode).unwrap();
        assert!(traj.certified, "{}: {:?}", mode.as_str(), traj.notes);
        let residuals = check_decrease_condition(&traj, &scenario.cost, None).unwrap();
        for r in &residuals {
            assert!(
                r.residual <= 1e-6 * (1.0 + r.v_k),
                "{}: decrease residual {} at k = {}",
                mode.as_str(),
                r.residual,
                r.k
            );
        }
        let memberships = check_invariant_set(&traj, 1e-6).unwrap();
        assert!(memberships.iter().all(|m| m.pass), "{}", mode.as_str());
        // Saturation-hull precondition held at every step.
        for s in &traj.steps {
            assert!(s.h_row_max <= scenario.model.u_sat * (1.0 + 1e-6));
        }
    }
}

#[test]
fn decrease_check_detects_inflated_cost() {
    // Post-hoc inflation of Q must break the certified residual bound,
    // demonstrating the check is sensitive.
    let scenario = surrogate_scenario(2);
    let traj = controller::run(&scenario).unwrap();
    let mut inflated = scenario.cost.clone();
    inflated.q *= 1.0e6;
    let residuals = check_decrease_condition(&traj, &inflated, None).unwrap();
    assert!(
        residuals.iter().any(|r| r.residual > 1e-6 * (1.0 + r.v_k)),
        "inflated Q still passes the decrease check"
    );
}

#[test]
fn recursive_feasibility_audit_passes() {
    let traj = controller::run(&surrogate_scenario(11)).unwrap();
    let mut audited = 0;
    for t in traj.triggers.iter().skip(1) {
        let audit = t.audit.as_ref().expect("post-initial triggers carry audits");
        assert!(
            audit.pass,
            "audit failed at k = {} (state bound {:.3e}, static {:.3e})",
            t.k, audit.state_bound_min_eig, audit.static_min_eig
        );
        audited += 1;
    }
    assert!(audited > 0, "run produced no post-initial triggers");
}

#[test]
fn beta_stays_nonnegative_and_decays() {
    let traj = controller::run(&surrogate_scenario(13)).unwrap();
    let betas: Vec<f64> = traj.steps.iter().map(|s| s.beta).collect();
    assert!(betas.iter().all(|b| *b >= -1e-12));
    assert_eq!(betas[0], 10.0);
    // The internal variable dies out as the state settles.
    assert!(*betas.last().unwrap() < 1.0);
}

#[test]
fn adaptive_triggers_less_than_static() {
    let scenario = surrogate_scenario(17);
    let adaptive = controller::run_with_mode(&scenario, EtmMode::Adaptive).unwrap();
    let static_ = controller::run_with_mode(&scenario, EtmMode::Static).unwrap();
    let periodic = controller::run_with_mode(&scenario, EtmMode::PeriodicEveryStep).unwrap();
    let ra = trigger_statistics(&adaptive).unwrap();
    let rs = trigger_statistics(&static_).unwrap();
    let rp = trigger_statistics(&periodic).unwrap();
    assert!(ra.ratio < rs.ratio);
    assert!(ra.average_interval.unwrap() > rs.average_interval.unwrap());
    assert_eq!(rp.ratio, 1.0);
    // Static ZOH baseline cannot out-trigger the periodic one.
    assert!(rs.ratio <= rp.ratio);
}

#[test]
fn static_and_periodic_run_with_zero_beta() {
    let scenario = surrogate_scenario(19);
    for mode in [EtmMode::Static, EtmMode::PeriodicEveryStep] {
        let traj = controller::run_with_mode(&scenario, mode).unwrap();
        assert!(traj.steps.iter().all(|s| s.beta == 0.0));
    }
}

#[test]
fn multi_delay_model_rejected_for_synthesis() {
    let mut scenario = surrogate_scenario(1);
    scenario.model.delays = vec![1, 2];
    for v in scenario.model.vertices.iter_mut() {
        v.a_delay.push(v.a_delay[0].clone());
    }
    let err = controller::run(&scenario).unwrap_err();
    assert!(matches!(err, etmpc::Error::Synthesis(_)));
}

#[test]
fn trajectory_csv_is_deterministic() {
    let scenario = surrogate_scenario(23);
    let a = analysis::trajectory_csv(&controller::run(&scenario).unwrap());
    let b = analysis::trajectory_csv(&controller::run(&scenario).unwrap());
    assert_eq!(a, b);
}

#[test]
fn dumped_scenario_reruns_identically() {
    // Round trip: dump the parsed scenario, re-parse, re-run, compare.
    let mut file =
        etmpc::config::ScenarioFile::load(&scenario_path("surrogate.toml")).unwrap();
    file.reseed(31);
    file.steps = 25;
    let direct = controller::run(&file.build().unwrap()).unwrap();
    let reparsed = etmpc::config::ScenarioFile::parse(
        &file.to_toml_string(),
        std::path::Path::new("."),
    )
    .unwrap();
    let roundtrip = controller::run(&reparsed.build().unwrap()).unwrap();
    assert_eq!(
        analysis::trajectory_csv(&direct),
        analysis::trajectory_csv(&roundtrip)
    );
}

#[test]
fn scripted_budget_violation_rejected_at_scenario_level() {
    let mut scenario = surrogate_scenario(1);
    scenario.disturbance = DisturbanceSignal::Table {
        rows: vec![DVector::from_element(2, 0.05)],
    };
    assert!(matches!(
        controller::run(&scenario).unwrap_err(),
        etmpc::Error::Parameter(_)
    ));
}

#[test]
fn epsilon_limit_recovers_static_decisions() {
    // With eps huge the adaptive threshold beta/eps collapses to the static
    // zero threshold. Replay the static rule pointwise along the adaptive
    // run (the two closed loops would otherwise diverge through the
    // beta-dependent state-bound block, making step-wise comparison of two
    // separate runs meaningless).
    // beta0 = 0 keeps the band (0, beta/eps] where the rules can differ
    // far below the trigger expression's noise floor; beta itself still
    // evolves (it grows by theta |x|^2_Phi at each trigger instant).
    // Razor's-edge band hits do occur, hence the pooled count over seeds;
    // the random disturbance kind decorrelates the near-equilibrium tails
    // (the shared sinusoid would replay the same band event every seed).
    let mut same = 0usize;
    let mut total = 0usize;
    for seed in [29u64, 31, 37, 41, 43] {
        let mut scenario = surrogate_scenario(seed);
        scenario.etm =
            etmpc::etm::EtmConfig::new(scenario.etm.mu, scenario.etm.theta, 1.0e6, 0.0).unwrap();
        scenario.disturbance = DisturbanceSignal::BoundedRandom {
            seed: seed.wrapping_mul(0x9e3779b9),
            scale: 1.0,
        };
        let traj = controller::run(&scenario).unwrap();
        for s in traj.steps.iter().skip(1) {
            let snap = &traj.triggers[traj.steps[s.k - 1].trigger_idx];
            // State of the interval step k belongs to, as the ETM saw it.
            let st = etmpc::etm::EtmState::at_trigger(
                s.beta,
                traj.steps[snap.k].x.clone(),
                snap.k,
                snap.phi.clone(),
            )
            .unwrap();
            let static_decision =
                etmpc::etm::static_should_trigger(&st, scenario.etm.theta, &s.x).unwrap();
            total += 1;
            if static_decision == s.triggered {
                same += 1;
            }
        }
    }
    let frac = same as f64 / total as f64;
    assert!(frac >= 0.99, "agreement {frac} ({same}/{total})");
}
