use fhcomp::agents::{load_controller, train, AgentConfig, DqnConfig, ReplayConfig, SacConfig, TrainConfig};
use fhcomp::harness::{
    evaluate, evaluate_checkpoint, reference_controller, run_reference, AgentSelection, EvalConfig,
    ExperimentConfig, FixedController,
};
use fhcomp::nn::checkpoint::Checkpoint;
use fhcomp::{CompressionConfig, Env, EnvConfig};

fn small_eval() -> EvalConfig {
    EvalConfig { n_slots: 6_000, episode_slots: 300, ..Default::default() }
}

fn quick_replay() -> ReplayConfig {
    ReplayConfig { warmup: 128, batch_size: 32, capacity: 5_000, ..Default::default() }
}

#[test]
fn reference_through_the_generic_path_matches_run_reference() {
    let env = EnvConfig::default();
    let eval = small_eval();
    let direct = run_reference(&env, &eval, 3).unwrap();
    let mut ctl = reference_controller(&env).unwrap();
    let generic = evaluate("reference", &mut ctl, &env, &eval, 3).unwrap();
    // Empty bins carry NaN means, so compare the exact round-trip renderings.
    assert_eq!(format!("{direct:?}"), format!("{generic:?}"));
}

#[test]
fn reference_per_cell_rho_at_full_load() {
    let p = fhcomp::SystemParams::default();
    let cfg = fhcomp::fh_model::worst_case_feasible_config(&p).unwrap();
    assert_eq!(cfg.values(&p.knobs).unwrap(), (6, 16, 4));
    let rho = fhcomp::fh_model::cell_utilization(&p, fhcomp::CellLoad { n_prb: 273 }, cfg).unwrap();
    assert!((rho - 0.332_006_4).abs() < 1e-9, "{rho}");
}

#[test]
fn uncompressed_config_breaks_the_constraints_at_high_load() {
    let mut env = EnvConfig::default();
    env.traffic_bounds = Some(fhcomp::TrafficBounds { low: 200.0, high: 273.0 });
    let top = CompressionConfig::min_compression(&env.params.knobs);
    let mut ctl = FixedController { target: top };
    let rep = evaluate("fixed", &mut ctl, &env, &small_eval(), 0).unwrap();
    assert!(rep.overall.loss.p() > 0.5, "{:?}", rep.overall);
}

#[test]
fn trained_checkpoint_survives_disk_and_evaluates_identically() {
    let env = EnvConfig::default();
    let agent = AgentConfig::Dqn(DqnConfig { hidden: Some(vec![16, 16]), replay: quick_replay(), ..Default::default() });
    let out = train(&env, &agent, &TrainConfig { env_steps: 1_000, log_every: 500 }, 4, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.txt");
    out.agent.checkpoint(3).save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();

    let eval = small_eval();
    let mut live = out.agent.controller();
    let a = evaluate("dqn", live.as_mut(), &env, &eval, 8).unwrap();
    let b = evaluate_checkpoint(&ck, &env, &eval, 8).unwrap();
    assert_eq!(format!("{:?}", a.bins), format!("{:?}", b.bins));
}

#[test]
fn checkpoint_for_another_cell_count_is_rejected() {
    let env = EnvConfig::default();
    let agent = AgentConfig::Sac(SacConfig {
        critic_hidden: Some(vec![8, 8]),
        policy_hidden: Some(vec![8, 8]),
        replay: quick_replay(),
        ..Default::default()
    });
    let out = train(&env, &agent, &TrainConfig { env_steps: 200, log_every: 100 }, 1, None).unwrap();
    let ck = out.agent.checkpoint(3);
    let mut other = EnvConfig::default();
    other.params.k_cells = 2;
    assert!(load_controller(&ck, &other).is_err());
    assert!(load_controller(&ck, &env).is_ok());
}

#[test]
fn training_is_reproducible_from_the_seed() {
    let env = EnvConfig::default();
    let agent = AgentConfig::Dqn(DqnConfig { hidden: Some(vec![16, 16]), replay: quick_replay(), ..Default::default() });
    let t = TrainConfig { env_steps: 800, log_every: 200 };
    let a = train(&env, &agent, &t, 12, None).unwrap();
    let b = train(&env, &agent, &t, 12, None).unwrap();
    let c = train(&env, &agent, &t, 13, None).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_ne!(a.metrics, c.metrics);
    let (mut ea, mut eb) = (Env::new(env.clone(), 0).unwrap(), Env::new(env.clone(), 0).unwrap());
    let (mut pa, mut pb) = (a.agent.controller(), b.agent.controller());
    for _ in 0..50 {
        let x = pa.act(ea.state(), &env);
        let y = pb.act(eb.state(), &env);
        assert_eq!(x, y);
        ea.step(&x);
        eb.step(&y);
    }
}

#[test]
fn experiment_config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    let cfg = ExperimentConfig { agent: AgentSelection::Sac, seed: 5, ..Default::default() };
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);
    assert_eq!(ExperimentConfig::load(std::path::Path::new("default")).unwrap(), ExperimentConfig::default());
}
