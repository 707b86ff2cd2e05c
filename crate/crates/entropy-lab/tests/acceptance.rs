//! Acceptance suite: one test per criterion, each printing a PASS line (run
//! with `cargo test --test acceptance -- --nocapture` to see them). Exact
//! analytic checks are pinned at their stated tolerances; the phenomenon
//! reproduction is seeded and qualitative.

use std::path::Path;
use std::time::Instant;

use entropy_lab::agents::{Agent, AgentConfig, AgentKind};
use entropy_lab::config::RunConfig;
use entropy_lab::envs::{
    ClickBandit, ContextualBandit, GenreBandit, Interaction, PreferenceBandit, State,
};
use entropy_lab::numerics::{
    finite_difference_scalar, forward, softmax, Activation, MlpSpec, NetworkParams,
};
use entropy_lab::rng::stream;
use entropy_lab::runner::{run_experiment, RunOutcome};
use entropy_lab::theory::{run_lemma1_suite, run_theorem1_suite, run_theorem2_suite, SuiteOptions};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const LN10: f64 = std::f64::consts::LN_10;

fn pass(n: usize, what: &str) {
    println!("criterion {n} ({what}): PASS");
}

#[test]
fn criterion_1_lemma1_gradient_suite() {
    let start = Instant::now();
    let opts = SuiteOptions::default(); // 100 nets, hidden <= [8,8], K <= 10
    let report = run_lemma1_suite(&opts).expect("suite runs");
    assert_eq!(report.total, 100);
    for case in &report.cases {
        assert!(
            case.pass,
            "relative error {} above 1e-6 for a random network",
            case.residual
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    pass(1, "lemma 1: analytic grad pi vs finite differences, 100/100 within 1e-6");
}

#[test]
fn criterion_2_theorem1_exactness() {
    let start = Instant::now();
    // 50 random batches (N=4) x 20 probes per agent kind.
    let opts = SuiteOptions {
        thm1_cases: 100,
        ..SuiteOptions::default()
    };
    let report = run_theorem1_suite(&opts).expect("suite runs");
    assert_eq!(report.total, 100);
    for case in &report.cases {
        assert!(
            case.pass,
            "{}: residual {} above 1e-10",
            case.agent, case.residual
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget 10 s");
    pass(2, "theorem 1: linear PG/QL output predictions exact to 1e-10");
}

#[test]
fn criterion_3_theorem2_first_order_check() {
    let start = Instant::now();
    let opts = SuiteOptions::default(); // 50 tanh cases + 12 linear, lambda 1e-3
    let report = run_theorem2_suite(&opts).expect("suite runs");
    let (nonlinear, linear): (Vec<_>, Vec<_>) = report
        .cases
        .iter()
        .enumerate()
        .partition(|(i, _)| *i < opts.thm2_cases);
    let ratio_ok = nonlinear.iter().filter(|(_, c)| c.pass).count();
    assert!(
        ratio_ok >= 45,
        "only {ratio_ok}/50 tanh cases had residual ratio in [3.5, 4.5]"
    );
    for (_, case) in linear {
        assert!(
            case.residual <= 1e-10,
            "linear {}: residual {}",
            case.agent,
            case.residual
        );
    }
    assert!(report.pass);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    pass(3, "theorem 2: quadratic-remainder ratio on tanh MLPs, exactness on linear nets");
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = want.iter().map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-8)
}

fn rand_state(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn healthy_reward(rng: &mut ChaCha8Rng) -> f64 {
    // Magnitudes in [0.5, 2] keep the loss-gradient scale away from the
    // degenerate zero where relative error is meaningless.
    rng.gen_range(0.5..2.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 }
}

#[test]
fn criterion_4_gradient_oracle_suite() {
    let kinds = [
        AgentKind::Pg,
        AgentKind::Ql,
        AgentKind::A2c,
        AgentKind::Dqn,
        AgentKind::Ppo,
    ];
    for kind in kinds {
        let mut rng = stream(40, kind.name(), 0);
        for case in 0..50 {
            let d = rng.gen_range(2..=4);
            let k = rng.gen_range(2..=5);
            let outputs = k + kind.has_value_head() as usize;
            let spec = MlpSpec::new(d, vec![5, 4], outputs, Activation::Tanh);
            let params = NetworkParams::init(spec.clone(), &mut rng).unwrap();
            let mut agent =
                Agent::with_params(AgentConfig::new(kind, spec.clone(), 1e-3), k, params, 0)
                    .unwrap();

            let s = rand_state(d, &mut rng);
            let a = rng.gen_range(0..k);
            let r = healthy_reward(&mut rng);

            // Frozen-coefficient scalar losses per agent family.
            let (analytic, fd) = match kind {
                AgentKind::Pg => {
                    let g = agent.pg_loss_grad(&s, a, r).unwrap();
                    let fd = finite_difference_scalar(agent.params(), 1e-5, |p| {
                        Ok(-r * softmax(&forward(p, &s)?)?[a].ln())
                    })
                    .unwrap();
                    (g, fd)
                }
                AgentKind::Ql | AgentKind::Dqn => {
                    let g = agent.ql_loss_grad(&s, a, r).unwrap();
                    let fd = finite_difference_scalar(agent.params(), 1e-5, |p| {
                        let z = forward(p, &s)?;
                        Ok((z[a] - r) * (z[a] - r))
                    })
                    .unwrap();
                    (g, fd)
                }
                AgentKind::A2c => {
                    let adv = r - agent.outputs(&s).unwrap()[k];
                    let g = agent.a2c_loss_grad(&s, a, r).unwrap();
                    let fd = finite_difference_scalar(agent.params(), 1e-5, |p| {
                        let z = forward(p, &s)?;
                        let pi = softmax(&z[..k])?;
                        Ok(-adv * pi[a].ln() + 0.5 * (r - z[k]) * (r - z[k]))
                    })
                    .unwrap();
                    (g, fd)
                }
                AgentKind::Ppo => {
                    // Nearby snapshot: ratio stays inside the clip band.
                    let mut snap_theta = agent.params().theta().to_vec();
                    for t in snap_theta.iter_mut() {
                        *t += rng.gen_range(-0.01..0.01);
                    }
                    let snapshot = NetworkParams::from_theta(spec.clone(), snap_theta).unwrap();
                    agent.set_snapshot(snapshot.clone());
                    let z_snap = forward(&snapshot, &s).unwrap();
                    let pi_snap_a = softmax(&z_snap[..k]).unwrap()[a];
                    let adv = r - z_snap[k];
                    let pi_a = softmax(&agent.outputs(&s).unwrap()[..k]).unwrap()[a];
                    assert!(
                        (1.0 - pi_a / pi_snap_a).abs() < agent.config().ppo_clip,
                        "snapshot drifted outside the clip band"
                    );
                    let g = agent.ppo_loss_grad(&s, a, r).unwrap();
                    let fd = finite_difference_scalar(agent.params(), 1e-5, |p| {
                        let z = forward(p, &s)?;
                        let pi = softmax(&z[..k])?;
                        Ok(-adv * (pi[a] / pi_snap_a) + 0.5 * (r - z[k]) * (r - z[k]))
                    })
                    .unwrap();
                    (g, fd)
                }
            };
            let rel = rel_err(&analytic, &fd);
            assert!(
                rel <= 1e-6,
                "{kind} case {case}: finite-difference mismatch {rel}"
            );
        }
    }
    pass(4, "gradient oracles: all five agents match finite differences, 50 cases each");
}

#[test]
fn criterion_5_structural_contrast() {
    let d = 6;
    let k = 10;
    let lr = 0.05;
    let mut rng = stream(50, "structural", 0);
    for case in 0..1000 {
        let spec = MlpSpec::linear(d, k);
        let params = NetworkParams::init(spec.clone(), &mut rng).unwrap();
        // Pixels bounded away from zero so every row update is representable.
        let s: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..1.0)).collect();
        let a = rng.gen_range(0..k);
        let r = if rng.gen::<bool>() { 1.0 } else { -1.0 / 9.0 };
        let batch = [Interaction {
            state: s,
            action: a,
            reward: r,
        }];

        // QL: exactly one weight row moves, the rest stay bitwise equal.
        let mut config = AgentConfig::new(AgentKind::Ql, spec.clone(), lr);
        config.batch_size = 1;
        let mut ql = Agent::with_params(config, k, params.clone(), 0).unwrap();
        ql.train_step(&batch).unwrap();
        for row in 0..k {
            let before = params.weight_row(0, row);
            let after = ql.params().weight_row(0, row);
            if row == a {
                assert_ne!(before, after, "case {case}: QL row {row} did not move");
            } else {
                assert_eq!(before, after, "case {case}: QL touched row {row}");
            }
        }

        // PG with r != 0: every row moves.
        let mut config = AgentConfig::new(AgentKind::Pg, spec.clone(), lr);
        config.batch_size = 1;
        let mut pg = Agent::with_params(config, k, params.clone(), 0).unwrap();
        pg.train_step(&batch).unwrap();
        for row in 0..k {
            assert_ne!(
                params.weight_row(0, row),
                pg.params().weight_row(0, row),
                "case {case}: PG row {row} did not move"
            );
        }
    }
    pass(5, "structural contrast: QL updates one weight row, PG updates all rows, 1000/1000");
}

fn sample_experiment_config(dir: &Path, lr: f64) -> RunConfig {
    let json = format!(
        r#"{{
            "env": {{"type": "classification", "dataset": {{"synthetic": {{
                "classes": 10, "rows": 28, "cols": 28,
                "train": 5000, "eval": 1000, "noise": 0.25}}}}}},
            "agents": [
                {{"kind": "pg", "lr": {lr}, "batch_size": 1, "hidden": []}},
                {{"kind": "ql", "lr": {lr}, "batch_size": 1, "hidden": []}}
            ],
            "total_interactions": 20000,
            "eval_every": 1000,
            "eval_size": 1000,
            "seeds": [0, 1, 2],
            "output_dir": "out"
        }}"#
    );
    RunConfig::from_json(&json, dir).unwrap()
}

#[test]
fn criterion_6_classification_calibration_at_step_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = sample_experiment_config(tmp.path(), 0.002);
    config.total_interactions = 0;
    let outcomes = run_experiment(&config).unwrap();
    for o in &outcomes {
        let baseline = &o.records[0];
        assert!(
            baseline.value.abs() <= 0.02,
            "{} seed {}: step-0 value {}",
            o.label,
            o.seed,
            baseline.value
        );
        assert!(
            (baseline.entropy_state - LN10).abs() <= 0.01,
            "{} seed {}: step-0 entropy {}",
            o.label,
            o.seed,
            baseline.entropy_state
        );
    }

    // The label oracle scores exactly 1 on the same evaluation set.
    let mut env_rng = stream(0, "env-init", 0);
    let env = config.build_env(&mut env_rng).unwrap();
    let mut state_rng = stream(0, "state-sample", 0);
    let eval = env.sample_eval_set(config.eval_size, &mut state_rng);
    let oracle = |s: &State| {
        let mut probs = vec![0.0; env.action_count()];
        probs[s.label.expect("labeled state")] = 1.0;
        Ok(probs)
    };
    let (value, _) = entropy_lab::metrics::policy_value(&oracle, env.as_ref(), &eval, 0).unwrap();
    assert!((value - 1.0).abs() <= 1e-12, "oracle value {value}");
    pass(6, "calibration: symmetric start has value 0 and entropy ln 10; oracle scores 1");
}

#[test]
fn criterion_7_sample_experiment_phenomenon() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = sample_experiment_config(tmp.path(), 0.002);
    let outcomes = run_experiment(&config).unwrap();

    let find = |label: &str, seed: u64| -> &RunOutcome {
        outcomes
            .iter()
            .find(|o| o.label == label && o.seed == seed)
            .expect("run present")
    };

    let mut audit = String::new();
    let mut good_seeds = 0;
    for seed in [0u64, 1, 2] {
        let pg = find("pg", seed);
        let ql = find("ql", seed);
        assert!(pg.aborted.is_none() && ql.aborted.is_none(), "seed {seed} aborted");

        // Both agents must solve the bandit.
        let pg_best = pg.records.iter().map(|r| r.value).fold(f64::MIN, f64::max);
        let ql_best = ql.records.iter().map(|r| r.value).fold(f64::MIN, f64::max);
        assert!(pg_best >= 0.8, "seed {seed}: PG value peaked at {pg_best}");
        assert!(ql_best >= 0.8, "seed {seed}: QL value peaked at {ql_best}");

        // The phenomenon: PG's per-state entropy collapses below half of
        // ln 10 somewhere in training, while QL's marginal-histogram entropy
        // stays above 0.8 ln 10 after the first 10% of interactions.
        let pg_min_entropy = pg
            .records
            .iter()
            .map(|r| r.entropy_state)
            .fold(f64::INFINITY, f64::min);
        let cutoff = config.total_interactions / 10;
        let ql_min_marginal = ql
            .records
            .iter()
            .filter(|r| r.step > cutoff)
            .map(|r| r.entropy_marginal)
            .fold(f64::INFINITY, f64::min);

        let pg_ok = pg_min_entropy < 0.5 * LN10;
        let ql_ok = ql_min_marginal >= 0.8 * LN10;
        if pg_ok && ql_ok {
            good_seeds += 1;
        } else {
            // Audit trail: the full entropy trajectories for the failed seed.
            audit.push_str(&format!(
                "seed {seed}: pg_min_entropy={pg_min_entropy:.4} (need < {:.4}), \
                 ql_min_marginal={ql_min_marginal:.4} (need >= {:.4})\n",
                0.5 * LN10,
                0.8 * LN10
            ));
            for (name, run) in [("pg", pg), ("ql", ql)] {
                audit.push_str(&format!("  {name} entropy_state:    "));
                for r in &run.records {
                    audit.push_str(&format!("{:.3} ", r.entropy_state));
                }
                audit.push_str(&format!("\n  {name} entropy_marginal: "));
                for r in &run.records {
                    audit.push_str(&format!("{:.3} ", r.entropy_marginal));
                }
                audit.push('\n');
            }
        }
    }
    if !audit.is_empty() {
        println!("entropy trajectories for failed seeds:\n{audit}");
    }
    assert!(
        good_seeds >= 2,
        "phenomenon reproduced on only {good_seeds}/3 seeds\n{audit}"
    );
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 600.0,
        "took {elapsed:?}, budget 10 min"
    );
    pass(
        7,
        "phenomenon: PG entropy collapses, QL marginal entropy stays high, value >= 0.8",
    );
}

#[test]
fn criterion_8_environment_invariants() {
    // Genre: adding a constant to a raw feature column leaves every reward
    // bucket unchanged (mean normalization removes it).
    let squeeze_shift = |shift: f64| -> GenreBandit {
        let mut genres = Vec::new();
        for g in 0..20 {
            let mut st = stream(81, "genre-raw", g);
            let row: Vec<f64> = (0..10).map(|_| 0.5 * st.gen::<f64>()).collect();
            genres.push(row);
        }
        let mut shifted = genres.clone();
        for row in &mut shifted {
            row[4] += shift;
        }
        let tracks: Vec<Vec<f64>> = (0..50)
            .map(|t| {
                let mut st = stream(81, "track-raw", t);
                (0..10).map(|_| st.gen::<f64>()).collect()
            })
            .collect();
        GenreBandit::from_features(shifted, tracks, 0.1).unwrap()
    };
    let plain = squeeze_shift(0.0);
    let shifted = squeeze_shift(0.4);
    let mut st = stream(82, "state-sample", 0);
    for _ in 0..1000 {
        let s = plain.sample_state(&mut st);
        let a = st.gen_range(0..plain.action_count());
        assert_eq!(
            plain.expected_reward(&s, a).unwrap(),
            shifted.expected_reward(&s, a).unwrap(),
            "mean-normalization invariance violated"
        );
    }
    // Click: Monte Carlo at logit 1 matches sigmoid(1) within 0.02.
    let env = ClickBandit::from_embeddings(vec![vec![1.0, 0.0]; 5], 1.0, 7).unwrap();
    let s = State::unlabeled(vec![1.0, 0.0]);
    let mut rw = stream(83, "reward-noise", 0);
    let mut clicks = 0.0;
    for _ in 0..10_000 {
        clicks += env.reward(&s, 3, &mut rw).unwrap();
    }
    let mean = clicks / 10_000.0;
    let sigmoid1 = 1.0 / (1.0 + (-1.0f64).exp());
    assert!(
        (mean - sigmoid1).abs() <= 0.02,
        "click rate {mean} vs sigmoid(1) = {sigmoid1}"
    );

    // Preference: the stored best action matches a brute-force reward scan
    // on 100 users.
    let mut init = stream(84, "env-init", 0);
    let env = PreferenceBandit::new(100, 100, 0.0, &mut init).unwrap();
    let mut st = stream(84, "state-sample", 0);
    let mut rw = stream(84, "reward-noise", 0);
    for _ in 0..100 {
        let s = env.sample_state(&mut st);
        let mut best = 0;
        let mut best_r = f64::NEG_INFINITY;
        for a in 0..env.action_count() {
            let r = env.reward(&s, a, &mut rw).unwrap();
            if r > best_r {
                best_r = r;
                best = a;
            }
        }
        assert_eq!(best, env.best_action(&s).unwrap());
    }
    pass(8, "environment invariants: genre shift-invariance, click Monte Carlo, preference argmax");
}

#[test]
fn criterion_9_byte_identical_reruns() {
    let bin = env!("CARGO_BIN_EXE_entropy-lab");
    let write_config = |dir: &Path| {
        std::fs::write(
            dir.join("run.json"),
            r#"{
                "env": {"type": "click", "products": 6, "state_dim": 4},
                "agents": [
                    {"kind": "pg", "lr": 0.05, "batch_size": 4},
                    {"kind": "dqn", "lr": 0.02, "batch_size": 4, "hidden": [8]}
                ],
                "total_interactions": 200,
                "eval_every": 50,
                "eval_size": 40,
                "seeds": [11],
                "output_dir": "out"
            }"#,
        )
        .unwrap();
    };
    let run = |dir: &Path| {
        let status = std::process::Command::new(bin)
            .args(["run", "--config"])
            .arg(dir.join("run.json"))
            .status()
            .expect("binary runs");
        assert!(status.success());
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_config(a.path());
    write_config(b.path());
    run(a.path());
    run(b.path());

    for run_dir in ["pg_seed11", "dqn_seed11"] {
        let dir_a = a.path().join("out").join(run_dir);
        let dir_b = b.path().join("out").join(run_dir);
        let mut names: Vec<String> = std::fs::read_dir(&dir_a)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".csv"))
            .collect();
        names.sort();
        assert!(names.len() >= 2, "expected metrics + histogram files");
        for name in names {
            let bytes_a = std::fs::read(dir_a.join(&name)).unwrap();
            let bytes_b = std::fs::read(dir_b.join(&name)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{run_dir}/{name} differs between reruns");
        }
    }
    pass(9, "reproducibility: two `run` executions produce byte-identical CSVs");
}
