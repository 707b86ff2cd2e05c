//! Experiment driver.
//!
//! Expands a [`RunConfig`] into an (agent x seed) grid, runs each cell on a
//! worker pool, and writes per-run CSV metrics plus per-checkpoint histogram
//! files. Every stream of randomness is derived from the run's seed, so a
//! rerun with the same config and seed produces byte-identical outputs.
//!
//! Output layout, under `output_dir`:
//!
//! ```text
//! config_echo.json                 # the resolved config the run used
//! {label}_seed{seed}/
//!   metrics.csv                    # step,value,entropy_state,entropy_marginal
//!   hist_{step:08}.csv             # step,action,count,sorted_rank
//!   run_meta.json                  # kind, seed, value mode, abort info
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::agents::{Agent, AgentError};
use crate::config::{ConfigError, RunConfig};
use crate::envs::{EnvError, Interaction, State};
use crate::metrics::{evaluate_checkpoint, MetricsError, MetricsRecord, ValueMode};
use crate::rng::{
    derive_seed, stream, STREAM_ACTION, STREAM_AGENT_INIT, STREAM_ENV_INIT, STREAM_EVAL,
    STREAM_REWARD, STREAM_STATE,
};

/// Caps the worker pool size when set.
pub const THREADS_ENV_VAR: &str = "ENTROPY_LAB_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{THREADS_ENV_VAR}: {0}")]
    Threads(String),
    #[error("run {label} seed {seed} failed: {detail}")]
    Task {
        label: String,
        seed: u64,
        detail: String,
    },
}

/// Everything one (agent, seed) run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub label: String,
    pub kind: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub records: Vec<MetricsRecord>,
    /// Diagnostic when the run stopped early (non-finite parameters).
    pub aborted: Option<AbortRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AbortRecord {
    pub step: u64,
    pub error: String,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    agent: &'a str,
    kind: &'a str,
    seed: u64,
    eval_size: usize,
    total_interactions: u64,
    eval_every: u64,
    value_mode: &'a str,
    aborted: &'a Option<AbortRecord>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn worker_count(tasks: usize) -> Result<usize, RunError> {
    worker_count_from(std::env::var(THREADS_ENV_VAR).ok().as_deref(), tasks)
}

fn worker_count_from(raw: Option<&str>, tasks: usize) -> Result<usize, RunError> {
    let cap = match raw {
        Some(raw) => {
            let n: usize = raw
                .trim()
                .parse()
                .map_err(|_| RunError::Threads(format!("`{raw}` is not a positive integer")))?;
            if n == 0 {
                return Err(RunError::Threads("must be >= 1".into()));
            }
            n
        }
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    Ok(cap.max(1).min(tasks.max(1)))
}

/// Runs the whole (agent x seed) grid and writes all outputs. Returns one
/// outcome per run, in grid order (agents outer, seeds inner).
pub fn run_experiment(config: &RunConfig) -> Result<Vec<RunOutcome>, RunError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Write {
        path: config.output_dir.clone(),
        source,
    })?;
    let echo = serde_json::to_vec_pretty(config).expect("config serializes");
    write_file(&config.output_dir.join("config_echo.json"), &echo)?;

    let labels = config.agent_labels();
    let tasks: Vec<(usize, u64)> = (0..config.agents.len())
        .flat_map(|a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let workers = worker_count(tasks.len())?;

    let next_task = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutcome, RunError>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next_task.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let (agent_idx, seed) = tasks[i];
                let outcome = run_single(config, &labels[agent_idx], agent_idx, seed);
                results.lock().unwrap()[i] = Some(outcome);
            });
        }
    });

    let mut outcomes = Vec::with_capacity(tasks.len());
    for slot in results.into_inner().unwrap() {
        outcomes.push(slot.expect("worker filled every slot")?);
    }
    Ok(outcomes)
}

fn task_err(label: &str, seed: u64, detail: impl std::fmt::Display) -> RunError {
    RunError::Task {
        label: label.to_string(),
        seed,
        detail: detail.to_string(),
    }
}

/// One (agent, seed) cell: interact, train on the agent's batch schedule,
/// checkpoint on the fixed evaluation set, and write this run's files.
fn run_single(
    config: &RunConfig,
    label: &str,
    agent_idx: usize,
    seed: u64,
) -> Result<RunOutcome, RunError> {
    let mut env_rng = stream(seed, STREAM_ENV_INIT, 0);
    let env = config
        .build_env(&mut env_rng)
        .map_err(|e| task_err(label, seed, e))?;

    // The evaluation set is drawn from the state stream before any training
    // interaction; training states continue from the same stream.
    let mut state_rng = stream(seed, STREAM_STATE, 0);
    let eval_set = env.sample_eval_set(config.eval_size, &mut state_rng);

    let mut agent_rng = stream(seed, STREAM_AGENT_INIT, 0);
    let mut agent = config
        .build_agent(&config.agents[agent_idx], env.as_ref(), &mut agent_rng)
        .map_err(|e| task_err(label, seed, e))?;

    let mut action_rng = stream(seed, STREAM_ACTION, 0);
    let mut reward_rng = stream(seed, STREAM_REWARD, 0);

    let mut records = Vec::new();
    let mut aborted = None;

    let checkpoint = |agent: &Agent,
                      step: u64,
                      records: &mut Vec<MetricsRecord>|
     -> Result<(), MetricsError> {
        let eval_seed = derive_seed(seed, STREAM_EVAL, step);
        let policy = |s: &State| {
            agent
                .policy_distribution(&s.features)
                .map_err(|e: AgentError| MetricsError::Policy(e.to_string()))
        };
        let record = evaluate_checkpoint(&policy, env.as_ref(), &eval_set, eval_seed, step)?;
        records.push(record);
        Ok(())
    };

    checkpoint(&agent, 0, &mut records).map_err(|e| task_err(label, seed, e))?;

    for t in 1..=config.total_interactions {
        let s = env.sample_state(&mut state_rng);
        let a = agent
            .act(&s.features, &mut action_rng)
            .map_err(|e| task_err(label, seed, e))?;
        let r = env
            .reward(&s, a, &mut reward_rng)
            .map_err(|e: EnvError| task_err(label, seed, e))?;
        let result = agent.observe(Interaction {
            state: s.features,
            action: a,
            reward: r,
        });
        match result {
            Ok(_) => {}
            Err(AgentError::NonFiniteParams { step }) => {
                aborted = Some(AbortRecord {
                    step,
                    error: "non-finite parameters detected; run aborted".to_string(),
                });
                break;
            }
            Err(e) => return Err(task_err(label, seed, e)),
        }
        if t % config.eval_every == 0 {
            checkpoint(&agent, t, &mut records).map_err(|e| task_err(label, seed, e))?;
        }
    }

    let dir = config.output_dir.join(format!("{label}_seed{seed}"));
    std::fs::create_dir_all(&dir).map_err(|source| RunError::Write {
        path: dir.clone(),
        source,
    })?;
    write_run_files(&dir, label, &agent, config, seed, &records, &aborted)?;

    Ok(RunOutcome {
        label: label.to_string(),
        kind: agent.kind().name().to_string(),
        seed,
        dir,
        records,
        aborted,
    })
}

fn write_run_files(
    dir: &Path,
    label: &str,
    agent: &Agent,
    config: &RunConfig,
    seed: u64,
    records: &[MetricsRecord],
    aborted: &Option<AbortRecord>,
) -> Result<(), RunError> {
    let mut metrics = String::from("step,value,entropy_state,entropy_marginal\n");
    for r in records {
        writeln!(
            metrics,
            "{},{},{},{}",
            r.step, r.value, r.entropy_state, r.entropy_marginal
        )
        .expect("writing to a String cannot fail");
    }
    write_file(&dir.join("metrics.csv"), metrics.as_bytes())?;

    for r in records {
        write_file(
            &dir.join(format!("hist_{:08}.csv", r.step)),
            histogram_csv(r).as_bytes(),
        )?;
    }

    let value_mode = records
        .first()
        .map(|r| match r.value_mode {
            ValueMode::Enumerated => "enumerated",
            ValueMode::Sampled => "sampled",
        })
        .unwrap_or("unknown");
    let meta = RunMeta {
        agent: label,
        kind: agent.kind().name(),
        seed,
        eval_size: config.eval_size,
        total_interactions: config.total_interactions,
        eval_every: config.eval_every,
        value_mode,
        aborted,
    };
    let meta_json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    write_file(&dir.join("run_meta.json"), &meta_json)?;

    if let Some(abort) = aborted {
        let json = serde_json::to_vec_pretty(abort).expect("abort serializes");
        write_file(&dir.join("aborted.json"), &json)?;
    }
    Ok(())
}

/// One checkpoint's histogram as CSV rows. `sorted_rank` is the action's
/// position when counts are ordered descending (ties by action index), so the
/// same file serves the sorted and unsorted views.
fn histogram_csv(record: &MetricsRecord) -> String {
    let k = record.histogram.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        record.histogram[b]
            .cmp(&record.histogram[a])
            .then(a.cmp(&b))
    });
    let mut rank = vec![0usize; k];
    for (pos, &action) in order.iter().enumerate() {
        rank[action] = pos;
    }
    let mut out = String::from("step,action,count,sorted_rank\n");
    for (action, &count) in record.histogram.iter().enumerate() {
        writeln!(out, "{},{},{},{}", record.step, action, count, rank[action])
            .expect("writing to a String cannot fail");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use std::path::Path;

    fn click_config(dir: &Path, total: u64, eval_every: u64) -> RunConfig {
        let json = format!(
            r#"{{
                "env": {{"type": "click", "products": 4, "state_dim": 3}},
                "agents": [
                    {{"kind": "pg", "lr": 0.05, "batch_size": 1}},
                    {{"kind": "ql", "lr": 0.05, "batch_size": 1}}
                ],
                "total_interactions": {total},
                "eval_every": {eval_every},
                "eval_size": 25,
                "seeds": [3, 4],
                "output_dir": "out"
            }}"#
        );
        RunConfig::from_json(&json, dir).unwrap()
    }

    #[test]
    fn degenerate_budget_writes_only_the_baseline_checkpoint() {
        let tmp = tempfile::tempdir().unwrap();
        let config = click_config(tmp.path(), 0, 5);
        let outcomes = run_experiment(&config).unwrap();
        assert_eq!(outcomes.len(), 4);
        for o in &outcomes {
            assert_eq!(o.records.len(), 1);
            assert_eq!(o.records[0].step, 0);
            let metrics = std::fs::read_to_string(o.dir.join("metrics.csv")).unwrap();
            assert_eq!(metrics.lines().count(), 2); // header + step 0
            assert!(o.dir.join("hist_00000000.csv").exists());
        }
    }

    #[test]
    fn checkpoints_step_by_eval_every() {
        let tmp = tempfile::tempdir().unwrap();
        let config = click_config(tmp.path(), 20, 5);
        let outcomes = run_experiment(&config).unwrap();
        for o in &outcomes {
            let steps: Vec<u64> = o.records.iter().map(|r| r.step).collect();
            assert_eq!(steps, vec![0, 5, 10, 15, 20]);
            for r in &o.records {
                assert_eq!(r.histogram.iter().sum::<u64>(), 25);
            }
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let tmp_a = tempfile::tempdir().unwrap();
        let tmp_b = tempfile::tempdir().unwrap();
        let config_a = click_config(tmp_a.path(), 10, 5);
        let config_b = click_config(tmp_b.path(), 10, 5);
        let out_a = run_experiment(&config_a).unwrap();
        let out_b = run_experiment(&config_b).unwrap();
        for (a, b) in out_a.iter().zip(&out_b) {
            let ma = std::fs::read(a.dir.join("metrics.csv")).unwrap();
            let mb = std::fs::read(b.dir.join("metrics.csv")).unwrap();
            assert_eq!(ma, mb);
            for r in &a.records {
                let name = format!("hist_{:08}.csv", r.step);
                let ha = std::fs::read(a.dir.join(&name)).unwrap();
                let hb = std::fs::read(b.dir.join(&name)).unwrap();
                assert_eq!(ha, hb);
            }
        }
    }

    #[test]
    fn histogram_csv_ranks_ties_by_action() {
        let record = MetricsRecord {
            step: 7,
            value: 0.0,
            value_mode: crate::metrics::ValueMode::Sampled,
            entropy_state: 0.0,
            entropy_marginal: 0.0,
            histogram: vec![3, 9, 3, 1],
        };
        let csv = histogram_csv(&record);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,action,count,sorted_rank");
        assert_eq!(lines[1], "7,0,3,1");
        assert_eq!(lines[2], "7,1,9,0");
        assert_eq!(lines[3], "7,2,3,2");
        assert_eq!(lines[4], "7,3,1,3");
    }

    #[test]
    fn thread_cap_env_var_is_validated() {
        assert_eq!(worker_count_from(Some("2"), 8).unwrap(), 2);
        assert_eq!(worker_count_from(Some("16"), 8).unwrap(), 8); // capped by tasks
        assert!(worker_count_from(Some("0"), 8).is_err());
        assert!(worker_count_from(Some("lots"), 8).is_err());
        assert!(worker_count_from(None, 8).unwrap() >= 1);
    }
}
