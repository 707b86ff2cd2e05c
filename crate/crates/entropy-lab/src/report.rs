//! Report generation from a finished run directory: a value chart and an
//! entropy chart overlaying all agents (per-seed traces faint, across-seed
//! means solid), sorted and unsorted histogram small multiples at selected
//! checkpoints, and a per-run summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::svg::{bar_grid, line_chart, BarPanel, Series};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no runs found in {0} (expected subdirectories with metrics.csv)")]
    NoRuns(PathBuf),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {detail}")]
    Malformed {
        path: PathBuf,
        line: usize,
        detail: String,
    },
}

/// Colors keyed to the agent label order (stable across charts).
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug)]
struct RunData {
    label: String,
    seed: u64,
    steps: Vec<u64>,
    values: Vec<f64>,
    entropy_state: Vec<f64>,
    entropy_marginal: Vec<f64>,
    /// Raw `step:value` pairs exactly as they appear in the CSV.
    raw_value_points: Vec<String>,
    raw_entropy_points: Vec<String>,
    /// step -> unsorted counts.
    histograms: BTreeMap<u64, Vec<u64>>,
}

#[derive(Debug)]
pub struct ReportSummary {
    pub runs: usize,
    pub value_chart: PathBuf,
    pub entropy_chart: PathBuf,
    pub sorted_histograms: PathBuf,
    pub unsorted_histograms: PathBuf,
    pub summary_table: PathBuf,
}

fn read_to_string(path: &Path) -> Result<String, ReportError> {
    std::fs::read_to_string(path).map_err(|source| ReportError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn malformed(path: &Path, line: usize, detail: impl Into<String>) -> ReportError {
    ReportError::Malformed {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

fn parse_metrics_csv(path: &Path, run: &mut RunData) -> Result<(), ReportError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "step,value,entropy_state,entropy_marginal")) => {}
        _ => return Err(malformed(path, 1, "unexpected metrics header")),
    }
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(path, idx + 1, "expected 4 columns"));
        }
        let step: u64 = fields[0]
            .parse()
            .map_err(|_| malformed(path, idx + 1, "bad step"))?;
        let parse = |i: usize| -> Result<f64, ReportError> {
            fields[i]
                .parse()
                .map_err(|_| malformed(path, idx + 1, format!("bad float in column {i}")))
        };
        run.steps.push(step);
        run.values.push(parse(1)?);
        run.entropy_state.push(parse(2)?);
        run.entropy_marginal.push(parse(3)?);
        run.raw_value_points.push(format!("{}:{}", fields[0], fields[1]));
        run.raw_entropy_points.push(format!("{}:{}", fields[0], fields[2]));
    }
    Ok(())
}

fn parse_histogram_csv(path: &Path) -> Result<(u64, Vec<u64>), ReportError> {
    let text = read_to_string(path)?;
    let mut step = 0u64;
    let mut counts = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line != "step,action,count,sorted_rank" {
                return Err(malformed(path, 1, "unexpected histogram header"));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(path, idx + 1, "expected 4 columns"));
        }
        step = fields[0]
            .parse()
            .map_err(|_| malformed(path, idx + 1, "bad step"))?;
        let action: usize = fields[1]
            .parse()
            .map_err(|_| malformed(path, idx + 1, "bad action"))?;
        let count: u64 = fields[2]
            .parse()
            .map_err(|_| malformed(path, idx + 1, "bad count"))?;
        if counts.len() <= action {
            counts.resize(action + 1, 0);
        }
        counts[action] = count;
    }
    Ok((step, counts))
}

fn discover_runs(input: &Path) -> Result<Vec<RunData>, ReportError> {
    let mut runs = Vec::new();
    let entries = std::fs::read_dir(input).map_err(|source| ReportError::Read {
        path: input.to_path_buf(),
        source,
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("metrics.csv").is_file())
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let (label, seed) = match name.rsplit_once("_seed") {
            Some((l, s)) => match s.parse::<u64>() {
                Ok(seed) => (l.to_string(), seed),
                Err(_) => (name.clone(), 0),
            },
            None => (name.clone(), 0),
        };
        let mut run = RunData {
            label,
            seed,
            steps: Vec::new(),
            values: Vec::new(),
            entropy_state: Vec::new(),
            entropy_marginal: Vec::new(),
            raw_value_points: Vec::new(),
            raw_entropy_points: Vec::new(),
            histograms: BTreeMap::new(),
        };
        parse_metrics_csv(&dir.join("metrics.csv"), &mut run)?;
        let mut hist_files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|source| ReportError::Read {
                path: dir.clone(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("hist_") && n.ends_with(".csv"))
                    .unwrap_or(false)
            })
            .collect();
        hist_files.sort();
        for hf in hist_files {
            let (step, counts) = parse_histogram_csv(&hf)?;
            run.histograms.insert(step, counts);
        }
        runs.push(run);
    }
    if runs.is_empty() {
        return Err(ReportError::NoRuns(input.to_path_buf()));
    }
    Ok(runs)
}

fn subtitle_from_echo(input: &Path, runs: &[RunData]) -> String {
    // The desk-scale label: budgets here are reduced relative to the
    // original full-size experiments, and the header says so.
    let base = match read_to_string(&input.join("config_echo.json")) {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .map(|v| {
                format!(
                    "desk-scale run: {} interactions, eval size {}, {} seed(s)",
                    v.get("total_interactions").cloned().unwrap_or_default(),
                    v.get("eval_size").cloned().unwrap_or_default(),
                    v.get("seeds").and_then(|s| s.as_array()).map(|a| a.len()).unwrap_or(0),
                )
            })
            .unwrap_or_default(),
        Err(_) => String::new(),
    };
    if base.is_empty() {
        format!("desk-scale run: {} run directories", runs.len())
    } else {
        base
    }
}

fn color_for(labels: &[String], label: &str) -> String {
    let idx = labels.iter().position(|l| l == label).unwrap_or(0);
    PALETTE[idx % PALETTE.len()].to_string()
}

/// Mean across seeds at each step present in every seed of the agent.
fn mean_series(runs: &[&RunData], field: impl Fn(&RunData, usize) -> f64) -> Vec<(f64, f64)> {
    let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for (i, &step) in run.steps.iter().enumerate() {
            by_step.entry(step).or_default().push(field(run, i));
        }
    }
    by_step
        .into_iter()
        .filter(|(_, vs)| vs.len() == runs.len())
        .map(|(step, vs)| (step as f64, vs.iter().sum::<f64>() / vs.len() as f64))
        .collect()
}

fn write_out(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Selected checkpoints for the histogram small multiples: up to five spread
/// across the run (always including the first and the last).
fn select_checkpoints(steps: &[u64]) -> Vec<u64> {
    if steps.len() <= 5 {
        return steps.to_vec();
    }
    let last = steps.len() - 1;
    let mut picks: Vec<usize> = (0..5).map(|i| i * last / 4).collect();
    picks.dedup();
    picks.into_iter().map(|i| steps[i]).collect()
}

/// Builds the full report from `input` (a runner output directory) into
/// `out`.
pub fn render_report(input: &Path, out: &Path) -> Result<ReportSummary, ReportError> {
    let runs = discover_runs(input)?;
    std::fs::create_dir_all(out).map_err(|source| ReportError::Write {
        path: out.to_path_buf(),
        source,
    })?;
    let subtitle = subtitle_from_echo(input, &runs);

    let mut labels: Vec<String> = runs.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();

    // Value chart: faint per-seed traces, solid across-seed means.
    let mut value_series = Vec::new();
    let mut entropy_series = Vec::new();
    for label in &labels {
        let agent_runs: Vec<&RunData> = runs.iter().filter(|r| &r.label == label).collect();
        let color = color_for(&labels, label);
        for run in &agent_runs {
            value_series.push(Series {
                label: None,
                color: color.clone(),
                width: 1.0,
                opacity: 0.3,
                dashed: false,
                points: run
                    .steps
                    .iter()
                    .zip(&run.values)
                    .map(|(&s, &v)| (s as f64, v))
                    .collect(),
                data_attr: Some(run.raw_value_points.join(";")),
            });
            entropy_series.push(Series {
                label: None,
                color: color.clone(),
                width: 1.0,
                opacity: 0.3,
                dashed: false,
                points: run
                    .steps
                    .iter()
                    .zip(&run.entropy_state)
                    .map(|(&s, &v)| (s as f64, v))
                    .collect(),
                data_attr: Some(run.raw_entropy_points.join(";")),
            });
        }
        value_series.push(Series {
            label: Some(label.clone()),
            color: color.clone(),
            width: 2.5,
            opacity: 1.0,
            dashed: false,
            points: mean_series(&agent_runs, |r, i| r.values[i]),
            data_attr: None,
        });
        entropy_series.push(Series {
            label: Some(label.clone()),
            color: color.clone(),
            width: 2.5,
            opacity: 1.0,
            dashed: false,
            points: mean_series(&agent_runs, |r, i| r.entropy_state[i]),
            data_attr: None,
        });
        entropy_series.push(Series {
            label: Some(format!("{label} (marginal)")),
            color,
            width: 1.8,
            opacity: 0.9,
            dashed: true,
            points: mean_series(&agent_runs, |r, i| r.entropy_marginal[i]),
            data_attr: None,
        });
    }

    let value_chart = out.join("value.svg");
    write_out(
        &value_chart,
        &line_chart(
            "Policy value",
            &subtitle,
            "environment interactions",
            "value",
            &value_series,
            None,
        ),
    )?;

    let entropy_chart = out.join("entropy.svg");
    write_out(
        &entropy_chart,
        &line_chart(
            "Policy entropy",
            &format!("{subtitle} | solid: per-state entropy, dashed: marginal histogram entropy"),
            "environment interactions",
            "entropy (nats)",
            &entropy_series,
            None,
        ),
    )?;

    // Histogram small multiples from each agent's lowest seed.
    let mut sorted_panels = Vec::new();
    let mut unsorted_panels = Vec::new();
    for label in &labels {
        let run = runs
            .iter()
            .filter(|r| &r.label == label)
            .min_by_key(|r| r.seed)
            .expect("label came from runs");
        let steps: Vec<u64> = run.histograms.keys().copied().collect();
        for step in select_checkpoints(&steps) {
            let counts = &run.histograms[&step];
            let mut sorted = counts.clone();
            sorted.sort_unstable_by(|a, b| b.cmp(a));
            sorted_panels.push(BarPanel {
                title: format!("{label} seed {} @ {step}", run.seed),
                counts: sorted,
            });
            unsorted_panels.push(BarPanel {
                title: format!("{label} seed {} @ {step}", run.seed),
                counts: counts.clone(),
            });
        }
    }
    let sorted_histograms = out.join("histograms_sorted.svg");
    write_out(
        &sorted_histograms,
        &bar_grid(
            "Action-selection histograms (sorted)",
            &subtitle,
            &sorted_panels,
            5,
        ),
    )?;
    let unsorted_histograms = out.join("histograms_unsorted.svg");
    write_out(
        &unsorted_histograms,
        &bar_grid(
            "Action-selection histograms (unsorted)",
            &subtitle,
            &unsorted_panels,
            5,
        ),
    )?;

    // Summary table: one row per (agent, seed).
    let mut summary = String::from(
        "agent,seed,final_step,final_value,final_entropy_state,final_entropy_marginal,min_entropy_state\n",
    );
    for run in &runs {
        let last = run.steps.len() - 1;
        let min_entropy = run
            .entropy_state
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            run.label,
            run.seed,
            run.steps[last],
            run.values[last],
            run.entropy_state[last],
            run.entropy_marginal[last],
            min_entropy
        );
    }
    let summary_table = out.join("summary.csv");
    write_out(&summary_table, &summary)?;

    Ok(ReportSummary {
        runs: runs.len(),
        value_chart,
        entropy_chart,
        sorted_histograms,
        unsorted_histograms,
        summary_table,
    })
}
