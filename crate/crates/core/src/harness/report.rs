use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::{read_metrics, EpisodeRecord, Stream, METRICS_FILE};
use super::plot::{self, Series, PALETTE};
use super::run::{RunState, RunStatus};
use super::stats::{mean_std, smooth, success_rate, SuccessRate, SUCCESS_WINDOW};
use crate::error::{Error, Result};

pub const TABLE_FILE: &str = "success_table.csv";
pub const SMOOTH_WINDOW: usize = 21;
pub const SMOOTH_ORDER: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub dir: PathBuf,
    pub label: String,
    pub env: String,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
}

impl RunData {
    pub fn stream(&self, stream: Stream) -> impl Iterator<Item = &EpisodeRecord> {
        self.records.iter().filter(move |r| r.stream == stream)
    }
}

/// Reads a completed run directory.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let status = RunStatus::read(dir)?;
    if status.state != RunState::Completed {
        return Err(Error::InsufficientData(format!("run state is {:?}", status.state)));
    }
    let records = read_metrics(&dir.join(METRICS_FILE))?;
    Ok(RunData {
        dir: dir.to_path_buf(),
        label: status.label,
        env: status.env,
        seed: status.seed,
        records,
    })
}

/// Per-episode aggregate of one stream over several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub episodes: Vec<usize>,
    pub mean: Vec<f64>,
    /// Absent when only one run contributes.
    pub std: Option<Vec<f64>>,
}

pub fn aggregate(runs: &[&RunData], stream: Stream) -> Curve {
    let mut by_episode: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for r in run.stream(stream) {
            by_episode.entry(r.episode).or_default().push(r.reward);
        }
    }
    let mut curve = Curve {
        episodes: Vec::new(),
        mean: Vec::new(),
        std: (runs.len() > 1).then(Vec::new),
    };
    for (episode, values) in by_episode {
        let (m, s) = mean_std(&values);
        curve.episodes.push(episode);
        curve.mean.push(m);
        if let Some(std) = curve.std.as_mut() {
            std.push(s);
        }
    }
    curve
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub label: String,
    pub env: String,
    pub runs: usize,
    /// Fewest exploration episodes of any run.
    pub episodes: usize,
    /// Best sliding-window success of the exploration stream; absent when a
    /// run is shorter than the window.
    pub success: Option<SuccessRate>,
    pub explore_reward: f64,
    pub eval_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub methods: Vec<MethodSummary>,
    pub skipped: Vec<(PathBuf, String)>,
    pub plots: Vec<PathBuf>,
    pub table: PathBuf,
}

fn mean_reward(runs: &[&RunData], stream: Stream) -> f64 {
    let rewards: Vec<f64> = runs.iter().flat_map(|r| r.stream(stream).map(|e| e.reward)).collect();
    mean_std(&rewards).0
}

fn summarize(label: &str, runs: &[&RunData]) -> MethodSummary {
    let successes: Vec<Vec<bool>> = runs
        .iter()
        .map(|r| r.stream(Stream::Explore).map(|e| e.success).collect())
        .collect();
    let mut envs: Vec<&str> = runs.iter().map(|r| r.env.as_str()).collect();
    envs.dedup();
    MethodSummary {
        label: label.to_string(),
        env: envs.join("+"),
        runs: runs.len(),
        episodes: successes.iter().map(Vec::len).min().unwrap_or(0),
        success: success_rate(&successes, SUCCESS_WINDOW).ok(),
        explore_reward: mean_reward(runs, Stream::Explore),
        eval_reward: mean_reward(runs, Stream::Eval),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn success_table(methods: &[MethodSummary]) -> String {
    let mut out = String::from(
        "label,env,runs,episodes,best_window_success_mean,best_window_success_std,explore_reward_mean,eval_reward_mean\n",
    );
    for m in methods {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.label,
            m.env,
            m.runs,
            m.episodes,
            fmt_opt(m.success.as_ref().map(|s| s.mean)),
            fmt_opt(m.success.as_ref().map(|s| s.std)),
            fmt_opt(Some(m.explore_reward).filter(|v| v.is_finite())),
            fmt_opt(Some(m.eval_reward).filter(|v| v.is_finite())),
        );
    }
    out
}

fn series_for(curve: &Curve, color: [u8; 3]) -> Result<Series> {
    let n = curve.mean.len();
    let window = SMOOTH_WINDOW.min(if n % 2 == 1 { n } else { n - 1 });
    Ok(Series {
        color,
        x: curve.episodes.iter().map(|e| *e as f64).collect(),
        smoothed: smooth(&curve.mean, window, SMOOTH_ORDER)?,
        mean: curve.mean.clone(),
        std: curve.std.clone(),
    })
}

/// Learning-curve plots per environment and stream plus the success table.
/// Unreadable or unfinished runs are skipped and listed.
pub fn report(run_dirs: &[PathBuf], out: &Path) -> Result<Report> {
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for dir in run_dirs {
        match load_run(dir) {
            Ok(r) => runs.push(r),
            Err(e) => skipped.push((dir.clone(), e.to_string())),
        }
    }
    if runs.is_empty() {
        return Err(Error::InsufficientData("no completed runs to report".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut by_label: BTreeMap<&str, Vec<&RunData>> = BTreeMap::new();
    for r in &runs {
        by_label.entry(r.label.as_str()).or_default().push(r);
    }
    let methods: Vec<MethodSummary> = by_label.iter().map(|(l, rs)| summarize(l, rs)).collect();
    let table = out.join(TABLE_FILE);
    std::fs::write(&table, success_table(&methods)).map_err(|e| Error::io(&table, e))?;

    let mut envs: Vec<&str> = runs.iter().map(|r| r.env.as_str()).collect();
    envs.sort_unstable();
    envs.dedup();
    let mut plots = Vec::new();
    for env in envs {
        for stream in [Stream::Explore, Stream::Eval] {
            let mut series = Vec::new();
            for (i, rs) in by_label.values().enumerate() {
                let here: Vec<&RunData> = rs.iter().copied().filter(|r| r.env == env).collect();
                let curve = aggregate(&here, stream);
                if !curve.mean.is_empty() {
                    series.push(series_for(&curve, PALETTE[i % PALETTE.len()])?);
                }
            }
            if series.is_empty() {
                continue;
            }
            let path = out.join(format!("{env}_{}_reward.png", stream.as_str()));
            plot::save(&path, &series)?;
            plots.push(path);
        }
    }
    Ok(Report {
        methods,
        skipped,
        plots,
        table,
    })
}
