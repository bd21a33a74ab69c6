//! Sweep execution and the CSV collector.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{fmt_real, fnv1a64, render, SweepSpec};
use crate::stats::{self, SummaryStats, WelchResult, Window};
use crate::trainer::{self, Counters, EpisodeRecord, ExperimentConfig};
use crate::{Error, Result};

pub const EPISODES_HEADER: [&str; 6] = ["label", "seed", "episode", "return", "steps", "timed_out"];
pub const SUMMARY_HEADER: [&str; 7] = ["label", "window", "n_runs", "mean", "sd", "ci_low", "ci_high"];
pub const WELCH_HEADER: [&str; 6] = ["label_a", "label_b", "window", "t", "dof", "p"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub label: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    /// Runs trained by this invocation.
    pub executed: usize,
    /// Runs found complete on disk and reused.
    pub reused: usize,
    pub failures: Vec<RunFailure>,
}

impl SweepReport {
    pub fn all_completed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Episodes of one (label, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRows {
    pub label: String,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
}

impl RunRows {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.return_).collect()
    }
}

struct RunFile {
    rows: RunRows,
    wall_seconds: f64,
    counters: Counters,
}

/// Bumped whenever training numerics change, so cached runs are not reused.
pub const RESULTS_VERSION: u32 = 2;

fn fingerprint(cfg: &ExperimentConfig) -> String {
    let key = format!("v{RESULTS_VERSION} {cfg:?}");
    format!("{:016x}", fnv1a64(key.as_bytes()))
}

fn run_file_path(out: &Path, label: &str, seed: u64) -> PathBuf {
    out.join("runs").join(format!("{label}__{seed}.csv"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn episode_row(w: &mut csv::Writer<Vec<u8>>, label: &str, seed: u64, e: &EpisodeRecord) -> Result<()> {
    w.write_record([
        label.to_string(),
        seed.to_string(),
        e.episode_index.to_string(),
        fmt_real(e.return_),
        e.steps.to_string(),
        e.timed_out.to_string(),
    ])?;
    Ok(())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn write_run_file(out: &Path, label: &str, result: &trainer::RunResult) -> Result<()> {
    let c = &result.counters;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EPISODES_HEADER)?;
    for e in &result.episodes {
        episode_row(&mut w, label, result.seed, e)?;
    }
    let mut bytes = format!(
        "# fingerprint={} wall_seconds={} env_steps={} decision_entries={} terminal_entries={} training_updates={} target_syncs={}\n",
        fingerprint(&result.config),
        fmt_real(result.wall_seconds),
        c.env_steps,
        c.decision_entries,
        c.terminal_entries,
        c.training_updates,
        c.target_syncs,
    )
    .into_bytes();
    bytes.extend(finish(w)?);
    write_atomic(&run_file_path(out, label, result.seed), &bytes)
}

fn bad_row(path: &Path, line: usize, what: &str) -> Error {
    Error::Parse {
        line,
        message: format!("{}: {what}", path.display()),
    }
}

fn parse_episode_row(path: &Path, rec: &csv::StringRecord) -> Result<(String, u64, EpisodeRecord)> {
    let line = rec.position().map_or(0, |p| p.line() as usize);
    if rec.len() != EPISODES_HEADER.len() {
        return Err(bad_row(path, line, "wrong number of fields"));
    }
    let field = |i: usize| &rec[i];
    let num = |i: usize| -> Result<u64> {
        field(i)
            .parse()
            .map_err(|_| bad_row(path, line, &format!("bad {}", EPISODES_HEADER[i])))
    };
    let return_: f64 = field(3)
        .parse()
        .map_err(|_| bad_row(path, line, "bad return"))?;
    let timed_out: bool = field(5)
        .parse()
        .map_err(|_| bad_row(path, line, "bad timed_out"))?;
    Ok((
        field(0).to_string(),
        num(1)?,
        EpisodeRecord {
            episode_index: num(2)? as usize,
            return_,
            steps: num(4)? as usize,
            timed_out,
        },
    ))
}

/// Loads a run file if it is complete and was produced by `cfg`.
fn load_run_file(out: &Path, label: &str, cfg: &ExperimentConfig) -> Result<Option<RunFile>> {
    let path = run_file_path(out, label, cfg.seed);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let Some(meta) = text.lines().next().and_then(|l| l.strip_prefix("# ")) else {
        return Ok(None);
    };
    let meta: Vec<(&str, &str)> = meta.split(' ').filter_map(|kv| kv.split_once('=')).collect();
    let get = |k: &str| meta.iter().find(|(key, _)| *key == k).map(|(_, v)| *v);
    if get("fingerprint") != Some(fingerprint(cfg).as_str()) {
        return Ok(None);
    }
    let count = |k: &str| get(k).and_then(|v| v.parse::<u64>().ok()).unwrap_or(0);
    let counters = Counters {
        env_steps: count("env_steps"),
        decision_entries: count("decision_entries"),
        terminal_entries: count("terminal_entries"),
        training_updates: count("training_updates"),
        target_syncs: count("target_syncs"),
    };
    let wall_seconds = get("wall_seconds").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut episodes = Vec::with_capacity(cfg.episodes);
    for rec in reader.records() {
        let (l, seed, e) = parse_episode_row(&path, &rec?)?;
        if l != label || seed != cfg.seed || e.episode_index != episodes.len() {
            return Ok(None);
        }
        episodes.push(e);
    }
    if episodes.len() != cfg.episodes {
        return Ok(None);
    }
    Ok(Some(RunFile {
        rows: RunRows {
            label: label.to_string(),
            seed: cfg.seed,
            episodes,
        },
        wall_seconds,
        counters,
    }))
}

fn execute(out: &Path, label: &str, cfg: &ExperimentConfig) -> Result<f64> {
    let result = trainer::run(cfg)?;
    write_run_file(out, label, &result)?;
    Ok(result.wall_seconds)
}

/// [`run_sweep_with`] reporting progress on stderr.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    run_sweep_with(spec, |msg| eprintln!("{msg}"))
}

/// Runs every missing (label, seed) pair on a pool of `spec.jobs` threads,
/// then collects all completed runs into the result files.
///
/// Setup and collector failures are returned as errors; a failing run is
/// recorded in the report and the sweep carries on.
pub fn run_sweep_with<P>(spec: &SweepSpec, progress: P) -> Result<SweepReport>
where
    P: Fn(&str) + Sync,
{
    let out = spec.out_dir.as_path();
    fs::create_dir_all(out.join("runs")).map_err(|e| Error::io(out.join("runs"), e))?;
    write_atomic(&out.join("sweep.conf"), render(spec).as_bytes())?;

    let all = spec.runs();
    let mut report = SweepReport::default();
    let mut pending = Vec::new();
    for (label, cfg) in &all {
        match load_run_file(out, label, cfg) {
            Ok(Some(_)) => report.reused += 1,
            _ => pending.push((label, cfg)),
        }
    }

    let total = pending.len();
    let done = AtomicUsize::new(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| {
        pending
            .par_iter()
            .map(|&(label, cfg)| {
                let outcome = execute(out, label, cfg);
                let k = done.fetch_add(1, Ordering::Relaxed) + 1;
                match &outcome {
                    Ok(secs) => progress(&format!("[{k}/{total}] {label} seed {} done in {secs:.1}s", cfg.seed)),
                    Err(e) => progress(&format!("[{k}/{total}] {label} seed {} FAILED: {e}", cfg.seed)),
                }
                outcome.map_err(|e| RunFailure {
                    label: label.clone(),
                    seed: cfg.seed,
                    message: e.to_string(),
                })
            })
            .collect()
    });
    for o in outcomes {
        match o {
            Ok(_) => report.executed += 1,
            Err(f) => report.failures.push(f),
        }
    }

    collect(spec, &all)?;
    Ok(report)
}

/// Merges completed run files into episodes.csv, runs.csv, summary.csv and welch.csv.
fn collect(spec: &SweepSpec, all: &[(String, ExperimentConfig)]) -> Result<()> {
    let out = spec.out_dir.as_path();
    let mut episodes = csv::Writer::from_writer(Vec::new());
    episodes.write_record(EPISODES_HEADER)?;
    let mut runs_csv = csv::Writer::from_writer(Vec::new());
    runs_csv.write_record([
        "label",
        "seed",
        "status",
        "wall_seconds",
        "env_steps",
        "training_updates",
        "target_syncs",
    ])?;
    let mut runs = Vec::new();
    for (label, cfg) in all {
        match load_run_file(out, label, cfg).ok().flatten() {
            Some(f) => {
                for e in &f.rows.episodes {
                    episode_row(&mut episodes, label, cfg.seed, e)?;
                }
                let c = f.counters;
                runs_csv.write_record([
                    label.clone(),
                    cfg.seed.to_string(),
                    "completed".into(),
                    fmt_real(f.wall_seconds),
                    c.env_steps.to_string(),
                    c.training_updates.to_string(),
                    c.target_syncs.to_string(),
                ])?;
                runs.push(f.rows);
            }
            None => {
                runs_csv.write_record([label.as_str(), &cfg.seed.to_string(), "missing", "", "", "", ""])?;
            }
        }
    }
    write_atomic(&out.join("episodes.csv"), &finish(episodes)?)?;
    write_atomic(&out.join("runs.csv"), &finish(runs_csv)?)?;
    let labels: Vec<String> = spec.labels().map(str::to_string).collect();
    write_statistics(out, &runs, &labels)?;
    Ok(())
}

/// Reads episodes.csv back into per-run groups, in file order.
pub fn read_episodes(out_dir: &Path) -> Result<Vec<RunRows>> {
    let path = out_dir.join("episodes.csv");
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    if reader.headers()? != EPISODES_HEADER.as_slice() {
        return Err(bad_row(&path, 1, "unexpected header"));
    }
    let mut runs: Vec<RunRows> = Vec::new();
    for rec in reader.records() {
        let (label, seed, e) = parse_episode_row(&path, &rec?)?;
        match runs.last_mut() {
            Some(r) if r.label == label && r.seed == seed => r.episodes.push(e),
            _ => runs.push(RunRows {
                label,
                seed,
                episodes: vec![e],
            }),
        }
    }
    Ok(runs)
}

/// Per-run window means of one label; `None` if some run is too short.
pub fn label_window_means(runs: &[RunRows], label: &str, window: Window) -> Option<Vec<f64>> {
    runs.iter()
        .filter(|r| r.label == label)
        .map(|r| stats::window_mean(&r.episodes, window).ok())
        .collect()
}

fn labels_in_order(runs: &[RunRows]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for r in runs {
        if !labels.contains(&r.label) {
            labels.push(r.label.clone());
        }
    }
    labels
}

/// One summary.csv row; statistics are NaN with fewer than two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub window: Window,
    pub n_runs: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn summary_row(label: &str, window: Window, values: &[f64]) -> SummaryRow {
    let (mean, sd, ci_low, ci_high) = match stats::summarize(values) {
        Ok(s) => (s.mean, s.sample_sd, s.ci_low, s.ci_high),
        Err(_) if values.len() == 1 => (values[0], f64::NAN, f64::NAN, f64::NAN),
        Err(_) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
    };
    SummaryRow {
        label: label.to_string(),
        window,
        n_runs: values.len(),
        mean,
        sd,
        ci_low,
        ci_high,
    }
}

fn write_statistics(out: &Path, runs: &[RunRows], labels: &[String]) -> Result<Vec<SummaryRow>> {
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(SUMMARY_HEADER)?;
    let mut welch = csv::Writer::from_writer(Vec::new());
    welch.write_record(WELCH_HEADER)?;
    let mut rows = Vec::new();
    for window in Window::STANDARD {
        let means: Vec<(&String, Vec<f64>)> = labels
            .iter()
            .filter_map(|l| label_window_means(runs, l, window).map(|m| (l, m)))
            .filter(|(_, m)| !m.is_empty())
            .collect();
        for (label, values) in &means {
            rows.push(summary_row(label, window, values));
        }
        for (i, (la, a)) in means.iter().enumerate() {
            for (lb, b) in &means[i + 1..] {
                if let Ok(r) = stats::welch_test(a, b) {
                    welch.write_record([
                        la.as_str(),
                        lb.as_str(),
                        &window.name(),
                        &fmt_real(r.t_stat),
                        &fmt_real(r.dof),
                        &fmt_real(r.p_value),
                    ])?;
                }
            }
        }
    }
    // Rows grouped by label, windows in standard order.
    rows.sort_by_key(|r| labels.iter().position(|l| *l == r.label));
    for r in &rows {
        summary.write_record([
            r.label.clone(),
            r.window.name(),
            r.n_runs.to_string(),
            fmt_real(r.mean),
            fmt_real(r.sd),
            fmt_real(r.ci_low),
            fmt_real(r.ci_high),
        ])?;
    }
    write_atomic(&out.join("summary.csv"), &finish(summary)?)?;
    write_atomic(&out.join("welch.csv"), &finish(welch)?)?;
    Ok(rows)
}

/// Recomputes summary.csv and welch.csv from episodes.csv.
pub fn summarize_dir(out_dir: &Path) -> Result<Vec<SummaryRow>> {
    let runs = read_episodes(out_dir)?;
    write_statistics(out_dir, &runs, &labels_in_order(&runs))
}

/// Welch's test between two labels of a results directory.
pub fn welch_between(out_dir: &Path, a: &str, b: &str, window: Window) -> Result<WelchResult> {
    let runs = read_episodes(out_dir)?;
    let means = |label: &str| -> Result<Vec<f64>> {
        let m = label_window_means(&runs, label, window).ok_or_else(|| {
            Error::Config(format!("label `{label}` has runs shorter than window {}", window.name()))
        })?;
        if m.is_empty() {
            return Err(Error::Config(format!("no runs for label `{label}`")));
        }
        Ok(m)
    };
    stats::welch_test(&means(a)?, &means(b)?)
}

/// Summary of one label and window from a results directory.
pub fn summary_of(out_dir: &Path, label: &str, window: Window) -> Result<SummaryStats> {
    let runs = read_episodes(out_dir)?;
    let m = label_window_means(&runs, label, window).unwrap_or_default();
    stats::summarize(&m)
}
