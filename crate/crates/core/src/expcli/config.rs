//! Flat `key = value` sweep files.
//!
//! ```text
//! # global keys
//! preset = nstep_sweep          # optional; see PRESETS
//! runs = 30
//! base_seed = 0                 # `seed` is accepted as an alias
//! out = results
//! jobs = 4
//! select = sarsa_n1, sarsa_n20  # optional label filter
//! episodes = 500                # any hyperparameter key: default for every config
//!
//! # per-configuration keys; new labels need at least `family`
//! run.my_tb.family = tree_backup
//! run.my_tb.n = 5
//! run.my_tb.target_sync_period = 500
//! ```
//!
//! Precedence: built-in defaults, then global hyperparameters, then what the
//! preset fixes (algorithm and, for `target_freq`, sync period), then
//! `run.<label>.*` keys.

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use super::{SweepSpec, DEFAULT_RUNS};
use crate::expcli::{default_jobs, fmt_real};
use crate::targets::{AlgorithmSpec, Family, SigmaMode, DEFAULT_SIGMA_DECREMENT};
use crate::trainer::{ExperimentConfig, PolicySource};
use crate::{Error, Result};

pub const PRESETS: [&str; 3] = ["nstep_sweep", "target_freq", "on_vs_off"];

const NSTEP_VALUES: [usize; 5] = [1, 3, 5, 10, 20];
const SYNC_PERIODS: [u64; 3] = [500, 1000, 2000];

const HYPER_KEYS: [&str; 14] = [
    "episodes",
    "epsilon",
    "gamma",
    "timeout_steps",
    "hidden_units",
    "alpha",
    "grad_momentum",
    "squared_grad_momentum",
    "min_squared_grad",
    "buffer_capacity",
    "warmup_actions",
    "batch_size",
    "target_sync_period",
    "policy_source",
];

const ALGORITHM_KEYS: [&str; 5] = ["family", "n", "off_policy", "sigma", "cutoff_k"];

/// The six algorithms compared at every backup length.
fn six_algorithms(n: usize) -> [(&'static str, AlgorithmSpec); 6] {
    [
        ("sarsa", AlgorithmSpec::sarsa(n, false)),
        ("qsigma05", AlgorithmSpec::qsigma(n, SigmaMode::Fixed(0.5), false)),
        ("decaying_sigma", AlgorithmSpec::qsigma(n, SigmaMode::decaying(), false)),
        ("tree_backup", AlgorithmSpec::tree_backup(n)),
        ("retrace", AlgorithmSpec::retrace(n, 1.0)),
        ("qlearning", AlgorithmSpec::qlearning(n)),
    ]
}

fn preset_configs(name: &str, base: &ExperimentConfig) -> Option<Vec<(String, ExperimentConfig)>> {
    let with = |algorithm: AlgorithmSpec| ExperimentConfig {
        algorithm,
        ..base.clone()
    };
    let configs = match name {
        "nstep_sweep" => NSTEP_VALUES
            .iter()
            .flat_map(|&n| six_algorithms(n).map(|(a, spec)| (format!("{a}_n{n}"), with(spec))))
            .collect(),
        "target_freq" => SYNC_PERIODS
            .iter()
            .flat_map(|&p| {
                six_algorithms(20).map(|(a, spec)| {
                    let mut c = with(spec);
                    c.target_sync_period = p;
                    (format!("{a}_n20_sync{p}"), c)
                })
            })
            .collect(),
        "on_vs_off" => {
            let mut v = Vec::new();
            for (a, spec) in &six_algorithms(1)[..3] {
                for (suffix, off) in [("on", false), ("off", true)] {
                    let algorithm = AlgorithmSpec {
                        off_policy_correction: off,
                        ..*spec
                    };
                    v.push((format!("{a}_n1_{suffix}"), with(algorithm)));
                }
            }
            v
        }
        _ => return None,
    };
    Some(configs)
}

/// A preset with protocol defaults.
pub fn preset(name: &str) -> Option<SweepSpec> {
    preset_configs(name, &ExperimentConfig::default()).map(SweepSpec::new)
}

fn valid_label(label: &str) -> bool {
    !label.is_empty()
        && label
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_value<T: FromStr>(e: &Entry, what: &str) -> Result<T> {
    e.value.parse().map_err(|_| {
        parse_err(
            e.line,
            format!("`{}` expects {what}, got `{}`", e.key, e.value),
        )
    })
}

fn parse_sigma(s: &str) -> Option<SigmaMode> {
    if s == "decaying" {
        return Some(SigmaMode::decaying());
    }
    if let Some(args) = s.strip_prefix("decaying(").and_then(|r| r.strip_suffix(')')) {
        let (i, d) = args.split_once(',')?;
        return Some(SigmaMode::Decaying {
            initial: i.trim().parse().ok()?,
            decrement: d.trim().parse().ok()?,
        });
    }
    s.parse().ok().map(SigmaMode::Fixed)
}

fn render_sigma(mode: &SigmaMode) -> String {
    match *mode {
        SigmaMode::Fixed(s) => fmt_real(s),
        SigmaMode::Decaying { initial, decrement }
            if initial == 1.0 && decrement == DEFAULT_SIGMA_DECREMENT =>
        {
            "decaying".into()
        }
        SigmaMode::Decaying { initial, decrement } => {
            format!("decaying({}, {})", fmt_real(initial), fmt_real(decrement))
        }
    }
}

/// Applies a hyperparameter key; `Ok(false)` when `key` is not one.
fn set_hyper(cfg: &mut ExperimentConfig, key: &str, e: &Entry) -> Result<bool> {
    const REAL: &str = "a real number";
    const COUNT: &str = "a non-negative integer";
    match key {
        "episodes" => cfg.episodes = parse_value(e, COUNT)?,
        "epsilon" => cfg.epsilon = parse_value(e, REAL)?,
        "gamma" => cfg.gamma = parse_value(e, REAL)?,
        "timeout_steps" => cfg.timeout_steps = parse_value(e, COUNT)?,
        "hidden_units" => cfg.hidden_units = parse_value(e, COUNT)?,
        "alpha" => cfg.alpha = parse_value(e, REAL)?,
        "grad_momentum" => cfg.grad_momentum = parse_value(e, REAL)?,
        "squared_grad_momentum" => cfg.squared_grad_momentum = parse_value(e, REAL)?,
        "min_squared_grad" => cfg.min_squared_grad = parse_value(e, REAL)?,
        "buffer_capacity" => cfg.buffer_capacity = parse_value(e, COUNT)?,
        "warmup_actions" => cfg.warmup_actions = parse_value(e, COUNT)?,
        "batch_size" => cfg.batch_size = parse_value(e, COUNT)?,
        "target_sync_period" => cfg.target_sync_period = parse_value(e, COUNT)?,
        "policy_source" => {
            cfg.policy_source = PolicySource::parse(e.value).ok_or_else(|| {
                parse_err(e.line, format!("`{}` expects target_net or online_net", e.key))
            })?
        }
        _ => return Ok(false),
    }
    Ok(true)
}

fn get_hyper(cfg: &ExperimentConfig, key: &str) -> String {
    match key {
        "episodes" => cfg.episodes.to_string(),
        "epsilon" => fmt_real(cfg.epsilon),
        "gamma" => fmt_real(cfg.gamma),
        "timeout_steps" => cfg.timeout_steps.to_string(),
        "hidden_units" => cfg.hidden_units.to_string(),
        "alpha" => fmt_real(cfg.alpha),
        "grad_momentum" => fmt_real(cfg.grad_momentum),
        "squared_grad_momentum" => fmt_real(cfg.squared_grad_momentum),
        "min_squared_grad" => fmt_real(cfg.min_squared_grad),
        "buffer_capacity" => cfg.buffer_capacity.to_string(),
        "warmup_actions" => cfg.warmup_actions.to_string(),
        "batch_size" => cfg.batch_size.to_string(),
        "target_sync_period" => cfg.target_sync_period.to_string(),
        "policy_source" => cfg.policy_source.name().to_string(),
        _ => unreachable!("not a hyperparameter key: {key}"),
    }
}

fn set_algorithm(alg: &mut AlgorithmSpec, key: &str, e: &Entry) -> Result<()> {
    match key {
        "family" => {
            alg.family = Family::parse(e.value).ok_or_else(|| {
                parse_err(e.line, format!("unknown family `{}`", e.value))
            })?
        }
        "n" => alg.n = parse_value(e, "a positive integer")?,
        "off_policy" => alg.off_policy_correction = parse_value(e, "true or false")?,
        "sigma" => {
            alg.sigma_mode = parse_sigma(e.value).ok_or_else(|| {
                parse_err(
                    e.line,
                    format!("`{}` expects a number, `decaying` or `decaying(initial, decrement)`", e.key),
                )
            })?
        }
        "cutoff_k" => alg.cutoff_k = parse_value(e, "a real number")?,
        _ => unreachable!(),
    }
    Ok(())
}

/// Parses a sweep file into a validated [`SweepSpec`].
pub fn parse_config(text: &str) -> Result<SweepSpec> {
    let mut entries = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(parse_err(line, "expected `key = value`"));
        }
        let canonical = if key == "seed" { "base_seed" } else { key };
        if let Some(first) = seen.insert(canonical, line) {
            return Err(parse_err(line, format!("`{key}` already set on line {first}")));
        }
        entries.push(Entry { line, key, value });
    }
    let last_line = text.lines().count().max(1);

    let mut base = ExperimentConfig::default();
    let mut preset_entry = None;
    let mut select = None;
    let mut runs = DEFAULT_RUNS;
    let mut base_seed = 0u64;
    let mut out_dir = PathBuf::from("results");
    let mut jobs = default_jobs();
    let mut global_line = 0;
    let mut per_run: Vec<(&str, Vec<&Entry>)> = Vec::new();

    for e in &entries {
        if let Some(rest) = e.key.strip_prefix("run.") {
            let (label, field) = rest
                .split_once('.')
                .ok_or_else(|| parse_err(e.line, "expected `run.<label>.<field>`"))?;
            if !valid_label(label) {
                return Err(parse_err(
                    e.line,
                    format!("label `{label}` may only contain letters, digits, `_` and `-`"),
                ));
            }
            if !ALGORITHM_KEYS.contains(&field) && !HYPER_KEYS.contains(&field) {
                return Err(parse_err(e.line, format!("unknown field `{field}`")));
            }
            match per_run.iter_mut().find(|(l, _)| *l == label) {
                Some((_, v)) => v.push(e),
                None => per_run.push((label, vec![e])),
            }
            continue;
        }
        match e.key {
            "preset" => preset_entry = Some(e),
            "select" => select = Some(e),
            "runs" => runs = parse_value(e, "a positive integer")?,
            "seed" | "base_seed" => base_seed = parse_value(e, "an unsigned 64-bit integer")?,
            "out" => out_dir = PathBuf::from(e.value),
            "jobs" => jobs = parse_value(e, "a positive integer")?,
            key => {
                if !set_hyper(&mut base, key, e)? {
                    return Err(parse_err(e.line, format!("unknown key `{key}`")));
                }
                global_line = global_line.max(e.line);
            }
        }
        if (e.key == "runs" && runs == 0) || (e.key == "jobs" && jobs == 0) {
            return Err(parse_err(e.line, format!("`{}` must be at least 1", e.key)));
        }
    }

    let mut configs = match preset_entry {
        Some(e) => preset_configs(e.value, &base).ok_or_else(|| {
            parse_err(
                e.line,
                format!("unknown preset `{}` (known: {})", e.value, PRESETS.join(", ")),
            )
        })?,
        None => Vec::new(),
    };
    let preset_line = preset_entry.map_or(0, |e| e.line);
    // Line blamed when a configuration fails validation.
    let mut blame: HashMap<String, usize> = configs
        .iter()
        .map(|(l, _)| (l.clone(), global_line.max(preset_line)))
        .collect();

    for (label, fields) in &per_run {
        let idx = match configs.iter().position(|(l, _)| l == label) {
            Some(i) => i,
            None => {
                if !fields.iter().any(|e| e.key.ends_with(".family")) {
                    return Err(parse_err(
                        fields[0].line,
                        format!("new configuration `{label}` needs `run.{label}.family`"),
                    ));
                }
                configs.push((label.to_string(), base.clone()));
                configs.len() - 1
            }
        };
        let cfg = &mut configs[idx].1;
        for e in fields {
            let field = e.key.rsplit('.').next().unwrap_or_default();
            if ALGORITHM_KEYS.contains(&field) {
                set_algorithm(&mut cfg.algorithm, field, e)?;
            } else {
                set_hyper(cfg, field, e)?;
            }
        }
        let line = fields.iter().map(|e| e.line).max().unwrap_or(0);
        let b = blame.entry(label.to_string()).or_insert(0);
        *b = (*b).max(line);
    }

    if let Some(e) = select {
        let wanted: Vec<&str> = e.value.split(',').map(str::trim).collect();
        for w in &wanted {
            if !configs.iter().any(|(l, _)| l == w) {
                return Err(parse_err(e.line, format!("`select` names unknown label `{w}`")));
            }
        }
        configs.retain(|(l, _)| wanted.contains(&l.as_str()));
    }

    if configs.is_empty() {
        return Err(parse_err(
            last_line,
            "no configurations: set `preset` or define `run.<label>.family`",
        ));
    }
    for (label, cfg) in &configs {
        cfg.validate().map_err(|err| {
            parse_err(
                blame.get(label).copied().filter(|&l| l > 0).unwrap_or(last_line),
                format!("configuration `{label}`: {err}"),
            )
        })?;
    }

    Ok(SweepSpec {
        configs,
        runs_per_config: runs,
        base_seed,
        out_dir,
        jobs,
    })
}

/// Renders a spec so that `parse_config(&render(s)) == s` (seeds inside the
/// configurations are not part of the format).
pub fn render(spec: &SweepSpec) -> String {
    let default = ExperimentConfig::default();
    let mut s = String::new();
    s.push_str(&format!("runs = {}\n", spec.runs_per_config));
    s.push_str(&format!("base_seed = {}\n", spec.base_seed));
    s.push_str(&format!("out = {}\n", spec.out_dir.display()));
    s.push_str(&format!("jobs = {}\n", spec.jobs));
    for (label, cfg) in &spec.configs {
        let a = &cfg.algorithm;
        s.push('\n');
        s.push_str(&format!("run.{label}.family = {}\n", a.family.name()));
        s.push_str(&format!("run.{label}.n = {}\n", a.n));
        let d = &default.algorithm;
        if a.off_policy_correction != d.off_policy_correction {
            s.push_str(&format!("run.{label}.off_policy = {}\n", a.off_policy_correction));
        }
        if a.sigma_mode != d.sigma_mode {
            s.push_str(&format!("run.{label}.sigma = {}\n", render_sigma(&a.sigma_mode)));
        }
        if a.cutoff_k != d.cutoff_k {
            s.push_str(&format!("run.{label}.cutoff_k = {}\n", fmt_real(a.cutoff_k)));
        }
        for key in HYPER_KEYS {
            let v = get_hyper(cfg, key);
            if v != get_hyper(&default, key) {
                s.push_str(&format!("run.{label}.{key} = {v}\n"));
            }
        }
    }
    s
}
