//! Experiment plumbing: sweep configuration files, presets for the three
//! studies, multi-seed execution and CSV output.
//!
//! Output layout under a sweep's `out` directory:
//!
//! | file | contents |
//! |---|---|
//! | `runs/<label>__<seed>.csv` | per-run scratch file, written atomically |
//! | `episodes.csv` | `label,seed,episode,return,steps,timed_out` |
//! | `summary.csv` | `label,window,n_runs,mean,sd,ci_low,ci_high` |
//! | `welch.csv` | `label_a,label_b,window,t,dof,p` for every label pair |
//! | `runs.csv` | wall time and counters per run |
//! | `sweep.conf` | the resolved sweep, re-parseable |
//! | `plot.csv` | `label,interval,mean,ci_low,ci_high,n_runs` |

mod config;
mod plot;
mod sweep;

use std::path::PathBuf;

use crate::trainer::ExperimentConfig;

pub use config::{parse_config, preset, render, PRESETS};
pub use plot::{emit_plot_data, PlotRow};
pub use sweep::{
    label_window_means, read_episodes, run_sweep, run_sweep_with, summarize_dir, summary_of,
    welch_between, RunFailure, RunRows, SummaryRow, SweepReport, EPISODES_HEADER,
    SUMMARY_HEADER, WELCH_HEADER,
};

pub const DEFAULT_RUNS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Labelled configurations; the `seed` field of each is ignored.
    pub configs: Vec<(String, ExperimentConfig)>,
    pub runs_per_config: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl SweepSpec {
    pub fn new(configs: Vec<(String, ExperimentConfig)>) -> Self {
        Self {
            configs,
            runs_per_config: DEFAULT_RUNS,
            base_seed: 0,
            out_dir: PathBuf::from("results"),
            jobs: default_jobs(),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.configs.iter().map(|(l, _)| l.as_str())
    }

    /// Seed of run `i` of configuration `label`.
    pub fn seed_for(&self, label: &str, i: usize) -> u64 {
        derive_seed(self.base_seed, label, i)
    }

    /// Every `(label, config with seed set)` pair of the sweep, in order.
    pub fn runs(&self) -> Vec<(String, ExperimentConfig)> {
        let mut out = Vec::with_capacity(self.configs.len() * self.runs_per_config);
        for (label, cfg) in &self.configs {
            for i in 0..self.runs_per_config {
                let mut c = cfg.clone();
                c.seed = self.seed_for(label, i);
                out.push((label.clone(), c));
            }
        }
        out
    }
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `base ⊕ mix(label hash, i)`; pure integer arithmetic, so stable everywhere.
pub fn derive_seed(base: u64, label: &str, i: usize) -> u64 {
    base ^ splitmix64(fnv1a64(label.as_bytes()) ^ splitmix64(i as u64))
}

/// Shortest fixed or exponent form carrying 17 significant digits, like C's `%.17g`.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
