//! Run-level performance summaries: window means, Student-t confidence
//! intervals and Welch's unequal-variance t-test.

use statrs::function::beta::beta_reg;

use crate::trainer::EpisodeRecord;
use crate::{Error, Result};

pub const CONFIDENCE: f64 = 0.95;

/// Episode range a per-run mean is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Window {
    First(usize),
    Last(usize),
    All,
}

impl Window {
    pub const FIRST50: Window = Window::First(50);
    pub const LAST50: Window = Window::Last(50);
    pub const STANDARD: [Window; 3] = [Window::FIRST50, Window::LAST50, Window::All];

    pub fn name(&self) -> String {
        match self {
            Window::First(k) => format!("first{k}"),
            Window::Last(k) => format!("last{k}"),
            Window::All => "all".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "all" {
            return Some(Window::All);
        }
        let (ctor, digits): (fn(usize) -> Window, &str) = if let Some(d) = s.strip_prefix("first") {
            (Window::First, d)
        } else {
            (Window::Last, s.strip_prefix("last")?)
        };
        digits.parse().ok().filter(|&k| k > 0).map(ctor)
    }

    pub fn slice<'a, T>(&self, xs: &'a [T]) -> Result<&'a [T]> {
        let k = match *self {
            Window::All => xs.len().max(1),
            Window::First(k) | Window::Last(k) => k,
        };
        if k > xs.len() {
            return Err(Error::WindowTooLarge {
                window: k,
                available: xs.len(),
            });
        }
        Ok(match *self {
            Window::First(k) => &xs[..k],
            Window::Last(k) => &xs[xs.len() - k..],
            Window::All => xs,
        })
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Mean episode return of one run over `window`.
pub fn window_mean(records: &[EpisodeRecord], window: Window) -> Result<f64> {
    let slice = window.slice(records)?;
    Ok(slice.iter().map(|r| r.return_).sum::<f64>() / slice.len() as f64)
}

/// Same as [`window_mean`] over bare returns.
pub fn window_mean_of(returns: &[f64], window: Window) -> Result<f64> {
    Ok(mean(window.slice(returns)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub n_samples: usize,
    pub mean: f64,
    pub sample_sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SummaryStats {
    /// Two-sided 95% t interval from a mean, sample SD and count.
    pub fn from_moments(mean: f64, sample_sd: f64, n_samples: usize) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: n_samples,
            });
        }
        let half = t_quantile(0.5 + CONFIDENCE / 2.0, (n_samples - 1) as f64)
            * sample_sd
            / (n_samples as f64).sqrt();
        Ok(Self {
            n_samples,
            mean,
            sample_sd,
            ci_low: mean - half,
            ci_high: mean + half,
        })
    }
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: values.len(),
        });
    }
    SummaryStats::from_moments(mean(values), sample_sd(values), values.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t_stat: f64,
    pub dof: f64,
    /// Two-sided.
    pub p_value: f64,
}

pub fn welch_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    for xs in [a, b] {
        if xs.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: xs.len(),
            });
        }
    }
    welch_from_moments(
        (mean(a), sample_sd(a), a.len()),
        (mean(b), sample_sd(b), b.len()),
    )
}

pub fn welch_from_summaries(a: &SummaryStats, b: &SummaryStats) -> Result<WelchResult> {
    welch_from_moments(
        (a.mean, a.sample_sd, a.n_samples),
        (b.mean, b.sample_sd, b.n_samples),
    )
}

/// Welch's test from `(mean, sample_sd, n)` of each sample.
pub fn welch_from_moments(a: (f64, f64, usize), b: (f64, f64, usize)) -> Result<WelchResult> {
    let (ma, sa, na) = a;
    let (mb, sb, nb) = b;
    if na < 2 || nb < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: na.min(nb),
        });
    }
    let va = sa * sa / na as f64;
    let vb = sb * sb / nb as f64;
    let se2 = va + vb;
    if !(se2 > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let t_stat = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (va * va / (na - 1) as f64 + vb * vb / (nb - 1) as f64);
    let p_value = (2.0 * t_cdf(-t_stat.abs(), dof)).min(1.0);
    Ok(WelchResult {
        t_stat,
        dof,
        p_value,
    })
}

/// Student-t CDF through the regularized incomplete beta function.
pub fn t_cdf(x: f64, dof: f64) -> f64 {
    assert!(dof > 0.0, "degrees of freedom must be positive");
    if x.is_nan() {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.5;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta_reg(0.5 * dof, 0.5, dof / (dof + x * x));
    if x < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Inverse of [`t_cdf`] by bracketing and bisection.
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "probability out of range");
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -t_quantile(1.0 - p, dof);
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
