//! n-step targets for Sarsa, Tree Backup, Q(σ), Retrace and Q-learning.
//!
//! A [`Segment`] holds the transitions `t, t+1, …, t+m` of one episode. Entry
//! `t` is the state-action pair being updated; entries `1..=m` supply the
//! rewards `R_{t+1..t+m}` and the states the target looks at. Every family is
//! evaluated by the same backward recursion
//!
//! ```text
//! G(k-1) = R_{t+k} + γ·V(k)
//! V(k)   = w_k·G(k) + s_k          for interior positions 1 ≤ k < m
//! V(m)   = w_m·base + s_m          (0 when entry m is terminal)
//! ```
//!
//! where the weight `w_k` on the sampled continuation and the side term `s_k`
//! (expected value over the actions not continued) depend on the family:
//!
//! | family            | `w_k`                    | `s_k`                           | base            |
//! |-------------------|--------------------------|---------------------------------|-----------------|
//! | Sarsa             | `1` or `ρ_k`             | `0`                             | `Q(S_m, A_m)`   |
//! | Tree Backup       | `π(A_k)`                 | `Σ_{a≠A_k} π(a) Q(S_k, a)`      | `Q(S_m, A_m)`   |
//! | Q(σ)              | `σ_k(1 or ρ_k) + (1−σ_k)π(A_k)` | `(1−σ_k) Σ_{a≠A_k} π(a) Q(S_k, a)` | `Q(S_m, A_m)` |
//! | Retrace           | `c_k = min(k̄, ρ_k)`      | `Σ_a π(a) Q(S_k, a) − c_k Q(S_k, A_k)` | `Q(S_m, A_m)` |
//! | Q-learning        | `1`                      | `0`                             | `max_a Q(S_m, a)` |
//!
//! `ρ_k = π(A_k|S_k) / μ_k` uses the behaviour probability stored with the
//! transition and the policy at update time.

use crate::replay::Transition;
use crate::valuenet::NetParams;
use crate::{ActionValues, Error, Result, NUM_ACTIONS};

/// Stored behaviour probabilities below this are rejected as ratio denominators.
pub const MIN_STORED_PROB: f64 = 1e-9;

pub const DEFAULT_SIGMA_DECREMENT: f64 = 0.002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Sarsa,
    TreeBackup,
    QSigma,
    Retrace,
    QLearning,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Sarsa,
        Family::TreeBackup,
        Family::QSigma,
        Family::Retrace,
        Family::QLearning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sarsa => "sarsa",
            Family::TreeBackup => "tree_backup",
            Family::QSigma => "qsigma",
            Family::Retrace => "retrace",
            Family::QLearning => "qlearning",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// Source of the σ value stored with each transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaMode {
    Fixed(f64),
    /// `max(0, initial − decrement·episode)`.
    Decaying { initial: f64, decrement: f64 },
}

impl SigmaMode {
    pub fn decaying() -> Self {
        SigmaMode::Decaying {
            initial: 1.0,
            decrement: DEFAULT_SIGMA_DECREMENT,
        }
    }

    pub fn at_episode(&self, episode: usize) -> f64 {
        match *self {
            SigmaMode::Fixed(sigma) => sigma,
            SigmaMode::Decaying { initial, decrement } => {
                (initial - decrement * episode as f64).max(0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmSpec {
    pub family: Family,
    pub n: usize,
    /// Importance-sampling correction for Sarsa and Q(σ); ignored otherwise.
    pub off_policy_correction: bool,
    pub sigma_mode: SigmaMode,
    /// Retrace truncation level.
    pub cutoff_k: f64,
}

impl AlgorithmSpec {
    pub fn new(family: Family, n: usize) -> Self {
        Self {
            family,
            n,
            off_policy_correction: false,
            sigma_mode: SigmaMode::Fixed(1.0),
            cutoff_k: 1.0,
        }
    }

    pub fn sarsa(n: usize, off_policy: bool) -> Self {
        Self {
            off_policy_correction: off_policy,
            ..Self::new(Family::Sarsa, n)
        }
    }

    pub fn tree_backup(n: usize) -> Self {
        Self::new(Family::TreeBackup, n)
    }

    pub fn qsigma(n: usize, sigma_mode: SigmaMode, off_policy: bool) -> Self {
        Self {
            off_policy_correction: off_policy,
            sigma_mode,
            ..Self::new(Family::QSigma, n)
        }
    }

    pub fn retrace(n: usize, cutoff_k: f64) -> Self {
        Self {
            cutoff_k,
            ..Self::new(Family::Retrace, n)
        }
    }

    pub fn qlearning(n: usize) -> Self {
        Self::new(Family::QLearning, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("backup length n must be at least 1".into()));
        }
        let sigma_ok = match self.sigma_mode {
            SigmaMode::Fixed(s) => (0.0..=1.0).contains(&s),
            SigmaMode::Decaying { initial, decrement } => {
                (0.0..=1.0).contains(&initial) && decrement >= 0.0 && decrement.is_finite()
            }
        };
        if !sigma_ok {
            return Err(Error::Config(format!("invalid sigma {:?}", self.sigma_mode)));
        }
        if !(self.cutoff_k > 0.0 && self.cutoff_k.is_finite()) {
            return Err(Error::Config(format!(
                "retrace cutoff must be positive, got {}",
                self.cutoff_k
            )));
        }
        Ok(())
    }

    /// Whether importance ratios enter the target.
    pub fn corrects(&self) -> bool {
        matches!(self.family, Family::Sarsa | Family::QSigma) && self.off_policy_correction
    }

    /// Whether values at interior positions are read (everything except
    /// uncorrected Sarsa and Q-learning, which only bootstrap at the end).
    pub fn needs_interior_values(&self) -> bool {
        match self.family {
            Family::Sarsa => self.off_policy_correction,
            Family::QLearning => false,
            Family::TreeBackup | Family::QSigma | Family::Retrace => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDist {
    pub probs: [f64; NUM_ACTIONS],
}

impl PolicyDist {
    pub fn new(probs: [f64; NUM_ACTIONS]) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::contract(format!("not a distribution: {probs:?}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / NUM_ACTIONS as f64; NUM_ACTIONS],
        }
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    pub fn expectation(&self, q: &ActionValues) -> f64 {
        self.probs.iter().zip(q).map(|(p, v)| p * v).sum()
    }

    /// `Σ_{a ≠ skip} π(a) q(a)`.
    pub fn expectation_excluding(&self, q: &ActionValues, skip: usize) -> f64 {
        self.probs
            .iter()
            .zip(q)
            .enumerate()
            .filter(|(a, _)| *a != skip)
            .map(|(_, (p, v))| p * v)
            .sum()
    }

    /// Inverse-CDF draw from a unit uniform.
    pub fn sample_from_unit(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (a, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        // rounding left u above the accumulated mass
        self.probs
            .iter()
            .rposition(|&p| p > 0.0)
            .unwrap_or(NUM_ACTIONS - 1)
    }
}

/// First index of the maximum; ties go to the lowest action.
pub fn greedy_action(q: &ActionValues) -> usize {
    let mut best = 0;
    for a in 1..NUM_ACTIONS {
        if q[a] > q[best] {
            best = a;
        }
    }
    best
}

pub fn epsilon_greedy_probs(q: &ActionValues, epsilon: f64) -> PolicyDist {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    let mut probs = [epsilon / NUM_ACTIONS as f64; NUM_ACTIONS];
    probs[greedy_action(q)] += 1.0 - epsilon;
    PolicyDist { probs }
}

/// Target-network values and update-time policy at one segment position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepValues {
    pub q: ActionValues,
    pub policy: PolicyDist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentEnd {
    /// n reward steps were available.
    Full,
    /// The last entry is a terminal state.
    Terminal,
    /// Stopped at a timeout boundary or at the newest stored entry.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Entries `t..=t+m`; `entries[0]` is the updated pair.
    pub entries: Vec<Transition>,
    pub end: SegmentEnd,
    /// Values at positions `1..m`; may be left empty for families that do not
    /// read them.
    pub interior: Vec<StepValues>,
    /// Values at position `m`; absent for terminal segments.
    pub bootstrap: Option<StepValues>,
}

impl Segment {
    pub fn new(entries: Vec<Transition>, end: SegmentEnd) -> Self {
        Self {
            entries,
            end,
            interior: Vec::new(),
            bootstrap: None,
        }
    }

    /// Number of reward steps `m`.
    pub fn reward_steps(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn ends_terminal(&self) -> bool {
        self.end == SegmentEnd::Terminal
    }

    pub fn start(&self) -> &Transition {
        &self.entries[0]
    }

    fn check(&self, needs_interior: bool) -> Result<()> {
        let m = self.reward_steps();
        if m == 0 {
            return Err(Error::contract("segment has no reward steps"));
        }
        if self.entries[0].terminal {
            return Err(Error::contract("segment starts at a terminal entry"));
        }
        for (k, e) in self.entries.iter().enumerate().skip(1) {
            if e.first_step {
                return Err(Error::contract(format!(
                    "first-step entry inside segment at position {k}"
                )));
            }
            if e.terminal && k != m {
                return Err(Error::contract(format!(
                    "terminal entry before segment end at position {k}"
                )));
            }
        }
        if self.entries[m].terminal != self.ends_terminal() {
            return Err(Error::contract("terminal flag disagrees with segment end"));
        }
        match (self.ends_terminal(), self.bootstrap.is_some()) {
            (false, false) => return Err(Error::contract("missing bootstrap values")),
            (true, true) => return Err(Error::contract("bootstrap values on terminal segment")),
            _ => {}
        }
        if needs_interior && self.interior.len() != m - 1 {
            return Err(Error::contract(format!(
                "expected {} interior value sets, found {}",
                m - 1,
                self.interior.len()
            )));
        }
        Ok(())
    }

    fn values_at(&self, k: usize) -> &StepValues {
        if k == self.reward_steps() {
            self.bootstrap.as_ref().expect("checked bootstrap")
        } else {
            &self.interior[k - 1]
        }
    }
}

fn ratio(policy: &PolicyDist, e: &Transition, position: usize) -> Result<f64> {
    if e.stored_prob < MIN_STORED_PROB {
        return Err(Error::DegenerateRatio {
            stored_prob: e.stored_prob,
            position,
        });
    }
    Ok(policy.prob(e.action) / e.stored_prob)
}

/// Stand-in for interior positions of families that never read them.
const UNUSED_VALUES: StepValues = StepValues {
    q: [0.0; NUM_ACTIONS],
    policy: PolicyDist {
        probs: [0.0; NUM_ACTIONS],
    },
};

/// Shared backward recursion. `level(k, entry, values)` returns `(w_k, s_k)`
/// and `base(entry, values)` the bootstrap value at position `m`.
fn backup<L, B>(seg: &Segment, gamma: f64, needs_interior: bool, mut level: L, base: B) -> Result<f64>
where
    L: FnMut(usize, &Transition, &StepValues) -> Result<(f64, f64)>,
    B: Fn(&Transition, &StepValues) -> f64,
{
    seg.check(needs_interior)?;
    let m = seg.reward_steps();
    let mut v = if seg.ends_terminal() {
        0.0
    } else {
        let e = &seg.entries[m];
        let vals = seg.values_at(m);
        let (w, s) = level(m, e, vals)?;
        w * base(e, vals) + s
    };
    for k in (1..m).rev() {
        let g = seg.entries[k + 1].reward + gamma * v;
        let vals = if needs_interior {
            seg.values_at(k)
        } else {
            &UNUSED_VALUES
        };
        let (w, s) = level(k, &seg.entries[k], vals)?;
        v = w * g + s;
    }
    Ok(seg.entries[1].reward + gamma * v)
}

fn sampled_base(e: &Transition, vals: &StepValues) -> f64 {
    vals.q[e.action]
}

pub fn sarsa_target(seg: &Segment, gamma: f64, spec: &AlgorithmSpec) -> Result<f64> {
    if spec.off_policy_correction {
        backup(
            seg,
            gamma,
            true,
            |k, e, vals| Ok((ratio(&vals.policy, e, k)?, 0.0)),
            sampled_base,
        )
    } else {
        backup(seg, gamma, false, |_, _, _| Ok((1.0, 0.0)), sampled_base)
    }
}

pub fn tree_backup_target(seg: &Segment, gamma: f64, _spec: &AlgorithmSpec) -> Result<f64> {
    backup(
        seg,
        gamma,
        true,
        |_, e, vals| {
            Ok((
                vals.policy.prob(e.action),
                vals.policy.expectation_excluding(&vals.q, e.action),
            ))
        },
        sampled_base,
    )
}

pub fn qsigma_target(seg: &Segment, gamma: f64, spec: &AlgorithmSpec) -> Result<f64> {
    let corrected = spec.off_policy_correction;
    backup(
        seg,
        gamma,
        true,
        |k, e, vals| {
            let sigma = e.stored_sigma;
            let sampled = if corrected {
                sigma * ratio(&vals.policy, e, k)?
            } else {
                sigma
            };
            let pi_a = vals.policy.prob(e.action);
            Ok((
                sampled + (1.0 - sigma) * pi_a,
                (1.0 - sigma) * vals.policy.expectation_excluding(&vals.q, e.action),
            ))
        },
        sampled_base,
    )
}

/// Retrace with the truncated trace `c = min(k, ρ)`.
pub fn retrace_target(seg: &Segment, gamma: f64, spec: &AlgorithmSpec) -> Result<f64> {
    let cutoff = spec.cutoff_k;
    retrace_target_with(seg, gamma, |policy, e, k| {
        let c = cutoff.min(ratio(policy, e, k)?);
        assert!(c <= cutoff, "trace coefficient {c} above cutoff {cutoff}");
        Ok(c)
    })
}

/// Retrace with a caller-supplied trace coefficient
/// `coeff(π(·|S_k), entry k, position k)`.
pub fn retrace_target_with<C>(seg: &Segment, gamma: f64, mut coeff: C) -> Result<f64>
where
    C: FnMut(&PolicyDist, &Transition, usize) -> Result<f64>,
{
    backup(
        seg,
        gamma,
        true,
        |k, e, vals| {
            let c = coeff(&vals.policy, e, k)?;
            Ok((c, vals.policy.expectation(&vals.q) - c * vals.q[e.action]))
        },
        sampled_base,
    )
}

pub fn qlearning_target(seg: &Segment, gamma: f64, _spec: &AlgorithmSpec) -> Result<f64> {
    backup(
        seg,
        gamma,
        false,
        |_, _, _| Ok((1.0, 0.0)),
        |_, vals| vals.q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Dispatches on `spec.family`.
pub fn target(seg: &Segment, gamma: f64, spec: &AlgorithmSpec) -> Result<f64> {
    match spec.family {
        Family::Sarsa => sarsa_target(seg, gamma, spec),
        Family::TreeBackup => tree_backup_target(seg, gamma, spec),
        Family::QSigma => qsigma_target(seg, gamma, spec),
        Family::Retrace => retrace_target(seg, gamma, spec),
        Family::QLearning => qlearning_target(seg, gamma, spec),
    }
}

/// Attaches target-network values to `segments` and evaluates the family
/// target for each. The update-time policy is ε-greedy over the target
/// network's values.
pub fn compute_targets(
    segments: &mut [Segment],
    spec: &AlgorithmSpec,
    gamma: f64,
    target_net: &NetParams,
    epsilon: f64,
) -> Result<Vec<f64>> {
    compute_targets_with_policy(segments, spec, gamma, target_net, None, epsilon)
}

/// As [`compute_targets`], but the ε-greedy policy is taken over
/// `policy_net` when given (values still come from `target_net`).
pub fn compute_targets_with_policy(
    segments: &mut [Segment],
    spec: &AlgorithmSpec,
    gamma: f64,
    target_net: &NetParams,
    policy_net: Option<&NetParams>,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(segments.len());
    compute_targets_into(segments, spec, gamma, target_net, policy_net, epsilon, &mut out)?;
    Ok(out)
}

pub(crate) fn compute_targets_into(
    segments: &mut [Segment],
    spec: &AlgorithmSpec,
    gamma: f64,
    target_net: &NetParams,
    policy_net: Option<&NetParams>,
    epsilon: f64,
    out: &mut Vec<f64>,
) -> Result<()> {
    out.clear();
    let interior = spec.needs_interior_values();
    // gather every state whose values are needed and evaluate them in one pass
    let mut states = Vec::new();
    for (index, seg) in segments.iter().enumerate() {
        let m = seg.reward_steps();
        if m == 0 {
            return Err(Error::InSegment {
                index,
                source: Box::new(Error::contract("segment has no reward steps")),
            });
        }
        if interior {
            states.extend(seg.entries[1..m].iter().map(|e| e.state));
        }
        if !seg.ends_terminal() {
            states.push(seg.entries[m].state);
        }
    }
    let mut q = Vec::new();
    target_net.forward_batch(&states, &mut q);
    let mut policy_q = Vec::new();
    if let Some(net) = policy_net {
        net.forward_batch(&states, &mut policy_q);
    }
    let mut next = 0;
    let mut take = || {
        let values = StepValues {
            q: q[next],
            policy: epsilon_greedy_probs(policy_q.get(next).unwrap_or(&q[next]), epsilon),
        };
        next += 1;
        values
    };

    for (index, seg) in segments.iter_mut().enumerate() {
        let m = seg.reward_steps();
        seg.interior.clear();
        if interior {
            seg.interior.extend((1..m).map(|_| take()));
        }
        seg.bootstrap = (!seg.ends_terminal()).then(&mut take);
        let g = target(seg, gamma, spec).map_err(|source| Error::InSegment {
            index,
            source: Box::new(source),
        })?;
        out.push(g);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(action: usize, reward: f64, prob: f64, sigma: f64) -> Transition {
        Transition {
            state: [0.0, 0.0],
            action,
            reward,
            terminal: false,
            first_step: false,
            stored_prob: prob,
            stored_sigma: sigma,
        }
    }

    fn terminal(reward: f64) -> Transition {
        Transition {
            terminal: true,
            ..tr(0, reward, 0.0, 0.0)
        }
    }

    fn sv(q: ActionValues, probs: [f64; 3]) -> StepValues {
        StepValues {
            q,
            policy: PolicyDist { probs },
        }
    }

    #[test]
    fn epsilon_greedy_examples() {
        let p = epsilon_greedy_probs(&[2.0, 1.0, 1.0], 0.1);
        assert!((p.probs[0] - 0.9333333333333333).abs() < 1e-15);
        assert!((p.probs[1] - 0.0333333333333333).abs() < 1e-15);
        assert!((p.probs[2] - 0.0333333333333333).abs() < 1e-15);

        let p = epsilon_greedy_probs(&[-4.0, 7.0, 1.0], 1.0);
        assert!(p.probs.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

        let p = epsilon_greedy_probs(&[5.0, 5.0, 0.0], 0.1);
        assert!(p.probs[0] > 0.9 && p.probs[1] < 0.04);
        assert!(PolicyDist::new(p.probs).is_ok());
    }

    #[test]
    fn one_step_terminal_returns_reward_for_all_families() {
        let seg = Segment::new(vec![tr(1, 0.0, 0.3, 0.5), terminal(-1.0)], SegmentEnd::Terminal);
        for family in Family::ALL {
            for off in [false, true] {
                let spec = AlgorithmSpec {
                    off_policy_correction: off,
                    ..AlgorithmSpec::new(family, 1)
                };
                assert_eq!(target(&seg, 1.0, &spec).unwrap(), -1.0, "{family:?}");
            }
        }
    }

    #[test]
    fn sarsa_on_policy_two_steps() {
        let mut seg = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), tr(1, -1.0, 0.5, 1.0), tr(2, -1.0, 0.5, 1.0)],
            SegmentEnd::Full,
        );
        seg.bootstrap = Some(sv([0.0, 0.0, -10.0], [0.0, 0.0, 1.0]));
        assert_eq!(sarsa_target(&seg, 1.0, &AlgorithmSpec::sarsa(2, false)).unwrap(), -12.0);
    }

    #[test]
    fn sarsa_off_policy_two_steps() {
        // ρ1 = 0.25/0.5 = 0.5, ρ2 = 0.4/0.4 = 1
        let mut seg = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), tr(1, -1.0, 0.5, 1.0), tr(2, -1.0, 0.4, 1.0)],
            SegmentEnd::Full,
        );
        seg.interior = vec![sv([0.0; 3], [0.5, 0.25, 0.25])];
        seg.bootstrap = Some(sv([0.0, 0.0, -10.0], [0.3, 0.3, 0.4]));
        let g = sarsa_target(&seg, 1.0, &AlgorithmSpec::sarsa(2, true)).unwrap();
        assert!((g + 6.5).abs() < 1e-15);
    }

    #[test]
    fn tree_backup_hand_expansions() {
        let mut one = Segment::new(vec![tr(0, 0.0, 0.0, 0.0), tr(0, -1.0, 0.5, 0.0)], SegmentEnd::Full);
        one.bootstrap = Some(sv([-3.0, -5.0, 0.0], [0.75, 0.25, 0.0]));
        let g = tree_backup_target(&one, 1.0, &AlgorithmSpec::tree_backup(1)).unwrap();
        assert!((g + 4.5).abs() < 1e-15);

        // R1 = −1, π(S1) = (0.5, 0.5), A1 = a0, Q(S1, a1) = −4; inner value −4.5
        let mut two = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), tr(0, -1.0, 0.5, 0.0), tr(0, -1.0, 0.5, 0.0)],
            SegmentEnd::Full,
        );
        two.interior = vec![sv([0.0, -4.0, 0.0], [0.5, 0.5, 0.0])];
        two.bootstrap = Some(sv([-3.0, -5.0, 0.0], [0.75, 0.25, 0.0]));
        // inner: R2 + V(2) = −1 + (−3.5) = −4.5
        let g = tree_backup_target(&two, 1.0, &AlgorithmSpec::tree_backup(2)).unwrap();
        assert!((g + 5.25).abs() < 1e-15);
    }

    #[test]
    fn retrace_one_step_is_expected_value() {
        let mut seg = Segment::new(vec![tr(2, 0.0, 0.0, 0.0), tr(1, -1.0, 0.2, 0.0)], SegmentEnd::Full);
        // ρ = 0.6/0.2 = 3 → c = 1
        seg.bootstrap = Some(sv([-2.0, -3.0, -7.0], [0.3, 0.6, 0.1]));
        let g = retrace_target(&seg, 1.0, &AlgorithmSpec::retrace(1, 1.0)).unwrap();
        let expected = -1.0 + (0.3 * -2.0 + 0.6 * -3.0 + 0.1 * -7.0);
        assert!((g - expected).abs() < 1e-15);
    }

    #[test]
    fn qlearning_examples() {
        let mut one = Segment::new(vec![tr(0, 0.0, 0.0, 0.0), tr(2, -1.0, 0.5, 0.0)], SegmentEnd::Full);
        one.bootstrap = Some(sv([-4.0, -2.5, -9.0], PolicyDist::uniform().probs));
        assert_eq!(qlearning_target(&one, 0.9, &AlgorithmSpec::qlearning(1)).unwrap(), -1.0 + 0.9 * -2.5);

        let mut two = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), tr(0, -1.0, 0.5, 0.0), tr(0, -1.0, 0.5, 0.0)],
            SegmentEnd::Full,
        );
        two.bootstrap = Some(sv([-9.0, -12.0, -30.0], PolicyDist::uniform().probs));
        assert_eq!(qlearning_target(&two, 1.0, &AlgorithmSpec::qlearning(2)).unwrap(), -11.0);

        let term = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), tr(0, -1.0, 0.5, 0.0), tr(0, -1.0, 0.5, 0.0), terminal(-1.0)],
            SegmentEnd::Terminal,
        );
        assert_eq!(qlearning_target(&term, 1.0, &AlgorithmSpec::qlearning(3)).unwrap(), -3.0);
    }

    #[test]
    fn degenerate_ratio_is_an_error() {
        let mut seg = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), tr(1, -1.0, 0.0, 1.0), tr(2, -1.0, 0.4, 1.0)],
            SegmentEnd::Full,
        );
        seg.interior = vec![sv([0.0; 3], [0.5, 0.25, 0.25])];
        seg.bootstrap = Some(sv([0.0; 3], [0.3, 0.3, 0.4]));
        assert!(matches!(
            sarsa_target(&seg, 1.0, &AlgorithmSpec::sarsa(2, true)),
            Err(Error::DegenerateRatio { position: 1, .. })
        ));
        // uncorrected Sarsa never reads the ratio
        assert!(sarsa_target(&seg, 1.0, &AlgorithmSpec::sarsa(2, false)).is_ok());
    }

    #[test]
    fn malformed_segments_are_rejected() {
        let empty = Segment::new(vec![tr(0, 0.0, 0.0, 0.0)], SegmentEnd::Full);
        assert!(matches!(qlearning_target(&empty, 1.0, &AlgorithmSpec::qlearning(1)), Err(Error::Contract(_))));

        let no_boot = Segment::new(vec![tr(0, 0.0, 0.0, 0.0), tr(0, -1.0, 0.5, 0.0)], SegmentEnd::Full);
        assert!(matches!(sarsa_target(&no_boot, 1.0, &AlgorithmSpec::sarsa(1, false)), Err(Error::Contract(_))));

        let mut first_inside = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), Transition { first_step: true, ..tr(0, 0.0, 0.0, 0.0) }],
            SegmentEnd::Full,
        );
        first_inside.bootstrap = Some(sv([0.0; 3], PolicyDist::uniform().probs));
        assert!(qlearning_target(&first_inside, 1.0, &AlgorithmSpec::qlearning(1)).is_err());

        let mut missing_interior = Segment::new(
            vec![tr(0, 0.0, 0.0, 0.0), tr(0, -1.0, 0.5, 0.0), tr(0, -1.0, 0.5, 0.0)],
            SegmentEnd::Full,
        );
        missing_interior.bootstrap = Some(sv([0.0; 3], PolicyDist::uniform().probs));
        assert!(tree_backup_target(&missing_interior, 1.0, &AlgorithmSpec::tree_backup(2)).is_err());
        assert!(qlearning_target(&missing_interior, 1.0, &AlgorithmSpec::qlearning(2)).is_ok());
    }

    #[test]
    fn sigma_schedule_values() {
        let d = SigmaMode::decaying();
        assert_eq!(d.at_episode(0), 1.0);
        assert!((d.at_episode(100) - 0.8).abs() < 1e-15);
        assert_eq!(d.at_episode(600), 0.0);
        assert_eq!(SigmaMode::Fixed(0.5).at_episode(321), 0.5);
    }

    #[test]
    fn spec_validation() {
        assert!(AlgorithmSpec::sarsa(0, false).validate().is_err());
        assert!(AlgorithmSpec::retrace(3, 0.0).validate().is_err());
        assert!(AlgorithmSpec::qsigma(3, SigmaMode::Fixed(1.5), false).validate().is_err());
        assert!(AlgorithmSpec::qsigma(3, SigmaMode::decaying(), true).validate().is_ok());
        assert!(!AlgorithmSpec { off_policy_correction: true, ..AlgorithmSpec::tree_backup(2) }.corrects());
    }
}
