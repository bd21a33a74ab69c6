//! Independent oracles shared by the integration tests and the acceptance target.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nstep::replay::{ReplayBuffer, Transition};
use nstep::stats;
use nstep::targets::{
    epsilon_greedy_probs, AlgorithmSpec, Family, PolicyDist, Segment, SegmentEnd, SigmaMode,
    StepValues,
};
use nstep::valuenet::{self, Minibatch, NetParams};
use nstep::{ActionValues, NUM_ACTIONS};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- segments

pub fn random_policy<R: Rng>(rng: &mut R) -> PolicyDist {
    if rng.gen_bool(0.25) {
        let q: ActionValues = std::array::from_fn(|_| rng.gen_range(-20.0..0.0));
        return epsilon_greedy_probs(&q, rng.gen_range(0.0..=1.0));
    }
    let w: [f64; NUM_ACTIONS] = std::array::from_fn(|_| rng.gen_range(0.01..1.0));
    let total: f64 = w.iter().sum();
    PolicyDist::new(w.map(|x| x / total)).expect("normalised")
}

pub fn random_values<R: Rng>(rng: &mut R) -> StepValues {
    StepValues {
        q: std::array::from_fn(|_| rng.gen_range(-20.0..0.0)),
        policy: random_policy(rng),
    }
}

fn random_state<R: Rng>(rng: &mut R) -> [f64; 2] {
    [rng.gen_range(-1.2..0.6), rng.gen_range(-0.07..0.07)]
}

/// Transitions of a random segment with `1..=n` reward steps; rewards in
/// [−2, 0], stored probabilities in [0.05, 1], σ in [0, 1].
pub fn random_entries<R: Rng>(rng: &mut R, n: usize) -> (Vec<Transition>, SegmentEnd) {
    let m = rng.gen_range(1..=n);
    let end = if rng.gen_bool(0.3) {
        SegmentEnd::Terminal
    } else if m < n {
        SegmentEnd::Truncated
    } else {
        SegmentEnd::Full
    };
    let mut entries = Vec::with_capacity(m + 1);
    let a0 = rng.gen_range(0..NUM_ACTIONS);
    entries.push(if rng.gen_bool(0.3) {
        Transition::first(random_state(rng), a0)
    } else {
        Transition::step(random_state(rng), rng.gen_range(-2.0..=0.0), a0, rng.gen_range(0.05..=1.0), rng.gen_range(0.0..=1.0))
    });
    for k in 1..=m {
        let state = random_state(rng);
        let reward = rng.gen_range(-2.0..=0.0);
        entries.push(if k == m && end == SegmentEnd::Terminal {
            Transition::terminal(state, reward)
        } else {
            Transition::step(
                state,
                reward,
                rng.gen_range(0..NUM_ACTIONS),
                rng.gen_range(0.05..=1.0),
                rng.gen_range(0.0..=1.0),
            )
        });
    }
    (entries, end)
}

/// A random segment with every value set attached.
pub fn random_segment<R: Rng>(rng: &mut R, n: usize) -> Segment {
    let (entries, end) = random_entries(rng, n);
    let mut seg = Segment::new(entries, end);
    let m = seg.reward_steps();
    seg.interior = (1..m).map(|_| random_values(rng)).collect();
    seg.bootstrap = (end != SegmentEnd::Terminal).then(|| random_values(rng));
    seg
}

pub fn values_at(seg: &Segment, l: usize) -> &StepValues {
    if l == seg.reward_steps() {
        seg.bootstrap.as_ref().expect("bootstrap values")
    } else {
        &seg.interior[l - 1]
    }
}

/// Sets the stored σ of every non-terminal entry after the first.
pub fn set_sigma(seg: &mut Segment, sigma: f64) {
    for e in seg.entries.iter_mut().skip(1).filter(|e| !e.terminal) {
        e.stored_sigma = sigma;
    }
}

/// Makes the behaviour probabilities equal to the update-time policy.
pub fn make_on_policy(seg: &mut Segment) {
    for l in 1..=seg.reward_steps() {
        if seg.entries[l].terminal {
            continue;
        }
        let p = values_at(seg, l).policy.prob(seg.entries[l].action);
        seg.entries[l].stored_prob = p;
    }
}

/// Sarsa as an explicit weighted sum (no recursion).
pub fn sarsa_closed_form(seg: &Segment, gamma: f64, corrected: bool) -> f64 {
    let m = seg.reward_steps();
    let rho = |l: usize| {
        if corrected {
            let e = &seg.entries[l];
            values_at(seg, l).policy.prob(e.action) / e.stored_prob
        } else {
            1.0
        }
    };
    let mut g = 0.0;
    let mut weight = 1.0;
    for i in 1..=m {
        g += gamma.powi(i as i32 - 1) * weight * seg.entries[i].reward;
        if i < m || !seg.ends_terminal() {
            weight *= rho(i);
        }
    }
    if !seg.ends_terminal() {
        let e = &seg.entries[m];
        g += gamma.powi(m as i32) * weight * values_at(seg, m).q[e.action];
    }
    g
}

pub fn qlearning_closed_form(seg: &Segment, gamma: f64) -> f64 {
    let m = seg.reward_steps();
    let mut g: f64 = (1..=m)
        .map(|i| gamma.powi(i as i32 - 1) * seg.entries[i].reward)
        .sum();
    if !seg.ends_terminal() {
        let q = values_at(seg, m).q;
        g += gamma.powi(m as i32) * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    g
}

enum Branch {
    /// Follow the taken action to the next level (or take its value at the end).
    Continue(f64),
    /// Stop with weight and value.
    Leaf(f64, f64),
}

fn branches(seg: &Segment, spec: &AlgorithmSpec, l: usize) -> Vec<Branch> {
    let e = &seg.entries[l];
    let v = values_at(seg, l);
    let pi = &v.policy;
    let a_t = e.action;
    let others = || {
        (0..NUM_ACTIONS)
            .filter(move |&a| a != a_t)
            .map(move |a| (pi.prob(a), v.q[a]))
    };
    let rho = pi.prob(a_t) / e.stored_prob;
    match spec.family {
        Family::Sarsa => vec![Branch::Continue(if spec.off_policy_correction { rho } else { 1.0 })],
        Family::TreeBackup => std::iter::once(Branch::Continue(pi.prob(a_t)))
            .chain(others().map(|(p, q)| Branch::Leaf(p, q)))
            .collect(),
        Family::QSigma => {
            let sigma = e.stored_sigma;
            let sampled = if spec.off_policy_correction { rho } else { 1.0 };
            let mut b = vec![
                Branch::Continue(sigma * sampled),
                Branch::Continue((1.0 - sigma) * pi.prob(a_t)),
            ];
            b.extend(others().map(|(p, q)| Branch::Leaf((1.0 - sigma) * p, q)));
            b
        }
        Family::Retrace => {
            let c = rho.min(spec.cutoff_k);
            let mut b = vec![Branch::Continue(c), Branch::Leaf(-c, v.q[a_t])];
            b.extend((0..NUM_ACTIONS).map(|a| Branch::Leaf(pi.prob(a), v.q[a])));
            b
        }
        Family::QLearning => {
            if l == seg.reward_steps() {
                vec![Branch::Leaf(1.0, v.q.iter().cloned().fold(f64::NEG_INFINITY, f64::max))]
            } else {
                vec![Branch::Continue(1.0)]
            }
        }
    }
}

fn expand(seg: &Segment, gamma: f64, spec: &AlgorithmSpec, l: usize, w: f64, abs: bool) -> f64 {
    let m = seg.reward_steps();
    let f = |x: f64| if abs { x.abs() } else { x };
    let mut total = f(w * gamma.powi(l as i32 - 1) * seg.entries[l].reward);
    if l == m && seg.ends_terminal() {
        return total;
    }
    for b in branches(seg, spec, l) {
        total += match b {
            Branch::Continue(c) if l == m => {
                f(w * c * gamma.powi(m as i32) * values_at(seg, m).q[seg.entries[m].action])
            }
            Branch::Continue(c) => expand(seg, gamma, spec, l + 1, w * c, abs),
            Branch::Leaf(c, q) => f(w * c * gamma.powi(l as i32) * q),
        };
    }
    total
}

/// Exhaustive expansion of the target into every reward and leaf value with
/// its path weight; branches are never merged.
pub fn tree_oracle(seg: &Segment, gamma: f64, spec: &AlgorithmSpec) -> f64 {
    expand(seg, gamma, spec, 1, 1.0, false)
}

/// Sum of absolute path-weighted terms: a bound on |target|.
pub fn tree_bound(seg: &Segment, gamma: f64, spec: &AlgorithmSpec) -> f64 {
    expand(seg, gamma, spec, 1, 1.0, true)
}

/// Non-recursive oracle for any family.
pub fn oracle(seg: &Segment, gamma: f64, spec: &AlgorithmSpec) -> f64 {
    match spec.family {
        Family::Sarsa => sarsa_closed_form(seg, gamma, spec.off_policy_correction),
        Family::QLearning => qlearning_closed_form(seg, gamma),
        _ => tree_oracle(seg, gamma, spec),
    }
}

/// One spec per family/mode combination with n filled in.
pub fn all_specs(n: usize) -> Vec<AlgorithmSpec> {
    vec![
        AlgorithmSpec::sarsa(n, false),
        AlgorithmSpec::sarsa(n, true),
        AlgorithmSpec::tree_backup(n),
        AlgorithmSpec::qsigma(n, SigmaMode::Fixed(0.5), false),
        AlgorithmSpec::qsigma(n, SigmaMode::Fixed(0.5), true),
        AlgorithmSpec::retrace(n, 1.0),
        AlgorithmSpec::retrace(n, 0.7),
        AlgorithmSpec::qlearning(n),
    ]
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Largest recursive-vs-oracle discrepancy (scaled by max(|x|, 1)) over
/// `per_cell` random segments for each family, n ∈ 1..=5 and γ ∈ {0.5, 1}.
pub fn max_oracle_gap(per_cell: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for n in 1..=5 {
        for gamma in [0.5, 1.0] {
            for spec in all_specs(n) {
                for _ in 0..per_cell {
                    let seg = random_segment(&mut rng, n);
                    let got = nstep::targets::target(&seg, gamma, &spec).expect("valid segment");
                    let want = oracle(&seg, gamma, &spec);
                    worst = worst.max((got - want).abs() / want.abs().max(1.0));
                }
            }
        }
    }
    worst
}

/// Identity (a)–(e) gaps, each over `count` random segments with n ∈ 1..=5 and γ ∈ {0.5, 1}.
pub fn reduction_identity_gaps(count: usize, seed: u64) -> [f64; 5] {
    use nstep::targets::{qsigma_target, retrace_target_with, sarsa_target, tree_backup_target};
    let mut rng = rng(seed);
    let mut gaps = [0.0f64; 5];
    let mut note = |i: usize, a: f64, b: f64| gaps[i] = gaps[i].max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
    for i in 0..count {
        let n = 1 + i % 5;
        let gamma = if i % 2 == 0 { 0.5 } else { 1.0 };
        let on = |f| AlgorithmSpec::qsigma(n, SigmaMode::Fixed(f), false);
        let off = |f| AlgorithmSpec::qsigma(n, SigmaMode::Fixed(f), true);

        let mut seg = random_segment(&mut rng, n);
        set_sigma(&mut seg, 1.0);
        note(0, qsigma_target(&seg, gamma, &on(1.0)).unwrap(), sarsa_target(&seg, gamma, &AlgorithmSpec::sarsa(n, false)).unwrap());
        note(1, qsigma_target(&seg, gamma, &off(1.0)).unwrap(), sarsa_target(&seg, gamma, &AlgorithmSpec::sarsa(n, true)).unwrap());

        let mut seg = random_segment(&mut rng, n);
        set_sigma(&mut seg, 0.0);
        let tb = tree_backup_target(&seg, gamma, &AlgorithmSpec::tree_backup(n)).unwrap();
        note(2, qsigma_target(&seg, gamma, &on(0.0)).unwrap(), tb);
        note(2, qsigma_target(&seg, gamma, &off(0.0)).unwrap(), tb);

        let seg = random_segment(&mut rng, n);
        let tb = tree_backup_target(&seg, gamma, &AlgorithmSpec::tree_backup(n)).unwrap();
        let r = retrace_target_with(&seg, gamma, |pi, e, _| Ok(pi.prob(e.action))).unwrap();
        note(3, r, tb);

        let mut seg = random_segment(&mut rng, n);
        make_on_policy(&mut seg);
        note(
            4,
            sarsa_target(&seg, gamma, &AlgorithmSpec::sarsa(n, true)).unwrap(),
            sarsa_target(&seg, gamma, &AlgorithmSpec::sarsa(n, false)).unwrap(),
        );
    }
    gaps
}

// ---------------------------------------------------------------- gradients

/// Components whose analytic and numeric values are both smaller than this
/// are compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-4;

/// Max relative error between analytic gradients and central differences
/// (step `h`) over `draws` random networks and batches.
pub fn gradient_check(draws: usize, hidden: usize, h: f64, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let mut p = NetParams::init_uniform(hidden, &mut rng);
        for b in p.b1.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        for b in p.b2.iter_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        let mut batch = Minibatch::default();
        for _ in 0..rng.gen_range(1..=32) {
            batch.push(random_state(&mut rng), rng.gen_range(0..NUM_ACTIONS), rng.gen_range(-2.0..2.0));
        }
        let (_, grads) = valuenet::loss_and_gradients(&p, &batch).unwrap();
        let analytic: Vec<f64> = grads.blocks().concat();
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = *p.param_mut(idx);
            *p.param_mut(idx) = orig + h;
            let up = valuenet::loss_and_gradients(&p, &batch).unwrap().0;
            *p.param_mut(idx) = orig - h;
            let down = valuenet::loss_and_gradients(&p, &batch).unwrap().0;
            *p.param_mut(idx) = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

// ---------------------------------------------------------------- replay

/// Segment rebuilt from the full history of stored entries.
pub fn shadow_segment(history: &[Transition], capacity: usize, j: usize, n: usize) -> Option<Segment> {
    let total = history.len();
    let oldest = total.saturating_sub(capacity);
    let live = |k: usize| k >= oldest && k < total;
    if !(live(j) && live(j + 1)) || history[j].terminal || history[j + 1].first_step {
        return None;
    }
    let mut entries = vec![history[j]];
    let mut end = SegmentEnd::Full;
    for k in j + 1..=j + n {
        if !live(k) || history[k].first_step {
            end = SegmentEnd::Truncated;
            break;
        }
        entries.push(history[k]);
        if history[k].terminal {
            end = SegmentEnd::Terminal;
            break;
        }
    }
    Some(Segment::new(entries, end))
}

#[derive(Debug, Default)]
pub struct ShadowReport {
    pub stores: usize,
    pub samples: usize,
    pub segments_checked: usize,
}

/// Drives a buffer through `ops` random stores and samples, checking every
/// observable against a history-based shadow after each one.
pub fn replay_shadow(ops: usize, capacity: usize, n: usize, seed: u64) -> Result<ShadowReport, String> {
    let mut rng = rng(seed);
    let mut buf = ReplayBuffer::new(capacity);
    let mut history: Vec<Transition> = Vec::new();
    let mut report = ShadowReport::default();
    let mut in_episode = false;
    for op in 0..ops {
        if rng.gen_bool(0.8) || buf.sampleable_count() == 0 {
            let state = random_state(&mut rng);
            let action = rng.gen_range(0..NUM_ACTIONS);
            let t = if !in_episode {
                in_episode = true;
                Transition::first(state, action)
            } else {
                let u: f64 = rng.gen();
                if u < 0.05 {
                    in_episode = false;
                    Transition::terminal(state, -1.0)
                } else if u < 0.08 {
                    // timeout: the next store starts a new episode
                    in_episode = false;
                    Transition::step(state, -1.0, action, 0.5, 0.5)
                } else {
                    Transition::step(state, -1.0, action, rng.gen_range(0.05..=1.0), rng.gen())
                }
            };
            buf.store(t).map_err(|e| format!("op {op}: store failed: {e}"))?;
            history.push(t);
            report.stores += 1;

            let total = history.len();
            let oldest = total.saturating_sub(capacity);
            if buf.len() != total - oldest || buf.total_written() != total as u64 {
                return Err(format!("op {op}: size mismatch"));
            }
            if buf.write_index() != total % capacity {
                return Err(format!("op {op}: write index {} != {}", buf.write_index(), total % capacity));
            }
            let mut expected = 0;
            for j in oldest..total {
                if buf.get(j as u64) != Some(&history[j]) {
                    return Err(format!("op {op}: entry {j} differs"));
                }
                let want = shadow_segment(&history, capacity, j, n);
                expected += usize::from(want.is_some());
                if buf.is_sampleable(j as u64) != want.is_some() {
                    return Err(format!("op {op}: sampleable({j}) mismatch"));
                }
                if buf.segment_at(j as u64, n) != want {
                    return Err(format!("op {op}: segment at {j} differs"));
                }
                report.segments_checked += usize::from(want.is_some());
            }
            if oldest > 0 && buf.get(oldest as u64 - 1).is_some() {
                return Err(format!("op {op}: overwritten entry still visible"));
            }
            if buf.sampleable_count() != expected {
                return Err(format!("op {op}: sampleable count {} != {expected}", buf.sampleable_count()));
            }
        } else {
            let segs = buf
                .sample_segments(4, n, &mut rng)
                .map_err(|e| format!("op {op}: sample failed: {e}"))?;
            for s in &segs {
                check_segment_shape(s, n).map_err(|e| format!("op {op}: {e}"))?;
            }
            report.samples += 1;
        }
    }
    Ok(report)
}

/// Boundary conditions every sampled segment must satisfy.
pub fn check_segment_shape(s: &Segment, n: usize) -> Result<(), String> {
    let m = s.reward_steps();
    if m == 0 || m > n {
        return Err(format!("segment has {m} reward steps (n = {n})"));
    }
    if s.entries[0].terminal {
        return Err("segment starts at a terminal".into());
    }
    for (k, e) in s.entries.iter().enumerate().skip(1) {
        if e.first_step {
            return Err(format!("first-step entry at position {k}"));
        }
        if e.terminal && k != m {
            return Err(format!("terminal inside segment at position {k}"));
        }
    }
    match s.end {
        SegmentEnd::Terminal if !s.entries[m].terminal => Err("terminal end without terminal entry".into()),
        SegmentEnd::Full if m != n => Err("full segment shorter than n".into()),
        SegmentEnd::Truncated if m >= n => Err("truncated segment of full length".into()),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------- t distribution

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Student-t CDF by quadrature. With t = √ν·tan θ the density becomes
/// proportional to cos^{ν−1} θ on (−π/2, π/2), so no gamma functions are needed.
pub fn t_cdf_oracle(x: f64, dof: f64) -> f64 {
    let g = |th: f64| th.cos().powf(dof - 1.0);
    let half = integrate(g, 0.0, std::f64::consts::FRAC_PI_2, 1e-15);
    let theta = (x / dof.sqrt()).atan();
    let part = integrate(g, 0.0, theta.abs(), 1e-15);
    0.5 + theta.signum() * 0.5 * part / half
}

/// (x, dof) grid for the CDF comparison: dof in [1, 200], x in [−8, 8].
pub fn t_points(count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng(seed);
    (0..count)
        .map(|i| {
            let dof = match i % 4 {
                0 => rng.gen_range(1..=10) as f64,
                1 => rng.gen_range(1.0..30.0),
                2 => rng.gen_range(30.0..200.0),
                _ => rng.gen_range(1..=200) as f64,
            };
            (rng.gen_range(-8.0..8.0), dof)
        })
        .collect()
}

pub fn max_t_cdf_gap(count: usize, seed: u64) -> f64 {
    t_points(count, seed)
        .into_iter()
        .map(|(x, dof)| (stats::t_cdf(x, dof) - t_cdf_oracle(x, dof)).abs())
        .fold(0.0, f64::max)
}
