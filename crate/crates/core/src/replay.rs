//! Ring-buffer experience replay whose entries carry the behaviour
//! probability and σ recorded at acting time.
//!
//! Episodes are laid out consecutively: a `first_step` entry holds the start
//! state (reward, probability and σ zeroed), each following entry holds the
//! reward that led to its state, and a terminal episode ends with a terminal
//! entry whose action, probability and σ are zero sentinels. A timed-out
//! episode simply stops; the next entry is the `first_step` of a new episode.
//!
//! Positions are addressed by a monotone logical index (`0, 1, 2, …` over
//! everything ever stored); the live window is
//! `[total_written − len, total_written)`.

use rand::Rng;

use crate::targets::{Segment, SegmentEnd};
use crate::{Error, Result, NUM_ACTIONS};

pub const DEFAULT_CAPACITY: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; 2],
    pub action: usize,
    /// Reward received on arriving in `state`.
    pub reward: f64,
    pub terminal: bool,
    pub first_step: bool,
    /// Behaviour probability of `action` when it was chosen.
    pub stored_prob: f64,
    pub stored_sigma: f64,
}

impl Transition {
    /// Start-of-episode entry.
    pub fn first(state: [f64; 2], action: usize) -> Self {
        Self {
            state,
            action,
            reward: 0.0,
            terminal: false,
            first_step: true,
            stored_prob: 0.0,
            stored_sigma: 0.0,
        }
    }

    /// Non-terminal entry reached with `reward`, acting with `action`.
    pub fn step(state: [f64; 2], reward: f64, action: usize, stored_prob: f64, stored_sigma: f64) -> Self {
        Self {
            state,
            action,
            reward,
            terminal: false,
            first_step: false,
            stored_prob,
            stored_sigma,
        }
    }

    pub fn terminal(state: [f64; 2], reward: f64) -> Self {
        Self {
            state,
            action: 0,
            reward,
            terminal: true,
            first_step: false,
            stored_prob: 0.0,
            stored_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.action >= NUM_ACTIONS {
            return Err(Error::contract(format!("action {} out of range", self.action)));
        }
        if !(0.0..=1.0).contains(&self.stored_prob) || !(0.0..=1.0).contains(&self.stored_sigma) {
            return Err(Error::contract(format!(
                "stored probability {} / sigma {} outside [0, 1]",
                self.stored_prob, self.stored_sigma
            )));
        }
        if !self.reward.is_finite() || !self.state.iter().all(|v| v.is_finite()) {
            return Err(Error::contract("non-finite reward or state"));
        }
        if self.first_step {
            if self.reward != 0.0 || self.stored_prob != 0.0 || self.stored_sigma != 0.0 {
                return Err(Error::contract(
                    "first-step entry must have zero reward, probability and sigma",
                ));
            }
            if self.terminal {
                return Err(Error::contract("episode cannot start in a terminal state"));
            }
        }
        if self.terminal && (self.action != 0 || self.stored_prob != 0.0 || self.stored_sigma != 0.0) {
            return Err(Error::contract("terminal entry must carry zero sentinels"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<Transition>,
    total: u64,
    sampleable: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
            total: 0,
            sampleable: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Physical slot the next entry goes to.
    pub fn write_index(&self) -> usize {
        (self.total % self.capacity as u64) as usize
    }

    pub fn total_written(&self) -> u64 {
        self.total
    }

    /// Logical index of the oldest live entry.
    pub fn oldest(&self) -> u64 {
        self.total - self.entries.len() as u64
    }

    pub fn sampleable_count(&self) -> usize {
        self.sampleable
    }

    /// Entry at a logical index, if still live.
    pub fn get(&self, logical: u64) -> Option<&Transition> {
        (logical >= self.oldest() && logical < self.total)
            .then(|| &self.entries[(logical % self.capacity as u64) as usize])
    }

    /// Live entries, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        (self.oldest()..self.total).map(move |l| self.get(l).unwrap())
    }

    /// A live, non-terminal entry whose stored successor continues the same episode.
    pub fn is_sampleable(&self, logical: u64) -> bool {
        match (self.get(logical), self.get(logical + 1)) {
            (Some(e), Some(next)) => !e.terminal && !next.first_step,
            _ => false,
        }
    }

    pub fn store(&mut self, t: Transition) -> Result<()> {
        t.validate()?;
        if let Some(prev) = self.get(self.total.wrapping_sub(1)).filter(|_| self.total > 0) {
            if prev.terminal && !t.first_step {
                return Err(Error::contract("entry after a terminal must start an episode"));
            }
        }
        if self.entries.len() == self.capacity {
            let oldest = self.oldest();
            if self.is_sampleable(oldest) {
                self.sampleable -= 1;
            }
        }
        let slot = self.write_index();
        if slot == self.entries.len() {
            self.entries.push(t);
        } else {
            self.entries[slot] = t;
        }
        self.total += 1;
        let prev = self.total - 1;
        if prev > 0 && self.is_sampleable(prev - 1) {
            self.sampleable += 1;
        }
        Ok(())
    }

    /// Segment of up to `n` reward steps starting at a sampleable index.
    pub fn segment_at(&self, logical: u64, n: usize) -> Option<Segment> {
        if n == 0 || !self.is_sampleable(logical) {
            return None;
        }
        let mut entries = Vec::with_capacity(n + 1);
        entries.push(*self.get(logical)?);
        let mut end = SegmentEnd::Full;
        for k in 1..=n as u64 {
            let next = match self.get(logical + k) {
                Some(e) if !e.first_step => *e,
                // timeout boundary or newest entry
                _ => {
                    end = SegmentEnd::Truncated;
                    break;
                }
            };
            entries.push(next);
            if next.terminal {
                end = SegmentEnd::Terminal;
                break;
            }
        }
        debug_assert!(entries.len() >= 2);
        Some(Segment::new(entries, end))
    }

    /// Uniformly draws one sampleable start index.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        if self.sampleable == 0 {
            return Err(Error::NotReady);
        }
        // candidates with a stored successor; rejection keeps the draw uniform
        // over the sampleable subset
        let lo = self.oldest();
        let hi = self.total - 1;
        loop {
            let l = rng.gen_range(lo..hi);
            if self.is_sampleable(l) {
                return Ok(l);
            }
        }
    }

    /// `batch_size` segments with start indices drawn uniformly with replacement.
    pub fn sample_segments<R: Rng + ?Sized>(
        &self,
        batch_size: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Segment>> {
        if n == 0 {
            return Err(Error::contract("backup length must be at least 1"));
        }
        (0..batch_size)
            .map(|_| {
                let l = self.sample_index(rng)?;
                Ok(self.segment_at(l, n).expect("sampled index is sampleable"))
            })
            .collect()
    }
}
