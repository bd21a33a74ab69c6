//! Mountain car with the textbook constants.
//!
//! The car lives on `position ∈ [-1.2, 0.6]` with `velocity ∈ [-0.07, 0.07]`.
//! Each step applies throttle `action - 1 ∈ {-1, 0, +1}`:
//!
//! ```text
//! v' = clip(v + 0.001·T − 0.0025·cos(3x), −0.07, 0.07)
//! x' = clip(x + v', −1.2, 0.6)          (v' = 0 when x' hits −1.2)
//! ```
//!
//! Every step yields reward −1; the episode terminates once `x' ≥ 0.5`.

use rand::Rng;

use crate::{Error, Result, NUM_ACTIONS};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;
pub const START_LOW: f64 = -0.6;
pub const START_HIGH: f64 = -0.4;
pub const STEP_REWARD: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvState {
    pub position: f64,
    pub velocity: f64,
}

impl EnvState {
    pub fn new(position: f64, velocity: f64) -> Self {
        Self { position, velocity }
    }

    /// Network input: position and velocity mapped affinely onto [-1, 1].
    pub fn features(&self) -> [f64; 2] {
        let mid = 0.5 * (MIN_POSITION + MAX_POSITION);
        let half = 0.5 * (MAX_POSITION - MIN_POSITION);
        [(self.position - mid) / half, self.velocity / MAX_SPEED]
    }

    pub fn in_bounds(&self) -> bool {
        (MIN_POSITION..=MAX_POSITION).contains(&self.position)
            && (-MAX_SPEED..=MAX_SPEED).contains(&self.velocity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: EnvState,
    pub reward: f64,
    pub terminal: bool,
}

/// Start state with position drawn uniformly from `[-0.6, -0.4)` and zero velocity.
pub fn reset<R: Rng + ?Sized>(rng: &mut R) -> EnvState {
    reset_from_unit(rng.gen::<f64>())
}

/// Maps a unit draw `u ∈ [0, 1)` onto the start interval.
pub fn reset_from_unit(u: f64) -> EnvState {
    EnvState {
        position: START_LOW + (START_HIGH - START_LOW) * u,
        velocity: 0.0,
    }
}

pub fn step(s: EnvState, action: usize) -> Result<StepOutcome> {
    if action >= NUM_ACTIONS {
        return Err(Error::contract(format!(
            "action {action} outside 0..{NUM_ACTIONS}"
        )));
    }
    let throttle = action as f64 - 1.0;
    let velocity = (s.velocity + FORCE * throttle - GRAVITY * (3.0 * s.position).cos())
        .clamp(-MAX_SPEED, MAX_SPEED);
    let mut position = (s.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    let mut velocity = velocity;
    if position <= MIN_POSITION {
        // inelastic collision with the left wall
        position = MIN_POSITION;
        velocity = 0.0;
    }
    Ok(StepOutcome {
        next: EnvState { position, velocity },
        reward: STEP_REWARD,
        terminal: position >= GOAL_POSITION,
    })
}
