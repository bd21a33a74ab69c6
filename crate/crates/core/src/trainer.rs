//! One seeded training run: act ε-greedily, store, sample n-step segments,
//! regress the online network onto targets computed with the target network,
//! and periodically re-synchronise the target network.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{self, EnvState};
use crate::replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY};
use crate::targets::{self, epsilon_greedy_probs, AlgorithmSpec, SigmaMode};
use crate::valuenet::{self, Minibatch, NetParams, OptState};
use crate::{Error, Result, NUM_ACTIONS};

/// Which network's greedy action defines the update-time policy inside targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicySource {
    TargetNet,
    OnlineNet,
}

impl PolicySource {
    pub fn name(self) -> &'static str {
        match self {
            PolicySource::TargetNet => "target_net",
            PolicySource::OnlineNet => "online_net",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "target_net" => Some(PolicySource::TargetNet),
            "online_net" => Some(PolicySource::OnlineNet),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmSpec,
    pub epsilon: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub timeout_steps: usize,
    pub hidden_units: usize,
    pub alpha: f64,
    pub grad_momentum: f64,
    pub squared_grad_momentum: f64,
    pub min_squared_grad: f64,
    pub buffer_capacity: usize,
    pub warmup_actions: u64,
    pub batch_size: usize,
    /// Training updates between target-network synchronisations.
    pub target_sync_period: u64,
    pub seed: u64,
    pub policy_source: PolicySource,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: AlgorithmSpec::sarsa(1, false),
            epsilon: 0.1,
            gamma: 1.0,
            episodes: 500,
            timeout_steps: 5000,
            hidden_units: valuenet::DEFAULT_HIDDEN,
            alpha: valuenet::DEFAULT_ALPHA,
            grad_momentum: valuenet::DEFAULT_GRAD_MOMENTUM,
            squared_grad_momentum: valuenet::DEFAULT_SQUARED_GRAD_MOMENTUM,
            min_squared_grad: valuenet::DEFAULT_MIN_SQUARED_GRAD,
            buffer_capacity: DEFAULT_CAPACITY,
            warmup_actions: 1000,
            batch_size: 32,
            target_sync_period: 1000,
            seed: 0,
            policy_source: PolicySource::TargetNet,
        }
    }
}

impl ExperimentConfig {
    pub fn with_algorithm(algorithm: AlgorithmSpec) -> Self {
        Self {
            algorithm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithm.validate()?;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("epsilon", self.epsilon)?;
        unit("gamma", self.gamma)?;
        unit("grad_momentum", self.grad_momentum)?;
        unit("squared_grad_momentum", self.squared_grad_momentum)?;
        let positive = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive")))
            }
        };
        positive("episodes", self.episodes >= 1)?;
        positive("timeout_steps", self.timeout_steps >= 1)?;
        positive("hidden_units", self.hidden_units >= 1)?;
        positive("buffer_capacity", self.buffer_capacity >= 2)?;
        positive("batch_size", self.batch_size >= 1)?;
        positive("target_sync_period", self.target_sync_period >= 1)?;
        positive("alpha", self.alpha > 0.0 && self.alpha.is_finite())?;
        positive("min_squared_grad", self.min_squared_grad > 0.0)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    pub episode_index: usize,
    pub return_: f64,
    pub steps: usize,
    pub timed_out: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    /// Actions executed in the environment.
    pub env_steps: u64,
    /// Stored non-terminal entries (each carries a chosen action).
    pub decision_entries: u64,
    pub terminal_entries: u64,
    pub training_updates: u64,
    /// Synchronisations after the initial copy.
    pub target_syncs: u64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub wall_seconds: f64,
    pub counters: Counters,
}

/// σ stored with transitions during `episode`.
pub fn sigma_schedule(mode: &SigmaMode, episode: usize) -> f64 {
    mode.at_episode(episode)
}

pub struct Trainer {
    config: ExperimentConfig,
    rng: ChaCha8Rng,
    online: NetParams,
    target: NetParams,
    opt: OptState,
    buffer: ReplayBuffer,
    grads: NetParams,
    scratch: Vec<f64>,
    batch: Minibatch,
    targets: Vec<f64>,
    counters: Counters,
    episode: usize,
}

impl Trainer {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let online = NetParams::init_uniform(config.hidden_units, &mut rng);
        let target = valuenet::sync_target(&online);
        let opt = OptState::with_constants(
            config.hidden_units,
            config.alpha,
            config.grad_momentum,
            config.squared_grad_momentum,
            config.min_squared_grad,
        );
        Ok(Self {
            rng,
            grads: NetParams::zeros(config.hidden_units),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            online,
            target,
            opt,
            scratch: Vec::new(),
            batch: Minibatch::default(),
            targets: Vec::new(),
            counters: Counters::default(),
            episode: 0,
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn online(&self) -> &NetParams {
        &self.online
    }

    pub fn target(&self) -> &NetParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    fn warming_up(&self) -> bool {
        self.counters.env_steps < self.config.warmup_actions
    }

    /// Chooses an action and its behaviour probability.
    fn act(&mut self, state: &EnvState) -> (usize, f64) {
        if self.warming_up() {
            let a = self.rng.gen_range(0..NUM_ACTIONS);
            return (a, 1.0 / NUM_ACTIONS as f64);
        }
        let q = self.online.forward(&state.features());
        let policy = epsilon_greedy_probs(&q, self.config.epsilon);
        let a = policy.sample_from_unit(self.rng.gen::<f64>());
        (a, policy.prob(a))
    }

    /// One gradient step; returns false when the buffer has nothing to sample.
    fn train(&mut self) -> Result<bool> {
        let cfg = &self.config;
        let mut segments =
            match self
                .buffer
                .sample_segments(cfg.batch_size, cfg.algorithm.n, &mut self.rng)
            {
                Ok(s) => s,
                Err(Error::NotReady) => return Ok(false),
                Err(e) => return Err(e),
            };
        let policy_net = match cfg.policy_source {
            PolicySource::TargetNet => None,
            PolicySource::OnlineNet => Some(&self.online),
        };
        targets::compute_targets_into(
            &mut segments,
            &cfg.algorithm,
            cfg.gamma,
            &self.target,
            policy_net,
            cfg.epsilon,
            &mut self.targets,
        )?;
        self.batch.clear();
        for (seg, &g) in segments.iter().zip(&self.targets) {
            let start = seg.start();
            self.batch.push(start.state, start.action, g);
        }
        let loss = valuenet::loss_and_gradients_into(
            &self.online,
            &self.batch,
            &mut self.grads,
            &mut self.scratch,
        )?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                loss,
                episode: self.episode,
                update: self.counters.training_updates,
                max_target: self.targets.iter().fold(0.0, |m, t| t.abs().max(m)),
            });
        }
        valuenet::rmsprop_step(&mut self.online, &mut self.opt, &self.grads);
        self.counters.training_updates += 1;
        if self.counters.training_updates % cfg.target_sync_period == 0 {
            self.target.clone_from(&self.online);
            self.counters.target_syncs += 1;
        }
        Ok(true)
    }

    fn store(&mut self, t: Transition) -> Result<()> {
        self.buffer.store(t)?;
        if t.terminal {
            self.counters.terminal_entries += 1;
        } else {
            self.counters.decision_entries += 1;
        }
        Ok(())
    }

    /// Plays one episode, training after every post-warmup decision.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let sigma = sigma_schedule(&self.config.algorithm.sigma_mode, self.episode);
        let mut state = env::reset(&mut self.rng);
        let mut steps = 0usize;
        let mut ret = 0.0;
        let mut last_reward = None;
        let timed_out = loop {
            let train_after = !self.warming_up();
            let (action, prob) = self.act(&state);
            let entry = match last_reward {
                None => Transition::first(state.features(), action),
                Some(r) => Transition::step(state.features(), r, action, prob, sigma),
            };
            self.store(entry)?;
            if train_after {
                self.train()?;
            }
            if steps == self.config.timeout_steps {
                break true;
            }
            let out = env::step(state, action)?;
            self.counters.env_steps += 1;
            steps += 1;
            ret += out.reward;
            if out.terminal {
                self.store(Transition::terminal(out.next.features(), out.reward))?;
                break false;
            }
            state = out.next;
            last_reward = Some(out.reward);
        };
        let record = EpisodeRecord {
            episode_index: self.episode,
            return_: ret,
            steps,
            timed_out,
        };
        self.episode += 1;
        Ok(record)
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RunResult> {
    let started = Instant::now();
    let mut trainer = Trainer::new(config.clone())?;
    let episodes = (0..config.episodes)
        .map(|_| trainer.run_episode())
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        config: config.clone(),
        seed: config.seed,
        episodes,
        wall_seconds: started.elapsed().as_secs_f64(),
        counters: trainer.counters(),
    })
}
