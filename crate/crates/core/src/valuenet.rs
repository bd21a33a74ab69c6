//! Action-value network `2 → H → |A|` with one ReLU hidden layer, its squared
//! loss against fixed targets, and a centered RMSprop optimizer.
//!
//! Parameters are stored flat: `w1` is `H×2` row-major, `w2` is `|A|×H`
//! row-major. The same layout is used by the snapshot format.

use rand::Rng;

use crate::{ActionValues, Error, Result, NUM_ACTIONS};

pub const INPUT_DIM: usize = 2;
pub const DEFAULT_HIDDEN: usize = 1000;

pub const DEFAULT_ALPHA: f64 = 0.00025;
pub const DEFAULT_GRAD_MOMENTUM: f64 = 0.95;
pub const DEFAULT_SQUARED_GRAD_MOMENTUM: f64 = 0.95;
pub const DEFAULT_MIN_SQUARED_GRAD: f64 = 0.01;

const SNAPSHOT_MAGIC: [u8; 4] = *b"NSQ1";
const SNAPSHOT_HEADER: usize = 16;

const FLUSH_GRAD: f64 = 1e-150;
const FLUSH_SQUARED: f64 = 1e-290;

/// States processed together by the batched forward pass.
const TILE: usize = 64;
/// Accumulator lanes for dot products over hidden units.
const LANES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: [f64; NUM_ACTIONS],
}

impl NetParams {
    pub fn zeros(hidden: usize) -> Self {
        assert!(hidden > 0, "hidden layer must be non-empty");
        Self {
            hidden,
            w1: vec![0.0; hidden * INPUT_DIM],
            b1: vec![0.0; hidden],
            w2: vec![0.0; NUM_ACTIONS * hidden],
            b2: [0.0; NUM_ACTIONS],
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init_uniform<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(hidden);
        let b = 1.0 / (INPUT_DIM as f64).sqrt();
        p.w1.iter_mut().for_each(|w| *w = rng.gen_range(-b..b));
        let b = 1.0 / (hidden as f64).sqrt();
        p.w2.iter_mut().for_each(|w| *w = rng.gen_range(-b..b));
        p
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameter blocks in declaration order.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Mutable access by flat index in declaration order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for block in self.blocks_mut() {
            if idx < block.len() {
                return &mut block[idx];
            }
            idx -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn fill(&mut self, value: f64) {
        for block in self.blocks_mut() {
            block.fill(value);
        }
    }

    pub fn forward(&self, state: &[f64; INPUT_DIM]) -> ActionValues {
        let mut out = [[0.0; NUM_ACTIONS]; 1];
        self.forward_tile(std::slice::from_ref(state), &mut out);
        out[0]
    }

    /// Action values for many states. Each output equals [`Self::forward`]
    /// on the same state bit for bit.
    pub fn forward_batch(&self, states: &[[f64; INPUT_DIM]], out: &mut Vec<ActionValues>) {
        out.clear();
        out.resize(states.len(), [0.0; NUM_ACTIONS]);
        for (xs, qs) in states.chunks(TILE).zip(out.chunks_mut(TILE)) {
            self.forward_tile(xs, qs);
        }
    }

    /// Hidden units outermost so the inner loop runs across states; every
    /// state accumulates over `j = 0..H` in order.
    fn forward_tile(&self, states: &[[f64; INPUT_DIM]], out: &mut [ActionValues]) {
        let n = states.len();
        debug_assert!(n <= TILE && out.len() == n);
        let h = self.hidden;
        let mut x0 = [0.0; TILE];
        let mut x1 = [0.0; TILE];
        for (s, x) in states.iter().enumerate() {
            x0[s] = x[0];
            x1[s] = x[1];
        }
        let (x0, x1) = (&x0[..n], &x1[..n]);
        let mut acc = [[0.0; TILE]; NUM_ACTIONS];
        let [acc0, acc1, acc2] = &mut acc;
        let (acc0, acc1, acc2) = (&mut acc0[..n], &mut acc1[..n], &mut acc2[..n]);
        let (w2a, rest) = self.w2.split_at(h);
        let (w2b, w2c) = rest.split_at(h);
        for j in 0..h {
            let (wx, wv, b) = (self.w1[2 * j], self.w1[2 * j + 1], self.b1[j]);
            let (ca, cb, cc) = (w2a[j], w2b[j], w2c[j]);
            for s in 0..n {
                let a = (wx * x0[s] + wv * x1[s] + b).max(0.0);
                acc0[s] += ca * a;
                acc1[s] += cb * a;
                acc2[s] += cc * a;
            }
        }
        for (s, q) in out.iter_mut().enumerate() {
            *q = [
                acc0[s] + self.b2[0],
                acc1[s] + self.b2[1],
                acc2[s] + self.b2[2],
            ];
        }
    }

    pub fn to_snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SNAPSHOT_HEADER + 8 * self.num_params());
        out.extend_from_slice(&SNAPSHOT_MAGIC);
        out.extend_from_slice(&(self.hidden as u64).to_le_bytes());
        out.extend_from_slice(&(NUM_ACTIONS as u32).to_le_bytes());
        for block in self.blocks() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < SNAPSHOT_HEADER || bytes[..4] != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("missing or bad magic".into()));
        }
        let hidden = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let actions = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if actions != NUM_ACTIONS {
            return Err(Error::Snapshot(format!(
                "snapshot has {actions} actions, expected {NUM_ACTIONS}"
            )));
        }
        if hidden == 0 {
            return Err(Error::Snapshot("zero hidden units".into()));
        }
        let mut p = Self::zeros(hidden);
        let body = &bytes[SNAPSHOT_HEADER..];
        if body.len() != 8 * p.num_params() {
            return Err(Error::Snapshot(format!(
                "expected {} parameter bytes, found {}",
                8 * p.num_params(),
                body.len()
            )));
        }
        let mut words = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for block in p.blocks_mut() {
            for v in block.iter_mut() {
                *v = words.next().unwrap();
            }
        }
        Ok(p)
    }
}

/// Returns an independent copy of the online parameters.
pub fn sync_target(online: &NetParams) -> NetParams {
    online.clone()
}

#[derive(Debug, Clone, Default)]
pub struct Minibatch {
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub action_indices: Vec<usize>,
    pub targets: Vec<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn clear(&mut self) {
        self.inputs.clear();
        self.action_indices.clear();
        self.targets.clear();
    }

    pub fn push(&mut self, input: [f64; INPUT_DIM], action: usize, target: f64) {
        self.inputs.push(input);
        self.action_indices.push(action);
        self.targets.push(target);
    }

    fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::contract("empty minibatch"));
        }
        if self.inputs.len() != self.len() || self.action_indices.len() != self.len() {
            return Err(Error::contract("minibatch columns differ in length"));
        }
        if let Some(&a) = self.action_indices.iter().find(|&&a| a >= NUM_ACTIONS) {
            return Err(Error::contract(format!("action index {a} out of range")));
        }
        if let Some((row, &value)) = self
            .targets
            .iter()
            .enumerate()
            .find(|(_, t)| !t.is_finite())
        {
            return Err(Error::NonFiniteTarget { row, value });
        }
        Ok(())
    }
}

/// Mean squared error between targets and the predicted value of the taken
/// action, with its exact gradient. Targets are constants.
pub fn loss_and_gradients(p: &NetParams, batch: &Minibatch) -> Result<(f64, NetParams)> {
    let mut grads = NetParams::zeros(p.hidden);
    let mut scratch = Vec::new();
    let loss = loss_and_gradients_into(p, batch, &mut grads, &mut scratch)?;
    Ok((loss, grads))
}

/// Allocation-free variant: `grads` is overwritten, `scratch` is reused for
/// hidden activations.
pub fn loss_and_gradients_into(
    p: &NetParams,
    batch: &Minibatch,
    grads: &mut NetParams,
    scratch: &mut Vec<f64>,
) -> Result<f64> {
    batch.validate()?;
    if grads.hidden != p.hidden {
        *grads = NetParams::zeros(p.hidden);
    } else {
        grads.fill(0.0);
    }
    let h = p.hidden;
    let scale = 1.0 / batch.len() as f64;
    scratch.resize(h, 0.0);
    let mut loss = 0.0;

    for ((x, &a), &target) in batch
        .inputs
        .iter()
        .zip(&batch.action_indices)
        .zip(&batch.targets)
    {
        let [x0, x1] = *x;
        let w2 = &p.w2[a * h..(a + 1) * h];
        for ((act, w1), b1) in scratch.iter_mut().zip(p.w1.chunks_exact(2)).zip(&p.b1) {
            *act = (w1[0] * x0 + w1[1] * x1 + b1).max(0.0);
        }
        let q = p.b2[a] + dot(w2, scratch);
        let err = target - q;
        loss += err * err;
        // d/dq of (target - q)^2 / B
        let delta = -2.0 * err * scale;

        grads.b2[a] += delta;
        let gw2 = &mut grads.w2[a * h..(a + 1) * h];
        for (g, &act) in gw2.iter_mut().zip(scratch.iter()) {
            *g += delta * act;
        }
        for (((gw1, gb1), &w), &act) in grads
            .w1
            .chunks_exact_mut(2)
            .zip(grads.b1.iter_mut())
            .zip(w2)
            .zip(scratch.iter())
        {
            let d = if act > 0.0 { delta * w } else { 0.0 };
            gw1[0] += d * x0;
            gw1[1] += d * x1;
            *gb1 += d;
        }
    }
    Ok(loss * scale)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0; LANES];
    let main = a.len() - a.len() % LANES;
    for (ca, cb) in a[..main].chunks_exact(LANES).zip(b[..main].chunks_exact(LANES)) {
        for l in 0..LANES {
            lanes[l] += ca[l] * cb[l];
        }
    }
    let mut sum = lanes.iter().sum::<f64>();
    for (x, y) in a[main..].iter().zip(&b[main..]) {
        sum += x * y;
    }
    sum
}

/// Centered RMSprop accumulators and constants.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub g: NetParams,
    pub s: NetParams,
    pub alpha: f64,
    pub beta_g: f64,
    pub beta_s: f64,
    pub min_sq: f64,
}

impl OptState {
    pub fn new(hidden: usize, alpha: f64) -> Self {
        Self::with_constants(
            hidden,
            alpha,
            DEFAULT_GRAD_MOMENTUM,
            DEFAULT_SQUARED_GRAD_MOMENTUM,
            DEFAULT_MIN_SQUARED_GRAD,
        )
    }

    pub fn with_constants(hidden: usize, alpha: f64, beta_g: f64, beta_s: f64, min_sq: f64) -> Self {
        Self {
            g: NetParams::zeros(hidden),
            s: NetParams::zeros(hidden),
            alpha,
            beta_g,
            beta_s,
            min_sq,
        }
    }
}

/// `g ← βg·g + (1−βg)∇`, `s ← βs·s + (1−βs)∇²`, `θ ← θ − α∇/√(s − g² + min_sq)`.
pub fn rmsprop_step(p: &mut NetParams, o: &mut OptState, grads: &NetParams) {
    let OptState {
        g,
        s,
        alpha,
        beta_g,
        beta_s,
        min_sq,
    } = o;
    let (alpha, beta_g, beta_s, min_sq) = (*alpha, *beta_g, *beta_s, *min_sq);
    for (((theta, gm), sq), grad) in p
        .blocks_mut()
        .into_iter()
        .zip(g.blocks_mut())
        .zip(s.blocks_mut())
        .zip(grads.blocks())
    {
        for (((t, gm), sq), &d) in theta
            .iter_mut()
            .zip(gm.iter_mut())
            .zip(sq.iter_mut())
            .zip(grad)
        {
            *gm = beta_g * *gm + (1.0 - beta_g) * d;
            *sq = beta_s * *sq + (1.0 - beta_s) * d * d;
            // accumulators of inactive units decay geometrically; flush them
            // before they go subnormal
            if gm.abs() < FLUSH_GRAD {
                *gm = 0.0;
            }
            if *sq < FLUSH_SQUARED {
                *sq = 0.0;
            }
            let denom = *sq - *gm * *gm + min_sq;
            debug_assert!(denom > 0.0, "RMSprop denominator {denom}");
            *t -= alpha * d / denom.sqrt();
        }
    }
}
