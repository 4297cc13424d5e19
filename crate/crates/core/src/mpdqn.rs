//! Multi-pass parameterized DQN.
//!
//! The actor maps a state to one transmit power per RRI. The Q network is
//! run once per RRI ("pass"), each time with only that RRI's power filled in
//! its parameter slot, and pass `k` reads off output `k`. Both networks are
//! single-hidden-layer ReLU perceptrons with hand-written backprop.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{run_episode, ActionTuple, Env, EnvConfig, EpisodeReport, Policy, Transition, STATE_DIM};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng, Stream};
use crate::sps::Rri;

pub const N_ACTIONS: usize = 3;
pub const Q_INPUT_DIM: usize = STATE_DIM + N_ACTIONS;

/// `in -> hidden (ReLU) -> out (linear)`, parameters in one flat vector:
/// `W1 (hidden x in), b1, W2 (out x hidden), b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        let len = n_hidden * n_in + n_hidden + n_out * n_hidden + n_out;
        Self { n_in, n_hidden, n_out, params: vec![0.0; len] }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialisation.
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(n_in, n_hidden, n_out);
        let (b1, w2) = (m.off_b1(), m.off_w2());
        let (l1, l2) = (1.0 / (n_in as f64).sqrt(), 1.0 / (n_hidden as f64).sqrt());
        for (i, p) in m.params.iter_mut().enumerate() {
            let lim = if i < w2 && i < b1 + n_hidden { l1 } else { l2 };
            *p = rng.random_range(-lim..lim);
        }
        m
    }

    fn off_b1(&self) -> usize {
        self.n_hidden * self.n_in
    }

    fn off_w2(&self) -> usize {
        self.off_b1() + self.n_hidden
    }

    fn off_b2(&self) -> usize {
        self.off_w2() + self.n_out * self.n_hidden
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Output, writing post-activation hidden values into `hidden`.
    pub fn forward_into(&self, x: &[f64], hidden: &mut Vec<f64>, out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.n_in);
        let p = &self.params;
        let (b1, w2, b2) = (self.off_b1(), self.off_w2(), self.off_b2());
        hidden.clear();
        for j in 0..self.n_hidden {
            let row = &p[j * self.n_in..(j + 1) * self.n_in];
            let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + p[b1 + j];
            hidden.push(z.max(0.0));
        }
        out.clear();
        for k in 0..self.n_out {
            let row = &p[w2 + k * self.n_hidden..w2 + (k + 1) * self.n_hidden];
            out.push(row.iter().zip(hidden.iter()).map(|(w, h)| w * h).sum::<f64>() + p[b2 + k]);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (mut h, mut o) = (Vec::new(), Vec::new());
        self.forward_into(x, &mut h, &mut o);
        o
    }

    /// Backprop of `d_out` through the pass that produced `hidden` from `x`.
    /// Accumulates parameter gradients into `grad` when given and input
    /// gradients into `d_x` when given.
    pub fn backward(&self, x: &[f64], hidden: &[f64], d_out: &[f64], grad: Option<&mut [f64]>, d_x: Option<&mut [f64]>) {
        let p = &self.params;
        let (b1, w2, b2) = (self.off_b1(), self.off_w2(), self.off_b2());
        let mut d_hidden = vec![0.0; self.n_hidden];
        for (k, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &p[w2 + k * self.n_hidden..w2 + (k + 1) * self.n_hidden];
            for (dh, w) in d_hidden.iter_mut().zip(row) {
                *dh += g * w;
            }
        }
        for (dh, h) in d_hidden.iter_mut().zip(hidden) {
            if *h <= 0.0 {
                *dh = 0.0;
            }
        }
        if let Some(grad) = grad {
            for (k, &g) in d_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &mut grad[w2 + k * self.n_hidden..w2 + (k + 1) * self.n_hidden];
                for (gw, h) in row.iter_mut().zip(hidden) {
                    *gw += g * h;
                }
                grad[b2 + k] += g;
            }
            for (j, &dh) in d_hidden.iter().enumerate() {
                if dh == 0.0 {
                    continue;
                }
                let row = &mut grad[j * self.n_in..(j + 1) * self.n_in];
                for (gw, v) in row.iter_mut().zip(x) {
                    *gw += dh * v;
                }
                grad[b1 + j] += dh;
            }
        }
        if let Some(d_x) = d_x {
            for (j, &dh) in d_hidden.iter().enumerate() {
                if dh == 0.0 {
                    continue;
                }
                let row = &p[j * self.n_in..(j + 1) * self.n_in];
                for (dx, w) in d_x.iter_mut().zip(row) {
                    *dx += dh * w;
                }
            }
        }
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn check_state(s: &[f64]) -> Result<()> {
    if s.len() != STATE_DIM {
        return Err(Error::Invalid(format!("state has {} features, expected {STATE_DIM}", s.len())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("actor input"));
    }
    Ok(())
}

/// Powers `p_max * sigmoid(actor(s))`, one per RRI.
pub fn actor_forward(actor: &Mlp, s: &[f64], p_max_w: f64) -> Result<[f64; N_ACTIONS]> {
    check_state(s)?;
    let out = actor.forward(s);
    Ok(std::array::from_fn(|k| p_max_w * sigmoid(out[k])))
}

fn q_input(s: &[f64], k: usize, x_k: f64, p_max_w: f64) -> [f64; Q_INPUT_DIM] {
    let mut input = [0.0; Q_INPUT_DIM];
    input[..STATE_DIM].copy_from_slice(s);
    input[STATE_DIM + k] = x_k / p_max_w;
    input
}

/// `Q(s, k, x_k)` for every RRI index `k`, one network pass each. The
/// parameter slot carries the power as a fraction of `p_max`.
pub fn q_multipass(q: &Mlp, s: &[f64], x: &[f64; N_ACTIONS], p_max_w: f64) -> [f64; N_ACTIONS] {
    let (mut h, mut o) = (Vec::new(), Vec::new());
    std::array::from_fn(|k| {
        q.forward_into(&q_input(s, k, x[k], p_max_w), &mut h, &mut o);
        o[k]
    })
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64; N_ACTIONS]) -> usize {
    let mut best = 0;
    for k in 1..N_ACTIONS {
        if values[k] > values[best] {
            best = k;
        }
    }
    best
}

/// One replayed decision: state, RRI index, executed power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: [f64; STATE_DIM],
    pub action: usize,
    pub power_w: f64,
}

/// `mean 1/2 (y - Q(s, k, p))^2` and its gradient in the Q parameters. Only
/// the taken action's pass carries gradient.
pub fn loss_q(q: &Mlp, batch: &[Sample], targets: &[f64], p_max_w: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; q.len()];
    let (mut h, mut o) = (Vec::new(), Vec::new());
    let mut d_out = vec![0.0; N_ACTIONS];
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (b, &y) in batch.iter().zip(targets) {
        let input = q_input(&b.state, b.action, b.power_w, p_max_w);
        q.forward_into(&input, &mut h, &mut o);
        let err = o[b.action] - y;
        loss += 0.5 * err * err * scale;
        d_out.fill(0.0);
        d_out[b.action] = err * scale;
        q.backward(&input, &h, &d_out, Some(&mut grad), None);
    }
    (loss, grad)
}

/// `mean -sum_k Q(s, k, x_k(s))` and its gradient in the actor parameters;
/// the Q network is held fixed.
pub fn loss_actor(actor: &Mlp, q: &Mlp, states: &[[f64; STATE_DIM]], p_max_w: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; actor.len()];
    let (mut ha, mut oa) = (Vec::new(), Vec::new());
    let (mut hq, mut oq) = (Vec::new(), Vec::new());
    let scale = 1.0 / states.len() as f64;
    let mut loss = 0.0;
    for s in states {
        actor.forward_into(s, &mut ha, &mut oa);
        let mut d_a = [0.0; N_ACTIONS];
        for k in 0..N_ACTIONS {
            let u = sigmoid(oa[k]);
            let input = q_input(s, k, u * p_max_w, p_max_w);
            q.forward_into(&input, &mut hq, &mut oq);
            loss -= oq[k] * scale;
            let mut d_out = [0.0; N_ACTIONS];
            d_out[k] = -scale;
            let mut d_in = [0.0; Q_INPUT_DIM];
            q.backward(&input, &hq, &d_out, None, Some(&mut d_in));
            d_a[k] = d_in[STATE_DIM + k] * u * (1.0 - u);
        }
        actor.backward(s, &ha, &d_a, Some(&mut grad), None);
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// Applies one step; returns false (and changes nothing) when any
    /// gradient is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> bool {
        if grads.iter().any(|g| !g.is_finite()) {
            log::warn!("skipping optimizer step: non-finite gradient");
            return false;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        true
    }
}

/// `target = (1 - tau) * target + tau * online`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    for (t, o) in target.params.iter_mut().zip(&online.params) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: Vec::with_capacity(capacity), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Overwrites the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `n` distinct entries, uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        index::sample(rng, self.items.len(), n.min(self.items.len())).into_iter().map(|i| &self.items[i]).collect()
    }
}

/// Discrete Ornstein-Uhlenbeck process `x += theta (mu - x) + sigma N(0,1)`,
/// parameterized by its stationary variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    pub x: f64,
}

impl OuNoise {
    pub fn new(theta: f64, stationary_variance: f64) -> Self {
        let sigma = (stationary_variance * theta * (2.0 - theta)).sqrt();
        Self { theta, sigma, mu: 0.0, x: 0.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.x += self.theta * (self.mu - self.x) + self.sigma * z;
        self.x
    }

    pub fn reset(&mut self) {
        self.x = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub hidden: usize,
    pub lr_q: f64,
    pub lr_x: f64,
    pub gamma_discount: f64,
    pub tau: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub ou_decay: f64,
    /// Stationary variance of the power noise (W^2).
    pub ou_variance: f64,
    pub p_ran_start: f64,
    pub p_ran_end: f64,
    /// Fraction of the episodes over which `P_ran` decays linearly.
    pub p_ran_decay_fraction: f64,
    pub updates_per_transition: usize,
    pub episodes: usize,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            hidden: 128,
            lr_q: 5e-4,
            lr_x: 1e-4,
            gamma_discount: 0.99,
            tau: 0.01,
            buffer_capacity: 2000,
            batch_size: 128,
            ou_decay: 0.15,
            ou_variance: 1e-4,
            p_ran_start: 1.0,
            p_ran_end: 0.05,
            p_ran_decay_fraction: 0.5,
            updates_per_transition: 1,
            episodes: 300,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("agent.hidden", self.hidden as f64),
            ("agent.lr_q", self.lr_q),
            ("agent.lr_x", self.lr_x),
            ("agent.buffer_capacity", self.buffer_capacity as f64),
            ("agent.batch_size", self.batch_size as f64),
            ("agent.ou_decay", self.ou_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(name, "must be > 0"));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config("agent.tau", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gamma_discount) {
            return Err(Error::config("agent.gamma_discount", "must lie in [0, 1]"));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::config("agent.batch_size", "must not exceed agent.buffer_capacity"));
        }
        if !(self.ou_variance >= 0.0) {
            return Err(Error::config("agent.ou_variance", "must be >= 0"));
        }
        for (name, v) in [
            ("agent.p_ran_start", self.p_ran_start),
            ("agent.p_ran_end", self.p_ran_end),
            ("agent.p_ran_decay_fraction", self.p_ran_decay_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Linear decay from `p_ran_start` to `p_ran_end` over the first
    /// `p_ran_decay_fraction` of `episodes`, then flat.
    pub fn p_ran_at(&self, episode: usize) -> f64 {
        let span = self.p_ran_decay_fraction * self.episodes as f64;
        if span <= 0.0 {
            return self.p_ran_end;
        }
        let f = (episode as f64 / span).min(1.0);
        self.p_ran_start + (self.p_ran_end - self.p_ran_start) * f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Exploring actions, transitions stored and learned from.
    Train,
    /// Greedy actions, no buffer writes, no updates.
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpdqnAgent {
    pub params: AgentParams,
    pub p_max_w: f64,
    pub actor: Mlp,
    pub q: Mlp,
    pub actor_target: Mlp,
    pub q_target: Mlp,
    pub adam_x: Adam,
    pub adam_q: Adam,
    pub buffer: ReplayBuffer,
    /// One power-noise process per vehicle.
    pub noise: Vec<OuNoise>,
    pub p_ran: f64,
    pub mode: Mode,
    pub train_steps: u64,
    pub skipped_steps: u64,
    rng: SimRng,
    replay_rng: SimRng,
    noise_rng: SimRng,
}

/// On-disk checkpoint layout version.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    agent: MpdqnAgent,
}

impl MpdqnAgent {
    pub fn new(params: AgentParams, p_max_w: f64, n_vehicles: usize, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut init = rng::stream(seed, Stream::Agent);
        let actor = Mlp::new(STATE_DIM, params.hidden, N_ACTIONS, &mut init);
        let q = Mlp::new(Q_INPUT_DIM, params.hidden, N_ACTIONS, &mut init);
        Ok(Self {
            adam_x: Adam::new(actor.len(), params.lr_x),
            adam_q: Adam::new(q.len(), params.lr_q),
            actor_target: actor.clone(),
            q_target: q.clone(),
            actor,
            q,
            buffer: ReplayBuffer::new(params.buffer_capacity),
            noise: vec![OuNoise::new(params.ou_decay, params.ou_variance); n_vehicles],
            p_ran: params.p_ran_start,
            mode: Mode::Train,
            train_steps: 0,
            skipped_steps: 0,
            rng: rng::substream(seed, Stream::Agent, 1),
            replay_rng: rng::stream(seed, Stream::Replay),
            noise_rng: rng::stream(seed, Stream::Noise),
            p_max_w,
            params,
        })
    }

    pub fn powers(&self, s: &[f64]) -> Result<[f64; N_ACTIONS]> {
        actor_forward(&self.actor, s, self.p_max_w)
    }

    pub fn q_values(&self, s: &[f64]) -> Result<[f64; N_ACTIONS]> {
        let x = self.powers(s)?;
        Ok(q_multipass(&self.q, s, &x, self.p_max_w))
    }

    /// `(RRI index, power)`. Exploring: with probability `p_ran` a uniform
    /// action, otherwise greedy; OU noise on the power either way, then
    /// clamped to the box. Not exploring: greedy, noise-free.
    pub fn select_action(&mut self, vehicle: usize, s: &[f64], explore: bool) -> Result<(usize, f64)> {
        let x = self.powers(s)?;
        if !explore {
            let k = argmax(&q_multipass(&self.q, s, &x, self.p_max_w));
            return Ok((k, x[k]));
        }
        let (k, p) = if self.rng.random_bool(self.p_ran) {
            (self.rng.random_range(0..N_ACTIONS), self.rng.random_range(0.0..=self.p_max_w))
        } else {
            let k = argmax(&q_multipass(&self.q, s, &x, self.p_max_w));
            (k, x[k])
        };
        let delta = self.noise[vehicle].sample(&mut self.noise_rng);
        Ok((k, (p + delta).clamp(0.0, self.p_max_w)))
    }

    /// `r` if `done`, else `r + gamma max_k Q'(s', k, x'_k(s'))`.
    pub fn td_target(&self, r: f64, next: &[f64], done: bool) -> Result<f64> {
        if done || self.params.gamma_discount == 0.0 {
            return Ok(r);
        }
        let x = actor_forward(&self.actor_target, next, self.p_max_w)?;
        let q = q_multipass(&self.q_target, next, &x, self.p_max_w);
        Ok(r + self.params.gamma_discount * q[argmax(&q)])
    }

    /// Stores a transition and, once the buffer holds more than a batch,
    /// runs `updates_per_transition` training steps.
    pub fn remember(&mut self, t: &Transition) -> Result<()> {
        self.buffer.push(t.clone());
        if self.buffer.len() > self.params.batch_size {
            for _ in 0..self.params.updates_per_transition {
                self.train_step()?;
            }
        }
        Ok(())
    }

    /// One minibatch update of Q then the actor, then soft target updates.
    /// Returns `(loss_q, loss_actor)`.
    pub fn train_step(&mut self) -> Result<(f64, f64)> {
        let batch: Vec<Transition> =
            self.buffer.sample(self.params.batch_size, &mut self.replay_rng).into_iter().cloned().collect();
        let mut samples = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in &batch {
            samples.push(Sample { state: t.state, action: t.action.gamma.index(), power_w: t.action.power_w });
            targets.push(self.td_target(t.reward, &t.next_state, t.done)?);
        }
        let (lq, gq) = loss_q(&self.q, &samples, &targets, self.p_max_w);
        let ok_q = self.adam_q.step(&mut self.q.params, &gq);
        let states: Vec<[f64; STATE_DIM]> = samples.iter().map(|s| s.state).collect();
        let (lx, gx) = loss_actor(&self.actor, &self.q, &states, self.p_max_w);
        let ok_x = self.adam_x.step(&mut self.actor.params, &gx);
        if !(ok_q && ok_x) {
            self.skipped_steps += 1;
        }
        soft_update(&mut self.q_target, &self.q, self.params.tau);
        soft_update(&mut self.actor_target, &self.actor, self.params.tau);
        self.train_steps += 1;
        Ok((lq, lx))
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &Checkpoint { version: CHECKPOINT_VERSION, agent: self.clone() })?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ck: Checkpoint = serde_json::from_reader(file)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Invalid(format!("checkpoint version {} (expected {CHECKPOINT_VERSION})", ck.version)));
        }
        Ok(ck.agent)
    }
}

impl Policy for MpdqnAgent {
    fn act(&mut self, env: &Env, vehicle: usize) -> Result<ActionTuple> {
        let s = env.features(vehicle);
        let (k, power_w) = self.select_action(vehicle, &s, self.mode == Mode::Train)?;
        Ok(ActionTuple { gamma: Rri::ALL[k], power_w })
    }

    fn observe(&mut self, t: &Transition) -> Result<()> {
        match self.mode {
            Mode::Train => self.remember(t),
            Mode::Eval => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub p_ran: f64,
    pub mean_reward: f64,
    pub avg_aoi_slots: f64,
    pub avg_energy_j: f64,
    pub objective: f64,
    pub train_steps: u64,
}

/// Seed of training episode `episode` of a run seeded `seed`.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_add((episode as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains a fresh agent for `params.episodes` episodes of the configured
/// horizon; returns it with the per-episode learning curve.
pub fn train(env_cfg: &EnvConfig, params: &AgentParams, seed: u64) -> Result<(MpdqnAgent, Vec<CurvePoint>)> {
    let mut env = Env::new(env_cfg.clone())?;
    let mut agent = MpdqnAgent::new(params.clone(), env_cfg.p_max_w(), env_cfg.scenario.n_vehicles, seed)?;
    let mut curve = Vec::with_capacity(params.episodes);
    for episode in 0..params.episodes {
        agent.p_ran = params.p_ran_at(episode);
        agent.mode = Mode::Train;
        agent.noise.iter_mut().for_each(OuNoise::reset);
        let r: EpisodeReport = run_episode(&mut env, &mut agent, episode_seed(seed, episode))?;
        curve.push(CurvePoint {
            episode,
            p_ran: agent.p_ran,
            mean_reward: r.mean_reward,
            avg_aoi_slots: r.avg_aoi_slots,
            avg_energy_j: r.avg_energy_j,
            objective: r.objective,
            train_steps: agent.train_steps,
        });
        log::debug!("episode {episode}: reward {:.4} objective {:.4}", r.mean_reward, r.objective);
    }
    agent.mode = Mode::Eval;
    Ok((agent, curve))
}

/// Greedy episodes with frozen weights, one per seed.
pub fn evaluate(env_cfg: &EnvConfig, agent: &MpdqnAgent, seeds: &[u64]) -> Result<Vec<EpisodeReport>> {
    let mut env = Env::new(env_cfg.clone())?;
    let mut frozen = agent.clone();
    frozen.mode = Mode::Eval;
    seeds.iter().map(|&s| run_episode(&mut env, &mut frozen, s)).collect()
}
