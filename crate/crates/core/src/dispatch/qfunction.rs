//! Action-value function with replay memory and a target network.

use rand::Rng;

use super::network::{LayerKind, Network, Shape};
use super::replay::{ReplayBuffer, Transition};
use super::schedule::Linear;
use super::{ACTIONS, ACTION_SIDE};
use crate::error::{Error, Result};
use crate::num::Real;

/// Input planes per state: demand plus supply at three offsets.
pub const PLANES: usize = 4;
/// Window the large profile reads before pooling down to 23x23.
pub const DEEP_WINDOW: usize = 51;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// Two layers over a `crop x crop` window around the vehicle: a
    /// `(crop - 14)`-wide convolution with `hidden` channels, then a 1x1
    /// convolution. The output map lines up with the 15x15 moves, so the
    /// weights are shared across actions.
    Compact { crop: usize, hidden: usize },
    /// Two dense layers over the flattened `crop x crop` window.
    Dense { crop: usize, hidden: usize },
    /// Pool 51x51 down to 23x23, then 5x5, 3x3, 3x3 and two 1x1 convolutions.
    Deep,
}

impl Profile {
    pub fn window(&self) -> usize {
        match *self {
            Profile::Compact { crop, .. } | Profile::Dense { crop, .. } => crop,
            Profile::Deep => DEEP_WINDOW,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Compact { .. } => "compact",
            Profile::Dense { .. } => "dense",
            Profile::Deep => "deep",
        }
    }

    pub fn build<R: Real>(&self, seed: u64) -> Result<Network<R>> {
        let w = self.window();
        let input = Shape::new(PLANES, w, w);
        let layers: Vec<LayerKind> = match *self {
            Profile::Compact { crop, hidden } => {
                if crop % 2 == 0 || crop < ACTION_SIDE || hidden == 0 {
                    return Err(Error::Config(format!(
                        "compact profile needs an odd crop >= {ACTION_SIDE} and hidden > 0, got {crop}/{hidden}"
                    )));
                }
                vec![
                    LayerKind::Conv { out: hidden, k: crop + 1 - ACTION_SIDE },
                    LayerKind::Relu,
                    LayerKind::Conv { out: 1, k: 1 },
                ]
            }
            Profile::Dense { crop, hidden } => {
                if crop % 2 == 0 || hidden == 0 {
                    return Err(Error::Config(format!(
                        "dense profile needs an odd crop and hidden > 0, got {crop}/{hidden}"
                    )));
                }
                vec![
                    LayerKind::Dense { out: hidden, bias: true },
                    LayerKind::Relu,
                    LayerKind::Dense { out: ACTIONS, bias: true },
                ]
            }
            Profile::Deep => vec![
                LayerKind::AvgPool { k: 29 },
                LayerKind::Conv { out: 16, k: 5 },
                LayerKind::Relu,
                LayerKind::Conv { out: 32, k: 3 },
                LayerKind::Relu,
                LayerKind::Conv { out: 64, k: 3 },
                LayerKind::Relu,
                LayerKind::Conv { out: 128, k: 1 },
                LayerKind::Relu,
                LayerKind::Conv { out: 1, k: 1 },
            ],
        };
        let net = Network::new(input, &layers, seed, true)?;
        debug_assert_eq!(net.output_len(), ACTIONS);
        Ok(net)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QConfig<R> {
    pub profile: Profile,
    /// Discount per decision.
    pub eta: R,
    pub epsilon: Linear<R>,
    pub learning_rate: Linear<R>,
    pub sync_every: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Multiplies raw rewards before they enter the Bellman target.
    pub reward_scale: R,
    /// Temporal-difference errors are clipped to `[-clip, clip]` when set.
    pub td_clip: Option<R>,
    pub seed: u64,
    /// Grid the function was trained on, recorded in checkpoints.
    pub grid: (usize, usize),
}

impl<R: Real> QConfig<R> {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > R::zero() && self.eta < R::one()) {
            return Err(Error::Config(format!("discount must be in (0, 1), got {}", self.eta)));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.sync_every == 0 {
            return Err(Error::Config("batch size, replay capacity and sync interval must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub loss: f64,
    /// Mean over the batch of `max_a Q(s, a)` before the update.
    pub mean_qmax: f64,
}

#[derive(Clone, Debug)]
pub struct QFunction<R> {
    pub config: QConfig<R>,
    online: Network<R>,
    target: Network<R>,
    buffer: ReplayBuffer<Transition<R>>,
    steps: u64,
    updates: u64,
}

impl<R: Real> QFunction<R> {
    pub fn new(config: QConfig<R>) -> Result<Self> {
        config.validate()?;
        let online = config.profile.build(config.seed)?;
        Ok(Self::from_network(config, online))
    }

    /// Wraps an arbitrary network. The target starts as a copy.
    pub fn from_network(config: QConfig<R>, online: Network<R>) -> Self {
        Self {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(config.replay_capacity),
            config,
            steps: 0,
            updates: 0,
        }
    }

    pub(crate) fn restore(
        config: QConfig<R>,
        online: Network<R>,
        target: Network<R>,
        steps: u64,
        updates: u64,
    ) -> Self {
        Self { online, target, buffer: ReplayBuffer::new(config.replay_capacity), config, steps, updates }
    }

    pub fn online(&self) -> &Network<R> {
        &self.online
    }

    pub fn target(&self) -> &Network<R> {
        &self.target
    }

    pub fn input_len(&self) -> usize {
        self.online.input_len()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn buffer(&self) -> &ReplayBuffer<Transition<R>> {
        &self.buffer
    }

    pub fn epsilon(&self) -> R {
        self.config.epsilon.at(self.steps)
    }

    pub fn learning_rate(&self) -> R {
        self.config.learning_rate.at(self.updates)
    }

    /// Counts decisions taken; drives the exploration schedule.
    pub fn advance(&mut self, decisions: u64) {
        self.steps += decisions;
    }

    pub fn q_values(&self, state: &[R]) -> Result<Vec<R>> {
        if state.len() != self.input_len() {
            return Err(Error::Domain(format!(
                "state has {} values, network expects {}",
                state.len(),
                self.input_len()
            )));
        }
        let q = self.online.forward(state);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite action value; online parameter norm {:.6e}, target norm {:.6e}",
                self.online.param_norm(),
                self.target.param_norm()
            )));
        }
        Ok(q)
    }

    pub fn max_q(&self, state: &[R]) -> Result<R> {
        Ok(self.q_values(state)?.into_iter().fold(R::neg_infinity(), R::max))
    }

    pub fn remember(&mut self, t: Transition<R>) {
        self.buffer.push(t);
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// One minibatch update once the memory holds a full batch.
    pub fn train_step<G: Rng + ?Sized>(&mut self, rng: &mut G) -> Result<Option<TrainStats>> {
        if self.buffer.len() < self.config.batch_size {
            return Ok(None);
        }
        let batch: Vec<Transition<R>> = self.buffer.sample(self.config.batch_size, rng).into_iter().cloned().collect();
        let refs: Vec<&Transition<R>> = batch.iter().collect();
        self.q_update(&refs).map(Some)
    }

    /// Gradient step on `1/2 mean (r + eta max_a' Q(s', a'; target) - Q(s, a))^2`
    /// with the current learning rate. The target network is synced every
    /// `sync_every` updates.
    pub fn q_update(&mut self, batch: &[&Transition<R>]) -> Result<TrainStats> {
        if batch.is_empty() {
            return Err(Error::Domain("q_update needs a non-empty batch".into()));
        }
        let n = R::of_count(batch.len());
        let lr = self.learning_rate();
        let mut grads = vec![R::zero(); self.online.param_count()];
        let mut loss = 0.0;
        let mut qmax = 0.0;
        for t in batch {
            let future = match &t.next {
                Some(s) => self.target.forward(s).into_iter().fold(R::neg_infinity(), R::max),
                None => R::zero(),
            };
            let y = self.config.reward_scale * t.reward + self.config.eta * future;
            let trace = self.online.forward_trace(&t.state);
            let out = trace.output();
            qmax += out.iter().copied().fold(R::neg_infinity(), R::max).as_f64();
            let mut err = y - out[t.action];
            loss += 0.5 * err.as_f64().powi(2);
            if let Some(c) = self.config.td_clip {
                err = err.max(-c).min(c);
            }
            let mut g = vec![R::zero(); out.len()];
            g[t.action] = -err / n;
            self.online.backward(&trace, &g, &mut grads);
        }
        let loss = loss / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss; online parameter norm {:.6e}",
                self.online.param_norm()
            )));
        }
        for (p, g) in self.online.params_mut().iter_mut().zip(&grads) {
            *p -= lr * *g;
        }
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.sync_every) {
            self.sync_target();
        }
        Ok(TrainStats { loss, mean_qmax: qmax / batch.len() as f64 })
    }
}
