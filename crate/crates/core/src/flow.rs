//! Flow-matching empirical risk and the training loop.
//!
//! Training regresses the network field v(X_t, t) onto the label
//! X₁ − (t/√(1−t²))·X₀ over a fixed set of n triples (t, x0, x1). The set is
//! drawn once; epochs revisit the same triples so the minimized object is the
//! empirical risk itself.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{LfError, Result};
use crate::field::VelocityField;
use crate::metrics;
use crate::oracle::{interpolate, regression_label, DiscreteTarget, OracleField};
use crate::rng::{standard_normal_vec, substream};
use crate::tensor::{Tape, Tensor};
use crate::transformer::{RescaledVelocityNet, TransformerNet, TransformerSpec};

/// Fixed set of n training triples with precomputed interpolant points and
/// regression labels.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub t: Vec<f64>,
    pub x0: Vec<Vec<f64>>,
    pub x1: Vec<Vec<f64>>,
    xt: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
}

impl TrainingSet {
    pub fn generate(
        target: &DiscreteTarget,
        n: usize,
        horizon: f64,
        seed: u64,
    ) -> Result<TrainingSet> {
        if n == 0 {
            return Err(LfError::Contract("empty training set".to_string()));
        }
        let mut rng = substream(seed, "train-data");
        let d = target.dim();
        let mut t = Vec::with_capacity(n);
        let mut x0 = Vec::with_capacity(n);
        let mut x1 = Vec::with_capacity(n);
        for _ in 0..n {
            t.push(rng.gen_range(0.0..horizon));
            x0.push(standard_normal_vec(&mut rng, d));
            x1.push(target.sample(&mut rng).to_vec());
        }
        TrainingSet::from_triples(t, x0, x1)
    }

    pub fn from_triples(
        t: Vec<f64>,
        x0: Vec<Vec<f64>>,
        x1: Vec<Vec<f64>>,
    ) -> Result<TrainingSet> {
        if t.is_empty() || t.len() != x0.len() || t.len() != x1.len() {
            return Err(LfError::Contract("inconsistent triple lists".to_string()));
        }
        let mut xt = Vec::with_capacity(t.len());
        let mut labels = Vec::with_capacity(t.len());
        for i in 0..t.len() {
            xt.push(interpolate(&x0[i], &x1[i], t[i])?);
            labels.push(regression_label(&x0[i], &x1[i], t[i])?);
        }
        Ok(TrainingSet {
            t,
            x0,
            x1,
            xt,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x0[0].len()
    }
}

/// Knobs for one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-matrix operator-norm cap applied after each step; None disables.
    pub clip_threshold: Option<f64>,
    pub seed: u64,
    /// Early-stopping horizon T ∈ (1/2, 1).
    pub horizon: f64,
    /// Box radius R of the rescaled wrapper.
    pub box_radius: f64,
    /// Monte-Carlo budget for the per-epoch population gap (when an oracle
    /// is supplied to `train`).
    pub eval_mc: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5 < self.horizon && self.horizon < 1.0) {
            return Err(LfError::Config(format!(
                "horizon T = {} must lie in (1/2, 1)",
                self.horizon
            )));
        }
        if self.batch_size == 0 || self.learning_rate <= 0.0 || self.box_radius <= 0.0 {
            return Err(LfError::Config("invalid training config".to_string()));
        }
        Ok(())
    }

    /// Default R = max(1, √(2 log n)).
    pub fn default_box_radius(n: usize) -> f64 {
        (2.0 * (n as f64).ln()).sqrt().max(1.0)
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub epoch: u64,
    pub empirical_loss: f64,
    pub population_gap: Option<f64>,
    pub lipschitz_x: f64,
    pub param_norm: f64,
}

/// Mean squared residual of Eq.-style flow-matching regression over the set.
pub fn empirical_loss(v: &dyn VelocityField, s: &TrainingSet) -> Result<f64> {
    if s.is_empty() {
        return Err(LfError::Contract("empty training set".to_string()));
    }
    let mut total = 0.0;
    for i in 0..s.len() {
        let pred = v.velocity(&s.xt[i], s.t[i])?;
        total += s.labels[i]
            .iter()
            .zip(&pred)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / s.len() as f64)
}

/// Monte-Carlo estimate of ℒ(v) − ℒ(v*) = (1/T)∫‖v−v*‖²_{L²(π_t)} dt.
/// Same estimator as [`metrics::l2_velocity_error`], exposed here as the
/// training-side entry point.
pub fn population_loss_gap(
    v: &dyn VelocityField,
    oracle: &OracleField,
    mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    metrics::l2_velocity_error(v, oracle, mc, seed)
}

/// Direct Monte-Carlo of the loss difference ℒ(v) − ℒ(v*) from regression
/// residuals (paired on common draws inside this estimator). Cross-checks the
/// identity behind [`population_loss_gap`].
pub fn loss_gap_direct(
    v: &dyn VelocityField,
    oracle: &OracleField,
    mc: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if mc == 0 {
        return Err(LfError::Contract("mc = 0".to_string()));
    }
    let mut rng = substream(seed, "mc-gap-direct");
    let d = oracle.dim();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc {
        let t: f64 = rng.gen_range(0.0..oracle.horizon);
        let x0 = standard_normal_vec(&mut rng, d);
        let x1 = oracle.target.sample(&mut rng).to_vec();
        let xt = interpolate(&x0, &x1, t)?;
        let label = regression_label(&x0, &x1, t)?;
        let res = |field: &[f64]| -> f64 {
            label
                .iter()
                .zip(field)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum()
        };
        let h = res(&v.velocity(&xt, t)?) - res(&oracle.true_velocity(&xt, t)?);
        sum += h;
        sum_sq += h * h;
    }
    let mean = sum / mc as f64;
    let var = (sum_sq / mc as f64 - mean * mean).max(0.0);
    Ok((mean, (var / mc as f64).sqrt()))
}

/// Adam optimizer state over a flat list of parameter buffers.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, sizes: &[usize]) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// In-place update of parameter buffers given gradients.
    pub fn step(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Squared-residual loss of one batch on a tracked network. Shared by the
/// trainer and the finite-difference gradient tests.
pub fn batch_loss_tensor(
    wrapper: &RescaledVelocityNet,
    tracked_inner: &TransformerNet,
    s: &TrainingSet,
    batch: &[usize],
) -> Result<Tensor> {
    let mut total = Tensor::scalar(0.0)?;
    for &i in batch {
        let pred = wrapper.velocity_with(tracked_inner, &s.xt[i], s.t[i])?;
        let label = Tensor::col(s.labels[i].clone())?;
        total = total.add(&label.sub(&pred)?.sum_squares())?;
    }
    Ok(total.scale(1.0 / batch.len() as f64))
}

fn clip_matrices(net: &TransformerNet, threshold: f64) -> TransformerNet {
    net.map_params(|p| {
        if p.cols() <= 1 {
            return p.clone(); // bias vectors
        }
        // inflate the power-iteration estimate a hair so the rescaled matrix
        // lands at or below the threshold despite the estimate being a lower
        // bound on the true spectral norm
        let norm = crate::transformer::operator_norm(p, 50) * (1.0 + 1e-9);
        if norm > threshold {
            p.scale(threshold / norm)
        } else {
            p.clone()
        }
    })
}

/// Minimize the empirical risk over the rescaled transformer class with Adam.
/// When an oracle is given, the log carries per-epoch population gaps.
pub fn train(
    spec: TransformerSpec,
    s: &TrainingSet,
    cfg: &TrainConfig,
    eval_oracle: Option<&OracleField>,
) -> Result<(RescaledVelocityNet, Vec<TrainLogRow>)> {
    cfg.validate()?;
    let d = s.dim();
    if spec.d < d + 1 {
        return Err(LfError::Config(format!(
            "spec input dim {} cannot hold latent d+1 = {}",
            spec.d,
            d + 1
        )));
    }
    let mut init_rng = substream(cfg.seed, "flow-init");
    let inner = TransformerNet::init(spec, &mut init_rng)?;
    let mut wrapper = RescaledVelocityNet::new(inner, d, cfg.box_radius, cfg.horizon)?;

    let sizes: Vec<usize> = wrapper
        .inner
        .params()
        .iter()
        .map(|p| p.data().len())
        .collect();
    let mut adam = Adam::new(cfg.learning_rate, &sizes);
    let mut shuffle_rng = substream(cfg.seed, "batch-shuffle");
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..s.len()).collect();

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        for batch in indices.chunks(cfg.batch_size) {
            let tape = Tape::new();
            let tracked = wrapper.inner.tracked(&tape);
            let loss = batch_loss_tensor(&wrapper, &tracked, s, batch)?;
            if !loss.item().is_finite() {
                return Err(LfError::Divergence(format!(
                    "training loss became {} at epoch {epoch}",
                    loss.item()
                )));
            }
            let grads = tape.backward(&loss)?;
            let mut values: Vec<Vec<f64>> = tracked
                .params()
                .iter()
                .map(|p| p.data().to_vec())
                .collect();
            let grad_values: Vec<Vec<f64>> =
                tracked.params().iter().map(|p| grads.get(p)).collect();
            adam.step(&mut values, &grad_values);
            let mut it = values.into_iter();
            wrapper.inner = wrapper
                .inner
                .map_params(|p| Tensor::matrix(p.rows(), p.cols(), it.next().unwrap()).unwrap());
            if let Some(th) = cfg.clip_threshold {
                wrapper.inner = clip_matrices(&wrapper.inner, th);
            }
        }
        log.push(log_row(epoch as u64 + 1, &wrapper, s, cfg, eval_oracle)?);
    }
    if cfg.epochs == 0 {
        log.push(log_row(0, &wrapper, s, cfg, eval_oracle)?);
    }
    Ok((wrapper, log))
}

fn log_row(
    epoch: u64,
    wrapper: &RescaledVelocityNet,
    s: &TrainingSet,
    cfg: &TrainConfig,
    eval_oracle: Option<&OracleField>,
) -> Result<TrainLogRow> {
    let loss = empirical_loss(wrapper, s)?;
    if !loss.is_finite() {
        return Err(LfError::Divergence(format!(
            "empirical loss became {loss} at epoch {epoch}"
        )));
    }
    let gap = match eval_oracle {
        Some(oracle) => Some(population_loss_gap(wrapper, oracle, cfg.eval_mc, cfg.seed)?.0),
        None => None,
    };
    let r = cfg.box_radius;
    let domain = metrics::BoxDomain::cube(-r, r, s.dim());
    let probe = |x: &[f64], t: f64| wrapper.velocity(x, t);
    let (gx, _) = metrics::measure_lipschitz(&probe, &domain, cfg.horizon, 64, cfg.seed)?;
    let param_norm = wrapper
        .inner
        .params()
        .iter()
        .flat_map(|p| p.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    Ok(TrainLogRow {
        epoch,
        empirical_loss: loss,
        population_gap: gap,
        lipschitz_x: gx,
        param_norm,
    })
}
