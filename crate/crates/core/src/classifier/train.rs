//! Mini-batch Adam training of the flicker CNN with softmax cross-entropy.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cnn::{Architecture, CnnParams, Workspace};
use super::Verdict;
use crate::error::{ensure, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// End early once an epoch classifies the whole validation split
    /// correctly; no later epoch can beat it.
    pub stop_at_perfect_validation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay: 0.0,
            batch_size: 32,
            seed: 0,
            stop_at_perfect_validation: true,
        }
    }
}

/// Random-access labelled inputs, already shaped for the network.
pub trait TrainingSet<T> {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> Verdict;
    /// Writes input `index` into `out` (resized as needed).
    fn load(&self, index: usize, out: &mut Vec<T>) -> Result<()>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for i in 0..self.len() {
            counts[self.label(i).index()] += 1;
        }
        counts
    }
}

/// Inputs held in memory.
#[derive(Debug, Clone, Default)]
pub struct InMemorySet<T> {
    pub inputs: Vec<Vec<T>>,
    pub labels: Vec<Verdict>,
}

impl<T: Real> TrainingSet<T> for InMemorySet<T> {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn label(&self, index: usize) -> Verdict {
        self.labels[index]
    }

    fn load(&self, index: usize, out: &mut Vec<T>) -> Result<()> {
        out.clear();
        out.extend_from_slice(&self.inputs[index]);
        Ok(())
    }
}

pub struct Adam<T> {
    cfg: TrainConfig,
    m: CnnParams<T>,
    v: CnnParams<T>,
    steps: i32,
}

impl<T: Real> Adam<T> {
    pub fn new(arch: Architecture, cfg: &TrainConfig) -> Result<Self> {
        ensure!(cfg.learning_rate > 0.0, "learning rate must be positive");
        ensure!((0.0..1.0).contains(&cfg.betas.0) && (0.0..1.0).contains(&cfg.betas.1), "betas must lie in [0, 1)");
        Ok(Self { cfg: cfg.clone(), m: CnnParams::zeros(arch)?, v: CnnParams::zeros(arch)?, steps: 0 })
    }

    /// One update with bias-corrected moments; `grads` is the mean gradient
    /// of the batch.
    pub fn step(&mut self, params: &mut CnnParams<T>, grads: &CnnParams<T>) {
        self.steps += 1;
        let (b1, b2) = self.cfg.betas;
        let c1 = 1.0 - b1.powi(self.steps);
        let c2 = 1.0 - b2.powi(self.steps);
        let [b1, b2, one_b1, one_b2, c1, c2, lr, eps, wd] =
            [b1, b2, 1.0 - b1, 1.0 - b2, c1, c2, self.cfg.learning_rate, self.cfg.eps, self.cfg.weight_decay]
                .map(T::from_f64_lossy);
        let tensors = params.tensors_mut().into_iter().zip(grads.tensors()).zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                let g = g + wd * *p;
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best validation accuracy (the
    /// earliest on ties).
    pub params: CnnParams<T>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

pub fn predict<T: Real>(logits: [T; 2]) -> Verdict {
    if logits[1] > logits[0] {
        Verdict::Flicker
    } else {
        Verdict::NoFlicker
    }
}

/// Fraction of `set` classified correctly.
pub fn evaluate<T: Real>(params: &CnnParams<T>, set: &dyn TrainingSet<T>) -> Result<f64> {
    ensure!(!set.is_empty(), "cannot evaluate on an empty set");
    let mut ws = Workspace::new(params.architecture());
    let mut buf = Vec::new();
    let mut correct = 0;
    for i in 0..set.len() {
        set.load(i, &mut buf)?;
        if predict(params.forward_with(&buf, &mut ws)?) == set.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.len() as f64)
}

/// Trains from a seeded Kaiming initialisation. The training split must be
/// balanced between the two classes.
pub fn train<T: Real>(
    arch: Architecture,
    train_set: &dyn TrainingSet<T>,
    val_set: &dyn TrainingSet<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with(arch, train_set, val_set, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<T: Real>(
    arch: Architecture,
    train_set: &dyn TrainingSet<T>,
    val_set: &dyn TrainingSet<T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>> {
    ensure!(!train_set.is_empty(), "empty training split");
    ensure!(!val_set.is_empty(), "empty validation split");
    let counts = train_set.class_counts();
    ensure!(counts[0] == counts[1], "unbalanced training split: {} clean vs {} flicker", counts[0], counts[1]);
    ensure!(cfg.batch_size > 0, "batch size must be positive");
    ensure!(cfg.epochs > 0, "at least one epoch is required");

    let mut params = CnnParams::<T>::kaiming(arch, cfg.seed)?;
    let mut grads = CnnParams::<T>::zeros(arch)?;
    let mut adam = Adam::new(arch, cfg)?;
    let mut ws = Workspace::new(&arch);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut buf = Vec::new();
    let mut best: Option<(f64, usize, CnnParams<T>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            for &i in batch {
                train_set.load(i, &mut buf)?;
                let label = train_set.label(i);
                let (loss, logits) = params.loss_and_grad(&buf, label.index(), &mut ws, &mut grads)?;
                loss_sum += loss.to_f64_lossy();
                correct += usize::from(predict(logits) == label);
            }
            let scale = T::one() / T::from_usize(batch.len()).expect("batch size fits");
            for g in grads.tensors_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut params, &grads);
        }
        ensure!(params.is_finite(), "training diverged in epoch {epoch}");
        let val_accuracy = evaluate(&params, val_set)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            val_accuracy,
        };
        on_epoch(&stats);
        history.push(stats);
        if best.as_ref().map_or(true, |b| val_accuracy > b.0) {
            best = Some((val_accuracy, epoch, params.clone()));
        }
        if cfg.stop_at_perfect_validation && val_accuracy >= 1.0 {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { params, best_epoch, history })
}
