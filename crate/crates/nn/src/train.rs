use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::loss::{bce_loss, Reduction};
use crate::model::RodnetModel;
use crate::real::Real;
use crate::tensor::Tensor;

/// Indexed `(snippet, target)` pairs, materialized on demand.
pub trait Dataset<T> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, index: usize) -> Result<(Tensor<T>, Tensor<T>)>;
}

/// In-memory dataset.
impl<T: Real> Dataset<T> for Vec<(Tensor<T>, Tensor<T>)> {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }

    fn get(&self, index: usize) -> Result<(Tensor<T>, Tensor<T>)> {
        self.as_slice()
            .get(index)
            .cloned()
            .ok_or_else(|| NnError::Value(format!("sample {index} out of range")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub reduction: Reduction,
    /// Stop after this many steps even if epochs remain.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 1,
            seed: 0,
            reduction: Reduction::Sum,
            max_steps: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: RodnetModel<T>,
    /// Loss of every step, evaluated before that step's update.
    pub losses: Vec<f64>,
}

/// One forward/backward pass; returns the loss and the parameter gradients.
pub fn loss_and_grads<T: Real>(
    model: &RodnetModel<T>,
    snippet: &Tensor<T>,
    target: &Tensor<T>,
    reduction: Reduction,
) -> Result<(T, RodnetModel<T>)> {
    let trace = model.forward_trace(snippet)?;
    let (loss, g_out) = bce_loss(trace.output(), target, reduction)?;
    let mut grads = model.zeros_like();
    model.backward(&trace, &g_out, &mut grads)?;
    Ok((loss, grads))
}

/// `θ ← θ − lr·∇θ` for every parameter.
pub fn sgd_step<T: Real>(model: &mut RodnetModel<T>, grads: &RodnetModel<T>, lr: T) -> Result<()> {
    for (p, (_, g)) in model.params_mut().into_iter().zip(grads.named_params()) {
        p.axpy(-lr, g)?;
    }
    Ok(())
}

/// Plain SGD with batch size one over a seeded per-epoch shuffle.
pub fn sgd_train<T: Real, D: Dataset<T> + ?Sized>(
    dataset: &D,
    mut model: RodnetModel<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let losses = sgd_train_with(dataset, &mut model, config, |_, _| {})?;
    Ok(TrainOutcome { model, losses })
}

/// [`sgd_train`] updating `model` in place; `on_step(step, loss)` runs after
/// every update.
pub fn sgd_train_with<T: Real, D: Dataset<T> + ?Sized>(
    dataset: &D,
    model: &mut RodnetModel<T>,
    config: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if !config.lr.is_finite() || config.lr < 0.0 {
        return Err(NnError::Config(format!("learning rate must be finite and >= 0, got {}", config.lr)));
    }
    let lr = T::from_f64_lossy(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut losses = Vec::new();
    let limit = config.max_steps.unwrap_or(usize::MAX);
    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &sample in &order {
            if losses.len() >= limit {
                break 'epochs;
            }
            let step = losses.len();
            let (x, y) = dataset.get(sample)?;
            let (loss, grads) = loss_and_grads(model, &x, &y, config.reduction)?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(NnError::NonFinite { step, sample, loss });
            }
            if log::log_enabled!(log::Level::Trace) {
                for ((name, g), (_, p)) in grads.named_params().into_iter().zip(model.named_params()) {
                    log::trace!("step {step} {name} grad {:.3e} param {:.3e}", norm(g), norm(p));
                }
            }
            sgd_step(model, &grads, lr)?;
            losses.push(loss);
            on_step(step, loss);
            log::debug!("epoch {epoch} step {step} sample {sample} loss {loss:.6}");
        }
    }
    Ok(losses)
}

fn norm<T: Real>(t: &Tensor<T>) -> f64 {
    t.data().iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>().sqrt()
}
