use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss, LossKind};
use super::network::{backward, forward, predict, ModelWeights};
use super::optim::AdamState;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Flat single-input samples: `inputs` holds `len` rows of `input_shape`,
/// `targets` holds `len` rows of `target_len` values.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
    pub input_shape: &'a [usize],
    pub target_len: usize,
}

impl Samples<'_> {
    pub fn len(&self) -> usize {
        if self.target_len == 0 {
            0
        } else {
            self.targets.len() / self.target_len
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    fn check(&self) -> Result<()> {
        if self.target_len == 0 || self.targets.len() % self.target_len != 0 {
            return Err(Error::Usage("target buffer is not a whole number of rows".into()));
        }
        if self.inputs.len() != self.len() * self.input_len() {
            return Err(Error::Usage("inputs and targets disagree on the sample count".into()));
        }
        Ok(())
    }

    fn gather(&self, idx: &[usize]) -> Result<(Tensor, Vec<f64>)> {
        let il = self.input_len();
        let mut x = Vec::with_capacity(idx.len() * il);
        let mut y = Vec::with_capacity(idx.len() * self.target_len);
        for &i in idx {
            x.extend_from_slice(&self.inputs[i * il..(i + 1) * il]);
            y.extend_from_slice(&self.targets[i * self.target_len..(i + 1) * self.target_len]);
        }
        let mut shape = vec![idx.len()];
        shape.extend_from_slice(self.input_shape);
        Ok((Tensor::new(shape, x)?, y))
    }
}

/// One shuffled minibatch pass. Returns the mean data loss (without L1).
pub fn run_epoch(
    weights: &mut ModelWeights,
    adam: &mut AdamState,
    samples: Samples<'_>,
    kind: LossKind,
    batch_size: usize,
    seed: u64,
) -> Result<f64> {
    samples.check()?;
    let n = samples.len();
    if n == 0 || batch_size == 0 {
        return Err(Error::Usage("empty training set or zero batch size".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut total = 0.0;
    for (k, chunk) in order.chunks(batch_size).enumerate() {
        let (x, y) = samples.gather(chunk)?;
        let (out, cache) = forward(weights, &[&x], true, seed.wrapping_add(k as u64))?;
        let (l, grad) = loss(kind, &out.values, &y)?;
        if !l.is_finite() {
            return Err(Error::Numerical(format!("loss became {l}")));
        }
        total += l * chunk.len() as f64;
        let grads = backward(weights, cache, &Tensor::new(out.shape.clone(), grad)?)?;
        adam.step_model(weights, &grads)?;
    }
    Ok(total / n as f64)
}

/// Mean data loss in inference mode.
pub fn mean_loss(weights: &ModelWeights, samples: Samples<'_>, kind: LossKind) -> Result<f64> {
    samples.check()?;
    let n = samples.len();
    if n == 0 {
        return Err(Error::Usage("mean loss of an empty set".into()));
    }
    let idx: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(1024) {
        let (x, y) = samples.gather(chunk)?;
        let out = predict(weights, &[&x])?;
        total += loss(kind, &out.values, &y)?.0 * chunk.len() as f64;
    }
    Ok(total / n as f64)
}
