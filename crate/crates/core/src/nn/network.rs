//! Architectures, parameter storage and whole-network passes.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{backward_layer, forward_layer, LayerCache, LayerParams, LayerSpec};
use super::tensor::{Act, Tensor};
use crate::error::{Error, Result};

/// How the two branch outputs of a Siamese network are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// Inner product of the branch feature vectors, one scalar per pair.
    Dot,
    /// Elementwise difference `first - second`.
    Subtract,
}

/// Layer list plus combiner. With a combiner, the first `branch_len`
/// layers form the shared branch and the remaining layers the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
    pub combiner: Option<Combiner>,
    pub branch_len: usize,
    /// Expected input length, when the layers alone do not fix it.
    pub input_len: Option<usize>,
}

impl Architecture {
    pub fn sequential(layers: Vec<LayerSpec>) -> Self {
        let branch_len = layers.len();
        Self {
            layers,
            combiner: None,
            branch_len,
            input_len: None,
        }
    }

    pub fn with_input_len(mut self, len: usize) -> Self {
        self.input_len = Some(len);
        self
    }

    pub fn siamese(branch: Vec<LayerSpec>, combiner: Combiner, head: Vec<LayerSpec>) -> Self {
        let branch_len = branch.len();
        let mut layers = branch;
        layers.extend(head);
        Self {
            layers,
            combiner: Some(combiner),
            branch_len,
            input_len: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.branch_len > self.layers.len() {
            return Err(Error::Format("branch_len exceeds layer count".into()));
        }
        if self.combiner.is_none() && self.branch_len != self.layers.len() {
            return Err(Error::Format("branch_len must cover all layers without a combiner".into()));
        }
        self.layers.iter().try_for_each(LayerSpec::validate)
    }

    pub fn input_count(&self) -> usize {
        if self.combiner.is_some() {
            2
        } else {
            1
        }
    }

    pub fn branch(&self) -> &[LayerSpec] {
        &self.layers[..self.branch_len]
    }

    pub fn head(&self) -> &[LayerSpec] {
        &self.layers[self.branch_len..]
    }
}

pub fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

/// Parameter gradients keyed like [`ModelWeights::tensors`].
pub type Gradients = BTreeMap<String, Vec<f64>>;

/// Architecture plus named parameter tensors. Both Siamese branches read
/// the same `layer{i}.*` tensors; there is no per-branch copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub architecture: Architecture,
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    descriptor: Vec<LayerSpec>,
    combiner: Option<Combiner>,
    branch_len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_len: Option<usize>,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    /// Glorot-uniform weights, zero biases.
    pub fn init(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (i, spec) in architecture.layers.iter().enumerate() {
            let (w, b) = spec.parameter_shapes();
            if let Some(shape) = w {
                let (fan_in, fan_out) = spec.fans().expect("parametric layer has fans");
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let n: usize = shape.iter().product();
                let values = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
                tensors.insert(weight_name(i), Tensor { shape, values });
            }
            if let Some(shape) = b {
                tensors.insert(bias_name(i), Tensor::zeros(shape));
            }
        }
        Ok(Self {
            architecture,
            tensors,
        })
    }

    /// Checks that every tensor required by the descriptor exists with the right shape.
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let mut expected = BTreeMap::new();
        for (i, spec) in self.architecture.layers.iter().enumerate() {
            let (w, b) = spec.parameter_shapes();
            if let Some(s) = w {
                expected.insert(weight_name(i), s);
            }
            if let Some(s) = b {
                expected.insert(bias_name(i), s);
            }
        }
        for (name, shape) in &expected {
            let t = self
                .tensors
                .get(name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            if &t.shape != shape {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, descriptor needs {shape:?}",
                    t.shape
                )));
            }
            let n: usize = shape.iter().product();
            if t.values.len() != n {
                return Err(Error::Format(format!(
                    "tensor {name} has {} values, expected {n}",
                    t.values.len()
                )));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("tensor {name} has non-finite values")));
            }
        }
        if let Some(extra) = self.tensors.keys().find(|k| !expected.contains_key(*k)) {
            return Err(Error::Format(format!("unexpected tensor {extra}")));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Parameters flattened in tensor-name order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.tensors.values().flat_map(|t| t.values.iter().copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors.values_mut() {
            let n = t.values.len();
            t.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// `Σ coefficient · |w|` over L1-regularized layers.
    pub fn l1_penalty(&self) -> f64 {
        self.architecture
            .layers
            .iter()
            .enumerate()
            .filter(|(_, s)| s.l1_coefficient() > 0.0)
            .map(|(i, s)| {
                let w = &self.tensors[&weight_name(i)];
                s.l1_coefficient() * w.values.iter().map(|v| v.abs()).sum::<f64>()
            })
            .sum()
    }

    fn layer_params(&self, i: usize) -> LayerParams<'_> {
        LayerParams {
            weight: self.tensors.get(&weight_name(i)),
            bias: self.tensors.get(&bias_name(i)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            descriptor: self.architecture.layers.clone(),
            combiner: self.architecture.combiner,
            branch_len: self.architecture.branch_len,
            input_len: self.architecture.input_len,
            tensors: self.tensors.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let m = Self {
            architecture: Architecture {
                layers: file.descriptor,
                combiner: file.combiner,
                branch_len: file.branch_len,
                input_len: file.input_len,
            },
            tensors: file.tensors,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Everything `backward` needs from a training-mode forward pass.
pub struct ForwardCache {
    caches: Vec<LayerCache>,
    /// Branch outputs for the combiner (first, second).
    combined: Option<(Act, Act)>,
    pair_batch: usize,
}

impl ForwardCache {
    /// On/off pattern of every relu unit. Two parameter settings with equal
    /// patterns lie in the same differentiable piece of the network.
    pub fn activation_pattern(&self, weights: &ModelWeights) -> Vec<bool> {
        let mut out = Vec::new();
        for (spec, cache) in weights.architecture.layers.iter().zip(&self.caches) {
            if let (
                LayerSpec::Activation {
                    function: super::layers::Activation::Relu,
                },
                LayerCache::Activation { output },
            ) = (spec, cache)
            {
                out.extend(output.data.iter().map(|v| *v > 0.0));
            }
        }
        out
    }
}

fn run_layers(
    weights: &ModelWeights,
    range: std::ops::Range<usize>,
    mut x: Act,
    training: bool,
    seed: u64,
    keep: bool,
    caches: &mut Vec<LayerCache>,
) -> Result<Act> {
    for i in range {
        let spec = &weights.architecture.layers[i];
        let (y, cache) = forward_layer(spec, &weights.layer_params(i), x, training, (seed, i as u64), keep)?;
        if keep {
            caches.push(cache);
        }
        x = y;
    }
    Ok(x)
}

fn combine(combiner: Combiner, a: &Act, b: &Act) -> Act {
    let d = a.per_sample();
    match combiner {
        Combiner::Dot => {
            let data = a
                .data
                .chunks_exact(d)
                .zip(b.data.chunks_exact(d))
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
                .collect();
            Act {
                batch: a.batch,
                time: 1,
                channels: 1,
                data,
            }
        }
        Combiner::Subtract => Act {
            batch: a.batch,
            time: 1,
            channels: d,
            data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
        },
    }
}

/// Branch features for a batch of single inputs (inference only).
pub fn branch_features(weights: &ModelWeights, input: &Tensor) -> Result<Tensor> {
    let x = Act::from_tensor(input)?;
    let mut none = Vec::new();
    let y = run_layers(weights, 0..weights.architecture.branch_len, x, false, 0, false, &mut none)?;
    Ok(y.into_tensor())
}

/// Combines precomputed branch features and runs the head (inference only).
pub fn head_from_features(weights: &ModelWeights, first: &Tensor, second: &Tensor) -> Result<Tensor> {
    let combiner = weights
        .architecture
        .combiner
        .ok_or_else(|| Error::Usage("model has no combiner".into()))?;
    let a = Act::from_tensor(first)?;
    let b = Act::from_tensor(second)?;
    if a.data.len() != b.data.len() || a.batch != b.batch {
        return Err(Error::Usage("feature batches differ in shape".into()));
    }
    let c = combine(combiner, &a, &b);
    let mut none = Vec::new();
    let n = weights.architecture.layers.len();
    let y = run_layers(weights, weights.architecture.branch_len..n, c, false, 0, false, &mut none)?;
    Ok(y.into_tensor())
}

/// Runs the network. Siamese models take two inputs of equal shape, which
/// pass through the shared branch as one stacked batch.
pub fn forward(
    weights: &ModelWeights,
    inputs: &[&Tensor],
    training: bool,
    seed: u64,
) -> Result<(Tensor, ForwardCache)> {
    let arch = &weights.architecture;
    if inputs.len() != arch.input_count() {
        return Err(Error::Usage(format!(
            "model takes {} input(s), got {}",
            arch.input_count(),
            inputs.len()
        )));
    }
    let mut caches = Vec::with_capacity(arch.layers.len());
    let n = arch.layers.len();
    match arch.combiner {
        None => {
            let x = Act::from_tensor(inputs[0])?;
            let batch = x.batch;
            let y = run_layers(weights, 0..n, x, training, seed, true, &mut caches)?;
            Ok((
                y.into_tensor(),
                ForwardCache {
                    caches,
                    combined: None,
                    pair_batch: batch,
                },
            ))
        }
        Some(combiner) => {
            let a = Act::from_tensor(inputs[0])?;
            let b = Act::from_tensor(inputs[1])?;
            if a.batch != b.batch {
                return Err(Error::Usage("pair inputs have different batch sizes".into()));
            }
            let batch = a.batch;
            let stacked = Act::stack(&a, &b)?;
            let feats = run_layers(weights, 0..arch.branch_len, stacked, training, seed, true, &mut caches)?;
            let (fa, fb) = feats.split(batch);
            let c = combine(combiner, &fa, &fb);
            let y = run_layers(weights, arch.branch_len..n, c, training, seed, true, &mut caches)?;
            Ok((
                y.into_tensor(),
                ForwardCache {
                    caches,
                    combined: Some((fa, fb)),
                    pair_batch: batch,
                },
            ))
        }
    }
}

/// Exact reverse-mode gradients of a loss whose gradient w.r.t. the network
/// output is `grad_output`. L1 subgradients of regularized layers are added.
pub fn backward(weights: &ModelWeights, cache: ForwardCache, grad_output: &Tensor) -> Result<Gradients> {
    let arch = &weights.architecture;
    let n = arch.layers.len();
    let ForwardCache {
        caches,
        combined,
        pair_batch,
    } = cache;
    let mut g = Act::from_tensor(grad_output)?;
    if g.batch != pair_batch {
        return Err(Error::Usage("output gradient batch does not match forward pass".into()));
    }
    let mut grads = Gradients::new();
    let accumulate = |grads: &mut Gradients, name: String, v: Vec<f64>| {
        grads
            .entry(name)
            .and_modify(|acc: &mut Vec<f64>| acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b))
            .or_insert(v);
    };

    let head_start = if arch.combiner.is_some() { arch.branch_len } else { 0 };
    for i in (head_start..n).rev() {
        let need_input = i > 0 || arch.combiner.is_some();
        let (dx, lg) = backward_layer(&arch.layers[i], &weights.layer_params(i), &caches[i], g, need_input);
        if let Some(w) = lg.weight {
            accumulate(&mut grads, weight_name(i), w);
        }
        if let Some(b) = lg.bias {
            accumulate(&mut grads, bias_name(i), b);
        }
        match dx {
            Some(dx) => g = dx,
            None => {
                g = Act::zeros(0, 0, 0);
            }
        }
    }

    if let (Some(combiner), Some((fa, fb))) = (arch.combiner, combined) {
        let d = fa.per_sample();
        let (mut ga, mut gb) = (fa.clone(), fb.clone());
        match combiner {
            Combiner::Dot => {
                for s in 0..pair_batch {
                    let gs = g.data[s];
                    for j in 0..d {
                        ga.data[s * d + j] = gs * fb.data[s * d + j];
                        gb.data[s * d + j] = gs * fa.data[s * d + j];
                    }
                }
            }
            Combiner::Subtract => {
                ga.data.copy_from_slice(&g.data);
                for (o, v) in gb.data.iter_mut().zip(&g.data) {
                    *o = -v;
                }
            }
        }
        let mut gstack = Act::stack(&ga, &gb)?;
        for i in (0..arch.branch_len).rev() {
            let (dx, lg) = backward_layer(&arch.layers[i], &weights.layer_params(i), &caches[i], gstack, i > 0);
            if let Some(w) = lg.weight {
                accumulate(&mut grads, weight_name(i), w);
            }
            if let Some(b) = lg.bias {
                accumulate(&mut grads, bias_name(i), b);
            }
            gstack = dx.unwrap_or_else(|| Act::zeros(0, 0, 0));
        }
    }

    for (i, spec) in arch.layers.iter().enumerate() {
        let c = spec.l1_coefficient();
        if c > 0.0 {
            let w = &weights.tensors[&weight_name(i)];
            if let Some(gw) = grads.get_mut(&weight_name(i)) {
                for (gv, wv) in gw.iter_mut().zip(&w.values) {
                    *gv += c * sign(*wv);
                }
            }
        }
    }
    Ok(grads)
}

/// `sign(w)` with `sign(0) = 0`.
#[inline]
pub fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Flattens gradients in tensor-name order, zero-filling missing entries.
pub fn flatten_gradients(weights: &ModelWeights, grads: &Gradients) -> Vec<f64> {
    let mut out = Vec::with_capacity(weights.parameter_count());
    for (name, t) in &weights.tensors {
        match grads.get(name) {
            Some(g) => out.extend_from_slice(g),
            None => out.extend(std::iter::repeat(0.0).take(t.len())),
        }
    }
    out
}

/// Convenience inference pass without keeping caches.
pub fn predict(weights: &ModelWeights, inputs: &[&Tensor]) -> Result<Tensor> {
    let arch = &weights.architecture;
    match arch.combiner {
        None => {
            if inputs.len() != 1 {
                return Err(Error::Usage("model takes one input".into()));
            }
            let x = Act::from_tensor(inputs[0])?;
            let mut none = Vec::new();
            Ok(run_layers(weights, 0..arch.layers.len(), x, false, 0, false, &mut none)?.into_tensor())
        }
        Some(_) => {
            if inputs.len() != 2 {
                return Err(Error::Usage("siamese model takes two inputs".into()));
            }
            let fa = branch_features(weights, inputs[0])?;
            let fb = branch_features(weights, inputs[1])?;
            head_from_features(weights, &fa, &fb)
        }
    }
}
