//! Deep-and-wide next-change predictors over all genes at once. Positive
//! weights of a trained net are read as causal edges between units.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, DirectedEdge, GraphNode};
use crate::nn::train::{mean_loss, run_epoch, Samples};
use crate::nn::{predict, weight_name, Activation, AdamState, Architecture, LayerSpec, LossKind, ModelWeights, Tensor};
use crate::synth::derive_seed;

pub const L1_COEFFICIENT: f64 = 1e-8;
pub const DROPOUT_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeepWideSpec {
    pub depth: usize,
    pub width: usize,
    pub genes: usize,
}

impl DeepWideSpec {
    pub fn validate(&self) -> Result<()> {
        if !(2..=10).contains(&self.depth) {
            return Err(Error::Config(format!("depth {} outside [2, 10]", self.depth)));
        }
        if !self.width.is_power_of_two() || !(4..=4096).contains(&self.width) {
            return Err(Error::Config(format!("width {} is not a power of two in [4, 4096]", self.width)));
        }
        if self.genes == 0 {
            return Err(Error::Config("deep-wide nets need at least one gene".into()));
        }
        Ok(())
    }

    /// Unit counts at each level, from input genes to output genes.
    pub fn levels(&self) -> Vec<usize> {
        let mut v = vec![self.genes];
        v.extend(std::iter::repeat(self.width).take(self.depth - 1));
        v.push(self.genes);
        v
    }

    pub fn architecture(&self) -> Result<Architecture> {
        self.validate()?;
        let levels = self.levels();
        let mut layers = Vec::new();
        for w in levels.windows(2) {
            layers.push(LayerSpec::Dense {
                in_dim: w[0],
                out_dim: w[1],
                has_bias: false,
                l1_coefficient: L1_COEFFICIENT,
            });
            layers.push(LayerSpec::Dropout { rate: DROPOUT_RATE });
            layers.push(LayerSpec::Activation {
                function: Activation::Elu,
            });
        }
        Ok(Architecture::sequential(layers))
    }

    pub fn parameter_count(&self) -> usize {
        self.levels().windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// Consecutive-change samples `(delta_i, delta_{i+1})`, split in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeDataset {
    pub genes: Vec<String>,
    pub train: Vec<(Vec<f64>, Vec<f64>)>,
    pub test: Vec<(Vec<f64>, Vec<f64>)>,
}

/// `series` holds one row per gene, all on the same grid.
pub fn build_change_dataset(genes: &[String], series: &[Vec<f64>], train_fraction: f64) -> Result<ChangeDataset> {
    if genes.len() != series.len() || series.is_empty() {
        return Err(Error::Usage("need one series per gene".into()));
    }
    let t = series[0].len();
    if t < 3 || series.iter().any(|s| s.len() != t) {
        return Err(Error::Usage("series need equal lengths of at least 3".into()));
    }
    let delta = |i: usize| -> Vec<f64> { series.iter().map(|s| s[i] - s[i - 1]).collect() };
    let samples: Vec<(Vec<f64>, Vec<f64>)> = (1..t - 1).map(|i| (delta(i), delta(i + 1))).collect();
    let n_train = (samples.len() as f64 * train_fraction).round() as usize;
    let mut train = samples;
    let test = train.split_off(n_train.min(train.len()));
    Ok(ChangeDataset {
        genes: genes.to_vec(),
        train,
        test,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseSplit {
    pub model_mse: f64,
    pub persistence_mse: f64,
    pub relative: Option<f64>,
}

impl MseSplit {
    fn new(model_mse: f64, persistence_mse: f64) -> Self {
        Self {
            model_mse,
            persistence_mse,
            relative: (persistence_mse > 0.0).then(|| model_mse / persistence_mse),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeMseReport {
    pub depth: usize,
    pub width: usize,
    pub parameter_count: usize,
    pub train: MseSplit,
    pub test: Option<MseSplit>,
}

impl RelativeMseReport {
    pub fn relative_test(&self) -> Option<f64> {
        self.test.and_then(|t| t.relative)
    }
}

/// Mean squared error of predicting `delta_{i+1} = delta_i`.
pub fn persistence_mse(samples: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, y) in samples {
        for (a, b) in x.iter().zip(y) {
            total += (b - a) * (b - a);
        }
        count += x.len();
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

fn flatten(samples: &[(Vec<f64>, Vec<f64>)]) -> (Vec<f64>, Vec<f64>) {
    let x = samples.iter().flat_map(|(x, _)| x.iter().copied()).collect();
    let y = samples.iter().flat_map(|(_, y)| y.iter().copied()).collect();
    (x, y)
}

fn model_mse(weights: &ModelWeights, samples: &[(Vec<f64>, Vec<f64>)], genes: usize) -> Result<f64> {
    let (x, y) = flatten(samples);
    let shape = [genes];
    mean_loss(
        weights,
        Samples {
            inputs: &x,
            targets: &y,
            input_shape: &shape,
            target_len: genes,
        },
        LossKind::Mse,
    )
}

pub fn evaluate(weights: &ModelWeights, spec: &DeepWideSpec, data: &ChangeDataset) -> Result<RelativeMseReport> {
    let split = |s: &[(Vec<f64>, Vec<f64>)]| -> Result<Option<MseSplit>> {
        if s.is_empty() {
            return Ok(None);
        }
        Ok(Some(MseSplit::new(model_mse(weights, s, spec.genes)?, persistence_mse(s))))
    };
    Ok(RelativeMseReport {
        depth: spec.depth,
        width: spec.width,
        parameter_count: spec.parameter_count(),
        train: split(&data.train)?.ok_or_else(|| Error::Usage("empty training split".into()))?,
        test: split(&data.test)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepWideTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DeepWideTraining {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 10,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

struct Run {
    weights: ModelWeights,
    adam: AdamState,
    epoch: usize,
    seed: u64,
}

impl Run {
    fn new(spec: &DeepWideSpec, cfg: &DeepWideTraining) -> Result<Self> {
        let weights = ModelWeights::init(spec.architecture()?, derive_seed(cfg.seed, 1))?;
        let adam = AdamState::for_model(&weights).with_learning_rate(cfg.learning_rate);
        Ok(Self {
            weights,
            adam,
            epoch: 0,
            seed: cfg.seed,
        })
    }

    /// Continues training for `epochs`; epoch numbering carries over so a
    /// split run replays an unsplit one on the same data.
    fn train(&mut self, samples: &[(Vec<f64>, Vec<f64>)], genes: usize, epochs: usize, batch: usize) -> Result<f64> {
        let (x, y) = flatten(samples);
        let shape = [genes];
        let s = Samples {
            inputs: &x,
            targets: &y,
            input_shape: &shape,
            target_len: genes,
        };
        let mut last = f64::NAN;
        for _ in 0..epochs {
            last = run_epoch(
                &mut self.weights,
                &mut self.adam,
                s,
                LossKind::Mse,
                batch,
                derive_seed(self.seed, 1000 + self.epoch as u64),
            )
            .map_err(|e| Error::Divergence {
                stage: 0,
                message: e.to_string(),
            })?;
            self.epoch += 1;
        }
        Ok(last)
    }
}

fn check_dims(spec: &DeepWideSpec, data: &ChangeDataset) -> Result<()> {
    if data.genes.len() != spec.genes {
        return Err(Error::Usage(format!(
            "net has {} genes, dataset has {}",
            spec.genes,
            data.genes.len()
        )));
    }
    if data.train.is_empty() {
        return Err(Error::Usage("empty training split".into()));
    }
    Ok(())
}

pub fn train_deepwide(
    spec: &DeepWideSpec,
    data: &ChangeDataset,
    cfg: &DeepWideTraining,
) -> Result<(ModelWeights, RelativeMseReport)> {
    check_dims(spec, data)?;
    let mut run = Run::new(spec, cfg)?;
    run.train(&data.train, spec.genes, cfg.epochs, cfg.batch_size)?;
    let report = evaluate(&run.weights, spec, data)?;
    Ok((run.weights, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub pretrain_loss: f64,
    pub finetune_loss: f64,
    pub report: RelativeMseReport,
}

/// One continuous Adam run: `pretrain_epochs` over the union of all training
/// splits, then `finetune_epochs` on the target.
pub fn pretrain_then_finetune(
    spec: &DeepWideSpec,
    datasets: &[&ChangeDataset],
    target: &ChangeDataset,
    pretrain_epochs: usize,
    finetune_epochs: usize,
    cfg: &DeepWideTraining,
) -> Result<(ModelWeights, PretrainReport)> {
    if datasets.is_empty() {
        return Err(Error::Usage("pretraining needs at least one dataset".into()));
    }
    for d in datasets {
        if d.genes != target.genes {
            return Err(Error::Usage("datasets use different gene sets".into()));
        }
    }
    check_dims(spec, target)?;
    let union: Vec<(Vec<f64>, Vec<f64>)> = datasets.iter().flat_map(|d| d.train.iter().cloned()).collect();
    let mut run = Run::new(spec, cfg)?;
    let pretrain_loss = run.train(&union, spec.genes, pretrain_epochs, cfg.batch_size)?;
    let finetune_loss = run.train(&target.train, spec.genes, finetune_epochs, cfg.batch_size)?;
    let report = evaluate(&run.weights, spec, target)?;
    Ok((
        run.weights,
        PretrainReport {
            pretrain_loss,
            finetune_loss,
            report,
        },
    ))
}

/// Predicted next change for one change vector.
pub fn predict_change(weights: &ModelWeights, delta: &[f64]) -> Result<Vec<f64>> {
    Ok(predict(weights, &[&Tensor::new(vec![1, delta.len()], delta.to_vec())?])?.values)
}

/// Ascending relative test MSE, absent values last, ties by parameter count.
pub fn rank_deepwide_models(reports: &mut [RelativeMseReport]) {
    reports.sort_by(|a, b| {
        let key = |r: &RelativeMseReport| r.relative_test().unwrap_or(f64::INFINITY);
        key(a)
            .total_cmp(&key(b))
            .then(a.relative_test().is_none().cmp(&b.relative_test().is_none()))
            .then(a.parameter_count.cmp(&b.parameter_count))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub max_degree: usize,
    pub max_genes: usize,
    /// Genes eligible for display, best first.
    pub gene_subset: Vec<String>,
}

pub fn sparsity_bound(possible: usize) -> usize {
    (2.0 * possible as f64).sqrt().ceil() as usize
}

/// One kept connection between units at levels `level` and `level + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitEdge {
    pub layer: usize,
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Positive-weight candidates per layer cut to the sparsity bound, then
/// pruned in ascending weight order until no unit exceeds `max_degree`
/// in or out.
pub fn select_edges(weights: &ModelWeights, spec: &DeepWideSpec, max_degree: usize) -> Result<Vec<Vec<UnitEdge>>> {
    let levels = spec.levels();
    let mut out = Vec::with_capacity(spec.depth);
    for layer in 0..spec.depth {
        let (n_in, n_out) = (levels[layer], levels[layer + 1]);
        let w = weights
            .tensors
            .get(&weight_name(3 * layer))
            .ok_or_else(|| Error::Format(format!("missing weights for layer {layer}")))?;
        let mut cand: Vec<UnitEdge> = (0..n_in)
            .flat_map(|s| (0..n_out).map(move |t| (s, t)))
            .filter_map(|(s, t)| {
                let v = w.values[s * n_out + t];
                (v > 0.0).then_some(UnitEdge {
                    layer,
                    source: s,
                    target: t,
                    weight: v,
                })
            })
            .collect();
        // Strongest first with a deterministic order among ties.
        cand.sort_by(|a, b| b.weight.total_cmp(&a.weight).then((a.source, a.target).cmp(&(b.source, b.target))));
        let bound = sparsity_bound(n_in * n_out);
        if cand.len() > bound {
            let cut = cand[bound].weight;
            cand.retain(|e| e.weight > cut);
        }
        let mut out_deg = vec![0usize; n_in];
        let mut in_deg = vec![0usize; n_out];
        for e in &cand {
            out_deg[e.source] += 1;
            in_deg[e.target] += 1;
        }
        let mut keep = vec![true; cand.len()];
        for k in (0..cand.len()).rev() {
            let e = cand[k];
            if out_deg[e.source] > max_degree || in_deg[e.target] > max_degree {
                keep[k] = false;
                out_deg[e.source] -= 1;
                in_deg[e.target] -= 1;
            }
        }
        let mut kept: Vec<UnitEdge> = cand.into_iter().zip(keep).filter_map(|(e, k)| k.then_some(e)).collect();
        kept.sort_by(|a, b| (a.source, a.target).cmp(&(b.source, b.target)));
        out.push(kept);
    }
    Ok(out)
}

/// Unit name: gene id at the input and output levels, `L{level}_U{index}` otherwise.
pub fn unit_name(spec: &DeepWideSpec, genes: &[String], level: usize, index: usize) -> String {
    if level == 0 || level == spec.depth {
        genes[index].clone()
    } else {
        format!("L{level}_U{index}")
    }
}

pub fn extract_graph(
    weights: &ModelWeights,
    spec: &DeepWideSpec,
    genes: &[String],
    config: &ExtractionConfig,
) -> Result<CausalGraph> {
    if genes.len() != spec.genes {
        return Err(Error::Usage("gene list does not match the net".into()));
    }
    let layers = select_edges(weights, spec, config.max_degree)?;
    let known: BTreeSet<&String> = genes.iter().collect();
    let shown: BTreeSet<String> = config
        .gene_subset
        .iter()
        .filter(|g| known.contains(g))
        .take(config.max_genes)
        .cloned()
        .collect();
    let mut graph = CausalGraph::default();
    let mut nodes: BTreeMap<String, GraphNode> = BTreeMap::new();
    for e in layers.iter().flatten() {
        let from = unit_name(spec, genes, e.layer, e.source);
        let to = unit_name(spec, genes, e.layer + 1, e.target);
        let gene_end = |level: usize, name: &String| (level == 0 || level == spec.depth) && !shown.contains(name);
        if gene_end(e.layer, &from) || gene_end(e.layer + 1, &to) {
            continue;
        }
        for (level, name) in [(e.layer, &from), (e.layer + 1, &to)] {
            nodes.entry(name.clone()).or_insert_with(|| {
                if level == 0 || level == spec.depth {
                    GraphNode::gene(name.clone())
                } else {
                    GraphNode::hidden(name.clone())
                }
            });
        }
        graph.directed_edges.push(DirectedEdge {
            weight: Some(e.weight),
            ..DirectedEdge::new(from, to, 1.0)
        });
    }
    graph.nodes = nodes.into_values().collect();
    graph.canonicalize();
    Ok(graph)
}
