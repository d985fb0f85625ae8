//! Autoencoder witnesses: convolutional autoencoders learn local patterns
//! of the log-ratio series; matching pattern occurrences across genes
//! witness causal relations, directed by the order of their times.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, DirectedEdge, GraphNode, UndirectedEdge};
use crate::nn::train::{mean_loss, run_epoch, Samples};
use crate::nn::{predict, weight_name, bias_name, Activation, AdamState, Architecture, LayerSpec, LossKind, ModelWeights, Tensor};
use crate::synth::derive_seed;

pub const PAPER_WINDOWS: [usize; 4] = [31, 41, 51, 61];
pub const PAPER_WITNESS_COUNTS: [usize; 5] = [1, 2, 3, 5, 10];
pub const POOL_FACTOR: usize = 2;
pub const MIN_SERIES: usize = 20;
pub const THRESHOLD_ITERATIONS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub window: usize,
    pub features: usize,
}

/// conv(window) → avg-pool(2) → elu → upsample → transposed conv over a
/// full series of length `series_len`.
pub fn autoencoder_architecture(spec: AutoencoderSpec, series_len: usize) -> Result<Architecture> {
    if spec.window == 0 || spec.window > series_len || spec.features == 0 {
        return Err(Error::Config(format!("invalid autoencoder {spec:?} for length {series_len}")));
    }
    let positions = series_len + 1 - spec.window;
    Ok(Architecture::sequential(vec![
        LayerSpec::Conv1d {
            window: spec.window,
            in_channels: 1,
            out_channels: spec.features,
            stride: 1,
            has_bias: true,
        },
        LayerSpec::AvgPoolTime { pool: Some(POOL_FACTOR) },
        LayerSpec::Activation { function: Activation::Elu },
        LayerSpec::Upsample {
            factor: POOL_FACTOR,
            out_len: positions,
        },
        LayerSpec::ConvTranspose1d {
            window: spec.window,
            in_channels: spec.features,
            out_channels: 1,
            has_bias: true,
        },
    ])
    .with_input_len(series_len))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderTraining {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderTraining {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            batch_size: 32,
            patience: 10,
            min_delta: 1e-5,
            validation_fraction: 0.1,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedAutoencoder {
    pub spec: AutoencoderSpec,
    pub weights: ModelWeights,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub epochs_run: usize,
}

impl TrainedAutoencoder {
    /// The encoder's feature map without pooling: elu(conv(x)) per position.
    pub fn encoder(&self) -> Result<ModelWeights> {
        let conv = self.weights.architecture.layers[0].clone();
        let arch = Architecture::sequential(vec![conv, LayerSpec::Activation { function: Activation::Elu }]);
        let mut tensors = BTreeMap::new();
        for name in [weight_name(0), bias_name(0)] {
            if let Some(t) = self.weights.tensors.get(&name) {
                tensors.insert(name, t.clone());
            }
        }
        let enc = ModelWeights {
            architecture: arch,
            tensors,
        };
        enc.validate()?;
        Ok(enc)
    }

    pub fn reconstruct(&self, series: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor::new(vec![1, series.len(), 1], series.to_vec())?;
        Ok(predict(&self.weights, &[&x])?.values)
    }
}

/// Trains one autoencoder per (window, feature) setting with early stopping
/// on a held-out 10% of the series. Failures are reported per setting.
pub fn train_autoencoders(
    series: &[Vec<f64>],
    specs: &[AutoencoderSpec],
    config: &AutoencoderTraining,
) -> Result<Vec<(AutoencoderSpec, Result<TrainedAutoencoder>)>> {
    if series.len() < MIN_SERIES {
        return Err(Error::Domain(format!(
            "autoencoders need at least {MIN_SERIES} series, got {}",
            series.len()
        )));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Usage("series differ in length".into()));
    }
    let mut order: Vec<usize> = (0..series.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_val = ((series.len() as f64 * config.validation_fraction).round() as usize).clamp(1, series.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let flat = |idx: &[usize]| -> Vec<f64> { idx.iter().flat_map(|&i| series[i].iter().copied()).collect() };
    let train = flat(train_idx);
    let val = flat(val_idx);
    Ok(specs
        .par_iter()
        .enumerate()
        .map(|(k, &spec)| (spec, train_one(spec, len, &train, &val, config, derive_seed(config.seed, k as u64))))
        .collect())
}

fn train_one(
    spec: AutoencoderSpec,
    len: usize,
    train: &[f64],
    val: &[f64],
    config: &AutoencoderTraining,
    seed: u64,
) -> Result<TrainedAutoencoder> {
    let arch = autoencoder_architecture(spec, len)?;
    let mut weights = ModelWeights::init(arch, seed)?;
    let mut adam = AdamState::for_model(&weights).with_learning_rate(config.learning_rate);
    let shape = [len, 1];
    let ts = Samples {
        inputs: train,
        targets: train,
        input_shape: &shape,
        target_len: len,
    };
    let vs = Samples {
        inputs: val,
        targets: val,
        input_shape: &shape,
        target_len: len,
    };
    let mut best = (f64::INFINITY, weights.clone(), 0usize);
    let mut stale = 0;
    let mut epochs_run = 0;
    for epoch in 0..config.max_epochs {
        run_epoch(&mut weights, &mut adam, ts, LossKind::Mse, config.batch_size, derive_seed(seed, epoch as u64))
            .map_err(|e| Error::Divergence {
                stage: 0,
                message: format!("autoencoder {spec:?}: {e}"),
            })?;
        epochs_run = epoch + 1;
        let v = mean_loss(&weights, vs, LossKind::Mse)?;
        if !v.is_finite() {
            return Err(Error::Divergence {
                stage: 0,
                message: format!("autoencoder {spec:?}: validation loss {v}"),
            });
        }
        if v < best.0 - config.min_delta {
            best = (v, weights.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (validation_mse, weights, _) = best;
    let train_mse = mean_loss(&weights, ts, LossKind::Mse)?;
    Ok(TrainedAutoencoder {
        spec,
        weights,
        train_mse,
        validation_mse,
        epochs_run,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureOccurrence {
    pub feature: Vec<f64>,
    pub gene: String,
    pub time_index: usize,
}

/// One occurrence per (gene, window position), stride 1, timed at the window center.
pub fn extract_occurrences(model: &TrainedAutoencoder, genes: &[(String, Vec<f64>)]) -> Result<Vec<FeatureOccurrence>> {
    let enc = model.encoder()?;
    let w = model.spec.window;
    let f = model.spec.features;
    let mut out = Vec::new();
    for (gene, series) in genes {
        let x = Tensor::new(vec![1, series.len(), 1], series.clone())?;
        let y = predict(&enc, &[&x])?;
        let positions = y.values.len() / f;
        for p in 0..positions {
            out.push(FeatureOccurrence {
                feature: y.values[p * f..(p + 1) * f].to_vec(),
                gene: gene.clone(),
                time_index: p + (w - 1) / 2,
            });
        }
    }
    Ok(out)
}

/// Seed-deterministic subsample to at most `cap` occurrences, order kept.
pub fn cap_occurrences(occurrences: Vec<FeatureOccurrence>, cap: usize, seed: u64) -> Vec<FeatureOccurrence> {
    if occurrences.len() <= cap {
        return occurrences;
    }
    let mut idx: Vec<usize> = (0..occurrences.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep: BTreeSet<usize> = idx.into_iter().take(cap).collect();
    occurrences
        .into_iter()
        .enumerate()
        .filter_map(|(i, o)| keep.contains(&i).then_some(o))
        .collect()
}

/// A matched pair of occurrences. When `directed`, `first` is strictly earlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Witness {
    pub first: usize,
    pub second: usize,
    pub directed: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn orient(occ: &[FeatureOccurrence], i: usize, j: usize) -> Witness {
    let (ti, tj) = (occ[i].time_index, occ[j].time_index);
    if ti < tj {
        Witness {
            first: i,
            second: j,
            directed: true,
        }
    } else if tj < ti {
        Witness {
            first: j,
            second: i,
            directed: true,
        }
    } else {
        Witness {
            first: i.min(j),
            second: i.max(j),
            directed: false,
        }
    }
}

/// All cross-gene occurrence pairs within Euclidean distance `threshold`.
pub fn match_occurrences(occurrences: &[FeatureOccurrence], threshold: f64) -> Vec<Witness> {
    let t2 = threshold * threshold;
    let n = occurrences.len();
    let mut out: Vec<Witness> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).filter_map(move |j| {
                let (a, b) = (&occurrences[i], &occurrences[j]);
                (a.gene != b.gene && sq_dist(&a.feature, &b.feature) <= t2).then(|| orient(occurrences, i, j))
            })
        })
        .collect();
    out.sort();
    out
}

/// Witness counts per gene pair: undirected keys are ordered pairs with
/// `a < b`, directed keys are `(earlier gene, later gene)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessTally {
    pub undirected: BTreeMap<(String, String), usize>,
    pub directed: BTreeMap<(String, String), usize>,
}

impl WitnessTally {
    pub fn from_witnesses(occurrences: &[FeatureOccurrence], witnesses: &[Witness]) -> Self {
        let mut t = Self::default();
        for w in witnesses {
            let (a, b) = (&occurrences[w.first].gene, &occurrences[w.second].gene);
            if w.directed {
                *t.directed.entry((a.clone(), b.clone())).or_default() += 1;
            } else {
                let key = crate::graph::canonical_pair(a, b);
                *t.undirected.entry(key).or_default() += 1;
            }
        }
        t
    }

    /// Fraction of directed witnesses whose gene pair has no witness in the
    /// opposite direction; 1 without directed witnesses.
    pub fn consistency(&self) -> f64 {
        let total: usize = self.directed.values().sum();
        if total == 0 {
            return 1.0;
        }
        let conflicting: usize = self
            .directed
            .iter()
            .filter(|((a, b), _)| self.directed.contains_key(&(b.clone(), a.clone())))
            .map(|(_, c)| c)
            .sum();
        1.0 - conflicting as f64 / total as f64
    }
}

/// Tally without materializing the witness list.
pub fn tally_matches(occurrences: &[FeatureOccurrence], threshold: f64) -> WitnessTally {
    let t2 = threshold * threshold;
    let n = occurrences.len();
    let gene_ids: BTreeSet<&str> = occurrences.iter().map(|o| o.gene.as_str()).collect();
    let index: BTreeMap<&str, usize> = gene_ids.iter().enumerate().map(|(i, g)| (*g, i)).collect();
    let names: Vec<&str> = gene_ids.into_iter().collect();
    let gidx: Vec<usize> = occurrences.iter().map(|o| index[o.gene.as_str()]).collect();
    type Counts = (BTreeMap<(usize, usize), usize>, BTreeMap<(usize, usize), usize>);
    let (und, dir): Counts = (0..n)
        .into_par_iter()
        .fold(Counts::default, |mut acc, i| {
            for j in i + 1..n {
                if gidx[i] == gidx[j] || sq_dist(&occurrences[i].feature, &occurrences[j].feature) > t2 {
                    continue;
                }
                let w = orient(occurrences, i, j);
                let (a, b) = (gidx[w.first], gidx[w.second]);
                if w.directed {
                    *acc.1.entry((a, b)).or_default() += 1;
                } else {
                    *acc.0.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
            acc
        })
        .reduce(Counts::default, |mut x, y| {
            for (k, v) in y.0 {
                *x.0.entry(k).or_default() += v;
            }
            for (k, v) in y.1 {
                *x.1.entry(k).or_default() += v;
            }
            x
        });
    let name = |i: usize| names[i].to_string();
    WitnessTally {
        undirected: und.into_iter().map(|((a, b), c)| ((name(a), name(b)), c)).collect(),
        directed: dir.into_iter().map(|((a, b), c)| ((name(a), name(b)), c)).collect(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftedEdges {
    pub undirected: BTreeMap<(String, String), usize>,
    pub directed: BTreeMap<(String, String), usize>,
}

impl LiftedEdges {
    pub fn edge_count(&self) -> usize {
        self.undirected.len() + self.directed.len()
    }
}

/// Gene edges backed by at least `n` witnesses, with directed edges removed
/// where the pair is also undirected or directed the other way.
pub fn lift_to_genes(tally: &WitnessTally, n: usize) -> LiftedEdges {
    let n = n.max(1);
    let undirected: BTreeMap<(String, String), usize> =
        tally.undirected.iter().filter(|(_, &c)| c >= n).map(|(k, &c)| (k.clone(), c)).collect();
    let qualified: BTreeMap<&(String, String), usize> =
        tally.directed.iter().filter(|(_, &c)| c >= n).map(|(k, &c)| (k, c)).collect();
    let directed = qualified
        .iter()
        .filter(|((a, b), _)| {
            let reverse = (b.clone(), a.clone());
            !qualified.contains_key(&reverse) && !undirected.contains_key(&crate::graph::canonical_pair(a, b))
        })
        .map(|(k, &c)| ((*k).clone(), c))
        .collect();
    LiftedEdges { undirected, directed }
}

/// Gene pairs with at least `n` witnesses of any kind; monotone in the
/// matching threshold.
pub fn qualifying_pairs(tally: &WitnessTally, n: usize) -> usize {
    let n = n.max(1);
    let mut pairs: BTreeSet<(String, String)> =
        tally.undirected.iter().filter(|(_, &c)| c >= n).map(|(k, _)| k.clone()).collect();
    for ((a, b), &c) in &tally.directed {
        if c >= n {
            pairs.insert(crate::graph::canonical_pair(a, b));
        }
    }
    pairs.len()
}

pub fn max_pairwise_distance(occurrences: &[FeatureOccurrence]) -> f64 {
    let n = occurrences.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| sq_dist(&occurrences[i].feature, &occurrences[j].feature))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt()
}

/// Bisection for the smallest matching threshold whose qualifying pair
/// count reaches `target`.
pub fn solve_threshold(occurrences: &[FeatureOccurrence], n: usize, target: usize) -> Result<f64> {
    if target == 0 {
        return Err(Error::Range("target edge count must be at least 1".into()));
    }
    let hi0 = max_pairwise_distance(occurrences);
    let count = |t: f64| qualifying_pairs(&tally_matches(occurrences, t), n);
    if count(hi0) < target {
        log::warn!("target of {target} edges is unreachable with n = {n}; using the maximum threshold");
        return Ok(hi0);
    }
    let (mut lo, mut hi) = (0.0, hi0);
    if count(lo) >= target {
        return Ok(lo);
    }
    for _ in 0..THRESHOLD_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if count(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub window: usize,
    pub feature_dim: usize,
    pub n: usize,
    pub reconstruction_mse: f64,
    pub consistency: f64,
    pub rank: usize,
    pub selected: bool,
}

/// Consistency descending, then validation MSE ascending; the top three per
/// window are selected for graph generation.
pub fn rank_models(scores: &mut [ModelScore]) {
    scores.sort_by(|a, b| {
        b.consistency
            .total_cmp(&a.consistency)
            .then(a.reconstruction_mse.total_cmp(&b.reconstruction_mse))
            .then((a.window, a.feature_dim, a.n).cmp(&(b.window, b.feature_dim, b.n)))
    });
    let mut per_window: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, s) in scores.iter_mut().enumerate() {
        s.rank = i + 1;
        let k = per_window.entry(s.window).or_default();
        s.selected = *k < 3;
        *k += 1;
    }
}

/// Graph of lifted edges annotated with witness counts.
pub fn lifted_graph(edges: &LiftedEdges) -> CausalGraph {
    let mut g = CausalGraph::default();
    let mut nodes = BTreeSet::new();
    for ((a, b), &c) in &edges.undirected {
        nodes.insert(a.clone());
        nodes.insert(b.clone());
        g.undirected_edges.push(UndirectedEdge {
            a: a.clone(),
            b: b.clone(),
            probability: 1.0,
            witnesses: Some(c),
        });
    }
    for ((a, b), &c) in &edges.directed {
        nodes.insert(a.clone());
        nodes.insert(b.clone());
        g.directed_edges.push(DirectedEdge {
            witnesses: Some(c),
            ..DirectedEdge::new(a.clone(), b.clone(), 1.0)
        });
    }
    g.nodes = nodes.into_iter().map(GraphNode::gene).collect();
    g.canonicalize();
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn occ(gene: &str, t: usize, f: Vec<f64>) -> FeatureOccurrence {
        FeatureOccurrence {
            feature: f,
            gene: gene.into(),
            time_index: t,
        }
    }

    #[test]
    fn architecture_round_trips_length() {
        for w in PAPER_WINDOWS {
            let arch = autoencoder_architecture(AutoencoderSpec { window: w, features: 4 }, 101).unwrap();
            let m = ModelWeights::init(arch, 0).unwrap();
            let y = predict(&m, &[&Tensor::zeros(vec![2, 101, 1])]).unwrap();
            assert_eq!(y.shape, vec![2, 101, 1]);
        }
    }

    #[test]
    fn occurrence_counts_and_centers() {
        let spec = AutoencoderSpec { window: 41, features: 3 };
        let arch = autoencoder_architecture(spec, 101).unwrap();
        let model = TrainedAutoencoder {
            spec,
            weights: ModelWeights::init(arch, 1).unwrap(),
            train_mse: 0.0,
            validation_mse: 0.0,
            epochs_run: 0,
        };
        let s: Vec<f64> = (0..101).map(|i| (i as f64 * 0.1).sin()).collect();
        let genes = vec![("a".to_string(), s.clone()), ("b".to_string(), s)];
        let occ = extract_occurrences(&model, &genes).unwrap();
        assert_eq!(occ.len(), 2 * 61);
        assert_eq!(occ[0].time_index, 20);
        assert_eq!(occ[60].time_index, 80);
        for p in 0..61 {
            assert_eq!(occ[p].feature, occ[61 + p].feature);
        }
        let spec61 = AutoencoderSpec { window: 61, features: 3 };
        let m61 = TrainedAutoencoder {
            spec: spec61,
            weights: ModelWeights::init(autoencoder_architecture(spec61, 101).unwrap(), 1).unwrap(),
            ..model
        };
        let ten: Vec<(String, Vec<f64>)> = (0..10).map(|i| (format!("g{i}"), genes[0].1.clone())).collect();
        assert_eq!(extract_occurrences(&m61, &ten).unwrap().len(), 10 * 41);
    }

    #[test]
    fn zero_series_reconstruct_to_zero() {
        let series = vec![vec![0.0; 101]; 20];
        let cfg = AutoencoderTraining {
            max_epochs: 30,
            batch_size: 8,
            ..Default::default()
        };
        let out = train_autoencoders(&series, &[AutoencoderSpec { window: 31, features: 3 }], &cfg).unwrap();
        let m = out[0].1.as_ref().unwrap();
        assert!(m.validation_mse < 1e-3, "{}", m.validation_mse);
        assert!(train_autoencoders(&series[..5], &[], &cfg).is_err());
    }

    #[test]
    fn matching_rules() {
        let o = vec![
            occ("a", 5, vec![0.0, 0.0]),
            occ("b", 9, vec![0.0, 0.0]),
            occ("a", 9, vec![0.0, 0.0]),
            occ("c", 9, vec![0.0, 0.1]),
        ];
        let w = match_occurrences(&o, 0.0);
        assert_eq!(
            w,
            vec![
                Witness {
                    first: 0,
                    second: 1,
                    directed: true
                },
                Witness {
                    first: 1,
                    second: 2,
                    directed: false
                },
            ]
        );
        let w = match_occurrences(&o, 0.1);
        assert!(w.contains(&Witness {
            first: 1,
            second: 3,
            directed: false
        }));
        assert!(w.contains(&Witness {
            first: 2,
            second: 3,
            directed: false
        }));
        assert!(!w.iter().any(|x| o[x.first].gene == o[x.second].gene));
    }

    fn random_occurrences(rng: &mut ChaCha8Rng, genes: usize, per_gene: usize) -> Vec<FeatureOccurrence> {
        (0..genes)
            .flat_map(|g| {
                (0..per_gene)
                    .map(|t| occ(&format!("g{g:02}"), t, vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]))
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn tally_matches_witness_list() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let o = random_occurrences(&mut rng, 12, 8);
        for t in [0.05, 0.1, 0.3] {
            let w = match_occurrences(&o, t);
            assert_eq!(tally_matches(&o, t), WitnessTally::from_witnesses(&o, &w));
        }
    }

    #[test]
    fn lift_rules() {
        let mut t = WitnessTally::default();
        t.directed.insert(("a".into(), "b".into()), 1);
        let e = lift_to_genes(&t, 1);
        assert_eq!(e.directed.len(), 1);
        t.directed.insert(("b".into(), "a".into()), 2);
        assert!(lift_to_genes(&t, 1).directed.is_empty());
        let e = lift_to_genes(&t, 2);
        assert!(e.directed.contains_key(&("b".to_string(), "a".to_string())));
        t.undirected.insert(("a".into(), "b".into()), 2);
        let e = lift_to_genes(&t, 2);
        assert!(e.directed.is_empty());
        assert_eq!(e.undirected.len(), 1);
    }

    #[test]
    fn threshold_monotone_and_solved() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let o = random_occurrences(&mut rng, 10, 6);
        let mut last = 0;
        for k in 0..20 {
            let c = qualifying_pairs(&tally_matches(&o, k as f64 * 0.05), 2);
            assert!(c >= last);
            last = c;
        }
        let t = solve_threshold(&o, 2, 10).unwrap();
        assert!(qualifying_pairs(&tally_matches(&o, t), 2) >= 10);
        assert!(qualifying_pairs(&tally_matches(&o, t * 0.999), 2) < 10 || t == 0.0);
        // 45 gene pairs exist, so 100 edges cannot be reached.
        let hi = solve_threshold(&o, 1, 100).unwrap();
        assert_eq!(hi, max_pairwise_distance(&o));
    }

    #[test]
    fn ranking_rules() {
        let mk = |window, mse, consistency| ModelScore {
            window,
            feature_dim: 4,
            n: 1,
            reconstruction_mse: mse,
            consistency,
            rank: 0,
            selected: false,
        };
        let mut s = vec![mk(31, 0.2, 0.9), mk(31, 0.1, 0.9), mk(41, 0.05, 0.5), mk(31, 0.01, 0.1), mk(31, 0.0, 0.0)];
        rank_models(&mut s);
        assert_eq!(s[0].reconstruction_mse, 0.1);
        assert_eq!(s[1].reconstruction_mse, 0.2);
        assert_eq!(s.iter().map(|x| x.rank).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
        assert!(!s[4].selected);
        assert!(s[2].selected);
        let mut one = vec![mk(31, 0.3, 0.3)];
        rank_models(&mut one);
        assert_eq!(one[0].rank, 1);
        assert_eq!(WitnessTally::default().consistency(), 1.0);
    }
}
