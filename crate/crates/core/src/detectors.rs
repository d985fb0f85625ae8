//! Siamese detectors: a symmetric causality classifier and an antisymmetric
//! lag regressor, trained by curriculum over increasing mixin values.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    backward, branch_features, forward, head_from_features, loss, Activation, AdamState, Architecture,
    Combiner, LayerSpec, LossKind, ModelWeights, Tensor,
};
use crate::synth::{build_labeled_set, build_lag_set, derive_seed, GenePool, SynthConfig};

/// Default lag thresholds reported by calibration.
pub const DEFAULT_LAG_THRESHOLDS: [f64; 7] = [0.0125, 0.025, 0.05, 0.1, 0.2, 0.3, 0.5];
pub const DEFAULT_LAG_THRESHOLD: f64 = 0.025;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorShape {
    pub window: usize,
    pub conv_window: usize,
    pub channels: usize,
}

impl Default for DetectorShape {
    fn default() -> Self {
        Self {
            window: 80,
            conv_window: 61,
            channels: 50,
        }
    }
}

impl DetectorShape {
    pub fn positions(&self) -> usize {
        self.window + 1 - self.conv_window
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_window == 0 || self.conv_window > self.window || self.channels == 0 {
            return Err(Error::Config(format!("invalid detector shape {self:?}")));
        }
        Ok(())
    }
}

fn conv(shape: &DetectorShape) -> LayerSpec {
    LayerSpec::Conv1d {
        window: shape.conv_window,
        in_channels: 1,
        out_channels: shape.channels,
        stride: 1,
        has_bias: true,
    }
}

fn dense(in_dim: usize, out_dim: usize, has_bias: bool) -> LayerSpec {
    LayerSpec::Dense {
        in_dim,
        out_dim,
        has_bias,
        l1_coefficient: 0.0,
    }
}

fn act(function: Activation) -> LayerSpec {
    LayerSpec::Activation { function }
}

/// conv → relu → pool → dense → relu per branch; dot; affine → sigmoid.
pub fn causality_architecture(shape: &DetectorShape) -> Architecture {
    let c = shape.channels;
    Architecture::siamese(
        vec![
            conv(shape),
            act(Activation::Relu),
            LayerSpec::AvgPoolTime { pool: None },
            dense(c, c, true),
            act(Activation::Relu),
        ],
        Combiner::Dot,
        vec![dense(1, 1, true), act(Activation::Sigmoid)],
    )
    .with_input_len(shape.window)
}

/// conv → relu → per-position dense → relu → flatten per branch;
/// subtraction; bias-free tanh layer and linear output.
pub fn lag_architecture(shape: &DetectorShape) -> Architecture {
    let c = shape.channels;
    Architecture::siamese(
        vec![
            conv(shape),
            act(Activation::Relu),
            dense(c, c, true),
            act(Activation::Relu),
            LayerSpec::Flatten,
        ],
        Combiner::Subtract,
        vec![
            dense(shape.positions() * c, c, false),
            act(Activation::Tanh),
            dense(c, 1, false),
        ],
    )
    .with_input_len(shape.window)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub stages: Vec<usize>,
    pub epochs_per_stage: usize,
    pub batch_size: usize,
}

impl CurriculumSchedule {
    pub fn desk() -> Self {
        Self {
            stages: vec![0, 2, 4, 9],
            epochs_per_stage: 100,
            batch_size: 512,
        }
    }

    pub fn paper() -> Self {
        Self {
            stages: vec![0, 2, 4, 9],
            epochs_per_stage: 1000,
            batch_size: 20_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("curriculum needs at least one stage".into()));
        }
        if self.stages.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("curriculum stages must be nondecreasing".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub schedule: CurriculumSchedule,
    /// Template for every stage; `mixin` and `seed` are set per stage.
    pub synth: SynthConfig,
    pub shape: DetectorShape,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            schedule: CurriculumSchedule::desk(),
            synth: SynthConfig::default(),
            shape: DetectorShape::default(),
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.shape.validate()?;
        self.synth.validate()?;
        if self.shape.window != self.synth.window {
            return Err(Error::Config(format!(
                "detector window {} differs from synthetic window {}",
                self.shape.window, self.synth.window
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    fn stage_synth(&self, stage: usize, mixin: usize) -> SynthConfig {
        SynthConfig {
            mixin,
            seed: derive_seed(self.seed, 100 + stage as u64),
            ..self.synth.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub accuracy: f64,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
    pub confusion: Vec<ConfusionCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub m: usize,
    pub train_loss: f64,
    pub accuracy: f64,
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagCalibration {
    pub threshold: f64,
    pub direction_precision: Option<f64>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagStageReport {
    pub stage: usize,
    pub m: usize,
    pub train_loss: f64,
    pub test_mse: f64,
    pub mean_abs_error: f64,
    pub calibration: Vec<LagCalibration>,
}

/// ROC over every distinct score, trapezoid AUC, accuracy at 0.5 and
/// confusion counts at each requested threshold (`score ≥ t` is positive).
pub fn roc_auc(scores: &[f64], labels: &[bool], thresholds: &[f64]) -> Result<ValidationReport> {
    if scores.is_empty() {
        return Err(Error::Usage("ROC of an empty set".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Usage("scores and labels differ in length".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let rate = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let mut roc = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        roc.push((rate(fp, neg), rate(tp, pos)));
    }
    let auc = roc
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum::<f64>();
    let confusion: Vec<ConfusionCounts> = thresholds.iter().map(|&t| confusion_at(scores, labels, t)).collect();
    let at_half = confusion_at(scores, labels, 0.5);
    let accuracy = (at_half.true_positives + at_half.true_negatives) as f64 / scores.len() as f64;
    Ok(ValidationReport {
        accuracy,
        auc,
        roc,
        confusion,
    })
}

fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts {
        threshold,
        true_positives: 0,
        false_positives: 0,
        true_negatives: 0,
        false_negatives: 0,
    };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.true_positives += 1,
            (true, false) => c.false_positives += 1,
            (false, false) => c.true_negatives += 1,
            (false, true) => c.false_negatives += 1,
        }
    }
    c
}

/// Direction precision among nonzero-lag pairs with `|score| ≥ τ`, and the
/// fraction of all pairs with `|score| ≥ τ`.
pub fn calibrate_lag_threshold(scores: &[f64], true_lags: &[f64], thresholds: &[f64]) -> Result<Vec<LagCalibration>> {
    if scores.len() != true_lags.len() {
        return Err(Error::Usage("scores and lags differ in length".into()));
    }
    if scores.is_empty() {
        return Err(Error::Usage("calibration of an empty set".into()));
    }
    let mut out = Vec::with_capacity(thresholds.len());
    for &tau in thresholds {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Range(format!("lag threshold {tau} outside (0, 1]")));
        }
        let mut above = 0usize;
        let mut decided = 0usize;
        let mut correct = 0usize;
        for (&s, &lag) in scores.iter().zip(true_lags) {
            if s.abs() >= tau {
                above += 1;
                if lag != 0.0 {
                    decided += 1;
                    if (s > 0.0) == (lag > 0.0) {
                        correct += 1;
                    }
                }
            }
        }
        out.push(LagCalibration {
            threshold: tau,
            direction_precision: (decided > 0).then(|| correct as f64 / decided as f64),
            coverage: above as f64 / scores.len() as f64,
        });
    }
    Ok(out)
}

/// Calibrated direction precision at `tau`, interpolating linearly between
/// the nearest calibrated thresholds when `tau` itself was not calibrated.
pub fn precision_at(calibration: &[LagCalibration], tau: f64) -> Option<f64> {
    let mut known: Vec<(f64, f64)> = calibration
        .iter()
        .filter_map(|c| c.direction_precision.map(|p| (c.threshold, p)))
        .collect();
    known.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(&(_, p)) = known.iter().find(|(t, _)| *t == tau) {
        return Some(p);
    }
    let first = *known.first()?;
    let last = *known.last()?;
    log::warn!("lag threshold {tau} was not calibrated; interpolating");
    if tau <= first.0 {
        return Some(first.1);
    }
    if tau >= last.0 {
        return Some(last.1);
    }
    let w = known.windows(2).find(|w| w[0].0 <= tau && tau <= w[1].0)?;
    let f = (tau - w[0].0) / (w[1].0 - w[0].0);
    Some(w[0].1 + f * (w[1].1 - w[0].1))
}

fn series_tensor(series: &[&[f64]], window: usize) -> Result<Tensor> {
    let mut values = Vec::with_capacity(series.len() * window);
    for s in series {
        if s.len() != window {
            return Err(Error::Usage(format!("expected series of length {window}, got {}", s.len())));
        }
        values.extend_from_slice(s);
    }
    Tensor::new(vec![series.len(), window, 1], values)
}

/// Features of each series under a detector's shared branch, one row per series.
fn features_of(weights: &ModelWeights, window: usize, series: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    if series.is_empty() {
        return Ok(Vec::new());
    }
    let t = branch_features(weights, &series_tensor(series, window)?)?;
    let width = t.values.len() / series.len();
    Ok(t.values.chunks(width).map(|c| c.to_vec()).collect())
}

fn head_pairs(weights: &ModelWeights, first: &[&[f64]], second: &[&[f64]]) -> Result<Vec<f64>> {
    if first.is_empty() {
        return Ok(Vec::new());
    }
    let width = first[0].len();
    let flat = |rows: &[&[f64]]| -> Result<Tensor> {
        let mut v = Vec::with_capacity(rows.len() * width);
        for r in rows {
            if r.len() != width {
                return Err(Error::Usage("feature rows differ in width".into()));
            }
            v.extend_from_slice(r);
        }
        Tensor::new(vec![rows.len(), 1, width], v)
    };
    Ok(head_from_features(weights, &flat(first)?, &flat(second)?)?.values)
}

macro_rules! detector {
    ($name:ident, $arch:ident, $adjust:expr) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub weights: ModelWeights,
            pub shape: DetectorShape,
        }

        impl $name {
            pub fn new(shape: DetectorShape, seed: u64) -> Result<Self> {
                shape.validate()?;
                let mut weights = ModelWeights::init($arch(&shape), seed)?;
                $adjust(&mut weights);
                Ok(Self { weights, shape })
            }

            pub fn from_weights(weights: ModelWeights, shape: DetectorShape) -> Result<Self> {
                if weights.architecture != $arch(&shape) {
                    return Err(Error::Format(format!(
                        "weights do not describe a {} with shape {shape:?}",
                        stringify!($name)
                    )));
                }
                Ok(Self { weights, shape })
            }

            pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
                self.weights.save(path)
            }

            /// Loads weights and recovers the shape from the stored architecture.
            pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
                let weights = ModelWeights::load(path)?;
                let shape = shape_of(&weights)?;
                Self::from_weights(weights, shape)
            }

            /// Branch features for each series; pair scores can then be
            /// computed from cached features.
            pub fn features(&self, series: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
                features_of(&self.weights, self.shape.window, series)
            }

            /// Head outputs for feature pairs `(first[i], second[i])`.
            pub fn score_features(&self, first: &[&[f64]], second: &[&[f64]]) -> Result<Vec<f64>> {
                head_pairs(&self.weights, first, second)
            }

            pub fn score_pairs(&self, first: &[&[f64]], second: &[&[f64]]) -> Result<Vec<f64>> {
                if first.len() != second.len() {
                    return Err(Error::Usage("pair lists differ in length".into()));
                }
                let fa = self.features(first)?;
                let fb = self.features(second)?;
                let ra: Vec<&[f64]> = fa.iter().map(|v| v.as_slice()).collect();
                let rb: Vec<&[f64]> = fb.iter().map(|v| v.as_slice()).collect();
                self.score_features(&ra, &rb)
            }

            fn score_one(&self, a: &[f64], b: &[f64]) -> Result<f64> {
                Ok(self.score_pairs(&[a], &[b])?[0])
            }
        }
    };
}

fn shape_of(weights: &ModelWeights) -> Result<DetectorShape> {
    let arch = &weights.architecture;
    match (arch.layers.first(), arch.input_len) {
        (
            Some(LayerSpec::Conv1d {
                window: conv_window,
                out_channels,
                ..
            }),
            Some(window),
        ) => Ok(DetectorShape {
            window,
            conv_window: *conv_window,
            channels: *out_channels,
        }),
        _ => Err(Error::Format(
            "detector files need a leading convolution and a recorded input length".into(),
        )),
    }
}

/// Starts the affine head with a positive scale. With a negative scale the
/// dot product initially rewards shrinking all features, and training
/// stalls at the constant predictor.
fn positive_head_scale(weights: &mut ModelWeights) {
    let head = weights.architecture.layers.len() - 2;
    if let Some(t) = weights.tensors.get_mut(&crate::nn::weight_name(head)) {
        t.values.iter_mut().for_each(|v| *v = v.abs());
    }
}

detector!(CausalityDetector, causality_architecture, positive_head_scale);
detector!(LagDetector, lag_architecture, |_: &mut ModelWeights| {});

impl CausalityDetector {
    /// Probability that `a` and `b` are causally related; symmetric in its arguments.
    pub fn predict(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.score_one(a, b)
    }

    pub fn evaluate(&self, set: &crate::synth::LabeledPairSet, thresholds: &[f64]) -> Result<ValidationReport> {
        let (first, second): (Vec<&[f64]>, Vec<&[f64]>) =
            set.pairs.iter().map(|p| (p.cause.as_slice(), p.effect.as_slice())).unzip();
        let scores = self.score_pairs(&first, &second)?;
        let labels: Vec<bool> = set.pairs.iter().map(|p| p.label > 0.5).collect();
        roc_auc(&scores, &labels, thresholds)
    }
}

impl LagDetector {
    /// Lag score; positive means `a` leads `b`. Antisymmetric in its arguments.
    pub fn predict(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.score_one(a, b)
    }

    pub fn scores(&self, set: &crate::synth::LagPairSet) -> Result<Vec<f64>> {
        let (first, second): (Vec<&[f64]>, Vec<&[f64]>) =
            set.pairs.iter().map(|p| (p.first.as_slice(), p.second.as_slice())).unzip();
        self.score_pairs(&first, &second)
    }

    pub fn calibrate(&self, set: &crate::synth::LagPairSet, thresholds: &[f64]) -> Result<Vec<LagCalibration>> {
        let scores = self.scores(set)?;
        let lags: Vec<f64> = set.pairs.iter().map(|p| p.lag_label).collect();
        calibrate_lag_threshold(&scores, &lags, thresholds)
    }
}

/// Flattened pair data for one training stage.
struct PairData {
    first: Vec<f64>,
    second: Vec<f64>,
    labels: Vec<f64>,
    window: usize,
}

impl PairData {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor, Tensor, Vec<f64>)> {
        let w = self.window;
        let mut a = Vec::with_capacity(idx.len() * w);
        let mut b = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            a.extend_from_slice(&self.first[i * w..(i + 1) * w]);
            b.extend_from_slice(&self.second[i * w..(i + 1) * w]);
        }
        Ok((
            Tensor::new(vec![idx.len(), w, 1], a)?,
            Tensor::new(vec![idx.len(), w, 1], b)?,
            idx.iter().map(|&i| self.labels[i]).collect(),
        ))
    }
}

/// Runs `epochs` passes of minibatch Adam. Returns the mean loss of the last epoch.
fn fit_stage(
    weights: &mut ModelWeights,
    adam: &mut AdamState,
    data: &PairData,
    kind: LossKind,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    stage: usize,
) -> Result<f64> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Usage("empty training set".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut last = f64::NAN;
    for epoch in 0..epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (k, chunk) in order.chunks(batch_size).enumerate() {
            let (a, b, labels) = data.batch(chunk)?;
            let (out, cache) = forward(weights, &[&a, &b], true, derive_seed(seed, k as u64))?;
            let (l, grad) = loss(kind, &out.values, &labels)?;
            if !l.is_finite() {
                return Err(Error::Divergence {
                    stage,
                    message: format!("loss became {l} in epoch {epoch}"),
                });
            }
            total += l * chunk.len() as f64;
            let grads = backward(weights, cache, &Tensor::new(out.shape.clone(), grad)?)?;
            adam.step_model(weights, &grads)?;
        }
        last = total / n as f64;
        log::debug!("stage {stage} epoch {epoch}: loss {last:.6}");
    }
    if weights.tensors.values().flat_map(|t| &t.values).any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            stage,
            message: "weights became non-finite".into(),
        });
    }
    Ok(last)
}

/// Curriculum training of the causality detector; fresh data per stage.
pub fn train_causality(pool: &GenePool, config: &TrainingConfig) -> Result<(CausalityDetector, Vec<StageReport>)> {
    config.validate()?;
    let mut model = CausalityDetector::new(config.shape, derive_seed(config.seed, 1))?;
    let mut adam = AdamState::for_model(&model.weights).with_learning_rate(config.learning_rate);
    let mut reports = Vec::new();
    for (stage, &m) in config.schedule.stages.iter().enumerate() {
        let synth = config.stage_synth(stage, m);
        let (train, test) = build_labeled_set(pool, &synth)?;
        let data = PairData {
            first: train.pairs.iter().flat_map(|p| p.cause.iter().copied()).collect(),
            second: train.pairs.iter().flat_map(|p| p.effect.iter().copied()).collect(),
            labels: train.pairs.iter().map(|p| p.label).collect(),
            window: synth.window,
        };
        let train_loss = fit_stage(
            &mut model.weights,
            &mut adam,
            &data,
            LossKind::Bce,
            config.schedule.epochs_per_stage,
            config.schedule.batch_size,
            derive_seed(config.seed, 200 + stage as u64),
            stage,
        )?;
        let report = if test.is_empty() {
            model.evaluate(&train, &[0.5])?
        } else {
            model.evaluate(&test, &[0.5])?
        };
        log::info!(
            "causality stage {stage} (m={m}): loss {train_loss:.4}, accuracy {:.4}, auc {:.4}",
            report.accuracy,
            report.auc
        );
        reports.push(StageReport {
            stage,
            m,
            train_loss,
            accuracy: report.accuracy,
            auc: report.auc,
            roc: report.roc,
        });
    }
    Ok((model, reports))
}

/// Curriculum training of the lag detector with MSE loss.
pub fn train_lag(pool: &GenePool, config: &TrainingConfig) -> Result<(LagDetector, Vec<LagStageReport>)> {
    config.validate()?;
    let mut model = LagDetector::new(config.shape, derive_seed(config.seed, 2))?;
    let mut adam = AdamState::for_model(&model.weights).with_learning_rate(config.learning_rate);
    let mut reports = Vec::new();
    for (stage, &m) in config.schedule.stages.iter().enumerate() {
        let synth = config.stage_synth(stage, m);
        let (train, test) = build_lag_set(pool, &synth)?;
        let data = PairData {
            first: train.pairs.iter().flat_map(|p| p.first.iter().copied()).collect(),
            second: train.pairs.iter().flat_map(|p| p.second.iter().copied()).collect(),
            labels: train.pairs.iter().map(|p| p.lag_label).collect(),
            window: synth.window,
        };
        let train_loss = fit_stage(
            &mut model.weights,
            &mut adam,
            &data,
            LossKind::Mse,
            config.schedule.epochs_per_stage,
            config.schedule.batch_size,
            derive_seed(config.seed, 300 + stage as u64),
            stage,
        )?;
        let eval = if test.is_empty() { &train } else { &test };
        let scores = model.scores(eval)?;
        let n = scores.len() as f64;
        let (mut se, mut ae) = (0.0, 0.0);
        for (s, p) in scores.iter().zip(&eval.pairs) {
            se += (s - p.lag_label).powi(2);
            ae += (s - p.lag_label).abs();
        }
        let lags: Vec<f64> = eval.pairs.iter().map(|p| p.lag_label).collect();
        let calibration = calibrate_lag_threshold(&scores, &lags, &DEFAULT_LAG_THRESHOLDS)?;
        log::info!("lag stage {stage} (m={m}): loss {train_loss:.4}, test mse {:.4}", se / n);
        reports.push(LagStageReport {
            stage,
            m,
            train_loss,
            test_mse: se / n,
            mean_abs_error: ae / n,
            calibration,
        });
    }
    Ok((model, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small() -> DetectorShape {
        DetectorShape {
            window: 20,
            conv_window: 7,
            channels: 4,
        }
    }

    fn random_series(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn full_size_shapes() {
        let shape = DetectorShape::default();
        assert_eq!(shape.positions(), 20);
        let c = CausalityDetector::new(shape, 0).unwrap();
        let l = LagDetector::new(shape, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_series(&mut rng, 80);
        assert_eq!(c.features(&[&a]).unwrap()[0].len(), 50);
        assert_eq!(l.features(&[&a]).unwrap()[0].len(), 1000);
        let p = c.predict(&a, &a).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn symmetry_and_antisymmetry() {
        let c = CausalityDetector::new(small(), 3).unwrap();
        let l = LagDetector::new(small(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_series(&mut rng, 20);
            let b = random_series(&mut rng, 20);
            assert_eq!(c.predict(&a, &b).unwrap().to_bits(), c.predict(&b, &a).unwrap().to_bits());
            let s = l.predict(&a, &b).unwrap();
            assert!((s + l.predict(&b, &a).unwrap()).abs() < 1e-12);
            assert_eq!(l.predict(&a, &a).unwrap(), 0.0);
        }
        assert!(c.predict(&[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_features_give_sigmoid_of_head_bias() {
        let mut c = CausalityDetector::new(small(), 3).unwrap();
        // Zero the last branch dense layer so branch features vanish.
        for name in ["layer3.weight", "layer3.bias"] {
            c.weights.tensors.get_mut(name).unwrap().values.iter_mut().for_each(|v| *v = 0.0);
        }
        let bias = c.weights.tensors["layer5.bias"].values[0];
        let p = c.predict(&[1.0; 20], &[0.5; 20]).unwrap();
        assert!((p - 1.0 / (1.0 + (-bias).exp())).abs() < 1e-15);
    }

    #[test]
    fn save_load_recovers_shape() {
        let dir = tempfile::tempdir().unwrap();
        let l = LagDetector::new(small(), 9).unwrap();
        l.save(dir.path().join("lag.json")).unwrap();
        assert_eq!(LagDetector::load(dir.path().join("lag.json")).unwrap(), l);
        let c = CausalityDetector::new(DetectorShape::default(), 9).unwrap();
        c.save(dir.path().join("c.json")).unwrap();
        assert_eq!(CausalityDetector::load(dir.path().join("c.json")).unwrap(), c);
    }

    #[test]
    fn perfect_separation_auc_one() {
        let r = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false], &[0.5]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.accuracy, 1.0);
        assert!(r.roc.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(roc_auc(&[], &[], &[]).is_err());
    }

    #[test]
    fn random_scores_auc_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let labels: Vec<bool> = (0..10_000).map(|_| rng.gen()).collect();
        let r = roc_auc(&scores, &labels, &[]).unwrap();
        assert!((r.auc - 0.5).abs() < 0.02, "{}", r.auc);
    }

    #[test]
    fn tied_scores_use_diagonal() {
        let r = roc_auc(&[0.5; 4], &[true, false, true, false], &[]).unwrap();
        assert_eq!(r.auc, 0.5);
    }

    #[test]
    fn calibration_counts() {
        let scores = [0.3, -0.2, 0.01, -0.05, 0.5];
        let lags = [0.5, 0.4, -0.1, -0.3, 0.0];
        let c = calibrate_lag_threshold(&scores, &lags, &[0.025, 0.4, 0.9]).unwrap();
        assert_eq!(c[0].coverage, 0.8);
        assert_eq!(c[0].direction_precision, Some(2.0 / 3.0));
        assert_eq!(c[1].direction_precision, None);
        assert_eq!(c[1].coverage, 0.2);
        assert_eq!(c[2].coverage, 0.0);
        assert!(calibrate_lag_threshold(&scores, &lags, &[0.0]).is_err());
    }

    #[test]
    fn precision_interpolation() {
        let cal = [
            LagCalibration {
                threshold: 0.1,
                direction_precision: Some(0.6),
                coverage: 0.5,
            },
            LagCalibration {
                threshold: 0.3,
                direction_precision: Some(0.8),
                coverage: 0.2,
            },
        ];
        assert_eq!(precision_at(&cal, 0.1), Some(0.6));
        assert!((precision_at(&cal, 0.2).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(precision_at(&cal, 0.5), Some(0.8));
        assert_eq!(precision_at(&[], 0.5), None);
    }

    #[test]
    fn schedule_validation() {
        assert!(CurriculumSchedule::desk().validate().is_ok());
        let bad = CurriculumSchedule {
            stages: vec![2, 0],
            ..CurriculumSchedule::desk()
        };
        assert!(bad.validate().is_err());
        assert_eq!(CurriculumSchedule::paper().epochs_per_stage, 1000);
        assert_eq!(CurriculumSchedule::paper().batch_size, 20_000);
    }
}
