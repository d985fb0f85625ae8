//! Synthetic causally related pairs drawn from the fitted Gaussian processes.
//!
//! A sampled log-ratio series (treated draw minus control draw, normalized)
//! is shifted against a second draw of the same compound to simulate a
//! causal delay; extra independent series are superposed onto the effect
//! to simulate interactions. Negatives pair a cause with effects built from
//! independently drawn pairs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Condition, SeriesKey, TimeGrid};
use crate::error::{Error, Result};
use crate::gp::{GpModel, PosteriorSampler};

const MAX_REJECTIONS: u64 = 100;
const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthMode {
    /// Both members of a lagged pair come from one sampled series.
    Ideal,
    /// Members are independent posterior draws of the same compound.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub series_length: usize,
    pub window: usize,
    pub mixin: usize,
    pub mode: SynthMode,
    /// Pairs per class.
    pub set_size: usize,
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            series_length: 101,
            window: 80,
            mixin: 0,
            mode: SynthMode::Noisy,
            set_size: 20_000,
            split_fraction: 0.9,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn max_lag(&self) -> usize {
        self.series_length - self.window
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window >= self.series_length {
            return Err(Error::Config(format!(
                "window {} must lie strictly between 0 and the series length {}",
                self.window, self.series_length
            )));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "split fraction must be in (0, 1], got {}",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

/// A sampled log-ratio series with mean 0 and variance 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRatio {
    pub gene_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPair {
    pub cause: Vec<f64>,
    pub effect: Vec<f64>,
    pub label: f64,
    pub lag_used: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_gene: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub effect_genes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagPair {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub lag_label: f64,
    #[serde(default)]
    pub lag: i64,
}

impl LagPair {
    pub fn swapped(&self) -> LagPair {
        LagPair {
            first: self.second.clone(),
            second: self.first.clone(),
            lag_label: -self.lag_label,
            lag: -self.lag,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledPairSet {
    pub pairs: Vec<SyntheticPair>,
}

impl LabeledPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LagPairSet {
    pub pairs: Vec<LagPair>,
}

impl LagPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Rescales `values` in place to mean 0, population variance 1.
/// Returns `false` (leaving values untouched) for a constant series.
pub fn normalize_in_place(values: &mut [f64]) -> bool {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > MIN_VARIANCE) || !var.is_finite() {
        return false;
    }
    let sd = var.sqrt();
    for v in values.iter_mut() {
        *v = (*v - mean) / sd;
    }
    true
}

pub fn normalized(values: &[f64]) -> Option<Vec<f64>> {
    let mut v = values.to_vec();
    normalize_in_place(&mut v).then_some(v)
}

/// Posterior samplers for one compound under both conditions.
#[derive(Debug, Clone)]
pub struct PoolGene {
    pub gene_id: String,
    control: PosteriorSampler,
    treated: PosteriorSampler,
}

/// The universe of compounds synthetic series are drawn from.
#[derive(Debug, Clone)]
pub struct GenePool {
    genes: Vec<PoolGene>,
    series_length: usize,
}

impl GenePool {
    /// Builds samplers for every compound fitted under both conditions.
    pub fn from_models(models: &BTreeMap<SeriesKey, GpModel>, grid: &TimeGrid) -> Result<Self> {
        let mut by_gene: BTreeMap<&str, (Option<&GpModel>, Option<&GpModel>)> = BTreeMap::new();
        for ((id, cond), m) in models {
            let e = by_gene.entry(id.as_str()).or_default();
            match cond {
                Condition::Control => e.0 = Some(m),
                Condition::Treated => e.1 = Some(m),
            }
        }
        let candidates: Vec<(&str, &GpModel, &GpModel)> = by_gene
            .into_iter()
            .filter_map(|(id, (c, t))| Some((id, c?, t?)))
            .collect();
        let built: Vec<Option<PoolGene>> = candidates
            .par_iter()
            .map(|(id, c, t)| match (c.sampler(grid), t.sampler(grid)) {
                (Ok(control), Ok(treated)) => Some(PoolGene {
                    gene_id: id.to_string(),
                    control,
                    treated,
                }),
                (Err(e), _) | (_, Err(e)) => {
                    log::warn!("{id}: excluded from the synthetic pool: {e}");
                    None
                }
            })
            .collect();
        let genes: Vec<PoolGene> = built.into_iter().flatten().collect();
        if genes.is_empty() {
            return Err(Error::Domain("no compound has fitted models for both conditions".into()));
        }
        Ok(Self {
            genes,
            series_length: grid.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn series_length(&self) -> usize {
        self.series_length
    }

    pub fn gene(&self, idx: usize) -> &PoolGene {
        &self.genes[idx]
    }

    pub fn gene_ids(&self) -> impl Iterator<Item = &str> {
        self.genes.iter().map(|g| g.gene_id.as_str())
    }
}

/// Treated draw minus control draw, normalized. Constant draws are
/// rejected and redrawn with `seed + 1`, `seed + 2`, ...
pub fn sample_normalized_ratio(pool: &GenePool, gene: usize, seed: u64) -> Result<NormalizedRatio> {
    let g = pool.gene(gene);
    for attempt in 0..MAX_REJECTIONS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let u = g.treated.sample(&mut rng);
        let c = g.control.sample(&mut rng);
        let mut r: Vec<f64> = u.iter().zip(&c).map(|(u, c)| u - c).collect();
        if normalize_in_place(&mut r) {
            return Ok(NormalizedRatio {
                gene_id: g.gene_id.clone(),
                values: r,
            });
        }
    }
    Err(Error::Sampling(format!(
        "{}: sampled ratio was constant {MAX_REJECTIONS} times",
        g.gene_id
    )))
}

/// Shifted windows of two series. For `lag ≥ 0` the cause leads:
/// `cause[i] = r_prime[i + lag]`, `effect[i] = r[i]`. A negative lag moves
/// the shift onto the effect: `cause[i] = r_prime[i]`, `effect[i] = r[i + |lag|]`.
pub fn make_lagged_pair(
    r_prime: &[f64],
    r: &[f64],
    lag: i64,
    window: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = r_prime.len().min(r.len());
    if window == 0 || window > len {
        return Err(Error::Range(format!("window {window} does not fit series of length {len}")));
    }
    let max_lag = (len - window) as i64;
    if lag.abs() > max_lag {
        return Err(Error::Range(format!(
            "lag {lag} outside [-{max_lag}, {max_lag}]"
        )));
    }
    let shift = lag.unsigned_abs() as usize;
    if lag >= 0 {
        Ok((r_prime[shift..shift + window].to_vec(), r[..window].to_vec()))
    } else {
        Ok((r_prime[..window].to_vec(), r[shift..shift + window].to_vec()))
    }
}

/// One draw from the full lagged pair set.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDraw {
    pub gene: usize,
    pub lag: i64,
    pub cause: Vec<f64>,
    pub effect: Vec<f64>,
}

fn draw_lagged(pool: &GenePool, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<LaggedDraw> {
    let gene = rng.gen_range(0..pool.len());
    let lag = rng.gen_range(0..=config.max_lag()) as i64;
    let first = sample_normalized_ratio(pool, gene, rng.gen())?;
    let (cause, effect) = match config.mode {
        SynthMode::Ideal => make_lagged_pair(&first.values, &first.values, lag, config.window)?,
        SynthMode::Noisy => {
            let second = sample_normalized_ratio(pool, gene, rng.gen())?;
            make_lagged_pair(&first.values, &second.values, lag, config.window)?
        }
    };
    Ok(LaggedDraw {
        gene,
        lag,
        cause,
        effect,
    })
}

/// Raw ingredients of one synthetic pair before the effect is summed.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComponents {
    pub cause: LaggedDraw,
    /// `s_0 … s_m`; for positives `components[0]` is `cause`'s own effect.
    pub components: Vec<LaggedDraw>,
}

impl PairComponents {
    /// Elementwise sum of the effect members before renormalization.
    pub fn raw_effect(&self) -> Vec<f64> {
        let w = self.cause.cause.len();
        let mut sum = vec![0.0; w];
        for c in &self.components {
            for (s, v) in sum.iter_mut().zip(&c.effect) {
                *s += v;
            }
        }
        sum
    }
}

pub fn draw_positive_components(pool: &GenePool, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<PairComponents> {
    let first = draw_lagged(pool, config, rng)?;
    let mut components = vec![first.clone()];
    for _ in 0..config.mixin {
        components.push(draw_lagged(pool, config, rng)?);
    }
    Ok(PairComponents {
        cause: first,
        components,
    })
}

pub fn draw_negative_components(pool: &GenePool, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<PairComponents> {
    let cause = draw_lagged(pool, config, rng)?;
    let components = (0..=config.mixin)
        .map(|_| draw_lagged(pool, config, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(PairComponents { cause, components })
}

fn assemble(pool: &GenePool, parts: PairComponents, label: f64) -> SyntheticPair {
    let mut effect = parts.raw_effect();
    if !normalize_in_place(&mut effect) {
        log::debug!("effect mixture has zero variance");
    }
    let mut cause = parts.cause.cause;
    normalize_in_place(&mut cause);
    SyntheticPair {
        cause,
        effect,
        label,
        lag_used: parts.cause.lag,
        cause_gene: Some(pool.gene(parts.cause.gene).gene_id.clone()),
        effect_genes: parts
            .components
            .iter()
            .map(|c| pool.gene(c.gene).gene_id.clone())
            .collect(),
    }
}

pub fn make_positive_pair(pool: &GenePool, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticPair> {
    let parts = draw_positive_components(pool, config, rng)?;
    Ok(assemble(pool, parts, 1.0))
}

pub fn make_negative_pair(pool: &GenePool, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<SyntheticPair> {
    let parts = draw_negative_components(pool, config, rng)?;
    Ok(assemble(pool, parts, 0.0))
}

/// Mixes a base seed with a stream tag (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent random stream for item `index` of a set.
pub fn item_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn split_shuffled<T>(mut items: Vec<T>, fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    items.shuffle(&mut rng);
    let n_train = (items.len() as f64 * fraction).round() as usize;
    let test = items.split_off(n_train.min(items.len()));
    (items, test)
}

/// Balanced, shuffled, split labeled set of `set_size` positives and negatives.
pub fn build_labeled_set(pool: &GenePool, config: &SynthConfig) -> Result<(LabeledPairSet, LabeledPairSet)> {
    config.validate()?;
    check_pool(pool, config)?;
    let n = config.set_size;
    let pairs = (0..2 * n)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(config.seed, i as u64);
            if i < n {
                make_positive_pair(pool, config, &mut rng)
            } else {
                make_negative_pair(pool, config, &mut rng)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_shuffled(pairs, config.split_fraction, config.seed);
    Ok((LabeledPairSet { pairs: train }, LabeledPairSet { pairs: test }))
}

/// Lag-labeled pair: lag uniform on `[-M_L, M_L]`, label `lag / M_L`.
/// Negative lags swap the members of a positive-style pair.
pub fn make_lag_pair(pool: &GenePool, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<LagPair> {
    let max_lag = config.max_lag() as i64;
    let lag = rng.gen_range(-max_lag..=max_lag);
    let mut parts = draw_positive_components(pool, config, rng)?;
    // Re-derive the primary component at |lag| from its own draw stream.
    let primary = draw_lagged_with_lag(pool, config, rng, lag.abs())?;
    parts.components[0] = primary.clone();
    parts.cause = primary;
    Ok(orient_lag_pair(assemble(pool, parts, 1.0), lag, max_lag))
}

fn orient_lag_pair(pair: SyntheticPair, lag: i64, max_lag: i64) -> LagPair {
    let forward = LagPair {
        first: pair.cause,
        second: pair.effect,
        lag_label: lag.abs() as f64 / max_lag as f64,
        lag: lag.abs(),
    };
    if lag < 0 {
        forward.swapped()
    } else {
        forward
    }
}

fn draw_lagged_with_lag(pool: &GenePool, config: &SynthConfig, rng: &mut ChaCha8Rng, lag: i64) -> Result<LaggedDraw> {
    let gene = rng.gen_range(0..pool.len());
    let first = sample_normalized_ratio(pool, gene, rng.gen())?;
    let (cause, effect) = match config.mode {
        SynthMode::Ideal => make_lagged_pair(&first.values, &first.values, lag, config.window)?,
        SynthMode::Noisy => {
            let second = sample_normalized_ratio(pool, gene, rng.gen())?;
            make_lagged_pair(&first.values, &second.values, lag, config.window)?
        }
    };
    Ok(LaggedDraw {
        gene,
        lag,
        cause,
        effect,
    })
}

pub fn build_lag_set(pool: &GenePool, config: &SynthConfig) -> Result<(LagPairSet, LagPairSet)> {
    config.validate()?;
    check_pool(pool, config)?;
    if config.max_lag() == 0 {
        return Err(Error::Config("lag sets need a window shorter than the series".into()));
    }
    let pairs = (0..config.set_size)
        .into_par_iter()
        .map(|i| make_lag_pair(pool, config, &mut item_rng(config.seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_shuffled(pairs, config.split_fraction, config.seed);
    Ok((LagPairSet { pairs: train }, LagPairSet { pairs: test }))
}

fn check_pool(pool: &GenePool, config: &SynthConfig) -> Result<()> {
    if pool.series_length() != config.series_length {
        return Err(Error::Config(format!(
            "pool series have length {}, config expects {}",
            pool.series_length(),
            config.series_length
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CompoundSeries;
    use crate::gp::KernelParams;

    fn toy_pool(n_genes: usize) -> GenePool {
        let grid = TimeGrid::new(48.0).unwrap();
        let mut models = BTreeMap::new();
        for g in 0..n_genes {
            for cond in [Condition::Control, Condition::Treated] {
                let obs: Vec<(f64, f64)> = [0.0, 1.0, 2.0, 3.0, 3.9]
                    .iter()
                    .map(|&t: &f64| {
                        let v = if cond == Condition::Treated {
                            ((g as f64 + 1.0) * t).sin()
                        } else {
                            0.1 * t
                        };
                        (t, v)
                    })
                    .collect();
                let s = CompoundSeries {
                    compound_id: format!("G{g}"),
                    condition: cond,
                    observations: obs,
                };
                let m = GpModel::fit(&s, KernelParams::new(1.0, 2.0, 0.05).unwrap()).unwrap();
                models.insert((s.compound_id.clone(), cond), m);
            }
        }
        GenePool::from_models(&models, &grid).unwrap()
    }

    fn assert_normalized(v: &[f64], tol: f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < tol && (var - 1.0).abs() < tol, "mean {mean} var {var}");
    }

    #[test]
    fn normalized_ratio_postconditions() {
        let pool = toy_pool(3);
        let a = sample_normalized_ratio(&pool, 1, 7).unwrap();
        assert_eq!(a.values.len(), 101);
        assert_normalized(&a.values, 1e-9);
        assert_eq!(a, sample_normalized_ratio(&pool, 1, 7).unwrap());
        let distinct = (0..100)
            .filter(|s| sample_normalized_ratio(&pool, 1, *s).unwrap().values != a.values)
            .count();
        assert!(distinct >= 99);
    }

    #[test]
    fn lagged_pair_indices() {
        let r: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let (c, e) = make_lagged_pair(&r, &r, 0, 80).unwrap();
        assert_eq!(c, e);
        let (c, e) = make_lagged_pair(&r, &r, 21, 80).unwrap();
        assert_eq!(c[0], 21.0);
        assert_eq!(e[0], 0.0);
        assert_eq!(c.len(), 80);
        assert!(matches!(make_lagged_pair(&r, &r, 22, 80), Err(Error::Range(_))));
        assert!(matches!(make_lagged_pair(&r, &r, -22, 80), Err(Error::Range(_))));
        let (c, e) = make_lagged_pair(&r, &r, -3, 80).unwrap();
        assert_eq!((c[0], e[0]), (0.0, 3.0));
    }

    #[test]
    fn ideal_zero_mixin_zero_lag_pairs_are_identical() {
        let pool = toy_pool(4);
        let cfg = SynthConfig {
            mode: SynthMode::Ideal,
            mixin: 0,
            ..Default::default()
        };
        for i in 0..50 {
            let p = make_positive_pair(&pool, &cfg, &mut item_rng(3, i)).unwrap();
            if p.lag_used == 0 {
                assert_eq!(p.cause, p.effect);
            }
            assert_normalized(&p.effect, 1e-6);
            assert_normalized(&p.cause, 1e-6);
        }
    }

    #[test]
    fn mixture_is_sum_of_components() {
        let pool = toy_pool(5);
        let cfg = SynthConfig {
            mixin: 2,
            ..Default::default()
        };
        let parts = draw_positive_components(&pool, &cfg, &mut item_rng(11, 0)).unwrap();
        assert_eq!(parts.components.len(), 3);
        let pair = make_positive_pair(&pool, &cfg, &mut item_rng(11, 0)).unwrap();
        let mut manual = vec![0.0; 80];
        for c in &parts.components {
            for (m, v) in manual.iter_mut().zip(&c.effect) {
                *m += v;
            }
        }
        assert_eq!(parts.raw_effect(), manual);
        normalize_in_place(&mut manual);
        assert_eq!(pair.effect, manual);
        assert_eq!(Some(pair.cause), normalized(&parts.cause.cause));
    }

    #[test]
    fn labeled_set_sizes_and_balance() {
        let pool = toy_pool(3);
        let cfg = SynthConfig {
            set_size: 1000,
            seed: 5,
            ..Default::default()
        };
        let (train, test) = build_labeled_set(&pool, &cfg).unwrap();
        assert_eq!((train.len(), test.len()), (1800, 200));
        let positives = train.pairs.iter().chain(&test.pairs).filter(|p| p.label == 1.0).count();
        assert_eq!(positives, 1000);
        let (train2, _) = build_labeled_set(&pool, &cfg).unwrap();
        assert_eq!(train, train2);
    }

    #[test]
    fn lag_labels_and_swaps() {
        let pool = toy_pool(3);
        let cfg = SynthConfig {
            set_size: 400,
            ..Default::default()
        };
        let (train, test) = build_lag_set(&pool, &cfg).unwrap();
        for p in train.pairs.iter().chain(&test.pairs) {
            assert!((p.lag_label - p.lag as f64 / 21.0).abs() < 1e-15);
            assert!(p.lag_label.abs() <= 1.0);
            let s = p.swapped();
            assert_eq!(s.lag_label, -p.lag_label);
            assert_eq!(s.first, p.second);
        }
        assert!(train.pairs.iter().any(|p| p.lag == 21 && p.lag_label == 1.0)
            || train.pairs.iter().any(|p| p.lag == -21 && p.lag_label == -1.0));
    }
}
