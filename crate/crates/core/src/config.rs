//! Run configuration: built-in scale profiles overridden by a TOML file and
//! then by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoenc::AutoencoderSpec;
use crate::detectors::{CurriculumSchedule, DetectorShape, TrainingConfig};
use crate::error::{Error, Result};
use crate::gp::{SignalVariancePolicy, DEFAULT_LENGTH_SCALE};
use crate::graph::WindowPolicy;
use crate::synth::{SynthConfig, SynthMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Paper,
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub input: PathBuf,
    pub work_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSection {
    pub length_scale: f64,
    pub t_max_hours: f64,
    /// Fixed shared signal variance; when absent it is estimated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_variance: Option<f64>,
    pub subsample: usize,
}

impl GpSection {
    pub fn policy(&self) -> SignalVariancePolicy {
        match self.signal_variance {
            Some(value) => SignalVariancePolicy::Fixed { value },
            None => SignalVariancePolicy::MeanOfOptima {
                subsample: self.subsample,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub window: usize,
    pub mixin: usize,
    pub mode: SynthMode,
    pub pairs_per_class: usize,
    pub split_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub stages: Vec<usize>,
    pub epochs_per_stage: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub conv_window: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub top_genes: usize,
    pub rank_k: f64,
    pub probability_cutoffs: Vec<f64>,
    pub lag_threshold: f64,
    pub window_policy: WindowPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencSection {
    pub windows: Vec<usize>,
    pub feature_dims: Vec<usize>,
    pub witnesses: Vec<usize>,
    pub target_edges: Vec<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub occurrence_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepwideSection {
    pub genes: usize,
    pub depths: Vec<usize>,
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_degrees: Vec<usize>,
    pub max_genes: Vec<usize>,
    pub top_models: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scale: Scale,
    pub paths: Paths,
    pub gp: GpSection,
    pub synth: SynthSection,
    pub training: TrainingSection,
    pub graph: GraphSection,
    pub autoenc: AutoencSection,
    pub deepwide: DeepwideSection,
}

impl RunConfig {
    pub fn for_scale(scale: Scale) -> Self {
        let paper = scale == Scale::Paper;
        Self {
            seed: 0,
            scale,
            paths: Paths {
                input: PathBuf::from("observations.csv"),
                work_dir: PathBuf::from("work"),
                profiles: None,
            },
            gp: GpSection {
                length_scale: DEFAULT_LENGTH_SCALE,
                t_max_hours: 48.0,
                signal_variance: None,
                subsample: 200,
            },
            synth: SynthSection {
                window: 80,
                mixin: 0,
                mode: SynthMode::Noisy,
                pairs_per_class: 20_000,
                split_fraction: 0.9,
            },
            training: {
                let s = if paper {
                    CurriculumSchedule::paper()
                } else {
                    CurriculumSchedule::desk()
                };
                TrainingSection {
                    stages: s.stages,
                    epochs_per_stage: s.epochs_per_stage,
                    batch_size: s.batch_size,
                    learning_rate: 0.001,
                    conv_window: 61,
                    channels: 50,
                }
            },
            graph: GraphSection {
                top_genes: if paper { 1000 } else { 100 },
                rank_k: 2.0,
                probability_cutoffs: vec![0.7],
                lag_threshold: 0.025,
                window_policy: WindowPolicy::Centered,
            },
            autoenc: AutoencSection {
                windows: vec![31, 41, 51, 61],
                feature_dims: if paper { vec![3, 10, 30, 100] } else { vec![8] },
                witnesses: vec![1, 2, 3, 5, 10],
                target_edges: if paper { vec![100, 1000] } else { vec![100] },
                max_epochs: if paper { 1000 } else { 100 },
                batch_size: 32,
                occurrence_cap: if paper { 100_000 } else { 3_000 },
            },
            deepwide: DeepwideSection {
                genes: if paper { 1000 } else { 50 },
                depths: if paper { vec![2, 4, 6, 8, 10] } else { vec![2] },
                widths: if paper { vec![64, 256, 1024, 4096] } else { vec![16] },
                epochs: 1000,
                batch_size: 10,
                max_degrees: vec![3, 5, 10],
                max_genes: vec![100, 200, 500],
                top_models: 10,
            },
        }
    }

    /// Scale profile merged with an optional TOML file. The file's `scale`
    /// key selects the base profile unless `scale` is given.
    pub fn load(path: Option<&Path>, scale: Option<Scale>) -> Result<Self> {
        let file: toml::Table = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::MissingArtifact(p.to_path_buf()));
                }
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        let file_scale = match file.get("scale") {
            Some(toml::Value::String(s)) => Some(s.parse::<Scale>()?),
            Some(_) => return Err(Error::Config("scale must be a string".into())),
            None => None,
        };
        let scale = scale.or(file_scale).unwrap_or(Scale::Desk);
        let mut base = toml::Table::try_from(Self::for_scale(scale))
            .map_err(|e| Error::Config(format!("default profile: {e}")))?;
        merge(&mut base, file);
        base.insert("scale".into(), toml::Value::try_from(scale).map_err(|e| Error::Config(e.to_string()))?);
        let mut cfg: RunConfig = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        // Relative paths in a config file are relative to the file.
        if let Some(dir) = path.and_then(|p| p.parent()) {
            cfg.paths.input = resolve(dir, &cfg.paths.input);
            cfg.paths.work_dir = resolve(dir, &cfg.paths.work_dir);
            cfg.paths.profiles = cfg.paths.profiles.map(|p| resolve(dir, &p));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.training_config(0)?.validate()?;
        if !(self.gp.length_scale > 0.0) || !(self.gp.t_max_hours > 0.0) {
            return Err(Error::Config("gp length scale and t_max must be positive".into()));
        }
        if let Some(v) = self.gp.signal_variance {
            if !(v > 0.0) {
                return Err(Error::Config("signal variance must be positive".into()));
            }
        }
        if self.graph.probability_cutoffs.iter().any(|&c| !(c > 0.5 && c < 1.0)) {
            return Err(Error::Config("probability cutoffs must lie in (0.5, 1)".into()));
        }
        if !(self.graph.lag_threshold > 0.0 && self.graph.lag_threshold <= 1.0) {
            return Err(Error::Config("lag threshold must lie in (0, 1]".into()));
        }
        if self.autoenc.witnesses.iter().any(|&n| n == 0) || self.autoenc.target_edges.iter().any(|&t| t == 0) {
            return Err(Error::Config("witness counts and target sizes must be positive".into()));
        }
        if self.autoenc.feature_dims.iter().any(|f| !(1..=100).contains(f)) {
            return Err(Error::Config("autoencoder feature dims must lie in [1, 100]".into()));
        }
        Ok(())
    }

    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            series_length: crate::data::GRID_POINTS,
            window: self.synth.window,
            mixin: self.synth.mixin,
            mode: self.synth.mode,
            set_size: self.synth.pairs_per_class,
            split_fraction: self.synth.split_fraction,
            seed,
        }
    }

    pub fn training_config(&self, seed: u64) -> Result<TrainingConfig> {
        Ok(TrainingConfig {
            schedule: CurriculumSchedule {
                stages: self.training.stages.clone(),
                epochs_per_stage: self.training.epochs_per_stage,
                batch_size: self.training.batch_size,
            },
            synth: self.synth_config(seed),
            shape: DetectorShape {
                window: self.synth.window,
                conv_window: self.training.conv_window,
                channels: self.training.channels,
            },
            learning_rate: self.training.learning_rate,
            seed,
        })
    }

    pub fn autoencoder_specs(&self) -> Vec<AutoencoderSpec> {
        self.autoenc
            .windows
            .iter()
            .flat_map(|&window| self.autoenc.feature_dims.iter().map(move |&features| AutoencoderSpec { window, features }))
            .collect()
    }
}

fn resolve(dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || dir.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        dir.join(p)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::for_scale(Scale::Desk).validate().unwrap();
        let p = RunConfig::for_scale(Scale::Paper);
        p.validate().unwrap();
        assert_eq!(p.training.epochs_per_stage, 1000);
        assert_eq!(p.training.batch_size, 20_000);
    }

    #[test]
    fn file_overrides_profile() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 9\n[paths]\ninput = \"obs.csv\"\nwork_dir = \"out\"\n[training]\nstages = [0]\nepochs_per_stage = 3\n",
        )
        .unwrap();
        let c = RunConfig::load(Some(&path), None).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.training.stages, vec![0]);
        assert_eq!(c.training.batch_size, 512);
        assert_eq!(c.paths.input, dir.path().join("obs.csv"));
        let paper = RunConfig::load(Some(&path), Some(Scale::Paper)).unwrap();
        assert_eq!(paper.training.batch_size, 20_000);
        assert_eq!(paper.training.epochs_per_stage, 3);
    }

    #[test]
    fn bad_files_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[training]\nunknown_key = 1\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&path), None), Err(Error::Config(_))));
        std::fs::write(&path, "[graph]\nprobability_cutoffs = [0.4]\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&path), None), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::load(Some(&dir.path().join("none.toml")), None),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn serialized_config_round_trips() {
        let c = RunConfig::for_scale(Scale::Desk);
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back, c);
    }
}
