//! Command-line pipeline. Every command reads and writes fixed file names
//! under the configured work directory so reruns overwrite in place.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autoenc::{
    cap_occurrences, extract_occurrences, lift_to_genes, lifted_graph, rank_models, solve_threshold, tally_matches,
    train_autoencoders, AutoencoderTraining, ModelScore, TrainedAutoencoder,
};
use crate::config::{RunConfig, Scale};
use crate::data::{fittable_groups, group_by_compound, load_observations, save_observations, Condition, SeriesKey, TimeGrid};
use crate::deepwide::{
    build_change_dataset, extract_graph, rank_deepwide_models, train_deepwide, DeepWideSpec, DeepWideTraining,
    ExtractionConfig, RelativeMseReport,
};
use crate::detectors::{
    CausalityDetector, LagCalibration, LagDetector, LagStageReport, StageReport, ValidationReport,
    DEFAULT_LAG_THRESHOLDS,
};
use crate::error::{Error, Result};
use crate::gp::{fit_all, log_ratio, rank_compounds, sd_band_score, GpFitRecord, GpModel, GpSummary, RatioSeries};
use crate::graph::{
    build_correlation_reference, compare_to_reference, dot_string, import_json, load_profiles, refine_directed,
    synth_undirected, CausalGraph, PreparedInputs, ReferenceComparison, DEFAULT_REFERENCE_THRESHOLD,
};
use crate::persist::{load_json, save_json};
use crate::simulate::{simulate, write_profiles, SimulationConfig};
use crate::synth::{build_labeled_set, build_lag_set, derive_seed, normalized, GenePool, SynthMode};

#[derive(Debug, Parser)]
#[command(name = "causenet", version, about = "Causal network inference from short expression time series")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_scale)]
    pub scale: Option<Scale>,
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Observation CSV (overrides `paths.input`).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Work directory (overrides `paths.work_dir`).
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,
}

fn parse_scale(s: &str) -> std::result::Result<Scale, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Detector {
    Causality,
    Lag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Probabilistic,
    Autoenc,
    Deepwide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ideal,
    Noisy,
}

impl From<ModeArg> for SynthMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ideal => SynthMode::Ideal,
            ModeArg::Noisy => SynthMode::Noisy,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic experiment (observations, reference profiles, true cascade).
    Simulate {
        #[arg(long, default_value_t = 120)]
        compounds: usize,
        #[arg(long, default_value_t = 0.15)]
        noise_sd: f64,
        /// Output directory; defaults to the work directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit GPs, write posterior summaries, log-ratios and SD-score rankings.
    GpFit,
    /// Write the top compounds by SD-band score.
    Rank {
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        k: Option<f64>,
    },
    /// Write a synthetic training/test set.
    SynthData {
        kind: Detector,
        #[arg(long)]
        mixin: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Curriculum-train a detector.
    Train { which: Detector },
    /// Evaluate a trained detector on a fresh synthetic set.
    Validate {
        which: Detector,
        #[arg(long)]
        mixin: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Synthesize causal graphs.
    Graph { method: Method },
    /// Compare a graph with a correlation reference network.
    CompareRef {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_REFERENCE_THRESHOLD)]
        threshold: f64,
    },
}

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Parse { .. }
            | Error::Schema(_)
            | Error::Domain(_)
            | Error::Config(_)
            | Error::Usage(_)
            | Error::Range(_)
            | Error::Format(_) => 2,
            Error::Divergence { .. } => 3,
            Error::MissingArtifact(_) => 4,
            _ => 1,
        };
        Self { code, error }
    }
}

pub fn effective_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(global.config.as_deref(), global.scale)?;
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(p) = &global.input {
        cfg.paths.input = p.clone();
    }
    if let Some(p) = &global.work_dir {
        cfg.paths.work_dir = p.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> std::result::Result<(), CliError> {
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be at least 1".into()).into());
        }
        // Fails only if a pool already exists, which is fine for embedded use.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = effective_config(&cli.global)?;
    match cli.command {
        Command::Simulate { compounds, noise_sd, out } => {
            cmd_simulate(&cfg, compounds, noise_sd, out.as_deref().unwrap_or(&cfg.paths.work_dir))?
        }
        Command::GpFit => cmd_gp_fit(&cfg)?,
        Command::Rank { top, k } => cmd_rank(&cfg, top.unwrap_or(cfg.graph.top_genes), k.unwrap_or(cfg.graph.rank_k))?,
        Command::SynthData { kind, mixin, mode } => cmd_synth_data(&cfg, kind, mixin, mode)?,
        Command::Train { which } => cmd_train(&cfg, which)?,
        Command::Validate { which, mixin, mode } => cmd_validate(&cfg, which, mixin, mode)?,
        Command::Graph { method } => cmd_graph(&cfg, method)?,
        Command::CompareRef {
            graph,
            profiles,
            threshold,
        } => cmd_compare_ref(&cfg, &graph, profiles.as_deref(), threshold)?,
    }
    Ok(())
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        ensure_dir(d)?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(d) = path.parent() {
        ensure_dir(d)?;
    }
    save_json(path, value)
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

/// Artifact locations inside the work directory.
pub mod layout {
    use std::path::{Path, PathBuf};

    pub fn gp_fits(w: &Path) -> PathBuf {
        w.join("gp").join("fits.json")
    }
    pub fn summaries(w: &Path) -> PathBuf {
        w.join("gp").join("summaries.csv")
    }
    pub fn ratios(w: &Path) -> PathBuf {
        w.join("gp").join("ratios.csv")
    }
    pub fn ranking(w: &Path, k: f64) -> PathBuf {
        w.join("gp").join(format!("ranking_k{k}.csv"))
    }
    pub fn selected(w: &Path) -> PathBuf {
        w.join("gp").join("selected_genes.txt")
    }
    pub fn model(w: &Path, which: &str) -> PathBuf {
        w.join("models").join(format!("{which}.json"))
    }
    pub fn report(w: &Path, which: &str) -> PathBuf {
        w.join("models").join(format!("{which}_report.json"))
    }
    pub fn graphs(w: &Path) -> PathBuf {
        w.join("graphs")
    }
}

fn cmd_simulate(cfg: &RunConfig, compounds: usize, noise_sd: f64, out: &Path) -> Result<()> {
    let sim = simulate(&SimulationConfig {
        compounds,
        noise_sd,
        seed: cfg.seed,
        ..SimulationConfig::default()
    })?;
    ensure_dir(out)?;
    save_observations(out.join("observations.csv"), &sim.observations)?;
    let mut buf = Vec::new();
    write_profiles(&mut buf, &sim.profiles)?;
    write_text(&out.join("profiles.csv"), &String::from_utf8_lossy(&buf))?;
    let truth: Vec<[String; 2]> = sim.true_edges().into_iter().map(|(a, b)| [a, b]).collect();
    write_json(&out.join("true_edges.json"), &truth)?;
    log::info!("simulated {compounds} compounds into {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpFitFile {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub t_max_hours: f64,
    pub fits: Vec<GpFitRecord>,
}

/// Fitted GP state rebuilt from the work directory.
pub struct GpState {
    pub grid: TimeGrid,
    pub models: BTreeMap<SeriesKey, GpModel>,
    pub summaries: BTreeMap<SeriesKey, GpSummary>,
    pub ratios: BTreeMap<String, RatioSeries>,
}

impl GpState {
    pub fn load(work: &Path) -> Result<Self> {
        let file: GpFitFile = load_json(require(layout::gp_fits(work))?)?;
        let grid = TimeGrid::new(file.t_max_hours)?;
        let mut models = BTreeMap::new();
        for r in &file.fits {
            models.insert((r.compound_id.clone(), r.condition), r.rebuild()?);
        }
        Self::from_models(grid, models)
    }

    pub fn from_models(grid: TimeGrid, models: BTreeMap<SeriesKey, GpModel>) -> Result<Self> {
        let summaries: BTreeMap<SeriesKey, GpSummary> =
            models.iter().map(|(k, m)| (k.clone(), m.posterior(&grid))).collect();
        let mut ratios = BTreeMap::new();
        for ((id, cond), treated) in &summaries {
            if *cond != Condition::Treated {
                continue;
            }
            if let Some(control) = summaries.get(&(id.clone(), Condition::Control)) {
                ratios.insert(id.clone(), log_ratio(treated, control)?);
            }
        }
        Ok(Self {
            grid,
            models,
            summaries,
            ratios,
        })
    }

    pub fn scores(&self, k: f64) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for id in self.ratios.keys() {
            let u = &self.summaries[&(id.clone(), Condition::Treated)];
            let c = &self.summaries[&(id.clone(), Condition::Control)];
            out.insert(id.clone(), sd_band_score(u, c, k, &self.grid)?);
        }
        Ok(out)
    }

    fn ranking(&self, k: f64) -> Result<Vec<(String, f64)>> {
        let scores = self.scores(k)?;
        Ok(rank_compounds(&scores, scores.len())
            .into_iter()
            .map(|id| {
                let s = scores[&id];
                (id, s)
            })
            .collect())
    }
}

fn ranking_csv(ranking: &[(String, f64)]) -> String {
    let mut s = String::from("rank,compound_id,score\n");
    for (i, (id, v)) in ranking.iter().enumerate() {
        let _ = writeln!(s, "{},{id},{v}", i + 1);
    }
    s
}

fn cmd_gp_fit(cfg: &RunConfig) -> Result<()> {
    let input = &cfg.paths.input;
    if !input.exists() {
        return Err(Error::Usage(format!("input file not found: {}", input.display())));
    }
    let records = load_observations(input)?;
    let groups = fittable_groups(group_by_compound(&records)?);
    if groups.is_empty() {
        return Err(Error::Domain(format!("{}: no fittable series", input.display())));
    }
    let grid = TimeGrid::new(cfg.gp.t_max_hours)?;
    let (signal, models) = fit_all(&groups, cfg.gp.policy(), cfg.gp.length_scale, derive_seed(cfg.seed, 10))?;
    let work = &cfg.paths.work_dir;
    write_json(
        &layout::gp_fits(work),
        &GpFitFile {
            length_scale: cfg.gp.length_scale,
            signal_variance: signal,
            t_max_hours: cfg.gp.t_max_hours,
            fits: models.values().map(GpModel::to_record).collect(),
        },
    )?;
    let state = GpState::from_models(grid, models)?;
    let pts = state.grid.points();
    let mut s = String::from("compound_id,condition,grid_index,log_time,mean,sd\n");
    for ((id, cond), sum) in &state.summaries {
        for i in 0..pts.len() {
            let _ = writeln!(s, "{id},{cond},{i},{},{},{}", pts[i], sum.mean[i], sum.sd[i]);
        }
    }
    write_text(&layout::summaries(work), &s)?;
    let mut s = String::from("compound_id,grid_index,log_time,log_ratio\n");
    for (id, r) in &state.ratios {
        for (i, v) in r.values.iter().enumerate() {
            let _ = writeln!(s, "{id},{i},{},{v}", pts[i]);
        }
    }
    write_text(&layout::ratios(work), &s)?;
    for k in [1.0, 2.0] {
        write_text(&layout::ranking(work, k), &ranking_csv(&state.ranking(k)?))?;
    }
    log::info!(
        "fitted {} series ({} compounds with log-ratios), signal variance {signal:.4}",
        state.summaries.len(),
        state.ratios.len()
    );
    Ok(())
}

fn cmd_rank(cfg: &RunConfig, top: usize, k: f64) -> Result<()> {
    let state = GpState::load(&cfg.paths.work_dir)?;
    let mut s = String::new();
    for (id, _) in state.ranking(k)?.into_iter().take(top) {
        s.push_str(&id);
        s.push('\n');
    }
    write_text(&layout::selected(&cfg.paths.work_dir), &s)
}

fn gene_pool(cfg: &RunConfig) -> Result<GenePool> {
    let state = GpState::load(&cfg.paths.work_dir)?;
    GenePool::from_models(&state.models, &state.grid)
}

fn mode_name(mode: SynthMode) -> &'static str {
    match mode {
        SynthMode::Ideal => "ideal",
        SynthMode::Noisy => "noisy",
    }
}

fn detector_name(d: Detector) -> &'static str {
    match d {
        Detector::Causality => "causality",
        Detector::Lag => "lag",
    }
}

fn cmd_synth_data(cfg: &RunConfig, kind: Detector, mixin: Option<usize>, mode: Option<ModeArg>) -> Result<()> {
    let pool = gene_pool(cfg)?;
    let mut synth = cfg.synth_config(derive_seed(cfg.seed, 20));
    synth.mixin = mixin.unwrap_or(synth.mixin);
    synth.mode = mode.map(SynthMode::from).unwrap_or(synth.mode);
    let dir = cfg.paths.work_dir.join("synth");
    let stem = format!("{}_m{}_{}", detector_name(kind), synth.mixin, mode_name(synth.mode));
    match kind {
        Detector::Causality => {
            let (train, test) = build_labeled_set(&pool, &synth)?;
            write_json(&dir.join(format!("{stem}_train.json")), &train)?;
            write_json(&dir.join(format!("{stem}_test.json")), &test)?;
        }
        Detector::Lag => {
            let (train, test) = build_lag_set(&pool, &synth)?;
            write_json(&dir.join(format!("{stem}_train.json")), &train)?;
            write_json(&dir.join(format!("{stem}_test.json")), &test)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleEcho {
    pub stages: Vec<usize>,
    pub epochs_per_stage: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: SynthMode,
    pub pairs_per_class: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalityTrainingReport {
    pub schedule: ScheduleEcho,
    pub stages: Vec<StageReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagTrainingReport {
    pub schedule: ScheduleEcho,
    pub stages: Vec<LagStageReport>,
}

fn cmd_train(cfg: &RunConfig, which: Detector) -> Result<()> {
    let pool = gene_pool(cfg)?;
    let tc = cfg.training_config(cfg.seed)?;
    let echo = ScheduleEcho {
        stages: tc.schedule.stages.clone(),
        epochs_per_stage: tc.schedule.epochs_per_stage,
        batch_size: tc.schedule.batch_size,
        learning_rate: tc.learning_rate,
        seed: tc.seed,
        mode: tc.synth.mode,
        pairs_per_class: tc.synth.set_size,
    };
    let work = &cfg.paths.work_dir;
    let name = detector_name(which);
    ensure_dir(&work.join("models"))?;
    match which {
        Detector::Causality => {
            let (model, stages) = crate::detectors::train_causality(&pool, &tc)?;
            model.save(layout::model(work, name))?;
            let mut roc = String::from("stage,m,false_positive_rate,true_positive_rate\n");
            for s in &stages {
                for (fpr, tpr) in &s.roc {
                    let _ = writeln!(roc, "{},{},{fpr},{tpr}", s.stage, s.m);
                }
            }
            write_text(&work.join("models").join("causality_roc.csv"), &roc)?;
            write_json(&layout::report(work, name), &CausalityTrainingReport { schedule: echo, stages })?;
        }
        Detector::Lag => {
            let (model, stages) = crate::detectors::train_lag(&pool, &tc)?;
            model.save(layout::model(work, name))?;
            let mut cal = String::from("stage,m,threshold,direction_precision,coverage\n");
            for s in &stages {
                for c in &s.calibration {
                    let p = c.direction_precision.map(|v| v.to_string()).unwrap_or_default();
                    let _ = writeln!(cal, "{},{},{},{p},{}", s.stage, s.m, c.threshold, c.coverage);
                }
            }
            write_text(&work.join("models").join("lag_calibration.csv"), &cal)?;
            write_json(&layout::report(work, name), &LagTrainingReport { schedule: echo, stages })?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagValidation {
    pub test_mse: f64,
    pub calibration: Vec<LagCalibration>,
}

fn cmd_validate(cfg: &RunConfig, which: Detector, mixin: Option<usize>, mode: Option<ModeArg>) -> Result<()> {
    let work = &cfg.paths.work_dir;
    let name = detector_name(which);
    let model_path = require(layout::model(work, name))?;
    let pool = gene_pool(cfg)?;
    let mut synth = cfg.synth_config(derive_seed(cfg.seed, 40));
    synth.mixin = mixin.unwrap_or(synth.mixin);
    synth.mode = mode.map(SynthMode::from).unwrap_or(synth.mode);
    // The whole fresh set is held out.
    synth.split_fraction = 1.0;
    let out = work
        .join("reports")
        .join(format!("validate_{name}_m{}_{}.json", synth.mixin, mode_name(synth.mode)));
    match which {
        Detector::Causality => {
            let model = CausalityDetector::load(model_path)?;
            let (set, _) = build_labeled_set(&pool, &synth)?;
            let report: ValidationReport = model.evaluate(&set, &[0.5])?;
            log::info!("accuracy {:.4}, auc {:.4}", report.accuracy, report.auc);
            write_json(&out, &report)
        }
        Detector::Lag => {
            let model = LagDetector::load(model_path)?;
            let (set, _) = build_lag_set(&pool, &synth)?;
            let scores = model.scores(&set)?;
            let lags: Vec<f64> = set.pairs.iter().map(|p| p.lag_label).collect();
            let test_mse = scores.iter().zip(&lags).map(|(s, l)| (s - l).powi(2)).sum::<f64>() / lags.len() as f64;
            let calibration = crate::detectors::calibrate_lag_threshold(&scores, &lags, &DEFAULT_LAG_THRESHOLDS)?;
            write_json(&out, &LagValidation { test_mse, calibration })
        }
    }
}

/// Provenance written next to every set of graphs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphMetadata {
    pub method: String,
    pub seed: u64,
    pub gene_subset: Vec<String>,
    pub files: Vec<String>,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction_precision: Option<f64>,
}

fn write_graph(dir: &Path, stem: &str, graph: &CausalGraph, files: &mut Vec<String>) -> Result<()> {
    graph.validate()?;
    write_text(&dir.join(format!("{stem}.dot")), &dot_string(graph))?;
    write_json(&dir.join(format!("{stem}.json")), graph)?;
    files.push(format!("{stem}.dot"));
    files.push(format!("{stem}.json"));
    Ok(())
}

fn cmd_graph(cfg: &RunConfig, method: Method) -> Result<()> {
    let work = &cfg.paths.work_dir;
    let state = GpState::load(work)?;
    let ranking = state.ranking(cfg.graph.rank_k)?;
    let dir = layout::graphs(work);
    ensure_dir(&dir)?;
    let (name, files, subset, precision) = match method {
        Method::Probabilistic => {
            let subset: Vec<String> = ranking.iter().take(cfg.graph.top_genes).map(|r| r.0.clone()).collect();
            let (files, p) = graph_probabilistic(cfg, &state, &subset, &dir)?;
            ("probabilistic", files, subset, p)
        }
        Method::Autoenc => {
            let subset: Vec<String> = ranking.iter().take(cfg.graph.top_genes).map(|r| r.0.clone()).collect();
            ("autoenc", graph_autoenc(cfg, &state, &subset, &dir)?, subset, None)
        }
        Method::Deepwide => {
            let subset: Vec<String> = ranking.iter().take(cfg.deepwide.genes).map(|r| r.0.clone()).collect();
            ("deepwide", graph_deepwide(cfg, &state, &subset, &dir)?, subset, None)
        }
    };
    write_json(
        &dir.join(format!("{name}_metadata.json")),
        &GraphMetadata {
            method: name.into(),
            seed: cfg.seed,
            gene_subset: subset,
            files,
            config: cfg.clone(),
            direction_precision: precision,
        },
    )
}

fn graph_probabilistic(
    cfg: &RunConfig,
    state: &GpState,
    subset: &[String],
    dir: &Path,
) -> Result<(Vec<String>, Option<f64>)> {
    let work = &cfg.paths.work_dir;
    let causality = CausalityDetector::load(require(layout::model(work, "causality"))?)?;
    let lag = LagDetector::load(require(layout::model(work, "lag"))?)?;
    let report: LagTrainingReport = load_json(require(layout::report(work, "lag"))?)?;
    let calibration = report.stages.last().map(|s| s.calibration.clone()).unwrap_or_default();
    let prepared = PreparedInputs::new(&state.ratios, subset, cfg.graph.window_policy, cfg.synth.window)?;
    let sd = state.scores(cfg.graph.rank_k)?;
    let tau = cfg.graph.lag_threshold;
    let mut files = Vec::new();
    for &cutoff in &cfg.graph.probability_cutoffs {
        let undirected = synth_undirected(&causality, &prepared, &sd, cutoff)?;
        let directed = refine_directed(&undirected, &lag, &prepared, tau, &calibration)?;
        let stem = format!("probabilistic_c{cutoff:.2}");
        write_graph(dir, &format!("{stem}_undirected"), &undirected, &mut files)?;
        write_graph(dir, &format!("{stem}_directed"), &directed, &mut files)?;
    }
    Ok((files, crate::detectors::precision_at(&calibration, tau)))
}

fn autoenc_stem(window: usize, features: usize, n: usize, target: usize) -> String {
    format!("autoenc_w{window}_f{features}_n{n}_e{target}")
}

fn graph_autoenc(cfg: &RunConfig, state: &GpState, subset: &[String], dir: &Path) -> Result<Vec<String>> {
    let a = &cfg.autoenc;
    let mut genes: Vec<(String, Vec<f64>)> = Vec::new();
    for g in subset {
        if let Some(v) = state.ratios.get(g).and_then(|r| normalized(&r.values)) {
            genes.push((g.clone(), v));
        }
    }
    genes.sort_by(|x, y| x.0.cmp(&y.0));
    let mut files = Vec::new();
    if genes.is_empty() {
        log::warn!("empty gene subset; writing empty autoencoder graphs");
        for spec in cfg.autoencoder_specs() {
            for &n in &a.witnesses {
                for &t in &a.target_edges {
                    write_graph(dir, &autoenc_stem(spec.window, spec.features, n, t), &CausalGraph::default(), &mut files)?;
                }
            }
        }
        return Ok(files);
    }
    let series: Vec<Vec<f64>> = genes.iter().map(|g| g.1.clone()).collect();
    let training = AutoencoderTraining {
        max_epochs: a.max_epochs,
        batch_size: a.batch_size,
        seed: derive_seed(cfg.seed, 50),
        ..AutoencoderTraining::default()
    };
    let trained = train_autoencoders(&series, &cfg.autoencoder_specs(), &training)?;
    let mut models: Vec<TrainedAutoencoder> = Vec::new();
    for (spec, r) in trained {
        match r {
            Ok(m) => models.push(m),
            Err(e) => log::warn!("autoencoder {spec:?} failed: {e}"),
        }
    }
    let mut scores = Vec::new();
    let mut occ_by_model = Vec::new();
    for (k, m) in models.iter().enumerate() {
        let occ = cap_occurrences(extract_occurrences(m, &genes)?, a.occurrence_cap, derive_seed(cfg.seed, 60 + k as u64));
        for &n in &a.witnesses {
            let t = solve_threshold(&occ, n, a.target_edges[0])?;
            scores.push(ModelScore {
                window: m.spec.window,
                feature_dim: m.spec.features,
                n,
                reconstruction_mse: m.validation_mse,
                consistency: tally_matches(&occ, t).consistency(),
                rank: 0,
                selected: false,
            });
        }
        occ_by_model.push(occ);
    }
    rank_models(&mut scores);
    let mut csv = String::from("rank,window,feature_dim,n,reconstruction_mse,consistency,selected\n");
    for s in &scores {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            s.rank, s.window, s.feature_dim, s.n, s.reconstruction_mse, s.consistency, s.selected
        );
    }
    write_text(&dir.join("autoenc_ranking.csv"), &csv)?;
    files.push("autoenc_ranking.csv".into());
    for s in scores.iter().filter(|s| s.selected) {
        let k = models
            .iter()
            .position(|m| m.spec.window == s.window && m.spec.features == s.feature_dim)
            .expect("scored model exists");
        for &target in &a.target_edges {
            let occ = &occ_by_model[k];
            let t = solve_threshold(occ, s.n, target)?;
            let g = lifted_graph(&lift_to_genes(&tally_matches(occ, t), s.n));
            write_graph(dir, &autoenc_stem(s.window, s.feature_dim, s.n, target), &g, &mut files)?;
        }
    }
    Ok(files)
}

fn graph_deepwide(cfg: &RunConfig, state: &GpState, subset: &[String], dir: &Path) -> Result<Vec<String>> {
    use rayon::prelude::*;

    let d = &cfg.deepwide;
    let mut files = Vec::new();
    let stem = |depth: usize, width: usize, deg: usize, g: usize| format!("deepwide_d{depth}_w{width}_deg{deg}_g{g}");
    let genes: Vec<String> = subset.iter().filter(|g| state.ratios.contains_key(*g)).cloned().collect();
    let grid: Vec<(usize, usize)> = d.depths.iter().flat_map(|&a| d.widths.iter().map(move |&b| (a, b))).collect();
    let mut ranking_csv = String::from("depth,width,train_mse,test_mse,relative_test_mse\n");
    if genes.is_empty() {
        log::warn!("empty gene subset; writing empty deep-wide graphs");
        write_text(&dir.join("deepwide_ranking.csv"), &ranking_csv)?;
        files.push("deepwide_ranking.csv".into());
        for &(depth, width) in grid.iter().take(d.top_models) {
            for &deg in &d.max_degrees {
                for &g in &d.max_genes {
                    write_graph(dir, &stem(depth, width, deg, g), &CausalGraph::default(), &mut files)?;
                }
            }
        }
        return Ok(files);
    }
    let series: Vec<Vec<f64>> = genes.iter().map(|g| state.ratios[g].values.clone()).collect();
    let data = build_change_dataset(&genes, &series, 0.9)?;
    let trained: Vec<Result<(crate::nn::ModelWeights, RelativeMseReport, DeepWideSpec)>> = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(depth, width))| {
            let spec = DeepWideSpec {
                depth,
                width,
                genes: genes.len(),
            };
            let train = DeepWideTraining {
                epochs: d.epochs,
                batch_size: d.batch_size,
                seed: derive_seed(cfg.seed, 70 + k as u64),
                ..DeepWideTraining::default()
            };
            let (w, r) = train_deepwide(&spec, &data, &train)?;
            Ok((w, r, spec))
        })
        .collect();
    let mut models = Vec::new();
    for t in trained {
        models.push(t?);
    }
    let mut reports: Vec<RelativeMseReport> = models.iter().map(|m| m.1.clone()).collect();
    rank_deepwide_models(&mut reports);
    for r in &reports {
        let test = r.test.as_ref().map(|t| t.model_mse.to_string()).unwrap_or_default();
        let rel = r.relative_test().map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(ranking_csv, "{},{},{},{test},{rel}", r.depth, r.width, r.train.model_mse);
    }
    write_text(&dir.join("deepwide_ranking.csv"), &ranking_csv)?;
    files.push("deepwide_ranking.csv".into());
    for r in reports.iter().take(d.top_models) {
        let (w, _, spec) = models
            .iter()
            .find(|m| m.2.depth == r.depth && m.2.width == r.width)
            .expect("ranked model exists");
        for &deg in &d.max_degrees {
            for &g in &d.max_genes {
                let ex = ExtractionConfig {
                    max_degree: deg,
                    max_genes: g,
                    gene_subset: subset.to_vec(),
                };
                let graph = extract_graph(w, spec, &genes, &ex)?;
                write_graph(dir, &stem(r.depth, r.width, deg, g), &graph, &mut files)?;
            }
        }
    }
    Ok(files)
}

fn cmd_compare_ref(cfg: &RunConfig, graph: &Path, profiles: Option<&Path>, threshold: f64) -> Result<()> {
    let g = import_json(require(graph.to_path_buf())?)?;
    let profiles = profiles
        .map(Path::to_path_buf)
        .or_else(|| cfg.paths.profiles.clone())
        .ok_or_else(|| Error::Config("no reference profiles given (--profiles or paths.profiles)".into()))?;
    let reference = build_correlation_reference(&load_profiles(require(profiles)?)?, threshold)?;
    let cmp: ReferenceComparison = compare_to_reference(&g, &reference);
    let stem = graph.file_stem().and_then(|s| s.to_str()).unwrap_or("graph");
    write_json(&cfg.paths.work_dir.join("reports").join(format!("compare_{stem}.json")), &cmp)?;
    println!(
        "{}: {} of {} edges in the reference ({})",
        stem,
        cmp.overlap,
        cmp.restricted_edges,
        cmp.accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}
