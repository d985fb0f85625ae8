use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use causenet::cli::{CausalityTrainingReport, GraphMetadata};
use causenet::graph::CausalGraph;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causenet"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dest = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dest);
        } else {
            std::fs::copy(&p, &dest).unwrap();
        }
    }
}

const BASE_CONFIG: &str = r#"
seed = 3
[paths]
input = "data/observations.csv"
work_dir = "work"
[synth]
pairs_per_class = 100
[training]
stages = [0]
epochs_per_stage = 1
batch_size = 64
"#;

/// Simulated data with GP fits, built once and copied per test.
fn fitted() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), BASE_CONFIG).unwrap();
        ok(dir.path(), &["--config", "run.toml", "simulate", "--compounds", "24", "--out", "data"]);
        ok(dir.path(), &["--config", "run.toml", "gp-fit"]);
        dir
    })
    .path()
}

fn workspace(config: Option<&str>) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(fitted(), dir.path());
    if let Some(c) = config {
        std::fs::write(dir.path().join("run.toml"), c).unwrap();
    }
    dir
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["--input", "nowhere/obs.csv", "--work-dir", "w", "gp-fit"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere/obs.csv"));
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("obs.csv"), "compound_id,condition\nC1,treated\n").unwrap();
    let out = run(dir.path(), &["--input", "obs.csv", "--work-dir", "w", "gp-fit"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[graph]\ntop_genez = 5\n").unwrap();
    let out = run(dir.path(), &["--config", "bad.toml", "rank"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_model_exits_4() {
    let dir = workspace(None);
    let out = run(dir.path(), &["--config", "run.toml", "validate", "lag"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lag.json"));
}

#[test]
fn summaries_and_rankings_are_well_formed() {
    let dir = workspace(None);
    ok(dir.path(), &["--config", "run.toml", "rank", "--top", "10", "--k", "1"]);
    let gp = dir.path().join("work/gp");
    // One summary curve per compound and condition.
    let rows = csv_rows(gp.join("summaries.csv"));
    let mut groups: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    groups.dedup();
    let distinct: std::collections::BTreeSet<_> = groups.iter().cloned().collect();
    assert_eq!(groups.len(), distinct.len());
    assert_eq!(rows.len(), groups.len() * 101);
    for k in [1, 2] {
        let scores: Vec<f64> = csv_rows(gp.join(format!("ranking_k{k}.csv"))).iter().map(|r| r[2].parse().unwrap()).collect();
        assert!(!scores.is_empty());
        assert!(scores.windows(2).all(|w| w[0] >= w[1]), "k={k} ranking not descending");
    }
    let selected = std::fs::read_to_string(gp.join("selected_genes.txt")).unwrap();
    let top: Vec<String> = csv_rows(gp.join("ranking_k1.csv")).iter().take(10).map(|r| r[1].clone()).collect();
    assert_eq!(selected.lines().collect::<Vec<_>>(), top);
}

#[test]
fn empty_gene_subset_gives_empty_graphs() {
    let config = format!("{BASE_CONFIG}[graph]\ntop_genes = 0\n[deepwide]\ngenes = 0\n");
    let dir = workspace(Some(&config));
    ok(dir.path(), &["--config", "run.toml", "train", "causality"]);
    ok(dir.path(), &["--config", "run.toml", "train", "lag"]);
    for method in ["probabilistic", "autoenc", "deepwide"] {
        ok(dir.path(), &["--config", "run.toml", "graph", method]);
        let meta: GraphMetadata =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("work/graphs/{method}_metadata.json"))).unwrap())
                .unwrap();
        assert!(meta.gene_subset.is_empty());
        assert!(!meta.files.is_empty(), "{method} wrote no graph files");
        for f in meta.files.iter().filter(|f| f.ends_with(".json")) {
            let g: CausalGraph = serde_json::from_str(&std::fs::read_to_string(dir.path().join("work/graphs").join(f)).unwrap()).unwrap();
            assert!(g.undirected_edges.is_empty() && g.directed_edges.is_empty(), "{f} is not empty");
        }
    }
}

#[test]
fn metadata_config_round_trips() {
    let config = format!("{BASE_CONFIG}[deepwide]\ngenes = 8\nepochs = 5\n");
    let dir = workspace(Some(&config));
    ok(dir.path(), &["--config", "run.toml", "graph", "deepwide"]);
    let text = std::fs::read_to_string(dir.path().join("work/graphs/deepwide_metadata.json")).unwrap();
    let meta: GraphMetadata = serde_json::from_str(&text).unwrap();
    meta.config.validate().unwrap();
    assert_eq!(meta.seed, 3);
    assert_eq!(meta.config.deepwide.genes, 8);
    assert_eq!(meta.gene_subset.len(), 8);
    // Feeding the echoed configuration back reproduces the same graphs.
    let echoed = toml::to_string(&meta.config).unwrap();
    std::fs::write(dir.path().join("echo.toml"), echoed).unwrap();
    ok(dir.path(), &["--config", "echo.toml", "graph", "deepwide"]);
    assert_eq!(std::fs::read_to_string(dir.path().join("work/graphs/deepwide_metadata.json")).unwrap(), text);
}

#[test]
fn paper_profile_is_echoed_into_the_training_report() {
    let config = r#"
seed = 3
[paths]
input = "data/observations.csv"
work_dir = "work"
[synth]
pairs_per_class = 20
[training]
stages = [0]
"#;
    let dir = workspace(Some(config));
    ok(dir.path(), &["--config", "run.toml", "--scale", "paper", "train", "causality"]);
    let report: CausalityTrainingReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("work/models/causality_report.json")).unwrap()).unwrap();
    assert_eq!(report.schedule.epochs_per_stage, 1000);
    assert_eq!(report.schedule.batch_size, 20_000);
    assert_eq!(report.schedule.stages, vec![0]);
}

fn files(dir: &Path) -> std::collections::BTreeMap<PathBuf, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            for (k, v) in files(&p) {
                out.insert(Path::new(p.file_name().unwrap()).join(k), v);
            }
        } else {
            out.insert(PathBuf::from(p.file_name().unwrap()), std::fs::read(&p).unwrap());
        }
    }
    out
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let config = format!("{BASE_CONFIG}[graph]\ntop_genes = 20\n[autoenc]\nmax_epochs = 5\n[deepwide]\ngenes = 12\nepochs = 20\n");
    let mut snapshots = Vec::new();
    for workers in ["1", "3"] {
        let dir = workspace(Some(&config));
        std::fs::remove_dir_all(dir.path().join("work")).unwrap();
        for step in [
            vec!["gp-fit"],
            vec!["synth-data", "causality", "--mixin", "2"],
            vec!["train", "lag"],
            vec!["graph", "autoenc"],
            vec!["graph", "deepwide"],
        ] {
            let mut args = vec!["--config", "run.toml", "--workers", workers];
            args.extend(step);
            ok(dir.path(), &args);
        }
        snapshots.push(files(&dir.path().join("work")));
    }
    assert!(snapshots[0].keys().eq(snapshots[1].keys()));
    for (k, v) in &snapshots[0] {
        assert!(snapshots[1][k] == *v, "{} differs between worker counts", k.display());
    }
}
