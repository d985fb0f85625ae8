//! Compiles a small C program against the generated header and static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "causenet.h"

int main(void) {
    double t[3] = {0.0, 1.0, 2.0};
    double y[3] = {0.0, 1.0, 2.0};
    CnGpModel *m = NULL;
    if (cn_gp_fit(t, y, 3, 1.0, 2.0, 0.01, &m) != CN_OK) { fprintf(stderr, "%s\n", cn_last_error()); return 1; }
    double mean, var;
    if (cn_gp_predict(m, 1.0, &mean, &var) != CN_OK) return 2;
    cn_gp_free(m);
    if (fabs(mean - 1.0) > 0.1) return 3;
    CnCausalityDetector *c = NULL;
    if (cn_causality_new(20, 7, 4, 1, &c) != CN_OK) return 4;
    double a[20], b[20], p, q;
    for (int i = 0; i < 20; i++) { a[i] = i * 0.1; b[i] = (i % 5) * 0.2; }
    cn_causality_predict(c, a, b, 20, &p);
    cn_causality_predict(c, b, a, 20, &q);
    cn_causality_free(c);
    if (p != q || p <= 0.0 || p >= 1.0) return 5;
    if (cn_causality_load("/nonexistent/model.json", &c) != CN_MISSING_ARTIFACT) return 6;
    printf("ok %s\n", cn_version());
    return 0;
}
"#;

fn static_lib() -> Option<PathBuf> {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| manifest.join("../../target"));
    ["debug", "release"]
        .iter()
        .map(|p| target.join(p).join("libcausenet_ffi.a"))
        .filter(|p| p.exists())
        .max_by_key(|p| std::fs::metadata(p).and_then(|m| m.modified()).ok())
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
