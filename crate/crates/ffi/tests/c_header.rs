//! Compiles a C program against the generated header and links it to the
//! static library, then runs it.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "cpl.h"

int main(void) {
    double p = 0.0;
    if (cpl_pref_prob(2.0, 2.0, &p) != CPL_STATUS_OK || p != 0.5) return 1;
    if (cpl_opposite_sign_probability(2.0, &p) != CPL_STATUS_INVALID_ARGUMENT) return 2;
    if (cpl_last_error() == NULL) return 3;

    CplDataset *d = NULL;
    if (cpl_dataset_generate(CPL_WORLD_ULTRA_FEEDBACK, 0.5, 0.25, 50, 1, 0, &d) != CPL_STATUS_OK) return 4;
    size_t n = 0, dim = 0;
    cpl_dataset_len(d, &n);
    cpl_dataset_dim(d, &dim);
    CplModel *m = NULL;
    if (cpl_model_new(CPL_VARIANT_ADVERSARIAL, dim, 1.0, 0, &m) != CPL_STATUS_OK) return 5;
    CplAccuracy acc;
    if (cpl_model_accuracy(m, d, CPL_SLICE_KIND_OBJECTIVE, 0, &acc) != CPL_STATUS_OK) {
        printf("%s\n", cpl_last_error());
        return 6;
    }
    if (cpl_dataset_load(NULL, &d) != CPL_STATUS_NULL_POINTER) return 7;
    printf("n=%zu dim=%zu slice=%zu version=%s\n", n, dim, acc.n, cpl_version());
    cpl_model_free(m);
    cpl_dataset_free(d);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc)
        .arg("--version")
        .output()
        .ok()?
        .status
        .success()
        .then_some(cc)
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libcpl_ffi.a");
    assert!(include.join("cpl.h").exists(), "header was not generated");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "exit {:?}: {stdout}",
        out.status.code()
    );
    assert!(stdout.starts_with("n=50 dim=64 slice=50"), "{stdout}");
}
