//! Compiles and links a small C program against the generated header and
//! the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "riskdp.h"

int main(void) {
    const double xs[] = {-2.0, 1.0, 5.0};
    const double ps[] = {0.2, 0.5, 0.3};
    RiskdpDistribution *d = NULL;
    if (riskdp_distribution_new(xs, ps, 3, &d) != RISKDP_STATUS_OK) return 1;
    double v = 0.0;
    if (riskdp_cvar(d, 0.2, &v) != RISKDP_STATUS_OK || v != -2.0) return 2;
    if (riskdp_var(d, 1.0, &v) != RISKDP_STATUS_OK || !isinf(v)) return 3;
    if (riskdp_cvar(d, 2.0, &v) != RISKDP_STATUS_INVALID_ARGUMENT) return 4;
    if (riskdp_last_error_message() == NULL) return 5;
    riskdp_distribution_free(d);
    printf("ok\n");
    return 0;
}
"#;

fn profile_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = profile_dir().join("libriskdp_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("main.c");
    let binary = dir.path().join("main");
    std::fs::write(&source, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&source)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&binary)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&binary).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
}
