use std::path::{Path, PathBuf};
use std::process::Command;

fn header_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().filter(|o| o.status.success()).map(|_| cc)
}

#[test]
fn header_is_valid_c_and_cpp() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let header = header_dir().join("aperture.h");
    assert!(header.exists(), "header not generated");
    for lang in ["c", "c++"] {
        let out = Command::new(&cc)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
            .unwrap();
        assert!(out.status.success(), "{lang}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header_dir().join("aperture.h")).unwrap();
    for symbol in [
        "ap_last_error",
        "ap_model_load",
        "ap_model_free",
        "ap_model_predict",
        "ap_session_new",
        "ap_session_handle_line",
        "ap_session_step",
        "ap_zone_step",
        "typedef struct ApModel ApModel",
        "typedef struct ApSession ApSession",
        "AP_STATUS_OK = 0",
    ] {
        assert!(text.contains(symbol), "missing {symbol}");
    }
}

/// Directory holding the library artifacts of this build.
fn artifact_dir() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    exe.parent()?.parent().map(Path::to_path_buf)
}

#[test]
fn c_program_links_against_static_library() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let Some(lib) = artifact_dir().map(|d| d.join("libaperture_ffi.a")).filter(|p| p.exists()) else {
        eprintln!("static library not built, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "aperture.h"

int main(void) {
    ApModel *model = NULL;
    if (ap_model_load("/nonexistent.ckpt", &model) != AP_STATUS_IO || model != NULL) return 1;
    if (ap_last_error() == NULL || strlen(ap_last_error()) == 0) return 2;
    ApZoneParams params;
    if (ap_zone_params_default(&params) != AP_STATUS_OK) return 3;
    ApZoneState state = {21.0, 1000.0, 1, 0};
    ApZoneBoundary boundary = {10.0, 0.0, 0.0};
    if (ap_zone_step(&params, &state, &boundary, 600.0) != AP_STATUS_OK) return 4;
    if (!(state.co2 < 1000.0)) return 5;
    printf("%s\n", ap_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let out = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header_dir())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "link failed: {}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
