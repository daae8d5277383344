//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "rjmf.h"

#define CHECK(x) do { if ((x) != RJMF_STATUS_OK) { \
    fprintf(stderr, "%s: %s\n", #x, rjmf_last_error()); return 1; } } while (0)

int main(void) {
    const char *text = "1\t10\t5\t0\n1\t20\t3\t0\n2\t10\t4\t0\n"
                       "2\t30\t1\t0\n3\t20\t2\t0\n3\t30\t5\t0\n";
    RjmfRatings *all = NULL, *train = NULL, *test = NULL;
    CHECK(rjmf_ratings_parse((const uint8_t *)text, strlen(text), &all));
    if (rjmf_ratings_len(all) != 6) return 2;
    CHECK(rjmf_split(all, 0.5, 3, &train, &test));

    RjmfModel *m = NULL;
    CHECK(rjmf_als_fit(train, test, 1.0, 1.0, 2, 1, 50, 1e-9, &m));
    double e = -1.0;
    CHECK(rjmf_model_rmse(m, test, &e));
    if (!(e >= 0.0)) return 3;

    RjmfSamplerParams p = rjmf_sampler_params_default();
    p.k_max = 3;
    p.cooling_beta = 0.8;
    p.tmin = 0.1;
    RjmfChainResult *res = NULL;
    CHECK(rjmf_run_chain(&p, train, test, 5, &res));
    RjmfTraceRecord rec;
    CHECK(rjmf_chain_result_record(res, 0, &rec));
    if (rec.iteration != 0 || isnan(rec.test_rmse)) return 4;
    if (rjmf_chain_result_record(res, 1000, &rec) != RJMF_STATUS_INDEX_OUT_OF_RANGE) return 5;
    if (rjmf_last_error() == NULL) return 6;

    printf("ok %zu\n", rjmf_chain_result_len(res));
    rjmf_chain_result_free(res);
    rjmf_model_free(m);
    rjmf_ratings_free(train);
    rjmf_ratings_free(test);
    rjmf_ratings_free(all);
    return 0;
}
"#;

fn lib_dir() -> PathBuf {
    // target/<profile>/deps/<this test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".to_string());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler ({cc}); skipping");
        return;
    }
    let lib = lib_dir().join("librjmf_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    let bin = dir.path().join("client");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");

    let out = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "client exited {:?}: {}{}",
        out.status.code(),
        stdout,
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(stdout.trim(), "ok 11");
}
