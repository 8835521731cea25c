use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use tabfuzz_ffi::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn last_error() -> String {
    let p = tf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take(s: *mut c_char) -> String {
    let text = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { tf_string_free(s) };
    text
}

const SPEC: &str = "<start> ::= <header> '\\n' (<row> '\\n')*\n<header> ::= 'age,job'\n<row> ::= <age> ',' <job>\n<age> ::= <digit>+\n<job> ::= 'a' | 'b'\n<digit> ::= '0' | ... | '9'\nwhere int(<age>) > 18 & int(<age>) < 70\n";

#[test]
fn spec_handle_lifecycle_and_fuzz() {
    let text = CString::new(SPEC).unwrap();
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { tf_spec_parse(text.as_ptr(), &mut spec) }, TfStatus::Ok);
    assert!(!spec.is_null());
    assert_eq!(unsafe { tf_spec_column_count(spec) }, 2);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tf_spec_fuzz_csv(spec, 4, 7, &mut out) }, TfStatus::Ok);
    let csv = take(out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "age,job");
    assert_eq!(lines.len(), 5);
    for l in &lines[1..] {
        let age: u64 = l.split(',').next().unwrap().parse().unwrap();
        assert!(age > 18 && age < 70, "{l}");
    }
    // same seed, same bytes
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { tf_spec_fuzz_csv(spec, 4, 7, &mut again) }, TfStatus::Ok);
    assert_eq!(take(again), csv);
    unsafe { tf_spec_free(spec) };
}

#[test]
fn unsatisfiable_fuzz_names_constraint() {
    let text = CString::new(SPEC.replace("< 70", "< 10")).unwrap();
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { tf_spec_parse(text.as_ptr(), &mut spec) }, TfStatus::Ok);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { tf_spec_fuzz_csv(spec, 1, 0, &mut out) }, TfStatus::Runtime);
    assert!(out.is_null());
    assert!(last_error().contains("int(<age>)"));
    unsafe { tf_spec_free(spec) };
}

#[test]
fn parse_errors_and_null_arguments() {
    let bad = CString::new("<start> ::= <missing>").unwrap();
    let mut spec = ptr::null_mut();
    assert_eq!(unsafe { tf_spec_parse(bad.as_ptr(), &mut spec) }, TfStatus::Parse);
    assert!(spec.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { tf_spec_parse(ptr::null(), &mut spec) }, TfStatus::NullPointer);
    assert_eq!(unsafe { tf_spec_fuzz_csv(ptr::null(), 1, 0, ptr::null_mut()) }, TfStatus::NullPointer);
    let invalid = [0xffu8, 0];
    assert_eq!(unsafe { tf_spec_parse(invalid.as_ptr().cast(), &mut spec) }, TfStatus::InvalidUtf8);
    unsafe {
        tf_spec_free(ptr::null_mut());
        tf_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_error() {
    let mut d = 0.0;
    assert_eq!(unsafe { tf_wasserstein_1d(ptr::null(), 0, ptr::null(), 0, &mut d) }, TfStatus::NullPointer);
    assert!(!tf_last_error().is_null());
    let a = [0.0];
    let b = [0.0, 1.0];
    assert_eq!(unsafe { tf_wasserstein_1d(a.as_ptr(), 1, b.as_ptr(), 2, &mut d) }, TfStatus::Ok);
    assert_eq!(d, 0.5);
    assert!(tf_last_error().is_null());
    assert_eq!(unsafe { tf_wasserstein_1d(a.as_ptr(), 1, b.as_ptr(), 0, &mut d) }, TfStatus::Runtime);
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(tf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn synth_and_evaluate_through_the_abi() {
    let tmp = tempfile::tempdir().unwrap();
    let config = CString::new(fixtures().join("mini_insurance.conf").to_str().unwrap()).unwrap();
    let sets: Vec<CString> =
        [format!("out={}", tmp.path().display()), "rounds=1".into()].into_iter().map(|s| CString::new(s).unwrap()).collect();
    let ptrs: Vec<*const c_char> = sets.iter().map(|s| s.as_ptr()).collect();
    assert_eq!(unsafe { tf_synth_run(config.as_ptr(), ptrs.as_ptr(), ptrs.len()) }, TfStatus::Ok);
    let synthetic = tmp.path().join("synthetic.csv");
    assert!(synthetic.exists() && tmp.path().join("run_log.csv").exists() && tmp.path().join("report.txt").exists());

    let bogus = CString::new("colour=blue").unwrap();
    let bogus_ptr = [bogus.as_ptr()];
    assert_eq!(unsafe { tf_synth_run(config.as_ptr(), bogus_ptr.as_ptr(), 1) }, TfStatus::Config);
    assert!(last_error().contains("colour"));
    assert_eq!(unsafe { tf_synth_run(config.as_ptr(), ptr::null(), 1) }, TfStatus::NullPointer);

    // evaluate writes into the config's output directory
    let eval_dir = tempfile::tempdir().unwrap();
    let conf_text = std::fs::read_to_string(fixtures().join("mini_insurance.conf"))
        .unwrap()
        .lines()
        .map(|l| if l.starts_with("out") { format!("out = {}", eval_dir.path().display()) } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let conf_path = fixtures().join(format!(".abi_eval_{}.conf", std::process::id()));
    std::fs::write(&conf_path, conf_text).unwrap();
    let conf = CString::new(conf_path.to_str().unwrap()).unwrap();
    let original = CString::new(fixtures().join("mini_insurance.csv").to_str().unwrap()).unwrap();
    let synth = CString::new(synthetic.to_str().unwrap()).unwrap();
    let mut report = ptr::null_mut();
    let status = unsafe { tf_evaluate(original.as_ptr(), synth.as_ptr(), conf.as_ptr(), &mut report) };
    std::fs::remove_file(&conf_path).unwrap();
    assert_eq!(status, TfStatus::Ok, "{}", last_error());
    let text = take(report);
    assert!(text.contains("RESEMBLANCE") && text.contains("UTILITY") && text.contains("PRIVACY"));
    assert!(eval_dir.path().join("report.csv").exists());
}

/// Compiles a small C program against the generated header and the static
/// library. Skipped when no C compiler is installed.
#[test]
fn c_program_links_against_header() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let exe = std::env::current_exe().unwrap();
    let target_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = target_dir.join("libtabfuzz_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "tabfuzz.h"
int main(void) {
    const char *text = "<start> ::= <header> '\\n' (<row> '\\n')*\n<header> ::= 'x'\n<row> ::= <x>\n<x> ::= '1' | '2'\n";
    TfSpec *spec = NULL;
    if (tf_spec_parse(text, &spec) != TF_STATUS_OK) { fprintf(stderr, "%s\n", tf_last_error()); return 1; }
    char *csv = NULL;
    if (tf_spec_fuzz_csv(spec, 3, 1, &csv) != TF_STATUS_OK) return 2;
    int lines = 0;
    for (const char *p = csv; *p; ++p) lines += *p == '\n';
    tf_string_free(csv);
    tf_spec_free(spec);
    double a[] = {0.0}, b[] = {0.0, 1.0}, d = -1.0;
    if (tf_wasserstein_1d(a, 1, b, 2, &d) != TF_STATUS_OK || d != 0.5) return 3;
    if (tf_spec_parse(NULL, &spec) != TF_STATUS_NULL_POINTER) return 4;
    printf("%d\n", lines);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4");
}
