// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_goalscope"));
    c.env_remove("GOALSCOPE_CACHE");
    c
}

/// Run with `args`, panicking with stderr on a nonzero exit.
pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn goalscope");
    assert!(out.status.success(), "goalscope {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

pub fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

/// Schema violations of `instance`, empty when it validates.
pub fn violations(schema: &str, instance: &Value) -> Vec<String> {
    let doc = read_json(&schema_dir().join(schema));
    let v = jsonschema::validator_for(&doc).unwrap_or_else(|e| panic!("{schema}: {e}"));
    v.iter_errors(instance).map(|e| format!("{e} at {}", e.instance_path)).collect()
}

pub fn assert_valid(schema: &str, path: &Path) {
    let errs = violations(schema, &read_json(path));
    assert!(errs.is_empty(), "{} vs {schema}: {errs:?}", path.display());
}

pub fn sha256_file(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

/// Sorted file names and contents of a directory.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

pub fn names(dir: &Path) -> Vec<String> {
    snapshot(dir).into_iter().map(|(n, _)| n).collect()
}

pub fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}
