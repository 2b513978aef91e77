// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod decision_probs;
pub mod heatmap;
pub mod scrub;
pub mod steer;
pub mod study;
pub mod utility;

/// Progress goes to standard error so data streams stay clean.
pub(crate) fn progress(cmd: &str, msg: impl std::fmt::Display) {
    eprintln!("[{cmd}] {msg}");
}

/// Shortest round-trip formatting with exponents for tiny values, so CSV
/// cells match the JSON outputs digit for digit.
pub(crate) fn num(v: f64) -> String {
    match serde_json::Number::from_f64(v) {
        Some(n) => n.to_string(),
        None => format!("{v}"),
    }
}

pub(crate) fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 })
}
