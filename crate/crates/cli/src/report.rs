//! JSON reports. Key order follows struct field order and maps are sorted, so
//! identical inputs always serialize to identical bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use ttaverify::protocol::{render_table, DeltaReport, VerificationRun};
use ttaverify::synthworld::{AblationTable, FlipAblation};

pub const REPORT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn new(path: &std::path::Path, bytes: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        }
    }
}

pub type Inputs = BTreeMap<String, InputDigest>;
pub type ResolvedConfig = BTreeMap<String, Value>;

/// Everything of a [`VerificationRun`] except the per-pair scores, which
/// already live in the score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSummary {
    pub n_pairs: usize,
    pub fold_sizes: Vec<usize>,
    pub fold_thresholds: Vec<f64>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub mean_accuracy_pct: f64,
    pub fallback_rate: f64,
}

impl RunSummary {
    pub fn from_run(run: &VerificationRun) -> Self {
        Self {
            n_pairs: run.n_pairs,
            fold_sizes: run.fold_sizes.clone(),
            fold_thresholds: run.fold_thresholds.clone(),
            fold_accuracies: run.fold_accuracies.clone(),
            mean_accuracy: run.mean_accuracy,
            mean_accuracy_pct: run.mean_accuracy_pct(),
            fallback_rate: run.fallback_rate,
        }
    }

    pub fn to_run(&self) -> VerificationRun {
        VerificationRun {
            n_pairs: self.n_pairs,
            fold_sizes: self.fold_sizes.clone(),
            scores: Vec::new(),
            fold_thresholds: self.fold_thresholds.clone(),
            fold_accuracies: self.fold_accuracies.clone(),
            mean_accuracy: self.mean_accuracy,
            fallback_rate: self.fallback_rate,
        }
    }
}

/// Output of `verify` and `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub version: u32,
    pub command: String,
    pub dataset: String,
    pub label: String,
    pub config: ResolvedConfig,
    pub inputs: Inputs,
    pub result: RunSummary,
    pub table: String,
}

impl VerifyReport {
    pub fn table_for(dataset: &str, label: &str, run: &RunSummary) -> String {
        render_table(
            &[dataset.to_string()],
            &[(label.to_string(), vec![Some(run.mean_accuracy_pct)])],
            &[false],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareReport {
    pub version: u32,
    pub command: String,
    pub dataset: String,
    pub candidate: String,
    pub reference: String,
    pub inputs: Inputs,
    pub delta: DeltaReport,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblateWeightsReport {
    pub version: u32,
    pub command: String,
    pub config: ResolvedConfig,
    pub inputs: Inputs,
    pub result: AblationTable,
    pub baseline_mean_accuracy: f64,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblateFlipReport {
    pub version: u32,
    pub command: String,
    pub config: ResolvedConfig,
    pub inputs: Inputs,
    pub result: FlipAblation,
    pub mean_with_flip: f64,
    pub mean_without_flip: f64,
    pub mean_baseline: f64,
    pub flip_win_rate: f64,
    pub table: String,
}

fn mean_std_pct(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() < 2 {
        0.0
    } else {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    (mean * 100.0, var.sqrt() * 100.0)
}

fn mean_std_columns() -> Vec<String> {
    vec!["Mean".into(), "Std".into()]
}

pub fn weights_table(t: &AblationTable) -> String {
    let mut rows: Vec<(String, Vec<Option<f64>>)> = t
        .rows
        .iter()
        .map(|r| {
            let (m, s) = mean_std_pct(&r.per_seed);
            (format!("w_real={:.2} w_syn={:.2}", r.w_real, r.w_syn), vec![Some(m), Some(s)])
        })
        .collect();
    let (m, s) = mean_std_pct(&t.baseline_per_seed);
    rows.push(("No TTA".into(), vec![Some(m), Some(s)]));
    let signed = vec![false; rows.len()];
    render_table(&mean_std_columns(), &rows, &signed)
}

pub fn flip_table(f: &FlipAblation) -> String {
    let row = |label: &str, xs: &[f64]| {
        let (m, s) = mean_std_pct(xs);
        (label.to_string(), vec![Some(m), Some(s)])
    };
    let rows = vec![
        row("No TTA", &f.baseline),
        row("TTA without flip", &f.without_flip),
        row("TTA with flip", &f.with_flip),
    ];
    render_table(&mean_std_columns(), &rows, &[false; 3])
}

pub fn compare_table(dataset: &str, cand: (&str, f64), reference: (&str, f64), delta_pp: f64) -> String {
    render_table(
        &[dataset.to_string()],
        &[
            (reference.0.to_string(), vec![Some(reference.1)]),
            (cand.0.to_string(), vec![Some(cand.1)]),
            ("Delta".to_string(), vec![Some(delta_pp)]),
        ],
        &[false, false, true],
    )
}

/// Parses a report written by `verify` or `pipeline`.
pub fn parse_verify_report(text: &str) -> Result<VerifyReport, String> {
    let r: VerifyReport = serde_json::from_str(text).map_err(|e| e.to_string())?;
    if r.version != REPORT_VERSION {
        return Err(format!("unsupported report version {}", r.version));
    }
    let s = &r.result;
    let k = s.fold_sizes.len();
    if k < 2 || s.fold_accuracies.len() != k || s.fold_thresholds.len() != k {
        return Err("fold arrays are inconsistent".into());
    }
    if s.fold_sizes.iter().sum::<usize>() != s.n_pairs {
        return Err(format!("fold sizes do not add up to {} pairs", s.n_pairs));
    }
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    if !s.fold_accuracies.iter().all(|&a| in_unit(a)) || !in_unit(s.mean_accuracy) || !in_unit(s.fallback_rate) {
        return Err("accuracies and fallback rate must lie in [0, 1]".into());
    }
    Ok(r)
}

/// Pretty JSON followed by a newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary() -> RunSummary {
        RunSummary {
            n_pairs: 4,
            fold_sizes: vec![2, 2],
            fold_thresholds: vec![0.1, 0.2],
            fold_accuracies: vec![1.0, 0.5],
            mean_accuracy: 0.75,
            mean_accuracy_pct: 75.0,
            fallback_rate: 0.0,
        }
    }

    fn report() -> VerifyReport {
        let result = summary();
        VerifyReport {
            version: REPORT_VERSION,
            command: "verify".into(),
            dataset: "toy".into(),
            label: "scores".into(),
            config: [("folds".to_string(), Value::from(2))].into(),
            inputs: Inputs::new(),
            table: VerifyReport::table_for("toy", "scores", &result),
            result,
        }
    }

    #[test]
    fn verify_report_round_trip() {
        let r = report();
        assert_eq!(parse_verify_report(&to_json(&r)).unwrap(), r);
    }

    #[test]
    fn inconsistent_reports_rejected() {
        let mut r = report();
        r.result.fold_sizes = vec![3, 2];
        assert!(parse_verify_report(&to_json(&r)).is_err());
        let mut r = report();
        r.version = 9;
        assert!(parse_verify_report(&to_json(&r)).is_err());
        assert!(parse_verify_report("{}").is_err());
    }

    #[test]
    fn summary_round_trip_keeps_protocol_fields() {
        let run = summary().to_run();
        assert_eq!(RunSummary::from_run(&run), summary());
    }

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn table_layout() {
        let t = compare_table("lfw", ("tta", 99.5), ("base", 99.0), 0.5);
        assert_eq!(
            t,
            "Method    lfw\n-------------\nbase    99.00\ntta     99.50\nDelta   +0.50\n"
        );
    }
}
