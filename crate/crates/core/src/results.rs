//! CSV series and JSON summaries for simulation runs.
//!
//! Output is byte-stable: JSON object keys are sorted and every real is
//! rounded to 9 significant digits before printing.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::provisioner::PolicyComparison;
use crate::sim::{RunResult, Summary};

pub const CSV_HEADER: &str =
    "epoch,demand_level,config_id,allocated,migrations,cumulative_migrations,violation,policy,seed";

/// Rounds to 9 significant digits; non-finite values become `null`.
pub fn real(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    json!(rounded)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub tool_version: String,
    pub generator: String,
    pub spec_hash: String,
    pub seed: u64,
    pub epochs: usize,
    pub initial_level: String,
    pub level_ids: Vec<String>,
    pub discount: f64,
    pub tolerance: f64,
}

impl RunMetadata {
    fn to_json(&self) -> Value {
        json!({
            "tool_version": self.tool_version,
            "generator": self.generator,
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "epochs": self.epochs,
            "initial_level": self.initial_level,
            "demand_levels": self.level_ids,
            "discount": real(self.discount),
            "tolerance": real(self.tolerance),
        })
    }
}

pub fn render_csv(results: &[RunResult]) -> String {
    let mut out =
        String::with_capacity(64 * results.iter().map(RunResult::epochs).sum::<usize>() + 128);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for run in results {
        let mut cumulative = 0u64;
        for r in &run.records {
            cumulative += r.migrations;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.demand_level,
                r.config,
                r.allocated,
                r.migrations,
                cumulative,
                u8::from(r.violation),
                run.policy,
                run.seed
            )
            .expect("writing to a String");
        }
    }
    out
}

pub fn render_summary(
    summary: &Summary,
    metadata: &RunMetadata,
    value_gap: Option<&PolicyComparison>,
) -> String {
    let comparison: Vec<Value> = summary
        .rows
        .iter()
        .map(|row| {
            json!({
                "policy": row.policy,
                "seed": row.seed,
                "cumulative_migrations": row.cumulative_migrations,
                "allocated_unit_epochs": row.allocated_unit_epochs,
                "mean_allocated": real(row.mean_allocated),
                "violations": row.violations,
                "discounted_reward": real(row.discounted_reward),
            })
        })
        .collect();
    let mut doc = json!({
        "metadata": metadata.to_json(),
        "epochs": summary.epochs,
        "comparison": comparison,
    });
    if let Some(gap) = value_gap {
        doc["value_gap_mdp_minus_greedy"] = json!({
            "min": real(gap.min),
            "max": real(gap.max),
            "mean": real(gap.mean),
        });
    }
    let mut text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    text.push('\n');
    text
}

/// Writes `results_seed<seed>.csv` and `summary_seed<seed>.json` into `out_dir`.
pub fn write_results(
    results: &[RunResult],
    summary: &Summary,
    metadata: &RunMetadata,
    value_gap: Option<&PolicyComparison>,
    out_dir: &Path,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("results_seed{}.csv", metadata.seed));
    let json_path = out_dir.join(format!("summary_seed{}.json", metadata.seed));
    fs::write(&csv_path, render_csv(results))?;
    fs::write(&json_path, render_summary(summary, metadata, value_gap))?;
    Ok(vec![csv_path, json_path])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provisioner::{build_state_index, greedy_policy};
    use crate::scenarios;
    use crate::sim::{generate_trace, simulate, summarize, GENERATOR_NAME};

    fn runs(epochs: usize) -> (Vec<RunResult>, Summary, RunMetadata) {
        let spec = scenarios::fig4();
        let index = build_state_index(&spec).unwrap();
        let greedy = greedy_policy(&spec, &index);
        let trace = generate_trace(spec.demand_model(), epochs, 5, "low").unwrap();
        let hold = crate::mdp::Policy::new(vec![26; index.len()]);
        let results = vec![
            simulate(&greedy, "greedy", &index, &spec, &trace, 0).unwrap(),
            simulate(&hold, "hold", &index, &spec, &trace, 0).unwrap(),
        ];
        let summary = summarize(&results).unwrap();
        let meta = RunMetadata {
            tool_version: "test".into(),
            generator: GENERATOR_NAME.into(),
            spec_hash: "abc".into(),
            seed: 5,
            epochs,
            initial_level: "low".into(),
            level_ids: vec!["low".into(), "med".into(), "high".into()],
            discount: 0.95,
            tolerance: 1e-9,
        };
        (results, summary, meta)
    }

    #[test]
    fn real_rounds_to_nine_significant_digits() {
        assert_eq!(real(1.0 / 3.0).to_string(), "0.333333333");
        assert_eq!(real(123456.7891234).to_string(), "123456.789");
        assert_eq!(real(f64::NAN), Value::Null);
        assert_eq!(real(2.0).to_string(), "2.0");
    }

    #[test]
    fn csv_row_counts() {
        let (results, _, _) = runs(3);
        let one = render_csv(&results[..1]);
        assert_eq!(one.lines().count(), 4);
        assert_eq!(one.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(render_csv(&results).lines().count(), 2 * 3 + 1);
    }

    #[test]
    fn csv_cumulative_column_matches_series() {
        let (results, summary, _) = runs(50);
        let csv = render_csv(&results[..1]);
        let cumulative: Vec<u64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
            .collect();
        assert_eq!(cumulative, summary.series[0].cumulative_migrations);
    }

    #[test]
    fn files_are_byte_identical_across_writes() {
        let (results, summary, meta) = runs(200);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let pa = write_results(&results, &summary, &meta, None, a.path()).unwrap();
        let pb = write_results(&results, &summary, &meta, None, b.path()).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let doc: Value = serde_json::from_str(&fs::read_to_string(&pa[1]).unwrap()).unwrap();
        assert_eq!(doc["comparison"].as_array().unwrap().len(), 2);
        assert_eq!(doc["metadata"]["generator"], GENERATOR_NAME);
    }
}
