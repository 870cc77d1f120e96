//! Output files of a finished run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::ModelFile;
use crate::search::{JsonlSink, LogSink, SearchReport};

pub const RUN_LOG: &str = "run_log.jsonl";
pub const SUMMARY: &str = "summary.csv";
pub const CONFUSION: &str = "confusion.csv";
pub const BEST_MODEL: &str = "best_model.json";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub run_log: PathBuf,
    pub summary: PathBuf,
    pub confusion: PathBuf,
    pub best_model: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            run_log: dir.join(RUN_LOG),
            summary: dir.join(SUMMARY),
            confusion: dir.join(CONFUSION),
            best_model: dir.join(BEST_MODEL),
        }
    }
}

/// Model file carrying the run's normalizer and class names.
pub fn model_file(report: &SearchReport) -> ModelFile {
    ModelFile {
        normalizer: Some(report.normalizer.clone()),
        classes: Some(report.classes.clone()),
        ..ModelFile::new(&report.best_model)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|a| a.to_string()).unwrap_or_default()
}

pub fn summary_csv(report: &SearchReport) -> String {
    let arch: Vec<String> = report.best_architecture.genes().iter().map(|g| g.to_string()).collect();
    format!(
        "test_accuracy,validation_accuracy,architecture,params,generations,termination,wall_ms\n{},{},{},{},{},{},{}\n",
        fmt_opt(report.test_accuracy),
        report.best_fitness.accuracy,
        arch.join("-"),
        report.best_fitness.params,
        report.records.len(),
        report.termination,
        report.wall_ms
    )
}

/// Rows are true classes, columns predicted classes.
pub fn confusion_csv(classes: &[String], m: &[Vec<usize>]) -> String {
    let mut out = String::from("true\\predicted");
    for c in classes {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (name, row) in classes.iter().zip(m) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes the run log, summary, confusion matrix and best model into `dir`,
/// creating it if needed. Without a test split the confusion file holds only
/// its header.
pub fn emit_report(report: &SearchReport, dir: &Path) -> Result<ReportPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let paths = ReportPaths::in_dir(dir);
    let mut log = JsonlSink::create(&paths.run_log)?;
    for r in &report.records {
        log.record(r)?;
    }
    let write = |p: &Path, text: String| fs::write(p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e));
    write(&paths.summary, summary_csv(report))?;
    let empty = Vec::new();
    write(&paths.confusion, confusion_csv(&report.classes, report.confusion.as_ref().unwrap_or(&empty)))?;
    model_file(report).save(&paths.best_model)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_layout() {
        let classes = vec!["1".to_string(), "2".to_string()];
        let text = confusion_csv(&classes, &[vec![3, 1], vec![0, 4]]);
        assert_eq!(text, "true\\predicted,1,2\n1,3,1\n2,0,4\n");
    }
}
