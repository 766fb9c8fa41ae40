//! Report tables and the on-disk output tree.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{tier_name, ExperimentConfig, ExperimentKind, ExperimentReport, HarnessError, RunOutput};
use crate::metrics::format_cell;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULTS_FILE: &str = "results.jsonl";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub provider: String,
    pub seed_scheme: String,
    pub n_values: Vec<usize>,
    pub queries_requested: usize,
    pub queries_run: usize,
    pub queries_excluded: Vec<usize>,
    pub failures: Vec<String>,
    pub note: Option<String>,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
    pub files: Vec<String>,
    pub version: String,
}

impl Manifest {
    pub(crate) fn new(
        experiment: ExperimentKind,
        config: &ExperimentConfig,
        provider: &str,
        n_values: Vec<usize>,
        reports: &[ExperimentReport],
        started_at_ms: u64,
    ) -> Self {
        let mut excluded = Vec::new();
        let mut failures = Vec::new();
        for report in reports {
            for record in &report.records {
                if record.robustness.is_none() && !excluded.contains(&record.query_index) {
                    excluded.push(record.query_index);
                }
                for f in &record.failures {
                    failures.push(format!("n={} query {}: {f}", report.n, record.query_index));
                }
            }
        }
        let note = (experiment == ExperimentKind::SampleEfficiency).then(|| {
            "the kendall column of the high tier run is the commonly plotted series; N = 1 is the single answer".to_owned()
        });
        Manifest {
            experiment,
            config: config.clone(),
            provider: provider.to_owned(),
            seed_scheme: "time token t = derive_seed(seed, [query, repetition]); sample seed = derive_seed(t, [sample]); derive_seed folds splitmix64 over the path".into(),
            n_values,
            queries_requested: config.query_count,
            queries_run: reports.first().map_or(0, |r| r.records.len()),
            queries_excluded: excluded,
            failures,
            note,
            started_at_ms,
            finished_at_ms: now_ms(),
            files: [MANIFEST_FILE, RESULTS_FILE, TRANSCRIPTS_FILE, REPORT_CSV, REPORT_JSON].map(String::from).to_vec(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: ExperimentKind,
    pub dataset: String,
    pub aggregator: String,
    pub n: usize,
    pub k: usize,
    pub queries: usize,
    pub kendall: String,
    pub spearman: String,
    pub kendall_mean: f64,
    pub kendall_std: f64,
    pub spearman_mean: f64,
    pub spearman_std: f64,
}

/// Rows of `"mean (std)"` cells; the JSON form of a rendered report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

const HEADER: [&str; 8] = ["experiment", "dataset", "aggregator", "n", "k", "queries", "kendall", "spearman"];

impl ReportTable {
    pub fn from_reports(reports: &[ExperimentReport]) -> Result<Self, HarnessError> {
        if reports.is_empty() {
            return Err(HarnessError::EmptyReport("no experiment reports".into()));
        }
        let mut rows = Vec::with_capacity(reports.len());
        for report in reports {
            let s = &report.summary;
            if report.records.is_empty() {
                return Err(HarnessError::EmptyReport(format!("{} {} has no per-query records", report.label(), report.aggregator.name())));
            }
            if s.evaluated == 0 {
                return Err(HarnessError::EmptyReport(format!(
                    "{} {}: all {} queries were excluded; see the failures in the manifest",
                    report.label(),
                    report.aggregator.name(),
                    report.records.len()
                )));
            }
            rows.push(ReportRow {
                experiment: report.experiment,
                dataset: format!("{} {}", report.domain, tier_name(report.tier)),
                aggregator: report.aggregator.name().into(),
                n: report.n,
                k: report.k,
                queries: s.evaluated,
                kendall: format_cell(s.kendall_mean, s.kendall_std),
                spearman: format_cell(s.spearman_mean, s.spearman_std),
                kendall_mean: s.kendall_mean,
                kendall_std: s.kendall_std,
                spearman_mean: s.spearman_mean,
                spearman_std: s.spearman_std,
            });
        }
        Ok(ReportTable { rows })
    }

    fn cells(row: &ReportRow) -> [String; 8] {
        [
            row.experiment.name().into(),
            row.dataset.clone(),
            row.aggregator.clone(),
            row.n.to_string(),
            row.k.to_string(),
            row.queries.to_string(),
            row.kendall.clone(),
            row.spearman.clone(),
        ]
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let body: Vec<[String; 8]> = self.rows.iter().map(Self::cells).collect();
        let mut widths = HEADER.map(str::len);
        for cells in &body {
            for (w, c) in widths.iter_mut().zip(cells) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: &[String]| -> String {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
            padded.join("  ").trim_end().to_owned() + "\n"
        };
        let mut out = line(&HEADER.map(String::from));
        out += &line(&widths.map(|w| "-".repeat(w)));
        for cells in &body {
            out += &line(cells);
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(HEADER)?;
        for row in &self.rows {
            writer.write_record(Self::cells(row))?;
        }
        let bytes = writer.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedReport {
    pub table: ReportTable,
    pub text: String,
    pub csv: String,
    pub json: String,
}

/// Renders the reports as text, CSV and JSON. Refuses reports without any
/// scored query.
pub fn render_report(reports: &[ExperimentReport]) -> Result<RenderedReport, HarnessError> {
    let table = ReportTable::from_reports(reports)?;
    Ok(RenderedReport { text: table.to_text(), csv: table.to_csv()?, json: table.to_json()?, table })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Writes `report.csv` and `report.json`.
pub fn write_report_files(out_dir: &Path, rendered: &RenderedReport) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    write(&out_dir.join(REPORT_CSV), rendered.csv.as_bytes())?;
    write(&out_dir.join(REPORT_JSON), rendered.json.as_bytes())
}

/// Writes the full output tree and returns the rendered report. The results
/// and report files carry no timestamps, so equal runs give equal bytes. The
/// manifest, records and transcripts are written even when nothing can be
/// rendered, so failures stay inspectable.
pub fn persist(out_dir: &Path, output: &RunOutput) -> Result<RenderedReport, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;

    let mut results = Vec::new();
    for report in &output.reports {
        for record in &report.records {
            serde_json::to_writer(&mut results, record)?;
            results.write_all(b"\n").expect("writing to a vec");
        }
    }
    write(&out_dir.join(RESULTS_FILE), &results)?;

    let transcripts_path: PathBuf = out_dir.join(TRANSCRIPTS_FILE);
    output.transcripts.save(&transcripts_path)?;
    write(&out_dir.join(MANIFEST_FILE), (serde_json::to_string_pretty(&output.manifest)? + "\n").as_bytes())?;
    let rendered = render_report(&output.reports)?;
    write_report_files(out_dir, &rendered)?;
    Ok(rendered)
}
