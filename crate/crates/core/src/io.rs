//! CSV input, report output, and the scenario file format.
//!
//! Data files are comma-separated with a header row and '.' decimals;
//! malformed rows are hard errors, since silently skipped rows would corrupt
//! the inference. Reports are TSV or JSON lines. Scenario files are flat
//! `key = value` text.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::contrasts::ContrastSpec;
use crate::engine::Diagnostics;
use crate::error::{Error, Result};
use crate::moments::GroupedSample;
use crate::mtp::TestReport;
use crate::survival::{SurvivalGroup, SurvivalSample};

/// Load grouped data from long-format CSV with columns `group,y1,...,yd`.
pub fn read_grouped_csv(path: &Path) -> Result<GroupedSample> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || !headers[0].trim().eq_ignore_ascii_case("group") {
        return Err(Error::Parse("first CSV column must be 'group'".into()));
    }
    let d = headers.len() - 1;
    if d == 0 {
        return Err(Error::Parse("no outcome columns found".into()));
    }
    for (j, name) in headers.iter().skip(1).enumerate() {
        let expected = format!("y{}", j + 1);
        if !name.trim().eq_ignore_ascii_case(&expected) {
            return Err(Error::Parse(format!(
                "outcome column {} is named '{name}', expected '{expected}'",
                j + 2
            )));
        }
    }

    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Parse(format!(
                "row {}: expected {} fields, found {}",
                line + 2,
                headers.len(),
                record.len()
            )));
        }
        let group: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad group label '{}'", line + 2, &record[0])))?;
        if group == 0 {
            return Err(Error::Parse(format!("row {}: groups are numbered from 1", line + 2)));
        }
        let values = parse_floats(&record, 1, line + 2)?;
        rows.push((group, values));
    }
    let k = rows.iter().map(|(g, _)| *g).max().ok_or_else(|| Error::Parse("empty data file".into()))?;
    let mut groups: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
    for (g, vals) in rows {
        groups[g - 1].push(vals);
    }
    let matrices = groups
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            if rows.is_empty() {
                return Err(Error::Parse(format!("group {} has no observations", i + 1)));
            }
            let mut m = Array2::zeros((rows.len(), d));
            for (r, row) in rows.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    m[[r, c]] = *v;
                }
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    GroupedSample::new(matrices)
}

/// Load survival data from CSV with columns `group,time,status` and a
/// restriction time.
pub fn read_survival_csv(path: &Path, tau: f64) -> Result<SurvivalSample> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if names != ["group", "time", "status"] {
        return Err(Error::Parse(
            "survival CSV must have columns 'group,time,status'".into(),
        ));
    }
    let mut rows: Vec<(usize, f64, bool)> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Parse(format!("row {}: expected 3 fields", line + 2)));
        }
        let group: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad group label '{}'", line + 2, &record[0])))?;
        if group == 0 {
            return Err(Error::Parse(format!("row {}: groups are numbered from 1", line + 2)));
        }
        let time: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad time '{}'", line + 2, &record[1])))?;
        let status = match record[2].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse(format!(
                    "row {}: status must be 0 or 1, found '{other}'",
                    line + 2
                )))
            }
        };
        rows.push((group, time, status));
    }
    let k = rows.iter().map(|(g, _, _)| *g).max().ok_or_else(|| Error::Parse("empty data file".into()))?;
    let mut groups = vec![SurvivalGroup { time: Vec::new(), status: Vec::new() }; k];
    for (g, t, s) in rows {
        groups[g - 1].time.push(t);
        groups[g - 1].status.push(s);
    }
    SurvivalSample::new(groups, tau)
}

fn parse_floats(record: &csv::StringRecord, from: usize, line: usize) -> Result<Vec<f64>> {
    record
        .iter()
        .skip(from)
        .map(|f| {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {line}: bad number '{f}'")))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("row {line}: non-finite value")));
            }
            Ok(v)
        })
        .collect()
}

/// Write a contrast matrix as headerless CSV, one contrast row per line.
pub fn write_contrast_csv<W: Write>(writer: W, spec: &ContrastSpec) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in spec.matrix().rows() {
        w.write_record(row.iter().map(|v| format_float(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a contrast matrix from headerless CSV plus a block partition
/// (`block_sizes`; one block per row when empty).
pub fn read_contrast_csv(path: &Path, block_sizes: &[usize], k: usize, d: usize) -> Result<ContrastSpec> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        rows.push(parse_floats(&record, 0, line + 1)?);
    }
    if rows.is_empty() {
        return Err(Error::Parse("empty contrast file".into()));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse("ragged contrast matrix".into()));
    }
    let mut h = Array2::zeros((rows.len(), cols));
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            h[[r, c]] = *v;
        }
    }
    let sizes: Vec<usize> = if block_sizes.is_empty() {
        vec![1; rows.len()]
    } else {
        block_sizes.to_vec()
    };
    let labels = (1..=sizes.len()).map(|i| format!("b{i}")).collect();
    ContrastSpec::new(h, &sizes, labels, k, d)
}

fn format_float(v: f64) -> String {
    // Shortest representation that round-trips.
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("nan") {
        s.push_str(".0");
    }
    s
}

/// Report output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tsv" => Ok(ReportFormat::Tsv),
            "json-lines" | "jsonl" => Ok(ReportFormat::JsonLines),
            other => Err(Error::InvalidInput(format!("unknown format '{other}'"))),
        }
    }
}

/// Serialize a report plus optional run diagnostics.
///
/// TSV carries one row per hypothesis followed by `#`-prefixed diagnostic
/// lines; JSON lines carries one object per hypothesis and a final
/// diagnostics object. Output is deterministic for identical inputs.
pub fn write_report<W: Write>(
    mut writer: W,
    report: &TestReport,
    diagnostics: Option<&Diagnostics>,
    format: ReportFormat,
) -> Result<()> {
    match format {
        ReportFormat::Tsv => {
            writeln!(writer, "hypothesis\tstatistic\tcritical_value\tp_adjusted\treject")?;
            for h in &report.hypotheses {
                writeln!(
                    writer,
                    "{}\t{:.10e}\t{:.10e}\t{:.6}\t{}",
                    h.hypothesis, h.statistic, h.critical_value, h.p_adjusted, h.reject
                )?;
            }
            writeln!(writer, "# method: {}", report.method)?;
            writeln!(writer, "# alpha: {}", report.alpha)?;
            writeln!(writer, "# replicates: {}", report.b)?;
            if let Some(d) = diagnostics {
                writeln!(writer, "# case: {}", d.case.name())?;
                writeln!(
                    writer,
                    "# ranks: sigma={} sigma_pi={} contrast={} keep={}..{}",
                    d.rank_sigma, d.rank_sigma_pi_pilot, d.rank_h, d.keep_min, d.keep_max
                )?;
                writeln!(writer, "# sigma_eigenvalues: {}", join_floats(&d.sigma_eigenvalues))?;
                writeln!(
                    writer,
                    "# sigma_pi_eigenvalues: {}",
                    join_floats(&d.sigma_pi_pilot_eigenvalues)
                )?;
                if let (Some(blocks), Some(zero_tail)) = (&d.pilot_block_sizes, d.pilot_zero_tail) {
                    writeln!(
                        writer,
                        "# rotation_blocks: {:?} zero_tail: {zero_tail}",
                        blocks
                    )?;
                }
                writeln!(writer, "# degenerate_iterations: {}", d.degenerate_iterations)?;
                writeln!(
                    writer,
                    "# n: {} k: {} d: {} kernel: {} seed: {}",
                    d.n,
                    d.k,
                    d.d,
                    d.kernel.name(),
                    d.seed
                )?;
                for warning in &d.warnings {
                    writeln!(writer, "# warning: {warning}")?;
                }
            }
        }
        ReportFormat::JsonLines => {
            for h in &report.hypotheses {
                let mut line = serde_json::to_value(h).map_err(json_err)?;
                line["method"] = serde_json::Value::String(report.method.clone());
                writeln!(writer, "{}", serde_json::to_string(&line).map_err(json_err)?)?;
            }
            if let Some(d) = diagnostics {
                writeln!(
                    writer,
                    "{}",
                    serde_json::to_string(&serde_json::json!({ "diagnostics": d }))
                        .map_err(json_err)?
                )?;
            }
        }
    }
    Ok(())
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Parse(format!("serialization failed: {e}"))
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")
}

/// A parsed flat `key = value` scenario file (line-oriented; `#` comments).
#[derive(Debug, Clone, Default)]
pub struct KeyValueFile {
    values: BTreeMap<String, String>,
}

impl KeyValueFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'key = value', found '{raw}'", idx + 1))
            })?;
            let key = key.trim().to_ascii_lowercase();
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key '{key}'", idx + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Parse(format!("missing required key '{key}'")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Parse(format!("key '{key}': cannot parse '{raw}'"))),
        }
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("key '{key}': cannot parse '{f}'")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(|s| s.as_str())
    }
}
