//! CSV ingestion of observation matrices and CSV serialization of results.
//!
//! Input files hold one observation per row and one variable per column.
//! Every output file starts with the schema line `# hdbf v1`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::result::TestResult;
use crate::simulation::ExperimentReport;

pub const SCHEMA_LINE: &str = "# hdbf v1";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSpec {
    pub path: PathBuf,
    pub has_header: bool,
    pub delimiter: u8,
    /// Input stores variables in rows and observations in columns.
    pub transpose: bool,
}

impl CsvSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            has_header: false,
            delimiter: b',',
            transpose: false,
        }
    }

    pub fn with_header(mut self, has_header: bool) -> Self {
        self.has_header = has_header;
        self
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }

    pub fn transposed(mut self, transpose: bool) -> Self {
        self.transpose = transpose;
        self
    }
}

pub fn load_group(spec: &CsvSpec) -> Result<DataMatrix> {
    let file = File::open(&spec.path).map_err(|e| Error::Io(format!("{}: {e}", spec.path.display())))?;
    parse_matrix(file, spec.has_header, spec.delimiter).map(|m| if spec.transpose { m.transpose() } else { m })
}

/// Parses a numeric CSV table. Lines starting with `#` and blank lines are skipped.
pub fn parse_matrix<R: Read>(input: R, has_header: bool, delimiter: u8) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut values = vec![];
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 1);
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Csv {
                    line,
                    reason: format!("expected {c} fields, found {}", record.len()),
                });
            }
            _ => {}
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                line,
                reason: format!("column {}: `{cell}` is not a number", j + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    line,
                    reason: format!("column {}: `{cell}` is not finite", j + 1),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Csv {
        line: 0,
        reason: "file contains no data rows".into(),
    })?;
    DataMatrix::new(rows, cols, values)
}

/// 17 significant digits; parsing the text back yields the identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_matrix<W: Write>(mut out: W, m: &DataMatrix, delimiter: char) -> Result<()> {
    for r in m.iter_rows() {
        let line: Vec<String> = r.iter().map(|&v| format_f64(v)).collect();
        writeln!(out, "{}", line.join(&delimiter.to_string()))?;
    }
    Ok(())
}

pub fn save_matrix(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m, ',')?;
    w.flush()?;
    Ok(())
}

pub fn test_result_csv(results: &[TestResult]) -> String {
    let mut s = format!("{SCHEMA_LINE}\nmethod,statistic,p_value,reject,alpha,b,seed,stream\n");
    for r in results {
        let (seed, stream) = r
            .seed
            .map(|s| (s.seed.to_string(), s.stream.to_string()))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.method,
            format_f64(r.statistic),
            format_f64(r.p_value),
            r.reject,
            r.alpha,
            r.b_resamples,
            seed,
            stream
        );
    }
    s
}

/// One row per method. Wall-clock time is left out so identical runs produce
/// identical files.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut s = format!("{SCHEMA_LINE}\nmodel,n1,n2,p,beta,R,B,alpha,method,rejections,size_or_power,se,errors\n");
    for t in &report.tallies {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{}",
            report.model,
            report.n1,
            report.n2,
            report.p,
            report.beta,
            report.reps,
            report.b,
            report.alpha,
            t.method,
            t.rejections,
            report.rate(t.method).unwrap_or(0.0),
            report.se(t.method).unwrap_or(0.0),
            t.errors
        );
    }
    s
}

pub fn pairs_csv(header: (&str, &str), pairs: &[(f64, f64)]) -> String {
    let mut s = format!("{SCHEMA_LINE}\n{},{}\n", header.0, header.1);
    for (a, b) in pairs {
        let _ = writeln!(s, "{},{}", format_f64(*a), format_f64(*b));
    }
    s
}
