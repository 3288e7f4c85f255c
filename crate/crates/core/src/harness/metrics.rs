use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First line of every metrics CSV.
pub const SCHEMA_COMMENT: &str = "# lhiqn-metrics v1";

pub const COLUMNS: [&str; 11] = [
    "step",
    "train_return",
    "eval_return",
    "eval_length",
    "mean_tdl",
    "tdl_usage",
    "epsilon",
    "eta",
    "loss",
    "wall_seconds",
    "status",
];

/// One evaluation point. Empty fields mean "not applicable in this period".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRow {
    pub step: u64,
    pub train_return: Option<f64>,
    pub eval_return: Option<f64>,
    pub eval_length: Option<f64>,
    pub mean_tdl: Option<f64>,
    pub tdl_usage: Option<f64>,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub loss: Option<f64>,
    pub wall_seconds: f64,
    pub status: String,
}

impl MetricsRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn error(step: u64, message: &str) -> Self {
        Self {
            step,
            status: format!("error: {}", message.replace(['\n', '\r'], " ")),
            ..Self::default()
        }
    }

    /// Numeric metric columns by name, in schema order.
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 9] {
        [
            ("train_return", self.train_return),
            ("eval_return", self.eval_return),
            ("eval_length", self.eval_length),
            ("mean_tdl", self.mean_tdl),
            ("tdl_usage", self.tdl_usage),
            ("epsilon", self.epsilon),
            ("eta", self.eta),
            ("loss", self.loss),
            ("wall_seconds", Some(self.wall_seconds)),
        ]
    }
}

pub struct MetricsWriter {
    writer: csv::Writer<BufWriter<File>>,
    flush_period: usize,
    pending: usize,
    last_step: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: &Path, flush_period: usize) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{SCHEMA_COMMENT}")?;
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        writer.write_record(COLUMNS)?;
        writer.flush()?;
        Ok(Self {
            writer,
            flush_period: flush_period.max(1),
            pending: 0,
            last_step: None,
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if self.last_step.is_some_and(|s| row.step <= s) && row.is_ok() {
            return Err(Error::Usage(format!("metrics step {} is not increasing", row.step)));
        }
        self.writer.serialize(row)?;
        self.last_step = Some(row.step);
        self.pending += 1;
        if self.pending >= self.flush_period || !row.is_ok() {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        self.pending = 0;
        Ok(())
    }
}

impl Drop for MetricsWriter {
    fn drop(&mut self) {
        let _ = self.writer.flush();
    }
}

fn input_error(path: &Path, msg: impl Into<String>) -> Error {
    Error::Input {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Reads a metrics CSV, checking the version comment and the header.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| input_error(path, e.to_string()))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != SCHEMA_COMMENT {
        return Err(input_error(path, format!("expected schema comment `{SCHEMA_COMMENT}`")));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers().map_err(|e| input_error(path, e.to_string()))?;
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(input_error(path, format!("header {:?} does not match the schema", header)));
    }
    csv.deserialize()
        .map(|r| r.map_err(|e| input_error(path, e.to_string())))
        .collect()
}
