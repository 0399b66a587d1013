use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::strategies::Strategy;
use crate::{Error, Result};

use super::ScenarioConfig;

/// Column order of the CSV output. JSON rows use the same field names.
pub const CSV_COLUMNS: [&str; 20] = [
    "kind",
    "strategy",
    "D",
    "K",
    "throw",
    "seed",
    "n",
    "min_rate",
    "min_rate_se",
    "max_rate",
    "max_rate_se",
    "quotient",
    "quotient_se",
    "mean_rate",
    "mean_rate_se",
    "t_star",
    "t_star_se",
    "emp_min_rate",
    "emp_min_rate_se",
    "dropped_trials",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Raw,
    Aggregate,
}

/// One output row. Raw rows hold a single throw (`n = 1`, or `n = 0` when
/// the trial was dropped); aggregate rows hold means over the valid raw rows
/// of a (strategy, D, K) group with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub kind: RowKind,
    pub strategy: Strategy,
    #[serde(rename = "D")]
    pub num_cpus: usize,
    #[serde(rename = "K")]
    pub num_users: usize,
    pub throw: Option<usize>,
    pub seed: Option<u64>,
    pub n: usize,
    pub min_rate: Option<f64>,
    pub min_rate_se: Option<f64>,
    pub max_rate: Option<f64>,
    pub max_rate_se: Option<f64>,
    pub quotient: Option<f64>,
    pub quotient_se: Option<f64>,
    pub mean_rate: Option<f64>,
    pub mean_rate_se: Option<f64>,
    pub t_star: Option<f64>,
    pub t_star_se: Option<f64>,
    pub emp_min_rate: Option<f64>,
    pub emp_min_rate_se: Option<f64>,
    pub dropped_trials: usize,
}

impl ResultRow {
    pub fn raw(strategy: Strategy, num_cpus: usize, num_users: usize, throw: usize, seed: u64) -> Self {
        Self {
            kind: RowKind::Raw,
            strategy,
            num_cpus,
            num_users,
            throw: Some(throw),
            seed: Some(seed),
            n: 0,
            min_rate: None,
            min_rate_se: None,
            max_rate: None,
            max_rate_se: None,
            quotient: None,
            quotient_se: None,
            mean_rate: None,
            mean_rate_se: None,
            t_star: None,
            t_star_se: None,
            emp_min_rate: None,
            emp_min_rate_se: None,
            dropped_trials: 0,
        }
    }

    fn cells(&self) -> Vec<String> {
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let u = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
        vec![
            match self.kind {
                RowKind::Raw => "raw".into(),
                RowKind::Aggregate => "aggregate".into(),
            },
            self.strategy.to_string(),
            self.num_cpus.to_string(),
            self.num_users.to_string(),
            u(self.throw),
            self.seed.map(|v| v.to_string()).unwrap_or_default(),
            self.n.to_string(),
            f(self.min_rate),
            f(self.min_rate_se),
            f(self.max_rate),
            f(self.max_rate_se),
            f(self.quotient),
            f(self.quotient_se),
            f(self.mean_rate),
            f(self.mean_rate_se),
            f(self.t_star),
            f(self.t_star_se),
            f(self.emp_min_rate),
            f(self.emp_min_rate_se),
            self.dropped_trials.to_string(),
        ]
    }

    fn from_cells(cells: &csv::StringRecord) -> Result<Self> {
        let bad = |what: &str| Error::Serialization(format!("bad {what} in CSV row {cells:?}"));
        let get = |i: usize| cells.get(i).ok_or_else(|| bad(CSV_COLUMNS[i]));
        let num = |i: usize| get(i)?.parse::<usize>().map_err(|_| bad(CSV_COLUMNS[i]));
        let opt_f = |i: usize| -> Result<Option<f64>> {
            let s = get(i)?;
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(CSV_COLUMNS[i]))
            }
        };
        let opt_u = |i: usize| -> Result<Option<u64>> {
            let s = get(i)?;
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(CSV_COLUMNS[i]))
            }
        };
        Ok(Self {
            kind: match get(0)? {
                "raw" => RowKind::Raw,
                "aggregate" => RowKind::Aggregate,
                _ => return Err(bad("kind")),
            },
            strategy: Strategy::from_str(get(1)?).map_err(|_| bad("strategy"))?,
            num_cpus: num(2)?,
            num_users: num(3)?,
            throw: opt_u(4)?.map(|v| v as usize),
            seed: opt_u(5)?,
            n: num(6)?,
            min_rate: opt_f(7)?,
            min_rate_se: opt_f(8)?,
            max_rate: opt_f(9)?,
            max_rate_se: opt_f(10)?,
            quotient: opt_f(11)?,
            quotient_se: opt_f(12)?,
            mean_rate: opt_f(13)?,
            mean_rate_se: opt_f(14)?,
            t_star: opt_f(15)?,
            t_star_se: opt_f(16)?,
            emp_min_rate: opt_f(17)?,
            emp_min_rate_se: opt_f(18)?,
            dropped_trials: num(19)?,
        })
    }
}

/// Mean and standard error of the present values, in row order.
fn mean_se(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let xs: Vec<f64> = values.flatten().collect();
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Aggregate row over raw rows of one group.
pub fn aggregate<'a>(strategy: Strategy, num_cpus: usize, num_users: usize, rows: impl Iterator<Item = &'a ResultRow> + Clone) -> ResultRow {
    let valid: Vec<&ResultRow> = rows.clone().filter(|r| r.n > 0).collect();
    let dropped = rows.map(|r| r.dropped_trials).sum();
    let stat = |f: fn(&ResultRow) -> Option<f64>| mean_se(valid.iter().map(|r| f(r)));
    let (min_rate, min_rate_se) = stat(|r| r.min_rate);
    let (max_rate, max_rate_se) = stat(|r| r.max_rate);
    let (quotient, quotient_se) = stat(|r| r.quotient);
    let (mean_rate, mean_rate_se) = stat(|r| r.mean_rate);
    let (t_star, t_star_se) = stat(|r| r.t_star);
    let (emp_min_rate, emp_min_rate_se) = stat(|r| r.emp_min_rate);
    ResultRow {
        kind: RowKind::Aggregate,
        strategy,
        num_cpus,
        num_users,
        throw: None,
        seed: None,
        n: valid.len(),
        min_rate,
        min_rate_se,
        max_rate,
        max_rate_se,
        quotient,
        quotient_se,
        mean_rate,
        mean_rate_se,
        t_star,
        t_star_se,
        emp_min_rate,
        emp_min_rate_se,
        dropped_trials: dropped,
    }
}

/// Rows plus the configuration and program version that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub version: String,
    pub config: ScenarioConfig,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(config: ScenarioConfig) -> Self {
        Self { version: version_string(), config, rows: Vec::new() }
    }

    pub fn aggregates(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Aggregate)
    }

    pub fn raw_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.kind == RowKind::Raw)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// CSV preceded by `#` comment lines with the version and the
    /// configuration as TOML.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let ser = |e: std::io::Error| Error::Serialization(e.to_string());
        writeln!(out, "# cellfree {}", self.version).map_err(ser)?;
        for line in self.config.to_toml().lines() {
            writeln!(out, "# {line}").map_err(ser)?;
        }
        let mut w = csv::Writer::from_writer(out);
        let ser = |e: csv::Error| Error::Serialization(e.to_string());
        w.write_record(CSV_COLUMNS).map_err(ser)?;
        for row in &self.rows {
            w.write_record(row.cells()).map_err(ser)?;
        }
        w.flush().map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown output format '{other}' (expected csv or json)"))),
        }
    }
}

/// Writes `table` to `path`.
pub fn emit_results(table: &ResultTable, path: &Path, format: OutputFormat) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let file = File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    match format {
        OutputFormat::Csv => table.write_csv(&mut out)?,
        OutputFormat::Json => out.write_all(table.to_json_string()?.as_bytes()).map_err(io)?,
    }
    out.flush().map_err(io)
}

/// Parses the rows of a CSV written by [`emit_results`].
pub fn read_csv_rows(text: &str) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Serialization(e.to_string()))?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Serialization(format!("unexpected CSV header {header:?}")));
    }
    reader
        .records()
        .map(|r| ResultRow::from_cells(&r.map_err(|e| Error::Serialization(e.to_string()))?))
        .collect()
}

pub fn read_json(text: &str) -> Result<ResultTable> {
    serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(throw: usize, min: f64) -> ResultRow {
        let mut r = ResultRow::raw(Strategy::Wc, 3, 12, throw, 100 + throw as u64);
        r.n = 1;
        r.min_rate = Some(min);
        r.max_rate = Some(min * 1.01);
        r.quotient = Some(1.01);
        r.mean_rate = Some(min * 1.005);
        r.t_star = Some(2f64.powf(min) - 1.0);
        r.emp_min_rate = Some(min * 0.9);
        r
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable::new(ScenarioConfig::desk());
        let csv = t.to_csv_string().unwrap();
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec![CSV_COLUMNS.join(",")]);
        assert!(read_csv_rows(&csv).unwrap().is_empty());
    }

    #[test]
    fn json_round_trip() {
        let mut t = ResultTable::new(ScenarioConfig::desk());
        t.rows = vec![row(0, 1.25), row(1, 0.1 + 0.2), ResultRow::raw(Strategy::Nc, 3, 12, 2, 7)];
        let back = read_json(&t.to_json_string().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn csv_round_trip() {
        let mut t = ResultTable::new(ScenarioConfig::desk());
        t.rows = vec![row(0, 1.25), row(1, 1.0 / 3.0)];
        t.rows.push(aggregate(Strategy::Wc, 3, 12, t.rows.clone().iter()));
        let csv = t.to_csv_string().unwrap();
        assert!(csv.starts_with("# cellfree v"));
        assert_eq!(read_csv_rows(&csv).unwrap(), t.rows);
    }

    #[test]
    fn aggregate_recomputes_from_raw() {
        let mut dropped = ResultRow::raw(Strategy::Wc, 3, 12, 3, 1);
        dropped.dropped_trials = 1;
        let rows = [row(0, 1.0), row(1, 2.0), row(2, 4.0), dropped];
        let a = aggregate(Strategy::Wc, 3, 12, rows.iter());
        assert_eq!(a.n, 3);
        assert_eq!(a.dropped_trials, 1);
        let (m, se) = cellfree_oracles::precoding::mean_and_se(&[1.0, 2.0, 4.0]);
        assert_eq!(a.min_rate, Some(m));
        assert!((a.min_rate_se.unwrap() - se).abs() < 1e-15);
    }

    #[test]
    fn emit_reports_path_on_failure() {
        let t = ResultTable::new(ScenarioConfig::desk());
        let err = emit_results(&t, Path::new("/nonexistent/dir/out.csv"), OutputFormat::Csv).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
    }
}
