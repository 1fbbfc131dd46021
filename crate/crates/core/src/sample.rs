//! Observations, column ranks and CSV ingestion.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};

/// An `n x d` matrix of raw observations, stored row-major.
///
/// Margins are never estimated; only the column ranks enter the
/// estimators, so the scale of each column is irrelevant.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    n: usize,
    d: usize,
    columns: Vec<String>,
}

impl Sample {
    /// Builds a sample from row-major data. Requires `n >= d >= 2` and
    /// finite entries.
    pub fn new(data: Vec<f64>, n: usize, d: usize) -> Result<Self> {
        let columns = (1..=d).map(|j| format!("x{j}")).collect();
        Self::with_columns(data, n, d, columns)
    }

    pub fn with_columns(data: Vec<f64>, n: usize, d: usize, columns: Vec<String>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidSample(format!("dimension {d} < 2")));
        }
        if n < d {
            return Err(Error::InvalidSample(format!(
                "sample size {n} smaller than dimension {d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::InvalidSample(format!(
                "expected {} values for {n} x {d}, got {}",
                n * d,
                data.len()
            )));
        }
        if columns.len() != d {
            return Err(Error::InvalidSample(format!(
                "{} column names for dimension {d}",
                columns.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Sample { data, n, d, columns })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidSample(format!(
                "row {i} has {} entries, expected {d}",
                rows[i].len()
            )));
        }
        Self::new(rows.concat(), n, d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Applies `f(column, value)` to every entry.
    pub fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Result<Sample> {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(idx, &v)| f(idx % self.d, v))
            .collect();
        Sample::with_columns(data, self.n, self.d, self.columns.clone())
    }

    /// Reads a CSV with a header row of column names and one observation
    /// per line. Empty fields are rejected.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let columns: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let d = columns.len();
        let mut data = Vec::new();
        let mut n = 0;
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != d {
                return Err(Error::InvalidSample(format!(
                    "row {row} has {} fields, header has {d}",
                    record.len()
                )));
            }
            for (col, field) in record.iter().enumerate() {
                if field.is_empty() || field.eq_ignore_ascii_case("na") {
                    return Err(Error::MissingValue { row, col });
                }
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::InvalidSample(format!("row {row}, column {col}: cannot parse {field:?}")))?;
                data.push(v);
            }
            n += 1;
        }
        Sample::with_columns(data, n, d, columns)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.columns)?;
        for i in 0..self.n {
            wtr.write_record(self.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Column-wise ranks in `1..=n`; every column is a permutation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    ranks: Vec<u32>,
    n: usize,
    d: usize,
    tie_counts: Vec<usize>,
}

impl RankMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rank(&self, i: usize, j: usize) -> u32 {
        self.ranks[i * self.d + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ranks[i * self.d..(i + 1) * self.d]
    }

    /// Number of observations per column sharing their value with an
    /// earlier observation.
    pub fn tie_counts(&self) -> &[usize] {
        &self.tie_counts
    }

    pub fn total_ties(&self) -> usize {
        self.tie_counts.iter().sum()
    }

    /// Builds a rank matrix directly, checking the permutation property.
    pub fn from_ranks(ranks: Vec<u32>, n: usize, d: usize) -> Result<Self> {
        if ranks.len() != n * d {
            return Err(Error::InvalidSample("rank matrix has wrong size".into()));
        }
        for j in 0..d {
            let mut seen = vec![false; n];
            for i in 0..n {
                let r = ranks[i * d + j] as usize;
                if r == 0 || r > n || seen[r - 1] {
                    return Err(Error::InvalidSample(format!(
                        "column {j} is not a permutation of 1..={n}"
                    )));
                }
                seen[r - 1] = true;
            }
        }
        Ok(RankMatrix {
            ranks,
            n,
            d,
            tie_counts: vec![0; d],
        })
    }
}

/// Ranks each column; ties are broken by row order and counted.
pub fn compute_ranks(sample: &Sample) -> RankMatrix {
    let (n, d) = (sample.n(), sample.d());
    let mut ranks = vec![0u32; n * d];
    let mut tie_counts = vec![0usize; d];
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..d {
        for (i, o) in order.iter_mut().enumerate() {
            *o = i;
        }
        // stable sort keeps row order among equal values
        order.sort_by(|&a, &b| sample.get(a, j).total_cmp(&sample.get(b, j)));
        for (pos, &i) in order.iter().enumerate() {
            ranks[i * d + j] = (pos + 1) as u32;
            if pos > 0 && sample.get(order[pos - 1], j) == sample.get(i, j) {
                tie_counts[j] += 1;
            }
        }
    }
    let total: usize = tie_counts.iter().sum();
    if total > 0 {
        warn!("{total} tied observations broken by row order; margins are assumed continuous");
    }
    RankMatrix {
        ranks,
        n,
        d,
        tie_counts,
    }
}

/// True iff `max_j x_j <= l <= sum_j x_j` up to a relative tolerance of 1e-12.
pub fn stdf_bounds_check(l_value: f64, x: &[f64]) -> bool {
    let max = x.iter().copied().fold(0.0_f64, f64::max);
    let sum: f64 = x.iter().sum();
    let tol = 1e-12 * sum.max(1.0);
    l_value >= max - tol && l_value <= sum + tol
}
