//! Run log formats.
//!
//! `run.csv` holds one row per completed epoch with a header row. Floats are
//! written by [`format_float`] (9 significant digits), lists are joined with
//! `;`, and quoting follows RFC 4180 as implemented by the `csv` crate.
//! Wall-clock time is kept out of `run.csv` (it goes to `timing.csv`) so that
//! replays with the same seed produce byte-identical files.
//!
//! `summary.txt` is `key = value` lines; lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Decimal with 9 significant digits: fixed notation for exponents in
/// `[-5, 15)`, otherwise `d.dddddddde±x`. Non-finite values print as
/// `inf`, `-inf` and `NaN`.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..].parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        format!("{:.*}", (8 - exp).max(0) as usize, x)
    } else {
        sci
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad float `{s}`")))
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|&x| format_float(x)).collect::<Vec<_>>().join(";")
}

fn split_floats(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(parse_float).collect()
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad integer `{s}`")))
}

/// One row of `run.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub epoch: u64,
    /// Row-major index of the cell whose mixture scored best this epoch.
    pub best_cell: usize,
    pub best_fd: f64,
    pub tvd: f64,
    pub coverage: usize,
    /// Counts of generator mutations per loss: minmax, least square, heuristic.
    pub loss_counts: [usize; 3],
    pub divergences: usize,
    pub interactions: usize,
    pub failed_cells: usize,
    pub cell_scores: Vec<f64>,
    pub generator_lrs: Vec<f64>,
    pub discriminator_lrs: Vec<f64>,
}

pub const RUN_HEADER: [&str; 14] = [
    "epoch",
    "best_cell",
    "best_fd",
    "tvd",
    "coverage",
    "n_minmax",
    "n_least_square",
    "n_heuristic",
    "divergences",
    "interactions",
    "failed_cells",
    "cell_scores",
    "generator_lrs",
    "discriminator_lrs",
];

impl RunRecord {
    pub fn to_fields(&self) -> Vec<String> {
        vec![
            self.epoch.to_string(),
            self.best_cell.to_string(),
            format_float(self.best_fd),
            format_float(self.tvd),
            self.coverage.to_string(),
            self.loss_counts[0].to_string(),
            self.loss_counts[1].to_string(),
            self.loss_counts[2].to_string(),
            self.divergences.to_string(),
            self.interactions.to_string(),
            self.failed_cells.to_string(),
            join_floats(&self.cell_scores),
            join_floats(&self.generator_lrs),
            join_floats(&self.discriminator_lrs),
        ]
    }

    pub fn from_fields(f: &csv::StringRecord) -> Result<Self> {
        if f.len() != RUN_HEADER.len() {
            return Err(Error::Parse(format!(
                "expected {} fields, got {}",
                RUN_HEADER.len(),
                f.len()
            )));
        }
        Ok(Self {
            epoch: parse_int(&f[0])?,
            best_cell: parse_int(&f[1])?,
            best_fd: parse_float(&f[2])?,
            tvd: parse_float(&f[3])?,
            coverage: parse_int(&f[4])?,
            loss_counts: [parse_int(&f[5])?, parse_int(&f[6])?, parse_int(&f[7])?],
            divergences: parse_int(&f[8])?,
            interactions: parse_int(&f[9])?,
            failed_cells: parse_int(&f[10])?,
            cell_scores: split_floats(&f[11])?,
            generator_lrs: split_floats(&f[12])?,
            discriminator_lrs: split_floats(&f[13])?,
        })
    }
}

/// Appends records to a CSV file, flushing after every row.
pub struct RunCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl RunCsvWriter<File> {
    pub fn create(path: &Path) -> Result<Self> {
        Self::new(File::create(path)?)
    }
}

impl<W: Write> RunCsvWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        inner.write_record(RUN_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, r: &RunRecord) -> Result<()> {
        self.inner.write_record(r.to_fields())?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn read_run_csv<R: std::io::Read>(r: R) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().ne(RUN_HEADER.iter().copied()) {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let mut out: Vec<RunRecord> = Vec::new();
    for row in reader.records() {
        let rec = RunRecord::from_fields(&row?)?;
        if out.last().is_some_and(|p| p.epoch >= rec.epoch) {
            return Err(Error::Parse(format!("epoch {} out of order", rec.epoch)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_run_csv_file(path: &Path) -> Result<Vec<RunRecord>> {
    read_run_csv(File::open(path)?)
}

/// Ordered `key = value` pairs plus leading comment lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueFile {
    pub comments: Vec<String>,
    pub entries: Vec<(String, String)>,
}

impl KeyValueFile {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        self.entries.iter().cloned().collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            s.push_str("# ");
            s.push_str(c);
            s.push('\n');
        }
        for (k, v) in &self.entries {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(self.render().as_bytes())?;
        Ok(())
    }

    pub fn parse<R: BufRead>(r: R) -> Result<Self> {
        let mut out = Self::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(c) = t.strip_prefix('#') {
                out.comments.push(c.trim().to_string());
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", n + 1)))?;
            out.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(BufReader::new(File::open(path)?))
    }
}
