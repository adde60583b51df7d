//! Dataset CSV: `k,u,y[,x,mode]`, one row per time step.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulator::SimulatedDataset;
use crate::veronese::ModelOrders;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub k: i64,
    pub u: f64,
    pub y: f64,
    pub x: Option<f64>,
    /// Zero-based mode, when the file carries ground truth for this row.
    pub mode: Option<usize>,
}

/// Writes a simulated run. Modes are one-based in the file and left empty on
/// initial-condition rows.
pub fn write_dataset<W: Write>(out: W, ds: &SimulatedDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "u", "y", "x", "mode"])?;
    for (i, ((u, y), x)) in ds.u.iter().zip(&ds.y).zip(&ds.x).enumerate() {
        let k = ds.start + i as i64;
        let mode = if k >= 0 {
            (ds.modes[k as usize] + 1).to_string()
        } else {
            String::new()
        };
        w.write_record([
            k.to_string(),
            u.to_string(),
            y.to_string(),
            x.to_string(),
            mode,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct Columns {
    k: usize,
    u: usize,
    y: usize,
    x: Option<usize>,
    mode: Option<usize>,
}

/// Streaming reader that validates rows as they arrive.
pub struct DatasetReader<R: Read> {
    inner: csv::Reader<R>,
    cols: Columns,
    record: csv::StringRecord,
    prev_k: Option<i64>,
}

impl DatasetReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::new(BufReader::new(file))
    }
}

impl<R: Read> DatasetReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut inner = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = inner.headers()?.clone();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let need = |name: &str| {
            find(name).ok_or_else(|| Error::Format(format!("dataset has no '{name}' column")))
        };
        let cols = Columns {
            k: need("k")?,
            u: need("u")?,
            y: need("y")?,
            x: find("x"),
            mode: find("mode"),
        };
        Ok(Self {
            inner,
            cols,
            record: csv::StringRecord::new(),
            prev_k: None,
        })
    }

    pub fn has_modes(&self) -> bool {
        self.cols.mode.is_some()
    }

    fn parse(&self) -> Result<DatasetRow> {
        let line = self.record.position().map_or(0, |p| p.line());
        let field = |i: usize| self.record.get(i).unwrap_or("");
        let real = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = field(i).parse().map_err(|_| {
                Error::Format(format!("line {line}: bad {name} value '{}'", field(i)))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!("line {line}: {name} is not finite")));
            }
            Ok(v)
        };
        let k: i64 = field(self.cols.k)
            .parse()
            .map_err(|_| Error::Format(format!("line {line}: bad k '{}'", field(self.cols.k))))?;
        if let Some(prev) = self.prev_k {
            if k != prev + 1 {
                return Err(Error::Format(format!(
                    "line {line}: k jumps from {prev} to {k}"
                )));
            }
        }
        let x = match self.cols.x {
            Some(i) if !field(i).is_empty() => Some(real(i, "x")?),
            _ => None,
        };
        let mode = match self.cols.mode {
            Some(i) if !field(i).is_empty() => {
                let m: usize = field(i).parse().ok().filter(|&m| m >= 1).ok_or_else(|| {
                    Error::Format(format!("line {line}: bad mode '{}'", field(i)))
                })?;
                Some(m - 1)
            }
            _ => None,
        };
        Ok(DatasetRow {
            k,
            u: real(self.cols.u, "u")?,
            y: real(self.cols.y, "y")?,
            x,
            mode,
        })
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<DatasetRow>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.inner.read_record(&mut self.record) {
            Ok(false) => None,
            Err(e) => Some(Err(e.into())),
            Ok(true) => {
                let row = self.parse();
                if let Ok(r) = &row {
                    self.prev_k = Some(r.k);
                }
                Some(row)
            }
        }
    }
}

/// Turns consecutive rows into regressors `[y_k..y_{k-na}, u_{k-1}..u_{k-nc}]`.
#[derive(Debug, Clone)]
pub struct WindowBuilder {
    na: usize,
    nc: usize,
    ys: VecDeque<f64>,
    us: VecDeque<f64>,
    buf: Vec<f64>,
}

impl WindowBuilder {
    pub fn new(orders: ModelOrders) -> Self {
        Self {
            na: orders.na(),
            nc: orders.nc(),
            ys: VecDeque::with_capacity(orders.na() + 1),
            us: VecDeque::with_capacity(orders.nc() + 1),
            buf: Vec::with_capacity(orders.regressor_dim()),
        }
    }

    /// Regressor ending at this row, once enough history is available.
    pub fn push(&mut self, y: f64, u: f64) -> Option<&[f64]> {
        self.ys.push_front(y);
        self.ys.truncate(self.na + 1);
        let ready = self.ys.len() == self.na + 1 && self.us.len() == self.nc;
        if ready {
            self.buf.clear();
            self.buf.extend(self.ys.iter());
            self.buf.extend(self.us.iter());
        }
        self.us.push_front(u);
        self.us.truncate(self.nc);
        ready.then_some(&self.buf[..])
    }
}

/// Calls `f(k, regressor, mode)` for every complete window of the file and
/// returns whether the file has a mode column.
pub fn for_each_window<F>(path: &Path, orders: ModelOrders, mut f: F) -> Result<bool>
where
    F: FnMut(i64, &[f64], Option<usize>),
{
    let reader = DatasetReader::open(path)?;
    let has_modes = reader.has_modes();
    let mut builder = WindowBuilder::new(orders);
    for row in reader {
        let row = row?;
        if let Some(r) = builder.push(row.y, row.u) {
            f(row.k, r, row.mode);
        }
    }
    Ok(has_modes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accumulator::IoData;

    #[test]
    fn builder_matches_aligned_windows() {
        let o = ModelOrders::new(2, 2, 3).unwrap();
        let y: Vec<f64> = (0..20).map(|i| i as f64 * 1.5).collect();
        let u: Vec<f64> = (0..20).map(|i| -(i as f64) - 0.25).collect();
        let data = IoData::aligned(&y, &u, -3);
        let expected: Vec<Vec<f64>> = data
            .windows(o)
            .unwrap()
            .map(|w| w.regressor().to_vec())
            .collect();
        let mut b = WindowBuilder::new(o);
        let got: Vec<Vec<f64>> = y
            .iter()
            .zip(&u)
            .filter_map(|(&y, &u)| b.push(y, u).map(<[f64]>::to_vec))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn reader_rejects_gaps_and_missing_columns() {
        let gap = "k,u,y\n0,1,2\n2,1,2\n";
        let rows: Vec<_> = DatasetReader::new(gap.as_bytes()).unwrap().collect();
        assert!(rows[0].is_ok());
        assert!(matches!(rows[1], Err(Error::Format(_))));
        assert!(matches!(
            DatasetReader::new("k,y\n0,1\n".as_bytes()),
            Err(Error::Format(_))
        ));
        let missing = "k,u,y\n0,,2\n";
        let rows: Vec<_> = DatasetReader::new(missing.as_bytes()).unwrap().collect();
        assert!(matches!(rows[0], Err(Error::Format(_))));
    }

    #[test]
    fn reader_parses_optional_columns() {
        let text = "k,u,y,x,mode\n-1,0.5,1,1,\n0,0.25,2,2.5,2\n";
        let rows: Vec<DatasetRow> = DatasetReader::new(text.as_bytes())
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(rows[0].mode, None);
        assert_eq!(rows[1].mode, Some(1));
        assert_eq!(rows[1].x, Some(2.5));
    }
}
