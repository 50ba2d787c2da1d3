//! Pseudo-observation datasets and their CSV form.
//!
//! The CSV header is `u_0,…,u_{d-1}` optionally followed by
//! `d_0,…,d_{d-1}` censoring bits (1 = observed, 0 = right-censored);
//! without the bit columns every value is treated as observed. Lines
//! starting with `#` are skipped.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    u: Vec<f64>,
    mask: Vec<bool>,
}

impl Dataset {
    pub fn new(d: usize, u: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("dataset needs at least one column".into()));
        }
        if u.len() % d != 0 || mask.len() != u.len() {
            return Err(Error::Input(format!(
                "{} values and {} mask bits do not form rows of width {d}",
                u.len(),
                mask.len()
            )));
        }
        if let Some(i) = u.iter().position(|x| !x.is_finite() || !(0.0..=1.0).contains(x)) {
            return Err(Error::Input(format!("row {}: value {} outside [0, 1]", i / d, u[i])));
        }
        Ok(Dataset { d, u, mask })
    }

    /// Fully observed rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let u: Vec<f64> = rows.iter().flatten().copied().collect();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Input("ragged rows".into()));
        }
        let n = u.len();
        Dataset::new(d, u, vec![true; n])
    }

    pub fn with_masks(rows: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<Self> {
        let mut ds = Dataset::from_rows(rows)?;
        if masks.len() != rows.len() || masks.iter().any(|m| m.len() != ds.d) {
            return Err(Error::Input("mask shape differs from data shape".into()));
        }
        ds.mask = masks.iter().flatten().copied().collect();
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.u.len() / self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> (&[f64], &[bool]) {
        let r = i * self.d..(i + 1) * self.d;
        (&self.u[r.clone()], &self.mask[r])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], &[bool])> {
        self.u.chunks(self.d).zip(self.mask.chunks(self.d))
    }

    /// Fraction of censored entries.
    pub fn censoring_rate(&self) -> f64 {
        self.mask.iter().filter(|m| !**m).count() as f64 / self.mask.len() as f64
    }

    pub fn has_censoring(&self) -> bool {
        self.mask.iter().any(|m| !m)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        let cols = header.len();
        let d = (0..cols).take_while(|&j| header.get(j) == Some(format!("u_{j}").as_str())).count();
        if d == 0 {
            return Err(Error::Input("header must start with u_0".into()));
        }
        let with_mask = match cols - d {
            0 => false,
            k if k == d => {
                for j in 0..d {
                    if header.get(d + j) != Some(format!("d_{j}").as_str()) {
                        return Err(Error::Input(format!("expected column d_{j}, found {:?}", header.get(d + j))));
                    }
                }
                true
            }
            _ => return Err(Error::Input(format!("header has {cols} columns; expected {d} or {}", 2 * d))),
        };
        let mut u = Vec::new();
        let mut mask = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != cols {
                return Err(Error::Input(format!("row {i}: {} fields, expected {cols}", rec.len())));
            }
            for j in 0..d {
                let x: f64 = rec[j]
                    .parse()
                    .map_err(|_| Error::Input(format!("row {i}, column u_{j}: cannot parse {:?}", &rec[j])))?;
                u.push(x);
            }
            for j in 0..d {
                mask.push(if with_mask {
                    match &rec[d + j] {
                        "1" => true,
                        "0" => false,
                        s => return Err(Error::Input(format!("row {i}, column d_{j}: expected 0 or 1, found {s:?}"))),
                    }
                } else {
                    true
                });
            }
        }
        if u.is_empty() {
            return Err(Error::Input("dataset has no rows".into()));
        }
        Dataset::new(d, u, mask)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Dataset::read_csv(std::fs::File::open(path)?)
    }

    /// Writes the mask columns only when some entry is censored.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let with_mask = self.has_censoring();
        let mut header: Vec<String> = (0..self.d).map(|j| format!("u_{j}")).collect();
        if with_mask {
            header.extend((0..self.d).map(|j| format!("d_{j}")));
        }
        wtr.write_record(&header)?;
        for (u, m) in self.rows() {
            let mut rec: Vec<String> = u.iter().map(|x| format!("{x:?}")).collect();
            if with_mask {
                rec.extend(m.iter().map(|b| if *b { "1".to_string() } else { "0".to_string() }));
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
