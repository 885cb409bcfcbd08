use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{PuclError, Result};
use crate::types::GeneralizedState;

/// Append-only store of every reliable infeasible point seen so far, tagged
/// with the iteration that produced it. Exact duplicates are dropped.
#[derive(Debug, Clone, Default)]
pub struct MemoryBuffer {
    points: Vec<GeneralizedState>,
    iterations: Vec<usize>,
    keys: HashSet<Vec<u64>>,
}

impl MemoryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GeneralizedState] {
        &self.points
    }

    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    pub fn contains(&self, point: &GeneralizedState) -> bool {
        self.keys.contains(&point.bit_key())
    }

    /// Merges `points` into the buffer; returns how many were new.
    pub fn merge(&mut self, points: &[GeneralizedState], iteration: usize) -> usize {
        let before = self.points.len();
        for p in points {
            if self.keys.insert(p.bit_key()) {
                self.points.push(p.clone());
                self.iterations.push(iteration);
            }
        }
        self.points.len() - before
    }

    /// `M ∪ extra` as a list: buffer points first, then new points of `extra`
    /// in order.
    pub fn union_with(&self, extra: &[GeneralizedState]) -> Vec<GeneralizedState> {
        let mut seen = HashSet::new();
        let mut out = self.points.clone();
        for p in extra {
            let key = p.bit_key();
            if !self.keys.contains(&key) && seen.insert(key) {
                out.push(p.clone());
            }
        }
        out
    }

    /// CSV with columns `iteration,x0,x1,...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        let dim = self.points.first().map(|p| p.dim()).unwrap_or(0);
        let mut header = vec!["iteration".to_string()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        csv.write_record(&header)?;
        for (p, it) in self.points.iter().zip(&self.iterations) {
            let mut row = vec![it.to_string()];
            row.extend(p.iter().map(|v| format!("{v:?}")));
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    }

    /// Reads a buffer written by [`MemoryBuffer::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut out = MemoryBuffer::new();
        for record in rdr.records() {
            let record = record?;
            let bad = |f: &str| PuclError::Format(format!("bad buffer field `{f}`"));
            let it: usize = record
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| bad(record.get(0).unwrap_or("")))?;
            let values = record
                .iter()
                .skip(1)
                .map(|f| f.parse::<f64>().map_err(|_| bad(f)))
                .collect::<Result<Vec<f64>>>()?;
            out.merge(&[GeneralizedState::new(values)?], it);
        }
        Ok(out)
    }
}
