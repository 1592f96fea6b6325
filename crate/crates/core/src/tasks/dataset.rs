//! Fixed datasets as newline-delimited JSON, one population per line:
//!
//! ```text
//! {"id":0,"n":20,"dim":2,"particles":[x₀,y₀,x₁,y₁,…],"target":{"circle":{"center":[cx,cy],"radius":r}}}
//! {"id":1,"n":57,"dim":2,"particles":[…],"target":{"mixture":0.31}}
//! ```
//! Fields always appear in the order `id, n, dim, particles, target`;
//! particles are row-major.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{sample_circle_task, sample_gmm_task, Circle, TaskKind};
use crate::autodiff::{Rng, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Circle(Circle),
    /// `min(w, 1 − w)`.
    Mixture(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: u64,
    pub n: usize,
    pub dim: usize,
    pub particles: Vec<f64>,
    pub target: Target,
}

impl Record {
    pub fn new(id: u64, population: &Tensor, target: Target) -> Result<Self> {
        let dims = population.dims();
        if dims.len() != 2 {
            return Err(Error::Domain(format!(
                "record population must be [n × d], got {}",
                population.shape()
            )));
        }
        Ok(Record {
            id,
            n: dims[0],
            dim: dims[1],
            particles: population.data().to_vec(),
            target,
        })
    }

    pub fn population(&self) -> Result<Tensor> {
        Tensor::new(vec![self.n, self.dim], self.particles.clone())
    }
}

/// `count` examples of size `n`; record `i` draws from its own child stream.
pub fn generate(task: TaskKind, count: usize, n: usize, rng: &Rng) -> Result<Vec<Record>> {
    (0..count)
        .map(|i| {
            let mut r = rng.child_indexed("record", i as u64);
            let (x, target) = match task {
                TaskKind::Circle => {
                    let (x, c) = sample_circle_task(&mut r, n)?;
                    (x, Target::Circle(c))
                }
                TaskKind::Mixture => {
                    let (x, w) = sample_gmm_task(&mut r, n)?;
                    (x, Target::Mixture(w))
                }
            };
            Record::new(i as u64, &x, target)
        })
        .collect()
}

pub fn write_jsonl(path: &Path, records: &[Record]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line)?;
        if rec.particles.len() != rec.n * rec.dim {
            return Err(Error::ElementCount {
                shape: crate::autodiff::Shape::new(vec![rec.n, rec.dim])?,
                count: rec.particles.len(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rng = Rng::new(1);
        let mut records = generate(TaskKind::Circle, 5, 20, &rng).unwrap();
        records.extend(generate(TaskKind::Mixture, 5, 37, &rng.child("mix")).unwrap());
        let path = dir.path().join("data.jsonl");
        write_jsonl(&path, &records).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, records);
        for (a, b) in back.iter().zip(&records) {
            for (x, y) in a.particles.iter().zip(&b.particles) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn field_order_is_fixed() {
        let recs = generate(TaskKind::Mixture, 1, 4, &Rng::new(2)).unwrap();
        let line = serde_json::to_string(&recs[0]).unwrap();
        let pos: Vec<usize> = ["\"id\"", "\"n\"", "\"dim\"", "\"particles\"", "\"target\""]
            .iter()
            .map(|k| line.find(k).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
        assert!(line.contains("\"target\":{\"mixture\":"));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(TaskKind::Circle, 3, 10, &Rng::new(5)).unwrap();
        let b = generate(TaskKind::Circle, 3, 10, &Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[2].population().unwrap().dims(), &[10, 2]);
    }
}
