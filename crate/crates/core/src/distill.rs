//! Distillation support: mining passages for each training query with the
//! dense engine, and the KL divergence between teacher and student score
//! distributions. Model training happens elsewhere.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::{search_dense, DenseIndex, DenseIndexParams, PassageHit, TokenMatrix};
use crate::error::{Error, Result};

/// Passages mined per query by default.
pub const DEFAULT_MINE_DEPTH: usize = 50;

/// Top `k` passages for a query; every passage when fewer exist.
pub fn mine_hard_passages(
    index: &DenseIndex,
    query: &TokenMatrix,
    k: usize,
    params: &DenseIndexParams,
) -> Result<Vec<PassageHit>> {
    let mut hits = search_dense(index, query, params)?.hits;
    hits.truncate(k);
    Ok(hits)
}

fn log_softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    scaled.iter().map(|s| s - lse).collect()
}

pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    log_softmax(scores, temperature).into_iter().map(f64::exp).collect()
}

/// `KL(softmax(teacher) || softmax(student))` at temperature 1.
pub fn distill_loss(teacher: &[f64], student: &[f64]) -> Result<f64> {
    distill_loss_with_temperature(teacher, student, 1.0)
}

pub fn distill_loss_with_temperature(teacher: &[f64], student: &[f64], temperature: f64) -> Result<f64> {
    if teacher.len() != student.len() {
        return Err(Error::InvalidArgument(format!(
            "teacher has {} scores, student has {}",
            teacher.len(),
            student.len()
        )));
    }
    if teacher.len() < 2 {
        return Err(Error::InvalidArgument("need at least two scores per query".into()));
    }
    if teacher.iter().chain(student).any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be positive")));
    }
    let log_p = log_softmax(teacher, temperature);
    let log_q = log_softmax(student, temperature);
    let kl = log_p
        .iter()
        .zip(&log_q)
        .map(|(lp, lq)| {
            let p = lp.exp();
            if p > 0.0 {
                p * (lp - lq)
            } else {
                0.0
            }
        })
        .sum::<f64>();
    Ok(kl.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherScore {
    pub pid: String,
    pub teacher: f64,
}

/// One training query with its mined passages and teacher scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillPair {
    pub query_id: String,
    pub passages: Vec<TeacherScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student: Option<Vec<f64>>,
}

impl DistillPair {
    pub fn validate(&self) -> Result<()> {
        if self.passages.len() < 2 {
            return Err(Error::Validation(format!(
                "query `{}` has {} passages, need at least 2",
                self.query_id,
                self.passages.len()
            )));
        }
        if let Some(s) = &self.student {
            if s.len() != self.passages.len() {
                return Err(Error::Validation(format!(
                    "query `{}` has {} student scores for {} passages",
                    self.query_id,
                    s.len(),
                    self.passages.len()
                )));
            }
        }
        Ok(())
    }

    pub fn teacher_scores(&self) -> Vec<f64> {
        self.passages.iter().map(|p| p.teacher).collect()
    }

    /// Loss against the attached student scores, if any.
    pub fn loss(&self) -> Option<Result<f64>> {
        self.student
            .as_ref()
            .map(|s| distill_loss(&self.teacher_scores(), s))
    }
}

pub fn write_distill(pairs: &[DistillPair], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        p.validate()?;
        let line = serde_json::to_string(p).expect("distill pair is serializable");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_distill(path: &Path) -> Result<Vec<DistillPair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: DistillPair =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        pair.validate()?;
        out.push(pair);
    }
    Ok(out)
}
