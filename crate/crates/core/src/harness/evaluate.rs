//! Leave-one-in retrieval evaluation: Bull's eye and precision–recall.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::harness::index::{rank, ShapeIndex};
use crate::matching::{shape_similarity, MatchMode};
use crate::{Error, Result};

pub const RECALL_LEVELS: usize = 10;
pub const BULLSEYE_CONVENTION: &str =
    "self excluded from each ranking; same-category hits counted in the top 2N-1 of the remaining shapes, divided by N-1";

/// Dense similarity matrix in index order; `scores[q][e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn compute(index: &ShapeIndex, mode: &MatchMode) -> Self {
        let n = index.entries.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i..n)
                    .map(|j| {
                        shape_similarity(
                            &index.entries[i].alternatives,
                            &index.entries[j].alternatives,
                            &index.weights,
                            mode,
                        )
                    })
                    .collect()
            })
            .collect();
        // the similarity is exactly symmetric, so mirror the upper triangle
        let mut scores = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                scores[i][j] = upper[i][j - i];
                scores[j][i] = upper[i][j - i];
            }
        }
        ScoreMatrix {
            ids: index.entries.iter().map(|e| e.id.clone()).collect(),
            scores,
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io(path))?;
        w.write_record(["query", "entry", "score"])?;
        for (q, row) in self.scores.iter().enumerate() {
            for (e, s) in row.iter().enumerate() {
                w.write_record([self.ids[q].as_str(), self.ids[e].as_str(), &s.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path).map_err(csv_io(path))?;
        let mut ids: Vec<String> = Vec::new();
        let mut triples = Vec::new();
        for row in rdr.deserialize::<(String, String, f64)>() {
            let (q, e, s) = row?;
            if !ids.contains(&q) {
                ids.push(q.clone());
            }
            triples.push((q, e, s));
        }
        let pos = |id: &str| {
            ids.iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::Parse(format!("unknown id {id:?} in score matrix")))
        };
        let n = ids.len();
        let mut scores = vec![vec![f64::NAN; n]; n];
        for (q, e, s) in &triples {
            scores[pos(q)?][pos(e)?] = *s;
        }
        if scores.iter().flatten().any(|s| s.is_nan()) {
            return Err(Error::Parse("score matrix is incomplete".into()));
        }
        Ok(ScoreMatrix { ids, scores })
    }
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    /// (entry id, score), self excluded.
    pub ranked: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub queries: Vec<QueryResult>,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub bulls_eye: f64,
    pub category_size: usize,
}

impl RetrievalReport {
    pub fn precision_at_full_recall(&self) -> f64 {
        *self.precision.last().expect("recall grid is non-empty")
    }

    /// Writes `pr.csv`, `bullseye.txt` and `scores.csv` into `dir`.
    pub fn write(&self, scores: &ScoreMatrix, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let pr = dir.join("pr.csv");
        let mut w = csv::Writer::from_path(&pr).map_err(csv_io(&pr))?;
        w.write_record(["recall", "precision"])?;
        for (r, p) in self.recall.iter().zip(&self.precision) {
            w.write_record([r.to_string(), p.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&pr, e))?;
        let be = dir.join("bullseye.txt");
        let mut f = std::fs::File::create(&be).map_err(|e| Error::io(&be, e))?;
        writeln!(f, "# {BULLSEYE_CONVENTION}")
            .and_then(|_| writeln!(f, "# N = {}, queries = {}", self.category_size, self.queries.len()))
            .and_then(|_| writeln!(f, "{}", self.bulls_eye))
            .map_err(|e| Error::io(&be, e))?;
        scores.write_csv(&dir.join("scores.csv"))
    }
}

/// Labels per entry, failing on unlabeled ones.
fn labels(index: &ShapeIndex) -> Result<Vec<&str>> {
    index
        .entries
        .iter()
        .map(|e| e.label.as_deref().ok_or_else(|| Error::UnlabeledEntry(e.id.clone())))
        .collect()
}

pub fn evaluate(index: &ShapeIndex, mode: &MatchMode) -> Result<(RetrievalReport, ScoreMatrix)> {
    let labels = labels(index)?;
    let scores = ScoreMatrix::compute(index, mode);
    let report = evaluate_scores(&scores, &labels)?;
    Ok((report, scores))
}

/// Bull's eye and interpolated precision at recall 0.1, 0.2, …, 1.0.
pub fn evaluate_scores(m: &ScoreMatrix, labels: &[&str]) -> Result<RetrievalReport> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Invalid("empty index".into()));
    }
    let size = labels.iter().filter(|l| **l == labels[0]).count();
    if labels.iter().any(|l| labels.iter().filter(|m| *m == l).count() != size) {
        return Err(Error::Invalid("categories must all have the same size".into()));
    }
    if size < 2 {
        return Err(Error::Invalid("categories need at least two shapes".into()));
    }
    let relevant = size - 1;
    let window = 2 * size - 1;
    let recall: Vec<f64> = (1..=RECALL_LEVELS).map(|k| k as f64 / RECALL_LEVELS as f64).collect();
    let mut precision = vec![0.0; RECALL_LEVELS];
    let mut bulls = 0.0;
    let mut queries = Vec::with_capacity(n);
    for q in 0..n {
        let others: Vec<(usize, f64)> = (0..n).filter(|&e| e != q).map(|e| (e, m.scores[q][e])).collect();
        let ranked = rank(&others);
        let hits = ranked
            .iter()
            .take(window)
            .filter(|(e, _)| labels[*e] == labels[q])
            .count();
        bulls += hits as f64 / relevant as f64;
        // (recall, precision) after each relevant hit
        let mut points = Vec::with_capacity(relevant);
        let mut found = 0;
        for (k, (e, _)) in ranked.iter().enumerate() {
            if labels[*e] == labels[q] {
                found += 1;
                points.push((found as f64 / relevant as f64, found as f64 / (k + 1) as f64));
            }
        }
        for (level, p) in recall.iter().zip(precision.iter_mut()) {
            let best = points
                .iter()
                .filter(|(r, _)| *r >= level - 1e-12)
                .map(|&(_, pr)| pr)
                .fold(0.0, f64::max);
            *p += best;
        }
        queries.push(QueryResult {
            query: m.ids[q].clone(),
            ranked: ranked.iter().map(|&(e, s)| (m.ids[e].clone(), s)).collect(),
        });
    }
    for p in &mut precision {
        *p /= n as f64;
    }
    Ok(RetrievalReport {
        queries,
        recall,
        precision,
        bulls_eye: bulls / n as f64,
        category_size: size,
    })
}
