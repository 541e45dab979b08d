//! Shape database persisted as a single JSON file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame::ShapeDescriptor;
use crate::harness::pipeline::{extract, ExtractConfig};
use crate::matching::{shape_similarity, MatchMode, SimilarityWeights};
use crate::shape_io::{load_mask, BinaryMask, LoadOptions};
use crate::{Error, Result};

pub const INDEX_FORMAT: &str = "diskel-index/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub label: Option<String>,
    pub source: String,
    pub alternatives: Vec<ShapeDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFailure {
    pub source: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeIndex {
    pub format: String,
    pub weights: SimilarityWeights,
    pub config: ExtractConfig,
    pub entries: Vec<IndexEntry>,
    pub failures: Vec<IndexFailure>,
}

/// A mask waiting to be indexed.
pub struct IndexItem {
    pub id: String,
    pub label: Option<String>,
    pub source: String,
    pub mask: Result<BinaryMask>,
}

impl ShapeIndex {
    /// Extract every item in parallel; failures are recorded, not fatal.
    pub fn from_items(items: Vec<IndexItem>, config: &ExtractConfig, weights: SimilarityWeights) -> Result<Self> {
        weights.validate()?;
        let results: Vec<std::result::Result<IndexEntry, IndexFailure>> = items
            .into_par_iter()
            .map(|it| {
                let run = it.mask.and_then(|m| extract(&m, config));
                match run {
                    Ok(x) => Ok(IndexEntry {
                        id: it.id,
                        label: it.label,
                        source: it.source,
                        alternatives: x.descriptors,
                    }),
                    Err(e) => Err(IndexFailure {
                        source: it.source,
                        error: e.to_string(),
                    }),
                }
            })
            .collect();
        let mut entries = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r {
                Ok(e) => entries.push(e),
                Err(f) => failures.push(f),
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate shape id {:?}", e.id)));
            }
        }
        Ok(ShapeIndex {
            format: INDEX_FORMAT.into(),
            weights,
            config: *config,
            entries,
            failures,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let idx: ShapeIndex = serde_json::from_str(s)?;
        if idx.format != INDEX_FORMAT {
            return Err(Error::Parse(format!("unsupported index format {:?}", idx.format)));
        }
        if let Some(e) = idx.entries.iter().find(|e| e.alternatives.is_empty()) {
            return Err(Error::Parse(format!("entry {:?} has no descriptors", e.id)));
        }
        Ok(idx)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `file,label` rows keyed by file name.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    })?;
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<(String, String)>() {
        let (file, label) = row?;
        out.insert(file, label);
    }
    Ok(out)
}

/// Index every `.pbm` in `dir` (sorted by name).
pub fn build_index(
    dir: &Path,
    labels: &Path,
    config: &ExtractConfig,
    weights: SimilarityWeights,
) -> Result<ShapeIndex> {
    let labels = read_labels(labels)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pbm")))
        .collect();
    if files.is_empty() {
        return Err(Error::NoShapes(dir.to_path_buf()));
    }
    files.sort();
    let items = files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            IndexItem {
                id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                label: labels.get(&name).cloned(),
                mask: load_mask(&p, LoadOptions::default()),
                source: name,
            }
        })
        .collect();
    ShapeIndex::from_items(items, config, weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

/// Descending score, ties broken by entry order.
pub fn rank(scores: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v
}

pub fn query(index: &ShapeIndex, probe: &[ShapeDescriptor], k: usize, mode: &MatchMode) -> Vec<Hit> {
    let scores: Vec<(usize, f64)> = index
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| (i, shape_similarity(probe, &e.alternatives, &index.weights, mode)))
        .collect();
    rank(&scores)
        .into_iter()
        .take(k)
        .map(|(i, score)| Hit {
            id: index.entries[i].id.clone(),
            score,
        })
        .collect()
}
