//! Synthetic data, pipeline glue, retrieval evaluation and rendering.

pub mod evaluate;
pub mod generate;
pub mod index;
pub mod pipeline;
pub mod render;

use crate::matching::SimilarityWeights;
use crate::Result;
use index::{IndexItem, ShapeIndex};
use pipeline::ExtractConfig;

/// Extraction settings for databases that may hold two-centred shapes.
pub fn database_config() -> ExtractConfig {
    let mut c = ExtractConfig::default();
    c.phi.dumbbell_mode = true;
    c
}

/// Index of the generated prototypes × variants set, labelled by prototype.
pub fn synthetic_index(variants: usize, seed: u64) -> Result<ShapeIndex> {
    let items = generate::database_specs(variants)
        .into_iter()
        .enumerate()
        .map(|(i, (id, spec))| IndexItem {
            label: Some(spec.prototype.name().to_string()),
            source: format!("generated:{id}"),
            mask: generate::generate_shape(&spec, seed + i as u64),
            id,
        })
        .collect();
    ShapeIndex::from_items(items, &database_config(), SimilarityWeights::default())
}
