//! Mask to descriptors in one call.

use serde::{Deserialize, Serialize};

use crate::axes::{detect_symmetry_points, dgrad_ds, trace_branches, SymmetryBranch, TraceConfig};
use crate::frame::{describe, FrameConfig, ShapeDescriptor};
use crate::shape_io::BinaryMask;
use crate::surface::{solve_phi, ExtremaSet, PhiConfig, SurfaceField};
use crate::Result;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub phi: PhiConfig,
    pub trace: TraceConfig,
    pub frame: FrameConfig,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub field: SurfaceField,
    pub extrema: ExtremaSet,
    pub branches: Vec<SymmetryBranch>,
    pub descriptors: Vec<ShapeDescriptor>,
}

pub fn extract(mask: &BinaryMask, config: &ExtractConfig) -> Result<Extraction> {
    let sol = solve_phi(mask, &config.phi)?;
    let (field, mut extrema) = match sol.dumbbell {
        Some(two) if config.phi.dumbbell_mode => two,
        _ => (sol.field, sol.extrema),
    };
    // with one minimum and no interior maxima there is no genuine saddle;
    // ring-test hits on flat ridges would otherwise capture limb branches
    if extrema.minima.len() < 2 {
        extrema.saddles.clear();
    }
    let flux = dgrad_ds(&field);
    let points = detect_symmetry_points(&flux, &field);
    let branches = trace_branches(&points, &field, &extrema, &config.trace)?;
    let inradius = field.depth().into_iter().fold(0.0, f64::max);
    let frame = FrameConfig {
        capture_radius: config.trace.capture(inradius),
        ..config.frame
    };
    let descriptors = describe(&branches, &field, &extrema, &frame)?;
    Ok(Extraction {
        field,
        extrema,
        branches,
        descriptors,
    })
}
