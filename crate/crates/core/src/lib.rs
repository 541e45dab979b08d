//! Disconnected-skeleton shape descriptors.
//!
//! The pipeline runs mask → diffusion surface → signed symmetry branches →
//! global frame descriptor → order-preserving matching. See the crate README
//! for an end-to-end walkthrough.

pub mod axes;
pub mod deform;
mod error;
pub mod frame;
mod geom;
pub mod harness;
pub mod matching;
pub mod semilocal;
pub mod shape_io;
pub mod surface;

pub use axes::{FluxField, Sign, SymmetryBranch, SymmetryPoint, TraceConfig};
pub use deform::{LandmarkSet, TpsTransform};
pub use error::{Error, Result};
pub use frame::{BranchRecord, Extrinsic, GlobalFrame, ShapeDescriptor};
pub use geom::{Cell, Point};
pub use harness::pipeline::{extract, ExtractConfig, Extraction};
pub use matching::{Correspondence, MatchMode, SensitiveFlags, SimilarityWeights};
pub use semilocal::{PoseCoord, SectionQuad};
pub use shape_io::{BinaryMask, BoundaryCurve};
pub use surface::{ExtremaSet, Extremum, FieldKind, PhiConfig, SurfaceField};
