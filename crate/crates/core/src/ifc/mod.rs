//! IFC (ISO 10303-21) ingestion.

pub mod diagnostic;
pub mod model;
pub mod spatial;
pub mod step;

pub use diagnostic::{Diagnostic, Severity};
pub use model::{element_records, ElementRecord, IfcModel, PropValue, RAILING_TYPES};
pub use spatial::{build_spatial_tree, SpatialError, SpatialKind, SpatialNode};
pub use step::{
    parse_step, parse_step_with, AttrValue, EntityInstance, StepError, StepFile, Strictness,
};

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Read and parse a file from disk.
pub fn read_ifc(path: &Path, strictness: Strictness) -> Result<StepFile, IngestError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_step_with(&bytes, strictness)?)
}
