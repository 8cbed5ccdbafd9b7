//! File-to-tables glue shared by the command line and the service.

use std::path::Path;

use crate::ifc::{
    build_spatial_tree, parse_step_with, Diagnostic, IngestError, StepError, Strictness,
};
use crate::table::{tabulate, ModelTables, TableError};

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl From<StepError> for ExtractError {
    fn from(e: StepError) -> Self {
        ExtractError::Ingest(e.into())
    }
}

/// Tables plus the parser's diagnostics.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub tables: ModelTables,
    pub diagnostics: Vec<Diagnostic>,
    pub entity_count: usize,
}

/// File stem, used as the model name in table file names.
pub fn model_name_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string())
}

pub fn extract_bytes(
    bytes: &[u8],
    model_name: &str,
    strictness: Strictness,
) -> Result<Extraction, ExtractError> {
    let file = parse_step_with(bytes, strictness)?;
    let tree = build_spatial_tree(&file).map_err(IngestError::from)?;
    let tables = tabulate(&file, &tree, model_name)?;
    Ok(Extraction {
        tables,
        entity_count: file.len(),
        diagnostics: file.diagnostics,
    })
}

pub fn extract_file(path: &Path, strictness: Strictness) -> Result<Extraction, ExtractError> {
    let bytes = std::fs::read(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    extract_bytes(&bytes, &model_name_of(path), strictness)
}
