//! Grid construction and assembly of the BF / FR input matrices.

pub mod csvio;
pub mod features;
pub mod grid;
pub mod synth;

pub use features::{
    assemble_bf, assemble_fr, hazard_from_claims, zscore_standardize, FeatureMatrix, FeatureTable,
    FloodOccurrenceMatrix, Standardized, FEATURE_COLUMNS, N_FEATURES,
};
pub use grid::{build_grid, BoundingBox, CellRecord, GridSpec};
pub use synth::{generate_synthetic, SynthConfig, SyntheticDataset};
