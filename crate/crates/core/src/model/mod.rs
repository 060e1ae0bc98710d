//! Domain types shared by the samplers and analytics.

mod config;
mod dataset;
mod patterns;
mod state;

pub use config::{
    ChainConfig, ConfigFile, ForecastSection, ModelConfig, ModelSection, PatternSection, PriorConfig, TransformSection,
};
pub use dataset::{apply_transforms, load_dataset, read_table, Dataset, RawTable, Transform, TransformKind};
pub use patterns::{DefaultRows, EquationPatterns, Pattern, PatternSet};
pub use state::ParameterState;
