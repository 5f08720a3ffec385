//! Ingestion, lag embedding, scaling and feature selection.

mod embed;
mod ingest;
mod normalize;
mod select;
mod table;

pub use embed::{
    build_design_matrix, build_design_matrix_filtered, build_inputs, read_targets, DesignMatrix,
    EmbeddingSpec, FeatureMatrix, InputRows, RowFilter,
};
pub use ingest::{
    format_timestamp, ingest_csv, ingest_reader, parse_timestamp, write_table_csv, ColumnMapping,
    CsvSchema, RowSelect,
};
pub use normalize::{apply_scales, fit_scales, normalize, FeatureScale};
pub use select::{forward_select, FeatureSelection, SELECTION_FOLDS};
pub use table::{
    difference_channel, night_mask, Channel, GuardedTable, SeriesAccess, TimeFormat,
    TimeSeriesTable,
};
