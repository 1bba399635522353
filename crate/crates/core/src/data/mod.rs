//! Click-log ingestion, synthetic data, schemas, splits and batching.

mod cache;
mod parse;
mod schema;
mod split;
mod synth;

pub use cache::{read_cache, write_cache, CACHE_VERSION};
pub use parse::{
    criteo_names, parse_avazu, parse_criteo, parse_synth, read_table, DataFormat, RawRow, RawTable,
    AVAZU_COLUMNS, CRITEO_CATEGORICAL, CRITEO_COLUMNS, CRITEO_NUMERIC,
};
pub use schema::{build_schema, Example, FeatureSchema, FieldKind, FieldSpec, OOV_INDEX};
pub use split::{
    batches, num_batches, split, split_sizes, Batch, Batches, DatasetSplit, SplitPart, DEFAULT_RATIOS,
    MIN_SPLIT_EXAMPLES,
};
pub use synth::{synth_generate, write_synth_csv, SynthConfig, SynthDataset, SynthMeta};

use crate::error::Result;

/// Splits raw rows in order, derives the schema from the train part alone and
/// encodes every part against it.
pub fn encode_split(table: &RawTable, ratios: [f64; 3], min_freq: u64) -> Result<(FeatureSchema, DatasetSplit)> {
    let [train, _, _] = split_sizes(table.rows.len(), ratios)?;
    let schema = build_schema(table, &table.rows[..train], min_freq)?;
    let examples = table.rows.iter().map(|r| schema.encode(r)).collect();
    Ok((schema, split(examples, ratios)?))
}
