//! Datasets: CSV ingestion, train-fitted standardization, seeded splits,
//! synthetic generators and the replay file format.

pub mod dataset;
pub mod replay;
pub mod split;
pub mod synth;

pub use dataset::{load_csv, load_csv_with, LoadOptions, Standardizer, TabularDataset, Task};
pub use replay::{record, ReplayFile, ReplayStream};
pub use split::{split, split_indices, SplitIndices, SplitSpec, Splits, MIN_CALIBRATION};
pub use synth::{synth_blobs, synth_hetero, NoiseProfile, Z95};

/// Path of the bundled Concrete compressive strength table
/// (1030 rows, 8 features, target `compressive_strength`).
pub const CONCRETE_CSV: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/concrete.csv");
pub const CONCRETE_TARGET: &str = "compressive_strength";
