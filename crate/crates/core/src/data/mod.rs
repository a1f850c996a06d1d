//! On-disk formats, dataset layout, patches and splits.

pub mod patches;
pub mod png_io;
pub mod raster;
pub mod sample;
pub mod split;

pub use patches::{extract_patches, Patch, PatchOptions};
pub use raster::{read_raster, write_raster, Raster, RasterData};
pub use sample::{list_samples, load_dataset, load_sample, write_sample, Condition, SampleRecord, View};
pub use split::{make_splits, Partition, SplitSpec, Splits};
