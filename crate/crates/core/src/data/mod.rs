//! Building stacked image + attention-map inputs and the corpora they come from.

pub mod augment;
pub mod image_io;
pub mod manifest;
pub mod preprocess;
pub mod sample;
pub mod split;
pub mod synthetic;

pub use augment::{augment, AugmentParams};
pub use manifest::{load_samples, Manifest, ManifestRecord, Split};
pub use preprocess::{prepare_map, preprocess, DEFAULT_SIZE};
pub use sample::{stack_input, unstack_input, AugmentedSample};
pub use split::split_stratified;
pub use synthetic::{generate_synthetic, Lesion, SyntheticConfig};
