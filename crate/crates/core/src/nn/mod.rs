//! Minimal deterministic CNN inference.

pub mod arch;
pub mod archive;
pub mod forward;
pub mod ops;

pub use arch::{ArchName, ArchitectureSpec, LayerKind, LayerSpec};
pub use archive::{load_archive, random_init, save_archive, TensorArchive, WeightSet};
pub use forward::{classify, classify_sanity, forward_features, FeatureStack};
