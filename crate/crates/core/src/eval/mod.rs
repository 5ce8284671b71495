//! Evaluation against human judgments: consensus distances, Ward clustering,
//! cluster agreement measures, rank correlation and bootstrap intervals.

pub mod consensus;
pub mod hac;
pub mod kernel;
pub mod measures;
pub mod results;
pub mod stats;

pub use consensus::{consensus_matrix, read_groupings, GroupingRecord};
pub use hac::{cut_k, hac, hac_ward, ClusterLabels, Dendrogram, Linkage, Merge};
pub use kernel::{PerceptualKernel, Task, VisualChannel};
pub use measures::{
    adjusted_mutual_info, adjusted_rand_index, normalized_mutual_info, rand_index, ClusterScores,
};
pub use results::{MeasureValue, ResultsDoc};
pub use stats::{bootstrap_ci, normalize01, spearman_rho, BootstrapCi};
