//! Feature analysis for deep metric learning models.
//!
//! Two analyses are provided:
//!
//! * **Pixel level** ([`saliency`]): SmoothGrad gradient stacks are reduced
//!   to saliency maps, and maps of the same images from different models are
//!   compared by Pearson correlation (averaged in Fisher-Z space) and
//!   Jensen-Shannon divergence.
//! * **Property level** ([`retrieval`]): for each categorical image property,
//!   R-Precision and Normalized R-Precision measure how strongly embeddings
//!   cluster by that property, using exact nearest neighbours ([`knn`]).
//!
//! [`stats`] compares groups of models with a Mann-Whitney U test, and
//! [`synth`] generates property manifests and synthetic embeddings with known
//! property influence.

pub mod error;
pub mod io;
pub mod knn;
pub mod metric;
pub mod par;
pub mod report;
pub mod retrieval;
pub mod saliency;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use io::{EmbeddingSet, GradientStack, PropertyTable, SaliencyMap, TensorF32};
pub use knn::{blocked_neighbor_pass, top_r, NeighborList};
pub use metric::{pairwise_score, MetricKind, Orientation};
pub use retrieval::{
    nr_precision, nr_precision_all, r_precision, NrPrecQueryStat, NrPrecReport, QueryMode,
    RetrievalOptions, SIGNIFICANCE_THRESHOLD,
};
pub use saliency::{
    compare_models, fisher_z, inv_fisher_z, jsd, mean_correlation, pearson, postprocess,
    smoothgrad_mean, ComparisonCell, ComparisonMatrix,
};
pub use stats::{mann_whitney_u, population_std, two_sided_threshold, MwuMethod, MwuResult};
pub use synth::{property_grid, sample_manifest, synth_embed, Manifest, PropertyGrid};
