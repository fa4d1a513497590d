//! Bayesian neighborhood-selection graph clustering.
//!
//! Variables are clustered by (1) estimating a weighted partial-correlation
//! graph with spike-and-slab nodewise regressions, (2) embedding each variable
//! through the leading eigenvectors of a graph Laplacian and (3) clustering the
//! embedded points with DP-means or a Dirichlet-process mixture.

pub mod consensus;
pub mod data;
pub mod dpcluster;
pub mod enrich;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod neighborhood;
pub mod par;
pub mod partition;
pub mod pipeline;
pub mod rng;
pub mod simbench;
pub mod spectral;
pub mod theorycheck;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use par::Execution;
pub use partition::{Clustering, ClusteringMethod};
pub use spectral::{Embedding, LaplacianVariant, WeightedAdjacency};
