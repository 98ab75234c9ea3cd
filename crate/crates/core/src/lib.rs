//! Correlation-based clustering of equity return panels.
//!
//! Prices are turned into log returns, optionally stripped of group factors,
//! converted to correlation distances, clustered by average linkage and
//! scored by how tightly each sector or country sits in the tree.

pub mod correlate;
pub mod defactor;
pub mod embed;
pub mod error;
pub mod evaluate;
pub mod hcluster;
pub mod io;
pub mod newick;
pub mod panel;
pub mod pipeline;
pub mod stats;
pub mod svg;
pub mod synth;

pub use correlate::{CorrelationMatrix, DistanceMatrix, EwState};
pub use defactor::{DefactorStage, FitMethod, IndexMethod, RegressionFit};
pub use embed::Embedding;
pub use error::{Error, Result};
pub use evaluate::{PurityReport, PurityRow};
pub use hcluster::{Dendrogram, Merge};
pub use panel::{CompanyMeta, Grouping, PricePanel, ReturnsPanel};
pub use pipeline::PipelineConfig;
pub use synth::FactorModelSpec;
