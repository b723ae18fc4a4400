//! Dynamic correlation analysis for expression matrices.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`preprocess`]: load, impute, filter and standardize an expression matrix.
//! 2. [`lac`]: score every gene pair with the liquid association coefficient
//!    and keep the top fraction.
//! 3. [`dca`]: stack the elementwise products of the kept pairs into a product
//!    matrix and extract dynamic components from its Gram matrix.
//! 4. [`fdr`]: fit a split-normal empirical null to the liquid association
//!    scores of every pair against a component and select non-null pairs by
//!    local false discovery rate.
//! 5. [`enrichment`]: count selected pairs inside and between gene sets and
//!    score them against a uniform random-pair null.
//!
//! [`simulate`] holds the seeded generators used to validate the statistics.

pub mod dca;
pub mod eigen;
pub mod enrichment;
pub mod error;
pub mod fdr;
pub mod format;
pub mod lac;
pub mod preprocess;
pub mod simulate;
pub mod stats;
pub mod varimax;

pub use error::{DcaError, Result};

pub mod prelude {
    pub use crate::dca::{
        build_product_matrix, extract_components, gram, la_score, DynamicComponent, ExtractOptions,
        Extraction, ProductMatrix,
    };
    pub use crate::eigen::{eigendecompose, EigenPair};
    pub use crate::enrichment::{
        between_process, binomial_upper_tail, load_gene_sets, process_pair_network, within_process,
        EnrichmentResult, GeneSetCollection,
    };
    pub use crate::error::{DcaError, Result};
    pub use crate::fdr::{fit_null, local_fdr, pair_la_scores, select_pairs_by_fdr, FdrModel};
    pub use crate::lac::{
        lac_absolute, lac_matrix, lac_squared, select_top_pairs, LacVariant, PairList,
        PairScoreTable, ScoredPair,
    };
    pub use crate::preprocess::{
        filter_genes, knn_impute, load_expression, standardize, ExpressionMatrix, LoadOptions,
    };
    pub use crate::stats::pearson;
    pub use crate::varimax::varimax;
}
