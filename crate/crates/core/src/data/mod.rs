//! Dataset types, synthetic generation, semi-synthetic grafting, and the
//! two-file dataset format (observed table + manifest).

mod dataset;
mod io;
mod semi;
mod synthetic;

pub use dataset::{CivDataset, GroundTruth};
pub use io::{read_dataset, write_dataset, DatasetManifest};
pub use semi::{build_semi_synthetic, read_covariate_table, CovariateTable, SemiSynSpec};
pub use synthetic::{
    cholesky, gen_instrument, gen_outcome, gen_treatment, generate_synthetic, make_covariance,
    sample_confounders, SynSpec,
};
