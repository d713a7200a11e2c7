//! Distribution balance between probability-weighted representation clouds,
//! measured by a debiased entropic optimal-transport divergence.

mod cloud;
mod exact;
mod sinkhorn;

pub use cloud::{clouds_from_probs, WeightedCloud};
pub use exact::exact_w1_1d;
pub use sinkhorn::{
    ipm_term, ipm_term_value, sinkhorn_divergence, sinkhorn_divergence_on_tape, SinkhornConfig,
};
