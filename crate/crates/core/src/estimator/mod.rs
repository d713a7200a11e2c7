//! Three-stage conditional-IV training pipeline and the average-effect
//! estimator.
//!
//! Stage one fits the instrument model `P(S|C)`. Stage two fits the
//! treatment model `P(W|S,C)`. Stage three jointly trains the representation
//! and the two outcome heads against the mixture regression loss plus the
//! two confounding-balance terms, with the first two stages frozen.

mod config;
mod loss;
mod train;

pub use config::{Ablation, InstrumentSource, TrainConfig};
pub use loss::{bce_loss_on_tape, outcome_loss_on_tape, outcome_loss_value, OutcomeLossParts};
pub use train::{
    estimate_ace, fit_civ_stage, fit_outcome_stage, fit_treatment_stage, run_cbrl_civ,
    run_cbrl_civ_with_val, sample_s_hat, treat_prob, AceEstimate, Diagnostics, FitResult,
    ModelBundle, Standardizer,
};
