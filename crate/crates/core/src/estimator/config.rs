//! Training configuration.

use serde::{Deserialize, Serialize};

use crate::balance::SinkhornConfig;
use crate::error::{Error, Result};

/// Which loss terms the outcome stage keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Both balance terms active.
    Full,
    /// Drops the instrument-side balance (forces beta = 0).
    NoCivBalance,
    /// Drops both balance terms (plain two-head mixture regression).
    NoBalance,
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoCivBalance => "no_civ_balance",
            Ablation::NoBalance => "no_balance",
        })
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no_civ_balance" => Ok(Ablation::NoCivBalance),
            "no_balance" => Ok(Ablation::NoBalance),
            other => Err(Error::Config(format!("unknown ablation {other:?}"))),
        }
    }
}

/// Which instrument values feed the treatment stage and the outcome mixture.
///
/// The observed instrument carries the exogenous variation the mixture
/// regression needs; replacing it with a fresh draw from the fitted `P(S|C)`
/// severs that dependence (the redrawn value is independent of the realized
/// treatment given `C`), which collapses the two heads onto the conditional
/// mean and drives the estimated effect toward zero. `Resampled` is kept for
/// sensitivity studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentSource {
    Observed,
    Resampled,
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub civ_lr: f64,
    pub treat_lr: f64,
    pub outcome_lr: f64,
    pub epochs_per_stage: usize,
    /// `None` runs full-batch gradients.
    pub batch_size: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub l2_lambda: f64,
    pub repr_dim: usize,
    /// Hidden widths of the instrument, treatment, and representation nets.
    pub hidden_dims: Vec<usize>,
    /// Hidden widths of the two outcome heads.
    pub head_hidden_dims: Vec<usize>,
    pub seed: u64,
    pub ablation: Ablation,
    pub instrument: InstrumentSource,
    /// Redraw the resampled instrument every epoch (sensitivity flag; only
    /// meaningful with `InstrumentSource::Resampled`).
    pub resample_per_epoch: bool,
    pub sinkhorn: SinkhornConfig,
    /// Early-stop patience in epochs; improvement below `early_stop_min_delta`
    /// does not reset it.
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    /// Standardize confounders to zero mean and unit variance using the
    /// training rows before any network sees them.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            civ_lr: 0.05,
            treat_lr: 0.05,
            outcome_lr: 0.0005,
            epochs_per_stage: 300,
            batch_size: Some(128),
            alpha: 0.1,
            beta: 0.1,
            l2_lambda: 1e-4,
            repr_dim: 16,
            hidden_dims: vec![32, 32],
            head_hidden_dims: vec![32, 32],
            seed: 0,
            ablation: Ablation::Full,
            instrument: InstrumentSource::Observed,
            resample_per_epoch: false,
            sinkhorn: SinkhornConfig::default(),
            early_stop_patience: 30,
            early_stop_min_delta: 1e-6,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("civ_lr", self.civ_lr),
            ("treat_lr", self.treat_lr),
            ("outcome_lr", self.outcome_lr),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("l2_lambda", self.l2_lambda),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.repr_dim == 0 {
            return Err(Error::Config("repr_dim must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        self.sinkhorn.validate()
    }

    /// Balance weight on the treatment-side term after the ablation flag.
    pub fn effective_alpha(&self) -> f64 {
        match self.ablation {
            Ablation::NoBalance => 0.0,
            _ => self.alpha,
        }
    }

    /// Balance weight on the instrument-side term after the ablation flag.
    pub fn effective_beta(&self) -> f64 {
        match self.ablation {
            Ablation::Full => self.beta,
            Ablation::NoCivBalance | Ablation::NoBalance => 0.0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    pub fn with_alpha_beta(mut self, alpha: f64, beta: f64) -> Self {
        self.alpha = alpha;
        self.beta = beta;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_forces_weights() {
        let cfg = TrainConfig::default().with_alpha_beta(0.3, 0.7);
        assert_eq!(cfg.effective_alpha(), 0.3);
        assert_eq!(cfg.effective_beta(), 0.7);

        let no_civ = cfg.clone().with_ablation(Ablation::NoCivBalance);
        assert_eq!(no_civ.effective_alpha(), 0.3);
        assert_eq!(no_civ.effective_beta(), 0.0);

        let none = cfg.with_ablation(Ablation::NoBalance);
        assert_eq!(none.effective_alpha(), 0.0);
        assert_eq!(none.effective_beta(), 0.0);
    }

    #[test]
    fn default_is_valid() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn ablation_roundtrips_through_strings() {
        for a in [Ablation::Full, Ablation::NoCivBalance, Ablation::NoBalance] {
            let s = a.to_string();
            assert_eq!(s.parse::<Ablation>().unwrap(), a);
        }
    }
}
