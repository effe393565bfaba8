//! Reference predictors and the common predictor interface.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Basket, ItemId, XmtConfig};
use crate::profile::CustomerProfile;
use crate::scalar::{desc_then_key, Scalar};
use crate::tars::{history_scores, TarsConfig};
use crate::xmt::{predict_with_scores, Prediction};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BaselineError {
    #[error("empty training history")]
    EmptyHistory,
    #[error("need at least {needed} training baskets, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("unknown method {0:?} (expected top, last, mc, ibp, xmt or txmt)")]
    UnknownMethod(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorKind {
    Top,
    Last,
    Mc,
    Ibp,
    Xmt,
    Txmt,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 6] = [
        PredictorKind::Top,
        PredictorKind::Last,
        PredictorKind::Mc,
        PredictorKind::Ibp,
        PredictorKind::Xmt,
        PredictorKind::Txmt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::Top => "top",
            PredictorKind::Last => "last",
            PredictorKind::Mc => "mc",
            PredictorKind::Ibp => "ibp",
            PredictorKind::Xmt => "xmt",
            PredictorKind::Txmt => "txmt",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictorKind {
    type Err = BaselineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PredictorKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| BaselineError::UnknownMethod(s.to_string()))
    }
}

/// Everything a predictor may look at for one prediction: the training
/// prefix (baskets strictly before the current one) and its profile.
pub struct PredictionInput<'a, S: Scalar> {
    pub prefix: &'a [Basket],
    pub profile: &'a CustomerProfile<S>,
    pub current: &'a Basket,
}

/// A forgotten-item predictor. Output is ranked best first, never contains
/// current-basket items and has at most `k` entries.
pub trait ForgottenItemPredictor<S: Scalar>: Send + Sync {
    fn kind(&self) -> PredictorKind;

    fn predict(
        &self,
        input: &PredictionInput<'_, S>,
        k: usize,
    ) -> Result<Vec<ItemId>, BaselineError>;
}

/// Most frequent items by raw appearance count.
pub fn top_predict<S: Scalar>(
    profile: &CustomerProfile<S>,
    current: &Basket,
    k: usize,
) -> Vec<ItemId> {
    let mut ranked: Vec<(usize, &ItemId)> = profile
        .iter()
        .filter(|(item, _)| !current.contains(item))
        .map(|(item, s)| (s.appearances, item))
        .collect();
    ranked.sort_unstable_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    ranked.into_iter().take(k).map(|(_, i)| i.clone()).collect()
}

/// Items of the last training basket not in the current one.
pub fn last_predict(
    prefix: &[Basket],
    current: &Basket,
    k: usize,
) -> Result<Vec<ItemId>, BaselineError> {
    let last = prefix.last().ok_or(BaselineError::EmptyHistory)?;
    Ok(last
        .items()
        .iter()
        .filter(|i| !current.contains(i))
        .take(k)
        .cloned()
        .collect())
}

/// First-order Markov chain over consecutive training baskets, conditioned
/// on the last training basket.
pub fn mc_predict(
    prefix: &[Basket],
    current: &Basket,
    k: usize,
) -> Result<Vec<ItemId>, BaselineError> {
    if prefix.len() < 2 {
        return Err(BaselineError::TooShort {
            needed: 2,
            got: prefix.len(),
        });
    }
    let last = prefix.last().expect("non-empty");
    let mut source_counts: BTreeMap<&ItemId, usize> = BTreeMap::new();
    let mut transitions: BTreeMap<(&ItemId, &ItemId), usize> = BTreeMap::new();
    for pair in prefix.windows(2) {
        for src in pair[0].items().iter().filter(|i| last.contains(i)) {
            *source_counts.entry(src).or_default() += 1;
            for dst in pair[1].items() {
                *transitions.entry((src, dst)).or_default() += 1;
            }
        }
    }
    // Ordered maps keep the floating-point summation order fixed across runs.
    let mut scores: BTreeMap<&ItemId, f64> = BTreeMap::new();
    for ((src, dst), n) in transitions {
        let w = n as f64 / source_counts[src] as f64;
        *scores.entry(dst).or_default() += w;
    }
    let norm = last.len() as f64;
    let mut ranked: Vec<(f64, &ItemId)> = scores
        .into_iter()
        .filter(|(i, s)| *s > 0.0 && !current.contains(i))
        .map(|(i, s)| (s / norm, i))
        .collect();
    ranked.sort_unstable_by(|a, b| desc_then_key(*a, *b));
    Ok(ranked.into_iter().take(k).map(|(_, i)| i.clone()).collect())
}

/// Items ranked by how overdue they are: days since last purchase divided
/// by the mean inter-purchase interval. Items bought on fewer than two
/// distinct days are never predicted.
pub fn ibp_predict<S: Scalar>(
    profile: &CustomerProfile<S>,
    current: &Basket,
    k: usize,
) -> Vec<ItemId> {
    let mut ranked: Vec<(S, &ItemId)> = profile
        .iter()
        .filter(|(item, _)| !current.contains(item))
        .filter_map(|(item, s)| {
            let mean = s.mean_interval_days?;
            let since = S::from_u32(s.days_since_last?)?;
            Some((since / mean, item))
        })
        .collect();
    ranked.sort_unstable_by(|a, b| desc_then_key(*a, *b));
    ranked.into_iter().take(k).map(|(_, i)| i.clone()).collect()
}

pub struct Top;
pub struct Last;
pub struct MarkovChain;
pub struct Ibp;

pub struct Xmt<S: Scalar> {
    pub config: XmtConfig<S>,
}

pub struct Txmt<S: Scalar> {
    pub config: XmtConfig<S>,
    pub tars: TarsConfig,
}

impl<S: Scalar> ForgottenItemPredictor<S> for Top {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Top
    }
    fn predict(
        &self,
        input: &PredictionInput<'_, S>,
        k: usize,
    ) -> Result<Vec<ItemId>, BaselineError> {
        Ok(top_predict(input.profile, input.current, k))
    }
}

impl<S: Scalar> ForgottenItemPredictor<S> for Last {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Last
    }
    fn predict(
        &self,
        input: &PredictionInput<'_, S>,
        k: usize,
    ) -> Result<Vec<ItemId>, BaselineError> {
        last_predict(input.prefix, input.current, k)
    }
}

impl<S: Scalar> ForgottenItemPredictor<S> for MarkovChain {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Mc
    }
    fn predict(
        &self,
        input: &PredictionInput<'_, S>,
        k: usize,
    ) -> Result<Vec<ItemId>, BaselineError> {
        mc_predict(input.prefix, input.current, k)
    }
}

impl<S: Scalar> ForgottenItemPredictor<S> for Ibp {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Ibp
    }
    fn predict(
        &self,
        input: &PredictionInput<'_, S>,
        k: usize,
    ) -> Result<Vec<ItemId>, BaselineError> {
        Ok(ibp_predict(input.profile, input.current, k))
    }
}

impl<S: Scalar> Xmt<S> {
    pub fn prediction(&self, input: &PredictionInput<'_, S>, k: usize) -> Prediction<S> {
        let cfg = self.config.clone().with_k(k);
        predict_with_scores(input.profile, input.current, &cfg, None)
    }
}

impl<S: Scalar> ForgottenItemPredictor<S> for Xmt<S> {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Xmt
    }
    fn predict(
        &self,
        input: &PredictionInput<'_, S>,
        k: usize,
    ) -> Result<Vec<ItemId>, BaselineError> {
        Ok(self.prediction(input, k).forgotten)
    }
}

impl<S: Scalar> Txmt<S> {
    pub fn prediction(&self, input: &PredictionInput<'_, S>, k: usize) -> Prediction<S> {
        let cfg = self.config.clone().with_k(k);
        let omega = history_scores(
            input.prefix,
            input.current,
            input.profile.as_of(),
            &self.tars,
        );
        predict_with_scores(input.profile, input.current, &cfg, Some(&omega))
    }
}

impl<S: Scalar> ForgottenItemPredictor<S> for Txmt<S> {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Txmt
    }
    fn predict(
        &self,
        input: &PredictionInput<'_, S>,
        k: usize,
    ) -> Result<Vec<ItemId>, BaselineError> {
        Ok(self.prediction(input, k).forgotten)
    }
}

/// Boxed predictor for a method tag.
pub fn predictor<S: Scalar>(
    kind: PredictorKind,
    config: &XmtConfig<S>,
    tars: &TarsConfig,
) -> Box<dyn ForgottenItemPredictor<S>> {
    match kind {
        PredictorKind::Top => Box::new(Top),
        PredictorKind::Last => Box::new(Last),
        PredictorKind::Mc => Box::new(MarkovChain),
        PredictorKind::Ibp => Box::new(Ibp),
        PredictorKind::Xmt => Box::new(Xmt {
            config: config.clone(),
        }),
        PredictorKind::Txmt => Box::new(Txmt {
            config: config.clone(),
            tars: *tars,
        }),
    }
}
