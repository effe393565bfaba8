//! Prebuilt per-customer models and the single prediction path shared by the
//! command line and the HTTP service.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{predictor, PredictionInput, PredictorKind};
use crate::config::RunConfig;
use crate::domain::{Basket, CustomerHistory, CustomerId, Day, ItemId, XmtConfig};
use crate::explain::{explain_prediction, ExplainError, Explanation};
use crate::profile::{build_profile_from, CustomerProfile, ProfileError};
use crate::scalar::Scalar;
use crate::tars::{history_scores, TarsConfig};
use crate::xmt::{predict_with_scores, Prediction, ScoreBreakdown};

/// Bumped whenever the cache layout changes.
pub const STORE_FORMAT: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("unknown customer {0}")]
    UnknownCustomer(String),
    #[error("unknown item tokens: {}", .0.join(", "))]
    UnknownItems(Vec<String>),
    #[error("basket is empty")]
    EmptyBasket,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid token: {0}")]
    BadToken(String),
    #[error("store format {found}, expected {STORE_FORMAT}")]
    Format { found: u32 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("prediction failed: {0}")]
    Predict(String),
    #[error("store: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything needed to answer predictions for one customer. TARS patterns
/// are not cached: they depend on the basket being scored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CustomerModel<S: Scalar> {
    pub history: CustomerHistory,
    pub profile: CustomerProfile<S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ModelStore<S: Scalar> {
    format: u32,
    config: RunConfig<S>,
    customers: BTreeMap<CustomerId, CustomerModel<S>>,
    catalogue: BTreeSet<ItemId>,
}

/// A what-if prediction request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub customer_id: String,
    pub basket: Vec<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub method: Option<PredictorKind>,
    #[serde(default)]
    pub explain: bool,
}

/// Scoring settings echoed in every prediction payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PredictConfig<S: Scalar> {
    pub xmt: XmtConfig<S>,
    pub tars: TarsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PredictResponse<S: Scalar> {
    pub customer_id: CustomerId,
    pub method: PredictorKind,
    pub k: usize,
    pub at: Day,
    pub basket: Vec<ItemId>,
    pub forgotten: Vec<ItemId>,
    /// Phase-one candidates; scoring methods only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_basket: Option<Vec<ItemId>>,
    /// Breakdowns of the forgotten items in prediction order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdowns: Option<Vec<ScoreBreakdown<S>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanations: Option<Vec<Explanation<S>>>,
    pub config: PredictConfig<S>,
}

/// One row of the per-customer item listing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ItemSummary<S: Scalar> {
    pub item: ItemId,
    pub f: S,
    pub appearances: usize,
}

impl<S: Scalar> CustomerModel<S> {
    /// Profile at `as_of`, or the day after the last basket when absent.
    /// Baskets on or after an explicit `as_of` are dropped; `None` when none
    /// remain.
    pub fn build(
        history: &CustomerHistory,
        as_of: Option<Day>,
        config: &RunConfig<S>,
    ) -> Result<Option<Self>, ProfileError> {
        let history = match as_of {
            Some(day) => {
                let keep = history.baskets().partition_point(|b| b.date() < day);
                history.slice(0..keep)
            }
            None => history.clone(),
        };
        let Some(last) = history.baskets().last() else {
            return Ok(None);
        };
        let as_of = as_of.unwrap_or_else(|| last.date().plus(1));
        let profile =
            build_profile_from(history.customer(), history.baskets(), as_of, &config.xmt)?;
        Ok(Some(CustomerModel { history, profile }))
    }
}

impl<S: Scalar> ModelStore<S> {
    pub fn build(
        histories: &[CustomerHistory],
        as_of: Option<Day>,
        config: RunConfig<S>,
    ) -> Result<Self, EngineError> {
        let built: Vec<Option<CustomerModel<S>>> = histories
            .par_iter()
            .map(|h| CustomerModel::build(h, as_of, &config))
            .collect::<Result<_, _>>()?;
        let mut customers = BTreeMap::new();
        let mut catalogue = BTreeSet::new();
        for model in built.into_iter().flatten() {
            catalogue.extend(model.profile.items().iter().cloned());
            customers.insert(model.history.customer().clone(), model);
        }
        Ok(ModelStore {
            format: STORE_FORMAT,
            config,
            customers,
            catalogue,
        })
    }

    pub fn config(&self) -> &RunConfig<S> {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    /// Customer ids in canonical order.
    pub fn customer_ids(&self) -> impl Iterator<Item = &CustomerId> {
        self.customers.keys()
    }

    pub fn customer(&self, id: &str) -> Option<&CustomerModel<S>> {
        self.customers.get(id)
    }

    /// Every item token seen in any loaded profile.
    pub fn catalogue(&self) -> &BTreeSet<ItemId> {
        &self.catalogue
    }

    pub fn items(&self, id: &str) -> Result<Vec<ItemSummary<S>>, EngineError> {
        let model = self
            .customer(id)
            .ok_or_else(|| EngineError::UnknownCustomer(id.to_string()))?;
        Ok(model
            .profile
            .iter()
            .map(|(item, s)| ItemSummary {
                item: item.clone(),
                f: s.base_freq,
                appearances: s.appearances,
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String, EngineError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EngineError> {
        #[derive(Deserialize)]
        struct Header {
            format: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.format != STORE_FORMAT {
            return Err(EngineError::Format {
                found: header.format,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    /// Answer a what-if request. Basket tokens must be known to the store;
    /// the basket is dated at the customer's profile reference day.
    pub fn predict(&self, request: &PredictRequest) -> Result<PredictResponse<S>, EngineError> {
        let model = self
            .customer(&request.customer_id)
            .ok_or_else(|| EngineError::UnknownCustomer(request.customer_id.clone()))?;
        if request.basket.is_empty() {
            return Err(EngineError::EmptyBasket);
        }
        let k = request.k.unwrap_or(self.config.xmt.k);
        if k == 0 {
            return Err(EngineError::ZeroK);
        }
        let mut unknown = Vec::new();
        let mut items = Vec::with_capacity(request.basket.len());
        for token in &request.basket {
            let id = ItemId::new(token).map_err(|_| EngineError::BadToken(token.clone()))?;
            if self.catalogue.contains(&id) {
                items.push(id);
            } else {
                unknown.push(token.clone());
            }
        }
        if !unknown.is_empty() {
            return Err(EngineError::UnknownItems(unknown));
        }
        let method = request.method.unwrap_or(self.config.method);
        let at = model.profile.as_of();
        let current = Basket::new(at, model.history.len() as u32, items)
            .map_err(|_| EngineError::EmptyBasket)?;
        let xmt = self.config.xmt.clone().with_k(k);

        let scored: Option<Prediction<S>> = match method {
            PredictorKind::Xmt => Some(predict_with_scores(&model.profile, &current, &xmt, None)),
            PredictorKind::Txmt => {
                // Patterns are mined per request: only those the context can activate.
                let omega =
                    history_scores(model.history.baskets(), &current, at, &self.config.tars);
                Some(predict_with_scores(
                    &model.profile,
                    &current,
                    &xmt,
                    Some(&omega),
                ))
            }
            _ => None,
        };
        let mut response = PredictResponse {
            customer_id: model.history.customer().clone(),
            method,
            k,
            at,
            basket: current.items().to_vec(),
            forgotten: Vec::new(),
            predicted_basket: None,
            breakdowns: None,
            explanations: None,
            config: PredictConfig {
                xmt: xmt.clone(),
                tars: self.config.tars,
            },
        };
        match scored {
            Some(p) => {
                if request.explain {
                    response.explanations = Some(explain_prediction(&p, &model.profile, &xmt)?);
                    response.breakdowns = Some(
                        p.forgotten
                            .iter()
                            .filter_map(|i| p.breakdowns.get(i).cloned())
                            .collect(),
                    );
                }
                response.forgotten = p.forgotten;
                response.predicted_basket = Some(p.predicted_basket);
            }
            None => {
                let input = PredictionInput {
                    prefix: model.history.baskets(),
                    profile: &model.profile,
                    current: &current,
                };
                response.forgotten = predictor(method, &xmt, &self.config.tars)
                    .predict(&input, k)
                    .map_err(|e| EngineError::Predict(e.to_string()))?;
            }
        }
        Ok(response)
    }
}

/// The canonical JSON document for a prediction, shared by the command line
/// and the HTTP service so both emit identical bytes.
pub fn render_prediction<S: Scalar>(response: &PredictResponse<S>) -> Result<String, EngineError> {
    Ok(serde_json::to_string_pretty(response)?)
}
