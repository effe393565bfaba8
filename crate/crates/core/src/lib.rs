//! Interpretable forgotten-item prediction.
//!
//! Given a customer's purchase history and the basket they are buying now,
//! predict which regularly bought items are missing from it. Scores are
//! additive and each component maps to a human-readable explanation.
//!
//! The engine is generic over the score type ([`Scalar`], implemented for
//! `f32` and `f64`); the aliases below fix it to one of them.

pub mod baselines;
pub mod config;
pub mod domain;
pub mod engine;
pub mod eval;
pub mod explain;
pub mod ingest;
pub mod labeler;
pub mod profile;
pub mod scalar;
pub mod tars;
pub mod xmt;

pub use baselines::{predictor, ForgottenItemPredictor, PredictionInput, PredictorKind};
pub use config::RunConfig;
pub use domain::{Basket, CustomerHistory, CustomerId, Day, ItemId, LabelerConfig, XmtConfig};
pub use engine::{ModelStore, PredictRequest, PredictResponse};
pub use eval::{evaluate, sweep, EvalReport, EvalSettings, SplitSpec};
pub use explain::{explain, Explanation};
pub use labeler::{label_forgotten, ForgottenInstance};
pub use profile::{build_profile, CustomerProfile, ItemStats};
pub use scalar::Scalar;
pub use tars::{mine_tars, OmegaScores, TarsConfig, TarsPattern};
pub use xmt::{predict_forgotten, Prediction, ScoreBreakdown};

pub type XmtConfigF64 = XmtConfig<f64>;
pub type XmtConfigF32 = XmtConfig<f32>;
pub type CustomerProfileF64 = CustomerProfile<f64>;
pub type CustomerProfileF32 = CustomerProfile<f32>;
pub type ScoreBreakdownF64 = ScoreBreakdown<f64>;
pub type PredictionF64 = Prediction<f64>;
pub type RunConfigF64 = RunConfig<f64>;
pub type ModelStoreF64 = ModelStore<f64>;
pub type PredictResponseF64 = PredictResponse<f64>;
