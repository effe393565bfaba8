//! Split-based evaluation on the first forgotten basket of each customer's
//! test segment, with macro-averaged precision, recall and F1.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{predictor, ForgottenItemPredictor, PredictionInput, PredictorKind};
use crate::domain::{CustomerHistory, CustomerId, DomainError, ItemId, LabelerConfig, XmtConfig};
use crate::labeler::follow_up;
use crate::profile::{build_profile_from, ProfileError};
use crate::scalar::Scalar;
use crate::tars::TarsConfig;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("history of {0} has fewer than 2 baskets")]
    TooShort(CustomerId),
    #[error("train fraction {0} outside (0, 1)")]
    BadSplit(f64),
    #[error("no actual items to score against")]
    EmptyActual,
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Config(#[from] DomainError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// Share of each customer's baskets used for training.
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.3,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.train_fraction > 0.0 && self.train_fraction < 1.0 {
            Ok(())
        } else {
            Err(EvalError::BadSplit(self.train_fraction))
        }
    }

    /// `max(1, floor(train_fraction * n))`.
    pub fn train_len(&self, n: usize) -> usize {
        ((self.train_fraction * n as f64).floor() as usize).max(1)
    }
}

pub fn split_history(
    history: &CustomerHistory,
    spec: &SplitSpec,
) -> Result<(CustomerHistory, CustomerHistory), EvalError> {
    spec.validate()?;
    if history.len() < 2 {
        return Err(EvalError::TooShort(history.customer().clone()));
    }
    let cut = spec.train_len(history.len());
    Ok((history.slice(0..cut), history.slice(cut..history.len())))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf<S> {
    pub precision: S,
    pub recall: S,
    pub f1: S,
}

/// Precision, recall and F1 of a predicted item set against the actual one.
pub fn prf<S: Scalar>(predicted: &[ItemId], actual: &[ItemId]) -> Result<Prf<S>, EvalError> {
    let mut actual: Vec<&ItemId> = actual.iter().collect();
    actual.sort_unstable();
    actual.dedup();
    if actual.is_empty() {
        return Err(EvalError::EmptyActual);
    }
    let mut predicted: Vec<&ItemId> = predicted.iter().collect();
    predicted.sort_unstable();
    predicted.dedup();
    let hits = predicted
        .iter()
        .filter(|p| actual.binary_search(p).is_ok())
        .count();
    let hits_s = S::from_count(hits);
    let precision = if predicted.is_empty() {
        S::zero()
    } else {
        hits_s / S::from_count(predicted.len())
    };
    let recall = hits_s / S::from_count(actual.len());
    let f1 = S::lit(2.0) * hits_s / S::from_count(predicted.len() + actual.len());
    Ok(Prf {
        precision,
        recall,
        f1,
    })
}

/// Scorer, pattern and labeling settings for an evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default, deny_unknown_fields)]
pub struct EvalSettings<S: Scalar> {
    pub xmt: XmtConfig<S>,
    pub tars: TarsConfig,
    pub labeler: LabelerConfig,
    pub split: SplitSpec,
    /// Build profiles from the training segment only instead of every basket
    /// before the predicted one.
    pub train_only_profile: bool,
}

impl<S: Scalar> Default for EvalSettings<S> {
    fn default() -> Self {
        EvalSettings {
            xmt: XmtConfig::default(),
            tars: TarsConfig::default(),
            labeler: LabelerConfig::default(),
            split: SplitSpec::default(),
            train_only_profile: false,
        }
    }
}

impl<S: Scalar> EvalSettings<S> {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.xmt.validate()?;
        self.labeler.validate()?;
        self.split.validate()
    }
}

/// Result for one evaluated customer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomerOutcome {
    pub customer: CustomerId,
    pub t_index: usize,
    pub f_index: usize,
    /// Number of baskets the profile was built from.
    pub profile_len: usize,
    pub predicted: Vec<ItemId>,
    pub actual: Vec<ItemId>,
    pub scores: Prf<f64>,
}

/// Evaluate one customer: `None` when the test segment holds no forgotten basket.
pub fn evaluate_customer<S: Scalar>(
    history: &CustomerHistory,
    model: &dyn ForgottenItemPredictor<S>,
    settings: &EvalSettings<S>,
) -> Result<Option<CustomerOutcome>, EvalError> {
    if history.len() < 2 {
        return Ok(None);
    }
    let baskets = history.baskets();
    let n_train = settings.split.train_len(baskets.len());
    let Some((t, f)) = (n_train..baskets.len())
        .find_map(|t| follow_up(baskets, t, &settings.labeler).map(|f| (t, f)))
    else {
        return Ok(None);
    };
    let current = &baskets[t];
    let prefix = if settings.train_only_profile {
        &baskets[..n_train]
    } else {
        &baskets[..t]
    };
    let profile = build_profile_from(history.customer(), prefix, current.date(), &settings.xmt)?;
    let input = PredictionInput {
        prefix,
        profile: &profile,
        current,
    };
    let predicted = match model.predict(&input, settings.xmt.k) {
        Ok(p) => p,
        Err(e) => {
            log::debug!(
                "{}: {} produced no prediction: {e}",
                history.customer(),
                model.kind()
            );
            Vec::new()
        }
    };
    let actual = baskets[f].items().to_vec();
    let scores = prf::<f64>(&predicted, &actual)?;
    Ok(Some(CustomerOutcome {
        customer: history.customer().clone(),
        t_index: t,
        f_index: f,
        profile_len: prefix.len(),
        predicted,
        actual,
        scores,
    }))
}

/// Per-customer outcomes in input order.
pub fn evaluate_outcomes<S: Scalar>(
    histories: &[CustomerHistory],
    method: PredictorKind,
    settings: &EvalSettings<S>,
) -> Result<Vec<CustomerOutcome>, EvalError> {
    settings.validate()?;
    let model = predictor(method, &settings.xmt, &settings.tars);
    let results: Vec<Result<Option<CustomerOutcome>, EvalError>> = histories
        .par_iter()
        .map(|h| evaluate_customer(h, model.as_ref(), settings))
        .collect();
    let mut outcomes = Vec::new();
    for r in results {
        if let Some(o) = r? {
            outcomes.push(o);
        }
    }
    Ok(outcomes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Population mean and standard deviation, summed in input order.
pub fn mean_std(values: &[f64]) -> Option<MeanStd> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(MeanStd {
        mean,
        std: var.sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: PredictorKind,
    pub k: usize,
    pub horizon: u32,
    pub split: f64,
    pub precision: Option<MeanStd>,
    pub recall: Option<MeanStd>,
    pub f1: Option<MeanStd>,
    pub n_customers: usize,
    /// Seconds; cleared when reproducible output is wanted.
    pub wall_time_s: Option<f64>,
}

pub fn aggregate(
    method: PredictorKind,
    settings_k: usize,
    labeler: &LabelerConfig,
    split: &SplitSpec,
    outcomes: &[CustomerOutcome],
) -> EvalReport {
    let pick =
        |f: fn(&Prf<f64>) -> f64| -> Vec<f64> { outcomes.iter().map(|o| f(&o.scores)).collect() };
    EvalReport {
        method,
        k: settings_k,
        horizon: labeler.horizon_days,
        split: split.train_fraction,
        precision: mean_std(&pick(|s| s.precision)),
        recall: mean_std(&pick(|s| s.recall)),
        f1: mean_std(&pick(|s| s.f1)),
        n_customers: outcomes.len(),
        wall_time_s: None,
    }
}

pub fn evaluate<S: Scalar>(
    histories: &[CustomerHistory],
    method: PredictorKind,
    settings: &EvalSettings<S>,
) -> Result<EvalReport, EvalError> {
    let started = Instant::now();
    let outcomes = evaluate_outcomes(histories, method, settings)?;
    let mut report = aggregate(
        method,
        settings.xmt.k,
        &settings.labeler,
        &settings.split,
        &outcomes,
    );
    report.wall_time_s = Some(started.elapsed().as_secs_f64());
    Ok(report)
}

/// Settings grid for [`sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub methods: Vec<PredictorKind>,
    pub ks: Vec<usize>,
    pub horizons: Vec<u32>,
    pub splits: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub method: PredictorKind,
    pub k: usize,
    pub horizon: u32,
    pub split: f64,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellOutcome {
    Report(EvalReport),
    Error(String),
}

/// Evaluate every combination of the grid (method, split, horizon, k order).
pub fn sweep<S: Scalar>(
    histories: &[CustomerHistory],
    grid: &SweepGrid,
    base: &EvalSettings<S>,
) -> Vec<SweepCell> {
    let mut cells = Vec::new();
    for &method in &grid.methods {
        for &split in &grid.splits {
            for &horizon in &grid.horizons {
                for &k in &grid.ks {
                    let mut settings = base.clone();
                    settings.xmt.k = k;
                    settings.labeler.horizon_days = horizon;
                    settings.split.train_fraction = split;
                    let outcome = match evaluate(histories, method, &settings) {
                        Ok(r) => CellOutcome::Report(r),
                        Err(e) => {
                            log::warn!("sweep cell {method} k={k} h={horizon} split={split}: {e}");
                            CellOutcome::Error(e.to_string())
                        }
                    };
                    cells.push(SweepCell {
                        method,
                        k,
                        horizon,
                        split,
                        outcome,
                    });
                }
            }
        }
    }
    cells
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "method",
    "k",
    "h",
    "split",
    "precision_mean",
    "precision_std",
    "recall_mean",
    "recall_std",
    "f1_mean",
    "f1_std",
    "n_customers",
    "wall_time_s",
];

/// Write sweep cells as CSV. Error cells keep their settings and leave the
/// metric columns empty.
pub fn write_report_csv<W: Write>(cells: &[SweepCell], sink: W) -> Result<(), EvalError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(REPORT_COLUMNS)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for cell in cells {
        let mut row = vec![
            cell.method.to_string(),
            cell.k.to_string(),
            cell.horizon.to_string(),
            cell.split.to_string(),
        ];
        match &cell.outcome {
            CellOutcome::Report(r) => {
                for m in [r.precision, r.recall, r.f1] {
                    row.push(opt(m.map(|m| m.mean)));
                    row.push(opt(m.map(|m| m.std)));
                }
                row.push(r.n_customers.to_string());
                row.push(opt(r.wall_time_s));
            }
            CellOutcome::Error(_) => row.extend(std::iter::repeat_n(String::new(), 8)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

impl From<EvalReport> for SweepCell {
    fn from(r: EvalReport) -> Self {
        SweepCell {
            method: r.method,
            k: r.k,
            horizon: r.horizon,
            split: r.split,
            outcome: CellOutcome::Report(r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Basket, Day};

    fn ids(v: &[&str]) -> Vec<ItemId> {
        v.iter().map(|s| ItemId::new(s).unwrap()).collect()
    }

    fn history(n: usize) -> CustomerHistory {
        let d = Day::from_ymd(2020, 1, 1).unwrap();
        CustomerHistory::new(
            CustomerId::new("u").unwrap(),
            (0..n)
                .map(|i| Basket::new(d.plus(i as i64 * 3), i as u32, ids(&["a"])).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn split_floor_and_clamp() {
        let sizes = |n, f| {
            let (a, b) = split_history(&history(n), &SplitSpec { train_fraction: f }).unwrap();
            (a.len(), b.len())
        };
        assert_eq!(sizes(10, 0.3), (3, 7));
        assert_eq!(sizes(10, 0.5), (5, 5));
        assert_eq!(sizes(3, 0.1), (1, 2));
        assert!(split_history(&history(1), &SplitSpec::default()).is_err());
        assert!(split_history(
            &history(5),
            &SplitSpec {
                train_fraction: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn prf_examples() {
        let r: Prf<f64> = prf(&ids(&["a", "b", "c"]), &ids(&["b", "c"])).unwrap();
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.recall, 1.0);
        assert!((r.f1 - 0.8).abs() < 1e-15);
        let id: Prf<f64> = prf(&ids(&["a"]), &ids(&["a"])).unwrap();
        assert_eq!((id.precision, id.recall, id.f1), (1.0, 1.0, 1.0));
        let none: Prf<f64> = prf(&ids(&["a"]), &ids(&["b"])).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        let empty: Prf<f64> = prf(&[], &ids(&["b"])).unwrap();
        assert_eq!(empty.precision, 0.0);
        assert!(matches!(
            prf::<f64>(&ids(&["a"]), &[]),
            Err(EvalError::EmptyActual)
        ));
    }

    #[test]
    fn mean_std_of_constant_is_zero_spread() {
        assert_eq!(
            mean_std(&[1.0, 1.0]),
            Some(MeanStd {
                mean: 1.0,
                std: 0.0
            })
        );
        assert_eq!(mean_std(&[]), None);
        let m = mean_std(&[0.0, 2.0]).unwrap();
        assert_eq!((m.mean, m.std), (1.0, 1.0));
    }

    #[test]
    fn no_evaluable_customers_gives_empty_report() {
        let r = evaluate(
            &[history(10)],
            PredictorKind::Top,
            &EvalSettings::<f64>::default(),
        )
        .unwrap();
        assert_eq!(r.n_customers, 0);
        assert!(r.f1.is_none());
    }
}
