//! Fixed-template explanations built from a score breakdown and the profile
//! it was scored against.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::domain::{Basket, ItemId, XmtConfig};
use crate::profile::CustomerProfile;
use crate::scalar::Scalar;
use crate::xmt::{Prediction, ScoreBreakdown};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExplainError {
    #[error("item {0} is not in the profile")]
    UnknownItem(ItemId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Recency,
    Seasonal,
    Copurchase,
    Tars,
    Repurchase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ExplanationLine<S: Scalar> {
    pub kind: LineKind,
    pub text: String,
    /// Raw numbers behind the text, keyed by name.
    pub values: BTreeMap<String, S>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Explanation<S: Scalar> {
    pub item: ItemId,
    pub lines: Vec<ExplanationLine<S>>,
}

fn pct<S: Scalar>(x: S) -> String {
    format!("{:.1}", x.as_f64() * 100.0)
}

fn line<S: Scalar>(kind: LineKind, text: String, values: &[(&str, S)]) -> ExplanationLine<S> {
    ExplanationLine {
        kind,
        text,
        values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    }
}

/// Explain one scored item. A line other than recency appears only when its
/// score component contributed.
pub fn explain<S: Scalar>(
    breakdown: &ScoreBreakdown<S>,
    profile: &CustomerProfile<S>,
    current: &Basket,
    cfg: &XmtConfig<S>,
) -> Result<Explanation<S>, ExplainError> {
    let item = &breakdown.item;
    let stats = profile
        .stats(item.as_str())
        .ok_or_else(|| ExplainError::UnknownItem(item.clone()))?;
    let mut lines = Vec::new();

    let since = stats.days_since_last.unwrap_or(0);
    let since_s = S::lit(f64::from(since));
    lines.push(match stats.mean_interval_days {
        Some(mean) => line(
            LineKind::Recency,
            format!(
                "Last purchased {since} days ago (typically bought every {:.1} days)",
                mean.as_f64()
            ),
            &[("days_since_last", since_s), ("mean_interval_days", mean)],
        ),
        None => line(
            LineKind::Recency,
            format!("Last purchased {since} days ago"),
            &[("days_since_last", since_s)],
        ),
    });

    if breakdown.sigma > breakdown.tau {
        let ratio = stats.seasonal_ratio_current;
        lines.push(line(
            LineKind::Seasonal,
            format!(
                "Usually bought in this season ({}% of purchases)",
                pct(ratio)
            ),
            &[("seasonal_ratio", ratio)],
        ));
    }

    if breakdown.kappa > S::zero() {
        let partners: Vec<(&ItemId, u32)> = current
            .items()
            .iter()
            .map(|j| (j, profile.copurchase(item.as_str(), j.as_str())))
            .filter(|&(_, c)| c > cfg.copurchase_threshold)
            .collect();
        let names: Vec<&str> = partners.iter().map(|(j, _)| j.as_str()).collect();
        let mut values: Vec<(String, S)> = vec![("kappa".to_string(), breakdown.kappa)];
        values.extend(
            partners
                .iter()
                .map(|(j, c)| (format!("copurchase:{j}"), S::lit(f64::from(*c)))),
        );
        lines.push(ExplanationLine {
            kind: LineKind::Copurchase,
            text: format!(
                "Often bought with current basket items: {}",
                names.join(", ")
            ),
            values: values.into_iter().collect(),
        });
    }

    if breakdown.omega > S::zero() {
        lines.push(line(
            LineKind::Tars,
            format!(
                "TARS pattern analysis suggests this item is likely to be needed (pattern score: {}%)",
                pct(breakdown.omega)
            ),
            &[("omega", breakdown.omega)],
        ));
    }

    if breakdown.psi > S::zero() {
        if let Some(rate) = stats.repurchase_rate() {
            lines.push(line(
                LineKind::Repurchase,
                format!(
                    "Often repurchased soon after large shopping trips ({}% of opportunities)",
                    pct(rate)
                ),
                &[
                    ("repurchase_rate", rate),
                    (
                        "repurchase_events",
                        S::lit(f64::from(stats.repurchase_events)),
                    ),
                    (
                        "repurchase_opportunities",
                        S::lit(f64::from(stats.repurchase_opportunities)),
                    ),
                ],
            ));
        }
    }

    Ok(Explanation {
        item: item.clone(),
        lines,
    })
}

/// Explanations for every forgotten item of a prediction, in prediction order.
pub fn explain_prediction<S: Scalar>(
    prediction: &Prediction<S>,
    profile: &CustomerProfile<S>,
    cfg: &XmtConfig<S>,
) -> Result<Vec<Explanation<S>>, ExplainError> {
    prediction
        .forgotten
        .iter()
        .map(|item| {
            let b = prediction
                .breakdowns
                .get(item)
                .ok_or_else(|| ExplainError::UnknownItem(item.clone()))?;
            explain(b, profile, &prediction.current_basket, cfg)
        })
        .collect()
}

impl<S: Scalar> fmt::Display for Explanation<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(out, "{}", self.item)?;
        for l in &self.lines {
            writeln!(out, "  - {}", l.text)?;
        }
        f.write_str(&out)
    }
}
