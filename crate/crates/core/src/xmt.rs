//! Multi-factor forgotten-item scoring.
//!
//! Each candidate item gets a decomposable score:
//!
//! * `f`: purchase frequency, masked below the minimum-appearances threshold;
//! * `tau`: `f` boosted when the item is due (days since last purchase between
//!   the median interval and `max_interval_multiplier` times it, and not
//!   beyond the discontinuation horizon);
//! * `sigma`: `tau` boosted when the current season holds a large share of
//!   the item's purchases;
//! * `kappa`: a fixed bonus per current-basket item it is often bought with;
//! * `psi`: a fixed bonus when it is usually repurchased shortly after large
//!   shopping trips.
//!
//! `map = sigma + kappa + psi`. Prediction runs in two phases: the
//! `|basket| + k` items with the highest `sigma` form the predicted basket,
//! then the items of that basket the customer did not buy are ranked by
//! `map` (or `map + omega` with pattern scores) and the top `k` returned.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Basket, CustomerId, Day, ItemId, XmtConfig};
use crate::profile::{CustomerProfile, ItemStats};
use crate::scalar::{desc_then_key, Scalar};
use crate::tars::OmegaScores;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ScoreBreakdown<S: Scalar> {
    pub item: ItemId,
    pub f: S,
    pub tau: S,
    pub sigma: S,
    pub kappa: S,
    pub psi: S,
    /// Normalised pattern score; zero when patterns are not used.
    pub omega: S,
    pub map: S,
    pub tmap: S,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Prediction<S: Scalar> {
    pub customer: CustomerId,
    pub at: Day,
    pub current_basket: Basket,
    /// Phase-one selection, best first.
    pub predicted_basket: Vec<ItemId>,
    /// Forgotten items, best first; at most `k`.
    pub forgotten: Vec<ItemId>,
    /// Scores of every phase-two candidate.
    pub breakdowns: BTreeMap<ItemId, ScoreBreakdown<S>>,
}

pub fn temporal_proximity<S: Scalar>(
    f: S,
    median_interval: Option<u32>,
    days_since_last: Option<u32>,
    cfg: &XmtConfig<S>,
) -> S {
    let due = match (median_interval, days_since_last) {
        (Some(eta), Some(phi)) => {
            let eta_s = S::from_u32(eta).expect("u32");
            let phi_s = S::from_u32(phi).expect("u32");
            eta <= phi
                && phi_s <= eta_s * cfg.max_interval_multiplier
                && phi <= cfg.discontinuation_days
        }
        _ => false,
    };
    if due {
        f * (S::one() + (cfg.temporal_boost - S::one()))
    } else {
        f
    }
}

pub fn seasonal_context<S: Scalar>(tau: S, seasonal_ratio: S, cfg: &XmtConfig<S>) -> S {
    if seasonal_ratio > cfg.seasonality_threshold {
        tau * (S::one() + (cfg.seasonal_boost - S::one()))
    } else {
        tau
    }
}

/// Co-purchase bonus of `item` given the current basket.
pub fn basket_affinity<S: Scalar>(
    item: &ItemId,
    current: &Basket,
    profile: &CustomerProfile<S>,
    cfg: &XmtConfig<S>,
) -> S {
    let matches = current
        .items()
        .iter()
        .filter(|j| profile.copurchase(item.as_str(), j.as_str()) > cfg.copurchase_threshold)
        .count();
    cfg.copurchase_boost * S::from_count(matches)
}

pub fn repurchase_tendency<S: Scalar>(stats: &ItemStats<S>, cfg: &XmtConfig<S>) -> S {
    if stats.repurchase_opportunities == 0
        || stats.repurchase_opportunities < cfg.min_repurchase_opportunities
    {
        return S::zero();
    }
    match stats.repurchase_rate() {
        Some(rate) if rate > cfg.repurchase_rate_threshold => cfg.repurchase_boost,
        _ => S::zero(),
    }
}

/// `sigma` of one profiled item (phase one).
pub fn seasonal_score<S: Scalar>(stats: &ItemStats<S>, cfg: &XmtConfig<S>) -> (S, S, S) {
    let f = stats.base_freq;
    let tau = temporal_proximity(f, stats.median_interval_days, stats.days_since_last, cfg);
    let sigma = seasonal_context(tau, stats.seasonal_ratio_current, cfg);
    (f, tau, sigma)
}

/// Full decomposition of one item against the current basket.
pub fn score_item<S: Scalar>(
    profile: &CustomerProfile<S>,
    item: &ItemId,
    current: &Basket,
    cfg: &XmtConfig<S>,
    omega: Option<&OmegaScores<S>>,
) -> Option<ScoreBreakdown<S>> {
    let stats = profile.stats(item.as_str())?;
    let (f, tau, sigma) = seasonal_score(stats, cfg);
    let kappa = basket_affinity(item, current, profile, cfg);
    let psi = repurchase_tendency(stats, cfg);
    let omega = omega.map_or(S::zero(), |o| o.get(item));
    let map = sigma + kappa + psi;
    Some(ScoreBreakdown {
        item: item.clone(),
        f,
        tau,
        sigma,
        kappa,
        psi,
        omega,
        map,
        tmap: map + omega,
    })
}

/// XMT: two-phase prediction ranked by `map`.
pub fn predict_forgotten<S: Scalar>(
    profile: &CustomerProfile<S>,
    current: &Basket,
    cfg: &XmtConfig<S>,
) -> Prediction<S> {
    predict_with_scores(profile, current, cfg, None)
}

/// Two-phase prediction. With `omega`, phase two ranks by `map + omega`.
pub fn predict_with_scores<S: Scalar>(
    profile: &CustomerProfile<S>,
    current: &Basket,
    cfg: &XmtConfig<S>,
    omega: Option<&OmegaScores<S>>,
) -> Prediction<S> {
    let mut phase_one: Vec<(S, &ItemId)> = profile
        .iter()
        .map(|(item, stats)| (seasonal_score(stats, cfg).2, item))
        .collect();
    let keep = (current.len() + cfg.k).min(phase_one.len());
    if keep < phase_one.len() {
        phase_one.select_nth_unstable_by(keep, |a, b| desc_then_key(*a, *b));
        phase_one.truncate(keep);
    }
    phase_one.sort_unstable_by(|a, b| desc_then_key(*a, *b));
    let predicted_basket: Vec<ItemId> = phase_one.iter().map(|(_, i)| (*i).clone()).collect();

    let mut breakdowns = BTreeMap::new();
    let mut ranked: Vec<(S, &ItemId)> = Vec::new();
    for item in predicted_basket.iter().filter(|i| !current.contains(i)) {
        let b = score_item(profile, item, current, cfg, omega).expect("profiled item");
        let key = if omega.is_some() { b.tmap } else { b.map };
        ranked.push((key, item));
        breakdowns.insert(item.clone(), b);
    }
    ranked.sort_unstable_by(|a, b| desc_then_key(*a, *b));
    let forgotten = ranked
        .into_iter()
        .take(cfg.k)
        .map(|(_, i)| i.clone())
        .collect();

    Prediction {
        customer: profile.customer().clone(),
        at: profile.as_of(),
        current_basket: current.clone(),
        predicted_basket,
        forgotten,
        breakdowns,
    }
}
