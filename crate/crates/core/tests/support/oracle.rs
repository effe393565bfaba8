//! Brute-force reference implementations, written directly from the scoring
//! definitions and sharing no code with the engine beyond the input types.
//! Used by the core integration tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::Datelike;
use fip_core::domain::{
    Basket, CustomerHistory, CustomerId, Day, ItemId, LabelerConfig, XmtConfig,
};
use rand::Rng;

/// `[f, tau, sigma, kappa, psi, map]` of one item.
pub type Components = [f64; 6];

fn holds(b: &Basket, item: &str) -> bool {
    b.items().iter().any(|i| i.as_str() == item)
}

fn indicator(c: bool) -> f64 {
    if c {
        1.0
    } else {
        0.0
    }
}

fn quarter(d: Day) -> u32 {
    (d.date().month() - 1) / 3
}

/// Every item of the history scored against `current` at `as_of`.
pub fn score_all(
    baskets: &[Basket],
    as_of: Day,
    current: &Basket,
    cfg: &XmtConfig<f64>,
) -> BTreeMap<String, Components> {
    let universe: BTreeSet<String> = baskets
        .iter()
        .flat_map(|b| b.items().iter().map(|i| i.as_str().to_string()))
        .collect();
    universe
        .into_iter()
        .map(|item| {
            let c = score_one(baskets, as_of, current, cfg, &item);
            (item, c)
        })
        .collect()
}

pub fn score_one(
    baskets: &[Basket],
    as_of: Day,
    current: &Basket,
    cfg: &XmtConfig<f64>,
    item: &str,
) -> Components {
    let n = baskets.len() as f64;
    let with: Vec<usize> = (0..baskets.len())
        .filter(|&p| holds(&baskets[p], item))
        .collect();
    let count = with.len();

    let f = count as f64 / n * indicator(count >= cfg.min_appearances);

    // Intervals between distinct purchase days.
    let days: BTreeSet<i64> = with
        .iter()
        .map(|&p| {
            baskets[p]
                .date()
                .days_since(Day::from_ymd(1, 1, 1).unwrap())
        })
        .collect();
    let days: Vec<i64> = days.into_iter().collect();
    let mut gaps: Vec<i64> = days.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort();
    let last = *days.last().unwrap();
    let phi = (as_of.days_since(Day::from_ymd(1, 1, 1).unwrap()) - last) as f64;
    let due = if gaps.is_empty() {
        false
    } else {
        let eta = gaps[(gaps.len() - 1) / 2] as f64;
        eta <= phi
            && phi <= eta * cfg.max_interval_multiplier
            && phi <= cfg.discontinuation_days as f64
    };
    let tau = f * (1.0 + (cfg.temporal_boost - 1.0) * indicator(due));

    let season = quarter(as_of);
    let in_season = with
        .iter()
        .filter(|&&p| quarter(baskets[p].date()) == season)
        .count();
    let rho = in_season as f64 / count as f64;
    let sigma =
        tau * (1.0 + (cfg.seasonal_boost - 1.0) * indicator(rho > cfg.seasonality_threshold));

    let mut matches = 0usize;
    for j in current.items() {
        let chi = baskets
            .iter()
            .filter(|b| holds(b, item) && holds(b, j.as_str()))
            .count();
        if chi > cfg.copurchase_threshold as usize {
            matches += 1;
        }
    }
    let kappa = cfg.copurchase_boost * matches as f64;

    let first = with[0];
    let mut lambda = 0usize;
    let mut zeta = 0usize;
    for l in first + 1..baskets.len() {
        if baskets[l].len() <= cfg.large_basket_size || holds(&baskets[l], item) {
            continue;
        }
        lambda += 1;
        if let Some(m) = (l + 1..baskets.len()).find(|&m| holds(&baskets[m], item)) {
            if baskets[m].date().days_since(baskets[l].date()) <= cfg.repurchase_window_days as i64
            {
                zeta += 1;
            }
        }
    }
    let psi = if lambda >= cfg.min_repurchase_opportunities as usize && lambda > 0 {
        cfg.repurchase_boost
            * indicator(zeta as f64 / lambda as f64 > cfg.repurchase_rate_threshold)
    } else {
        0.0
    };

    [f, tau, sigma, kappa, psi, sigma + kappa + psi]
}

fn ranked(mut entries: Vec<(f64, String)>) -> Vec<String> {
    entries.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    entries.into_iter().map(|(_, s)| s).collect()
}

/// Two-phase selection by full sorting: top `|current| + k` by sigma, then
/// the top `k` of those not in `current` by map (plus omega when given).
pub fn select(
    scores: &BTreeMap<String, Components>,
    current: &Basket,
    k: usize,
    omega: Option<&BTreeMap<String, f64>>,
) -> Vec<String> {
    let phase_one: Vec<String> = ranked(scores.iter().map(|(i, c)| (c[2], i.clone())).collect())
        .into_iter()
        .take(current.len() + k)
        .collect();
    let candidates = phase_one
        .into_iter()
        .filter(|i| !holds(current, i))
        .map(|i| {
            let bonus = omega.and_then(|o| o.get(&i)).copied().unwrap_or(0.0);
            (scores[&i][5] + bonus, i)
        })
        .collect();
    ranked(candidates).into_iter().take(k).collect()
}

/// Frequency ranking of items outside `current`.
pub fn top(baskets: &[Basket], current: &Basket, k: usize) -> Vec<String> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for b in baskets {
        for i in b.items() {
            *counts.entry(i.as_str().to_string()).or_default() += 1;
        }
    }
    ranked(
        counts
            .into_iter()
            .filter(|(i, _)| !holds(current, i))
            .map(|(i, c)| (c as f64, i))
            .collect(),
    )
    .into_iter()
    .take(k)
    .collect()
}

/// `(t, f)` pairs by scanning every ordered pair of baskets.
pub fn label_pairs(baskets: &[Basket], cfg: &LabelerConfig) -> Vec<(usize, usize)> {
    let large = |b: &Basket| b.len() > cfg.large_basket_size;
    let small = |b: &Basket| b.len() <= cfg.max_forgotten_size;
    let mut out = Vec::new();
    for t in 0..baskets.len() {
        for f in t + 1..baskets.len() {
            let ok = large(&baskets[t])
                && small(&baskets[f])
                && baskets[f].date().days_since(baskets[t].date()) <= cfg.horizon_days as i64
                && (t + 1..f).all(|q| !large(&baskets[q]) && !small(&baskets[q]));
            if ok {
                out.push((t, f));
            }
        }
    }
    out
}

/// An exhaustively mined pattern: `(head, tail, support, [min, median, max])`.
pub type RawPattern = (Vec<String>, Vec<String>, usize, [u32; 3]);

fn itemsets(universe: &[String], max: usize) -> Vec<Vec<String>> {
    let n = universe.len();
    (1u64..(1 << n))
        .filter(|m| (m.count_ones() as usize) <= max)
        .map(|m| {
            (0..n)
                .filter(|b| m & (1 << b) != 0)
                .map(|b| universe[b].clone())
                .collect()
        })
        .collect()
}

fn contains_set(b: &Basket, set: &[String]) -> bool {
    set.iter().all(|i| holds(b, i))
}

fn occurrence_pairs(baskets: &[Basket], head: &[String], tail: &[String]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..baskets.len() {
        for b in a + 1..baskets.len() {
            if contains_set(&baskets[a], head)
                && contains_set(&baskets[b], tail)
                && (a + 1..b)
                    .all(|q| !contains_set(&baskets[q], head) && !contains_set(&baskets[q], tail))
            {
                out.push((a, b));
            }
        }
    }
    out
}

fn is_subset(a: &[String], b: &[String]) -> bool {
    a.iter().all(|x| b.contains(x))
}

/// All minimal patterns by enumerating every (head, tail) pair of itemsets.
/// Only practical for small universes.
pub fn tars_exhaustive(baskets: &[Basket], min_support: usize, max_size: usize) -> Vec<RawPattern> {
    let universe: Vec<String> = baskets
        .iter()
        .flat_map(|b| b.items().iter().map(|i| i.as_str().to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    assert!(
        universe.len() <= 12,
        "universe too large for exhaustive mining"
    );
    let sets = itemsets(&universe, max_size);
    let occ: BTreeMap<(Vec<String>, Vec<String>), Vec<(usize, usize)>> = sets
        .iter()
        .flat_map(|h| sets.iter().map(move |t| (h.clone(), t.clone())))
        .map(|(h, t)| {
            let o = occurrence_pairs(baskets, &h, &t);
            ((h, t), o)
        })
        .collect();
    let mut out = Vec::new();
    for ((h, t), o) in &occ {
        if o.len() < min_support.max(1) {
            continue;
        }
        let redundant = occ.iter().any(|((h2, t2), o2)| {
            (h2, t2) != (h, t) && is_subset(h2, h) && is_subset(t2, t) && o2 == o
        });
        if redundant {
            continue;
        }
        let mut gaps: Vec<u32> = o
            .iter()
            .map(|&(a, b)| baskets[b].date().days_since(baskets[a].date()) as u32)
            .collect();
        gaps.sort();
        out.push((
            h.clone(),
            t.clone(),
            o.len(),
            [gaps[0], gaps[(gaps.len() - 1) / 2], gaps[gaps.len() - 1]],
        ));
    }
    out
}

/// Normalised tail scores of patterns whose head last appeared in `context`
/// within the pattern's gap range before `at`.
pub fn omega(patterns: &[RawPattern], context: &[Basket], at: Day) -> BTreeMap<String, f64> {
    let mut raw: BTreeMap<String, usize> = BTreeMap::new();
    for (head, tail, support, gap) in patterns {
        let last = context.iter().filter(|b| contains_set(b, head)).last();
        let Some(last) = last else { continue };
        let since = at.days_since(last.date());
        if since >= gap[0] as i64 && since <= gap[2] as i64 {
            for i in tail {
                *raw.entry(i.clone()).or_default() += support;
            }
        }
    }
    let max = raw.values().copied().max().unwrap_or(0);
    raw.into_iter()
        .filter(|_| max > 0)
        .map(|(i, r)| (i, r as f64 / max as f64))
        .collect()
}

/// Precision, recall and F1 by set arithmetic.
pub fn prf(predicted: &[String], actual: &[String]) -> (f64, f64, f64) {
    let p: BTreeSet<&String> = predicted.iter().collect();
    let a: BTreeSet<&String> = actual.iter().collect();
    let hit = p.intersection(&a).count() as f64;
    let precision = if p.is_empty() {
        0.0
    } else {
        hit / p.len() as f64
    };
    let recall = hit / a.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

pub fn item(s: &str) -> ItemId {
    ItemId::new(s).unwrap()
}

/// A random history of up to `max_baskets` baskets over up to `max_items`
/// items, with same-day baskets, seasonal spread and some large baskets.
pub fn random_history<R: Rng>(
    rng: &mut R,
    id: &str,
    max_baskets: usize,
    max_items: usize,
) -> CustomerHistory {
    let n_items = rng.gen_range(2..=max_items);
    let n_baskets = rng.gen_range(2..=max_baskets);
    let mut day = Day::from_ymd(2020, 1, 1)
        .unwrap()
        .plus(rng.gen_range(0..365));
    let mut baskets = Vec::with_capacity(n_baskets);
    for pos in 0..n_baskets {
        day = day.plus(rng.gen_range(0..=9));
        let size = if rng.gen_bool(0.3) {
            rng.gen_range(1..=n_items.min(16))
        } else {
            rng.gen_range(1..=n_items.min(4))
        };
        // Skewed so some items are frequent enough to score.
        let items: Vec<ItemId> = (0..size)
            .map(|_| {
                let r: f64 = rng.gen();
                let i = ((r * r) * n_items as f64) as usize;
                item(&format!("i{:02}", i.min(n_items - 1)))
            })
            .collect();
        baskets.push(Basket::new(day, pos as u32, items).unwrap());
    }
    CustomerHistory::new(CustomerId::new(id).unwrap(), baskets).unwrap()
}

/// A random current basket over the history's items plus one unseen item.
pub fn random_basket<R: Rng>(rng: &mut R, history: &CustomerHistory, at: Day) -> Basket {
    let universe: Vec<ItemId> = history
        .baskets()
        .iter()
        .flat_map(|b| b.items().iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let size = rng.gen_range(1..=universe.len().min(12));
    let mut items: Vec<ItemId> = (0..size)
        .map(|_| universe[rng.gen_range(0..universe.len())].clone())
        .collect();
    if rng.gen_bool(0.2) {
        items.push(item("unseen"));
    }
    Basket::new(at, history.len() as u32, items).unwrap()
}

/// Scorer settings that make every component fire on small random data.
pub fn permissive_config() -> XmtConfig<f64> {
    XmtConfig {
        min_appearances: 2,
        copurchase_threshold: 1,
        min_repurchase_opportunities: 1,
        repurchase_window_days: 5,
        large_basket_size: 5,
        ..XmtConfig::default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Xmt,
    Top,
    Last,
}

/// Per-customer `(precision, recall, f1)` of the split protocol: the first
/// labeled pair whose earlier basket is at or after the training cut, scored
/// from everything before that basket against the follow-up basket's items.
pub fn protocol(
    histories: &[CustomerHistory],
    method: Method,
    train_fraction: f64,
    labeler: &LabelerConfig,
    cfg: &XmtConfig<f64>,
) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for h in histories {
        let b = h.baskets();
        if b.len() < 2 {
            continue;
        }
        let cut = ((train_fraction * b.len() as f64).floor() as usize).max(1);
        let Some(&(t, f)) = label_pairs(b, labeler).iter().find(|(t, _)| *t >= cut) else {
            continue;
        };
        let (prefix, current) = (&b[..t], &b[t]);
        let predicted = match method {
            Method::Xmt => select(
                &score_all(prefix, current.date(), current, cfg),
                current,
                cfg.k,
                None,
            ),
            Method::Top => top(prefix, current, cfg.k),
            Method::Last => {
                let mut items: Vec<String> = prefix[t - 1]
                    .items()
                    .iter()
                    .map(|i| i.as_str().to_string())
                    .filter(|i| !holds(current, i))
                    .collect();
                items.sort();
                items.truncate(cfg.k);
                items
            }
        };
        let actual: Vec<String> = b[f]
            .items()
            .iter()
            .map(|i| i.as_str().to_string())
            .collect();
        out.push(prf(&predicted, &actual));
    }
    out
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
