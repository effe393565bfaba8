//! Temporally annotated recurring sequences.
//!
//! A pattern `head -> tail` says that the itemset `head` bought in one basket
//! is followed later by the itemset `tail` in another. Occurrences are
//! consecutive pairs: a head basket `a` and tail basket `b > a` with no other
//! head basket and no other tail basket strictly between them. Each pattern
//! carries its support (number of occurrences) and the min/median/max gap in
//! days across occurrences.
//!
//! Item scores add up the support of every pattern whose head was bought
//! recently enough (the time since the head falls inside the pattern's
//! observed gap range) and whose tail contains the item, normalised by the
//! largest such sum.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{Basket, CustomerHistory, Day, ItemId, XmtConfig};
use crate::profile::CustomerProfile;
use crate::scalar::Scalar;
use crate::xmt::{predict_with_scores, Prediction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TarsConfig {
    pub min_support: usize,
    pub max_itemset_size: usize,
    /// Number of most recent training baskets that can activate a pattern head
    /// (the current basket is always included).
    pub recent_baskets: usize,
}

impl Default for TarsConfig {
    fn default() -> Self {
        TarsConfig {
            min_support: 2,
            max_itemset_size: 2,
            recent_baskets: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapStats {
    pub min: u32,
    pub median: u32,
    pub max: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TarsPattern {
    pub head: Vec<ItemId>,
    pub tail: Vec<ItemId>,
    pub support: usize,
    pub gap: GapStats,
}

/// Consecutive `(head basket, tail basket)` pairs for two sorted position
/// lists, written into `out`.
fn occurrences_into(head: &[u32], tail: &[u32], out: &mut Vec<(u32, u32)>) {
    out.clear();
    let mut t = 0;
    for (k, &a) in head.iter().enumerate() {
        while t < tail.len() && tail[t] <= a {
            t += 1;
        }
        let Some(&b) = tail.get(t) else { break };
        if head.get(k + 1).is_some_and(|&next| next < b) {
            continue;
        }
        out.push((a, b));
    }
}

fn gap_stats(baskets: &[Basket], occ: &[(u32, u32)]) -> GapStats {
    let mut gaps: Vec<u32> = occ
        .iter()
        .map(|&(a, b)| {
            baskets[b as usize]
                .date()
                .days_since(baskets[a as usize].date()) as u32
        })
        .collect();
    gaps.sort_unstable();
    GapStats {
        min: gaps[0],
        median: gaps[(gaps.len() - 1) / 2],
        max: gaps[gaps.len() - 1],
    }
}

fn for_each_subset(items: &[u32], max: usize, mut visit: impl FnMut(&[u32])) {
    fn rec(
        items: &[u32],
        start: usize,
        max: usize,
        cur: &mut Vec<u32>,
        visit: &mut impl FnMut(&[u32]),
    ) {
        for i in start..items.len() {
            cur.push(items[i]);
            visit(cur);
            if cur.len() < max {
                rec(items, i + 1, max, cur, visit);
            }
            cur.pop();
        }
    }
    let mut cur = Vec::with_capacity(max);
    rec(items, 0, max, &mut cur, &mut visit);
}

pub fn mine_history(history: &CustomerHistory, cfg: &TarsConfig) -> Vec<TarsPattern> {
    mine_tars(history.baskets(), cfg.min_support, cfg.max_itemset_size)
}

/// A frequent itemset with its basket positions and the ids of its non-empty
/// subsets (itself last). Subsets of a frequent set are frequent.
struct Itemset {
    items: Vec<u32>,
    positions: Vec<u32>,
    subsets: Vec<usize>,
}

/// Mine all minimal patterns with at least `min_support` occurrences and
/// head/tail sizes up to `max_itemset_size`. Sorted by `(head, tail)`.
pub fn mine_tars(
    baskets: &[Basket],
    min_support: usize,
    max_itemset_size: usize,
) -> Vec<TarsPattern> {
    mine_filtered(baskets, min_support, max_itemset_size, None)
}

/// The patterns of [`mine_tars`] whose head lies inside some basket of
/// `context`: exactly those that [`omega_scores`] over `context` can activate.
/// Minimality only compares against sub-heads, so the filter commutes with it.
pub fn mine_tars_for(
    baskets: &[Basket],
    min_support: usize,
    max_itemset_size: usize,
    context: &[Basket],
) -> Vec<TarsPattern> {
    mine_filtered(baskets, min_support, max_itemset_size, Some(context))
}

fn mine_filtered(
    baskets: &[Basket],
    min_support: usize,
    max_itemset_size: usize,
    context: Option<&[Basket]>,
) -> Vec<TarsPattern> {
    if baskets.len() < 2 || max_itemset_size == 0 {
        return Vec::new();
    }
    let min_support = min_support.max(1);

    let mut universe: Vec<&ItemId> = baskets.iter().flat_map(|b| b.items()).collect();
    universe.sort_unstable();
    universe.dedup();
    let index: HashMap<&ItemId, u32> = universe
        .iter()
        .enumerate()
        .map(|(i, &it)| (it, i as u32))
        .collect();

    let mut positions: HashMap<Vec<u32>, Vec<u32>> = HashMap::new();
    let mut idx = Vec::new();
    for (pos, basket) in baskets.iter().enumerate() {
        idx.clear();
        idx.extend(basket.items().iter().map(|i| index[i]));
        idx.sort_unstable();
        for_each_subset(&idx, max_itemset_size, |set| {
            positions.entry(set.to_vec()).or_default().push(pos as u32);
        });
    }
    let mut sets: Vec<Itemset> = positions
        .into_iter()
        .filter(|(_, p)| p.len() >= min_support)
        .map(|(items, positions)| Itemset {
            items,
            positions,
            subsets: Vec::new(),
        })
        .collect();
    sets.sort_unstable_by(|a, b| a.items.cmp(&b.items));
    let ids: HashMap<&[u32], usize> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| (s.items.as_slice(), i))
        .collect();
    let subsets: Vec<Vec<usize>> = sets
        .iter()
        .map(|s| {
            let mut out = Vec::new();
            for_each_subset(&s.items, s.items.len(), |sub| {
                if sub.len() < s.items.len() {
                    out.push(ids[sub]);
                }
            });
            out.push(ids[s.items.as_slice()]);
            out
        })
        .collect();
    drop(ids);
    for (s, sub) in sets.iter_mut().zip(subsets) {
        s.subsets = sub;
    }

    let head_allowed = |items: &[u32]| {
        context.is_none_or(|ctx| {
            ctx.iter()
                .any(|b| items.iter().all(|&i| b.contains(universe[i as usize])))
        })
    };

    let mut patterns = Vec::new();
    let mut occ = Vec::new();
    let mut other = Vec::new();
    for (hi, head) in sets.iter().enumerate() {
        if !head_allowed(&head.items) {
            continue;
        }
        for (ti, tail) in sets.iter().enumerate() {
            occurrences_into(&head.positions, &tail.positions, &mut occ);
            if occ.len() < min_support || !is_minimal(&sets, hi, ti, &occ, &mut other) {
                continue;
            }
            let to_items =
                |set: &[u32]| set.iter().map(|&i| universe[i as usize].clone()).collect();
            patterns.push(TarsPattern {
                head: to_items(&head.items),
                tail: to_items(&tail.items),
                support: occ.len(),
                gap: gap_stats(baskets, &occ),
            });
        }
    }
    patterns
}

/// A pattern is redundant when a strictly smaller pattern (sub-head and
/// sub-tail) has exactly the same occurrences, hence the same gaps.
fn is_minimal(
    sets: &[Itemset],
    head: usize,
    tail: usize,
    occ: &[(u32, u32)],
    buf: &mut Vec<(u32, u32)>,
) -> bool {
    for &h in &sets[head].subsets {
        for &t in &sets[tail].subsets {
            if h == head && t == tail {
                continue;
            }
            occurrences_into(&sets[h].positions, &sets[t].positions, buf);
            if buf.as_slice() == occ {
                return false;
            }
        }
    }
    true
}

/// Normalised per-item pattern scores in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct OmegaScores<S: Scalar> {
    pub scores: BTreeMap<ItemId, S>,
}

impl<S: Scalar> OmegaScores<S> {
    pub fn get(&self, item: &ItemId) -> S {
        self.scores.get(item).copied().unwrap_or_else(S::zero)
    }

    pub fn is_all_zero(&self) -> bool {
        self.scores.values().all(|v| v.is_zero())
    }
}

/// Score tail items of patterns whose head is active at `at`.
///
/// A head is active when the most recent basket of `recent` containing the
/// whole head lies within the pattern's `[min, max]` gap before `at`.
pub fn omega_scores<S: Scalar>(
    patterns: &[TarsPattern],
    recent: &[Basket],
    at: Day,
) -> OmegaScores<S> {
    let mut raw: BTreeMap<ItemId, usize> = BTreeMap::new();
    for p in patterns {
        let Some(last_head) = recent.iter().rev().find(|b| b.contains_all(&p.head)) else {
            continue;
        };
        let since = at.days_since(last_head.date());
        if since < i64::from(p.gap.min) || since > i64::from(p.gap.max) {
            continue;
        }
        for item in &p.tail {
            *raw.entry(item.clone()).or_default() += p.support;
        }
    }
    let max = raw.values().copied().max().unwrap_or(0);
    if max == 0 {
        return OmegaScores::default();
    }
    let max_s = S::from_count(max);
    OmegaScores {
        scores: raw
            .into_iter()
            .map(|(item, r)| (item, S::from_count(r) / max_s))
            .collect(),
    }
}

/// TXMT: phase two ranks by `map + omega`. `recent` is the tail of the
/// training history; the current basket is appended as the latest context.
pub fn predict_forgotten_tars<S: Scalar>(
    profile: &CustomerProfile<S>,
    patterns: &[TarsPattern],
    current: &Basket,
    recent: &[Basket],
    cfg: &XmtConfig<S>,
) -> Prediction<S> {
    let omega = pattern_scores(patterns, current, recent, profile.as_of());
    predict_with_scores(profile, current, cfg, Some(&omega))
}

/// Omega for `current` given the history before it, mining only the patterns
/// the recent context can activate.
pub fn history_scores<S: Scalar>(
    history: &[Basket],
    current: &Basket,
    at: Day,
    cfg: &TarsConfig,
) -> OmegaScores<S> {
    let recent = &history[history.len().saturating_sub(cfg.recent_baskets)..];
    let mut context = recent.to_vec();
    context.push(current.clone());
    let patterns = mine_tars_for(history, cfg.min_support, cfg.max_itemset_size, &context);
    omega_scores(&patterns, &context, at)
}

pub fn pattern_scores<S: Scalar>(
    patterns: &[TarsPattern],
    current: &Basket,
    recent: &[Basket],
    at: Day,
) -> OmegaScores<S> {
    let mut context: Vec<Basket> = recent.to_vec();
    context.push(current.clone());
    omega_scores(patterns, &context, at)
}
