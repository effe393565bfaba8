//! Per-customer item statistics at a reference day.
//!
//! A [`CustomerProfile`] holds everything the scorers and explanations read:
//! purchase counts, masked base frequency, purchase intervals, recency,
//! seasonal concentration, repurchase-after-large-basket counts and the
//! symmetric co-occurrence matrix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Basket, CustomerHistory, CustomerId, Day, ItemId, Season, XmtConfig};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ProfileError {
    #[error("no training data")]
    NoTrainingData,
    #[error("basket dated {basket} is after the reference day {as_of}")]
    FutureBasket { basket: Day, as_of: Day },
    #[error("seasonal ratio of an empty purchase list")]
    NoPurchases,
    #[error("profile cache: {0}")]
    Cache(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ItemStats<S: Scalar> {
    /// Number of baskets containing the item.
    pub appearances: usize,
    /// `appearances / history_len`, zeroed below the minimum-appearances threshold.
    pub base_freq: S,
    /// Lower median of the gaps between distinct purchase days.
    pub median_interval_days: Option<u32>,
    /// Arithmetic mean of the same gaps (for display).
    pub mean_interval_days: Option<S>,
    pub days_since_last: Option<u32>,
    /// Share of purchases that fall in the season of the reference day.
    pub seasonal_ratio_current: S,
    /// Repurchase opportunities followed by a purchase within the window.
    pub repurchase_events: u32,
    /// Large baskets after the first purchase that did not contain the item.
    pub repurchase_opportunities: u32,
}

impl<S: Scalar> ItemStats<S> {
    pub fn repurchase_rate(&self) -> Option<S> {
        (self.repurchase_opportunities > 0).then(|| {
            S::from_count(self.repurchase_events as usize)
                / S::from_count(self.repurchase_opportunities as usize)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CustomerProfile<S: Scalar> {
    customer: CustomerId,
    as_of: Day,
    history_len: usize,
    items: Vec<ItemId>,
    stats: Vec<ItemStats<S>>,
    index: HashMap<ItemId, u32>,
    /// Off-diagonal co-occurrence rows, `(neighbour index, count)` sorted by index.
    copurchase: Vec<Vec<(u32, u32)>>,
}

impl<S: Scalar> CustomerProfile<S> {
    pub fn customer(&self) -> &CustomerId {
        &self.customer
    }

    pub fn as_of(&self) -> Day {
        self.as_of
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    /// Profiled items in canonical order.
    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ItemId, &ItemStats<S>)> {
        self.items.iter().zip(&self.stats)
    }

    pub fn contains(&self, item: &str) -> bool {
        self.index.contains_key(item)
    }

    pub fn stats(&self, item: &str) -> Option<&ItemStats<S>> {
        self.index.get(item).map(|&i| &self.stats[i as usize])
    }

    /// Number of training baskets containing both items; the diagonal is the
    /// item's appearance count.
    pub fn copurchase(&self, a: &str, b: &str) -> u32 {
        let (Some(&ia), Some(&ib)) = (self.index.get(a), self.index.get(b)) else {
            return 0;
        };
        if ia == ib {
            return self.stats[ia as usize].appearances as u32;
        }
        let row = &self.copurchase[ia as usize];
        row.binary_search_by_key(&ib, |&(j, _)| j)
            .map_or(0, |pos| row[pos].1)
    }

    /// Off-diagonal co-occurrence entries of `item`.
    pub fn copurchase_row(&self, item: &str) -> impl Iterator<Item = (&ItemId, u32)> {
        let row = self
            .index
            .get(item)
            .map(|&i| self.copurchase[i as usize].as_slice())
            .unwrap_or(&[]);
        row.iter().map(|&(j, n)| (&self.items[j as usize], n))
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        serde_json::from_str(text).map_err(|e| ProfileError::Cache(e.to_string()))
    }
}

/// Build a profile from every basket of `history`.
pub fn build_profile<S: Scalar>(
    history: &CustomerHistory,
    as_of: Day,
    cfg: &XmtConfig<S>,
) -> Result<CustomerProfile<S>, ProfileError> {
    build_profile_from(history.customer(), history.baskets(), as_of, cfg)
}

/// Build a profile from a training prefix. Every basket must be dated on or
/// before `as_of`.
pub fn build_profile_from<S: Scalar>(
    customer: &CustomerId,
    baskets: &[Basket],
    as_of: Day,
    cfg: &XmtConfig<S>,
) -> Result<CustomerProfile<S>, ProfileError> {
    let last = baskets.last().ok_or(ProfileError::NoTrainingData)?;
    if last.date() > as_of {
        return Err(ProfileError::FutureBasket {
            basket: last.date(),
            as_of,
        });
    }

    // Basket positions per item, in history order.
    let mut positions: HashMap<&ItemId, Vec<u32>> = HashMap::new();
    for (pos, basket) in baskets.iter().enumerate() {
        for item in basket.items() {
            positions.entry(item).or_default().push(pos as u32);
        }
    }
    let mut items: Vec<ItemId> = positions.keys().map(|&i| i.clone()).collect();
    items.sort_unstable();
    let index: HashMap<ItemId, u32> = items
        .iter()
        .enumerate()
        .map(|(i, item)| (item.clone(), i as u32))
        .collect();

    let n = baskets.len();
    let large: Vec<u32> = baskets
        .iter()
        .enumerate()
        .filter(|(_, b)| b.len() > cfg.large_basket_size)
        .map(|(p, _)| p as u32)
        .collect();
    let season = as_of.season();

    let stats: Vec<ItemStats<S>> = items
        .iter()
        .map(|item| item_stats(&positions[item], baskets, &large, as_of, season, n, cfg))
        .collect();

    let mut pairs: HashMap<(u32, u32), u32> = HashMap::new();
    let mut idx: Vec<u32> = Vec::new();
    for basket in baskets {
        idx.clear();
        idx.extend(basket.items().iter().map(|i| index[i]));
        // basket items are canonical-sorted, so indices are ascending
        for (a_pos, &a) in idx.iter().enumerate() {
            for &b in &idx[a_pos + 1..] {
                *pairs.entry((a, b)).or_default() += 1;
            }
        }
    }
    let mut copurchase: Vec<Vec<(u32, u32)>> = vec![Vec::new(); items.len()];
    for ((a, b), count) in pairs {
        copurchase[a as usize].push((b, count));
        copurchase[b as usize].push((a, count));
    }
    for row in &mut copurchase {
        row.sort_unstable();
    }

    Ok(CustomerProfile {
        customer: customer.clone(),
        as_of,
        history_len: n,
        items,
        stats,
        index,
        copurchase,
    })
}

fn item_stats<S: Scalar>(
    positions: &[u32],
    baskets: &[Basket],
    large: &[u32],
    as_of: Day,
    season: Season,
    history_len: usize,
    cfg: &XmtConfig<S>,
) -> ItemStats<S> {
    let appearances = positions.len();
    let base_freq = if appearances >= cfg.min_appearances {
        S::from_count(appearances) / S::from_count(history_len)
    } else {
        S::zero()
    };

    let mut days: Vec<Day> = positions
        .iter()
        .map(|&p| baskets[p as usize].date())
        .collect();
    days.dedup();
    let gaps: Vec<u32> = days
        .windows(2)
        .map(|w| w[1].days_since(w[0]) as u32)
        .collect();
    let (median_interval_days, mean_interval_days) = if gaps.is_empty() {
        (None, None)
    } else {
        let mut sorted = gaps.clone();
        sorted.sort_unstable();
        let total: u64 = gaps.iter().map(|&g| u64::from(g)).sum();
        (
            Some(sorted[(sorted.len() - 1) / 2]),
            Some(S::from_u64(total).expect("sum") / S::from_count(gaps.len())),
        )
    };
    let last_day = *days.last().expect("item has a purchase");
    let days_since_last = Some(as_of.days_since(last_day) as u32);

    let in_season = positions
        .iter()
        .filter(|&&p| baskets[p as usize].date().season() == season)
        .count();
    let seasonal_ratio_current = S::from_count(in_season) / S::from_count(appearances);

    let first = positions[0];
    let mut repurchase_opportunities = 0u32;
    let mut repurchase_events = 0u32;
    for &l in large.iter().filter(|&&l| l > first) {
        if positions.binary_search(&l).is_ok() {
            continue;
        }
        repurchase_opportunities += 1;
        let next = positions.partition_point(|&p| p <= l);
        if let Some(&m) = positions.get(next) {
            let gap = baskets[m as usize]
                .date()
                .days_since(baskets[l as usize].date());
            if gap <= i64::from(cfg.repurchase_window_days) {
                repurchase_events += 1;
            }
        }
    }

    ItemStats {
        appearances,
        base_freq,
        median_interval_days,
        mean_interval_days,
        days_since_last,
        seasonal_ratio_current,
        repurchase_events,
        repurchase_opportunities,
    }
}

/// Share of `purchase_dates` whose season equals `current`.
pub fn seasonal_ratio<S: Scalar>(
    purchase_dates: &[Day],
    season_of: impl Fn(Day) -> Season,
    current: Season,
) -> Result<S, ProfileError> {
    if purchase_dates.is_empty() {
        return Err(ProfileError::NoPurchases);
    }
    let hits = purchase_dates
        .iter()
        .filter(|&&d| season_of(d) == current)
        .count();
    Ok(S::from_count(hits) / S::from_count(purchase_dates.len()))
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct ProfileWire<S: Scalar> {
    customer: CustomerId,
    as_of: Day,
    history_len: usize,
    items: Vec<(ItemId, ItemStats<S>)>,
    /// `(a, b, count)` with `a < b` in canonical order.
    copurchase: Vec<(ItemId, ItemId, u32)>,
}

impl<S: Scalar> Serialize for CustomerProfile<S> {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        let copurchase = self
            .copurchase
            .iter()
            .enumerate()
            .flat_map(|(a, row)| {
                row.iter()
                    .filter(move |&&(b, _)| b as usize > a)
                    .map(move |&(b, n)| (self.items[a].clone(), self.items[b as usize].clone(), n))
            })
            .collect();
        ProfileWire {
            customer: self.customer.clone(),
            as_of: self.as_of,
            history_len: self.history_len,
            items: self.iter().map(|(i, s)| (i.clone(), s.clone())).collect(),
            copurchase,
        }
        .serialize(s)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for CustomerProfile<S> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = ProfileWire::<S>::deserialize(d)?;
        let (items, stats): (Vec<ItemId>, Vec<ItemStats<S>>) = wire.items.into_iter().unzip();
        if items.windows(2).any(|w| w[0] >= w[1]) {
            return Err(D::Error::custom("profile items must be strictly sorted"));
        }
        let index: HashMap<ItemId, u32> = items
            .iter()
            .enumerate()
            .map(|(i, item)| (item.clone(), i as u32))
            .collect();
        let mut copurchase = vec![Vec::new(); items.len()];
        for (a, b, n) in wire.copurchase {
            let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else {
                return Err(D::Error::custom(format!(
                    "unknown co-purchase item {a} or {b}"
                )));
            };
            copurchase[ia as usize].push((ib, n));
            copurchase[ib as usize].push((ia, n));
        }
        for row in &mut copurchase {
            row.sort_unstable();
        }
        Ok(CustomerProfile {
            customer: wire.customer,
            as_of: wire.as_of,
            history_len: wire.history_len,
            items,
            stats,
            index,
            copurchase,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(n: i64) -> Day {
        Day::from_ymd(2021, 1, 4).unwrap().plus(n)
    }

    fn hist(baskets: &[(i64, &[&str])]) -> CustomerHistory {
        CustomerHistory::new(
            CustomerId::new("u").unwrap(),
            baskets
                .iter()
                .enumerate()
                .map(|(o, (d, items))| {
                    Basket::new(
                        day(*d),
                        o as u32,
                        items.iter().map(|t| ItemId::new(t).unwrap()),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn base_frequency_masked_below_min_appearances() {
        let mut spec: Vec<(i64, &[&str])> = Vec::new();
        for d in 0..10 {
            spec.push((d, if d < 6 { &["a", "b"] } else { &["b"] }));
        }
        // c in 4 baskets
        let h = hist(&spec);
        let p = build_profile::<f64>(&h, day(10), &XmtConfig::default()).unwrap();
        assert_eq!(p.stats("a").unwrap().base_freq, 0.6);
        let spec2: Vec<(i64, &[&str])> = (0..10)
            .map(|d| (d, if d < 4 { &["c", "x"][..] } else { &["x"][..] }))
            .collect();
        let p2 = build_profile::<f64>(&hist(&spec2), day(10), &XmtConfig::default()).unwrap();
        assert_eq!(p2.stats("c").unwrap().base_freq, 0.0);
        assert_eq!(p2.stats("c").unwrap().appearances, 4);
    }

    #[test]
    fn median_interval_uses_gaps_between_purchase_days() {
        let h = hist(&[(0, &["a"]), (2, &["a"]), (4, &["a"]), (10, &["a"])]);
        let s = build_profile::<f64>(&h, day(12), &XmtConfig::default())
            .unwrap()
            .stats("a")
            .unwrap()
            .clone();
        assert_eq!(s.median_interval_days, Some(2));
        assert_eq!(s.mean_interval_days, Some(10.0 / 3.0));
        assert_eq!(s.days_since_last, Some(2));
    }

    #[test]
    fn single_purchase_has_no_interval() {
        let h = hist(&[(0, &["a"]), (3, &["b"])]);
        let p = build_profile::<f64>(&h, day(3), &XmtConfig::default()).unwrap();
        assert_eq!(p.stats("a").unwrap().median_interval_days, None);
        assert_eq!(p.stats("a").unwrap().days_since_last, Some(3));
    }

    #[test]
    fn empty_prefix_is_an_error() {
        let c = CustomerId::new("u").unwrap();
        let r = build_profile_from::<f64>(&c, &[], day(0), &XmtConfig::default());
        assert_eq!(r.unwrap_err(), ProfileError::NoTrainingData);
    }

    #[test]
    fn future_basket_is_rejected() {
        let h = hist(&[(5, &["a"])]);
        assert!(matches!(
            build_profile::<f64>(&h, day(4), &XmtConfig::default()),
            Err(ProfileError::FutureBasket { .. })
        ));
    }

    #[test]
    fn seasonal_ratio_examples() {
        let d = |m: u32| Day::from_ymd(2020, m, 1).unwrap();
        let q = |d: Day| d.season();
        let all_in: f64 = seasonal_ratio(&[d(1), d(2), d(3), d(1)], q, Season(0)).unwrap();
        assert_eq!(all_in, 1.0);
        let one: f64 = seasonal_ratio(&[d(1), d(4), d(7), d(10)], q, Season(0)).unwrap();
        assert_eq!(one, 0.25);
        let dates = [d(1), d(2), d(3), d(1), d(2), d(5), d(6), d(8), d(9), d(11)];
        let half: f64 = seasonal_ratio(&dates, q, Season(0)).unwrap();
        assert_eq!(half, 0.5);
        assert!(half > 0.4);
        assert_eq!(
            seasonal_ratio::<f64>(&[], q, Season(0)).unwrap_err(),
            ProfileError::NoPurchases
        );
    }

    #[test]
    fn copurchase_is_symmetric_with_appearance_diagonal() {
        let h = hist(&[(0, &["a", "b"]), (1, &["a", "b", "c"]), (2, &["b"])]);
        let p = build_profile::<f64>(&h, day(2), &XmtConfig::default()).unwrap();
        assert_eq!(p.copurchase("a", "b"), 2);
        assert_eq!(p.copurchase("b", "a"), 2);
        assert_eq!(p.copurchase("a", "a"), 2);
        assert_eq!(p.copurchase("b", "b"), 3);
        assert_eq!(p.copurchase("a", "zzz"), 0);
    }

    #[test]
    fn repurchase_counts_follow_large_baskets() {
        let cfg = XmtConfig::<f64> {
            large_basket_size: 2,
            repurchase_window_days: 2,
            ..Default::default()
        };
        let big = &["x", "y", "z"][..];
        let h = hist(&[
            (0, &["m"]),
            (1, big), // opportunity, m bought day 2 -> event
            (2, &["m"]),
            (5, big), // opportunity, next m on day 9 -> no event
            (9, &["m"]),
            (10, &["m", "x", "y"]), // large but contains m -> not an opportunity
        ]);
        let s = build_profile(&h, day(10), &cfg)
            .unwrap()
            .stats("m")
            .unwrap()
            .clone();
        assert_eq!((s.repurchase_events, s.repurchase_opportunities), (1, 2));
        assert_eq!(s.repurchase_rate(), Some(0.5));
    }

    #[test]
    fn json_cache_round_trip() {
        let h = hist(&[(0, &["a", "b"]), (1, &["a", "c"]), (4, &["b", "c"])]);
        let p = build_profile::<f64>(&h, day(5), &XmtConfig::default()).unwrap();
        let back = CustomerProfile::<f64>::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
