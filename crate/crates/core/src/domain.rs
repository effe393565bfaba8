//! Items, baskets, customer histories and the scoring/labeling configuration.

use std::borrow::Borrow;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DomainError {
    #[error("empty token")]
    EmptyToken,
    #[error("basket on {0} has no items")]
    EmptyBasket(Day),
    #[error("baskets of customer {customer} out of order at position {position}")]
    Unordered {
        customer: CustomerId,
        position: usize,
    },
    #[error("invalid date {0:?} (expected YYYY-MM-DD)")]
    BadDate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

macro_rules! token_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(token: impl AsRef<str>) -> Result<Self, DomainError> {
                let token = token.as_ref().trim();
                if token.is_empty() {
                    return Err(DomainError::EmptyToken);
                }
                Ok(Self(Arc::from(token)))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl FromStr for $name {
            type Err = DomainError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<Ser: Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                Self::new(raw).map_err(serde::de::Error::custom)
            }
        }
    };
}

token_type!(
    /// Canonical item token. Equality and ordering are those of the token
    /// string, which gives the deterministic tie-break used by every ranking.
    ItemId
);
token_type!(
    /// Opaque customer identifier.
    CustomerId
);

/// Total order on items used to break score ties.
pub fn canonical_order(a: &ItemId, b: &ItemId) -> std::cmp::Ordering {
    a.cmp(b)
}

/// A calendar day, stored as days since 0001-01-01 (proleptic Gregorian).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Day(i32);

impl Day {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Day> {
        NaiveDate::from_ymd_opt(year, month, day).map(Day::from)
    }

    pub fn date(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0).expect("day in chrono range")
    }

    pub fn plus(self, days: i64) -> Day {
        Day(self.0 + days as i32)
    }

    /// Signed number of days from `earlier` to `self`.
    pub fn days_since(self, earlier: Day) -> i64 {
        i64::from(self.0) - i64::from(earlier.0)
    }

    /// Calendar quarter: 0 = Jan-Mar, 1 = Apr-Jun, 2 = Jul-Sep, 3 = Oct-Dec.
    pub fn season(self) -> Season {
        Season(((self.date().month0()) / 3) as u8)
    }
}

impl From<NaiveDate> for Day {
    fn from(date: NaiveDate) -> Self {
        Day(date.num_days_from_ce())
    }
}

impl FromStr for Day {
    type Err = DomainError;

    /// Strict `YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::BadDate(s.to_string());
        let b = s.as_bytes();
        if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
            return Err(bad());
        }
        let num = |range: std::ops::Range<usize>| -> Result<u32, DomainError> {
            let mut v = 0u32;
            for &c in &b[range] {
                if !c.is_ascii_digit() {
                    return Err(bad());
                }
                v = v * 10 + u32::from(c - b'0');
            }
            Ok(v)
        };
        let (y, m, d) = (num(0..4)?, num(5..7)?, num(8..10)?);
        Day::from_ymd(y as i32, m, d).ok_or_else(bad)
    }
}

impl fmt::Display for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.date().format("%Y-%m-%d"))
    }
}

impl fmt::Debug for Day {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Day({self})")
    }
}

impl Serialize for Day {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Day {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Season index in `0..4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Season(pub u8);

/// A dated set of items. Items are kept sorted in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Basket {
    date: Day,
    ordinal: u32,
    items: Vec<ItemId>,
}

impl Basket {
    pub fn new(
        date: Day,
        ordinal: u32,
        items: impl IntoIterator<Item = ItemId>,
    ) -> Result<Basket, DomainError> {
        let mut items: Vec<ItemId> = items.into_iter().collect();
        items.sort_unstable();
        items.dedup();
        if items.is_empty() {
            return Err(DomainError::EmptyBasket(date));
        }
        Ok(Basket {
            date,
            ordinal,
            items,
        })
    }

    pub fn date(&self) -> Day {
        self.date
    }

    pub fn ordinal(&self) -> u32 {
        self.ordinal
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.items.binary_search(item).is_ok()
    }

    pub fn contains_str(&self, token: &str) -> bool {
        self.items
            .binary_search_by(|probe| probe.as_str().cmp(token))
            .is_ok()
    }

    /// True when every item of `subset` (canonically sorted) is in this basket.
    pub fn contains_all(&self, subset: &[ItemId]) -> bool {
        subset.iter().all(|i| self.contains(i))
    }

    /// Same basket with `items` removed; `None` if nothing would remain.
    pub fn without(&self, drop: impl Fn(&ItemId) -> bool) -> Option<Basket> {
        let items: Vec<ItemId> = self.items.iter().filter(|i| !drop(i)).cloned().collect();
        if items.is_empty() {
            None
        } else {
            Some(Basket {
                date: self.date,
                ordinal: self.ordinal,
                items,
            })
        }
    }

    fn key(&self) -> (Day, u32) {
        (self.date, self.ordinal)
    }
}

impl<'de> Deserialize<'de> for Basket {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            date: Day,
            ordinal: u32,
            items: Vec<ItemId>,
        }
        let raw = Raw::deserialize(d)?;
        Basket::new(raw.date, raw.ordinal, raw.items).map_err(serde::de::Error::custom)
    }
}

/// One customer's baskets in ascending `(date, ordinal)` order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CustomerHistory {
    customer: CustomerId,
    baskets: Vec<Basket>,
}

impl CustomerHistory {
    pub fn new(customer: CustomerId, baskets: Vec<Basket>) -> Result<Self, DomainError> {
        if let Some(position) = baskets.windows(2).position(|w| w[0].key() >= w[1].key()) {
            return Err(DomainError::Unordered {
                customer,
                position: position + 1,
            });
        }
        Ok(CustomerHistory { customer, baskets })
    }

    pub fn customer(&self) -> &CustomerId {
        &self.customer
    }

    pub fn baskets(&self) -> &[Basket] {
        &self.baskets
    }

    pub fn len(&self) -> usize {
        self.baskets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baskets.is_empty()
    }

    pub fn into_baskets(self) -> Vec<Basket> {
        self.baskets
    }

    /// Sub-history over a contiguous range of baskets.
    pub fn slice(&self, range: std::ops::Range<usize>) -> CustomerHistory {
        CustomerHistory {
            customer: self.customer.clone(),
            baskets: self.baskets[range].to_vec(),
        }
    }
}

impl<'de> Deserialize<'de> for CustomerHistory {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            customer: CustomerId,
            baskets: Vec<Basket>,
        }
        let raw = Raw::deserialize(d)?;
        CustomerHistory::new(raw.customer, raw.baskets).map_err(serde::de::Error::custom)
    }
}

/// Hyperparameters of the multi-factor scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", default, deny_unknown_fields)]
pub struct XmtConfig<S: Scalar> {
    /// Minimum number of baskets containing an item before its frequency counts.
    pub min_appearances: usize,
    /// Upper bound of the "due" window as a multiple of the median interval.
    pub max_interval_multiplier: S,
    /// Items unseen for longer than this many days get no temporal boost.
    pub discontinuation_days: u32,
    pub temporal_boost: S,
    /// Share of purchases in the current season above which the seasonal boost applies.
    pub seasonality_threshold: S,
    pub seasonal_boost: S,
    /// Co-occurrence count an item pair must exceed to count as co-purchased.
    pub copurchase_threshold: u32,
    /// Added once per co-purchased item in the current basket.
    pub copurchase_boost: S,
    pub repurchase_window_days: u32,
    pub repurchase_boost: S,
    /// Minimum repurchase rate (strictly exceeded) for the repurchase boost.
    pub repurchase_rate_threshold: S,
    pub min_repurchase_opportunities: u32,
    /// Baskets with more items than this are "large" (repurchase opportunities).
    pub large_basket_size: usize,
    /// Number of forgotten items to return.
    pub k: usize,
}

impl<S: Scalar> Default for XmtConfig<S> {
    fn default() -> Self {
        XmtConfig {
            min_appearances: 5,
            max_interval_multiplier: S::lit(3.0),
            discontinuation_days: 90,
            temporal_boost: S::lit(1.5),
            seasonality_threshold: S::lit(0.4),
            seasonal_boost: S::lit(1.5),
            copurchase_threshold: 5,
            copurchase_boost: S::lit(0.2),
            repurchase_window_days: 2,
            repurchase_boost: S::lit(0.5),
            repurchase_rate_threshold: S::lit(0.3),
            min_repurchase_opportunities: 5,
            large_basket_size: 10,
            k: 5,
        }
    }
}

impl<S: Scalar> XmtConfig<S> {
    pub fn validate(&self) -> Result<(), DomainError> {
        let one = S::one();
        let zero = S::zero();
        let checks: [(bool, &str); 13] = [
            (self.min_appearances >= 1, "min_appearances must be >= 1"),
            (
                self.max_interval_multiplier >= one,
                "max_interval_multiplier must be >= 1",
            ),
            (
                self.discontinuation_days > 0,
                "discontinuation_days must be > 0",
            ),
            (self.temporal_boost >= one, "temporal_boost must be >= 1"),
            (
                self.seasonality_threshold > zero && self.seasonality_threshold < one,
                "seasonality_threshold must lie in (0, 1)",
            ),
            (self.seasonal_boost >= one, "seasonal_boost must be >= 1"),
            (
                self.copurchase_boost >= zero,
                "copurchase_boost must be >= 0",
            ),
            (
                self.repurchase_boost >= zero,
                "repurchase_boost must be >= 0",
            ),
            (
                self.repurchase_rate_threshold >= zero && self.repurchase_rate_threshold <= one,
                "repurchase_rate_threshold must lie in [0, 1]",
            ),
            (
                self.min_repurchase_opportunities >= 1,
                "min_repurchase_opportunities must be >= 1",
            ),
            (
                self.large_basket_size >= 1,
                "large_basket_size must be >= 1",
            ),
            (self.k >= 1, "k must be >= 1"),
            (
                self.max_interval_multiplier.is_finite()
                    && self.temporal_boost.is_finite()
                    && self.seasonal_boost.is_finite(),
                "multipliers must be finite",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(DomainError::Config((*msg).to_string())),
            None => Ok(()),
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }
}

/// Thresholds of the forgotten-basket heuristic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerConfig {
    /// The earlier basket must have strictly more items than this.
    pub large_basket_size: usize,
    /// The follow-up basket may have at most this many items.
    pub max_forgotten_size: usize,
    /// Maximum days between the two baskets.
    pub horizon_days: u32,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        LabelerConfig {
            large_basket_size: 10,
            max_forgotten_size: 10,
            horizon_days: 2,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.large_basket_size < 1 {
            return Err(DomainError::Config("large_basket_size must be >= 1".into()));
        }
        if self.max_forgotten_size < 1 {
            return Err(DomainError::Config(
                "max_forgotten_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        use std::cmp::Ordering::*;
        assert_eq!(canonical_order(&item("bread"), &item("bread")), Equal);
        assert_eq!(canonical_order(&item("bread"), &item("wine")), Less);
        let mut v = vec![item("wine"), item("bread"), item("rice")];
        v.sort_by(canonical_order);
        assert_eq!(v, vec![item("bread"), item("rice"), item("wine")]);
    }

    #[test]
    fn basket_dedups_and_rejects_empty() {
        let d = Day::from_ymd(2020, 1, 1).unwrap();
        let b = Basket::new(d, 0, vec![item("b"), item("a"), item("b")]).unwrap();
        assert_eq!(b.items(), &[item("a"), item("b")]);
        assert!(Basket::new(d, 0, Vec::new()).is_err());
        assert!(ItemId::new("  ").is_err());
    }

    #[test]
    fn history_requires_strict_order() {
        let d = Day::from_ymd(2020, 1, 1).unwrap();
        let b0 = Basket::new(d, 0, vec![item("a")]).unwrap();
        let b1 = Basket::new(d, 1, vec![item("a")]).unwrap();
        let c = CustomerId::new("c").unwrap();
        assert!(CustomerHistory::new(c.clone(), vec![b0.clone(), b1.clone()]).is_ok());
        assert!(CustomerHistory::new(c.clone(), vec![b1.clone(), b0.clone()]).is_err());
        assert!(CustomerHistory::new(c, vec![b0.clone(), b0]).is_err());
    }

    #[test]
    fn day_parsing_and_seasons() {
        let d: Day = "2013-09-09".parse().unwrap();
        assert_eq!(d.to_string(), "2013-09-09");
        assert_eq!(d.season(), Season(2));
        assert_eq!("2013-01-31".parse::<Day>().unwrap().season(), Season(0));
        assert_eq!("2013-12-01".parse::<Day>().unwrap().season(), Season(3));
        assert!("2013-9-09".parse::<Day>().is_err());
        assert!("2013-02-30".parse::<Day>().is_err());
        let e: Day = "2014-01-01".parse().unwrap();
        assert_eq!(e.days_since(d), 114);
        assert_eq!(d.plus(114), e);
    }

    #[test]
    fn default_config_is_valid() {
        XmtConfig::<f64>::default().validate().unwrap();
        XmtConfig::<f32>::default().validate().unwrap();
        LabelerConfig::default().validate().unwrap();
        let bad = XmtConfig::<f64> {
            seasonality_threshold: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
