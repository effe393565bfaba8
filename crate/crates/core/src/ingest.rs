//! Transaction-log ingestion, customer filtering and the seeded synthetic
//! dataset generator.
//!
//! The interchange format is a headed CSV, one row per (basket, item):
//!
//! ```text
//! customer_id,date,basket_id,item_id
//! c0001,2020-01-03,0,item_004
//! ```
//!
//! Rows are grouped into baskets by `(customer_id, date, basket_id)`; row
//! order does not matter. Same-day baskets are ordered by `basket_id`
//! (numerically when both ids are integers).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Basket, CustomerHistory, CustomerId, Day, DomainError, ItemId};

pub const CSV_HEADER: [&str; 4] = ["customer_id", "date", "basket_id", "item_id"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid synthetic configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Basket ids compare numerically when both are integers.
fn basket_id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Parse a transaction CSV into one history per customer, sorted by customer id.
pub fn parse_transactions<R: Read>(source: R) -> Result<Vec<CustomerHistory>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(source);

    let header = reader.headers()?.clone();
    if header.len() != 4
        || header
            .iter()
            .zip(CSV_HEADER)
            .any(|(h, want)| h.trim() != want)
    {
        return Err(IngestError::Parse {
            line: 1,
            message: format!("expected header `{}`", CSV_HEADER.join(",")),
        });
    }

    // customer -> (date, basket_id) -> items
    let mut grouped: HashMap<String, HashMap<(Day, String), Vec<ItemId>>> = HashMap::new();
    let mut interned: HashMap<String, ItemId> = HashMap::new();
    let mut record = csv::StringRecord::new();

    while reader.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| IngestError::Parse { line, message };
        if record.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", record.len())));
        }
        let customer = record[0].trim();
        if customer.is_empty() {
            return Err(err("empty customer_id".into()));
        }
        let date: Day = record[1]
            .trim()
            .parse()
            .map_err(|e: DomainError| err(e.to_string()))?;
        let basket_id = record[2].trim();
        let token = record[3].trim();
        if token.is_empty() {
            return Err(err("empty item_id".into()));
        }
        let item = match interned.get(token) {
            Some(id) => id.clone(),
            None => {
                let id = ItemId::new(token)?;
                interned.insert(token.to_string(), id.clone());
                id
            }
        };
        let baskets = match grouped.get_mut(customer) {
            Some(b) => b,
            None => grouped.entry(customer.to_string()).or_default(),
        };
        baskets
            .entry((date, basket_id.to_string()))
            .or_default()
            .push(item);
    }

    let mut histories = Vec::with_capacity(grouped.len());
    for (customer, baskets) in grouped {
        let mut keyed: Vec<((Day, String), Vec<ItemId>)> = baskets.into_iter().collect();
        keyed.sort_by(|(a, _), (b, _)| a.0.cmp(&b.0).then_with(|| basket_id_order(&a.1, &b.1)));
        let baskets = keyed
            .into_iter()
            .enumerate()
            .map(|(ordinal, ((date, _), items))| Basket::new(date, ordinal as u32, items))
            .collect::<Result<Vec<_>, _>>()?;
        histories.push(CustomerHistory::new(CustomerId::new(&customer)?, baskets)?);
    }
    histories.sort_by(|a, b| a.customer().cmp(b.customer()));
    Ok(histories)
}

/// Write histories in the transaction CSV format (LF line endings). The
/// basket ordinal is used as `basket_id`.
pub fn write_transactions<W: Write>(
    histories: &[CustomerHistory],
    sink: W,
) -> Result<(), IngestError> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    writer.write_record(CSV_HEADER)?;
    let mut date_buf = String::new();
    for history in histories {
        for basket in history.baskets() {
            date_buf.clear();
            use std::fmt::Write as _;
            write!(date_buf, "{}", basket.date()).expect("string write");
            let ordinal = basket.ordinal().to_string();
            for item in basket.items() {
                writer.write_record([
                    history.customer().as_str(),
                    &date_buf,
                    &ordinal,
                    item.as_str(),
                ])?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

/// Customer/basket/item filtering rules applied before splitting.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterRules {
    pub min_baskets: usize,
    pub min_basket_size: usize,
    /// No upper bound when absent.
    pub max_basket_size: Option<usize>,
    /// Minimum number of baskets (over all customers) containing an item.
    pub min_item_freq: usize,
}

impl Default for FilterRules {
    fn default() -> Self {
        FilterRules {
            min_baskets: 10,
            min_basket_size: 1,
            max_basket_size: None,
            min_item_freq: 1,
        }
    }
}

/// Apply the filtering rules until nothing changes.
///
/// One pass drops customers with too few baskets, then baskets outside the
/// size bounds, then globally rare items (and any basket left empty). The
/// passes repeat to a fixpoint so the result is itself a fixpoint of the
/// filter. Input order is preserved.
pub fn filter_customers(
    histories: Vec<CustomerHistory>,
    rules: &FilterRules,
) -> Vec<CustomerHistory> {
    let mut current = histories;
    loop {
        let before: (usize, usize, usize) = shape(&current);
        current = filter_pass(current, rules);
        if shape(&current) == before {
            return current;
        }
    }
}

fn shape(histories: &[CustomerHistory]) -> (usize, usize, usize) {
    let baskets = histories.iter().map(|h| h.len()).sum();
    let rows = histories
        .iter()
        .flat_map(|h| h.baskets())
        .map(|b| b.len())
        .sum();
    (histories.len(), baskets, rows)
}

fn filter_pass(histories: Vec<CustomerHistory>, rules: &FilterRules) -> Vec<CustomerHistory> {
    let size_ok = |b: &Basket| {
        b.len() >= rules.min_basket_size && rules.max_basket_size.is_none_or(|max| b.len() <= max)
    };
    let kept: Vec<CustomerHistory> = histories
        .into_iter()
        .filter(|h| h.len() >= rules.min_baskets)
        .map(|h| {
            let customer = h.customer().clone();
            let baskets = h
                .into_baskets()
                .into_iter()
                .filter(|b| size_ok(b))
                .collect();
            CustomerHistory::new(customer, baskets).expect("subsequence stays ordered")
        })
        .collect();

    let mut freq: HashMap<&ItemId, usize> = HashMap::new();
    for item in kept
        .iter()
        .flat_map(|h| h.baskets())
        .flat_map(|b| b.items())
    {
        *freq.entry(item).or_default() += 1;
    }
    let rare: HashSet<ItemId> = freq
        .into_iter()
        .filter(|&(_, n)| n < rules.min_item_freq)
        .map(|(i, _)| i.clone())
        .collect();
    if rare.is_empty() {
        return kept;
    }
    kept.into_iter()
        .map(|h| {
            let customer = h.customer().clone();
            let baskets = h
                .baskets()
                .iter()
                .filter_map(|b| b.without(|i| rare.contains(i)))
                .collect();
            CustomerHistory::new(customer, baskets).expect("subsequence stays ordered")
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicItem {
    pub item: ItemId,
    pub period_days: u32,
    pub probability: f64,
    /// Days after the customer's first trip before the item is first due.
    #[serde(default)]
    pub offset_days: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CopurchasePair {
    pub first: ItemId,
    pub second: ItemId,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalItem {
    pub item: ItemId,
    /// Calendar quarter, `0..4`.
    pub season: u8,
    /// Purchase probability per visit inside the season; outside it is
    /// `(1 - concentration) / 3`.
    pub concentration: f64,
}

/// Parameters of the synthetic transaction generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_customers: usize,
    /// Catalogue size; items are named `item_000`, `item_001`, ...
    pub n_items: usize,
    /// Inclusive range of regular shopping trips per customer.
    pub n_baskets_per_customer: (usize, usize),
    pub periodic_items: Vec<PeriodicItem>,
    pub copurchase_pairs: Vec<CopurchasePair>,
    pub seasonal_items: Vec<SeasonalItem>,
    /// Probability that a large basket spawns a forgotten follow-up.
    pub forget_rate: f64,
    pub seed: u64,
    pub start_date: Day,
    /// Inclusive range of days between regular trips.
    pub visit_gap_days: (u32, u32),
    /// Probability that a trip is a large shop.
    pub large_trip_probability: f64,
    /// Inclusive range of background items on an ordinary trip.
    pub small_trip_items: (usize, usize),
    /// Inclusive range of background items on a large shop.
    pub large_trip_items: (usize, usize),
    /// Baskets above this size may be split into a forgotten follow-up.
    pub large_basket_size: usize,
    /// Zipf exponent of the per-customer background preference; 0 is uniform.
    pub background_skew: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let item = |i: usize| ItemId::new(item_token(i, 50)).expect("token");
        SyntheticConfig {
            n_customers: 200,
            n_items: 50,
            n_baskets_per_customer: (60, 90),
            // Weekly items with staggered phases, so only some are due on any visit.
            periodic_items: (0..6)
                .map(|i| PeriodicItem {
                    item: item(i),
                    period_days: 7,
                    probability: 0.9,
                    offset_days: i as u32,
                })
                .collect(),
            copurchase_pairs: (0..5)
                .map(|j| CopurchasePair {
                    first: item(6 + 2 * j),
                    second: item(7 + 2 * j),
                    probability: 0.3,
                })
                .collect(),
            seasonal_items: Vec::new(),
            forget_rate: 0.3,
            seed: 1,
            start_date: Day::from_ymd(2020, 1, 1).expect("valid date"),
            visit_gap_days: (3, 4),
            large_trip_probability: 0.35,
            small_trip_items: (1, 5),
            large_trip_items: (10, 15),
            large_basket_size: 10,
            background_skew: 0.0,
        }
    }
}

pub fn item_token(index: usize, n_items: usize) -> String {
    let width = n_items.saturating_sub(1).to_string().len().max(3);
    format!("item_{index:0width$}")
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::Config(m));
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        for (name, p) in [
            ("forget_rate", self.forget_rate),
            ("large_trip_probability", self.large_trip_probability),
        ] {
            if !prob_ok(p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        for p in &self.periodic_items {
            if !prob_ok(p.probability) {
                return bad(format!("periodic {} probability {}", p.item, p.probability));
            }
            if p.period_days == 0 {
                return bad(format!("periodic {} has zero period", p.item));
            }
        }
        for p in &self.copurchase_pairs {
            if !prob_ok(p.probability) {
                return bad(format!(
                    "pair {}/{} probability {}",
                    p.first, p.second, p.probability
                ));
            }
        }
        for s in &self.seasonal_items {
            if !prob_ok(s.concentration) {
                return bad(format!(
                    "seasonal {} concentration {}",
                    s.item, s.concentration
                ));
            }
            if s.season > 3 {
                return bad(format!(
                    "seasonal {} season {} not in 0..4",
                    s.item, s.season
                ));
            }
        }
        if !(self.background_skew.is_finite() && self.background_skew >= 0.0) {
            return bad(format!(
                "background_skew = {} must be finite and non-negative",
                self.background_skew
            ));
        }
        let ranges = [
            ("n_baskets_per_customer", self.n_baskets_per_customer),
            ("small_trip_items", self.small_trip_items),
            ("large_trip_items", self.large_trip_items),
            (
                "visit_gap_days",
                (
                    self.visit_gap_days.0 as usize,
                    self.visit_gap_days.1 as usize,
                ),
            ),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi {
                return bad(format!("{name}: empty range {lo}..={hi}"));
            }
        }
        let catalogue: HashSet<String> = (0..self.n_items)
            .map(|i| item_token(i, self.n_items))
            .collect();
        for item in self.planted_items() {
            if !catalogue.contains(item.as_str()) {
                return bad(format!("planted item {item} is not in the catalogue"));
            }
        }
        Ok(())
    }

    fn planted_items(&self) -> impl Iterator<Item = &ItemId> {
        self.periodic_items
            .iter()
            .map(|p| &p.item)
            .chain(
                self.copurchase_pairs
                    .iter()
                    .flat_map(|p| [&p.first, &p.second]),
            )
            .chain(self.seasonal_items.iter().map(|s| &s.item))
    }
}

/// Ground truth for one withheld item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub customer_id: CustomerId,
    pub t_date: Day,
    pub forgotten_items: Vec<ItemId>,
    pub h: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub histories: Vec<CustomerHistory>,
    pub planted: Vec<PlantedEvent>,
}

/// Generate a reproducible dataset. The output is a pure function of `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticData, IngestError> {
    config.validate()?;
    let catalogue: Vec<ItemId> = (0..config.n_items)
        .map(|i| ItemId::new(item_token(i, config.n_items)))
        .collect::<Result<_, _>>()?;
    let planted: HashSet<&ItemId> = config.planted_items().collect();
    let background: Vec<ItemId> = catalogue
        .iter()
        .filter(|i| !planted.contains(i))
        .cloned()
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = config
        .n_customers
        .saturating_sub(1)
        .to_string()
        .len()
        .max(4);
    let mut histories = Vec::with_capacity(config.n_customers);
    let mut events = Vec::new();
    for c in 0..config.n_customers {
        let customer = CustomerId::new(format!("c{c:0width$}"))?;
        let (history, planted_events) = generate_customer(config, customer, &background, &mut rng)?;
        histories.push(history);
        events.extend(planted_events);
    }
    Ok(SyntheticData {
        histories,
        planted: events,
    })
}

fn generate_customer(
    config: &SyntheticConfig,
    customer: CustomerId,
    background: &[ItemId],
    rng: &mut ChaCha8Rng,
) -> Result<(CustomerHistory, Vec<PlantedEvent>), IngestError> {
    // Zipf-like personal preference over background items.
    let mut order: Vec<usize> = (0..background.len()).collect();
    order.shuffle(rng);
    let weights: Vec<f64> = (0..background.len())
        .map(|rank| (rank as f64 + 1.0).powf(-config.background_skew))
        .collect();

    let n_trips = rng.gen_range(config.n_baskets_per_customer.0..=config.n_baskets_per_customer.1);
    let mut day = config
        .start_date
        .plus(i64::from(rng.gen_range(0..=config.visit_gap_days.1)));
    let mut next_due: Vec<Day> = config
        .periodic_items
        .iter()
        .map(|p| day.plus(i64::from(p.offset_days)))
        .collect();

    let mut dated: Vec<(Day, Vec<ItemId>)> = Vec::with_capacity(n_trips + n_trips / 4);
    let mut events = Vec::new();
    let mut planted_in_basket: Vec<ItemId> = Vec::new();

    for _ in 0..n_trips {
        let large = rng.gen_bool(config.large_trip_probability);
        let (lo, hi) = if large {
            config.large_trip_items
        } else {
            config.small_trip_items
        };
        let n_background = rng.gen_range(lo..=hi).min(background.len());
        let mut items: Vec<ItemId> = Vec::with_capacity(n_background + 4);
        planted_in_basket.clear();

        let mut pool_weights = weights.clone();
        for _ in 0..n_background {
            let total: f64 = pool_weights.iter().sum();
            if total <= 0.0 {
                break;
            }
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = pool_weights.len() - 1;
            for (rank, w) in pool_weights.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    chosen = rank;
                    break;
                }
                target -= w;
            }
            pool_weights[chosen] = 0.0;
            items.push(background[order[chosen]].clone());
        }

        for (slot, p) in config.periodic_items.iter().enumerate() {
            if day >= next_due[slot] {
                if rng.gen_bool(p.probability) {
                    planted_in_basket.push(p.item.clone());
                }
                next_due[slot] = day.plus(i64::from(p.period_days));
            }
        }
        for pair in &config.copurchase_pairs {
            if rng.gen_bool(pair.probability) {
                planted_in_basket.push(pair.first.clone());
                planted_in_basket.push(pair.second.clone());
            }
        }
        let season = day.season().0;
        for s in &config.seasonal_items {
            let p = if s.season == season {
                s.concentration
            } else {
                (1.0 - s.concentration) / 3.0
            };
            if rng.gen_bool(p) {
                planted_in_basket.push(s.item.clone());
            }
        }
        planted_in_basket.sort_unstable();
        planted_in_basket.dedup();
        items.extend(planted_in_basket.iter().cloned());
        items.sort_unstable();
        items.dedup();

        // The withheld item must leave the basket still large.
        let mut next_day_floor = day;
        if items.len() > config.large_basket_size + 1
            && !planted_in_basket.is_empty()
            && rng.gen_bool(config.forget_rate)
        {
            let withheld = planted_in_basket[rng.gen_range(0..planted_in_basket.len())].clone();
            items.retain(|i| *i != withheld);
            let h = rng.gen_range(0..=2u32);
            let f_day = day.plus(i64::from(h));
            dated.push((day, std::mem::take(&mut items)));
            dated.push((f_day, vec![withheld.clone()]));
            events.push(PlantedEvent {
                customer_id: customer.clone(),
                t_date: day,
                forgotten_items: vec![withheld],
                h,
            });
            next_day_floor = f_day;
        } else if !items.is_empty() {
            dated.push((day, items));
        }

        let gap = rng.gen_range(config.visit_gap_days.0..=config.visit_gap_days.1);
        day = next_day_floor.plus(i64::from(gap.max(1)));
    }

    let baskets = dated
        .into_iter()
        .enumerate()
        .map(|(ordinal, (date, items))| Basket::new(date, ordinal as u32, items))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((CustomerHistory::new(customer, baskets)?, events))
}

/// Write planted events as JSONL, one object per line.
pub fn write_sidecar<W: Write>(events: &[PlantedEvent], mut sink: W) -> Result<(), IngestError> {
    for event in events {
        serde_json::to_writer(&mut sink, event)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sidecar<R: std::io::BufRead>(source: R) -> Result<Vec<PlantedEvent>, IngestError> {
    let mut events = Vec::new();
    for line in source.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            events.push(serde_json::from_str(&line)?);
        }
    }
    Ok(events)
}

/// Index planted events by customer and basket date.
pub fn planted_index(events: &[PlantedEvent]) -> BTreeMap<(CustomerId, Day), &PlantedEvent> {
    events
        .iter()
        .map(|e| ((e.customer_id.clone(), e.t_date), e))
        .collect()
}
