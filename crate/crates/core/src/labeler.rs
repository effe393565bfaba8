//! Forgotten-basket labeling.
//!
//! A basket `B_m` is the forgotten-items basket of an earlier basket `B_j` when
//! `|B_j| > large_basket_size`, `|B_m| <= max_forgotten_size` and `B_m` falls
//! at most `horizon_days` after `B_j`. Each large basket pairs with its
//! earliest qualifying successor, and a small basket is claimed only by the
//! nearest preceding large basket, so a later large basket in between
//! pre-empts the earlier one.

use serde::{Deserialize, Serialize};

use crate::domain::{Basket, CustomerHistory, CustomerId, LabelerConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgottenInstance {
    pub customer: CustomerId,
    pub t_index: usize,
    pub f_index: usize,
    pub gap_days: u32,
    pub b_t: Basket,
    pub b_f: Basket,
}

/// JSONL record emitted by the `label` command.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub customer_id: CustomerId,
    pub t_index: usize,
    pub f_index: usize,
    pub gap_days: u32,
}

impl From<&ForgottenInstance> for InstanceRecord {
    fn from(i: &ForgottenInstance) -> Self {
        InstanceRecord {
            customer_id: i.customer.clone(),
            t_index: i.t_index,
            f_index: i.f_index,
            gap_days: i.gap_days,
        }
    }
}

/// Index of the forgotten basket paired with the large basket at `t`, if any.
pub fn follow_up(baskets: &[Basket], t: usize, cfg: &LabelerConfig) -> Option<usize> {
    let bt = &baskets[t];
    if bt.len() <= cfg.large_basket_size {
        return None;
    }
    for (m, bm) in baskets.iter().enumerate().skip(t + 1) {
        if bm.date().days_since(bt.date()) > i64::from(cfg.horizon_days) {
            return None;
        }
        if bm.len() <= cfg.max_forgotten_size {
            return Some(m);
        }
        if bm.len() > cfg.large_basket_size {
            // a nearer large basket claims whatever follows
            return None;
        }
    }
    None
}

/// All forgotten-basket instances of one history, ordered by `t_index`.
pub fn label_forgotten(history: &CustomerHistory, cfg: &LabelerConfig) -> Vec<ForgottenInstance> {
    let baskets = history.baskets();
    (0..baskets.len())
        .filter_map(|t| {
            follow_up(baskets, t, cfg).map(|f| ForgottenInstance {
                customer: history.customer().clone(),
                t_index: t,
                f_index: f,
                gap_days: baskets[f].date().days_since(baskets[t].date()) as u32,
                b_t: baskets[t].clone(),
                b_f: baskets[f].clone(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelingStats {
    pub instances: usize,
    pub baskets: usize,
    /// `instances / baskets`, zero for an empty collection.
    pub forgotten_fraction: f64,
}

pub fn labeling_stats(histories: &[CustomerHistory], cfg: &LabelerConfig) -> LabelingStats {
    let baskets: usize = histories.iter().map(|h| h.len()).sum();
    let instances: usize = histories
        .iter()
        .map(|h| {
            let b = h.baskets();
            (0..b.len())
                .filter(|&t| follow_up(b, t, cfg).is_some())
                .count()
        })
        .sum();
    LabelingStats {
        instances,
        baskets,
        forgotten_fraction: if baskets == 0 {
            0.0
        } else {
            instances as f64 / baskets as f64
        },
    }
}
