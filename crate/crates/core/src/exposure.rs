//! Advert exposure: seconds a user's television was tuned to a channel while
//! a product's advert aired, bucketed by weekday and time slot.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use chrono::{Datelike, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::data::{AdBroadcast, ProductId, UserId, ViewingRecord};

pub const WEEKDAYS: usize = 7;
pub const SLOTS: usize = 2;
/// Number of (weekday, slot) cells per (user, product) pair.
pub const CELLS: usize = WEEKDAYS * SLOTS;

pub const WEEKDAY_NAMES: [&str; WEEKDAYS] = [
    "Monday",
    "Tuesday",
    "Wednesday",
    "Thursday",
    "Friday",
    "Saturday",
    "Sunday",
];

const PRIMETIME_START_H: u32 = 19;
const PRIMETIME_END_H: u32 = 23;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimeSlot {
    Primetime,
    NonPrimetime,
}

impl TimeSlot {
    pub const ALL: [TimeSlot; SLOTS] = [TimeSlot::Primetime, TimeSlot::NonPrimetime];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            TimeSlot::Primetime => "Primetime",
            TimeSlot::NonPrimetime => "Non-Primetime",
        }
    }
}

/// Primetime is the half-open interval [19:00, 23:00).
pub fn slot_of(t: NaiveTime) -> TimeSlot {
    if (PRIMETIME_START_H..PRIMETIME_END_H).contains(&t.hour()) {
        TimeSlot::Primetime
    } else {
        TimeSlot::NonPrimetime
    }
}

/// Monday = 0.
pub fn weekday_of(t: NaiveDateTime) -> usize {
    t.weekday().num_days_from_monday() as usize
}

/// Column of a (weekday, slot) cell: Monday Primetime, Monday Non-Primetime, Tuesday Primetime, ...
pub fn cell_index(weekday: usize, slot: TimeSlot) -> usize {
    weekday * SLOTS + slot.index()
}

pub type ExposureRow = [u64; CELLS];

/// Accumulated exposure seconds per (user, product, weekday, slot).
/// Pairs with no exposure are not stored and read as zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExposureMatrix {
    cells: BTreeMap<(UserId, ProductId), ExposureRow>,
}

impl ExposureMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, user: &UserId, product: &ProductId, weekday: usize, slot: TimeSlot, seconds: u64) {
        if seconds == 0 {
            return;
        }
        let row = self
            .cells
            .entry((user.clone(), product.clone()))
            .or_insert([0; CELLS]);
        row[cell_index(weekday, slot)] += seconds;
    }

    pub fn get(&self, user: &UserId, product: &ProductId, weekday: usize, slot: TimeSlot) -> u64 {
        self.row(user, product)[cell_index(weekday, slot)]
    }

    /// All 14 cells for a pair, zeros if absent.
    pub fn row(&self, user: &UserId, product: &ProductId) -> ExposureRow {
        // BTreeMap lookup needs an owned key tuple.
        self.cells
            .get(&(user.clone(), product.clone()))
            .copied()
            .unwrap_or([0; CELLS])
    }

    pub fn weekday_total(&self, user: &UserId, product: &ProductId, weekday: usize) -> u64 {
        let row = self.row(user, product);
        TimeSlot::ALL.iter().map(|s| row[cell_index(weekday, *s)]).sum()
    }

    pub fn pair_total(&self, user: &UserId, product: &ProductId) -> u64 {
        self.row(user, product).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.cells.values().flat_map(|r| r.iter()).sum()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(UserId, ProductId), &ExposureRow)> {
        self.cells.iter()
    }

    /// Cell-wise sum.
    pub fn merge(&mut self, other: &ExposureMatrix) {
        for (key, row) in &other.cells {
            let dst = self.cells.entry(key.clone()).or_insert([0; CELLS]);
            for (d, s) in dst.iter_mut().zip(row) {
                *d += s;
            }
        }
    }

    /// Audit dump: `user_id product_id weekday slot seconds`, nonzero cells only.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("user_id\tproduct_id\tweekday\tslot\tseconds\n");
        for ((u, p), row) in &self.cells {
            for (w, name) in WEEKDAY_NAMES.iter().enumerate() {
                for slot in TimeSlot::ALL {
                    let secs = row[cell_index(w, slot)];
                    if secs > 0 {
                        let _ = writeln!(out, "{u}\t{p}\t{name}\t{}\t{secs}", slot.label());
                    }
                }
            }
        }
        out
    }
}

/// Join viewing spans with advert airings on the same channel.
///
/// Each overlapping (viewing, broadcast) pair contributes its overlap in
/// seconds, credited to the weekday and slot in which the overlap begins.
pub fn compute_exposure(viewing: &[ViewingRecord], broadcasts: &[AdBroadcast]) -> ExposureMatrix {
    let mut by_channel: HashMap<&str, Vec<&ViewingRecord>> = HashMap::new();
    for v in viewing {
        if v.duration_s > 0 {
            by_channel.entry(v.channel.as_str()).or_default().push(v);
        }
    }
    let mut longest: HashMap<&str, i64> = HashMap::new();
    for (ch, spans) in by_channel.iter_mut() {
        spans.sort_by_key(|v| v.start);
        longest.insert(ch, spans.iter().map(|v| i64::from(v.duration_s)).max().unwrap_or(0));
    }

    let mut matrix = ExposureMatrix::new();
    for b in broadcasts {
        let Some(spans) = by_channel.get(b.channel.as_str()) else {
            continue;
        };
        let b_start = b.start;
        let b_end = b.end();
        // A span can only reach past b_start if it began less than `longest` seconds earlier.
        let earliest = b_start - chrono::Duration::seconds(longest[b.channel.as_str()]);
        let lo = spans.partition_point(|v| v.start <= earliest);
        let hi = spans.partition_point(|v| v.start < b_end);
        for v in &spans[lo..hi] {
            let start = v.start.max(b_start);
            let end = v.end().min(b_end);
            let secs = (end - start).num_seconds();
            if secs > 0 {
                matrix.add(&v.user_id, &b.product_id, weekday_of(start), slot_of(start.time()), secs as u64);
            }
        }
    }
    matrix
}
