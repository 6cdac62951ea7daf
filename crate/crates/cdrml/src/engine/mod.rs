//! Batch evaluation of the full descriptor set over a full event log.
//!
//! [`build_matrix`] produces one row per roster subscriber and one column
//! per descriptor, in canonical enumeration order. Per-event work happens in
//! a single pass per subscriber: every event lands in the 8 filter slices it
//! matches (specific or `Any` on each of channel, direction, day), and each
//! slice keeps one accumulator per group key. Descriptor values then come
//! from a small table of per-group aggregates, so the cost is independent of
//! the descriptor count except for the final table lookups.
//!
//! Determinism: group iteration follows key order, party and location ids
//! are interned in sorted string order, and all accumulations are integer
//! exact, so the matrix is byte-identical however the input rows or worker
//! threads are arranged. Featurization is parallel across subscribers with
//! results merged in roster order.

mod graph;
mod matrix;
mod naive;

pub use graph::ContactGraph;
pub use matrix::FeatureMatrix;
pub use naive::compute_feature;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::calendar::Calendar;
use crate::data::{classify_subscriber, Channel, EventRecord, MoneyRecord, Subscriber};
use crate::error::{Error, Result};
use crate::grammar::{
    canonical_name, category_of, FeatureDescriptor, Focus, GroupKey, InnerAgg, Normalizer, OuterAgg,
};
use graph::{slice_index, N_SLICES};

/// Side counts from a matrix build.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuildReport {
    /// Events whose caller or recipient is not on the roster. They still
    /// feed the contact graph and the rostered party's features.
    pub unrostered_events: usize,
    /// Money rows for subscribers not on the roster; ignored for labeling.
    pub unrostered_money: usize,
}

/// Event fields needed by the accumulator, with ids interned.
struct CompactEvent {
    caller: u32,
    recipient: u32,
    caller_loc: u32,
    recipient_loc: u32,
    channel: u8,
    duration_s: u32,
    day_ordinal: i32,
    weekday: u8,
    weekend: bool,
    week_key: i32,
}

/// Per-group accumulator. Distinct counts are deferred: members are pushed
/// and deduplicated once at reduction time.
#[derive(Default)]
struct GroupAcc {
    count: u64,
    dur_sum: u64,
    contacts: Vec<u32>,
    locations: Vec<u32>,
    days: Vec<i32>,
}

/// Across-group aggregates of one per-group focus value.
#[derive(Debug, Clone, Copy, Default)]
struct OuterStats {
    n: u32,
    sum: f64,
    mean: f64,
    variance: f64,
    min: f64,
    max: f64,
}

fn outer_stats(values: &[f64]) -> OuterStats {
    if values.is_empty() {
        return OuterStats::default();
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let mut variance = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        variance += (v - mean) * (v - mean);
        min = min.min(v);
        max = max.max(v);
    }
    OuterStats {
        n: values.len() as u32,
        sum,
        mean,
        variance: variance / n,
        min,
        max,
    }
}

const N_GROUPS: usize = 6;
const N_FOCI: usize = 6;

const FV_EVENTS: usize = 0;
const FV_DUR_SUM: usize = 1;
const FV_DUR_MEAN: usize = 2;
const FV_UNIQ_CONTACTS: usize = 3;
const FV_UNIQ_LOCATIONS: usize = 4;
const FV_ACTIVE_DAYS: usize = 5;

/// Descriptor compiled to table coordinates.
enum Compiled {
    Stat {
        slice: u8,
        group: u8,
        fvar: u8,
        outer: OuterAgg,
        normalizer: Normalizer,
    },
    Percentile,
}

fn compile(descriptors: &[FeatureDescriptor]) -> Vec<Compiled> {
    descriptors
        .iter()
        .map(|d| {
            if d.focus == Focus::DegreePercentile {
                return Compiled::Percentile;
            }
            let slice = slice_index(d.channel, d.direction, d.day_filter) as u8;
            let group = match d.group_key {
                GroupKey::None => 0u8,
                GroupKey::DayOfWeek => 1,
                GroupKey::CalendarDay => 2,
                GroupKey::CalendarWeek => 3,
                GroupKey::Contact => 4,
                GroupKey::ContactLocation => 5,
            };
            let fvar = match (d.focus, d.inner_agg) {
                (Focus::EventCount, _) => FV_EVENTS,
                (Focus::DurationS, InnerAgg::Sum) => FV_DUR_SUM,
                (Focus::DurationS, _) => FV_DUR_MEAN,
                (Focus::UniqueContacts, _) => FV_UNIQ_CONTACTS,
                (Focus::UniqueLocations, _) => FV_UNIQ_LOCATIONS,
                (Focus::ActiveDays, _) => FV_ACTIVE_DAYS,
                (Focus::DegreePercentile, _) => unreachable!(),
            } as u8;
            Compiled::Stat {
                slice,
                group,
                fvar,
                outer: d.outer_agg,
                normalizer: d.normalizer,
            }
        })
        .collect()
}

fn distinct_count<T: Ord>(mut values: Vec<T>) -> f64 {
    values.sort_unstable();
    values.dedup();
    values.len() as f64
}

/// Per-subscriber aggregate table plus normalizer denominators.
struct SubscriberTable {
    stats: Vec<[[OuterStats; N_FOCI]; N_GROUPS]>,
    active_days: [f64; N_SLICES],
    unique_locations: [f64; N_SLICES],
}

fn accumulate_subscriber(refs: &[(u32, bool)], events: &[CompactEvent]) -> SubscriberTable {
    type GroupMaps = [std::collections::BTreeMap<i64, GroupAcc>; N_GROUPS];
    let mut slices: Vec<GroupMaps> = (0..N_SLICES).map(|_| Default::default()).collect();

    for &(idx, outgoing) in refs {
        let ev = &events[idx as usize];
        let (contact, contact_loc) = if outgoing {
            (ev.recipient, ev.recipient_loc)
        } else {
            (ev.caller, ev.caller_loc)
        };
        let ci = ev.channel as usize;
        let di = usize::from(!outgoing);
        let yi = usize::from(ev.weekend);
        for c in [ci, 2] {
            for d in [di, 2] {
                for y in [yi, 2] {
                    let maps = &mut slices[c * 9 + d * 3 + y];
                    for (g, map) in maps.iter_mut().enumerate() {
                        let key = match g {
                            0 => 0i64,
                            1 => i64::from(ev.weekday),
                            2 => i64::from(ev.day_ordinal),
                            3 => i64::from(ev.week_key),
                            4 => i64::from(contact),
                            _ => i64::from(contact_loc),
                        };
                        let acc = map.entry(key).or_default();
                        acc.count += 1;
                        acc.dur_sum += u64::from(ev.duration_s);
                        acc.contacts.push(contact);
                        acc.locations.push(contact_loc);
                        acc.days.push(ev.day_ordinal);
                    }
                }
            }
        }
    }

    let mut table = SubscriberTable {
        stats: vec![[[OuterStats::default(); N_FOCI]; N_GROUPS]; N_SLICES],
        active_days: [0.0; N_SLICES],
        unique_locations: [0.0; N_SLICES],
    };
    let mut focus_values: [Vec<f64>; N_FOCI] = Default::default();
    for (s, maps) in slices.into_iter().enumerate() {
        for (g, map) in maps.into_iter().enumerate() {
            for v in &mut focus_values {
                v.clear();
            }
            // BTreeMap iteration is ordered by key, which matches the
            // lexicographic order of the interned strings.
            for (_, acc) in map {
                focus_values[FV_EVENTS].push(acc.count as f64);
                focus_values[FV_DUR_SUM].push(acc.dur_sum as f64);
                focus_values[FV_DUR_MEAN].push(acc.dur_sum as f64 / acc.count as f64);
                focus_values[FV_UNIQ_CONTACTS].push(distinct_count(acc.contacts));
                focus_values[FV_UNIQ_LOCATIONS].push(distinct_count(acc.locations));
                focus_values[FV_ACTIVE_DAYS].push(distinct_count(acc.days));
            }
            for (f, values) in focus_values.iter().enumerate() {
                table.stats[s][g][f] = outer_stats(values);
            }
            if g == 0 {
                // The ungrouped slice doubles as the normalizer source.
                table.active_days[s] = table.stats[s][0][FV_ACTIVE_DAYS].sum;
                table.unique_locations[s] = table.stats[s][0][FV_UNIQ_LOCATIONS].sum;
            }
        }
    }
    table
}

fn eval_row(
    table: &SubscriberTable,
    compiled: &[Compiled],
    subscriber: &str,
    descriptors: &[FeatureDescriptor],
    graph: &ContactGraph,
    out: &mut [f64],
) {
    for (j, c) in compiled.iter().enumerate() {
        out[j] = match c {
            Compiled::Percentile => {
                let d = &descriptors[j];
                graph.degree_percentile(subscriber, d.channel, d.direction, d.day_filter)
            }
            Compiled::Stat {
                slice,
                group,
                fvar,
                outer,
                normalizer,
            } => {
                let stats = &table.stats[*slice as usize][*group as usize][*fvar as usize];
                if stats.n == 0 {
                    0.0
                } else {
                    let raw = match outer {
                        OuterAgg::Identity | OuterAgg::Sum => stats.sum,
                        OuterAgg::Mean => stats.mean,
                        OuterAgg::Variance => stats.variance,
                        OuterAgg::Min => stats.min,
                        OuterAgg::Max => stats.max,
                    };
                    let denom = match normalizer {
                        Normalizer::None => 1.0,
                        Normalizer::PerActiveDay => table.active_days[*slice as usize],
                        Normalizer::PerUniqueLocation => table.unique_locations[*slice as usize],
                        Normalizer::PerLocationPerDay => {
                            table.active_days[*slice as usize]
                                * table.unique_locations[*slice as usize]
                        }
                    };
                    if denom == 0.0 {
                        0.0
                    } else {
                        raw / denom
                    }
                }
            }
        };
    }
}

/// Evaluates every descriptor for every roster subscriber.
///
/// Subscribers without events get an all-zero row except for the neutral 0.5
/// in degree-percentile columns. Events referencing off-roster parties are
/// counted in the report but still contribute to the contact graph and to
/// the rostered side's features.
pub fn build_matrix(
    events: &[EventRecord],
    money: &[MoneyRecord],
    roster: &[Subscriber],
    descriptors: &[FeatureDescriptor],
    cal: &Calendar,
) -> Result<(FeatureMatrix, BuildReport)> {
    if roster.is_empty() {
        return Err(Error::Data("roster is empty".into()));
    }

    // Interned symbol tables in sorted order, so interned-id order equals
    // string order everywhere groups are iterated.
    let mut id_set: BTreeSet<&str> = BTreeSet::new();
    let mut loc_set: BTreeSet<&str> = BTreeSet::new();
    for ev in events {
        id_set.insert(&ev.caller_id);
        id_set.insert(&ev.recipient_id);
        loc_set.insert(&ev.caller_location);
        loc_set.insert(&ev.recipient_location);
    }
    let id_of: HashMap<&str, u32> = id_set
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i as u32))
        .collect();
    let loc_of: HashMap<&str, u32> = loc_set
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i as u32))
        .collect();

    let compact: Vec<CompactEvent> = events
        .iter()
        .map(|ev| CompactEvent {
            caller: id_of[ev.caller_id.as_str()],
            recipient: id_of[ev.recipient_id.as_str()],
            caller_loc: loc_of[ev.caller_location.as_str()],
            recipient_loc: loc_of[ev.recipient_location.as_str()],
            channel: match ev.channel {
                Channel::Call => 0,
                Channel::Sms => 1,
            },
            duration_s: ev.duration_s,
            day_ordinal: cal.day_ordinal(ev.timestamp),
            weekday: cal.weekday_index(ev.timestamp),
            weekend: cal.is_weekend(ev.timestamp),
            week_key: cal.week_key(ev.timestamp),
        })
        .collect();

    let mut row_of: HashMap<&str, usize> = HashMap::new();
    for (i, sub) in roster.iter().enumerate() {
        if row_of.insert(sub.id.as_str(), i).is_some() {
            return Err(Error::Data(format!("duplicate roster id {:?}", sub.id)));
        }
    }

    let mut report = BuildReport::default();
    let mut refs: Vec<Vec<(u32, bool)>> = vec![Vec::new(); roster.len()];
    for (idx, ev) in events.iter().enumerate() {
        let caller_row = row_of.get(ev.caller_id.as_str());
        let recipient_row = row_of.get(ev.recipient_id.as_str());
        if caller_row.is_none() || recipient_row.is_none() {
            report.unrostered_events += 1;
        }
        if let Some(&r) = caller_row {
            refs[r].push((idx as u32, true));
        }
        if let Some(&r) = recipient_row {
            refs[r].push((idx as u32, false));
        }
    }

    let mut ledgers: HashMap<&str, Vec<MoneyRecord>> = HashMap::new();
    for rec in money {
        if row_of.contains_key(rec.subscriber_id.as_str()) {
            ledgers
                .entry(rec.subscriber_id.as_str())
                .or_default()
                .push(rec.clone());
        } else {
            report.unrostered_money += 1;
        }
    }
    let classes = roster
        .iter()
        .map(|sub| {
            classify_subscriber(
                &sub.id,
                ledgers.get(sub.id.as_str()).map_or(&[][..], Vec::as_slice),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let graph = ContactGraph::build(events, cal);
    let compiled = compile(descriptors);
    let width = descriptors.len();

    let rows: Vec<Vec<f64>> = roster
        .par_iter()
        .enumerate()
        .map(|(i, sub)| {
            let table = accumulate_subscriber(&refs[i], &compact);
            let mut row = vec![0.0; width];
            eval_row(&table, &compiled, &sub.id, descriptors, &graph, &mut row);
            row
        })
        .collect();

    let mut values = Vec::with_capacity(roster.len() * width);
    for row in rows {
        debug_assert!(row.iter().all(|v| v.is_finite()));
        values.extend_from_slice(&row);
    }

    let matrix = FeatureMatrix::new(
        roster.iter().map(|s| s.id.clone()).collect(),
        descriptors.iter().map(canonical_name).collect(),
        descriptors.iter().map(category_of).collect(),
        values,
        classes,
        roster.iter().map(|s| s.gender).collect(),
        roster.iter().map(|s| s.district_kind).collect(),
        roster.iter().map(|s| s.district_wealth).collect(),
    )?;
    Ok((matrix, report))
}
