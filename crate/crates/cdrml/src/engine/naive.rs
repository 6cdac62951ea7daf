//! Direct per-descriptor evaluation over one subscriber's events.
//!
//! [`compute_feature`] applies the descriptor stages literally: channel,
//! direction and day filters, then grouping, the per-group reduction, the
//! across-group aggregate and finally the normalizer division. It is the
//! readable reference the batch engine is checked against, and the place
//! where the evaluation conventions are pinned down:
//!
//! * the contact's location is the other party's cell — `recipient_location`
//!   for outgoing events, `caller_location` for incoming ones;
//! * an empty selection after filtering yields 0;
//! * variance is population variance, so a single group yields 0;
//! * normalizer denominators are taken over the filtered selection, and a
//!   zero denominator yields 0.

use std::collections::{BTreeMap, BTreeSet};

use crate::calendar::Calendar;
use crate::data::{Channel, EventRecord};
use crate::error::{Error, Result};
use crate::grammar::{
    ChannelFilter, DayFilter, DirectionFilter, FeatureDescriptor, Focus, GroupKey, InnerAgg,
    Normalizer, OuterAgg,
};

/// One event seen from the evaluated subscriber's side.
struct View<'a> {
    outgoing: bool,
    channel: Channel,
    duration_s: u32,
    contact: &'a str,
    contact_location: &'a str,
    day_ordinal: i32,
    weekday: u8,
    weekend: bool,
    week_key: i32,
}

/// Grouping key with a total order; string keys sort lexicographically so
/// group iteration order is reproducible.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
enum Key<'a> {
    Int(i64),
    Str(&'a str),
}

fn views<'a>(subscriber: &str, events: &'a [EventRecord], cal: &Calendar) -> Vec<View<'a>> {
    events
        .iter()
        .filter_map(|ev| {
            let outgoing = if ev.caller_id == subscriber {
                true
            } else if ev.recipient_id == subscriber {
                false
            } else {
                return None;
            };
            let (contact, contact_location) = if outgoing {
                (ev.recipient_id.as_str(), ev.recipient_location.as_str())
            } else {
                (ev.caller_id.as_str(), ev.caller_location.as_str())
            };
            Some(View {
                outgoing,
                channel: ev.channel,
                duration_s: ev.duration_s,
                contact,
                contact_location,
                day_ordinal: cal.day_ordinal(ev.timestamp),
                weekday: cal.weekday_index(ev.timestamp),
                weekend: cal.is_weekend(ev.timestamp),
                week_key: cal.week_key(ev.timestamp),
            })
        })
        .collect()
}

fn passes(v: &View<'_>, d: &FeatureDescriptor) -> bool {
    let channel_ok = match d.channel {
        ChannelFilter::Call => v.channel == Channel::Call,
        ChannelFilter::Sms => v.channel == Channel::Sms,
        ChannelFilter::Any => true,
    };
    let direction_ok = match d.direction {
        DirectionFilter::Outgoing => v.outgoing,
        DirectionFilter::Incoming => !v.outgoing,
        DirectionFilter::Any => true,
    };
    let day_ok = match d.day_filter {
        DayFilter::Weekday => !v.weekend,
        DayFilter::Weekend => v.weekend,
        DayFilter::Any => true,
    };
    channel_ok && direction_ok && day_ok
}

fn group_value(d: &FeatureDescriptor, members: &[&View<'_>]) -> f64 {
    match d.focus {
        Focus::EventCount => members.len() as f64,
        Focus::DurationS => {
            let sum: f64 = members.iter().map(|v| f64::from(v.duration_s)).sum();
            match d.inner_agg {
                InnerAgg::Sum => sum,
                InnerAgg::Mean => sum / members.len() as f64,
                _ => unreachable!("grammar forbids other inner aggregates for duration"),
            }
        }
        Focus::UniqueContacts => members
            .iter()
            .map(|v| v.contact)
            .collect::<BTreeSet<_>>()
            .len() as f64,
        Focus::UniqueLocations => members
            .iter()
            .map(|v| v.contact_location)
            .collect::<BTreeSet<_>>()
            .len() as f64,
        Focus::ActiveDays => members
            .iter()
            .map(|v| v.day_ordinal)
            .collect::<BTreeSet<_>>()
            .len() as f64,
        Focus::DegreePercentile => unreachable!("checked by compute_feature"),
    }
}

fn aggregate(outer: OuterAgg, values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    match outer {
        OuterAgg::Identity | OuterAgg::Sum => sum,
        OuterAgg::Mean => sum / n,
        OuterAgg::Variance => {
            let mean = sum / n;
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        }
        OuterAgg::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        OuterAgg::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Evaluates one descriptor over one subscriber's events. Events not
/// involving the subscriber are ignored. Degree-percentile descriptors are
/// graph features and are rejected here.
pub fn compute_feature(
    d: &FeatureDescriptor,
    subscriber: &str,
    events: &[EventRecord],
    cal: &Calendar,
) -> Result<f64> {
    if d.focus == Focus::DegreePercentile {
        return Err(Error::Data(
            "degree percentiles are computed from the contact graph, not per-event".into(),
        ));
    }
    let views = views(subscriber, events, cal);
    let selected: Vec<&View<'_>> = views.iter().filter(|v| passes(v, d)).collect();
    if selected.is_empty() {
        return Ok(0.0);
    }

    let mut groups: BTreeMap<Key<'_>, Vec<&View<'_>>> = BTreeMap::new();
    for v in &selected {
        let key = match d.group_key {
            GroupKey::None => Key::Int(0),
            GroupKey::DayOfWeek => Key::Int(i64::from(v.weekday)),
            GroupKey::CalendarDay => Key::Int(i64::from(v.day_ordinal)),
            GroupKey::CalendarWeek => Key::Int(i64::from(v.week_key)),
            GroupKey::Contact => Key::Str(v.contact),
            GroupKey::ContactLocation => Key::Str(v.contact_location),
        };
        groups.entry(key).or_default().push(v);
    }

    let values: Vec<f64> = groups
        .values()
        .map(|members| group_value(d, members))
        .collect();
    let raw = aggregate(d.outer_agg, &values);

    let denominator = match d.normalizer {
        Normalizer::None => 1.0,
        Normalizer::PerActiveDay => selected
            .iter()
            .map(|v| v.day_ordinal)
            .collect::<BTreeSet<_>>()
            .len() as f64,
        Normalizer::PerUniqueLocation => selected
            .iter()
            .map(|v| v.contact_location)
            .collect::<BTreeSet<_>>()
            .len() as f64,
        Normalizer::PerLocationPerDay => {
            let days = selected
                .iter()
                .map(|v| v.day_ordinal)
                .collect::<BTreeSet<_>>()
                .len();
            let locs = selected
                .iter()
                .map(|v| v.contact_location)
                .collect::<BTreeSet<_>>()
                .len();
            (days * locs) as f64
        }
    };
    if denominator == 0.0 {
        return Ok(0.0);
    }
    Ok(raw / denominator)
}
