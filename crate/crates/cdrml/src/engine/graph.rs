//! Contact graph and degree-percentile features.
//!
//! The graph is built once over the full event log, sliced by channel,
//! direction and day kind. A subscriber's degree percentile in a slice is
//! their standing among their own contacts: the fraction of contacts whose
//! degree does not exceed theirs. Ties count in the subscriber's favor, and
//! a subscriber with no contacts in the slice sits at the neutral 0.5.

use std::collections::{HashMap, HashSet};

use crate::calendar::Calendar;
use crate::data::{Channel, EventRecord};
use crate::grammar::{ChannelFilter, DayFilter, DirectionFilter};

/// Number of (channel, direction, day) slices.
pub(crate) const N_SLICES: usize = 27;

pub(crate) fn slice_index(c: ChannelFilter, d: DirectionFilter, y: DayFilter) -> usize {
    let ci = match c {
        ChannelFilter::Call => 0,
        ChannelFilter::Sms => 1,
        ChannelFilter::Any => 2,
    };
    let di = match d {
        DirectionFilter::Outgoing => 0,
        DirectionFilter::Incoming => 1,
        DirectionFilter::Any => 2,
    };
    let yi = match y {
        DayFilter::Weekday => 0,
        DayFilter::Weekend => 1,
        DayFilter::Any => 2,
    };
    ci * 9 + di * 3 + yi
}

/// Per-slice adjacency over interned party ids.
pub struct ContactGraph {
    id_of: HashMap<String, u32>,
    slices: Vec<HashMap<u32, HashSet<u32>>>,
}

impl ContactGraph {
    /// Builds the graph over the full log. Every event contributes, whether
    /// or not its parties are rostered.
    pub fn build(events: &[EventRecord], cal: &Calendar) -> Self {
        let mut id_of: HashMap<String, u32> = HashMap::new();
        let intern = |id: &str, table: &mut HashMap<String, u32>| -> u32 {
            if let Some(&v) = table.get(id) {
                v
            } else {
                let v = table.len() as u32;
                table.insert(id.to_string(), v);
                v
            }
        };
        let mut slices: Vec<HashMap<u32, HashSet<u32>>> =
            (0..N_SLICES).map(|_| HashMap::new()).collect();
        for ev in events {
            let caller = intern(&ev.caller_id, &mut id_of);
            let recipient = intern(&ev.recipient_id, &mut id_of);
            let ch = match ev.channel {
                Channel::Call => ChannelFilter::Call,
                Channel::Sms => ChannelFilter::Sms,
            };
            let day = if cal.is_weekend(ev.timestamp) {
                DayFilter::Weekend
            } else {
                DayFilter::Weekday
            };
            for &c in &[ch, ChannelFilter::Any] {
                for &y in &[day, DayFilter::Any] {
                    for &(party, other, dir) in &[
                        (caller, recipient, DirectionFilter::Outgoing),
                        (recipient, caller, DirectionFilter::Incoming),
                    ] {
                        for &d in &[dir, DirectionFilter::Any] {
                            slices[slice_index(c, d, y)]
                                .entry(party)
                                .or_default()
                                .insert(other);
                        }
                    }
                }
            }
        }
        ContactGraph { id_of, slices }
    }

    fn contacts_by_id(
        &self,
        id: u32,
        channel: ChannelFilter,
        direction: DirectionFilter,
        day: DayFilter,
    ) -> Option<&HashSet<u32>> {
        self.slices[slice_index(channel, direction, day)].get(&id)
    }

    /// Degree of a subscriber in one slice; 0 when unseen.
    pub fn degree(
        &self,
        subscriber: &str,
        channel: ChannelFilter,
        direction: DirectionFilter,
        day: DayFilter,
    ) -> usize {
        self.id_of
            .get(subscriber)
            .and_then(|&id| self.contacts_by_id(id, channel, direction, day))
            .map_or(0, HashSet::len)
    }

    /// Fraction of the subscriber's contacts whose degree is at most the
    /// subscriber's own, in [0, 1]; 0.5 for an empty contact set.
    pub fn degree_percentile(
        &self,
        subscriber: &str,
        channel: ChannelFilter,
        direction: DirectionFilter,
        day: DayFilter,
    ) -> f64 {
        let contacts = match self
            .id_of
            .get(subscriber)
            .and_then(|&id| self.contacts_by_id(id, channel, direction, day))
        {
            Some(c) if !c.is_empty() => c,
            _ => return 0.5,
        };
        let own = contacts.len();
        let at_most = contacts
            .iter()
            .filter(|&&j| {
                self.contacts_by_id(j, channel, direction, day)
                    .map_or(0, HashSet::len)
                    <= own
            })
            .count();
        at_most as f64 / contacts.len() as f64
    }
}
