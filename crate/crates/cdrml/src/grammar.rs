//! The feature-descriptor grammar.
//!
//! A descriptor is one accepted path through the grammar: filter
//! events by channel, direction and day kind, group the survivors, reduce
//! each group to one number, aggregate across groups, then optionally divide
//! by an exposure denominator. [`enumerate_descriptors`] yields every valid
//! combination exactly once, in the lexicographic order of the fields below,
//! so column order is stable across runs and platforms.
//!
//! Validity rules:
//!
//! * duration only exists for calls, so `focus = DurationS` forces
//!   `channel = Call`;
//! * an ungrouped selection is a single implicit group, so `group_key = None`
//!   pairs exactly with `outer_agg = Identity`;
//! * the inner aggregate is dictated by the focus (counts count, distinct
//!   foci count distinct values, duration sums or averages);
//! * active-day counts are either global or per calendar week;
//! * degree percentiles are computed against the contact graph, not the
//!   per-subscriber event stream, so they take no grouping or normalizer.

use serde::{Deserialize, Serialize};

macro_rules! grammar_enum {
    ($name:ident { $($variant:ident => $token:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(&self) -> &'static str {
                match self {
                    $($name::$variant => $token),+
                }
            }
        }
    };
}

grammar_enum!(ChannelFilter {
    Call => "call",
    Sms => "sms",
    Any => "any",
});

grammar_enum!(DirectionFilter {
    Outgoing => "out",
    Incoming => "in",
    Any => "any",
});

grammar_enum!(DayFilter {
    Weekday => "weekday",
    Weekend => "weekend",
    Any => "anyday",
});

grammar_enum!(GroupKey {
    None => "nogroup",
    DayOfWeek => "by_dow",
    CalendarDay => "by_day",
    CalendarWeek => "by_week",
    Contact => "by_contact",
    ContactLocation => "by_loc",
});

grammar_enum!(Focus {
    EventCount => "events",
    DurationS => "duration",
    UniqueContacts => "uniq_contacts",
    UniqueLocations => "uniq_locations",
    ActiveDays => "active_days",
    DegreePercentile => "degree_pctl",
});

grammar_enum!(InnerAgg {
    Sum => "sum",
    Mean => "mean",
    DistinctCount => "distinct",
    Count => "count",
});

grammar_enum!(OuterAgg {
    Identity => "identity",
    Mean => "mean",
    Variance => "variance",
    Min => "min",
    Max => "max",
    Sum => "sum",
});

grammar_enum!(Normalizer {
    None => "none",
    PerActiveDay => "per_day",
    PerUniqueLocation => "per_loc",
    PerLocationPerDay => "per_loc_day",
});

/// One point in the feature grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub channel: ChannelFilter,
    pub direction: DirectionFilter,
    pub day_filter: DayFilter,
    pub group_key: GroupKey,
    pub focus: Focus,
    pub inner_agg: InnerAgg,
    pub outer_agg: OuterAgg,
    pub normalizer: Normalizer,
}

impl FeatureDescriptor {
    /// True when the combination satisfies every grammar rule.
    pub fn is_valid(&self) -> bool {
        if self.focus == Focus::DurationS && self.channel != ChannelFilter::Call {
            return false;
        }
        if (self.group_key == GroupKey::None) != (self.outer_agg == OuterAgg::Identity) {
            return false;
        }
        let inner_ok = match self.focus {
            Focus::EventCount | Focus::ActiveDays => self.inner_agg == InnerAgg::Count,
            Focus::UniqueContacts | Focus::UniqueLocations => {
                self.inner_agg == InnerAgg::DistinctCount
            }
            Focus::DurationS => matches!(self.inner_agg, InnerAgg::Sum | InnerAgg::Mean),
            Focus::DegreePercentile => self.inner_agg == InnerAgg::Count,
        };
        if !inner_ok {
            return false;
        }
        if self.focus == Focus::ActiveDays
            && !matches!(self.group_key, GroupKey::None | GroupKey::CalendarWeek)
        {
            return false;
        }
        if self.focus == Focus::DegreePercentile
            && (self.group_key != GroupKey::None || self.normalizer != Normalizer::None)
        {
            return false;
        }
        true
    }
}

/// The three feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureCategory {
    Usage,
    Mobility,
    Network,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 3] = [
        FeatureCategory::Usage,
        FeatureCategory::Mobility,
        FeatureCategory::Network,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            FeatureCategory::Usage => "usage",
            FeatureCategory::Mobility => "mobility",
            FeatureCategory::Network => "network",
        }
    }
}

/// Assigns the category. Location-flavored descriptors are mobility,
/// contact-graph flavored ones are network, everything else is usage.
pub fn category_of(d: &FeatureDescriptor) -> FeatureCategory {
    if d.focus == Focus::UniqueLocations || d.group_key == GroupKey::ContactLocation {
        FeatureCategory::Mobility
    } else if matches!(d.focus, Focus::UniqueContacts | Focus::DegreePercentile)
        || d.group_key == GroupKey::Contact
    {
        FeatureCategory::Network
    } else {
        FeatureCategory::Usage
    }
}

/// Inner aggregates permitted for a focus, in enum order.
fn inner_aggs_for(focus: Focus) -> &'static [InnerAgg] {
    match focus {
        Focus::DurationS => &[InnerAgg::Sum, InnerAgg::Mean],
        Focus::UniqueContacts | Focus::UniqueLocations => &[InnerAgg::DistinctCount],
        Focus::EventCount | Focus::ActiveDays | Focus::DegreePercentile => &[InnerAgg::Count],
    }
}

/// Every valid descriptor, lexicographically ordered over
/// (channel, direction, day_filter, group_key, focus, inner_agg, outer_agg,
/// normalizer), without duplicates.
pub fn enumerate_descriptors() -> Vec<FeatureDescriptor> {
    let mut out = Vec::new();
    for &channel in ChannelFilter::ALL {
        for &direction in DirectionFilter::ALL {
            for &day_filter in DayFilter::ALL {
                for &group_key in GroupKey::ALL {
                    for &focus in Focus::ALL {
                        if focus == Focus::DurationS && channel != ChannelFilter::Call {
                            continue;
                        }
                        if focus == Focus::ActiveDays
                            && !matches!(group_key, GroupKey::None | GroupKey::CalendarWeek)
                        {
                            continue;
                        }
                        if focus == Focus::DegreePercentile && group_key != GroupKey::None {
                            continue;
                        }
                        let outers: &[OuterAgg] = if group_key == GroupKey::None {
                            &[OuterAgg::Identity]
                        } else {
                            &[
                                OuterAgg::Mean,
                                OuterAgg::Variance,
                                OuterAgg::Min,
                                OuterAgg::Max,
                                OuterAgg::Sum,
                            ]
                        };
                        let normalizers: &[Normalizer] = if focus == Focus::DegreePercentile {
                            &[Normalizer::None]
                        } else {
                            Normalizer::ALL
                        };
                        for &inner_agg in inner_aggs_for(focus) {
                            for &outer_agg in outers {
                                for &normalizer in normalizers {
                                    out.push(FeatureDescriptor {
                                        channel,
                                        direction,
                                        day_filter,
                                        group_key,
                                        focus,
                                        inner_agg,
                                        outer_agg,
                                        normalizer,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Dotted, human-readable name, unique over the enumerated set. The
/// normalizer component is appended only when present, e.g.
/// `call.out.anyday.by_dow.duration.mean.variance`.
pub fn canonical_name(d: &FeatureDescriptor) -> String {
    let mut name = format!(
        "{}.{}.{}.{}.{}.{}.{}",
        d.channel.token(),
        d.direction.token(),
        d.day_filter.token(),
        d.group_key.token(),
        d.focus.token(),
        d.inner_agg.token(),
        d.outer_agg.token()
    );
    if d.normalizer != Normalizer::None {
        name.push('.');
        name.push_str(d.normalizer.token());
    }
    name
}

macro_rules! parse_token {
    ($ty:ident, $tok:expr) => {
        $ty::ALL
            .iter()
            .copied()
            .find(|v| v.token() == $tok)
            .ok_or_else(|| {
                crate::Error::Data(format!(
                    concat!("unknown ", stringify!($ty), " token {:?}"),
                    $tok
                ))
            })
    };
}

/// Parses a canonical name back into its descriptor. Rejects names that do
/// not round-trip, including an explicit `.none` normalizer suffix.
pub fn parse_name(name: &str) -> crate::Result<FeatureDescriptor> {
    let parts: Vec<&str> = name.split('.').collect();
    if parts.len() != 7 && parts.len() != 8 {
        return Err(crate::Error::Data(format!(
            "feature name {name:?} must have 7 or 8 dotted components"
        )));
    }
    let d = FeatureDescriptor {
        channel: parse_token!(ChannelFilter, parts[0])?,
        direction: parse_token!(DirectionFilter, parts[1])?,
        day_filter: parse_token!(DayFilter, parts[2])?,
        group_key: parse_token!(GroupKey, parts[3])?,
        focus: parse_token!(Focus, parts[4])?,
        inner_agg: parse_token!(InnerAgg, parts[5])?,
        outer_agg: parse_token!(OuterAgg, parts[6])?,
        normalizer: if parts.len() == 8 {
            let n = parse_token!(Normalizer, parts[7])?;
            if n == Normalizer::None {
                return Err(crate::Error::Data(format!(
                    "feature name {name:?} spells out the default normalizer"
                )));
            }
            n
        } else {
            Normalizer::None
        },
    };
    if !d.is_valid() {
        return Err(crate::Error::Data(format!(
            "feature name {name:?} violates the grammar rules"
        )));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, HashSet};

    /// The worked example: variance over days of week of mean outgoing call
    /// duration.
    pub(crate) fn worked_example() -> FeatureDescriptor {
        FeatureDescriptor {
            channel: ChannelFilter::Call,
            direction: DirectionFilter::Outgoing,
            day_filter: DayFilter::Any,
            group_key: GroupKey::DayOfWeek,
            focus: Focus::DurationS,
            inner_agg: InnerAgg::Mean,
            outer_agg: OuterAgg::Variance,
            normalizer: Normalizer::None,
        }
    }

    fn weekday_unique_locations() -> FeatureDescriptor {
        FeatureDescriptor {
            channel: ChannelFilter::Any,
            direction: DirectionFilter::Outgoing,
            day_filter: DayFilter::Weekday,
            group_key: GroupKey::None,
            focus: Focus::UniqueLocations,
            inner_agg: InnerAgg::DistinctCount,
            outer_agg: OuterAgg::Identity,
            normalizer: Normalizer::None,
        }
    }

    #[test]
    fn enumeration_contains_named_examples() {
        let all = enumerate_descriptors();
        assert!(all.contains(&worked_example()));
        assert!(all.contains(&weekday_unique_locations()));
    }

    #[test]
    fn canonical_names_match_convention() {
        assert_eq!(
            canonical_name(&worked_example()),
            "call.out.anyday.by_dow.duration.mean.variance"
        );
        assert_eq!(
            canonical_name(&weekday_unique_locations()),
            "any.out.weekday.nogroup.uniq_locations.distinct.identity"
        );
    }

    #[test]
    fn names_are_injective_over_the_enumeration() {
        let all = enumerate_descriptors();
        let names: HashSet<String> = all.iter().map(canonical_name).collect();
        assert_eq!(names.len(), all.len());
    }

    #[test]
    fn enumeration_is_sorted_and_duplicate_free() {
        let all = enumerate_descriptors();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn enumeration_is_stable_across_calls() {
        assert_eq!(enumerate_descriptors(), enumerate_descriptors());
    }

    #[test]
    fn categories_of_named_examples() {
        // Unique contact locations on weekdays.
        assert_eq!(
            category_of(&weekday_unique_locations()),
            FeatureCategory::Mobility
        );
        // Rank percentile of the incoming SMS contact network size.
        let pctl = FeatureDescriptor {
            channel: ChannelFilter::Sms,
            direction: DirectionFilter::Incoming,
            day_filter: DayFilter::Any,
            group_key: GroupKey::None,
            focus: Focus::DegreePercentile,
            inner_agg: InnerAgg::Count,
            outer_agg: OuterAgg::Identity,
            normalizer: Normalizer::None,
        };
        assert_eq!(category_of(&pctl), FeatureCategory::Network);
        // Variance over weeks of active days with incoming SMS.
        let active = FeatureDescriptor {
            channel: ChannelFilter::Sms,
            direction: DirectionFilter::Incoming,
            day_filter: DayFilter::Any,
            group_key: GroupKey::CalendarWeek,
            focus: Focus::ActiveDays,
            inner_agg: InnerAgg::Count,
            outer_agg: OuterAgg::Variance,
            normalizer: Normalizer::None,
        };
        assert_eq!(category_of(&active), FeatureCategory::Usage);
    }

    #[test]
    fn categories_partition_the_enumeration() {
        let mut counts: BTreeMap<FeatureCategory, usize> = BTreeMap::new();
        let all = enumerate_descriptors();
        for d in &all {
            *counts.entry(category_of(d)).or_default() += 1;
        }
        assert_eq!(counts.values().sum::<usize>(), all.len());
        assert!(counts.values().all(|&c| c > 0));
    }

    /// Independent oracle: filter the full Cartesian product by the grammar
    /// rules, written directly from the rule list rather than the generator's
    /// loop structure.
    fn product_filter_oracle() -> Vec<FeatureDescriptor> {
        let mut out = Vec::new();
        for &channel in ChannelFilter::ALL {
            for &direction in DirectionFilter::ALL {
                for &day_filter in DayFilter::ALL {
                    for &group_key in GroupKey::ALL {
                        for &focus in Focus::ALL {
                            for &inner_agg in InnerAgg::ALL {
                                for &outer_agg in OuterAgg::ALL {
                                    for &normalizer in Normalizer::ALL {
                                        let d = FeatureDescriptor {
                                            channel,
                                            direction,
                                            day_filter,
                                            group_key,
                                            focus,
                                            inner_agg,
                                            outer_agg,
                                            normalizer,
                                        };
                                        if d.is_valid() {
                                            out.push(d);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn enumeration_equals_product_filter_oracle() {
        let all = enumerate_descriptors();
        let oracle = product_filter_oracle();
        assert_eq!(all.len(), oracle.len());
        assert_eq!(all, oracle);
    }

    #[test]
    fn names_parse_back_to_their_descriptor() {
        for d in enumerate_descriptors() {
            assert_eq!(parse_name(&canonical_name(&d)).unwrap(), d);
        }
        assert!(parse_name("call.out.anyday.by_dow.duration.mean.variance.none").is_err());
        assert!(parse_name("call.out").is_err());
        assert!(parse_name("sms.out.anyday.nogroup.duration.sum.identity").is_err());
    }
}
