//! Typed event, transaction and roster records plus subscriber labeling.
//!
//! A call-detail row is one directed event: `caller_id` initiated a call or
//! SMS toward `recipient_id`, with the cell location of each party at event
//! time. Money rows belong to one subscriber's ledger; peer-to-peer rows name
//! the counterparty. Subscribers are labeled from their money ledger alone:
//! any P2P row makes them a [`UserClass::P2P`] user, any other money row a
//! [`UserClass::Registered`] user, otherwise they are voice-only.

mod ingest;

pub use ingest::{
    ingest_events, ingest_money, ingest_roster, write_events_csv, write_money_csv,
    write_roster_csv, IngestReport, CDR_HEADER, MMTR_HEADER, ROSTER_HEADER,
};

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Parses a `YYYY-MM-DDTHH:MM:SSZ` timestamp, rejecting any spelling that
/// would not re-render byte-identically.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let naive = NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map_err(|e| Error::Data(format!("bad timestamp {s:?}: {e}")))?;
    let ts = naive.and_utc();
    let rendered = format_timestamp(ts);
    if rendered != s {
        return Err(Error::Data(format!(
            "timestamp {s:?} is not canonical (expected {rendered:?})"
        )));
    }
    Ok(ts)
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Call,
    Sms,
}

impl Channel {
    pub fn as_csv(&self) -> &'static str {
        match self {
            Channel::Call => "CALL",
            Channel::Sms => "SMS",
        }
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        match s {
            "CALL" => Ok(Channel::Call),
            "SMS" => Ok(Channel::Sms),
            other => Err(Error::Data(format!("unknown channel {other:?}"))),
        }
    }
}

/// One directed call or SMS event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub caller_id: String,
    pub recipient_id: String,
    pub timestamp: DateTime<Utc>,
    pub channel: Channel,
    pub duration_s: u32,
    pub caller_location: String,
    pub recipient_location: String,
}

impl EventRecord {
    /// Checks the record-level invariants, returning the violated rule.
    pub fn validate(&self) -> Result<()> {
        if self.channel == Channel::Sms && self.duration_s != 0 {
            return Err(Error::Data(format!(
                "SMS event must have duration_s = 0, got {}",
                self.duration_s
            )));
        }
        if self.caller_id == self.recipient_id {
            return Err(Error::Data(format!(
                "caller_id and recipient_id are both {:?}",
                self.caller_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoneyKind {
    Registration,
    P2PSend,
    P2PReceive,
    Other,
}

impl MoneyKind {
    pub fn is_p2p(&self) -> bool {
        matches!(self, MoneyKind::P2PSend | MoneyKind::P2PReceive)
    }

    pub fn as_csv(&self) -> &'static str {
        match self {
            MoneyKind::Registration => "REG",
            MoneyKind::P2PSend => "P2P_SEND",
            MoneyKind::P2PReceive => "P2P_RECV",
            MoneyKind::Other => "OTHER",
        }
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        match s {
            "REG" => Ok(MoneyKind::Registration),
            "P2P_SEND" => Ok(MoneyKind::P2PSend),
            "P2P_RECV" => Ok(MoneyKind::P2PReceive),
            "OTHER" => Ok(MoneyKind::Other),
            other => Err(Error::Data(format!("unknown money kind {other:?}"))),
        }
    }
}

/// One mobile-money ledger row for a single subscriber.
#[derive(Debug, Clone, PartialEq)]
pub struct MoneyRecord {
    pub subscriber_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: MoneyKind,
    pub counterparty_id: Option<String>,
    pub amount: f64,
}

impl MoneyRecord {
    pub fn validate(&self) -> Result<()> {
        match (self.kind.is_p2p(), &self.counterparty_id) {
            (true, None) => Err(Error::Data(format!(
                "{} row requires a counterparty_id",
                self.kind.as_csv()
            ))),
            (false, Some(_)) => Err(Error::Data(format!(
                "{} row must not carry a counterparty_id",
                self.kind.as_csv()
            ))),
            _ if self.amount < 0.0 || !self.amount.is_finite() => Err(Error::Data(format!(
                "amount must be a non-negative number, got {}",
                self.amount
            ))),
            _ => Ok(()),
        }
    }
}

macro_rules! tri_state {
    ($name:ident { $a:ident => $a_csv:literal, $b:ident => $b_csv:literal }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name {
            $a,
            $b,
            Unknown,
        }

        impl $name {
            pub fn as_csv(&self) -> &'static str {
                match self {
                    $name::$a => $a_csv,
                    $name::$b => $b_csv,
                    $name::Unknown => "U",
                }
            }

            pub fn from_csv(s: &str) -> Result<Self> {
                match s {
                    $a_csv => Ok($name::$a),
                    $b_csv => Ok($name::$b),
                    "U" => Ok($name::Unknown),
                    other => Err(Error::Data(format!(
                        concat!("unknown ", stringify!($name), " value {:?}"),
                        other
                    ))),
                }
            }
        }
    };
}

tri_state!(Gender { Male => "M", Female => "F" });
tri_state!(DistrictKind { Urban => "URBAN", Rural => "RURAL" });
tri_state!(DistrictWealth { Rich => "RICH", Poor => "POOR" });

/// One roster entry with demographic attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscriber {
    pub id: String,
    pub gender: Gender,
    pub district_kind: DistrictKind,
    pub district_wealth: DistrictWealth,
}

/// Demographic axis used for stratified experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StratumAxis {
    Gender,
    DistrictKind,
    DistrictWealth,
}

/// One of the six demographic strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stratum {
    Male,
    Female,
    Urban,
    Rural,
    Rich,
    Poor,
}

impl Stratum {
    pub const ALL: [Stratum; 6] = [
        Stratum::Male,
        Stratum::Female,
        Stratum::Urban,
        Stratum::Rural,
        Stratum::Rich,
        Stratum::Poor,
    ];

    pub fn axis(&self) -> StratumAxis {
        match self {
            Stratum::Male | Stratum::Female => StratumAxis::Gender,
            Stratum::Urban | Stratum::Rural => StratumAxis::DistrictKind,
            Stratum::Rich | Stratum::Poor => StratumAxis::DistrictWealth,
        }
    }

    pub fn token(&self) -> &'static str {
        match self {
            Stratum::Male => "male",
            Stratum::Female => "female",
            Stratum::Urban => "urban",
            Stratum::Rural => "rural",
            Stratum::Rich => "rich",
            Stratum::Poor => "poor",
        }
    }

    pub fn from_token(s: &str) -> Result<Self> {
        Stratum::ALL
            .iter()
            .copied()
            .find(|st| st.token() == s)
            .ok_or_else(|| Error::Data(format!("unknown stratum {s:?}")))
    }
}

/// Projects a subscriber onto one demographic axis; `None` when unknown.
pub fn stratum_of(s: &Subscriber, axis: StratumAxis) -> Option<Stratum> {
    match axis {
        StratumAxis::Gender => match s.gender {
            Gender::Male => Some(Stratum::Male),
            Gender::Female => Some(Stratum::Female),
            Gender::Unknown => None,
        },
        StratumAxis::DistrictKind => match s.district_kind {
            DistrictKind::Urban => Some(Stratum::Urban),
            DistrictKind::Rural => Some(Stratum::Rural),
            DistrictKind::Unknown => None,
        },
        StratumAxis::DistrictWealth => match s.district_wealth {
            DistrictWealth::Rich => Some(Stratum::Rich),
            DistrictWealth::Poor => Some(Stratum::Poor),
            DistrictWealth::Unknown => None,
        },
    }
}

/// Mobile-money usage class, decided solely by a subscriber's money ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UserClass {
    VoiceOnly,
    Registered,
    P2P,
}

impl UserClass {
    pub fn as_csv(&self) -> &'static str {
        match self {
            UserClass::VoiceOnly => "VOICE",
            UserClass::Registered => "REG",
            UserClass::P2P => "P2P",
        }
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        match s {
            "VOICE" => Ok(UserClass::VoiceOnly),
            "REG" => Ok(UserClass::Registered),
            "P2P" => Ok(UserClass::P2P),
            other => Err(Error::Data(format!("unknown user class {other:?}"))),
        }
    }
}

/// Classifies one subscriber from their money rows. Any P2P row dominates;
/// any remaining row means registered; an empty ledger means voice-only.
pub fn classify_subscriber(id: &str, money: &[MoneyRecord]) -> Result<UserClass> {
    let mut any = false;
    let mut p2p = false;
    for rec in money {
        if rec.subscriber_id != id {
            return Err(Error::Data(format!(
                "money record for {:?} passed to classification of {id:?}",
                rec.subscriber_id
            )));
        }
        any = true;
        p2p |= rec.kind.is_p2p();
    }
    Ok(if p2p {
        UserClass::P2P
    } else if any {
        UserClass::Registered
    } else {
        UserClass::VoiceOnly
    })
}
