//! Seeded synthetic population and event-log generator with planted effects.
//!
//! Each subscriber draws four latent traits: an activity rate (initiated
//! events per day), a mobility range (size of their home-location pool), a
//! network size (size of their contact pool) and a weekday bias. The traits
//! line up one-to-one with the feature families the pipeline measures —
//! activity with usage, mobility with mobility, network size with network —
//! so an adoption model that loads on one trait predicts which family should
//! dominate feature importance downstream.
//!
//! Days are the unit of behavior. Each day a subscriber activates a share of
//! their home-location pool (so their per-day location diversity tracks the
//! mobility trait, not the event count) and a small, trait-independent set
//! of contacts (so per-day contact diversity tracks neither activity nor
//! network size). Events cycle through the day's sets, which keeps those
//! diversities saturated at the set sizes. A constant-rate travel day adds
//! one out-of-pool location, which keeps whole-window location diversity
//! broad for everyone; without it, per-location ratio features would mirror
//! the mobility trait inversely and hand its signal to the wrong feature
//! family.
//!
//! Both location fields of a generated event come from the initiating
//! subscriber's day set. Under the engine's contacted-party convention this
//! makes a subscriber's outgoing contact-location diversity their own,
//! giving the planted mobility effect a clean observable channel.
//!
//! Adoption and P2P labels come from logistic models over the standardized
//! traits and are materialized as money rows: registration for adopters,
//! plus P2P transfers (with adopter counterparties) for P2P users. Money
//! rows live only in the owner's ledger, so planted labels are never
//! scrambled by the counterparty side.
//!
//! Every subscriber works from streams derived from the run seed and their
//! index, so generation is order-independent, parallelizable and exactly
//! reproducible.

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    Channel, DistrictKind, DistrictWealth, EventRecord, Gender, MoneyKind, MoneyRecord, Stratum,
    Subscriber,
};
use crate::error::{Error, Result};
use crate::seeds::derive;

/// Log-normal distribution of a positive real trait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalDist {
    pub log_mean: f64,
    pub log_sd: f64,
}

/// Log-normal distribution rounded up to an integer in `[1, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSizeDist {
    pub log_mean: f64,
    pub log_sd: f64,
    pub max: u32,
}

/// Normal distribution clamped into (0, 1); the share of a week's events
/// that fall on the five weekdays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasDist {
    pub mean: f64,
    pub sd: f64,
}

/// Three-way split of one demographic axis; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisProps {
    pub first: f64,
    pub second: f64,
    pub unknown: f64,
}

impl AxisProps {
    fn validate(&self, axis: &str) -> Result<()> {
        for (name, v) in [
            ("first", self.first),
            ("second", self.second),
            ("unknown", self.unknown),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "{axis}.{name} = {v} is not a probability"
                )));
            }
        }
        let sum = self.first + self.second + self.unknown;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "{axis} proportions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u8 {
        let u: f64 = rng.random();
        if u < self.first {
            0
        } else if u < self.first + self.second {
            1
        } else {
            2
        }
    }
}

/// Logistic coefficients over the standardized latent traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdoptionModel {
    pub intercept: f64,
    pub activity: f64,
    pub mobility: f64,
    pub network: f64,
    /// Per-stratum coefficient overrides; the first override whose stratum
    /// matches any of the subscriber's labels wins.
    pub overrides: Vec<StratumOverride>,
}

impl Default for AdoptionModel {
    fn default() -> Self {
        AdoptionModel {
            intercept: 0.0,
            activity: 0.0,
            mobility: 0.0,
            network: 0.0,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumOverride {
    pub stratum: String,
    pub intercept: f64,
    pub activity: f64,
    pub mobility: f64,
    pub network: f64,
}

impl AdoptionModel {
    fn coefficients_for(&self, strata: &[Option<Stratum>]) -> (f64, f64, f64, f64) {
        for o in &self.overrides {
            if strata
                .iter()
                .flatten()
                .any(|s| s.token() == o.stratum.as_str())
            {
                return (o.intercept, o.activity, o.mobility, o.network);
            }
        }
        (self.intercept, self.activity, self.mobility, self.network)
    }
}

/// Full generator configuration. Every field has a default, so a JSON
/// config only names what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n_subscribers: usize,
    pub seed: u64,
    /// Observation window in days; multiples of 7 keep weekly rates exact.
    pub window_days: u32,
    /// First day of the window, `YYYY-MM-DD`.
    pub start_date: String,
    /// Size of the shared location universe.
    pub n_locations: usize,
    pub gender: AxisProps,
    pub district: AxisProps,
    pub wealth: AxisProps,
    pub activity_rate: LogNormalDist,
    pub mobility_range: PoolSizeDist,
    pub network_size: PoolSizeDist,
    pub weekday_bias: BiasDist,
    /// Probability that an initiated event is a call rather than an SMS.
    pub call_share: f64,
    /// Share of the home-location pool visited on a given day.
    pub day_location_share: f64,
    /// Probability that a day includes one out-of-pool travel location.
    pub travel_day_prob: f64,
    /// Share of the contact pool seen on a given day. Scaling daily contact
    /// draws with the pool keeps days-per-contact flat across subscribers,
    /// so per-contact composites do not mirror the network trait.
    pub daily_contact_rate: f64,
    /// Call duration in seconds.
    pub duration: LogNormalDist,
    pub adoption: AdoptionModel,
    /// P2P activity among adopters.
    pub p2p: AdoptionModel,
    /// Mean extra P2P transfers beyond the first.
    pub p2p_extra_transfers: f64,
    /// Transfer amount distribution.
    pub amount: LogNormalDist,
    /// Probability an adopter also has one non-P2P "other" money row.
    pub other_row_prob: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            n_subscribers: 500,
            seed: 1,
            window_days: 56,
            start_date: "2021-01-04".to_string(),
            n_locations: 120,
            gender: AxisProps {
                first: 0.5,
                second: 0.5,
                unknown: 0.0,
            },
            district: AxisProps {
                first: 0.5,
                second: 0.5,
                unknown: 0.0,
            },
            wealth: AxisProps {
                first: 0.5,
                second: 0.5,
                unknown: 0.0,
            },
            activity_rate: LogNormalDist {
                log_mean: 2.08,
                log_sd: 0.45,
            },
            mobility_range: PoolSizeDist {
                log_mean: 1.6,
                log_sd: 0.55,
                max: 16,
            },
            network_size: PoolSizeDist {
                log_mean: 2.0,
                log_sd: 0.5,
                max: 15,
            },
            weekday_bias: BiasDist {
                mean: 5.0 / 7.0,
                sd: 0.08,
            },
            call_share: 0.7,
            day_location_share: 0.5,
            travel_day_prob: 0.45,
            daily_contact_rate: 0.25,
            duration: LogNormalDist {
                log_mean: 4.6,
                log_sd: 0.9,
            },
            adoption: AdoptionModel::default(),
            p2p: AdoptionModel::default(),
            p2p_extra_transfers: 2.0,
            amount: LogNormalDist {
                log_mean: 6.2,
                log_sd: 1.0,
            },
            other_row_prob: 0.2,
        }
    }
}

impl PopulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            msg: format!("cannot read config: {e}"),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subscribers < 2 {
            return Err(Error::Config("n_subscribers must be at least 2".into()));
        }
        if self.window_days == 0 {
            return Err(Error::Config("window_days must be positive".into()));
        }
        if self.n_locations == 0 {
            return Err(Error::Config("n_locations must be positive".into()));
        }
        self.gender.validate("gender")?;
        self.district.validate("district")?;
        self.wealth.validate("wealth")?;
        for (name, dist) in [
            ("activity_rate", &self.activity_rate),
            ("duration", &self.duration),
            ("amount", &self.amount),
        ] {
            if dist.log_sd < 0.0 || !dist.log_sd.is_finite() || !dist.log_mean.is_finite() {
                return Err(Error::Config(format!("{name} parameters invalid")));
            }
        }
        for (name, dist) in [
            ("mobility_range", &self.mobility_range),
            ("network_size", &self.network_size),
        ] {
            if dist.max == 0 || dist.log_sd < 0.0 {
                return Err(Error::Config(format!("{name} parameters invalid")));
            }
        }
        if !(0.0..=1.0).contains(&self.call_share) {
            return Err(Error::Config(format!(
                "call_share = {} is not a probability",
                self.call_share
            )));
        }
        if !(0.0 < self.day_location_share && self.day_location_share <= 1.0) {
            return Err(Error::Config("day_location_share must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.travel_day_prob) {
            return Err(Error::Config("travel_day_prob is not a probability".into()));
        }
        if !(0.0 < self.daily_contact_rate && self.daily_contact_rate <= 1.0) {
            return Err(Error::Config("daily_contact_rate must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.other_row_prob) {
            return Err(Error::Config("other_row_prob is not a probability".into()));
        }
        if self.p2p_extra_transfers < 0.0 {
            return Err(Error::Config("p2p_extra_transfers must be >= 0".into()));
        }
        self.start_datetime()?;
        Ok(())
    }

    fn start_datetime(&self) -> Result<chrono::DateTime<chrono::Utc>> {
        let date = NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("start_date {:?}: {e}", self.start_date)))?;
        Ok(date.and_hms_opt(0, 0, 0).expect("midnight").and_utc())
    }
}

/// Latent traits behind one subscriber, exposed so planted-effect checks
/// can correlate them with the generated labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubscriberTraits {
    pub activity_rate: f64,
    pub mobility_range: u32,
    pub network_size: u32,
    pub weekday_bias: f64,
}

/// A generated population: roster, event log, money log and the underlying
/// traits.
#[derive(Debug, Clone)]
pub struct GeneratedPopulation {
    pub roster: Vec<Subscriber>,
    pub events: Vec<EventRecord>,
    pub money: Vec<MoneyRecord>,
    pub traits: Vec<SubscriberTraits>,
}

fn subscriber_id(i: usize) -> String {
    format!("s{:05}", i + 1)
}

fn location_name(i: usize) -> String {
    format!("L{i:04}")
}

fn draw_pool_size(dist: &PoolSizeDist, rng: &mut ChaCha8Rng) -> u32 {
    let ln = LogNormal::new(dist.log_mean, dist.log_sd).expect("validated");
    (ln.sample(rng).ceil() as u32).clamp(1, dist.max)
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - mean) / sd).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const TAG_TRAITS: u64 = 1;
const TAG_POOLS: u64 = 2;
const TAG_LABELS: u64 = 3;
const TAG_EVENTS: u64 = 4;
const TAG_MONEY: u64 = 5;

/// Generates the three logs. Deterministic in the config; events are
/// emitted in timestamp order.
pub fn generate(config: &PopulationConfig) -> Result<GeneratedPopulation> {
    config.validate()?;
    let n = config.n_subscribers;
    let start = config.start_datetime()?;

    // Roster and traits.
    let mut roster = Vec::with_capacity(n);
    let mut traits = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, TAG_TRAITS, i as u64));
        let gender = match config.gender.draw(&mut rng) {
            0 => Gender::Male,
            1 => Gender::Female,
            _ => Gender::Unknown,
        };
        let district = match config.district.draw(&mut rng) {
            0 => DistrictKind::Urban,
            1 => DistrictKind::Rural,
            _ => DistrictKind::Unknown,
        };
        let wealth = match config.wealth.draw(&mut rng) {
            0 => DistrictWealth::Rich,
            1 => DistrictWealth::Poor,
            _ => DistrictWealth::Unknown,
        };
        roster.push(Subscriber {
            id: subscriber_id(i),
            gender,
            district_kind: district,
            district_wealth: wealth,
        });

        let activity = LogNormal::new(config.activity_rate.log_mean, config.activity_rate.log_sd)
            .expect("validated")
            .sample(&mut rng);
        let mobility = draw_pool_size(&config.mobility_range, &mut rng);
        let network = draw_pool_size(&config.network_size, &mut rng);
        let bias = Normal::new(config.weekday_bias.mean, config.weekday_bias.sd)
            .expect("validated")
            .sample(&mut rng)
            .clamp(0.05, 0.95);
        traits.push(SubscriberTraits {
            activity_rate: activity,
            mobility_range: mobility,
            network_size: network,
            weekday_bias: bias,
        });
    }

    // Location and contact pools.
    let mut location_pools: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut contact_pools: Vec<Vec<u32>> = Vec::with_capacity(n);
    for (i, t) in traits.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, TAG_POOLS, i as u64));
        let k_loc = (t.mobility_range as usize).min(config.n_locations);
        let locs = rand::seq::index::sample(&mut rng, config.n_locations, k_loc)
            .iter()
            .map(|x| x as u32)
            .collect();
        location_pools.push(locs);
        let k_con = (t.network_size as usize).min(n - 1);
        let contacts = rand::seq::index::sample(&mut rng, n - 1, k_con)
            .iter()
            .map(|x| if x >= i { (x + 1) as u32 } else { x as u32 })
            .collect();
        contact_pools.push(contacts);
    }

    // Standardized traits feed the label models. All three are log-normal
    // draws, so they standardize on the log scale where they are symmetric;
    // otherwise the heavy right tail would compress most of the population
    // toward indistinguishable scores.
    let z_activity = standardize(
        &traits
            .iter()
            .map(|t| t.activity_rate.ln())
            .collect::<Vec<_>>(),
    );
    let z_mobility = standardize(
        &traits
            .iter()
            .map(|t| f64::from(t.mobility_range).ln())
            .collect::<Vec<_>>(),
    );
    let z_network = standardize(
        &traits
            .iter()
            .map(|t| f64::from(t.network_size).ln())
            .collect::<Vec<_>>(),
    );

    let mut adopter = vec![false; n];
    let mut p2p_user = vec![false; n];
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, TAG_LABELS, i as u64));
        let strata = [
            crate::data::stratum_of(&roster[i], crate::data::StratumAxis::Gender),
            crate::data::stratum_of(&roster[i], crate::data::StratumAxis::DistrictKind),
            crate::data::stratum_of(&roster[i], crate::data::StratumAxis::DistrictWealth),
        ];
        let (c0, ca, cm, cn) = config.adoption.coefficients_for(&strata);
        let p_adopt = sigmoid(c0 + ca * z_activity[i] + cm * z_mobility[i] + cn * z_network[i]);
        if rng.random::<f64>() < p_adopt {
            adopter[i] = true;
            let (d0, da, dm, dn) = config.p2p.coefficients_for(&strata);
            let p_p2p = sigmoid(d0 + da * z_activity[i] + dm * z_mobility[i] + dn * z_network[i]);
            p2p_user[i] = rng.random::<f64>() < p_p2p;
        }
    }
    let adopters: Vec<u32> = (0..n).filter(|&i| adopter[i]).map(|i| i as u32).collect();

    // Money ledgers.
    let window_secs = i64::from(config.window_days) * 86_400;
    let mut money: Vec<MoneyRecord> = Vec::new();
    for i in 0..n {
        if !adopter[i] {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, TAG_MONEY, i as u64));
        let id = subscriber_id(i);
        let amount_dist =
            LogNormal::new(config.amount.log_mean, config.amount.log_sd).expect("validated");
        let at = |rng: &mut ChaCha8Rng| {
            start + chrono::Duration::seconds(rng.random_range(0..window_secs))
        };
        money.push(MoneyRecord {
            subscriber_id: id.clone(),
            timestamp: at(&mut rng),
            kind: MoneyKind::Registration,
            counterparty_id: None,
            amount: 0.0,
        });
        if rng.random::<f64>() < config.other_row_prob {
            money.push(MoneyRecord {
                subscriber_id: id.clone(),
                timestamp: at(&mut rng),
                kind: MoneyKind::Other,
                counterparty_id: None,
                amount: amount_dist.sample(&mut rng).round().max(1.0),
            });
        }
        if p2p_user[i] {
            let extra = if config.p2p_extra_transfers > 0.0 {
                Poisson::new(config.p2p_extra_transfers)
                    .expect("validated")
                    .sample(&mut rng) as u64
            } else {
                0
            };
            for _ in 0..1 + extra {
                let counterparty = if adopters.len() > 1 {
                    loop {
                        let pick = adopters[rng.random_range(0..adopters.len())];
                        if pick as usize != i {
                            break pick as usize;
                        }
                    }
                } else {
                    // Degenerate population with a single adopter.
                    (i + 1) % n
                };
                let kind = if rng.random::<f64>() < 0.5 {
                    MoneyKind::P2PSend
                } else {
                    MoneyKind::P2PReceive
                };
                money.push(MoneyRecord {
                    subscriber_id: id.clone(),
                    timestamp: at(&mut rng),
                    kind,
                    counterparty_id: Some(subscriber_id(counterparty)),
                    amount: amount_dist.sample(&mut rng).round().max(1.0),
                });
            }
        }
    }

    // Events, parallel across subscribers on derived streams. Each day
    // activates a location subset (scaled by the mobility trait) and a small
    // trait-independent contact set; events cycle through both so the
    // per-day diversities saturate at the set sizes rather than tracking
    // the event count.
    let weekend_start = 5; // Saturday index from a Monday-anchored start.
    let start_weekday = start.format("%u").to_string().parse::<u32>().unwrap() - 1;
    let per_subscriber: Vec<Vec<EventRecord>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, TAG_EVENTS, i as u64));
            let t = &traits[i];
            let duration_dist = LogNormal::new(config.duration.log_mean, config.duration.log_sd)
                .expect("validated");
            let weekday_rate = t.activity_rate * 7.0 * t.weekday_bias / 5.0;
            let weekend_rate = t.activity_rate * 7.0 * (1.0 - t.weekday_bias) / 2.0;
            let own_pool = &location_pools[i];
            let own_contacts = &contact_pools[i];
            let mut events = Vec::new();
            let mut day_locations: Vec<u32> = Vec::new();
            let mut day_contacts: Vec<u32> = Vec::new();
            for day in 0..config.window_days {
                let dow = (start_weekday + day) % 7;
                let rate = if dow >= weekend_start {
                    weekend_rate
                } else {
                    weekday_rate
                };
                if rate <= 0.0 {
                    continue;
                }
                let count = Poisson::new(rate).expect("positive rate").sample(&mut rng) as u64;

                day_locations.clear();
                day_locations.extend(
                    own_pool
                        .iter()
                        .copied()
                        .filter(|_| rng.random::<f64>() < config.day_location_share),
                );
                if day_locations.is_empty() {
                    day_locations.push(own_pool[rng.random_range(0..own_pool.len())]);
                }
                if rng.random::<f64>() < config.travel_day_prob {
                    day_locations.push(rng.random_range(0..config.n_locations) as u32);
                }
                day_locations.shuffle(&mut rng);

                let mean_contacts = config.daily_contact_rate * own_contacts.len() as f64;
                let wanted = 1 + Poisson::new(mean_contacts)
                    .expect("validated")
                    .sample(&mut rng) as usize;
                let n_day_contacts = wanted.min(own_contacts.len());
                day_contacts.clear();
                day_contacts.extend(
                    rand::seq::index::sample(&mut rng, own_contacts.len(), n_day_contacts)
                        .iter()
                        .map(|x| own_contacts[x]),
                );
                day_contacts.shuffle(&mut rng);

                for e in 0..count as usize {
                    let sec = rng.random_range(0..86_400i64);
                    let ts = start + chrono::Duration::seconds(i64::from(day) * 86_400 + sec);
                    let contact = day_contacts[e % day_contacts.len()] as usize;
                    let channel = if rng.random::<f64>() < config.call_share {
                        Channel::Call
                    } else {
                        Channel::Sms
                    };
                    let duration_s = if channel == Channel::Call {
                        (duration_dist.sample(&mut rng).round() as u32).clamp(1, 86_400)
                    } else {
                        0
                    };
                    // The recipient-side location cycles through the day set,
                    // so outgoing contact locations cover it; the caller side
                    // is a free draw.
                    let recipient_location =
                        location_name(day_locations[e % day_locations.len()] as usize);
                    let caller_location = location_name(
                        day_locations[rng.random_range(0..day_locations.len())] as usize,
                    );
                    events.push(EventRecord {
                        caller_id: subscriber_id(i),
                        recipient_id: subscriber_id(contact),
                        timestamp: ts,
                        channel,
                        duration_s,
                        caller_location,
                        recipient_location,
                    });
                }
            }
            events
        })
        .collect();

    let mut events: Vec<EventRecord> = per_subscriber.into_iter().flatten().collect();
    events.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.caller_id.cmp(&b.caller_id))
            .then_with(|| a.recipient_id.cmp(&b.recipient_id))
            .then_with(|| a.duration_s.cmp(&b.duration_s))
    });
    money.sort_by(|a, b| {
        a.subscriber_id
            .cmp(&b.subscriber_id)
            .then_with(|| a.timestamp.cmp(&b.timestamp))
            .then_with(|| a.kind.as_csv().cmp(b.kind.as_csv()))
    });

    Ok(GeneratedPopulation {
        roster,
        events,
        money,
        traits,
    })
}
