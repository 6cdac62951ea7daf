//! CSV ingestion and canonical serialization for the three input files.
//!
//! Each reader checks the header literally, then validates every row against
//! the record invariants. In strict mode the first malformed row aborts with
//! its line number; in lenient mode malformed rows are skipped and counted.
//! Writers emit the exact canonical form the readers accept, so accepted rows
//! re-serialize byte-identically.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::data::{
    format_timestamp, parse_timestamp, Channel, DistrictKind, DistrictWealth, EventRecord, Gender,
    MoneyKind, MoneyRecord, Subscriber,
};
use crate::error::{Error, Result};

pub const CDR_HEADER: &str =
    "caller_id,recipient_id,timestamp,channel,duration_s,caller_location,recipient_location";
pub const MMTR_HEADER: &str = "subscriber_id,timestamp,kind,counterparty_id,amount";
pub const ROSTER_HEADER: &str = "id,gender,district_kind,district_wealth";

/// Per-file ingestion outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    /// Line numbers (1-based, header = line 1) of rejected rows.
    pub rejected_lines: Vec<u64>,
}

fn open_reader(path: &Path, expected_header: &str) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        msg: format!("cannot open: {e}"),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader.headers().map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        msg: format!("cannot read header: {e}"),
    })?;
    let got = header.iter().collect::<Vec<_>>().join(",");
    if got != expected_header {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            msg: format!("header mismatch: expected {expected_header:?}, got {got:?}"),
        });
    }
    Ok(reader)
}

fn ingest_rows<T>(
    path: &Path,
    expected_header: &str,
    strict: bool,
    parse: impl Fn(&csv::StringRecord) -> Result<T>,
) -> Result<(Vec<T>, IngestReport)> {
    let mut reader = open_reader(path, expected_header)?;
    let mut out = Vec::new();
    let mut report = IngestReport::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => match parse(&record) {
                Ok(value) => {
                    out.push(value);
                    report.accepted += 1;
                }
                Err(e) => {
                    if strict {
                        return Err(Error::Row {
                            path: path.to_path_buf(),
                            line,
                            msg: e.to_string(),
                        });
                    }
                    report.rejected += 1;
                    report.rejected_lines.push(line);
                }
            },
            Err(e) => {
                if strict {
                    return Err(Error::Row {
                        path: path.to_path_buf(),
                        line,
                        msg: e.to_string(),
                    });
                }
                report.rejected += 1;
                report.rejected_lines.push(line);
            }
        }
    }
    Ok((out, report))
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str> {
    rec.get(idx)
        .ok_or_else(|| Error::Data(format!("missing field {name}")))
}

fn parse_event(rec: &csv::StringRecord) -> Result<EventRecord> {
    if rec.len() != 7 {
        return Err(Error::Data(format!("expected 7 fields, got {}", rec.len())));
    }
    let duration_txt = field(rec, 4, "duration_s")?;
    let duration_s: u32 = duration_txt.parse().map_err(|_| {
        Error::Data(format!(
            "duration_s must be a non-negative integer, got {duration_txt:?}"
        ))
    })?;
    let event = EventRecord {
        caller_id: field(rec, 0, "caller_id")?.to_string(),
        recipient_id: field(rec, 1, "recipient_id")?.to_string(),
        timestamp: parse_timestamp(field(rec, 2, "timestamp")?)?,
        channel: Channel::from_csv(field(rec, 3, "channel")?)?,
        duration_s,
        caller_location: field(rec, 5, "caller_location")?.to_string(),
        recipient_location: field(rec, 6, "recipient_location")?.to_string(),
    };
    event.validate()?;
    Ok(event)
}

fn parse_money(rec: &csv::StringRecord) -> Result<MoneyRecord> {
    if rec.len() != 5 {
        return Err(Error::Data(format!("expected 5 fields, got {}", rec.len())));
    }
    let counterparty = field(rec, 3, "counterparty_id")?;
    let amount_txt = field(rec, 4, "amount")?;
    let amount: f64 = amount_txt
        .parse()
        .map_err(|_| Error::Data(format!("amount must be a number, got {amount_txt:?}")))?;
    let money = MoneyRecord {
        subscriber_id: field(rec, 0, "subscriber_id")?.to_string(),
        timestamp: parse_timestamp(field(rec, 1, "timestamp")?)?,
        kind: MoneyKind::from_csv(field(rec, 2, "kind")?)?,
        counterparty_id: if counterparty.is_empty() {
            None
        } else {
            Some(counterparty.to_string())
        },
        amount,
    };
    money.validate()?;
    Ok(money)
}

fn parse_subscriber(rec: &csv::StringRecord) -> Result<Subscriber> {
    if rec.len() != 4 {
        return Err(Error::Data(format!("expected 4 fields, got {}", rec.len())));
    }
    Ok(Subscriber {
        id: field(rec, 0, "id")?.to_string(),
        gender: Gender::from_csv(field(rec, 1, "gender")?)?,
        district_kind: DistrictKind::from_csv(field(rec, 2, "district_kind")?)?,
        district_wealth: DistrictWealth::from_csv(field(rec, 3, "district_wealth")?)?,
    })
}

/// Reads a CDR file. Returns records in file order plus the ingest report.
pub fn ingest_events(path: &Path, strict: bool) -> Result<(Vec<EventRecord>, IngestReport)> {
    ingest_rows(path, CDR_HEADER, strict, parse_event)
}

/// Reads an MMTR file.
pub fn ingest_money(path: &Path, strict: bool) -> Result<(Vec<MoneyRecord>, IngestReport)> {
    ingest_rows(path, MMTR_HEADER, strict, parse_money)
}

/// Reads a roster file, additionally rejecting duplicate subscriber ids.
pub fn ingest_roster(path: &Path, strict: bool) -> Result<(Vec<Subscriber>, IngestReport)> {
    let (subs, mut report) = ingest_rows(path, ROSTER_HEADER, strict, parse_subscriber)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(subs.len());
    for sub in subs {
        if seen.insert(sub.id.clone()) {
            out.push(sub);
        } else if strict {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: format!("duplicate roster id {:?}", sub.id),
            });
        } else {
            report.accepted -= 1;
            report.rejected += 1;
        }
    }
    Ok((out, report))
}

pub fn event_csv_row(e: &EventRecord) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        e.caller_id,
        e.recipient_id,
        format_timestamp(e.timestamp),
        e.channel.as_csv(),
        e.duration_s,
        e.caller_location,
        e.recipient_location
    )
}

pub fn money_csv_row(m: &MoneyRecord) -> String {
    format!(
        "{},{},{},{},{}",
        m.subscriber_id,
        format_timestamp(m.timestamp),
        m.kind.as_csv(),
        m.counterparty_id.as_deref().unwrap_or(""),
        m.amount
    )
}

pub fn roster_csv_row(s: &Subscriber) -> String {
    format!(
        "{},{},{},{}",
        s.id,
        s.gender.as_csv(),
        s.district_kind.as_csv(),
        s.district_wealth.as_csv()
    )
}

fn write_csv<T>(
    path: &Path,
    header: &str,
    rows: &[T],
    to_row: impl Fn(&T) -> String,
) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 48 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        let _ = writeln!(text, "{}", to_row(row));
    }
    let file = File::create(path).map_err(|e| Error::Schema {
        path: PathBuf::from(path),
        msg: format!("cannot create: {e}"),
    })?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn write_events_csv(path: &Path, events: &[EventRecord]) -> Result<()> {
    write_csv(path, CDR_HEADER, events, event_csv_row)
}

pub fn write_money_csv(path: &Path, money: &[MoneyRecord]) -> Result<()> {
    write_csv(path, MMTR_HEADER, money, money_csv_row)
}

pub fn write_roster_csv(path: &Path, roster: &[Subscriber]) -> Result<()> {
    write_csv(path, ROSTER_HEADER, roster, roster_csv_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tmp(name: &str, contents: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cdrml-ingest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        fs::write(&path, contents).unwrap();
        path
    }

    const GOOD: &str =
        "caller_id,recipient_id,timestamp,channel,duration_s,caller_location,recipient_location\n\
        a,b,2021-01-04T08:00:00Z,CALL,60,L1,L2\n\
        b,a,2021-01-04T09:30:00Z,SMS,0,L2,L1\n\
        a,c,2021-01-09T20:15:05Z,CALL,340,L1,L3\n";

    #[test]
    fn strict_ingest_accepts_well_formed_rows() {
        let path = tmp("good.csv", GOOD);
        let (events, report) = ingest_events(&path, true).unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(report.accepted, 3);
        assert_eq!(report.rejected, 0);
        assert_eq!(events[0].duration_s, 60);
        assert_eq!(events[1].channel, Channel::Sms);
    }

    #[test]
    fn lenient_ingest_skips_negative_duration() {
        let text = format!("{CDR_HEADER}\na,b,2021-01-04T08:00:00Z,CALL,-5,L1,L2\nb,a,2021-01-04T09:00:00Z,CALL,10,L2,L1\n");
        let path = tmp("negdur.csv", &text);
        let (events, report) = ingest_events(&path, false).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(report.rejected, 1);
        assert_eq!(report.rejected_lines, vec![2]);
    }

    #[test]
    fn strict_ingest_rejects_sms_with_duration() {
        let text = format!("{CDR_HEADER}\na,b,2021-01-04T08:00:00Z,SMS,45,L1,L2\n");
        let path = tmp("smsdur.csv", &text);
        let err = ingest_events(&path, true).unwrap_err().to_string();
        assert!(err.contains(":2:"), "error should name line 2: {err}");
        assert!(
            err.contains("duration"),
            "error should name the invariant: {err}"
        );
    }

    #[test]
    fn header_mismatch_is_fatal() {
        let path = tmp("badheader.csv", "caller,callee\na,b\n");
        assert!(ingest_events(&path, false).is_err());
    }

    #[test]
    fn missing_file_is_an_error() {
        let path = PathBuf::from("/nonexistent/cdr.csv");
        assert!(ingest_events(&path, true).is_err());
    }

    #[test]
    fn accepted_rows_reserialize_byte_identically() {
        let path = tmp("roundtrip.csv", GOOD);
        let (events, _) = ingest_events(&path, true).unwrap();
        let out = tmp("roundtrip-out.csv", "");
        write_events_csv(&out, &events).unwrap();
        assert_eq!(fs::read(&out).unwrap(), GOOD.as_bytes());
    }

    #[test]
    fn non_canonical_timestamp_rejected() {
        let text = format!("{CDR_HEADER}\na,b,2021-1-4T08:00:00Z,CALL,60,L1,L2\n");
        let path = tmp("ts.csv", &text);
        let (events, report) = ingest_events(&path, false).unwrap();
        assert!(events.is_empty());
        assert_eq!(report.rejected, 1);
    }

    #[test]
    fn money_counterparty_presence_checked() {
        let text = format!(
            "{MMTR_HEADER}\ns1,2021-01-05T10:00:00Z,REG,,0\ns1,2021-01-06T10:00:00Z,P2P_SEND,s2,250.5\ns1,2021-01-07T10:00:00Z,P2P_RECV,,10\n"
        );
        let path = tmp("mmtr.csv", &text);
        let (rows, report) = ingest_money(&path, false).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(report.rejected, 1);
        assert_eq!(rows[1].counterparty_id.as_deref(), Some("s2"));
    }

    #[test]
    fn roster_duplicate_ids_rejected() {
        let text = format!("{ROSTER_HEADER}\ns1,M,URBAN,RICH\ns1,F,RURAL,POOR\n");
        let path = tmp("roster.csv", &text);
        assert!(ingest_roster(&path, true).is_err());
        let (subs, report) = ingest_roster(&path, false).unwrap();
        assert_eq!(subs.len(), 1);
        assert_eq!(report.rejected, 1);
    }
}
