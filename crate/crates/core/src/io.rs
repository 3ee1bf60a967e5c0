//! Dataset directory I/O: plain CSV files plus `manifest.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeZone, Utc};
use chrono_tz::Tz;
use csv::{ByteRecord, StringRecord};
use serde::{Deserialize, Serialize};

use crate::data::{
    ComfortReport, Dataset, Phase, PhaseKind, PowerReading, ScreentimeSession, Site, SiteClock,
};
use crate::error::{Error, Result};
use crate::validate::{RawDataset, ValidationReport};

pub const SCHEMA_VERSION: u32 = 1;

pub const READINGS_CSV: &str = "readings.csv";
pub const SCREENTIME_CSV: &str = "screentime.csv";
pub const INCENTIVES_CSV: &str = "incentives.csv";
pub const PHASES_CSV: &str = "phases.csv";
pub const COMFORT_CSV: &str = "comfort.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub site: Site,
    pub tz: String,
    pub seed: Option<u64>,
    pub generator: String,
}

impl Manifest {
    pub fn new(site: Site, tz: Tz, seed: Option<u64>, generator: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            site,
            tz: tz.name().to_owned(),
            seed,
            generator: generator.into(),
        }
    }

    pub fn clock(&self) -> Result<SiteClock> {
        self.tz
            .parse::<Tz>()
            .map(SiteClock::new)
            .map_err(|_| Error::Manifest(format!("unknown timezone `{}`", self.tz)))
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub report: ValidationReport,
    pub manifest: Manifest,
}

pub fn format_utc(t: DateTime<Utc>) -> String {
    t.format(TS_FORMAT).to_string()
}

/// Parses an ISO 8601 UTC instant; offsets other than `Z` are converted.
pub fn parse_utc(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = NaiveDateTime::parse_from_str(s, TS_FORMAT) {
        return Some(t.and_utc());
    }
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&Utc))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

/// Column positions resolved from a header row.
struct Columns<'a> {
    path: &'a Path,
    idx: Vec<usize>,
}

impl<'a> Columns<'a> {
    fn resolve(path: &'a Path, header: &StringRecord, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                header
                    .iter()
                    .position(|h| h.trim() == *n)
                    .ok_or_else(|| Error::MissingColumn {
                        path: path.to_owned(),
                        column: (*n).to_owned(),
                    })
            })
            .collect::<Result<_>>()?;
        Ok(Self { path, idx })
    }

    fn field<'r>(&self, rec: &'r ByteRecord, i: usize) -> Result<&'r str> {
        let raw = rec.get(self.idx[i]).ok_or_else(|| self.error(rec, "missing field"))?;
        std::str::from_utf8(raw)
            .map(str::trim)
            .map_err(|_| self.error(rec, "invalid UTF-8"))
    }

    fn error(&self, rec: &ByteRecord, message: &str) -> Error {
        Error::Csv {
            path: self.path.to_owned(),
            line: rec.position().map_or(0, |p| p.line()),
            message: message.to_owned(),
        }
    }

    fn parse<T>(&self, rec: &ByteRecord, i: usize, what: &str, f: impl FnOnce(&str) -> Option<T>) -> Result<T> {
        let s = self.field(rec, i)?;
        f(s).ok_or_else(|| self.error(rec, &format!("invalid {what} `{s}`")))
    }
}

/// Streams the data rows of a CSV file through `row`.
fn read_csv<R: Read>(
    reader: R,
    path: &Path,
    names: &[&str],
    mut row: impl FnMut(&Columns, &ByteRecord) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(path, &e))?.clone();
    let cols = Columns::resolve(path, &header, names)?;
    let mut rec = ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(true) => row(&cols, &rec)?,
            Ok(false) => return Ok(()),
            Err(e) => return Err(csv_err(path, &e)),
        }
    }
}

fn csv_err(path: &Path, e: &csv::Error) -> Error {
    Error::Csv {
        path: path.to_owned(),
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

pub fn read_readings<R: Read>(reader: R, path: &Path) -> Result<Vec<PowerReading>> {
    let mut out = Vec::new();
    // ids repeat in long runs; reuse the previous allocation when they do
    let mut last: Option<(String, String)> = None;
    read_csv(reader, path, &["timestamp_utc", "participant_id", "socket_id", "watts"], |c, rec| {
        let timestamp = c.parse(rec, 0, "timestamp", parse_utc)?;
        let (p, s) = (c.field(rec, 1)?, c.field(rec, 2)?);
        let watts = c.parse(rec, 3, "watts", |s| s.parse::<f64>().ok())?;
        let ids = match &last {
            Some((lp, ls)) if lp == p && ls == s => (lp.clone(), ls.clone()),
            _ => {
                last = Some((p.to_owned(), s.to_owned()));
                (p.to_owned(), s.to_owned())
            }
        };
        out.push(PowerReading {
            timestamp,
            participant_id: ids.0.into(),
            socket_id: ids.1.into(),
            watts,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_sessions<R: Read>(reader: R, path: &Path) -> Result<Vec<ScreentimeSession>> {
    let mut out = Vec::new();
    read_csv(reader, path, &["participant_id", "session_start_utc", "session_end_utc"], |c, rec| {
        out.push(ScreentimeSession {
            participant_id: c.field(rec, 0)?.into(),
            session_start: c.parse(rec, 1, "timestamp", parse_utc)?,
            session_end: c.parse(rec, 2, "timestamp", parse_utc)?,
        });
        Ok(())
    })?;
    Ok(out)
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

pub fn read_incentives<R: Read>(reader: R, path: &Path) -> Result<Vec<(NaiveDate, u32)>> {
    let mut out = Vec::new();
    read_csv(reader, path, &["date", "amount_usd"], |c, rec| {
        out.push((
            c.parse(rec, 0, "date", parse_date)?,
            c.parse(rec, 1, "amount", |s| s.parse().ok())?,
        ));
        Ok(())
    })?;
    Ok(out)
}

pub fn read_phases<R: Read>(reader: R, path: &Path) -> Result<Vec<Phase>> {
    let mut out = Vec::new();
    read_csv(reader, path, &["site", "kind", "label", "start_date", "end_date"], |c, rec| {
        out.push(Phase {
            site: c.parse(rec, 0, "site", |s| s.parse().ok())?,
            kind: c.parse(rec, 1, "phase kind", |s| s.parse::<PhaseKind>().ok())?,
            label: c.field(rec, 2)?.to_owned(),
            start_date: c.parse(rec, 3, "date", parse_date)?,
            end_date: c.parse(rec, 4, "date", parse_date)?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_comfort<R: Read>(reader: R, path: &Path) -> Result<Vec<ComfortReport>> {
    let mut out = Vec::new();
    read_csv(reader, path, &["participant_id", "timestamp_utc", "level"], |c, rec| {
        let level: i64 = c.parse(rec, 2, "level", |s| s.parse().ok())?;
        out.push(ComfortReport {
            participant_id: c.field(rec, 0)?.into(),
            timestamp: c.parse(rec, 1, "timestamp", parse_utc)?,
            // out-of-range values are kept (clamped to i8) and flagged by validation
            level: level.clamp(i64::from(i8::MIN), i64::from(i8::MAX)) as i8,
        });
        Ok(())
    })?;
    Ok(out)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn open_optional(path: &Path) -> Result<Option<BufReader<File>>> {
    match File::open(path) {
        Ok(f) => Ok(Some(BufReader::new(f))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_JSON);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Manifest(e.to_string()))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(Error::Manifest(format!(
            "schema version {} not supported (expected {SCHEMA_VERSION})",
            m.schema_version
        )));
    }
    Ok(m)
}

/// Reads every file of a dataset directory without validating.
///
/// `readings.csv`, `phases.csv` and `manifest.json` are required; the other
/// files default to empty.
pub fn load_raw(dir: &Path) -> Result<(RawDataset, Manifest)> {
    let manifest = read_manifest(dir)?;
    let p = |name: &str| dir.join(name);
    let readings = read_readings(open(&p(READINGS_CSV))?, &p(READINGS_CSV))?;
    let phases = read_phases(open(&p(PHASES_CSV))?, &p(PHASES_CSV))?;
    let sessions = match open_optional(&p(SCREENTIME_CSV))? {
        Some(r) => read_sessions(r, &p(SCREENTIME_CSV))?,
        None => Vec::new(),
    };
    let incentives = match open_optional(&p(INCENTIVES_CSV))? {
        Some(r) => read_incentives(r, &p(INCENTIVES_CSV))?,
        None => Vec::new(),
    };
    let comfort = match open_optional(&p(COMFORT_CSV))? {
        Some(r) => read_comfort(r, &p(COMFORT_CSV))?,
        None => Vec::new(),
    };
    let raw = RawDataset {
        readings,
        sessions,
        incentives,
        phases: phases.into_iter().filter(|ph| ph.site == manifest.site).collect(),
        comfort,
    };
    Ok((raw, manifest))
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LoadedDataset> {
    let (raw, manifest) = load_raw(dir.as_ref())?;
    let (dataset, report) = Dataset::from_raw(raw, manifest.site, manifest.clock()?)?;
    Ok(LoadedDataset {
        dataset,
        report,
        manifest,
    })
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn write_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_owned(),
        line: 0,
        message: e.to_string(),
    }
}

/// Writes `dataset` as a dataset directory, creating it if needed.
pub fn save_dataset(dataset: &Dataset, manifest: &Manifest, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = |n: &str| -> PathBuf { dir.join(n) };

    let rp = path(READINGS_CSV);
    let mut w = create(&rp)?;
    let e = write_err(&rp);
    w.write_record(["timestamp_utc", "participant_id", "socket_id", "watts"]).map_err(&e)?;
    let mut ts_cache = (i64::MIN, String::new());
    let mut watts = String::new();
    for p in dataset.readings.participants() {
        for (s, samples) in dataset.readings.sockets(p).into_iter().flatten() {
            for x in samples {
                if ts_cache.0 != x.t {
                    let t = Utc.timestamp_opt(x.t, 0).single().expect("valid instant");
                    ts_cache = (x.t, format_utc(t));
                }
                watts.clear();
                use std::fmt::Write as _;
                write!(watts, "{}", x.watts).expect("string write");
                w.write_record([ts_cache.1.as_str(), p.as_str(), s.as_str(), watts.as_str()])
                    .map_err(&e)?;
            }
        }
    }
    w.flush().map_err(io_err(&rp))?;

    let sp = path(SCREENTIME_CSV);
    let mut w = create(&sp)?;
    let e = write_err(&sp);
    w.write_record(["participant_id", "session_start_utc", "session_end_utc"]).map_err(&e)?;
    for s in dataset.sessions.to_sessions() {
        w.write_record([
            s.participant_id.as_str(),
            &format_utc(s.session_start),
            &format_utc(s.session_end),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(io_err(&sp))?;

    let ip = path(INCENTIVES_CSV);
    let mut w = create(&ip)?;
    let e = write_err(&ip);
    w.write_record(["date", "amount_usd"]).map_err(&e)?;
    for (d, a) in dataset.incentives.iter() {
        w.write_record([d.to_string(), a.to_string()]).map_err(&e)?;
    }
    w.flush().map_err(io_err(&ip))?;

    let pp = path(PHASES_CSV);
    let mut w = create(&pp)?;
    let e = write_err(&pp);
    w.write_record(["site", "kind", "label", "start_date", "end_date"]).map_err(&e)?;
    for ph in dataset.calendar.phases() {
        w.write_record([
            ph.site.as_str(),
            ph.kind.as_str(),
            &ph.label,
            &ph.start_date.to_string(),
            &ph.end_date.to_string(),
        ])
        .map_err(&e)?;
    }
    w.flush().map_err(io_err(&pp))?;

    let cp = path(COMFORT_CSV);
    let mut w = create(&cp)?;
    let e = write_err(&cp);
    w.write_record(["participant_id", "timestamp_utc", "level"]).map_err(&e)?;
    for c in &dataset.comfort {
        w.write_record([c.participant_id.as_str(), &format_utc(c.timestamp), &c.level.to_string()])
            .map_err(&e)?;
    }
    w.flush().map_err(io_err(&cp))?;

    let mp = path(MANIFEST_JSON);
    let mut f = File::create(&mp).map_err(io_err(&mp))?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    f.write_all(json.as_bytes()).map_err(io_err(&mp))?;
    f.write_all(b"\n").map_err(io_err(&mp))?;
    Ok(())
}
