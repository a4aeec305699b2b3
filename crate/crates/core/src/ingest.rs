//! Collision CSV parsing, circumstance-flag extraction and per-zone tallies.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeoPoint, ZoneAssignment, ZoneSet};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Pedestrian,
    Alcohol,
    Animal,
    ParkedVehicle,
    Distracted,
    OffRoad,
    PoorLighting,
    NoTrafficControl,
}

impl Flag {
    pub const ALL: [Flag; 8] = [
        Flag::Pedestrian,
        Flag::Alcohol,
        Flag::Animal,
        Flag::ParkedVehicle,
        Flag::Distracted,
        Flag::OffRoad,
        Flag::PoorLighting,
        Flag::NoTrafficControl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Flag::Pedestrian => "pedestrian",
            Flag::Alcohol => "alcohol",
            Flag::Animal => "animal",
            Flag::ParkedVehicle => "parked_vehicle",
            Flag::Distracted => "distracted",
            Flag::OffRoad => "off_road",
            Flag::PoorLighting => "poor_lighting",
            Flag::NoTrafficControl => "no_traffic_control",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl FromStr for Flag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Flag::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown flag `{s}`")))
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FlagSet(u8);

impl FlagSet {
    pub fn contains(self, flag: Flag) -> bool {
        self.0 & flag.bit() != 0
    }

    pub fn insert(&mut self, flag: Flag) {
        self.0 |= flag.bit();
    }

    pub fn iter(self) -> impl Iterator<Item = Flag> {
        Flag::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

impl FromIterator<Flag> for FlagSet {
    fn from_iter<I: IntoIterator<Item = Flag>>(iter: I) -> Self {
        let mut s = FlagSet::default();
        for f in iter {
            s.insert(f);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrashRecord {
    pub report_id: String,
    pub timestamp: NaiveDateTime,
    pub location: GeoPoint,
    pub severe: bool,
    pub flags: FlagSet,
}

/// How a raw cell value is turned into a boolean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Cell equals one of `values` (case-insensitive, trimmed).
    #[default]
    Equals,
    /// Cell contains one of `values` as a substring (case-insensitive).
    Contains,
    /// Cell is non-blank and equals none of `values`.
    NotIn,
    /// Cell is non-blank; `values` is ignored.
    NonEmpty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRule {
    pub column: String,
    #[serde(default)]
    pub mode: MatchMode,
    #[serde(default)]
    pub values: Vec<String>,
}

impl ValueRule {
    fn new(column: &str, mode: MatchMode, values: &[&str]) -> Self {
        ValueRule {
            column: column.to_string(),
            mode,
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn matches(&self, raw: &str) -> bool {
        let cell = raw.trim().to_uppercase();
        let mut values = self.values.iter().map(|v| v.trim().to_uppercase());
        match self.mode {
            MatchMode::Equals => values.any(|v| v == cell),
            MatchMode::Contains => !cell.is_empty() && values.any(|v| cell.contains(&v)),
            MatchMode::NotIn => !cell.is_empty() && values.all(|v| v != cell),
            MatchMode::NonEmpty => !cell.is_empty(),
        }
    }
}

/// Inclusive calendar-date window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn contains(&self, t: &NaiveDateTime) -> bool {
        let d = t.date();
        d >= self.start && d <= self.end
    }
}

/// Maps source columns onto the logical record fields.
///
/// The defaults target the Montgomery County (MD) crash reporting export.
/// Which injury classes count as "severe" is an assumption of this default
/// (fatal plus suspected serious injury); override it for other sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub report_id: String,
    pub timestamp: String,
    pub timestamp_formats: Vec<String>,
    pub longitude: String,
    pub latitude: String,
    pub severity: ValueRule,
    #[serde(default)]
    pub flags: BTreeMap<Flag, ValueRule>,
    #[serde(default)]
    pub window: Option<StudyWindow>,
    /// `[min_lon, min_lat, max_lon, max_lat]`
    #[serde(default)]
    pub bbox: Option<[f64; 4]>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        use MatchMode::*;
        let flags = BTreeMap::from([
            (
                Flag::Pedestrian,
                ValueRule::new("Related Non-Motorist", Contains, &["PEDESTRIAN"]),
            ),
            (
                Flag::Alcohol,
                ValueRule::new("Driver Substance Abuse", Contains, &["ALCOHOL"]),
            ),
            (
                Flag::Animal,
                ValueRule::new("First Harmful Event", Contains, &["ANIMAL"]),
            ),
            (
                Flag::ParkedVehicle,
                ValueRule::new("First Harmful Event", Contains, &["PARKED VEHICLE"]),
            ),
            (Flag::OffRoad, ValueRule::new("Off-Road Description", NonEmpty, &[])),
            (
                Flag::PoorLighting,
                ValueRule::new(
                    "Light",
                    Equals,
                    &["DARK NO LIGHTS", "DARK -- UNKNOWN LIGHTING", "DARK - UNKNOWN LIGHTING"],
                ),
            ),
            (
                Flag::NoTrafficControl,
                ValueRule::new("Traffic Control", Equals, &["NO CONTROLS"]),
            ),
        ]);
        ColumnMapping {
            report_id: "Report Number".into(),
            timestamp: "Crash Date/Time".into(),
            timestamp_formats: vec![
                "%m/%d/%Y %I:%M:%S %p".into(),
                "%m/%d/%Y %H:%M".into(),
                "%Y-%m-%dT%H:%M:%S".into(),
                "%Y-%m-%d %H:%M:%S".into(),
                "%Y/%m/%d %H:%M:%S".into(),
                "%Y/%m/%d %H:%M:%S%#z".into(),
            ],
            longitude: "Longitude".into(),
            latitude: "Latitude".into(),
            severity: ValueRule::new(
                "Injury Severity",
                Equals,
                &["FATAL INJURY", "SUSPECTED SERIOUS INJURY", "FATAL", "SERIOUS INJURY"],
            ),
            flags,
            window: None,
            bbox: None,
        }
    }
}

impl ColumnMapping {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: ColumnMapping = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("report_id", &self.report_id),
            ("timestamp", &self.timestamp),
            ("longitude", &self.longitude),
            ("latitude", &self.latitude),
            ("severity", &self.severity.column),
        ];
        if let Some((field, _)) = named.iter().find(|(_, c)| c.trim().is_empty()) {
            return Err(Error::Config(format!("mapping for `{field}` is empty")));
        }
        if self.timestamp_formats.is_empty() {
            return Err(Error::Config("no timestamp formats configured".into()));
        }
        if let Some(w) = self.window {
            if w.start > w.end {
                return Err(Error::Config(format!(
                    "study window starts after it ends ({} > {})",
                    w.start, w.end
                )));
            }
        }
        Ok(())
    }

    fn columns(&self) -> Vec<&str> {
        let mut cols = vec![
            self.report_id.as_str(),
            self.timestamp.as_str(),
            self.longitude.as_str(),
            self.latitude.as_str(),
            self.severity.column.as_str(),
        ];
        cols.extend(self.flags.values().map(|r| r.column.as_str()));
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    /// 1-based data row number (the header is row 0).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutput {
    pub records: Vec<CrashRecord>,
    pub quarantine: Vec<QuarantineEntry>,
    pub rows: usize,
}

struct ResolvedMapping<'a> {
    mapping: &'a ColumnMapping,
    report_id: usize,
    timestamp: usize,
    lon: usize,
    lat: usize,
    severity: usize,
    flags: Vec<(Flag, usize, &'a ValueRule)>,
}

impl<'a> ResolvedMapping<'a> {
    fn resolve(mapping: &'a ColumnMapping, header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| header.iter().position(|h| h.trim() == name.trim());
        let mut missing: Vec<String> = mapping
            .columns()
            .into_iter()
            .filter(|c| find(c).is_none())
            .map(str::to_string)
            .collect();
        missing.sort();
        missing.dedup();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        let idx = |name: &str| find(name).expect("checked above");
        Ok(ResolvedMapping {
            mapping,
            report_id: idx(&mapping.report_id),
            timestamp: idx(&mapping.timestamp),
            lon: idx(&mapping.longitude),
            lat: idx(&mapping.latitude),
            severity: idx(&mapping.severity.column),
            flags: mapping
                .flags
                .iter()
                .map(|(f, rule)| (*f, idx(&rule.column), rule))
                .collect(),
        })
    }

    fn parse_row(&self, row: &csv::StringRecord) -> std::result::Result<CrashRecord, String> {
        let cell = |i: usize| row.get(i).unwrap_or("").trim();
        let report_id = cell(self.report_id);
        if report_id.is_empty() {
            return Err("missing report id".into());
        }
        let (lon_raw, lat_raw) = (cell(self.lon), cell(self.lat));
        if lon_raw.is_empty() || lat_raw.is_empty() {
            return Err("missing coordinate".into());
        }
        let (lon, lat) = match (lon_raw.parse::<f64>(), lat_raw.parse::<f64>()) {
            (Ok(lon), Ok(lat)) => (lon, lat),
            _ => return Err("unparsable coordinate".into()),
        };
        let location = GeoPoint::new(lon, lat);
        if !location.is_valid() {
            return Err("coordinate out of range".into());
        }
        if let Some([x0, y0, x1, y1]) = self.mapping.bbox {
            if !(lon >= x0 && lon <= x1 && lat >= y0 && lat <= y1) {
                return Err("outside bounding box".into());
            }
        }
        let ts_raw = cell(self.timestamp);
        if ts_raw.is_empty() {
            return Err("missing timestamp".into());
        }
        let timestamp = self
            .mapping
            .timestamp_formats
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(ts_raw, f).ok())
            .ok_or_else(|| "unparsable timestamp".to_string())?;
        if let Some(w) = self.mapping.window {
            if !w.contains(&timestamp) {
                return Err("outside study window".into());
            }
        }
        let severe = self.mapping.severity.matches(cell(self.severity));
        let flags = self
            .flags
            .iter()
            .filter(|(_, i, rule)| rule.matches(cell(*i)))
            .map(|(f, _, _)| *f)
            .collect();
        Ok(CrashRecord {
            report_id: report_id.to_string(),
            timestamp,
            location,
            severe,
            flags,
        })
    }
}

/// Parses a raw collision extract. Bad rows are quarantined with a reason,
/// never dropped, so `records + quarantine == rows`.
pub fn load_crashes<R: Read>(source: R, mapping: &ColumnMapping) -> Result<IngestOutput> {
    mapping.validate()?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let header = reader.headers()?.clone();
    let resolved = ResolvedMapping::resolve(mapping, &header)?;

    let mut raw = Vec::new();
    for (i, rec) in reader.byte_records().enumerate() {
        let parsed = match rec {
            Ok(b) => csv::StringRecord::from_byte_record(b).map_err(|_| "invalid UTF-8".to_string()),
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => Err("malformed row".to_string()),
        };
        raw.push((i + 1, parsed));
    }
    let rows = raw.len();
    let parsed: Vec<(usize, std::result::Result<CrashRecord, String>)> = raw
        .into_par_iter()
        .map(|(row, r)| (row, r.and_then(|rec| resolved.parse_row(&rec))))
        .collect();

    let mut out = IngestOutput {
        rows,
        ..Default::default()
    };
    for (row, r) in parsed {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.quarantine.push(QuarantineEntry { row, reason }),
        }
    }
    Ok(out)
}

fn normalized_header() -> Vec<&'static str> {
    let mut h = vec!["report_id", "timestamp", "lon", "lat", "severe"];
    h.extend(Flag::ALL.iter().map(|f| f.name()));
    h
}

/// Canonical columnar CSV: report_id, ISO-8601 timestamp, lon, lat, severe,
/// then one 0/1 column per flag.
pub fn write_normalized<W: Write>(records: &[CrashRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(normalized_header())?;
    for r in records {
        let mut row = vec![
            r.report_id.clone(),
            r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            r.location.lon.to_string(),
            r.location.lat.to_string(),
            u8::from(r.severe).to_string(),
        ];
        row.extend(Flag::ALL.iter().map(|f| u8::from(r.flags.contains(*f)).to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<normalized csv>", e))?;
    Ok(())
}

/// Reads back the canonical CSV written by [`write_normalized`].
pub fn read_normalized<R: Read>(source: R) -> Result<Vec<CrashRecord>> {
    let mut reader = csv::Reader::from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let expected = normalized_header();
    if header != expected {
        let missing: Vec<String> = expected
            .iter()
            .filter(|c| !header.iter().any(|h| h == *c))
            .map(|c| c.to_string())
            .collect();
        return Err(if missing.is_empty() {
            Error::Data("normalized CSV columns are out of order".into())
        } else {
            Error::MissingColumns(missing)
        });
    }
    let bit = |s: &str, row: usize| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Data(format!("row {row}: expected 0/1, got `{s}`"))),
    };
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |j: usize| {
            rec[j]
                .parse::<f64>()
                .map_err(|_| Error::Data(format!("row {row}: bad number `{}`", &rec[j])))
        };
        let timestamp = NaiveDateTime::parse_from_str(&rec[1], TIMESTAMP_FORMAT)
            .map_err(|_| Error::Data(format!("row {row}: bad timestamp `{}`", &rec[1])))?;
        let mut flags = FlagSet::default();
        for (k, f) in Flag::ALL.iter().enumerate() {
            if bit(&rec[5 + k], row)? {
                flags.insert(*f);
            }
        }
        records.push(CrashRecord {
            report_id: rec[0].to_string(),
            timestamp,
            location: GeoPoint::new(num(2)?, num(3)?),
            severe: bit(&rec[4], row)?,
            flags,
        });
    }
    Ok(records)
}

pub fn write_quarantine<W: Write>(entries: &[QuarantineEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["row", "reason"])?;
    for e in entries {
        w.write_record([e.row.to_string(), e.reason.clone()])?;
    }
    w.flush().map_err(|e| Error::io("<quarantine csv>", e))?;
    Ok(())
}

/// Record predicate for per-type analyses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    All,
    Severe,
    Flag(Flag),
    Not(Atom),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    Severe,
    Flag(Flag),
}

impl Selector {
    pub fn matches(&self, r: &CrashRecord) -> bool {
        match *self {
            Selector::All => true,
            Selector::Severe => r.severe,
            Selector::Flag(f) => r.flags.contains(f),
            Selector::Not(Atom::Severe) => !r.severe,
            Selector::Not(Atom::Flag(f)) => !r.flags.contains(f),
        }
    }

    pub fn negate(self) -> Option<Selector> {
        match self {
            Selector::All => None,
            Selector::Severe => Some(Selector::Not(Atom::Severe)),
            Selector::Flag(f) => Some(Selector::Not(Atom::Flag(f))),
            Selector::Not(Atom::Severe) => Some(Selector::Severe),
            Selector::Not(Atom::Flag(f)) => Some(Selector::Flag(f)),
        }
    }
}

impl FromStr for Selector {
    type Err = Error;

    /// `all`, `severe`, a flag name, or either of the latter prefixed by `!`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "all" {
            return Ok(Selector::All);
        }
        let (neg, name) = match s.strip_prefix('!') {
            Some(rest) => (true, rest.trim()),
            None => (false, s),
        };
        let atom = if name == "severe" {
            Atom::Severe
        } else {
            Atom::Flag(name.parse()?)
        };
        Ok(match (neg, atom) {
            (true, a) => Selector::Not(a),
            (false, Atom::Severe) => Selector::Severe,
            (false, Atom::Flag(f)) => Selector::Flag(f),
        })
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::All => f.write_str("all"),
            Selector::Severe => f.write_str("severe"),
            Selector::Flag(fl) => write!(f, "{fl}"),
            Selector::Not(Atom::Severe) => f.write_str("!severe"),
            Selector::Not(Atom::Flag(fl)) => write!(f, "!{fl}"),
        }
    }
}

/// Stable-order subset of `records` matching `selector`.
pub fn filter_crashes(records: &[CrashRecord], selector: Selector) -> Vec<CrashRecord> {
    records.iter().filter(|r| selector.matches(r)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ZoneCounts {
    pub zone_id: String,
    pub total: u64,
    pub severe: u64,
    pub flags: [u64; 8],
}

impl ZoneCounts {
    pub fn flag(&self, f: Flag) -> u64 {
        self.flags[f as usize]
    }
}

/// One entry per zone (zero-count zones included), in zone-set order.
pub fn aggregate_by_zone(records: &[CrashRecord], assignment: &ZoneAssignment, zones: &ZoneSet) -> Vec<ZoneCounts> {
    let mut counts: Vec<ZoneCounts> = zones
        .ids()
        .iter()
        .map(|id| ZoneCounts {
            zone_id: id.clone(),
            total: 0,
            severe: 0,
            flags: [0; 8],
        })
        .collect();
    for (r, z) in records.iter().zip(&assignment.zone) {
        if let Some(z) = *z {
            let c = &mut counts[z];
            c.total += 1;
            c.severe += u64::from(r.severe);
            for f in r.flags.iter() {
                c.flags[f as usize] += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ZonePolygon;

    fn mapping() -> ColumnMapping {
        ColumnMapping::from_toml(
            r#"
report_id = "id"
timestamp = "when"
timestamp_formats = ["%Y-%m-%d %H:%M"]
longitude = "lon"
latitude = "lat"
severity = { column = "injury", values = ["fatal", "serious"] }

[flags.pedestrian]
column = "nonmotorist"
mode = "contains"
values = ["PEDESTRIAN"]

[flags.distracted]
column = "distraction"
mode = "not_in"
values = ["NOT DISTRACTED", "UNKNOWN"]
"#,
        )
        .unwrap()
    }

    const FIXTURE: &str = "\
id,when,lon,lat,injury,nonmotorist,distraction
R1,2020-05-01 08:30,-77.1,39.1,Fatal,PEDESTRIAN,LOOKED BUT DID NOT SEE
R2,2020-05-02 09:00,-77.2,,none,,NOT DISTRACTED
R3,2020-07-03 17:45,-77.3,39.2,minor,,
";

    fn rec(id: &str, severe: bool, flags: &[Flag]) -> CrashRecord {
        CrashRecord {
            report_id: id.into(),
            timestamp: NaiveDate::from_ymd_opt(2020, 1, 1)
                .unwrap()
                .and_hms_opt(0, 0, 0)
                .unwrap(),
            location: GeoPoint::new(0.5, 0.5),
            severe,
            flags: flags.iter().copied().collect(),
        }
    }

    #[test]
    fn blank_latitude_is_quarantined() {
        let out = load_crashes(FIXTURE.as_bytes(), &mapping()).unwrap();
        assert_eq!(out.rows, 3);
        assert_eq!(out.records.len(), 2);
        assert_eq!(
            out.quarantine,
            vec![QuarantineEntry {
                row: 2,
                reason: "missing coordinate".into()
            }]
        );
        let r1 = &out.records[0];
        assert!(r1.severe);
        assert!(r1.flags.contains(Flag::Pedestrian));
        assert!(r1.flags.contains(Flag::Distracted));
        let r3 = &out.records[1];
        assert!(!r3.severe);
        assert_eq!(r3.flags, FlagSet::default());
    }

    #[test]
    fn missing_columns_are_all_listed() {
        let csv = "id,lon\nA,1\n";
        match load_crashes(csv.as_bytes(), &mapping()).unwrap_err() {
            Error::MissingColumns(cols) => {
                assert_eq!(cols, vec!["distraction", "injury", "lat", "nonmotorist", "when"]);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn window_bbox_and_bad_values_quarantine_with_reasons() {
        let mut m = mapping();
        m.window = Some(StudyWindow {
            start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 12, 31).unwrap(),
        });
        m.bbox = Some([-78.0, 38.0, -76.0, 40.0]);
        let csv = "\
id,when,lon,lat,injury,nonmotorist,distraction
,2020-05-01 08:30,-77.1,39.1,,,
A,2019-05-01 08:30,-77.1,39.1,,,
B,2020-05-01 08:30,0,0,,,
C,yesterday,-77.1,39.1,,,
D,2020-05-01 08:30,abc,39.1,,,
E,2020-05-01 08:30,-77.1,139.1,,,
F,,-77.1,39.1,,,
G,2020-05-01 08:30,-77.1,39.1
";
        let out = load_crashes(csv.as_bytes(), &m).unwrap();
        let reasons: Vec<&str> = out.quarantine.iter().map(|q| q.reason.as_str()).collect();
        assert_eq!(
            reasons,
            vec![
                "missing report id",
                "outside study window",
                "outside bounding box",
                "unparsable timestamp",
                "unparsable coordinate",
                "coordinate out of range",
                "missing timestamp",
            ]
        );
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records.len() + out.quarantine.len(), out.rows);
    }

    #[test]
    fn default_mapping_parses_county_timestamps() {
        let m = ColumnMapping::default();
        m.validate().unwrap();
        let t = m
            .timestamp_formats
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str("05/21/2021 03:30:00 PM", f).ok())
            .unwrap();
        assert_eq!(t.format(TIMESTAMP_FORMAT).to_string(), "2021-05-21T15:30:00");
        let text = toml::to_string(&m).unwrap();
        assert_eq!(ColumnMapping::from_toml(&text).unwrap(), m);
    }

    #[test]
    fn unknown_flag_in_mapping_is_config_error() {
        let err = ColumnMapping::from_toml(
            "report_id='a'\ntimestamp='b'\ntimestamp_formats=['%Y']\nlongitude='c'\nlatitude='d'\nseverity={column='e'}\n[flags.speeding]\ncolumn='x'\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn normalized_round_trip() {
        let out = load_crashes(FIXTURE.as_bytes(), &mapping()).unwrap();
        let mut buf = Vec::new();
        write_normalized(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "report_id,timestamp,lon,lat,severe,pedestrian,alcohol,animal,parked_vehicle,distracted,off_road,poor_lighting,no_traffic_control"
        );
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "R1,2020-05-01T08:30:00,-77.1,39.1,1,1,0,0,0,1,0,0,0"
        );
        assert_eq!(read_normalized(buf.as_slice()).unwrap(), out.records);
    }

    #[test]
    fn selectors() {
        let recs = vec![
            rec("a", true, &[]),
            rec("b", false, &[]),
            rec("c", true, &[Flag::Alcohol]),
            rec("d", false, &[Flag::Alcohol]),
            rec("e", false, &[]),
        ];
        let severe = filter_crashes(&recs, "severe".parse().unwrap());
        assert_eq!(
            severe.iter().map(|r| r.report_id.as_str()).collect::<Vec<_>>(),
            ["a", "c"]
        );
        let none: Vec<CrashRecord> = recs.iter().filter(|r| r.flags == FlagSet::default()).cloned().collect();
        assert!(filter_crashes(&none, Selector::Flag(Flag::Pedestrian)).is_empty());
        for s in ["severe", "alcohol", "!severe", "!alcohol"] {
            let sel: Selector = s.parse().unwrap();
            assert_eq!(sel.to_string(), s);
            let a = filter_crashes(&recs, sel);
            let b = filter_crashes(&recs, sel.negate().unwrap());
            assert_eq!(a.len() + b.len(), recs.len());
            assert!(recs.iter().all(|r| a.contains(r) != b.contains(r)));
        }
        assert!(matches!("speeding".parse::<Selector>(), Err(Error::Config(_))));
    }

    #[test]
    fn aggregate_counts_include_empty_zones() {
        let sq = |id: &str, x: f64| {
            ZonePolygon::new(id, vec![[x, 0.0], [x + 1.0, 0.0], [x + 1.0, 1.0], [x, 1.0]], vec![]).unwrap()
        };
        let zones = ZoneSet::new(vec![sq("A", 0.0), sq("B", 1.0), sq("C", 2.0)]).unwrap();
        let recs = vec![
            rec("1", true, &[Flag::Animal]),
            rec("2", false, &[]),
            rec("3", false, &[]),
            rec("4", false, &[]),
        ];
        let assignment = ZoneAssignment {
            zone: vec![Some(0), Some(0), Some(1), None],
        };
        let c = aggregate_by_zone(&recs, &assignment, &zones);
        assert_eq!((c[0].total, c[0].severe, c[0].flag(Flag::Animal)), (2, 1, 1));
        assert_eq!((c[1].total, c[1].severe), (1, 0));
        assert_eq!((c[2].total, c[2].severe), (0, 0));
        let empty = aggregate_by_zone(&[], &ZoneAssignment { zone: vec![] }, &zones);
        assert!(empty.iter().all(|z| z.total == 0));
    }
}
