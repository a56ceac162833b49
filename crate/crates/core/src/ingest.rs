//! Check-in ingestion and the preprocessing protocol: sparse filtering,
//! 24-hour trajectory segmentation, and the chronological 80/10/10 split.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meta::ArtifactMeta;
use crate::taxonomy::TimeSlot;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read check-in stream: {0}")]
    Unreadable(#[from] std::io::Error),
    #[error("split needs at least 3 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("invalid split fractions: train {train}, val {val}")]
    BadFractions { train: f64, val: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: String,
    pub poi_id: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
    /// Seconds since the Unix epoch.
    pub utc_time: i64,
    pub tz_offset_min: i32,
}

impl CheckIn {
    pub fn local_time(&self) -> i64 {
        self.utc_time + i64::from(self.tz_offset_min) * 60
    }

    pub fn time_slot(&self) -> TimeSlot {
        TimeSlot::from_local_seconds(self.local_time())
    }

    pub fn coords(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub user_id: String,
    pub checkins: Vec<CheckIn>,
}

impl Trajectory {
    pub fn start_time(&self) -> i64 {
        self.checkins.first().map_or(0, |c| c.utc_time)
    }

    pub fn len(&self) -> usize {
        self.checkins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkins.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Trajectory>,
    pub val: Vec<Trajectory>,
    pub test: Vec<Trajectory>,
}

impl DatasetSplit {
    pub fn train_checkins(&self) -> impl Iterator<Item = &CheckIn> {
        self.train.iter().flat_map(|t| t.checkins.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    Tab,
    Comma,
}

impl Delimiter {
    fn as_char(self) -> char {
        match self {
            Delimiter::Tab => '\t',
            Delimiter::Comma => ',',
        }
    }
}

/// Column positions of a delimited check-in file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub delimiter: Delimiter,
    pub user: usize,
    pub poi: usize,
    pub category: usize,
    pub lat: usize,
    pub lon: usize,
    pub tz_offset: usize,
    pub utc_time: usize,
    /// Skip the first line.
    #[serde(default)]
    pub header: bool,
}

impl Default for ColumnMap {
    /// The 8-column Foursquare layout: user, poi, category_id,
    /// category_name, lat, lon, tz_offset, utc_time.
    fn default() -> Self {
        ColumnMap {
            delimiter: Delimiter::Tab,
            user: 0,
            poi: 1,
            category: 3,
            lat: 4,
            lon: 5,
            tz_offset: 6,
            utc_time: 7,
            header: false,
        }
    }
}

impl ColumnMap {
    /// Seven columns: user, poi, category, lat, lon, utc_time, tz_offset.
    pub fn compact() -> Self {
        ColumnMap {
            delimiter: Delimiter::Tab,
            user: 0,
            poi: 1,
            category: 2,
            lat: 3,
            lon: 4,
            utc_time: 5,
            tz_offset: 6,
            header: false,
        }
    }

    fn width(&self) -> usize {
        [self.user, self.poi, self.category, self.lat, self.lon, self.tz_offset, self.utc_time]
            .into_iter()
            .max()
            .unwrap_or(0)
            + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    ColumnCount,
    BadNumber,
    BadTime,
    OutOfRange,
    EmptyId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseReport {
    pub checkins: Vec<CheckIn>,
    pub rejected: usize,
    pub reasons: BTreeMap<RejectReason, usize>,
}

/// Parses delimited check-ins. Malformed rows are tallied, not fatal; only
/// an unreadable stream is an error. Blank lines are skipped silently.
pub fn parse_checkins<R: Read>(reader: R, columns: &ColumnMap) -> Result<ParseReport, IngestError> {
    let mut report = ParseReport::default();
    let reader = BufReader::new(reader);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 && columns.header {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(line, columns) {
            Ok(c) => report.checkins.push(c),
            Err(reason) => {
                report.rejected += 1;
                *report.reasons.entry(reason).or_default() += 1;
            }
        }
    }
    Ok(report)
}

fn parse_row(line: &str, columns: &ColumnMap) -> Result<CheckIn, RejectReason> {
    let fields: Vec<&str> = line.split(columns.delimiter.as_char()).collect();
    if fields.len() < columns.width() {
        return Err(RejectReason::ColumnCount);
    }
    let user_id = fields[columns.user].trim();
    let poi_id = fields[columns.poi].trim();
    if user_id.is_empty() || poi_id.is_empty() {
        return Err(RejectReason::EmptyId);
    }
    let num = |idx: usize| fields[idx].trim().parse::<f64>().map_err(|_| RejectReason::BadNumber);
    let lat = num(columns.lat)?;
    let lon = num(columns.lon)?;
    if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(RejectReason::OutOfRange);
    }
    let tz = fields[columns.tz_offset].trim().parse::<i32>().map_err(|_| RejectReason::BadNumber)?;
    let utc_time = parse_time(fields[columns.utc_time].trim()).ok_or(RejectReason::BadTime)?;
    if utc_time < 0 {
        return Err(RejectReason::OutOfRange);
    }
    Ok(CheckIn {
        user_id: user_id.to_string(),
        poi_id: poi_id.to_string(),
        category: fields[columns.category].trim().to_string(),
        lat,
        lon,
        utc_time,
        tz_offset_min: tz,
    })
}

/// Accepts epoch seconds or the Foursquare form `Tue Apr 03 18:00:09 +0000 2012`.
fn parse_time(s: &str) -> Option<i64> {
    if let Ok(t) = s.parse::<i64>() {
        return Some(t);
    }
    chrono::DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y").ok().map(|d| d.timestamp())
}

/// Drops POIs with fewer than `min_poi_visits` check-ins and users with
/// fewer than `min_user_checkins`, repeating until neither rule removes
/// anything. Row order is preserved.
pub fn filter_sparse(checkins: Vec<CheckIn>, min_poi_visits: usize, min_user_checkins: usize) -> Vec<CheckIn> {
    let mut rows = checkins;
    loop {
        let before = rows.len();
        let mut poi_counts: HashMap<&str, usize> = HashMap::new();
        for c in &rows {
            *poi_counts.entry(c.poi_id.as_str()).or_default() += 1;
        }
        let weak_pois: HashSet<String> = poi_counts
            .into_iter()
            .filter(|(_, n)| *n < min_poi_visits)
            .map(|(p, _)| p.to_string())
            .collect();
        rows.retain(|c| !weak_pois.contains(&c.poi_id));

        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        for c in &rows {
            *user_counts.entry(c.user_id.as_str()).or_default() += 1;
        }
        let weak_users: HashSet<String> = user_counts
            .into_iter()
            .filter(|(_, n)| *n < min_user_checkins)
            .map(|(u, _)| u.to_string())
            .collect();
        rows.retain(|c| !weak_users.contains(&c.user_id));

        if rows.len() == before {
            return rows;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Every check-in is within the window of the run's first check-in.
    #[default]
    Anchored,
    /// Consecutive check-ins are within the window of each other.
    Gap,
}

/// Greedy segmentation of one user's time-sorted check-ins. Runs of a
/// single check-in are dropped.
pub fn segment_trajectories(checkins: &[CheckIn], window_h: f64, mode: WindowMode) -> Vec<Trajectory> {
    let window = (window_h * 3600.0).round() as i64;
    let mut runs: Vec<Vec<CheckIn>> = Vec::new();
    let mut current: Vec<CheckIn> = Vec::new();
    for c in checkins {
        let fits = match (current.first(), current.last()) {
            (Some(first), Some(last)) => {
                let anchor = match mode {
                    WindowMode::Anchored => first.utc_time,
                    WindowMode::Gap => last.utc_time,
                };
                c.utc_time - anchor <= window
            }
            _ => true,
        };
        if !fits {
            runs.push(std::mem::take(&mut current));
        }
        current.push(c.clone());
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs.into_iter()
        .filter(|r| r.len() >= 2)
        .enumerate()
        .map(|(i, checkins)| Trajectory {
            id: format!("{}#{}", checkins[0].user_id, i),
            user_id: checkins[0].user_id.clone(),
            checkins,
        })
        .collect()
}

/// Groups check-ins by user, sorts each user's history by time (stable),
/// and segments it. Output is ordered by user id.
pub fn segment_all(checkins: &[CheckIn], window_h: f64, mode: WindowMode) -> Vec<Trajectory> {
    let mut by_user: BTreeMap<&str, Vec<CheckIn>> = BTreeMap::new();
    for c in checkins {
        by_user.entry(c.user_id.as_str()).or_default().push(c.clone());
    }
    let mut out = Vec::new();
    for (_, mut rows) in by_user {
        rows.sort_by_key(|c| c.utc_time);
        out.extend(segment_trajectories(&rows, window_h, mode));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitScope {
    #[default]
    Global,
    PerUser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.8, val: 0.1 }
    }
}

/// Chronological split keyed on trajectory start time, followed by removal
/// of validation/test trajectories that touch a user or POI absent from
/// the training part.
pub fn chronological_split(
    trajectories: Vec<Trajectory>,
    fractions: SplitFractions,
    scope: SplitScope,
) -> Result<DatasetSplit, IngestError> {
    let SplitFractions { train: ft, val: fv } = fractions;
    if !(ft > 0.0 && fv >= 0.0 && ft + fv <= 1.0) {
        return Err(IngestError::BadFractions { train: ft, val: fv });
    }
    if trajectories.len() < 3 {
        return Err(IngestError::TooFewTrajectories(trajectories.len()));
    }
    let mut split = DatasetSplit::default();
    match scope {
        SplitScope::Global => cut(trajectories, ft, fv, &mut split),
        SplitScope::PerUser => {
            let mut by_user: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
            for t in trajectories {
                by_user.entry(t.user_id.clone()).or_default().push(t);
            }
            for (_, ts) in by_user {
                cut(ts, ft, fv, &mut split);
            }
            for part in [&mut split.train, &mut split.val, &mut split.test] {
                sort_chronologically(part);
            }
        }
    }
    restrict_to_train(&mut split);
    Ok(split)
}

fn sort_chronologically(ts: &mut [Trajectory]) {
    ts.sort_by(|a, b| {
        a.start_time()
            .cmp(&b.start_time())
            .then_with(|| a.user_id.cmp(&b.user_id))
            .then_with(|| a.id.cmp(&b.id))
    });
}

fn cut(mut ts: Vec<Trajectory>, ft: f64, fv: f64, split: &mut DatasetSplit) {
    sort_chronologically(&mut ts);
    let n = ts.len();
    let n_train = ((n as f64) * ft).round() as usize;
    let n_val = (((n as f64) * fv).round() as usize).min(n - n_train.min(n));
    let mut it = ts.into_iter();
    split.train.extend(it.by_ref().take(n_train));
    split.val.extend(it.by_ref().take(n_val));
    split.test.extend(it);
}

fn restrict_to_train(split: &mut DatasetSplit) {
    let users: HashSet<String> = split.train.iter().map(|t| t.user_id.clone()).collect();
    let pois: HashSet<String> = split.train_checkins().map(|c| c.poi_id.clone()).collect();
    let known = |t: &Trajectory| users.contains(&t.user_id) && t.checkins.iter().all(|c| pois.contains(&c.poi_id));
    split.val.retain(known);
    split.test.retain(known);
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    meta: ArtifactMeta,
}

/// Writes one trajectory per line, preceded by a `{"meta": ...}` line.
pub fn write_trajectories(path: &Path, trajectories: &[Trajectory], meta: &ArtifactMeta) -> crate::Result<()> {
    let file = std::fs::File::create(path).map_err(|e| crate::Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut emit = |line: String| writeln!(w, "{line}").map_err(|e| crate::Error::io(path, e));
    emit(serde_json::to_string(&MetaLine { meta: meta.clone() }).expect("meta serializes"))?;
    for t in trajectories {
        emit(serde_json::to_string(t).expect("trajectory serializes"))?;
    }
    w.flush().map_err(|e| crate::Error::io(path, e))
}

pub fn read_trajectories(path: &Path) -> crate::Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path).map_err(|e| crate::Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| crate::Error::io(path, e))?;
        if line.trim().is_empty() || (i == 0 && line.starts_with("{\"meta\"")) {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)
            .map_err(|e| crate::Error::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_split(dir: &Path, split: &DatasetSplit, meta: &ArtifactMeta) -> crate::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    write_trajectories(&dir.join("train.jsonl"), &split.train, meta)?;
    write_trajectories(&dir.join("val.jsonl"), &split.val, meta)?;
    write_trajectories(&dir.join("test.jsonl"), &split.test, meta)
}

pub fn read_split(dir: &Path) -> crate::Result<DatasetSplit> {
    Ok(DatasetSplit {
        train: read_trajectories(&dir.join("train.jsonl"))?,
        val: read_trajectories(&dir.join("val.jsonl"))?,
        test: read_trajectories(&dir.join("test.jsonl"))?,
    })
}

/// Writes check-ins in the compact 7-column tab layout.
pub fn write_checkins_tsv<W: Write>(mut w: W, checkins: &[CheckIn]) -> std::io::Result<()> {
    for c in checkins {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.user_id, c.poi_id, c.category, c.lat, c.lon, c.utc_time, c.tz_offset_min
        )?;
    }
    Ok(())
}
