//! Dataset manifests, ground truth and per-day accuracy tables.
//!
//! Accuracies are kept as integer `correct / total` counts and rendered by
//! truncation to two decimals, so 47/64 prints as `73.43`. The `All` row
//! pools counts over days rather than averaging daily percentages; the two
//! agree exactly when every day has the same number of clips.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scoring::{ClipDecision, Detector, Verdict};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Container contents. Declaration order is the table's column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ContainerClass {
    #[serde(rename = "male")]
    Male,
    #[serde(rename = "mixed_25_75")]
    Mixed,
    #[serde(rename = "female")]
    Female,
}

impl ContainerClass {
    pub const ALL: [ContainerClass; 3] = [
        ContainerClass::Male,
        ContainerClass::Mixed,
        ContainerClass::Female,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContainerClass::Male => "male",
            ContainerClass::Mixed => "mixed_25_75",
            ContainerClass::Female => "female",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown container class {s:?}")))
    }

    pub fn label(self) -> &'static str {
        match self {
            ContainerClass::Male => "100% male",
            ContainerClass::Mixed => "25% female 75% male",
            ContainerClass::Female => "100% female",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub clip_id: String,
    pub container_class: ContainerClass,
    pub day_since_sexing: u32,
    pub session: u8,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            entries,
            base_dir: PathBuf::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    /// Unique clip ids, sessions 1 or 2, and a gap-free range of days.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema version {} (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut ids = HashSet::new();
        for e in &self.entries {
            if e.clip_id.is_empty() {
                return Err(Error::Manifest("empty clip_id".into()));
            }
            if !ids.insert(e.clip_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate clip_id {}", e.clip_id)));
            }
            if !matches!(e.session, 1 | 2) {
                return Err(Error::Manifest(format!(
                    "clip {}: session must be 1 or 2, got {}",
                    e.clip_id, e.session
                )));
            }
        }
        let days: BTreeSet<u32> = self.entries.iter().map(|e| e.day_since_sexing).collect();
        if let (Some(&lo), Some(&hi)) = (days.first(), days.last()) {
            if (hi - lo) as usize + 1 != days.len() {
                return Err(Error::Manifest(format!(
                    "days {days:?} are not a contiguous range"
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m.with_base_dir(path.parent().unwrap_or(Path::new(""))))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    /// SHA-256 of the manifest's JSON form, independent of where it lives.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn days(&self) -> Vec<u32> {
        let days: BTreeSet<u32> = self.entries.iter().map(|e| e.day_since_sexing).collect();
        days.into_iter().collect()
    }

    /// Entries restricted to one day, keeping the base directory.
    pub fn for_day(&self, day: u32) -> Self {
        Self {
            schema_version: self.schema_version,
            entries: self
                .entries
                .iter()
                .filter(|e| e.day_since_sexing == day)
                .cloned()
                .collect(),
            base_dir: self.base_dir.clone(),
        }
    }
}

/// Ground truth: anything containing females should be flagged.
pub fn expected_verdict(class: ContainerClass) -> Verdict {
    match class {
        ContainerClass::Male => Verdict::Clean,
        ContainerClass::Female | ContainerClass::Mixed => Verdict::Contaminated,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: u32,
    pub total: u32,
}

impl Tally {
    pub fn add(&mut self, other: Tally) {
        self.correct += other.correct;
        self.total += other.total;
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.correct as f64 / self.total as f64
    }

    /// `floor(10000 * correct / total)`.
    pub fn hundredths(&self) -> u64 {
        10_000 * self.correct as u64 / self.total as u64
    }

    /// Percentage truncated to two decimals without trailing zeros:
    /// `87.5`, `81.25`, `75`, `100`.
    pub fn render(&self) -> String {
        let h = self.hundredths();
        let (int, frac) = (h / 100, h % 100);
        if frac == 0 {
            format!("{int}")
        } else if frac % 10 == 0 {
            format!("{int}.{}", frac / 10)
        } else {
            format!("{int}.{frac:02}")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub day: u32,
    pub class: ContainerClass,
    pub detector: Detector,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccuracyTable {
    cells: BTreeMap<CellKey, Tally>,
}

impl AccuracyTable {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn record(&mut self, key: CellKey, correct: bool) {
        let t = self.cells.entry(key).or_default();
        t.total += 1;
        t.correct += correct as u32;
    }

    pub fn set(&mut self, key: CellKey, tally: Tally) {
        self.cells.insert(key, tally);
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &Tally)> {
        self.cells.iter()
    }

    /// `None` when no clip of that class was scored on that day.
    pub fn cell(&self, day: u32, class: ContainerClass, detector: Detector) -> Option<Tally> {
        self.cells
            .get(&CellKey {
                day,
                class,
                detector,
            })
            .copied()
    }

    pub fn days(&self) -> Vec<u32> {
        let days: BTreeSet<u32> = self.cells.keys().map(|k| k.day).collect();
        days.into_iter().collect()
    }

    /// Counts pooled over all days.
    pub fn pooled(&self, class: ContainerClass, detector: Detector) -> Option<Tally> {
        let mut total = None::<Tally>;
        for (k, t) in &self.cells {
            if k.class == class && k.detector == detector {
                total.get_or_insert_with(Tally::default).add(*t);
            }
        }
        total
    }

    /// Unweighted mean of the daily percentages, for comparison with the pooled value.
    pub fn mean_of_days(&self, class: ContainerClass, detector: Detector) -> Option<f64> {
        let daily: Vec<f64> = self
            .cells
            .iter()
            .filter(|(k, _)| k.class == class && k.detector == detector)
            .map(|(_, t)| t.percent())
            .collect();
        (!daily.is_empty()).then(|| daily.iter().sum::<f64>() / daily.len() as f64)
    }
}

/// Tallies each decision against its manifest label.
///
/// Every decision must name a `test` entry of the manifest, at most once
/// per detector. Test clips without a decision are simply absent from the
/// denominators; list them with [`missing_decisions`].
pub fn evaluate(decisions: &[ClipDecision], manifest: &DatasetManifest) -> Result<AccuracyTable> {
    let by_id: HashMap<&str, &ManifestEntry> = manifest
        .entries
        .iter()
        .map(|e| (e.clip_id.as_str(), e))
        .collect();
    let mut seen = HashSet::new();
    let mut table = AccuracyTable::default();
    for d in decisions {
        let entry = by_id.get(d.clip_id.as_str()).ok_or_else(|| {
            Error::Manifest(format!(
                "decision for clip {} has no manifest entry",
                d.clip_id
            ))
        })?;
        if entry.role != Role::Test {
            return Err(Error::Manifest(format!(
                "clip {} is a training clip",
                d.clip_id
            )));
        }
        if !seen.insert((d.clip_id.as_str(), d.detector)) {
            return Err(Error::Manifest(format!(
                "clip {} scored twice by {}",
                d.clip_id, d.detector
            )));
        }
        let key = CellKey {
            day: entry.day_since_sexing,
            class: entry.container_class,
            detector: d.detector,
        };
        table.record(key, d.verdict == expected_verdict(entry.container_class));
    }
    Ok(table)
}

/// Test clips lacking a decision from any of `detectors`, in manifest order.
pub fn missing_decisions(
    decisions: &[ClipDecision],
    manifest: &DatasetManifest,
    detectors: &[Detector],
) -> Vec<String> {
    let have: HashSet<(&str, Detector)> = decisions
        .iter()
        .map(|d| (d.clip_id.as_str(), d.detector))
        .collect();
    manifest
        .entries
        .iter()
        .filter(|e| e.role == Role::Test)
        .filter(|e| {
            detectors
                .iter()
                .any(|&d| !have.contains(&(e.clip_id.as_str(), d)))
        })
        .map(|e| e.clip_id.clone())
        .collect()
}

/// Columns in table order: each class, OCSVM then iForest.
pub fn table_columns() -> Vec<(ContainerClass, Detector)> {
    ContainerClass::ALL
        .into_iter()
        .flat_map(|c| [(c, Detector::Ocsvm), (c, Detector::Iforest)])
        .collect()
}

fn detector_label(d: Detector) -> &'static str {
    match d {
        Detector::Ocsvm => "OCSVM",
        Detector::Iforest => "iForest",
    }
}

pub fn ordinal(n: u32) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

const DAY_WIDTH: usize = 5;
const CELL_WIDTH: usize = 9;

/// Fixed-width grid: one row per day plus a pooled `All` row. Absent cells
/// print as `-`. An empty table renders as the two header lines.
pub fn render_text(table: &AccuracyTable) -> String {
    let group_width = 2 * CELL_WIDTH + 3;
    let mut out = String::new();
    let _ = write!(out, "{:<DAY_WIDTH$}", "Day");
    for c in ContainerClass::ALL {
        let _ = write!(out, " | {:<group_width$}", c.label());
    }
    out.push('\n');
    let _ = write!(out, "{:<DAY_WIDTH$}", "");
    for (_, d) in table_columns() {
        let _ = write!(out, " | {:<CELL_WIDTH$}", detector_label(d));
    }
    out.push('\n');
    if table.is_empty() {
        return out;
    }
    let fmt = |t: Option<Tally>| t.map_or_else(|| "-".to_string(), |t| t.render());
    for day in table.days() {
        let _ = write!(out, "{:<DAY_WIDTH$}", ordinal(day));
        for (c, d) in table_columns() {
            let _ = write!(out, " | {:<CELL_WIDTH$}", fmt(table.cell(day, c, d)));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<DAY_WIDTH$}", "All");
    for (c, d) in table_columns() {
        let _ = write!(out, " | {:<CELL_WIDTH$}", fmt(table.pooled(c, d)));
    }
    out.push('\n');
    out
}

pub const CSV_HEADER: &str = "day,container_class,detector,correct,total,accuracy";

/// One line per daily cell, then the pooled rows with `day = all`.
pub fn render_csv(table: &AccuracyTable) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for (k, t) in table.cells() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            k.day,
            k.class.as_str(),
            k.detector,
            t.correct,
            t.total,
            t.render()
        );
    }
    for (c, d) in table_columns() {
        if let Some(t) = table.pooled(c, d) {
            let _ = writeln!(
                out,
                "all,{},{},{},{},{}",
                c.as_str(),
                d,
                t.correct,
                t.total,
                t.render()
            );
        }
    }
    out
}

/// Inverse of [`render_csv`]. Pooled rows are checked against the daily cells.
pub fn parse_csv(text: &str) -> Result<AccuracyTable> {
    let bad =
        |line: usize, msg: &str| Error::InvalidInput(format!("accuracy csv line {line}: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    let mut table = AccuracyTable::default();
    let mut pooled = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(n, "expected 6 fields"));
        }
        let class = ContainerClass::parse(f[1])?;
        let detector = Detector::parse(f[2])?;
        let correct: u32 = f[3].parse().map_err(|_| bad(n, "bad correct count"))?;
        let total: u32 = f[4].parse().map_err(|_| bad(n, "bad total"))?;
        if total == 0 || correct > total {
            return Err(bad(n, "counts out of range"));
        }
        let tally = Tally { correct, total };
        if f[5] != tally.render() {
            return Err(bad(n, "accuracy disagrees with counts"));
        }
        if f[0] == "all" {
            pooled.push((class, detector, tally));
        } else {
            let day: u32 = f[0].parse().map_err(|_| bad(n, "bad day"))?;
            table.set(
                CellKey {
                    day,
                    class,
                    detector,
                },
                tally,
            );
        }
    }
    for (c, d, t) in pooled {
        if table.pooled(c, d) != Some(t) {
            return Err(Error::InvalidInput(format!(
                "pooled row for {} {} disagrees with daily cells",
                c.as_str(),
                d
            )));
        }
    }
    Ok(table)
}
