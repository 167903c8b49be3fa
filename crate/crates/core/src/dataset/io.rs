use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    AngleSeries, Dataset, DatasetError, DominantLeg, EventKind, Foot, GaitEvent, Label, Result, RunnerRecord, Sex,
    Structure, SubjectMeta,
};
use crate::numfmt::fmt9;

const ANGLE_HEADER: [&str; 5] = ["frame", "structure", "ax", "ay", "az"];
const EVENT_HEADER: [&str; 3] = ["foot", "kind", "frame_index"];
const SUBJECT_HEADER: [&str; 6] = ["subject_id", "age", "height", "weight", "sex", "dominant_leg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub angles_csv: String,
    pub label: String,
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<f64>,
}

/// `manifest.json`; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    pub subjects_csv: String,
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.display().to_string()));
    }
    fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| DatasetError::Io { path: parent.display().to_string(), source })?;
    }
    fs::write(path, text).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })
}

fn schema(file: &Path, detail: impl Into<String>) -> DatasetError {
    DatasetError::SchemaMismatch { file: file.display().to_string(), detail: detail.into() }
}

fn csv_rows(file: &Path, body: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let got = reader.headers().map_err(|e| schema(file, e.to_string()))?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(schema(file, format!("header {:?}, expected {:?}", got.iter().collect::<Vec<_>>(), header)));
    }
    reader
        .records()
        .map(|r| r.map_err(|e| schema(file, e.to_string())))
        .collect()
}

fn parse<T: std::str::FromStr>(file: &Path, line: usize, column: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e| schema(file, format!("line {line}, column {column}: {e}")))
}

/// Reads a per-record angle CSV: `# rate_hz=<float>` on line 1, then
/// `frame,structure,ax,ay,az` rows covering frames `0..n` for every structure.
pub fn read_angle_csv(path: &Path) -> Result<Vec<AngleSeries>> {
    let text = read_text(path)?;
    let (first, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let rate: f64 = first
        .trim()
        .strip_prefix("# rate_hz=")
        .ok_or_else(|| schema(path, "line 1 must be `# rate_hz=<float>`"))
        .and_then(|r| parse(path, 1, "rate_hz", r))?;
    let mut frames: BTreeMap<Structure, BTreeMap<usize, [f64; 3]>> = BTreeMap::new();
    for (i, row) in csv_rows(path, body, &ANGLE_HEADER)?.iter().enumerate() {
        let line = i + 3;
        if row.len() != 5 {
            return Err(schema(path, format!("line {line}: {} columns", row.len())));
        }
        let frame: usize = parse(path, line, "frame", &row[0])?;
        let structure: Structure = parse(path, line, "structure", &row[1])?;
        let v = [parse(path, line, "ax", &row[2])?, parse(path, line, "ay", &row[3])?, parse(path, line, "az", &row[4])?];
        if frames.entry(structure).or_default().insert(frame, v).is_some() {
            return Err(schema(path, format!("line {line}: duplicate frame {frame} for {structure}")));
        }
    }
    frames
        .into_iter()
        .map(|(structure, by_frame)| {
            let n = by_frame.len();
            if by_frame.keys().copied().ne(0..n) {
                return Err(schema(path, format!("{structure}: frames are not 0..{n}")));
            }
            Ok(AngleSeries { structure, angles: by_frame.into_values().collect(), sample_rate: rate })
        })
        .collect()
}

pub fn write_angle_csv(path: &Path, series: &[AngleSeries]) -> Result<()> {
    let rate = series.first().map_or(0.0, |s| s.sample_rate);
    let len = series.iter().map(AngleSeries::len).max().unwrap_or(0);
    let mut out = format!("# rate_hz={}\n{}\n", fmt9(rate), ANGLE_HEADER.join(","));
    for frame in 0..len {
        for s in series {
            if let Some(a) = s.angles.get(frame) {
                out.push_str(&format!("{frame},{},{},{},{}\n", s.structure, fmt9(a[0]), fmt9(a[1]), fmt9(a[2])));
            }
        }
    }
    write_text(path, &out)
}

pub fn read_events_csv(path: &Path) -> Result<Vec<GaitEvent>> {
    let text = read_text(path)?;
    let mut events = csv_rows(path, &text, &EVENT_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 2;
            if row.len() != 3 {
                return Err(schema(path, format!("line {line}: {} columns", row.len())));
            }
            Ok(GaitEvent {
                foot: parse::<Foot>(path, line, "foot", &row[0])?,
                kind: parse::<EventKind>(path, line, "kind", &row[1])?,
                frame_index: parse(path, line, "frame_index", &row[2])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    events.sort_by_key(|e| (e.frame_index, e.foot));
    Ok(events)
}

pub fn write_events_csv(path: &Path, events: &[GaitEvent]) -> Result<()> {
    let mut out = format!("{}\n", EVENT_HEADER.join(","));
    for e in events {
        out.push_str(&format!("{},{},{}\n", e.foot, e.kind, e.frame_index));
    }
    write_text(path, &out)
}

fn read_subjects(path: &Path) -> Result<BTreeMap<String, SubjectMeta>> {
    let text = read_text(path)?;
    let mut out: BTreeMap<String, SubjectMeta> = BTreeMap::new();
    for (i, row) in csv_rows(path, &text, &SUBJECT_HEADER)?.iter().enumerate() {
        let line = i + 2;
        if row.len() != 6 {
            return Err(schema(path, format!("line {line}: {} columns", row.len())));
        }
        let meta = SubjectMeta {
            subject_id: row[0].to_string(),
            age: parse(path, line, "age", &row[1])?,
            height: parse(path, line, "height", &row[2])?,
            weight: parse(path, line, "weight", &row[3])?,
            sex: parse::<Sex>(path, line, "sex", &row[4])?,
            dominant_leg: parse::<DominantLeg>(path, line, "dominant_leg", &row[5])?,
        };
        match out.get(&meta.subject_id) {
            Some(prev) if *prev != meta => return Err(DatasetError::InconsistentSubjectMeta(meta.subject_id)),
            _ => {
                out.insert(meta.subject_id.clone(), meta);
            }
        }
    }
    Ok(out)
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads and validates every record listed in a manifest.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = read_text(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|source| DatasetError::Json { path: manifest_path.display().to_string(), source })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let subjects = read_subjects(&resolve(base, &manifest.subjects_csv))?;
    let mut records = Vec::with_capacity(manifest.records.len());
    for m in &manifest.records {
        let subject = subjects.get(&m.subject_id).cloned().ok_or_else(|| DatasetError::InvariantViolation {
            record_id: m.id.clone(),
            field: "subject_id".into(),
            detail: format!("{} not in {}", m.subject_id, manifest.subjects_csv),
        })?;
        let label: Label = m.label.parse().map_err(|e: String| DatasetError::InvariantViolation {
            record_id: m.id.clone(),
            field: "label".into(),
            detail: e,
        })?;
        let mut series = read_angle_csv(&resolve(base, &m.angles_csv))?;
        series.sort_by_key(|s| s.structure);
        let events = m.events_csv.as_deref().map(|p| read_events_csv(&resolve(base, p))).transpose()?;
        records.push(RunnerRecord {
            record_id: m.id.clone(),
            subject,
            series,
            label,
            events,
            treadmill_speed: m.speed_mps,
        });
    }
    Dataset::new(records)
}

fn file_stem(record_id: &str) -> String {
    record_id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `manifest.json`, `subjects.csv` and one angle (and events) CSV per
/// record under `dir/records/`. Returns the manifest path.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    let mut subjects = format!("{}\n", SUBJECT_HEADER.join(","));
    for s in ds.subjects() {
        subjects.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.subject_id,
            fmt9(s.age),
            fmt9(s.height),
            fmt9(s.weight),
            s.sex,
            s.dominant_leg
        ));
    }
    write_text(&dir.join("subjects.csv"), &subjects)?;
    let mut entries = Vec::with_capacity(ds.len());
    for r in &ds.records {
        let stem = file_stem(&r.record_id);
        let angles = format!("records/{stem}.csv");
        write_angle_csv(&dir.join(&angles), &r.series)?;
        let events_csv = match &r.events {
            Some(ev) => {
                let p = format!("records/{stem}_events.csv");
                write_events_csv(&dir.join(&p), ev)?;
                Some(p)
            }
            None => None,
        };
        entries.push(ManifestRecord {
            id: r.record_id.clone(),
            angles_csv: angles,
            label: r.label.to_string(),
            subject_id: r.subject.subject_id.clone(),
            events_csv,
            speed_mps: r.treadmill_speed,
        });
    }
    let manifest = Manifest { records: entries, subjects_csv: "subjects.csv".into() };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&path, &(json + "\n"))?;
    Ok(path)
}
