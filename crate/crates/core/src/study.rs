//! Study definitions: parsing, validation and the per-study pipeline.
//!
//! CSV and JSON share one row schema:
//!
//! ```text
//! study_id,label,measure,point,lower,upper,margin,direction,frequency,events_exposed,n_exposed,events_control,n_control
//! ```
//!
//! Margins are given on the same scale as the estimate. The four count
//! columns are filled only when `frequency` is `from_counts`.

use std::collections::{BTreeSet, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::conversion::{to_rr_scale, ArmCounts, EffectSummary, FrequencyKind, Measure, OutcomeFrequency};
use crate::error::{Error, Result};
use crate::sensitivity::{generalized_evalue, governing_limit, kappa, nie, Direction, Kappa, RiskRatio};

pub const CSV_HEADER: [&str; 13] = [
    "study_id",
    "label",
    "measure",
    "point",
    "lower",
    "upper",
    "margin",
    "direction",
    "frequency",
    "events_exposed",
    "n_exposed",
    "events_control",
    "n_control",
];

/// A limit whose kappa is within this distance of 1 is reported as sitting
/// on the margin (kappa prints as 1.00).
pub const BOUNDARY_KAPPA_TOLERANCE: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchFormat {
    Csv,
    Json,
}

impl std::str::FromStr for BatchFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(BatchFormat::Csv),
            "json" => Ok(BatchFormat::Json),
            other => Err(Error::Input(format!("unknown batch format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub study_id: String,
    pub label: String,
    pub estimate: EffectSummary,
    pub margin: f64,
    pub direction: Direction,
    pub frequency: OutcomeFrequency,
}

impl StudyRecord {
    /// Margin on the conventional side: at most 1 for causative, at least 1
    /// for preventive hypotheses.
    pub fn margin_is_typical(&self) -> bool {
        match self.direction {
            Direction::Causative => self.margin <= 1.0,
            Direction::Preventive => self.margin >= 1.0,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.frequency = self.frequency.with_threshold(threshold)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Boundary,
    AlreadyAtOrBeyondReference,
    ConversionApplied,
    AtypicalMargin,
}

impl std::fmt::Display for Flag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Flag::Boundary => "boundary",
            Flag::AlreadyAtOrBeyondReference => "already_at_or_beyond_reference",
            Flag::ConversionApplied => "conversion_applied",
            Flag::AtypicalMargin => "atypical_margin",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NieResult {
    pub study_id: String,
    pub converted_estimate: EffectSummary,
    pub converted_margin: f64,
    pub governing_limit: f64,
    pub kappa_limit: Kappa,
    pub nie_limit: f64,
    pub kappa_point: Kappa,
    pub nie_point: f64,
    pub non_inferiority_established: bool,
    pub flags: BTreeSet<Flag>,
}

/// Run the pipeline for one study: scale conversion, governing limit,
/// kappa and NIE for both the limit and the point estimate.
pub fn analyze(record: &StudyRecord) -> Result<NieResult> {
    analyze_inner(record).map_err(|source| Error::Study {
        study_id: record.study_id.clone(),
        source: Box::new(source),
    })
}

fn analyze_inner(record: &StudyRecord) -> Result<NieResult> {
    let scaled = to_rr_scale(&record.estimate, record.margin, &record.frequency)?;
    let margin = RiskRatio::named("margin", scaled.margin)?;
    let limit = governing_limit(&scaled.estimate, record.direction);
    let point = RiskRatio::named("point", scaled.estimate.point())?;

    let kappa_limit = kappa(limit, margin);
    let kappa_point = kappa(point, margin);
    let established = match record.direction {
        Direction::Causative => limit.value() > margin.value(),
        Direction::Preventive => limit.value() < margin.value(),
    };

    let mut flags = BTreeSet::new();
    if kappa_limit.value() - 1.0 <= BOUNDARY_KAPPA_TOLERANCE {
        flags.insert(Flag::Boundary);
    }
    if generalized_evalue(limit, margin, record.direction).already_at_or_beyond_reference {
        flags.insert(Flag::AlreadyAtOrBeyondReference);
    }
    if scaled.conversion_applied {
        flags.insert(Flag::ConversionApplied);
    }
    if !record.margin_is_typical() {
        flags.insert(Flag::AtypicalMargin);
    }

    Ok(NieResult {
        study_id: record.study_id.clone(),
        converted_estimate: scaled.estimate,
        converted_margin: margin.value(),
        governing_limit: limit.value(),
        kappa_limit,
        nie_limit: nie(kappa_limit).evalue,
        kappa_point,
        nie_point: nie(kappa_point).evalue,
        non_inferiority_established: established,
        flags,
    })
}

/// Analyze every record, preserving input order.
pub fn analyze_batch(records: &[StudyRecord]) -> Result<Vec<NieResult>> {
    records.iter().map(analyze).collect()
}

/// Wire form of one study, shared by the CSV and JSON readers and writers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StudyRow {
    study_id: String,
    label: String,
    measure: String,
    point: f64,
    lower: f64,
    upper: f64,
    margin: f64,
    direction: String,
    frequency: String,
    #[serde(default)]
    events_exposed: Option<u64>,
    #[serde(default)]
    n_exposed: Option<u64>,
    #[serde(default)]
    events_control: Option<u64>,
    #[serde(default)]
    n_control: Option<u64>,
}

impl StudyRow {
    fn from_record(r: &StudyRecord) -> Self {
        let kind = match r.frequency.kind {
            FrequencyKind::Rare => "rare",
            FrequencyKind::Common => "common",
            FrequencyKind::FromCounts => "from_counts",
        };
        let arms = r
            .frequency
            .events_per_arm
            .filter(|_| r.frequency.kind == FrequencyKind::FromCounts);
        StudyRow {
            study_id: r.study_id.clone(),
            label: r.label.clone(),
            measure: r.estimate.measure().to_string(),
            point: r.estimate.point(),
            lower: r.estimate.lower(),
            upper: r.estimate.upper(),
            margin: r.margin,
            direction: r.direction.to_string(),
            frequency: kind.to_string(),
            events_exposed: arms.map(|a| a.0.events),
            n_exposed: arms.map(|a| a.0.n),
            events_control: arms.map(|a| a.1.events),
            n_control: arms.map(|a| a.1.n),
        }
    }

    fn into_record(self, row: usize) -> Result<StudyRecord> {
        let id = self.study_id.clone();
        let invalid = |field: &'static str, message: String| Error::Validation {
            row,
            study_id: id.clone(),
            field,
            message,
        };

        if self.study_id.trim().is_empty() {
            return Err(invalid("study_id", "must not be empty".into()));
        }
        let measure: Measure = self
            .measure
            .parse()
            .map_err(|e: Error| invalid("measure", e.to_string()))?;
        for (field, v) in [
            ("point", self.point),
            ("lower", self.lower),
            ("upper", self.upper),
            ("margin", self.margin),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(invalid(field, format!("must be positive and finite, got {v}")));
            }
        }
        if self.lower > self.point {
            return Err(invalid(
                "lower",
                format!("lower bound {} exceeds point estimate {}", self.lower, self.point),
            ));
        }
        if self.point > self.upper {
            return Err(invalid(
                "upper",
                format!("upper bound {} is below point estimate {}", self.upper, self.point),
            ));
        }
        let estimate = EffectSummary::new(measure, self.point, self.lower, self.upper)
            .map_err(|e| invalid("point", e.to_string()))?;
        let direction: Direction = self
            .direction
            .parse()
            .map_err(|e: Error| invalid("direction", e.to_string()))?;

        let counts = [
            ("events_exposed", self.events_exposed),
            ("n_exposed", self.n_exposed),
            ("events_control", self.events_control),
            ("n_control", self.n_control),
        ];
        let frequency = match self.frequency.trim().to_ascii_lowercase().as_str() {
            "rare" | "common" => {
                if let Some((field, _)) = counts.iter().find(|(_, v)| v.is_some()) {
                    return Err(invalid(
                        field,
                        format!("count columns must be empty when frequency is '{}'", self.frequency),
                    ));
                }
                if self.frequency.eq_ignore_ascii_case("rare") {
                    OutcomeFrequency::rare()
                } else {
                    OutcomeFrequency::common()
                }
            }
            "from_counts" => {
                let mut values = [0u64; 4];
                for (slot, (field, v)) in values.iter_mut().zip(counts) {
                    *slot = v.ok_or_else(|| invalid(field, "required when frequency is 'from_counts'".into()))?;
                }
                let exposed =
                    ArmCounts::new(values[0], values[1]).map_err(|e| invalid("events_exposed", e.to_string()))?;
                let control =
                    ArmCounts::new(values[2], values[3]).map_err(|e| invalid("events_control", e.to_string()))?;
                OutcomeFrequency::from_counts(exposed, control)
            }
            other => {
                return Err(invalid(
                    "frequency",
                    format!("unknown frequency '{other}' (expected rare, common or from_counts)"),
                ))
            }
        };

        Ok(StudyRecord {
            study_id: self.study_id,
            label: self.label,
            estimate,
            margin: self.margin,
            direction,
            frequency,
        })
    }
}

/// Parse and validate a batch of studies.
///
/// Structural problems become [`Error::Parse`] with a line (and column for
/// JSON); semantic ones become [`Error::Validation`] naming the 1-based data
/// row, the study and the field. An empty input is an empty batch.
pub fn parse_batch(mut input: impl Read, format: BatchFormat) -> Result<Vec<StudyRecord>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let rows = match format {
        BatchFormat::Csv => read_csv_rows(&bytes)?,
        BatchFormat::Json => read_json_rows(&bytes)?,
    };

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        let record = row.into_record(i + 1)?;
        if !seen.insert(record.study_id.clone()) {
            return Err(Error::Validation {
                row: i + 1,
                study_id: record.study_id,
                field: "study_id",
                message: "duplicate study_id".into(),
            });
        }
        records.push(record);
    }
    Ok(records)
}

fn read_csv_rows(bytes: &[u8]) -> Result<Vec<StudyRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header = reader.headers().map_err(csv_error)?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            column: None,
            message: format!("unexpected header, expected '{}'", CSV_HEADER.join(",")),
        });
    }
    reader
        .deserialize::<StudyRow>()
        .map(|row| row.map_err(csv_error))
        .collect()
}

fn csv_error(err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        column: None,
        message: match err.kind() {
            csv::ErrorKind::Deserialize { err, .. } => match err.field() {
                Some(i) => format!(
                    "field '{}': {}",
                    CSV_HEADER.get(i as usize).copied().unwrap_or("?"),
                    err.kind()
                ),
                None => err.to_string(),
            },
            _ => err.to_string(),
        },
    }
}

fn read_json_rows(bytes: &[u8]) -> Result<Vec<StudyRow>> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        line: e.line() as u64,
        column: Some(e.column() as u64),
        message: e.to_string(),
    })
}

/// Write records back out in the given format.
pub fn write_batch(records: &[StudyRecord], format: BatchFormat) -> Result<String> {
    let rows: Vec<StudyRow> = records.iter().map(StudyRow::from_record).collect();
    match format {
        BatchFormat::Csv => {
            let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            writer.write_record(CSV_HEADER).map_err(csv_error)?;
            for row in &rows {
                writer.serialize(row).map_err(csv_error)?;
            }
            let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
        }
        BatchFormat::Json => Ok(serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n"),
    }
}
