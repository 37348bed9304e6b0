//! Building files (JSON array) and trace files (JSON lines).

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    normalize_angle, Building, Position, ScenarioError, ScenarioStep, VehicleState, DEFAULT_HEIGHT, DEFAULT_LENGTH,
    DEFAULT_WIDTH,
};

#[derive(Serialize, Deserialize)]
struct BuildingRecord {
    id: String,
    vertices: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct VehicleRecord {
    id: String,
    x: f64,
    y: f64,
    speed: f64,
    heading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<f64>,
}

impl From<VehicleRecord> for VehicleState {
    fn from(r: VehicleRecord) -> Self {
        VehicleState {
            id: r.id,
            position: Position::new(r.x, r.y),
            speed: r.speed,
            heading: normalize_angle(r.heading),
            length: r.length.unwrap_or(DEFAULT_LENGTH),
            width: r.width.unwrap_or(DEFAULT_WIDTH),
            height: r.height.unwrap_or(DEFAULT_HEIGHT),
        }
    }
}

impl From<&VehicleState> for VehicleRecord {
    fn from(v: &VehicleState) -> Self {
        VehicleRecord {
            id: v.id.clone(),
            x: v.position.x,
            y: v.position.y,
            speed: v.speed,
            heading: v.heading,
            length: Some(v.length),
            width: Some(v.width),
            height: Some(v.height),
        }
    }
}

#[derive(Deserialize)]
struct StepRecordIn {
    t: f64,
    ego: Option<VehicleRecord>,
    #[serde(default)]
    vehicles: Vec<VehicleRecord>,
}

#[derive(Serialize)]
struct StepRecordOut {
    t: f64,
    ego: VehicleRecord,
    vehicles: Vec<VehicleRecord>,
}

fn io_error(path: &Path, source: std::io::Error) -> ScenarioError {
    ScenarioError::Io { path: path.display().to_string(), source }
}

/// Parse a building file's contents. Order is preserved.
pub fn parse_buildings(text: &str) -> Result<Vec<Building>, ScenarioError> {
    let records: Vec<BuildingRecord> = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        source_name: "buildings".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut seen = HashSet::with_capacity(records.len());
    records
        .into_iter()
        .map(|r| {
            if !seen.insert(r.id.clone()) {
                return Err(ScenarioError::InvalidPolygon { id: r.id, reason: "duplicate building id".into() });
            }
            let vertices = r.vertices.iter().map(|&[x, y]| Position::new(x, y)).collect();
            Building::new(r.id, vertices)
        })
        .collect()
}

pub fn load_buildings(path: impl AsRef<Path>) -> Result<Vec<Building>, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_buildings(&text)
}

pub fn write_buildings<W: Write>(mut out: W, buildings: &[Building]) -> std::io::Result<()> {
    let records: Vec<BuildingRecord> = buildings
        .iter()
        .map(|b| BuildingRecord { id: b.id().to_owned(), vertices: b.vertices().iter().map(|p| [p.x, p.y]).collect() })
        .collect();
    serde_json::to_writer(&mut out, &records)?;
    out.write_all(b"\n")
}

/// Parse one trace line without cross-step checks. `line` is used only for
/// error locators.
pub fn parse_step_line(text: &str, line: usize) -> Result<ScenarioStep, ScenarioError> {
    let record: StepRecordIn = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        source_name: "trace".into(),
        line,
        column: e.column(),
        message: e.to_string(),
    })?;
    let ego = record.ego.ok_or(ScenarioError::MissingEgo { line })?;
    let step = ScenarioStep {
        timestamp: record.t,
        ego: ego.into(),
        others: record.vehicles.into_iter().map(Into::into).collect(),
    };
    step.validate().map_err(|reason| ScenarioError::InvalidStep { line, reason })?;
    Ok(step)
}

pub fn write_step<W: Write>(mut out: W, step: &ScenarioStep) -> std::io::Result<()> {
    let record = StepRecordOut {
        t: step.timestamp,
        ego: (&step.ego).into(),
        vehicles: step.others.iter().map(Into::into).collect(),
    };
    serde_json::to_writer(&mut out, &record)?;
    out.write_all(b"\n")
}

pub fn write_trace<'a, W: Write>(mut out: W, steps: impl IntoIterator<Item = &'a ScenarioStep>) -> std::io::Result<()> {
    for step in steps {
        write_step(&mut out, step)?;
    }
    out.flush()
}

/// Streaming trace parser. Holds one line and one step at a time; enforces
/// strictly increasing timestamps. Blank lines are skipped.
pub struct TraceReader<R> {
    input: R,
    buf: String,
    line: usize,
    previous_t: Option<f64>,
    failed: bool,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R) -> Self {
        TraceReader { input, buf: String::new(), line: 0, previous_t: None, failed: false }
    }

    /// Line number of the most recently read line (1-based).
    pub fn line(&self) -> usize {
        self.line
    }

    fn next_step(&mut self) -> Option<Result<ScenarioStep, ScenarioError>> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(ScenarioError::Io { path: format!("trace line {}", self.line + 1), source: e }))
                }
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let step = match parse_step_line(text, self.line) {
                Ok(s) => s,
                Err(e) => return Some(Err(e)),
            };
            if let Some(previous) = self.previous_t {
                if !(step.timestamp > previous) {
                    return Some(Err(ScenarioError::NonMonotoneTimestamp {
                        line: self.line,
                        t: step.timestamp,
                        previous,
                    }));
                }
            }
            self.previous_t = Some(step.timestamp);
            return Some(Ok(step));
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<ScenarioStep, ScenarioError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_step();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<TraceReader<BufReader<File>>, ScenarioError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    Ok(TraceReader::new(BufReader::new(file)))
}
