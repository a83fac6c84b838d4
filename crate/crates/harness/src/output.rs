//! Output formats: NDJSON frames and event logs, CSV tables, JSON sidecars.
//!
//! Floats are written as shortest round-trip decimals and fields in a fixed
//! order, so equal runs produce byte-identical files.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use sohb_core::gci::GciConstants;
use sohb_core::macroscopic::{MacroField, OrientationField};
use sohb_core::micro::{JumpEvent, Orientations, RunStats};

use crate::config::{validate_metadata, RunConfig};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrientKind {
    Quat,
    Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orient {
    pub kind: OrientKind,
    /// `(w, x, y, z)` or the row-major matrix.
    pub v: Vec<f64>,
}

/// One particle at one saved time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub t: f64,
    pub id: usize,
    pub x: [f64; 3],
    pub orient: Orient,
}

fn orient_of(o: &Orientations, n: usize) -> Orient {
    match o {
        Orientations::Matrix(v) => Orient {
            kind: OrientKind::Mat,
            v: v[n].to_row_array().to_vec(),
        },
        Orientations::Quaternion(v) => Orient {
            kind: OrientKind::Quat,
            v: v[n].to_array().to_vec(),
        },
    }
}

/// `serde_json` float text: shortest round-trip, `1.0` rather than `1`.
pub fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).expect("finite float")
}

/// NDJSON frame sink. Each frame is assembled in memory and handed to the sink
/// in one write followed by a flush, so readers never observe half a frame.
pub struct FrameWriter<W: Write> {
    sink: W,
    buf: Vec<u8>,
    frames: u64,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(sink: W) -> Self {
        Self {
            sink,
            buf: Vec::new(),
            frames: 0,
        }
    }

    pub fn write_frame(
        &mut self,
        t: f64,
        positions: &[Vector3<f64>],
        orientations: &Orientations,
    ) -> std::io::Result<()> {
        self.buf.clear();
        for (id, x) in positions.iter().enumerate() {
            let record = FrameRecord {
                t,
                id,
                x: [x.x, x.y, x.z],
                orient: orient_of(orientations, id),
            };
            serde_json::to_writer(&mut self.buf, &record)?;
            self.buf.push(b'\n');
        }
        self.sink.write_all(&self.buf)?;
        self.sink.flush()?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}

/// Appends jump events, one NDJSON line each.
pub fn write_events<W: Write>(sink: &mut W, events: &[JumpEvent]) -> std::io::Result<()> {
    let mut buf = Vec::new();
    for e in events {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    sink.write_all(&buf)?;
    sink.flush()
}

pub fn read_frames<R: BufRead>(reader: R) -> Result<Vec<FrameRecord>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io {
            path: "<frames>".into(),
            source: e,
        })?;
        let record = serde_json::from_str(&line).map_err(|e| HarnessError::Parse {
            what: format!("frame line {}", k + 1),
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub const CONSTANTS_HEADER: &str = "D,model,c1,c2,c2p,c3,c4";

pub fn constants_row(c: &GciConstants) -> String {
    let model = serde_json::to_value(c.model).expect("model serializes");
    format!(
        "{},{},{},{},{},{},{}",
        fmt_f64(c.d),
        model.as_str().expect("model is a string"),
        fmt_f64(c.c1),
        fmt_f64(c.c2),
        fmt_f64(c.c2_prime),
        fmt_f64(c.c3),
        fmt_f64(c.c4)
    )
}

pub fn constants_csv(rows: &[GciConstants]) -> String {
    let mut s = String::from(CONSTANTS_HEADER);
    s.push('\n');
    for c in rows {
        s.push_str(&constants_row(c));
        s.push('\n');
    }
    s
}

pub fn macro_header(orientation: &OrientationField) -> String {
    let mut h = String::from("t,i,j,k,x,y,z,rho");
    match orientation {
        OrientationField::Quaternion(_) => h.push_str(",qw,qx,qy,qz"),
        OrientationField::Matrix(_) => {
            for i in 0..3 {
                for j in 0..3 {
                    h.push_str(&format!(",m{i}{j}"));
                }
            }
        }
    }
    h
}

/// One line per node: time, node indices, position, density, orientation.
pub fn write_macro_snapshot<W: Write>(sink: &mut W, field: &MacroField) -> std::io::Result<()> {
    let mut buf = String::new();
    for n in 0..field.grid.len() {
        let [i, j, k] = field.grid.coords(n);
        let x = field.grid.position(n);
        buf.push_str(&format!(
            "{},{i},{j},{k},{},{},{},{}",
            fmt_f64(field.t),
            fmt_f64(x.x),
            fmt_f64(x.y),
            fmt_f64(x.z),
            fmt_f64(field.rho[n])
        ));
        let entries: Vec<f64> = match &field.orientation {
            OrientationField::Quaternion(q) => q[n].to_array().to_vec(),
            OrientationField::Matrix(m) => m[n].to_row_array().to_vec(),
        };
        for v in entries {
            buf.push(',');
            buf.push_str(&fmt_f64(v));
        }
        buf.push('\n');
    }
    sink.write_all(buf.as_bytes())?;
    sink.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub seed: u64,
    pub frames: u64,
    pub steps: u64,
    pub events: u64,
    pub degenerate: u64,
}

impl ReplicaSummary {
    pub fn new(replica: usize, seed: u64, frames: u64, stats: RunStats) -> Self {
        Self {
            replica,
            seed,
            frames,
            steps: stats.steps,
            events: stats.events,
            degenerate: stats.degenerate,
        }
    }
}

/// JSON sidecar written next to every run's data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub config: serde_json::Value,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<Vec<ReplicaSummary>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<GciConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<Mass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mass {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_mass: f64,
}

impl Metadata {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.to_value(),
            files: Vec::new(),
            replicas: None,
            constants: None,
            mass: None,
        }
    }

    /// Validates against the sidecar schema, then writes pretty-printed JSON.
    pub fn write(&self, path: &Path) -> Result<()> {
        let value = serde_json::to_value(self).expect("metadata serializes");
        validate_metadata(&value)?;
        let mut text = serde_json::to_string_pretty(&value).expect("metadata serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
    }
}
