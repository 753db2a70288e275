//! Plain-text formats for grid layouts and episode traces.
//!
//! A layout file holds the 25 machine types of the grid in row-major order,
//! separated by whitespace; `#` starts a comment. A trace file is JSON lines:
//! a header object followed by one object per executed step.

use std::io::{BufRead, Write};

use evade_core::episode::StepTrace;
use evade_core::factory::{format_layout, MachineGrid, CELLS};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub fn parse_layout(text: &str) -> Result<MachineGrid, HarnessError> {
    let mut types = Vec::with_capacity(CELLS);
    for line in text.lines() {
        let content = line.split('#').next().unwrap_or("");
        for token in content.split_whitespace() {
            let value = token
                .parse::<u8>()
                .map_err(|_| HarnessError::format("layout", format!("`{token}` is not a machine type")))?;
            types.push(value);
        }
    }
    if types.len() != CELLS {
        return Err(HarnessError::format(
            "layout",
            format!("expected {CELLS} entries, found {}", types.len()),
        ));
    }
    MachineGrid::new(&types).map_err(|e| HarnessError::format("layout", e.to_string()))
}

pub fn write_layout(grid: &MachineGrid) -> String {
    format!("# machine types, row-major\n{}", format_layout(grid))
}

/// First line of a trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub run: u64,
    pub episode: u64,
    pub agents: usize,
    pub initial_score: f64,
}

pub fn write_trace<W: Write>(mut out: W, header: &TraceHeader, steps: &[StepTrace]) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::format("trace", e.to_string());
    writeln!(out, "{}", serde_json::to_string(header).expect("header serializes")).map_err(io)?;
    for step in steps {
        writeln!(out, "{}", serde_json::to_string(step).expect("step serializes")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_trace<R: BufRead>(input: R) -> Result<(TraceHeader, Vec<StepTrace>), HarnessError> {
    let mut lines = input.lines();
    let parse_err = |e: serde_json::Error| HarnessError::format("trace", e.to_string());
    let first = lines
        .next()
        .ok_or_else(|| HarnessError::format("trace", "empty file"))?
        .map_err(|e| HarnessError::format("trace", e.to_string()))?;
    let header: TraceHeader = serde_json::from_str(&first).map_err(parse_err)?;
    let mut steps = Vec::new();
    for line in lines {
        let line = line.map_err(|e| HarnessError::format("trace", e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        steps.push(serde_json::from_str(&line).map_err(parse_err)?);
    }
    Ok((header, steps))
}
