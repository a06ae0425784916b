//! Line-oriented run snapshots: `step,x,y,orientation,weight`, one accepted
//! edge per line, no header. Weights carry 17 significant digits so that a
//! parsed snapshot reproduces the run bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::lattice::{Edge, Orientation, Site};

use super::InvasionRun;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotRecord {
    pub step: u64,
    pub edge: Edge,
    pub weight: f64,
}

pub fn write_snapshot<W: Write>(run: &InvasionRun, mut out: W) -> Result<()> {
    for a in &run.accepted {
        writeln!(
            out,
            "{},{},{},{},{:.16e}",
            a.step,
            a.edge.base.x,
            a.edge.base.y,
            a.edge.orientation.as_char(),
            a.weight
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<Vec<SnapshotRecord>> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Config { line: i + 1, msg: msg.to_string() };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 comma-separated fields"));
        }
        let step = fields[0].parse().map_err(|_| bad("bad step"))?;
        let x = fields[1].parse().map_err(|_| bad("bad x"))?;
        let y = fields[2].parse().map_err(|_| bad("bad y"))?;
        let mut chars = fields[3].chars();
        let orientation = match (chars.next(), chars.next()) {
            (Some(c), None) => Orientation::from_char(c).ok_or_else(|| bad("bad orientation"))?,
            _ => return Err(bad("bad orientation")),
        };
        let weight = fields[4].parse().map_err(|_| bad("bad weight"))?;
        records.push(SnapshotRecord { step, edge: Edge { base: Site::new(x, y), orientation }, weight });
    }
    Ok(records)
}
