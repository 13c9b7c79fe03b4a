//! Plain-text field snapshots.
//!
//! Layout: a five line header followed by one value per line with 17
//! significant digits, in grid order (colatitude outer ascending, longitude
//! inner from 0).

use std::fmt::Write as _;
use std::sync::Arc;

use super::fields::ScalarField;
use super::grid::SphereGrid;
use crate::error::{Error, Result};

const ORDERING: &str = "row-major, colatitude outer ascending, longitude inner from 0";

/// Render a field as snapshot text.
pub fn snapshot_to_string(field: &ScalarField) -> String {
    let g = field.grid();
    let mut s = String::with_capacity(24 * g.len() + 160);
    let _ = writeln!(s, "# SPHEREFIELD 1");
    let _ = writeln!(s, "# bandlimit: {}", g.bandlimit());
    let _ = writeln!(s, "# ntheta: {}", g.n_theta());
    let _ = writeln!(s, "# nphi: {}", g.n_phi());
    let _ = writeln!(s, "# ordering: {ORDERING}");
    for v in field.values() {
        let _ = writeln!(s, "{v:.16e}");
    }
    s
}

/// Parsed snapshot header and values.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    /// Bandlimit recorded in the header.
    pub bandlimit: usize,
    /// Number of colatitude rings.
    pub n_theta: usize,
    /// Number of longitudes.
    pub n_phi: usize,
    /// Values in grid order.
    pub values: Vec<f64>,
}

impl Snapshot {
    /// Attach the values to a grid with matching dimensions.
    pub fn into_field(self, grid: &Arc<SphereGrid>) -> Result<ScalarField> {
        if grid.bandlimit() != self.bandlimit || grid.n_theta() != self.n_theta || grid.n_phi() != self.n_phi {
            return Err(Error::GridMismatch(format!(
                "snapshot grid L={} {}x{} does not match L={} {}x{}",
                self.bandlimit,
                self.n_theta,
                self.n_phi,
                grid.bandlimit(),
                grid.n_theta(),
                grid.n_phi()
            )));
        }
        ScalarField::from_values(grid, self.values)
    }
}

fn header_value(line: Option<&str>, key: &str) -> Result<usize> {
    let line = line.ok_or_else(|| Error::Snapshot(format!("missing `{key}` header")))?;
    let rest = line
        .strip_prefix(&format!("# {key}: "))
        .ok_or_else(|| Error::Snapshot(format!("expected `# {key}: N`, found `{line}`")))?;
    rest.trim().parse().map_err(|_| Error::Snapshot(format!("bad `{key}` value `{rest}`")))
}

/// Parse snapshot text.
pub fn parse_snapshot(text: &str) -> Result<Snapshot> {
    let mut lines = text.lines();
    if lines.next() != Some("# SPHEREFIELD 1") {
        return Err(Error::Snapshot("missing `# SPHEREFIELD 1` magic line".into()));
    }
    let bandlimit = header_value(lines.next(), "bandlimit")?;
    let n_theta = header_value(lines.next(), "ntheta")?;
    let n_phi = header_value(lines.next(), "nphi")?;
    match lines.next() {
        Some(l) if l == format!("# ordering: {ORDERING}") => {}
        other => return Err(Error::Snapshot(format!("unexpected ordering line {other:?}"))),
    }
    let values = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>().map_err(|_| Error::Snapshot(format!("bad value `{l}`"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n_theta * n_phi {
        return Err(Error::Snapshot(format!("expected {} values, found {}", n_theta * n_phi, values.len())));
    }
    Ok(Snapshot { bandlimit, n_theta, n_phi, values })
}
