use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::Network;
use crate::par::{self, Parallelism};

/// Gradients are rounded to multiples of this before comparison.
pub const GRADIENT_QUANTUM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

/// Empirical region map of a 2-input network on a regular grid.
///
/// Each cell gets the quantized Jacobian at its center. Cells whose one-sided
/// differences disagree straddle a kink and get id `-1`; they are left out of the
/// component count, so small or thin regions can be missed and the estimate is a
/// lower bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionGrid {
    pub bbox: GridBox,
    pub resolution: usize,
    /// Row-major over `(y, x)` cells: `ids[j * resolution + i]`.
    pub fingerprint_ids: Vec<i64>,
    /// Quantized gradient per fingerprint id.
    pub fingerprints: Vec<Vec<i64>>,
    pub estimated_regions: usize,
}

impl RegionGrid {
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        cell_center(&self.bbox, self.resolution, i, j)
    }

    /// Writes `x,y,fingerprint_id` rows, one per cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,fingerprint_id")?;
        for j in 0..self.resolution {
            for i in 0..self.resolution {
                let (x, y) = self.cell_center(i, j);
                writeln!(w, "{x},{y},{}", self.fingerprint_ids[j * self.resolution + i])?;
            }
        }
        Ok(())
    }
}

fn cell_center(b: &GridBox, res: usize, i: usize, j: usize) -> (f64, f64) {
    let dx = (b.x1 - b.x0) / res as f64;
    let dy = (b.y1 - b.y0) / res as f64;
    (b.x0 + (i as f64 + 0.5) * dx, b.y0 + (j as f64 + 0.5) * dy)
}

/// Quantized central-difference Jacobian at a cell center, or `None` when the cell
/// straddles a kink.
fn cell_fingerprint<N: Network + ?Sized>(net: &N, c: [f64; 2], h: [f64; 2]) -> Result<Option<Vec<i64>>> {
    let f0 = net.eval(&c)?;
    let mut out = Vec::with_capacity(2 * f0.len());
    for axis in 0..2 {
        let mut plus = c;
        let mut minus = c;
        plus[axis] += h[axis];
        minus[axis] -= h[axis];
        let (fp, fm) = (net.eval(&plus)?, net.eval(&minus)?);
        for o in 0..f0.len() {
            let fwd = (fp[o] - f0[o]) / h[axis];
            let bwd = (f0[o] - fm[o]) / h[axis];
            if (fwd - bwd).abs() > GRADIENT_QUANTUM * (1.0 + fwd.abs().max(bwd.abs())) {
                return Ok(None);
            }
            let central = (fp[o] - fm[o]) / (2.0 * h[axis]);
            out.push((central / GRADIENT_QUANTUM).round() as i64);
        }
    }
    Ok(Some(out))
}

pub fn grid_fingerprint_2d<N: Network + ?Sized>(
    net: &N,
    bbox: GridBox,
    resolution: usize,
    mode: Parallelism,
) -> Result<RegionGrid> {
    if net.input_dim() != 2 {
        return Err(Error::UnsupportedDimension {
            got: net.input_dim(),
            required: 2,
        });
    }
    if resolution < 8 {
        return Err(Error::invalid("grid", "resolution must be at least 8"));
    }
    if !(bbox.x0 < bbox.x1 && bbox.y0 < bbox.y1) || [bbox.x0, bbox.x1, bbox.y0, bbox.y1].iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid", "box must be finite with x0 < x1 and y0 < y1"));
    }
    let step = [
        (bbox.x1 - bbox.x0) / resolution as f64 / 4.0,
        (bbox.y1 - bbox.y0) / resolution as f64 / 4.0,
    ];
    let cells = resolution * resolution;
    let raw = par::map_range(cells, mode, |k| {
        let (x, y) = cell_center(&bbox, resolution, k % resolution, k / resolution);
        cell_fingerprint(net, [x, y], step)
    });

    let mut ids = Vec::with_capacity(cells);
    let mut fingerprints = Vec::new();
    let mut index: HashMap<Vec<i64>, i64> = HashMap::new();
    for r in raw {
        ids.push(match r? {
            None => -1,
            Some(fp) => *index.entry(fp.clone()).or_insert_with(|| {
                fingerprints.push(fp);
                fingerprints.len() as i64 - 1
            }),
        });
    }
    let estimated_regions = count_components(&ids, resolution);
    Ok(RegionGrid {
        bbox,
        resolution,
        fingerprint_ids: ids,
        fingerprints,
        estimated_regions,
    })
}

/// 4-connected components of equal, non-negative ids.
fn count_components(ids: &[i64], res: usize) -> usize {
    let mut seen = vec![false; ids.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..ids.len() {
        if seen[start] || ids[start] < 0 {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % res, k / res);
            let mut visit = |n: usize| {
                if !seen[n] && ids[n] == ids[k] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(k - 1);
            }
            if i + 1 < res {
                visit(k + 1);
            }
            if j > 0 {
                visit(k - res);
            }
            if j + 1 < res {
                visit(k + res);
            }
        }
    }
    count
}
