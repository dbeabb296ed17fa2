//! Crack, road-edge and road-marking detection on rasterized point clouds.
//!
//! These are transparent geometric and intensity heuristics:
//!
//! * cracks are cells lying more than a depth threshold below a robust local
//!   plane,
//! * edges are the outermost lateral elevation drops of each chainage row,
//! * markings are cells brighter than the grid's median intensity by a
//!   contrast threshold.
//!
//! Point coordinates are read as `(chainage, lateral, elevation)`; lateral
//! offsets grow to the left of the direction of travel.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::georef::ScanPoint;

/// Regular chainage × lateral raster of per-cell medians.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    origin: (f64, f64),
    cell: (f64, f64),
    rows: usize,
    cols: usize,
    elevation: Vec<f64>,
    intensity: Vec<f64>,
    count: Vec<u32>,
}

impl SurfaceGrid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(chainage, lateral)` of the lower corner of cell `(0, 0)`.
    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn cell_size(&self) -> (f64, f64) {
        self.cell
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    /// Median elevation, `None` for empty cells.
    pub fn elevation(&self, r: usize, c: usize) -> Option<f64> {
        let i = self.idx(r, c);
        (self.count[i] > 0).then(|| self.elevation[i])
    }

    pub fn intensity(&self, r: usize, c: usize) -> Option<f64> {
        let i = self.idx(r, c);
        (self.count[i] > 0).then(|| self.intensity[i])
    }

    pub fn count(&self, r: usize, c: usize) -> u32 {
        self.count[self.idx(r, c)]
    }

    pub fn is_empty_cell(&self, r: usize, c: usize) -> bool {
        self.count(r, c) == 0
    }

    pub fn populated_fraction(&self) -> f64 {
        self.count.iter().filter(|&&n| n > 0).count() as f64 / self.count.len() as f64
    }

    /// Chainage of the centre of row `r`.
    pub fn row_centre(&self, r: usize) -> f64 {
        self.origin.0 + (r as f64 + 0.5) * self.cell.0
    }

    /// Lateral offset of the centre of column `c`.
    pub fn col_centre(&self, c: usize) -> f64 {
        self.origin.1 + (c as f64 + 0.5) * self.cell.1
    }

    /// Returns a copy with `f` applied to every populated elevation.
    pub fn map_elevation(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut g = self.clone();
        for (e, n) in g.elevation.iter_mut().zip(&g.count) {
            if *n > 0 {
                *e = f(*e);
            }
        }
        g
    }

    /// Returns a copy with `f` applied to every populated intensity.
    pub fn map_intensity(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut g = self.clone();
        for (v, n) in g.intensity.iter_mut().zip(&g.count) {
            if *n > 0 {
                *v = f(*v);
            }
        }
        g
    }
}

/// Cell index along one axis; a point on a boundary goes to the lower cell.
fn cell_index(offset: f64, size: f64) -> usize {
    let k = offset / size;
    let nearest = k.round();
    let k = if (k - nearest).abs() < 1e-9 { nearest } else { k.ceil() };
    (k as i64 - 1).max(0) as usize
}

/// Cell boundaries lie on multiples of `size`; the origin is the boundary
/// just below the smallest coordinate, so that coordinate is not itself on
/// the lower boundary of cell 0.
fn lattice_origin(values: impl Iterator<Item = f64>, size: f64) -> f64 {
    let min = values.fold(f64::INFINITY, f64::min);
    let k = min / size;
    let nearest = k.round();
    let k = if (k - nearest).abs() < 1e-9 { nearest } else { k.ceil() };
    (k - 1.0) * size
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Rasterizes points into square cells of `cell_size` meters.
pub fn rasterize(points: &[ScanPoint], cell_size: f64) -> Result<SurfaceGrid> {
    rasterize_with(points, cell_size, cell_size)
}

pub fn rasterize_with(points: &[ScanPoint], chainage_cell: f64, lateral_cell: f64) -> Result<SurfaceGrid> {
    if points.is_empty() {
        return Err(Error::invalid("no points to rasterize"));
    }
    if !(chainage_cell > 0.0 && lateral_cell > 0.0) {
        return Err(Error::invalid("cell sizes must be positive"));
    }
    if points.iter().any(|p| p.point.iter().any(|v| !v.is_finite()) || !p.intensity.is_finite()) {
        return Err(Error::invalid("points must be finite"));
    }
    let x0 = lattice_origin(points.iter().map(|p| p.point.x), chainage_cell);
    let y0 = lattice_origin(points.iter().map(|p| p.point.y), lateral_cell);
    let index: Vec<(usize, usize)> = points
        .iter()
        .map(|p| {
            (
                cell_index(p.point.x - x0, chainage_cell),
                cell_index(p.point.y - y0, lateral_cell),
            )
        })
        .collect();
    let rows = index.iter().map(|i| i.0).max().unwrap_or(0) + 1;
    let cols = index.iter().map(|i| i.1).max().unwrap_or(0) + 1;

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| index[i].0 * cols + index[i].1);

    let total = rows * cols;
    let mut elevation = vec![f64::NAN; total];
    let mut intensity = vec![f64::NAN; total];
    let mut count = vec![0u32; total];
    let mut start = 0;
    while start < order.len() {
        let cell = index[order[start]].0 * cols + index[order[start]].1;
        let mut end = start;
        while end < order.len() && index[order[end]].0 * cols + index[order[end]].1 == cell {
            end += 1;
        }
        let members = &order[start..end];
        let mut z: Vec<f64> = members.iter().map(|&i| points[i].point.z).collect();
        let mut v: Vec<f64> = members.iter().map(|&i| points[i].intensity).collect();
        elevation[cell] = median(&mut z);
        intensity[cell] = median(&mut v);
        count[cell] = members.len() as u32;
        start = end;
    }
    Ok(SurfaceGrid {
        origin: (x0, y0),
        cell: (chainage_cell, lateral_cell),
        rows,
        cols,
        elevation,
        intensity,
        count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionKind {
    Crack,
    Edge,
    Marking,
}

impl RegionKind {
    pub fn label(&self) -> &'static str {
        match self {
            RegionKind::Crack => "crack",
            RegionKind::Edge => "edge",
            RegionKind::Marking => "marking",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSide {
    /// Positive lateral offsets.
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRegion {
    pub kind: RegionKind,
    pub side: Option<EdgeSide>,
    /// `(row, col)` cells sorted row-major.
    pub cells: Vec<(usize, usize)>,
    /// Crack: max depth below the local plane (mm). Marking: mean intensity
    /// contrast. Edge: median lateral position (m).
    pub severity: f64,
    /// Smoothed `(chainage, lateral)` edge line; empty for other kinds.
    pub polyline: Vec<(f64, f64)>,
}

impl DetectionRegion {
    /// `(chainage_start, chainage_end, lat_start, lat_end)` of the covered cells.
    pub fn bounds(&self, grid: &SurfaceGrid) -> (f64, f64, f64, f64) {
        let (dx, dy) = grid.cell;
        let r0 = self.cells.iter().map(|c| c.0).min().unwrap_or(0);
        let r1 = self.cells.iter().map(|c| c.0).max().unwrap_or(0);
        let c0 = self.cells.iter().map(|c| c.1).min().unwrap_or(0);
        let c1 = self.cells.iter().map(|c| c.1).max().unwrap_or(0);
        (
            grid.origin.0 + r0 as f64 * dx,
            grid.origin.0 + (r1 + 1) as f64 * dx,
            grid.origin.1 + c0 as f64 * dy,
            grid.origin.1 + (c1 + 1) as f64 * dy,
        )
    }
}

/// 8-connected components of `mask` with at least `min_cells` cells, in
/// row-major order of their first cell.
fn components(mask: &[bool], rows: usize, cols: usize, min_cells: usize) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / cols, i % cols);
            cells.push((r, c));
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let j = nr as usize * cols + nc as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if cells.len() >= min_cells {
            cells.sort_unstable();
            out.push(cells);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackParams {
    pub depth_threshold_mm: f64,
    pub min_cells: usize,
    /// Side of the square window for the local plane fit (m).
    pub window: f64,
    /// Residuals beyond this many σ are dropped before the refit.
    pub reject_sigma: f64,
}

impl Default for CrackParams {
    fn default() -> Self {
        Self {
            depth_threshold_mm: 3.0,
            min_cells: 5,
            window: 0.5,
            reject_sigma: 2.5,
        }
    }
}

/// Least-squares plane `z = a + b·(x − x̄) + c·(y − ȳ)`.
struct Plane {
    a: f64,
    b: f64,
    c: f64,
    xm: f64,
    ym: f64,
}

impl Plane {
    fn fit(samples: &[(f64, f64, f64)]) -> Option<Plane> {
        if samples.len() < 3 {
            return None;
        }
        let n = samples.len() as f64;
        let xm = samples.iter().map(|s| s.0).sum::<f64>() / n;
        let ym = samples.iter().map(|s| s.1).sum::<f64>() / n;
        let zm = samples.iter().map(|s| s.2).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (x, y, z) in samples {
            let (dx, dy, dz) = (x - xm, y - ym, z - zm);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
            sxz += dx * dz;
            syz += dy * dz;
        }
        let det = sxx * syy - sxy * sxy;
        if det.abs() <= 1e-12 * (sxx * syy).max(f64::MIN_POSITIVE) {
            return None;
        }
        Some(Plane {
            a: zm,
            b: (sxz * syy - syz * sxy) / det,
            c: (syz * sxx - sxz * sxy) / det,
            xm,
            ym,
        })
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.a + self.b * (x - self.xm) + self.c * (y - self.ym)
    }

    /// Fit, drop residuals beyond `k·σ`, refit.
    fn robust_fit(samples: &[(f64, f64, f64)], k: f64) -> Option<Plane> {
        let first = Plane::fit(samples)?;
        let residuals: Vec<f64> = samples.iter().map(|s| s.2 - first.at(s.0, s.1)).collect();
        let sigma = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
        if sigma == 0.0 {
            return Some(first);
        }
        let kept: Vec<(f64, f64, f64)> = samples
            .iter()
            .zip(&residuals)
            .filter(|(_, r)| r.abs() <= k * sigma)
            .map(|(s, _)| *s)
            .collect();
        Plane::fit(&kept).or(Some(first))
    }
}

const MIN_COVERAGE: f64 = 0.5;

/// Crack candidates lie more than `depth_threshold_mm` below the robust
/// local plane; 8-connected groups of at least `min_cells` become regions.
pub fn detect_cracks(grid: &SurfaceGrid, params: &CrackParams) -> Result<Vec<DetectionRegion>> {
    let coverage = grid.populated_fraction();
    if coverage <= MIN_COVERAGE {
        return Err(Error::invalid(format!(
            "grid is only {:.0}% populated; crack detection needs more than {:.0}%",
            coverage * 100.0,
            MIN_COVERAGE * 100.0
        )));
    }
    let (dx, dy) = grid.cell;
    let half_rows = ((0.5 * params.window / dx).round() as usize).max(1);
    let half_cols = ((0.5 * params.window / dy).round() as usize).max(1);
    let tile_rows = half_rows.max(1);
    let tile_cols = half_cols.max(1);
    let threshold = params.depth_threshold_mm / 1000.0;

    let mut depth = vec![f64::NAN; grid.rows * grid.cols];
    let mut tr = 0;
    while tr < grid.rows {
        let tr_end = (tr + tile_rows).min(grid.rows);
        let centre_r = (tr + tr_end) / 2;
        let wr0 = centre_r.saturating_sub(half_rows);
        let wr1 = (centre_r + half_rows).min(grid.rows);
        let mut tc = 0;
        while tc < grid.cols {
            let tc_end = (tc + tile_cols).min(grid.cols);
            let centre_c = (tc + tc_end) / 2;
            let wc0 = centre_c.saturating_sub(half_cols);
            let wc1 = (centre_c + half_cols).min(grid.cols);
            let mut samples = Vec::with_capacity((wr1 - wr0) * (wc1 - wc0));
            for r in wr0..wr1 {
                for c in wc0..wc1 {
                    if let Some(z) = grid.elevation(r, c) {
                        samples.push((r as f64 * dx, c as f64 * dy, z));
                    }
                }
            }
            if let Some(plane) = Plane::robust_fit(&samples, params.reject_sigma) {
                for r in tr..tr_end {
                    for c in tc..tc_end {
                        if let Some(z) = grid.elevation(r, c) {
                            depth[grid.idx(r, c)] = plane.at(r as f64 * dx, c as f64 * dy) - z;
                        }
                    }
                }
            }
            tc = tc_end;
        }
        tr = tr_end;
    }

    let mask: Vec<bool> = depth.iter().map(|d| *d > threshold).collect();
    Ok(components(&mask, grid.rows, grid.cols, params.min_cells)
        .into_iter()
        .map(|cells| {
            let severity = cells
                .iter()
                .map(|&(r, c)| depth[grid.idx(r, c)])
                .fold(f64::NEG_INFINITY, f64::max)
                * 1000.0;
            DetectionRegion {
                kind: RegionKind::Crack,
                side: None,
                cells,
                severity,
                polyline: Vec::new(),
            }
        })
        .collect())
}

pub const DEFAULT_DROP_THRESHOLD_MM: f64 = 20.0;

/// Outermost lateral elevation drop on each side of every chainage row.
///
/// A drop is an elevation decrease of more than `drop_threshold_mm` over at
/// most two cells moving outward; the edge sits on the cell boundary with
/// the larger single-step decrease. Per-row positions are smoothed with a
/// three-row median. The lane centre is taken at lateral offset 0 when the
/// grid contains it, otherwise at the middle column.
pub fn detect_road_edges(grid: &SurfaceGrid, drop_threshold_mm: f64) -> Result<Vec<DetectionRegion>> {
    let threshold = drop_threshold_mm / 1000.0;
    let cols = grid.cols;
    if cols < 3 {
        return Err(Error::NoEdges);
    }
    let (y0, dy) = (grid.origin.1, grid.cell.1);
    let centre = if y0 <= 0.0 && 0.0 < y0 + cols as f64 * dy {
        (((0.0 - y0) / dy).floor() as usize).min(cols - 1)
    } else {
        cols / 2
    };

    let mut regions = Vec::new();
    for side in [EdgeSide::Right, EdgeSide::Left] {
        // (row, inner cell, boundary lateral position)
        let mut hits: Vec<(usize, usize, f64)> = Vec::new();
        for r in 0..grid.rows {
            let z = |c: usize| grid.elevation(r, c);
            let mut found = None;
            match side {
                EdgeSide::Left => {
                    for c in centre..cols.saturating_sub(1) {
                        let (Some(a), Some(b)) = (z(c), z(c + 1)) else { continue };
                        let far = if c + 2 < cols { z(c + 2) } else { None };
                        let two_step = far.is_some_and(|f| a - f > threshold);
                        if a - b > threshold || two_step {
                            let second = far.map_or(f64::NEG_INFINITY, |f| b - f);
                            let boundary = if a - b >= second { c + 1 } else { c + 2 };
                            found = Some((boundary - 1, y0 + boundary as f64 * dy));
                        }
                    }
                }
                EdgeSide::Right => {
                    for c in (1..=centre).rev() {
                        let (Some(a), Some(b)) = (z(c), z(c - 1)) else { continue };
                        let far = if c >= 2 { z(c - 2) } else { None };
                        let two_step = far.is_some_and(|f| a - f > threshold);
                        if a - b > threshold || two_step {
                            let second = far.map_or(f64::NEG_INFINITY, |f| b - f);
                            let boundary = if a - b >= second { c } else { c - 1 };
                            found = Some((boundary, y0 + boundary as f64 * dy));
                        }
                    }
                }
            }
            if let Some((cell, lateral)) = found {
                hits.push((r, cell, lateral));
            }
        }
        if hits.is_empty() {
            continue;
        }
        let smoothed: Vec<f64> = (0..hits.len())
            .map(|i| {
                let mut window: Vec<f64> = (i.saturating_sub(1)..(i + 2).min(hits.len()))
                    .filter(|&j| hits[j].0.abs_diff(hits[i].0) <= 1)
                    .map(|j| hits[j].2)
                    .collect();
                median(&mut window)
            })
            .collect();
        let polyline: Vec<(f64, f64)> = hits
            .iter()
            .zip(&smoothed)
            .map(|(h, s)| (grid.row_centre(h.0), *s))
            .collect();
        let mut lateral = smoothed.clone();
        let severity = median(&mut lateral);
        let mut cells: Vec<(usize, usize)> = hits.iter().map(|h| (h.0, h.1)).collect();
        cells.sort_unstable();
        regions.push(DetectionRegion {
            kind: RegionKind::Edge,
            side: Some(side),
            cells,
            severity,
            polyline,
        });
    }
    if regions.is_empty() {
        return Err(Error::NoEdges);
    }
    Ok(regions)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingParams {
    pub contrast_threshold: f64,
    pub min_cells: usize,
}

impl Default for MarkingParams {
    fn default() -> Self {
        Self {
            contrast_threshold: 0.3,
            min_cells: 3,
        }
    }
}

/// Cells brighter than the grid's median intensity by more than the
/// contrast threshold, grouped into 8-connected regions.
pub fn detect_markings(grid: &SurfaceGrid, params: &MarkingParams) -> Result<Vec<DetectionRegion>> {
    let mut values: Vec<f64> = grid
        .intensity
        .iter()
        .zip(&grid.count)
        .filter(|(_, n)| **n > 0)
        .map(|(v, _)| *v)
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || lo == hi {
        return Err(Error::Degenerate(
            "intensity channel is constant; markings cannot be separated".into(),
        ));
    }
    let background = median(&mut values);
    let contrast: Vec<f64> = grid
        .intensity
        .iter()
        .zip(&grid.count)
        .map(|(v, n)| if *n > 0 { v - background } else { f64::NAN })
        .collect();
    let mask: Vec<bool> = contrast.iter().map(|c| *c > params.contrast_threshold).collect();
    Ok(components(&mask, grid.rows, grid.cols, params.min_cells)
        .into_iter()
        .map(|cells| {
            let severity =
                cells.iter().map(|&(r, c)| contrast[grid.idx(r, c)]).sum::<f64>() / cells.len() as f64;
            DetectionRegion {
                kind: RegionKind::Marking,
                side: None,
                cells,
                severity,
                polyline: Vec::new(),
            }
        })
        .collect())
}

/// Orders regions by chainage, then lateral position, then kind.
pub fn sort_regions(regions: &mut [DetectionRegion]) {
    regions.sort_by(|a, b| {
        let key = |r: &DetectionRegion| {
            let first = r.cells.first().copied().unwrap_or((0, 0));
            let min_col = r.cells.iter().map(|c| c.1).min().unwrap_or(0);
            (first.0, min_col, r.kind)
        };
        key(a).cmp(&key(b))
    });
}
