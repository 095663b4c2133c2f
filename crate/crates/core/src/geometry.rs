//! Regime maps over (Q², x_B): convex hull, barycentric interpolation on a
//! Delaunay triangulation, masked Gaussian smoothing, marching-squares zero
//! contours, area fractions and sign agreement.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    XiDvcs,
    XiHat,
}

/// Scattered (Q², x_B, value) samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterField {
    pub points: Vec<[f64; 3]>,
    pub kind: FieldKind,
}

impl ScatterField {
    pub fn new(points: Vec<[f64; 3]>, kind: FieldKind) -> Self {
        Self { points, kind }
    }
}

pub const DEFAULT_RESOLUTION: usize = 200;
pub const DEFAULT_SMOOTHING: f64 = 3.0;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull (Andrew's monotone chain), starting from the
/// lowest-x, lowest-y vertex. Collinear boundary points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "hull needs ≥ 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite hull point".into()));
    }
    let mut p = points.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0
            {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    Ok(hull)
}

/// Point in or on a counter-clockwise convex polygon, with a relative
/// tolerance on the edge tests.
pub fn inside_hull(hull: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    (0..hull.len()).all(|i| {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        cross(a, b, p) >= -tol * len.max(f64::MIN_POSITIVE)
    })
}

/// Values on an R×R node grid, row-major with x_B as the row index.
/// Nodes outside the hull are masked out and hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub q2_axis: Vec<f64>,
    pub xb_axis: Vec<f64>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GridField {
    pub fn nx(&self) -> usize {
        self.q2_axis.len()
    }

    pub fn ny(&self) -> usize {
        self.xb_axis.len()
    }

    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx() + ix
    }

    pub fn value(&self, ix: usize, iy: usize) -> Option<f64> {
        let i = self.idx(ix, iy);
        self.mask[i].then_some(self.values[i])
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField {
            values: self
                .values
                .iter()
                .zip(&self.mask)
                .map(|(&v, &m)| if m { f(v) } else { f64::NAN })
                .collect(),
            ..self.clone()
        }
    }

    /// Total variation: summed absolute differences of masked neighbours.
    pub fn total_variation(&self) -> f64 {
        let mut tv = 0.0;
        for iy in 0..self.ny() {
            for ix in 0..self.nx() {
                if let Some(v) = self.value(ix, iy) {
                    if ix + 1 < self.nx() {
                        if let Some(w) = self.value(ix + 1, iy) {
                            tv += (w - v).abs();
                        }
                    }
                    if iy + 1 < self.ny() {
                        if let Some(w) = self.value(ix, iy + 1) {
                            tv += (w - v).abs();
                        }
                    }
                }
            }
        }
        tv
    }

    /// Columns x, y, value, mask; masked-out values are left empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "value", "mask"])?;
        for iy in 0..self.ny() {
            for ix in 0..self.nx() {
                let i = self.idx(ix, iy);
                out.write_record([
                    self.q2_axis[ix].to_string(),
                    self.xb_axis[iy].to_string(),
                    if self.mask[i] {
                        self.values[i].to_string()
                    } else {
                        String::new()
                    },
                    (self.mask[i] as u8).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Averages values that share identical coordinates.
fn merge_duplicates(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut groups: BTreeMap<(u64, u64), (f64, f64, f64, usize)> = BTreeMap::new();
    let mut order = Vec::new();
    for p in points {
        let key = (p[0].to_bits(), p[1].to_bits());
        let e = groups.entry(key).or_insert_with(|| {
            order.push(key);
            (p[0], p[1], 0.0, 0)
        });
        e.2 += p[2];
        e.3 += 1;
    }
    order
        .iter()
        .map(|k| {
            let (x, y, s, n) = groups[k];
            [x, y, s / n as f64]
        })
        .collect()
}

struct Triangulated {
    pts: Vec<[f64; 2]>,
    vals: Vec<f64>,
    tris: Vec<[usize; 3]>,
}

impl Triangulated {
    fn barycentric(&self, t: &[usize; 3], p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = [self.pts[t[0]], self.pts[t[1]], self.pts[t[2]]];
        let det = cross(a, b, c);
        [
            cross(p, b, c) / det,
            cross(a, p, c) / det,
            cross(a, b, p) / det,
        ]
    }

    /// Linear interpolant at `p`; outside every triangle the best triangle's
    /// weights are clamped and renormalized.
    fn interpolate(&self, p: [f64; 2]) -> f64 {
        let mut best = (f64::NEG_INFINITY, [0.0; 3], 0);
        for (k, t) in self.tris.iter().enumerate() {
            let w = self.barycentric(t, p);
            let m = w[0].min(w[1]).min(w[2]);
            if m >= -1e-12 {
                return w.iter().zip(t).map(|(w, &i)| w * self.vals[i]).sum();
            }
            if m > best.0 {
                best = (m, w, k);
            }
        }
        let w = best.1.map(|v| v.max(0.0));
        let s: f64 = w.iter().sum();
        w.iter()
            .zip(&self.tris[best.2])
            .map(|(w, &i)| w / s * self.vals[i])
            .sum()
    }
}

/// Interpolates the field onto an R×R grid spanning its bounding box, masks
/// nodes outside the hull, then applies Gaussian smoothing of width `s` grid
/// cells within the mask (s = 0 skips smoothing).
pub fn build_surface(field: &ScatterField, resolution: usize, s: f64) -> Result<GridField> {
    let raw = interpolate_surface(field, resolution)?;
    smooth(&raw, s)
}

/// The unsmoothed barycentric surface.
pub fn interpolate_surface(field: &ScatterField, resolution: usize) -> Result<GridField> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("grid resolution must be ≥ 2".into()));
    }
    if field.points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite field sample".into()));
    }
    let merged = merge_duplicates(&field.points);
    if merged.len() < 3 {
        return Err(Error::Degenerate(format!(
            "{} distinct points",
            merged.len()
        )));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &merged {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if hi[0] <= lo[0] || hi[1] <= lo[1] {
        return Err(Error::Degenerate("all points are collinear".into()));
    }
    // Triangulate in unit-box coordinates so both axes weigh the same.
    let norm = |p: [f64; 2]| {
        [
            (p[0] - lo[0]) / (hi[0] - lo[0]),
            (p[1] - lo[1]) / (hi[1] - lo[1]),
        ]
    };
    let pts: Vec<[f64; 2]> = merged.iter().map(|p| norm([p[0], p[1]])).collect();
    let hull = convex_hull(&pts)?;
    let dl: Vec<delaunator::Point> = pts
        .iter()
        .map(|p| delaunator::Point { x: p[0], y: p[1] })
        .collect();
    let tri = delaunator::triangulate(&dl);
    if tri.triangles.is_empty() {
        return Err(Error::Degenerate("triangulation is empty".into()));
    }
    let surf = Triangulated {
        tris: tri
            .triangles
            .chunks(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect(),
        vals: merged.iter().map(|p| p[2]).collect(),
        pts,
    };
    let q2_axis = axis(lo[0], hi[0], resolution);
    let xb_axis = axis(lo[1], hi[1], resolution);
    let n = resolution;
    let mut values = vec![f64::NAN; n * n];
    let mut mask = vec![false; n * n];
    for iy in 0..n {
        for ix in 0..n {
            let p = [ix as f64 / (n - 1) as f64, iy as f64 / (n - 1) as f64];
            if inside_hull(&hull, p, 1e-12) {
                values[iy * n + ix] = surf.interpolate(p);
                mask[iy * n + ix] = true;
            }
        }
    }
    Ok(GridField {
        q2_axis,
        xb_axis,
        values,
        mask,
    })
}

fn gaussian_kernel(s: f64) -> Vec<f64> {
    let r = (3.0 * s).ceil() as i64;
    (-r..=r)
        .map(|d| (-0.5 * (d as f64 / s).powi(2)).exp())
        .collect()
}

fn convolve_rows(data: &[f64], nx: usize, ny: usize, k: &[f64], along_x: bool) -> Vec<f64> {
    let r = (k.len() / 2) as i64;
    let mut out = vec![0.0; data.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let mut acc = 0.0;
            for (j, w) in k.iter().enumerate() {
                let d = j as i64 - r;
                let (x, y) = if along_x {
                    (ix as i64 + d, iy as i64)
                } else {
                    (ix as i64, iy as i64 + d)
                };
                if x >= 0 && y >= 0 && (x as usize) < nx && (y as usize) < ny {
                    acc += w * data[y as usize * nx + x as usize];
                }
            }
            out[iy * nx + ix] = acc;
        }
    }
    out
}

/// Normalized convolution: conv(v·m) / conv(m), so the kernel renormalizes
/// at the mask edge and masked-out nodes never contribute.
pub fn smooth(grid: &GridField, s: f64) -> Result<GridField> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing width must be ≥ 0, got {s}"
        )));
    }
    if s == 0.0 {
        return Ok(grid.clone());
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let k = gaussian_kernel(s);
    let vm: Vec<f64> = grid
        .values
        .iter()
        .zip(&grid.mask)
        .map(|(&v, &m)| if m { v } else { 0.0 })
        .collect();
    let m: Vec<f64> = grid.mask.iter().map(|&m| m as u8 as f64).collect();
    let num = convolve_rows(&convolve_rows(&vm, nx, ny, &k, true), nx, ny, &k, false);
    let den = convolve_rows(&convolve_rows(&m, nx, ny, &k, true), nx, ny, &k, false);
    let values = (0..nx * ny)
        .map(|i| {
            if grid.mask[i] {
                num[i] / den[i]
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(GridField {
        values,
        ..grid.clone()
    })
}

/// Edge of the node lattice: horizontal edges join (ix, iy)–(ix+1, iy),
/// vertical ones (ix, iy)–(ix, iy+1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Marching-squares zero level set over cells whose four corners are all
/// masked. Crossings are placed by linear interpolation along cell edges;
/// saddle cells are split by the sign of the corner average. Polylines are
/// in (Q², x_B) coordinates; closed loops repeat their first point.
pub fn zero_contour(grid: &GridField) -> Vec<Vec<[f64; 2]>> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let pos = |ix: usize, iy: usize| grid.values[grid.idx(ix, iy)] > 0.0;
    let point = |e: Edge| -> [f64; 2] {
        let ((ax, ay), (bx, by)) = match e {
            Edge::H(ix, iy) => ((ix, iy), (ix + 1, iy)),
            Edge::V(ix, iy) => ((ix, iy), (ix, iy + 1)),
        };
        let va = grid.values[grid.idx(ax, ay)];
        let vb = grid.values[grid.idx(bx, by)];
        let f = if va == vb {
            0.5
        } else {
            (va / (va - vb)).clamp(0.0, 1.0)
        };
        [
            grid.q2_axis[ax] + f * (grid.q2_axis[bx] - grid.q2_axis[ax]),
            grid.xb_axis[ay] + f * (grid.xb_axis[by] - grid.xb_axis[ay]),
        ]
    };
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for iy in 0..ny.saturating_sub(1) {
        for ix in 0..nx.saturating_sub(1) {
            let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
            if corners.iter().any(|&(x, y)| !grid.mask[grid.idx(x, y)]) {
                continue;
            }
            let s: Vec<bool> = corners.iter().map(|&(x, y)| pos(x, y)).collect();
            // Edges in corner order: bottom, right, top, left.
            let edges = [
                Edge::H(ix, iy),
                Edge::V(ix + 1, iy),
                Edge::H(ix, iy + 1),
                Edge::V(ix, iy),
            ];
            let crossed: Vec<usize> = (0..4).filter(|&k| s[k] != s[(k + 1) % 4]).collect();
            match crossed.len() {
                2 => segments.push((edges[crossed[0]], edges[crossed[1]])),
                4 => {
                    let mean: f64 = corners
                        .iter()
                        .map(|&(x, y)| grid.values[grid.idx(x, y)])
                        .sum::<f64>()
                        / 4.0;
                    // Join each edge to the neighbour that isolates the
                    // corners whose sign disagrees with the centre.
                    if (mean > 0.0) == s[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    chain(segments)
        .into_iter()
        .map(|line| line.into_iter().map(point).collect())
        .collect()
}

fn chain(segments: Vec<(Edge, Edge)>) -> Vec<Vec<Edge>> {
    let mut adj: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (i, &(a, b)) in segments.iter().enumerate() {
        adj.entry(a).or_default().push(i);
        adj.entry(b).or_default().push(i);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start: Edge, first: usize, used: &mut Vec<bool>| {
        let mut line = vec![start];
        let (mut at, mut seg) = (start, first);
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            line.push(next);
            at = next;
            match adj[&at].iter().find(|&&j| !used[j]) {
                Some(&j) => seg = j,
                None => break,
            }
        }
        line
    };
    // Open chains start at an endpoint with a single segment.
    let mut starts: Vec<(Edge, usize)> = adj
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, v)| (*e, v[0]))
        .collect();
    starts.sort_by_key(|&(_, s)| s);
    for (e, s) in starts {
        if !used[s] {
            lines.push(walk(e, s, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            lines.push(walk(segments[s].0, s, &mut used));
        }
    }
    lines
}

/// Fractions of masked nodes with value > 0 and < 0.
pub fn area_fractions(grid: &GridField) -> Result<(f64, f64)> {
    let n = grid.masked_count();
    if n == 0 {
        return Err(Error::Degenerate("empty mask".into()));
    }
    let (mut p, mut q) = (0usize, 0usize);
    for (v, _) in grid.values.iter().zip(&grid.mask).filter(|(_, &m)| m) {
        if *v > 0.0 {
            p += 1;
        } else if *v < 0.0 {
            q += 1;
        }
    }
    Ok((p as f64 / n as f64, q as f64 / n as f64))
}

/// Fraction of masked nodes where both grids share a sign.
pub fn sign_agreement(a: &GridField, b: &GridField) -> Result<f64> {
    if a.q2_axis != b.q2_axis || a.xb_axis != b.xb_axis || a.mask != b.mask {
        return Err(Error::GridMismatch("axes or masks differ".into()));
    }
    let n = a.masked_count();
    if n == 0 {
        return Err(Error::Degenerate("empty mask".into()));
    }
    let agree = (0..a.values.len())
        .filter(|&i| a.mask[i] && sgn(a.values[i]) == sgn(b.values[i]))
        .count();
    Ok(agree as f64 / n as f64)
}

fn sgn(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}
