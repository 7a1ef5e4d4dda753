//! Invariant sets as sublevel sets of value fields: masks, contours and set
//! comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::format::fmt_scalar;
use crate::grid::{Grid, ValueField};

/// Nodes of a grid flagged by a sublevel threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMask {
    grid: Grid,
    flags: Vec<bool>,
    threshold: f64,
}

impl GridMask {
    pub fn new(grid: Grid, flags: Vec<bool>, threshold: f64) -> Result<Self> {
        if flags.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} flags for a grid of {} nodes",
                flags.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            flags,
            threshold,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn contains_node(&self, node: usize) -> bool {
        self.flags[node]
    }

    /// Flagged nodes whose whole neighbourhood of `margin` cells (in every
    /// axis direction, box-shaped) is flagged and inside the grid.
    pub fn interior_nodes(&self, margin: usize) -> Vec<usize> {
        let grid = &self.grid;
        let dim = grid.dim();
        let m = margin as isize;
        let mut out = Vec::new();
        let mut idx = vec![0usize; dim];
        'nodes: for node in 0..grid.len() {
            if !self.flags[node] {
                continue;
            }
            grid.multi_index_into(node, &mut idx);
            for axis in 0..dim {
                if idx[axis] < margin || idx[axis] + margin >= grid.counts()[axis] {
                    continue 'nodes;
                }
            }
            // Walk the (2m+1)^dim neighbourhood.
            let side = 2 * margin + 1;
            let total = side.pow(dim as u32);
            for k in 0..total {
                let mut rest = k;
                let mut flat = 0isize;
                for axis in (0..dim).rev() {
                    let off = (rest % side) as isize - m;
                    rest /= side;
                    flat += (idx[axis] as isize + off) * grid.strides()[axis] as isize;
                }
                if !self.flags[flat as usize] {
                    continue 'nodes;
                }
            }
            out.push(node);
        }
        out
    }

    /// CSV of node coordinates and a 0/1 flag, in row-major node order.
    pub fn to_csv(&self) -> String {
        let dim = self.grid.dim();
        let mut out = String::new();
        for axis in 1..=dim {
            let _ = write!(out, "x_{axis},");
        }
        out.push_str("flag\n");
        let mut p = vec![0.0; dim];
        for (node, &flag) in self.flags.iter().enumerate() {
            self.grid.point_into(node, &mut p);
            for v in &p {
                out.push_str(&fmt_scalar(*v));
                out.push(',');
            }
            out.push(if flag { '1' } else { '0' });
            out.push('\n');
        }
        out
    }

    /// Parse a mask CSV, rebuilding the grid from the distinct coordinates
    /// per axis. The threshold is not stored in the file and reads back NaN.
    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "empty mask file"))?;
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        if columns.last() != Some(&"flag") || columns.len() < 2 {
            return Err(Error::parse(origin, "mask header must be x_1,...,x_n,flag"));
        }
        let dim = columns.len() - 1;
        let mut points = Vec::new();
        let mut flags = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let at = |m: String| Error::parse(origin, format!("line {}: {m}", lineno + 2));
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != dim + 1 {
                return Err(at(format!("expected {} columns", dim + 1)));
            }
            let p = cells[..dim]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| at(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let flag = match cells[dim] {
                "0" => false,
                "1" => true,
                other => return Err(at(format!("flag must be 0 or 1, got `{other}`"))),
            };
            points.push(p);
            flags.push(flag);
        }
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        let mut counts = Vec::with_capacity(dim);
        for axis in 0..dim {
            let mut distinct: BTreeMap<u64, f64> = BTreeMap::new();
            for p in &points {
                distinct.insert(p[axis].to_bits(), p[axis]);
            }
            let mut values: Vec<f64> = distinct.into_values().collect();
            values.sort_by(|a, b| a.total_cmp(b));
            lower.push(*values.first().ok_or_else(|| Error::parse(origin, "mask has no rows"))?);
            upper.push(*values.last().unwrap());
            counts.push(values.len());
        }
        let grid = Grid::new(lower, upper, counts)
            .map_err(|e| Error::parse(origin, format!("rows do not form a grid: {e}")))?;
        if grid.len() != points.len() {
            return Err(Error::parse(origin, "rows do not form a full grid"));
        }
        for (node, p) in points.iter().enumerate() {
            let q = grid.point(node);
            let scale = grid.spacing().iter().copied().fold(f64::INFINITY, f64::min);
            if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-9 * scale.max(1.0)) {
                return Err(Error::parse(origin, format!("row {} is not at grid node {q:?}", node + 1)));
            }
        }
        GridMask::new(grid, flags, f64::NAN)
    }
}

/// {V <= epsilon_set} on the nodes of the field.
pub fn extract_sublevel(field: &ValueField, epsilon_set: f64) -> Result<GridMask> {
    if !(epsilon_set >= 0.0) || !epsilon_set.is_finite() {
        return Err(Error::Config(format!(
            "sublevel threshold must be a finite nonnegative number, got {epsilon_set}"
        )));
    }
    let flags = field.values().iter().map(|&v| v <= epsilon_set).collect();
    GridMask::new(field.grid().clone(), flags, epsilon_set)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskComparison {
    pub only_a: usize,
    pub only_b: usize,
    pub both: usize,
    /// |a ∩ b| / |a ∪ b|, 1 when both are empty.
    pub jaccard: f64,
    /// |a Δ b| / |a ∪ b|, 0 when both are empty.
    pub symmetric_difference_fraction: f64,
}

impl MaskComparison {
    pub fn to_text(&self) -> String {
        format!(
            "only_a = {}\nonly_b = {}\nboth = {}\njaccard = {}\nsymmetric_difference_fraction = {}\n",
            self.only_a,
            self.only_b,
            self.both,
            fmt_scalar(self.jaccard),
            fmt_scalar(self.symmetric_difference_fraction)
        )
    }
}

pub fn compare_masks(a: &GridMask, b: &GridMask) -> Result<MaskComparison> {
    if !a.grid().same_shape(b.grid()) {
        return Err(Error::Shape("masks are defined on different grids".into()));
    }
    let (mut only_a, mut only_b, mut both) = (0, 0, 0);
    for (&x, &y) in a.flags().iter().zip(b.flags()) {
        match (x, y) {
            (true, true) => both += 1,
            (true, false) => only_a += 1,
            (false, true) => only_b += 1,
            (false, false) => {}
        }
    }
    let union = only_a + only_b + both;
    let (jaccard, sym) = if union == 0 {
        (1.0, 0.0)
    } else {
        (
            both as f64 / union as f64,
            (only_a + only_b) as f64 / union as f64,
        )
    };
    Ok(MaskComparison {
        only_a,
        only_b,
        both,
        jaccard,
        symmetric_difference_fraction: sym,
    })
}

/// Level curves of a planar field as polylines.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour2D {
    pub level: f64,
    pub polylines: Vec<Vec<[f64; 2]>>,
}

impl Contour2D {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    /// A polyline is closed when its first and last vertices coincide.
    pub fn is_closed(line: &[[f64; 2]]) -> bool {
        line.len() > 2 && line.first() == line.last()
    }

    pub fn length(line: &[[f64; 2]]) -> f64 {
        line.windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }

    /// CSV with columns polyline, x, y.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("polyline,x,y\n");
        for (id, line) in self.polylines.iter().enumerate() {
            for v in line {
                let _ = writeln!(out, "{id},{},{}", fmt_scalar(v[0]), fmt_scalar(v[1]));
            }
        }
        out
    }
}

/// Crossing point on a cell edge, keyed so neighbouring cells agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct EdgeKey {
    /// 0: edge along axis 0 from (i, j) to (i+1, j); 1: along axis 1.
    axis: u8,
    i: usize,
    j: usize,
}

/// Marching squares on a 2-D field with linear interpolation along edges.
/// Nodes with value above `level` count as outside; saddle cells are split
/// according to the average of the four corners.
pub fn marching_squares(field: &ValueField, level: f64) -> Result<Contour2D> {
    let grid = field.grid();
    if grid.dim() != 2 {
        return Err(Error::UnsupportedDimension(format!(
            "contours need a 2-D field, got dimension {}",
            grid.dim()
        )));
    }
    let (nx, ny) = (grid.counts()[0], grid.counts()[1]);
    let v = field.values();
    let at = |i: usize, j: usize| v[i * ny + j];
    let above = |i: usize, j: usize| at(i, j) > level;

    let crossing = |e: EdgeKey| -> [f64; 2] {
        let (i0, j0) = (e.i, e.j);
        let (i1, j1) = if e.axis == 0 { (i0 + 1, j0) } else { (i0, j0 + 1) };
        let (a, b) = (at(i0, j0), at(i1, j1));
        let t = ((level - a) / (b - a)).clamp(0.0, 1.0);
        let p0 = [grid.coordinate(0, i0), grid.coordinate(1, j0)];
        let p1 = [grid.coordinate(0, i1), grid.coordinate(1, j1)];
        [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]
    };

    // Segments as pairs of edge keys.
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            // Corners counter-clockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
            let c = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            let case = c.iter().enumerate().fold(0u8, |acc, (k, &b)| acc | ((b as u8) << k));
            if case == 0 || case == 15 {
                continue;
            }
            // Edges: 0 bottom (axis 0 at j), 1 right (axis 1 at i+1),
            // 2 top (axis 0 at j+1), 3 left (axis 1 at i).
            let edge = |k: usize| match k {
                0 => EdgeKey { axis: 0, i, j },
                1 => EdgeKey { axis: 1, i: i + 1, j },
                2 => EdgeKey { axis: 0, i, j: j + 1 },
                _ => EdgeKey { axis: 1, i, j },
            };
            let mut push = |a: usize, b: usize| segments.push((edge(a), edge(b)));
            match case {
                1 | 14 => push(3, 0),
                2 | 13 => push(0, 1),
                3 | 12 => push(3, 1),
                4 | 11 => push(1, 2),
                6 | 9 => push(0, 2),
                7 | 8 => push(3, 2),
                5 | 10 => {
                    let centre = 0.25 * (at(i, j) + at(i + 1, j) + at(i + 1, j + 1) + at(i, j + 1));
                    // Whether the centre sits on the same side as corner 0.
                    let centre_above = centre > level;
                    let corner0_above = c[0];
                    if centre_above == corner0_above {
                        // Corners 0 and 2 connect through the centre; cut off 1 and 3.
                        push(0, 1);
                        push(2, 3);
                    } else {
                        push(3, 0);
                        push(1, 2);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    // Stitch segments sharing edge keys into polylines.
    let mut by_edge: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        by_edge.entry(*a).or_default().push(k);
        by_edge.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let other_end = |seg: (EdgeKey, EdgeKey), from: EdgeKey| if seg.0 == from { seg.1 } else { seg.0 };
    let next_segment = |used: &[bool], at: EdgeKey| -> Option<usize> {
        by_edge.get(&at)?.iter().copied().find(|&s| !used[s])
    };
    let mut polylines = Vec::new();
    // Open chains first start at edges touched by a single segment.
    let mut starts: Vec<EdgeKey> = by_edge
        .iter()
        .filter(|(_, segs)| segs.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    starts.extend(segments.iter().map(|s| s.0));
    for start in starts {
        let Some(first) = next_segment(&used, start) else {
            continue;
        };
        let mut keys = vec![start];
        let mut current = first;
        let mut at = start;
        loop {
            used[current] = true;
            at = other_end(segments[current], at);
            keys.push(at);
            match next_segment(&used, at) {
                Some(s) => current = s,
                None => break,
            }
        }
        polylines.push(keys.into_iter().map(crossing).collect::<Vec<_>>());
    }
    Ok(Contour2D { level, polylines })
}

/// Legacy VTK (2.0, ASCII) structured-points file for a 2-D or 3-D field.
pub fn field_to_vtk(field: &ValueField) -> Result<String> {
    let grid = field.grid();
    if grid.dim() > 3 {
        return Err(Error::UnsupportedDimension(format!(
            "VTK export supports up to 3 dimensions, got {}",
            grid.dim()
        )));
    }
    let pad = |v: &[f64], fill: f64| -> Vec<f64> {
        let mut out = v.to_vec();
        out.resize(3, fill);
        out
    };
    let mut dims: Vec<usize> = grid.counts().to_vec();
    dims.resize(3, 1);
    let origin = pad(grid.lower(), 0.0);
    let spacing = pad(grid.spacing(), 1.0);
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    let _ = writeln!(s, "{} value function", field.kind());
    s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
    let _ = writeln!(s, "ORIGIN {} {} {}", fmt_scalar(origin[0]), fmt_scalar(origin[1]), fmt_scalar(origin[2]));
    let _ = writeln!(
        s,
        "SPACING {} {} {}",
        fmt_scalar(spacing[0]),
        fmt_scalar(spacing[1]),
        fmt_scalar(spacing[2])
    );
    let _ = writeln!(s, "POINT_DATA {}", grid.len());
    s.push_str("SCALARS value double 1\nLOOKUP_TABLE default\n");
    // VTK wants the first axis fastest; the field stores it slowest.
    let n = grid.len();
    let mut idx = vec![0usize; grid.dim()];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&node| {
        grid.multi_index_into(node, &mut idx);
        idx.iter().rev().copied().collect::<Vec<_>>()
    });
    for node in order {
        s.push_str(&fmt_scalar(field.values()[node]));
        s.push('\n');
    }
    Ok(s)
}
