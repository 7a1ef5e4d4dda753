//! Uniform Cartesian grids over the computational box.
//!
//! Storage is row-major: the last axis varies fastest. Points outside the box
//! are clamped to it before interpolation, which stands in for extending the
//! dynamics outside the constraint set.

mod field;
pub(crate) mod format;

pub use field::{ValueField, ValueKind};
pub use format::{read_value_field, write_value_field, FORMAT_PRECISION};

use crate::error::{Error, Result};

/// Width (in cells) of the band along the box faces that acceptance
/// comparisons skip.
pub const BOUNDARY_BAND: usize = 2;

/// Relative distance below which a coordinate snaps onto the nearest node.
const NODE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        let dim = lower.len();
        if dim == 0 {
            return Err(Error::Config("grid dimension must be positive".into()));
        }
        if upper.len() != dim || counts.len() != dim {
            return Err(Error::Shape(format!(
                "grid lower/upper/counts lengths {}/{}/{} disagree",
                dim,
                upper.len(),
                counts.len()
            )));
        }
        for axis in 0..dim {
            let (lo, hi) = (lower[axis], upper[axis]);
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config(format!(
                    "grid axis {axis}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
            if counts[axis] < 3 {
                return Err(Error::Config(format!(
                    "grid axis {axis}: need at least 3 points, got {}",
                    counts[axis]
                )));
            }
        }
        let len = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::Config("grid point count overflows usize".into()))?;
        let spacing = (0..dim)
            .map(|i| (upper[i] - lower[i]) / (counts[i] - 1) as f64)
            .collect();
        let mut strides = vec![1usize; dim];
        for axis in (0..dim - 1).rev() {
            strides[axis] = strides[axis + 1] * counts[axis + 1];
        }
        Ok(Self {
            lower,
            upper,
            counts,
            spacing,
            strides,
            len,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Same box and resolution (bitwise on the defining vectors).
    pub fn same_shape(&self, other: &Grid) -> bool {
        self.lower == other.lower && self.upper == other.upper && self.counts == other.counts
    }

    pub fn index_to_point(&self, multi_index: &[usize]) -> Result<Vec<f64>> {
        self.check_index(multi_index)?;
        Ok(multi_index
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coordinate(axis, i))
            .collect())
    }

    /// Coordinate of node `i` along `axis`, computed as lower + i * spacing.
    #[inline]
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + i as f64 * self.spacing[axis]
    }

    pub fn flat_index(&self, multi_index: &[usize]) -> Result<usize> {
        self.check_index(multi_index)?;
        Ok(multi_index
            .iter()
            .zip(&self.strides)
            .map(|(i, s)| i * s)
            .sum())
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.multi_index_into(flat, &mut out);
        out
    }

    #[inline]
    pub fn multi_index_into(&self, mut flat: usize, out: &mut [usize]) {
        for axis in 0..self.dim() {
            out[axis] = flat / self.strides[axis];
            flat %= self.strides[axis];
        }
    }

    /// Node coordinates for a flat index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.point_into(flat, &mut out);
        out
    }

    #[inline]
    pub fn point_into(&self, mut flat: usize, out: &mut [f64]) {
        for axis in 0..self.dim() {
            let i = flat / self.strides[axis];
            flat %= self.strides[axis];
            out[axis] = self.coordinate(axis, i);
        }
    }

    /// Nearest node to `point` after clamping it to the box.
    pub fn nearest_node(&self, point: &[f64]) -> Result<Vec<usize>> {
        self.check_point(point)?;
        Ok((0..self.dim())
            .map(|axis| {
                let s = (point[axis] - self.lower[axis]) / self.spacing[axis];
                let max = (self.counts[axis] - 1) as f64;
                s.round().clamp(0.0, max) as usize
            })
            .collect())
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .enumerate()
                .all(|(a, &x)| x >= self.lower[a] && x <= self.upper[a])
    }

    /// Clamp each coordinate into the box.
    #[inline]
    pub fn clamp(&self, point: &mut [f64]) {
        for (axis, x) in point.iter_mut().enumerate() {
            *x = x.clamp(self.lower[axis], self.upper[axis]);
        }
    }

    /// True when the node lies within `width` cells of some box face.
    pub fn in_boundary_band(&self, flat: usize, width: usize) -> bool {
        let mut rest = flat;
        for axis in 0..self.dim() {
            let i = rest / self.strides[axis];
            rest %= self.strides[axis];
            if i < width || i + width >= self.counts[axis] {
                return true;
            }
        }
        false
    }

    /// Number of interpolation corners, 2^dim.
    pub fn corner_count(&self) -> usize {
        1 << self.dim()
    }

    /// Multilinear interpolation stencil for `point` (clamped to the box):
    /// writes `corner_count()` flat indices and weights. Weights are
    /// nonnegative and sum to one.
    pub fn stencil_into(&self, point: &[f64], indices: &mut [usize], weights: &mut [f64]) {
        let dim = self.dim();
        let corners = self.corner_count();
        debug_assert!(indices.len() >= corners && weights.len() >= corners);
        let mut base = 0usize;
        // Fractional offset within the cell along each axis; dim is small.
        let mut frac = [0.0f64; 16];
        assert!(dim <= 16, "grids above 16 dimensions are not supported");
        for axis in 0..dim {
            let lo = self.lower[axis];
            let x = point[axis].clamp(lo, self.upper[axis]);
            let mut s = (x - lo) / self.spacing[axis];
            let r = s.round();
            if (s - r).abs() < NODE_SNAP {
                s = r;
            }
            let last_cell = self.counts[axis] - 2;
            let cell = (s.floor().max(0.0) as usize).min(last_cell);
            frac[axis] = (s - cell as f64).clamp(0.0, 1.0);
            base += cell * self.strides[axis];
        }
        for corner in 0..corners {
            let mut idx = base;
            let mut w = 1.0;
            for axis in 0..dim {
                let t = frac[axis];
                if corner >> (dim - 1 - axis) & 1 == 1 {
                    idx += self.strides[axis];
                    w *= t;
                } else {
                    w *= 1.0 - t;
                }
            }
            indices[corner] = idx;
            weights[corner] = w;
        }
    }

    /// Multilinear interpolation of nodal `values` at `point`.
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> Result<f64> {
        self.check_point(point)?;
        if values.len() != self.len {
            return Err(Error::Shape(format!(
                "value array has {} entries, grid has {}",
                values.len(),
                self.len
            )));
        }
        let corners = self.corner_count();
        let mut indices = vec![0usize; corners];
        let mut weights = vec![0.0; corners];
        self.stencil_into(point, &mut indices, &mut weights);
        Ok(indices
            .iter()
            .zip(&weights)
            .map(|(&i, &w)| w * values[i])
            .sum())
    }

    /// Backward and forward difference quotients at a node. Missing neighbours
    /// on box faces come from linear extrapolation of the two nodes inside.
    pub fn one_sided_gradients(
        &self,
        values: &[f64],
        multi_index: &[usize],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let flat = self.flat_index(multi_index)?;
        let dim = self.dim();
        let mut back = vec![0.0; dim];
        let mut fwd = vec![0.0; dim];
        for axis in 0..dim {
            let (b, f) = self.axis_differences(values, flat, multi_index[axis], axis);
            back[axis] = b;
            fwd[axis] = f;
        }
        Ok((back, fwd))
    }

    /// (D⁻, D⁺) along one axis at flat node `flat` whose index on that axis
    /// is `i`.
    #[inline]
    fn axis_differences(
        &self,
        values: &[f64],
        flat: usize,
        i: usize,
        axis: usize,
    ) -> (f64, f64) {
        let stride = self.strides[axis];
        let h = self.spacing[axis];
        let centre = values[flat];
        let n = self.counts[axis];
        let (prev, next) = if i == 0 {
            let next = values[flat + stride];
            (2.0 * centre - next, next)
        } else if i == n - 1 {
            let prev = values[flat - stride];
            (prev, 2.0 * centre - prev)
        } else {
            (values[flat - stride], values[flat + stride])
        };
        ((centre - prev) / h, (next - centre) / h)
    }

    fn check_index(&self, multi_index: &[usize]) -> Result<()> {
        if multi_index.len() != self.dim() {
            return Err(Error::Range(format!(
                "index has {} components, grid has dimension {}",
                multi_index.len(),
                self.dim()
            )));
        }
        for (axis, (&i, &n)) in multi_index.iter().zip(&self.counts).enumerate() {
            if i >= n {
                return Err(Error::Range(format!(
                    "index {i} on axis {axis} exceeds count {n}"
                )));
            }
        }
        Ok(())
    }

    fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has {} components, grid has dimension {}",
                point.len(),
                self.dim()
            )));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite query point {point:?}")));
        }
        Ok(())
    }
}
