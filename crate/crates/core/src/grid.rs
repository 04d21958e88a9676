//! Cell-centered rectangular meshes with zero-flux ghost-cell closure.
//!
//! Cells are stored row-major: the flat index of cell `(i, j)` is
//! `i * n[1] + j`, where `i` runs along axis 0 and `j` along axis 1.
//! A one-dimensional grid is the special case `n[1] == 1` with no axis-1
//! faces, so every operator below is written once for both dimensions.

use crate::error::{Error, Result};

/// Smallest admissible cell count per axis.
pub const MIN_CELLS: usize = 4;

/// Axis-aligned interval (1D) or rectangle (2D) split into uniform cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    lower: [f64; 2],
    upper: [f64; 2],
    n: [usize; 2],
    h: [f64; 2],
}

/// Builds a grid over `extents` (one `(a, b)` pair per axis) with
/// `n_cells[i]` cells along axis `i`.
pub fn build_grid(dim: usize, extents: &[(f64, f64)], n_cells: &[usize]) -> Result<Grid> {
    if dim != 1 && dim != 2 {
        return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
    }
    if extents.len() != dim || n_cells.len() != dim {
        return Err(Error::InvalidGrid(format!(
            "expected {dim} extents and cell counts, got {} and {}",
            extents.len(),
            n_cells.len()
        )));
    }
    let mut lower = [0.0; 2];
    let mut upper = [1.0; 2];
    let mut n = [1usize; 2];
    let mut h = [1.0; 2];
    for axis in 0..dim {
        let (a, b) = extents[axis];
        if !a.is_finite() || !b.is_finite() || b - a <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "axis {axis}: extent [{a}, {b}] must have positive finite length"
            )));
        }
        if n_cells[axis] < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "axis {axis}: {} cells, need at least {MIN_CELLS}",
                n_cells[axis]
            )));
        }
        lower[axis] = a;
        upper[axis] = b;
        n[axis] = n_cells[axis];
        h[axis] = (b - a) / n_cells[axis] as f64;
    }
    Ok(Grid {
        dim,
        lower,
        upper,
        n,
        h,
    })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells along `axis`; 1 for the unused axis of a 1D grid.
    pub fn cells(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn cell_counts(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Largest spacing over the active axes.
    pub fn max_spacing(&self) -> f64 {
        self.h[..self.dim].iter().copied().fold(0.0, f64::max)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.lower[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.upper[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn total_cells(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    /// |Ω|, computed as cell volume times cell count so that the two agree
    /// bit for bit.
    pub fn domain_measure(&self) -> f64 {
        self.cell_volume() * self.total_cells() as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n[0] && j < self.n[1]);
        i * self.n[1] + j
    }

    /// Coordinates of the centre of cell `(i, j)`; the second component is
    /// meaningless for 1D grids.
    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.lower[0] + (i as f64 + 0.5) * self.h[0],
            self.lower[1] + (j as f64 + 0.5) * self.h[1],
        ]
    }

    /// Centres of all cells in storage order.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        let mut out = Vec::with_capacity(self.total_cells());
        for i in 0..self.n[0] {
            for j in 0..self.n[1] {
                out.push(self.cell_center(i, j));
            }
        }
        out
    }

    /// Number of faces normal to `axis`, boundary faces included.
    pub fn face_count(&self, axis: usize) -> usize {
        if axis >= self.dim {
            return 0;
        }
        match axis {
            0 => (self.n[0] + 1) * self.n[1],
            _ => self.n[0] * (self.n[1] + 1),
        }
    }

    /// Storage stride between cells adjacent along `axis`.
    #[inline]
    fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            self.n[1]
        } else {
            1
        }
    }

    /// Calls `f(face_index, left_cell, right_cell)` for every interior face
    /// normal to `axis`. Boundary faces are skipped: they carry zero flux.
    #[inline]
    pub fn for_each_interior_face(&self, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
        let stride = self.stride(axis);
        match axis {
            0 => {
                let ny = self.n[1];
                for fi in 1..self.n[0] {
                    for j in 0..ny {
                        let right = fi * ny + j;
                        f(fi * ny + j, right - stride, right);
                    }
                }
            }
            1 if self.dim == 2 => {
                let ny = self.n[1];
                for i in 0..self.n[0] {
                    for fj in 1..ny {
                        let right = i * ny + fj;
                        f(i * (ny + 1) + fj, right - stride, right);
                    }
                }
            }
            _ => {}
        }
    }

    /// Position of the centre of face `face` normal to `axis`.
    pub fn face_center(&self, axis: usize, face: usize) -> [f64; 2] {
        match axis {
            0 => {
                let ny = self.n[1];
                let (fi, j) = (face / ny, face % ny);
                [
                    self.lower[0] + fi as f64 * self.h[0],
                    self.lower[1] + (j as f64 + 0.5) * self.h[1],
                ]
            }
            _ => {
                let nf = self.n[1] + 1;
                let (i, fj) = (face / nf, face % nf);
                [
                    self.lower[0] + (i as f64 + 0.5) * self.h[0],
                    self.lower[1] + fj as f64 * self.h[1],
                ]
            }
        }
    }
}

/// One finite real per cell of a grid, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(Vec<f64>);

impl Field {
    /// Wraps `values`, rejecting wrong lengths and non-finite entries.
    pub fn new(g: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != g.total_cells() {
            return Err(Error::InvalidInitialData(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                g.total_cells()
            )));
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInitialData(format!(
                "non-finite value {} in cell {k}",
                values[k]
            )));
        }
        Ok(Field(values))
    }

    pub fn zeros(g: &Grid) -> Self {
        Field(vec![0.0; g.total_cells()])
    }

    pub fn constant(g: &Grid, c: f64) -> Self {
        Field(vec![c; g.total_cells()])
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(g: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        Field(g.centers().into_iter().map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&x| f(x)).collect())
    }
}

/// Values on cell faces, one array per axis. Boundary faces are stored
/// alongside interior ones so that indices line up with the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    axes: [Vec<f64>; 2],
}

impl FaceField {
    pub fn zeros(g: &Grid) -> Self {
        FaceField {
            axes: [vec![0.0; g.face_count(0)], vec![0.0; g.face_count(1)]],
        }
    }

    /// Builds from explicit per-axis arrays; lengths must match the grid.
    pub fn from_axes(g: &Grid, axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.len() != g.dim() {
            return Err(Error::InvalidGrid(format!("expected {} face arrays", g.dim())));
        }
        let mut out = FaceField::zeros(g);
        for (axis, values) in axes.into_iter().enumerate() {
            if values.len() != g.face_count(axis) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: {} face values, grid has {} faces",
                    values.len(),
                    g.face_count(axis)
                )));
            }
            out.axes[axis] = values;
        }
        Ok(out)
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.axes[axis]
    }

    pub fn axis_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.axes[axis]
    }
}

/// `(f_right - f_left) / h` on interior faces, exactly 0 on boundary faces.
pub fn face_gradient(f: &Field, g: &Grid) -> FaceField {
    let mut out = FaceField::zeros(g);
    let vals = f.values();
    for axis in 0..g.dim() {
        let h = g.spacing(axis);
        let target = &mut out.axes[axis];
        g.for_each_interior_face(axis, |face, l, r| {
            target[face] = (vals[r] - vals[l]) / h;
        });
    }
    out
}

/// Per-cell sum over axes of `(flux_right - flux_left) / h`.
///
/// Boundary entries of `faces` are read as given; callers pass zero there
/// for the zero-flux closure.
pub fn divergence(faces: &FaceField, g: &Grid) -> Field {
    let (nx, ny) = (g.cells(0), g.cells(1));
    let mut out = vec![0.0; g.total_cells()];
    let hx = g.spacing(0);
    let fx = faces.axis(0);
    for i in 0..nx {
        for j in 0..ny {
            out[i * ny + j] = (fx[(i + 1) * ny + j] - fx[i * ny + j]) / hx;
        }
    }
    if g.dim() == 2 {
        let hy = g.spacing(1);
        let fy = faces.axis(1);
        for i in 0..nx {
            for j in 0..ny {
                let base = i * (ny + 1) + j;
                out[i * ny + j] += (fy[base + 1] - fy[base]) / hy;
            }
        }
    }
    Field(out)
}

/// Second-order 3-point (1D) / 5-point (2D) Laplacian with mirrored ghost
/// cells.
///
/// The arithmetic is ordered exactly as in `divergence(face_gradient(f))`,
/// so the two agree bit for bit.
pub fn laplacian(f: &Field, g: &Grid) -> Field {
    let (nx, ny) = (g.cells(0), g.cells(1));
    let v = f.values();
    let mut out = vec![0.0; g.total_cells()];
    let hx = g.spacing(0);
    for i in 0..nx {
        for j in 0..ny {
            let c = i * ny + j;
            let right = if i + 1 < nx { (v[c + ny] - v[c]) / hx } else { 0.0 };
            let left = if i > 0 { (v[c] - v[c - ny]) / hx } else { 0.0 };
            out[c] = (right - left) / hx;
        }
    }
    if g.dim() == 2 {
        let hy = g.spacing(1);
        for i in 0..nx {
            for j in 0..ny {
                let c = i * ny + j;
                let up = if j + 1 < ny { (v[c + 1] - v[c]) / hy } else { 0.0 };
                let down = if j > 0 { (v[c] - v[c - 1]) / hy } else { 0.0 };
                out[c] += (up - down) / hy;
            }
        }
    }
    Field(out)
}

/// Midpoint rule: cell volume times the sum of cell values.
pub fn integrate(f: &Field, g: &Grid) -> f64 {
    g.cell_volume() * f.values().iter().sum::<f64>()
}

/// Midpoint rule applied to `h(value)` without allocating.
pub fn integrate_map(f: &Field, g: &Grid, h: impl Fn(f64) -> f64) -> f64 {
    g.cell_volume() * f.values().iter().map(|&x| h(x)).sum::<f64>()
}

/// Discrete Dirichlet energy `∫|∇f|²`: squared face gradients summed over
/// interior faces, weighted by the cell volume.
///
/// Equals `-∫ f Δf` for the mirrored-ghost Laplacian (summation by parts).
pub fn dirichlet_energy(f: &Field, g: &Grid) -> f64 {
    let vals = f.values();
    let mut sum = 0.0;
    for axis in 0..g.dim() {
        let h = g.spacing(axis);
        g.for_each_interior_face(axis, |_, l, r| {
            let d = (vals[r] - vals[l]) / h;
            sum += d * d;
        });
    }
    sum * g.cell_volume()
}

/// Face gradients averaged onto cell centres, one array per axis.
/// Unused axes of a 1D grid come back as zeros.
pub fn cell_gradient(f: &Field, g: &Grid) -> [Vec<f64>; 2] {
    let faces = face_gradient(f, g);
    let (nx, ny) = (g.cells(0), g.cells(1));
    let mut gx = vec![0.0; g.total_cells()];
    let mut gy = vec![0.0; g.total_cells()];
    let fx = faces.axis(0);
    for i in 0..nx {
        for j in 0..ny {
            gx[i * ny + j] = 0.5 * (fx[i * ny + j] + fx[(i + 1) * ny + j]);
        }
    }
    if g.dim() == 2 {
        let fy = faces.axis(1);
        for i in 0..nx {
            for j in 0..ny {
                let base = i * (ny + 1) + j;
                gy[i * ny + j] = 0.5 * (fy[base] + fy[base + 1]);
            }
        }
    }
    [gx, gy]
}
