//! Uniform grids (interval, radially symmetric, 2D tensor), nodal fields,
//! lumped quadrature and the discrete weighted Sobolev norm.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::unit_sphere_area;
use crate::weights::WeightSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GridMode {
    /// `[0, L]` in one dimension.
    Interval,
    /// `[0, R]` in the radial variable of a ball in `R^dim`.
    Radial { dim: usize },
    /// `[0, L]²`.
    Tensor2d,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    mode: GridMode,
    extent: f64,
    /// Interval count per axis.
    resolution: usize,
    h: f64,
    axis: Vec<f64>,
    /// Flattened node coordinates, `stride` values per node.
    coords: Vec<f64>,
    stride: usize,
    boundary: Vec<bool>,
    /// Measure of each node's dual cell.
    volumes: Vec<f64>,
}

/// Builds a uniform grid with `resolution` intervals per axis.
pub fn build_grid(mode: GridMode, extent: f64, resolution: usize) -> Result<Grid> {
    Grid::new(mode, extent, resolution)
}

impl Grid {
    pub fn new(mode: GridMode, extent: f64, resolution: usize) -> Result<Self> {
        if resolution < 4 {
            return Err(Error::Config(format!("resolution must be at least 4, got {resolution}")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::Config(format!("domain extent must be positive, got {extent}")));
        }
        if let GridMode::Radial { dim } = mode {
            if dim == 0 {
                return Err(Error::Config("radial dimension must be at least 1".into()));
            }
        }
        let h = extent / resolution as f64;
        let axis: Vec<f64> = (0..=resolution).map(|i| if i == resolution { extent } else { i as f64 * h }).collect();
        let m = axis.len();
        let (coords, stride, boundary, volumes) = match mode {
            GridMode::Interval => {
                let boundary = (0..m).map(|i| i == 0 || i == m - 1).collect();
                let volumes = (0..m).map(|i| if i == 0 || i == m - 1 { 0.5 * h } else { h }).collect();
                (axis.clone(), 1, boundary, volumes)
            }
            GridMode::Radial { dim } => {
                let boundary = (0..m).map(|i| i == m - 1).collect();
                let s = unit_sphere_area(dim);
                let n = dim as i32;
                let volumes = (0..m)
                    .map(|i| {
                        let lo = if i == 0 { 0.0 } else { axis[i] - 0.5 * h };
                        let hi = if i == m - 1 { extent } else { axis[i] + 0.5 * h };
                        s * (hi.powi(n) - lo.powi(n)) / dim as f64
                    })
                    .collect();
                (axis.clone(), 1, boundary, volumes)
            }
            GridMode::Tensor2d => {
                let mut coords = Vec::with_capacity(2 * m * m);
                let mut boundary = Vec::with_capacity(m * m);
                let mut volumes = Vec::with_capacity(m * m);
                let cell = |i: usize| if i == 0 || i == m - 1 { 0.5 * h } else { h };
                for j in 0..m {
                    for i in 0..m {
                        coords.push(axis[i]);
                        coords.push(axis[j]);
                        boundary.push(i == 0 || j == 0 || i == m - 1 || j == m - 1);
                        volumes.push(cell(i) * cell(j));
                    }
                }
                (coords, 2, boundary, volumes)
            }
        };
        Ok(Self { mode, extent, resolution, h, axis, coords, stride, boundary, volumes })
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// Nodes per axis.
    pub fn axis_len(&self) -> usize {
        self.axis.len()
    }

    pub fn len(&self) -> usize {
        self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty()
    }

    /// Spatial dimension of the continuous domain.
    pub fn dimension(&self) -> usize {
        match self.mode {
            GridMode::Interval => 1,
            GridMode::Radial { dim } => dim,
            GridMode::Tensor2d => 2,
        }
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.stride..(i + 1) * self.stride]
    }

    /// Euclidean distance of node `i` from the origin.
    pub fn radius(&self, i: usize) -> f64 {
        self.point(i).iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.iter().filter(|&&b| b).count()
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Index of node `(i, j)` on a tensor grid.
    pub fn index2(&self, i: usize, j: usize) -> usize {
        j * self.axis.len() + i
    }

    /// Matrix half-bandwidth of nearest-neighbour couplings in node ordering.
    pub fn half_bandwidth(&self) -> usize {
        match self.mode {
            GridMode::Tensor2d => 2 * self.axis.len() + 1,
            _ => 1,
        }
    }

    /// Weight evaluated at every node.
    pub fn nodal_weight(&self, weight: &WeightSpec) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| weight.eval(self.point(i))).collect()
    }

    fn csv_header(&self) -> &'static str {
        match self.mode {
            GridMode::Interval => "x,value",
            GridMode::Radial { .. } => "r,value",
            GridMode::Tensor2d => "x,y,value",
        }
    }

    pub fn same_layout(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.mode == other.mode && self.resolution == other.resolution && self.extent == other.extent)
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("field has {} values but grid has {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![0.0; n] }
    }

    /// Samples `f` at interior nodes; Dirichlet nodes are set to zero.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| if grid.is_boundary(i) { 0.0 } else { f(grid.point(i)) }).collect();
        Self { grid, values }
    }

    /// Samples `f` at every node, boundary included.
    pub fn sample(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), values)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// True when every Dirichlet node carries zero.
    pub fn satisfies_dirichlet(&self) -> bool {
        self.values.iter().zip(self.grid.boundary_mask()).all(|(&v, &b)| !b || v == 0.0)
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_layout(&other.grid) {
            Ok(())
        } else {
            Err(Error::Shape("fields live on different grids".into()))
        }
    }

    /// CSV with one row per node: coordinates followed by the value.
    /// `preamble` lines are written as `#` comments.
    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::new();
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str(self.grid.csv_header());
        out.push('\n');
        for i in 0..self.grid.len() {
            for c in self.grid.point(i) {
                let _ = write!(out, "{c:e},");
            }
            let _ = writeln!(out, "{:e}", self.values[i]);
        }
        out
    }

    /// Reads a field written by [`Field::to_csv`] back onto `grid`, checking
    /// that the coordinates match node by node.
    pub fn from_csv(grid: Arc<Grid>, text: &str) -> Result<Self> {
        let table = FieldTable::parse(text)?;
        let stride = grid.point(0).len();
        if table.columns != stride + 1 {
            return Err(Error::Shape(format!("field CSV has {} columns, grid needs {}", table.columns, stride + 1)));
        }
        if table.rows() != grid.len() {
            return Err(Error::Shape(format!("field CSV has {} rows, grid has {} nodes", table.rows(), grid.len())));
        }
        let tol = 1e-9 * grid.extent();
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let row = table.row(i);
            for (a, b) in row[..stride].iter().zip(grid.point(i)) {
                if (a - b).abs() > tol {
                    return Err(Error::Shape(format!("node {i} coordinate {a} does not match grid {b}")));
                }
            }
            values.push(row[stride]);
        }
        Field::new(grid, values)
    }
}

/// Untyped numeric table decoded from a field CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable {
    pub columns: usize,
    pub data: Vec<f64>,
}

impl FieldTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let columns = reader.headers()?.len();
        if !(2..=3).contains(&columns) {
            return Err(Error::Parse { line: 1, msg: format!("expected 2 or 3 columns, found {columns}") });
        }
        let mut data = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            for f in record.iter() {
                let v: f64 = f.parse().map_err(|e| Error::Parse { line, msg: format!("invalid number {f:?}: {e}") })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, msg: format!("non-finite entry {f:?}") });
                }
                data.push(v);
            }
        }
        Ok(Self { columns, data })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.columns
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.columns..(i + 1) * self.columns]
    }
}

/// `∫ ω u dx` by lumped (dual-cell) quadrature; the trapezoid rule on
/// interval and tensor grids, the exact shell measure on radial grids.
pub fn integrate(field: &Field, weight: &WeightSpec) -> Result<f64> {
    if !field.is_finite() {
        return Err(Error::NonFinite("field contains NaN or infinite values".into()));
    }
    let grid = field.grid();
    let mut sum = 0.0;
    for (i, (&u, &vol)) in field.values().iter().zip(grid.volumes()).enumerate() {
        if u != 0.0 {
            sum += vol * weight.eval(grid.point(i))? * u;
        }
    }
    Ok(sum)
}

/// Nodal gradient: centred differences inside, one-sided at the ends of
/// each axis, and zero slope at the radial symmetry node.
pub fn nodal_gradient(field: &Field) -> Vec<[f64; 2]> {
    let grid = field.grid();
    let u = field.values();
    let h = grid.h();
    let m = grid.axis_len();
    let d1 = |k: usize, stride: usize, idx: usize| -> f64 {
        if k == 0 {
            (u[idx + stride] - u[idx]) / h
        } else if k == m - 1 {
            (u[idx] - u[idx - stride]) / h
        } else {
            (u[idx + stride] - u[idx - stride]) / (2.0 * h)
        }
    };
    match grid.mode() {
        GridMode::Interval => (0..m).map(|i| [d1(i, 1, i), 0.0]).collect(),
        GridMode::Radial { .. } => (0..m).map(|i| if i == 0 { [0.0, 0.0] } else { [d1(i, 1, i), 0.0] }).collect(),
        GridMode::Tensor2d => {
            let mut g = Vec::with_capacity(grid.len());
            for j in 0..m {
                for i in 0..m {
                    let idx = grid.index2(i, j);
                    g.push([d1(i, 1, idx), d1(j, m, idx)]);
                }
            }
            g
        }
    }
}

/// Discrete `(∫ ω (|u|^p + |∇u|^p) dx)^{1/p}`.
pub fn sobolev_norm(field: &Field, weight: &WeightSpec, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("Sobolev exponent must exceed 1, got {p}")));
    }
    if !field.is_finite() {
        return Err(Error::NonFinite("field contains NaN or infinite values".into()));
    }
    let grid = field.grid();
    let grad = nodal_gradient(field);
    let mut sum = 0.0;
    for (i, (&u, g)) in field.values().iter().zip(&grad).enumerate() {
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let integrand = u.abs().powf(p) + gn.powf(p);
        if integrand != 0.0 {
            sum += grid.volumes()[i] * weight.eval(grid.point(i))? * integrand;
        }
    }
    Ok(sum.powf(1.0 / p))
}
