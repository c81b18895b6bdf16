//! Uniform node-centered Cartesian grid, per-species field storage and the
//! ghost-point Neumann closure.
//!
//! Nodes sit at `x_i = i*dx`, `y_j = j*dy` for `i in 0..nx`, `j in 0..ny`,
//! with `dx = lx/(nx-1)`. Values are stored row-major with `j` as the slow
//! index, so node `(i, j)` lives at `j*nx + i`. The single ghost layer
//! mirrors the adjacent boundary node: `u[-1] = u[0]` and `u[n] = u[n-1]`.

use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::ParameterSet;
use crate::stepper::StepReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

impl GridSpec {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        Ok(Self {
            lx,
            ly,
            nx,
            ny,
            dx: lx / (nx - 1) as f64,
            dy: ly / (ny - 1) as f64,
        })
    }

    /// `[0,1]^2` with `n` nodes per axis.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(1.0, 1.0, n, n)
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.dy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Weight of a single node in [`integrate`].
    pub fn node_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Total quadrature area, `nx*ny*dx*dy`. Exceeds `lx*ly` by the
    /// half-cell border, e.g. `1.01^2` on the 101x101 unit square.
    pub fn quadrature_area(&self) -> f64 {
        self.len() as f64 * self.node_area()
    }

    /// Resolve a possibly-ghost index pair to the stored node it mirrors.
    pub fn resolve(&self, i: isize, j: isize) -> Result<(usize, usize)> {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        if i < -1 || i > nx || j < -1 || j > ny {
            return Err(Error::IndexOutOfRange {
                i,
                j,
                nx: self.nx,
                ny: self.ny,
            });
        }
        Ok((i.clamp(0, nx - 1) as usize, j.clamp(0, ny - 1) as usize))
    }
}

/// Which unknown a [`Field`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    Normal,
    Tumor,
    Immune,
    Drug,
}

impl Species {
    pub const ALL: [Species; 4] = [Species::Normal, Species::Tumor, Species::Immune, Species::Drug];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Species::Normal => "N",
            Species::Tumor => "T",
            Species::Immune => "I",
            Species::Drug => "U",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    species: Species,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec, species: Species) -> Self {
        Self::constant(grid, species, 0.0)
    }

    pub fn constant(grid: GridSpec, species: Species, c: f64) -> Self {
        Self {
            grid,
            species,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, species: Species, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nx(),
                grid.ny()
            )));
        }
        Ok(Self {
            grid,
            species,
            values,
        })
    }

    /// Sample `f(x, y)` at every node.
    pub fn from_fn(grid: GridSpec, species: Species, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        Self {
            grid,
            species,
            values,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn species(&self) -> Species {
        self.species
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

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.index(i, j);
        self.values[k] = v;
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `a*self + b*other`, same grid and species as `self`.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, w)| a * u + b * w)
            .collect();
        Field {
            grid: self.grid,
            species: self.species,
            values,
        }
    }
}

/// Value at `(i, j)` where either index may sit on the ghost layer.
pub fn ghost_value(field: &Field, i: isize, j: isize) -> Result<f64> {
    let (i, j) = field.grid.resolve(i, j)?;
    Ok(field.at(i, j))
}

/// `sum(u_ij) * dx * dy` with uniform node weights.
pub fn integrate(field: &Field) -> f64 {
    pairwise_sum(&field.values) * field.grid.node_area()
}

/// Pairwise (cascade) summation with a fixed split, so the result depends
/// only on the input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// The four fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub t: f64,
    pub fields: [Field; 4],
    /// Diagnostics of the step that produced this state; `None` for initial data.
    pub report: Option<StepReport>,
}

impl StateSnapshot {
    pub fn zeros(grid: GridSpec, t: f64) -> Self {
        Self {
            t,
            fields: Species::ALL.map(|s| Field::zeros(grid, s)),
            report: None,
        }
    }

    /// Spatially uniform state `(N, T, I, U)`.
    pub fn uniform(grid: GridSpec, t: f64, values: [f64; 4]) -> Self {
        Self {
            t,
            fields: Species::ALL.map(|s| Field::constant(grid, s, values[s.index()])),
            report: None,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.fields[0].grid()
    }

    pub fn field(&self, s: Species) -> &Field {
        &self.fields[s.index()]
    }

    pub fn field_mut(&mut self, s: Species) -> &mut Field {
        &mut self.fields[s.index()]
    }

    /// Node values `(N, T, I, U)` at flat index `k`.
    #[inline]
    pub fn node(&self, k: usize) -> [f64; 4] {
        [
            self.fields[0].values[k],
            self.fields[1].values[k],
            self.fields[2].values[k],
            self.fields[3].values[k],
        ]
    }

    /// Write the snapshot as `x,y,N,T,I,U`, one row per node in storage
    /// order, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,N,T,I,U")?;
        let g = self.grid();
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let k = g.index(i, j);
                let [n, t, im, u] = self.node(k);
                writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    g.x(i),
                    g.y(j),
                    n,
                    t,
                    im,
                    u
                )?;
            }
        }
        Ok(())
    }
}

/// Tumor foci of the initial condition and their common support radius (cm).
pub const TUMOR_FOCI: [(f64, f64); 3] = [(0.35, 0.35), (0.65, 0.35), (0.50, 0.60)];
pub const FOCUS_RADIUS: f64 = 0.25;
/// Center of the immune-cell ring profile.
pub const IMMUNE_CENTER: (f64, f64) = (0.50, 0.43);

/// Sum of the three raised-cosine bumps at `(x, y)`.
pub fn tumor_bump(x: f64, y: f64) -> f64 {
    TUMOR_FOCI
        .iter()
        .map(|&(cx, cy)| {
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            if r <= FOCUS_RADIUS {
                0.5 * (1.0 + (PI * r / FOCUS_RADIUS).cos())
            } else {
                0.0
            }
        })
        .sum()
}

pub fn initial_tumor(x: f64, y: f64, k_t: f64) -> f64 {
    (0.05 * k_t + 0.20 * k_t * tumor_bump(x, y)).min(0.25 * k_t)
}

pub fn initial_normal(x: f64, y: f64, k_n: f64) -> f64 {
    (0.65 * k_n * (1.0 - 0.10 * tumor_bump(x, y))).min(0.75 * k_n)
}

pub fn initial_immune(x: f64, y: f64) -> f64 {
    let r = ((x - IMMUNE_CENTER.0).powi(2) + (y - IMMUNE_CENTER.1).powi(2)).sqrt();
    let sech = 1.0 / r.cosh();
    (3.16e5 * (0.375 - 0.235 * sech * sech)).max(0.0)
}

/// Three-focus tumor, complementary normal tissue, immune ring, no drug.
pub fn build_initial_state(grid: GridSpec, params: &ParameterSet) -> StateSnapshot {
    let k_t = params.tumor_capacity();
    let k_n = params.normal_capacity();
    StateSnapshot {
        t: 0.0,
        fields: [
            Field::from_fn(grid, Species::Normal, |x, y| initial_normal(x, y, k_n)),
            Field::from_fn(grid, Species::Tumor, |x, y| initial_tumor(x, y, k_t)),
            Field::from_fn(grid, Species::Immune, initial_immune),
            Field::zeros(grid, Species::Drug),
        ],
        report: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> GridSpec {
        GridSpec::unit_square(101).unwrap()
    }

    fn ramp(grid: GridSpec) -> Field {
        Field::from_fn(grid, Species::Tumor, |x, y| 1.0 + 3.0 * x + 7.0 * y * y)
    }

    #[test]
    fn grid_rejects_too_few_nodes() {
        assert!(GridSpec::new(1.0, 1.0, 2, 5).is_err());
        assert!(GridSpec::new(0.0, 1.0, 5, 5).is_err());
    }

    #[test]
    fn node_coordinates() {
        let g = default_grid();
        assert_eq!(g.dx(), 0.01);
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(35), 35.0 * 0.01);
        assert_eq!(g.y(100), 1.0);
    }

    #[test]
    fn ghost_mirrors_boundary() {
        let g = default_grid();
        let f = ramp(g);
        assert_eq!(ghost_value(&f, -1, 5).unwrap(), f.at(0, 5));
        assert_eq!(ghost_value(&f, 3, 3).unwrap(), f.at(3, 3));
        assert_eq!(ghost_value(&f, 101, 0).unwrap(), f.at(100, 0));
        assert_eq!(ghost_value(&f, 7, -1).unwrap(), f.at(7, 0));
        assert_eq!(ghost_value(&f, 7, 101).unwrap(), f.at(7, 100));
        for j in 0..101isize {
            let d = ghost_value(&f, 0, j).unwrap() - ghost_value(&f, -1, j).unwrap();
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn ghost_out_of_range() {
        let f = ramp(default_grid());
        assert!(matches!(ghost_value(&f, -2, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(ghost_value(&f, 0, 102), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn integrate_constant_includes_half_cell_border() {
        let g = default_grid();
        let f = Field::constant(g, Species::Normal, 2.5);
        let expected = 2.5 * 1.01 * 1.01;
        assert!((integrate(&f) - expected).abs() < 1e-13);
        assert_eq!(integrate(&Field::zeros(g, Species::Normal)), 0.0);
        let mut spike = Field::zeros(g, Species::Normal);
        spike.set(40, 60, 1.0);
        assert!((integrate(&spike) - g.node_area()).abs() < 1e-18);
    }

    #[test]
    fn integrate_is_linear() {
        let g = default_grid();
        let f = ramp(g);
        let h = Field::from_fn(g, Species::Tumor, |x, y| (3.0 * x).sin() * y);
        let combo = f.lin_comb(2.0, &h, -0.5);
        let lhs = integrate(&combo);
        let rhs = 2.0 * integrate(&f) - 0.5 * integrate(&h);
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn initial_state_values_at_reference_points() {
        let params = ParameterSet::default();
        let k_t = params.tumor_capacity();
        let k_n = params.normal_capacity();
        assert!((k_t - 5e8).abs() < 1e-6);
        let t0 = initial_tumor(0.35, 0.35, k_t);
        assert!((t0 - 1.25e8).abs() < 1e-3);
        let n0 = initial_normal(0.35, 0.35, k_n);
        assert!((n0 - 4.68e8).abs() < 1e-3);
        let i0 = initial_immune(0.50, 0.43);
        assert!((i0 - 4.424e4).abs() < 1e-6);
    }

    #[test]
    fn initial_state_respects_caps() {
        let params = ParameterSet::default();
        let s = build_initial_state(default_grid(), &params);
        let k_t = params.tumor_capacity();
        let k_n = params.normal_capacity();
        for f in &s.fields {
            assert!(f.min() >= 0.0);
            assert!(f.is_finite());
        }
        assert!(s.field(Species::Tumor).max() <= 0.25 * k_t);
        assert!(s.field(Species::Normal).max() <= 0.75 * k_n);
        assert_eq!(s.field(Species::Drug).norm_inf(), 0.0);
    }

    #[test]
    fn snapshot_csv_layout() {
        let g = GridSpec::unit_square(3).unwrap();
        let s = StateSnapshot::uniform(g, 0.0, [1.0, 2.0, 3.0, 0.1]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "x,y,N,T,I,U");
        assert_eq!(lines.len(), 10);
        assert_eq!(
            lines[2],
            "5.0000000000000000e-1,0.0000000000000000e0,1.0000000000000000e0,2.0000000000000000e0,3.0000000000000000e0,1.0000000000000001e-1"
        );
    }
}
