//! Five-point diffusion, first-order upwind advection and the matrix-free
//! Crank-Nicolson left-hand side built from them.
//!
//! Every sweep reads one ghost layer through the mirror closure, which for
//! a node index `i` means `i-1 -> max(i-1, 0)` and `i+1 -> min(i+1, n-1)`.

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// Constant advection velocity (cm/day). Both components must be `>= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdvectionVector {
    hx: f64,
    hy: f64,
}

impl AdvectionVector {
    pub const ZERO: AdvectionVector = AdvectionVector { hx: 0.0, hy: 0.0 };

    pub fn new(hx: f64, hy: f64) -> Result<Self> {
        for (axis, value) in [('x', hx), ('y', hy)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::UnsupportedDirection { axis, value });
            }
        }
        Ok(Self { hx, hy })
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn is_zero(&self) -> bool {
        self.hx == 0.0 && self.hy == 0.0
    }
}

/// `D * Lap_h u`.
pub fn apply_laplacian(field: &Field, diffusion: f64) -> Result<Field> {
    if !(diffusion >= 0.0) {
        return Err(Error::param("D", format!("diffusion must be >= 0, got {diffusion}")));
    }
    let mut out = Field::zeros(*field.grid(), field.species());
    laplacian_into(field.grid(), diffusion, field.values(), out.values_mut());
    Ok(out)
}

/// `A_h u = hx/dx (u_ij - u_{i-1,j}) + hy/dy (u_ij - u_{i,j-1})`.
pub fn apply_upwind_advection(field: &Field, h: AdvectionVector) -> Field {
    let mut out = Field::zeros(*field.grid(), field.species());
    upwind_into(field.grid(), h, field.values(), out.values_mut());
    out
}

/// `|hx| dt/dx + |hy| dt/dy`.
pub fn courant_number(h: AdvectionVector, grid: &GridSpec, dt: f64) -> f64 {
    h.hx.abs() * dt / grid.dx() + h.hy.abs() * dt / grid.dy()
}

pub fn laplacian_into(grid: &GridSpec, diffusion: f64, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let cx = diffusion / (grid.dx() * grid.dx());
    let cy = diffusion / (grid.dy() * grid.dy());
    for j in 0..ny {
        let row = j * nx;
        let down = if j == 0 { row } else { row - nx };
        let up = if j == ny - 1 { row } else { row + nx };
        for i in 0..nx {
            let im = if i == 0 { 0 } else { i - 1 };
            let ip = if i == nx - 1 { i } else { i + 1 };
            let c = u[row + i];
            out[row + i] = cx * (u[row + ip] - 2.0 * c + u[row + im])
                + cy * (u[up + i] - 2.0 * c + u[down + i]);
        }
    }
}

pub fn upwind_into(grid: &GridSpec, h: AdvectionVector, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let ax = h.hx / grid.dx();
    let ay = h.hy / grid.dy();
    for j in 0..ny {
        let row = j * nx;
        let down = if j == 0 { row } else { row - nx };
        for i in 0..nx {
            let im = if i == 0 { 0 } else { i - 1 };
            let c = u[row + i];
            out[row + i] = ax * (c - u[row + im]) + ay * (c - u[down + i]);
        }
    }
}

/// Linear diffusion-advection operator `L = D Lap_h - A_h` of one species,
/// and the CN matrices `I -/+ (dt/2) L` built from it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportOperator {
    pub grid: GridSpec,
    pub diffusion: f64,
    pub advection: AdvectionVector,
}

impl TransportOperator {
    pub fn new(grid: GridSpec, diffusion: f64, advection: AdvectionVector) -> Self {
        Self {
            grid,
            diffusion,
            advection,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.advection.is_zero()
    }

    /// `out = scale*L u + u`. With `scale = -dt/2` this is the CN left-hand
    /// side, with `+dt/2` the explicit half of the right-hand side.
    pub fn apply_shifted(&self, scale: f64, u: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let cx = scale * self.diffusion / (g.dx() * g.dx());
        let cy = scale * self.diffusion / (g.dy() * g.dy());
        let ax = scale * self.advection.hx / g.dx();
        let ay = scale * self.advection.hy / g.dy();
        for j in 0..ny {
            let row = j * nx;
            let down = if j == 0 { row } else { row - nx };
            let up = if j == ny - 1 { row } else { row + nx };
            for i in 0..nx {
                let im = if i == 0 { 0 } else { i - 1 };
                let ip = if i == nx - 1 { i } else { i + 1 };
                let c = u[row + i];
                let w = u[row + im];
                let s = u[down + i];
                out[row + i] = c
                    + cx * (u[row + ip] - 2.0 * c + w)
                    + cy * (u[up + i] - 2.0 * c + s)
                    - ax * (c - w)
                    - ay * (c - s);
            }
        }
    }
}

/// `(I - dt/2 L) u` for `L = D Lap_h - A_h`.
pub fn cn_system_apply(field: &Field, diffusion: f64, h: AdvectionVector, dt: f64) -> Field {
    let op = TransportOperator::new(*field.grid(), diffusion, h);
    let mut out = Field::zeros(*field.grid(), field.species());
    op.apply_shifted(-0.5 * dt, field.values(), out.values_mut());
    out
}
