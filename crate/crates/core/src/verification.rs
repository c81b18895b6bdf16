//! Manufactured-solution convergence studies, mass audits and a dense
//! reference implementation of one step for tiny grids.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{build_initial_state, integrate, Field, GridSpec, Species, StateSnapshot};
use crate::model::{DosingSchedule, ParameterSet, ReactionSource, Scheme};
use crate::scenario::make_case;
use crate::stencil::{AdvectionVector, TransportOperator};
use crate::stepper::{advance, cnbe_step, solve_cn_linear, StepperConfig};

pub const SPATIAL_ORDER_MIN: f64 = 1.9;
pub const CNBE_ORDER_MIN: f64 = 0.9;
pub const CN_ORDER_MIN: f64 = 1.9;
pub const ORACLE_RTOL: f64 = 1e-8;
pub const DIFFUSION_DRIFT_MAX: f64 = 1e-8;
pub const FLUX_MATCH_RTOL: f64 = 1e-6;
pub const DECAY_RTOL: f64 = 1e-12;

/// Tighter solver settings used by the studies so that iteration error
/// stays far below the quantity being measured.
pub fn study_stepper(dt: f64) -> StepperConfig {
    StepperConfig {
        dt,
        picard_tol: 1e-13,
        krylov_tol: 1e-13,
        ..StepperConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub label: String,
    /// Mesh width or time step per level, coarsest first.
    pub resolutions: Vec<f64>,
    pub linf: Vec<f64>,
    pub l2: Vec<f64>,
    /// Successive-level orders from the L2 errors.
    pub orders: Vec<Option<f64>>,
    pub orders_linf: Vec<Option<f64>>,
}

fn pair_orders(res: &[f64], err: &[f64]) -> Vec<Option<f64>> {
    res.windows(2)
        .zip(err.windows(2))
        .map(|(h, e)| (e[0] > 0.0 && e[1] > 0.0).then(|| (e[0] / e[1]).ln() / (h[0] / h[1]).ln()))
        .collect()
}

impl ConvergenceReport {
    pub fn new(label: &str, resolutions: Vec<f64>, linf: Vec<f64>, l2: Vec<f64>) -> Result<Self> {
        if resolutions.len() < 3 || linf.len() != resolutions.len() || l2.len() != resolutions.len() {
            return Err(Error::InvalidStudy(format!(
                "{label}: need at least 3 levels with one error per level"
            )));
        }
        Ok(Self {
            label: label.to_string(),
            orders: pair_orders(&resolutions, &l2),
            orders_linf: pair_orders(&resolutions, &linf),
            resolutions,
            linf,
            l2,
        })
    }

    /// Order between the two finest levels; `None` when an error vanishes.
    pub fn observed_order(&self) -> Option<f64> {
        *self.orders.last().expect("at least two pairs")
    }

    pub fn passes(&self, min_order: f64) -> bool {
        self.observed_order().is_some_and(|p| p >= min_order)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "study,resolution,linf_error,l2_error,order_linf,order_l2")?;
        let fmt = |o: Option<f64>| o.map_or(String::new(), |v| format!("{v:.6}"));
        for k in 0..self.resolutions.len() {
            let (ol, o2) = if k == 0 {
                (None, None)
            } else {
                (self.orders_linf[k - 1], self.orders[k - 1])
            };
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{},{}",
                self.label,
                self.resolutions[k],
                self.linf[k],
                self.l2[k],
                fmt(ol),
                fmt(o2)
            )?;
        }
        Ok(())
    }
}

/// Exact solutions for the single-field diffusion study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Manufactured {
    /// `cos(pi x) cos(pi y) exp(-t)` on the unit square.
    CosineDecay,
    Constant(f64),
}

impl Manufactured {
    pub fn value(&self, x: f64, y: f64, t: f64) -> f64 {
        match *self {
            Manufactured::CosineDecay => (PI * x).cos() * (PI * y).cos() * (-t).exp(),
            Manufactured::Constant(c) => c,
        }
    }

    /// `u_t - D Lap u`.
    pub fn forcing(&self, x: f64, y: f64, t: f64, diffusion: f64) -> f64 {
        match *self {
            Manufactured::CosineDecay => (2.0 * diffusion * PI * PI - 1.0) * self.value(x, y, t),
            Manufactured::Constant(_) => 0.0,
        }
    }
}

struct ForcingSource {
    exact: Manufactured,
    diffusion: f64,
}

impl ReactionSource for ForcingSource {
    fn active(&self) -> [bool; 4] {
        [true, false, false, false]
    }

    fn eval(&self, t: f64, x: f64, y: f64, _node: [f64; 4]) -> [f64; 4] {
        [self.exact.forcing(x, y, t, self.diffusion), 0.0, 0.0, 0.0]
    }
}

/// Reactions switched off for the species in `active`.
struct NoReactions([bool; 4]);

impl ReactionSource for NoReactions {
    fn active(&self) -> [bool; 4] {
        self.0
    }

    fn eval(&self, _t: f64, _x: f64, _y: f64, _node: [f64; 4]) -> [f64; 4] {
        [0.0; 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialStudy {
    pub exact: Manufactured,
    pub diffusion: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for SpatialStudy {
    fn default() -> Self {
        Self {
            exact: Manufactured::CosineDecay,
            diffusion: 0.1,
            t_end: 0.1,
            dt: 1e-4,
        }
    }
}

fn error_norms(field: &Field, exact: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let g = *field.grid();
    let mut err = vec![0.0; g.len()];
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let k = g.index(i, j);
            err[k] = field.values()[k] - exact(g.x(i), g.y(j));
        }
    }
    let linf = err.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let sq = Field::from_values(g, field.species(), err.iter().map(|e| e * e).collect()).expect("same grid");
    (linf, integrate(&sq).sqrt())
}

/// Single-field diffusion with manufactured forcing on nested unit-square
/// grids. Consecutive levels must halve the mesh width.
pub fn mms_spatial_study(levels: &[usize], study: &SpatialStudy) -> Result<ConvergenceReport> {
    if levels.len() < 3 {
        return Err(Error::InvalidStudy("the spatial study needs at least 3 grids".into()));
    }
    if levels.windows(2).any(|w| w[1] < 3 || w[1] - 1 != 2 * (w[0] - 1)) {
        return Err(Error::InvalidStudy(format!(
            "grid levels {levels:?} do not nest (each level must have 2(n-1)+1 nodes)"
        )));
    }
    let source = ForcingSource {
        exact: study.exact,
        diffusion: study.diffusion,
    };
    let cfg = study_stepper(study.dt);
    let n_steps = (study.t_end / study.dt).round() as usize;
    let (mut res, mut linf, mut l2) = (Vec::new(), Vec::new(), Vec::new());
    for &n in levels {
        let grid = GridSpec::unit_square(n)?;
        let transport = [TransportOperator::new(grid, study.diffusion, AdvectionVector::ZERO); 4];
        let mut state = StateSnapshot::zeros(grid, 0.0);
        *state.field_mut(Species::Normal) = Field::from_fn(grid, Species::Normal, |x, y| study.exact.value(x, y, 0.0));
        for step in 0..n_steps {
            state = advance(&state, (step + 1) as f64 * study.dt, &source, &transport, &cfg)?;
        }
        let t = n_steps as f64 * study.dt;
        let (a, b) = error_norms(state.field(Species::Normal), |x, y| study.exact.value(x, y, t));
        res.push(grid.dx());
        linf.push(a);
        l2.push(b);
    }
    ConvergenceReport::new("spatial", res, linf, l2)
}

fn check_halving(dts: &[f64]) -> Result<()> {
    if dts.len() < 3 {
        return Err(Error::InvalidStudy("the temporal study needs at least 3 time steps".into()));
    }
    if dts.iter().any(|&d| !(d > 0.0)) || dts.windows(2).any(|w| ((w[0] / w[1]) - 2.0).abs() > 1e-12) {
        return Err(Error::InvalidStudy(format!("time steps {dts:?} are not a halving sequence")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalStudy {
    /// Full CNBE on a spatially uniform state against a fine-step reference.
    pub cnbe: ConvergenceReport,
    /// Crank-Nicolson diffusion of one discrete eigenmode against its
    /// closed-form decay.
    pub cn_linear: ConvergenceReport,
}

/// State used by the uniform-state CNBE study.
pub const TEMPORAL_STATE: [f64; 4] = [6.0e8, 1.0e8, 1.0e5, 1.0];
pub const TEMPORAL_HORIZON: f64 = 1.0;

fn uniform_run(dt: f64, params: &ParameterSet) -> Result<StateSnapshot> {
    let grid = GridSpec::unit_square(3)?;
    let mut state = StateSnapshot::uniform(grid, 0.0, TEMPORAL_STATE);
    let cfg = study_stepper(dt);
    let n = (TEMPORAL_HORIZON / dt).round() as usize;
    for step in 0..n {
        state = cnbe_step(&state, step as f64 * dt, params, None, Scheme::Ntiu, &cfg)?.0;
    }
    Ok(state)
}

/// Relative error of `a` against `reference`, worst species.
fn relative_errors(a: &StateSnapshot, reference: &StateSnapshot) -> (f64, f64) {
    let (mut linf, mut l2) = (0.0f64, 0.0f64);
    for s in Species::ALL {
        let r = reference.field(s);
        let (r_inf, r_2) = error_norms(r, |_, _| 0.0);
        let (d_inf, d_2) = error_norms(&a.field(s).lin_comb(1.0, r, -1.0), |_, _| 0.0);
        if r_inf > 0.0 {
            linf = linf.max(d_inf / r_inf);
            l2 = l2.max(d_2 / r_2);
        }
    }
    (linf, l2)
}

pub fn mms_temporal_study(dts: &[f64]) -> Result<TemporalStudy> {
    check_halving(dts)?;
    let params = ParameterSet::default();
    let finest = dts[dts.len() - 1];
    let reference = uniform_run(finest / 1024.0, &params)?;
    let (mut linf, mut l2) = (Vec::new(), Vec::new());
    for &dt in dts {
        let (a, b) = relative_errors(&uniform_run(dt, &params)?, &reference);
        linf.push(a);
        l2.push(b);
    }
    let cnbe = ConvergenceReport::new("temporal_cnbe", dts.to_vec(), linf, l2)?;

    // Discrete eigenmode of the mirrored Laplacian, decaying at exp(-lambda t).
    let n = 21;
    let diffusion = 0.1;
    let grid = GridSpec::unit_square(n)?;
    let mode = |i: f64| (PI * (i + 0.5) / n as f64).cos();
    let u0 = Field::from_fn(grid, Species::Normal, |x, y| mode(x / grid.dx()) * mode(y / grid.dy()));
    let lambda = diffusion * (2.0 - 2.0 * (PI / n as f64).cos()) * (1.0 / (grid.dx() * grid.dx()) + 1.0 / (grid.dy() * grid.dy()));
    let exact = u0.lin_comb((-lambda * TEMPORAL_HORIZON).exp(), &u0, 0.0);
    let (mut linf, mut l2) = (Vec::new(), Vec::new());
    for &dt in dts {
        let op = TransportOperator::new(grid, diffusion, AdvectionVector::ZERO);
        let cfg = study_stepper(dt);
        let mut u = u0.clone();
        let mut rhs = Field::zeros(grid, Species::Normal);
        for _ in 0..(TEMPORAL_HORIZON / dt).round() as usize {
            op.apply_shifted(0.5 * dt, u.values(), rhs.values_mut());
            u = solve_cn_linear(&rhs, diffusion, AdvectionVector::ZERO, dt, &cfg)?.0;
        }
        let diff = u.lin_comb(1.0, &exact, -1.0);
        let (d_inf, d_2) = error_norms(&diff, |_, _| 0.0);
        let (r_inf, r_2) = error_norms(&exact, |_, _| 0.0);
        linf.push(d_inf / r_inf);
        l2.push(d_2 / r_2);
    }
    let cn_linear = ConvergenceReport::new("temporal_cn", dts.to_vec(), linf, l2)?;
    Ok(TemporalStudy { cnbe, cn_linear })
}

/// Dense reference for one step on a tiny grid. Shares no stencil or
/// reaction code with the production stepper.
pub mod oracle {
    use super::*;

    /// 1-D second difference with mirrored end nodes, unscaled.
    fn second_difference(n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let left = if i == 0 { 0 } else { i - 1 };
            let right = if i + 1 == n { n - 1 } else { i + 1 };
            m[(i, left)] += 1.0;
            m[(i, right)] += 1.0;
            m[(i, i)] -= 2.0;
        }
        m
    }

    /// 1-D backward difference with the mirrored inflow node, unscaled.
    fn backward_difference(n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        for i in 1..n {
            m[(i, i)] = 1.0;
            m[(i, i - 1)] = -1.0;
        }
        m
    }

    /// `D (Dxx + Dyy) - hx Dx - hy Dy` on node index `j * nx + i`.
    pub fn transport_matrix(grid: &GridSpec, diffusion: f64, hx: f64, hy: f64) -> DMatrix<f64> {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (dx, dy) = (grid.dx(), grid.dy());
        let ix = DMatrix::<f64>::identity(nx, nx);
        let iy = DMatrix::<f64>::identity(ny, ny);
        let lxx = iy.kronecker(&(second_difference(nx) / (dx * dx)));
        let lyy = (second_difference(ny) / (dy * dy)).kronecker(&ix);
        let ax = iy.kronecker(&(backward_difference(nx) / dx));
        let ay = (backward_difference(ny) / dy).kronecker(&ix);
        (lxx + lyy) * diffusion - ax * hx - ay * hy
    }

    fn pulse_rate(schedule: Option<&DosingSchedule>, t: f64) -> f64 {
        let Some(s) = schedule else { return 0.0 };
        let on = (0..s.n_pulses()).any(|n| {
            let start = n as f64 * s.period();
            start <= t && t < start + s.tau()
        });
        if on {
            s.v0()
        } else {
            0.0
        }
    }

    fn gate(xi: f64, delta: f64) -> f64 {
        if xi <= 0.0 {
            0.0
        } else if xi >= delta {
            1.0
        } else {
            (0.5 * PI * xi / delta).sin().powi(2)
        }
    }

    /// Reaction terms written out from the model equations.
    pub fn source(p: &ParameterSet, v: f64, n: f64, t: f64, i: f64, u: f64) -> [f64; 4] {
        let frac = 1.0 - (-u).exp();
        [
            p.r2 * n * (1.0 - p.b2 * n) * (n - p.a2_allee) / p.a2_allee - p.c4 * n * t - p.a3_kill * frac * n,
            p.r1 * t * (1.0 - p.b1 * t) * (t - p.a1_allee) / p.a1_allee
                - p.c2 * t * i
                - p.c3 * n * t
                - p.a2_kill * frac * t,
            p.s + p.rho * t * i / (p.alpha + t) - p.c1 * t * i - p.k1 * i - p.a1_kill * frac * i,
            v * gate(n - p.a0, p.delta) - p.k2 * u,
        ]
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct OracleStep {
        pub fields: [Vec<f64>; 4],
        pub iterations: usize,
        pub final_change: f64,
    }

    /// Iterate `u = (I - dt/2 L)^-1 [(I + dt/2 L) u^n + dt F(u)]` to a
    /// relative change of `tol`, all four species active.
    pub fn step(
        state: &StateSnapshot,
        t: f64,
        dt: f64,
        p: &ParameterSet,
        schedule: Option<&DosingSchedule>,
        tol: f64,
    ) -> Result<OracleStep> {
        let grid = *state.grid();
        let len = grid.len();
        let v = pulse_rate(schedule, t + dt);
        let eye = DMatrix::<f64>::identity(len, len);
        let mut lhs = Vec::new();
        let mut explicit = Vec::new();
        for s in Species::ALL {
            let k = s.index();
            let (hx, hy) = if s == Species::Drug { (p.h4.hx(), p.h4.hy()) } else { (0.0, 0.0) };
            let l = transport_matrix(&grid, p.diffusion[k], hx, hy);
            let un = DVector::from_column_slice(state.field(s).values());
            explicit.push((&eye + &l * (0.5 * dt)) * un);
            lhs.push((&eye - &l * (0.5 * dt)).lu());
        }
        let mut w: [Vec<f64>; 4] = std::array::from_fn(|k| state.fields[k].values().to_vec());
        for iteration in 1..=500 {
            let f: Vec<[f64; 4]> = (0..len)
                .map(|m| source(p, v, w[0][m], w[1][m], w[2][m], w[3][m]))
                .collect();
            let mut change = 0.0f64;
            let mut next: [Vec<f64>; 4] = Default::default();
            for k in 0..4 {
                let rhs = &explicit[k] + DVector::from_iterator(len, f.iter().map(|r| dt * r[k]));
                let sol = lhs[k]
                    .solve(&rhs)
                    .ok_or(Error::SolverFailure { iterations: iteration, residual: f64::NAN })?;
                let scale = sol.amax().max(1e-300);
                let diff = sol.iter().zip(&w[k]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                change = change.max(diff / scale);
                next[k] = sol.as_slice().to_vec();
            }
            w = next;
            if change <= tol {
                return Ok(OracleStep {
                    fields: w,
                    iterations: iteration,
                    final_change: change,
                });
            }
        }
        Err(Error::PicardFailure {
            iterations: 500,
            residual: f64::NAN,
        })
    }
}

/// Largest per-species `||a - b||_inf / ||b||_inf`.
fn max_relative_discrepancy(a: &StateSnapshot, b: &[Vec<f64>; 4]) -> f64 {
    Species::ALL
        .iter()
        .map(|&s| {
            let x = a.field(s).values();
            let y = &b[s.index()];
            let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let diff = x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            if scale > 0.0 {
                diff / scale
            } else {
                diff
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleReport {
    pub nodes: usize,
    pub discrepancy: f64,
    /// Discrepancy against an oracle whose `c2` is 1% too large.
    pub mutated_discrepancy: f64,
    pub oracle_iterations: usize,
}

impl OracleReport {
    pub fn passes(&self) -> bool {
        self.discrepancy <= ORACLE_RTOL && self.mutated_discrepancy > ORACLE_RTOL
    }
}

/// Random nonnegative state on an `n x n` unit-square grid.
pub fn random_state(n: usize, seed: u64) -> Result<StateSnapshot> {
    let grid = GridSpec::unit_square(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = [(0.0, 8e8), (0.0, 5e8), (1e4, 1e6), (0.0, 3.0)];
    let mut state = StateSnapshot::zeros(grid, 0.0);
    for s in Species::ALL {
        let (lo, hi) = ranges[s.index()];
        for v in state.field_mut(s).values_mut() {
            *v = rng.gen_range(lo..hi);
        }
    }
    Ok(state)
}

/// One production step from `state` at `t0` against the dense oracle.
pub fn oracle_compare(
    state: &StateSnapshot,
    params: &ParameterSet,
    schedule: Option<&DosingSchedule>,
    t0: f64,
) -> Result<OracleReport> {
    let cfg = StepperConfig::default();
    let (next, _) = cnbe_step(state, t0, params, schedule, Scheme::Ntiu, &cfg)?;
    let truth = oracle::step(state, t0, cfg.dt, params, schedule, 1e-13)?;
    let mut mutated = *params;
    mutated.c2 *= 1.01;
    let wrong = oracle::step(state, t0, cfg.dt, &mutated, schedule, 1e-13)?;
    Ok(OracleReport {
        nodes: state.grid().len(),
        discrepancy: max_relative_discrepancy(&next, &truth.fields),
        mutated_discrepancy: max_relative_discrepancy(&next, &wrong.fields),
        oracle_iterations: truth.iterations,
    })
}

/// Oracle comparison on a seeded random state under case-1 dosing, first
/// pulse on.
pub fn small_grid_oracle(n: usize, seed: u64) -> Result<OracleReport> {
    if !(3..=4).contains(&n) {
        return Err(Error::InvalidStudy(format!("oracle grids are 3x3 or 4x4, got {n}x{n}")));
    }
    let state = random_state(n, seed)?;
    let schedule = make_case(1, 2.0)?;
    oracle_compare(&state, &ParameterSet::default(), Some(&schedule), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    pub steps: usize,
    /// `max_t max_k |m_k(t) - m_k(0)| / m_k(0)` with only diffusion acting.
    pub diffusion_drift: f64,
    /// Drug mass change with diffusion and advection.
    pub advection_change: f64,
    /// The same change summed from boundary fluxes.
    pub boundary_flux_change: f64,
}

impl ConservationReport {
    pub fn flux_mismatch(&self) -> f64 {
        let d = (self.advection_change - self.boundary_flux_change).abs();
        if self.boundary_flux_change == 0.0 {
            d
        } else {
            d / self.boundary_flux_change.abs()
        }
    }

    pub fn passes(&self) -> bool {
        self.diffusion_drift <= DIFFUSION_DRIFT_MAX && self.flux_mismatch() <= FLUX_MATCH_RTOL
    }
}

/// Outflow through the far edges minus the mirrored inflow edges, per unit
/// time: `hx dy sum_j (u_last,j - u_0,j) + hy dx sum_i (u_i,last - u_i,0)`.
fn boundary_outflow(u: &Field, h: AdvectionVector) -> f64 {
    let g = u.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut fx = 0.0;
    for j in 0..ny {
        fx += u.at(nx - 1, j) - u.at(0, j);
    }
    let mut fy = 0.0;
    for i in 0..nx {
        fy += u.at(i, ny - 1) - u.at(i, 0);
    }
    h.hx() * g.dy() * fx + h.hy() * g.dx() * fy
}

/// Drug profile for the advection audit; the model's initial drug field is
/// zero and carries no flux.
pub fn audit_drug_profile(x: f64, y: f64) -> f64 {
    1.0 + 0.5 * (x + y)
}

/// Mass bookkeeping with reactions disabled on the standard initial data.
pub fn conservation_audit(grid: GridSpec, params: &ParameterSet, steps: usize, cfg: &StepperConfig) -> Result<ConservationReport> {
    let state0 = build_initial_state(grid, params);
    let diffusion_only: [TransportOperator; 4] =
        std::array::from_fn(|k| TransportOperator::new(grid, params.diffusion[k], AdvectionVector::ZERO));
    let mass0 = Species::ALL.map(|s| integrate(state0.field(s)));
    let all = NoReactions([true; 4]);
    let mut state = state0.clone();
    let mut drift = 0.0f64;
    for step in 0..steps {
        state = advance(&state, (step + 1) as f64 * cfg.dt, &all, &diffusion_only, cfg)?;
        for s in Species::ALL {
            let m0 = mass0[s.index()];
            if m0 != 0.0 {
                drift = drift.max((integrate(state.field(s)) - m0).abs() / m0.abs());
            }
        }
    }

    let mut transport = diffusion_only;
    transport[Species::Drug.index()] = TransportOperator::new(grid, params.diffusion[3], params.h4);
    let drug_only = NoReactions([false, false, false, true]);
    let mut state = StateSnapshot::zeros(grid, 0.0);
    *state.field_mut(Species::Drug) = Field::from_fn(grid, Species::Drug, audit_drug_profile);
    let m0 = integrate(state.field(Species::Drug));
    let mut flux_change = 0.0;
    for step in 0..steps {
        let before = boundary_outflow(state.field(Species::Drug), params.h4);
        state = advance(&state, (step + 1) as f64 * cfg.dt, &drug_only, &transport, cfg)?;
        let after = boundary_outflow(state.field(Species::Drug), params.h4);
        flux_change -= 0.5 * cfg.dt * (before + after);
    }
    Ok(ConservationReport {
        steps,
        diffusion_drift: drift,
        advection_change: integrate(state.field(Species::Drug)) - m0,
        boundary_flux_change: flux_change,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayReport {
    pub steps: usize,
    /// Largest `|U^{n+1}/U^n - 1/(1 + k2 dt)| * (1 + k2 dt)`.
    pub max_deviation: f64,
}

/// Uniform drug field with no dosing against exact Backward Euler decay.
pub fn drug_decay_audit(steps: usize, params: &ParameterSet, cfg: &StepperConfig) -> Result<DecayReport> {
    let grid = GridSpec::unit_square(3)?;
    let mut state = StateSnapshot::uniform(grid, 0.0, [0.0, 0.0, 0.0, 1.0]);
    let factor = 1.0 / (1.0 + params.k2 * cfg.dt);
    let mut worst = 0.0f64;
    for step in 0..steps {
        let next = cnbe_step(&state, step as f64 * cfg.dt, params, None, Scheme::Ntiu, cfg)?.0;
        let before = state.field(Species::Drug).values();
        for (a, b) in next.field(Species::Drug).values().iter().zip(before) {
            worst = worst.max((a / b - factor).abs() / factor);
        }
        state = next;
    }
    Ok(DecayReport {
        steps,
        max_deviation: worst,
    })
}

/// Everything `verify` runs, with pass flags against the fixed thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationSuite {
    pub spatial: ConvergenceReport,
    pub temporal: TemporalStudy,
    pub oracle: Vec<OracleReport>,
    pub conservation: ConservationReport,
    pub decay: DecayReport,
}

pub const SPATIAL_LEVELS: [usize; 3] = [26, 51, 101];
pub const TEMPORAL_STEPS: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

impl VerificationSuite {
    pub fn run() -> Result<Self> {
        let params = ParameterSet::default();
        let cfg = StepperConfig::default();
        Ok(Self {
            spatial: mms_spatial_study(&SPATIAL_LEVELS, &SpatialStudy::default())?,
            temporal: mms_temporal_study(&TEMPORAL_STEPS)?,
            oracle: vec![small_grid_oracle(3, 1)?, small_grid_oracle(4, 2)?],
            conservation: conservation_audit(GridSpec::unit_square(101)?, &params, 1000, &cfg)?,
            decay: drug_decay_audit(100, &params, &study_stepper(cfg.dt))?,
        })
    }

    /// `(name, passed, detail)` per check.
    pub fn checks(&self) -> Vec<(&'static str, bool, String)> {
        let order = |r: &ConvergenceReport| r.observed_order().map_or("n/a".to_string(), |p| format!("{p:.4}"));
        let mut out = vec![
            (
                "spatial order",
                self.spatial.passes(SPATIAL_ORDER_MIN),
                format!("observed {} (need >= {SPATIAL_ORDER_MIN})", order(&self.spatial)),
            ),
            (
                "temporal order (CNBE)",
                self.temporal.cnbe.passes(CNBE_ORDER_MIN),
                format!("observed {} (need >= {CNBE_ORDER_MIN})", order(&self.temporal.cnbe)),
            ),
            (
                "temporal order (CN linear)",
                self.temporal.cn_linear.passes(CN_ORDER_MIN),
                format!("observed {} (need >= {CN_ORDER_MIN})", order(&self.temporal.cn_linear)),
            ),
        ];
        for r in &self.oracle {
            out.push((
                "dense oracle",
                r.passes(),
                format!(
                    "{} nodes: discrepancy {:.3e} (need <= {ORACLE_RTOL:e}), mutated {:.3e} (need > {ORACLE_RTOL:e})",
                    r.nodes, r.discrepancy, r.mutated_discrepancy
                ),
            ));
        }
        let c = &self.conservation;
        out.push((
            "diffusion mass drift",
            c.diffusion_drift <= DIFFUSION_DRIFT_MAX,
            format!("{:.3e} over {} steps (need <= {DIFFUSION_DRIFT_MAX:e})", c.diffusion_drift, c.steps),
        ));
        out.push((
            "advection boundary flux",
            c.flux_mismatch() <= FLUX_MATCH_RTOL,
            format!(
                "mass change {:.10e} vs flux sum {:.10e}, mismatch {:.3e} (need <= {FLUX_MATCH_RTOL:e})",
                c.advection_change,
                c.boundary_flux_change,
                c.flux_mismatch()
            ),
        ));
        out.push((
            "drug decay",
            self.decay.max_deviation <= DECAY_RTOL,
            format!(
                "max deviation {:.3e} over {} steps (need <= {DECAY_RTOL:e})",
                self.decay.max_deviation, self.decay.steps
            ),
        ));
        out
    }

    pub fn all_passed(&self) -> bool {
        self.checks().iter().all(|c| c.1)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (name, ok, detail) in self.checks() {
            let _ = writeln!(s, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        }
        s
    }
}
