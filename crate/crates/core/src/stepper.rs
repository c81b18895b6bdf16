//! Crank-Nicolson / Backward-Euler time integration.
//!
//! Per species `k` the step solves
//!
//! ```text
//! (u_k' - u_k)/dt = (L_k u_k' + L_k u_k)/2 + F_k(u')
//! ```
//!
//! with an outer fixed-point sweep: reactions are frozen at the current
//! iterate, the four CN systems `(I - dt/2 L_k) w_k = (I + dt/2 L_k) u_k + dt F_k(w)`
//! are solved by CG (no advection) or BiCGStab (advection), and the sweep
//! repeats until the largest relative sup-norm change drops below
//! `picard_tol`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Field, Species, StateSnapshot};
use crate::krylov::{bicgstab, conjugate_gradient, LinearOperator, SolveStats};
use crate::model::{DosingSchedule, Envelope, ModelReactions, ParameterSet, ReactionSource, Scheme};
use crate::stencil::{AdvectionVector, TransportOperator};

/// Relative slack on the a-priori envelopes.
pub const ENVELOPE_RTOL: f64 = 1e-9;
/// Undershoots above `-CLIP_RTOL * scale` are rounded up to zero.
pub const CLIP_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    /// Time step (day).
    pub dt: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub krylov_tol: f64,
    pub krylov_max: usize,
    /// Move `dF_k/du_k` into the implicit operator (node-local Newton on the
    /// diagonal). Only changes the iteration path, not the converged step.
    pub newton_diagonal: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 0.025,
            picard_tol: 1e-10,
            picard_max: 50,
            krylov_tol: 1e-10,
            krylov_max: 2000,
            newton_diagonal: false,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {}", self.dt)));
        }
        for (key, tol) in [("picard_tol", self.picard_tol), ("krylov_tol", self.krylov_tol)] {
            if !(tol > 0.0 && tol <= 1e-3) {
                return Err(Error::param(key, format!("must lie in (0, 1e-3], got {tol}")));
            }
        }
        if self.picard_max == 0 {
            return Err(Error::param("picard_max", "must be at least 1"));
        }
        if self.krylov_max == 0 {
            return Err(Error::param("krylov_max", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    /// Time of the new level.
    pub t: f64,
    pub picard_iterations: usize,
    pub final_picard_residual: f64,
    /// Last relative sup-norm change per species.
    pub field_residuals: [f64; 4],
    /// Krylov iterations per species, summed over all sweeps.
    pub krylov_iterations: [usize; 4],
    /// Minimum per species before undershoot clipping.
    pub pre_clamp_min: [f64; 4],
    /// Sup-norm scale used for clipping.
    pub field_scale: [f64; 4],
    pub min: [f64; 4],
    pub max: [f64; 4],
    pub clamped_nodes: [usize; 4],
    /// Species whose values left `[0, envelope]`.
    pub bound_flags: [bool; 4],
}

impl StepReport {
    pub const CSV_HEADER: &'static str =
        "t,field,picard_iters,krylov_iters,residual,min_value,max_value,clamped_nodes";

    /// One diagnostics row per species.
    pub fn write_csv_rows<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in Species::ALL {
            let k = s.index();
            writeln!(
                w,
                "{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{}",
                self.t,
                s.symbol(),
                self.picard_iterations,
                self.krylov_iterations[k],
                self.field_residuals[k],
                self.min[k],
                self.max[k],
                self.clamped_nodes[k]
            )?;
        }
        Ok(())
    }
}

/// `(I - dt/2 L + diag(shift)) x`.
struct CnSystem<'a> {
    op: &'a TransportOperator,
    half_dt: f64,
    shift: Option<&'a [f64]>,
}

impl LinearOperator for CnSystem<'_> {
    fn len(&self) -> usize {
        self.op.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply_shifted(-self.half_dt, x, y);
        if let Some(shift) = self.shift {
            for ((yi, xi), si) in y.iter_mut().zip(x).zip(shift) {
                *yi += si * xi;
            }
        }
    }
}

fn solve_system(
    op: &TransportOperator,
    dt: f64,
    shift: Option<&[f64]>,
    rhs: &[f64],
    x: &mut [f64],
    cfg: &StepperConfig,
) -> Result<SolveStats> {
    let system = CnSystem {
        op,
        half_dt: 0.5 * dt,
        shift,
    };
    if op.is_symmetric() {
        conjugate_gradient(&system, rhs, x, cfg.krylov_tol, cfg.krylov_max)
    } else {
        bicgstab(&system, rhs, x, cfg.krylov_tol, cfg.krylov_max)
    }
}

/// Solve `(I - dt/2 L) u = rhs` with `L = D Lap_h - A_h`.
pub fn solve_cn_linear(
    rhs: &Field,
    diffusion: f64,
    h: AdvectionVector,
    dt: f64,
    cfg: &StepperConfig,
) -> Result<(Field, SolveStats)> {
    if !rhs.is_finite() {
        return Err(Error::NonFinite {
            field: rhs.species().symbol(),
        });
    }
    let op = TransportOperator::new(*rhs.grid(), diffusion, h);
    let mut x = rhs.values().to_vec();
    let stats = solve_system(&op, dt, None, rhs.values(), &mut x, cfg)?;
    Ok((Field::from_values(*rhs.grid(), rhs.species(), x)?, stats))
}

/// Transport operators of the model: diffusion for all species, advection
/// for the drug only.
pub fn model_transport(grid: crate::grid::GridSpec, params: &ParameterSet) -> [TransportOperator; 4] {
    std::array::from_fn(|k| {
        let h = if k == Species::Drug.index() {
            params.h4
        } else {
            AdvectionVector::ZERO
        };
        TransportOperator::new(grid, params.diffusion[k], h)
    })
}

fn relative_change(new: &[f64], old: &[f64], base: &[f64]) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for ((a, b), c) in new.iter().zip(old).zip(base) {
        diff = diff.max((a - b).abs());
        scale = scale.max(a.abs()).max(c.abs());
    }
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// One step of size `cfg.dt` from `state` to the level at `t_next`, for an arbitrary
/// reaction source and per-species transport.
pub fn advance(
    state: &StateSnapshot,
    t_next: f64,
    source: &dyn ReactionSource,
    transport: &[TransportOperator; 4],
    cfg: &StepperConfig,
) -> Result<StateSnapshot> {
    let grid = *state.grid();
    let dt = cfg.dt;
    let n = grid.len();
    let nx = grid.nx();
    let active = source.active();

    let explicit: Vec<Option<Vec<f64>>> = (0..4)
        .map(|k| {
            active[k].then(|| {
                let mut out = vec![0.0; n];
                transport[k].apply_shifted(0.5 * dt, state.fields[k].values(), &mut out);
                out
            })
        })
        .collect();

    let mut iterate: [Vec<f64>; 4] = std::array::from_fn(|k| state.fields[k].values().to_vec());
    let mut rates: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut diag: [Vec<f64>; 4] = std::array::from_fn(|_| {
        if cfg.newton_diagonal {
            vec![0.0; n]
        } else {
            Vec::new()
        }
    });

    let mut report = StepReport {
        t: t_next,
        ..StepReport::default()
    };
    let mut converged = false;
    let mut change = f64::INFINITY;

    for sweep in 1..=cfg.picard_max {
        for node in 0..n {
            let x = grid.x(node % nx);
            let y = grid.y(node / nx);
            let u = [iterate[0][node], iterate[1][node], iterate[2][node], iterate[3][node]];
            let f = source.eval(t_next, x, y, u);
            for k in 0..4 {
                rates[k][node] = f[k];
            }
            if cfg.newton_diagonal {
                let j = source.jacobian_diagonal(t_next, x, y, u);
                for k in 0..4 {
                    diag[k][node] = j[k];
                }
            }
        }

        let solved: Vec<Result<(usize, Vec<f64>, SolveStats)>> = (0..4)
            .into_par_iter()
            .filter(|&k| active[k])
            .map(|k| {
                let base = explicit[k].as_ref().expect("active species has explicit part");
                let w = &iterate[k];
                let (rhs, shift): (Vec<f64>, Option<Vec<f64>>) = if cfg.newton_diagonal {
                    let shift: Vec<f64> = diag[k].iter().map(|j| -dt * j).collect();
                    let rhs = (0..n)
                        .map(|i| base[i] + dt * (rates[k][i] - diag[k][i] * w[i]))
                        .collect();
                    (rhs, Some(shift))
                } else {
                    ((0..n).map(|i| base[i] + dt * rates[k][i]).collect(), None)
                };
                let mut x = w.clone();
                let stats = solve_system(&transport[k], dt, shift.as_deref(), &rhs, &mut x, cfg)?;
                Ok((k, x, stats))
            })
            .collect();

        change = 0.0;
        for result in solved {
            let (k, x, stats) = result?;
            report.krylov_iterations[k] += stats.iterations;
            let c = relative_change(&x, &iterate[k], state.fields[k].values());
            report.field_residuals[k] = c;
            change = change.max(c);
            iterate[k] = x;
        }
        report.picard_iterations = sweep;
        if !change.is_finite() {
            break;
        }
        if change <= cfg.picard_tol {
            converged = true;
            break;
        }
    }
    report.final_picard_residual = change;
    if !converged {
        return Err(Error::PicardFailure {
            iterations: report.picard_iterations,
            residual: change,
        });
    }

    let mut fields = state.fields.clone();
    for k in 0..4 {
        if !active[k] {
            let f = &fields[k];
            report.pre_clamp_min[k] = f.min();
            report.min[k] = f.min();
            report.max[k] = f.max();
            report.field_scale[k] = f.norm_inf();
            continue;
        }
        let mut values = std::mem::take(&mut iterate[k]);
        let scale = values
            .iter()
            .chain(state.fields[k].values())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let eps = CLIP_RTOL * scale;
        let mut pre_min = f64::INFINITY;
        let mut clamped = 0;
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: Species::ALL[k].symbol(),
                });
            }
            pre_min = pre_min.min(*v);
            if *v < 0.0 && *v > -eps {
                *v = 0.0;
                clamped += 1;
            }
        }
        let field = Field::from_values(grid, Species::ALL[k], values)?;
        report.pre_clamp_min[k] = pre_min;
        report.field_scale[k] = scale;
        report.clamped_nodes[k] = clamped;
        report.min[k] = field.min();
        report.max[k] = field.max();
        report.bound_flags[k] = report.min[k] < 0.0;
        fields[k] = field;
    }

    Ok(StateSnapshot {
        t: t_next,
        fields,
        report: Some(report),
    })
}

/// One model step of size `cfg.dt` from time `t`.
pub fn cnbe_step(
    state: &StateSnapshot,
    t: f64,
    params: &ParameterSet,
    schedule: Option<&DosingSchedule>,
    scheme: Scheme,
    cfg: &StepperConfig,
) -> Result<(StateSnapshot, StepReport)> {
    let source = ModelReactions::new(*params, schedule.copied(), scheme);
    let transport = model_transport(*state.grid(), params);
    let mut start = state.clone();
    start.t = t;
    let next = advance(&start, t + cfg.dt, &source, &transport, cfg)?;
    let report = next.report.clone().expect("advance always reports");
    Ok((next, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub snapshots: Vec<StateSnapshot>,
    pub reports: Vec<StepReport>,
}

/// Map requested snapshot times to step indices.
pub fn snapshot_steps(times: &[f64], dt: f64, n_steps: usize) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let k = (t / dt).round();
            if !(t >= 0.0) || (k * dt - t).abs() > 1e-9 * dt.max(t) || k as usize > n_steps {
                Err(Error::param(
                    "snapshots",
                    format!("time {t} is not a multiple of dt = {dt} within [0, horizon]"),
                ))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// Fixed-step integration to `t_end` with snapshots at the requested
/// times. `observer` sees every accepted state, including the initial one.
#[allow(clippy::too_many_arguments)]
pub fn run_with(
    state0: &StateSnapshot,
    t_end: f64,
    source: &dyn ReactionSource,
    transport: &[TransportOperator; 4],
    cfg: &StepperConfig,
    snapshot_times: &[f64],
    envelope: Option<&Envelope>,
    mut observer: impl FnMut(&StateSnapshot),
) -> Result<RunOutput> {
    cfg.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::param("horizon", format!("must be positive, got {t_end}")));
    }
    let n_steps = (t_end / cfg.dt).round() as usize;
    if (n_steps as f64 * cfg.dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::param(
            "horizon",
            format!("{t_end} is not a multiple of dt = {}", cfg.dt),
        ));
    }
    let wanted = snapshot_steps(snapshot_times, cfg.dt, n_steps)?;

    let mut snapshots = Vec::new();
    let mut reports = Vec::with_capacity(n_steps);
    let mut state = state0.clone();
    let t0 = state0.t;
    if wanted.contains(&0) {
        snapshots.push(state.clone());
    }
    observer(&state);
    for step in 0..n_steps {
        let t_next = t0 + (step + 1) as f64 * cfg.dt;
        let t_now = state.t;
        let mut next = advance(&state, t_next, source, transport, cfg).map_err(|e| Error::StepFailed {
            t: t_now,
            source: Box::new(e),
        })?;
        if let (Some(env), Some(report)) = (envelope, next.report.as_mut()) {
            for s in Species::ALL {
                if let Some(upper) = env.upper(s) {
                    let k = s.index();
                    if report.max[k] > upper * (1.0 + ENVELOPE_RTOL) {
                        report.bound_flags[k] = true;
                    }
                }
            }
        }
        reports.push(next.report.clone().expect("advance always reports"));
        for _ in wanted.iter().filter(|&&w| w == step + 1) {
            snapshots.push(next.clone());
        }
        observer(&next);
        state = next;
    }
    Ok(RunOutput { snapshots, reports })
}

/// [`run_with`] for the model reactions of `scheme`.
#[allow(clippy::too_many_arguments)]
pub fn run(
    state0: &StateSnapshot,
    t_end: f64,
    params: &ParameterSet,
    schedule: Option<&DosingSchedule>,
    scheme: Scheme,
    cfg: &StepperConfig,
    snapshot_times: &[f64],
) -> Result<RunOutput> {
    let source = ModelReactions::new(*params, schedule.copied(), scheme);
    let transport = model_transport(*state0.grid(), params);
    let envelope = Envelope::new(params, schedule, state0);
    run_with(
        state0,
        t_end,
        &source,
        &transport,
        cfg,
        snapshot_times,
        Some(&envelope),
        |_| {},
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tight() -> StepperConfig {
        StepperConfig {
            picard_tol: 1e-13,
            krylov_tol: 1e-13,
            ..StepperConfig::default()
        }
    }

    /// Pure drug decay: no transport, no dosing.
    struct Decay(f64);

    impl ReactionSource for Decay {
        fn active(&self) -> [bool; 4] {
            [false, false, false, true]
        }
        fn eval(&self, _t: f64, _x: f64, _y: f64, u: [f64; 4]) -> [f64; 4] {
            [0.0, 0.0, 0.0, -self.0 * u[3]]
        }
        fn jacobian_diagonal(&self, _t: f64, _x: f64, _y: f64, _u: [f64; 4]) -> [f64; 4] {
            [0.0, 0.0, 0.0, -self.0]
        }
    }

    fn no_transport(grid: GridSpec) -> [TransportOperator; 4] {
        [TransportOperator::new(grid, 0.0, AdvectionVector::ZERO); 4]
    }

    #[test]
    fn backward_euler_drug_decay() {
        let g = GridSpec::unit_square(3).unwrap();
        let s0 = StateSnapshot::uniform(g, 0.0, [0.0, 0.0, 0.0, 1.0]);
        for newton in [false, true] {
            let cfg = StepperConfig {
                newton_diagonal: newton,
                ..tight()
            };
            let s1 = advance(&s0, 0.025, &Decay(0.35), &no_transport(g), &cfg).unwrap();
            let expected: f64 = 1.0 / (1.0 + 0.35 * 0.025);
            assert!((expected - 0.991_325_898_389_095).abs() < 1e-15);
            for &v in s1.field(Species::Drug).values() {
                assert!((v - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_state_grows_immune_influx_only() {
        let g = GridSpec::unit_square(5).unwrap();
        let p = ParameterSet::default();
        let s0 = StateSnapshot::zeros(g, 0.0);
        let (s1, report) = cnbe_step(&s0, 0.0, &p, None, Scheme::Ntiu, &tight()).unwrap();
        let expected = p.s * 0.025 / (1.0 + p.k1 * 0.025);
        for &v in s1.field(Species::Immune).values() {
            assert!((v - expected).abs() < 1e-10 * expected);
        }
        for s in [Species::Normal, Species::Tumor, Species::Drug] {
            assert_eq!(s1.field(s).norm_inf(), 0.0);
        }
        assert!(report.picard_iterations <= 25);
    }

    #[test]
    fn uniform_state_stays_uniform() {
        let g = GridSpec::unit_square(9).unwrap();
        let p = ParameterSet::default();
        let sched = DosingSchedule::new(1.0, 0.3, 7, 2.0).unwrap();
        let s0 = StateSnapshot::uniform(g, 0.0, [5e8, 2e8, 1e5, 0.4]);
        let (s1, _) = cnbe_step(&s0, 0.0, &p, Some(&sched), Scheme::Ntiu, &tight()).unwrap();
        for f in &s1.fields {
            let v0 = f.values()[0];
            for &v in f.values() {
                assert!((v - v0).abs() <= 1e-12 * v0.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn cn_solve_of_constant_and_zero_dt() {
        let g = GridSpec::unit_square(11).unwrap();
        let h = AdvectionVector::new(0.0864, 0.0864).unwrap();
        let c = Field::constant(g, Species::Drug, 2.5);
        let (u, _) = solve_cn_linear(&c, 0.086, h, 0.025, &tight()).unwrap();
        assert!(u.values().iter().all(|v| (v - 2.5).abs() < 1e-12));
        let r = Field::from_fn(g, Species::Drug, |x, y| x * y + 1.0);
        let (u, _) = solve_cn_linear(&r, 0.086, h, 0.0, &tight()).unwrap();
        assert_eq!(u.values(), r.values());
    }

    /// Dense `I - dt/2 L` assembled node by node from the stencil definition.
    fn dense_cn_matrix(g: &GridSpec, d: f64, h: AdvectionVector, dt: f64) -> DMatrix<f64> {
        let n = g.len();
        let mut m = DMatrix::<f64>::identity(n, n);
        let (nx, ny) = (g.nx() as isize, g.ny() as isize);
        let idx = |i: isize, j: isize| (j.clamp(0, ny - 1) * nx + i.clamp(0, nx - 1)) as usize;
        for j in 0..ny {
            for i in 0..nx {
                let row = idx(i, j);
                let cx = d / (g.dx() * g.dx());
                let cy = d / (g.dy() * g.dy());
                let mut add = |col: usize, v: f64| m[(row, col)] -= 0.5 * dt * v;
                add(idx(i + 1, j), cx);
                add(idx(i - 1, j), cx);
                add(idx(i, j + 1), cy);
                add(idx(i, j - 1), cy);
                add(row, -2.0 * (cx + cy));
                add(row, -h.hx() / g.dx() - h.hy() / g.dy());
                add(idx(i - 1, j), h.hx() / g.dx());
                add(idx(i, j - 1), h.hy() / g.dy());
            }
        }
        m
    }

    #[test]
    fn cn_solve_matches_dense_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (n, h) in [
            (3, AdvectionVector::ZERO),
            (4, AdvectionVector::new(0.3, 0.1).unwrap()),
        ] {
            let g = GridSpec::unit_square(n).unwrap();
            let rhs: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let field = Field::from_values(g, Species::Drug, rhs.clone()).unwrap();
            let (u, _) = solve_cn_linear(&field, 1.0, h, 0.01, &tight()).unwrap();
            let m = dense_cn_matrix(&g, 1.0, h, 0.01);
            let exact = m.lu().solve(&DVector::from_vec(rhs)).unwrap();
            for (a, b) in u.values().iter().zip(exact.iter()) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    fn cn_diffusion_steps(u0: &Field, d: f64, dt: f64, steps: usize) -> Vec<Field> {
        let g = *u0.grid();
        let op = TransportOperator::new(g, d, AdvectionVector::ZERO);
        let mut out = vec![u0.clone()];
        for _ in 0..steps {
            let mut rhs = vec![0.0; g.len()];
            op.apply_shifted(0.5 * dt, out.last().unwrap().values(), &mut rhs);
            let f = Field::from_values(g, u0.species(), rhs).unwrap();
            out.push(solve_cn_linear(&f, d, AdvectionVector::ZERO, dt, &tight()).unwrap().0);
        }
        out
    }

    #[test]
    fn cn_diffusion_sup_norm_nonincreasing_for_smooth_data() {
        let g = GridSpec::unit_square(21).unwrap();
        let u0 = Field::from_fn(g, Species::Tumor, |x, y| 1.0 + (PI * x).cos() * (PI * y).cos());
        for dt in [10.0, 0.01] {
            let history = cn_diffusion_steps(&u0, 0.01, dt, 20);
            for w in history.windows(2) {
                assert!(w[1].norm_inf() <= w[0].norm_inf() * (1.0 + 1e-12), "dt={dt}");
            }
        }
    }

    #[test]
    fn cn_diffusion_energy_nonincreasing_for_rough_data() {
        let g = GridSpec::unit_square(21).unwrap();
        let u0 = Field::from_fn(g, Species::Tumor, |x, y| {
            (-((x - 0.3).powi(2) + (y - 0.6).powi(2)) / 0.01).exp()
        });
        let energy = |f: &Field| f.values().iter().map(|v| v * v).sum::<f64>();
        for dt in [10.0, 0.01] {
            let history = cn_diffusion_steps(&u0, 0.01, dt, 20);
            for w in history.windows(2) {
                assert!(energy(&w[1]) <= energy(&w[0]) * (1.0 + 1e-12), "dt={dt}");
            }
        }
        // Small steps also keep the sup norm in check.
        let history = cn_diffusion_steps(&u0, 0.01, 0.01, 20);
        for w in history.windows(2) {
            assert!(w[1].norm_inf() <= w[0].norm_inf() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn run_snapshot_bookkeeping() {
        let g = GridSpec::unit_square(5).unwrap();
        let p = ParameterSet::default();
        let s0 = crate::grid::build_initial_state(g, &p);
        let cfg = StepperConfig::default();
        let out = run(&s0, 0.025, &p, None, Scheme::Nt, &cfg, &[0.025]).unwrap();
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.reports.len(), 1);
        let (direct, _) = cnbe_step(&s0, 0.0, &p, None, Scheme::Nt, &cfg).unwrap();
        assert_eq!(out.snapshots[0].fields, direct.fields);

        let out = run(&s0, 0.1, &p, None, Scheme::Nt, &cfg, &[0.0, 0.05, 0.1]).unwrap();
        let times: Vec<f64> = out.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 3);
        assert!((times[1] - 0.05).abs() < 1e-15);
        assert!(run(&s0, 0.1, &p, None, Scheme::Nt, &cfg, &[0.03]).is_err());
        assert!(run(&s0, 0.1, &p, None, Scheme::Nt, &cfg, &[0.2]).is_err());
    }

    #[test]
    fn picard_failure_is_reported_with_time() {
        let g = GridSpec::unit_square(5).unwrap();
        let p = ParameterSet::default();
        let s0 = crate::grid::build_initial_state(g, &p);
        let cfg = StepperConfig {
            picard_max: 1,
            ..StepperConfig::default()
        };
        let err = run(&s0, 0.05, &p, None, Scheme::Nti, &cfg, &[]).unwrap_err();
        assert_eq!(err.failure_time(), Some(0.0));
        assert!(matches!(err, Error::StepFailed { ref source, .. } if matches!(**source, Error::PicardFailure { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(StepperConfig::default().validate().is_ok());
        let bad = StepperConfig {
            picard_tol: 1e-2,
            ..StepperConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = StepperConfig {
            dt: 0.0,
            ..StepperConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
