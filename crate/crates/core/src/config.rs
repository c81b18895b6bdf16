//! Flat `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment, keys are case sensitive.
//! Units: time in days, lengths in cm, populations in cells, rates per day,
//! diffusion in cm^2/day. The drug advection velocity is given in cm/s
//! (`h4_x`, `h4_y`) and converted to cm/day on use.
//!
//! | key | meaning |
//! |-----|---------|
//! | `scheme` | `NT`, `NTI` or `NTIU` |
//! | `schedule` | `case1`..`case4`, `fig2`, `custom` or `none` |
//! | `period` | pulse spacing for `case*` and `custom` (day) |
//! | `v0`, `tau`, `pulses` | pulse height, width (day) and count for `custom` |
//! | `nx`, `ny`, `lx`, `ly` | grid nodes and domain size (cm) |
//! | `dt`, `horizon` | step and final time (day) |
//! | `snapshots` | comma separated snapshot times (day) |
//! | `picard_tol`, `picard_max`, `krylov_tol`, `krylov_max`, `newton_diagonal` | solver controls |
//! | `front_theta` | invasive-front threshold as a fraction of `1/b1` |
//! | `output` | output directory; `--output` and `NTIU_OUTPUT_DIR` take precedence |
//! | `r1` .. `k2`, `D1` .. `D4` | model constants |

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::model::{DosingSchedule, ParameterSet, Scheme, SECONDS_PER_DAY};
use crate::scenario::{illustration_schedule, make_case, ScenarioConfig, DEFAULT_FRONT_THETA, DEFAULT_PERIOD};
use crate::stencil::AdvectionVector;
use crate::stepper::StepperConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleChoice {
    Case(u32),
    Illustration,
    Custom,
    None,
}

impl ScheduleChoice {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fig2" => Some(Self::Illustration),
            "custom" => Some(Self::Custom),
            "none" => Some(Self::None),
            _ => match s.strip_prefix("case")?.parse::<u32>().ok()? {
                id @ 1..=4 => Some(Self::Case(id)),
                _ => None,
            },
        }
    }

    pub fn name(self) -> String {
        match self {
            Self::Case(id) => format!("case{id}"),
            Self::Illustration => "fig2".into(),
            Self::Custom => "custom".into(),
            Self::None => "none".into(),
        }
    }
}

/// Raw configuration as written in the file. Values are kept in file units
/// so that emitting a loaded file reproduces it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub schedule: ScheduleChoice,
    pub period: f64,
    pub v0: f64,
    pub tau: f64,
    pub pulses: u32,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dt: f64,
    pub horizon: f64,
    pub snapshots: Vec<f64>,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub krylov_tol: f64,
    pub krylov_max: usize,
    pub newton_diagonal: bool,
    pub front_theta: f64,
    pub output: String,
    /// Model constants; `h4` here is ignored in favour of `h4_cm_per_s`.
    pub params: ParameterSet,
    pub h4_cm_per_s: [f64; 2],
}

impl Default for RunConfig {
    fn default() -> Self {
        let params = ParameterSet::default();
        let case1 = make_case(1, DEFAULT_PERIOD).expect("case 1 exists");
        let stepper = StepperConfig::default();
        Self {
            scheme: Scheme::Ntiu,
            schedule: ScheduleChoice::Case(1),
            period: DEFAULT_PERIOD,
            v0: case1.v0(),
            tau: case1.tau(),
            pulses: case1.n_pulses(),
            nx: 101,
            ny: 101,
            lx: 1.0,
            ly: 1.0,
            dt: stepper.dt,
            horizon: 28.0,
            snapshots: vec![0.0, 14.0, 28.0],
            picard_tol: stepper.picard_tol,
            picard_max: stepper.picard_max,
            krylov_tol: stepper.krylov_tol,
            krylov_max: stepper.krylov_max,
            newton_diagonal: stepper.newton_diagonal,
            front_theta: DEFAULT_FRONT_THETA,
            output: "output".into(),
            params,
            h4_cm_per_s: [1e-6, 1e-6],
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::config(key, format!("expected a finite number, got `{v}`")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::config(key, format!("expected a nonnegative integer, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected `true` or `false`, got `{v}`"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(key, s.trim())).collect()
}

impl RunConfig {
    /// Model constants in file order, by key.
    fn param_slots(&mut self) -> Vec<(&'static str, &mut f64)> {
        let p = &mut self.params;
        let [d1, d2, d3, d4] = &mut p.diffusion;
        let [hx, hy] = &mut self.h4_cm_per_s;
        vec![
            ("r1", &mut p.r1),
            ("r2", &mut p.r2),
            ("b1", &mut p.b1),
            ("b2", &mut p.b2),
            ("A1", &mut p.a1_allee),
            ("A2", &mut p.a2_allee),
            ("c1", &mut p.c1),
            ("c2", &mut p.c2),
            ("c3", &mut p.c3),
            ("c4", &mut p.c4),
            ("a1", &mut p.a1_kill),
            ("a2", &mut p.a2_kill),
            ("a3", &mut p.a3_kill),
            ("a0", &mut p.a0),
            ("delta", &mut p.delta),
            ("s", &mut p.s),
            ("rho", &mut p.rho),
            ("alpha", &mut p.alpha),
            ("k1", &mut p.k1),
            ("k2", &mut p.k2),
            ("D1", d1),
            ("D2", d2),
            ("D3", d3),
            ("D4", d4),
            ("h4_x", hx),
            ("h4_y", hy),
        ]
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scheme" => {
                self.scheme = Scheme::parse(value)
                    .ok_or_else(|| Error::config(key, format!("unknown scheme `{value}`")))?
            }
            "schedule" => {
                self.schedule = ScheduleChoice::parse(value)
                    .ok_or_else(|| Error::config(key, format!("unknown schedule `{value}`")))?
            }
            "period" => self.period = parse_f64(key, value)?,
            "v0" => self.v0 = parse_f64(key, value)?,
            "tau" => self.tau = parse_f64(key, value)?,
            "pulses" => {
                self.pulses = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("expected a pulse count, got `{value}`")))?
            }
            "nx" => self.nx = parse_usize(key, value)?,
            "ny" => self.ny = parse_usize(key, value)?,
            "lx" => self.lx = parse_f64(key, value)?,
            "ly" => self.ly = parse_f64(key, value)?,
            "dt" => self.dt = parse_f64(key, value)?,
            "horizon" => self.horizon = parse_f64(key, value)?,
            "snapshots" => self.snapshots = parse_list(key, value)?,
            "picard_tol" => self.picard_tol = parse_f64(key, value)?,
            "picard_max" => self.picard_max = parse_usize(key, value)?,
            "krylov_tol" => self.krylov_tol = parse_f64(key, value)?,
            "krylov_max" => self.krylov_max = parse_usize(key, value)?,
            "newton_diagonal" => self.newton_diagonal = parse_bool(key, value)?,
            "front_theta" => self.front_theta = parse_f64(key, value)?,
            "output" => {
                if value.is_empty() {
                    return Err(Error::config(key, "must not be empty"));
                }
                self.output = value.to_string()
            }
            _ => {
                let v = parse_f64(key, value);
                let mut slots = self.param_slots();
                let slot = slots
                    .iter_mut()
                    .find(|(k, _)| *k == key)
                    .ok_or_else(|| Error::config(key, "unknown key"))?;
                *slot.1 = v?;
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(&format!("line {}", lineno + 1), "expected `key = value`"))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, "given more than once"));
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text: every key, fixed order, shortest round-trip numbers.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("scheme", self.scheme.name().to_string());
        line("schedule", self.schedule.name());
        line("period", self.period.to_string());
        line("v0", self.v0.to_string());
        line("tau", self.tau.to_string());
        line("pulses", self.pulses.to_string());
        line("nx", self.nx.to_string());
        line("ny", self.ny.to_string());
        line("lx", self.lx.to_string());
        line("ly", self.ly.to_string());
        line("dt", self.dt.to_string());
        line("horizon", self.horizon.to_string());
        line(
            "snapshots",
            self.snapshots.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
        );
        line("picard_tol", self.picard_tol.to_string());
        line("picard_max", self.picard_max.to_string());
        line("krylov_tol", self.krylov_tol.to_string());
        line("krylov_max", self.krylov_max.to_string());
        line("newton_diagonal", self.newton_diagonal.to_string());
        line("front_theta", self.front_theta.to_string());
        line("output", self.output.clone());
        let mut copy = self.clone();
        for (k, v) in copy.param_slots() {
            line(k, v.to_string());
        }
        out
    }

    pub fn dosing(&self) -> Result<Option<DosingSchedule>> {
        let wrap = |e: Error| match e {
            Error::InvalidParameter { key, reason } => Error::Config { key, reason },
            other => other,
        };
        Ok(match self.schedule {
            ScheduleChoice::Case(id) => Some(make_case(id, self.period).map_err(wrap)?),
            ScheduleChoice::Illustration => Some(illustration_schedule()),
            ScheduleChoice::Custom => Some(DosingSchedule::new(self.v0, self.tau, self.pulses, self.period).map_err(wrap)?),
            ScheduleChoice::None => None,
        })
    }

    pub fn to_scenario(&self) -> Result<ScenarioConfig> {
        let mut params = self.params;
        let [hx, hy] = self.h4_cm_per_s;
        params.h4 = AdvectionVector::new(hx * SECONDS_PER_DAY, hy * SECONDS_PER_DAY)
            .map_err(|e| Error::config("h4_x", e.to_string()))?;
        let grid = GridSpec::new(self.lx, self.ly, self.nx, self.ny)
            .map_err(|e| Error::config("nx", e.to_string()))?;
        let schedule = if self.scheme == Scheme::Ntiu { self.dosing()? } else { None };
        let cfg = ScenarioConfig {
            scheme: self.scheme,
            params,
            schedule,
            grid,
            stepper: StepperConfig {
                dt: self.dt,
                picard_tol: self.picard_tol,
                picard_max: self.picard_max,
                krylov_tol: self.krylov_tol,
                krylov_max: self.krylov_max,
                newton_diagonal: self.newton_diagonal,
            },
            horizon: self.horizon,
            snapshot_times: self.snapshots.clone(),
            front_theta: self.front_theta,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
