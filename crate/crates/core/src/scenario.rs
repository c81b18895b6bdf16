//! NT / NTI / NTIU scenario runs, the four dosing cases, observables and
//! the case-ordering verdicts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{build_initial_state, integrate, Field, GridSpec, Species, StateSnapshot};
use crate::model::{DosingSchedule, Envelope, ModelReactions, ParameterSet, Scheme};
use crate::stepper::{model_transport, run_with, StepReport, StepperConfig, ENVELOPE_RTOL};

/// Default pulse period (day).
pub const DEFAULT_PERIOD: f64 = 2.0;
/// Default invasive-front threshold as a fraction of `K_T`.
pub const DEFAULT_FRONT_THETA: f64 = 0.5;
/// Week-2 and week-4 checkpoints (day).
pub const CHECKPOINTS: [f64; 2] = [14.0, 28.0];
/// Relative spread under which two peaks count as "similar".
pub const SIMILAR_RTOL: f64 = 0.05;

/// One row of the dosing table: `(V0, tau, pulses)`.
const CASES: [(f64, f64, u32); 4] = [(1.00, 0.30, 7), (0.60, 0.50, 7), (3.00, 0.35, 7), (2.10, 0.35, 10)];

pub fn make_case(case_id: u32, period: f64) -> Result<DosingSchedule> {
    let (v0, tau, n) = *CASES
        .get((case_id as usize).wrapping_sub(1))
        .ok_or(Error::UnknownCase(case_id))?;
    DosingSchedule::new(v0, tau, n, period)
}

/// Seven 0.2-day pulses of rate 1.0, two days apart.
pub fn illustration_schedule() -> DosingSchedule {
    DosingSchedule::new(1.0, 0.2, 7, 2.0).expect("valid constants")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub params: ParameterSet,
    pub schedule: Option<DosingSchedule>,
    pub grid: GridSpec,
    pub stepper: StepperConfig,
    /// Final time (day).
    pub horizon: f64,
    pub snapshot_times: Vec<f64>,
    pub front_theta: f64,
}

impl ScenarioConfig {
    /// Defaults: 101x101 unit square, dt = 0.025, 28 days, snapshots at
    /// weeks 0/2/4, case 1 dosing when the scheme carries a drug.
    pub fn new(scheme: Scheme) -> Self {
        Self {
            scheme,
            params: ParameterSet::default(),
            schedule: (scheme == Scheme::Ntiu)
                .then(|| make_case(1, DEFAULT_PERIOD).expect("case 1 exists")),
            grid: GridSpec::unit_square(101).expect("valid grid"),
            stepper: StepperConfig::default(),
            horizon: 28.0,
            snapshot_times: vec![0.0, 14.0, 28.0],
            front_theta: DEFAULT_FRONT_THETA,
        }
    }

    pub fn with_case(mut self, case_id: u32, period: f64) -> Result<Self> {
        self.scheme = Scheme::Ntiu;
        self.schedule = Some(make_case(case_id, period)?);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.stepper.validate()?;
        if self.scheme == Scheme::Ntiu && self.schedule.is_none() {
            return Err(Error::config("schedule", "the NTIU scheme needs a dosing schedule"));
        }
        if !(self.front_theta > 0.0 && self.front_theta < 1.0) {
            return Err(Error::config("front_theta", "must lie strictly between 0 and 1"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::config("horizon", "must be positive"));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> RunFingerprint {
        RunFingerprint {
            nx: self.grid.nx(),
            ny: self.grid.ny(),
            lx: self.grid.lx(),
            ly: self.grid.ly(),
            dt: self.stepper.dt,
            horizon: self.horizon,
            period: self.schedule.map(|s| s.period()),
        }
    }
}

/// The settings that must agree for two runs to be comparable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunFingerprint {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dt: f64,
    pub horizon: f64,
    /// `None` for drug-free schemes.
    pub period: Option<f64>,
}

impl RunFingerprint {
    fn comparable(&self, other: &RunFingerprint) -> bool {
        let period_ok = match (self.period, other.period) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        };
        self.nx == other.nx
            && self.ny == other.ny
            && self.lx == other.lx
            && self.ly == other.ly
            && self.dt == other.dt
            && self.horizon == other.horizon
            && period_ok
    }
}

/// `dx*dy` times the number of nodes with `T >= theta * K_T`.
pub fn tumor_front_area(tumor: &Field, k_t: f64, theta: f64) -> f64 {
    let cut = theta * k_t;
    let count = tumor.values().iter().filter(|&&v| v >= cut).count();
    count as f64 * tumor.grid().node_area()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub label: String,
    pub fingerprint: RunFingerprint,
    pub tumor_capacity: f64,
    pub times: Vec<f64>,
    pub peak_n: Vec<f64>,
    pub peak_t: Vec<f64>,
    pub peak_i: Vec<f64>,
    pub peak_u: Vec<f64>,
    pub front_area: Vec<f64>,
    pub mass: [Vec<f64>; 4],
}

impl MetricsSeries {
    pub const CSV_HEADER: &'static str =
        "t,peak_N,peak_T,peak_I,peak_U,front_area,mass_N,mass_T,mass_I,mass_U";

    pub fn new(label: impl Into<String>, fingerprint: RunFingerprint, tumor_capacity: f64) -> Self {
        Self {
            label: label.into(),
            fingerprint,
            tumor_capacity,
            times: Vec::new(),
            peak_n: Vec::new(),
            peak_t: Vec::new(),
            peak_i: Vec::new(),
            peak_u: Vec::new(),
            front_area: Vec::new(),
            mass: Default::default(),
        }
    }

    pub fn record(&mut self, state: &StateSnapshot, theta: f64) {
        self.times.push(state.t);
        self.peak_n.push(state.field(Species::Normal).norm_inf());
        self.peak_t.push(state.field(Species::Tumor).norm_inf());
        self.peak_i.push(state.field(Species::Immune).norm_inf());
        self.peak_u.push(state.field(Species::Drug).norm_inf());
        self.front_area
            .push(tumor_front_area(state.field(Species::Tumor), self.tumor_capacity, theta));
        for s in Species::ALL {
            self.mass[s.index()].push(integrate(state.field(s)));
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Row recorded at time `t` (to within a millionth of a day).
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() < 1e-6)
    }

    fn value_at(&self, column: &[f64], t: f64) -> Result<f64> {
        self.index_at(t)
            .map(|k| column[k])
            .ok_or_else(|| Error::MismatchedRuns(format!("run `{}` has no record at t = {t}", self.label)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k],
                self.peak_n[k],
                self.peak_t[k],
                self.peak_i[k],
                self.peak_u[k],
                self.front_area[k],
                self.mass[0][k],
                self.mass[1][k],
                self.mass[2][k],
                self.mass[3][k],
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldBound {
    pub species: Species,
    pub min: f64,
    pub max: f64,
    pub upper: Option<f64>,
    pub finite: bool,
    pub nonnegative: bool,
    pub within_upper: bool,
}

impl FieldBound {
    pub fn ok(&self) -> bool {
        self.finite && self.nonnegative && self.within_upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeReport {
    pub fields: [FieldBound; 4],
}

impl EnvelopeReport {
    pub fn all_ok(&self) -> bool {
        self.fields.iter().all(FieldBound::ok)
    }
}

/// Check `0 <= u <= M` per species; the immune field only gets the
/// nonnegativity and finiteness checks.
pub fn bounds_monitor(state: &StateSnapshot, envelope: &Envelope) -> EnvelopeReport {
    EnvelopeReport {
        fields: Species::ALL.map(|s| {
            let f = state.field(s);
            let (min, max) = (f.min(), f.max());
            let upper = envelope.upper(s);
            FieldBound {
                species: s,
                min,
                max,
                upper,
                finite: f.is_finite(),
                nonnegative: min >= 0.0,
                within_upper: upper.is_none_or(|m| max <= m * (1.0 + ENVELOPE_RTOL)),
            }
        }),
    }
}

/// Worst-case envelope statistics over a whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeAudit {
    pub envelope: Envelope,
    /// `min_t min_x u / scale` before clipping, per species.
    pub worst_undershoot: [f64; 4],
    /// `max_t max_x u / M`, per species (`NaN` for the immune field).
    pub worst_ratio: [f64; 4],
    /// Running maximum of each field.
    pub running_max: [f64; 4],
    pub clamped_nodes: [usize; 4],
    pub flagged_steps: usize,
    pub max_picard_iterations: usize,
}

impl EnvelopeAudit {
    fn new(envelope: Envelope, initial: &StateSnapshot) -> Self {
        Self {
            envelope,
            worst_undershoot: [0.0; 4],
            worst_ratio: Species::ALL.map(|s| match envelope.upper(s) {
                Some(m) if m > 0.0 => initial.field(s).max() / m,
                Some(_) => 0.0,
                None => f64::NAN,
            }),
            running_max: Species::ALL.map(|s| initial.field(s).max()),
            clamped_nodes: [0; 4],
            flagged_steps: 0,
            max_picard_iterations: 0,
        }
    }

    fn observe(&mut self, report: &StepReport) {
        for s in Species::ALL {
            let k = s.index();
            if report.field_scale[k] > 0.0 {
                self.worst_undershoot[k] = self.worst_undershoot[k].min(report.pre_clamp_min[k] / report.field_scale[k]);
            }
            self.running_max[k] = self.running_max[k].max(report.max[k]);
            if let Some(m) = self.envelope.upper(s) {
                if m > 0.0 {
                    self.worst_ratio[k] = self.worst_ratio[k].max(report.max[k] / m);
                }
            }
            self.clamped_nodes[k] += report.clamped_nodes[k];
        }
        if report.bound_flags.iter().any(|&f| f) {
            self.flagged_steps += 1;
        }
        self.max_picard_iterations = self.max_picard_iterations.max(report.picard_iterations);
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub label: String,
    pub config: ScenarioConfig,
    pub snapshots: Vec<StateSnapshot>,
    pub reports: Vec<StepReport>,
    pub metrics: MetricsSeries,
    pub audit: EnvelopeAudit,
}

/// Run one scenario from the standard initial data.
pub fn run_scenario(cfg: &ScenarioConfig, label: &str) -> Result<ScenarioRun> {
    cfg.validate()?;
    let state0 = build_initial_state(cfg.grid, &cfg.params);
    run_scenario_from(cfg, label, &state0)
}

pub fn run_scenario_from(cfg: &ScenarioConfig, label: &str, state0: &StateSnapshot) -> Result<ScenarioRun> {
    cfg.validate()?;
    let source = ModelReactions::new(cfg.params, cfg.schedule, cfg.scheme);
    let transport = model_transport(cfg.grid, &cfg.params);
    let envelope = Envelope::new(&cfg.params, cfg.schedule.as_ref(), state0);
    let mut metrics = MetricsSeries::new(label, cfg.fingerprint(), cfg.params.tumor_capacity());
    let mut audit = EnvelopeAudit::new(envelope, state0);
    let out = run_with(
        state0,
        cfg.horizon,
        &source,
        &transport,
        &cfg.stepper,
        &cfg.snapshot_times,
        Some(&envelope),
        |state| {
            metrics.record(state, cfg.front_theta);
            if let Some(r) = &state.report {
                audit.observe(r);
            }
        },
    )?;
    Ok(ScenarioRun {
        label: label.to_string(),
        config: cfg.clone(),
        snapshots: out.snapshots,
        reports: out.reports,
        metrics,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub claim: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub verdicts: Vec<Verdict>,
}

impl ComparisonReport {
    pub fn get(&self, prefix: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.claim.starts_with(prefix))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.verdicts {
            let _ = writeln!(out, "[{}] {}", if v.holds { "TRUE " } else { "FALSE" }, v.claim);
            let _ = writeln!(out, "        {}", v.detail);
        }
        out
    }
}

/// `target` attains the minimum; also returns the other cases tied with it.
fn attains_min(values: &[(u32, f64)], target: u32) -> (bool, Vec<u32>) {
    let Some(m) = values.iter().find(|(c, _)| *c == target).map(|(_, v)| *v) else {
        return (false, Vec::new());
    };
    let holds = values.iter().all(|&(_, v)| m <= v);
    let ties = values.iter().filter(|&&(c, v)| c != target && v == m).map(|&(c, _)| c).collect();
    (holds, ties)
}

fn tie_note(ties: &[u32]) -> String {
    if ties.is_empty() {
        String::new()
    } else {
        let names: Vec<String> = ties.iter().map(|c| format!("case {c}")).collect();
        format!(" (tied with {})", names.join(", "))
    }
}

fn fmt_values(values: &[(u32, f64)]) -> String {
    values
        .iter()
        .map(|(c, v)| format!("case{c}={v:.6e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Evaluate the qualitative case-ordering claims at the week-2 and week-4
/// checkpoints. Every verdict is a pure function of the inputs.
pub fn compare_cases(
    cases: &BTreeMap<u32, MetricsSeries>,
    nt: &MetricsSeries,
    nti: &MetricsSeries,
    checkpoints: [f64; 2],
) -> Result<ComparisonReport> {
    for id in 1..=4 {
        if !cases.contains_key(&id) {
            return Err(Error::MismatchedRuns(format!("case {id} is missing")));
        }
    }
    let reference = &nt.fingerprint;
    for m in cases.values().chain([nti]) {
        if !m.fingerprint.comparable(reference) {
            return Err(Error::MismatchedRuns(format!(
                "`{}` uses {:?}, `{}` uses {:?}",
                m.label, m.fingerprint, nt.label, reference
            )));
        }
    }
    let periods: Vec<f64> = cases.values().filter_map(|m| m.fingerprint.period).collect();
    if periods.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::MismatchedRuns("dosing cases use different periods".into()));
    }
    let period = periods.first().copied().unwrap_or(f64::NAN);
    let [early, late] = checkpoints;

    let column = |t: f64, pick: fn(&MetricsSeries) -> &Vec<f64>| -> Result<Vec<(u32, f64)>> {
        cases
            .iter()
            .map(|(&c, m)| Ok((c, m.value_at(pick(m), t)?)))
            .collect()
    };

    let mut verdicts = Vec::new();
    let cond = format!("(period P = {period} day)");

    let peak_t_early = column(early, |m| &m.peak_t)?;
    let (holds, ties) = attains_min(&peak_t_early, 3);
    verdicts.push(Verdict {
        claim: format!("(i) case 3 has the lowest peak tumor density at day {early} {cond}"),
        holds,
        detail: fmt_values(&peak_t_early) + &tie_note(&ties),
    });

    let mut holds = true;
    let mut detail = Vec::new();
    for t in [early, late] {
        let front = column(t, |m| &m.front_area)?;
        let (min, ties) = attains_min(&front, 4);
        holds &= min;
        detail.push(format!("day {t}: {}{}", fmt_values(&front), tie_note(&ties)));
    }
    verdicts.push(Verdict {
        claim: format!("(ii) case 4 has the smallest invasive front at days {early} and {late} {cond}"),
        holds,
        detail: detail.join("; "),
    });

    let mut holds = true;
    let mut detail = Vec::new();
    for t in [early, late] {
        let front = column(t, |m| &m.front_area)?;
        let a_nt = nt.value_at(&nt.front_area, t)?;
        let a_nti = nti.value_at(&nti.front_area, t)?;
        holds &= front.iter().all(|&(_, a)| a < a_nt && a < a_nti);
        detail.push(format!("day {t}: NT={a_nt:.6e} NTI={a_nti:.6e} {}", fmt_values(&front)));
    }
    verdicts.push(Verdict {
        claim: format!("(iii) every treated case has a smaller invasive front than NT and NTI at days {early} and {late} {cond}"),
        holds,
        detail: detail.join("; "),
    });

    let peak_n = column(late, |m| &m.peak_n)?;
    let (holds, ties) = attains_min(&peak_n, 3);
    verdicts.push(Verdict {
        claim: format!("(iv-a) case 3 has the lowest peak normal density at day {late} {cond}"),
        holds,
        detail: fmt_values(&peak_n) + &tie_note(&ties),
    });
    let get = |c: u32| peak_n.iter().find(|(k, _)| *k == c).map(|(_, v)| *v).unwrap_or(f64::NAN);
    let (p1, p2, p3, p4) = (get(1), get(2), get(3), get(4));
    let similar = (p1 - p2).abs() <= SIMILAR_RTOL * p1.max(p2);
    verdicts.push(Verdict {
        claim: format!(
            "(iv-b) peak normal density orders case 3 < case 4 < cases 1~2 (within {:.0}%) at day {late} {cond}",
            SIMILAR_RTOL * 100.0
        ),
        holds: p3 < p4 && p4 < p1.min(p2) && similar,
        detail: fmt_values(&peak_n),
    });

    Ok(ComparisonReport { verdicts })
}

/// Labels of the six comparison runs, in output order.
pub const COMPARISON_LABELS: [&str; 6] = ["NT", "NTI", "case1", "case2", "case3", "case4"];

pub fn comparison_configs(base: &ScenarioConfig, period: f64) -> Result<Vec<(String, ScenarioConfig)>> {
    let mut out = Vec::new();
    for label in COMPARISON_LABELS {
        let cfg = match label {
            "NT" => ScenarioConfig {
                scheme: Scheme::Nt,
                schedule: None,
                ..base.clone()
            },
            "NTI" => ScenarioConfig {
                scheme: Scheme::Nti,
                schedule: None,
                ..base.clone()
            },
            case => {
                let id: u32 = case.trim_start_matches("case").parse().expect("static label");
                base.clone().with_case(id, period)?
            }
        };
        out.push((label.to_string(), cfg));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<ScenarioRun>,
    pub report: ComparisonReport,
}

/// Run NT, NTI and the four dosing cases on `jobs` worker threads and
/// evaluate the ordering claims. Output does not depend on `jobs`.
pub fn run_comparison(base: &ScenarioConfig, period: f64, jobs: usize) -> Result<Comparison> {
    let configs = comparison_configs(base, period)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::config("jobs", e.to_string()))?;
    let runs: Vec<ScenarioRun> = pool.install(|| {
        configs
            .par_iter()
            .map(|(label, cfg)| run_scenario(cfg, label))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut cases = BTreeMap::new();
    for (id, run) in (1..=4).zip(&runs[2..]) {
        cases.insert(id, run.metrics.clone());
    }
    let report = compare_cases(&cases, &runs[0].metrics, &runs[1].metrics, CHECKPOINTS)?;
    Ok(Comparison { runs, report })
}
