//! Reaction kinetics of the four-species model: Allee-type logistic growth
//! for normal and tumor cells, immune recruitment, fractional drug kill,
//! the smoothed delivery gate and the pulsed dosing source.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Species, StateSnapshot};
use crate::stencil::AdvectionVector;

/// Seconds per day, for the one-time cm/s -> cm/day advection conversion.
pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Every model constant. Rates are per day, lengths in cm, populations in cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSet {
    /// Tumor growth rate.
    pub r1: f64,
    /// Normal-tissue growth rate.
    pub r2: f64,
    /// Inverse tumor carrying capacity.
    pub b1: f64,
    /// Inverse normal carrying capacity.
    pub b2: f64,
    /// Tumor Allee threshold.
    pub a1_allee: f64,
    /// Normal-tissue Allee threshold.
    pub a2_allee: f64,
    /// Immune loss from tumor contact.
    pub c1: f64,
    /// Tumor loss from immune contact.
    pub c2: f64,
    /// Tumor loss from competition with normal tissue.
    pub c3: f64,
    /// Normal-tissue damage by tumor.
    pub c4: f64,
    /// Fractional kill of immune cells.
    pub a1_kill: f64,
    /// Fractional kill of tumor cells.
    pub a2_kill: f64,
    /// Fractional kill of normal cells.
    pub a3_kill: f64,
    /// Drug-gate safety threshold on normal density.
    pub a0: f64,
    /// Width of the smoothed gate, in cells.
    pub delta: f64,
    /// Baseline immune influx (cells/day).
    pub s: f64,
    pub rho: f64,
    pub alpha: f64,
    /// Immune decay.
    pub k1: f64,
    /// Drug decay.
    pub k2: f64,
    /// Diffusion coefficients of N, T, I, U (cm^2/day).
    pub diffusion: [f64; 4],
    /// Drug advection velocity (cm/day).
    pub h4: AdvectionVector,
}

impl Default for ParameterSet {
    fn default() -> Self {
        let b1 = 2.0e-9;
        let b2 = 1.25e-9;
        let h = 1e-6 * SECONDS_PER_DAY;
        Self {
            r1: 0.18,
            r2: 0.06,
            b1,
            b2,
            a1_allee: 0.1 / b1,
            a2_allee: 0.3 / b2,
            c1: 3.422e-10,
            c2: 1.101e-7,
            c3: 1e-11,
            c4: 2e-11,
            a1_kill: 0.2,
            a2_kill: 0.6,
            a3_kill: 0.1,
            a0: 5e7,
            delta: 1e-6 / b2,
            s: 1.3e4,
            rho: 0.1245,
            alpha: 2.019e7,
            k1: 0.0412,
            k2: 0.35,
            diffusion: [1.0e-6, 8.6e-5, 1e-4, 0.086],
            h4: AdvectionVector::new(h, h).expect("positive default"),
        }
    }
}

impl ParameterSet {
    pub fn tumor_capacity(&self) -> f64 {
        1.0 / self.b1
    }

    pub fn normal_capacity(&self) -> f64 {
        1.0 / self.b2
    }

    /// Positivity of all constants, a positive gate width, and Allee
    /// thresholds strictly below the carrying capacities.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r1", self.r1),
            ("r2", self.r2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("A1", self.a1_allee),
            ("A2", self.a2_allee),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("a1", self.a1_kill),
            ("a2", self.a2_kill),
            ("a3", self.a3_kill),
            ("a0", self.a0),
            ("delta", self.delta),
            ("s", self.s),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("k1", self.k1),
            ("k2", self.k2),
            ("D1", self.diffusion[0]),
            ("D2", self.diffusion[1]),
            ("D3", self.diffusion[2]),
            ("D4", self.diffusion[3]),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(key, format!("must be a positive finite number, got {v}")));
            }
        }
        if self.a1_allee >= self.tumor_capacity() {
            return Err(Error::param("A1", "Allee threshold must lie below 1/b1"));
        }
        if self.a2_allee >= self.normal_capacity() {
            return Err(Error::param("A2", "Allee threshold must lie below 1/b2"));
        }
        Ok(())
    }
}

/// Rectangular pulse train `v(t) = V0 * sum_n 1[t_n, t_n + tau)(t)` with
/// `t_n = (n-1) * period`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DosingSchedule {
    v0: f64,
    tau: f64,
    n_pulses: u32,
    period: f64,
}

impl DosingSchedule {
    pub fn new(v0: f64, tau: f64, n_pulses: u32, period: f64) -> Result<Self> {
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::param("v0", format!("must be positive, got {v0}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::param("tau", format!("must be positive, got {tau}")));
        }
        if n_pulses == 0 {
            return Err(Error::param("n_pulses", "need at least one pulse"));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::param("period", format!("must be positive, got {period}")));
        }
        if tau > period {
            return Err(Error::param(
                "tau",
                format!("pulse width {tau} exceeds the period {period}; pulses would overlap"),
            ));
        }
        Ok(Self {
            v0,
            tau,
            n_pulses,
            period,
        })
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn n_pulses(&self) -> u32 {
        self.n_pulses
    }
    pub fn period(&self) -> f64 {
        self.period
    }

    /// Start of pulse `n` (1-based).
    pub fn pulse_start(&self, n: u32) -> f64 {
        (n - 1) as f64 * self.period
    }

    pub fn total_dose(&self) -> f64 {
        self.v0 * self.tau * self.n_pulses as f64
    }

    /// Peak of `v(t)`; pulses never overlap so it is `V0`.
    pub fn max_rate(&self) -> f64 {
        self.v0
    }
}

/// C^1 cosine smooth-step of width `delta`.
pub fn smooth_gate(xi: f64, delta: f64) -> f64 {
    if xi <= 0.0 {
        0.0
    } else if xi >= delta {
        1.0
    } else {
        0.5 * (1.0 - (PI * xi / delta).cos())
    }
}

pub fn smooth_gate_derivative(xi: f64, delta: f64) -> f64 {
    if xi <= 0.0 || xi >= delta {
        0.0
    } else {
        0.5 * PI / delta * (PI * xi / delta).sin()
    }
}

pub fn dose_rate(schedule: &DosingSchedule, t: f64) -> f64 {
    if !(t >= 0.0) {
        return 0.0;
    }
    let pulse = (t / schedule.period).floor();
    // floor() may land one pulse high when t sits a rounding error below a start time.
    for k in [pulse - 1.0, pulse] {
        if k < 0.0 || k >= schedule.n_pulses as f64 {
            continue;
        }
        let start = k * schedule.period;
        if t >= start && t < start + schedule.tau {
            return schedule.v0;
        }
    }
    0.0
}

/// Allee-logistic growth `r u (1 - b u)(u/A - 1)` and its derivative in `u`.
#[inline]
fn allee_growth(r: f64, b: f64, a: f64, u: f64) -> (f64, f64) {
    let cap = 1.0 - b * u;
    let thr = u / a - 1.0;
    let value = r * u * cap * thr;
    let slope = r * (cap * thr - b * u * thr + u * cap / a);
    (value, slope)
}

/// Reaction right-hand sides `(F1, F2, F3, F4)` at one node.
pub fn reactions(node: [f64; 4], params: &ParameterSet, dose: f64) -> [f64; 4] {
    let [n, t, i, u] = node;
    let p = params;
    let kill = 1.0 - (-u).exp();
    let (gn, _) = allee_growth(p.r2, p.b2, p.a2_allee, n);
    let (gt, _) = allee_growth(p.r1, p.b1, p.a1_allee, t);
    [
        gn - p.c4 * t * n - p.a3_kill * kill * n,
        gt - p.c2 * i * t - p.c3 * t * n - p.a2_kill * kill * t,
        p.s + p.rho * i * t / (p.alpha + t) - p.c1 * i * t - p.k1 * i - p.a1_kill * kill * i,
        dose * smooth_gate(n - p.a0, p.delta) - p.k2 * u,
    ]
}

/// `J[k][m] = dF_k / du_m` with `u = (N, T, I, U)`.
pub fn reaction_jacobian(node: [f64; 4], params: &ParameterSet, dose: f64) -> [[f64; 4]; 4] {
    let [n, t, i, u] = node;
    let p = params;
    let e = (-u).exp();
    let kill = 1.0 - e;
    let (_, dgn) = allee_growth(p.r2, p.b2, p.a2_allee, n);
    let (_, dgt) = allee_growth(p.r1, p.b1, p.a1_allee, t);
    let sat = p.alpha + t;
    [
        [
            dgn - p.c4 * t - p.a3_kill * kill,
            -p.c4 * n,
            0.0,
            -p.a3_kill * e * n,
        ],
        [
            -p.c3 * t,
            dgt - p.c2 * i - p.c3 * n - p.a2_kill * kill,
            -p.c2 * t,
            -p.a2_kill * e * t,
        ],
        [
            0.0,
            p.rho * i * p.alpha / (sat * sat) - p.c1 * i,
            p.rho * t / sat - p.c1 * t - p.k1 - p.a1_kill * kill,
            -p.a1_kill * e * i,
        ],
        [
            dose * smooth_gate_derivative(n - p.a0, p.delta),
            0.0,
            0.0,
            -p.k2,
        ],
    ]
}

/// Which subsystem is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Normal-tumor competition; immune and drug held at zero.
    Nt,
    /// Adds the immune response; drug held at zero.
    Nti,
    /// Full four-species system with pulsed chemotherapy.
    Ntiu,
}

impl Scheme {
    pub fn active(self) -> [bool; 4] {
        match self {
            Scheme::Nt => [true, true, false, false],
            Scheme::Nti => [true, true, true, false],
            Scheme::Ntiu => [true, true, true, true],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Nt => "NT",
            Scheme::Nti => "NTI",
            Scheme::Ntiu => "NTIU",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "NT" => Some(Scheme::Nt),
            "NTI" => Some(Scheme::Nti),
            "NTIU" => Some(Scheme::Ntiu),
            _ => None,
        }
    }

    /// Zero the inputs of species the scheme does not carry.
    fn mask_inputs(self, mut node: [f64; 4]) -> [f64; 4] {
        for (v, on) in node.iter_mut().zip(self.active()) {
            if !on {
                *v = 0.0;
            }
        }
        node
    }
}

/// Node-local source term consumed by the time stepper.
pub trait ReactionSource: Sync {
    /// Species the stepper evolves; the others are carried unchanged.
    fn active(&self) -> [bool; 4];

    /// Source values at time `t` and node position `(x, y)`.
    fn eval(&self, t: f64, x: f64, y: f64, node: [f64; 4]) -> [f64; 4];

    /// `dF_k/du_k`, used by the optional diagonal-Newton acceleration.
    fn jacobian_diagonal(&self, _t: f64, _x: f64, _y: f64, _node: [f64; 4]) -> [f64; 4] {
        [0.0; 4]
    }
}

/// The model reactions restricted to one [`Scheme`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelReactions {
    pub params: ParameterSet,
    pub schedule: Option<DosingSchedule>,
    pub scheme: Scheme,
}

impl ModelReactions {
    pub fn new(params: ParameterSet, schedule: Option<DosingSchedule>, scheme: Scheme) -> Self {
        Self {
            params,
            schedule,
            scheme,
        }
    }

    pub fn dose(&self, t: f64) -> f64 {
        match (self.scheme, &self.schedule) {
            (Scheme::Ntiu, Some(s)) => dose_rate(s, t),
            _ => 0.0,
        }
    }

    pub fn rates(&self, t: f64, node: [f64; 4]) -> [f64; 4] {
        let mut f = reactions(self.scheme.mask_inputs(node), &self.params, self.dose(t));
        for (v, on) in f.iter_mut().zip(self.scheme.active()) {
            if !on {
                *v = 0.0;
            }
        }
        f
    }
}

impl ReactionSource for ModelReactions {
    fn active(&self) -> [bool; 4] {
        self.scheme.active()
    }

    fn eval(&self, t: f64, _x: f64, _y: f64, node: [f64; 4]) -> [f64; 4] {
        self.rates(t, node)
    }

    fn jacobian_diagonal(&self, t: f64, _x: f64, _y: f64, node: [f64; 4]) -> [f64; 4] {
        let j = reaction_jacobian(self.scheme.mask_inputs(node), &self.params, self.dose(t));
        let active = self.scheme.active();
        std::array::from_fn(|k| if active[k] { j[k][k] } else { 0.0 })
    }
}

/// A-priori upper bounds of N, T and U; the immune field has no closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub normal: f64,
    pub tumor: f64,
    pub drug: f64,
}

impl Envelope {
    pub fn new(params: &ParameterSet, schedule: Option<&DosingSchedule>, initial: &StateSnapshot) -> Self {
        let sup = |s: Species| initial.field(s).max().max(0.0);
        let v_max = schedule.map_or(0.0, DosingSchedule::max_rate);
        Self {
            normal: params.normal_capacity().max(params.a2_allee).max(sup(Species::Normal)),
            tumor: params.tumor_capacity().max(params.a1_allee).max(sup(Species::Tumor)),
            drug: sup(Species::Drug).max(v_max / params.k2),
        }
    }

    pub fn upper(&self, s: Species) -> Option<f64> {
        match s {
            Species::Normal => Some(self.normal),
            Species::Tumor => Some(self.tumor),
            Species::Immune => None,
            Species::Drug => Some(self.drug),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p() -> ParameterSet {
        ParameterSet::default()
    }

    #[test]
    fn default_parameters_are_valid() {
        let p = p();
        p.validate().unwrap();
        assert_eq!(p.a1_allee, 5e7);
        assert!((p.a2_allee - 2.4e8).abs() < 1e-6);
        assert!((p.delta - 800.0).abs() < 1e-9);
        assert!((p.h4.hx() - 0.0864).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut q = p();
        q.c2 = 0.0;
        assert!(matches!(q.validate(), Err(Error::InvalidParameter { key, .. }) if key == "c2"));
        let mut q = p();
        q.a1_allee = 1.0 / q.b1;
        assert!(q.validate().is_err());
        let mut q = p();
        q.delta = -1.0;
        assert!(q.validate().is_err());
    }

    #[test]
    fn gate_values() {
        let d = 800.0;
        assert!((smooth_gate(d / 2.0, d) - 0.5).abs() < 1e-15);
        assert_eq!(smooth_gate(-1.0, d), 0.0);
        assert_eq!(smooth_gate(2.0 * d, d), 1.0);
        assert!((smooth_gate(d / 4.0, d) - 0.146_446_609_406_726_24).abs() < 1e-15);
    }

    #[test]
    fn gate_is_c1_at_band_edges() {
        let d = 3.0;
        // Analytic one-sided derivatives at 0 and delta.
        let inside_at_0 = 0.5 * PI / d * (0.0f64).sin();
        let inside_at_d = 0.5 * PI / d * PI.sin();
        assert!(inside_at_0.abs() <= 1e-12);
        assert!(inside_at_d.abs() <= 1e-12);
        assert_eq!(smooth_gate_derivative(0.0, d), 0.0);
        assert_eq!(smooth_gate_derivative(d, d), 0.0);
        // Continuity of the value.
        assert!(smooth_gate(1e-12, d) < 1e-20);
        assert!(1.0 - smooth_gate(d - 1e-9, d) < 1e-15);
    }

    #[test]
    fn gate_is_monotone() {
        let d = 1.0;
        let mut prev = smooth_gate(-0.5, d);
        for k in 0..=2000 {
            let xi = -0.5 + k as f64 * 1e-3;
            let g = smooth_gate(xi, d);
            assert!(g >= prev && (0.0..=1.0).contains(&g));
            prev = g;
        }
    }

    #[test]
    fn dose_rate_cases() {
        let case1 = DosingSchedule::new(1.0, 0.3, 7, 2.0).unwrap();
        assert_eq!(dose_rate(&case1, 0.1), 1.0);
        assert_eq!(dose_rate(&case1, 0.4), 0.0);
        assert_eq!(dose_rate(&case1, 0.3), 0.0);
        assert_eq!(dose_rate(&case1, 12.0), 1.0);
        assert_eq!(dose_rate(&case1, 14.0), 0.0);
        let fig2 = DosingSchedule::new(1.0, 0.2, 7, 2.0).unwrap();
        assert_eq!(dose_rate(&fig2, 2.05), 1.0);
        assert_eq!(dose_rate(&fig2, 2.2), 0.0);
        assert_eq!(dose_rate(&fig2, 0.0), 1.0);
    }

    #[test]
    fn schedule_rejects_overlap() {
        assert!(DosingSchedule::new(1.0, 2.5, 3, 2.0).is_err());
        assert!(DosingSchedule::new(1.0, 0.0, 3, 2.0).is_err());
        assert!(DosingSchedule::new(1.0, 0.3, 0, 2.0).is_err());
    }

    #[test]
    fn left_endpoint_quadrature_recovers_total_dose() {
        for s in [
            DosingSchedule::new(1.0, 0.3, 7, 2.0).unwrap(),
            DosingSchedule::new(2.1, 0.35, 10, 2.0).unwrap(),
        ] {
            let h = s.tau() / 1000.0;
            let horizon = s.pulse_start(s.n_pulses()) + s.period();
            let steps = (horizon / h).round() as usize;
            let total: f64 = (0..steps).map(|k| dose_rate(&s, k as f64 * h) * h).sum();
            assert!((total - s.total_dose()).abs() <= 2e-3 * s.total_dose());
        }
    }

    #[test]
    fn reaction_reference_values() {
        let p = p();
        let f = reactions([0.0, 1e8, 2e5, 0.7], &p, 1.0);
        assert_eq!(f[0], 0.0);
        let f = reactions([3e8, 1e8, 0.0, 0.0], &p, 0.0);
        assert_eq!(f[2], 1.3e4);
        let f = reactions([0.0, p.a1_allee, 0.0, 0.0], &p, 0.0);
        assert_eq!(f[1], 0.0);
        let v = 3.0;
        let f = reactions([6e8, 1e8, 1e5, v / p.k2], &p, v);
        assert!(f[3].abs() < 1e-15);
    }

    #[test]
    fn jacobian_reference_values() {
        let p = p();
        let j = reaction_jacobian([0.0; 4], &p, 0.0);
        assert_eq!(j[3][3], -0.35);
        let j = reaction_jacobian([6e8, 1e8, 1e5, 0.3], &p, 3.0);
        assert_eq!(j[3][0], 0.0);
        let j = reaction_jacobian([1e7, 1e8, 1e5, 0.3], &p, 3.0);
        assert_eq!(j[3][0], 0.0);
    }

    fn scales() -> [f64; 4] {
        [8e8, 5e8, 3e5, 2.0]
    }

    fn random_state(rng: &mut ChaCha8Rng) -> [f64; 4] {
        [
            rng.gen_range(0.1..1.0) * 8e8,
            rng.gen_range(0.01..1.0) * 5e8,
            rng.gen_range(0.0..1.0) * 3e5,
            rng.gen_range(0.0..3.0),
        ]
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = p();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = scales();
        for _ in 0..1000 {
            let node = random_state(&mut rng);
            let dose = if rng.gen_bool(0.5) { 3.0 } else { 0.0 };
            let j = reaction_jacobian(node, &p, dose);
            let mut fd = [[0.0; 4]; 4];
            for m in 0..4 {
                let h = 1e-6 * s[m];
                let mut up = node;
                let mut dn = node;
                up[m] += h;
                dn[m] -= h;
                let fu = reactions(up, &p, dose);
                let fm = reactions(dn, &p, dose);
                for k in 0..4 {
                    fd[k][m] = (fu[k] - fm[k]) / (2.0 * h);
                }
            }
            // Compare in nondimensional units so all 16 entries share one scale.
            let scaled = |a: [[f64; 4]; 4], k: usize, m: usize| a[k][m] * s[m] / s[k];
            let norm = (0..16).map(|e| scaled(j, e / 4, e % 4).abs()).fold(0.0, f64::max);
            for k in 0..4 {
                for m in 0..4 {
                    let err = (scaled(j, k, m) - scaled(fd, k, m)).abs();
                    assert!(err <= 1e-6 * norm, "J[{k}][{m}] = {} vs {} at {node:?}", j[k][m], fd[k][m]);
                }
            }
        }
    }

    #[test]
    fn gate_derivative_matches_differences_in_band() {
        let p = p();
        for frac in [0.1, 0.37, 0.5, 0.81] {
            let n = p.a0 + frac * p.delta;
            let h = 1e-4 * p.delta;
            let dose = 2.0;
            let fu = reactions([n + h, 1e8, 1e5, 0.5], &p, dose)[3];
            let fm = reactions([n - h, 1e8, 1e5, 0.5], &p, dose)[3];
            let fd = (fu - fm) / (2.0 * h);
            let j = reaction_jacobian([n, 1e8, 1e5, 0.5], &p, dose)[3][0];
            assert!((j - fd).abs() <= 1e-6 * j.abs());
        }
    }

    #[test]
    fn nti_tumor_rate_is_nt_minus_immune_kill() {
        let nt = ModelReactions::new(p(), None, Scheme::Nt);
        let nti = ModelReactions::new(p(), None, Scheme::Nti);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let node = random_state(&mut rng);
            let a = nt.rates(1.0, node);
            let b = nti.rates(1.0, node);
            assert_eq!(a[0], b[0], "N equation differs between NT and NTI");
            let diff = b[1] - a[1];
            let expected = -p().c2 * node[2] * node[1];
            let roundoff = 1e-12 * (a[1].abs() + expected.abs());
            assert!((diff - expected).abs() <= roundoff);
            if expected.abs() > roundoff {
                assert!(diff < 0.0);
            }
            assert_eq!(a[2], 0.0);
            assert_eq!(a[3], 0.0);
            assert_eq!(b[3], 0.0);
        }
    }

    #[test]
    fn envelope_for_default_data() {
        let p = p();
        let g = crate::grid::GridSpec::unit_square(101).unwrap();
        let s0 = crate::grid::build_initial_state(g, &p);
        let case1 = DosingSchedule::new(1.0, 0.3, 7, 2.0).unwrap();
        let e = Envelope::new(&p, Some(&case1), &s0);
        assert!((e.normal - 8e8).abs() < 1e-6);
        assert!((e.tumor - 5e8).abs() < 1e-6);
        assert!((e.drug - 1.0 / 0.35).abs() < 1e-15);
        assert!((e.drug - 2.857).abs() < 1e-3);
        let zero = crate::grid::StateSnapshot::zeros(g, 0.0);
        let e0 = Envelope::new(&p, None, &zero);
        assert_eq!(e0.drug, 0.0);
    }

    proptest! {
        #[test]
        fn quasi_positivity(
            n in 0.0f64..2e9, t in 0.0f64..1e9, i in 0.0f64..1e6, u in 0.0f64..10.0, dose in 0.0f64..5.0
        ) {
            let p = p();
            prop_assert_eq!(reactions([0.0, t, i, u], &p, dose)[0], 0.0);
            prop_assert_eq!(reactions([n, 0.0, i, u], &p, dose)[1], 0.0);
            prop_assert!(reactions([n, t, 0.0, u], &p, dose)[2] >= 0.0);
            prop_assert!(reactions([n, t, i, 0.0], &p, dose)[3] >= 0.0);
        }

        #[test]
        fn upper_solutions_have_nonpositive_rates(
            t in 0.0f64..1e9, i in 0.0f64..1e6, u in 0.0f64..10.0, n in 0.0f64..2e9, v in 0.0f64..3.0
        ) {
            let p = p();
            let m1 = p.normal_capacity().max(p.a2_allee).max(0.6 * p.normal_capacity());
            let m2 = p.tumor_capacity().max(p.a1_allee).max(0.25 * p.tumor_capacity());
            let m3 = v / p.k2;
            prop_assert!(reactions([m1, t, i, u], &p, v)[0] <= 0.0);
            prop_assert!(reactions([n, m2, i, u], &p, v)[1] <= 0.0);
            prop_assert!(reactions([n, t, i, m3], &p, v)[3] <= 1e-15);
        }
    }
}
