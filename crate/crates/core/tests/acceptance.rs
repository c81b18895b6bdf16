//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ntiu::grid::Species;
use ntiu::model::{Envelope, ParameterSet, Scheme};
use ntiu::scenario::{make_case, run_scenario, ScenarioConfig};
use ntiu::stepper::StepperConfig;
use ntiu::verification::{
    conservation_audit, drug_decay_audit, mms_spatial_study, mms_temporal_study, small_grid_oracle, study_stepper,
    SpatialStudy, SPATIAL_LEVELS, TEMPORAL_STEPS,
};
use ntiu::GridSpec;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail }
}

fn bounds() -> Outcome {
    let cfg = ScenarioConfig::new(Scheme::Ntiu).with_case(1, 2.0).unwrap();
    let started = Instant::now();
    let run = run_scenario(&cfg, "case1").unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let a = &run.audit;

    // Envelopes from the parameter table: max(1/b2, A2, sup N0) and so on.
    let expected = [8e8, 5e8, 1.0 / 0.35];
    let env = Envelope::new(&cfg.params, cfg.schedule.as_ref(), &run.snapshots[0]);
    let env_ok = [env.normal, env.tumor, env.drug]
        .iter()
        .zip(expected)
        .all(|(got, want)| (got - want).abs() <= 1e-12 * want);

    let undershoot = a.worst_undershoot.iter().cloned().fold(0.0, f64::min);
    let idx = [Species::Normal, Species::Tumor, Species::Drug].map(Species::index);
    let within = idx
        .iter()
        .zip(expected)
        .all(|(&k, m)| a.running_max[k] <= m * (1.0 + 1e-9));
    let immune_ok = a.running_max[Species::Immune.index()].is_finite();
    let pass = env_ok && undershoot >= -1e-9 && within && immune_ok && a.flagged_steps == 0 && elapsed <= 120.0;
    outcome(
        1,
        "bounds",
        pass,
        format!(
            "min pre-clip/scale {undershoot:.3e}; max N {:.6e} T {:.6e} U {:.6e} (limits 8e8, 5e8, {:.6}); {} steps, {elapsed:.1} s on {} core(s)",
            a.running_max[0],
            a.running_max[1],
            a.running_max[3],
            expected[2],
            run.reports.len(),
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    )
}

fn conservation() -> Outcome {
    let grid = GridSpec::unit_square(101).unwrap();
    let r = conservation_audit(grid, &ParameterSet::default(), 1000, &StepperConfig::default()).unwrap();
    outcome(
        2,
        "conservation",
        r.diffusion_drift <= 1e-8,
        format!(
            "diffusion-only drift {:.3e} over 1000 steps (limit 1e-8); advection mass change vs boundary flux mismatch {:.3e}",
            r.diffusion_drift,
            r.flux_mismatch()
        ),
    )
}

fn orders() -> Outcome {
    let spatial = mms_spatial_study(&SPATIAL_LEVELS, &SpatialStudy::default()).unwrap();
    let temporal = mms_temporal_study(&TEMPORAL_STEPS).unwrap();
    let p = |o: Option<f64>| o.unwrap_or(f64::NAN);
    let (ps, pb, pc) = (
        p(spatial.observed_order()),
        p(temporal.cnbe.observed_order()),
        p(temporal.cn_linear.observed_order()),
    );
    outcome(
        3,
        "convergence orders",
        ps >= 1.9 && pb >= 0.9 && pc >= 1.9,
        format!(
            "spatial {ps:.4} (need 1.9, L2 errors {:?}); CNBE {pb:.4} (need 0.9); CN linear {pc:.4} (need 1.9)",
            spatial.l2
        ),
    )
}

fn oracle() -> Outcome {
    let r = small_grid_oracle(3, 1).unwrap();
    outcome(
        4,
        "dense oracle",
        r.discrepancy <= 1e-8 && r.mutated_discrepancy > 1e-8,
        format!(
            "3x3 discrepancy {:.3e} (limit 1e-8); c2 x1.01 mutation gives {:.3e}",
            r.discrepancy, r.mutated_discrepancy
        ),
    )
}

fn doses() -> Outcome {
    let want = [2.10, 2.10, 7.35, 7.35];
    let got: Vec<f64> = (1..=4).map(|c| make_case(c, 2.0).unwrap().total_dose()).collect();
    let pass = got
        .iter()
        .zip(want)
        .all(|(g, w)| (g - w).abs() <= 4.0 * f64::EPSILON * w);
    outcome(5, "dose accounting", pass, format!("totals {got:?}, expected {want:?}"))
}

fn decay() -> Outcome {
    let p = ParameterSet::default();
    let r = drug_decay_audit(100, &p, &study_stepper(0.025)).unwrap();
    outcome(
        7,
        "backward Euler decay",
        r.max_deviation <= 1e-12,
        format!("max per-step deviation {:.3e} over 100 steps (limit 1e-12)", r.max_deviation),
    )
}

/// Columns of a metrics CSV, keyed by header name.
fn read_metrics(path: &Path) -> BTreeMap<String, Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let mut cols: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.clone(), Vec::new())).collect();
    for line in lines {
        for (h, v) in header.iter().zip(line.split(',')) {
            cols.get_mut(h).unwrap().push(v.parse().unwrap());
        }
    }
    cols
}

fn at(cols: &BTreeMap<String, Vec<f64>>, name: &str, t: f64) -> f64 {
    let k = cols["t"].iter().position(|&s| (s - t).abs() < 1e-9).unwrap();
    cols[name][k]
}

fn qualitative(dir: &Path) -> Outcome {
    let runs: BTreeMap<&str, _> = ["NT", "NTI", "case1", "case2", "case3", "case4"]
        .into_iter()
        .map(|l| (l, read_metrics(&dir.join(format!("{l}_metrics.csv")))))
        .collect();
    let k_t = 1.0 / ParameterSet::default().b1;
    let cases = ["case1", "case2", "case3", "case4"];

    let nt = &runs["NT"];
    let reach = nt["t"]
        .iter()
        .zip(&nt["peak_T"])
        .filter(|(t, _)| **t <= 14.0 + 1e-9)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let a = reach >= 0.95 * k_t;

    let mut b = true;
    for t in [14.0, 28.0] {
        let lim = at(&runs["NT"], "front_area", t).min(at(&runs["NTI"], "front_area", t));
        b &= cases.iter().all(|c| at(&runs[c], "front_area", t) < lim);
    }

    let is_min = |name: &str, t: f64, who: &str| {
        let v = at(&runs[who], name, t);
        cases.iter().all(|c| v <= at(&runs[c], name, t))
    };
    let ties = |name: &str, t: f64, who: &str| {
        let v = at(&runs[who], name, t);
        cases
            .iter()
            .filter(|c| **c != who && at(&runs[*c], name, t) == v)
            .count()
    };
    let c_peak = is_min("peak_T", 14.0, "case3");
    let c_front = is_min("front_area", 14.0, "case4") && is_min("front_area", 28.0, "case4");
    let d = is_min("peak_N", 28.0, "case3");

    let list = |name: &str, t: f64| {
        cases
            .iter()
            .map(|c| format!("{c}={:.4e}", at(&runs[c], name, t)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let detail = format!(
        "(a) {} NT sup T by day 14 = {reach:.4e} vs 0.95 K_T = {:.4e}; \
         (b) {} front day 14 NT={:.4} NTI={:.4} [{}], day 28 NT={:.4} NTI={:.4} [{}]; \
         (c) {} peak_T day 14 [{}], case4 front ties at day 14/28: {}/{}; \
         (d) {} peak_N day 28 [{}]",
        if a { "ok" } else { "FAILED" },
        0.95 * k_t,
        if b { "ok" } else { "FAILED" },
        at(&runs["NT"], "front_area", 14.0),
        at(&runs["NTI"], "front_area", 14.0),
        list("front_area", 14.0),
        at(&runs["NT"], "front_area", 28.0),
        at(&runs["NTI"], "front_area", 28.0),
        list("front_area", 28.0),
        if c_peak && c_front { "ok" } else { "FAILED" },
        list("peak_T", 14.0),
        ties("front_area", 14.0, "case4"),
        ties("front_area", 28.0, "case4"),
        if d { "ok" } else { "FAILED" },
        list("peak_N", 28.0),
    );
    outcome(6, "qualitative orderings (P = 2)", a && b && c_peak && c_front && d, detail)
}

fn run_compare(dir: &Path, jobs: usize) {
    let status = Command::new(env!("CARGO_BIN_EXE_ntiu"))
        .args(["compare", "--jobs", &jobs.to_string(), "--output"])
        .arg(dir)
        .env_remove("NTIU_OUTPUT_DIR")
        .status()
        .expect("spawn ntiu");
    assert!(status.success(), "compare --jobs {jobs} exited with {status}");
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv") || n == "verdicts.txt")
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    outcome(
        8,
        "determinism",
        !names.is_empty() && differing.is_empty(),
        format!(
            "{} output files compared between --jobs 1 and --jobs 4, {} differ",
            names.len(),
            differing.len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let one = tempfile::tempdir().unwrap();
    let four = tempfile::tempdir().unwrap();
    let mut results = vec![bounds(), conservation(), orders(), oracle(), doses(), decay()];
    run_compare(one.path(), 1);
    run_compare(four.path(), 4);
    results.push(qualitative(one.path()));
    results.push(determinism(one.path(), four.path()));
    results.sort_by_key(|o| o.id);

    println!();
    for o in &results {
        println!(
            "criterion {} ({}): {}: {}",
            o.id,
            o.name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed = results.iter().filter(|o| !o.pass).count();
    println!(
        "\nacceptance: {} passed, {failed} failed ({:.0} s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
