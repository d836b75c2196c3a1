//! Acceptance suite: one PASS/FAIL line per criterion, then a single
//! assertion over all of them.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use common::{backward_elimination, random_instance};
use see_core::experiment::Experiment;
use see_core::threads::pool;
use see_core::{
    cdf_iteration, exact_removable, extract_zone, horizon_iteration, maximum_feasible_zone, parse_config_str,
    verify_run, FeasibleZone, LipschitzSpec, OracleLimits, Pruner, RunStatus, SeeConfig, Summary, Witnesses,
};

type Outcome = Result<String, String>;

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn record(&mut self, name: &str, outcome: Outcome) {
        let (ok, detail) = match outcome {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((name.to_string(), ok, detail));
    }
}

fn config(system: &str, overrides: &[&str]) -> SeeConfig {
    let text = format!(r#"{{"system": "{system}"}}"#);
    let overrides: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    parse_config_str(&text, &overrides).expect("valid config")
}

fn run_to(cfg: SeeConfig, out: &Path) -> Result<Summary, String> {
    let exp = Experiment::new(cfg, None).map_err(|e| e.to_string())?;
    exp.run(Some(out)).map(|(_, s)| s).map_err(|e| e.to_string())
}

fn row(s: &Summary) -> String {
    let r = &s.summary;
    format!(
        "{} iterations, recall {}, UD {} / {}, {:?}",
        r.iterations,
        r.recall_text(),
        r.ud_inside_text(),
        r.ud_outside_text(),
        r.status
    )
}

fn recall(s: &Summary) -> f64 {
    s.summary.recall.unwrap_or(0.0)
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn verify_ok(out: &Path) -> Result<usize, String> {
    let report = verify_run(out).map_err(|e| e.to_string())?;
    if report.ok() {
        Ok(report.checks)
    } else {
        Err(report.failures.join("; "))
    }
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_1(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let s = run_to(config("double_integrator", &[]), &tmp.join("c1"))?;
    let r = &s.summary;
    let secs = start.elapsed().as_secs_f64();
    check(
        r.recall_text() == "100.00"
            && (6..=10).contains(&r.iterations)
            && r.ud_inside_text() == "0.0"
            && (r.ud_outside - 5.6).abs() <= 1.0
            && r.status == RunStatus::Equilibrium
            && secs < 300.0,
        format!("{} in {secs:.1}s", row(&s)),
    )
}

fn criterion_2(tmp: &Path) -> Outcome {
    let mut recalls = Vec::new();
    let mut text = Vec::new();
    // The default constant is sqrt(3), usually quoted as 1.73.
    for (i, l) in ["default", "1.90", "2.00", "2.50"].iter().enumerate() {
        let set = format!("L={l}");
        let overrides: Vec<&str> = if i == 0 { vec![] } else { vec![set.as_str()] };
        let s = run_to(config("double_integrator", &overrides), &tmp.join(format!("c2_{i}")))?;
        recalls.push(recall(&s));
        text.push(format!("L={l}: {}", row(&s)));
    }
    let monotone = recalls.windows(2).all(|w| w[1] <= w[0]);
    check(
        monotone && recalls[0] == 100.0 && recalls[1] == 100.0 && recalls[2] < 2.0 && recalls[3] < 2.0,
        text.join(" | "),
    )
}

fn criterion_3(tmp: &Path) -> Outcome {
    let s = run_to(config("double_integrator", &["rx=0", "ru=0"]), &tmp.join("c3"))?;
    check(s.summary.iterations == 1 && recall(&s) < 1.0, row(&s))
}

fn criterion_4(tmp: &Path) -> Outcome {
    let within = |s: &Summary| {
        let r = &s.summary;
        (recall(s) - 52.05).abs() <= 5.0 && (11..=17).contains(&r.iterations) && (r.ud_inside - 6.4).abs() <= 2.0
    };
    let mut text = Vec::new();
    let mut any = false;
    for integrator in ["semi_implicit", "explicit"] {
        for split in [true, false] {
            let mut overrides = vec![format!("integrator={integrator}")];
            if !split {
                overrides.extend(["Lx=null".to_string(), "Lu=null".to_string()]);
            }
            let refs: Vec<&str> = overrides.iter().map(String::as_str).collect();
            let name = format!("{integrator}{}", if split { "+split" } else { "+joint" });
            match run_to(config("pendulum", &refs), &tmp.join(format!("c4_{name}"))) {
                Ok(s) => {
                    any |= within(&s);
                    text.push(format!("{name}: {}", row(&s)));
                }
                Err(e) => text.push(format!("{name}: {e}")),
            }
        }
    }
    check(any, text.join(" | "))
}

fn criterion_5(tmp: &Path) -> Outcome {
    let runs: [(&str, &str, Vec<&str>); 3] = [
        ("double_integrator", "c5_di", vec![]),
        // The default pendulum constants are below its slope; use a
        // joint constant above the measured 7.81.
        ("pendulum", "c5_pendulum", vec!["L=8", "Lx=null", "Lu=null", "calibration=strict"]),
        ("unicycle", "c5_unicycle", vec![]),
    ];
    let mut text = Vec::new();
    let mut ok = true;
    for (system, dir, overrides) in runs {
        let out = tmp.join(dir);
        let s = run_to(config(system, &overrides), &out)?;
        match verify_ok(&out) {
            Ok(n) => text.push(format!("{system}: {n} checks, {}", row(&s))),
            Err(e) => {
                ok = false;
                text.push(format!("{system}: {e}"));
            }
        }
        ok &= s.summary.violations == 0 && s.summary.status == RunStatus::Equilibrium;
    }
    // Earlier strict runs of this suite are checked as well.
    for dir in ["c1", "c2_0", "c2_1", "c2_2", "c2_3", "c3"] {
        if let Err(e) = verify_ok(&tmp.join(dir)) {
            ok = false;
            text.push(format!("{dir}: {e}"));
        }
    }
    check(ok, text.join(" | "))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let limits = OracleLimits {
        max_pairs: 24,
        max_candidates: 4,
    };
    let (mut zones, mut removals, mut truths) = (0, 0, 0);
    let mut failures = Vec::new();
    for seed in 0..200u64 {
        let inst = random_instance(seed, 8, 3, 4);
        let (sys, model) = (&inst.system, &inst.model);
        let zone = extract_zone(&horizon_iteration(model, sys));
        if zone != backward_elimination(model, sys) {
            failures.push(format!("seed {seed}: zone differs from backward elimination"));
        }
        zones += 1;
        let collapsed = model.collapse_known_with(&zone, sys);
        let slope = sys.max_slope().max(0.1);
        for l in [0.5, 1.0, 2.0, slope] {
            let spec = LipschitzSpec::joint(l);
            for witnesses in [Witnesses::All, Witnesses::Data] {
                let pruner = Pruner {
                    witnesses,
                    ..Pruner::new(spec)
                };
                match pruner.prune(&collapsed, &zone, sys) {
                    Ok(out) => {
                        for r in &out.removals {
                            removals += 1;
                            if !exact_removable(&collapsed, r.vertex, sys, &spec, &limits).map_err(|e| e.to_string())? {
                                failures.push(format!("seed {seed}: L={l} removed {:?} unjustly", r.vertex));
                            }
                        }
                        if l == slope {
                            truths += 1;
                            if !out.model.check_well_calibrated(sys).0 {
                                failures.push(format!("seed {seed}: truth removed at measured slope {l}"));
                            }
                        }
                    }
                    Err(e) if l == slope => failures.push(format!("seed {seed}: {e}")),
                    Err(_) => {}
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        failures.push(format!("took {secs:.1}s"));
    }
    let detail = format!(
        "{zones} systems, {removals} removals confirmed, {truths} truth checks, {secs:.1}s{}",
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    check(failures.is_empty(), detail)
}

fn criterion_7(tmp: &Path) -> Outcome {
    let mut zones: Vec<FeasibleZone> = Vec::new();
    for gamma in ["0.5", "0.9", "0.99"] {
        let cfg = config("double_integrator", &[&format!("gamma={gamma}")]);
        let exp = Experiment::new(cfg, None).map_err(|e| e.to_string())?;
        let (run, _) = exp.run(None).map_err(|e| e.to_string())?;
        zones.push(run.final_zone.clone());
        let g: f64 = gamma.parse().unwrap();
        for model in [&exp.initial, &run.final_model] {
            let values = cdf_iteration(model, &exp.system, g);
            let mask = values.iter().map(|&v| v == 0.0).collect();
            let from_cdf = FeasibleZone::from_mask(mask, exp.system.num_actions());
            if from_cdf != maximum_feasible_zone(model, &exp.system).map_err(|e| e.to_string())? {
                return Err(format!("gamma {gamma}: zero set of the decay function differs from the zone"));
            }
        }
    }
    let _ = tmp;
    check(
        zones.windows(2).all(|w| w[0] == w[1]),
        format!("final zones of {} pairs for gamma 0.5, 0.9, 0.99", zones[0].len()),
    )
}

fn criterion_8(tmp: &Path) -> Outcome {
    let mut trees = Vec::new();
    for threads in [1usize, 8] {
        let out = tmp.join(format!("c8_{threads}"));
        let pool = pool(threads).map_err(|e| e.to_string())?;
        pool.install(|| run_to(config("double_integrator", &[]), &out))?;
        trees.push(files(&out));
    }
    let differing: Vec<&String> = trees[0]
        .iter()
        .filter(|(k, v)| trees[1].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    check(
        differing.is_empty() && trees[0].len() == trees[1].len(),
        format!("{} files compared, differing: {differing:?}", trees[0].len()),
    )
}

fn unicycle(tmp: &Path) -> Outcome {
    let out = tmp.join("unicycle");
    let s = run_to(config("unicycle", &[]), &out)?;
    let iterations: Vec<&see_core::driver::IterationRecord> = s.iterations.iter().collect();
    let monotone = iterations.windows(2).all(|w| w[0].zone_pairs <= w[1].zone_pairs);
    let r = &s.summary;
    check(
        monotone && r.violations == 0 && r.status == RunStatus::Equilibrium && r.iterations <= 15,
        format!("{} (recall reported, not asserted)", row(&s)),
    )
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let tmp = tmp.path();
    let mut report = Report { lines: Vec::new() };
    report.record("criterion 1 (double integrator defaults)", criterion_1(tmp));
    report.record("criterion 2 (double integrator L sweep)", criterion_2(tmp));
    report.record("criterion 3 (no known region)", criterion_3(tmp));
    report.record("criterion 4 (pendulum defaults and integrator/constant variants)", criterion_4(tmp));
    report.record("criterion 5 (invariants of every run)", criterion_5(tmp));
    report.record("criterion 6 (oracle equivalence on random systems)", criterion_6());
    report.record("criterion 7 (gamma independence)", criterion_7(tmp));
    report.record("criterion 8 (thread-count determinism)", criterion_8(tmp));
    report.record("unicycle (expansion, safety, equilibrium within 15)", unicycle(tmp));
    let failed: Vec<&str> = report.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    println!("{} of {} criteria passed", report.lines.len() - failed.len(), report.lines.len());
    assert!(failed.is_empty(), "failed: {failed:?}");
}
