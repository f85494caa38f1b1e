//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! with the measured quantity, then asserts.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dualmenu_cli::config::ScenarioConfig;
use dualmenu_cli::{run_alpha_sweep, RunOptions};
use dualmenu_core::measures::boundary_alpha;
use dualmenu_core::menus::check_submodular;
use dualmenu_core::oracle::{
    compare_with_oracle, social_welfare, social_welfare_by_parts, SmallInstance,
};
use dualmenu_core::preferences::{
    check_preference_assumptions, no_insurance_utility, PowerDistortion, PowerInsurer, PowerLoss,
};
use dualmenu_core::synthesis::{optimal_premiums, synthesize, theta_alpha, SynthesisResult};
use dualmenu_core::verification::{
    envelope_check, menu_ir_implications, pareto_dominance_search, verify_ic, verify_ir,
    DominanceOptions, DEFAULT_TOL,
};
use dualmenu_core::*;

const MODE1: OrderingMode = OrderingMode::MoreAverseLargerLoss;
const MODE2: OrderingMode = OrderingMode::LessAverseLargerLoss;

fn verdict(name: &str, passed: bool, detail: impl AsRef<str>) {
    println!(
        "{} {name}: {}",
        if passed { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(passed, "{name}: {}", detail.as_ref());
}

fn solve(s: &Scenario, alpha: f64, mode: OrderingMode) -> SynthesisResult {
    synthesize(alpha, s, mode, &SynthesisOptions::default()).unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn regime_dispatch_on_tilted_weight() {
    let start = Instant::now();
    let s = Scenario::s2(41, 201).unwrap();
    let b = boundary_alpha(s.mu(), s.eta()).unwrap();
    let t = theta_alpha(0.4, &s).unwrap();
    let cfg = ScenarioConfig::from_toml("scenario = \"s2\"\n").unwrap();
    let out = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out: Some(out.path().to_path_buf()),
        ..RunOptions::default()
    };
    let (rows, _) = run_alpha_sweep(&cfg, Some(&[0.1, 1.0 / 3.0, 0.4, 0.6]), &opts).unwrap();
    let regimes: Vec<Regime> = rows.iter().map(|r| r.regime).collect();
    let expected = [
        Regime::LayeredFull,
        Regime::LayeredWithPooling,
        Regime::LayeredWithPooling,
        Regime::FullCoverageZeroPremium,
    ];
    let elapsed = start.elapsed();
    verdict(
        "regime dispatch",
        (b - 1.0 / 3.0).abs() <= 1e-12
            && (t - 0.5).abs() <= 1e-8
            && regimes == expected
            && elapsed < Duration::from_secs(5),
        format!("boundary {b:.15}, theta(0.4) {t:.12}, regimes {regimes:?}, {elapsed:.2?}"),
    );
}

#[test]
fn free_full_coverage_above_half() {
    let start = Instant::now();
    let custom = ScenarioConfig::load(&configs_dir().join("custom.toml"))
        .unwrap()
        .build_scenario()
        .unwrap();
    let scenarios = [
        (Scenario::s1(41, 201).unwrap(), MODE1),
        (Scenario::s2(41, 201).unwrap(), MODE1),
        (Scenario::s3(41, 201).unwrap(), MODE2),
        (custom, MODE1),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (s, mode) in &scenarios {
        let t0 = Instant::now();
        let r = solve(s, 0.75, *mode);
        let zeros = r.menu.retention().as_flat().iter().all(|&v| v == 0.0)
            && r.menu.premium().as_slice().iter().all(|&p| p == 0.0);
        let imp = menu_ir_implications(&r.menu, s, DEFAULT_TOL).unwrap();
        let flagged = imp.p2_impossible == Some(true) && !r.ir_status.p2_ok;
        let fast = t0.elapsed() < Duration::from_secs(1);
        ok &= r.regime == Regime::FullCoverageZeroPremium && zeros && flagged && fast;
        detail.push(format!(
            "{}: zeros {zeros}, p2 {:.4} flagged {flagged}",
            s.name(),
            r.ir_status.p2_value
        ));
    }
    verdict(
        "free full coverage",
        ok,
        format!("{} ({:.2?})", detail.join("; "), start.elapsed()),
    );
}

#[test]
fn top_type_gets_full_coverage() {
    let s = Scenario::s1(41, 201).unwrap();
    let mut ok = true;
    for alpha in [0.0, 0.25] {
        let r = solve(&s, alpha, MODE1);
        ok &= r
            .menu
            .retention()
            .row(s.n_types() - 1)
            .iter()
            .all(|&v| v == 0.0);
    }
    verdict(
        "efficiency at the top",
        ok,
        "top slope row identically 0 for alpha in {0, 0.25}",
    );
}

#[test]
fn lowest_type_is_indifferent() {
    let mut worst = 0.0f64;
    for s in [
        Scenario::s1(41, 201).unwrap(),
        Scenario::s2(41, 201).unwrap(),
    ] {
        for alpha in [0.0, 0.1, 0.25, 1.0 / 3.0, 0.4, 0.5] {
            let r = solve(&s, alpha, MODE1);
            let u = s.agent_utility_at(0, r.menu.retention().row(0), r.menu.premium().get(0));
            let outside = no_insurance_utility(s.types().theta_lo(), s.prefs(), s.loss());
            worst = worst.max((u - outside).abs());
        }
    }
    verdict(
        "lowest-type indifference",
        worst <= 1e-8,
        format!("max |U_lo - U_lo(no insurance)| = {worst:.3e} over s1, s2 and six weights"),
    );
}

#[test]
fn synthesized_menu_is_ic_and_ir() {
    let start = Instant::now();
    let s = Scenario::s1(41, 201).unwrap();
    let r = solve(&s, 0.25, MODE1);
    let ic = verify_ic(&r.menu, &s, 1e-6).unwrap();
    let ir = verify_ir(&r.menu, &s, 1e-6).unwrap();
    let elapsed = start.elapsed();
    verdict(
        "IC/IR round trip",
        ic.is_empty() && ir.p1_all_ok && ir.p2_ok && elapsed < Duration::from_secs(30),
        format!(
            "{} IC violations over 41x40 pairs, worst P1 margin {:.3e}, P2 {:.6}, {elapsed:.2?}",
            ic.len(),
            ir.worst_p1_margin,
            ir.p2_value
        ),
    );
}

fn monotone_summary(s: &Scenario, r: &SynthesisResult) -> (bool, String) {
    let sub = check_submodular(r.menu.retention(), s.types(), s.loss());
    let p = r.menu.premium().as_slice();
    let premia_up = p.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let u = s.agent_utilities(&r.menu);
    let u_down = u.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    (
        sub.passed && sub.violations.is_empty() && premia_up && u_down,
        format!(
            "alpha {}: {} submodularity violations, premia non-decreasing {premia_up}, utility non-increasing {u_down}",
            r.alpha,
            sub.violations.len()
        ),
    )
}

#[test]
fn synthesized_menu_is_monotone() {
    let s = Scenario::s1(41, 201).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for alpha in [0.0, 0.25, 0.4, 0.5] {
        let (pass, d) = monotone_summary(&s, &solve(&s, alpha, MODE1));
        ok &= pass;
        detail.push(d);
    }
    verdict("monotone menu", ok, detail.join("; "));
}

#[test]
fn matches_brute_force_optimum() {
    let template = Scenario::s1(41, 201).unwrap();
    let inst = SmallInstance::new(&template, 3, 4, vec![0.0, 0.5, 1.0]).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let eight = rayon::ThreadPoolBuilder::new()
        .num_threads(8)
        .build()
        .unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for alpha in [0.0, 0.25] {
        let t1 = Instant::now();
        let a = single
            .install(|| compare_with_oracle(&inst, alpha, MODE1, &SynthesisOptions::default()))
            .unwrap();
        let d1 = t1.elapsed();
        let t8 = Instant::now();
        let b = eight
            .install(|| compare_with_oracle(&inst, alpha, MODE1, &SynthesisOptions::default()))
            .unwrap();
        let d8 = t8.elapsed();
        let gap = a.gap.expect("some assignment is feasible");
        ok &= gap.abs() <= 1e-5
            && a.oracle.total == 531_441
            && a.oracle.feasible_count == b.oracle.feasible_count
            && a.oracle.argmax_index == b.oracle.argmax_index
            && d1 < Duration::from_secs(300)
            && d8 < Duration::from_secs(60);
        detail.push(format!(
            "alpha {alpha}: gap {gap:.3e}, feasible {}/{}, 1 thread {d1:.2?}, 8 threads {d8:.2?}",
            a.oracle.feasible_count, a.oracle.total
        ));
    }
    verdict("oracle equivalence", ok, detail.join("; "));
}

#[test]
fn no_dominating_menu_found() {
    let start = Instant::now();
    let s = Scenario::s1(41, 201).unwrap();
    let r = solve(&s, 0.25, MODE1);
    let opts = DominanceOptions::default();
    let clean = pareto_dominance_search(&r.menu, &s, 0.25, 10_000, 42, &[], &opts).unwrap();

    let mut rows = r.menu.retention().rows();
    let top = rows.len() - 1;
    rows[top] = vec![1.0; s.n_cells()];
    let flipped_r = RetentionSchedule::from_rows(rows).unwrap();
    let flipped = Menu::on(
        &s,
        flipped_r.clone(),
        optimal_premiums(&flipped_r, &s).unwrap(),
    )
    .unwrap();
    let caught = pareto_dominance_search(&flipped, &s, 0.25, 10_000, 42, &[], &opts).unwrap();
    let elapsed = start.elapsed();
    verdict(
        "dominance search",
        !clean.dominated() && caught.dominated() && elapsed < Duration::from_secs(120),
        format!(
            "synthesized: 0 of {} feasible perturbations dominate ({} found); flipped top row: {} dominators; {elapsed:.2?}",
            clean.feasible, clean.dominator_count, caught.dominator_count
        ),
    );
}

#[test]
fn identity_distortions_reduce_to_expectation() {
    let u = Arc::new(PowerDensity::uniform(0.0, 1.0).unwrap());
    let neutral = Scenario::power(
        "neutral",
        TypeGrid::new(0.0, 1.0, 41).unwrap(),
        LossGrid::new(1.0, 1000).unwrap(),
        u.clone(),
        u,
        PowerDistortion::new(1.0, 0.0),
        PowerInsurer::identity(),
        PowerLoss::new(1.0, 1.0).unwrap(),
    )
    .unwrap();
    let mut mean_gap = 0.0f64;
    for &th in neutral.types().nodes() {
        // E[L] = ∫(1 - l^(1+θ)) dl = (1+θ)/(2+θ).
        let exact = -(1.0 + th) / (2.0 + th);
        mean_gap =
            mean_gap.max((no_insurance_utility(th, neutral.prefs(), neutral.loss()) - exact).abs());
    }
    let mut welfare_gap = 0.0f64;
    for (s, alpha) in [
        (&neutral, 0.25),
        (&neutral, 0.0),
        (&Scenario::s1(41, 201).unwrap(), 0.25),
        (&Scenario::s1(41, 201).unwrap(), 0.0),
    ] {
        let r = solve(s, alpha, MODE1);
        let direct = social_welfare(&r.menu, alpha, s).unwrap();
        let parts = social_welfare_by_parts(&r.menu, alpha, s).unwrap();
        welfare_gap = welfare_gap.max((direct - parts).abs());
    }
    verdict(
        "dual-utility degeneracy",
        mean_gap <= 1e-6 && welfare_gap <= 1e-5,
        format!("max |U_out + E[L]| = {mean_gap:.3e} at 1000 cells; max |W - W_by_parts| = {welfare_gap:.3e}"),
    );
}

#[test]
fn envelope_identity_at_interior_nodes() {
    let s = Scenario::s1(41, 201).unwrap();
    let mut worst = 0.0f64;
    let mut node = 0.0f64;
    for alpha in [0.0, 0.25] {
        let rep = envelope_check(&solve(&s, alpha, MODE1).menu, &s, 1e-6).unwrap();
        worst = worst.max(rep.max_gap);
        node = node.max(rep.max_node_gap);
    }
    verdict(
        "envelope identity",
        worst <= 1e-4,
        format!("max one-sided gap {worst:.3e} at 39 interior nodes (node-to-node central difference: {node:.3e})"),
    );
}

#[test]
fn alternative_ordering_scenario() {
    let s = Scenario::s3(41, 201).unwrap();
    let assumptions = check_preference_assumptions(s.prefs(), MODE2, s.types(), s.loss());
    let mut ok = assumptions.passed;
    let mut detail = vec![format!("mode-2 assumptions {}", assumptions.passed)];
    for alpha in [0.0, 0.25] {
        let r = solve(&s, alpha, MODE2);
        let top = r
            .menu
            .retention()
            .row(s.n_types() - 1)
            .iter()
            .all(|&v| v == 0.0);
        let u = s.agent_utility_at(0, r.menu.retention().row(0), r.menu.premium().get(0));
        let indiff = (u - no_insurance_utility(0.0, s.prefs(), s.loss())).abs();
        let ic = verify_ic(&r.menu, &s, 1e-6).unwrap();
        let (mono, m) = monotone_summary(&s, &r);
        ok &= top && indiff <= 1e-8 && ic.is_empty() && r.ir_status.passed && mono;
        detail.push(format!(
            "alpha {alpha}: top row 0 {top}, indifference {indiff:.1e}, IC violations {}, IR {}, {m}",
            ic.len(),
            r.ir_status.passed
        ));
    }
    verdict("alternative ordering", ok, detail.join("; "));
}

fn run_cli(args: &[&str], threads: &str) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dualmenu"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .unwrap()
}

fn read_artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let mut bytes = std::fs::read(&p).unwrap();
            if name == "oracle.json" {
                // Wall-clock time is the one field expected to differ.
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
                v["oracle"]["wall_time_s"] = serde_json::Value::Null;
                bytes = serde_json::to_vec(&v).unwrap();
            }
            (name, bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "scenario = \"s1\"\nalpha = 0.25\nseed = 9\n[grid]\ntype_nodes = 21\nloss_cells = 60\n\
         [dominance]\ntrials = 300\n[oracle]\ntype_nodes = 2\nloss_cells = 3\n[sweep]\nalphas = [0.1, 0.25, 0.5, 0.75]\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let menu = format!("{out_s}/menu.csv");
    let mut runs = Vec::new();
    for threads in ["1", "4", "4"] {
        if out.exists() {
            std::fs::remove_dir_all(&out).unwrap();
        }
        for cmd in ["synthesize", "oracle-compare", "alpha-sweep", "conditions"] {
            let o = run_cli(&["--config", cfg, "--out", out_s, cmd], threads);
            assert!(
                o.status.success(),
                "{cmd}: {}",
                String::from_utf8_lossy(&o.stderr)
            );
        }
        let o = run_cli(
            &[
                "--config",
                cfg,
                "--out",
                out_s,
                "--menu",
                &menu,
                "verify",
                "--properties",
            ],
            threads,
        );
        assert!(
            o.status.success(),
            "verify: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        runs.push(read_artifacts(&out));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    verdict(
        "determinism",
        runs[0] == runs[1] && runs[1] == runs[2] && names.len() == 7,
        format!(
            "{} artifacts identical across 3 runs (1 and 4 workers): {names:?}",
            names.len()
        ),
    );
}
