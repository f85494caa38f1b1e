//! Incentive compatibility, participation, structural properties of optimal
//! menus, the participation implications, a randomized dominance search and
//! the envelope check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::menus::{max_ir_premium_at, premium_from_ic, Menu, RetentionSchedule};
use crate::oracle::{social_welfare, weighted_sum};
use crate::preferences::agent_utility;
use crate::report::{CheckBuilder, CheckOutcome};
use crate::scenario::Scenario;
use crate::synthesis::{Regime, SynthesisResult};

/// Default absolute tolerance on utilities for IC and IR.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Tolerance of the lowest-type indifference and zero-coverage checks.
pub const BINDING_TOL: f64 = 1e-8;
const ORDER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// Type `theta` gains by taking the contract of `theta_other`.
    IncentiveCompatibility,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationRecord {
    pub kind: ViolationKind,
    pub theta: f64,
    pub theta_other: Option<f64>,
    pub loss: Option<f64>,
    /// Utility gain of the deviation; always positive.
    pub magnitude: f64,
}

/// Pairwise incentive compatibility on the type grid.
///
/// Every ordered pair is examined. The per-type integrals are cached, and a
/// handful of cached entries are re-derived from the families directly on
/// each call as a guard against table drift.
pub fn verify_ic(menu: &Menu, scenario: &Scenario, tol: f64) -> Result<Vec<ViolationRecord>> {
    scenario.check_menu(menu)?;
    let n = scenario.n_types();
    let nodes = scenario.types().nodes();
    let r = menu.retention();
    let p = menu.premium();
    let rows: Vec<Vec<ViolationRecord>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = scenario.agent_utility_at(i, r.row(i), p.get(i));
            (0..n)
                .filter(|&k| k != i)
                .filter_map(|k| {
                    let dev = scenario.agent_utility_at(i, r.row(k), p.get(k));
                    (dev > own + tol).then(|| ViolationRecord {
                        kind: ViolationKind::IncentiveCompatibility,
                        theta: nodes[i],
                        theta_other: Some(nodes[k]),
                        loss: None,
                        magnitude: dev - own,
                    })
                })
                .collect()
        })
        .collect();
    audit_cache(menu, scenario);
    Ok(rows.into_iter().flatten().collect())
}

/// Re-evaluates five `(type, contract)` pairs from the families and panics if
/// the cached tables disagree.
fn audit_cache(menu: &Menu, scenario: &Scenario) {
    let n = scenario.n_types();
    let mut state = (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (scenario.n_cells() as u64);
    for _ in 0..5 {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let i = ((state >> 33) as usize) % n;
        let k = ((state >> 13) as usize) % n;
        let cached = scenario.agent_utility_at(i, menu.retention().row(k), menu.premium().get(k));
        let direct = agent_utility(
            scenario.types().nodes()[i],
            menu.retention().row(k),
            menu.premium().get(k),
            scenario.prefs(),
            scenario.loss(),
        )
        .expect("menu slopes were validated on construction");
        assert!(
            (cached - direct).abs() <= 1e-12,
            "cached utility {cached} differs from direct evaluation {direct} at ({i}, {k})"
        );
    }
}

/// Participation of every type (P1) and of the insurer in aggregate (P2).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IRReport {
    pub tol: f64,
    pub p1_ok: Vec<bool>,
    /// `max_ir_premium - premium` per type.
    pub p1_margins: Vec<f64>,
    pub p1_all_ok: bool,
    pub worst_p1_margin: f64,
    pub worst_p1_theta: f64,
    pub p2_value: f64,
    pub p2_ok: bool,
    pub passed: bool,
    pub lowest_type_p1_ok: bool,
    /// Verdict from the lowest type's P1 and P2 alone, which decides
    /// participation for incentive-compatible menus.
    pub shortcut_verdict: bool,
}

pub fn verify_ir(menu: &Menu, scenario: &Scenario, tol: f64) -> Result<IRReport> {
    scenario.check_menu(menu)?;
    let n = scenario.n_types();
    let nodes = scenario.types().nodes();
    let margins: Vec<f64> = (0..n)
        .map(|i| max_ir_premium_at(scenario, i, menu.retention().row(i)) - menu.premium().get(i))
        .collect();
    let p1_ok: Vec<bool> = margins.iter().map(|&m| m >= -tol).collect();
    let (worst_i, worst) =
        margins.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (i, &m)| if m < acc.1 { (i, m) } else { acc },
        );
    let p2_value = weighted_sum(&scenario.insurer_utilities(menu), scenario.mu_masses());
    let p2_ok = p2_value >= -tol;
    let p1_all_ok = p1_ok.iter().all(|&b| b);
    Ok(IRReport {
        tol,
        lowest_type_p1_ok: p1_ok[0],
        shortcut_verdict: p1_ok[0] && p2_ok,
        p1_ok,
        p1_margins: margins,
        p1_all_ok,
        worst_p1_margin: worst,
        worst_p1_theta: nodes[worst_i],
        p2_value,
        p2_ok,
        passed: p1_all_ok && p2_ok,
    })
}

/// How a menu's rows look as a whole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowClass {
    FullCoverage,
    ZeroCoverage,
    Partial,
}

fn classify(row: &[f64]) -> RowClass {
    if row.iter().all(|&r| r == 0.0) {
        RowClass::FullCoverage
    } else if row.iter().all(|&r| r == 1.0) {
        RowClass::ZeroCoverage
    } else {
        RowClass::Partial
    }
}

/// The partial-coverage sufficient condition between nodes `i` and `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialRowCheck {
    pub type_index: usize,
    /// `[g - g^In](F)·∂θ r ≥ -g^In'(F)·∂θF·(1 - r)` at every cell.
    pub condition_holds: bool,
    pub worst_slack: f64,
    /// `V_{i+1} - V_i`.
    pub v_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InsurerProfile {
    pub classes: Vec<RowClass>,
    pub utilities: Vec<f64>,
    pub partial_rows: Vec<PartialRowCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    pub insurer_profile: InsurerProfile,
}

impl PropertyReport {
    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Structural properties of a synthesized menu.
pub fn verify_optimal_properties(
    result: &SynthesisResult,
    scenario: &Scenario,
) -> Result<PropertyReport> {
    let binding = matches!(
        result.regime,
        Regime::LayeredFull | Regime::LayeredWithPooling | Regime::InsurerOnly
    );
    menu_properties(&result.menu, scenario, binding)
}

/// The property suite for any menu. `lowest_binding` states whether the
/// lowest type is expected to be indifferent to not insuring; when it is not,
/// that check is informational.
pub fn menu_properties(
    menu: &Menu,
    scenario: &Scenario,
    lowest_binding: bool,
) -> Result<PropertyReport> {
    scenario.check_menu(menu)?;
    let n = scenario.n_types();
    let m = scenario.n_cells();
    let nodes = scenario.types().nodes();
    let mids = scenario.loss().midpoints();
    let r = menu.retention();
    let p = menu.premium().as_slice();

    let mut a = CheckBuilder::new("slopes_nonincreasing", true, ORDER_TOL);
    for i in 0..n.saturating_sub(1) {
        for j in 0..m {
            a.observe(r.get(i, j) - r.get(i + 1, j), &[nodes[i + 1], mids[j]]);
        }
    }
    let mut b = CheckBuilder::new("premium_nondecreasing", true, ORDER_TOL);
    for i in 0..n.saturating_sub(1) {
        b.observe(p[i + 1] - p[i], &[nodes[i + 1]]);
    }
    let mut c = CheckBuilder::new("top_zero_retention", true, 0.0);
    for j in 0..m {
        c.observe(-r.get(n - 1, j), &[nodes[n - 1], mids[j]]);
    }
    let u = scenario.agent_utilities(menu);
    let outside = scenario.outside_options();
    let mut d = CheckBuilder::new("lowest_type_indifference", lowest_binding, BINDING_TOL);
    d.observe(-(u[0] - outside[0]).abs(), &[nodes[0]]);
    let mut e = CheckBuilder::new("agent_utility_nonincreasing", true, ORDER_TOL);
    for i in 0..n.saturating_sub(1) {
        e.observe(u[i] - u[i + 1], &[nodes[i + 1]]);
    }

    let v = scenario.insurer_utilities(menu);
    let classes: Vec<RowClass> = (0..n).map(|i| classify(r.row(i))).collect();
    let mut f_full = CheckBuilder::new("insurer_full_coverage_nonincreasing", true, ORDER_TOL);
    let mut f_zero = CheckBuilder::new("insurer_zero_coverage_zero", true, BINDING_TOL);
    for i in 0..n {
        if classes[i] == RowClass::ZeroCoverage {
            f_zero.observe(-v[i].abs(), &[nodes[i]]);
        }
        if i + 1 < n
            && classes[i] == RowClass::FullCoverage
            && classes[i + 1] == RowClass::FullCoverage
        {
            f_full.observe(v[i] - v[i + 1], &[nodes[i + 1]]);
        }
    }
    let mut partial_rows = Vec::new();
    let h = scenario.types().spacing();
    let prefs = scenario.prefs();
    for i in 0..n.saturating_sub(1) {
        if classes[i] != RowClass::Partial {
            continue;
        }
        let (f, g, gin) = (scenario.f_row(i), scenario.g_row(i), scenario.gin_row(i));
        let mut worst = f64::INFINITY;
        for j in 0..m {
            let dr = (r.get(i + 1, j) - r.get(i, j)) / h;
            let df = prefs.loss.d_theta(nodes[i], mids[j]);
            let lhs = (g[j] - gin[j]) * dr;
            let rhs = -prefs.insurer.d_t(f[j]) * df * (1.0 - r.get(i, j));
            worst = worst.min(lhs - rhs);
        }
        partial_rows.push(PartialRowCheck {
            type_index: i,
            condition_holds: worst >= -ORDER_TOL,
            worst_slack: worst,
            v_change: v[i + 1] - v[i],
        });
    }
    let checks = vec![
        a.finish(),
        b.finish(),
        c.finish(),
        d.finish(),
        e.finish(),
        f_full.finish(),
        f_zero.finish(),
    ];
    let passed = checks.iter().filter(|c| c.required).all(|c| c.passed);
    Ok(PropertyReport {
        passed,
        checks,
        insurer_profile: InsurerProfile {
            classes,
            utilities: v,
            partial_rows,
        },
    })
}

/// Menu-wide coverage class used by the participation implications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MenuClass {
    FullCoverage,
    FullCoverageZeroPremium,
    ZeroCoverage,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImplicationReport {
    pub class: MenuClass,
    /// Left side of the class's inequality (`∫∫ g^In(F)` for the coverage
    /// classes, `max |V|` for zero coverage).
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
    pub p2_value: f64,
    pub p2_ok: bool,
    /// Whether `holds` agrees with P2, as it must when the lowest type is
    /// held at its participation cap.
    pub consistent_with_p2: bool,
    /// For free full coverage: `g^In(F) < 1` somewhere, so P2 cannot hold.
    pub p2_impossible: Option<bool>,
}

pub fn verify_ir_implications(
    result: &SynthesisResult,
    scenario: &Scenario,
) -> Result<ImplicationReport> {
    menu_ir_implications(&result.menu, scenario, DEFAULT_TOL)
}

/// Checks the inequality that participation reduces to for the menu's class.
///
/// For mixed menus the general form is
/// `∫∫ g^In(F) ≥ ∫ g_lo(F_lo) + ∫U dμ - U_lo + ∫∫ (g^In - g)(F) r`,
/// which covers the pure classes as special cases.
pub fn menu_ir_implications(
    menu: &Menu,
    scenario: &Scenario,
    tol: f64,
) -> Result<ImplicationReport> {
    scenario.check_menu(menu)?;
    let n = scenario.n_types();
    let w = scenario.loss().widths();
    let wm = scenario.mu_masses();
    let r = menu.retention();
    let p = menu.premium().as_slice();
    let classes: Vec<RowClass> = (0..n).map(|i| classify(r.row(i))).collect();
    let class = if classes.iter().all(|&c| c == RowClass::FullCoverage) {
        if p.iter().all(|&v| v == 0.0) {
            MenuClass::FullCoverageZeroPremium
        } else {
            MenuClass::FullCoverage
        }
    } else if classes.iter().all(|&c| c == RowClass::ZeroCoverage) {
        MenuClass::ZeroCoverage
    } else {
        MenuClass::Mixed
    };
    let ir = verify_ir(menu, scenario, tol)?;

    let integrate_gin: f64 = weighted_sum(
        &(0..n)
            .map(|i| {
                scenario
                    .gin_row(i)
                    .iter()
                    .zip(w)
                    .map(|(g, w)| g * w)
                    .sum::<f64>()
            })
            .collect::<Vec<_>>(),
        wm,
    );
    let g_lo: f64 = scenario.g_row(0).iter().zip(w).map(|(g, w)| g * w).sum();
    let (lhs, rhs, holds) = match class {
        MenuClass::ZeroCoverage => {
            let v = scenario.insurer_utilities(menu);
            let worst = v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (worst, BINDING_TOL, worst <= BINDING_TOL)
        }
        MenuClass::FullCoverage | MenuClass::FullCoverageZeroPremium => {
            (integrate_gin, g_lo, integrate_gin >= g_lo - tol)
        }
        MenuClass::Mixed => {
            let u = scenario.agent_utilities(menu);
            let wedge: Vec<f64> = (0..n)
                .map(|i| {
                    let (g, gin) = (scenario.g_row(i), scenario.gin_row(i));
                    (0..w.len())
                        .map(|j| (gin[j] - g[j]) * r.get(i, j) * w[j])
                        .sum()
                })
                .collect();
            let rhs = g_lo + weighted_sum(&u, wm) - u[0] + weighted_sum(&wedge, wm);
            (integrate_gin, rhs, integrate_gin >= rhs - tol)
        }
    };
    let p2_impossible = (class == MenuClass::FullCoverageZeroPremium)
        .then(|| (0..n).any(|i| scenario.gin_row(i).iter().any(|&g| g < 1.0 - 1e-12)));
    Ok(ImplicationReport {
        class,
        lhs,
        rhs,
        slack: if class == MenuClass::ZeroCoverage {
            rhs - lhs
        } else {
            lhs - rhs
        },
        holds,
        p2_value: ir.p2_value,
        p2_ok: ir.p2_ok,
        consistent_with_p2: holds == ir.p2_ok,
        p2_impossible,
    })
}

/// Where a dominating menu came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DominatorSource {
    Trial,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dominator {
    pub source: DominatorSource,
    pub index: usize,
    pub v_gain: f64,
    pub min_u_gain: f64,
    pub max_u_gain: f64,
    pub strict_v: bool,
    pub strict_u: bool,
    pub welfare_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub seed: u64,
    pub trials: usize,
    pub candidates: usize,
    /// Perturbed or seeded menus passing IC and IR.
    pub feasible: usize,
    pub base_ic_ok: bool,
    pub base_ir_ok: bool,
    pub dominator_count: usize,
    /// The first few dominators in trial order, then candidates.
    pub dominators: Vec<Dominator>,
}

impl DominanceReport {
    pub fn dominated(&self) -> bool {
        self.dominator_count > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceOptions {
    pub tol: f64,
    /// Losses smaller than this do not break weak improvement.
    pub weak_tol: f64,
    /// Gains must exceed this to count as strict.
    pub strict_tol: f64,
}

impl Default for DominanceOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            weak_tol: 1e-12,
            strict_tol: 1e-9,
        }
    }
}

const MAX_RECORDED_DOMINATORS: usize = 64;

struct Baseline {
    u: Vec<f64>,
    v: f64,
    welfare: f64,
}

/// Whether `challenger` is IC and IR, and the dominance record if it
/// dominates the baseline.
fn compare(
    challenger: &Menu,
    base: &Baseline,
    alpha: f64,
    scenario: &Scenario,
    opts: &DominanceOptions,
    source: DominatorSource,
    index: usize,
) -> Result<(bool, Option<Dominator>)> {
    if !verify_ic(challenger, scenario, opts.tol)?.is_empty() {
        return Ok((false, None));
    }
    if !verify_ir(challenger, scenario, opts.tol)?.passed {
        return Ok((false, None));
    }
    let u = scenario.agent_utilities(challenger);
    let v = weighted_sum(
        &scenario.insurer_utilities(challenger),
        scenario.mu_masses(),
    );
    let gains: Vec<f64> = u.iter().zip(&base.u).map(|(a, b)| a - b).collect();
    let min_u = gains.iter().copied().fold(f64::INFINITY, f64::min);
    let max_u = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v_gain = v - base.v;
    let weak = min_u >= -opts.weak_tol && v_gain >= -opts.weak_tol;
    let strict_v = v_gain > opts.strict_tol;
    let strict_u = gains
        .iter()
        .zip(scenario.mu_masses())
        .any(|(g, w)| *w > 0.0 && *g > opts.strict_tol);
    if weak && (strict_v || strict_u) {
        let welfare = social_welfare(challenger, alpha, scenario)?;
        Ok((
            true,
            Some(Dominator {
                source,
                index,
                v_gain,
                min_u_gain: min_u,
                max_u_gain: max_u,
                strict_v,
                strict_u,
                welfare_gain: welfare - base.welfare,
            }),
        ))
    } else {
        Ok((true, None))
    }
}

fn perturb(base: &Menu, scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<Menu> {
    let n = scenario.n_types();
    let m = scenario.n_cells();
    let mut slopes = base.retention().as_flat().to_vec();
    let i0 = rng.random_range(0..n);
    let i1 = rng.random_range(i0..n);
    let (j0, j1) = match rng.random_range(0..3) {
        0 => {
            let a = rng.random_range(0..m);
            (a, rng.random_range(a..m))
        }
        1 => (0, rng.random_range(0..m)),
        _ => (rng.random_range(0..m), m - 1),
    };
    let target = match rng.random_range(0..3) {
        0 => 0.0,
        1 => 1.0,
        _ => 0.5,
    };
    let step = if rng.random_bool(0.5) { 1.0 } else { 0.5 };
    for i in i0..=i1 {
        for j in j0..=j1 {
            let s = &mut slopes[i * m + j];
            *s = if step == 1.0 {
                target
            } else {
                *s + step * (target - *s)
            };
        }
    }
    let retention = RetentionSchedule::from_flat(n, m, slopes)?;
    let cap = max_ir_premium_at(scenario, 0, retention.row(0));
    let shave = if rng.random_bool(0.2) {
        0.01 * rng.random::<f64>()
    } else {
        0.0
    };
    let premia = premium_from_ic(&retention, cap - shave, scenario)?;
    Menu::on(scenario, retention, premia)
}

/// Randomized search for an IC ∩ IR menu that weakly improves every type and
/// the insurer's aggregate, with at least one strict gain.
///
/// Trial `t` draws from a ChaCha8 stream keyed by `(seed, t)`, perturbs a
/// block of slopes toward 0, 1 or 1/2 and rebuilds premia from the lowest
/// type's cap (occasionally shaved). `candidates` are extra menus to test
/// as challengers. Results do not depend on the thread count.
pub fn pareto_dominance_search(
    menu: &Menu,
    scenario: &Scenario,
    alpha: f64,
    trials: usize,
    seed: u64,
    candidates: &[Menu],
    opts: &DominanceOptions,
) -> Result<DominanceReport> {
    scenario.check_menu(menu)?;
    for c in candidates {
        scenario.check_menu(c)?;
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let base = Baseline {
        u: scenario.agent_utilities(menu),
        v: weighted_sum(&scenario.insurer_utilities(menu), scenario.mu_masses()),
        welfare: social_welfare(menu, alpha, scenario)?,
    };
    let base_ic_ok = verify_ic(menu, scenario, opts.tol)?.is_empty();
    let base_ir_ok = verify_ir(menu, scenario, opts.tol)?.passed;

    let outcomes: Vec<Result<(bool, Option<Dominator>)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let challenger = perturb(menu, scenario, &mut rng)?;
            compare(
                &challenger,
                &base,
                alpha,
                scenario,
                opts,
                DominatorSource::Trial,
                t,
            )
        })
        .collect();
    let mut seeded = Vec::with_capacity(candidates.len());
    for (k, c) in candidates.iter().enumerate() {
        seeded.push(compare(
            c,
            &base,
            alpha,
            scenario,
            opts,
            DominatorSource::Candidate,
            k,
        ));
    }

    let mut feasible = 0;
    let mut dominator_count = 0;
    let mut dominators = Vec::new();
    for o in outcomes.into_iter().chain(seeded) {
        let (ok, dom) = o?;
        feasible += usize::from(ok);
        if let Some(d) = dom {
            dominator_count += 1;
            if dominators.len() < MAX_RECORDED_DOMINATORS {
                dominators.push(d);
            }
        }
    }
    Ok(DominanceReport {
        seed,
        trials,
        candidates: candidates.len(),
        feasible,
        base_ic_ok,
        base_ir_ok,
        dominator_count,
        dominators,
    })
}

/// One interior node of the envelope check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub theta: f64,
    /// Forward difference of the indirect utility.
    pub right_fd: f64,
    /// `∫ ∂θ[g_θ(F_θ)] r_i dl` for the node's own contract.
    pub right_partial: f64,
    /// Backward difference of the indirect utility.
    pub left_fd: f64,
    /// The same integral for the contract of the node below.
    pub left_partial: f64,
    /// Central difference of own-contract utilities across neighbouring nodes.
    pub node_fd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeReport {
    pub eps: f64,
    pub points: Vec<EnvelopePoint>,
    /// Largest one-sided gap between difference quotient and integral.
    pub max_gap: f64,
    /// Largest gap of the node-to-node central difference (discretization
    /// error, reported for reference).
    pub max_node_gap: f64,
}

/// Envelope identity at the interior nodes: the indirect utility
/// `θ ↦ max_k U_θ(r_k, p_k)` has one-sided derivatives equal to
/// `∫ ∂θ[g_θ(F_θ)] r dl` for the contract chosen on that side.
pub fn envelope_check(menu: &Menu, scenario: &Scenario, eps: f64) -> Result<EnvelopeReport> {
    scenario.check_menu(menu)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "envelope step must be positive, got {eps}"
        )));
    }
    let n = scenario.n_types();
    let nodes = scenario.types().nodes();
    let h = scenario.types().spacing();
    let prefs = scenario.prefs();
    let loss = scenario.loss();
    let r = menu.retention();
    let p = menu.premium();
    let indirect = |theta: f64| -> f64 {
        let weights: Vec<f64> = loss
            .midpoints()
            .iter()
            .zip(loss.widths())
            .map(|(&l, &w)| (1.0 - prefs.composite(theta, l)) * w)
            .collect();
        (0..n)
            .map(|k| {
                let cost: f64 = weights.iter().zip(r.row(k)).map(|(a, b)| a * b).sum();
                -p.get(k) - cost
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let partial = |i: usize, row: &[f64]| -> f64 {
        scenario
            .dgf_row(i)
            .iter()
            .zip(row)
            .zip(loss.widths())
            .map(|((d, r), w)| d * r * w)
            .sum()
    };
    let u = scenario.agent_utilities(menu);
    let mut points = Vec::new();
    let (mut max_gap, mut max_node_gap) = (0.0f64, 0.0f64);
    for i in 1..n.saturating_sub(1) {
        let th = nodes[i];
        let mid = indirect(th);
        let right_fd = (indirect(th + eps) - mid) / eps;
        let left_fd = (mid - indirect(th - eps)) / eps;
        let right_partial = partial(i, r.row(i));
        let left_partial = partial(i, r.row(i - 1));
        let node_fd = (u[i + 1] - u[i - 1]) / (2.0 * h);
        max_gap = max_gap
            .max((right_fd - right_partial).abs())
            .max((left_fd - left_partial).abs());
        max_node_gap = max_node_gap.max((node_fd - right_partial).abs());
        points.push(EnvelopePoint {
            theta: th,
            right_fd,
            right_partial,
            left_fd,
            left_partial,
            node_fd,
        });
    }
    Ok(EnvelopeReport {
        eps,
        points,
        max_gap,
        max_node_gap,
    })
}
