//! Social welfare and a brute-force optimum over a finite slope alphabet.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::TypeGrid;
use crate::menus::{max_ir_premium_at, premium_from_ic, Menu, RetentionSchedule};
use crate::preferences::{LossGrid, OrderingMode};
use crate::scenario::Scenario;
use crate::synthesis::{synthesize, SynthesisOptions};
use crate::verification::{verify_ic, verify_ir, DEFAULT_TOL};

/// Largest number of assignments the oracle will enumerate.
pub const ORACLE_CAP: u64 = 2_000_000;
pub const MAX_ORACLE_TYPES: usize = 4;
pub const MAX_ORACLE_CELLS: usize = 5;
const CHUNK: u64 = 4096;

/// Feasible count and best `(welfare, index)` of one chunk.
type ChunkBest = (u64, Option<(f64, u64)>);

pub(crate) fn weighted_sum(values: &[f64], weights: &[f64]) -> f64 {
    values.iter().zip(weights).map(|(v, w)| v * w).sum()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )))
    }
}

/// `α ∫U dη + (1 - α) ∫V dμ` on the grid.
pub fn social_welfare(menu: &Menu, alpha: f64, scenario: &Scenario) -> Result<f64> {
    check_alpha(alpha)?;
    scenario.check_menu(menu)?;
    let u = weighted_sum(&scenario.agent_utilities(menu), scenario.eta_masses());
    let v = weighted_sum(&scenario.insurer_utilities(menu), scenario.mu_masses());
    Ok(alpha * u + (1.0 - alpha) * v)
}

/// Welfare rewritten by integrating the agent's utility by parts, with the
/// information-rent term integrated over the type cells.
///
/// Valid for menus whose premia come from [`premium_from_ic`]; the result
/// then agrees with [`social_welfare`] up to the quadrature error in θ.
pub fn social_welfare_by_parts(menu: &Menu, alpha: f64, scenario: &Scenario) -> Result<f64> {
    check_alpha(alpha)?;
    scenario.check_menu(menu)?;
    let n = scenario.n_types();
    let prefs = scenario.prefs();
    let loss = scenario.loss();
    let w = loss.widths();
    let wm = scenario.mu_masses();
    let r = menu.retention();
    let h = scenario.types().spacing();
    let nodes = scenario.types().nodes();

    let head =
        (1.0 - 2.0 * alpha) * (menu.premium().get(0) + scenario.retained_cost_at(0, r.row(0)));
    let mut wedge = 0.0;
    let mut outside = 0.0;
    for i in 0..n {
        let (g, gin) = (scenario.g_row(i), scenario.gin_row(i));
        let mut wi = 0.0;
        let mut oi = 0.0;
        for j in 0..w.len() {
            wi += (gin[j] - g[j]) * r.get(i, j) * w[j];
            oi += (1.0 - gin[j]) * w[j];
        }
        wedge += wm[i] * wi;
        outside += wm[i] * oi;
    }
    let mut info = 0.0;
    for m in 0..n.saturating_sub(1) {
        let mid = nodes[m] + 0.5 * h;
        let weight =
            (1.0 - alpha) * scenario.mu().survival(mid) - alpha * scenario.eta().survival(mid);
        let b: f64 = (0..w.len())
            .map(|j| prefs.composite_d_theta(mid, loss.midpoints()[j]) * r.get(m, j) * w[j])
            .sum();
        info += weight * h * b;
    }
    Ok(head - (1.0 - alpha) * wedge - info - (1.0 - alpha) * outside)
}

/// A scenario restricted to a handful of types and cells plus a finite set
/// of admissible slope values.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub scenario: Scenario,
    pub alphabet: Vec<f64>,
}

impl SmallInstance {
    /// Regrids `template` to `types × cells` over its own ranges.
    pub fn new(
        template: &Scenario,
        types: usize,
        cells: usize,
        alphabet: Vec<f64>,
    ) -> Result<Self> {
        if alphabet.is_empty() || alphabet.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParameter(
                "the slope alphabet must be a non-empty subset of [0, 1]".into(),
            ));
        }
        let assignments = (alphabet.len() as f64).powi((types * cells) as i32);
        if assignments > ORACLE_CAP as f64 {
            return Err(Error::InstanceTooLarge {
                assignments,
                cap: ORACLE_CAP,
            });
        }
        if !(1..=MAX_ORACLE_TYPES).contains(&types) || !(1..=MAX_ORACLE_CELLS).contains(&cells) {
            return Err(Error::InvalidParameter(format!(
                "oracle instances take 1 to {MAX_ORACLE_TYPES} types and 1 to {MAX_ORACLE_CELLS} cells, got {types} x {cells}"
            )));
        }
        let grid = TypeGrid::coarse(
            template.types().theta_lo(),
            template.types().theta_hi(),
            types,
        )?;
        let loss = LossGrid::new(template.loss().cap(), cells)?;
        Ok(Self {
            scenario: template.with_grids(grid, loss)?,
            alphabet,
        })
    }

    pub fn assignments(&self) -> u64 {
        (self.alphabet.len() as u64).pow((self.scenario.n_types() * self.scenario.n_cells()) as u32)
    }

    /// Slopes of assignment `index`; digit `i * cells + j` is least significant first.
    pub fn decode(&self, index: u64) -> Vec<f64> {
        let k = self.alphabet.len() as u64;
        let len = self.scenario.n_types() * self.scenario.n_cells();
        let mut rest = index;
        (0..len)
            .map(|_| {
                let d = rest % k;
                rest /= k;
                self.alphabet[d as usize]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub alpha: f64,
    pub p_base_rule: &'static str,
    /// `None` when no assignment is IC and IR.
    pub max_welfare: Option<f64>,
    pub argmax_index: Option<u64>,
    pub argmax_slopes: Option<Vec<Vec<f64>>>,
    pub argmax_premia: Option<Vec<f64>>,
    pub feasible_count: u64,
    pub total: u64,
    pub wall_time_s: f64,
}

fn candidate(inst: &SmallInstance, index: u64, cap_rule: bool) -> Result<Menu> {
    let s = &inst.scenario;
    let retention = RetentionSchedule::from_flat(s.n_types(), s.n_cells(), inst.decode(index))?;
    let base = if cap_rule {
        max_ir_premium_at(s, 0, retention.row(0))
    } else {
        0.0
    };
    Menu::on(s, retention.clone(), premium_from_ic(&retention, base, s)?)
}

/// Best welfare over every IC ∩ IR assignment of alphabet values to cells.
///
/// Premia follow the incentive-compatible rule from the lowest type's
/// participation cap when `alpha ≤ 1/2` and from zero otherwise. Ties go to
/// the smallest index, so the result does not depend on the thread count.
pub fn enumerate_optimum(inst: &SmallInstance, alpha: f64, tol: f64) -> Result<OracleResult> {
    check_alpha(alpha)?;
    let start = Instant::now();
    let total = inst.assignments();
    let cap_rule = alpha <= 0.5;
    let s = &inst.scenario;
    let chunks = total.div_ceil(CHUNK);
    let best: Vec<Result<ChunkBest>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut feasible = 0u64;
            let mut best: Option<(f64, u64)> = None;
            for index in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let menu = candidate(inst, index, cap_rule)?;
                if !verify_ic(&menu, s, tol)?.is_empty() || !verify_ir(&menu, s, tol)?.passed {
                    continue;
                }
                feasible += 1;
                let w = social_welfare(&menu, alpha, s)?;
                if best.is_none_or(|(bw, _)| w > bw) {
                    best = Some((w, index));
                }
            }
            Ok((feasible, best))
        })
        .collect();
    let mut feasible_count = 0;
    let mut overall: Option<(f64, u64)> = None;
    for b in best {
        let (f, chunk_best) = b?;
        feasible_count += f;
        if let Some((w, i)) = chunk_best {
            if overall.is_none_or(|(bw, _)| w > bw) {
                overall = Some((w, i));
            }
        }
    }
    let (argmax_slopes, argmax_premia) = match overall {
        Some((_, i)) => {
            let menu = candidate(inst, i, cap_rule)?;
            (
                Some(menu.retention().rows()),
                Some(menu.premium().as_slice().to_vec()),
            )
        }
        None => (None, None),
    };
    Ok(OracleResult {
        alpha,
        p_base_rule: if cap_rule { "lowest_type_cap" } else { "zero" },
        max_welfare: overall.map(|o| o.0),
        argmax_index: overall.map(|o| o.1),
        argmax_slopes,
        argmax_premia,
        feasible_count,
        total,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub oracle: OracleResult,
    pub synthesized_welfare: f64,
    pub synthesized_slopes: Vec<Vec<f64>>,
    pub synthesized_feasible: bool,
    pub synthesized_in_alphabet: bool,
    /// `oracle max - synthesized`; positive means the oracle found better.
    pub gap: Option<f64>,
}

/// Runs synthesis and the oracle on the same small instance.
pub fn compare_with_oracle(
    inst: &SmallInstance,
    alpha: f64,
    mode: OrderingMode,
    opts: &SynthesisOptions,
) -> Result<OracleComparison> {
    let s = &inst.scenario;
    let synth = synthesize(alpha, s, mode, opts)?;
    let oracle = enumerate_optimum(inst, alpha, DEFAULT_TOL)?;
    let feasible = verify_ic(&synth.menu, s, DEFAULT_TOL)?.is_empty()
        && verify_ir(&synth.menu, s, DEFAULT_TOL)?.passed;
    let in_alphabet = synth
        .menu
        .retention()
        .as_flat()
        .iter()
        .all(|r| inst.alphabet.contains(r));
    Ok(OracleComparison {
        gap: oracle.max_welfare.map(|m| m - synth.welfare),
        oracle,
        synthesized_welfare: synth.welfare,
        synthesized_slopes: synth.menu.retention().rows(),
        synthesized_feasible: feasible,
        synthesized_in_alphabet: in_alphabet,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::menus::PremiumSchedule;

    #[test]
    fn insurer_only_welfare_is_aggregate_v() {
        let s = Scenario::s1(11, 40).unwrap();
        let r = RetentionSchedule::constant(11, 40, 0.3).unwrap();
        let menu = Menu::on(&s, r, PremiumSchedule::constant(11, 0.1).unwrap()).unwrap();
        let v = crate::preferences::aggregate_insurer_utility(&menu, &s).unwrap();
        assert_eq!(social_welfare(&menu, 0.0, &s).unwrap(), v);
    }

    #[test]
    fn by_parts_agrees_with_direct_welfare() {
        let s = Scenario::s1(41, 201).unwrap();
        for alpha in [0.0, 0.25] {
            let res = synthesize(
                alpha,
                &s,
                OrderingMode::MoreAverseLargerLoss,
                &SynthesisOptions::default(),
            )
            .unwrap();
            let a = social_welfare(&res.menu, alpha, &s).unwrap();
            let b = social_welfare_by_parts(&res.menu, alpha, &s).unwrap();
            assert!((a - b).abs() < 1e-5, "alpha {alpha}: {a} vs {b}");
        }
    }

    #[test]
    fn instance_cap_and_shape() {
        let s = Scenario::s1(41, 10).unwrap();
        let big = SmallInstance::new(&s, 5, 6, vec![0.0, 0.5, 1.0]);
        assert!(matches!(big, Err(Error::InstanceTooLarge { .. })));
        let inst = SmallInstance::new(&s, 2, 3, vec![0.0, 1.0]).unwrap();
        assert_eq!(inst.assignments(), 64);
        assert_eq!(inst.decode(1)[0], 1.0);
        assert_eq!(inst.decode(0b100000)[5], 1.0);
    }

    #[test]
    fn single_cell_single_type_matches_sign_rule() {
        let s = Scenario::s1(41, 10).unwrap();
        let inst = SmallInstance::new(&s, 1, 1, vec![0.0, 1.0]).unwrap();
        let cmp = compare_with_oracle(
            &inst,
            0.0,
            OrderingMode::MoreAverseLargerLoss,
            &SynthesisOptions::default(),
        )
        .unwrap();
        assert!(cmp.synthesized_feasible);
        assert!(cmp.gap.unwrap().abs() <= 1e-9, "{:?}", cmp.gap);
    }

    #[test]
    fn oracle_is_thread_count_independent() {
        let s = Scenario::s1(41, 10).unwrap();
        let inst = SmallInstance::new(&s, 2, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let a = enumerate_optimum(&inst, 0.25, DEFAULT_TOL).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool
            .install(|| enumerate_optimum(&inst, 0.25, DEFAULT_TOL))
            .unwrap();
        assert_eq!(a.max_welfare, b.max_welfare);
        assert_eq!(a.argmax_index, b.argmax_index);
        assert_eq!(a.feasible_count, b.feasible_count);
    }
}
