use std::sync::Arc;

use proptest::prelude::*;

use dualmenu_core::measures::{cdf_quadrature_gap, check_hazard_dominance, survival_ratio};
use dualmenu_core::menus::{check_submodular, premium_from_ic};
use dualmenu_core::preferences::{agent_utility, retained_cost};
use dualmenu_core::synthesis::{optimal_premiums, regime_for, synthesize};
use dualmenu_core::verification::{envelope_check, menu_properties, verify_ic, verify_ir};
use dualmenu_core::*;

fn mode_for(s: &Scenario) -> OrderingMode {
    if s.name() == "s3" {
        OrderingMode::LessAverseLargerLoss
    } else {
        OrderingMode::MoreAverseLargerLoss
    }
}

/// Rows sorted so every cell is non-increasing in the type index.
fn submodular_rows(n: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..=1.0, m), n).prop_map(move |mut rows| {
        for j in 0..m {
            let mut col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            for (i, v) in col.into_iter().enumerate() {
                rows[i][j] = v;
            }
        }
        rows
    })
}

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    prop_oneof![Just("s1"), Just("s2"), Just("s3")]
        .prop_map(|name| Scenario::builtin(name, 9, 24).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn density_integrates_to_cdf(exp in prop::sample::select(vec![0.0, 1.0, 2.0, 3.0]), reflected: bool) {
        let d = PowerDensity::new(0.0, 1.0, exp, reflected).unwrap();
        let grid = TypeGrid::new(0.0, 1.0, 41).unwrap();
        prop_assert!(cdf_quadrature_gap(&d, &grid) <= 1e-8);
    }

    #[test]
    fn survival_ratio_monotone_under_dominance(
        e_mu in 0.0f64..3.0, e_eta in 0.0f64..3.0, r_mu: bool, r_eta: bool,
    ) {
        let mu = PowerDensity::new(0.0, 1.0, e_mu, r_mu).unwrap();
        let eta = PowerDensity::new(0.0, 1.0, e_eta, r_eta).unwrap();
        let grid = TypeGrid::new(0.0, 1.0, 41).unwrap();
        prop_assert!((survival_ratio(&eta, &mu, 0.0) - 1.0).abs() <= 1e-10);
        let rep = check_hazard_dominance(&mu, &eta, &grid);
        if rep.passed {
            let ratios: Vec<f64> = grid.nodes()[..40].iter().map(|&t| survival_ratio(&eta, &mu, t)).collect();
            for w in ratios.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-10, "{:?}", w);
            }
        }
    }

    #[test]
    fn premium_shifts_utility_one_for_one(
        theta in 0.0f64..=1.0,
        slopes in prop::collection::vec(0.0f64..=1.0, 30),
        p1 in -5.0f64..5.0, p2 in -5.0f64..5.0,
    ) {
        let s = Scenario::s1(5, 30).unwrap();
        let a = agent_utility(theta, &slopes, p1, s.prefs(), s.loss()).unwrap() + p1;
        let b = agent_utility(theta, &slopes, p2, s.prefs(), s.loss()).unwrap() + p2;
        let cost = retained_cost(theta, &slopes, s.prefs(), s.loss()).unwrap();
        prop_assert!((a - b).abs() <= 8.0 * f64::EPSILON * (1.0 + p1.abs().max(p2.abs())));
        prop_assert!((a + cost).abs() <= 8.0 * f64::EPSILON * (1.0 + p1.abs().max(p2.abs())));
    }

    #[test]
    fn utility_is_affine_in_slopes(
        theta in 0.0f64..=1.0,
        r1 in prop::collection::vec(0.0f64..=1.0, 30),
        r2 in prop::collection::vec(0.0f64..=1.0, 30),
        a in 0.0f64..=1.0, p in 0.0f64..0.5,
    ) {
        let s = Scenario::s1(5, 30).unwrap();
        let mix: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let u = |r: &[f64]| agent_utility(theta, r, p, s.prefs(), s.loss()).unwrap();
        let lhs = u(&mix);
        let rhs = a * u(&r1) + (1.0 - a) * u(&r2);
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn insurer_less_pessimistic_on_grid(s in scenario_strategy()) {
        for i in 0..s.n_types() {
            for (gin, g) in s.gin_row(i).iter().zip(s.g_row(i)) {
                prop_assert!(gin - g >= -1e-12);
            }
        }
    }

    #[test]
    fn submodular_menus_from_premium_rule_are_ic(
        s in scenario_strategy(),
        rows in submodular_rows(9, 24),
        p_base in -0.5f64..0.5,
    ) {
        let r = RetentionSchedule::from_rows(rows).unwrap();
        prop_assert!(check_submodular(&r, s.types(), s.loss()).passed);
        let p = premium_from_ic(&r, p_base, &s).unwrap();
        let menu = Menu::on(&s, r, p).unwrap();
        prop_assert!(verify_ic(&menu, &s, 1e-9).unwrap().is_empty());
        prop_assert!(menu_properties(&menu, &s, false).unwrap().check("premium_nondecreasing").unwrap().passed);
    }

    #[test]
    fn envelope_matches_partial_derivative(s in scenario_strategy(), rows in submodular_rows(9, 24)) {
        let r = RetentionSchedule::from_rows(rows).unwrap();
        let menu = Menu::on(&s, r.clone(), optimal_premiums(&r, &s).unwrap()).unwrap();
        let rep = envelope_check(&menu, &s, 1e-6).unwrap();
        prop_assert!(rep.max_gap <= 1e-4, "{}", rep.max_gap);
    }

    #[test]
    fn participation_round_trip(s in scenario_strategy(), rows in submodular_rows(9, 24)) {
        let r = RetentionSchedule::from_rows(rows).unwrap();
        let menu = Menu::on(&s, r.clone(), optimal_premiums(&r, &s).unwrap()).unwrap();
        let ic = verify_ic(&menu, &s, 1e-9).unwrap();
        let ir = verify_ir(&menu, &s, 1e-9).unwrap();
        prop_assert!(ic.is_empty());
        prop_assert!(ir.lowest_type_p1_ok);
        // The lowest type's participation carries over to every type.
        prop_assert!(ir.p1_all_ok);
        prop_assert_eq!(ir.passed, ir.p2_ok);
        prop_assert_eq!(ir.shortcut_verdict, ir.passed);
    }

    #[test]
    fn exactly_one_regime(alpha in 0.0f64..=1.0, boundary in 0.0f64..=0.5) {
        let regime = regime_for(alpha, boundary);
        let expected = if alpha == 0.0 {
            Regime::InsurerOnly
        } else if alpha == 1.0 {
            Regime::AgentOnly
        } else if alpha > 0.5 + 1e-12 {
            Regime::FullCoverageZeroPremium
        } else if alpha < boundary - 1e-12 {
            Regime::LayeredFull
        } else {
            Regime::LayeredWithPooling
        };
        prop_assert_eq!(regime, expected);
    }

    #[test]
    fn synthesized_menus_are_monotone_and_bind_lowest_type(
        s in scenario_strategy(),
        alpha in 0.0f64..=0.5,
    ) {
        let res = synthesize(alpha, &s, mode_for(&s), &SynthesisOptions::default()).unwrap();
        if res.j_monotone.passed || res.j_monotone.sign_monotone {
            prop_assert!(check_submodular(res.menu.retention(), s.types(), s.loss()).passed);
        }
        let props = menu_properties(&res.menu, &s, true).unwrap();
        prop_assert!(props.passed, "{:?}", props.checks);
        // Insurer participation is reported, not guaranteed, by the characterization.
        prop_assert!(res.ir_status.p1_all_ok);
        prop_assert!(verify_ic(&res.menu, &s, 1e-9).unwrap().is_empty());
    }

    #[test]
    fn menu_serialization_round_trips(rows in submodular_rows(9, 24), p_base in -1.0f64..1.0) {
        let s = Scenario::s1(9, 24).unwrap();
        let r = RetentionSchedule::from_rows(rows).unwrap();
        let menu = Menu::on(&s, r.clone(), premium_from_ic(&r, p_base, &s).unwrap()).unwrap();
        let j = Menu::from_json(&menu.to_json()).unwrap();
        let c = Menu::from_csv(&menu.to_csv()).unwrap();
        prop_assert_eq!(j.retention(), menu.retention());
        prop_assert_eq!(j.premium(), menu.premium());
        prop_assert_eq!(c.retention(), menu.retention());
        prop_assert_eq!(c.premium(), menu.premium());
    }
}

#[test]
fn custom_family_scenario_synthesizes() {
    use dualmenu_core::preferences::{FnDistortion, FnInsurer, FnLoss};
    let prefs = Preferences::new(
        Arc::new(FnDistortion::new("exp", |th, t: f64| {
            t.powf(1.0 + 0.5 * th)
        })),
        Arc::new(FnInsurer::new("id", |t| t)),
        Arc::new(FnLoss::new("lin", 1.0, |_, l| l)),
    );
    let u = Arc::new(PowerDensity::uniform(0.0, 1.0).unwrap());
    let s = Scenario::new(
        "custom",
        TypeGrid::new(0.0, 1.0, 11).unwrap(),
        LossGrid::new(1.0, 40).unwrap(),
        u.clone(),
        u,
        prefs,
    )
    .unwrap();
    let res = synthesize(
        0.25,
        &s,
        OrderingMode::MoreAverseLargerLoss,
        &SynthesisOptions::default(),
    )
    .unwrap();
    assert!(verify_ic(&res.menu, &s, 1e-9).unwrap().is_empty());
    assert!(res.menu.retention().row(10).iter().all(|&r| r == 0.0));
}
