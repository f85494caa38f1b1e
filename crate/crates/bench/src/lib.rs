//! Fixtures shared by the criterion benches.

use dualmenu_core::oracle::SmallInstance;
use dualmenu_core::synthesis::{synthesize, SynthesisOptions};
use dualmenu_core::{Menu, OrderingMode, Scenario};

/// Built-in `s1` at the given resolution.
pub fn s1(types: usize, cells: usize) -> Scenario {
    Scenario::s1(types, cells).expect("valid grid")
}

/// The optimal `s1` menu at weight 0.25.
pub fn synthesized_menu(scenario: &Scenario) -> Menu {
    synthesize(
        0.25,
        scenario,
        OrderingMode::MoreAverseLargerLoss,
        &SynthesisOptions::default(),
    )
    .expect("s1 synthesizes")
    .menu
}

/// A brute-force instance with slopes in `{0, 1/2, 1}`.
pub fn oracle_instance(types: usize, cells: usize) -> SmallInstance {
    SmallInstance::new(&s1(41, 201), types, cells, vec![0.0, 0.5, 1.0])
        .expect("within the oracle cap")
}
