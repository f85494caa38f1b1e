//! Optimal menus of insurance contracts for dual-utility (Yaari) agents with
//! private information about their type.
//!
//! The crate covers the full pipeline on discretized type and loss grids:
//!
//! * [`measures`]: type grids, population and welfare measures, hazard checks.
//! * [`preferences`]: distortion and loss families and the utility functionals.
//! * [`menus`]: retention/premium schedules and the incentive-compatible premium.
//! * [`synthesis`]: virtual values, regime dispatch and optimal menus.
//! * [`verification`]: IC/IR checks, structural properties, dominance search.
//! * [`oracle`]: social welfare and a brute-force optimum for small instances.

// Grid code indexes several parallel arrays per loop, and `!(x > 0.0)` is
// used on purpose so NaN fails validation.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod measures;
pub mod menus;
pub mod oracle;
pub mod preferences;
pub mod report;
pub mod scenario;
pub mod synthesis;
pub mod verification;

pub use error::{Error, Result};
pub use measures::{PowerDensity, TypeDensity, TypeGrid};
pub use menus::{Menu, PremiumSchedule, RetentionSchedule};
pub use preferences::{LossGrid, OrderingMode, Preferences};
pub use report::{AssumptionReport, CheckOutcome};
pub use scenario::Scenario;
pub use synthesis::{Regime, SynthesisOptions, SynthesisResult};
