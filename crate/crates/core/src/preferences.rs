//! Distortion and loss families, dual-utility (Choquet) evaluation and the
//! agent/insurer utility functionals.
//!
//! All loss integrals use the composite midpoint rule on a uniform [`LossGrid`].

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{TypeGrid, ASSUMPTION_TOL};
use crate::menus::Menu;
use crate::report::{AssumptionReport, CheckBuilder};
use crate::scenario::Scenario;

/// Finite-difference step for families without analytic derivatives.
pub const FD_STEP: f64 = 1e-5;
const FD_STEP_2: f64 = 1e-4;
/// Slack allowed when validating slopes.
pub const SLOPE_TOL: f64 = 1e-12;

fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

/// Central difference that falls back to one-sided near the ends of `[lo, hi]`.
fn central_within(f: impl Fn(f64) -> f64, x: f64, lo: f64, hi: f64) -> f64 {
    let h = FD_STEP;
    if x - h < lo {
        (f(x + h) - f(x)) / h
    } else if x + h > hi {
        (f(x) - f(x - h)) / h
    } else {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }
}

fn second(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = FD_STEP_2;
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}

fn second_within(f: impl Fn(f64) -> f64, x: f64, lo: f64, hi: f64) -> f64 {
    let h = FD_STEP_2;
    let c = x.clamp(lo + h, hi - h);
    (f(c + h) - 2.0 * f(c) + f(c - h)) / (h * h)
}

/// A type-indexed family of distortion functions `g_θ(t)`.
///
/// Only `eval` is mandatory. The derivative methods default to finite
/// differences (step [`FD_STEP`]), which are accurate to roughly 1e-9; built-in
/// families override them with closed forms.
pub trait DistortionFamily: Send + Sync + fmt::Debug {
    fn eval(&self, theta: f64, t: f64) -> f64;

    fn d_theta(&self, theta: f64, t: f64) -> f64 {
        central(|x| self.eval(x, t), theta)
    }
    fn d_t(&self, theta: f64, t: f64) -> f64 {
        central_within(|x| self.eval(theta, x), t, 0.0, 1.0)
    }
    fn d2_theta(&self, theta: f64, t: f64) -> f64 {
        second(|x| self.eval(x, t), theta)
    }
    fn d2_t(&self, theta: f64, t: f64) -> f64 {
        second_within(|x| self.eval(theta, x), t, 0.0, 1.0)
    }
    fn d2_mixed(&self, theta: f64, t: f64) -> f64 {
        central(|x| self.d_t(x, t), theta)
    }
    /// Declared Lipschitz bound in `t`, if any.
    fn lipschitz_t(&self) -> Option<f64> {
        None
    }
    /// Declared Lipschitz bound in θ, if any.
    fn lipschitz_theta(&self) -> Option<f64> {
        None
    }
    fn analytic_derivatives(&self) -> bool {
        false
    }
}

/// The insurer's distortion `g^In(t)`.
pub trait InsurerDistortion: Send + Sync + fmt::Debug {
    fn eval(&self, t: f64) -> f64;
    fn d_t(&self, t: f64) -> f64 {
        central_within(|x| self.eval(x), t, 0.0, 1.0)
    }
}

/// A type-indexed family of loss cdfs `F_θ(l)` on `[0, loss_cap]`.
pub trait LossFamily: Send + Sync + fmt::Debug {
    fn loss_cap(&self) -> f64;
    fn cdf(&self, theta: f64, l: f64) -> f64;
    fn d_theta(&self, theta: f64, l: f64) -> f64 {
        central(|x| self.cdf(x, l), theta)
    }
    fn d2_theta(&self, theta: f64, l: f64) -> f64 {
        second(|x| self.cdf(x, l), theta)
    }
    fn lipschitz_theta(&self) -> Option<f64> {
        None
    }
    fn analytic_derivatives(&self) -> bool {
        false
    }
}

/// `g_θ(t) = t^(base + gamma·θ)`. With `gamma > 0` higher types are more risk
/// averse; with `gamma < 0` they are less averse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerDistortion {
    pub base: f64,
    pub gamma: f64,
}

impl PowerDistortion {
    pub fn new(base: f64, gamma: f64) -> Self {
        Self { base, gamma }
    }

    pub fn exponent(&self, theta: f64) -> f64 {
        self.base + self.gamma * theta
    }

    /// Checks that the exponent stays positive over the type range.
    pub fn validate(&self, grid: &TypeGrid) -> Result<()> {
        let a = self
            .exponent(grid.theta_lo())
            .min(self.exponent(grid.theta_hi()));
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "distortion exponent base + gamma*theta must stay positive, min is {a}"
            )));
        }
        Ok(())
    }
}

/// `t^a` with the conventions needed at `t = 0`.
fn pow_at(t: f64, a: f64) -> f64 {
    if t <= 0.0 {
        if a > 0.0 {
            0.0
        } else if a == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        t.powf(a)
    }
}

impl DistortionFamily for PowerDistortion {
    fn eval(&self, theta: f64, t: f64) -> f64 {
        if t >= 1.0 {
            return 1.0;
        }
        pow_at(t, self.exponent(theta))
    }
    fn d_theta(&self, theta: f64, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        self.gamma * t.ln() * t.powf(self.exponent(theta))
    }
    fn d_t(&self, theta: f64, t: f64) -> f64 {
        let a = self.exponent(theta);
        a * pow_at(t.min(1.0), a - 1.0)
    }
    fn d2_theta(&self, theta: f64, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        let ln = t.ln();
        self.gamma * self.gamma * ln * ln * t.powf(self.exponent(theta))
    }
    fn d2_t(&self, theta: f64, t: f64) -> f64 {
        let a = self.exponent(theta);
        if a == 1.0 {
            return 0.0;
        }
        a * (a - 1.0) * pow_at(t.min(1.0), a - 2.0)
    }
    fn d2_mixed(&self, theta: f64, t: f64) -> f64 {
        let a = self.exponent(theta);
        if t <= 0.0 {
            return if a > 1.0 {
                0.0
            } else {
                f64::NEG_INFINITY * self.gamma.signum()
            };
        }
        let t = t.min(1.0);
        self.gamma * t.powf(a - 1.0) * (1.0 + a * t.ln())
    }
    fn analytic_derivatives(&self) -> bool {
        true
    }
}

/// `g^In(t) = t^beta`; `beta = 1` is the risk-neutral insurer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerInsurer {
    pub beta: f64,
}

impl PowerInsurer {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "insurer exponent must be positive, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn identity() -> Self {
        Self { beta: 1.0 }
    }
}

impl InsurerDistortion for PowerInsurer {
    fn eval(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 1.0;
        }
        if self.beta == 1.0 {
            return t.max(0.0);
        }
        pow_at(t, self.beta)
    }
    fn d_t(&self, t: f64) -> f64 {
        if self.beta == 1.0 {
            return 1.0;
        }
        self.beta * pow_at(t.min(1.0), self.beta - 1.0)
    }
}

/// `F_θ(l) = (l / cap)^(1 + kappa·θ)`. With `kappa > 0` higher types face
/// stochastically larger losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLoss {
    pub cap: f64,
    pub kappa: f64,
}

impl PowerLoss {
    pub fn new(cap: f64, kappa: f64) -> Result<Self> {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss cap must be positive, got {cap}"
            )));
        }
        Ok(Self { cap, kappa })
    }

    pub fn exponent(&self, theta: f64) -> f64 {
        1.0 + self.kappa * theta
    }

    pub fn validate(&self, grid: &TypeGrid) -> Result<()> {
        let a = self
            .exponent(grid.theta_lo())
            .min(self.exponent(grid.theta_hi()));
        if !(a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss exponent 1 + kappa*theta must stay positive, min is {a}"
            )));
        }
        Ok(())
    }
}

impl LossFamily for PowerLoss {
    fn loss_cap(&self) -> f64 {
        self.cap
    }
    fn cdf(&self, theta: f64, l: f64) -> f64 {
        let x = l / self.cap;
        if x >= 1.0 {
            return 1.0;
        }
        pow_at(x, self.exponent(theta))
    }
    fn d_theta(&self, theta: f64, l: f64) -> f64 {
        let x = l / self.cap;
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        self.kappa * x.ln() * x.powf(self.exponent(theta))
    }
    fn d2_theta(&self, theta: f64, l: f64) -> f64 {
        let x = l / self.cap;
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        let ln = x.ln();
        self.kappa * self.kappa * ln * ln * x.powf(self.exponent(theta))
    }
    fn analytic_derivatives(&self) -> bool {
        true
    }
}

type Fn2 = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Fn1 = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied distortion family; derivatives by finite differences.
pub struct FnDistortion {
    name: String,
    f: Fn2,
}

impl FnDistortion {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

impl fmt::Debug for FnDistortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnDistortion({})", self.name)
    }
}

impl DistortionFamily for FnDistortion {
    fn eval(&self, theta: f64, t: f64) -> f64 {
        (self.f)(theta, t)
    }
}

/// A user-supplied insurer distortion.
pub struct FnInsurer {
    name: String,
    f: Fn1,
}

impl FnInsurer {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

impl fmt::Debug for FnInsurer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnInsurer({})", self.name)
    }
}

impl InsurerDistortion for FnInsurer {
    fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }
}

/// A user-supplied loss family.
pub struct FnLoss {
    name: String,
    cap: f64,
    f: Fn2,
}

impl FnLoss {
    pub fn new(
        name: impl Into<String>,
        cap: f64,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            cap,
            f: Box::new(f),
        }
    }
}

impl fmt::Debug for FnLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnLoss({}, cap={})", self.name, self.cap)
    }
}

impl LossFamily for FnLoss {
    fn loss_cap(&self) -> f64 {
        self.cap
    }
    fn cdf(&self, theta: f64, l: f64) -> f64 {
        (self.f)(theta, l)
    }
}

/// The three families that make up a preference specification.
#[derive(Debug, Clone)]
pub struct Preferences {
    pub agent: Arc<dyn DistortionFamily>,
    pub insurer: Arc<dyn InsurerDistortion>,
    pub loss: Arc<dyn LossFamily>,
}

impl Preferences {
    pub fn new(
        agent: Arc<dyn DistortionFamily>,
        insurer: Arc<dyn InsurerDistortion>,
        loss: Arc<dyn LossFamily>,
    ) -> Self {
        Self {
            agent,
            insurer,
            loss,
        }
    }

    /// `g_θ(F_θ(l))`.
    pub fn composite(&self, theta: f64, l: f64) -> f64 {
        self.agent.eval(theta, self.loss.cdf(theta, l))
    }

    /// `∂/∂θ g_θ(F_θ(l))` by the chain rule.
    pub fn composite_d_theta(&self, theta: f64, l: f64) -> f64 {
        let f = self.loss.cdf(theta, l);
        let df = self.loss.d_theta(theta, l);
        let dg = self.agent.d_theta(theta, f);
        if df == 0.0 {
            dg
        } else {
            dg + self.agent.d_t(theta, f) * df
        }
    }
}

/// Uniform partition of `[0, loss_cap]` into cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossGrid {
    cap: f64,
    nodes: Vec<f64>,
    widths: Vec<f64>,
    midpoints: Vec<f64>,
}

impl LossGrid {
    pub fn new(cap: f64, cells: usize) -> Result<Self> {
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "loss cap must be positive, got {cap}"
            )));
        }
        if cells == 0 {
            return Err(Error::InvalidGrid(
                "loss grid needs at least one cell".into(),
            ));
        }
        let nodes: Vec<f64> = (0..=cells)
            .map(|j| {
                if j == cells {
                    cap
                } else {
                    cap * j as f64 / cells as f64
                }
            })
            .collect();
        let widths = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let midpoints = nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self {
            cap,
            nodes,
            widths,
            midpoints,
        })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }
    /// Cell edges, `cells + 1` values from 0 to the cap.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }
    pub fn cells(&self) -> usize {
        self.widths.len()
    }

    pub fn same_shape(&self, other: &LossGrid) -> bool {
        self.cap == other.cap && self.cells() == other.cells()
    }
}

/// Rejects slopes outside `[0, 1]` (with [`SLOPE_TOL`] slack) or of the wrong length.
pub fn validate_slopes(slopes: &[f64], grid: &LossGrid, type_index: usize) -> Result<()> {
    if slopes.len() != grid.cells() {
        return Err(Error::GridMismatch(format!(
            "slope row has {} cells, loss grid has {}",
            slopes.len(),
            grid.cells()
        )));
    }
    for (cell, &value) in slopes.iter().enumerate() {
        if !(-SLOPE_TOL..=1.0 + SLOPE_TOL).contains(&value) {
            return Err(Error::InvalidSlope {
                type_index,
                cell,
                value,
            });
        }
    }
    Ok(())
}

/// `U_θ(L, 0) = -∫ [1 - g_θ(F_θ(l))] dl`.
pub fn no_insurance_utility(theta: f64, prefs: &Preferences, grid: &LossGrid) -> f64 {
    let mut acc = 0.0;
    for (&l, &w) in grid.midpoints().iter().zip(grid.widths()) {
        acc += (1.0 - prefs.composite(theta, l)) * w;
    }
    -acc
}

/// `∫ [1 - g_θ(F_θ(l))] r(l) dl`, the distorted expected retained loss.
pub fn retained_cost(
    theta: f64,
    slopes: &[f64],
    prefs: &Preferences,
    grid: &LossGrid,
) -> Result<f64> {
    validate_slopes(slopes, grid, 0)?;
    let mut acc = 0.0;
    for ((&l, &w), &r) in grid.midpoints().iter().zip(grid.widths()).zip(slopes) {
        acc += (1.0 - prefs.composite(theta, l)) * r * w;
    }
    Ok(acc)
}

/// `U_θ(R, p) = -p - ∫ [1 - g_θ(F_θ(l))] r(l) dl`.
pub fn agent_utility(
    theta: f64,
    slopes: &[f64],
    premium: f64,
    prefs: &Preferences,
    grid: &LossGrid,
) -> Result<f64> {
    Ok(-premium - retained_cost(theta, slopes, prefs, grid)?)
}

/// `∫ [1 - g^In(F_θ(l))] (1 - r(l)) dl`, the distorted expected indemnity.
pub fn indemnity_cost(
    theta: f64,
    slopes: &[f64],
    prefs: &Preferences,
    grid: &LossGrid,
) -> Result<f64> {
    validate_slopes(slopes, grid, 0)?;
    let mut acc = 0.0;
    for ((&l, &w), &r) in grid.midpoints().iter().zip(grid.widths()).zip(slopes) {
        acc += (1.0 - prefs.insurer.eval(prefs.loss.cdf(theta, l))) * (1.0 - r) * w;
    }
    Ok(acc)
}

/// `V_θ(R, p) = p - ∫ [1 - g^In(F_θ(l))] (1 - r(l)) dl`.
pub fn insurer_utility(
    theta: f64,
    slopes: &[f64],
    premium: f64,
    prefs: &Preferences,
    grid: &LossGrid,
) -> Result<f64> {
    Ok(premium - indemnity_cost(theta, slopes, prefs, grid)?)
}

/// `∫ V_θ dμ(θ)` over the type grid with dual-cell masses.
pub fn aggregate_insurer_utility(menu: &Menu, scenario: &Scenario) -> Result<f64> {
    scenario.check_menu(menu)?;
    let v = scenario.insurer_utilities(menu);
    Ok(v.iter().zip(scenario.mu_masses()).map(|(v, w)| v * w).sum())
}

/// Which ordering of risk aversion and loss size across types is assumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    /// Higher types are weakly more risk averse and face larger losses.
    #[serde(alias = "mode1")]
    MoreAverseLargerLoss,
    /// Higher types are weakly less risk averse, but the loss effect dominates.
    #[serde(alias = "mode2")]
    LessAverseLargerLoss,
}

fn t_probe() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

/// Pointwise checks of the preference assumptions on the `(θ, t)` and `(θ, l)`
/// probe grids. Declared Lipschitz bounds are checked when present.
pub fn check_preference_assumptions(
    prefs: &Preferences,
    mode: OrderingMode,
    types: &TypeGrid,
    loss: &LossGrid,
) -> AssumptionReport {
    let tol = ASSUMPTION_TOL;
    let exact = 1e-12;
    let ts = t_probe();
    let g = &prefs.agent;
    let gin = &prefs.insurer;
    let fam = &prefs.loss;

    let mut norm = CheckBuilder::new("distortion_normalization", true, exact);
    let mut mono = CheckBuilder::new("distortion_monotone", true, exact);
    let mut dom = CheckBuilder::new("insurer_dominance", true, exact);
    let mut lip_t = g
        .lipschitz_t()
        .map(|_| CheckBuilder::new("distortion_lipschitz_t", true, exact));
    for &th in types.nodes() {
        norm.observe(-g.eval(th, 0.0).abs(), &[th, 0.0]);
        norm.observe(-(g.eval(th, 1.0) - 1.0).abs(), &[th, 1.0]);
        for w in ts.windows(2) {
            let (a, b) = (g.eval(th, w[0]), g.eval(th, w[1]));
            mono.observe(b - a, &[th, w[1]]);
            if let (Some(c), Some(bld)) = (g.lipschitz_t(), lip_t.as_mut()) {
                bld.observe(c * (w[1] - w[0]) - (b - a).abs(), &[th, w[1]]);
            }
        }
        for &t in &ts {
            dom.observe(gin.eval(t) - g.eval(th, t), &[th, t]);
        }
        for &l in loss.midpoints() {
            let f = fam.cdf(th, l);
            dom.observe(gin.eval(f) - g.eval(th, f), &[th, l]);
        }
    }

    let mut in_norm = CheckBuilder::new("insurer_normalization", true, exact);
    in_norm.observe(-gin.eval(0.0).abs(), &[0.0]);
    in_norm.observe(-(gin.eval(1.0) - 1.0).abs(), &[1.0]);
    let mut in_mono = CheckBuilder::new("insurer_monotone", true, exact);
    for w in ts.windows(2) {
        in_mono.observe(gin.eval(w[1]) - gin.eval(w[0]), &[w[1]]);
    }

    let mut l_norm = CheckBuilder::new("loss_cdf_normalization", true, exact);
    let mut l_mono = CheckBuilder::new("loss_cdf_monotone", true, exact);
    let mut fosd = CheckBuilder::new("loss_fosd", true, tol);
    let mut type_mono = CheckBuilder::new("distortion_type_monotone", true, tol);
    let mut dominates = match mode {
        OrderingMode::LessAverseLargerLoss => {
            Some(CheckBuilder::new("loss_dominates_aversion", true, tol))
        }
        OrderingMode::MoreAverseLargerLoss => None,
    };
    let mut composite = CheckBuilder::new("composite_decreasing", false, tol);
    for &th in types.nodes() {
        l_norm.observe(fam.cdf(th, 0.0), &[th, 0.0]);
        l_norm.observe(-(fam.cdf(th, loss.cap()) - 1.0).abs(), &[th, loss.cap()]);
        for w in loss.nodes().windows(2) {
            l_mono.observe(fam.cdf(th, w[1]) - fam.cdf(th, w[0]), &[th, w[1]]);
        }
        for &l in loss.midpoints() {
            let f = fam.cdf(th, l);
            let df = fam.d_theta(th, l);
            fosd.observe(-df, &[th, l]);
            let dg_f = g.d_theta(th, f);
            if let Some(b) = dominates.as_mut() {
                b.observe(g.d_t(th, f) * df.abs() - dg_f.abs(), &[th, l]);
            }
            composite.observe(-prefs.composite_d_theta(th, l), &[th, l]);
        }
        for &t in &ts[1..ts.len() - 1] {
            let d = g.d_theta(th, t);
            let slack = match mode {
                OrderingMode::MoreAverseLargerLoss => -d,
                OrderingMode::LessAverseLargerLoss => d,
            };
            type_mono.observe(slack, &[th, t]);
        }
    }

    let mut checks = vec![
        norm.finish(),
        mono.finish(),
        in_norm.finish(),
        in_mono.finish(),
        dom.finish(),
        l_norm.finish(),
        l_mono.finish(),
        fosd.finish(),
        type_mono.finish(),
    ];
    if let Some(b) = dominates {
        checks.push(b.finish());
    }
    checks.push(composite.finish());
    if let Some(b) = lip_t {
        checks.push(b.finish());
    }
    if let Some(c) = g.lipschitz_theta() {
        let mut b = CheckBuilder::new("distortion_lipschitz_theta", true, exact);
        for w in types.nodes().windows(2) {
            for &t in &ts {
                let gap = (g.eval(w[1], t) - g.eval(w[0], t)).abs();
                b.observe(c * (w[1] - w[0]) - gap, &[w[1], t]);
            }
        }
        checks.push(b.finish());
    }
    if let Some(c) = fam.lipschitz_theta() {
        let mut b = CheckBuilder::new("loss_lipschitz_theta", true, exact);
        for w in types.nodes().windows(2) {
            for &l in loss.midpoints() {
                let gap = (fam.cdf(w[1], l) - fam.cdf(w[0], l)).abs();
                b.observe(c * (w[1] - w[0]) - gap, &[w[1], l]);
            }
        }
        checks.push(b.finish());
    }
    AssumptionReport::from_checks(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefs(
        agent: impl DistortionFamily + 'static,
        loss: impl LossFamily + 'static,
    ) -> Preferences {
        Preferences::new(
            Arc::new(agent),
            Arc::new(PowerInsurer::identity()),
            Arc::new(loss),
        )
    }

    fn s1() -> Preferences {
        prefs(
            PowerDistortion::new(1.0, 1.0),
            PowerLoss::new(1.0, 1.0).unwrap(),
        )
    }

    fn identity() -> Preferences {
        prefs(
            PowerDistortion::new(1.0, 0.0),
            PowerLoss::new(1.0, 0.0).unwrap(),
        )
    }

    #[test]
    fn no_insurance_examples() {
        let grid = LossGrid::new(1.0, 1000).unwrap();
        assert!((no_insurance_utility(0.3, &identity(), &grid) + 0.5).abs() < 1e-12);
        let zero_loss = prefs(
            PowerDistortion::new(1.0, 1.0),
            FnLoss::new("zero", 1.0, |_, _| 1.0),
        );
        assert_eq!(no_insurance_utility(0.5, &zero_loss, &grid), 0.0);
        let fine = LossGrid::new(1.0, 8000).unwrap();
        assert!((no_insurance_utility(1.0, &s1(), &fine) + 0.8).abs() < 1e-8);
    }

    #[test]
    fn agent_utility_examples() {
        let grid = LossGrid::new(1.0, 2000).unwrap();
        let p = s1();
        let zeros = vec![0.0; grid.cells()];
        let ones = vec![1.0; grid.cells()];
        let halves = vec![0.5; grid.cells()];
        assert_eq!(agent_utility(0.4, &zeros, 0.3, &p, &grid).unwrap(), -0.3);
        assert_eq!(
            agent_utility(0.4, &ones, 0.0, &p, &grid).unwrap(),
            no_insurance_utility(0.4, &p, &grid)
        );
        let expect = -0.1 - 0.5 * (1.0 - 1.0 / 3.25);
        assert!((agent_utility(0.5, &halves, 0.1, &p, &grid).unwrap() - expect).abs() < 1e-7);
        let mut bad = halves.clone();
        bad[7] = 1.5;
        assert!(matches!(
            agent_utility(0.5, &bad, 0.0, &p, &grid),
            Err(Error::InvalidSlope { cell: 7, .. })
        ));
    }

    #[test]
    fn insurer_utility_examples() {
        let grid = LossGrid::new(1.0, 1000).unwrap();
        let p = identity();
        let ones = vec![1.0; grid.cells()];
        let zeros = vec![0.0; grid.cells()];
        assert_eq!(insurer_utility(0.2, &ones, 0.2, &p, &grid).unwrap(), 0.2);
        assert_eq!(insurer_utility(0.2, &ones, 0.0, &p, &grid).unwrap(), 0.0);
        assert!((insurer_utility(0.2, &zeros, 0.6, &p, &grid).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let g = PowerDistortion::new(1.0, 1.0);
        let f = PowerLoss::new(1.0, 1.0).unwrap();
        for &th in &[0.1, 0.5, 0.9] {
            for &t in &[0.2, 0.5, 0.8] {
                let fd = (g.eval(th + FD_STEP, t) - g.eval(th - FD_STEP, t)) / (2.0 * FD_STEP);
                assert!((g.d_theta(th, t) - fd).abs() < 1e-8);
                let fd = (g.eval(th, t + FD_STEP) - g.eval(th, t - FD_STEP)) / (2.0 * FD_STEP);
                assert!((g.d_t(th, t) - fd).abs() < 1e-8);
                let fd = (g.d_t(th + FD_STEP, t) - g.d_t(th - FD_STEP, t)) / (2.0 * FD_STEP);
                assert!((g.d2_mixed(th, t) - fd).abs() < 1e-7);
                let fd = (f.cdf(th + FD_STEP, t) - f.cdf(th - FD_STEP, t)) / (2.0 * FD_STEP);
                assert!((f.d_theta(th, t) - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn preference_assumption_examples() {
        let types = TypeGrid::new(0.0, 1.0, 21).unwrap();
        let loss = LossGrid::new(1.0, 50).unwrap();
        let r =
            check_preference_assumptions(&s1(), OrderingMode::MoreAverseLargerLoss, &types, &loss);
        assert!(r.passed, "{:?}", r.failures());
        assert!(r.check("composite_decreasing").unwrap().passed);

        let flat = prefs(
            PowerDistortion::new(1.0, 0.0),
            PowerLoss::new(1.0, 1.0).unwrap(),
        );
        let r =
            check_preference_assumptions(&flat, OrderingMode::MoreAverseLargerLoss, &types, &loss);
        assert!(r.passed);
        assert_eq!(r.check("distortion_type_monotone").unwrap().margin, 0.0);

        let no_order = prefs(
            PowerDistortion::new(2.0, -1.0),
            PowerLoss::new(1.0, 0.0).unwrap(),
        );
        let r = check_preference_assumptions(
            &no_order,
            OrderingMode::LessAverseLargerLoss,
            &types,
            &loss,
        );
        assert!(!r.passed);
        assert_eq!(r.failures(), vec!["loss_dominates_aversion"]);
    }

    #[test]
    fn user_families_use_finite_differences() {
        let g = FnDistortion::new("s1", |th, t: f64| t.powf(1.0 + th));
        let exact = PowerDistortion::new(1.0, 1.0);
        assert!(!g.analytic_derivatives());
        assert!((g.d_theta(0.5, 0.3) - exact.d_theta(0.5, 0.3)).abs() < 1e-9);
        assert!((g.d_t(0.5, 0.3) - exact.d_t(0.5, 0.3)).abs() < 1e-9);
    }
}
