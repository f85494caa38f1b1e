//! A complete problem instance: grids, measures, preference families and the
//! per-node tables every solver and checker reads from.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measures::{PowerDensity, TypeDensity, TypeGrid};
use crate::menus::Menu;
use crate::preferences::{
    DistortionFamily, InsurerDistortion, LossFamily, LossGrid, PowerDistortion, PowerInsurer,
    PowerLoss, Preferences,
};

/// Type-node count used by the built-in scenarios unless overridden.
pub const DEFAULT_TYPE_NODES: usize = 41;
/// Loss-cell count used by the built-in scenarios unless overridden.
pub const DEFAULT_LOSS_CELLS: usize = 201;

/// Row-major `(type node, loss cell)` tables evaluated once per scenario.
#[derive(Debug, Clone)]
struct Tables {
    m: usize,
    /// `F_θi(l_j)` at cell midpoints.
    f: Vec<f64>,
    /// `g_θi(F_θi(l_j))`.
    g: Vec<f64>,
    /// `g^In(F_θi(l_j))`.
    gin: Vec<f64>,
    /// `∂θ g_θ(F_θ(l_j))` at θi, analytic when the families provide it.
    dgf: Vec<f64>,
    mu_w: Vec<f64>,
    eta_w: Vec<f64>,
}

/// Grids, measures and preferences of one screening problem.
#[derive(Debug, Clone)]
pub struct Scenario {
    name: String,
    types: TypeGrid,
    loss: LossGrid,
    mu: Arc<dyn TypeDensity>,
    eta: Arc<dyn TypeDensity>,
    prefs: Preferences,
    tables: Tables,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        types: TypeGrid,
        loss: LossGrid,
        mu: Arc<dyn TypeDensity>,
        eta: Arc<dyn TypeDensity>,
        prefs: Preferences,
    ) -> Result<Self> {
        let cap = prefs.loss.loss_cap();
        if (cap - loss.cap()).abs() > 1e-12 * cap.max(1.0) {
            return Err(Error::GridMismatch(format!(
                "loss grid covers [0, {}] but the loss family has cap {cap}",
                loss.cap()
            )));
        }
        for (label, d) in [("mu", &mu), ("eta", &eta)] {
            let (lo, hi) = d.support();
            if (lo - types.theta_lo()).abs() > 1e-12 || (hi - types.theta_hi()).abs() > 1e-12 {
                return Err(Error::GridMismatch(format!(
                    "{label} is supported on [{lo}, {hi}] but the type grid spans [{}, {}]",
                    types.theta_lo(),
                    types.theta_hi()
                )));
            }
        }
        let tables = build_tables(&types, &loss, mu.as_ref(), eta.as_ref(), &prefs);
        Ok(Self {
            name: name.into(),
            types,
            loss,
            mu,
            eta,
            prefs,
            tables,
        })
    }

    /// The same problem on different grids.
    pub fn with_grids(&self, types: TypeGrid, loss: LossGrid) -> Result<Self> {
        Self::new(
            self.name.clone(),
            types,
            loss,
            self.mu.clone(),
            self.eta.clone(),
            self.prefs.clone(),
        )
    }

    /// Same problem on a `types × cells` grid over the current ranges.
    pub fn regrid(&self, types: usize, cells: usize) -> Result<Self> {
        let t = TypeGrid::coarse(self.types.theta_lo(), self.types.theta_hi(), types)?;
        let l = LossGrid::new(self.loss.cap(), cells)?;
        self.with_grids(t, l)
    }

    /// Same problem with another welfare weight η.
    pub fn with_eta(&self, eta: Arc<dyn TypeDensity>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.types.clone(),
            self.loss.clone(),
            self.mu.clone(),
            eta,
            self.prefs.clone(),
        )
    }

    /// `g_θ(t) = t^(1+θ)`, `g^In(t) = t`, `F_θ(l) = l^(1+θ)` on `[0, 1]`,
    /// with μ = η uniform on `[0, 1]`.
    pub fn s1(types: usize, cells: usize) -> Result<Self> {
        let u: Arc<dyn TypeDensity> = Arc::new(PowerDensity::uniform(0.0, 1.0)?);
        Self::power(
            "s1",
            TypeGrid::new(0.0, 1.0, types)?,
            LossGrid::new(1.0, cells)?,
            u.clone(),
            u,
            PowerDistortion::new(1.0, 1.0),
            PowerInsurer::identity(),
            PowerLoss::new(1.0, 1.0)?,
        )
    }

    /// Preferences of [`Scenario::s1`] with welfare weight `q_η(θ) = 2θ`.
    pub fn s2(types: usize, cells: usize) -> Result<Self> {
        Self::power(
            "s2",
            TypeGrid::new(0.0, 1.0, types)?,
            LossGrid::new(1.0, cells)?,
            Arc::new(PowerDensity::uniform(0.0, 1.0)?),
            Arc::new(PowerDensity::new(0.0, 1.0, 1.0, false)?),
            PowerDistortion::new(1.0, 1.0),
            PowerInsurer::identity(),
            PowerLoss::new(1.0, 1.0)?,
        )
    }

    /// Higher types are less risk averse but face much larger losses:
    /// `g_θ(t) = t^(2 - 0.5θ)`, `F_θ(l) = l^(1 + 2θ)`, `g^In(t) = t`,
    /// μ = η uniform on `[0, 1]`.
    pub fn s3(types: usize, cells: usize) -> Result<Self> {
        let u: Arc<dyn TypeDensity> = Arc::new(PowerDensity::uniform(0.0, 1.0)?);
        Self::power(
            "s3",
            TypeGrid::new(0.0, 1.0, types)?,
            LossGrid::new(1.0, cells)?,
            u.clone(),
            u,
            PowerDistortion::new(2.0, -0.5),
            PowerInsurer::identity(),
            PowerLoss::new(1.0, 2.0)?,
        )
    }

    /// Built-in scenario by name (`s1`, `s2`, `s3`).
    pub fn builtin(name: &str, types: usize, cells: usize) -> Result<Self> {
        match name {
            "s1" => Self::s1(types, cells),
            "s2" => Self::s2(types, cells),
            "s3" => Self::s3(types, cells),
            other => Err(Error::InvalidParameter(format!(
                "unknown built-in scenario '{other}'"
            ))),
        }
    }

    /// Assemble a scenario from the built-in power families, validating their
    /// parameters over the type range.
    #[allow(clippy::too_many_arguments)]
    pub fn power(
        name: &str,
        types: TypeGrid,
        loss: LossGrid,
        mu: Arc<dyn TypeDensity>,
        eta: Arc<dyn TypeDensity>,
        agent: PowerDistortion,
        insurer: PowerInsurer,
        loss_family: PowerLoss,
    ) -> Result<Self> {
        agent.validate(&types)?;
        loss_family.validate(&types)?;
        let prefs = Preferences::new(
            Arc::new(agent) as Arc<dyn DistortionFamily>,
            Arc::new(insurer) as Arc<dyn InsurerDistortion>,
            Arc::new(loss_family) as Arc<dyn LossFamily>,
        );
        Self::new(name, types, loss, mu, eta, prefs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn types(&self) -> &TypeGrid {
        &self.types
    }
    pub fn loss(&self) -> &LossGrid {
        &self.loss
    }
    pub fn mu(&self) -> &dyn TypeDensity {
        self.mu.as_ref()
    }
    pub fn eta(&self) -> &dyn TypeDensity {
        self.eta.as_ref()
    }
    pub fn prefs(&self) -> &Preferences {
        &self.prefs
    }
    pub fn n_types(&self) -> usize {
        self.types.len()
    }
    pub fn n_cells(&self) -> usize {
        self.loss.cells()
    }

    fn row<'a>(&self, table: &'a [f64], i: usize) -> &'a [f64] {
        let m = self.tables.m;
        &table[i * m..(i + 1) * m]
    }

    /// `F_θi` at the loss-cell midpoints.
    pub fn f_row(&self, i: usize) -> &[f64] {
        self.row(&self.tables.f, i)
    }
    /// `g_θi(F_θi)` at the loss-cell midpoints.
    pub fn g_row(&self, i: usize) -> &[f64] {
        self.row(&self.tables.g, i)
    }
    /// `g^In(F_θi)` at the loss-cell midpoints.
    pub fn gin_row(&self, i: usize) -> &[f64] {
        self.row(&self.tables.gin, i)
    }
    /// `∂θ g_θ(F_θ)` at θi and the loss-cell midpoints.
    pub fn dgf_row(&self, i: usize) -> &[f64] {
        self.row(&self.tables.dgf, i)
    }
    /// Dual-cell μ masses of the type nodes.
    pub fn mu_masses(&self) -> &[f64] {
        &self.tables.mu_w
    }
    /// Dual-cell η masses of the type nodes.
    pub fn eta_masses(&self) -> &[f64] {
        &self.tables.eta_w
    }

    /// Errors unless `menu` lives on this scenario's grids.
    pub fn check_menu(&self, menu: &Menu) -> Result<()> {
        if !menu.types().same_shape(&self.types) || !menu.loss().same_shape(&self.loss) {
            return Err(Error::GridMismatch(format!(
                "menu grid {}x{} on [{}, {}] x [0, {}] differs from scenario grid {}x{} on [{}, {}] x [0, {}]",
                menu.types().len(),
                menu.loss().cells(),
                menu.types().theta_lo(),
                menu.types().theta_hi(),
                menu.loss().cap(),
                self.types.len(),
                self.loss.cells(),
                self.types.theta_lo(),
                self.types.theta_hi(),
                self.loss.cap()
            )));
        }
        Ok(())
    }

    /// `∫ [1 - g_θi(F_θi)] r dl` for node `i` and an arbitrary slope row.
    pub fn retained_cost_at(&self, i: usize, slopes: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&g, &w), &r) in self.g_row(i).iter().zip(self.loss.widths()).zip(slopes) {
            acc += (1.0 - g) * r * w;
        }
        acc
    }

    /// `∫ [1 - g^In(F_θi)] (1 - r) dl` for node `i`.
    pub fn indemnity_cost_at(&self, i: usize, slopes: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&g, &w), &r) in self.gin_row(i).iter().zip(self.loss.widths()).zip(slopes) {
            acc += (1.0 - g) * (1.0 - r) * w;
        }
        acc
    }

    /// `U_θi(R_k, p_k)` for node `i` evaluating any contract.
    pub fn agent_utility_at(&self, i: usize, slopes: &[f64], premium: f64) -> f64 {
        -premium - self.retained_cost_at(i, slopes)
    }

    /// Own-contract agent utilities at every node. Assumes matching grids.
    pub fn agent_utilities(&self, menu: &Menu) -> Vec<f64> {
        (0..self.n_types())
            .map(|i| self.agent_utility_at(i, menu.retention().row(i), menu.premium().get(i)))
            .collect()
    }

    /// Own-contract insurer utilities at every node. Assumes matching grids.
    pub fn insurer_utilities(&self, menu: &Menu) -> Vec<f64> {
        (0..self.n_types())
            .map(|i| menu.premium().get(i) - self.indemnity_cost_at(i, menu.retention().row(i)))
            .collect()
    }

    /// No-insurance utility at every node.
    pub fn outside_options(&self) -> Vec<f64> {
        let ones = vec![1.0; self.n_cells()];
        (0..self.n_types())
            .map(|i| -self.retained_cost_at(i, &ones))
            .collect()
    }
}

fn build_tables(
    types: &TypeGrid,
    loss: &LossGrid,
    mu: &dyn TypeDensity,
    eta: &dyn TypeDensity,
    prefs: &Preferences,
) -> Tables {
    let n = types.len();
    let m = loss.cells();
    let mut f = Vec::with_capacity(n * m);
    let mut g = Vec::with_capacity(n * m);
    let mut gin = Vec::with_capacity(n * m);
    let mut dgf = Vec::with_capacity(n * m);
    for &th in types.nodes() {
        for &l in loss.midpoints() {
            let fv = prefs.loss.cdf(th, l);
            f.push(fv);
            g.push(prefs.agent.eval(th, fv));
            gin.push(prefs.insurer.eval(fv));
            dgf.push(prefs.composite_d_theta(th, l));
        }
    }
    Tables {
        m,
        f,
        g,
        gin,
        dgf,
        mu_w: types.masses(mu),
        eta_w: types.masses(eta),
    }
}
