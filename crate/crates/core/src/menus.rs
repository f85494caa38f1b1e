//! Contract menus on grids, the incentive-compatible premium constructor, the
//! participation premium cap, submodularity checks and menu serialization.
//!
//! A menu assigns type node `θ_i` the slope row `r_i` (marginal retention per
//! loss cell) and premium `p_i`. Between nodes the slope is taken to be
//! piecewise constant: `r(θ) = r_i` on `[θ_i, θ_{i+1})`. The premium schedule
//! integrates the information rent under exactly that reading, which makes the
//! schedule telescope without quadrature error in θ.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::TypeGrid;
use crate::preferences::{validate_slopes, LossGrid, Preferences};
use crate::scenario::Scenario;

/// Marginal-retention slopes per `(type node, loss cell)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionSchedule {
    n_types: usize,
    n_cells: usize,
    slopes: Vec<f64>,
}

impl RetentionSchedule {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_types = rows.len();
        if n_types == 0 {
            return Err(Error::GridMismatch("retention schedule has no rows".into()));
        }
        let n_cells = rows[0].len();
        let mut slopes = Vec::with_capacity(n_types * n_cells);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_cells {
                return Err(Error::GridMismatch(format!(
                    "row {i} has {} cells, expected {n_cells}",
                    row.len()
                )));
            }
            slopes.extend(row);
        }
        Self::from_flat(n_types, n_cells, slopes)
    }

    pub fn from_flat(n_types: usize, n_cells: usize, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != n_types * n_cells || n_cells == 0 {
            return Err(Error::GridMismatch(format!(
                "{} slopes do not fill a {n_types}x{n_cells} schedule",
                slopes.len()
            )));
        }
        for (k, &value) in slopes.iter().enumerate() {
            if !(-crate::preferences::SLOPE_TOL..=1.0 + crate::preferences::SLOPE_TOL)
                .contains(&value)
            {
                return Err(Error::InvalidSlope {
                    type_index: k / n_cells,
                    cell: k % n_cells,
                    value,
                });
            }
        }
        Ok(Self {
            n_types,
            n_cells,
            slopes,
        })
    }

    pub fn constant(n_types: usize, n_cells: usize, value: f64) -> Result<Self> {
        Self::from_flat(n_types, n_cells, vec![value; n_types * n_cells])
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.slopes[i * self.n_cells..(i + 1) * self.n_cells]
    }
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slopes[i * self.n_cells + j]
    }
    pub fn as_flat(&self) -> &[f64] {
        &self.slopes
    }
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.slopes
            .chunks(self.n_cells)
            .map(<[f64]>::to_vec)
            .collect()
    }

    /// Retention `R(θ_i, l)` at the loss-grid nodes; starts at 0.
    pub fn retention(&self, i: usize, loss: &LossGrid) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_cells + 1);
        let mut acc = 0.0;
        out.push(acc);
        for (r, w) in self.row(i).iter().zip(loss.widths()) {
            acc += r * w;
            out.push(acc);
        }
        out
    }
}

/// Premia per type node.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumSchedule {
    premia: Vec<f64>,
}

impl PremiumSchedule {
    pub fn new(premia: Vec<f64>) -> Result<Self> {
        if let Some(p) = premia.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite premium {p}")));
        }
        Ok(Self { premia })
    }
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }
    pub fn get(&self, i: usize) -> f64 {
        self.premia[i]
    }
    pub fn as_slice(&self) -> &[f64] {
        &self.premia
    }
    pub fn len(&self) -> usize {
        self.premia.len()
    }
    pub fn is_empty(&self) -> bool {
        self.premia.is_empty()
    }
}

/// A menu of contracts on a type grid and a loss grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Menu {
    types: TypeGrid,
    loss: LossGrid,
    retention: RetentionSchedule,
    premium: PremiumSchedule,
}

impl Menu {
    pub fn new(
        types: TypeGrid,
        loss: LossGrid,
        retention: RetentionSchedule,
        premium: PremiumSchedule,
    ) -> Result<Self> {
        if retention.n_types() != types.len()
            || retention.n_cells() != loss.cells()
            || premium.len() != types.len()
        {
            return Err(Error::GridMismatch(format!(
                "menu with {}x{} slopes and {} premia does not fit a {}x{} grid",
                retention.n_types(),
                retention.n_cells(),
                premium.len(),
                types.len(),
                loss.cells()
            )));
        }
        Ok(Self {
            types,
            loss,
            retention,
            premium,
        })
    }

    /// Menu on the grids of `scenario`.
    pub fn on(
        scenario: &Scenario,
        retention: RetentionSchedule,
        premium: PremiumSchedule,
    ) -> Result<Self> {
        Self::new(
            scenario.types().clone(),
            scenario.loss().clone(),
            retention,
            premium,
        )
    }

    pub fn types(&self) -> &TypeGrid {
        &self.types
    }
    pub fn loss(&self) -> &LossGrid {
        &self.loss
    }
    pub fn retention(&self) -> &RetentionSchedule {
        &self.retention
    }
    pub fn premium(&self) -> &PremiumSchedule {
        &self.premium
    }

    /// Premium linearly interpolated between nodes. For reporting only.
    pub fn interpolated_premium(&self, theta: f64) -> f64 {
        let nodes = self.types.nodes();
        let p = self.premium.as_slice();
        if nodes.len() == 1 || theta <= nodes[0] {
            return p[0];
        }
        if theta >= nodes[nodes.len() - 1] {
            return p[p.len() - 1];
        }
        let h = self.types.spacing();
        let k = (((theta - nodes[0]) / h).floor() as usize).min(nodes.len() - 2);
        let s = (theta - nodes[k]) / h;
        p[k] + s * (p[k + 1] - p[k])
    }
}

/// `E_i(r) = ∫ [g_θ{i+1}(F_θ{i+1}) - g_θi(F_θi)] r dl`, the exact information-rent
/// increment over `[θ_i, θ_{i+1}]` for a fixed slope row `r`.
pub fn rent_increment(scenario: &Scenario, i: usize, slopes: &[f64]) -> f64 {
    let lo = scenario.g_row(i);
    let hi = scenario.g_row(i + 1);
    let mut acc = 0.0;
    for (((&a, &b), &w), &r) in lo.iter().zip(hi).zip(scenario.loss().widths()).zip(slopes) {
        acc += (b - a) * r * w;
    }
    acc
}

/// Premia implied by the envelope condition for the given retention,
/// anchored at `p_base` for the lowest type:
///
/// `p_i = p_base + A_0(r_0) - Σ_{k<i} E_k(r_k) - A_i(r_i)` with
/// `A_i(r) = ∫ [1 - g_θi(F_θi)] r dl`.
///
/// The double integral is accumulated once along the type grid, so the whole
/// schedule costs O(types × cells).
pub fn premium_from_ic(
    retention: &RetentionSchedule,
    p_base: f64,
    scenario: &Scenario,
) -> Result<PremiumSchedule> {
    let n = scenario.n_types();
    if retention.n_types() != n || retention.n_cells() != scenario.n_cells() {
        return Err(Error::GridMismatch(format!(
            "retention is {}x{}, scenario grid is {}x{}",
            retention.n_types(),
            retention.n_cells(),
            n,
            scenario.n_cells()
        )));
    }
    let a0 = scenario.retained_cost_at(0, retention.row(0));
    let mut premia = Vec::with_capacity(n);
    let mut rent = 0.0;
    for i in 0..n {
        if i == 0 {
            premia.push(p_base);
            continue;
        }
        rent += rent_increment(scenario, i - 1, retention.row(i - 1));
        premia.push(p_base + (a0 - rent - scenario.retained_cost_at(i, retention.row(i))));
    }
    PremiumSchedule::new(premia)
}

/// Largest premium type θ accepts for slope row `r`:
/// `∫ [1 - g_θ(F_θ(l))] (1 - r(l)) dl`.
pub fn max_ir_premium(
    theta: f64,
    slopes: &[f64],
    prefs: &Preferences,
    grid: &LossGrid,
) -> Result<f64> {
    validate_slopes(slopes, grid, 0)?;
    let mut acc = 0.0;
    for ((&l, &w), &r) in grid.midpoints().iter().zip(grid.widths()).zip(slopes) {
        acc += (1.0 - prefs.composite(theta, l)) * (1.0 - r) * w;
    }
    Ok(acc)
}

/// [`max_ir_premium`] at type node `i` of `scenario`, from the cached tables.
pub fn max_ir_premium_at(scenario: &Scenario, i: usize, slopes: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((&g, &w), &r) in scenario
        .g_row(i)
        .iter()
        .zip(scenario.loss().widths())
        .zip(slopes)
    {
        acc += (1.0 - g) * (1.0 - r) * w;
    }
    acc
}

/// One place where a higher type retains more than the type below it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmodularViolation {
    pub type_index: usize,
    pub cell: usize,
    pub theta: f64,
    pub loss: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmodularityReport {
    pub passed: bool,
    pub worst_gap: f64,
    pub violations: Vec<SubmodularViolation>,
}

/// Slack allowed in the submodularity check.
pub const SUBMODULAR_TOL: f64 = 1e-12;

/// Checks that every cell's slope is non-increasing in the type. Violations
/// are reported at the upper node of the offending pair.
pub fn check_submodular(
    retention: &RetentionSchedule,
    types: &TypeGrid,
    loss: &LossGrid,
) -> SubmodularityReport {
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..retention.n_types().saturating_sub(1) {
        let (a, b) = (retention.row(i), retention.row(i + 1));
        for j in 0..retention.n_cells() {
            let gap = b[j] - a[j];
            worst = worst.max(gap);
            if gap > SUBMODULAR_TOL {
                violations.push(SubmodularViolation {
                    type_index: i + 1,
                    cell: j,
                    theta: types.nodes()[i + 1],
                    loss: loss.midpoints()[j],
                    gap,
                });
            }
        }
    }
    SubmodularityReport {
        passed: violations.is_empty(),
        worst_gap: if worst.is_finite() { worst } else { 0.0 },
        violations,
    }
}

/// JSON form of a menu. `loss_nodes` are the cell edges, so it holds one more
/// entry than each slope row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuJson {
    pub theta_nodes: Vec<f64>,
    pub loss_nodes: Vec<f64>,
    pub slopes: Vec<Vec<f64>>,
    pub premia: Vec<f64>,
}

fn parse(msg: impl std::fmt::Display) -> Error {
    Error::Parse(msg.to_string())
}

fn type_grid_from_nodes(nodes: &[f64]) -> Result<TypeGrid> {
    if nodes.is_empty() {
        return Err(parse("no type nodes"));
    }
    let lo = nodes[0];
    let hi = nodes[nodes.len() - 1];
    let grid = if nodes.len() == 1 {
        return Err(parse("a serialized menu needs at least two type nodes"));
    } else {
        TypeGrid::coarse(lo, hi, nodes.len())?
    };
    let scale = (hi - lo).abs().max(1.0);
    for (a, b) in grid.nodes().iter().zip(nodes) {
        if (a - b).abs() > 1e-9 * scale {
            return Err(parse(format!(
                "type nodes are not uniform: expected {a}, found {b}"
            )));
        }
    }
    Ok(grid)
}

fn loss_grid_from_edges(edges: &[f64]) -> Result<LossGrid> {
    if edges.len() < 2 || edges[0] != 0.0 {
        return Err(parse(
            "loss nodes must start at 0 and contain at least one cell",
        ));
    }
    let grid = LossGrid::new(edges[edges.len() - 1], edges.len() - 1)?;
    let scale = grid.cap().max(1.0);
    for (a, b) in grid.nodes().iter().zip(edges) {
        if (a - b).abs() > 1e-9 * scale {
            return Err(parse(format!(
                "loss nodes are not uniform: expected {a}, found {b}"
            )));
        }
    }
    Ok(grid)
}

impl Menu {
    pub fn to_json_value(&self) -> MenuJson {
        MenuJson {
            theta_nodes: self.types.nodes().to_vec(),
            loss_nodes: self.loss.nodes().to_vec(),
            slopes: self.retention.rows(),
            premia: self.premium.as_slice().to_vec(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("menu serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MenuJson = serde_json::from_str(text).map_err(parse)?;
        let types = type_grid_from_nodes(&raw.theta_nodes)?;
        let loss = loss_grid_from_edges(&raw.loss_nodes)?;
        Menu::new(
            types,
            loss,
            RetentionSchedule::from_rows(raw.slopes)?,
            PremiumSchedule::new(raw.premia)?,
        )
    }

    /// CSV with header `theta,l,slope,retention,premium`, one row per
    /// `(type node, loss cell)`. `l` is the upper edge of the cell, `slope` the
    /// cell's marginal retention, `retention` is `R(θ, l)` and the premium is
    /// repeated on every row of its type.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "l", "slope", "retention", "premium"])
            .map_err(parse)?;
        for (i, &th) in self.types.nodes().iter().enumerate() {
            let r = self.retention.retention(i, &self.loss);
            let p = self.premium.get(i);
            for j in 0..self.loss.cells() {
                w.write_record([
                    format!("{th:?}"),
                    format!("{:?}", self.loss.nodes()[j + 1]),
                    format!("{:?}", self.retention.get(i, j)),
                    format!("{:?}", r[j + 1]),
                    format!("{p:?}"),
                ])
                .map_err(parse)?;
            }
        }
        w.flush().map_err(parse)?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to memory succeeds");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers().map_err(parse)?.clone();
        if headers.is_empty() {
            return Err(parse("menu file is empty"));
        }
        let expected = ["theta", "l", "slope", "retention", "premium"];
        if headers.iter().collect::<Vec<_>>() != expected {
            let found: Vec<&str> = headers.iter().collect();
            return Err(parse(format!("unexpected CSV header {}", found.join(","))));
        }
        let mut thetas: Vec<f64> = Vec::new();
        let mut edges: Vec<f64> = vec![0.0];
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut premia: Vec<f64> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(parse)?;
            let num = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| parse("short CSV row"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(parse)
            };
            let (th, l, slope, p) = (num(0)?, num(1)?, num(2)?, num(4)?);
            if thetas.last() != Some(&th) {
                thetas.push(th);
                rows.push(Vec::new());
                premia.push(p);
            }
            let row = rows.last_mut().expect("row pushed above");
            if thetas.len() == 1 {
                edges.push(l);
            } else if edges.get(row.len() + 1) != Some(&l) {
                return Err(parse(format!(
                    "type {th} has a loss node {l} not shared by the first type"
                )));
            }
            row.push(slope);
        }
        if thetas.is_empty() {
            return Err(parse("menu file has no rows"));
        }
        let types = type_grid_from_nodes(&thetas)?;
        let loss = loss_grid_from_edges(&edges)?;
        Menu::new(
            types,
            loss,
            RetentionSchedule::from_rows(rows)?,
            PremiumSchedule::new(premia)?,
        )
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }

    /// Reads a menu from a `.json` or `.csv` file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| parse(format!("cannot read {}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            Some("csv") => Self::from_csv(&text),
            _ => Err(parse(format!(
                "{}: menu files must end in .json or .csv",
                path.display()
            ))),
        }
    }
}
