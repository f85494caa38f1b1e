//! Run configuration, read from TOML.
//!
//! A config either names a built-in scenario (`scenario = "s1"`) and may
//! override its grid, or spells out every family:
//!
//! ```toml
//! alpha = 0.25
//! ordering_mode = "more_averse_larger_loss"
//!
//! [grid]
//! type_range = [0.0, 1.0]
//! type_nodes = 41
//! loss_cap = 1.0
//! loss_cells = 201
//!
//! [mu]
//! family = "uniform"
//!
//! [agent]
//! family = "power"   # g(t) = t^(base + gamma * theta)
//! base = 1.0
//! gamma = 1.0
//!
//! [insurer]
//! family = "identity"
//!
//! [loss]
//! family = "power"   # F(l) = (l / cap)^(1 + kappa * theta)
//! kappa = 1.0
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use dualmenu_core::measures::{PowerDensity, TypeDensity, TypeGrid};
use dualmenu_core::preferences::{
    LossGrid, OrderingMode, PowerDistortion, PowerInsurer, PowerLoss,
};
use dualmenu_core::scenario::{DEFAULT_LOSS_CELLS, DEFAULT_TYPE_NODES};
use dualmenu_core::synthesis::SynthesisOptions;
use dualmenu_core::verification::DEFAULT_TOL;
use dualmenu_core::Scenario;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<String>,
    pub name: Option<String>,
    pub alpha: Option<f64>,
    pub ordering_mode: Option<OrderingMode>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: GridConfig,
    pub mu: Option<DensityConfig>,
    pub eta: Option<DensityConfig>,
    pub agent: Option<AgentConfig>,
    pub insurer: Option<InsurerConfig>,
    pub loss: Option<LossConfig>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub dominance: DominanceConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub type_range: Option<[f64; 2]>,
    pub type_nodes: Option<usize>,
    pub loss_cap: Option<f64>,
    pub loss_cells: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Uniform,
    /// Density proportional to `(θ - lo)^exponent`, or to `(hi - θ)^exponent`
    /// when reflected.
    Power {
        exponent: f64,
        #[serde(default)]
        reflected: bool,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentConfig {
    Power { base: f64, gamma: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InsurerConfig {
    Identity,
    Power { beta: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    Power { kappa: f64 },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub ic: Option<f64>,
    pub ir: Option<f64>,
    pub tie: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub type_nodes: Option<usize>,
    pub loss_cells: Option<usize>,
    pub alphabet: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceConfig {
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Field-level checks that do not need the scenario built.
    pub fn validate(&self) -> CliResult<()> {
        if let Some(a) = self.alpha {
            check_alpha("alpha", a)?;
        }
        if let Some(n) = self.grid.type_nodes {
            if n < 3 {
                return Err(bad(
                    "grid.type_nodes",
                    format!("need at least 3 nodes, got {n}"),
                ));
            }
        }
        if let Some(m) = self.grid.loss_cells {
            if m < 1 {
                return Err(bad("grid.loss_cells", "need at least 1 cell"));
            }
        }
        if let Some([lo, hi]) = self.grid.type_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(bad(
                    "grid.type_range",
                    format!("need lo < hi, got [{lo}, {hi}]"),
                ));
            }
        }
        if let Some(cap) = self.grid.loss_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(bad("grid.loss_cap", format!("must be positive, got {cap}")));
            }
        }
        for (field, v) in [
            ("tolerances.ic", self.tolerances.ic),
            ("tolerances.ir", self.tolerances.ir),
            ("tolerances.tie", self.tolerances.tie),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(bad(field, format!("must be non-negative, got {v}")));
                }
            }
        }
        if let Some(alphas) = &self.sweep.alphas {
            for &a in alphas {
                check_alpha("sweep.alphas", a)?;
            }
        }
        if let Some(alphabet) = &self.oracle.alphabet {
            if alphabet.is_empty() || alphabet.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(bad(
                    "oracle.alphabet",
                    "must be a non-empty subset of [0, 1]",
                ));
            }
        }
        match &self.scenario {
            Some(name) if !["s1", "s2", "s3"].contains(&name.as_str()) => Err(bad(
                "scenario",
                format!("unknown built-in '{name}' (expected s1, s2 or s3)"),
            )),
            Some(_) => Ok(()),
            None => {
                for (field, present) in [
                    ("mu", self.mu.is_some()),
                    ("agent", self.agent.is_some()),
                    ("insurer", self.insurer.is_some()),
                    ("loss", self.loss.is_some()),
                ] {
                    if !present {
                        return Err(bad(field, "required when no built-in scenario is named"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn alpha(&self) -> CliResult<f64> {
        self.alpha.ok_or_else(|| bad("alpha", "missing"))
    }

    /// Ordering mode; built-in `s3` defaults to the alternative ordering.
    pub fn mode(&self) -> OrderingMode {
        self.ordering_mode
            .unwrap_or(match self.scenario.as_deref() {
                Some("s3") => OrderingMode::LessAverseLargerLoss,
                _ => OrderingMode::MoreAverseLargerLoss,
            })
    }

    pub fn ic_tol(&self) -> f64 {
        self.tolerances.ic.unwrap_or(DEFAULT_TOL)
    }

    pub fn ir_tol(&self) -> f64 {
        self.tolerances.ir.unwrap_or(DEFAULT_TOL)
    }

    pub fn synthesis_options(&self, strict: bool) -> SynthesisOptions {
        let mut o = SynthesisOptions {
            strict,
            ir_tol: self.ir_tol(),
            ..SynthesisOptions::default()
        };
        if let Some(t) = self.tolerances.tie {
            o.tie_tol = t;
        }
        o
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn build_scenario(&self) -> CliResult<Scenario> {
        let nodes = self.grid.type_nodes.unwrap_or(DEFAULT_TYPE_NODES);
        let cells = self.grid.loss_cells.unwrap_or(DEFAULT_LOSS_CELLS);
        if let Some(name) = &self.scenario {
            let base = Scenario::builtin(name, nodes, cells)?;
            if self.grid.type_range.is_some() || self.grid.loss_cap.is_some() {
                return Err(bad(
                    "grid",
                    "type_range and loss_cap are fixed by built-in scenarios",
                ));
            }
            return Ok(match &self.eta {
                Some(eta) => base.with_eta(density(eta, 0.0, 1.0, "eta")?)?,
                None => base,
            });
        }
        let [lo, hi] = self.grid.type_range.unwrap_or([0.0, 1.0]);
        let cap = self.grid.loss_cap.unwrap_or(1.0);
        let mu_cfg = self.mu.as_ref().ok_or_else(|| bad("mu", "missing"))?;
        let mu = density(mu_cfg, lo, hi, "mu")?;
        let eta = match &self.eta {
            Some(e) => density(e, lo, hi, "eta")?,
            None => mu.clone(),
        };
        let agent = match self.agent.as_ref().ok_or_else(|| bad("agent", "missing"))? {
            AgentConfig::Power { base, gamma } => PowerDistortion::new(*base, *gamma),
        };
        let insurer = match self
            .insurer
            .as_ref()
            .ok_or_else(|| bad("insurer", "missing"))?
        {
            InsurerConfig::Identity => PowerInsurer::identity(),
            InsurerConfig::Power { beta } => {
                PowerInsurer::new(*beta).map_err(|e| bad("insurer.beta", e))?
            }
        };
        let loss = match self.loss.as_ref().ok_or_else(|| bad("loss", "missing"))? {
            LossConfig::Power { kappa } => {
                PowerLoss::new(cap, *kappa).map_err(|e| bad("loss.kappa", e))?
            }
        };
        let name = self.name.clone().unwrap_or_else(|| "custom".into());
        Ok(Scenario::power(
            &name,
            TypeGrid::new(lo, hi, nodes)?,
            LossGrid::new(cap, cells)?,
            mu,
            eta,
            agent,
            insurer,
            loss,
        )?)
    }
}

fn check_alpha(field: &str, a: f64) -> CliResult<()> {
    if (0.0..=1.0).contains(&a) {
        Ok(())
    } else {
        Err(bad(field, format!("must lie in [0, 1], got {a}")))
    }
}

fn density(cfg: &DensityConfig, lo: f64, hi: f64, field: &str) -> CliResult<Arc<dyn TypeDensity>> {
    let d = match cfg {
        DensityConfig::Uniform => PowerDensity::uniform(lo, hi),
        DensityConfig::Power {
            exponent,
            reflected,
        } => PowerDensity::new(lo, hi, *exponent, *reflected),
    }
    .map_err(|e| bad(field, e))?;
    Ok(Arc::new(d))
}

/// Parses a comma-separated list of weights; entries may be fractions like `1/3`.
pub fn parse_alphas(text: &str) -> CliResult<Vec<f64>> {
    let mut out = Vec::new();
    for raw in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let v = match raw.split_once('/') {
            Some((n, d)) => {
                let n: f64 = n
                    .trim()
                    .parse()
                    .map_err(|_| bad("alphas", format!("cannot parse '{raw}'")))?;
                let d: f64 = d
                    .trim()
                    .parse()
                    .map_err(|_| bad("alphas", format!("cannot parse '{raw}'")))?;
                n / d
            }
            None => raw
                .parse()
                .map_err(|_| bad("alphas", format!("cannot parse '{raw}'")))?,
        };
        check_alpha("alphas", v)?;
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_config_builds() {
        let cfg = ScenarioConfig::from_toml(
            "scenario = \"s2\"\nalpha = 0.4\n[grid]\ntype_nodes = 21\nloss_cells = 50\n",
        )
        .unwrap();
        let s = cfg.build_scenario().unwrap();
        assert_eq!(s.n_types(), 21);
        assert_eq!(s.n_cells(), 50);
    }

    #[test]
    fn explicit_families_match_builtin() {
        let text = r#"
            alpha = 0.25
            [grid]
            type_nodes = 11
            loss_cells = 30
            [mu]
            family = "uniform"
            [agent]
            family = "power"
            base = 1.0
            gamma = 1.0
            [insurer]
            family = "identity"
            [loss]
            family = "power"
            kappa = 1.0
        "#;
        let s = ScenarioConfig::from_toml(text)
            .unwrap()
            .build_scenario()
            .unwrap();
        let b = Scenario::s1(11, 30).unwrap();
        for i in 0..11 {
            assert_eq!(s.g_row(i), b.g_row(i));
        }
    }

    #[test]
    fn bad_alpha_names_field() {
        let err = ScenarioConfig::from_toml("scenario = \"s1\"\nalpha = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("alpha"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn missing_family_is_reported() {
        let err =
            ScenarioConfig::from_toml("alpha = 0.5\n[mu]\nfamily = \"uniform\"\n").unwrap_err();
        assert!(err.to_string().contains("agent"), "{err}");
    }

    #[test]
    fn alpha_lists() {
        assert_eq!(
            parse_alphas("0.1, 1/3,0.4").unwrap(),
            vec![0.1, 1.0 / 3.0, 0.4]
        );
        assert!(parse_alphas("").unwrap().is_empty());
        assert!(parse_alphas("2").is_err());
    }
}
