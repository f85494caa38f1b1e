//! Subcommand implementations. Each writes its artifacts under the output
//! directory and returns what it wrote for the caller to summarize.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use dualmenu_core::measures::check_hazard_dominance;
use dualmenu_core::menus::{check_submodular, SubmodularityReport};
use dualmenu_core::oracle::{compare_with_oracle, OracleComparison, SmallInstance};
use dualmenu_core::preferences::{check_preference_assumptions, OrderingMode};
use dualmenu_core::synthesis::{
    check_sufficient_conditions, synthesize, ConditionsReport, MonotonicityReport,
};
use dualmenu_core::verification::{
    envelope_check, menu_ir_implications, menu_properties, pareto_dominance_search, verify_ic,
    verify_ir, DominanceOptions, DominanceReport, EnvelopeReport, IRReport, ImplicationReport,
    PropertyReport, ViolationRecord,
};
use dualmenu_core::{AssumptionReport, Menu, Regime, Scenario};

use crate::config::ScenarioConfig;
use crate::error::{CliError, CliResult};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub strict: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunOptions {
    fn out_dir(&self, cfg: &ScenarioConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.output_dir())
    }

    fn seed(&self, cfg: &ScenarioConfig) -> u64 {
        self.seed.or(cfg.seed).unwrap_or(0)
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumptions {
    pub preferences: AssumptionReport,
    pub hazard: AssumptionReport,
}

fn assumptions(scenario: &Scenario, mode: OrderingMode) -> Assumptions {
    Assumptions {
        preferences: check_preference_assumptions(
            scenario.prefs(),
            mode,
            scenario.types(),
            scenario.loss(),
        ),
        hazard: check_hazard_dominance(scenario.mu(), scenario.eta(), scenario.types()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisArtifact {
    pub scenario: String,
    pub alpha: f64,
    pub ordering_mode: OrderingMode,
    pub regime: Regime,
    pub theta_alpha: Option<f64>,
    pub boundary_alpha: Option<f64>,
    pub welfare: f64,
    pub aggregate_v: f64,
    pub j_monotone: MonotonicityReport,
    pub analytic_j_monotone: MonotonicityReport,
    pub ir_status: IRReport,
    pub ic_violations: usize,
    pub submodularity: SubmodularityReport,
    pub properties: PropertyReport,
    pub ir_implications: ImplicationReport,
    pub assumptions: Assumptions,
    pub dominance: Option<DominanceReport>,
}

#[derive(Debug, Clone)]
pub struct SynthesisRun {
    pub artifact: SynthesisArtifact,
    pub menu: Menu,
    pub files: Vec<PathBuf>,
}

pub fn run_synthesize(cfg: &ScenarioConfig, opts: &RunOptions) -> CliResult<SynthesisRun> {
    let scenario = cfg.build_scenario()?;
    let alpha = cfg.alpha()?;
    let mode = cfg.mode();
    let result = synthesize(alpha, &scenario, mode, &cfg.synthesis_options(opts.strict))?;
    let menu = result.menu.clone();
    let ic = verify_ic(&menu, &scenario, cfg.ic_tol())?;
    let binding = matches!(
        result.regime,
        Regime::LayeredFull | Regime::LayeredWithPooling | Regime::InsurerOnly
    );
    let dominance = match cfg.dominance.trials {
        Some(trials) if trials > 0 => Some(pareto_dominance_search(
            &menu,
            &scenario,
            alpha,
            trials,
            opts.seed(cfg),
            &[],
            &DominanceOptions {
                tol: cfg.ic_tol(),
                ..DominanceOptions::default()
            },
        )?),
        _ => None,
    };
    let artifact = SynthesisArtifact {
        scenario: scenario.name().to_string(),
        alpha,
        ordering_mode: mode,
        regime: result.regime,
        theta_alpha: result.theta_alpha,
        boundary_alpha: result.boundary_alpha,
        welfare: result.welfare,
        aggregate_v: result.ir_status.p2_value,
        j_monotone: result.j_monotone.clone(),
        analytic_j_monotone: result.analytic_j_monotone.clone(),
        ir_status: result.ir_status.clone(),
        ic_violations: ic.len(),
        submodularity: check_submodular(menu.retention(), scenario.types(), scenario.loss()),
        properties: menu_properties(&menu, &scenario, binding)?,
        ir_implications: menu_ir_implications(&menu, &scenario, cfg.ir_tol())?,
        assumptions: assumptions(&scenario, mode),
        dominance,
    };
    let dir = opts.out_dir(cfg);
    let files = vec![
        write_file(&dir, "menu.csv", &menu.to_csv())?,
        write_file(&dir, "menu.json", &menu.to_json())?,
        write_file(&dir, "synthesis.json", &to_json(&artifact))?,
    ];
    Ok(SynthesisRun {
        artifact,
        menu,
        files,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyArtifact {
    pub menu_path: String,
    pub passed: bool,
    pub ic_tol: f64,
    pub ic_passed: bool,
    pub ic_violations: Vec<ViolationRecord>,
    pub ir_status: IRReport,
    pub properties: Option<PropertyReport>,
    pub ir_implications: Option<ImplicationReport>,
    pub envelope: Option<EnvelopeReport>,
}

/// IC and IR of a stored menu, plus the structural properties when asked.
pub fn run_verify(
    cfg: &ScenarioConfig,
    menu_path: &Path,
    properties: bool,
    opts: &RunOptions,
) -> CliResult<(VerifyArtifact, PathBuf)> {
    let scenario = cfg.build_scenario()?;
    let menu = Menu::load(menu_path)?;
    scenario.check_menu(&menu)?;
    let ic = verify_ic(&menu, &scenario, cfg.ic_tol())?;
    let ir = verify_ir(&menu, &scenario, cfg.ir_tol())?;
    let (props, implications, envelope) = if properties {
        let binding = cfg.alpha.is_none_or(|a| a <= 0.5);
        (
            Some(menu_properties(&menu, &scenario, binding)?),
            Some(menu_ir_implications(&menu, &scenario, cfg.ir_tol())?),
            Some(envelope_check(&menu, &scenario, 1e-6)?),
        )
    } else {
        (None, None, None)
    };
    let passed = ic.is_empty() && ir.passed && props.as_ref().is_none_or(|p| p.passed);
    let artifact = VerifyArtifact {
        menu_path: menu_path.display().to_string(),
        passed,
        ic_tol: cfg.ic_tol(),
        ic_passed: ic.is_empty(),
        ic_violations: ic,
        ir_status: ir,
        properties: props,
        ir_implications: implications,
        envelope,
    };
    let path = write_file(&opts.out_dir(cfg), "verify.json", &to_json(&artifact))?;
    Ok((artifact, path))
}

pub fn run_oracle_compare(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> CliResult<(OracleComparison, PathBuf)> {
    let template = cfg.build_scenario()?;
    let inst = SmallInstance::new(
        &template,
        cfg.oracle.type_nodes.unwrap_or(3),
        cfg.oracle.loss_cells.unwrap_or(4),
        cfg.oracle
            .alphabet
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.5, 1.0]),
    )?;
    let cmp = compare_with_oracle(
        &inst,
        cfg.alpha()?,
        cfg.mode(),
        &cfg.synthesis_options(opts.strict),
    )?;
    let path = write_file(&opts.out_dir(cfg), "oracle.json", &to_json(&cmp))?;
    Ok((cmp, path))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionsArtifact {
    pub assumptions: Assumptions,
    pub conditions: ConditionsReport,
}

impl ConditionsArtifact {
    pub fn assumptions_pass(&self) -> bool {
        self.assumptions.preferences.passed && self.assumptions.hazard.passed
    }
}

pub fn run_conditions(
    cfg: &ScenarioConfig,
    opts: &RunOptions,
) -> CliResult<(ConditionsArtifact, PathBuf)> {
    let scenario = cfg.build_scenario()?;
    let mode = cfg.mode();
    let alpha = cfg.alpha.unwrap_or(0.0);
    let artifact = ConditionsArtifact {
        assumptions: assumptions(&scenario, mode),
        conditions: check_sufficient_conditions(&scenario, alpha, mode),
    };
    let path = write_file(&opts.out_dir(cfg), "conditions.json", &to_json(&artifact))?;
    if opts.strict && !artifact.assumptions_pass() {
        let mut failed = artifact.assumptions.preferences.failures();
        failed.extend(artifact.assumptions.hazard.failures());
        return Err(dualmenu_core::Error::AssumptionViolated(format!(
            "failed checks: {}",
            failed.join(", ")
        ))
        .into());
    }
    Ok((artifact, path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub regime: Regime,
    pub theta_alpha: Option<f64>,
    pub welfare: f64,
    pub aggregate_v: f64,
    pub min_agent_margin: f64,
}

pub const SWEEP_HEADER: &str = "alpha,regime,theta_alpha,welfare,aggregate_v,min_agent_margin";

/// One synthesis per weight; `alphas` overrides `[sweep] alphas`.
pub fn run_alpha_sweep(
    cfg: &ScenarioConfig,
    alphas: Option<&[f64]>,
    opts: &RunOptions,
) -> CliResult<(Vec<SweepRow>, PathBuf)> {
    let alphas = alphas
        .map(<[f64]>::to_vec)
        .or_else(|| cfg.sweep.alphas.clone())
        .unwrap_or_default();
    if alphas.is_empty() {
        return Err(CliError::Config("alphas: the sweep list is empty".into()));
    }
    let scenario = cfg.build_scenario()?;
    let sopts = cfg.synthesis_options(opts.strict);
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let r = synthesize(alpha, &scenario, cfg.mode(), &sopts)?;
        rows.push(SweepRow {
            alpha,
            regime: r.regime,
            theta_alpha: r.theta_alpha,
            welfare: r.welfare,
            aggregate_v: r.ir_status.p2_value,
            min_agent_margin: r.ir_status.worst_p1_margin,
        });
    }
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for row in &rows {
        let theta = row
            .theta_alpha
            .map(|t| format!("{t:?}"))
            .unwrap_or_default();
        writeln!(
            csv,
            "{:?},{},{},{:?},{:?},{:?}",
            row.alpha,
            row.regime.as_str(),
            theta,
            row.welfare,
            row.aggregate_v,
            row.min_agent_margin
        )
        .expect("writing to a string");
    }
    let path = write_file(&opts.out_dir(cfg), "sweep.csv", &csv)?;
    Ok((rows, path))
}
