//! Batch experiment driver behind the `run` subcommand: loads and
//! validates a JSON config, executes the selected mode, and writes CSV and
//! JSON outputs into the chosen directory.
//!
//! Every output embeds the tool version and the SHA-256 of the config file
//! (CSV as a leading `#` comment line, JSON as top-level fields), carries
//! floats at 17 significant digits in CSV, and is byte-identical across
//! reruns with the same config and seed, whatever the thread count.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::agent::{
    cara_value_check, incentive_first_order_residual, incentive_residual, principal_value_mc,
    stationarity_check, sufficient_condition_check, verify_agent_optimality, AgentOptimalityReport,
    BandCheck, StationarityPoint,
};
use crate::config::{Experiment, ExperimentConfig, Mode};
use crate::contract::{
    build_optimal_contract, fbsde_residuals, first_best_toy, forward_value_path,
    principal_value_closed_form, save_contract, Contract, FbsdeResiduals, FirstBestToy,
};
use crate::error::Error;
use crate::filter::{simulate_filter, solve_riccati};
use crate::grid::Path;
use crate::mc::{McConfig, McEstimate};
use crate::mfg::{
    mfg_adjoint_ode_check, mfg_adjoint_p_residual, mfg_deterministic_oracle, mfg_equilibrium,
    mfg_fixed_point_residual, mfg_mean_path_residual, FixedPointCheck, ORACLE_MAX_STEPS,
};

pub const TOOL_NAME: &str = "pacon";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Gateaux difference-quotient step sizes used by `verify-agent` mode.
pub const STATIONARITY_EPSILONS: [f64; 3] = [0.1, 0.05, 0.025];
/// Offset of the deliberately suboptimal stationarity probe.
pub const SUBOPTIMAL_PROBE_OFFSET: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub grid_steps: Option<usize>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub enum RunError {
    /// Config unreadable, unparsable, or invalid. Exit code 2.
    Validation(String),
    /// Numerical failure (blow-up, overflow). Exit code 3.
    Numerics(Error),
    /// The selected verification ran and FAILED. Exit code 4.
    VerificationFailed(String),
    /// Output i/o failure. Exit code 1.
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Io(_) => 1,
            RunError::Validation(_) => 2,
            RunError::Numerics(_) => 3,
            RunError::VerificationFailed(_) => 4,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Validation(msg) => write!(f, "invalid config: {msg}"),
            RunError::Numerics(e) => write!(f, "numerical failure: {e}"),
            RunError::VerificationFailed(msg) => write!(f, "verification FAILED: {msg}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Numerics(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mode: Mode,
    pub pass: bool,
    pub files: Vec<PathBuf>,
}

/// Effective (post-override) run parameters echoed into every report.
#[derive(Debug, Clone, Serialize)]
struct EffectiveConfig {
    horizon: f64,
    steps: usize,
    n_paths: usize,
    master_seed: u64,
    reservation: f64,
}

#[derive(Serialize)]
struct Report<T: Serialize> {
    tool: &'static str,
    tool_version: &'static str,
    config_sha256: String,
    mode: Mode,
    effective: EffectiveConfig,
    pass: bool,
    results: T,
}

struct OutputWriter {
    dir: PathBuf,
    header: String,
    files: Vec<PathBuf>,
}

impl OutputWriter {
    fn csv(
        &mut self,
        name: &str,
        columns: &str,
        rows: impl Iterator<Item = String>,
    ) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut out = String::new();
        out.push_str(&self.header);
        out.push('\n');
        out.push_str(columns);
        out.push('\n');
        for row in rows {
            out.push_str(&row);
            out.push('\n');
        }
        fs::write(&path, out)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let mut file = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut file, value)
            .map_err(|e| RunError::Numerics(Error::Json(e)))?;
        file.write_all(b"\n")?;
        self.files.push(path);
        Ok(())
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Executes one experiment. Validation happens before any output is
/// created; on verification failure the reports are still written and the
/// error carries exit code 4.
pub fn run(opts: &RunOptions) -> Result<RunSummary, RunError> {
    let raw = fs::read(&opts.config_path)
        .map_err(|e| RunError::Validation(format!("cannot read config: {e}")))?;
    let config_sha256 = hex_digest(&raw);
    let text = String::from_utf8(raw)
        .map_err(|e| RunError::Validation(format!("config is not UTF-8: {e}")))?;
    let mut config = ExperimentConfig::from_json(&text).map_err(RunError::Validation)?;
    if let Some(seed) = opts.seed {
        config.mc.master_seed = seed;
    }
    if let Some(paths) = opts.paths {
        config.mc.n_paths = paths;
    }
    if let Some(steps) = opts.grid_steps {
        config.grid.steps = steps;
    }
    let experiment = config.build().map_err(RunError::Validation)?;

    fs::create_dir_all(&opts.out_dir)?;
    let writer = OutputWriter {
        dir: opts.out_dir.clone(),
        header: format!("# {TOOL_NAME} {TOOL_VERSION} config_sha256={config_sha256}"),
        files: Vec::new(),
    };

    match opts.threads {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| RunError::Validation(format!("thread pool: {e}")))?;
            pool.install(|| execute(&experiment, config_sha256, writer))
        }
        None => execute(&experiment, config_sha256, writer),
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn execute(
    exp: &Experiment,
    config_sha256: String,
    mut w: OutputWriter,
) -> Result<RunSummary, RunError> {
    let effective = EffectiveConfig {
        horizon: exp.grid.horizon(),
        steps: exp.grid.steps(),
        n_paths: exp.mc.n_paths,
        master_seed: exp.mc.master_seed,
        reservation: exp.reservation,
    };
    let (pass, failure): (bool, Option<String>) = match exp.mode {
        Mode::Riccati => run_riccati(exp, &config_sha256, &effective, &mut w)?,
        Mode::FirstBest => run_first_best(exp, &config_sha256, &effective, &mut w)?,
        Mode::Contract => run_contract(exp, &config_sha256, &effective, &mut w)?,
        Mode::VerifyAgent => run_verify_agent(exp, &config_sha256, &effective, &mut w)?,
        Mode::Principal => run_principal(exp, &config_sha256, &effective, &mut w)?,
        Mode::Mfg => run_mfg(exp, &config_sha256, &effective, &mut w)?,
        Mode::CaraCheck => run_cara(exp, &config_sha256, &effective, &mut w)?,
    };
    let summary = RunSummary {
        mode: exp.mode,
        pass,
        files: w.files,
    };
    match failure {
        Some(msg) if !pass => Err(RunError::VerificationFailed(msg)),
        _ => Ok(summary),
    }
}

type ModeOutcome = (bool, Option<String>);

fn run_riccati(
    exp: &Experiment,
    sha: &str,
    effective: &EffectiveConfig,
    w: &mut OutputWriter,
) -> Result<ModeOutcome, RunError> {
    let v = solve_riccati(&exp.model, &exp.grid, None)?;
    w.csv(
        "riccati.csv",
        "t,V",
        (0..exp.grid.n_nodes()).map(|i| format!("{},{}", fmt17(exp.grid.node(i)), fmt17(v.at(i)))),
    )?;
    #[derive(Serialize)]
    struct Results {
        v_terminal: f64,
        v_max: f64,
    }
    w.json(
        "report.json",
        &Report {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            config_sha256: sha.to_string(),
            mode: Mode::Riccati,
            effective: effective.clone(),
            pass: true,
            results: Results {
                v_terminal: v.last(),
                v_max: v.sup_norm(),
            },
        },
    )?;
    Ok((true, None))
}

fn run_first_best(
    exp: &Experiment,
    sha: &str,
    effective: &EffectiveConfig,
    w: &mut OutputWriter,
) -> Result<ModeOutcome, RunError> {
    let toy = first_best_toy(exp.model.prior_mean, exp.reservation, exp.grid.horizon());
    #[derive(Serialize)]
    struct Results {
        second_best: f64,
        first_best: f64,
        gap: f64,
        linear_contract_slope: f64,
        linear_contract_intercept: f64,
    }
    let FirstBestToy {
        second_best,
        first_best,
        linear_contract,
    } = toy;
    w.json(
        "report.json",
        &Report {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            config_sha256: sha.to_string(),
            mode: Mode::FirstBest,
            effective: effective.clone(),
            pass: true,
            results: Results {
                second_best,
                first_best,
                gap: first_best - second_best,
                linear_contract_slope: linear_contract.0,
                linear_contract_intercept: linear_contract.1,
            },
        },
    )?;
    Ok((true, None))
}

fn write_contract_outputs(
    sha: &str,
    contract: &Contract,
    w: &mut OutputWriter,
) -> Result<(), RunError> {
    let path = w.dir.join("contract.json");
    let file = fs::File::create(&path)?;
    save_contract(file, contract, Some(sha))?;
    w.files.push(path);
    Ok(())
}

fn run_contract(
    exp: &Experiment,
    sha: &str,
    effective: &EffectiveConfig,
    w: &mut OutputWriter,
) -> Result<ModeOutcome, RunError> {
    let (contract, solution) = build_optimal_contract(
        exp.reservation,
        &exp.model,
        &exp.cost,
        &exp.controls,
        &exp.grid,
    )?;
    write_contract_outputs(sha, &contract, w)?;
    w.csv(
        "contract.csv",
        "t,beta,Z,P,Q,V",
        (0..exp.grid.n_nodes()).map(|i| {
            format!(
                "{},{},{},{},{},{}",
                fmt17(exp.grid.node(i)),
                fmt17(contract.effort.at(i)),
                fmt17(solution.z.at(i)),
                fmt17(solution.p.at(i)),
                fmt17(solution.q.at(i)),
                fmt17(contract.v.at(i))
            )
        }),
    )?;

    if exp.export_paths > 0 {
        let mc = McConfig::new(exp.export_paths, exp.mc.master_seed).map_err(RunError::Numerics)?;
        let ens = simulate_filter(
            &exp.model,
            &contract.v,
            &contract.effort,
            None,
            &mc,
            &exp.grid,
        )?;
        let mut rows = Vec::new();
        for (pid, ((x, b), inn)) in ens
            .state
            .iter()
            .zip(&ens.observation)
            .zip(&ens.innovation)
            .enumerate()
        {
            let y = forward_value_path(&contract, inn)?;
            for i in 0..exp.grid.n_nodes() {
                rows.push(format!(
                    "{},{pid},{},{},{},{}",
                    fmt17(exp.grid.node(i)),
                    fmt17(x.at(i)),
                    fmt17(b.at(i)),
                    fmt17(inn.at(i)),
                    fmt17(y.at(i))
                ));
            }
        }
        w.csv("paths.csv", "t,path_id,X,B,I,Y", rows.into_iter())?;
    }

    let band = sufficient_condition_check(
        &solution.q,
        &exp.model,
        &exp.cost,
        &exp.controls,
        None,
        &exp.grid,
    );
    let residuals = fbsde_residuals(&exp.model, &solution, &contract.v, &exp.grid);
    #[derive(Serialize)]
    struct Results {
        y0: f64,
        principal_value_closed_form: f64,
        incentive_residual: f64,
        incentive_first_order_residual: f64,
        sufficient_condition: BandCheck,
        fbsde_residuals: FbsdeResiduals,
    }
    let results = Results {
        y0: solution.y0,
        principal_value_closed_form: principal_value_closed_form(
            exp.reservation,
            &exp.model,
            &exp.cost,
            &exp.controls,
            &exp.grid,
        ),
        incentive_residual: incentive_residual(
            &solution,
            &contract.effort,
            &exp.model,
            &exp.cost,
            &contract.v,
            None,
            &exp.controls,
            &exp.grid,
        ),
        incentive_first_order_residual: incentive_first_order_residual(
            &solution,
            &contract.effort,
            &exp.model,
            &exp.cost,
            &contract.v,
            None,
            &exp.grid,
        ),
        sufficient_condition: band,
        fbsde_residuals: residuals,
    };
    let pass = band.pass;
    w.json(
        "report.json",
        &Report {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            config_sha256: sha.to_string(),
            mode: Mode::Contract,
            effective: effective.clone(),
            pass,
            results,
        },
    )?;
    Ok((
        pass,
        (!pass).then(|| "sufficient-condition band violated".to_string()),
    ))
}

fn run_verify_agent(
    exp: &Experiment,
    sha: &str,
    effective: &EffectiveConfig,
    w: &mut OutputWriter,
) -> Result<ModeOutcome, RunError> {
    let (contract, solution) = build_optimal_contract(
        exp.reservation,
        &exp.model,
        &exp.cost,
        &exp.controls,
        &exp.grid,
    )?;
    let agent_report = verify_agent_optimality(&contract, &exp.cost, &exp.controls, &exp.mc)?;

    let direction = Path::constant(exp.grid, 1.0);
    let stationarity = stationarity_check(
        &contract,
        &contract.effort.clone(),
        &direction,
        &STATIONARITY_EPSILONS,
        &exp.cost,
        &exp.controls,
        &exp.mc,
    )?;
    let stationarity_ok = stationarity.iter().all(|p| {
        p.derivative.abs() <= crate::agent::STATIONARITY_SLOPE_BOUND * p.epsilon + 3.0 * p.std_error
    });

    let probe_effort = contract
        .effort
        .map(|b| exp.controls.clamp(b - SUBOPTIMAL_PROBE_OFFSET));
    let probe = stationarity_check(
        &contract,
        &probe_effort,
        &direction,
        &STATIONARITY_EPSILONS,
        &exp.cost,
        &exp.controls,
        &exp.mc,
    )?;
    let probe_ok = probe.iter().all(|p| p.derivative > 3.0 * p.std_error);

    let band = sufficient_condition_check(
        &solution.q,
        &exp.model,
        &exp.cost,
        &exp.controls,
        None,
        &exp.grid,
    );
    let pass = agent_report.pass && stationarity_ok && probe_ok && band.pass;

    #[derive(Serialize)]
    struct Results {
        agent: AgentOptimalityReport,
        stationarity: Vec<StationarityPoint>,
        stationarity_ok: bool,
        suboptimal_probe: Vec<StationarityPoint>,
        suboptimal_probe_ok: bool,
        incentive_residual: f64,
        sufficient_condition: BandCheck,
    }
    w.json(
        "report.json",
        &Report {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            config_sha256: sha.to_string(),
            mode: Mode::VerifyAgent,
            effective: effective.clone(),
            pass,
            results: Results {
                agent: agent_report,
                stationarity,
                stationarity_ok,
                suboptimal_probe: probe,
                suboptimal_probe_ok: probe_ok,
                incentive_residual: incentive_residual(
                    &solution,
                    &contract.effort,
                    &exp.model,
                    &exp.cost,
                    &contract.v,
                    None,
                    &exp.controls,
                    &exp.grid,
                ),
                sufficient_condition: band,
            },
        },
    )?;
    Ok((
        pass,
        (!pass).then(|| "agent optimality verification failed".to_string()),
    ))
}

fn run_principal(
    exp: &Experiment,
    sha: &str,
    effective: &EffectiveConfig,
    w: &mut OutputWriter,
) -> Result<ModeOutcome, RunError> {
    let (contract, _) = build_optimal_contract(
        exp.reservation,
        &exp.model,
        &exp.cost,
        &exp.controls,
        &exp.grid,
    )?;
    let estimate = principal_value_mc(&contract, &contract.effort.clone(), &exp.cost, &exp.mc)?;
    let closed = principal_value_closed_form(
        exp.reservation,
        &exp.model,
        &exp.cost,
        &exp.controls,
        &exp.grid,
    );
    let pass = (estimate.mean - closed).abs() <= 3.0 * estimate.std_error;
    #[derive(Serialize)]
    struct Results {
        monte_carlo: McEstimate,
        closed_form: f64,
        sigma_distance: f64,
    }
    w.json(
        "report.json",
        &Report {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            config_sha256: sha.to_string(),
            mode: Mode::Principal,
            effective: effective.clone(),
            pass,
            results: Results {
                monte_carlo: estimate,
                closed_form: closed,
                sigma_distance: estimate.sigmas_from(closed),
            },
        },
    )?;
    Ok((
        pass,
        (!pass).then(|| {
            format!(
                "Monte Carlo principal value {} not within 3 SE of closed form {closed}",
                estimate.mean
            )
        }),
    ))
}

fn run_mfg(
    exp: &Experiment,
    sha: &str,
    effective: &EffectiveConfig,
    w: &mut OutputWriter,
) -> Result<ModeOutcome, RunError> {
    let eq = mfg_equilibrium(
        &exp.model,
        &exp.cost,
        &exp.controls,
        exp.reservation,
        &exp.grid,
    )?;
    w.csv(
        "mfg.csv",
        "t,k,rho,beta_star,B_bar,V,P_bar,Z",
        (0..exp.grid.n_nodes()).map(|i| {
            format!(
                "{},{},{},{},{},{},{},{}",
                fmt17(exp.grid.node(i)),
                fmt17(eq.k.at(i)),
                fmt17(eq.rho.at(i)),
                fmt17(eq.beta_star.at(i)),
                fmt17(eq.b_bar.at(i)),
                fmt17(eq.v.at(i)),
                fmt17(eq.p_bar.at(i)),
                fmt17(eq.contract.z_star.at(i))
            )
        }),
    )?;
    let eq_path = w.dir.join("mfg.json");
    let file = fs::File::create(&eq_path)?;
    serde_json::to_writer_pretty(file, &eq).map_err(Error::Json)?;
    w.files.push(eq_path);

    let fixed_point = mfg_fixed_point_residual(&eq, &exp.mc)?;
    let solution = eq.solution();
    let band = sufficient_condition_check(
        &solution.q,
        &exp.model,
        &exp.cost,
        &exp.controls,
        Some(&eq.b_bar),
        &exp.grid,
    );
    let oracle_gap = if exp.grid.steps() <= ORACLE_MAX_STEPS {
        let oracle = mfg_deterministic_oracle(&exp.model, &exp.cost, &exp.controls, &exp.grid)?;
        Some(oracle.sup_distance(&eq.beta_star))
    } else {
        None
    };
    let pass = fixed_point.pass && band.pass;
    #[derive(Serialize)]
    struct Results {
        clamped: bool,
        fixed_point: FixedPointCheck,
        sufficient_condition: BandCheck,
        adjoint_ode_residual: f64,
        mean_path_residual: f64,
        adjoint_p_residual: f64,
        incentive_residual_literal: f64,
        incentive_residual_first_order: f64,
        /// Sup-distance between the Pontryagin oracle and the closed-form
        /// effort; absent when the grid exceeds the oracle's limit.
        oracle_gap: Option<f64>,
    }
    w.json(
        "report.json",
        &Report {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            config_sha256: sha.to_string(),
            mode: Mode::Mfg,
            effective: effective.clone(),
            pass,
            results: Results {
                clamped: eq.clamped,
                fixed_point,
                sufficient_condition: band,
                adjoint_ode_residual: mfg_adjoint_ode_check(&eq.k, &eq.rho, &exp.grid),
                mean_path_residual: mfg_mean_path_residual(
                    &eq.k,
                    &eq.beta_star,
                    &eq.b_bar,
                    &exp.grid,
                ),
                adjoint_p_residual: mfg_adjoint_p_residual(
                    &exp.model,
                    &eq.b_bar,
                    &eq.beta_star,
                    &eq.p_bar,
                    &exp.grid,
                ),
                incentive_residual_literal: incentive_residual(
                    &solution,
                    &eq.beta_star,
                    &exp.model,
                    &exp.cost,
                    &eq.v,
                    Some(&eq.b_bar),
                    &exp.controls,
                    &exp.grid,
                ),
                incentive_residual_first_order: incentive_first_order_residual(
                    &solution,
                    &eq.beta_star,
                    &exp.model,
                    &exp.cost,
                    &eq.v,
                    Some(&eq.b_bar),
                    &exp.grid,
                ),
                oracle_gap,
            },
        },
    )?;
    Ok((
        pass,
        (!pass).then(|| "mean-field fixed point or band check failed".to_string()),
    ))
}

fn run_cara(
    exp: &Experiment,
    sha: &str,
    effective: &EffectiveConfig,
    w: &mut OutputWriter,
) -> Result<ModeOutcome, RunError> {
    let (cara, z, effort) = exp
        .cara
        .as_ref()
        .expect("validated: cara block present in cara-check mode");
    let defect = cara_value_check(
        z,
        exp.reservation,
        &exp.cost,
        effort,
        cara,
        &exp.mc,
        &exp.grid,
    )?;
    // Absolute floor covers the deterministic zero-exposure case, where the
    // standard error vanishes and the defect is pure transcendental
    // rounding.
    let pass = defect.mean.abs() <= 3.0 * defect.std_error + 1e-12;
    #[derive(Serialize)]
    struct Results {
        risk_aversion: f64,
        defect: McEstimate,
    }
    w.json(
        "report.json",
        &Report {
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
            config_sha256: sha.to_string(),
            mode: Mode::CaraCheck,
            effective: effective.clone(),
            pass,
            results: Results {
                risk_aversion: cara.risk_aversion,
                defect,
            },
        },
    )?;
    Ok((
        pass,
        (!pass).then(|| format!("CARA identity defect {} exceeds 3 SE", defect.mean)),
    ))
}
