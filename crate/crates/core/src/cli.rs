//! The `humbr` command.
//!
//! Exit codes: 0 on success, 1 on any error, 2 when a pool abstained
//! (`select`) or no plan meets the tolerance (`plan`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ConfigFile, Overrides, RunConfig};
use crate::consensus::{select, DivergenceAccumulator};
use crate::embedding::{provider_from_config, CachedEmbedder};
use crate::orchestrator::{generate_pool, GenerationOptions, GenerationRequest, Provider};
use crate::planner::{pareto_frontier, plan, Certification, ModelCatalogEntry, PlanError, PlanLimits};
use crate::records::{self, PlanRecord, PromptRecord, ResultRecord, RiskRecord};
use crate::riskmodel::{estimate_failure, ModelErrorProfile, RiskParameters, DEFAULT_ENUMERATION_CEILING};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ABSTAIN: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "humbr", version, about = "Hybrid-utility MBR consensus and ensemble risk planning")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Weight of the semantic term in the hybrid utility.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Consensus threshold.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// Failure tolerance.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model catalog (JSON lines).
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    /// Monte Carlo trials.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Smallest acceptable generated pool.
    #[arg(long, global = true)]
    pub min_pool: Option<usize>,
    /// Global cap on concurrent generation requests.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a consensus candidate (or abstain) for each pool in a file.
    Select {
        pools: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Cheapest ensemble meeting the failure tolerance.
    Plan(PlanArgs),
    /// Exact and Hoeffding failure probabilities.
    RiskExact(RiskArgs),
    /// Monte Carlo failure probability, next to the exact and Hoeffding values.
    Simulate(RiskArgs),
    /// Generate candidate pools for each prompt in a file.
    Generate {
        prompts: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Lowest achievable failure probability per budget.
    Pareto {
        /// Comma-separated budgets.
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<f64>,
        #[command(flatten)]
        limits: LimitArgs,
    },
    /// Per-model divergence statistics over result files.
    Monitor {
        #[arg(required = true)]
        results: Vec<PathBuf>,
    },
    /// Config file utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConfigAction {
    /// Parse and validate the config, then print the resolved settings.
    Validate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoundArg {
    /// Exact enumeration when within the ceiling, Hoeffding otherwise.
    Exact,
    /// Hoeffding design bound only.
    Hoeffding,
}

#[derive(Debug, Args)]
pub struct LimitArgs {
    #[arg(long, default_value_t = 8)]
    pub max_k: usize,
    #[arg(long, default_value_t = 8)]
    pub max_m: u32,
    #[arg(long, value_enum, default_value_t = BoundArg::Exact)]
    pub bound: BoundArg,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CEILING)]
    pub ceiling: u32,
}

impl LimitArgs {
    fn limits(&self) -> PlanLimits {
        PlanLimits {
            max_k: self.max_k,
            max_m: self.max_m,
            enumeration_ceiling: self.ceiling,
            certification: match self.bound {
                BoundArg::Exact => Certification::ExactWhenEnumerable,
                BoundArg::Hoeffding => Certification::Hoeffding,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub limits: LimitArgs,
}

#[derive(Debug, Args)]
pub struct RiskArgs {
    /// Number of models K.
    #[arg(long, default_value_t = 4)]
    pub models: usize,
    /// Samples per model M.
    #[arg(long, default_value_t = 4)]
    pub samples: u32,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    /// Heterogeneous profile `MU,RHO,M`; repeat per model. Overrides
    /// --models/--samples/--mu/--rho.
    #[arg(long)]
    pub profile: Vec<String>,
    /// Correlation used by the Hoeffding bound; defaults to the weighted mean.
    #[arg(long)]
    pub rho_bar: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CEILING)]
    pub ceiling: u32,
}

impl RiskArgs {
    fn params(&self, tau: f64, epsilon: f64) -> Result<RiskParameters, String> {
        let result = if self.profile.is_empty() {
            RiskParameters::homogeneous(self.models, self.samples, self.mu, self.rho, tau, epsilon)
        } else {
            let profiles = self
                .profile
                .iter()
                .map(|p| parse_profile(p))
                .collect::<Result<Vec<_>, _>>()?;
            RiskParameters::new(profiles, tau, epsilon)
        };
        result.map_err(|e| e.to_string())
    }
}

fn parse_profile(s: &str) -> Result<ModelErrorProfile, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [mu, rho, m] = parts.as_slice() else {
        return Err(format!("profile {s:?} must be MU,RHO,M"));
    };
    let mu: f64 = mu.parse().map_err(|_| format!("bad mu in {s:?}"))?;
    let rho: f64 = rho.parse().map_err(|_| format!("bad rho in {s:?}"))?;
    let m: u32 = m.parse().map_err(|_| format!("bad M in {s:?}"))?;
    ModelErrorProfile::new(mu, rho, m).map_err(|e| e.to_string())
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            alpha: self.alpha,
            tau: self.tau,
            epsilon: self.epsilon,
            seed: self.seed,
            trials: self.trials,
            parallelism: self.parallelism,
            min_pool: self.min_pool,
            catalog: self.catalog.clone(),
        }
    }
}

fn open_output<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, String> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| format!("cannot create {}: {e}", p.display())),
        None => Ok(Box::new(stdout)),
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, String> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| format!("cannot open {}: {e}", path.display()))
}

fn load_catalog(cfg: &RunConfig) -> Result<Vec<ModelCatalogEntry>, String> {
    let path = cfg.catalog.as_ref().ok_or("no catalog given (--catalog or config `catalog`)")?;
    records::read_lines(open_input(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

/// Parses `args` and runs the command, writing records to `stdout` and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn run_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, stdout, stderr),
        Err(e) => {
            let _ = write!(stderr, "{e}");
            if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match dispatch(cli, stdout, stderr) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_ERROR
        }
    }
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, String> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides()).map_err(|e| e.to_string())?;
    let code = match &cli.command {
        Command::Select { pools, output } => {
            let mut out = open_output(output.as_deref(), stdout)?;
            let code = cmd_select(pools, &cfg, &mut *out, stderr)?;
            out.flush().map_err(|e| e.to_string())?;
            code
        }
        Command::Plan(args) => cmd_plan(&cfg, &args.limits.limits(), stdout, stderr)?,
        Command::RiskExact(args) => cmd_risk(args, &cfg, None, stdout)?,
        Command::Simulate(args) => cmd_risk(args, &cfg, Some((cfg.trials, cfg.seed)), stdout)?,
        Command::Generate { prompts, output } => {
            let mut out = open_output(output.as_deref(), stdout)?;
            let code = cmd_generate(prompts, &cfg, &mut *out, stderr)?;
            out.flush().map_err(|e| e.to_string())?;
            code
        }
        Command::Pareto { budgets, limits } => cmd_pareto(&cfg, budgets, &limits.limits(), stdout)?,
        Command::Monitor { results } => cmd_monitor(results, stdout)?,
        Command::Config {
            action: ConfigAction::Validate,
        } => cmd_config_validate(cli.config.as_deref(), &cfg, stdout)?,
    };
    Ok(code)
}

fn io(e: std::io::Error) -> String {
    e.to_string()
}

pub fn cmd_select(pools: &Path, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let parsed = records::read_pools(open_input(pools)?).map_err(|e| e.to_string())?;
    let mut failed = !parsed.errors.is_empty();
    for e in &parsed.errors {
        writeln!(err, "{}: {e}", pools.display()).map_err(io)?;
    }
    for id in &parsed.skipped {
        writeln!(err, "pool {id} skipped").map_err(io)?;
    }
    let embedder = CachedEmbedder::new(provider_from_config(&cfg.embedding).map_err(|e| e.to_string())?);
    let model = cfg.embedding.model.clone();
    let mut abstained = false;
    for pool in &parsed.pools {
        match select(pool, cfg.alpha, cfg.tau, &embedder) {
            Ok(result) => {
                let rec = ResultRecord::new(pool, &result, cfg.alpha, &model);
                abstained |= rec.is_abstain();
                records::write_line(out, &rec).map_err(io)?;
            }
            Err(e) => {
                failed = true;
                writeln!(err, "pool {}: {e}", pool.prompt_id()).map_err(io)?;
            }
        }
    }
    Ok(if failed {
        EXIT_ERROR
    } else if abstained {
        EXIT_ABSTAIN
    } else {
        EXIT_OK
    })
}

pub fn cmd_plan(cfg: &RunConfig, limits: &PlanLimits, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    let catalog = load_catalog(cfg)?;
    match plan(&catalog, cfg.tau, cfg.epsilon, limits) {
        Ok(p) => {
            records::write_line(out, &PlanRecord::Feasible(p)).map_err(io)?;
            Ok(EXIT_OK)
        }
        Err(PlanError::Infeasible { reason, best }) => {
            writeln!(err, "infeasible: {reason}").map_err(io)?;
            records::write_line(
                out,
                &PlanRecord::Infeasible {
                    tau: cfg.tau,
                    epsilon: cfg.epsilon,
                    reason,
                    best: best.map(|b| *b),
                },
            )
            .map_err(io)?;
            Ok(EXIT_ABSTAIN)
        }
        Err(e) => Err(e.to_string()),
    }
}

pub fn cmd_risk(args: &RiskArgs, cfg: &RunConfig, monte_carlo: Option<(u64, u64)>, out: &mut dyn Write) -> Result<i32, String> {
    let params = args.params(cfg.tau, cfg.epsilon)?;
    let estimate = estimate_failure(&params, args.rho_bar, args.ceiling, monte_carlo).map_err(|e| e.to_string())?;
    records::write_line(
        out,
        &RiskRecord {
            profiles: params.profiles.clone(),
            tau: params.tau,
            estimate,
        },
    )
    .map_err(io)?;
    Ok(EXIT_OK)
}

pub fn cmd_generate(prompts: &Path, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, String> {
    if cfg.providers.is_empty() {
        return Err("no providers configured".into());
    }
    let requests: Vec<PromptRecord> = records::read_lines(open_input(prompts)?).map_err(|e| e.to_string())?;
    let providers = cfg
        .providers
        .iter()
        .map(|s| Provider::from_spec(s.clone(), cfg.seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let options = GenerationOptions {
        parallelism: cfg.parallelism,
        min_pool: cfg.min_pool,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    let mut failed = false;
    for rec in requests {
        let request = GenerationRequest::new(rec.prompt_id.clone(), rec.prompt);
        match runtime.block_on(generate_pool(&request, &providers, &options)) {
            Ok(generated) => {
                if !generated.failures.is_empty() {
                    let warning = serde_json::json!({
                        "warning": "partial pool",
                        "prompt_id": rec.prompt_id,
                        "requested": generated.requested,
                        "received": generated.pool.len(),
                        "failures": generated.failures,
                    });
                    writeln!(err, "{warning}").map_err(io)?;
                }
                records::write_pool(out, &generated.pool).map_err(io)?;
            }
            Err(e) => {
                failed = true;
                writeln!(err, "prompt {}: {e}", rec.prompt_id).map_err(io)?;
            }
        }
    }
    Ok(if failed { EXIT_ERROR } else { EXIT_OK })
}

pub fn cmd_pareto(cfg: &RunConfig, budgets: &[f64], limits: &PlanLimits, out: &mut dyn Write) -> Result<i32, String> {
    let catalog = load_catalog(cfg)?;
    for point in pareto_frontier(&catalog, cfg.tau, budgets, limits).map_err(|e| e.to_string())? {
        records::write_line(out, &point).map_err(io)?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_monitor(results: &[PathBuf], out: &mut dyn Write) -> Result<i32, String> {
    let mut acc = DivergenceAccumulator::new();
    let mut seen = 0;
    for path in results {
        let recs: Vec<ResultRecord> =
            records::read_lines(open_input(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
        for r in recs {
            acc.add(&r.model_ids, &r.scores, r.tau).map_err(|e| e.to_string())?;
            seen += 1;
        }
    }
    if seen == 0 {
        return Err("no result records to monitor".into());
    }
    records::write_line(out, &acc.report()).map_err(io)?;
    Ok(EXIT_OK)
}

fn cmd_config_validate(path: Option<&Path>, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32, String> {
    if let Some(p) = path {
        // surfaces unknown keys even when resolution succeeded
        ConfigFile::load(p).map_err(|e| e.to_string())?;
    }
    let summary = serde_json::json!({
        "status": "ok",
        "alpha": cfg.alpha,
        "tau": cfg.tau,
        "epsilon": cfg.epsilon,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "parallelism": cfg.parallelism,
        "min_pool": cfg.min_pool,
        "catalog": cfg.catalog,
        "embedding_endpoint": cfg.embedding.endpoint,
        "providers": cfg.providers.iter().map(|p| &p.id).collect::<Vec<_>>(),
    });
    writeln!(out, "{summary}").map_err(io)?;
    Ok(EXIT_OK)
}
