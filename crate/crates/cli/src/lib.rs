//! Experiment runner: scenario and graph construction, simulation, and the
//! CSV/JSON files consumed by external plotting tools.

use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use peakdual::dsm::{self, DsmError, ParamRanges, Scenario, SignConvention};
use peakdual::graph::{Graph, GraphError};
use peakdual::protocol::StepSchedule;
use peakdual::simnet::{self, fmt12, RunConfig, SimError, Trace};
use peakdual::subproblem::{LocalProblemData, SubproblemError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to logged errors so they stay plottable on a log axis.
pub const LOG_FLOOR: f64 = 1e-16;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Solver(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DsmError> for CliError {
    fn from(e: DsmError) -> Self {
        match e {
            DsmError::InvalidParams(_) => CliError::Config(e.to_string()),
            DsmError::InfeasibleScenario
            | DsmError::RetriesExhausted { .. }
            | DsmError::Subproblem(SubproblemError::EmptySet) => CliError::Infeasible(e.to_string()),
            DsmError::Subproblem(_) => CliError::Solver(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::AgentCount { .. } | SimError::Config(_) => CliError::Config(e.to_string()),
            SimError::Node { .. } | SimError::Oracle(_) => CliError::Solver(e.to_string()),
        }
    }
}

/// Where the agents come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSource {
    Generate {
        agents: usize,
        slots: usize,
        #[serde(default)]
        ranges: ParamRanges,
        #[serde(default)]
        convention: SignConvention,
    },
    File {
        path: PathBuf,
    },
}

/// Communication graph; generated graphs take their size from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    ErdosRenyi { p: f64 },
    Path,
    Complete,
    Ring,
    File { path: PathBuf },
}

impl GraphSource {
    pub fn build(&self, n: usize, seed: u64) -> Result<Graph, CliError> {
        Ok(match self {
            GraphSource::ErdosRenyi { p } => Graph::erdos_renyi(n, *p, seed)?,
            GraphSource::Path => Graph::path(n)?,
            GraphSource::Complete => Graph::complete(n)?,
            GraphSource::Ring => Graph::ring(n)?,
            GraphSource::File { path } => read_to_string(path)?.parse()?,
        })
    }
}

/// `er:P`, `path`, `complete` or `ring`.
impl FromStr for GraphSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(GraphSource::Path),
            "complete" => Ok(GraphSource::Complete),
            "ring" => Ok(GraphSource::Ring),
            _ => {
                let p = s
                    .strip_prefix("er:")
                    .ok_or_else(|| format!("unknown graph '{s}', expected er:P, path, complete or ring"))?;
                let p: f64 = p.parse().map_err(|_| format!("bad edge probability '{p}'"))?;
                Ok(GraphSource::ErdosRenyi { p })
            }
        }
    }
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::ErdosRenyi { p } => write!(f, "er:{p}"),
            GraphSource::Path => f.write_str("path"),
            GraphSource::Complete => f.write_str("complete"),
            GraphSource::Ring => f.write_str("ring"),
            GraphSource::File { path } => write!(f, "file:{}", path.display()),
        }
    }
}

/// `pow:EXP` or `pow:EXP:SCALE`.
pub fn parse_step(s: &str) -> Result<StepSchedule, String> {
    let rest = s
        .strip_prefix("pow:")
        .ok_or_else(|| format!("unknown step schedule '{s}', expected pow:EXP[:SCALE]"))?;
    let mut parts = rest.split(':');
    let num = |v: Option<&str>, what: &str| -> Result<Option<f64>, String> {
        v.map(|v| v.parse().map_err(|_| format!("bad step {what} '{v}'")))
            .transpose()
    };
    let exponent = num(parts.next(), "exponent")?.ok_or("missing step exponent")?;
    let scale = num(parts.next(), "scale")?.unwrap_or(1.0);
    if parts.next().is_some() {
        return Err(format!("trailing fields in step schedule '{s}'"));
    }
    StepSchedule::power_law(exponent, scale).map_err(|e| e.to_string())
}

pub fn parse_convention(s: &str) -> Result<SignConvention, String> {
    match s.replace('-', "_").as_str() {
        "exact_zoh" => Ok(SignConvention::ExactZoh),
        "paper_literal" => Ok(SignConvention::PaperLiteral),
        _ => Err(format!("unknown convention '{s}', expected exact-zoh or paper-literal")),
    }
}

/// Everything a `run` needs; the JSON form is the `--config` file format.
/// Relative paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub graph: GraphSource,
    /// Seeds scenario generation, the random graph and the node visiting order.
    pub seed: u64,
    pub max_rounds: u64,
    pub schedule: StepSchedule,
    pub epsilon_consensus: f64,
    pub record_every: u64,
    pub compute_oracle: bool,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        ExperimentConfig {
            scenario: ScenarioSource::Generate {
                agents: 15,
                slots: 50,
                ranges: ParamRanges::default(),
                convention: SignConvention::default(),
            },
            graph: GraphSource::ErdosRenyi { p: 0.2 },
            seed: run.seed,
            max_rounds: run.max_rounds,
            schedule: run.schedule,
            epsilon_consensus: run.epsilon_consensus,
            record_every: run.record_every,
            compute_oracle: run.compute_oracle,
            out: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            max_rounds: self.max_rounds,
            schedule: self.schedule,
            epsilon_consensus: self.epsilon_consensus,
            record_every: self.record_every,
            seed: self.seed,
            compute_oracle: self.compute_oracle,
        }
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        match &self.scenario {
            ScenarioSource::Generate {
                agents,
                slots,
                ranges,
                convention,
            } => Ok(dsm::gen_scenario(*agents, *slots, ranges, *convention, self.seed)?),
            ScenarioSource::File { path } => load_scenario(path),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "peakdual", version, about = "Distributed peak minimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the distributed method and write traces and figure data.
    Run(RunArgs),
    /// Check that every agent in a scenario file has a nonempty polytope.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Generate a scenario and write it as JSON.
    GenScenario {
        #[arg(long, default_value_t = 15)]
        agents: usize,
        #[arg(long, default_value_t = 50)]
        slots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_convention, default_value = "exact-zoh")]
        convention: SignConvention,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a communication graph in edge-list format.
    GenGraph {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value = "er:0.2")]
        graph: GraphSource,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags for `run`. Each given flag overrides the `--config` file, which in
/// turn overrides the defaults.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario JSON file to load instead of generating one.
    #[arg(long, conflicts_with_all = ["agents", "slots", "convention"])]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long, value_parser = parse_convention)]
    pub convention: Option<SignConvention>,
    /// er:P, path, complete or ring.
    #[arg(long, conflicts_with = "graph_file")]
    pub graph: Option<GraphSource>,
    /// Edge-list file.
    #[arg(long)]
    pub graph_file: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rounds: Option<u64>,
    /// pow:EXP[:SCALE], giving scale * t^-EXP.
    #[arg(long, value_parser = parse_step)]
    pub step: Option<StepSchedule>,
    /// Consensus threshold for early stopping; 0 disables it.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub record_every: Option<u64>,
    /// Compute the centralized optimum.
    #[arg(long, conflicts_with = "no_oracle")]
    pub oracle: bool,
    #[arg(long)]
    pub no_oracle: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&read_to_string(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.scenario {
            cfg.scenario = ScenarioSource::File { path: path.clone() };
        }
        if self.agents.is_some() || self.slots.is_some() || self.convention.is_some() {
            let ScenarioSource::Generate {
                agents,
                slots,
                convention,
                ..
            } = &mut cfg.scenario
            else {
                return Err(CliError::Config(
                    "--agents, --slots and --convention need a generated scenario".into(),
                ));
            };
            *agents = self.agents.unwrap_or(*agents);
            *slots = self.slots.unwrap_or(*slots);
            *convention = self.convention.unwrap_or(*convention);
        }
        if let Some(g) = &self.graph {
            cfg.graph = g.clone();
        }
        if let Some(path) = &self.graph_file {
            cfg.graph = GraphSource::File { path: path.clone() };
        }
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.max_rounds = self.rounds.unwrap_or(cfg.max_rounds);
        cfg.schedule = self.step.unwrap_or(cfg.schedule);
        cfg.epsilon_consensus = self.epsilon.unwrap_or(cfg.epsilon_consensus);
        cfg.record_every = self.record_every.unwrap_or(cfg.record_every);
        if self.oracle {
            cfg.compute_oracle = true;
        }
        if self.no_oracle {
            cfg.compute_oracle = false;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn write_file(path: &Path, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(CliError::io(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let sc: Scenario = serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    sc.validate()?;
    Ok(sc)
}

/// Outcome of [`execute`], for console reporting.
#[derive(Debug)]
pub struct RunOutcome {
    pub trace: Trace,
    pub summary: simnet::RunSummary,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Runs one experiment and writes every output file into `cfg.out`.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let run = cfg.run_config();
    run.validate()?;
    let scenario = cfg.scenario()?;
    let instance = scenario.build()?;
    let graph = cfg.graph.build(instance.len(), cfg.seed)?;
    let trace = simnet::run(&instance, &graph, &run)?;

    fs::create_dir_all(&cfg.out).map_err(CliError::io(&cfg.out))?;
    let mut files = Vec::new();
    let mut target = |name: &str| {
        let p = cfg.out.join(name);
        files.push(p.clone());
        p
    };
    write_json(&target("config.json"), cfg)?;
    write_json(&target("scenario.json"), &scenario)?;
    write_file(&target("graph.txt"), |w| write!(w, "{graph}"))?;
    write_file(&target("trace.csv"), |w| trace.write_csv(w))?;
    write_file(&target("profile.csv"), |w| trace.write_profile_csv(&instance, w))?;
    let mut summary = trace.summary(&graph);
    summary.wall_time_secs = None;
    write_json(&target("summary.json"), &summary)?;

    let figures = emit_figures_data(&trace, &instance, &cfg.out)?;
    files.extend(figures.written);
    Ok(RunOutcome {
        trace,
        summary,
        files,
        warnings: figures.warnings,
    })
}

#[derive(Debug, Default)]
pub struct FigureFiles {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Writes `fig1.csv` (per-agent and total `ρ` with `P*`), `fig2.csv` (final
/// schedules and aggregate consumption per slot) and, when the oracle ran,
/// `fig3.csv` (cost error floored at [`LOG_FLOOR`]).
pub fn emit_figures_data(trace: &Trace, instance: &[LocalProblemData], dir: &Path) -> Result<FigureFiles, CliError> {
    let mut out = FigureFiles::default();
    let n = trace.final_x.len();
    let p_star = trace.p_star.map(fmt12).unwrap_or_default();

    let fig1 = dir.join("fig1.csv");
    write_file(&fig1, |w| {
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",rho_{i}")?;
        }
        writeln!(w, ",sum_rho,p_star")?;
        for row in &trace.rows {
            write!(w, "{}", row.t)?;
            for r in &row.rho {
                write!(w, ",{}", fmt12(*r))?;
            }
            writeln!(w, ",{},{p_star}", fmt12(row.sum_rho))?;
        }
        Ok(())
    })?;
    out.written.push(fig1);

    let fig2 = dir.join("fig2.csv");
    let aggregate = peakdual::subproblem::aggregate_profile(instance, &trace.final_x);
    write_file(&fig2, |w| {
        write!(w, "slot")?;
        for i in 1..=n {
            write!(w, ",x_{i}")?;
        }
        writeln!(w, ",aggregate")?;
        for (s, total) in aggregate.iter().enumerate() {
            write!(w, "{}", s + 1)?;
            for x in &trace.final_x {
                write!(w, ",{}", fmt12(x[s]))?;
            }
            writeln!(w, ",{}", fmt12(*total))?;
        }
        Ok(())
    })?;
    out.written.push(fig2);

    if trace.p_star.is_none() {
        out.warnings
            .push("no centralized optimum computed; fig3.csv skipped".into());
        return Ok(out);
    }
    let fig3 = dir.join("fig3.csv");
    write_file(&fig3, |w| {
        writeln!(w, "t,cost_error")?;
        for row in &trace.rows {
            let e = row.cost_error.unwrap_or(f64::NAN).max(LOG_FLOOR);
            writeln!(w, "{},{}", row.t, fmt12(e))?;
        }
        Ok(())
    })?;
    out.written.push(fig3);
    Ok(out)
}

/// Prints per-agent feasibility; fails if any agent is infeasible.
pub fn validate(path: &Path, mut w: impl Write) -> Result<(), CliError> {
    let scenario = load_scenario(path)?;
    let mut bad = Vec::new();
    for k in 0..scenario.agents.len() {
        let line = match scenario.build_agent(k) {
            Ok(data) => format!("agent {}: feasible ({} comfort rows)", k + 1, data.poly_rhs().len()),
            Err(e @ DsmError::InvalidParams(_)) => return Err(e.into()),
            Err(e) => {
                bad.push(k + 1);
                format!("agent {}: infeasible ({e})", k + 1)
            }
        };
        writeln!(w, "{line}").map_err(CliError::io(Path::new("<stdout>")))?;
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!("agents {bad:?} have empty polytopes")))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(CliError::io(path)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(CliError::io(Path::new("<stdout>"))),
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let outcome = execute(&cfg)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            let s = &outcome.summary;
            println!(
                "agents {}  slots {}  edges {}  rounds {}",
                s.agents, s.slots, s.edges, s.rounds
            );
            if let Some(p) = s.p_star {
                println!("P* {}", fmt12(p));
            }
            println!("final sum rho {}", fmt12(s.final_sum_rho));
            if let Some(e) = s.final_relative_error {
                println!("relative error {}", fmt12(e));
            }
            println!("final peak {}", fmt12(s.final_peak));
            eprintln!("wall time {} s", fmt12(outcome.trace.wall_time.as_secs_f64()));
            println!("wrote {} files to {}", outcome.files.len(), cfg.out.display());
            Ok(())
        }
        Command::Validate { scenario } => validate(&scenario, io::stdout().lock()),
        Command::GenScenario {
            agents,
            slots,
            seed,
            convention,
            out,
        } => {
            let sc = dsm::gen_scenario(agents, slots, &ParamRanges::default(), convention, seed)?;
            let text = serde_json::to_string_pretty(&sc).map_err(|e| CliError::Config(e.to_string()))?;
            emit(out.as_deref(), &format!("{text}\n"))
        }
        Command::GenGraph {
            nodes,
            graph,
            seed,
            out,
        } => {
            let g = graph.build(nodes, seed)?;
            emit(out.as_deref(), &g.to_string())
        }
    }
}
