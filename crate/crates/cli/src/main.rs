//! `mmshare`: runs sharing scenarios from a TOML configuration and writes
//! CSV series, JSON summaries and a manifest that `rerun` can replay.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mmshare::config::{Attribution, RadioConfig, TopologyKind};
use mmshare::hybrid::run_simulation;
use mmshare::report::{write_decision_table, write_rate_reports, write_timeseries};
use mmshare::scenario::{
    baseline_summary, build_topology, example_table, oracle_summary, solve_oracle, DecisionSummary, ExampleScenario,
};
use mmshare::evaluator::MonteCarloEvaluator;
use mmshare::optimizer::baseline::closest_bs_decision;
use mmshare::{Config, Error};

#[derive(Parser)]
#[command(name = "mmshare", version, about = "Multi-operator mmWave spectrum sharing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hybrid learning loop.
    Run(Common),
    /// Optimize with true Monte-Carlo rates, or evaluate a fixed example decision.
    Oracle(Common),
    /// Compare the example scenarios and optima for both antenna settings.
    Table2(Common),
    /// Evaluate the closest-BS association.
    Baseline(Common),
    /// Replay a previous command from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Topology preset (`toy`, `manhattan`) or a fixed example decision (`a`, `b`, `c`; oracle only).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    antennas: Option<Antennas>,
    /// Coordination budget of every operator.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    roaming: bool,
    #[arg(long, value_enum)]
    attribution: Option<AttributionArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Antennas {
    Small,
    Large,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttributionArg {
    Ue,
    Bs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CommandKind {
    Run,
    Oracle,
    Table2,
    Baseline,
}

/// Everything needed to reproduce a command.
#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    command: CommandKind,
    scenario: String,
    seed: u64,
    /// Fixed example decision evaluated by `oracle`, if any.
    fixed: Option<String>,
    config: Config,
    output_dir: String,
    files: Vec<String>,
    versions: BTreeMap<String, String>,
}

fn load_config(common: &Common) -> anyhow::Result<(Config, Option<ExampleScenario>)> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::config("--config", format!("{}: {e}", common.config.display())))?;
    let mut cfg = Config::from_toml_str(&text)?;
    let mut fixed = None;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(s) = &common.scenario {
        match s.as_str() {
            "toy" => cfg.scenario.topology = TopologyKind::Toy,
            "manhattan" => cfg.scenario.topology = TopologyKind::Manhattan,
            other => match ExampleScenario::parse(other) {
                Some(w) => {
                    cfg.scenario.topology = TopologyKind::Toy;
                    fixed = Some(w);
                }
                None => {
                    return Err(Error::config("--scenario", format!("unknown scenario `{other}`")).into());
                }
            },
        }
        cfg.scenario.name = s.clone();
    }
    if let Some(a) = common.antennas {
        let preset = match a {
            Antennas::Small => RadioConfig::small_antennas(),
            Antennas::Large => RadioConfig::large_antennas(),
        };
        cfg.radio.n_bs = preset.n_bs;
        cfg.radio.n_ue = preset.n_ue;
    }
    if let Some(b) = common.budget {
        cfg.sharing.budget = vec![b];
    }
    if common.roaming {
        cfg.sharing.roaming = true;
    }
    if let Some(a) = common.attribution {
        cfg.sharing.attribution = match a {
            AttributionArg::Ue => Attribution::Ue,
            AttributionArg::Bs => Attribution::Bs,
        };
    }
    cfg.validate()?;
    Ok((cfg, fixed))
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        self.files.push(name.to_string());
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        let mut w = self.create(name)?;
        std::io::Write::write_all(&mut w, text.as_bytes())?;
        Ok(())
    }
}

#[derive(Serialize)]
struct PhaseSummary {
    start_ci: u64,
    num_ue: usize,
}

#[derive(Serialize)]
struct RunSummary {
    scenario: String,
    seed: u64,
    ci_count: u64,
    promotion_cis: Vec<u64>,
    phases: Vec<PhaseSummary>,
    /// Maximum measured sum rate per window of 500 CIs, Gbps.
    sum_rate_envelope_gbps: Vec<f64>,
    final_decision: DecisionSummary,
    closest_bs: DecisionSummary,
    oracle: Option<DecisionSummary>,
    /// Oracle utility minus final utility.
    oracle_gap: Option<f64>,
}

const ENVELOPE_WINDOW: usize = 500;

fn cmd_run(cfg: &Config, out: &mut Output) -> anyhow::Result<()> {
    let topo = build_topology(cfg)?;
    let ops = topo.num_operators();
    let started = Instant::now();
    let sim = run_simulation(cfg, topo)?;
    eprintln!("ran {} CIs in {:.1?}", sim.records.len(), started.elapsed());

    write_timeseries(out.create("timeseries.csv")?, &sim.records, ops)?;
    write_rate_reports(out.create("rates.csv")?, &sim.records)?;
    out.text("dataset.txt", &sim.models.dataset().to_text())?;
    out.text("models.txt", &sim.models.models_to_text())?;

    let problem = &sim.phases.last().expect("at least one phase").problem;
    let focus = cfg.scenario.focus_ue - 1;
    let ev = MonteCarloEvaluator::new(problem.topology(), &cfg.radio, cfg.seed);
    let final_decision = DecisionSummary::evaluate("final", problem, &ev, &sim.final_decision, focus)?;
    let closest_bs = DecisionSummary::evaluate("closest-bs", problem, &ev, &closest_bs_decision(problem)?, focus)?;
    let oracle = if cfg.scenario.compute_oracle {
        let d = solve_oracle(problem, &ev)?.decision;
        Some(DecisionSummary::evaluate("oracle", problem, &ev, &d, focus)?)
    } else {
        None
    };
    let summary = RunSummary {
        scenario: cfg.scenario.name.clone(),
        seed: cfg.seed,
        ci_count: cfg.scenario.ci_count,
        promotion_cis: sim.promotion_cis(),
        phases: sim
            .phases
            .iter()
            .map(|p| PhaseSummary {
                start_ci: p.start_ci,
                num_ue: p.problem.num_ue(),
            })
            .collect(),
        sum_rate_envelope_gbps: sim
            .records
            .chunks(ENVELOPE_WINDOW)
            .map(|w| w.iter().map(|r| r.sum_rate).fold(0.0, f64::max) / 1e9)
            .collect(),
        oracle_gap: oracle.as_ref().map(|o| o.utility - final_decision.utility),
        final_decision,
        closest_bs,
        oracle,
    };
    out.json("summary.json", &summary)?;
    Ok(())
}

fn write_single(out: &mut Output, summary: &DecisionSummary) -> anyhow::Result<()> {
    write_decision_table(out.create("summary.csv")?, std::slice::from_ref(summary))?;
    out.json("summary.json", summary)
}

fn execute(kind: CommandKind, cfg: &Config, fixed: Option<ExampleScenario>, dir: &Path) -> anyhow::Result<()> {
    if fixed.is_some() && kind != CommandKind::Oracle {
        return Err(Error::config("--scenario", "fixed example decisions a, b, c apply to `oracle` only").into());
    }
    let mut out = Output::new(dir)?;
    match kind {
        CommandKind::Run => cmd_run(cfg, &mut out)?,
        CommandKind::Oracle => write_single(&mut out, &oracle_summary(cfg, fixed)?.1)?,
        CommandKind::Baseline => write_single(&mut out, &baseline_summary(cfg)?.1)?,
        CommandKind::Table2 => {
            if build_topology(cfg)?.num_operators() < 2 {
                bail!(Error::config("scenario.topology", "the example table needs two operators"));
            }
            let rows = example_table(cfg, true)?;
            write_decision_table(out.create("table2.csv")?, &rows)?;
        }
    }
    let manifest = Manifest {
        command: kind,
        scenario: cfg.scenario.name.clone(),
        seed: cfg.seed,
        fixed: fixed.map(|w| w.label().to_string()),
        config: cfg.clone(),
        output_dir: dir.display().to_string(),
        files: {
            let mut f = out.files.clone();
            f.push("manifest.json".to_string());
            f
        },
        versions: BTreeMap::from([("mmshare".to_string(), env!("CARGO_PKG_VERSION").to_string())]),
    };
    out.json("manifest.json", &manifest)?;
    for f in &manifest.files {
        println!("{}", dir.join(f).display());
    }
    Ok(())
}

fn rerun(manifest: &Path, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(manifest)
        .map_err(|e| Error::config("--manifest", format!("{}: {e}", manifest.display())))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::config("--manifest", e.to_string()))?;
    m.config.validate()?;
    let fixed = match &m.fixed {
        Some(s) => Some(
            ExampleScenario::parse(s).ok_or_else(|| Error::config("manifest.fixed", format!("unknown scenario `{s}`")))?,
        ),
        None => None,
    };
    execute(m.command, &m.config, fixed, out)
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let (kind, common) = match cli.command {
        Command::Run(c) => (CommandKind::Run, c),
        Command::Oracle(c) => (CommandKind::Oracle, c),
        Command::Table2(c) => (CommandKind::Table2, c),
        Command::Baseline(c) => (CommandKind::Baseline, c),
        Command::Rerun { manifest, out } => return rerun(&manifest, &out),
    };
    let (cfg, fixed) = load_config(&common)?;
    execute(kind, &cfg, fixed, &common.out)
}

/// 2 for configuration problems, 3 for infeasible instances, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config { .. } | Error::Parse(_)) => 2,
        Some(
            Error::Infeasible(_)
            | Error::EmptyFeasibleSet
            | Error::TooLarge { .. }
            | Error::CellTooLarge { .. }
            | Error::NoServingBs(_)
            | Error::UnservableLink { .. },
        ) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
