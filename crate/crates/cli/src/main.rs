use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mteqa::agent::{run_episode, Agent, Driver, EpisodeTrace, DEFAULT_BUDGET};
use mteqa::dataset::{
    build_dataset, emit_dataset, load_dataset, load_worlds, write_jsonl, Dataset, DatasetConfig, QuestionRecord,
};
use mteqa::metrics::{compute_metrics, emit_report, ReportFormat};
use mteqa::procgen::{generate_house, GenConfig};
use mteqa::raycast::render;
use mteqa::service::{serve, EnvServer};
use mteqa::training::{finetune_rl, prepare_all, train_il, TrainConfig, Worlds};
use mteqa::world::serialize_world;
use std::fs;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mteqa", version, about = "Multi-target embodied question answering in generated grid houses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate house layouts as JSON world documents.
    GenWorld {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Index of the first house.
        #[arg(long, default_value_t = 0)]
        start: u64,
        /// Generator config JSON; `--seed` overrides its seed.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build question records for a directory of worlds.
    GenDataset {
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep question groups whose answers are predictable from the text.
        #[arg(long)]
        no_entropy_filter: bool,
    },
    /// Train the agent by imitation or fine-tune its navigators by policy gradient.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long, value_enum)]
        stage: Stage,
        /// Starting checkpoint; required for `--stage rl`.
        #[arg(long)]
        ckpt_in: Option<PathBuf>,
        #[arg(long)]
        ckpt_out: PathBuf,
        /// Training config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run episodes and report navigation and answer metrics.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long, required_unless_present = "oracle")]
        ckpt: Option<PathBuf>,
        /// Replay shortest paths with ground-truth SELECT and answers.
        #[arg(long, conflicts_with = "ckpt")]
        oracle: bool,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        report: Format,
        /// Write one episode trace per line.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Render every step of one episode as PPM frames.
    Replay {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long)]
        question: String,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the environment as line-delimited JSON.
    Serve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        worlds: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        /// Listen on this TCP port instead of stdio.
        #[arg(long)]
        port: Option<u16>,
        /// Append every response line to this file.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Il,
    Rl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn split_of(ds: &Dataset, split: Split) -> &[QuestionRecord] {
    match split {
        Split::Train => &ds.records.train,
        Split::Val => &ds.records.val,
        Split::Test => &ds.records.test,
    }
}

fn load(dataset: &Path, worlds: &Path) -> Result<(Dataset, Worlds)> {
    let ds = load_dataset(dataset).with_context(|| format!("loading dataset {}", dataset.display()))?;
    let worlds = load_worlds(worlds).with_context(|| format!("loading worlds {}", worlds.display()))?;
    Ok((ds, worlds))
}

fn load_agent(path: &Path) -> Result<Agent> {
    Agent::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn world_of<'a>(worlds: &'a Worlds, r: &QuestionRecord) -> Result<&'a mteqa::world::HouseLayout> {
    worlds.get(&r.house_id).with_context(|| format!("no world for house {}", r.house_id))
}

fn gen_world(seed: u64, count: u64, start: u64, config: Option<PathBuf>, out: &Path) -> Result<()> {
    let mut cfg: GenConfig = match config {
        Some(p) => read_json(&p)?,
        None => GenConfig::default(),
    };
    cfg.seed = seed;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for index in start..start + count {
        let house = generate_house(&cfg, index)?;
        let path = out.join(format!("{}.json", house.id));
        fs::write(&path, serialize_world(&house)).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn gen_dataset(worlds: &Path, out: &Path, config: Option<PathBuf>, seed: Option<u64>, no_filter: bool) -> Result<()> {
    let mut cfg: DatasetConfig = match config {
        Some(p) => read_json(&p)?,
        None => DatasetConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.entropy_filter &= !no_filter;
    let worlds: Vec<_> = load_worlds(worlds)?.into_values().collect();
    if worlds.is_empty() {
        bail!("no world documents found");
    }
    let ds = build_dataset(&worlds, &cfg)?;
    emit_dataset(&ds, out)?;
    let a = ds.manifest.attrition;
    println!(
        "{} questions (train {}, val {}, test {}); instantiated {}, dropped {} infeasible, {} unbalanced, {} ties",
        a.kept,
        ds.records.train.len(),
        ds.records.val.len(),
        ds.records.test.len(),
        a.instantiated,
        a.feasibility_dropped,
        a.entropy_dropped,
        a.tie_dropped
    );
    Ok(())
}

fn train(
    dataset: &Path,
    worlds: &Path,
    stage: Stage,
    ckpt_in: Option<PathBuf>,
    ckpt_out: &Path,
    config: Option<PathBuf>,
) -> Result<()> {
    let cfg: TrainConfig = match config {
        Some(p) => read_json(&p)?,
        None => TrainConfig::default(),
    };
    let (ds, worlds) = load(dataset, worlds)?;
    let agent = match (&ckpt_in, stage) {
        (Some(p), _) => load_agent(p)?,
        (None, Stage::Il) => Agent::new(cfg.agent.clone()),
        (None, Stage::Rl) => bail!("--stage rl needs --ckpt-in"),
    };
    let trained = match stage {
        Stage::Il => {
            let data = prepare_all(&worlds, &ds.records.train, &agent)?;
            let (trained, report) = train_il(&agent, &data, &cfg.il)?;
            for (epoch, loss) in report.epoch_losses.iter().enumerate() {
                println!("epoch {epoch}: loss {loss:.4}");
            }
            trained
        }
        Stage::Rl => {
            let (trained, report) = finetune_rl(&agent, &worlds, &ds.records.train, &ds.records.val, &cfg.rl)?;
            for e in &report.history {
                println!(
                    "iteration {}: val d_delta {:.3}, h_T {:.3}, return {:.3}",
                    e.iteration, e.d_delta, e.h_t, e.mean_return
                );
            }
            println!("selected iteration {}", report.selected);
            trained
        }
    };
    trained.save(ckpt_out).with_context(|| format!("writing {}", ckpt_out.display()))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    dataset: &Path,
    worlds: &Path,
    ckpt: Option<PathBuf>,
    split: Split,
    budget: usize,
    report: Format,
    traces_out: Option<PathBuf>,
) -> Result<()> {
    let (ds, worlds) = load(dataset, worlds)?;
    let agent = ckpt.as_deref().map(load_agent).transpose()?;
    let records = split_of(&ds, split);
    let mut traces: Vec<EpisodeTrace> = Vec::with_capacity(records.len());
    for r in records {
        let driver = match &agent {
            Some(a) => Driver::Agent { agent: a, sampler: None, rollout: None },
            None => Driver::Oracle,
        };
        traces.push(run_episode(world_of(&worlds, r)?, r, driver, budget).with_context(|| format!("question {}", r.id))?);
    }
    let m = compute_metrics(&traces, records)?;
    let format = match report {
        Format::Json => ReportFormat::Json,
        Format::Text => ReportFormat::Text,
    };
    println!("{}", emit_report(&m, format));
    if let Some(p) = traces_out {
        write_jsonl(&p, &traces)?;
    }
    Ok(())
}

fn replay(dataset: &Path, worlds: &Path, question: &str, ckpt: Option<PathBuf>, budget: usize, out: &Path) -> Result<()> {
    let (ds, worlds) = load(dataset, worlds)?;
    let r = ds.all().find(|r| r.id == question).with_context(|| format!("unknown question {question}"))?;
    let world = world_of(&worlds, r)?;
    let agent = ckpt.as_deref().map(load_agent).transpose()?;
    let driver = match &agent {
        Some(a) => Driver::Agent { agent: a, sampler: None, rollout: None },
        None => Driver::Oracle,
    };
    let trace = run_episode(world, r, driver, budget)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let poses = std::iter::once(r.spawn.pose).chain(trace.steps.iter().map(|s| s.pose));
    let mut frames = 0;
    for (i, pose) in poses.enumerate() {
        let path = out.join(format!("frame_{i:04}.ppm"));
        fs::write(&path, render(world, &pose).to_ppm()).with_context(|| format!("writing {}", path.display()))?;
        frames += 1;
    }
    let path = out.join("trace.json");
    fs::write(&path, serde_json::to_string_pretty(&trace)? + "\n")?;
    println!("{frames} frames; answer {:?}, correct {:?}", trace.answer, trace.correct);
    Ok(())
}

fn serve_cmd(
    dataset: &Path,
    worlds: &Path,
    split: Split,
    budget: usize,
    port: Option<u16>,
    transcript: Option<PathBuf>,
) -> Result<()> {
    let (ds, worlds) = load(dataset, worlds)?;
    let mut server = EnvServer::new(&worlds, split_of(&ds, split), budget);
    let mut log = match &transcript {
        Some(p) => Some(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => None,
    };
    let log_ref = log.as_mut().map(|f| f as &mut dyn Write);
    match port {
        None => serve(&mut server, io::stdin().lock(), io::stdout().lock(), log_ref)?,
        Some(port) => {
            let listener = TcpListener::bind(("127.0.0.1", port))?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (stream, _) = listener.accept()?;
            serve(&mut server, BufReader::new(stream.try_clone()?), stream, log_ref)?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenWorld { seed, count, start, config, out } => gen_world(seed, count, start, config, &out),
        Command::GenDataset { worlds, out, config, seed, no_entropy_filter } => {
            gen_dataset(&worlds, &out, config, seed, no_entropy_filter)
        }
        Command::Train { dataset, worlds, stage, ckpt_in, ckpt_out, config } => {
            train(&dataset, &worlds, stage, ckpt_in, &ckpt_out, config)
        }
        Command::Eval { dataset, worlds, ckpt, oracle: _, split, budget, report, traces } => {
            eval(&dataset, &worlds, ckpt, split, budget, report, traces)
        }
        Command::Replay { dataset, worlds, question, ckpt, budget, out } => {
            replay(&dataset, &worlds, &question, ckpt, budget, &out)
        }
        Command::Serve { dataset, worlds, split, budget, port, transcript } => {
            serve_cmd(&dataset, &worlds, split, budget, port, transcript)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
