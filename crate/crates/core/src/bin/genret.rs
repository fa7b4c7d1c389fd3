//! `genret` — build, query and evaluate a generative retrieval index.
//!
//! Exit codes: 0 success, 1 usage, 2 data or integrity failure. Every
//! failure prints exactly one line to stderr: `genret: error[<kind>]: <message>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use genret::corpus::{load_instructions, load_qrels, load_run, write_run};
use genret::decoder::{DecoderSettings, Strategy};
use genret::eval::{compare_decoders, comparison_jsonl, comparison_table, evaluate, rankings_from_run};
use genret::pipeline::{build_index, load_query_records, require_path, retrieve_all, Index, PipelineConfig};
use genret::{Error, ErrorKind};

const CONFIG_ENV: &str = "GENRET_CONFIG";

#[derive(Debug, Parser)]
#[command(name = "genret", version, about = "Generative retrieval with constrained docid decoding")]
struct Cli {
    /// TOML config file; flags given on the command line take precedence.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Master seed for query generation and sampling decoders.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-document and per-query parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Assign docids, generate pseudo-queries, fit the scorer and write an index.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        instructions: Option<PathBuf>,
    },
    /// Decode a ranked list of documents for every query.
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        instructions: Option<PathBuf>,
        #[command(flatten)]
        decoder: DecoderArgs,
    },
    /// Score a TREC run against qrels.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: Option<PathBuf>,
    },
    /// Run every configured decoder on the same queries and tabulate metrics.
    CompareDecoders {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        instructions: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct DecoderArgs {
    /// reverse-annealing, greedy, nucleus or beam.
    #[arg(long)]
    decoder: Option<Strategy>,
    /// Number of documents to return per query.
    #[arg(long)]
    k: Option<usize>,
    /// Temperature schedule slope.
    #[arg(long)]
    slope: Option<f64>,
    /// Temperature schedule midpoint, as a fraction of K.
    #[arg(long)]
    midpoint: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    width: Option<usize>,
}

impl DecoderArgs {
    fn apply(&self, s: &mut DecoderSettings) {
        if let Some(v) = self.decoder {
            s.strategy = v;
        }
        if let Some(v) = self.k {
            s.k = v;
        }
        if let Some(v) = self.slope {
            s.slope = v;
        }
        if let Some(v) = self.midpoint {
            s.midpoint = v;
        }
        if let Some(v) = self.t_max {
            s.t_max = v;
        }
        if let Some(v) = self.top_p {
            s.top_p = v;
        }
        if let Some(v) = self.width {
            s.width = v;
        }
    }
}

/// Failures that are the caller's fault rather than the data's.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("genret: error[usage]: {}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("genret: error[usage]: {}", one_line(&msg));
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("genret: error[{}]: {}", e.kind().as_str(), one_line(&e.to_string()));
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| match e.kind() {
            ErrorKind::Config => Failure::Usage(e.to_string()),
            _ => Failure::Data(e),
        })?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.output = Some(out.clone());
    }
    Ok(cfg)
}

fn output_dir(cfg: &PipelineConfig) -> Result<&Path, Failure> {
    let dir = cfg
        .paths
        .output
        .as_deref()
        .ok_or_else(|| Failure::Usage("no output directory (pass --out or set paths.output)".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(dir)
}

/// Like [`require_path`], but an unset path is a usage error.
fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Failure> {
    if p.is_none() {
        return Err(Failure::Usage(format!("no {what} path (pass --{what} or set paths.{what})")));
    }
    Ok(require_path(p, what)?)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| {
        Failure::Data(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads == 0 {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;

    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Index { corpus, instructions } => {
            if corpus.is_some() {
                cfg.paths.corpus = corpus.clone();
            }
            if instructions.is_some() {
                cfg.paths.instructions = instructions.clone();
            }
            required(&cfg.paths.corpus, "corpus")?;
            let out = output_dir(&cfg)?;
            let built = build_index(&cfg)?;
            built.index.save(out)?;
            info!(
                "indexed {} documents ({} pseudo-queries) into {}",
                built.index.manifest.documents,
                built.queries.len(),
                out.display()
            );
        }
        Command::Retrieve {
            index,
            queries,
            instructions,
            decoder,
        } => {
            if queries.is_some() {
                cfg.paths.queries = queries.clone();
            }
            if instructions.is_some() {
                cfg.paths.instructions = instructions.clone();
            }
            decoder.apply(&mut cfg.decoder);
            cfg.decoder.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            let queries = load_query_records(required(&cfg.paths.queries, "queries")?)?;
            let instrs = match &cfg.paths.instructions {
                Some(_) => load_instructions(require_path(&cfg.paths.instructions, "instructions")?)?,
                None => Vec::new(),
            };
            let out = output_dir(&cfg)?;
            let index = Index::load(index)?;
            let result = retrieve_all(&index, &queries, &instrs, &cfg.decoder, cfg.seed)?;
            write_run(&result.entries, &out.join("run.trec"))?;
            let mut aux = String::new();
            for row in &result.aux {
                aux.push_str(&serde_json::to_string(row).expect("serializable"));
                aux.push('\n');
            }
            write(&out.join("run.aux.jsonl"), &aux)?;
            info!("retrieved {} queries with {}", queries.len(), cfg.decoder.strategy);
        }
        Command::Eval { run, qrels } => {
            if qrels.is_some() {
                cfg.paths.qrels = qrels.clone();
            }
            let qrels = load_qrels(required(&cfg.paths.qrels, "qrels")?)?;
            let run_entries = load_run(require_path(&Some(run.clone()), "run")?)?;
            let out = output_dir(&cfg)?;
            let report = evaluate(&rankings_from_run(&run_entries)?, &qrels);
            write(&out.join("report.jsonl"), &report.to_jsonl())?;
            println!(
                "acc@1 {:.6}  ndcg@10 {:.6}  recall@100 {:.6}  queries {}  skipped {}",
                report.acc_at_1, report.ndcg_at_10, report.recall_at_100, report.query_count, report.skipped
            );
        }
        Command::CompareDecoders {
            index,
            queries,
            qrels,
            instructions,
        } => {
            if queries.is_some() {
                cfg.paths.queries = queries.clone();
            }
            if qrels.is_some() {
                cfg.paths.qrels = qrels.clone();
            }
            if instructions.is_some() {
                cfg.paths.instructions = instructions.clone();
            }
            let configs = cfg.compare_entries();
            for (name, s) in &configs {
                s.validate().map_err(|e| Failure::Usage(format!("compare entry {name:?}: {e}")))?;
            }
            let records = load_query_records(required(&cfg.paths.queries, "queries")?)?;
            let qrels = load_qrels(required(&cfg.paths.qrels, "qrels")?)?;
            let instrs = match &cfg.paths.instructions {
                Some(_) => load_instructions(require_path(&cfg.paths.instructions, "instructions")?)?,
                None => Vec::new(),
            };
            let out = output_dir(&cfg)?;
            let index = Index::load(index)?;
            let contexts = records
                .iter()
                .map(|q| {
                    let instr = match &q.instr_id {
                        Some(id) if *id != index.manifest.instruction.instr_id => Some(
                            instrs
                                .iter()
                                .find(|i| &i.instr_id == id)
                                .map(|i| i.text.as_str())
                                .ok_or_else(|| {
                                    Error::Integrity(format!("query {:?}: unknown instr_id {id:?}", q.query_id))
                                })?,
                        ),
                        _ => None,
                    };
                    Ok(index.query_context(&q.query_id, &q.text, instr))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let rows = compare_decoders(&index.scorer, &index.trie, &contexts, &qrels, &configs, cfg.seed)?;
            write(&out.join("comparison.jsonl"), &comparison_jsonl(&rows))?;
            let table = comparison_table(&rows);
            write(&out.join("comparison.txt"), &table)?;
            print!("{table}");
        }
    }
    Ok(())
}
