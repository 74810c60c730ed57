use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use rlink_core::blocking::{percent_one_decimal, scurve_probability, BandConfig};
use rlink_core::config::LinkerConfig;
use rlink_core::evalbench::{self, EvalOptions, EvalReport};
use rlink_core::pipeline::{self, LinkOptions, Linker, PreprocessOptions, Resources};
use rlink_core::scoring::Strategy;
use rlink_core::shortname::{self, read_corpus, split_corpus, FrequencyTable, ShortNameModel, TrainParams};
use rlink_core::store::{Address, QueryRecord};
use rlink_core::synth::{generate, SynthConfig};
use serde_json::json;

use crate::bench::{self, BenchError, BenchReport, BenchSettings};
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "rlink", version, about = "Company record linkage: preprocessing, linking, evaluation and an HTTP service")]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, short, global = true, env = "RLINK_CONFIG")]
    pub config: Option<PathBuf>,
    /// More log output; repeat for debug.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a CSV source and write the entity and blocking databases.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// Do not run the short-name extractor over the records.
        #[arg(long)]
        skip_short_names: bool,
    },
    /// Link queries given as flags or as a JSON-lines file; prints JSON lines.
    Link(LinkArgs),
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Train, apply or evaluate the short-name extractor.
    #[command(subcommand)]
    Shortname(ShortnameCommand),
    /// Print blocking retrieval probabilities (percent, truncated to one decimal).
    Scurve {
        #[arg(long, value_delimiter = ',', default_value = "4/10,5/18,6/30")]
        configs: Vec<BandConfig>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8")]
        sims: Vec<f64>,
        /// Also estimate each cell by simulation with this many set pairs.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Evaluate strategies against a ground-truth file.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "rls,jaccard")]
        strategies: Vec<Strategy>,
        /// Drop addresses and industry codes from the queries.
        #[arg(long)]
        name_only: bool,
        /// Band configurations for a blocking tradeoff table.
        #[arg(long, value_delimiter = ',')]
        tradeoff: Vec<BandConfig>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Drive a running service with concurrent clients.
    Bench {
        #[arg(long, default_value = "http://127.0.0.1:8080")]
        url: String,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        clients: Vec<usize>,
        /// Requests per client.
        #[arg(long, default_value_t = 100)]
        requests: usize,
        /// Queries per request.
        #[arg(long, default_value_t = 80)]
        batch: usize,
        /// Ground-truth TSV or JSON-lines file supplying the queries.
        #[arg(long)]
        queries: PathBuf,
        /// Write the CSV table here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic benchmark files.
    GenData {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct LinkArgs {
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long = "alt")]
    pub names_alt: Vec<String>,
    #[arg(long)]
    pub street: Option<String>,
    #[arg(long)]
    pub city: Option<String>,
    #[arg(long)]
    pub postal: Option<String>,
    #[arg(long)]
    pub country: Option<String>,
    #[arg(long)]
    pub sic: Option<String>,
    /// JSON-lines query file, `-` for stdin.
    #[arg(long, conflicts_with = "name")]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
}

#[derive(Debug, Subcommand)]
pub enum ShortnameCommand {
    /// Train a model and write it to `--out`.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        freq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = TrainParams::default().epochs)]
        epochs: u32,
        #[arg(long, default_value_t = TrainParams::default().learning_rate)]
        learning_rate: f64,
        #[arg(long, default_value_t = TrainParams::default().l2)]
        l2: f64,
        #[arg(long, default_value_t = TrainParams::default().seed)]
        seed: u64,
        /// Train only on this shuffled fraction of the corpus.
        #[arg(long)]
        split: Option<f64>,
    },
    /// Print the short name of each name (arguments, or stdin lines).
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        freq: PathBuf,
        names: Vec<String>,
    },
    /// Tagging precision, recall and F1 on a labeled corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        freq: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Evaluate only the held-out part of a split made with the same seed.
        #[arg(long)]
        split: Option<f64>,
        #[arg(long, default_value_t = TrainParams::default().seed)]
        seed: u64,
    },
}

/// Failure categories that map to exit codes.
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<rlink_core::Error> for Failure {
    fn from(e: rlink_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        Failure::Data(e.into())
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(core) = e.downcast_ref::<rlink_core::Error>() {
        core.kind()
    } else if let Some(b) = e.downcast_ref::<BenchError>() {
        b.kind()
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "Io"
    } else {
        "Error"
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            Cli::command().error(clap::error::ErrorKind::MissingRequiredArgument, msg).exit()
        }
        Err(Failure::Data(e)) => {
            let line = json!({ "error": { "kind": error_kind(&e), "message": format!("{e:#}") } });
            eprintln!("{line}");
            1
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<LinkerConfig, Failure> {
    let path = path.ok_or_else(|| Failure::Usage("this command needs --config or RLINK_CONFIG".into()))?;
    Ok(LinkerConfig::load(path)?)
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Preprocess { input, skip_short_names } => {
            let cfg = load_config(config)?;
            let stats = pipeline::preprocess(&input, &cfg, PreprocessOptions { skip_short_names })?;
            println!("{}", serde_json::to_string(&stats).expect("stats serialize"));
        }
        Command::Link(args) => link(load_config(config)?, args)?,
        Command::Serve { addr } => {
            let cfg = load_config(config)?;
            runtime()?.block_on(server::serve(cfg, addr, async {
                let _ = tokio::signal::ctrl_c().await;
            }))?;
        }
        Command::Shortname(cmd) => shortname_cmd(cmd)?,
        Command::Scurve { configs, sims, trials, seed } => scurve(&configs, &sims, trials, seed)?,
        Command::Eval { truth, strategies, name_only, tradeoff, format } => {
            eval(load_config(config)?, &truth, &strategies, name_only, &tradeoff, format)?
        }
        Command::Bench { url, clients, requests, batch, queries, out } => {
            bench_cmd(url, &clients, requests, batch, &queries, out.as_deref())?
        }
        Command::GenData { out, seed } => {
            let data = generate(&SynthConfig { seed, ..SynthConfig::default() })?;
            data.write_all(&out)?;
            println!(
                "{}",
                json!({
                    "companies": data.companies.len(),
                    "cities": data.cities.len(),
                    "truthEntries": data.truth.len(),
                    "shortNamePairs": data.shortname_corpus.len(),
                    "out": out,
                })
            );
        }
    }
    Ok(())
}

fn open_lines(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(std::io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

fn read_query_lines(path: &Path) -> anyhow::Result<Vec<QueryRecord>> {
    let mut out = Vec::new();
    for (n, line) in open_lines(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let q = serde_json::from_str(&line)
            .map_err(|e| rlink_core::Error::MalformedRow { row: n as u64 + 1, reason: e.to_string() })?;
        out.push(q);
    }
    Ok(out)
}

fn link(cfg: LinkerConfig, args: LinkArgs) -> Result<(), Failure> {
    let queries = match (&args.queries, &args.name) {
        (Some(path), _) => read_query_lines(path)?,
        (None, Some(name)) => {
            let address = Address {
                street: args.street.clone(),
                city: args.city.clone(),
                postal: args.postal.clone(),
                country: args.country.clone(),
            };
            let mut q = QueryRecord::named(name.clone());
            q.names_alt = args.names_alt.clone();
            if !address.is_empty() {
                q.addresses.push(address);
            }
            q.sics.extend(args.sic.clone());
            vec![q]
        }
        (None, None) => return Err(Failure::Usage("link needs --name or --queries".into())),
    };
    let linker = Linker::load(cfg)?;
    let options = LinkOptions {
        top_n: args.top_n,
        threshold: args.threshold,
        strategy: args.strategy,
    };
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let mut first_error = None;
    for (q, outcome) in queries.iter().zip(linker.link_batch(&queries, &options)) {
        let line = match outcome {
            Ok(o) => json!({ "query": q.name, "results": o.results, "comparisons": o.comparisons }),
            Err(e) => {
                let line = json!({ "query": q.name, "error": { "kind": e.kind(), "message": e.to_string() } });
                first_error.get_or_insert(e);
                line
            }
        };
        writeln!(out, "{line}").context("writing results")?;
    }
    out.flush().context("writing results")?;
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn load_model(model: &Path, freq: &Path) -> rlink_core::Result<(ShortNameModel, FrequencyTable)> {
    Ok((ShortNameModel::load(model)?, FrequencyTable::load(freq)?))
}

fn read_corpus_file(path: &Path) -> anyhow::Result<Vec<shortname::LabeledName>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_corpus(BufReader::new(f))?)
}

fn shortname_cmd(cmd: ShortnameCommand) -> Result<(), Failure> {
    match cmd {
        ShortnameCommand::Train { corpus, freq, out, epochs, learning_rate, l2, seed, split } => {
            let mut examples = read_corpus_file(&corpus)?;
            if let Some(fraction) = split {
                examples = split_corpus(&examples, fraction, seed)?.0;
            }
            let freq = FrequencyTable::load(&freq)?;
            let params = TrainParams { epochs, learning_rate, l2, seed };
            let t = Instant::now();
            let model = ShortNameModel::train(&examples, &freq, params)?;
            model.save(&out)?;
            println!(
                "{}",
                json!({
                    "examples": examples.len(),
                    "features": model.feature_count(),
                    "epochLosses": model.epoch_losses,
                    "trainMs": t.elapsed().as_secs_f64() * 1e3,
                    "out": out,
                })
            );
        }
        ShortnameCommand::Predict { model, freq, names } => {
            let (model, freq) = load_model(&model, &freq)?;
            let names = if names.is_empty() {
                std::io::stdin().lock().lines().collect::<Result<Vec<_>, _>>().context("reading stdin")?
            } else {
                names
            };
            for name in names.iter().filter(|n| !n.trim().is_empty()) {
                let short = shortname::predict(name, &model, &freq);
                println!("{}", json!({ "name": name, "shortName": short }));
            }
        }
        ShortnameCommand::Eval { model, freq, corpus, split, seed } => {
            let (model, freq) = load_model(&model, &freq)?;
            let mut examples = read_corpus_file(&corpus)?;
            if let Some(fraction) = split {
                examples = split_corpus(&examples, fraction, seed)?.1;
            }
            let metrics = shortname::evaluate(&model, &examples, &freq)?;
            println!("{}", serde_json::to_string(&metrics).expect("metrics serialize"));
        }
    }
    Ok(())
}

fn scurve(configs: &[BandConfig], sims: &[f64], trials: Option<usize>, seed: u64) -> Result<(), Failure> {
    let header: Vec<String> = configs.iter().map(ToString::to_string).collect();
    println!("similarity\t{}", header.join("\t"));
    for &s in sims {
        let cells = configs
            .iter()
            .map(|&c| Ok(format!("{:.1}", percent_one_decimal(scurve_probability(s, c)?))))
            .collect::<rlink_core::Result<Vec<_>>>()?;
        println!("{s}\t{}", cells.join("\t"));
    }
    if let Some(n) = trials {
        println!("\nsimulated ({n} pairs)");
        println!("similarity\t{}", header.join("\t"));
        for &s in sims {
            let cells = configs
                .iter()
                .map(|&c| Ok(format!("{:.1}", evalbench::montecarlo_scurve(c, s, n, seed)? * 100.0)))
                .collect::<rlink_core::Result<Vec<_>>>()?;
            println!("{s}\t{}", cells.join("\t"));
        }
    }
    Ok(())
}

fn eval(
    cfg: LinkerConfig,
    truth_path: &Path,
    strategies: &[Strategy],
    name_only: bool,
    tradeoff: &[BandConfig],
    format: Format,
) -> Result<(), Failure> {
    let f = File::open(truth_path).with_context(|| format!("opening {}", truth_path.display()))?;
    let truth = evalbench::read_truth(BufReader::new(f))?;
    let linker = Linker::load(cfg.clone())?;
    let mut reports: Vec<EvalReport> = strategies
        .iter()
        .map(|&s| {
            evalbench::evaluate(
                &truth,
                &linker,
                EvalOptions { strategy: Some(s), threshold: None, name_only },
            )
        })
        .collect::<rlink_core::Result<_>>()?;
    reports.push(evalbench::trivial_baseline(&truth, linker.store()));
    let rows = if tradeoff.is_empty() {
        Vec::new()
    } else {
        let store = Arc::new(linker.store().clone());
        let resources = Arc::new(Resources::load(&cfg)?);
        evalbench::blocking_tradeoff(store, tradeoff, &truth, &cfg, resources)?
    };
    match format {
        Format::Json => {
            println!("{}", json!({ "reports": reports, "tradeoff": rows }));
        }
        Format::Csv => {
            println!("{}", EvalReport::CSV_HEADER);
            for r in &reports {
                println!("{}", r.csv_row());
            }
            if !rows.is_empty() {
                println!("\nconfig,total_hashes,recall,index_bytes,blocking_keys,mean_comparisons");
                for r in &rows {
                    println!(
                        "{},{},{:.4},{},{},{:.2}",
                        r.config, r.total_hashes, r.recall, r.index_bytes, r.blocking_keys, r.mean_comparisons
                    );
                }
            }
        }
    }
    Ok(())
}

/// Queries from a ground-truth TSV (by header) or a JSON-lines file.
pub fn read_bench_queries(path: &Path) -> anyhow::Result<Vec<QueryRecord>> {
    let mut head = String::new();
    open_lines(path)?.read_line(&mut head)?;
    if head.trim_start().starts_with('{') {
        return read_query_lines(path);
    }
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(evalbench::read_truth(BufReader::new(f))?.into_iter().map(|e| e.query).collect())
}

fn bench_cmd(
    url: String,
    clients: &[usize],
    requests: usize,
    batch: usize,
    queries: &Path,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let pool = read_bench_queries(queries)?;
    if pool.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!("no queries in {}", queries.display())));
    }
    let batch: Vec<QueryRecord> = pool.iter().cycle().take(batch).cloned().collect();
    let rt = runtime()?;
    let mut lines = vec![BenchReport::CSV_HEADER.to_string()];
    println!("{}", BenchReport::CSV_HEADER);
    for &c in clients {
        let settings = BenchSettings { url: url.clone(), clients: c, requests, batch: batch.clone() };
        let report = rt.block_on(async {
            bench::wait_ready(&url, std::time::Duration::from_secs(30)).await?;
            bench::run(&settings).await
        })?;
        println!("{}", report.csv_row());
        lines.push(report.csv_row());
    }
    if let Some(path) = out {
        std::fs::write(path, lines.join("\n") + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
