use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dialeval::attack::{build_index_with, RealizeConfig, ResponseDatabase, RpForestIndex};
use dialeval::embed::{encode, load_embedding_table, EmbeddingTable, Pooling};
use dialeval::geometry::{spread_report_with, EmbeddingSet};
use dialeval::harness::{
    emit_report, run_attack_campaign, run_battery, run_sanity_probes, BatteryConfig, CampaignConfig, Encoder, Report,
    ReportFormat, ReportMetadata, VariantBase,
};
use dialeval::perturb::{JumbleScope, Lexicon, TransformKind};
use dialeval::scorer::{
    initial_params, load_params, save_params, score, stable_step_size, train, ScorerParams, TrainConfig, TrainSample,
};
use dialeval::text::{load_annotations, load_corpus, tokenize, CorpusFormat, DialogueTriple};
use dialeval::{Error, Execution};

#[derive(Parser)]
#[command(
    name = "dialeval",
    version,
    about = "Probe and attack embedding-based dialogue response scorers"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Pooling rule for sentence embeddings.
    #[arg(long, global = true, value_enum, default_value_t = EncoderArg::Mean)]
    encoder: EncoderArg,
    /// Scorer parameter file.
    #[arg(long, global = true)]
    scorer_file: Option<PathBuf>,
    /// Word-vector table (one `token v1 … vn` line per word).
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Dialogue corpus in JSON lines.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Token annotations aligned with the corpus reference responses.
    #[arg(long, global = true)]
    annotations: Option<PathBuf>,
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Mean,
    Sum,
    Extrema,
}

impl From<EncoderArg> for Pooling {
    fn from(a: EncoderArg) -> Self {
        match a {
            EncoderArg::Mean => Pooling::Mean,
            EncoderArg::Sum => Pooling::Sum,
            EncoderArg::Extrema => Pooling::Extrema,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Tsv,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Tsv => ReportFormat::Tsv,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaseArg {
    Reference,
    Candidate,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    All,
    Words,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Database {
    /// Response records (`{"id", "text"}` JSON lines).
    #[arg(long)]
    db_records: PathBuf,
    /// Response embeddings (EMB1).
    #[arg(long)]
    db_embeddings: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Encode one response per line into a response database.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_records: PathBuf,
        #[arg(long)]
        out_embeddings: PathBuf,
        /// Print conicity and pairwise-cosine statistics as JSON.
        #[arg(long)]
        report_spread: bool,
    },
    /// Fit M and N by gradient descent on corpus human scores.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        gamma: f64,
        /// Defaults to a step that provably never increases the loss.
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long, default_value_t = 500)]
        epochs: usize,
    },
    /// Score each corpus candidate (the reference when there is none).
    Score,
    /// Run the perturbation battery on reference responses.
    Battery {
        /// Comma-separated transform names.
        #[arg(long, value_delimiter = ',', required = true)]
        transforms: Vec<String>,
        /// Synonym lexicon (`{"word", "replacement"}` JSON lines).
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BaseArg::Reference)]
        base: BaseArg,
        #[arg(long, value_enum, default_value_t = ScopeArg::All)]
        jumble_scope: ScopeArg,
        #[arg(long, default_value_t = 999)]
        iterations: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Score the sanity probes.
    Probes {
        /// One machine response per line, aligned with the corpus.
        #[arg(long)]
        machine_responses: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Build a random-projection forest over a response database.
    IndexBuild {
        #[command(flatten)]
        db: Database,
        #[arg(long, default_value_t = 20)]
        trees: usize,
        #[arg(long, default_value_t = 16)]
        leaf_capacity: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attack every corpus record toward a target score band.
    Attack {
        #[command(flatten)]
        db: Database,
        #[arg(long)]
        index: PathBuf,
        #[arg(long, default_value_t = 4.6)]
        target_lo: f64,
        #[arg(long, default_value_t = 4.9)]
        target_hi: f64,
        #[arg(long, default_value_t = 400)]
        k: usize,
        #[arg(long, default_value_t = 4000)]
        search_budget: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Re-render a JSON report in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

trait Lib<T> {
    fn lib(self) -> Result<T, Error>;
}

impl<T, E: Into<Error>> Lib<T> for Result<T, E> {
    fn lib(self) -> Result<T, Error> {
        self.map_err(Into::into)
    }
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> anyhow::Result<&'a Path> {
    match value {
        Some(p) => Ok(p),
        None => Err(Error::Input(format!("{flag} is required for this command")).into()),
    }
}

impl Global {
    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    fn table(&self) -> anyhow::Result<EmbeddingTable> {
        let path = required(&self.embeddings, "--embeddings")?;
        Ok(load_embedding_table(path).lib()?)
    }

    fn corpus(&self) -> anyhow::Result<Vec<DialogueTriple>> {
        let path = required(&self.corpus, "--corpus")?;
        Ok(load_corpus(path, CorpusFormat::JsonLines).lib()?)
    }

    fn scorer(&self) -> anyhow::Result<ScorerParams> {
        let path = required(&self.scorer_file, "--scorer-file")?;
        Ok(load_params(path).lib()?)
    }

    fn metadata(&self) -> ReportMetadata {
        ReportMetadata {
            corpus: self.corpus.as_ref().map(|p| p.display().to_string()),
            scorer_file: self.scorer_file.as_ref().map(|p| p.display().to_string()),
            encoder: Pooling::from(self.encoder).to_string(),
            seed: self.seed,
            records: 0,
            timestamp: None,
        }
    }
}

fn write_output(output: &Output, report: &Report) -> anyhow::Result<()> {
    let bytes = emit_report(report, output.format.into());
    match &output.out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    let pooling = Pooling::from(g.encoder);
    match &cli.command {
        Command::Encode {
            input,
            out_records,
            out_embeddings,
            report_spread,
        } => {
            let table = g.table()?;
            let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
            let responses: Vec<_> = text.lines().filter(|l| !l.trim().is_empty()).map(tokenize).collect();
            let embeddings: Vec<_> = responses.iter().map(|u| encode(u, &table, pooling)).collect();
            let empty = embeddings.iter().filter(|e| e.is_empty()).count();
            if empty > 0 {
                log::warn!("{empty} responses have no known tokens and encode to the zero vector");
            }
            if *report_spread {
                let set = EmbeddingSet::from_embeddings(&embeddings).lib()?;
                let spread = spread_report_with(&set, g.seed, g.exec()).lib()?;
                println!("{}", serde_json::to_string_pretty(&spread)?);
            }
            let db = ResponseDatabase::new(responses, &embeddings).lib()?;
            db.save(out_records, out_embeddings).lib()?;
            log::info!("encoded {} responses of dimension {}", db.len(), db.dim());
        }
        Command::Train {
            out,
            gamma,
            step_size,
            epochs,
        } => {
            let table = g.table()?;
            let corpus = g.corpus()?;
            let samples = corpus
                .iter()
                .map(|t| {
                    let (Some(candidate), Some(human)) = (&t.candidate, t.human_score) else {
                        bail!(Error::Input(format!(
                            "corpus line {} needs a candidate and a human_score for training",
                            t.line.unwrap_or(0)
                        )));
                    };
                    Ok(TrainSample {
                        context: dialeval::embed::encode_context(&t.context, &table, pooling).into_vec(),
                        reference: encode(&t.reference, &table, pooling).into_vec(),
                        candidate: encode(candidate, &table, pooling).into_vec(),
                        human,
                    })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let init = initial_params(&samples).lib()?;
            let step = match step_size {
                Some(s) => *s,
                None => stable_step_size(&samples, init.beta(), *gamma).lib()?,
            };
            let cfg = TrainConfig {
                gamma: *gamma,
                step_size: step,
                epochs: *epochs,
                seed: g.seed,
            };
            let outcome = train(&samples, &cfg, init).lib()?;
            log::info!(
                "loss {} -> {} after {} epochs (step {step})",
                outcome.initial_loss,
                outcome.losses.last().copied().unwrap_or(outcome.initial_loss),
                outcome.losses.len()
            );
            save_params(&outcome.params, out).lib()?;
        }
        Command::Score => {
            let table = g.table()?;
            let params = g.scorer()?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "record\tscore")?;
            for (i, t) in g.corpus()?.iter().enumerate() {
                let c = dialeval::embed::encode_context(&t.context, &table, pooling);
                let r = encode(&t.reference, &table, pooling);
                let x = encode(t.candidate.as_ref().unwrap_or(&t.reference), &table, pooling);
                let s = score(c.as_slice(), r.as_slice(), x.as_slice(), &params).lib()?;
                writeln!(stdout, "{i}\t{s}")?;
            }
        }
        Command::Battery {
            transforms,
            lexicon,
            base,
            jumble_scope,
            iterations,
            output,
        } => {
            let kinds = transforms
                .iter()
                .map(|t| t.trim().parse::<TransformKind>())
                .collect::<Result<Vec<_>, _>>()
                .lib()?;
            let table = g.table()?;
            let params = g.scorer()?;
            let corpus = g.corpus()?;
            let annotations = g.annotations.as_deref().map(load_annotations).transpose().lib()?;
            let lexicon = lexicon.as_deref().map(Lexicon::load).transpose().lib()?;
            let mut cfg = BatteryConfig::new(kinds, g.seed);
            cfg.lexicon = lexicon.as_ref();
            cfg.base = match base {
                BaseArg::Reference => VariantBase::Reference,
                BaseArg::Candidate => VariantBase::Candidate,
            };
            cfg.jumble_scope = match jumble_scope {
                ScopeArg::All => JumbleScope::AllTokens,
                ScopeArg::Words => JumbleScope::WordsOnly,
            };
            cfg.permutation_iterations = *iterations;
            cfg.metadata = g.metadata();
            cfg.exec = g.exec();
            let encoder = Encoder { table: &table, pooling };
            let report = run_battery(&corpus, annotations.as_deref(), &params, encoder, &cfg)?;
            write_output(output, &Report::Battery(report))?;
        }
        Command::Probes {
            machine_responses,
            output,
        } => {
            let table = g.table()?;
            let params = g.scorer()?;
            let corpus = g.corpus()?;
            let machine = match machine_responses {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    Some(text.lines().map(tokenize).collect::<Vec<_>>())
                }
                None => None,
            };
            let encoder = Encoder { table: &table, pooling };
            let report = run_sanity_probes(&corpus, machine.as_deref(), &params, encoder, g.metadata(), g.exec())?;
            write_output(output, &Report::Probes(report))?;
        }
        Command::IndexBuild {
            db,
            trees,
            leaf_capacity,
            out,
        } => {
            let db = ResponseDatabase::load(&db.db_records, &db.db_embeddings).lib()?;
            let index = build_index_with(&db, *trees, *leaf_capacity, g.seed, g.exec()).lib()?;
            index.save(out).lib()?;
            log::info!(
                "indexed {} items in {} trees ({} nodes)",
                db.len(),
                trees,
                index.node_count()
            );
        }
        Command::Attack {
            db,
            index,
            target_lo,
            target_hi,
            k,
            search_budget,
            output,
        } => {
            let table = g.table()?;
            let params = g.scorer()?;
            let corpus = g.corpus()?;
            let db = ResponseDatabase::load(&db.db_records, &db.db_embeddings).lib()?;
            let index = RpForestIndex::load(index).lib()?;
            let config = CampaignConfig {
                target_lo: *target_lo,
                target_hi: *target_hi,
                realize: RealizeConfig {
                    k: *k,
                    search_budget: *search_budget,
                    start: None,
                },
                metadata: g.metadata(),
                exec: g.exec(),
            };
            let encoder = Encoder { table: &table, pooling };
            let report = run_attack_campaign(&corpus, &db, &index, &params, encoder, &config)?;
            write_output(output, &Report::Attack(report))?;
        }
        Command::Report { input, output } => {
            let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let report: Report = serde_json::from_slice(&bytes).lib()?;
            write_output(output, &report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
