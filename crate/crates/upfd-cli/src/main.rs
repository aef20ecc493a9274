//! `upfd` — command-line pipeline for propagation-graph fake news
//! detection: build propagation trees from engagement logs, generate
//! synthetic corpora, train/ablate the classifier, and render reports.
//!
//! Diagnostics go to stderr, data to files or stdout; exit code is 0
//! exactly when no error occurred. Identical inputs and seeds produce
//! identical output bytes.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use upfd_core::cascade::{build_propagation_graph, validate_tree, EngagementRecord, NewsSource};
use upfd_core::dataio::{
    corpus_stats, generate_synthetic, load_dataset, save_dataset, Corpus, SyntheticSpec,
};
use upfd_core::features::FeatureKind;
use upfd_core::model::EncoderKind;
use upfd_core::train::{
    ablation_matrix, render_report_table, run_protocol, AblationSpec, RunReport, TrainSpec,
};

#[derive(Parser)]
#[command(name = "upfd", version, about = "Propagation-graph fake news detection pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a validated graph container from an engagement log (NDJSON).
    BuildGraph(BuildGraphArgs),
    /// Generate a synthetic planted-signal corpus.
    GenSynthetic(GenSyntheticArgs),
    /// Train the classifier over the seed protocol and write a report.
    Train(TrainArgs),
    /// Run the four framework variants plus the encoder/feature grid.
    Ablate(AblateArgs),
    /// Render stored report JSON as an aligned text table.
    Report(ReportArgs),
    /// Print corpus statistics for a container.
    Stats(StatsArgs),
    /// Convert a benchmark export (A.txt, graph_indicator.txt,
    /// graph_labels.txt, optional feature tables) into a container.
    ImportExport(ImportExportArgs),
}

#[derive(Args)]
struct ImportExportArgs {
    /// Directory holding the export files.
    input: PathBuf,
    /// Output container directory.
    #[arg(long)]
    out: PathBuf,
    /// Corpus name recorded in the manifest.
    #[arg(long, default_value = "imported")]
    name: String,
}

#[derive(Args)]
struct BuildGraphArgs {
    /// Engagement log: one JSON object per line. A line with a
    /// `news_id` field opens a new cascade; subsequent `user_id` lines
    /// are its retweets.
    input: PathBuf,
    /// Output container directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct GenSyntheticArgs {
    /// Output container directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    num_graphs: usize,
    #[arg(long, default_value_t = 0.5)]
    fake_fraction: f64,
    #[arg(long, default_value_t = 30.0)]
    node_count_mean: f64,
    #[arg(long, default_value_t = 0.3)]
    node_count_dispersion: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    delta_feat: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_struct: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncoderArg {
    Sage,
    Gcn,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Sage => EncoderKind::Sage,
            EncoderArg::Gcn => EncoderKind::Gcn,
        }
    }
}

#[derive(Args)]
struct ProtocolArgs {
    /// Path to the container's manifest.json.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for report files.
    #[arg(long)]
    out: PathBuf,
    /// Seeds of the protocol (one training run each).
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4])]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.001)]
    weight_decay: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    /// Worker threads for per-graph passes (1 keeps everything serial).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Use plain SGD instead of Adam.
    #[arg(long)]
    sgd: bool,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    quiet: bool,
}

impl ProtocolArgs {
    fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            max_epochs: self.epochs,
            patience: self.patience,
            seeds: self.seeds.clone(),
            use_sgd: self.sgd,
            jobs: self.jobs,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
    #[arg(long, value_enum, default_value_t = EncoderArg::Sage)]
    encoder: EncoderArg,
    /// Node feature table to train on.
    #[arg(long, default_value = "wordvec")]
    features: String,
    /// Variant: full, -end, -exo, or -end-exo.
    #[arg(long, default_value = "full", allow_hyphen_values = true)]
    ablation: String,
    /// Concatenate the news embedding to the graph embedding.
    #[arg(long)]
    fuse_news: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON files to render.
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Path to the container's manifest.json.
    #[arg(long)]
    manifest: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildGraph(a) => cmd_build_graph(a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(a),
        Command::Train(a) => cmd_train(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
        Command::Stats(a) => cmd_stats(a),
        Command::ImportExport(a) => cmd_import_export(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

/// Header line of a cascade in the engagement log.
#[derive(Deserialize)]
struct NewsLine {
    news_id: String,
    source_id: String,
    source_followers: u64,
    publish_time: i64,
    #[serde(default)]
    label: u8,
}

/// Retweet line of a cascade in the engagement log.
#[derive(Deserialize)]
struct RecordLine {
    user_id: String,
    retweet_time: i64,
    follower_count: u64,
    #[serde(default)]
    followee_ids: std::collections::HashSet<String>,
}

fn cmd_build_graph(args: BuildGraphArgs) -> Result<()> {
    let file = std::fs::File::open(&args.input)
        .with_context(|| format!("opening {}", args.input.display()))?;

    let mut graphs = Vec::new();
    let mut current: Option<(NewsSource, u8, Vec<EngagementRecord>, usize)> = None;
    let flush = |cur: Option<(NewsSource, u8, Vec<EngagementRecord>, usize)>,
                     graphs: &mut Vec<upfd_core::cascade::PropagationGraph>|
     -> Result<()> {
        if let Some((source, label, records, lineno)) = cur {
            let g = build_propagation_graph(&source, &records, label)
                .with_context(|| format!("cascade starting at line {lineno}"))?;
            graphs.push(g);
        }
        Ok(())
    };

    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .with_context(|| format!("{}:{lineno}: invalid JSON", args.input.display()))?;
        if value.get("news_id").is_some() {
            let news: NewsLine = serde_json::from_value(value)
                .with_context(|| format!("{}:{lineno}: bad news line", args.input.display()))?;
            flush(current.take(), &mut graphs)?;
            current = Some((
                NewsSource {
                    news_id: news.news_id,
                    source_account_id: news.source_id,
                    source_follower_count: news.source_followers,
                    publish_time: news.publish_time,
                },
                news.label,
                Vec::new(),
                lineno,
            ));
        } else {
            let rec: RecordLine = serde_json::from_value(value)
                .with_context(|| format!("{}:{lineno}: bad record line", args.input.display()))?;
            match current.as_mut() {
                Some((_, _, records, _)) => records.push(EngagementRecord {
                    user_id: rec.user_id,
                    retweet_time: rec.retweet_time,
                    follower_count: rec.follower_count,
                    followee_ids: rec.followee_ids,
                }),
                None => bail!(
                    "{}:{lineno}: record line before any news line",
                    args.input.display()
                ),
            }
        }
    }
    flush(current.take(), &mut graphs)?;
    if graphs.is_empty() {
        bail!("{}: no cascades found", args.input.display());
    }

    if !args.quiet {
        for g in &graphs {
            let r = validate_tree(g);
            eprintln!(
                "graph={} nodes={} edges={} depth={} max_breadth={}",
                g.graph_id,
                r.node_count,
                r.edge_count,
                r.depth,
                r.max_breadth
            );
        }
    }

    let name = args
        .out
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".into());
    let offsets = {
        let mut o = vec![0usize];
        for g in &graphs {
            o.push(o.last().unwrap() + g.node_count());
        }
        o
    };
    let corpus = Corpus {
        name,
        graphs,
        offsets,
        features: Default::default(),
    };
    let manifest = save_dataset(&corpus, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_gen_synthetic(args: GenSyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_graphs: args.num_graphs,
        fake_fraction: args.fake_fraction,
        node_count_mean: args.node_count_mean,
        node_count_dispersion: args.node_count_dispersion,
        feature_dim: args.feature_dim,
        delta_feat: args.delta_feat,
        delta_struct: args.delta_struct,
        seed: args.seed,
    };
    let corpus = generate_synthetic(&spec)?;
    let manifest = save_dataset(&corpus, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn progress(quiet: bool) -> impl FnMut(u64, &upfd_core::train::EpochLog) {
    move |seed, log| {
        if !quiet {
            eprintln!(
                "seed={seed} epoch={} train_loss={:.6} val_acc={:.4}",
                log.epoch, log.train_loss, log.val_acc
            );
        }
    }
}

fn write_reports(out: &Path, stem: &str, reports: &[RunReport]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let json_path = out.join(format!("{stem}.json"));
    let mut f = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, reports)?;
    f.write_all(b"\n")?;
    let table = render_report_table(reports);
    std::fs::write(out.join(format!("{stem}.txt")), &table)?;
    print!("{table}");
    eprintln!("report written to {}", json_path.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let features = FeatureKind::parse(&args.features)
        .with_context(|| format!("unknown feature kind '{}'", args.features))?;
    let mut ablation = AblationSpec::parse(&args.ablation)
        .with_context(|| format!("unknown ablation '{}'", args.ablation))?;
    ablation.fuse_news = args.fuse_news;
    let corpus = load_dataset(&args.protocol.manifest)?;
    let quiet = args.protocol.quiet;
    let report = run_protocol(
        &corpus,
        args.encoder.into(),
        features,
        &ablation,
        &args.protocol.train_spec(),
        None,
        &format!("{}:{}", corpus.name, ablation.name()),
        progress(quiet),
    )?;
    write_reports(&args.protocol.out, "train_report", &[report])
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let corpus = load_dataset(&args.protocol.manifest)?;
    let quiet = args.protocol.quiet;
    let reports = ablation_matrix(&corpus, &args.protocol.train_spec(), {
        let mut p = progress(quiet);
        move |name: &str, seed, log| {
            if !quiet {
                eprint!("run={name} ");
            }
            p(seed, log)
        }
    })?;
    write_reports(&args.protocol.out, "ablation_report", &reports)
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    if args.files.is_empty() {
        bail!("no report files given");
    }
    let mut reports = Vec::new();
    for path in &args.files {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        // Accept either a single report object or an array of them.
        match serde_json::from_str::<Vec<RunReport>>(&text) {
            Ok(mut v) => reports.append(&mut v),
            Err(_) => reports.push(
                serde_json::from_str::<RunReport>(&text)
                    .with_context(|| format!("parsing {}", path.display()))?,
            ),
        }
    }
    print!("{}", render_report_table(&reports));
    Ok(())
}

fn cmd_import_export(args: ImportExportArgs) -> Result<()> {
    let corpus = upfd_core::dataio::import_benchmark_export(&args.input, &args.name)?;
    let manifest = save_dataset(&corpus, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let corpus = load_dataset(&args.manifest)?;
    let stats = corpus_stats(&corpus);
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
