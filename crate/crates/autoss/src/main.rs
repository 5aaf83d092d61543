//! One binary for all three roles: the data owner builds and signs the
//! index (`build`, `embed`), the server answers queries with proofs
//! (`query`, `multi-query`, plus the scripted `attack` cheats), and the
//! client checks proofs against the owner's public key (`verify`,
//! `verify-multi`). `bench` sweeps parameters and prints cost records.
//!
//! Exit codes: 0 success / proof accepted, 1 operational error, 2 proof
//! rejected (diagnosis on stderr), 3 attack had no foothold.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use autoss::attack::{
    apply_attack, matrix_to_csv, run_detection_matrix, AttackInput, AttackKind, AttackOutcome,
    AttackSpec, MatrixConfig,
};
use autoss::bench::{bench, bench_to_csv};
use autoss::client;
use autoss::embedding::{Embedder, EmbeddingFunction};
use autoss::ingest;
use autoss::mbtree::MbTree;
use autoss::multi::{
    build_multi_vo, build_multi_vo_e, verify_multi, verify_multi_e, MultiQuery, SharedVoBundle,
};
use autoss::sign::{encode_private_key, Ed25519Signer, PublicKey, SignatureProvider as _};
use autoss::vo::{VoFile, VoMode};

#[derive(Parser)]
#[command(name = "autoss", version, about = "Authenticated string similarity search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus, build the signed index, and write the key pair.
    Build(BuildArgs),
    /// Derive the public embedding function from a corpus.
    Embed(EmbedArgs),
    /// Answer one query from an index, attaching the proof.
    Query(QueryArgs),
    /// Answer a batch of queries with one shared proof bundle.
    MultiQuery(MultiQueryArgs),
    /// Check a result file against the owner's public key.
    Verify(VerifyArgs),
    /// Check a shared proof bundle against the owner's public key.
    VerifyMulti(VerifyMultiArgs),
    /// Doctor an honest result file, or replay the whole detection matrix.
    Attack(AttackArgs),
    /// Sweep parameters and print per-query cost records as CSV.
    Bench(BenchArgs),
}

/// Which proof flavor to request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Plain proofs: pruned subtrees and disclosed candidate strings.
    Vs2,
    /// Embedding-assisted proofs: far candidates ride dissimilarity boxes.
    Evs2,
}

impl From<Mode> for VoMode {
    fn from(m: Mode) -> VoMode {
        match m {
            Mode::Vs2 => VoMode::Vs2,
            Mode::Evs2 => VoMode::Evs2,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    /// Newline-delimited UTF-8 corpus file.
    #[arg(long)]
    data: PathBuf,
    /// Maximum children per index node.
    #[arg(long)]
    fanout: u32,
    /// Output path for the signed index.
    #[arg(long)]
    out: PathBuf,
    /// Directory receiving private.key and public.key.
    #[arg(long)]
    keys: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    /// Newline-delimited UTF-8 corpus file.
    #[arg(long)]
    data: PathBuf,
    /// Number of embedding dimensions.
    #[arg(long)]
    dim: usize,
    /// Reference-string sampling seed; defaults to AUTOSS_SEED or 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the embedding file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// Signed index file.
    #[arg(long)]
    index: PathBuf,
    /// Embedding file (required for --mode evs2).
    #[arg(long)]
    embed: Option<PathBuf>,
    /// Query string.
    #[arg(long)]
    q: String,
    /// Similarity threshold (maximum edit distance).
    #[arg(long)]
    theta: u32,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Answer a ranked top-k query instead of a threshold query.
    #[arg(long)]
    topk: Option<u32>,
    /// Output path for the result/proof file.
    #[arg(long)]
    vo: PathBuf,
}

#[derive(Args)]
struct MultiQueryArgs {
    /// Signed index file.
    #[arg(long)]
    index: PathBuf,
    /// File with one query string per line.
    #[arg(long)]
    queries: PathBuf,
    /// Shared similarity threshold.
    #[arg(long)]
    theta: u32,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Embedding file (required for --mode evs2).
    #[arg(long)]
    embed: Option<PathBuf>,
    /// Output path for the proof bundle.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Result/proof file to check; mode and k are read from it.
    #[arg(long)]
    vo: PathBuf,
    /// Query string the file claims to answer.
    #[arg(long)]
    q: String,
    /// Similarity threshold the file claims to answer.
    #[arg(long)]
    theta: u32,
    /// Owner's public key file.
    #[arg(long = "pub")]
    public_key: PathBuf,
    /// Embedding file (required for embedding-assisted proofs).
    #[arg(long)]
    embed: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyMultiArgs {
    /// Proof bundle to check.
    #[arg(long)]
    bundle: PathBuf,
    /// File with one query string per line, as sent to the server.
    #[arg(long)]
    queries: PathBuf,
    /// Shared similarity threshold.
    #[arg(long)]
    theta: u32,
    /// Owner's public key file.
    #[arg(long = "pub")]
    public_key: PathBuf,
    /// Embedding file (required for embedding-assisted bundles).
    #[arg(long)]
    embed: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// What to doctor: tamper_string, add_false_hits_v1, add_false_hits_v2,
    /// drop_similar_v1, drop_similar_v2, dbh_relabel, mf_range_shift,
    /// reorder_topk, or truncate_topk.
    #[arg(long)]
    kind: Option<String>,
    /// Victim-selection seed; defaults to AUTOSS_SEED or 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Signed index file (the cheating server's copy).
    #[arg(long)]
    index: Option<PathBuf>,
    /// Embedding file (required for evs2 and for dbh_relabel).
    #[arg(long)]
    embed: Option<PathBuf>,
    /// Query string to answer dishonestly.
    #[arg(long)]
    q: Option<String>,
    /// Similarity threshold.
    #[arg(long)]
    theta: Option<u32>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Answer a ranked top-k query (required by the top-k attacks).
    #[arg(long)]
    topk: Option<u32>,
    /// Output path for the doctored result file.
    #[arg(long)]
    vo: Option<PathBuf>,
    /// Replay every attack against both modes and print the matrix CSV.
    #[arg(long)]
    matrix: bool,
    /// Trials for --matrix.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Newline-delimited UTF-8 corpus file.
    #[arg(long)]
    data: PathBuf,
    /// File with one query string per line.
    #[arg(long)]
    queries: PathBuf,
    /// Thresholds to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    thetas: Vec<u32>,
    /// Embedding dimensions to sweep (evs2 only).
    #[arg(long, value_delimiter = ',', default_value = "2,5")]
    dims: Vec<usize>,
    /// Index fanouts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    fanouts: Vec<u32>,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Embedding/key seed; defaults to AUTOSS_SEED or 0.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Embed(args) => cmd_embed(args),
        Command::Query(args) => cmd_query(args),
        Command::MultiQuery(args) => cmd_multi_query(args),
        Command::Verify(args) => cmd_verify(args),
        Command::VerifyMulti(args) => cmd_verify_multi(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

/// Explicit flag, else AUTOSS_SEED, else 0.
fn resolved_seed(explicit: Option<u64>) -> anyhow::Result<u64> {
    if let Some(seed) = explicit {
        return Ok(seed);
    }
    match std::env::var("AUTOSS_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("AUTOSS_SEED {v:?} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(e).context("reading AUTOSS_SEED"),
    }
}

fn load_index(path: &Path) -> anyhow::Result<MbTree> {
    MbTree::load_from_path(path).with_context(|| format!("loading index {}", path.display()))
}

fn load_embedding(path: &Path) -> anyhow::Result<EmbeddingFunction> {
    EmbeddingFunction::load_from_path(path)
        .with_context(|| format!("loading embedding {}", path.display()))
}

fn load_public_key(path: &Path) -> anyhow::Result<PublicKey> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    PublicKey::decode(&bytes).with_context(|| format!("decoding public key {}", path.display()))
}

/// Reads one query per line, preserving order; blank lines are dropped.
fn read_query_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading queries {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn cmd_build(args: BuildArgs) -> anyhow::Result<u8> {
    let corpus = ingest::load_corpus(&args.data)
        .with_context(|| format!("ingesting {}", args.data.display()))?;
    let n = corpus.len();
    let seed = resolved_seed(None)?;
    let signer = Ed25519Signer::generate(seed);
    let tree = MbTree::build(corpus, args.fanout, &signer).context("building index")?;
    tree.save_to_path(&args.out)
        .with_context(|| format!("writing index {}", args.out.display()))?;

    fs::create_dir_all(&args.keys)
        .with_context(|| format!("creating key directory {}", args.keys.display()))?;
    let private_path = args.keys.join("private.key");
    let public_path = args.keys.join("public.key");
    fs::write(&private_path, encode_private_key(&signer))
        .with_context(|| format!("writing {}", private_path.display()))?;
    fs::write(&public_path, signer.public_key().encode())
        .with_context(|| format!("writing {}", public_path.display()))?;

    println!(
        "indexed {n} strings in {} nodes (fanout {}), root digest {}",
        tree.node_count(),
        args.fanout,
        hex::encode(tree.root_digest())
    );
    println!(
        "keys: {} (keep private), {} (publish)",
        private_path.display(),
        public_path.display()
    );
    Ok(0)
}

fn cmd_embed(args: EmbedArgs) -> anyhow::Result<u8> {
    let corpus = ingest::load_corpus(&args.data)
        .with_context(|| format!("ingesting {}", args.data.display()))?;
    let seed = resolved_seed(args.seed)?;
    let f = EmbeddingFunction::build(&corpus, args.dim, seed).context("building embedding")?;
    f.save_to_path(&args.out)
        .with_context(|| format!("writing embedding {}", args.out.display()))?;
    println!(
        "embedded {} strings into {} dimensions (seed {seed})",
        corpus.len(),
        args.dim
    );
    Ok(0)
}

fn cmd_query(args: QueryArgs) -> anyhow::Result<u8> {
    let tree = load_index(&args.index)?;
    let f = match (&args.embed, args.mode) {
        (Some(path), _) => Some(load_embedding(path)?),
        (None, Mode::Evs2) => bail!("--mode evs2 needs --embed"),
        (None, Mode::Vs2) => None,
    };
    let embedder = f.as_ref().map(|f| f as &dyn Embedder);
    let file = client::build_vo_file(
        &tree,
        embedder,
        args.mode.into(),
        args.topk,
        &args.q,
        args.theta,
    )
    .context("answering query")?;
    file.save_to_path(&args.vo)
        .with_context(|| format!("writing result file {}", args.vo.display()))?;
    for s in &file.results {
        println!("{s}");
    }
    eprintln!(
        "{} result(s), proof {} bytes -> {}",
        file.results.len(),
        file.encode_to_vec().len(),
        args.vo.display()
    );
    Ok(0)
}

fn cmd_multi_query(args: MultiQueryArgs) -> anyhow::Result<u8> {
    let tree = load_index(&args.index)?;
    let queries = read_query_lines(&args.queries)?;
    let mq = MultiQuery::new(queries, args.theta).context("invalid query batch")?;
    let bundle = match args.mode {
        Mode::Vs2 => build_multi_vo(&tree, &mq),
        Mode::Evs2 => {
            let path = args
                .embed
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("--mode evs2 needs --embed"))?;
            let f = load_embedding(path)?;
            build_multi_vo_e(&tree, &f, &mq)
        }
    };
    bundle
        .save_to_path(&args.out)
        .with_context(|| format!("writing bundle {}", args.out.display()))?;
    for (q, section) in mq.strings().iter().zip(&bundle.sections) {
        eprintln!("{q:?}: {} result(s)", section.results.len());
    }
    eprintln!(
        "bundle for {} queries, {} bytes -> {}",
        mq.strings().len(),
        bundle.encode_to_vec().len(),
        args.out.display()
    );
    Ok(0)
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<u8> {
    let bytes =
        fs::read(&args.vo).with_context(|| format!("reading result file {}", args.vo.display()))?;
    // The file came from the untrusted server: not decoding is a verdict,
    // not an operational error.
    let file = match VoFile::decode_from_slice(&bytes) {
        Ok(file) => file,
        Err(e) => {
            eprintln!("rejected: {e}");
            return Ok(2);
        }
    };
    let public_key = load_public_key(&args.public_key)?;
    let f = match (&args.embed, file.mode) {
        (Some(path), _) => Some(load_embedding(path)?),
        (None, VoMode::Evs2) => bail!("this proof is embedding-assisted; pass --embed"),
        (None, VoMode::Vs2) => None,
    };
    let embedder = f.as_ref().map(|f| f as &dyn Embedder);
    let report = client::verify_vo_file(&file, &args.q, args.theta, embedder, &public_key)
        .context("verifying")?;
    if report.passed() {
        let c = &report.counters;
        println!(
            "passed: {} result(s), {} edit-distance tables, {} box checks",
            c.n_r,
            c.edit_ops(),
            c.euclid_rects
        );
        Ok(0)
    } else {
        eprintln!("{report}");
        Ok(2)
    }
}

fn cmd_verify_multi(args: VerifyMultiArgs) -> anyhow::Result<u8> {
    let bytes = fs::read(&args.bundle)
        .with_context(|| format!("reading bundle {}", args.bundle.display()))?;
    let bundle = match SharedVoBundle::decode_from_slice(&bytes) {
        Ok(bundle) => bundle,
        Err(e) => {
            eprintln!("rejected: {e}");
            return Ok(2);
        }
    };
    let public_key = load_public_key(&args.public_key)?;
    let queries = read_query_lines(&args.queries)?;
    let mq = MultiQuery::new(queries, args.theta).context("invalid query batch")?;
    let reports = match bundle.mode {
        VoMode::Vs2 => verify_multi(&mq, &bundle, &public_key),
        VoMode::Evs2 => {
            let path = args
                .embed
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("this bundle is embedding-assisted; pass --embed"))?;
            let f = load_embedding(path)?;
            verify_multi_e(&mq, &bundle, &f, &public_key)
        }
    };
    let mut failures = 0usize;
    for (q, report) in mq.strings().iter().zip(&reports) {
        if report.passed() {
            println!("{q:?}: passed");
        } else {
            failures += 1;
            eprintln!("{q:?}: {report}");
        }
    }
    if failures == 0 {
        Ok(0)
    } else {
        eprintln!("{failures} of {} sections rejected", reports.len());
        Ok(2)
    }
}

fn cmd_attack(args: AttackArgs) -> anyhow::Result<u8> {
    if args.matrix {
        let mut cfg = MatrixConfig {
            seed: resolved_seed(args.seed)?,
            ..MatrixConfig::default()
        };
        if let Some(trials) = args.trials {
            cfg.trials = trials;
        }
        let rows = run_detection_matrix(&cfg);
        print!("{}", matrix_to_csv(&rows));
        let misses = rows
            .iter()
            .filter(|r| r.attack != "honest_control" && !r.detected)
            .count();
        let false_alarms = rows
            .iter()
            .filter(|r| r.attack == "honest_control" && r.detected)
            .count();
        eprintln!(
            "{} rows, {misses} missed attacks, {false_alarms} false alarms",
            rows.len()
        );
        return Ok(if misses + false_alarms == 0 { 0 } else { 2 });
    }

    let kind_name = args.kind.as_deref().context("--kind is required")?;
    let kind = AttackKind::parse(kind_name).with_context(|| {
        let known: Vec<&str> = AttackKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown attack kind {kind_name:?}; known kinds: {}", known.join(", "))
    })?;
    let index = args.index.as_ref().context("--index is required")?;
    let q = args.q.as_deref().context("--q is required")?;
    let theta = args.theta.context("--theta is required")?;
    let mode = args.mode.context("--mode is required")?;
    let out = args.vo.as_ref().context("--vo is required")?;
    if kind.needs_topk() && args.topk.is_none() {
        bail!("{} targets ranked results; pass --topk", kind.name());
    }

    let tree = load_index(index)?;
    let f = match (&args.embed, mode) {
        (Some(path), _) => Some(load_embedding(path)?),
        (None, Mode::Evs2) => bail!("--mode evs2 needs --embed"),
        (None, Mode::Vs2) => {
            if kind.needs_embedded_mode() {
                bail!("{} only applies to evs2 proofs", kind.name());
            }
            None
        }
    };
    let embedder = f.as_ref().map(|f| f as &dyn Embedder);
    let honest = client::build_vo_file(&tree, embedder, mode.into(), args.topk, q, theta)
        .context("building the honest result file")?
        .encode_to_vec();
    let spec = AttackSpec {
        kind,
        seed: resolved_seed(args.seed)?,
    };
    let input = AttackInput {
        tree: &tree,
        embedder,
        q,
        theta,
    };
    match apply_attack(&spec, &input, &honest).context("applying attack")? {
        AttackOutcome::Applied {
            bytes,
            victim_class,
            expected_step,
        } => {
            fs::write(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "{} applied (victim: {victim_class}); verification should fail at {expected_step}",
                kind.name()
            );
            Ok(0)
        }
        AttackOutcome::Skipped { reason } => {
            eprintln!("{} skipped: {reason}", kind.name());
            Ok(3)
        }
    }
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<u8> {
    let corpus = ingest::load_corpus(&args.data)
        .with_context(|| format!("ingesting {}", args.data.display()))?;
    let queries = read_query_lines(&args.queries)?;
    if queries.is_empty() {
        bail!("query file {} has no queries", args.queries.display());
    }
    let records = bench(
        &corpus,
        &queries,
        &args.thetas,
        &args.dims,
        &args.fanouts,
        args.mode.into(),
        resolved_seed(args.seed)?,
    )
    .context("benchmark sweep")?;
    print!("{}", bench_to_csv(&records));
    Ok(0)
}
