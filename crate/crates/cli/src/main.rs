mod adult;

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use dpsynth::audit::{audit_dp, LaplaceMarginalMechanism, OutputEvent};
use dpsynth::exec::stream_rng;
use dpsynth::marginal::unravel;
use dpsynth::privacy::noisy_range_query;
use dpsynth::schema::adult_schema;
use dpsynth::{
    build_marginal, generate, ingest_csv, CsvOptions, Epsilon, Exec, MarginalSpec,
    PrivacyAccountant, RangeIndex, Schema, TabularDataset,
};

mod exit {
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const INGEST: u8 = 3;
    pub const BUDGET: u8 = 4;
    pub const CAPACITY: u8 = 5;
    pub const AUDIT_FAIL: u8 = 6;
    pub const NETWORK: u8 = 7;
    pub const VALIDATION: u8 = 8;
}

/// Differentially private synthetic data from noisy marginals.
#[derive(Parser)]
#[command(name = "dpsynth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact contingency table of one marginal (no privacy budget spent).
    Marginal(MarginalArgs),
    /// Noise marginals, sample synthetic rows, write CSVs and a report.
    Synth(SynthArgs),
    /// Range count over an integer column, exact or Laplace-noised.
    Query(QueryArgs),
    /// Monte-Carlo check of the DP inequality on two neighboring datasets.
    Audit(AuditArgs),
    /// Print a privacy ledger.
    Report(ReportArgs),
    /// Download (or import) and validate the UCI Adult census CSV.
    FetchAdult(FetchArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Schema file (TOML).
    #[arg(long)]
    schema: PathBuf,
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Args)]
struct MarginalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Comma-joined columns, e.g. `Age,Occupation`.
    #[arg(long)]
    marginal: String,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Marginal to synthesize; repeat for several.
    #[arg(long, required = true)]
    marginal: Vec<String>,
    /// Total privacy budget, split evenly across marginals.
    #[arg(long)]
    epsilon: f64,
    /// Synthetic rows per marginal.
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    column: String,
    #[arg(long, allow_hyphen_values = true)]
    lo: i64,
    #[arg(long, allow_hyphen_values = true)]
    hi: i64,
    /// Answer exactly; spends nothing.
    #[arg(long, conflicts_with = "epsilon")]
    exact: bool,
    /// Answer with Laplace noise at this epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON ledger persisted across queries.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Total budget when creating a new ledger.
    #[arg(long)]
    budget: Option<f64>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    schema: PathBuf,
    /// Dataset D.
    #[arg(long)]
    input: PathBuf,
    /// Dataset D', equal to D or differing by one row.
    #[arg(long)]
    neighbor: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    marginal: String,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1_000_000)]
    trials: usize,
    #[arg(long, default_value_t = 0.2)]
    slack: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Left-tail thresholds applied to every bin.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1.5,2.5,3.5")]
    thresholds: Vec<f64>,
    /// Rescale the noise without changing the charged epsilon (values below
    /// 1 simulate a miscalibrated mechanism).
    #[arg(long, default_value_t = 1.0)]
    noise_multiplier: f64,
    /// Emit JSON instead of key/value text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FetchArgs {
    /// Destination file (default: <cache dir>/adult.csv).
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, env = "DPSYNTH_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Import a pre-downloaded copy instead of using the network.
    #[arg(long)]
    from: Option<PathBuf>,
    #[arg(long, default_value = adult::ADULT_URL)]
    url: String,
    #[arg(long, default_value_t = 30_000)]
    min_rows: usize,
    /// Re-fetch even when a valid copy is present.
    #[arg(long)]
    force: bool,
}

/// An error carrying its own exit code.
#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    CliError {
        code: exit::USAGE,
        message: message.into(),
    }
    .into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<CliError>() {
        return e.code;
    }
    if err.downcast_ref::<adult::ValidationError>().is_some() {
        return exit::VALIDATION;
    }
    match err.downcast_ref::<dpsynth::Error>() {
        Some(dpsynth::Error::BudgetExhausted { .. }) => exit::BUDGET,
        Some(dpsynth::Error::Capacity { .. }) => exit::CAPACITY,
        Some(
            dpsynth::Error::InvalidArgument(_)
            | dpsynth::Error::UnsupportedQuery { .. }
            | dpsynth::Error::NotNeighbors(_)
            | dpsynth::Error::UnknownColumn(_),
        ) => exit::USAGE,
        Some(_) => exit::INGEST,
        None if err.downcast_ref::<std::io::Error>().is_some() => exit::INGEST,
        None => exit::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Marginal(a) => cmd_marginal(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Query(a) => cmd_query(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Report(a) => cmd_report(a),
        Command::FetchAdult(a) => cmd_fetch_adult(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn delimiter(c: char) -> anyhow::Result<CsvOptions> {
    u8::try_from(c)
        .ok()
        .filter(u8::is_ascii)
        .map(|d| CsvOptions { delimiter: d })
        .ok_or_else(|| usage(format!("delimiter `{c}` is not a single ASCII character")))
}

fn load_schema(path: &Path) -> anyhow::Result<Schema> {
    Schema::from_path(path).with_context(|| format!("reading schema {}", path.display()))
}

fn load_dataset(path: &Path, schema: &Schema, delim: char) -> anyhow::Result<TabularDataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let name = path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned());
    let (ds, rejected) = ingest_csv(file, schema, name, delimiter(delim)?)
        .with_context(|| format!("ingesting {}", path.display()))?;
    if rejected > 0 {
        eprintln!("{}: dropped {rejected} out-of-domain rows", path.display());
    }
    Ok(ds)
}

fn load_input(args: &InputArgs) -> anyhow::Result<TabularDataset> {
    let schema = load_schema(&args.schema)?;
    load_dataset(&args.input, &schema, args.delimiter)
}

fn epsilon(v: f64) -> anyhow::Result<Epsilon> {
    Epsilon::new(v).map_err(|e| usage(e.to_string()))
}

fn require_seed(seed: Option<u64>, command: &str) -> anyhow::Result<u64> {
    seed.ok_or_else(|| usage(format!("`{command}` is stochastic and needs --seed")))
}

/// Writes next to `path` and renames into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_marginal(args: MarginalArgs) -> anyhow::Result<u8> {
    let ds = load_input(&args.input)?;
    let spec = MarginalSpec::parse(&args.marginal)?;
    let table = build_marginal(&ds, &spec)?;
    let domains = spec.domains(ds.schema())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = spec.columns().iter().map(String::as_str).collect();
    header.push("count");
    w.write_record(&header)?;
    for (flat, &count) in table.counts().iter().enumerate() {
        let mut record: Vec<String> = unravel(flat, table.dims())
            .iter()
            .zip(&domains)
            .map(|(&b, d)| d.decode(b).to_string())
            .collect();
        record.push(count.to_string());
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!(e.to_string()))?;
    match args.out {
        Some(path) => write_atomic(&path, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(0)
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<u8> {
    let seed = require_seed(args.seed, "synth")?;
    let total = epsilon(args.epsilon)?;
    let specs = args
        .marginal
        .iter()
        .map(|m| MarginalSpec::parse(m))
        .collect::<dpsynth::Result<Vec<_>>>()?;
    let ds = load_input(&args.input)?;
    let out = generate(&ds, &specs, total, args.rows, seed)?;

    // render everything before touching the output directory
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for synth in &out.datasets {
        let mut buf = Vec::new();
        synth.write_csv(&mut buf)?;
        let spec = MarginalSpec::parse(&synth.provenance.spec)?;
        files.push((args.out.join(format!("synthetic_{}.csv", spec.slug())), buf));
    }
    files.push((args.out.join("report.txt"), out.report.to_text().into_bytes()));
    files.push((args.out.join("report.json"), out.report.to_json().into_bytes()));
    for (path, bytes) in &files {
        write_atomic(path, bytes)?;
    }
    print!("{}", out.report.to_text());
    Ok(0)
}

fn load_or_create_ledger(path: &Path, budget: Option<f64>) -> anyhow::Result<PrivacyAccountant> {
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return serde_json::from_str(&text)
            .with_context(|| format!("parsing ledger {}", path.display()));
    }
    let budget = budget.ok_or_else(|| usage("a new ledger needs --budget"))?;
    Ok(PrivacyAccountant::new(epsilon(budget)?))
}

fn cmd_query(args: QueryArgs) -> anyhow::Result<u8> {
    let ds = load_input(&args.input)?;
    let index = RangeIndex::new(&ds, &args.column)?;
    let Some(eps) = args.epsilon else {
        println!("{}", index.count(args.lo, args.hi)?);
        return Ok(0);
    };
    let eps = epsilon(eps)?;
    let seed = require_seed(args.seed, "query --epsilon")?;
    let mut accountant = match &args.ledger {
        Some(path) => load_or_create_ledger(path, args.budget)?,
        None => PrivacyAccountant::new(match args.budget {
            Some(b) => epsilon(b)?,
            None => eps,
        }),
    };
    // the ledger length keeps repeated queries under one seed on fresh noise
    let mut rng = stream_rng(seed, accountant.ledger().len() as u64);
    let answer = noisy_range_query(&index, args.lo, args.hi, eps, &mut accountant, &mut rng)?;
    if let Some(path) = &args.ledger {
        write_atomic(path, serde_json::to_string_pretty(&accountant)?.as_bytes())?;
    }
    println!("{answer}");
    eprintln!("spent {} of {}", accountant.spent(), accountant.budget());
    Ok(0)
}

fn cmd_audit(args: AuditArgs) -> anyhow::Result<u8> {
    let seed = require_seed(args.seed, "audit")?;
    let eps = epsilon(args.epsilon)?;
    if !(args.noise_multiplier > 0.0 && args.noise_multiplier.is_finite()) {
        return Err(usage("--noise-multiplier must be positive"));
    }
    let schema = load_schema(&args.schema)?;
    let d = load_dataset(&args.input, &schema, args.delimiter)?;
    let d_prime = load_dataset(&args.neighbor, &schema, args.delimiter)?;
    let spec = MarginalSpec::parse(&args.marginal)?;
    let cells: usize = spec.dims(&schema, dpsynth::marginal::DEFAULT_CELL_CAP)?.iter().product();
    let mech = LaplaceMarginalMechanism::new(spec, eps).with_noise_multiplier(args.noise_multiplier);
    let events = OutputEvent::left_tails(cells, &args.thresholds);
    let report = audit_dp(
        &mech,
        &d,
        &d_prime,
        &events,
        eps,
        args.trials,
        args.slack,
        &mut stream_rng(seed, 0),
        Exec::default(),
    )?;
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    Ok(if report.pass { 0 } else { exit::AUDIT_FAIL })
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(&args.ledger)
        .with_context(|| format!("reading ledger {}", args.ledger.display()))?;
    let accountant: PrivacyAccountant = serde_json::from_str(&text)
        .with_context(|| format!("parsing ledger {}", args.ledger.display()))?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&accountant)?);
    } else {
        print!("{}", accountant.report());
    }
    Ok(0)
}

fn default_cache_dir() -> Option<PathBuf> {
    std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("dpsynth"))
}

fn cmd_fetch_adult(args: FetchArgs) -> anyhow::Result<u8> {
    let target = match args.target {
        Some(t) => t,
        None => args
            .cache_dir
            .or_else(default_cache_dir)
            .ok_or_else(|| usage("no --target, DPSYNTH_CACHE_DIR, or HOME to place the file"))?
            .join("adult.csv"),
    };
    if !args.force && adult::is_current(&target, args.min_rows) {
        println!("{}: up to date", target.display());
        return Ok(0);
    }

    let raw = match &args.from {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => adult::download(&args.url).map_err(|e| CliError {
            code: exit::NETWORK,
            message: format!(
                "download of {} failed: {e}; retry later, or fetch the file by other means and pass --from <file>",
                args.url
            ),
        })?,
    };
    let normalized = adult::normalize(&raw);
    let summary = adult::validate(&normalized, args.min_rows)?;

    // the file must ingest cleanly under the census schema, too
    let (ds, rejected) = ingest_csv(normalized.as_bytes(), &adult_schema(), "adult", CsvOptions::default())?;

    write_atomic(&target, normalized.as_bytes())?;
    write_atomic(&adult::sidecar(&target), adult::sha256_hex(normalized.as_bytes()).as_bytes())?;
    println!(
        "{}: {} rows ({} usable for Age x Occupation, {} with unknown occupation)",
        target.display(),
        summary.rows,
        ds.len(),
        rejected
    );
    Ok(0)
}
