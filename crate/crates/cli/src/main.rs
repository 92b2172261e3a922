use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ringagg::keys::sample_keys;
use ringagg::netsim::{run_round_with, RoundMeta};
use ringagg::protocol::neighbor_sum;
use ringagg::search::{search, SearchOptions, Strategy, DEFAULT_SEARCH_BUDGET};
use ringagg::verifier::{
    check_recovery, check_security, optimal_ring_rate, rate_report, scheme_from_protocol, OracleKind,
    VerificationReport, DEFAULT_ENUM_BUDGET, SCHEMA_VERSION,
};
use ringagg::{schedule_for_ring, Error, FieldSpec, Rational, RingTopology, SymbolVector};

const EXIT_CONSTRAINT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;

/// Secure neighbour-sum aggregation on rings with pairwise keys.
///
/// Data goes to stdout (or --out) as newline-delimited JSON; summaries go to
/// stderr. Exit codes: 0 success, 1 constraint failure, 2 invalid
/// configuration, 3 budget exceeded.
#[derive(Parser, Debug)]
#[command(name = "ringagg", version)]
struct Cli {
    /// Worker threads for verification and search (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one aggregation round and compare every output with the true sum.
    Run(RunArgs),
    /// Check recovery, security and rate of the ring scheme.
    Verify(VerifyArgs),
    /// Search all linear schemes of a given message size.
    Search(SearchArgs),
    /// Rate table for K = 3 up to --k-max.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Number of users on the ring.
    #[arg(long)]
    k: usize,
    /// Field size (prime).
    #[arg(long, default_value_t = 2)]
    q: u32,
    /// Symbols per input.
    #[arg(long, default_value_t = 1)]
    l: usize,
    /// Write data here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Explicit inputs: one comma-separated list per user, users separated
    /// by semicolons. Random inputs are drawn from the seed otherwise.
    #[arg(long)]
    inputs: Option<String>,
    /// Also write the delivery transcript here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleArg {
    Rank,
    Enum,
    Both,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = OracleArg::Rank)]
    oracle: OracleArg,
    /// Joint realizations the enumeration oracle may visit per query.
    #[arg(long, env = "RINGAGG_BUDGET", default_value_t = DEFAULT_ENUM_BUDGET)]
    budget: u128,
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    q: u32,
    /// Symbols per message (m).
    #[arg(long, default_value_t = 1)]
    symbols: usize,
    #[arg(long, env = "RINGAGG_BUDGET", default_value_t = DEFAULT_SEARCH_BUDGET)]
    budget: u128,
    /// auto, exhaustive or factored.
    #[arg(long, default_value = "auto")]
    strategy: String,
    /// Witness schemes to include in the report.
    #[arg(long, default_value_t = 8)]
    witnesses: usize,
    /// Count rotation classes instead of candidates.
    #[arg(long)]
    dedup_rotation: bool,
    /// Keep users whose rows never carry their own input.
    #[arg(long)]
    no_prune: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    #[arg(long, default_value_t = 2)]
    q: u32,
    #[arg(long, default_value_t = 1)]
    l: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Buffered data records; the header goes first once timing is known.
struct Output {
    command: &'static str,
    params: Value,
    records: Vec<Value>,
    start: Instant,
}

impl Output {
    fn new(command: &'static str, params: Value) -> Self {
        Self { command, params, records: Vec::new(), start: Instant::now() }
    }

    fn push(&mut self, v: Value) {
        self.records.push(v);
    }

    fn finish(self, out: Option<&PathBuf>) -> anyhow::Result<()> {
        let header = json!({
            "record": "header",
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "params": self.params,
            "wall_clock_ms": self.start.elapsed().as_millis() as u64,
        });
        let mut text = header.to_string();
        text.push('\n');
        for r in &self.records {
            text.push_str(&r.to_string());
            text.push('\n');
        }
        match out {
            Some(path) => std::fs::write(path, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

fn field(q: u32) -> anyhow::Result<FieldSpec> {
    Ok(FieldSpec::new(q)?)
}

fn parse_inputs(text: &str, k: usize, len: usize, spec: FieldSpec) -> anyhow::Result<Vec<SymbolVector>> {
    let users: Vec<&str> = text.split(';').collect();
    if users.len() != k {
        return Err(Error::InvalidArgument(format!("--inputs lists {} users, K = {k}", users.len())).into());
    }
    users
        .iter()
        .map(|u| {
            let elems = u
                .split(',')
                .map(|s| s.trim().parse::<u32>().map_err(|e| Error::InvalidArgument(format!("bad symbol {s:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if elems.len() != len {
                return Err(Error::LengthMismatch { expected: len, found: elems.len() });
            }
            SymbolVector::new(spec, elems)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(Into::into)
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<u8> {
    let c = &args.common;
    let spec = field(c.q)?;
    let ring = RingTopology::new(c.k)?;
    if c.l == 0 {
        return Err(Error::EmptyVector.into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let store = sample_keys(&schedule_for_ring(c.k)?, c.l, spec, &mut rng)?;
    let inputs = match &args.inputs {
        Some(text) => parse_inputs(text, c.k, c.l, spec)?,
        None => (0..c.k).map(|_| SymbolVector::sample_uniform(c.l, spec, &mut rng)).collect::<Result<_, _>>()?,
    };
    let meta = RoundMeta { round: 0, seed: Some(args.seed) };
    let (out, transcript) = run_round_with(meta, ring, &inputs, &store)?;

    let mut o = Output::new("run", json!({"k": c.k, "q": c.q, "l": c.l, "seed": args.seed}));
    let mut mismatches = 0;
    for (u, got) in out.sums.iter().enumerate() {
        let truth = neighbor_sum(ring, &inputs, u)?;
        let ok = *got == truth;
        mismatches += usize::from(!ok);
        eprintln!("user {u}: recovered {got}  expected {truth}  {}", if ok { "ok" } else { "MISMATCH" });
        o.push(json!({
            "record": "user",
            "user": u,
            "input": inputs[u].elems(),
            "recovered": got.elems(),
            "expected": truth.elems(),
            "match": ok,
        }));
    }
    let sent = transcript.symbols_per_sender();
    o.push(json!({
        "record": "summary",
        "symbols_per_user": sent,
        "rate": rational_json(Rational::new(sent[0] as i64, c.l as i64)),
        "mismatches": mismatches,
    }));
    if let Some(path) = &args.transcript {
        std::fs::write(path, transcript.to_ndjson())?;
    }
    o.finish(c.out.as_ref())?;
    eprintln!("{} of {} users recovered their neighbour sum", c.k - mismatches, c.k);
    Ok(if mismatches == 0 { 0 } else { EXIT_CONSTRAINT })
}

fn rational_json(r: Rational) -> Value {
    json!({"num": r.numer().to_string(), "den": r.denom().to_string()})
}

fn cmd_verify(args: &VerifyArgs) -> anyhow::Result<u8> {
    let c = &args.common;
    let spec = field(c.q)?;
    let ring = RingTopology::new(c.k)?;
    let scheme = scheme_from_protocol(c.k, &schedule_for_ring(c.k)?, spec, c.l)?;
    let oracles: &[OracleKind] = match args.oracle {
        OracleArg::Rank => &[OracleKind::Rank],
        OracleArg::Enum => &[OracleKind::Enum],
        OracleArg::Both => &[OracleKind::Rank, OracleKind::Enum],
    };
    let mut report = VerificationReport::new();
    for &o in oracles {
        report.push(&check_recovery(&scheme, &ring, o, args.budget)?);
        report.push(&check_security(&scheme, &ring, o, args.budget)?);
    }
    let expected = optimal_ring_rate(c.k);
    report.push(&rate_report(&scheme, expected)?);

    let oracle_name = format!("{:?}", args.oracle).to_lowercase();
    let mut o = Output::new("verify", json!({"k": c.k, "q": c.q, "l": c.l, "oracle": oracle_name}));
    for line in report.to_ndjson().lines() {
        o.push(serde_json::from_str(line)?);
    }
    o.finish(c.out.as_ref())?;
    let failures: Vec<_> = report.records.iter().filter(|r| !r.pass).collect();
    for f in &failures {
        eprintln!("FAIL {} at user {} ({} oracle): {} symbols", f.constraint, f.user, f.oracle, f.symbols);
    }
    eprintln!(
        "K={} q={} L={}: {} checks, {} failed, expected rate {expected}",
        c.k,
        c.q,
        c.l,
        report.records.len(),
        failures.len()
    );
    Ok(if report.passed() { 0 } else { EXIT_CONSTRAINT })
}

fn cmd_search(args: &SearchArgs) -> anyhow::Result<u8> {
    let spec = field(args.q)?;
    let strategy: Strategy = args.strategy.parse()?;
    let opts = SearchOptions {
        prune: !args.no_prune,
        dedup_rotation: args.dedup_rotation,
        budget: args.budget,
        max_witnesses: args.witnesses,
        strategy,
    };
    let outcome = search(args.k, args.symbols, spec, &opts)?;
    let mut o = Output::new(
        "search",
        json!({"k": args.k, "q": args.q, "symbols": args.symbols, "strategy": args.strategy}),
    );
    let mut rec = serde_json::to_value(outcome.report())?;
    rec["record"] = json!("search");
    o.push(rec);
    o.finish(args.out.as_ref())?;
    eprintln!(
        "K={} m={} q={}: {} feasible linear schemes ({} examined, {:?} strategy)",
        args.k, args.symbols, args.q, outcome.feasible_count, outcome.examined, outcome.strategy
    );
    Ok(0)
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<u8> {
    let spec = field(args.q)?;
    if args.k_max < 3 {
        return Err(Error::RingTooSmall(args.k_max).into());
    }
    let mut o = Output::new("report", json!({"k_max": args.k_max, "q": args.q, "l": args.l}));
    let mut all_ok = true;
    eprintln!("{:>3}  {:>8}  {:>8}  recovery  security", "K", "measured", "optimal");
    for k in 3..=args.k_max {
        let ring = RingTopology::new(k)?;
        let scheme = scheme_from_protocol(k, &schedule_for_ring(k)?, spec, args.l)?;
        let rate = rate_report(&scheme, optimal_ring_rate(k))?;
        let measured = rate.users.iter().map(|u| u.value.exact().expect("rank values are exact")).max().expect("k >= 3");
        let rec = check_recovery(&scheme, &ring, OracleKind::Rank, DEFAULT_ENUM_BUDGET)?.passed();
        let sec = check_security(&scheme, &ring, OracleKind::Rank, DEFAULT_ENUM_BUDGET)?.passed();
        all_ok &= rate.passed() && rec && sec;
        eprintln!("{k:>3}  {:>8}  {:>8}  {:>8}  {:>8}", measured.to_string(), optimal_ring_rate(k).to_string(), rec, sec);
        o.push(json!({
            "record": "rate",
            "k": k,
            "measured": rational_json(measured),
            "optimal": rational_json(optimal_ring_rate(k)),
            "recovery": rec,
            "security": sec,
        }));
    }
    o.finish(args.out.as_ref())?;
    Ok(if all_ok { 0 } else { EXIT_CONSTRAINT })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::BudgetExceeded { .. }) => EXIT_BUDGET,
        Some(_) => EXIT_CONFIG,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_CONSTRAINT,
        None => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Search(a) => cmd_search(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
