//! Thin command-line front end over the twistrank library: single-twist
//! ranks with oracle cross-checks, sweeps, simulations, the predicted
//! distribution, character-sum experiments, and report rendering.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::str::FromStr;
use twistrank::arith::Rat;
use twistrank::charlab::{char_sum, CharSumSpec};
use twistrank::density::{alpha, pi_estimate, AlphaTable};
use twistrank::harness::{self, read_sweep_file, ReportFormat, SweepConfig};
use twistrank::oracle::selmer_rank_conic;
use twistrank::selmer::{
    parity_context, parity_predict, selmer_rank, selmer_rank_charsum, selmer_rank_formal,
    FormalTwistModel,
};
use twistrank::{Error, TwistFamily};

#[derive(Parser)]
#[command(
    name = "twistrank",
    about = "2-Selmer ranks of quadratic twists and their density statistics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank a single twist, optionally cross-checked by the independent
    /// oracles.
    Rank {
        /// Curve data c1,c2,c3 (integers or rationals like 1/2)
        #[arg(long, value_name = "c1,c2,c3", allow_hyphen_values = true)]
        c: String,
        /// Twist parameter (nonzero squarefree integer)
        #[arg(long, allow_hyphen_values = true)]
        b: i64,
        /// Also run the character-sum and conic-solvability oracles
        #[arg(long)]
        oracle: bool,
        /// Also extract the formal symbol model and rank it
        #[arg(long)]
        formal_check: bool,
    },
    /// Sweep all eligible twists up to a bound and aggregate the statistics.
    Sweep {
        #[arg(long, value_name = "c1,c2,c3", allow_hyphen_values = true)]
        c: String,
        #[arg(long = "N")]
        n_limit: u64,
        /// Keep only b with omega(b) inside the typical window
        #[arg(long)]
        window: bool,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue an interrupted sweep on the same output file
        #[arg(long)]
        resume: bool,
    },
    /// Monte Carlo estimate of the rank distribution over random symbol
    /// configurations on n formal primes.
    Simulate {
        #[arg(long, value_name = "c1,c2,c3", allow_hyphen_values = true)]
        c: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        samples: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Print the predicted density table alpha_0..alpha_dmax.
    Alpha {
        #[arg(long)]
        dmax: u32,
    },
    /// Evaluate a character sum described by a JSON spec file.
    Charsum {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Render a sweep output file as text, CSV, or plot data.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "text")]
        format: String,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn parse_family(spec: &str) -> Result<TwistFamily, Error> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "--c wants three comma-separated roots, got {spec:?}"
        )));
    }
    let mut roots = [Rat::from_integer(0); 3];
    for (slot, part) in roots.iter_mut().zip(&parts) {
        let part = part.trim();
        let rat = if let Some((num, den)) = part.split_once('/') {
            let n: i64 = num
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad root {part:?}")))?;
            let d: i64 = den
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad root {part:?}")))?;
            if d == 0 {
                return Err(Error::InvalidArgument("root denominator is zero".into()));
            }
            Rat::new(n, d)
        } else {
            Rat::from_integer(
                part.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad root {part:?}")))?,
            )
        };
        *slot = rat;
    }
    TwistFamily::from_rationals(roots)
}

fn factor_string(record: &twistrank::TwistRecord) -> String {
    if record.factors.is_empty() {
        "1".to_string()
    } else {
        record
            .factors
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" * ")
    }
}

fn cmd_rank(c: &str, b: i64, oracle: bool, formal_check: bool) -> Result<(), Error> {
    let family = parse_family(c)?;
    println!("family: {family}");
    let record = selmer_rank(&family, b)?;
    let sign = if b < 0 { "-" } else { "" };
    println!(
        "b = {} = {sign}{}, omega = {}, class mod {} = {}",
        record.b,
        factor_string(&record),
        record.omega,
        family.modulus(),
        record.class_mod_d
    );
    println!(
        "dim S2(E_b) = {} ({})",
        record.selmer_dim,
        if record.parity == 0 { "even" } else { "odd" }
    );
    match parity_predict(&family, b) {
        Ok(p) => {
            let ctx = parity_context(&family)?;
            println!(
                "parity prediction: {} (d = {}, N = {}, {})",
                if p == 0 { "even" } else { "odd" },
                ctx.d,
                ctx.bad_n,
                if ctx.criterion_matches {
                    "character criterion"
                } else {
                    "class-calibrated"
                }
            );
            if p != record.parity {
                eprintln!("MISMATCH: predicted parity disagrees with the computed rank");
                std::process::exit(1);
            }
        }
        Err(Error::UnsupportedFamily(msg)) => {
            println!("parity prediction unavailable ({msg}); computed parity reported above");
        }
        Err(e) => return Err(e),
    }
    if oracle {
        let cs = selmer_rank_charsum(&family, b)?;
        let conic = selmer_rank_conic(&family, b)?;
        println!("character-sum oracle: {cs}");
        println!("conic-solvability oracle: {conic}");
        if cs != record.selmer_dim || conic != record.selmer_dim {
            eprintln!("MISMATCH: oracle disagreement");
            std::process::exit(1);
        }
        println!("oracles agree");
    }
    if formal_check {
        if b < 0 {
            println!("formal check skipped: models describe positive twists");
        } else {
            // extract against the folded family so twists sharing factors
            // with D are handled the same way the rank computation does
            let (folded, b_coprime) = twistrank::localspaces::fold_twist(&family, b)?;
            let model = FormalTwistModel::from_twist(&folded, b_coprime)?;
            let formal = selmer_rank_formal(&folded, &model)?;
            println!("formal-symbol rank: {formal}");
            if formal != record.selmer_dim {
                eprintln!("MISMATCH: formal rank disagreement");
                std::process::exit(1);
            }
            println!("formal model agrees");
        }
    }
    Ok(())
}

fn cmd_sweep(
    c: &str,
    n_limit: u64,
    window: bool,
    workers: usize,
    out: Option<PathBuf>,
    resume: bool,
) -> Result<(), Error> {
    let family = parse_family(c)?;
    let config = SweepConfig {
        family,
        n_limit,
        window_filter: window,
        positive_only: true,
        workers,
        output: out.clone(),
        resume,
        seed: 0,
    };
    let table = harness::sweep(&config)?;
    let dmax = table.counts.keys().next_back().copied().unwrap_or(4) + 2;
    let alpha_table = AlphaTable::new(dmax);
    print!(
        "{}",
        harness::report(&table, &alpha_table, ReportFormat::Text)?
    );
    if let Some(path) = out {
        println!("records: {}", path.display());
    }
    Ok(())
}

fn cmd_simulate(c: &str, n: usize, samples: u64, seed: u64) -> Result<(), Error> {
    let family = parse_family(c)?;
    let est = pi_estimate(&family, n, samples, seed)?;
    let dmax = est.histogram.keys().next_back().copied().unwrap_or(4).max(8);
    let table = AlphaTable::new(dmax);
    println!(
        "pi_d(n = {n}) from {samples} samples (seed {seed}), family D = {}",
        family.modulus()
    );
    println!("  d,pi_hat,alpha_d,stderr");
    for (&d, &count) in &est.histogram {
        println!(
            "  {d}  {:.6}  {:.6}  {:.6}",
            count as f64 / samples as f64,
            table.value(d),
            est.std_errors[&d]
        );
    }
    println!("total-variation distance to alpha: {:.6}", est.tv_distance(&table));
    Ok(())
}

fn cmd_alpha(dmax: u32) -> Result<(), Error> {
    let table = AlphaTable::new(dmax);
    println!("d,alpha_d");
    for (d, v) in table.values.iter().enumerate() {
        println!("{d},{v:.12}");
    }
    println!("partial sum = {:.12}", table.partial_sum());
    println!("tail bound  = {:.3e}", table.tail_bound);
    let _ = alpha(dmax);
    Ok(())
}

fn cmd_charsum(path: &std::path::Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)?;
    let spec: CharSumSpec =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("bad spec file: {e}")))?;
    spec.validate()?;
    let value = char_sum(&spec)?;
    println!(
        "char_sum(n = {}, N = {}, D = {}) = {value}",
        spec.n, spec.n_limit, spec.modulus
    );
    println!("active indices m = {}", spec.active_count());
    println!("|sum|/N = {:.6e}", value.abs() / spec.n_limit as f64);
    Ok(())
}

fn cmd_report(input: &std::path::Path, format: &str) -> Result<(), Error> {
    let format = ReportFormat::from_str(format)?;
    let (header, records) = read_sweep_file(input)?;
    let mut table = twistrank::DensityTable::new(header.n_limit);
    for record in &records {
        table.add_record(record);
    }
    let dmax = table.counts.keys().next_back().copied().unwrap_or(4) + 2;
    let alpha_table = AlphaTable::new(dmax);
    print!("{}", harness::report(&table, &alpha_table, format)?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Rank {
            c,
            b,
            oracle,
            formal_check,
        } => cmd_rank(&c, b, oracle, formal_check),
        Command::Sweep {
            c,
            n_limit,
            window,
            workers,
            out,
            resume,
        } => cmd_sweep(&c, n_limit, window, workers, out, resume),
        Command::Simulate { c, n, samples, seed } => cmd_simulate(&c, n, samples, seed),
        Command::Alpha { dmax } => cmd_alpha(dmax),
        Command::Charsum { spec } => cmd_charsum(&spec),
        Command::Report { input, format } => cmd_report(&input, &format),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("twistrank: {e}");
        std::process::exit(e.exit_code());
    }
}
