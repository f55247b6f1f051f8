use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use f1sketch::cli::{self, Summary, TrialSpec, CSV_HEADER};
use f1sketch::stream::{generate, Distribution, Stream};
use f1sketch::{Error, Result};

/// First frequency moment estimation for turnstile streams.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream.
    Generate(GenerateArgs),
    /// Estimate F1 of a stream once.
    Run(RunArgs),
    /// Repeat the estimate over many seeds and compare with the exact value.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// zipf:<s>, uniform, planted:<h>,<f>,<lmax> or adversarial.
    #[arg(long, default_value = "zipf:1.1")]
    dist: Distribution,
    #[arg(long)]
    n: u64,
    #[arg(long)]
    m: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Give items random signs (and deletions in planted streams).
    #[arg(long)]
    turnstile: bool,
    /// Output path; `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct StreamArgs {
    /// Stream path; `-` for stdin.
    stream: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Read little-endian (u32, i64) records.
    #[arg(long)]
    binary: bool,
    /// Domain size when the stream has no header.
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    stream: StreamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute the exact moment.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    stream: StreamArgs,
    /// First seed; trial k uses seed + k.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn output(path: &Path) -> Result<Box<dyn Write>> {
    Ok(if is_stdio(path) {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(File::create(path)?))
    })
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let stream = generate(args.dist, args.n, args.m, args.seed, args.turnstile)?;
    let out = output(&args.out)?;
    if args.binary {
        stream.write_binary(out)
    } else {
        stream.write_text(out)
    }
}

fn load(args: &StreamArgs) -> Result<Stream> {
    let reader: Box<dyn Read> = if is_stdio(&args.stream) {
        Box::new(io::stdin().lock())
    } else {
        Box::new(File::open(&args.stream)?)
    };
    if args.binary {
        Stream::parse_binary(reader, args.n)
    } else {
        Stream::parse_text(BufReader::new(reader), args.n)
    }
}

fn trial_spec(args: &StreamArgs) -> TrialSpec {
    TrialSpec {
        epsilon: args.epsilon,
        p: args.p,
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let stream = load(&args.stream)?;
    let exact = if args.oracle {
        Some(cli::exact_state(&stream)?.moment(args.stream.p))
    } else {
        None
    };
    let row = cli::run_trial(&stream, trial_spec(&args.stream), 0, args.seed, exact)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{CSV_HEADER}")?;
    writeln!(out, "{row}")?;
    write!(
        out,
        "# estimate={} heavy={} light={} heavy_items={} updates={}",
        row.est_f1,
        row.est_heavy,
        row.est_light,
        row.heavy_count,
        stream.updates.len()
    )?;
    if let (Some(exact), Some(err)) = (row.exact_f1, row.rel_err()) {
        write!(out, " exact={exact} rel_err={err}")?;
    }
    writeln!(out)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let stream = load(&args.stream)?;
    let spec = trial_spec(&args.stream);
    let rows = cli::evaluate(&stream, spec, args.trials, args.seed, args.jobs)?;
    let summary = Summary::from_rows(&rows, spec.epsilon);
    match &args.out {
        Some(path) => {
            cli::write_csv(&rows, BufWriter::new(File::create(path)?))?;
            println!("{summary}");
        }
        None => {
            let mut out = io::stdout().lock();
            cli::write_csv(&rows, &mut out)?;
            writeln!(out, "# {summary}")?;
        }
    }
    if rows.iter().any(|r| !r.est_f1.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}
