//! `examforge`: validate a problem bank, steer exam sessions, render LaTeX
//! and run the HTTP API.
//!
//! Exit status: 0 on success, 1 on a domain error, 2 on a usage error. A
//! step that finds no feasible exam is a recorded outcome and exits 0.

mod commands;
mod output;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use examforge::selector::DifficultyBand;

#[derive(Parser)]
#[command(
    name = "examforge",
    version,
    about = "Assemble exams from a tagged problem bank"
)]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect a problem bank.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Create and steer exam sessions.
    #[command(subcommand)]
    Exam(ExamCommand),
    /// Serve the HTTP API for a bank.
    Serve {
        #[command(flatten)]
        bank: BankArg,
        /// Address to listen on.
        #[arg(long, default_value = examforge_service::DEFAULT_LISTEN)]
        listen: SocketAddr,
    },
}

#[derive(Args, Clone)]
pub struct BankArg {
    /// Bank directory (or its bank.json).
    #[arg(long = "bank", env = "EXAMFORGE_BANK", value_name = "PATH")]
    pub path: PathBuf,
}

#[derive(Subcommand)]
enum BankCommand {
    /// Check a bank and report every problem found. Exits 0 iff there are no errors.
    Validate { path: PathBuf },
    /// List problem metadata, optionally filtered.
    List {
        #[command(flatten)]
        bank: BankArg,
        #[arg(long)]
        subarea: Option<String>,
        #[arg(long)]
        min_points: Option<u32>,
        #[arg(long)]
        max_points: Option<u32>,
        #[arg(long)]
        ilo: Option<String>,
        #[arg(long)]
        solo_level: Option<u8>,
        /// Only problems with no usage on or after this date.
        #[arg(long, value_name = "YYYY-MM-DD")]
        unused_since: Option<NaiveDate>,
    },
}

#[derive(Subcommand)]
enum ExamCommand {
    /// Start a session and print its id and base seed.
    New(NewArgs),
    /// Draw the next draft, optionally changing pins first.
    Step {
        session: String,
        #[command(flatten)]
        bank: BankArg,
        /// Keep PROBLEM_ID in slot SLOT (1-based). Repeatable.
        #[arg(long = "pin", value_name = "SLOT=PROBLEM_ID", value_parser = parse_pin)]
        pins: Vec<(usize, String)>,
        /// Return slot SLOT to random selection. Repeatable.
        #[arg(long = "unpin", value_name = "SLOT")]
        unpins: Vec<usize>,
    },
    /// Commit the latest draft and record its problems as used on the exam date.
    Accept {
        session: String,
        #[command(flatten)]
        bank: BankArg,
    },
    /// Close the session without touching the bank.
    Abandon {
        session: String,
        #[command(flatten)]
        bank: BankArg,
    },
    /// Print the session's steps.
    Show {
        session: String,
        #[command(flatten)]
        bank: BankArg,
    },
    /// List the sessions stored with a bank.
    List {
        #[command(flatten)]
        bank: BankArg,
    },
    /// Write the LaTeX sources of the latest draft.
    Render(RenderArgs),
    /// Re-run a transcript against a bank and check every step reproduces.
    Replay {
        /// Session id, or path to a transcript file.
        session: String,
        #[command(flatten)]
        bank: BankArg,
    },
}

#[derive(Args)]
pub struct NewArgs {
    #[command(flatten)]
    pub bank: BankArg,
    /// Target total points.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub points: u32,
    /// Subarea of each slot, in order; repeat a code for several problems
    /// from one area (`--slot A,A,B`).
    #[arg(
        long = "slot",
        value_delimiter = ',',
        required = true,
        value_name = "SUBAREA[,SUBAREA...]"
    )]
    pub slots: Vec<String>,
    /// Exam date.
    #[arg(long, value_name = "YYYY-MM-DD")]
    pub date: NaiveDate,
    /// Base seed; drawn from the OS and printed when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exclude problems used within this many days before the exam (0 disables).
    #[arg(long, default_value_t = examforge::selector::DEFAULT_RECENCY_DAYS)]
    pub recency_days: u32,
    /// Accept only drafts whose weighted difficulty lies in MIN:MAX.
    #[arg(long, value_name = "MIN:MAX", value_parser = parse_band)]
    pub difficulty: Option<DifficultyBand>,
    /// Session id (default: derived from the blueprint and seed).
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Args)]
pub struct RenderArgs {
    pub session: String,
    #[command(flatten)]
    pub bank: BankArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the solutions document.
    #[arg(long)]
    pub solutions: bool,
    /// Run CMD on each written file (in the output directory) and exit with its status.
    #[arg(long, value_name = "CMD")]
    pub compile: Option<String>,
    /// Base name of the written files.
    #[arg(long, default_value = "exam")]
    pub exam_id: String,
}

fn parse_pin(s: &str) -> Result<(usize, String), String> {
    let (slot, id) = s
        .split_once('=')
        .ok_or_else(|| format!("expected SLOT=PROBLEM_ID, got \"{s}\""))?;
    let slot: usize = slot
        .trim()
        .parse()
        .map_err(|_| format!("slot \"{slot}\" is not a number"))?;
    let id = id.trim();
    if id.is_empty() {
        return Err("problem id is empty".into());
    }
    Ok((slot, id.to_owned()))
}

fn parse_band(s: &str) -> Result<DifficultyBand, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected MIN:MAX, got \"{s}\""))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| format!("\"{v}\" is not a number"))
    };
    let band = DifficultyBand {
        min: num(lo)?,
        max: num(hi)?,
    };
    if !(0.0..=1.0).contains(&band.min) || !(0.0..=1.0).contains(&band.max) || band.min > band.max {
        return Err(format!("band {s} must satisfy 0 <= MIN <= MAX <= 1"));
    }
    Ok(band)
}

/// How a command failed, mapped onto the exit status contract.
pub enum Failure {
    Usage(String),
    Domain(String),
    /// Exit with this status, message already printed.
    Status(u8),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(err: E) -> Self {
        Failure::Domain(err.to_string())
    }
}

pub type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let fmt = cli.format;
    let result = match cli.command {
        Command::Bank(BankCommand::Validate { path }) => commands::bank_validate(&path, fmt),
        Command::Bank(BankCommand::List {
            bank,
            subarea,
            min_points,
            max_points,
            ilo,
            solo_level,
            unused_since,
        }) => commands::bank_list(
            &bank.path,
            examforge::bank::ProblemFilter {
                subarea,
                min_points,
                max_points,
                ilo,
                solo_level,
                unused_since,
            },
            fmt,
        ),
        Command::Exam(cmd) => match cmd {
            ExamCommand::New(args) => commands::exam_new(args, fmt),
            ExamCommand::Step {
                session,
                bank,
                pins,
                unpins,
            } => commands::exam_step(&bank.path, &session, &pins, &unpins, fmt),
            ExamCommand::Accept { session, bank } => {
                commands::exam_accept(&bank.path, &session, fmt)
            }
            ExamCommand::Abandon { session, bank } => {
                commands::exam_abandon(&bank.path, &session, fmt)
            }
            ExamCommand::Show { session, bank } => commands::exam_show(&bank.path, &session, fmt),
            ExamCommand::List { bank } => commands::exam_list(&bank.path, fmt),
            ExamCommand::Render(args) => commands::exam_render(args, fmt),
            ExamCommand::Replay { session, bank } => {
                commands::exam_replay(&bank.path, &session, fmt)
            }
        },
        Command::Serve { bank, listen } => commands::serve(bank.path, listen),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Status(code)) => ExitCode::from(code),
    }
}
