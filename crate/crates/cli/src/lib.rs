//! `cardauth` command-line front end.
//!
//! Every subcommand takes explicit writers so tests can drive it in-process.
//! Exit statuses: 0 success, 1 runtime or protocol failure, 2 usage error.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub mod bench;
pub mod commands;
pub mod repl;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Default RC4-Pr master key for benchmarks: bytes 0x00..=0x0f.
pub const DEFAULT_BENCH_KEY: &str = "000102030405060708090a0b0c0d0e0f";

#[derive(Debug, Parser)]
#[command(
    name = "cardauth",
    version,
    about = "Card-based authentication toolkit and simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Encrypt,
    Decrypt,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encrypt or decrypt a file with RC4-Pr (the two are the same transform).
    Rc4pr {
        #[arg(value_enum)]
        mode: Mode,
        /// 128-bit master key as 32 hex characters.
        #[arg(long)]
        key: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Print the number of subkeys used.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Encrypt each file and print per-file and total timing blocks.
    Bench {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value = DEFAULT_BENCH_KEY)]
        key: String,
        /// Emit JSON rows instead of the text report.
        #[arg(long)]
        machine_readable: bool,
    },
    /// Build an RSA key pair from primes, or from seeded random primes.
    Keygen {
        #[arg(num_args = 3, value_names = ["P", "Q", "E"], conflicts_with = "random")]
        pqe: Vec<u64>,
        /// Bit size of each random prime.
        #[arg(long, value_name = "BITS")]
        random: Option<u32>,
        #[arg(long, env = "CARDAUTH_SEED", default_value_t = 1)]
        seed: u64,
    },
    /// Run a scenario script against a fresh simulation.
    Scenario {
        /// Script path, or a bundled scenario name with --bundled.
        path: String,
        /// Override the script's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the event log after the report.
        #[arg(long)]
        log: bool,
        #[arg(long)]
        bundled: bool,
    },
    /// Interactive client against an in-process server.
    Repl {
        #[arg(long, env = "CARDAUTH_SEED", default_value_t = 1)]
        seed: u64,
        /// Echo each command after the prompt, for scripted input.
        #[arg(long)]
        echo: bool,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = target.write_all(rendered.as_bytes());
            return code;
        }
    };
    let result = match cli.command {
        Command::Rc4pr {
            mode,
            key,
            input,
            output,
            verbose,
        } => commands::rc4pr(mode, &key, &input, &output, verbose, out),
        Command::Bench {
            paths,
            key,
            machine_readable,
        } => commands::bench(&paths, &key, machine_readable, out),
        Command::Keygen { pqe, random, seed } => commands::keygen(&pqe, random, seed, out),
        Command::Scenario {
            path,
            seed,
            log,
            bundled,
        } => commands::scenario(&path, bundled, seed, log, out),
        Command::Repl { seed, echo } => {
            repl::run(seed, echo, input, out).map_err(commands::CmdError::Io)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
