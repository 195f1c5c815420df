use std::io::{self, Write};
use std::path::{Path, PathBuf};

use cardauth_core::rc4pr::{rc4pr_apply_counted, RoundKey};
use cardauth_core::rsa::{generate_keypair, generate_keypair_random, RsaKeyBundle};
use cardauth_core::simnet::{bundled, parse_scenario, run_scenario};
use thiserror::Error;

use crate::bench::run_bench;
use crate::{Mode, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Error)]
pub enum CmdError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => EXIT_USAGE,
            CmdError::Failure(_) | CmdError::Io(_) => EXIT_FAILURE,
        }
    }
}

pub type CmdResult = Result<i32, CmdError>;

pub fn parse_key(text: &str) -> Result<RoundKey, CmdError> {
    let bytes = hex::decode(text).map_err(|e| CmdError::Usage(format!("key {text:?}: {e}")))?;
    RoundKey::from_slice(&bytes).map_err(|e| CmdError::Usage(e.to_string()))
}

fn io_context(path: &Path, e: io::Error) -> CmdError {
    CmdError::Failure(format!("{}: {e}", path.display()))
}

pub fn rc4pr(
    _mode: Mode,
    key: &str,
    input: &Path,
    output: &Path,
    verbose: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let key = parse_key(key)?;
    let data = std::fs::read(input).map_err(|e| io_context(input, e))?;
    let (result, subkeys) = rc4pr_apply_counted(&key, &data);
    std::fs::write(output, result).map_err(|e| io_context(output, e))?;
    if verbose {
        writeln!(out, "subkeys: {subkeys}")?;
    }
    Ok(EXIT_OK)
}

pub fn bench(
    paths: &[PathBuf],
    key: &str,
    machine_readable: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let key = parse_key(key)?;
    let report = run_bench(paths, &key);
    if machine_readable {
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| CmdError::Failure(e.to_string()))?;
        writeln!(out, "{json}")?;
    } else {
        out.write_all(report.render_text().as_bytes())?;
    }
    Ok(if report.failed() {
        EXIT_FAILURE
    } else {
        EXIT_OK
    })
}

pub fn render_bundle(b: &RsaKeyBundle) -> String {
    format!(
        "p: {}\nq: {}\nn: {}\nphi: {}\ne: {}\nd: {}\npublic: {}\nprivate: {}-{}\n",
        b.p,
        b.q,
        b.n,
        b.phi,
        b.e,
        b.d,
        b.public_key(),
        b.n,
        b.d
    )
}

pub fn keygen(pqe: &[u64], random: Option<u32>, seed: u64, out: &mut dyn Write) -> CmdResult {
    let bundle = match (pqe, random) {
        ([p, q, e], None) => generate_keypair(*p, *q, *e),
        ([], Some(bits)) => generate_keypair_random(bits, seed),
        _ => return Err(CmdError::Usage("give P Q E, or --random BITS".into())),
    }
    .map_err(|e| CmdError::Failure(e.to_string()))?;
    out.write_all(render_bundle(&bundle).as_bytes())?;
    Ok(EXIT_OK)
}

pub fn scenario(
    path: &str,
    is_bundled: bool,
    seed: Option<u64>,
    log: bool,
    out: &mut dyn Write,
) -> CmdResult {
    let text = if is_bundled {
        bundled()
            .iter()
            .find(|(name, _)| *name == path)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| {
                let names: Vec<_> = bundled().iter().map(|(n, _)| *n).collect();
                CmdError::Usage(format!(
                    "no bundled scenario {path:?}; available: {}",
                    names.join(", ")
                ))
            })?
    } else {
        std::fs::read_to_string(path).map_err(|e| CmdError::Usage(format!("{path}: {e}")))?
    };
    let script = parse_scenario(&text).map_err(|e| CmdError::Failure(e.to_string()))?;
    let report = run_scenario(&script, seed).map_err(|e| CmdError::Failure(e.to_string()))?;
    out.write_all(report.render().as_bytes())?;
    if log {
        writeln!(out, "--- event log ---")?;
        out.write_all(report.log.export_text().as_bytes())?;
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILURE })
}
