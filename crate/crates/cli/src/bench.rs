//! Per-file RC4-Pr timing report.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use cardauth_core::rc4pr::{rc4pr_apply_counted, RoundKey};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub path: String,
    pub size_bytes: u64,
    pub duration_ms: f64,
    pub subkeys: u64,
    pub rate_bytes_per_ms: f64,
    /// Set when the file could not be read; the numeric fields are then zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTotals {
    pub files: usize,
    pub size_bytes: u64,
    pub duration_ms: f64,
    pub subkeys: u64,
    pub rate_bytes_per_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub total: BenchTotals,
}

fn rate(size: u64, duration_ms: f64) -> f64 {
    size as f64 / duration_ms
}

fn measure(path: &Path, key: &RoundKey) -> BenchRow {
    let display = path.display().to_string();
    match std::fs::read(path) {
        Ok(data) => {
            let start = Instant::now();
            let (cipher, subkeys) = rc4pr_apply_counted(key, &data);
            let duration_ms = start.elapsed().as_secs_f64() * 1000.0;
            std::hint::black_box(cipher);
            let size_bytes = data.len() as u64;
            BenchRow {
                path: display,
                size_bytes,
                duration_ms,
                subkeys,
                rate_bytes_per_ms: rate(size_bytes, duration_ms),
                error: None,
            }
        }
        Err(e) => BenchRow {
            path: display,
            size_bytes: 0,
            duration_ms: 0.0,
            subkeys: 0,
            rate_bytes_per_ms: 0.0,
            error: Some(e.to_string()),
        },
    }
}

impl BenchReport {
    pub fn from_rows(rows: Vec<BenchRow>) -> Self {
        let ok = rows.iter().filter(|r| r.error.is_none());
        let (size_bytes, duration_ms, subkeys) = ok.fold((0u64, 0f64, 0u64), |(s, d, k), r| {
            (s + r.size_bytes, d + r.duration_ms, k + r.subkeys)
        });
        let total = BenchTotals {
            files: rows.len(),
            size_bytes,
            duration_ms,
            subkeys,
            rate_bytes_per_ms: rate(size_bytes, duration_ms),
        };
        Self { rows, total }
    }

    pub fn failed(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (i, r) in self.rows.iter().enumerate() {
            writeln!(out, "=====File # [{}] =====", i + 1).unwrap();
            if let Some(e) = &r.error {
                writeln!(out, "FAILED: {}: {e}", r.path).unwrap();
                continue;
            }
            writeln!(out, "The file size: {} Bytes", r.size_bytes).unwrap();
            writeln!(out, "Encryption duration time: {} MS", r.duration_ms).unwrap();
            writeln!(out, "The number of subkeys: {}", r.subkeys).unwrap();
            writeln!(
                out,
                "Byte's encryption rate: {} Bytes/MS",
                r.rate_bytes_per_ms
            )
            .unwrap();
        }
        let t = &self.total;
        writeln!(out, "=====Total Result of encrypt {} files=====", t.files).unwrap();
        writeln!(out, "The total files size: {} Bytes", t.size_bytes).unwrap();
        writeln!(
            out,
            "The total Encryption duration time: {} MS",
            t.duration_ms
        )
        .unwrap();
        writeln!(out, "The total number of subkeys: {}", t.subkeys).unwrap();
        writeln!(
            out,
            "Byte's encryption rate: {} Bytes/MS",
            t.rate_bytes_per_ms
        )
        .unwrap();
        out
    }
}

/// Encrypts every file in turn. Unreadable files become failed rows.
pub fn run_bench(paths: &[impl AsRef<Path>], key: &RoundKey) -> BenchReport {
    BenchReport::from_rows(paths.iter().map(|p| measure(p.as_ref(), key)).collect())
}
