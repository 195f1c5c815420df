//! Byte-substring search for secret material in logged payloads.

use std::collections::BTreeMap;

use crate::cards::render_key_bytes;
use crate::kdf::derive_message_key;
use crate::protocol::Server;

use super::EventLog;

/// Forms shorter than this are skipped; they match too much by chance.
const MIN_FORM_LEN: usize = 4;

/// Every form of every secret seen so far, keyed by the bytes to look for.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SecretSet {
    forms: BTreeMap<Vec<u8>, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub seq: u64,
    pub label: String,
}

impl SecretSet {
    pub fn insert(&mut self, bytes: impl Into<Vec<u8>>, label: impl Into<String>) {
        let bytes = bytes.into();
        if bytes.len() >= MIN_FORM_LEN {
            self.forms.entry(bytes).or_insert_with(|| label.into());
        }
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    fn insert_exponent(&mut self, d: u64, label: &str) {
        self.insert(d.to_string(), format!("{label} (decimal)"));
        self.insert(
            d.to_be_bytes().to_vec(),
            format!("{label} (u64 big-endian)"),
        );
    }

    /// Adds the current PIN, `K`, private exponents and every ordered-pair
    /// `K'` held by the server's registry.
    pub fn record_server(&mut self, server: &Server) {
        let records: Vec<_> = server.state().registry.values().collect();
        for r in &records {
            let k = r.secret_key();
            self.insert(r.pin.as_str(), format!("PIN of {}", r.uid));
            self.insert(k.as_bytes().to_vec(), format!("K of {}", r.uid));
            self.insert(
                render_key_bytes(k.as_bytes()),
                format!("K of {} (text)", r.uid),
            );
            self.insert_exponent(r.user_keys.d, &format!("private exponent of {}", r.uid));
            self.insert_exponent(
                r.server_keys.d,
                &format!("server private exponent for {}", r.uid),
            );
            for other in &records {
                if other.uid != r.uid {
                    let kp = derive_message_key(&other.uid, &k);
                    self.insert(
                        kp.as_bytes().to_vec(),
                        format!("K' {} -> {}", r.uid, other.uid),
                    );
                }
            }
        }
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Every (entry, secret) pair where the secret occurs verbatim.
pub fn scan(log: &EventLog, secrets: &SecretSet) -> Vec<Finding> {
    let mut out = Vec::new();
    for entry in log.entries() {
        for (form, label) in &secrets.forms {
            if contains(entry.payload(), form) {
                out.push(Finding {
                    seq: entry.seq,
                    label: label.clone(),
                });
            }
        }
    }
    out
}
