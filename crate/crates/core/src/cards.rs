//! Private and public user cards and their `name =====> value` text form.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::frame::{self, FrameError};
use crate::kdf::{AuthCode, SecretKey};
use crate::rc4pr::rc4pr_apply;
use crate::rsa::{RsaPrivateKey, RsaPublicKey};

pub const ARROW: &str = "=====>";
pub const PIN_LEN: usize = 6;
pub const PIN_ALPHABET: &[u8; 62] =
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CardError {
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("expected field {expected}, found {found:?}")]
    OutOfOrder {
        expected: &'static str,
        found: String,
    },
    #[error("unexpected field {0:?}")]
    UnexpectedField(String),
    #[error("malformed {field}: {reason}")]
    Malformed { field: &'static str, reason: String },
    #[error("card kind cannot be determined")]
    UnknownKind,
    #[error("continuation line before any field")]
    DanglingContinuation,
    #[error("card blob: {0}")]
    Frame(#[from] FrameError),
}

/// Six case-sensitive characters from `[A-Za-z0-9]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pin(String);

impl Pin {
    pub fn new(text: &str) -> Result<Self, CardError> {
        let malformed = |reason: &str| CardError::Malformed {
            field: "pin_code",
            reason: reason.to_string(),
        };
        if text.chars().count() != PIN_LEN {
            return Err(malformed("length must be 6"));
        }
        if !text.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(malformed("characters must be A-Z, a-z or 0-9"));
        }
        Ok(Self(text.to_string()))
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let pin = (0..PIN_LEN)
            .map(|_| PIN_ALPHABET[rng.gen_range(0..PIN_ALPHABET.len())] as char)
            .collect();
        Self(pin)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// The user's secret card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateCard {
    pub user_id: String,
    pub user_mobile_number: String,
    pub user_email: String,
    pub outh_code: AuthCode,
    pub pin_code: Pin,
    pub s_key: SecretKey,
    pub server_pub: RsaPublicKey,
    pub pr_key: RsaPrivateKey,
    pub pub_key: RsaPublicKey,
}

/// The card a user hands to correspondents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicCard {
    pub user_id: String,
    pub user_name: String,
    pub user_mobile_number: String,
    pub user_email: String,
    pub pub_key: RsaPublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Card {
    Private(PrivateCard),
    Public(PublicCard),
}

/// `48_102_192_...`, one decimal per key byte.
pub fn render_key_bytes(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join("_")
}

fn line(out: &mut String, name: &str, value: impl std::fmt::Display) {
    writeln!(out, "{name} {ARROW} {value}").expect("write to String");
}

impl PrivateCard {
    /// Mobile and email lines are left out when empty, which is how the
    /// printed card form shows them.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        line(&mut out, "User_Id", &self.user_id);
        if !self.user_mobile_number.is_empty() {
            line(&mut out, "User_Mobile_Number", &self.user_mobile_number);
        }
        if !self.user_email.is_empty() {
            line(&mut out, "User_Email", &self.user_email);
        }
        line(&mut out, "outh_code", self.outh_code);
        line(&mut out, "pin_code", self.pin_code.as_str());
        line(&mut out, "S_Key", render_key_bytes(self.s_key.as_bytes()));
        line(&mut out, "server_pub_key", self.server_pub);
        line(&mut out, "private_key", self.pr_key);
        line(&mut out, "public_key", self.pub_key);
        out
    }

    pub fn parse(text: &str) -> Result<Self, CardError> {
        match parse_card(text)? {
            Card::Private(card) => Ok(card),
            Card::Public(_) => Err(CardError::MissingField("pin_code")),
        }
    }

    /// The shareable subset, plus the display name held by the server.
    pub fn public_card(&self, user_name: &str) -> PublicCard {
        PublicCard {
            user_id: self.user_id.clone(),
            user_name: user_name.to_string(),
            user_mobile_number: self.user_mobile_number.clone(),
            user_email: self.user_email.clone(),
            pub_key: self.pub_key,
        }
    }
}

impl PublicCard {
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        line(&mut out, "User_Id", &self.user_id);
        line(&mut out, "User_Name", &self.user_name);
        line(&mut out, "User_Mobile_Number", &self.user_mobile_number);
        line(&mut out, "User_Email", &self.user_email);
        line(&mut out, "public_key", self.pub_key);
        out
    }

    pub fn parse(text: &str) -> Result<Self, CardError> {
        match parse_card(text)? {
            Card::Public(card) => Ok(card),
            Card::Private(_) => Err(CardError::MissingField("User_Name")),
        }
    }
}

impl Card {
    pub fn serialize(&self) -> String {
        match self {
            Card::Private(c) => c.serialize(),
            Card::Public(c) => c.serialize(),
        }
    }
}

pub fn serialize_card(card: &Card) -> String {
    card.serialize()
}

const PRIVATE_ORDER: [(&str, bool); 9] = [
    ("User_Id", false),
    ("User_Mobile_Number", true),
    ("User_Email", true),
    ("outh_code", false),
    ("pin_code", false),
    ("S_Key", false),
    ("server_pub_key", false),
    ("private_key", false),
    ("public_key", false),
];

const PUBLIC_ORDER: [(&str, bool); 5] = [
    ("User_Id", false),
    ("User_Name", false),
    ("User_Mobile_Number", false),
    ("User_Email", false),
    ("public_key", false),
];

/// Splits into `(name, value)` entries. A line without the arrow continues
/// the previous value, which lets wrapped key listings parse.
fn entries(text: &str) -> Result<Vec<(String, String)>, CardError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for raw in text.lines() {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        match raw.split_once(ARROW) {
            Some((name, value)) => out.push((name.trim().to_string(), value.trim().to_string())),
            None => match out.last_mut() {
                Some((_, value)) => value.push_str(raw),
                None => return Err(CardError::DanglingContinuation),
            },
        }
    }
    Ok(out)
}

fn take_in_order(
    entries: Vec<(String, String)>,
    order: &[(&'static str, bool)],
) -> Result<Vec<String>, CardError> {
    let mut values = Vec::with_capacity(order.len());
    let mut iter = entries.into_iter().peekable();
    for &(name, optional) in order {
        match iter.peek() {
            Some((found, _)) if found == name => {
                values.push(iter.next().expect("peeked").1);
            }
            _ if optional => values.push(String::new()),
            Some((found, _)) => {
                return Err(CardError::OutOfOrder {
                    expected: name,
                    found: found.clone(),
                })
            }
            None => return Err(CardError::MissingField(name)),
        }
    }
    if let Some((extra, _)) = iter.next() {
        return Err(CardError::UnexpectedField(extra));
    }
    Ok(values)
}

fn text_value(field: &'static str, value: String, required: bool) -> Result<String, CardError> {
    if required && value.is_empty() {
        return Err(CardError::Malformed {
            field,
            reason: "empty".into(),
        });
    }
    Ok(value)
}

fn parse_value<T: std::str::FromStr>(field: &'static str, value: &str) -> Result<T, CardError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| CardError::Malformed {
        field,
        reason: e.to_string(),
    })
}

fn parse_key_bytes(value: &str) -> Result<SecretKey, CardError> {
    let malformed = |reason: String| CardError::Malformed {
        field: "S_Key",
        reason,
    };
    let bytes = value
        .split('_')
        .map(|part| {
            part.parse::<u8>()
                .map_err(|e| malformed(format!("{part:?}: {e}")))
        })
        .collect::<Result<Vec<u8>, _>>()?;
    let bytes: [u8; 16] = bytes
        .try_into()
        .map_err(|b: Vec<u8>| malformed(format!("expected 16 bytes, found {}", b.len())))?;
    Ok(SecretKey(bytes))
}

/// Parses either card kind; the kind is inferred from its fields.
pub fn parse_card(text: &str) -> Result<Card, CardError> {
    let entries = entries(text)?;
    let has = |name: &str| entries.iter().any(|(n, _)| n == name);
    if has("User_Name") {
        let mut v = take_in_order(entries, &PUBLIC_ORDER)?.into_iter();
        let mut next = || v.next().expect("one value per field");
        return Ok(Card::Public(PublicCard {
            user_id: text_value("User_Id", next(), true)?,
            user_name: text_value("User_Name", next(), true)?,
            user_mobile_number: next(),
            user_email: next(),
            pub_key: parse_value("public_key", &next())?,
        }));
    }
    if !has("pin_code") {
        return Err(CardError::UnknownKind);
    }
    let mut v = take_in_order(entries, &PRIVATE_ORDER)?.into_iter();
    let mut next = || v.next().expect("one value per field");
    let card = PrivateCard {
        user_id: text_value("User_Id", next(), true)?,
        user_mobile_number: next(),
        user_email: next(),
        outh_code: parse_value("outh_code", &next())?,
        pin_code: Pin::new(&next())?,
        s_key: parse_key_bytes(&next())?,
        server_pub: parse_value("server_pub_key", &next())?,
        pr_key: parse_value("private_key", &next())?,
        pub_key: parse_value("public_key", &next())?,
    };
    if card.pr_key.n != card.pub_key.n {
        return Err(CardError::Malformed {
            field: "private_key",
            reason: "modulus differs from public_key".into(),
        });
    }
    Ok(Card::Private(card))
}

/// RC4-Pr over the framed card text.
pub fn encrypt_private_card(card: &PrivateCard, k: &SecretKey) -> Vec<u8> {
    let framed = frame::encode(&[card.serialize().as_bytes()]);
    rc4pr_apply(&k.round_key(), &framed)
}

pub fn decrypt_private_card(blob: &[u8], k: &SecretKey) -> Result<PrivateCard, CardError> {
    let framed = rc4pr_apply(&k.round_key(), blob);
    let fields = frame::decode(&framed, 1)?;
    PrivateCard::parse(fields.text(0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pin_validation() {
        assert!(Pin::new("ZTMw9G").is_ok());
        assert!(matches!(
            Pin::new("AB1"),
            Err(CardError::Malformed {
                field: "pin_code",
                ..
            })
        ));
        assert!(Pin::new("ZTMw9!").is_err());
        assert!(Pin::new("ZTMw9GG").is_err());
        assert!(Pin::new("ZTMw9é").is_err());
    }

    #[test]
    fn key_bytes_render() {
        assert_eq!(render_key_bytes(&[48, 102, 192]), "48_102_192");
        assert!(parse_key_bytes("1_2_3").is_err());
        assert!(parse_key_bytes(&["256"; 16].join("_")).is_err());
    }

    #[test]
    fn unknown_kind() {
        assert_eq!(
            parse_card("User_Id =====> x\n").unwrap_err(),
            CardError::UnknownKind
        );
        assert_eq!(
            parse_card("12_13\n").unwrap_err(),
            CardError::DanglingContinuation
        );
    }
}
