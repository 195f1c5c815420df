//! Hashing, key derivation, authentication messages and the double-RSA
//! message signature.
//!
//! Every hash is MD5. MD5 is broken for collision resistance; it is used here
//! because the scheme needs a 128-bit digest that doubles as an RC4-Pr key.

use std::fmt;
use std::str::FromStr;

use md5::{Digest, Md5};
use thiserror::Error;

use crate::frame::{self, FrameError};
use crate::rc4pr::{rc4pr_apply, RoundKey};
use crate::rsa::{decrypt_bytes, encrypt_bytes, RsaError, RsaPrivateKey, RsaPublicKey};

/// Byte placed between concatenated hash inputs.
pub const FIELD_SEPARATOR: u8 = 0x1F;

pub const DIGEST_LEN: usize = 16;

pub type Digest16 = [u8; DIGEST_LEN];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KdfError {
    #[error("field {0} contains the 0x1F separator byte")]
    InvalidField(usize),
}

pub fn hash_h(data: &[u8]) -> Digest16 {
    Md5::digest(data).into()
}

/// UTF-8 fields joined by single 0x1F bytes.
pub fn canonical_concat(fields: &[&str]) -> Result<Vec<u8>, KdfError> {
    let mut out = Vec::new();
    for (index, field) in fields.iter().enumerate() {
        if field.as_bytes().contains(&FIELD_SEPARATOR) {
            return Err(KdfError::InvalidField(index));
        }
        if index > 0 {
            out.push(FIELD_SEPARATOR);
        }
        out.extend_from_slice(field.as_bytes());
    }
    Ok(out)
}

/// A user's authentication code, shown as unsigned decimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AuthCode(pub u64);

impl fmt::Display for AuthCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid auth code {0:?}")]
pub struct AuthCodeParseError(pub String);

impl FromStr for AuthCode {
    type Err = AuthCodeParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // Digits only, no leading zeros: one text form per value.
        let canonical = !s.is_empty()
            && s.bytes().all(|b| b.is_ascii_digit())
            && (s.len() == 1 || !s.starts_with('0'));
        if !canonical {
            return Err(AuthCodeParseError(s.to_string()));
        }
        s.parse()
            .map(AuthCode)
            .map_err(|_| AuthCodeParseError(s.to_string()))
    }
}

/// A 128-bit symmetric key: the user/server secret or a per-recipient message key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretKey(pub [u8; 16]);

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", hex::encode(self.0))
    }
}

impl SecretKey {
    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn round_key(&self) -> RoundKey {
        RoundKey::new(self.0)
    }
}

/// Milliseconds on the simulation clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn to_be_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreshnessWindow {
    pub max_delay_ms: u64,
}

impl FreshnessWindow {
    pub const DEFAULT_MS: u64 = 120_000;

    pub fn new(max_delay_ms: u64) -> Self {
        assert!(max_delay_ms > 0, "freshness window must be positive");
        Self { max_delay_ms }
    }
}

impl Default for FreshnessWindow {
    fn default() -> Self {
        Self::new(Self::DEFAULT_MS)
    }
}

/// `h(uid || pin || email || mobile)`, truncated to the first eight digest
/// bytes read big-endian.
pub fn compute_outh_code(
    uid: &str,
    pin: &str,
    email: &str,
    mobile: &str,
) -> Result<AuthCode, KdfError> {
    let digest = hash_h(&canonical_concat(&[uid, pin, email, mobile])?);
    Ok(AuthCode(u64::from_be_bytes(
        digest[..8].try_into().expect("8 bytes"),
    )))
}

/// `K = MD5(uid || pin)`.
pub fn derive_secret_key(uid: &str, pin: &str) -> Result<SecretKey, KdfError> {
    Ok(SecretKey(hash_h(&canonical_concat(&[uid, pin])?)))
}

/// `K' = h(recipient_id || K)`.
pub fn derive_message_key(recipient_id: &str, k: &SecretKey) -> SecretKey {
    let mut input = Vec::with_capacity(recipient_id.len() + 17);
    input.extend_from_slice(recipient_id.as_bytes());
    input.push(FIELD_SEPARATOR);
    input.extend_from_slice(&k.0);
    SecretKey(hash_h(&input))
}

/// `M = (uid || outh-code || T1)` together with `h(M)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthMessage {
    pub uid: String,
    pub outh_code: AuthCode,
    pub t1: Timestamp,
    pub digest: Digest16,
}

/// Why an authentication message was turned away.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuthRejection {
    #[error("malformed authentication message: {0}")]
    Malformed(String),
    #[error("digest mismatch")]
    DigestMismatch,
    #[error("stale timestamp (delay {delay_ms} ms)")]
    Stale { delay_ms: i128 },
    #[error("wrong auth code")]
    WrongAuthCode,
}

fn auth_body(uid: &str, outh: AuthCode, t1: Timestamp) -> Vec<u8> {
    frame::encode(&[uid.as_bytes(), &outh.0.to_be_bytes(), &t1.to_be_bytes()])
}

pub fn build_auth_message(uid: &str, outh: AuthCode, t1: Timestamp) -> AuthMessage {
    AuthMessage {
        uid: uid.to_string(),
        outh_code: outh,
        t1,
        digest: hash_h(&auth_body(uid, outh, t1)),
    }
}

impl AuthMessage {
    /// Plaintext wire form `M || h(M)`: the framed fields followed by the
    /// raw 16-byte digest.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = auth_body(&self.uid, self.outh_code, self.t1);
        out.extend_from_slice(&self.digest);
        out
    }

    /// Parses `M || h(M)`. The digest is checked before the frame is
    /// parsed, so any corruption surfaces as [`AuthRejection::DigestMismatch`].
    pub fn decode(bytes: &[u8]) -> Result<Self, AuthRejection> {
        if bytes.len() < frame::HEADER_LEN + DIGEST_LEN {
            return Err(AuthRejection::Malformed("too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if hash_h(body)[..] != digest[..] {
            return Err(AuthRejection::DigestMismatch);
        }
        let malformed = |e: FrameError| AuthRejection::Malformed(e.to_string());
        let fields = frame::decode(body, 3).map_err(malformed)?;
        Ok(AuthMessage {
            uid: fields.text(0).map_err(malformed)?.to_string(),
            outh_code: AuthCode(fields.u64(1).map_err(malformed)?),
            t1: Timestamp(fields.u64(2).map_err(malformed)?),
            digest: digest.try_into().expect("16 bytes"),
        })
    }
}

/// `C = RC4-Pr(M || h(M), K)`.
pub fn seal_auth_message(m: &AuthMessage, k: &SecretKey) -> Vec<u8> {
    rc4pr_apply(&k.round_key(), &m.encode())
}

/// Decrypts and checks integrity only.
pub fn open_sealed(sealed: &[u8], k: &SecretKey) -> Result<AuthMessage, AuthRejection> {
    AuthMessage::decode(&rc4pr_apply(&k.round_key(), sealed))
}

/// `0 <= tc - t1 <= window`.
pub fn verify_freshness(t1: Timestamp, tc: Timestamp, w: FreshnessWindow) -> bool {
    tc.0 >= t1.0 && tc.0 - t1.0 <= w.max_delay_ms
}

/// Freshness and auth-code checks on an already decoded message.
pub fn check_auth_message(
    m: &AuthMessage,
    tc: Timestamp,
    w: FreshnessWindow,
    expected_outh: AuthCode,
) -> Result<(), AuthRejection> {
    if !verify_freshness(m.t1, tc, w) {
        return Err(AuthRejection::Stale {
            delay_ms: tc.0 as i128 - m.t1.0 as i128,
        });
    }
    if m.outh_code != expected_outh {
        return Err(AuthRejection::WrongAuthCode);
    }
    Ok(())
}

pub fn verify_auth_message(
    sealed: &[u8],
    k: &SecretKey,
    tc: Timestamp,
    w: FreshnessWindow,
    expected_outh: AuthCode,
) -> Result<AuthMessage, AuthRejection> {
    let m = open_sealed(sealed, k)?;
    check_auth_message(&m, tc, w, expected_outh)?;
    Ok(m)
}

/// The u-signature payload: sender id, message digest, message key, send time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureBlock {
    pub sender_uid: String,
    pub msg_digest: Digest16,
    pub message_key: SecretKey,
    pub t1: Timestamp,
}

impl SignatureBlock {
    pub fn encode(&self) -> Vec<u8> {
        frame::encode(&[
            self.sender_uid.as_bytes(),
            &self.msg_digest,
            &self.message_key.0,
            &self.t1.to_be_bytes(),
        ])
    }

    /// "Readable" means the magic is present and every field parses at its
    /// declared width.
    pub fn decode(bytes: &[u8]) -> Result<Self, FrameError> {
        let fields = frame::decode(bytes, 4)?;
        Ok(SignatureBlock {
            sender_uid: fields.text(0)?.to_string(),
            msg_digest: fields.fixed(1)?,
            message_key: SecretKey(fields.fixed(2)?),
            t1: Timestamp(fields.u64(3)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureLayer {
    /// Recipient-key layer.
    Outer,
    /// Sender-key layer.
    Inner,
}

impl fmt::Display for SignatureLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignatureLayer::Outer => "outer",
            SignatureLayer::Inner => "inner",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unreadable signature at {layer} layer: {detail}")]
pub struct UnreadableSignature {
    pub layer: SignatureLayer,
    pub detail: String,
}

/// `auth-dtl = E(E(uid || h(msg) || K' || T1, PR_sender), PUB_recipient)`.
pub fn sign_message(
    sender_uid: &str,
    msg: &[u8],
    kprime: &SecretKey,
    t1: Timestamp,
    sender_priv: &RsaPrivateKey,
    recipient_pub: &RsaPublicKey,
) -> Result<Vec<u8>, RsaError> {
    let block = SignatureBlock {
        sender_uid: sender_uid.to_string(),
        msg_digest: hash_h(msg),
        message_key: *kprime,
        t1,
    };
    let inner = encrypt_bytes(&block.encode(), sender_priv)?;
    encrypt_bytes(&inner, recipient_pub)
}

/// `D1 = D(auth-dtl, PR_recipient)`, `D2 = D(D1, PUB_sender)`.
pub fn open_signature(
    auth_dtl: &[u8],
    recipient_priv: &RsaPrivateKey,
    sender_pub: &RsaPublicKey,
) -> Result<SignatureBlock, UnreadableSignature> {
    let d1 = decrypt_bytes(auth_dtl, recipient_priv).map_err(|e| UnreadableSignature {
        layer: SignatureLayer::Outer,
        detail: e.to_string(),
    })?;
    let inner = |detail: String| UnreadableSignature {
        layer: SignatureLayer::Inner,
        detail,
    };
    let d2 = decrypt_bytes(&d1, sender_pub).map_err(|e| inner(e.to_string()))?;
    SignatureBlock::decode(&d2).map_err(|e| inner(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_examples() {
        assert_eq!(
            canonical_concat(&["a", "b"]).unwrap(),
            vec![0x61, 0x1F, 0x62]
        );
        assert_ne!(
            canonical_concat(&["ab", ""]).unwrap(),
            canonical_concat(&["a", "b"]).unwrap()
        );
        assert!(canonical_concat(&[]).unwrap().is_empty());
        assert_eq!(
            canonical_concat(&["ok", "bad\u{1f}"]).unwrap_err(),
            KdfError::InvalidField(1)
        );
    }

    #[test]
    fn freshness_boundaries() {
        let w = FreshnessWindow::new(1000);
        let t1 = Timestamp(5000);
        assert!(verify_freshness(t1, Timestamp(5000), w));
        assert!(verify_freshness(t1, Timestamp(5999), w));
        assert!(verify_freshness(t1, Timestamp(6000), w));
        assert!(!verify_freshness(t1, Timestamp(6001), w));
        assert!(!verify_freshness(t1, Timestamp(4999), w));
        assert_eq!(FreshnessWindow::default().max_delay_ms, 120_000);
    }

    #[test]
    fn auth_digest_depends_on_time() {
        let a = build_auth_message("user1", AuthCode(7), Timestamp(10));
        let b = build_auth_message("user1", AuthCode(7), Timestamp(11));
        assert_eq!(a, build_auth_message("user1", AuthCode(7), Timestamp(10)));
        assert_ne!(a.digest, b.digest);
    }

    #[test]
    fn auth_code_text() {
        assert_eq!(
            AuthCode(3076315706752804757).to_string(),
            "3076315706752804757"
        );
        assert_eq!("0".parse::<AuthCode>().unwrap(), AuthCode(0));
        assert!("012".parse::<AuthCode>().is_err());
        assert!("+12".parse::<AuthCode>().is_err());
        assert!("-12".parse::<AuthCode>().is_err());
        assert_eq!(
            u64::MAX.to_string().parse::<AuthCode>().unwrap(),
            AuthCode(u64::MAX)
        );
    }

    #[test]
    fn verify_reasons() {
        let k = derive_secret_key("user1", "Ab12Cd").unwrap();
        let outh = AuthCode(42);
        let m = build_auth_message("user1", outh, Timestamp(1_000));
        let sealed = seal_auth_message(&m, &k);
        let w = FreshnessWindow::new(500);
        assert_eq!(
            verify_auth_message(&sealed, &k, Timestamp(1_000), w, outh).unwrap(),
            m
        );
        assert_eq!(
            verify_auth_message(&sealed, &k, Timestamp(1_501), w, outh).unwrap_err(),
            AuthRejection::Stale { delay_ms: 501 }
        );
        assert_eq!(
            verify_auth_message(&sealed, &k, Timestamp(1_000), w, AuthCode(43)).unwrap_err(),
            AuthRejection::WrongAuthCode
        );
        assert!(matches!(
            verify_auth_message(&sealed[..10], &k, Timestamp(1_000), w, outh).unwrap_err(),
            AuthRejection::Malformed(_)
        ));
    }

    #[test]
    fn signature_block_rejects_bad_widths() {
        let bad = frame::encode(&[&b"u"[..], &[0u8; 15][..], &[0u8; 16][..], &[0u8; 8][..]]);
        assert!(matches!(
            SignatureBlock::decode(&bad),
            Err(FrameError::FieldWidth { index: 1, .. })
        ));
    }
}
