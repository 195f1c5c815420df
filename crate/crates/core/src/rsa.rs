//! Textbook RSA over small moduli.
//!
//! Unpadded `m^e mod n` with primes of at most 32 bits. This is a teaching
//! construction and offers no real security: keys this size factor instantly
//! and unpadded RSA is malleable and deterministic.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RsaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("{a} has no inverse modulo {m}")]
    NoInverse { a: u64, m: u64 },
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("message {m} is not smaller than the modulus {n}")]
    MessageTooLarge { m: u64, n: u64 },
    #[error("modulus {0} is too small for byte encryption (need n >= 257)")]
    KeyTooSmall(u64),
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(&'static str),
    #[error("invalid key text {0:?}")]
    KeyFormat(String),
}

/// Public half `(n, e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RsaPublicKey {
    pub n: u64,
    pub e: u64,
}

/// Private half `(n, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RsaPrivateKey {
    pub n: u64,
    pub d: u64,
}

impl RsaPublicKey {
    pub fn new(n: u64, e: u64) -> Result<Self, RsaError> {
        if e <= 1 || e >= n {
            return Err(RsaError::InvalidArgument(
                "public exponent must satisfy 1 < e < n",
            ));
        }
        Ok(Self { n, e })
    }
}

impl RsaPrivateKey {
    pub fn new(n: u64, d: u64) -> Result<Self, RsaError> {
        if d <= 1 || d >= n {
            return Err(RsaError::InvalidArgument(
                "private exponent must satisfy 1 < d < n",
            ));
        }
        Ok(Self { n, d })
    }
}

/// Either half of a key pair; encryption and decryption are the same
/// exponentiation with a different exponent.
pub trait RsaKey {
    fn modulus(&self) -> u64;
    fn exponent(&self) -> u64;
}

impl RsaKey for RsaPublicKey {
    fn modulus(&self) -> u64 {
        self.n
    }
    fn exponent(&self) -> u64 {
        self.e
    }
}

impl RsaKey for RsaPrivateKey {
    fn modulus(&self) -> u64 {
        self.n
    }
    fn exponent(&self) -> u64 {
        self.d
    }
}

fn parse_pair(s: &str) -> Result<(u64, u64), RsaError> {
    let err = || RsaError::KeyFormat(s.to_string());
    let (a, b) = s.trim().split_once('-').ok_or_else(err)?;
    let a = a.parse::<u64>().map_err(|_| err())?;
    let b = b.parse::<u64>().map_err(|_| err())?;
    Ok((a, b))
}

// Text form is "n-e" / "n-d", e.g. "75137-7".
impl fmt::Display for RsaPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.n, self.e)
    }
}

impl fmt::Display for RsaPrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.n, self.d)
    }
}

impl FromStr for RsaPublicKey {
    type Err = RsaError;
    fn from_str(s: &str) -> Result<Self, RsaError> {
        let (n, e) = parse_pair(s)?;
        Self::new(n, e).map_err(|_| RsaError::KeyFormat(s.to_string()))
    }
}

impl FromStr for RsaPrivateKey {
    type Err = RsaError;
    fn from_str(s: &str) -> Result<Self, RsaError> {
        let (n, d) = parse_pair(s)?;
        Self::new(n, d).map_err(|_| RsaError::KeyFormat(s.to_string()))
    }
}

/// Everything produced by key generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RsaKeyBundle {
    pub p: u64,
    pub q: u64,
    pub n: u64,
    pub phi: u64,
    pub e: u64,
    pub d: u64,
}

impl RsaKeyBundle {
    pub fn public_key(&self) -> RsaPublicKey {
        RsaPublicKey {
            n: self.n,
            e: self.e,
        }
    }

    pub fn private_key(&self) -> RsaPrivateKey {
        RsaPrivateKey {
            n: self.n,
            d: self.d,
        }
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_unchecked(base: u64, mut exp: u64, modulus: u64) -> u64 {
    let mut result = 1 % modulus;
    let mut b = base % modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_mod(result, b, modulus);
        }
        b = mul_mod(b, b, modulus);
        exp >>= 1;
    }
    result
}

/// Square-and-multiply modular exponentiation.
pub fn mod_pow(base: u64, exp: u64, modulus: u64) -> Result<u64, RsaError> {
    if modulus < 2 {
        return Err(RsaError::InvalidArgument("modulus must be at least 2"));
    }
    Ok(pow_mod_unchecked(base, exp, modulus))
}

/// Deterministic primality test, exact for every `u64`.
pub fn is_prime(x: u64) -> bool {
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if x < 2 {
        return false;
    }
    for p in SMALL {
        if x.is_multiple_of(p) {
            return x == p;
        }
    }
    let mut d = x - 1;
    let mut r = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        r += 1;
    }
    // These bases are a deterministic witness set below 2^64.
    'witness: for a in SMALL {
        let mut y = pow_mod_unchecked(a, d, x);
        if y == 1 || y == x - 1 {
            continue;
        }
        for _ in 1..r {
            y = mul_mod(y, y, x);
            if y == x - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Inverse of `a` modulo `m` by the extended Euclidean algorithm.
pub fn mod_inverse(a: u64, m: u64) -> Result<u64, RsaError> {
    if m == 0 {
        return Err(RsaError::InvalidArgument("modulus must be positive"));
    }
    if m == 1 {
        return Err(RsaError::NoInverse { a, m });
    }
    let (mut old_r, mut r) = (a as i128 % m as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return Err(RsaError::NoInverse { a, m });
    }
    Ok(old_s.rem_euclid(m as i128) as u64)
}

/// Key generation from caller-chosen primes and public exponent.
pub fn generate_keypair(p: u64, q: u64, e: u64) -> Result<RsaKeyBundle, RsaError> {
    if !is_prime(p) || !is_prime(q) {
        return Err(RsaError::KeyGeneration(format!(
            "inputs not prime: p = {p}, q = {q}"
        )));
    }
    if p == q {
        return Err(RsaError::KeyGeneration("p and q must be distinct".into()));
    }
    let n = p
        .checked_mul(q)
        .ok_or_else(|| RsaError::KeyGeneration("modulus overflows 64 bits".into()))?;
    let phi = (p - 1) * (q - 1);
    if e <= 1 || e >= phi || gcd(e, phi) != 1 {
        return Err(RsaError::KeyGeneration(format!(
            "e = {e} must satisfy 1 < e < {phi} and gcd(e, {phi}) = 1"
        )));
    }
    let d = mod_inverse(e, phi)?;
    Ok(RsaKeyBundle { p, q, n, phi, e, d })
}

fn random_prime<R: Rng + ?Sized>(bits: u32, rng: &mut R) -> u64 {
    let lo = 1u64 << (bits - 1);
    let hi = (1u64 << bits) - 1;
    loop {
        let candidate = rng.gen_range(lo..=hi) | 1;
        if is_prime(candidate) {
            return candidate;
        }
    }
}

/// Random key pair whose primes both have exactly `bits` bits, drawing from
/// `rng`. The public exponent is the smallest integer from 3 up that is
/// coprime to `phi`.
pub fn generate_keypair_with_rng<R: Rng + ?Sized>(
    bits: u32,
    rng: &mut R,
) -> Result<RsaKeyBundle, RsaError> {
    if !(8..=32).contains(&bits) {
        return Err(RsaError::InvalidArgument("prime size must be 8..=32 bits"));
    }
    loop {
        let p = random_prime(bits, rng);
        let q = random_prime(bits, rng);
        if p == q {
            continue;
        }
        let phi = (p - 1) * (q - 1);
        let Some(e) = (3..phi).find(|&e| gcd(e, phi) == 1) else {
            continue;
        };
        return generate_keypair(p, q, e);
    }
}

/// Seeded variant of [`generate_keypair_with_rng`].
pub fn generate_keypair_random(bits: u32, seed: u64) -> Result<RsaKeyBundle, RsaError> {
    generate_keypair_with_rng(bits, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn encrypt_int(m: u64, key: &impl RsaKey) -> Result<u64, RsaError> {
    let n = key.modulus();
    if m >= n {
        return Err(RsaError::MessageTooLarge { m, n });
    }
    mod_pow(m, key.exponent(), n)
}

pub fn decrypt_int(c: u64, key: &impl RsaKey) -> Result<u64, RsaError> {
    encrypt_int(c, key)
}

fn bit_len(n: u64) -> usize {
    (u64::BITS - n.leading_zeros()) as usize
}

/// Plaintext chunk width and ciphertext block width in bytes for modulus `n`.
pub fn block_widths(n: u64) -> (usize, usize) {
    let bits = bit_len(n);
    ((bits - 1) / 8, bits.div_ceil(8))
}

fn read_be(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64)
}

fn write_be(value: u64, width: usize, out: &mut Vec<u8>) {
    for shift in (0..width).rev() {
        out.push((value >> (shift * 8)) as u8);
    }
}

/// Byte-string encryption: a 4-byte big-endian plaintext length, then one
/// fixed-width big-endian block per plaintext chunk.
pub fn encrypt_bytes(data: &[u8], key: &impl RsaKey) -> Result<Vec<u8>, RsaError> {
    let n = key.modulus();
    if n < 257 {
        return Err(RsaError::KeyTooSmall(n));
    }
    let len = u32::try_from(data.len())
        .map_err(|_| RsaError::InvalidArgument("input longer than 4 GiB"))?;
    let (ci, co) = block_widths(n);
    let mut out = Vec::with_capacity(4 + data.len().div_ceil(ci) * co);
    out.extend_from_slice(&len.to_be_bytes());
    for chunk in data.chunks(ci) {
        let c = pow_mod_unchecked(read_be(chunk), key.exponent(), n);
        write_be(c, co, &mut out);
    }
    Ok(out)
}

pub fn decrypt_bytes(data: &[u8], key: &impl RsaKey) -> Result<Vec<u8>, RsaError> {
    let n = key.modulus();
    if n < 257 {
        return Err(RsaError::KeyTooSmall(n));
    }
    let (ci, co) = block_widths(n);
    if data.len() < 4 {
        return Err(RsaError::MalformedCiphertext("truncated length header"));
    }
    let (header, body) = data.split_at(4);
    let len = u32::from_be_bytes(header.try_into().expect("4 bytes")) as usize;
    if body.len() % co != 0 {
        return Err(RsaError::MalformedCiphertext("partial ciphertext block"));
    }
    if body.len() / co != len.div_ceil(ci) {
        return Err(RsaError::MalformedCiphertext(
            "declared length does not match block count",
        ));
    }
    let chunk_limit = 1u128 << (8 * ci);
    let mut out = Vec::with_capacity(len);
    let mut remaining = len;
    for block in body.chunks(co) {
        let c = read_be(block);
        if c >= n {
            return Err(RsaError::MalformedCiphertext(
                "block value not below modulus",
            ));
        }
        let m = pow_mod_unchecked(c, key.exponent(), n);
        if m as u128 >= chunk_limit {
            return Err(RsaError::MalformedCiphertext(
                "block does not fit chunk width",
            ));
        }
        let take = remaining.min(ci);
        let mut chunk = Vec::with_capacity(ci);
        write_be(m, ci, &mut chunk);
        if chunk[..ci - take].iter().any(|&b| b != 0) {
            return Err(RsaError::MalformedCiphertext(
                "nonzero padding in final block",
            ));
        }
        out.extend_from_slice(&chunk[ci - take..]);
        remaining -= take;
    }
    Ok(out)
}
