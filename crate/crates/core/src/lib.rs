//! Card-based user authentication built on RC4-Pr and textbook RSA.
//!
//! The layers, bottom up:
//!
//! * [`rc4pr`]: RC4 and the per-block rekeyed RC4-Pr stream cipher.
//! * [`rsa`]: textbook RSA with small primes.
//! * [`kdf`]: MD5-based key derivation, authentication messages, signatures.
//! * [`frame`]: the length-prefixed envelope every payload uses.
//! * [`cards`]: the private and public card records.
//! * [`protocol`]: server and client state machines.
//! * [`simnet`]: a deterministic transport with adversary actions and a
//!   scenario runner.
//!
//! None of this is secure by modern standards; the key sizes alone are
//! trivially breakable.

pub mod cards;
pub mod frame;
pub mod kdf;
pub mod protocol;
pub mod rc4pr;
pub mod rsa;
pub mod simnet;
