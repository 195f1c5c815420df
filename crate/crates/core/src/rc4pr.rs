//! RC4 and the block-rekeyed RC4-Pr variant.
//!
//! Plain RC4 is the usual KSA followed by PRGA, with `C = M ^ Z`. RC4-Pr splits
//! the input into 16-byte blocks and keys a fresh RC4 instance for every block.
//! The per-block keys form a chain: each one is the byte permutation `Pr` of
//! the previous, starting from `Pr(master)`.

use std::fmt;

use thiserror::Error;

/// Size of the RC4 state table.
pub const STATE_LEN: usize = 256;

/// Size of an RC4-Pr round key and of one RC4-Pr data block.
pub const BLOCK_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CipherError {
    #[error("invalid key length {0}: expected 1..=256 bytes")]
    InvalidKeyLength(usize),
    #[error("invalid round key length {0}: expected exactly 16 bytes")]
    InvalidRoundKeyLength(usize),
}

/// RC4 state: the permutation `S` and the two PRGA indices.
#[derive(Clone, PartialEq, Eq)]
pub struct StateTable {
    s: [u8; STATE_LEN],
    i: u8,
    j: u8,
}

impl fmt::Debug for StateTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateTable")
            .field("i", &self.i)
            .field("j", &self.j)
            .finish_non_exhaustive()
    }
}

impl StateTable {
    /// Runs the key scheduling algorithm. Keys shorter than 256 bytes are
    /// repeated (`K[i mod keylen]`).
    pub fn new(key: &[u8]) -> Result<Self, CipherError> {
        if key.is_empty() || key.len() > STATE_LEN {
            return Err(CipherError::InvalidKeyLength(key.len()));
        }
        let mut s = [0u8; STATE_LEN];
        for (idx, slot) in s.iter_mut().enumerate() {
            *slot = idx as u8;
        }
        let mut j: u8 = 0;
        for i in 0..STATE_LEN {
            j = j.wrapping_add(s[i]).wrapping_add(key[i % key.len()]);
            s.swap(i, j as usize);
        }
        Ok(Self { s, i: 0, j: 0 })
    }

    pub fn permutation(&self) -> &[u8; STATE_LEN] {
        &self.s
    }

    pub fn indices(&self) -> (u8, u8) {
        (self.i, self.j)
    }

    #[inline]
    fn next_byte(&mut self) -> u8 {
        self.i = self.i.wrapping_add(1);
        self.j = self.j.wrapping_add(self.s[self.i as usize]);
        self.s.swap(self.i as usize, self.j as usize);
        let idx = self.s[self.i as usize].wrapping_add(self.s[self.j as usize]);
        self.s[idx as usize]
    }

    /// Emits the next `n` keystream bytes.
    pub fn keystream(&mut self, n: usize) -> Vec<u8> {
        (0..n).map(|_| self.next_byte()).collect()
    }

    /// XORs the keystream into `data` in place.
    pub fn apply_in_place(&mut self, data: &mut [u8]) {
        for byte in data {
            *byte ^= self.next_byte();
        }
    }
}

pub fn ksa(key: &[u8]) -> Result<StateTable, CipherError> {
    StateTable::new(key)
}

pub fn keystream(state: &mut StateTable, n: usize) -> Vec<u8> {
    state.keystream(n)
}

/// Plain RC4. Encryption and decryption are the same operation.
pub fn rc4_apply(key: &[u8], data: &[u8]) -> Result<Vec<u8>, CipherError> {
    let mut state = StateTable::new(key)?;
    let mut out = data.to_vec();
    state.apply_in_place(&mut out);
    Ok(out)
}

/// A 128-bit RC4-Pr key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoundKey([u8; BLOCK_LEN]);

impl fmt::Debug for RoundKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RoundKey({})", hex::encode(self.0))
    }
}

impl RoundKey {
    pub const fn new(bytes: [u8; BLOCK_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CipherError> {
        <[u8; BLOCK_LEN]>::try_from(bytes)
            .map(Self)
            .map_err(|_| CipherError::InvalidRoundKeyLength(bytes.len()))
    }

    pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.0
    }
}

impl From<[u8; BLOCK_LEN]> for RoundKey {
    fn from(bytes: [u8; BLOCK_LEN]) -> Self {
        Self(bytes)
    }
}

/// The Pr byte permutation.
///
/// First pass permutes an index table `S = (0..n)` KSA-style, with the index
/// update taken mod `n - 1` and `j` starting at 0. Second pass swaps
/// `K[i]` with `K[S[i]]` for ascending `i`.
#[allow(clippy::needless_range_loop)]
pub fn pr_permute(key: &RoundKey) -> RoundKey {
    const N: usize = BLOCK_LEN;
    let mut k = key.0;
    let mut s: [usize; N] = std::array::from_fn(|i| i);
    let mut j = 0usize;
    for i in 0..N {
        j = (j + s[i] + k[i] as usize) % (N - 1);
        s.swap(i, j);
    }
    for i in 0..N {
        k.swap(i, s[i]);
    }
    RoundKey(k)
}

/// Number of round keys consumed for `length_bytes` of input: `ceil(len / 16)`,
/// with an empty input still scheduling one round.
pub fn count_subkeys(length_bytes: u64) -> u64 {
    length_bytes.div_ceil(BLOCK_LEN as u64).max(1)
}

/// Round key for block `index`: `Pr` applied `index + 1` times to `master`.
pub fn subkey_at(master: &RoundKey, index: u64) -> RoundKey {
    SubkeySchedule::new(*master)
        .nth(index as usize)
        .expect("subkey schedule is unbounded")
}

/// Lazily generated chain of round keys.
#[derive(Debug, Clone)]
pub struct SubkeySchedule {
    master: RoundKey,
    current: RoundKey,
    produced: u64,
}

impl SubkeySchedule {
    pub fn new(master: RoundKey) -> Self {
        Self {
            master,
            current: master,
            produced: 0,
        }
    }

    pub fn master(&self) -> &RoundKey {
        &self.master
    }

    /// How many round keys have been handed out so far.
    pub fn produced(&self) -> u64 {
        self.produced
    }
}

impl Iterator for SubkeySchedule {
    type Item = RoundKey;

    fn next(&mut self) -> Option<RoundKey> {
        self.current = pr_permute(&self.current);
        self.produced += 1;
        Some(self.current)
    }
}

/// RC4-Pr transform with the number of round keys it consumed.
pub fn rc4pr_apply_counted(master: &RoundKey, data: &[u8]) -> (Vec<u8>, u64) {
    let mut out = data.to_vec();
    let mut schedule = SubkeySchedule::new(*master);
    if out.is_empty() {
        // The empty message still schedules its single round.
        schedule.next();
    }
    for block in out.chunks_mut(BLOCK_LEN) {
        let round_key = schedule.next().expect("unbounded");
        let mut state = StateTable::new(round_key.as_bytes()).expect("16-byte key");
        // A full 16-byte keystream is generated; only the prefix is used on the tail block.
        let stream = state.keystream(BLOCK_LEN);
        for (byte, z) in block.iter_mut().zip(stream) {
            *byte ^= z;
        }
    }
    (out, schedule.produced())
}

/// RC4-Pr. Self-inverse.
pub fn rc4pr_apply(master: &RoundKey, data: &[u8]) -> Vec<u8> {
    rc4pr_apply_counted(master, data).0
}

/// RC4-Pr over a raw key slice, for callers holding unvalidated key bytes.
pub fn rc4pr_apply_slice(master: &[u8], data: &[u8]) -> Result<Vec<u8>, CipherError> {
    Ok(rc4pr_apply(&RoundKey::from_slice(master)?, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ksa_rejects_bad_lengths() {
        assert_eq!(ksa(&[]).unwrap_err(), CipherError::InvalidKeyLength(0));
        assert_eq!(
            ksa(&[0u8; 257]).unwrap_err(),
            CipherError::InvalidKeyLength(257)
        );
        assert!(ksa(&[7u8; 256]).is_ok());
    }

    #[test]
    fn zero_key_state_is_permutation() {
        let st = ksa(&[0u8; 16]).unwrap();
        let mut seen = [false; 256];
        for &b in st.permutation() {
            seen[b as usize] = true;
        }
        assert!(seen.iter().all(|&x| x));
        assert_eq!(st.indices(), (0, 0));
    }

    #[test]
    fn keystream_zero_leaves_state() {
        let mut st = ksa(b"Key").unwrap();
        let before = st.clone();
        assert!(keystream(&mut st, 0).is_empty());
        assert_eq!(st, before);
    }

    #[test]
    fn keystream_splits() {
        let mut a = ksa(b"Key").unwrap();
        let mut b = ksa(b"Key").unwrap();
        let mut split = keystream(&mut a, 4);
        split.extend(keystream(&mut a, 5));
        assert_eq!(split, keystream(&mut b, 9));
    }

    #[test]
    fn rc4_empty_data() {
        assert!(rc4_apply(b"Key", &[]).unwrap().is_empty());
    }

    #[test]
    fn pr_identical_bytes_fixed_point() {
        let k = RoundKey::new([0xAA; 16]);
        assert_eq!(pr_permute(&k), k);
    }

    #[test]
    fn round_key_length_checked() {
        assert_eq!(
            RoundKey::from_slice(&[1, 2, 3]).unwrap_err(),
            CipherError::InvalidRoundKeyLength(3)
        );
        assert!(rc4pr_apply_slice(&[0u8; 15], b"x").is_err());
    }

    #[test]
    fn subkey_chain_identities() {
        let master = RoundKey::new(std::array::from_fn(|i| (i * 37 + 5) as u8));
        assert_eq!(subkey_at(&master, 0), pr_permute(&master));
        for i in 0..8 {
            assert_eq!(
                subkey_at(&master, i + 1),
                pr_permute(&subkey_at(&master, i))
            );
        }
    }

    #[test]
    fn counted_subkeys() {
        let master = RoundKey::new([3; 16]);
        assert_eq!(rc4pr_apply_counted(&master, &[0u8; 321]).1, 21);
        assert_eq!(rc4pr_apply_counted(&master, &[]).1, 1);
        assert_eq!(rc4pr_apply_counted(&master, &[0u8; 16]).1, 1);
        assert_eq!(rc4pr_apply_counted(&master, &[0u8; 17]).1, 2);
    }

    #[test]
    fn count_edges() {
        assert_eq!(count_subkeys(0), 1);
        assert_eq!(count_subkeys(1), 1);
        assert_eq!(count_subkeys(16), 1);
        assert_eq!(count_subkeys(17), 2);
        assert_eq!(count_subkeys(321), 21);
    }
}
