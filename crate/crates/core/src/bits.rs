//! Sign vectors, seeds and index sets.
//!
//! Signs follow one convention everywhere: `+1` is true and `-1` is false.
//! A [`SignVector`] stores the false positions as set bits, which is also the
//! raw bit a small-bias generator emits (bit `0` maps to `+1`, bit `1` to `-1`).

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{usage, Result};

pub type Sign = i8;
pub const TRUE: Sign = 1;
pub const FALSE: Sign = -1;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignVector {
    len: usize,
    neg: Vec<u64>,
}

impl SignVector {
    /// All-true vector of length `len`.
    pub fn all_true(len: usize) -> Self {
        SignVector { len, neg: vec![0; len.div_ceil(64)] }
    }

    pub fn all_false(len: usize) -> Self {
        let mut v = Self::all_true(len);
        for i in 0..len {
            v.set(i, FALSE);
        }
        v
    }

    pub fn from_signs(signs: &[Sign]) -> Self {
        let mut v = Self::all_true(signs.len());
        for (i, &s) in signs.iter().enumerate() {
            v.set(i, s);
        }
        v
    }

    /// `neg` holds the false positions, low word first.
    pub fn from_words(len: usize, neg: &[u64]) -> Self {
        let mut words = vec![0u64; len.div_ceil(64)];
        for (w, src) in words.iter_mut().zip(neg) {
            *w = *src;
        }
        let mut v = SignVector { len, neg: words };
        v.clear_padding();
        v
    }

    pub fn from_packed(len: usize, neg: u64) -> Self {
        assert!(len <= 64);
        Self::from_words(len, &[neg])
    }

    fn clear_padding(&mut self) {
        if self.len % 64 != 0 {
            if let Some(last) = self.neg.last_mut() {
                *last &= (1u64 << (self.len % 64)) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Sign {
        if self.is_false(i) {
            FALSE
        } else {
            TRUE
        }
    }

    pub fn is_false(&self, i: usize) -> bool {
        assert!(i < self.len, "index {i} out of range {}", self.len);
        (self.neg[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn is_true(&self, i: usize) -> bool {
        !self.is_false(i)
    }

    pub fn set(&mut self, i: usize, s: Sign) {
        assert!(i < self.len);
        assert!(s == TRUE || s == FALSE, "sign must be +1 or -1");
        let bit = 1u64 << (i % 64);
        if s == FALSE {
            self.neg[i / 64] |= bit;
        } else {
            self.neg[i / 64] &= !bit;
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.neg
    }

    /// False positions as a single word; requires `len <= 64`.
    pub fn packed(&self) -> u64 {
        assert!(self.len <= 64);
        self.neg.first().copied().unwrap_or(0)
    }

    pub fn signs(&self) -> Vec<Sign> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn slice(&self, start: usize, len: usize) -> SignVector {
        let mut out = SignVector::all_true(len);
        for i in 0..len {
            out.set(i, self.get(start + i));
        }
        out
    }

    /// Compact `+`/`-` rendering.
    pub fn to_pm_string(&self) -> String {
        (0..self.len).map(|i| if self.is_true(i) { '+' } else { '-' }).collect()
    }

    pub fn parse_pm(s: &str) -> Result<Self> {
        let mut signs = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '+' | '1' => signs.push(TRUE),
                '-' | '0' => signs.push(FALSE),
                _ => return usage(format!("bad sign character {c:?}")),
            }
        }
        Ok(Self::from_signs(&signs))
    }
}

impl fmt::Debug for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SignVector({})", self.to_pm_string())
    }
}

impl Serialize for SignVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.signs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SignVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let signs = Vec::<Sign>::deserialize(d)?;
        if signs.iter().any(|&s| s != TRUE && s != FALSE) {
            return Err(serde::de::Error::custom("signs must be +1 or -1"));
        }
        Ok(SignVector::from_signs(&signs))
    }
}

/// A bit string of fixed length. Bit `i` lives in byte `i / 8` at position `i % 8`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Seed {
    bits: usize,
    bytes: Vec<u8>,
}

impl Seed {
    pub fn zero(bits: usize) -> Self {
        Seed { bits, bytes: vec![0; bits.div_ceil(8)] }
    }

    /// Seed whose bit `i` is bit `i` of `index`; requires `bits <= 64`.
    pub fn from_index(index: u64, bits: usize) -> Self {
        assert!(bits <= 64);
        let mut s = Self::zero(bits);
        for i in 0..bits {
            if (index >> i) & 1 == 1 {
                s.set(i, true);
            }
        }
        s
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zero(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            s.set(i, b);
        }
        s
    }

    /// Parses hex bytes (two digits per byte, byte 0 first). The digit count must
    /// match `bits` exactly and padding bits must be zero.
    pub fn from_hex(hex: &str, bits: usize) -> Result<Self> {
        let hex = hex.trim().trim_start_matches("0x");
        let want = bits.div_ceil(8) * 2;
        if hex.len() != want {
            return usage(format!("seed needs {want} hex digits for {bits} bits, got {}", hex.len()));
        }
        let mut bytes = Vec::with_capacity(want / 2);
        for i in (0..hex.len()).step_by(2) {
            let byte = u8::from_str_radix(&hex[i..i + 2], 16)
                .map_err(|_| crate::Error::Usage(format!("bad hex in seed: {hex}")))?;
            bytes.push(byte);
        }
        let s = Seed { bits, bytes };
        for i in bits..s.bytes.len() * 8 {
            if (s.bytes[i / 8] >> (i % 8)) & 1 == 1 {
                return usage(format!("seed has bits set past position {bits}"));
            }
        }
        Ok(s)
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.bits);
        (self.bytes[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, b: bool) {
        assert!(i < self.bits);
        if b {
            self.bytes[i / 8] |= 1 << (i % 8);
        } else {
            self.bytes[i / 8] &= !(1 << (i % 8));
        }
    }

    /// Bits `start..start+len` as an integer, bit `start` lowest; `len <= 64`.
    pub fn read_u64(&self, start: usize, len: usize) -> u64 {
        assert!(len <= 64 && start + len <= self.bits);
        let mut v = 0u64;
        for i in 0..len {
            if self.bit(start + i) {
                v |= 1 << i;
            }
        }
        v
    }

    pub fn slice(&self, start: usize, len: usize) -> Seed {
        assert!(start + len <= self.bits);
        let mut s = Seed::zero(len);
        for i in 0..len {
            s.set(i, self.bit(start + i));
        }
        s
    }

    pub fn concat(parts: &[Seed]) -> Seed {
        let total = parts.iter().map(|p| p.bits).sum();
        let mut s = Seed::zero(total);
        let mut at = 0;
        for p in parts {
            for i in 0..p.bits {
                s.set(at + i, p.bit(i));
            }
            at += p.bits;
        }
        s
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({} bits, {})", self.bits, self.to_hex())
    }
}

/// Sorted set of distinct 0-based indices.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    pub fn new(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }

    pub fn from_mask(mask: u64) -> Self {
        IndexSet((0..64).filter(|i| (mask >> i) & 1 == 1).collect())
    }

    pub fn from_words(words: &[u64], len: usize) -> Self {
        IndexSet((0..len).filter(|&i| (words[i / 64] >> (i % 64)) & 1 == 1).collect())
    }

    pub fn mask(&self) -> u64 {
        self.0.iter().fold(0, |m, &i| {
            assert!(i < 64);
            m | (1 << i)
        })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        IndexSet::new(v)
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.iter().copied().filter(|&i| !other.contains(i)).collect())
    }

    pub fn intersects(&self, other: &IndexSet) -> bool {
        self.0.iter().any(|&i| other.contains(i))
    }

    /// Symmetric difference, the product of two monomials under `x^2 = 1`.
    pub fn symmetric_difference(&self, other: &IndexSet) -> IndexSet {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        IndexSet(out)
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

impl TryFrom<Vec<usize>> for IndexSet {
    type Error = String;
    fn try_from(v: Vec<usize>) -> std::result::Result<Self, String> {
        let s = IndexSet::new(v.clone());
        if s.len() != v.len() {
            return Err("index set has repeated entries".into());
        }
        Ok(s)
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        IndexSet::new(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_hex_round_trip() {
        let s = Seed::from_index(0b1_0110_0101, 9);
        assert_eq!(s.to_hex(), "6501");
        assert_eq!(Seed::from_hex("6501", 9).unwrap(), s);
        assert!(Seed::from_hex("6503", 9).is_err());
        assert!(Seed::from_hex("65", 9).is_err());
    }

    #[test]
    fn sign_vector_packing() {
        let v = SignVector::from_signs(&[1, -1, -1, 1]);
        assert_eq!(v.packed(), 0b0110);
        assert_eq!(v.to_pm_string(), "+--+");
        assert_eq!(SignVector::parse_pm("+--+").unwrap(), v);
    }

    #[test]
    fn symmetric_difference_cancels() {
        let a = IndexSet::new(vec![1, 3, 5]);
        let b = IndexSet::new(vec![3, 4]);
        assert_eq!(a.symmetric_difference(&b), IndexSet::new(vec![1, 4, 5]));
    }
}
