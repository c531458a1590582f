//! Arithmetic in GF(2^k) for 1 <= k <= 64.
//!
//! Elements are polynomials over GF(2) packed into a `u64`, bit `j` holding the
//! coefficient of `x^j`. Each degree uses the lexicographically first irreducible
//! polynomial of that degree, i.e. the smallest integer with bit `k` set whose
//! polynomial is irreducible. [`LOW_TERMS`] stores that polynomial with the
//! leading `x^k` removed.

use crate::error::{usage, Result};

pub const MAX_DEGREE: u32 = 64;

/// Modulus for degree `k` is `x^k + LOW_TERMS[k - 1]`.
pub const LOW_TERMS: [u64; 64] = [
    0x0, 0x3, 0x3, 0x3, 0x5, 0x3, 0x3, 0x1b,
    0x3, 0x9, 0x5, 0x9, 0x1b, 0x21, 0x3, 0x2b,
    0x9, 0x9, 0x27, 0x9, 0x5, 0x3, 0x21, 0x1b,
    0x9, 0x1b, 0x27, 0x3, 0x5, 0x3, 0x9, 0x8d,
    0x4b, 0x1b, 0x5, 0x35, 0x3f, 0x63, 0x11, 0x39,
    0x9, 0x27, 0x59, 0x21, 0x1b, 0x3, 0x21, 0x2d,
    0x71, 0x1d, 0x4b, 0x9, 0x47, 0x7d, 0x47, 0x95,
    0x11, 0x63, 0x7b, 0x3, 0x27, 0x69, 0x3, 0x1b,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gf2k {
    degree: u32,
    low: u64,
}

/// Carry-less product of two 64-bit polynomials.
pub fn clmul(a: u64, b: u64) -> u128 {
    let mut acc = 0u128;
    let mut b = b;
    let a = a as u128;
    while b != 0 {
        let j = b.trailing_zeros();
        acc ^= a << j;
        b &= b - 1;
    }
    acc
}

impl Gf2k {
    pub fn new(degree: u32) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return usage(format!("field degree {degree} outside 1..=64"));
        }
        Ok(Gf2k { degree, low: LOW_TERMS[degree as usize - 1] })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Full modulus as an integer, including the leading bit.
    pub fn modulus(&self) -> u128 {
        (1u128 << self.degree) | self.low as u128
    }

    /// Mask of valid element bits.
    pub fn mask(&self) -> u64 {
        if self.degree == 64 {
            u64::MAX
        } else {
            (1u64 << self.degree) - 1
        }
    }

    fn reduce(&self, mut p: u128) -> u64 {
        let k = self.degree;
        let mask = self.mask() as u128;
        // low has degree < k, so every fold lowers the degree
        while p >> k != 0 {
            let hi = (p >> k) as u64;
            p = (p & mask) ^ clmul(hi, self.low);
        }
        p as u64
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce(clmul(a, b))
    }

    pub fn pow(&self, a: u64, mut e: u64) -> u64 {
        let mut base = a;
        let mut acc = 1u64;
        while e != 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// `1, a, a^2, ..., a^(len-1)`.
    pub fn powers(&self, a: u64, len: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(len);
        let mut cur = 1u64;
        for _ in 0..len {
            out.push(cur);
            cur = self.mul(cur, a);
        }
        out
    }
}

/// Inner product over GF(2) of the coefficient vectors.
pub fn inner(a: u64, b: u64) -> u8 {
    ((a & b).count_ones() & 1) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_mod(mut a: u128, m: u128) -> u128 {
        let dm = 127 - m.leading_zeros();
        while a != 0 && 127 - a.leading_zeros() >= dm {
            a ^= m << (127 - a.leading_zeros() - dm);
        }
        a
    }

    // Trial division by every polynomial of degree at most k/2.
    fn irreducible_by_division(m: u128) -> bool {
        let k = 127 - m.leading_zeros();
        for d in 1..=k / 2 {
            for q in (1u128 << d)..(1u128 << (d + 1)) {
                if poly_mod(m, q) == 0 {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn table_is_lexicographically_first_up_to_16() {
        for k in 1..=16u32 {
            let f = Gf2k::new(k).unwrap();
            assert!(irreducible_by_division(f.modulus()), "degree {k}");
            for c in (1u128 << k)..f.modulus() {
                assert!(!irreducible_by_division(c), "degree {k}: {c:#x} is smaller");
            }
        }
    }

    // x^(2^k) = x mod m and gcd(x^(2^(k/p)) - x, m) = 1 for prime p | k.
    #[test]
    fn table_passes_rabin_test() {
        fn gcd(mut a: u128, mut b: u128) -> u128 {
            while b != 0 {
                let r = poly_mod(a, b);
                a = b;
                b = r;
            }
            a
        }
        for k in 2..=64u32 {
            let f = Gf2k::new(k).unwrap();
            let frob = |j: u32| (0..j).fold(2u64 & f.mask(), |x, _| f.mul(x, x));
            assert_eq!(frob(k), 2, "degree {k}");
            let mut primes = vec![];
            let mut r = k;
            let mut p = 2;
            while r > 1 {
                if r % p == 0 {
                    primes.push(p);
                    while r % p == 0 {
                        r /= p;
                    }
                }
                p += 1;
            }
            for p in primes {
                let h = (frob(k / p) ^ 2) as u128;
                assert_eq!(gcd(f.modulus(), h), 1, "degree {k}, prime {p}");
            }
        }
    }

    #[test]
    fn multiplicative_group_order() {
        for k in 1..=12u32 {
            let f = Gf2k::new(k).unwrap();
            let order = (1u64 << k) - 1;
            for a in 1..(1u64 << k) {
                assert_eq!(f.pow(a, order), 1, "k={k} a={a}");
            }
        }
    }

    #[test]
    fn aes_field_example() {
        let f = Gf2k::new(8).unwrap();
        assert_eq!(f.modulus(), 0x11b);
        assert_eq!(f.mul(0x57, 0x83), 0xc1);
    }

    #[test]
    fn mul_matches_schoolbook_at_64() {
        let f = Gf2k::new(64).unwrap();
        let (a, b) = (0x9e37_79b9_7f4a_7c15u64, 0xc2b2_ae3d_27d4_eb4fu64);
        assert_eq!(f.mul(a, b) as u128, poly_mod(clmul(a, b), f.modulus()));
    }
}
