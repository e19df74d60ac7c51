//! Prime-order group arithmetic backing secret sharing and threshold signatures.
//!
//! Scalars live in the prime field of order `q`; group elements live in the
//! order-`q` subgroup of `Z_P*` where `q` divides `P - 1`. The default
//! parameters use a safe prime `P = 2q + 1` with `q` just below `2^61`, so
//! every group element encodes as an 8-byte big-endian integer.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CryptoError;

/// Largest prime below 2^61 whose double-plus-one is also prime.
pub const DEFAULT_ORDER: u64 = 2_305_843_009_213_688_669;
/// `2 * DEFAULT_ORDER + 1`.
pub const DEFAULT_MODULUS: u64 = 4_611_686_018_427_377_339;
/// 4 is a quadratic residue, hence generates the order-q subgroup.
pub const DEFAULT_GENERATOR: u64 = 4;

/// An element of the scalar field, always reduced modulo the group order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);

    pub fn value(self) -> u64 {
        self.0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An element of the prime-order subgroup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(u64);

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement(1);

    /// Wraps a raw value. No subgroup membership check is made.
    pub fn from_raw(value: u64) -> Self {
        GroupElement(value)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// Canonical encoding: 8-byte big-endian.
    pub fn to_bytes(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }

    pub fn from_bytes(bytes: [u8; 8]) -> Self {
        GroupElement(u64::from_be_bytes(bytes))
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// Public parameters of the field and group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupParams {
    order: u64,
    modulus: u64,
    generator: u64,
}

impl Default for GroupParams {
    fn default() -> Self {
        GroupParams { order: DEFAULT_ORDER, modulus: DEFAULT_MODULUS, generator: DEFAULT_GENERATOR }
    }
}

impl GroupParams {
    /// Validates and builds a parameter set: `order` and `modulus` prime,
    /// `order | modulus - 1`, and `generator` of exact order `order`.
    pub fn new(order: u64, modulus: u64, generator: u64) -> Result<Self, CryptoError> {
        if !is_prime(order) {
            return Err(CryptoError::InvalidParams(format!("order {order} is not prime")));
        }
        if !is_prime(modulus) {
            return Err(CryptoError::InvalidParams(format!("modulus {modulus} is not prime")));
        }
        if !(modulus - 1).is_multiple_of(order) {
            return Err(CryptoError::InvalidParams(format!("order {order} does not divide modulus - 1")));
        }
        let params = GroupParams { order, modulus, generator };
        if generator <= 1 || generator >= modulus || pow_mod(generator, order, modulus) != 1 {
            return Err(CryptoError::InvalidParams(format!("generator {generator} does not have order {order}")));
        }
        Ok(params)
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.generator)
    }

    pub fn scalar(&self, value: u64) -> FieldElement {
        FieldElement(value % self.order)
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((a.0 as u128 + b.0 as u128) % self.order as u128) as u64)
    }

    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((a.0 as u128 + self.order as u128 - b.0 as u128) % self.order as u128) as u64)
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(mul_mod(a.0, b.0, self.order))
    }

    pub fn neg(&self, a: FieldElement) -> FieldElement {
        self.sub(FieldElement::ZERO, a)
    }

    /// Multiplicative inverse via Fermat. Zero has no inverse.
    pub fn inv(&self, a: FieldElement) -> Option<FieldElement> {
        if a.0 == 0 {
            None
        } else {
            Some(FieldElement(pow_mod(a.0, self.order - 2, self.order)))
        }
    }

    pub fn pow_scalar(&self, base: FieldElement, exp: u64) -> FieldElement {
        FieldElement(pow_mod(base.0, exp, self.order))
    }

    /// `g^exp`.
    pub fn commit(&self, exp: FieldElement) -> GroupElement {
        GroupElement(pow_mod(self.generator, exp.0, self.modulus))
    }

    pub fn exp(&self, base: GroupElement, exp: FieldElement) -> GroupElement {
        GroupElement(pow_mod(base.0, exp.0, self.modulus))
    }

    pub fn op(&self, a: GroupElement, b: GroupElement) -> GroupElement {
        GroupElement(mul_mod(a.0, b.0, self.modulus))
    }

    /// True when `element` lies in the order-q subgroup.
    pub fn contains(&self, element: GroupElement) -> bool {
        element.0 != 0 && element.0 < self.modulus && pow_mod(element.0, self.order, self.modulus) == 1
    }

    /// Hashes a message to an exponent (reduced mod q) and maps it to `g^e`.
    pub fn hash_to_group(&self, message: &[u8]) -> GroupElement {
        let digest = Sha256::new().chain_update(b"unitychain/h2g").chain_update(message).finalize();
        let mut wide = [0u8; 16];
        wide.copy_from_slice(&digest[..16]);
        let e = (u128::from_be_bytes(wide) % self.order as u128) as u64;
        self.commit(FieldElement(e))
    }

    /// Uniform scalar from 64-bit draws by rejection.
    pub fn random_scalar<R: rand_core::RngCore + ?Sized>(&self, rng: &mut R) -> FieldElement {
        let zone = u64::MAX - (u64::MAX % self.order);
        loop {
            let v = rng.next_u64();
            if v < zone {
                return FieldElement(v % self.order);
            }
        }
    }
}

pub(crate) fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub(crate) fn pow_mod(base: u64, exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    if m % 2 == 1 {
        return Montgomery::new(m).pow(base % m, exp);
    }
    let mut acc = 1u64;
    let mut base = base % m;
    let mut exp = exp;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Montgomery arithmetic modulo an odd `m`, with `R = 2^64`.
struct Montgomery {
    m: u64,
    /// `-m^-1 mod 2^64`
    neg_inv: u64,
    /// `R^2 mod m`
    r2: u64,
}

impl Montgomery {
    fn new(m: u64) -> Self {
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(m.wrapping_mul(inv)));
        }
        let r2 = ((u128::MAX % m as u128 + 1) % m as u128) as u64;
        Montgomery { m, neg_inv: inv.wrapping_neg(), r2 }
    }

    fn redc(&self, t: u128) -> u64 {
        let k = (t as u64).wrapping_mul(self.neg_inv);
        let (sum, carry) = t.overflowing_add(k as u128 * self.m as u128);
        let u = (sum >> 64) | ((carry as u128) << 64);
        if u >= self.m as u128 {
            (u - self.m as u128) as u64
        } else {
            u as u64
        }
    }

    fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    fn pow(&self, base: u64, mut exp: u64) -> u64 {
        let mut acc = self.redc(self.r2 as u128);
        let mut x = self.mul(base, self.r2);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, x);
            }
            x = self.mul(x, x);
            exp >>= 1;
        }
        self.redc(acc as u128)
    }
}

/// Deterministic Miller-Rabin, exact for all 64-bit inputs.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for a in BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}
