//! Shamir sharing over the scalar field with Feldman commitments.

use std::collections::BTreeSet;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use super::group::{FieldElement, GroupElement, GroupParams};
use super::CryptoError;

/// One evaluation `(index, f(index))` of a sharing polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretShare {
    pub index: u32,
    pub value: FieldElement,
}

/// Coefficients `a_0..a_{t-1}`, constant term first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polynomial {
    coefficients: Vec<FieldElement>,
}

impl Polynomial {
    pub fn new(coefficients: Vec<FieldElement>) -> Self {
        assert!(!coefficients.is_empty(), "polynomial needs a constant term");
        Polynomial { coefficients }
    }

    /// Degree `t - 1` polynomial with the given constant term.
    pub fn random<R: RngCore + ?Sized>(params: &GroupParams, secret: FieldElement, t: usize, rng: &mut R) -> Self {
        let mut coefficients = Vec::with_capacity(t);
        coefficients.push(secret);
        for _ in 1..t {
            coefficients.push(params.random_scalar(rng));
        }
        Polynomial { coefficients }
    }

    pub fn secret(&self) -> FieldElement {
        self.coefficients[0]
    }

    pub fn threshold(&self) -> usize {
        self.coefficients.len()
    }

    pub fn evaluate(&self, params: &GroupParams, x: u64) -> FieldElement {
        let x = params.scalar(x);
        self.coefficients.iter().rev().fold(FieldElement::ZERO, |acc, &c| params.add(params.mul(acc, x), c))
    }

    pub fn commitments(&self, params: &GroupParams) -> Vec<GroupElement> {
        self.coefficients.iter().map(|&c| params.commit(c)).collect()
    }

    /// Shares at indices `1..=n`.
    pub fn shares(&self, params: &GroupParams, n: usize) -> Vec<SecretShare> {
        (1..=n as u32).map(|index| SecretShare { index, value: self.evaluate(params, index as u64) }).collect()
    }
}

/// Output of [`shamir_split`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub shares: Vec<SecretShare>,
    pub commitments: Vec<GroupElement>,
}

pub fn shamir_split<R: RngCore + ?Sized>(
    params: &GroupParams,
    secret: FieldElement,
    n: usize,
    t: usize,
    rng: &mut R,
) -> Result<Split, CryptoError> {
    check_threshold(n, t)?;
    let poly = Polynomial::random(params, secret, t, rng);
    Ok(Split { shares: poly.shares(params, n), commitments: poly.commitments(params) })
}

pub(crate) fn check_threshold(n: usize, t: usize) -> Result<(), CryptoError> {
    if t == 0 || t > n {
        Err(CryptoError::InvalidThreshold { n, t })
    } else {
        Ok(())
    }
}

/// Feldman check: `g^v == prod_k C_k^(i^k)`, evaluated by Horner's rule in
/// the exponent so every step raises to the small index `i`.
pub fn verify_share(params: &GroupParams, commitments: &[GroupElement], share: &SecretShare) -> bool {
    let i = params.scalar(share.index as u64);
    let rhs = commitments.iter().rev().fold(GroupElement::IDENTITY, |acc, &c| params.op(params.exp(acc, i), c));
    params.commit(share.value) == rhs
}

/// Lagrange coefficients at zero for the given evaluation points.
pub fn lagrange_at_zero(params: &GroupParams, indices: &[u32]) -> Result<Vec<FieldElement>, CryptoError> {
    let mut seen = BTreeSet::new();
    for &i in indices {
        if i == 0 || !seen.insert(i) {
            return Err(CryptoError::DuplicateIndex(i));
        }
    }
    let xs: Vec<FieldElement> = indices.iter().map(|&i| params.scalar(i as u64)).collect();
    let mut nums = Vec::with_capacity(xs.len());
    let mut dens = Vec::with_capacity(xs.len());
    for (a, &xi) in xs.iter().enumerate() {
        let mut num = params.scalar(1);
        let mut den = params.scalar(1);
        for (b, &xj) in xs.iter().enumerate() {
            if a != b {
                num = params.mul(num, xj);
                den = params.mul(den, params.sub(xj, xi));
            }
        }
        nums.push(num);
        dens.push(den);
    }
    // Montgomery's batch inversion: one field inverse for all denominators.
    let mut prefix = Vec::with_capacity(dens.len());
    let mut acc = params.scalar(1);
    for &d in &dens {
        prefix.push(acc);
        acc = params.mul(acc, d);
    }
    let mut inv = params.inv(acc).ok_or(CryptoError::DuplicateIndex(indices.first().copied().unwrap_or(0)))?;
    let mut out = vec![params.scalar(0); dens.len()];
    for k in (0..dens.len()).rev() {
        out[k] = params.mul(nums[k], params.mul(inv, prefix[k]));
        inv = params.mul(inv, dens[k]);
    }
    Ok(out)
}

/// Interpolates the first `t` shares at zero.
pub fn shamir_reconstruct(params: &GroupParams, shares: &[SecretShare], t: usize) -> Result<FieldElement, CryptoError> {
    let mut seen = BTreeSet::new();
    for s in shares {
        if !seen.insert(s.index) {
            return Err(CryptoError::DuplicateIndex(s.index));
        }
    }
    if t == 0 || shares.len() < t {
        return Err(CryptoError::InsufficientShares { have: shares.len(), need: t });
    }
    let used = &shares[..t];
    let indices: Vec<u32> = used.iter().map(|s| s.index).collect();
    let lambdas = lagrange_at_zero(params, &indices)?;
    Ok(used.iter().zip(lambdas).fold(FieldElement::ZERO, |acc, (s, l)| params.add(acc, params.mul(s.value, l))))
}
