//! Real roots of univariate rational polynomials via Sturm sequences.
//!
//! Polynomials are coefficient vectors in ascending order, with no trailing
//! zeros (the empty vector is the zero polynomial).

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::rational::{simplest_between, Q};

pub type UPoly = Vec<Q>;

fn trim(mut p: UPoly) -> UPoly {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

pub fn eval(p: &[Q], x: &Q) -> Q {
    let mut acc = Q::zero();
    for c in p.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

pub fn derivative(p: &[Q]) -> UPoly {
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * Q::from_integer(BigInt::from(i)))
        .collect()
}

/// Remainder of `a` divided by `b` (`b` nonzero).
fn rem(a: &[Q], b: &[Q]) -> UPoly {
    let mut r = trim(a.to_vec());
    let db = b.len() - 1;
    let lb = b.last().expect("nonzero divisor");
    while r.len() > db && !r.is_empty() {
        let shift = r.len() - 1 - db;
        let f = r.last().expect("nonempty") / lb;
        for (i, c) in b.iter().enumerate() {
            r[i + shift] -= &f * c;
        }
        r.pop();
        r = trim(r);
    }
    r
}

fn quotient(a: &[Q], b: &[Q]) -> UPoly {
    let mut r = trim(a.to_vec());
    let db = b.len() - 1;
    let lb = b.last().expect("nonzero divisor");
    if r.len() <= db {
        return Vec::new();
    }
    let mut out = vec![Q::zero(); r.len() - db];
    while r.len() > db {
        let shift = r.len() - 1 - db;
        let f = r.last().expect("nonempty") / lb;
        for (i, c) in b.iter().enumerate() {
            r[i + shift] -= &f * c;
        }
        out[shift] = f;
        r.pop();
    }
    trim(out)
}

fn monic(p: UPoly) -> UPoly {
    match p.last().cloned() {
        Some(l) => p.into_iter().map(|c| c / &l).collect(),
        None => p,
    }
}

pub fn gcd(a: &[Q], b: &[Q]) -> UPoly {
    let (mut a, mut b) = (trim(a.to_vec()), trim(b.to_vec()));
    while !b.is_empty() {
        let r = rem(&a, &b);
        a = b;
        b = r;
    }
    monic(a)
}

/// `p / gcd(p, p')`: same real roots, all simple.
pub fn square_free(p: &[Q]) -> UPoly {
    let p = trim(p.to_vec());
    if p.len() <= 1 {
        return p;
    }
    let g = gcd(&p, &derivative(&p));
    monic(quotient(&p, &g))
}

pub fn sturm_sequence(p: &[Q]) -> Vec<UPoly> {
    let mut seq = vec![trim(p.to_vec())];
    let d = derivative(&seq[0]);
    if d.is_empty() {
        return seq;
    }
    seq.push(d);
    loop {
        let n = seq.len();
        let r = rem(&seq[n - 2], &seq[n - 1]);
        if r.is_empty() {
            break;
        }
        seq.push(r.into_iter().map(|c| -c).collect());
    }
    seq
}

fn sign_changes(signs: impl Iterator<Item = i8>) -> usize {
    let mut last = 0i8;
    let mut count = 0;
    for s in signs.filter(|&s| s != 0) {
        if last != 0 && s != last {
            count += 1;
        }
        last = s;
    }
    count
}

fn sign(x: &Q) -> i8 {
    if x.is_positive() {
        1
    } else if x.is_negative() {
        -1
    } else {
        0
    }
}

fn changes_at(seq: &[UPoly], x: &Q) -> usize {
    sign_changes(seq.iter().map(|p| sign(&eval(p, x))))
}

/// Number of distinct real roots in the half-open interval `(a, b]`.
pub fn count_roots_between(seq: &[UPoly], a: &Q, b: &Q) -> usize {
    changes_at(seq, a) - changes_at(seq, b)
}

/// Number of distinct real roots of `p` on the whole line.
pub fn count_real_roots(p: &[Q]) -> usize {
    let p = square_free(p);
    if p.len() <= 1 {
        return 0;
    }
    let seq = sturm_sequence(&p);
    let at = |neg: bool| {
        sign_changes(seq.iter().map(|s| {
            let lead = sign(s.last().expect("nonzero"));
            if neg && (s.len() - 1) % 2 == 1 {
                -lead
            } else {
                lead
            }
        }))
    };
    at(true) - at(false)
}

/// Cauchy bound: every real root lies strictly inside `(-B, B)`.
fn root_bound(p: &[Q]) -> Q {
    let lead = p.last().expect("nonzero").abs();
    let m = p[..p.len() - 1]
        .iter()
        .map(|c| c.abs() / &lead)
        .max()
        .unwrap_or_else(Q::zero);
    m + Q::one()
}

/// A real root located either exactly or inside an isolating interval.
#[derive(Clone, Debug, PartialEq)]
pub enum RealRoot {
    Rational(Q),
    /// Irrational root in the open interval `(lo, hi)`.
    Interval(Q, Q),
}

impl RealRoot {
    pub fn approx(&self) -> Q {
        match self {
            RealRoot::Rational(r) => r.clone(),
            RealRoot::Interval(lo, hi) => (lo + hi) / Q::from_integer(2.into()),
        }
    }
}

/// All distinct real roots of `p` in increasing order. Rational roots are
/// found exactly; irrational ones are isolated to width below `width`.
pub fn real_roots(p: &[Q], width: &Q) -> Vec<RealRoot> {
    let p = square_free(p);
    if p.len() <= 1 {
        return Vec::new();
    }
    let seq = sturm_sequence(&p);
    // Rational roots of an integer polynomial have denominators dividing the
    // leading coefficient a, and two such rationals differ by at least 1/a².
    let denom_lcm = p
        .iter()
        .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let lead = (p.last().expect("nonzero") * Q::from_integer(denom_lcm)).abs();
    let sep = (lead.clone() * lead).recip();
    let b = root_bound(&p);
    let mut out = Vec::new();
    let mut stack = vec![(-b.clone(), b)];
    while let Some((lo, hi)) = stack.pop() {
        let n = count_roots_between(&seq, &lo, &hi);
        if n == 0 {
            continue;
        }
        if n == 1 {
            out.push(refine(&p, &seq, lo, hi, &sep, width));
            continue;
        }
        let mid = (&lo + &hi) / Q::from_integer(2.into());
        stack.push((mid.clone(), hi));
        stack.push((lo, mid));
    }
    out
}

/// `p` has exactly one root in `(lo, hi]`.
fn refine(p: &[Q], seq: &[UPoly], mut lo: Q, mut hi: Q, sep: &Q, width: &Q) -> RealRoot {
    let two = Q::from_integer(2.into());
    loop {
        if eval(p, &hi).is_zero() {
            return RealRoot::Rational(hi);
        }
        let w = &hi - &lo;
        if &w < sep {
            let cand = simplest_between(&lo, &hi);
            if eval(p, &cand).is_zero() {
                return RealRoot::Rational(cand);
            }
            if &w < width {
                return RealRoot::Interval(lo, hi);
            }
        }
        let mid = (&lo + &hi) / &two;
        if count_roots_between(seq, &lo, &mid) == 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}
