//! Calkin–Wilf enumeration of the positive rationals and the induced
//! bijection between positive integers and monic polynomials with rational
//! coefficients.
//!
//! Everything here is exact. The binary expansion of `n`, read from the least
//! significant bit as alternating runs of ones and zeros, is the continued
//! fraction of `q_n`; both directions therefore cost one pass over the runs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rug::{Integer, Rational};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};

/// Largest index, in bits, that will be materialized as an [`Integer`].
pub const MAX_INDEX_BITS: u64 = 1 << 26;

/// Canonical continued fraction `[m_0; m_1, ..., m_l]` of a positive rational.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ContinuedFraction {
    terms: Vec<Integer>,
}

impl ContinuedFraction {
    /// Validates canonical form: `m_0 >= 0`, middle terms `>= 1`, last term
    /// `>= 2` when there is more than one term, and a positive value.
    pub fn new(terms: Vec<Integer>) -> Result<Self> {
        let Some(last) = terms.last() else {
            return domain("empty continued fraction");
        };
        if terms[0] < 0 {
            return domain("m_0 must be nonnegative");
        }
        if terms.len() == 1 {
            if terms[0] < 1 {
                return domain("value must be positive");
            }
        } else {
            if terms[1..terms.len() - 1].iter().any(|m| *m < 1) {
                return domain("inner terms must be >= 1");
            }
            if *last < 2 {
                return domain("last term must be >= 2");
            }
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Integer] {
        &self.terms
    }

    pub fn into_terms(self) -> Vec<Integer> {
        self.terms
    }

    pub fn value(&self) -> Rational {
        cf_value(&self.terms)
    }

    /// Sum of the terms (depth in the Stern–Brocot tree).
    pub fn depth(&self) -> Integer {
        self.terms.iter().sum()
    }
}

impl fmt::Display for ContinuedFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}", self.terms[0])?;
        for (i, t) in self.terms[1..].iter().enumerate() {
            write!(f, "{}{}", if i == 0 { "; " } else { ", " }, t)?;
        }
        write!(f, "]")
    }
}

/// Value of `[t_0; t_1, ...]` through the convergent recurrence. Terms after the
/// first must be positive; a trailing 1 is allowed.
pub fn cf_value(terms: &[Integer]) -> Rational {
    let (mut h1, mut h2) = (Integer::from(1), Integer::new());
    let (mut k1, mut k2) = (Integer::new(), Integer::from(1));
    for t in terms {
        let h = Integer::from(t * &h1) + &h2;
        let k = Integer::from(t * &k1) + &k2;
        h2 = std::mem::replace(&mut h1, h);
        k2 = std::mem::replace(&mut k1, k);
    }
    Rational::from((h1, k1))
}

fn euclid_terms(q: &Rational) -> Vec<Integer> {
    let mut num = q.numer().clone();
    let mut den = q.denom().clone();
    let mut out = Vec::new();
    while den != 0 {
        let (quot, rem) = num.div_rem_floor(den.clone());
        out.push(quot);
        num = den;
        den = rem;
    }
    out
}

pub fn cf_canonical(q: &Rational) -> Result<ContinuedFraction> {
    if q.cmp0() != Ordering::Greater {
        return domain(format!("continued fraction of nonpositive {q}"));
    }
    // Euclid already ends in a term >= 2 unless q is an integer.
    Ok(ContinuedFraction {
        terms: euclid_terms(q),
    })
}

/// Run lengths of the binary expansion of `q_n`'s index, least significant
/// first, starting with a (possibly empty) run of ones. Always odd in number.
pub fn cw_runs(q: &Rational) -> Result<Vec<Integer>> {
    let mut t = cf_canonical(q)?.into_terms();
    if t.len() % 2 == 0 {
        let last = t.last_mut().unwrap();
        *last -= 1;
        t.push(Integer::from(1));
    }
    Ok(t)
}

fn runs_of(n: &Integer) -> Vec<Integer> {
    let mut out = Vec::new();
    let mut pos = 0u32;
    loop {
        let z = n.find_zero(pos).expect("positive integers end in zeros");
        out.push(Integer::from(z - pos));
        pos = z;
        match n.find_one(pos) {
            Some(o) => {
                out.push(Integer::from(o - pos));
                pos = o;
            }
            None => return out,
        }
    }
}

fn from_runs(runs: &[Integer]) -> Result<Integer> {
    let bits: Integer = runs.iter().sum();
    if bits > MAX_INDEX_BITS {
        return Err(Error::IndexTooLarge {
            bits: bits.to_string(),
            cap: MAX_INDEX_BITS as u32,
        });
    }
    let mut n = Integer::new();
    for (i, m) in runs.iter().enumerate().rev() {
        let m = m.to_u32().expect("checked against cap");
        n <<= m;
        if i % 2 == 0 {
            n += (Integer::from(1) << m) - 1u32;
        }
    }
    Ok(n)
}

/// `q_n`, the n-th term of the Calkin–Wilf sequence (`q_1 = 1`).
pub fn calkin_wilf(n: &Integer) -> Result<Rational> {
    if *n < 1 {
        return domain(format!("Calkin–Wilf index must be >= 1, got {n}"));
    }
    Ok(cf_value(&runs_of(n)))
}

/// Inverse of [`calkin_wilf`].
pub fn calkin_wilf_index(q: &Rational) -> Result<Integer> {
    from_runs(&cw_runs(q)?)
}

/// Newman's successor: `q_{n+1} = 1 / (2 floor(q_n) - q_n + 1)`.
pub fn cw_successor(q: &Rational) -> Rational {
    let fl = Rational::from(q.floor_ref());
    (fl * 2u32 - q + 1u32).recip()
}

/// Inverse of [`cw_successor`]; `None` at `q_1 = 1`.
pub fn cw_predecessor(q: &Rational) -> Option<Rational> {
    if *q == 1 {
        return None;
    }
    let r = Rational::from(q.recip_ref());
    if r.is_integer() {
        return Some(r - 1u32);
    }
    let fl = Rational::from(r.floor_ref());
    Some(fl * 2u32 + 1u32 - r)
}

/// `r_0 = 0`, `r_{2n} = q_n`, `r_{2n-1} = -q_n`.
pub fn rational_enum(k: &Integer) -> Result<Rational> {
    match k.cmp0() {
        Ordering::Less => domain(format!("rational_enum index must be >= 0, got {k}")),
        Ordering::Equal => Ok(Rational::new()),
        Ordering::Greater => {
            let odd = k.is_odd();
            let n = Integer::from(k + 1u32) >> 1u32;
            let q = calkin_wilf(&n)?;
            Ok(if odd { -q } else { q })
        }
    }
}

/// Inverse of [`rational_enum`].
pub fn rational_enum_index(r: &Rational) -> Result<Integer> {
    match r.cmp0() {
        Ordering::Equal => Ok(Integer::new()),
        Ordering::Greater => Ok(calkin_wilf_index(r)? << 1u32),
        Ordering::Less => {
            let n = calkin_wilf_index(&Rational::from(-r))?;
            Ok((n << 1u32) - 1u32)
        }
    }
}

/// Sum of continued-fraction terms of `|r|`; zero for `r = 0`. Equals the bit
/// length of the Calkin–Wilf index of `|r|`.
pub fn stern_brocot_depth(r: &Rational) -> Integer {
    if r.cmp0() == Ordering::Equal {
        return Integer::new();
    }
    euclid_terms(&Rational::from(r.abs_ref())).iter().sum()
}

/// Rational of least Stern–Brocot depth in the closed interval `[lo, hi]`.
pub fn simplest_between(lo: &Rational, hi: &Rational) -> Rational {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    if lo.cmp0() != Ordering::Greater && hi.cmp0() != Ordering::Less {
        return Rational::new();
    }
    if hi.cmp0() == Ordering::Less {
        return -simplest_positive(Rational::from(-hi), Rational::from(-lo));
    }
    simplest_positive(lo.clone(), hi.clone())
}

fn simplest_positive(mut lo: Rational, mut hi: Rational) -> Rational {
    let mut terms = Vec::new();
    loop {
        let fl = lo.floor_ref();
        let fl = Rational::from(fl);
        if lo.is_integer() {
            terms.push(lo.numer().clone());
            break;
        }
        let up = Rational::from(&fl + 1u32);
        if up <= hi {
            terms.push(up.numer().clone());
            break;
        }
        terms.push(fl.numer().clone());
        let nlo = Rational::from(&hi - &fl).recip();
        let nhi = Rational::from(&lo - &fl).recip();
        lo = nlo;
        hi = nhi;
    }
    cf_value(&terms)
}

/// Monic polynomial `rho_0 + rho_1 x + ... + rho_{l-1} x^{l-1} + x^l`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MonicPoly {
    coeffs: Vec<Rational>,
}

impl MonicPoly {
    pub fn one() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn x() -> Self {
        Self {
            coeffs: vec![Rational::new()],
        }
    }

    /// Lower coefficients in ascending order; the leading 1 is implicit.
    pub fn from_coeffs(coeffs: Vec<Rational>) -> Self {
        Self { coeffs }
    }

    /// From a full ascending coefficient list whose last entry must be 1.
    pub fn from_full(mut full: Vec<Rational>) -> Result<Self> {
        match full.pop() {
            Some(lead) if lead == 1 => Ok(Self { coeffs: full }),
            Some(lead) => domain(format!("leading coefficient is {lead}, not 1")),
            None => domain("empty coefficient list"),
        }
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        let mut acc = Rational::from(1);
        for c in self.coeffs.iter().rev() {
            acc *= x;
            acc += c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 1.0;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c.to_f64();
        }
        acc
    }

    /// `B_1 = rho_0 + sum_{i>=1} min(rho_i, 0)`; the minimum of `u` on `[0, 1]`
    /// is at least this. For the constant polynomial both bounds are 1.
    pub fn lower_bound(&self) -> Rational {
        let Some(c0) = self.coeffs.first() else {
            return Rational::from(1);
        };
        let mut b = c0.clone();
        for c in &self.coeffs[1..] {
            if c.cmp0() == Ordering::Less {
                b += c;
            }
        }
        b
    }

    /// `B_2 = rho_0 + sum_{i>=1} max(rho_i, 0) + 1`.
    pub fn upper_bound(&self) -> Rational {
        let Some(c0) = self.coeffs.first() else {
            return Rational::from(1);
        };
        let mut b = Rational::from(c0 + 1u32);
        for c in &self.coeffs[1..] {
            if c.cmp0() == Ordering::Greater {
                b += c;
            }
        }
        b
    }

    /// `sum_i i |rho_i| r^{i-1}` with `rho_l = 1`: an upper bound for `|u'|` on
    /// any interval inside `[-r, r]`. Zero for constants.
    pub fn derivative_bound(&self, r: &Rational) -> Rational {
        let l = self.coeffs.len();
        if l == 0 {
            return Rational::new();
        }
        let mut acc = Rational::from(l as u32);
        for i in (1..l).rev() {
            acc *= r;
            acc += Rational::from(self.coeffs[i].abs_ref()) * (i as u32);
        }
        acc
    }

    /// Full ascending coefficient list including the leading 1.
    pub fn full(&self) -> Vec<Rational> {
        let mut v = self.coeffs.clone();
        v.push(Rational::from(1));
        v
    }

    /// Largest Stern–Brocot depth among the coefficients.
    pub fn max_depth(&self) -> Integer {
        self.coeffs
            .iter()
            .map(stern_brocot_depth)
            .max()
            .unwrap_or_default()
    }
}

fn write_rational(f: &mut fmt::Formatter<'_>, r: &Rational) -> fmt::Result {
    if r.is_integer() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for MonicPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = self.coeffs.len();
        match l {
            0 => return write!(f, "1"),
            1 => write!(f, "x")?,
            _ => write!(f, "x^{l}")?,
        }
        for i in (0..l).rev() {
            let c = &self.coeffs[i];
            if c.cmp0() == Ordering::Equal {
                continue;
            }
            let mag = Rational::from(c.abs_ref());
            write!(
                f,
                " {} ",
                if c.cmp0() == Ordering::Less { '-' } else { '+' }
            )?;
            if i == 0 || mag != 1 {
                write_rational(f, &mag)?;
                if i > 0 {
                    write!(f, "*")?;
                }
            }
            match i {
                0 => {}
                1 => write!(f, "x")?,
                _ => write!(f, "x^{i}")?,
            }
        }
        Ok(())
    }
}

/// Parses `"num/den"`, `"num"`, or a plain decimal like `"-0.25"`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if let Some((i, frac)) = s.split_once('.') {
        let neg = i.trim_start().starts_with('-');
        let digits = format!("{}{}", i.trim_start_matches(['-', '+']), frac);
        let n = Integer::from_str_radix(&digits, 10)
            .map_err(|_| Error::Parse(format!("bad decimal {s:?}")))?;
        let den = Integer::from(Integer::u_pow_u(10, frac.len() as u32));
        let r = Rational::from((n, den));
        return Ok(if neg { -r } else { r });
    }
    Rational::from_str_radix(s, 10).map_err(|_| Error::Parse(format!("bad rational {s:?}")))
}

impl FromStr for MonicPoly {
    type Err = Error;

    /// Accepts sums of terms such as `x^3 - 1/2*x + 4`, `2x`, `-x^2`.
    fn from_str(src: &str) -> Result<Self> {
        let s: String = src.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::Parse("empty polynomial".into()));
        }
        let mut terms: Vec<(usize, Rational)> = Vec::new();
        let bytes = s.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let mut sign = 1;
            if bytes[i] == b'+' || bytes[i] == b'-' {
                if bytes[i] == b'-' {
                    sign = -1;
                }
                i += 1;
            } else if i > 0 {
                return Err(Error::Parse(format!("expected sign at {i} in {src:?}")));
            }
            let start = i;
            while i < bytes.len() && bytes[i] != b'+' && bytes[i] != b'-' {
                if bytes[i] == b'^' {
                    i += 1;
                }
                i += 1;
            }
            let term = &s[start..i.min(s.len())];
            let (coef, power) = parse_term(term)
                .ok_or_else(|| Error::Parse(format!("bad term {term:?} in {src:?}")))?;
            terms.push((power, if sign < 0 { -coef } else { coef }));
        }
        let deg = terms.iter().map(|t| t.0).max().unwrap_or(0);
        let mut full = vec![Rational::new(); deg + 1];
        for (p, c) in terms {
            full[p] += c;
        }
        while full.len() > 1 && full.last().map(|c| c.cmp0()) == Some(Ordering::Equal) {
            full.pop();
        }
        MonicPoly::from_full(full)
    }
}

fn parse_term(t: &str) -> Option<(Rational, usize)> {
    if t.is_empty() {
        return None;
    }
    let Some(xpos) = t.find('x') else {
        return parse_rational(t).ok().map(|c| (c, 0));
    };
    let head = t[..xpos].trim_end_matches('*');
    let coef = if head.is_empty() {
        Rational::from(1)
    } else {
        parse_rational(head).ok()?
    };
    let tail = &t[xpos + 1..];
    let power = if tail.is_empty() {
        1
    } else {
        tail.strip_prefix('^')?.parse().ok()?
    };
    Some((coef, power))
}

pub(crate) fn rational_to_string(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

impl Serialize for MonicPoly {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_seq(self.coeffs.iter().map(rational_to_string))
    }
}

impl<'de> Deserialize<'de> for MonicPoly {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw: Vec<String> = Vec::deserialize(de)?;
        raw.iter()
            .map(|s| parse_rational(s))
            .collect::<Result<Vec<_>>>()
            .map(MonicPoly::from_coeffs)
            .map_err(serde::de::Error::custom)
    }
}

/// The polynomial encoded by a Calkin–Wilf value `q = q_n`.
pub fn poly_from_cw_value(q: &Rational) -> Result<MonicPoly> {
    if *q == 1 {
        return Ok(MonicPoly::one());
    }
    let t = cf_canonical(q)?.into_terms();
    let r = |k: Integer| rational_enum(&k);
    let l = t.len() - 1;
    let coeffs = match l {
        0 => vec![r(Integer::from(&t[0] - 2u32))?],
        1 => vec![r(t[0].clone())?, r(Integer::from(&t[1] - 2u32))?],
        _ => {
            let mut c = Vec::with_capacity(l + 1);
            c.push(r(t[0].clone())?);
            for m in &t[1..l] {
                c.push(r(Integer::from(m - 1u32))?);
            }
            c.push(r(Integer::from(&t[l] - 2u32))?);
            c
        }
    };
    Ok(MonicPoly::from_coeffs(coeffs))
}

/// Calkin–Wilf value `q_n` of the index encoding `p`.
pub fn cw_value_from_poly(p: &MonicPoly) -> Result<Rational> {
    let k: Vec<Integer> = p
        .coeffs()
        .iter()
        .map(rational_enum_index)
        .collect::<Result<_>>()?;
    let l = k.len();
    let terms = match l {
        0 => return Ok(Rational::from(1)),
        1 => vec![Integer::from(&k[0] + 2u32)],
        _ => {
            let mut t = Vec::with_capacity(l);
            t.push(k[0].clone());
            for ki in &k[1..l - 1] {
                t.push(Integer::from(ki + 1u32));
            }
            t.push(Integer::from(&k[l - 1] + 2u32));
            t
        }
    };
    Ok(cf_value(&terms))
}

/// `u_n` for `n >= 1`.
pub fn index_to_poly(n: &Integer) -> Result<MonicPoly> {
    poly_from_cw_value(&calkin_wilf(n)?)
}

/// Index `n` with `u_n = p`. Fails with [`Error::IndexTooLarge`] when the index
/// has more than [`MAX_INDEX_BITS`] bits; use [`crate::PieceIndex`] then.
pub fn poly_to_index(p: &MonicPoly) -> Result<Integer> {
    calkin_wilf_index(&cw_value_from_poly(p)?)
}
