//! Structural handle on a piece index `n` that never materializes `n`.
//!
//! Indices produced by rationalized fits have bit lengths on the order of
//! `2^depth` of the coefficients, so `n` is carried as its Calkin–Wilf value
//! `q_n`. Neighbours, bit length, and `ln n` all follow from `q_n` alone.

use std::cmp::Ordering;
use std::fmt;

use rug::float::Constant;
use rug::{Float, Integer, Rational};

use crate::enumeration::{
    calkin_wilf, calkin_wilf_index, cw_predecessor, cw_runs, cw_successor, cw_value_from_poly,
    poly_from_cw_value, MonicPoly,
};
use crate::error::{domain, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PieceIndex {
    q: Rational,
}

impl PieceIndex {
    pub fn one() -> Self {
        Self {
            q: Rational::from(1),
        }
    }

    pub fn from_integer(n: &Integer) -> Result<Self> {
        Ok(Self { q: calkin_wilf(n)? })
    }

    pub fn from_u64(n: u64) -> Result<Self> {
        Self::from_integer(&Integer::from(n))
    }

    pub fn from_cw_value(q: Rational) -> Result<Self> {
        if q.cmp0() != Ordering::Greater {
            return domain("Calkin–Wilf value must be positive");
        }
        Ok(Self { q })
    }

    pub fn from_poly(p: &MonicPoly) -> Result<Self> {
        Ok(Self {
            q: cw_value_from_poly(p)?,
        })
    }

    pub fn cw_value(&self) -> &Rational {
        &self.q
    }

    pub fn is_one(&self) -> bool {
        self.q == 1
    }

    pub fn poly(&self) -> Result<MonicPoly> {
        poly_from_cw_value(&self.q)
    }

    pub fn succ(&self) -> Self {
        Self {
            q: cw_successor(&self.q),
        }
    }

    pub fn pred(&self) -> Option<Self> {
        cw_predecessor(&self.q).map(|q| Self { q })
    }

    /// Binary run lengths of `n`, least significant first.
    pub fn runs(&self) -> Vec<Integer> {
        cw_runs(&self.q).expect("q is positive")
    }

    pub fn bit_length(&self) -> Integer {
        self.runs().iter().sum()
    }

    /// `n` itself, if it has at most `MAX_INDEX_BITS` bits.
    pub fn to_integer(&self) -> Result<Integer> {
        calkin_wilf_index(&self.q)
    }

    /// `n` when its bit length is at most `cap`.
    pub fn to_integer_capped(&self, cap: u64) -> Option<Integer> {
        if self.bit_length() > cap {
            return None;
        }
        self.to_integer().ok()
    }

    /// Decimal `n` when it has at most 4096 bits.
    pub fn to_decimal(&self) -> Option<String> {
        self.to_integer_capped(4096).map(|n| n.to_string())
    }

    /// `ln n` to `prec` bits, from the leading bits and the bit length.
    pub fn ln(&self, prec: u32) -> Float {
        let runs = self.runs();
        let bits: Integer = runs.iter().sum();
        let keep = prec as u64 + 64;
        if bits <= keep {
            let n = self.to_integer().expect("small");
            return Float::with_val(prec, &n).ln();
        }
        let mut top = Integer::new();
        let mut taken = 0u64;
        for (i, m) in runs.iter().enumerate().rev() {
            let want = keep - taken;
            let m = m.to_u64().map_or(want, |m| m.min(want));
            top <<= m as u32;
            if i % 2 == 0 {
                top += (Integer::from(1) << m as u32) - 1u32;
            }
            taken += m;
            if taken == keep {
                break;
            }
        }
        let work = prec + 32;
        let rest = Float::with_val(work, bits - taken);
        let ln2 = Float::with_val(work, Constant::Log2);
        let v = Float::with_val(work, &top).ln() + rest * ln2;
        Float::with_val(prec, v)
    }

    /// Rough `log2 ln n`, used to size working precision.
    pub fn log2_ln_estimate(&self) -> u64 {
        let bits = self.bit_length();
        if bits <= 64 {
            return self.to_integer().map_or(0, |n| {
                let l = n.to_f64().ln();
                if l > 1.0 {
                    l.log2().ceil() as u64
                } else {
                    0
                }
            });
        }
        bits.significant_bits() as u64
    }
}

impl fmt::Display for PieceIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_decimal() {
            Some(d) => write!(f, "{d}"),
            None => write!(f, "<index of {} bits>", self.bit_length()),
        }
    }
}
