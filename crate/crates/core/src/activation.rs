//! The sigmoidal activation `sigma`.
//!
//! On `[(2n-1)s, 2ns]` the function is the affine image `a_n + b_n u_n(t)` of
//! the n-th enumerated monic polynomial in the local coordinate
//! `t = x/s - 2n + 1`. Between pieces it is glued with C-infinity transitions
//! through the midpoint value `K_n`, and left of `s` it decays to 0.
//!
//! Pieces are addressed by [`PieceIndex`], so evaluation never forms the
//! absolute argument; everything is carried out in MPFR floats whose
//! precision grows with the piece (`1 - M_n` shrinks like `1 / ln n`).

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::enumeration::MonicPoly;
use crate::error::{domain, Result};
use crate::index::PieceIndex;

const GUARD_BITS: u32 = 32;
/// Largest `|t|` accepted by local evaluation, in units of `s`.
pub const MAX_LOCAL_REACH: u32 = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaParams {
    pub s: f64,
    pub lambda_mono: f64,
    /// Base working precision in bits; raised per piece as needed.
    pub precision: u32,
}

impl SigmaParams {
    pub fn new(s: f64, lambda_mono: f64, precision: u32) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return domain(format!("s must be positive, got {s}"));
        }
        if !(lambda_mono.is_finite() && lambda_mono > 0.0) {
            return domain(format!("lambda must be positive, got {lambda_mono}"));
        }
        if precision < 53 {
            return domain(format!("precision must be >= 53 bits, got {precision}"));
        }
        Ok(Self {
            s,
            lambda_mono,
            precision,
        })
    }

    /// `min(1/2, lambda)`.
    pub fn lambda_eff(&self) -> f64 {
        self.lambda_mono.min(0.5)
    }
}

impl Default for SigmaParams {
    fn default() -> Self {
        Self {
            s: 1.0,
            lambda_mono: 0.5,
            precision: 64,
        }
    }
}

/// Per-piece constants, all at the piece's working precision `prec`.
#[derive(Debug)]
pub struct PieceData {
    pub index: PieceIndex,
    pub u: MonicPoly,
    pub b1: Rational,
    pub b2: Rational,
    pub prec: u32,
    /// `1 - M_n`, kept separately to avoid cancellation.
    pub one_minus_m: Float,
    pub m: Float,
    pub a: Float,
    pub b: Float,
    /// Width of the transition leaving this piece (`delta`).
    pub delta: Float,
    /// Width of the transition entering this piece (`delta_bar` of `n - 1`).
    pub delta_entry: Float,
    coeffs: Vec<Float>,
}

impl PieceData {
    /// `a_n + b_n u_n(t)` for any real `t`.
    pub fn affine(&self, t: &Float) -> Float {
        let mut acc = Float::with_val(self.prec, 1);
        for c in self.coeffs.iter().rev() {
            acc *= t;
            acc += c;
        }
        acc * &self.b + &self.a
    }

    /// `n` as a decimal string when it is small enough to print.
    pub fn n_decimal(&self) -> Option<String> {
        self.index.to_decimal()
    }
}

/// `e^{-1/z}` for `z > 0`, else 0.
fn beta_hat(z: &Float) -> Float {
    if z.is_sign_negative() || z.is_zero() {
        return Float::with_val(z.prec(), 0);
    }
    let e = Float::with_val(z.prec(), z.recip_ref());
    (-e).exp()
}

/// Smooth step `beta_{a,b}`: 1 for `x <= a`, 0 for `x >= b`, in `(0, 1)` between.
pub fn transition(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a < b) {
        return domain(format!("transition needs a < b, got [{a}, {b}]"));
    }
    let p = 64;
    let l = beta_hat(&Float::with_val(p, b - x));
    let r = beta_hat(&Float::with_val(p, x - a));
    Ok(transition_parts(l, r).to_f64())
}

fn transition_parts(l: Float, r: Float) -> Float {
    if l.is_zero() {
        return l;
    }
    let den = Float::with_val(l.prec(), &l + &r);
    l / den
}

/// Which side of a piece a transition width refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `delta`, on `[2ns, 2ns + s/2]`.
    Left,
    /// `delta_bar`, on `[2ns + s/2, (2n+1)s]`.
    Right,
}

pub struct Sigma {
    params: SigmaParams,
    cache: RwLock<HashMap<Rational, Arc<PieceData>>>,
}

impl Sigma {
    pub fn new(params: SigmaParams) -> Self {
        Self {
            params,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> &SigmaParams {
        &self.params
    }

    /// `h(x) = 1 - min(1/2, lambda) / (1 + ln(x - s + 1))`.
    pub fn envelope_h(&self, x: f64) -> Result<f64> {
        let s = self.params.s;
        if x <= s - 1.0 {
            return domain(format!("h is defined for x > s - 1, got {x}"));
        }
        Ok(1.0 - self.params.lambda_eff() / (1.0 + (x - s + 1.0).ln()))
    }

    pub fn piece(&self, idx: &PieceIndex) -> Result<Arc<PieceData>> {
        if let Some(p) = self.cache.read().unwrap().get(idx.cw_value()) {
            return Ok(p.clone());
        }
        let p = Arc::new(self.build_piece(idx)?);
        // Concurrent builders produce identical data; first insert wins.
        let mut w = self.cache.write().unwrap();
        Ok(w.entry(idx.cw_value().clone()).or_insert(p).clone())
    }

    pub fn piece_n(&self, n: u64) -> Result<Arc<PieceData>> {
        self.piece(&PieceIndex::from_u64(n)?)
    }

    fn piece_precision(&self, idx: &PieceIndex, width: &Rational) -> u32 {
        let mut extra = GUARD_BITS as i64;
        if width.cmp0().is_gt() {
            let w =
                width.numer().significant_bits() as i64 - width.denom().significant_bits() as i64;
            extra += (w + 3).max(0);
        }
        extra += idx.log2_ln_estimate() as i64 + 2;
        extra += (-self.params.lambda_eff().log2()).ceil().max(0.0) as i64;
        self.params.precision + extra as u32
    }

    fn build_piece(&self, idx: &PieceIndex) -> Result<PieceData> {
        let s = self.params.s;
        let lam = self.params.lambda_eff();
        let u = idx.poly()?;
        let b1 = u.lower_bound();
        let b2 = u.upper_bound();
        let width = Rational::from(&b2 - &b1);
        let prec = self.piece_precision(idx, &width);

        // ln(2ns + 1)
        let ln_arg = match idx.to_integer_capped(prec as u64 + 64) {
            Some(n) => {
                let x = Float::with_val(prec + 64, &n) * (2.0 * s) + 1u32;
                Float::with_val(prec, x.ln())
            }
            None => {
                let ln2s = Float::with_val(prec, 2.0 * s).ln();
                idx.ln(prec) + ln2s
            }
        };
        let one_minus_m = Float::with_val(prec, lam) / (ln_arg + 1u32);
        let m = Float::with_val(prec, 1u32 - &one_minus_m);

        let (a, b) = if u.is_constant() {
            (Float::with_val(prec, 0.5), Float::with_val(prec, &m / 2u32))
        } else {
            let w = Float::with_val(prec, &width) * 3u32;
            let num = Float::with_val(prec, Rational::from(&b2 * 2u32) - &b1);
            let a = Float::with_val(prec, 1u32 - Float::with_val(prec, &one_minus_m * &num) / &w);
            let b = Float::with_val(prec, &one_minus_m / &w);
            (a, b)
        };

        let eps = Float::with_val(prec, &one_minus_m / 6u32);
        let width_of = |c: Rational| -> Float {
            let half = Float::with_val(prec, s / 2.0);
            if c.cmp0().is_eq() {
                return half;
            }
            let d = Float::with_val(prec, &eps * s) / (Float::with_val(prec, &b * &c));
            d.min(&half)
        };
        let delta = width_of(u.derivative_bound(&Rational::from((3, 2))));
        let delta_entry = width_of(u.derivative_bound(&Rational::from((1, 2))));

        let coeffs = u
            .coeffs()
            .iter()
            .map(|c| Float::with_val(prec, c))
            .collect();
        Ok(PieceData {
            index: idx.clone(),
            u,
            b1,
            b2,
            prec,
            one_minus_m,
            m,
            a,
            b,
            delta,
            delta_entry,
            coeffs,
        })
    }

    /// Transition width `delta` (left) or `delta_bar` (right) for piece `n`.
    pub fn compute_delta(&self, idx: &PieceIndex, side: Side) -> Result<Float> {
        Ok(match side {
            Side::Left => self.piece(idx)?.delta.clone(),
            Side::Right => self.piece(&idx.succ())?.delta_entry.clone(),
        })
    }

    /// `K_n = (sigma(2ns) + sigma((2n+1)s)) / 2`.
    pub fn k_value(&self, idx: &PieceIndex) -> Result<Float> {
        let p = self.piece(idx)?;
        let q = self.piece(&idx.succ())?;
        let prec = p.prec.max(q.prec);
        let one = Float::with_val(prec, 1);
        let zero = Float::with_val(prec, 0);
        let k = Float::with_val(prec, p.affine(&one) + q.affine(&zero));
        Ok(k / 2u32)
    }

    /// Working precision used for evaluations around piece `n`.
    pub fn precision_at(&self, idx: &PieceIndex) -> Result<u32> {
        Ok(self.piece(idx)?.prec.max(self.piece(&idx.succ())?.prec))
    }

    /// `a_n + b_n u_n(t)` for `t` in `[0, 1]`.
    pub fn sigma_piece_exact(&self, idx: &PieceIndex, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return domain(format!("piece coordinate {t} outside [0, 1]"));
        }
        let p = self.piece(idx)?;
        Ok(p.affine(&Float::with_val(p.prec, t)).to_f64())
    }

    /// `sigma(s (t + 2n - 1))` for `|t| <= MAX_LOCAL_REACH`.
    pub fn sigma_local(&self, idx: &PieceIndex, t: f64) -> Result<f64> {
        Ok(self
            .sigma_local_float(idx, &Float::with_val(64, t))?
            .to_f64())
    }

    /// High-precision [`Sigma::sigma_local`]; the result carries the working
    /// precision of the piece that was evaluated.
    pub fn sigma_local_float(&self, idx: &PieceIndex, t: &Float) -> Result<Float> {
        // neighbours are walked one piece at a time
        if !(t.is_finite() && t.clone().abs() <= MAX_LOCAL_REACH) {
            return domain(format!(
                "local coordinate {t} outside [-{MAX_LOCAL_REACH}, {MAX_LOCAL_REACH}]"
            ));
        }
        let mut idx = idx.clone();
        let mut t = t.clone();
        while t >= 2 {
            idx = idx.succ();
            t -= 2u32;
        }
        while t < 0 {
            match idx.pred() {
                Some(p) => {
                    idx = p;
                    t += 2u32;
                }
                None => return self.tail(&t),
            }
        }
        self.eval_normalized(&idx, t)
    }

    fn tail(&self, t: &Float) -> Result<Float> {
        let p1 = self.piece(&PieceIndex::one())?;
        let prec = p1.prec;
        let z = Float::with_val(prec, t * (-self.params.s));
        let top = Float::with_val(prec, 2u32 - &p1.one_minus_m) / 2u32;
        Ok((1u32 - beta_hat(&z)) * top)
    }

    /// `sigma(0)` at any precision (the constant unit needs it at the
    /// precision of the largest piece in a network).
    pub fn sigma_zero(&self, prec: u32) -> Float {
        let s = self.params.s;
        let ln = Float::with_val(prec, 2.0 * s + 1.0).ln();
        let one_minus_m = Float::with_val(prec, self.params.lambda_eff()) / (ln + 1u32);
        let top = Float::with_val(prec, 2u32 - one_minus_m) / 2u32;
        let decay = beta_hat(&Float::with_val(prec, s));
        (1u32 - decay) * top
    }

    /// `t` in `[0, 2)` relative to piece `idx`.
    fn eval_normalized(&self, idx: &PieceIndex, t: Float) -> Result<Float> {
        let p = self.piece(idx)?;
        if t <= 1 {
            let t = Float::with_val(p.prec, &t);
            return Ok(p.affine(&t));
        }
        let q = self.piece(&idx.succ())?;
        let prec = p.prec.max(q.prec);
        let s = self.params.s;
        let t = Float::with_val(prec, &t);
        let k = self.k_value(idx)?;
        if t <= 1.5 {
            // beta_{2ns, 2ns + delta}(x), x - 2ns = s (t - 1)
            let off = Float::with_val(prec, &t - 1u32) * s;
            let l = beta_hat(&Float::with_val(prec, &p.delta - &off));
            let r = beta_hat(&off);
            let beta = transition_parts(l, r);
            let diff = Float::with_val(prec, &k - p.affine(&t));
            return Ok(k - beta * diff);
        }
        // beta_{(2n+1)s - delta_bar, (2n+1)s}(x), y = x - (2n+1)s = s (t - 2)
        let tq = Float::with_val(prec, &t - 2u32);
        let y = Float::with_val(prec, &tq * s);
        let l = beta_hat(&Float::with_val(prec, -&y));
        let r = beta_hat(&Float::with_val(prec, &y + &q.delta_entry));
        let one_minus_beta = 1u32 - transition_parts(l, r);
        let diff = Float::with_val(prec, &k - q.affine(&tq));
        Ok(k - one_minus_beta * diff)
    }

    /// `sigma(x)` at an absolute argument.
    pub fn sigma(&self, x: f64) -> f64 {
        self.sigma_float(&Float::with_val(64, x))
            .map(|v| v.to_f64())
            .unwrap_or(f64::NAN)
    }

    pub fn sigma_float(&self, x: &Float) -> Result<Float> {
        if !x.is_finite() {
            return domain("non-finite argument");
        }
        let s = self.params.s;
        let prec = x.prec().max(self.params.precision) + 64;
        let xs = Float::with_val(prec, x / s);
        if xs < 1 {
            return self.tail(&Float::with_val(prec, xs - 1u32));
        }
        let n = Float::with_val(prec, Float::with_val(prec, &xs + 1u32) / 2u32).floor();
        let n_int = n.to_integer().expect("finite");
        let t = Float::with_val(prec, xs - Float::with_val(prec, &n * 2u32)) + 1u32;
        let idx = PieceIndex::from_integer(&n_int)?;
        self.eval_normalized(&idx, t)
    }

    /// Number of cached pieces.
    pub fn cached_pieces(&self) -> usize {
        self.cache.read().unwrap().len()
    }
}

impl std::fmt::Debug for Sigma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sigma")
            .field("params", &self.params)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TABLE: [f64; 50] = [
        0.25941, 0.36008, 0.57848, 0.91514, 0.91514, 0.91514, 0.91514, 0.91198, 0.91105, 0.90650,
        0.91169, 0.92728, 0.95325, 0.93437, 0.92551, 0.91549, 0.92958, 0.94366, 0.95775, 0.95532,
        0.94932, 0.94074, 0.93635, 0.93635, 0.94074, 0.93278, 0.93177, 0.92482, 0.92900, 0.94153,
        0.96241, 0.94506, 0.94003, 0.92771, 0.92905, 0.93842, 0.96385, 0.94692, 0.93923, 0.92999,
        0.94166, 0.95333, 0.96499, 0.95602, 0.94295, 0.93186, 0.93943, 0.95079, 0.96593, 0.95800,
    ];

    fn reference_sigma() -> Sigma {
        Sigma::new(SigmaParams::new(3.0, 0.5, 64).unwrap())
    }

    #[test]
    fn table_values() {
        let sg = reference_sigma();
        for (t, want) in TABLE.iter().enumerate() {
            let got = sg.sigma(t as f64);
            assert!((got - want).abs() < 1e-4, "t={t}: {got} vs {want}");
        }
        for (t, want) in [(0, 0.25941), (7, 0.91198), (8, 0.91105), (9, 0.90650)] {
            assert!((sg.sigma(t as f64) - want).abs() < 5e-6);
        }
    }

    #[test]
    fn envelope_examples() {
        let sg = reference_sigma();
        assert!((sg.envelope_h(3.0).unwrap() - 0.5).abs() < 1e-15);
        let h9 = sg.envelope_h(9.0).unwrap();
        assert!((h9 - (1.0 - 0.5 / (1.0 + 7f64.ln()))).abs() < 1e-15);
        assert!((h9 - 0.83027).abs() < 1e-5);
        assert!((sg.envelope_h(15.0).unwrap() - 0.85975).abs() < 1e-5);
        assert!(sg.envelope_h(2.0).is_err());
        assert!(sg.envelope_h(1.0).is_err());
    }

    #[test]
    fn piece_data_examples() {
        let sg = reference_sigma();
        let p1 = sg.piece_n(1).unwrap();
        assert_eq!(p1.a.to_f64(), 0.5);
        assert!((p1.b.to_f64() - sg.envelope_h(9.0).unwrap() / 2.0).abs() < 1e-15);
        let p2 = sg.piece_n(2).unwrap();
        assert_eq!(p2.u.to_string(), "x^2");
        assert_eq!(
            (p2.b1.clone(), p2.b2.clone()),
            (Rational::new(), Rational::from(1))
        );
        assert!((p2.a.to_f64() - 0.90650).abs() < 5e-6);
        assert!((p2.b.to_f64() - 0.04675).abs() < 5e-6);
        let m2 = sg.envelope_h(15.0).unwrap();
        assert!((p2.a.to_f64() - (1.0 + 2.0 * m2) / 3.0).abs() < 1e-15);
        let p4 = sg.piece_n(4).unwrap();
        assert_eq!(
            (p4.b1.clone(), p4.b2.clone()),
            (Rational::from(-1), Rational::from(1))
        );
        // affine map sends [B1, B2] onto [(1+2M)/3, (2+M)/3]
        for n in 2..40u64 {
            let p = sg.piece_n(n).unwrap();
            let m = p.m.to_f64();
            let lo = &p.a + Float::with_val(p.prec, &p.b * &p.b1);
            let hi = &p.a + Float::with_val(p.prec, &p.b * &p.b2);
            assert!((lo.to_f64() - (1.0 + 2.0 * m) / 3.0).abs() < 1e-15);
            assert!((hi.to_f64() - (2.0 + m) / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn transition_examples() {
        assert_eq!(transition(0.0, 1.0, -5.0).unwrap(), 1.0);
        assert_eq!(transition(0.0, 1.0, 2.0).unwrap(), 0.0);
        let v = transition(6.0, 7.5, 7.0).unwrap();
        assert!((v - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
        assert!((transition(2.0, 5.0, 3.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(transition(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn delta_examples() {
        let sg = reference_sigma();
        let one = PieceIndex::one();
        assert_eq!(sg.compute_delta(&one, Side::Left).unwrap().to_f64(), 1.5);
        assert_eq!(sg.compute_delta(&one, Side::Right).unwrap().to_f64(), 1.5);
        // n = 2 -> u_3 = x, C_bar = 1: delta_bar = min(s (B2 - B1) / 2, s/2) = 1.5
        let two = PieceIndex::from_u64(2).unwrap();
        assert_eq!(sg.compute_delta(&two, Side::Right).unwrap().to_f64(), 1.5);
        for n in 1..60 {
            let idx = PieceIndex::from_u64(n).unwrap();
            for side in [Side::Left, Side::Right] {
                let d = sg.compute_delta(&idx, side).unwrap().to_f64();
                assert!(d > 0.0 && d <= 1.5);
            }
        }
    }

    #[test]
    fn piece_exact_examples() {
        let sg = reference_sigma();
        let two = PieceIndex::from_u64(2).unwrap();
        assert!((sg.sigma_piece_exact(&two, 0.0).unwrap() - 0.90650).abs() < 5e-6);
        let one = PieceIndex::one();
        let m1 = sg.envelope_h(9.0).unwrap();
        assert!((sg.sigma_piece_exact(&one, 0.3).unwrap() - (1.0 + m1) / 2.0).abs() < 1e-15);
        let three = PieceIndex::from_u64(3).unwrap();
        let p3 = sg.piece_n(3).unwrap();
        let want = p3.a.to_f64() + p3.b.to_f64() * 0.25;
        assert!((sg.sigma_piece_exact(&three, 0.25).unwrap() - want).abs() < 1e-15);
        assert!(sg.sigma_piece_exact(&three, 1.5).is_err());
    }

    #[test]
    fn local_matches_absolute() {
        let sg = reference_sigma();
        for n in 1..30u64 {
            let idx = PieceIndex::from_u64(n).unwrap();
            for k in -8..=12 {
                let t = k as f64 / 4.0;
                let x = 3.0 * (t + 2.0 * n as f64 - 1.0);
                let a = sg.sigma(x);
                let b = sg.sigma_local(&idx, t).unwrap();
                assert!((a - b).abs() < 1e-14, "n={n} t={t}: {a} vs {b}");
            }
        }
        let idx = PieceIndex::from_u64(5).unwrap();
        let far = sg.sigma_local(&idx, -7.5).unwrap();
        assert!((far - sg.sigma(3.0 * (-7.5 + 9.0))).abs() < 1e-14);
        assert!(sg.sigma_local(&idx, 1e5).is_err());
        assert!(sg.sigma_local(&idx, f64::NAN).is_err());
    }

    #[test]
    fn huge_piece_sandwich() {
        let sg = reference_sigma();
        let n = rug::Integer::from(1) << 256u32;
        let idx = PieceIndex::from_integer(&n).unwrap();
        let p = sg.piece(&idx).unwrap();
        let v = sg
            .sigma_local_float(&idx, &Float::with_val(64, 0.5))
            .unwrap();
        assert!(v > p.m && v < 1);
    }
}
