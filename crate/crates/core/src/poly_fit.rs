//! Single-neuron representation of univariate functions on `[0, 1]`.
//!
//! A target `g` is approximated by `p_0 u(x)` with `u` monic and rational.
//! Since `sigma` equals `a_n + b_n u_n(t)` on piece `n`,
//! `g(x) ~ alpha sigma(s x + (2n - 1) s) - gamma` with `alpha = p_0 / b_n` and
//! `gamma = p_0 a_n / b_n`.
//!
//! Fitting searches degrees upward: Chebyshev interpolation, then Lawson
//! reweighting toward the discrete minimax on the verification grid. The real
//! fit is converted exactly to monomials and its coefficients are snapped to
//! the simplest rationals inside an error window. Small coefficients are what
//! make indices enormous, so candidates that add a multiple of the next
//! shifted Chebyshev polynomial ("lifting" the leading coefficient) are also
//! tried and the shallowest one is kept.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::activation::Sigma;
use crate::enumeration::{parse_rational, rational_to_string, simplest_between, MonicPoly};
use crate::error::{Error, Result};
use crate::index::PieceIndex;

/// Equispaced points on `[0, 1]` plus Chebyshev nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationGrid {
    pub equispaced: usize,
    pub chebyshev: usize,
}

impl Default for VerificationGrid {
    fn default() -> Self {
        Self {
            equispaced: 1025,
            chebyshev: 64,
        }
    }
}

impl VerificationGrid {
    pub fn points(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.equispaced + self.chebyshev);
        let m = self.equispaced.max(2) - 1;
        for i in 0..=m {
            v.push(i as f64 / m as f64);
        }
        let c = self.chebyshev;
        for j in 0..c {
            let th = std::f64::consts::PI * (j as f64 + 0.5) / c as f64;
            v.push((th.cos() + 1.0) / 2.0);
        }
        v
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub max_degree: usize,
    pub grid: VerificationGrid,
    /// Fraction of the tolerance given to the real-coefficient approximation.
    pub approx_share: f64,
    pub lawson_iterations: usize,
    /// Largest Stern–Brocot depth allowed for a coefficient of `u`. Working
    /// precision grows linearly with it.
    pub max_depth: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_degree: 40,
            grid: VerificationGrid::default(),
            approx_share: 0.9,
            lawson_iterations: 400,
            max_depth: 1 << 17,
        }
    }
}

/// `g ~ p0 * u` with exact rational data.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalizedFit {
    pub p0: Rational,
    pub u: MonicPoly,
    /// Sup of `|g - p0 u|` on the verification grid.
    pub sup_error: f64,
    pub degree: usize,
    /// Grid error of the real-coefficient approximation before rounding.
    pub approx_error: f64,
}

impl RationalizedFit {
    pub fn zero() -> Self {
        Self {
            p0: Rational::new(),
            u: MonicPoly::one(),
            sup_error: 0.0,
            degree: 0,
            approx_error: 0.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        eval_exactish(&self.p0, &self.u, x, working_bits(&self.u))
    }
}

fn magnitude_bits(r: &Rational) -> i64 {
    if r.cmp0() == Ordering::Equal {
        return 0;
    }
    r.numer().significant_bits() as i64 - r.denom().significant_bits() as i64
}

fn working_bits(u: &MonicPoly) -> u32 {
    let big = u
        .coeffs()
        .iter()
        .map(magnitude_bits)
        .max()
        .unwrap_or(0)
        .max(0);
    128 + big as u32 + 2 * u.degree() as u32
}

fn eval_exactish(p0: &Rational, u: &MonicPoly, x: f64, prec: u32) -> f64 {
    let x = Float::with_val(prec, x);
    let mut acc = Float::with_val(prec, 1);
    for c in u.coeffs().iter().rev() {
        acc *= &x;
        acc += c;
    }
    (acc * p0).to_f64()
}

fn chebyshev_interpolate(g: &dyn Fn(f64) -> f64, m: usize) -> Vec<f64> {
    let n = m + 1;
    let pi = std::f64::consts::PI;
    let vals: Vec<f64> = (0..n)
        .map(|j| {
            let y = (pi * (j as f64 + 0.5) / n as f64).cos();
            g((y + 1.0) / 2.0)
        })
        .collect();
    (0..n)
        .map(|k| {
            let s: f64 = vals
                .iter()
                .enumerate()
                .map(|(j, v)| v * (pi * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                .sum();
            let c = 2.0 * s / n as f64;
            if k == 0 {
                c / 2.0
            } else {
                c
            }
        })
        .collect()
}

/// Clenshaw evaluation of `sum c_k T_k(2x - 1)`.
pub fn chebyshev_eval(c: &[f64], x: f64) -> f64 {
    let y = 2.0 * x - 1.0;
    let (mut b1, mut b2) = (0.0, 0.0);
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * y * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    y * b1 - b2 + c.first().copied().unwrap_or(0.0)
}

fn chebyshev_vandermonde(xs: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), m + 1, |i, k| {
        let y = 2.0 * xs[i] - 1.0;
        (k as f64 * y.clamp(-1.0, 1.0).acos()).cos()
    })
}

fn max_error(v: &DMatrix<f64>, c: &DVector<f64>, g: &DVector<f64>) -> (DVector<f64>, f64) {
    let e = (v * c - g).abs();
    let mx = e.max();
    (e, mx)
}

/// Lawson's iteratively reweighted least squares toward the discrete minimax.
fn lawson(v: &DMatrix<f64>, g: &DVector<f64>, iters: usize, target: f64) -> (Vec<f64>, f64) {
    let n = v.nrows();
    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut since_gain = 0;
    for _ in 0..iters {
        let vt_w = DMatrix::from_fn(v.ncols(), n, |k, i| v[(i, k)] * w[i]);
        let a = &vt_w * v;
        let rhs = &vt_w * g;
        let c = match a.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match a.svd(true, true).solve(&rhs, 1e-14) {
                Ok(c) => c,
                Err(_) => break,
            },
        };
        let (e, mx) = max_error(v, &c, g);
        let improved = match &best {
            None => true,
            Some((b, _)) => mx < *b * (1.0 - 1e-4),
        };
        if best.as_ref().is_none_or(|(b, _)| mx < *b) {
            best = Some((mx, c));
        }
        if improved {
            since_gain = 0;
        } else {
            since_gain += 1;
        }
        if mx < target || since_gain > 60 {
            break;
        }
        let mut total = 0.0;
        for i in 0..n {
            w[i] = w[i] * e[i] + 1e-300;
            total += w[i];
        }
        w /= total;
    }
    let (mx, c) = best.expect("at least one iteration");
    (c.iter().copied().collect(), mx)
}

/// Integer monomial coefficients of the shifted Chebyshev polynomials
/// `T*_k(x) = T_k(2x - 1)` for `k = 0..=m`.
pub fn shifted_chebyshev(m: usize) -> Vec<Vec<Integer>> {
    let mut t: Vec<Vec<Integer>> = vec![vec![Integer::from(1)]];
    if m >= 1 {
        t.push(vec![Integer::from(-1), Integer::from(2)]);
    }
    for k in 1..m {
        // T_{k+1} = (4x - 2) T_k - T_{k-1}
        let mut next = vec![Integer::new(); k + 2];
        for (i, c) in t[k].iter().enumerate() {
            next[i + 1] += Integer::from(c * 4u32);
            next[i] -= Integer::from(c * 2u32);
        }
        for (i, c) in t[k - 1].iter().enumerate() {
            next[i] -= c;
        }
        t.push(next);
    }
    t
}

/// Exact monomial coefficients (ascending) of `sum c_k T*_k`.
fn chebyshev_to_monomial(c: &[f64], tstar: &[Vec<Integer>]) -> Vec<Rational> {
    let mut out = vec![Rational::new(); c.len()];
    for (k, ck) in c.iter().enumerate() {
        let ck = Rational::from_f64(*ck).expect("finite coefficient");
        for (i, t) in tstar[k].iter().enumerate() {
            out[i] += Rational::from(&ck * t);
        }
    }
    out
}

struct Candidate {
    p0: Rational,
    u: MonicPoly,
    depth: Integer,
}

/// Rounds the monic normalization of `full` (ascending, leading term last)
/// coefficient by coefficient inside windows that cost at most `budget` in
/// sup norm on `[0, 1]`.
fn round_monic(full: &[Rational], budget: f64) -> Option<Candidate> {
    let mut full = full.to_vec();
    while full.last().is_some_and(|c| c.cmp0() == Ordering::Equal) {
        full.pop();
    }
    let p0 = full.pop()?;
    let count = full.len().max(1) as u32;
    let w = Rational::from_f64(budget * 0.95)? / Rational::from(p0.abs_ref()) / count;
    let coeffs: Vec<Rational> = full
        .iter()
        .map(|c| {
            let rho = Rational::from(c / &p0);
            simplest_between(&Rational::from(&rho - &w), &Rational::from(&rho + &w))
        })
        .collect();
    let u = MonicPoly::from_coeffs(coeffs);
    // p0 is not part of the index, so it only needs to look tidy: snap within
    // a relative 1e-12 (capped by a sliver of the budget).
    let unorm = u.coeffs().iter().fold(Rational::from(1), |acc, c| {
        acc + Rational::from(c.abs_ref())
    });
    let rel = Rational::from(p0.abs_ref()) * Rational::from((1, 1_000_000_000_000u64));
    let cap = Rational::from_f64(budget / 20.0)? / unorm;
    let pw = if rel < cap { rel } else { cap };
    let p0 = simplest_between(&Rational::from(&p0 - &pw), &Rational::from(&p0 + &pw));
    let depth = u.max_depth();
    Some(Candidate { p0, u, depth })
}

fn grid_error(g_vals: &[f64], xs: &[f64], p0: &Rational, u: &MonicPoly) -> f64 {
    let prec = working_bits(u);
    xs.iter()
        .zip(g_vals)
        .map(|(&x, &gx)| (gx - eval_exactish(p0, u, x, prec)).abs())
        .fold(0.0, f64::max)
}

/// Rationalizes a real fit `c` (Chebyshev basis) with approximation error
/// `approx` against `tol`; `None` if no candidate verifies.
fn rationalize(
    c: &[f64],
    approx: f64,
    tol: f64,
    xs: &[f64],
    g_vals: &[f64],
    max_depth: u64,
    too_deep: &mut bool,
) -> Option<RationalizedFit> {
    let m = c.len() - 1;
    let tstar = shifted_chebyshev(m + 1);
    let base = chebyshev_to_monomial(c, &tstar);
    let spare = tol - approx;
    if spare <= 0.0 {
        return None;
    }
    let lead_next = Rational::from(&tstar[m + 1][m + 1]);
    // eta * T*_{m+1} / lead has sup norm eta / lead on [0, 1]
    let lift_cap = spare / 4.0;
    let kmax = (lift_cap * lead_next.to_f64()).log2().floor() as i64;

    let mut lifts: Vec<Option<i64>> = vec![None];
    lifts.extend((kmax - 60..=kmax).map(Some));

    let mut share = 0.9;
    for _ in 0..8 {
        let mut best: Option<(Candidate, f64)> = None;
        for lift in &lifts {
            let (full, cost) = match lift {
                None => (base.clone(), 0.0),
                Some(k) => {
                    let eta = if *k >= 0 {
                        Rational::from(Integer::from(1) << *k as u32)
                    } else {
                        Rational::from((1, Integer::from(1) << (-*k) as u32))
                    };
                    let scale = Rational::from(&eta / &lead_next);
                    let mut full = base.clone();
                    full.push(Rational::new());
                    for (i, t) in tstar[m + 1].iter().enumerate() {
                        full[i] += Rational::from(&scale * t);
                    }
                    (full, scale.to_f64())
                }
            };
            let budget = (spare - cost) * share;
            if budget <= 0.0 {
                continue;
            }
            let Some(cand) = round_monic(&full, budget) else {
                continue;
            };
            if cand.depth > max_depth {
                *too_deep = true;
                continue;
            }
            if best.as_ref().is_none_or(|(b, _)| cand.depth < b.depth) {
                best = Some((cand, cost));
            }
        }
        let (cand, _) = best?;
        let err = grid_error(g_vals, xs, &cand.p0, &cand.u);
        if err < tol {
            return Some(RationalizedFit {
                degree: cand.u.degree(),
                p0: cand.p0,
                u: cand.u,
                sup_error: err,
                approx_error: approx,
            });
        }
        share /= 4.0;
    }
    None
}

/// Fits `g` on `[0, 1]` by `p0 * u` with `u` monic rational, to grid error
/// below `tol`.
pub fn fit_polynomial(
    g: &(dyn Fn(f64) -> f64 + Sync),
    tol: f64,
    opts: &FitOptions,
) -> Result<RationalizedFit> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let xs = opts.grid.points();
    let g_vals: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    if g_vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "target has non-finite values on the grid".into(),
        ));
    }
    if g_vals.iter().all(|&v| v == 0.0) {
        return Ok(RationalizedFit::zero());
    }
    let target = tol * opts.approx_share;
    let gv = DVector::from_column_slice(&g_vals);
    let mut best = f64::INFINITY;
    let mut too_deep = false;
    for m in 0..=opts.max_degree {
        let mut c = chebyshev_interpolate(g, m);
        let mut err = xs
            .iter()
            .zip(&g_vals)
            .map(|(&x, &gx)| (chebyshev_eval(&c, x) - gx).abs())
            .fold(0.0, f64::max);
        if err >= target && m > 0 {
            let v = chebyshev_vandermonde(&xs, m);
            let (lc, le) = lawson(&v, &gv, opts.lawson_iterations, target);
            if le < err {
                c = lc;
                err = le;
            }
        }
        best = best.min(err);
        if err >= target {
            continue;
        }
        if let Some(fit) = rationalize(&c, err, tol, &xs, &g_vals, opts.max_depth, &mut too_deep) {
            return Ok(fit);
        }
    }
    let stage = if too_deep {
        format!(
            "polynomial fit up to degree {} with coefficient depth at most {}",
            opts.max_degree, opts.max_depth
        )
    } else {
        format!("polynomial fit up to degree {}", opts.max_degree)
    };
    Err(Error::Budget {
        stage,
        achieved: best,
        allowed: tol,
    })
}

/// `x -> alpha sigma(s x + (2n - 1) s) - gamma`, equal to `p0 u(x)` on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct SigmaTerm {
    pub p0: Rational,
    pub u: MonicPoly,
    pub index: PieceIndex,
    pub alpha: Float,
    pub gamma: Float,
}

impl SigmaTerm {
    pub fn from_parts(p0: Rational, u: MonicPoly, sigma: &Sigma) -> Result<Self> {
        if p0.cmp0() == Ordering::Equal {
            let prec = sigma.params().precision;
            return Ok(Self {
                p0,
                u: MonicPoly::one(),
                index: PieceIndex::one(),
                alpha: Float::with_val(prec, 0),
                gamma: Float::with_val(prec, 0),
            });
        }
        if u.is_constant() {
            // the constant is carried entirely by gamma so the neuron is flat
            // on every piece, not just on the interior of piece 1
            let prec = sigma.params().precision;
            let gamma = -Float::with_val(prec, &p0);
            return Ok(Self {
                p0,
                u,
                index: PieceIndex::one(),
                alpha: Float::with_val(prec, 0),
                gamma,
            });
        }
        let index = PieceIndex::from_poly(&u)?;
        let piece = sigma.piece(&index)?;
        let prec = sigma.precision_at(&index)?;
        let alpha = Float::with_val(prec, &p0) / &piece.b;
        let gamma = Float::with_val(prec, &alpha * &piece.a);
        Ok(Self {
            p0,
            u,
            index,
            alpha,
            gamma,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.p0.cmp0() == Ordering::Equal
    }

    /// True when the neuron's output does not depend on its input.
    pub fn is_constant(&self) -> bool {
        self.alpha.is_zero()
    }

    pub fn precision(&self) -> u32 {
        self.alpha.prec()
    }

    /// Threshold `beta = s - 2ns` when `n` is printable.
    pub fn beta_decimal(&self, s: f64) -> Option<String> {
        let n = self.index.to_integer_capped(4096)?;
        let v = Rational::from_f64(s)? * (Rational::from(1) - Rational::from(n * 2u32));
        Some(rational_to_string(&v))
    }

    /// Evaluates the neuron at local coordinate `t` (`t = x` for inputs in
    /// `[0, 1]`).
    pub fn eval_float(&self, sigma: &Sigma, t: &Float) -> Result<Float> {
        if self.is_constant() {
            return Ok(-Float::with_val(self.precision(), &self.gamma));
        }
        let v = sigma.sigma_local_float(&self.index, t)?;
        let prec = v.prec().max(self.precision());
        Ok(Float::with_val(prec, &self.alpha * &v) - &self.gamma)
    }

    pub fn eval(&self, sigma: &Sigma, t: f64) -> Result<f64> {
        Ok(self.eval_float(sigma, &Float::with_val(64, t))?.to_f64())
    }

    pub fn to_record(&self) -> SigmaTermRecord {
        SigmaTermRecord {
            alpha: float_decimal(&self.alpha),
            n: self.index.to_decimal(),
            gamma: float_decimal(&self.gamma),
            p0: rational_to_string(&self.p0),
            u: self.u.clone(),
            index_bits: self.index.bit_length().to_string(),
        }
    }

    pub fn from_record(rec: &SigmaTermRecord, sigma: &Sigma) -> Result<Self> {
        Self::from_parts(parse_rational(&rec.p0)?, rec.u.clone(), sigma)
    }
}

/// 25 significant decimal digits; inspection only.
pub fn float_decimal(x: &Float) -> String {
    if x.is_zero() {
        return "0".into();
    }
    x.to_string_radix(10, Some(25))
}

/// JSON form of a [`SigmaTerm`]. `u` and `p0` are authoritative; `alpha`,
/// `gamma` are rounded mirrors and `n` is null when the index is too long to
/// print.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaTermRecord {
    pub alpha: String,
    pub n: Option<String>,
    pub gamma: String,
    pub p0: String,
    pub u: MonicPoly,
    pub index_bits: String,
}

/// Builds the neuron for a fit.
pub fn sigma_rep(fit: &RationalizedFit, sigma: &Sigma) -> Result<SigmaTerm> {
    SigmaTerm::from_parts(fit.p0.clone(), fit.u.clone(), sigma)
}

/// A fitted neuron together with its error measured through `sigma`.
#[derive(Clone, Debug)]
pub struct UnivariateRep {
    pub term: SigmaTerm,
    pub fit: RationalizedFit,
    pub sigma_error: f64,
}

/// Sup over the grid of `|g(x) - term(x)|`, evaluated through `sigma`.
pub fn term_grid_error(
    g: &(dyn Fn(f64) -> f64 + Sync),
    term: &SigmaTerm,
    sigma: &Sigma,
    grid: &VerificationGrid,
) -> Result<f64> {
    use rayon::prelude::*;
    let xs = grid.points();
    let errs: Vec<f64> = xs
        .par_iter()
        .map(|&x| term.eval(sigma, x).map(|v| (g(x) - v).abs()))
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Fit plus neuron, checked end to end through `sigma`.
pub fn represent_univariate(
    g: &(dyn Fn(f64) -> f64 + Sync),
    tol: f64,
    sigma: &Sigma,
    opts: &FitOptions,
) -> Result<UnivariateRep> {
    let fit = fit_polynomial(g, tol, opts)?;
    let term = sigma_rep(&fit, sigma)?;
    let sigma_error = term_grid_error(g, &term, sigma, &opts.grid)?;
    if !(sigma_error < tol) {
        return Err(Error::Budget {
            stage: "single-neuron representation".into(),
            achieved: sigma_error,
            allowed: tol,
        });
    }
    Ok(UnivariateRep {
        term,
        fit,
        sigma_error,
    })
}
