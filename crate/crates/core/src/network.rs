//! The fixed-weight two-hidden-layer network
//!
//! ```text
//! N(x) = sum_{p=1}^{2d+2} e_p sigma( sum_{q=1}^{d} c_pq sigma(w^q . x - theta_pq) - zeta_p )
//! ```
//!
//! on the box `[a, a + s]^d`, with `w^q` the coordinate vectors. Units
//! `1..=2d+1` realize `g(sum_q lambda_q phi_p(x_q))` from a superposition; the
//! last unit has all `c = 0` and supplies the constant `-(2d+1) gamma_0`.
//!
//! Thresholds contain `2 s n` for piece indices `n` that are usually far too
//! long to write down, so they are stored as (piece, offset) pairs and the
//! network is evaluated in local piece coordinates.

use std::sync::Arc;

use rayon::prelude::*;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::activation::{Sigma, SigmaParams};
use crate::error::{domain, Error, Result};
use crate::kst::{build_decomposition_with, compute_outer, tensor_grid, KstOptions};
use crate::poly_fit::{
    float_decimal, represent_univariate, FitOptions, SigmaTerm, SigmaTermRecord,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Fractions of `eps` given to each stage; they should sum to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub kst: f64,
    pub outer_fit: f64,
    pub propagation: f64,
}

impl Default for BudgetSplit {
    fn default() -> Self {
        Self {
            kst: 0.25,
            outer_fit: 0.25,
            propagation: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub kst: KstOptions,
    pub kst_iterations: usize,
    /// Factor applied to the superposition budget to get the iteration target.
    pub kst_overshoot: f64,
    /// Points per axis for the outer-function iteration; `None` picks by `d`.
    pub kst_grid: Option<usize>,
    pub fit: FitOptions,
    /// Points per axis for the final error measurement; `None` picks by `d`.
    pub verify_grid: Option<usize>,
    /// Initial half-width of the range around `[0, 1]` where the outer neuron's
    /// modulus of continuity is measured.
    pub pad: f64,
    pub modulus_samples: usize,
    pub split: BudgetSplit,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            kst: KstOptions::default(),
            kst_iterations: 500,
            kst_overshoot: 0.01,
            kst_grid: None,
            fit: FitOptions::default(),
            verify_grid: None,
            pad: 0.125,
            modulus_samples: 4097,
            split: BudgetSplit::default(),
        }
    }
}

/// Grid points per axis used when none is given.
pub fn default_grid(d: usize) -> usize {
    match d {
        1 => 1025,
        2 => 33,
        3 => 13,
        _ => 7,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageBudgets {
    pub kst: f64,
    pub outer_fit: f64,
    pub propagation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub eps: f64,
    pub budgets: StageBudgets,
    pub kst_residual: f64,
    pub kst_iterations: usize,
    pub kst_history: Vec<f64>,
    pub kst_stagnated: bool,
    /// Grid error of the outer neuron against the tabulated outer function.
    pub outer_fit_error: f64,
    /// How far inner sums may leave `[0, 1]` for the propagation budget.
    pub reach: f64,
    /// Tolerance handed to each inner fit (`delta`).
    pub delta: f64,
    pub inner_fit_errors: Vec<f64>,
    pub measured_error: f64,
    pub verify_grid: usize,
    pub within_eps: bool,
    pub outer_units: usize,
    pub first_layer_evaluations: usize,
    pub hidden_neurons_compact: usize,
    pub outer_degree: usize,
    pub outer_index_bits: String,
    pub working_precision: u32,
}

/// Largest `delta` (estimated, then halved) such that `|x - y| <= delta` on
/// `[-pad, 1 + pad]` keeps the neuron's values within `tol`.
pub fn modulus_delta(
    term: &SigmaTerm,
    tol: f64,
    range_pad: f64,
    sigma: &Sigma,
    samples: usize,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let range = 1.0 + 2.0 * range_pad;
    if term.is_constant() {
        return Ok(range);
    }
    let n = samples.max(3) - 1;
    let h = range / n as f64;
    let vals: Vec<f64> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let x = -range_pad + i as f64 * h;
            // the constant gamma cancels in differences
            sigma
                .sigma_local_float(&term.index, &Float::with_val(64, x))
                .map(|v| Float::with_val(v.prec().max(term.precision()), &term.alpha * &v))
                .map(|v| (v - &term.gamma).to_f64())
        })
        .collect::<Result<_>>()?;
    let mut prev = 0.0;
    for k in 1..=n {
        let w = (0..=n - k)
            .map(|i| (vals[i + k] - vals[i]).abs())
            .fold(prev, f64::max);
        if w > tol {
            let frac = (tol - prev) / (w - prev);
            return Ok(((k - 1) as f64 + frac) * h / 2.0);
        }
        prev = w;
    }
    Ok(range)
}

/// Largest `r <= max_pad` with `modulus_delta(term, tol, r) >= r`: inner sums
/// that stray at most `r` outside `[0, 1]` then move the outer unit by at most
/// `tol`.
pub fn propagation_reach(
    term: &SigmaTerm,
    tol: f64,
    max_pad: f64,
    sigma: &Sigma,
    samples: usize,
) -> Result<f64> {
    let mut hi = max_pad;
    let first = modulus_delta(term, tol, hi, sigma, samples)?;
    if first >= hi {
        return Ok(hi);
    }
    // the modulus only grows as the range shrinks, so `first` is feasible
    let mut lo = first;
    for _ in 0..10 {
        let mid = (lo * hi).sqrt();
        if modulus_delta(term, tol, mid, sigma, samples)? >= mid {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Network of the main construction together with the exact data it was
/// assembled from.
#[derive(Clone, Debug)]
pub struct TlfnModel {
    pub d: usize,
    pub a: f64,
    pub eps: f64,
    pub params: SigmaParams,
    pub outer: SigmaTerm,
    pub inner: Vec<SigmaTerm>,
    pub kst_weights: Vec<f64>,
    sigma: Arc<Sigma>,
    prec: u32,
    /// `c_pq = s lambda_q alpha_p`.
    c: Vec<Vec<Float>>,
    /// `zeta_p = offsets[p] - 2 s n_0`, i.e. `offsets[p] = s gamma_p + s`.
    offsets: Vec<Float>,
    e_const: Float,
    sigma0: Float,
}

impl TlfnModel {
    pub fn assemble(
        d: usize,
        a: f64,
        eps: f64,
        sigma: Arc<Sigma>,
        outer: SigmaTerm,
        inner: Vec<SigmaTerm>,
        kst_weights: Vec<f64>,
    ) -> Result<Self> {
        if inner.len() != 2 * d + 1 || kst_weights.len() != d {
            return Err(Error::Input(format!(
                "need {} inner terms and {d} weights, got {} and {}",
                2 * d + 1,
                inner.len(),
                kst_weights.len()
            )));
        }
        let params = *sigma.params();
        let s = params.s;
        let prec = inner
            .iter()
            .map(|t| t.precision())
            .chain([outer.precision()])
            .max()
            .unwrap()
            + 16;
        let c = inner
            .iter()
            .map(|t| {
                kst_weights
                    .iter()
                    .map(|l| Float::with_val(prec, &t.alpha * (s * l)))
                    .collect()
            })
            .collect();
        let offsets = inner
            .iter()
            .map(|t| Float::with_val(prec, &t.gamma * s) + s)
            .collect();
        let sigma0 = sigma.sigma_zero(prec);
        let e_const = Float::with_val(prec, &outer.gamma * -((2 * d + 1) as i32)) / &sigma0;
        Ok(Self {
            d,
            a,
            eps,
            params,
            outer,
            inner,
            kst_weights,
            sigma,
            prec,
            c,
            offsets,
            e_const,
            sigma0,
        })
    }

    pub fn sigma(&self) -> &Sigma {
        &self.sigma
    }

    pub fn box_bounds(&self) -> (f64, f64) {
        (self.a, self.a + self.params.s)
    }

    pub fn outer_units(&self) -> usize {
        2 * self.d + 2
    }

    /// First-layer weight vectors `w^1..w^d`.
    pub fn input_weights(&self) -> Vec<Vec<u8>> {
        (0..self.d)
            .map(|q| (0..self.d).map(|i| u8::from(i == q)).collect())
            .collect()
    }

    /// `e_1..e_{2d+2}`.
    pub fn e(&self) -> Vec<Float> {
        let mut v = vec![Float::with_val(self.prec, &self.outer.alpha); 2 * self.d + 1];
        v.push(self.e_const.clone());
        v
    }

    pub fn working_precision(&self) -> u32 {
        self.prec
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.evaluate_float(x)?.to_f64())
    }

    pub fn evaluate_float(&self, x: &[f64]) -> Result<Float> {
        if x.len() != self.d {
            return domain(format!("expected {} coordinates, got {}", self.d, x.len()));
        }
        let s = self.params.s;
        let (lo, hi) = self.box_bounds();
        let slack = 1e-12 * s.max(1.0);
        let mut local = Vec::with_capacity(self.d);
        for &v in x {
            if !(v >= lo - slack && v <= hi + slack) {
                return domain(format!("{v} outside [{lo}, {hi}]"));
            }
            local.push(((v - lo) / s).clamp(0.0, 1.0));
        }
        let mut total = Float::with_val(self.prec, &self.e_const * &self.sigma0);
        for (p, term) in self.inner.iter().enumerate() {
            let mut y = Float::with_val(self.prec, 0);
            if !term.is_constant() {
                for (q, &t) in local.iter().enumerate() {
                    let v = self
                        .sigma
                        .sigma_local_float(&term.index, &Float::with_val(64, t))?;
                    y += Float::with_val(self.prec, &self.c[p][q] * &v);
                }
            }
            // local coordinate of the outer unit in piece n_0
            let t = (y - &self.offsets[p]) / s + 1u32;
            if self.outer.is_constant() {
                continue;
            }
            let v = self.sigma.sigma_local_float(&self.outer.index, &t)?;
            total += Float::with_val(self.prec, &self.outer.alpha * &v);
        }
        Ok(total)
    }

    pub fn to_record(&self) -> TlfnRecord {
        let s = self.params.s;
        let e = self.e();
        TlfnRecord {
            schema_version: SCHEMA_VERSION,
            d: self.d,
            a: self.a.to_string(),
            s: s.to_string(),
            lambda_mono: self.params.lambda_mono.to_string(),
            precision: self.params.precision,
            eps: self.eps.to_string(),
            input_weights: self.input_weights(),
            kst_weights: self.kst_weights.iter().map(|w| w.to_string()).collect(),
            outer: self.outer.to_record(),
            inner: self.inner.iter().map(|t| t.to_record()).collect(),
            e: e.iter().map(float_decimal).collect(),
            constant_unit: ConstantUnit {
                e: float_decimal(&self.e_const),
                zeta: "0".into(),
            },
            mirrors: Mirrors {
                note: "rounded copies for inspection; rebuilt from outer/inner on load and checked"
                    .into(),
                c: self
                    .c
                    .iter()
                    .map(|row| row.iter().map(float_decimal).collect())
                    .collect(),
                theta: self
                    .inner
                    .iter()
                    .map(|t| Threshold {
                        n: t.index.to_decimal(),
                        offset: (self.a + s).to_string(),
                        n_scale: (2.0 * s).to_string(),
                    })
                    .collect(),
                zeta: self
                    .offsets
                    .iter()
                    .map(|o| Threshold {
                        n: self.outer.index.to_decimal(),
                        offset: float_decimal(o),
                        n_scale: (2.0 * s).to_string(),
                    })
                    .collect(),
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_record())?)
    }

    pub fn from_record(rec: &TlfnRecord) -> Result<Self> {
        if rec.schema_version != SCHEMA_VERSION {
            return Err(Error::Input(format!(
                "unsupported schema_version {}",
                rec.schema_version
            )));
        }
        let num = |name: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::Parse(format!("{name}: bad number {v:?}")))
        };
        let params = SigmaParams::new(
            num("s", &rec.s)?,
            num("lambda_mono", &rec.lambda_mono)?,
            rec.precision,
        )?;
        let sigma = Arc::new(Sigma::new(params));
        let outer = SigmaTerm::from_record(&rec.outer, &sigma)?;
        let inner = rec
            .inner
            .iter()
            .map(|r| SigmaTerm::from_record(r, &sigma))
            .collect::<Result<Vec<_>>>()?;
        let weights = rec
            .kst_weights
            .iter()
            .map(|w| num("kst_weights", w))
            .collect::<Result<Vec<_>>>()?;
        let model = Self::assemble(
            rec.d,
            num("a", &rec.a)?,
            num("eps", &rec.eps)?,
            sigma,
            outer,
            inner,
            weights,
        )?;
        let fresh = model.to_record();
        let checks: [(&str, bool); 5] = [
            ("input_weights", fresh.input_weights == rec.input_weights),
            ("e", fresh.e == rec.e),
            ("constant_unit", fresh.constant_unit == rec.constant_unit),
            ("outer", fresh.outer == rec.outer),
            ("inner", fresh.inner == rec.inner),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::Inconsistent(format!(
                    "field {field} does not match the network rebuilt from its exact data"
                )));
            }
        }
        if fresh.mirrors != rec.mirrors {
            return Err(Error::Inconsistent(
                "mirrors do not match the exact data".into(),
            ));
        }
        Ok(model)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(&serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantUnit {
    pub e: String,
    pub zeta: String,
}

/// `value = offset - n_scale * n`; `n` is null when not printable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub n: Option<String>,
    pub offset: String,
    pub n_scale: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mirrors {
    pub note: String,
    pub c: Vec<Vec<String>>,
    pub theta: Vec<Threshold>,
    pub zeta: Vec<Threshold>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlfnRecord {
    pub schema_version: u32,
    pub d: usize,
    pub a: String,
    pub s: String,
    pub lambda_mono: String,
    pub precision: u32,
    pub eps: String,
    pub input_weights: Vec<Vec<u8>>,
    pub kst_weights: Vec<String>,
    pub outer: SigmaTermRecord,
    pub inner: Vec<SigmaTermRecord>,
    pub e: Vec<String>,
    pub constant_unit: ConstantUnit,
    pub mirrors: Mirrors,
}

/// Max over the tensor grid of `|f(x) - N(x)|`.
pub fn sup_error(
    model: &TlfnModel,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    grid_per_axis: usize,
) -> Result<f64> {
    if grid_per_axis < 2 {
        return Err(Error::Input("grid needs at least 2 points per axis".into()));
    }
    let (lo, hi) = model.box_bounds();
    let pts = tensor_grid(model.d, lo, hi, grid_per_axis);
    let errs: Vec<f64> = pts
        .par_iter()
        .map(|x| model.evaluate(x).map(|v| (f(x) - v).abs()))
        .collect::<Result<_>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// Builds the network for `f` on `[a, a + s]^d` with target accuracy `eps`.
pub fn build_network(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    d: usize,
    a: f64,
    eps: f64,
    params: SigmaParams,
    opts: &BuildOptions,
) -> Result<(TlfnModel, BuildReport)> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!("eps must be positive, got {eps}")));
    }
    let s = params.s;
    let terms = 2 * d + 1;
    let split = opts.split;
    let budgets = StageBudgets {
        kst: eps * split.kst,
        outer_fit: eps * split.outer_fit,
        propagation: eps * split.propagation,
    };

    let kst_grid = opts.kst_grid.unwrap_or_else(|| default_grid(d));
    // an outer table much finer than the sample grid leaves poorly determined
    // nodes that show up as wiggles in the outer function
    let kst_opts = KstOptions {
        outer_nodes: opts.kst.outer_nodes.min(2 * kst_grid - 1),
        ..opts.kst.clone()
    };
    let decomp = build_decomposition_with(d, a, a + s, &kst_opts)?;
    // iterating past the budget smooths the outer function, which the
    // polynomial fit needs more than the superposition does
    let target = budgets.kst * opts.kst_overshoot;
    let outer_fn = compute_outer(f, &decomp, target, opts.kst_iterations, kst_grid)?;
    if outer_fn.achieved_residual > budgets.kst {
        return Err(Error::Budget {
            stage: "superposition residual".into(),
            achieved: outer_fn.achieved_residual,
            allowed: budgets.kst,
        });
    }

    let sigma = Arc::new(Sigma::new(params));
    let g = |z: f64| outer_fn.eval(z);
    let outer = represent_univariate(&g, budgets.outer_fit / terms as f64, &sigma, &opts.fit)
        .map_err(|e| rename_stage(e, "outer function fit"))?;

    let per_term = budgets.propagation / terms as f64;
    let reach = propagation_reach(
        &outer.term,
        per_term,
        opts.pad,
        &sigma,
        opts.modulus_samples,
    )?;
    // inner errors add up through the weights before reaching the outer unit
    let weight_sum: f64 = decomp.weights.iter().sum();
    let delta = reach / weight_sum.max(f64::MIN_POSITIVE);

    let inner: Vec<_> = decomp
        .inner
        .par_iter()
        .enumerate()
        .map(|(p, phi)| {
            represent_univariate(&|x| phi.eval(x), delta, &sigma, &opts.fit)
                .map_err(|e| rename_stage(e, &format!("inner function {} fit", p + 1)))
        })
        .collect::<Result<_>>()?;

    let model = TlfnModel::assemble(
        d,
        a,
        eps,
        sigma,
        outer.term.clone(),
        inner.iter().map(|r| r.term.clone()).collect(),
        decomp.weights.clone(),
    )?;
    let verify_grid = opts.verify_grid.unwrap_or_else(|| default_grid(d));
    let measured = sup_error(&model, f, verify_grid)?;
    let report = BuildReport {
        eps,
        budgets,
        kst_residual: outer_fn.achieved_residual,
        kst_iterations: outer_fn.iterations,
        kst_history: outer_fn.history.clone(),
        kst_stagnated: outer_fn.stagnated,
        outer_fit_error: outer.sigma_error,
        reach,
        delta,
        inner_fit_errors: inner.iter().map(|r| r.sigma_error).collect(),
        measured_error: measured,
        verify_grid,
        within_eps: measured <= eps,
        outer_units: 2 * d + 2,
        first_layer_evaluations: d * terms,
        hidden_neurons_compact: 3 * d + 2,
        outer_degree: outer.fit.degree,
        outer_index_bits: outer.term.index.bit_length().to_string(),
        working_precision: model.working_precision(),
    };
    Ok((model, report))
}

fn rename_stage(e: Error, stage: &str) -> Error {
    match e {
        Error::Budget {
            achieved, allowed, ..
        } => Error::Budget {
            stage: stage.into(),
            achieved,
            allowed,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumeration::MonicPoly;
    use rug::Rational;

    fn unit_params() -> SigmaParams {
        SigmaParams::new(1.0, 0.5, 64).unwrap()
    }

    #[test]
    fn modulus_of_affine_piece() {
        let sg = Sigma::new(unit_params());
        let term = SigmaTerm::from_parts(Rational::from(2), MonicPoly::x(), &sg).unwrap();
        let tol = 1e-3;
        let d = modulus_delta(&term, tol, 0.0, &sg, 4097).unwrap();
        let exact = tol / 2.0;
        assert!(d <= exact && d >= exact * 0.45, "delta {d}");
        let zero = SigmaTerm::from_parts(Rational::new(), MonicPoly::one(), &sg).unwrap();
        assert_eq!(modulus_delta(&zero, tol, 0.125, &sg, 257).unwrap(), 1.25);
    }

    #[test]
    fn modulus_shrinks_with_tol() {
        let sg = Sigma::new(unit_params());
        let term = SigmaTerm::from_parts(Rational::from(1), "x^2".parse().unwrap(), &sg).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..6 {
            let tol = 0.1 / 2f64.powi(k);
            let d = modulus_delta(&term, tol, 0.125, &sg, 2049).unwrap();
            assert!(d < last);
            last = d;
        }
    }

    #[test]
    fn constant_function_is_exact() {
        let f = |_: &[f64]| 0.7;
        for d in [1, 2] {
            let (model, report) =
                build_network(&f, d, 0.0, 0.1, unit_params(), &BuildOptions::default()).unwrap();
            assert!(
                report.measured_error <= 1e-9,
                "d={d}: {}",
                report.measured_error
            );
            assert_eq!(model.outer_units(), 2 * d + 2);
        }
    }

    #[test]
    fn identity_one_dimensional() {
        let f = |x: &[f64]| x[0];
        let (model, report) =
            build_network(&f, 1, 0.0, 1e-2, unit_params(), &BuildOptions::default()).unwrap();
        assert!(report.measured_error < 1e-2);
        assert!((model.evaluate(&[0.3]).unwrap() - 0.3).abs() < 1e-2);
        assert!(model.evaluate(&[1.5]).is_err());
    }

    #[test]
    fn json_round_trip_and_tamper() {
        let f = |x: &[f64]| (x[0] + x[1]) / 2.0;
        let opts = BuildOptions {
            verify_grid: Some(5),
            ..BuildOptions::default()
        };
        let (model, _) = build_network(&f, 2, 0.0, 0.2, unit_params(), &opts).unwrap();
        let json = model.to_json().unwrap();
        let back = TlfnModel::from_json(&json).unwrap();
        assert_eq!(back.to_json().unwrap(), json);
        assert_eq!(
            back.evaluate(&[0.25, 0.5]).unwrap(),
            model.evaluate(&[0.25, 0.5]).unwrap()
        );
        let mut rec: TlfnRecord = serde_json::from_str(&json).unwrap();
        rec.e[2] = "1.5".into();
        assert!(matches!(
            TlfnModel::from_record(&rec),
            Err(Error::Inconsistent(_))
        ));
    }

    fn small_model(d: usize, a: f64, s: f64) -> TlfnModel {
        let sg = Arc::new(Sigma::new(SigmaParams::new(s, 0.5, 64).unwrap()));
        let polys = ["x", "x^2", "x^2 - x", "x^3", "x - 1", "x^2 + x", "x^2 - 1"];
        let inner = (0..2 * d + 1)
            .map(|p| {
                let u: MonicPoly = polys[p % polys.len()].parse().unwrap();
                SigmaTerm::from_parts(Rational::from((p as i32 + 1, 4)), u, &sg).unwrap()
            })
            .collect();
        let outer =
            SigmaTerm::from_parts(Rational::from((1, 3)), "x^2 - x".parse().unwrap(), &sg).unwrap();
        let weights = (0..d).map(|q| 0.5f64.powi(q as i32 + 1)).collect();
        TlfnModel::assemble(d, a, 0.1, sg, outer, inner, weights).unwrap()
    }

    /// The network formula with absolute thresholds, usable while every `n` is
    /// small.
    fn absolute_eval(m: &TlfnModel, x: &[f64]) -> f64 {
        let prec = 256;
        let s = m.params.s;
        let sg = m.sigma();
        let n0 = m.outer.index.to_integer().unwrap();
        let e = m.e();
        let mut total = Float::with_val(prec, 0);
        for (p, term) in m.inner.iter().enumerate() {
            let np = term.index.to_integer().unwrap();
            let theta = Float::with_val(prec, m.a + s) - Float::with_val(prec, &np) * 2u32 * s;
            let mut y = Float::with_val(prec, 0);
            for q in 0..m.d {
                let arg = Float::with_val(prec, x[q]) - &theta;
                y += Float::with_val(prec, &m.c[p][q] * &sg.sigma_float(&arg).unwrap());
            }
            let zeta = Float::with_val(prec, &m.offsets[p]) - Float::with_val(prec, &n0) * 2u32 * s;
            let v = sg.sigma_float(&(y - zeta)).unwrap();
            total += Float::with_val(prec, &e[p] * &v);
        }
        let v = sg.sigma_float(&Float::with_val(prec, 0)).unwrap();
        total += Float::with_val(prec, &e[2 * m.d + 1] * &v);
        total.to_f64()
    }

    #[test]
    fn local_matches_absolute() {
        for (d, a, s) in [(1, 0.0, 1.0), (2, -1.0, 3.0), (2, 0.5, 1.0)] {
            let m = small_model(d, a, s);
            for n in m.inner.iter().map(|t| &t.index).chain([&m.outer.index]) {
                assert!(n.to_integer().unwrap() <= 50);
            }
            for k in 0..=8 {
                let t = k as f64 / 8.0;
                let x: Vec<f64> = (0..d)
                    .map(|q| a + s * ((t + 0.3 * q as f64) % 1.0))
                    .collect();
                let local = m.evaluate(&x).unwrap();
                let abs = absolute_eval(&m, &x);
                assert!(
                    (local - abs).abs() <= 1e-10 * abs.abs().max(1.0),
                    "{local} vs {abs}"
                );
            }
        }
    }

    #[test]
    fn architecture() {
        let m = small_model(2, 0.0, 1.0);
        assert_eq!(m.outer_units(), 6);
        assert_eq!(m.input_weights(), vec![vec![1, 0], vec![0, 1]]);
        let e = m.e();
        assert_eq!(e.len(), 6);
        assert!(e[..5].iter().all(|v| *v == e[0]));
        // unit 2d+2 contributes -(2d+1) gamma_0 everywhere
        let c = Float::with_val(m.prec, &m.e_const * &m.sigma0);
        let want = Float::with_val(m.prec, &m.outer.gamma * -5i32);
        let rel = Float::with_val(m.prec, &c - &want) / &want;
        assert!(rel.to_f64().abs() < 1e-30);
    }

    #[test]
    fn sup_error_properties() {
        let m = small_model(1, 0.0, 1.0);
        let f = |x: &[f64]| m.evaluate(x).unwrap();
        assert_eq!(sup_error(&m, &f, 9).unwrap(), 0.0);
        let g = |x: &[f64]| x[0] * x[0];
        let mut last = 0.0;
        for k in [3, 5, 9, 17, 33] {
            let e = sup_error(&m, &g, k).unwrap();
            assert!(e >= last);
            last = e;
        }
        assert!(sup_error(&m, &g, 1).is_err());
    }
}
