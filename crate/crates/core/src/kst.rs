//! Superposition `f(x) ~ sum_p g(sum_q lambda_q phi_p(x_q))` on a box.
//!
//! Inner functions come from a Sprecher-type generator `psi` with base
//! `gamma = 2d + 2` in Köppen's corrected recursive form, shifted by `p a`
//! with `a = 1 / (gamma (gamma - 1))`:
//!
//! ```text
//! phi_p(x) = psi(x + p a) / psi(1 + 2d a),   psi(x) = psi(x - [x]) + [x]
//! ```
//!
//! At level `L` the generator is tabulated on the `gamma^-L` grid and linearly
//! interpolated. Level 1 makes `psi` the identity; deeper levels give the
//! classical fractal inner functions. The outer function is tabulated and
//! found by residual iteration with backtracking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KstWeights {
    /// All `lambda_q = 1/d`.
    Uniform,
    /// `lambda_1 = 1`, `lambda_q = sum_r gamma^{-(q-1) beta(r)}`, normalized.
    Sprecher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KstOptions {
    pub level: u32,
    pub weights: KstWeights,
    /// Breakpoints per inner table.
    pub resolution: usize,
    /// Nodes of the outer table on `[0, 1]`.
    pub outer_nodes: usize,
}

impl Default for KstOptions {
    fn default() -> Self {
        Self {
            level: 1,
            weights: KstWeights::Uniform,
            resolution: 1 << 14,
            outer_nodes: 257,
        }
    }
}

/// Nondecreasing piecewise-linear map `[0, 1] -> [0, 1]` on equispaced nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerFunction {
    pub values: Vec<f64>,
}

fn lerp_table(values: &[f64], x: f64) -> f64 {
    let m = values.len() - 1;
    let y = (x.clamp(0.0, 1.0)) * m as f64;
    let i = (y.floor() as usize).min(m.saturating_sub(1));
    let f = y - i as f64;
    if m == 0 {
        return values[0];
    }
    values[i] * (1.0 - f) + values[i + 1] * f
}

impl InnerFunction {
    /// At a normalized coordinate in `[0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        lerp_table(&self.values, x)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let m = (self.values.len() - 1) as f64;
        (0..self.values.len()).map(|i| i as f64 / m).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KstDecomposition {
    pub d: usize,
    pub a: f64,
    pub b: f64,
    pub options: KstOptions,
    pub weights: Vec<f64>,
    /// `2d + 1` inner functions of the normalized coordinate.
    pub inner: Vec<InnerFunction>,
    pub shift: f64,
}

/// `psi(j / gamma^level)` for `j = 0..=gamma^level`.
pub fn sprecher_psi_table(d: usize, level: u32) -> Vec<f64> {
    let gamma = (2 * d + 2) as u64;
    let beta = |k: u32| -> u32 {
        if d == 1 {
            k
        } else {
            ((d as u64).pow(k) as u32 - 1) / (d as u32 - 1)
        }
    };
    // tables[k-1][j] = psi_k(j / gamma^k)
    let mut tables: Vec<Vec<f64>> = Vec::new();
    tables.push((0..=gamma).map(|j| j as f64 / gamma as f64).collect());
    for k in 2..=level {
        let size = gamma.pow(k);
        let prev = &tables[(k - 2) as usize];
        let scale = (gamma as f64).powi(-(beta(k) as i32));
        let mut cur = vec![0.0; size as usize + 1];
        for j in 0..=size {
            let ik = j % gamma;
            let v = if ik < gamma - 1 {
                prev[((j - ik) / gamma) as usize] + ik as f64 * scale
            } else {
                (cur[(j - 1) as usize] + prev[((j + 1) / gamma) as usize]) / 2.0
            };
            cur[j as usize] = v;
        }
        tables.push(cur);
    }
    tables.pop().unwrap()
}

fn psi_ext(table: &[f64], x: f64) -> f64 {
    let fl = x.floor();
    lerp_table(table, x - fl) + fl
}

pub fn kst_weights(d: usize, kind: KstWeights) -> Vec<f64> {
    let raw: Vec<f64> = match kind {
        KstWeights::Uniform => vec![1.0; d],
        KstWeights::Sprecher => {
            let gamma = (2 * d + 2) as f64;
            (0..d)
                .map(|q| {
                    if q == 0 {
                        return 1.0;
                    }
                    let mut sum = 0.0;
                    for r in 1..=40u32 {
                        let beta = if d == 1 {
                            r as f64
                        } else {
                            ((d as f64).powi(r as i32) - 1.0) / (d as f64 - 1.0)
                        };
                        let term = gamma.powf(-(q as f64) * beta);
                        sum += term;
                        if term < 1e-18 {
                            break;
                        }
                    }
                    sum
                })
                .collect()
        }
    };
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Decomposition with the default options and the given inner resolution.
pub fn build_decomposition(
    d: usize,
    a: f64,
    b: f64,
    resolution: usize,
) -> Result<KstDecomposition> {
    build_decomposition_with(
        d,
        a,
        b,
        &KstOptions {
            resolution,
            ..KstOptions::default()
        },
    )
}

pub fn build_decomposition_with(
    d: usize,
    a: f64,
    b: f64,
    opts: &KstOptions,
) -> Result<KstDecomposition> {
    if d == 0 {
        return domain("dimension must be >= 1");
    }
    if !(a < b) {
        return domain(format!("empty box [{a}, {b}]"));
    }
    if opts.level == 0 || opts.resolution < 1 || opts.outer_nodes < 2 {
        return domain("level, resolution and outer_nodes must be positive");
    }
    let gamma = (2 * d + 2) as f64;
    let shift = 1.0 / (gamma * (gamma - 1.0));
    let psi = sprecher_psi_table(d, opts.level);
    let norm = psi_ext(&psi, 1.0 + 2.0 * d as f64 * shift);
    let res = opts.resolution;
    let inner = (0..=2 * d)
        .map(|p| {
            let values = (0..=res)
                .map(|i| {
                    let x = i as f64 / res as f64;
                    (psi_ext(&psi, x + p as f64 * shift) / norm).clamp(0.0, 1.0)
                })
                .collect();
            InnerFunction { values }
        })
        .collect();
    Ok(KstDecomposition {
        d,
        a,
        b,
        options: opts.clone(),
        weights: kst_weights(d, opts.weights),
        inner,
        shift,
    })
}

impl KstDecomposition {
    pub fn terms(&self) -> usize {
        2 * self.d + 1
    }

    fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return domain(format!("expected {} coordinates, got {}", self.d, x.len()));
        }
        let w = self.b - self.a;
        let slack = 1e-12 * w.max(1.0);
        x.iter()
            .map(|&v| {
                if v < self.a - slack || v > self.b + slack || !v.is_finite() {
                    domain(format!("{v} outside [{}, {}]", self.a, self.b))
                } else {
                    Ok(((v - self.a) / w).clamp(0.0, 1.0))
                }
            })
            .collect()
    }

    /// `z_p = sum_q lambda_q phi_p(x_q)` for a normalized point.
    pub fn inner_sums(&self, unit: &[f64]) -> Vec<f64> {
        self.inner
            .iter()
            .map(|phi| {
                self.weights
                    .iter()
                    .zip(unit)
                    .map(|(l, &u)| l * phi.eval(u))
                    .sum::<f64>()
                    .clamp(0.0, 1.0)
            })
            .collect()
    }

    pub fn to_record(&self) -> KstRecord {
        KstRecord {
            d: self.d,
            a: self.a.to_string(),
            b: self.b.to_string(),
            level: self.options.level,
            weights_kind: self.options.weights,
            kst_weights: self.weights.iter().map(|w| w.to_string()).collect(),
            shift: self.shift.to_string(),
            inner: self
                .inner
                .iter()
                .map(|phi| TableRecord {
                    breakpoints: phi.breakpoints().iter().map(|v| v.to_string()).collect(),
                    values: phi.values.iter().map(|v| v.to_string()).collect(),
                })
                .collect(),
        }
    }
}

/// Tabulated outer function and the history of the iteration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterFunction {
    pub values: Vec<f64>,
    pub achieved_residual: f64,
    pub iterations: usize,
    /// Grid residual after each accepted step, starting with `g = 0`.
    pub history: Vec<f64>,
    pub stagnated: bool,
}

impl OuterFunction {
    pub fn constant(c: f64, nodes: usize) -> Self {
        Self {
            values: vec![c; nodes],
            achieved_residual: f64::NAN,
            iterations: 0,
            history: Vec::new(),
            stagnated: false,
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        lerp_table(&self.values, z)
    }

    pub fn to_record(&self) -> TableRecord {
        let m = (self.values.len() - 1) as f64;
        TableRecord {
            breakpoints: (0..self.values.len())
                .map(|i| (i as f64 / m).to_string())
                .collect(),
            values: self.values.iter().map(|v| v.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub breakpoints: Vec<String>,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KstRecord {
    pub d: usize,
    pub a: String,
    pub b: String,
    pub level: u32,
    pub weights_kind: KstWeights,
    pub kst_weights: Vec<String>,
    pub shift: String,
    pub inner: Vec<TableRecord>,
}

/// Tensor grid with `per_axis` points per coordinate on `[a, b]^d`.
pub fn tensor_grid(d: usize, a: f64, b: f64, per_axis: usize) -> Vec<Vec<f64>> {
    let m = per_axis.max(2) - 1;
    let axis: Vec<f64> = (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect();
    let total = axis.len().pow(d as u32);
    (0..total)
        .map(|mut k| {
            (0..d)
                .map(|_| {
                    let v = axis[k % axis.len()];
                    k /= axis.len();
                    v
                })
                .collect()
        })
        .collect()
}

struct Sample {
    value: f64,
    /// Per inner term: (left node, weight of left node).
    nodes: Vec<(usize, f64)>,
}

fn residuals(samples: &[Sample], g: &[f64]) -> Vec<f64> {
    samples
        .par_iter()
        .map(|s| {
            let recon: f64 = s
                .nodes
                .iter()
                .map(|&(i, w)| g[i] * w + g[(i + 1).min(g.len() - 1)] * (1.0 - w))
                .sum();
            s.value - recon
        })
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, r| m.max(r.abs()))
}

/// Residual iteration for the outer function.
pub fn compute_outer(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    decomp: &KstDecomposition,
    target_residual: f64,
    max_iterations: usize,
    grid_per_axis: usize,
) -> Result<OuterFunction> {
    if grid_per_axis < 2 {
        return Err(Error::Input("grid needs at least 2 points per axis".into()));
    }
    let nodes = decomp.options.outer_nodes;
    let m = (nodes - 1) as f64;
    let w = decomp.b - decomp.a;
    let points = tensor_grid(decomp.d, decomp.a, decomp.b, grid_per_axis);
    let samples: Vec<Sample> = points
        .par_iter()
        .map(|x| {
            let value = f(x);
            let unit: Vec<f64> = x.iter().map(|v| (v - decomp.a) / w).collect();
            let nodes = decomp
                .inner_sums(&unit)
                .into_iter()
                .map(|z| {
                    let y = z * m;
                    let i = (y.floor() as usize).min(nodes - 2);
                    (i, 1.0 - (y - i as f64))
                })
                .collect();
            Sample { value, nodes }
        })
        .collect();
    if samples.iter().any(|s| !s.value.is_finite()) {
        return Err(Error::Input(
            "target has non-finite values on the grid".into(),
        ));
    }

    let terms = decomp.terms() as f64;
    let mut g = vec![0.0; nodes];
    let mut res = residuals(&samples, &g);
    let mut current = sup(&res);
    let mut history = vec![current];
    let mut stagnated = false;
    let mut iterations = 0;

    while current > target_residual && iterations < max_iterations {
        // pull residuals back onto outer nodes with hat weights
        let mut num = vec![0.0; nodes];
        let mut den = vec![0.0; nodes];
        for (s, r) in samples.iter().zip(&res) {
            for &(i, wl) in &s.nodes {
                num[i] += wl * r;
                den[i] += wl;
                num[i + 1] += (1.0 - wl) * r;
                den[i + 1] += 1.0 - wl;
            }
        }
        let corr = fill_gaps(&num, &den);

        let mut theta = 1.0 / terms;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<f64> = g.iter().zip(&corr).map(|(a, c)| a + theta * c).collect();
            let r = residuals(&samples, &trial);
            let v = sup(&r);
            if v < current {
                g = trial;
                res = r;
                current = v;
                accepted = true;
                break;
            }
            theta /= 2.0;
        }
        iterations += 1;
        if !accepted {
            stagnated = true;
            break;
        }
        history.push(current);
    }
    Ok(OuterFunction {
        values: g,
        achieved_residual: current,
        iterations,
        history,
        stagnated,
    })
}

/// `num / den` where `den > 0`, linear interpolation elsewhere, constant
/// extension past the ends.
fn fill_gaps(num: &[f64], den: &[f64]) -> Vec<f64> {
    let known: Vec<usize> = (0..num.len()).filter(|&i| den[i] > 1e-12).collect();
    if known.is_empty() {
        return vec![0.0; num.len()];
    }
    let val = |i: usize| num[i] / den[i];
    let mut out = vec![0.0; num.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let right = known.partition_point(|&k| k < i);
        *o = if right < known.len() && known[right] == i {
            val(i)
        } else if right == 0 {
            val(known[0])
        } else if right == known.len() {
            val(known[known.len() - 1])
        } else {
            let (l, r) = (known[right - 1], known[right]);
            let f = (i - l) as f64 / (r - l) as f64;
            val(l) * (1.0 - f) + val(r) * f
        };
    }
    out
}

/// `sum_p g(z_p(x))`.
pub fn reconstruct(decomp: &KstDecomposition, g: &OuterFunction, x: &[f64]) -> Result<f64> {
    let unit = decomp.normalize(x)?;
    Ok(decomp
        .inner_sums(&unit)
        .into_iter()
        .map(|z| g.eval(z))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_monotone() {
        for d in 1..=3 {
            for level in 1..=3 {
                let t = sprecher_psi_table(d, level);
                assert!(t.windows(2).all(|w| w[0] < w[1]), "d={d} level={level}");
                assert_eq!(*t.last().unwrap(), 1.0);
                assert_eq!(t[0], 0.0);
            }
        }
    }

    #[test]
    fn shapes_and_weights() {
        let k = build_decomposition(1, 0.0, 1.0, 64).unwrap();
        assert_eq!(k.inner.len(), 3);
        assert_eq!(k.weights, vec![1.0]);
        let k = build_decomposition(2, 0.0, 1.0, 64).unwrap();
        assert_eq!(k.inner.len(), 5);
        for kind in [KstWeights::Uniform, KstWeights::Sprecher] {
            for d in 1..=4 {
                let w = kst_weights(d, kind);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(w.iter().all(|&v| v > 0.0));
            }
        }
        assert!(build_decomposition(0, 0.0, 1.0, 64).is_err());
        assert!(build_decomposition(1, 1.0, 1.0, 64).is_err());
    }

    #[test]
    fn inner_functions_are_valid() {
        for level in 1..=3 {
            for d in 1..=3 {
                let opts = KstOptions {
                    level,
                    weights: KstWeights::Sprecher,
                    resolution: 512,
                    outer_nodes: 65,
                };
                let k = build_decomposition_with(d, -1.0, 2.0, &opts).unwrap();
                for phi in &k.inner {
                    assert!(phi.is_monotone());
                    assert!(phi.values[0] >= 0.0 && *phi.values.last().unwrap() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn level_one_is_affine() {
        let k = build_decomposition(2, 0.0, 1.0, 1024).unwrap();
        let a = k.shift;
        for (p, phi) in k.inner.iter().enumerate() {
            for &x in &[0.0, 0.25, 0.7, 1.0] {
                let want = (x + p as f64 * a) / (1.0 + 4.0 * a);
                assert!((phi.eval(x) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_target_in_one_step() {
        let k = build_decomposition(2, 0.0, 1.0, 256).unwrap();
        let g = compute_outer(&|_| 3.0, &k, 1e-12, 10, 9).unwrap();
        assert_eq!(g.iterations, 1);
        assert!(g.achieved_residual < 1e-12);
        assert!(g.values.iter().all(|v| (v - 0.6).abs() < 1e-12));
    }

    #[test]
    fn one_dimensional_recovery() {
        let k = build_decomposition(1, 0.0, 1.0, 1024).unwrap();
        let f = |x: &[f64]| (3.0 * x[0]).sin();
        let g = compute_outer(&f, &k, 1e-4, 2000, 257).unwrap();
        assert!(
            g.achieved_residual < 1e-3,
            "residual {}",
            g.achieved_residual
        );
        assert!(g.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn mean_residual_decreases() {
        let k = build_decomposition(2, 0.0, 1.0, 1024).unwrap();
        let f = |x: &[f64]| (x[0] + x[1]) / 2.0;
        let g = compute_outer(&f, &k, 1e-9, 50, 17).unwrap();
        assert!(g.history.len() >= 6);
        assert!(g.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(g.achieved_residual < 0.01);
    }

    #[test]
    fn reconstruct_trivial_outer() {
        let k = build_decomposition(2, 0.0, 1.0, 64).unwrap();
        let zero = OuterFunction::constant(0.0, 17);
        let one = OuterFunction::constant(1.0, 17);
        assert_eq!(reconstruct(&k, &zero, &[0.2, 0.9]).unwrap(), 0.0);
        assert_eq!(reconstruct(&k, &one, &[0.2, 0.9]).unwrap(), 5.0);
        assert!(reconstruct(&k, &one, &[1.5, 0.0]).is_err());
        assert!(reconstruct(&k, &one, &[0.5]).is_err());
    }
}
