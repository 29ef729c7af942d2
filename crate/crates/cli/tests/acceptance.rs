//! Acceptance criteria 1-8. Each criterion prints one PASS/FAIL line on
//! stderr (written directly so the test harness does not capture it); the test
//! fails if any criterion fails.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tlfn::{
    build_network, index_to_poly, poly_to_index, represent_univariate, sup_error, BuildOptions,
    FitOptions, Float, Integer, MonicPoly, PieceIndex, Sigma, SigmaParams,
};

const TABLE: [f64; 50] = [
    0.25941, 0.36008, 0.57848, 0.91514, 0.91514, 0.91514, 0.91514, 0.91198, 0.91105, 0.90650,
    0.91169, 0.92728, 0.95325, 0.93437, 0.92551, 0.91549, 0.92958, 0.94366, 0.95775, 0.95532,
    0.94932, 0.94074, 0.93635, 0.93635, 0.94074, 0.93278, 0.93177, 0.92482, 0.92900, 0.94153,
    0.96241, 0.94506, 0.94003, 0.92771, 0.92905, 0.93842, 0.96385, 0.94692, 0.93923, 0.92999,
    0.94166, 0.95333, 0.96499, 0.95602, 0.94295, 0.93186, 0.93943, 0.95079, 0.96593, 0.95800,
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            out.pass = false;
            out.detail += &format!("; over the {limit:?} limit");
        }
    }
    let line = format!(
        "criterion {id} {}: {name}: {} [{:.2?}]\n",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        took
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    out.pass
}

fn reference_sigma() -> Sigma {
    Sigma::new(SigmaParams::new(3.0, 0.5, 64).unwrap())
}

fn table_reproduction() -> Outcome {
    let sg = reference_sigma();
    let mut worst: f64 = 0.0;
    for (t, want) in TABLE.iter().enumerate() {
        worst = worst.max((sg.sigma(t as f64) - want).abs());
    }
    let mut spot: f64 = 0.0;
    for t in [0usize, 7, 8, 9] {
        spot = spot.max((sg.sigma(t as f64) - TABLE[t]).abs());
    }
    Outcome {
        pass: worst <= 1e-4 && spot <= 5e-6,
        detail: format!("max deviation {worst:.2e} (<= 1e-4), spots {spot:.2e} (<= 5e-6)"),
    }
}

fn enumeration_suite() -> Outcome {
    let first: Vec<MonicPoly> = [
        "1", "x^2", "x", "x^2 - x", "x^2 - 1", "x^3", "x - 1", "x^2 + x",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect();
    let listed = (1..=8u32)
        .map(|n| index_to_poly(&Integer::from(n)).unwrap())
        .collect::<Vec<_>>();
    let mut ok = listed == first;
    let mut bad = Vec::new();
    for n in 1..=10_000u32 {
        let n = Integer::from(n);
        if poly_to_index(&index_to_poly(&n).unwrap()).unwrap() != n {
            bad.push(n);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..100 {
        let n = (Integer::from(rng.gen::<u64>() | (1 << 63)) << 64u32) + rng.gen::<u64>();
        if poly_to_index(&index_to_poly(&n).unwrap()).unwrap() != n {
            bad.push(n);
        }
    }
    ok &= bad.is_empty();
    Outcome {
        pass: ok,
        detail: format!(
            "first eight {}, {} round-trip failures over n <= 1e4 and 100 random 128-bit n",
            if listed == first { "match" } else { "differ" },
            bad.len()
        ),
    }
}

fn sigma_properties() -> Outcome {
    let mut failures = Vec::new();
    let mut worst_jump: f64 = 0.0;
    let mut worst_slope: f64 = 0.0;
    for s in [1.0, 3.0] {
        for lambda in [0.75, 0.5, 0.1] {
            let sg = Sigma::new(SigmaParams::new(s, lambda, 64).unwrap());
            for i in 0..10_000 {
                let x = s + 99.0 * s * i as f64 / 9_999.0;
                let v = sg.sigma(x);
                let h = sg.envelope_h(x).unwrap();
                if !(h < v && v < 1.0 && v - h > 0.0 && v - h <= lambda) {
                    failures.push(format!("sandwich s={s} lambda={lambda} x={x}"));
                }
            }
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1_000 {
                let x = s - 50.0 + 50.0 * i as f64 / 999.0;
                let v = sg.sigma(x);
                if !(v > prev) {
                    failures.push(format!("monotone s={s} lambda={lambda} x={x}"));
                }
                prev = v;
            }
            let prec = 160;
            let h = Float::with_val(prec, 1e-20);
            for n in 1..=20u32 {
                for j in [(2 * n - 1) as f64 * s, 2.0 * n as f64 * s] {
                    let x = Float::with_val(prec, j);
                    let at = |y: Float| sg.sigma_float(&y).unwrap();
                    let c = at(x.clone());
                    let l = at(Float::with_val(prec, &x - &h));
                    let r = at(Float::with_val(prec, &x + &h));
                    let jump = Float::with_val(prec, &r - &l).abs().to_f64();
                    let dl = (Float::with_val(prec, &c - &l) / &h).to_f64();
                    let dr = (Float::with_val(prec, &r - &c) / &h).to_f64();
                    let slope = (dl - dr).abs() / dl.abs().max(dr.abs()).max(1.0);
                    worst_jump = worst_jump.max(jump);
                    worst_slope = worst_slope.max(slope);
                    if jump > 1e-10 || slope > 1e-6 {
                        failures.push(format!("junction s={s} lambda={lambda} x={j}"));
                    }
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "{} violations; worst junction jump {worst_jump:.1e}, worst one-sided slope mismatch {worst_slope:.1e}{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    }
}

fn piece_identity() -> Outcome {
    let sg = reference_sigma();
    let s = 3.0;
    let mut worst: f64 = 0.0;
    for n in 1..=50u64 {
        let idx = PieceIndex::from_u64(n).unwrap();
        for k in 0..64 {
            let t = k as f64 / 63.0;
            let want = sg.sigma_piece_exact(&idx, t).unwrap();
            let got = sg.sigma(s * t + (2 * n - 1) as f64 * s);
            worst = worst.max((got - want).abs() / want.abs());
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max relative deviation {worst:.2e} (<= 1e-12)"),
    }
}

fn univariate() -> Outcome {
    let sg = Sigma::new(SigmaParams::new(1.0, 0.5, 64).unwrap());
    let opts = FitOptions::default();
    let targets: [(&str, fn(f64) -> f64); 2] = [
        ("sin(pi x)", |x| (std::f64::consts::PI * x).sin()),
        ("|x - 1/2|", |x| (x - 0.5).abs()),
    ];
    let mut ok = true;
    let mut big = false;
    let mut parts = Vec::new();
    for (name, g) in targets {
        match represent_univariate(&g, 1e-2, &sg, &opts) {
            Ok(rep) => {
                let bits = rep.term.index.bit_length();
                big |= bits > 64;
                ok &= rep.sigma_error < 1e-2;
                let size = if bits.significant_bits() > 40 {
                    format!("about 2^{} bits", bits.significant_bits() - 1)
                } else {
                    format!("{bits} bits")
                };
                parts.push(format!(
                    "{name}: error {:.2e}, degree {}, n has {size}",
                    rep.sigma_error, rep.fit.degree
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    Outcome {
        pass: ok && big,
        detail: format!(
            "{}; big-index path {}",
            parts.join("; "),
            if big { "exercised" } else { "not exercised" }
        ),
    }
}

fn multivariate() -> Outcome {
    let f = |x: &[f64]| (x[0] + x[1]) / 2.0;
    let params = SigmaParams::new(1.0, 0.5, 64).unwrap();
    let (model, report) = match build_network(&f, 2, 0.0, 0.2, params, &BuildOptions::default()) {
        Ok(v) => v,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("build failed: {e}"),
            }
        }
    };
    let units = model.outer_units() == 6;
    let weights = model.input_weights() == vec![vec![1, 0], vec![0, 1]];
    let e = model.e();
    let equal = e[..5].iter().all(|v| *v == e[0]);
    let err = sup_error(&model, &f, 33).unwrap();
    let hist = &report.kst_history;
    let nonincreasing = hist.windows(2).all(|w| w[1] <= w[0]);
    Outcome {
        pass: units && weights && equal && err <= 0.2 && nonincreasing,
        detail: format!(
            "6 outer units {units}, coordinate weights {weights}, e_1..e_5 equal {equal}, \
             33x33 error {err:.3e} (<= 0.2), residual nonincreasing over {} steps {nonincreasing}",
            hist.len()
        ),
    }
}

fn constants() -> Outcome {
    let params = SigmaParams::new(1.0, 0.5, 64).unwrap();
    let mut worst: f64 = 0.0;
    let mut errors = Vec::new();
    for (d, c) in [(1usize, 0.7), (1, -1.25), (2, 0.7), (2, -1.25)] {
        let f = move |_: &[f64]| c;
        match build_network(&f, d, 0.0, 0.1, params, &BuildOptions::default()) {
            Ok((_, r)) => worst = worst.max(r.measured_error),
            Err(e) => errors.push(format!("d={d} c={c}: {e}")),
        }
    }
    Outcome {
        pass: errors.is_empty() && worst <= 1e-9,
        detail: format!(
            "worst measured error {worst:.2e} (<= 1e-9){}",
            errors.join("; ")
        ),
    }
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("tlfn-accept-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let path = dir.join(format!("model{run}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_tlfn"))
            .args([
                "build",
                "--function",
                "mean2",
                "--eps",
                "0.2",
                "--grid",
                "9",
                "--out",
            ])
            .arg(&path)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome {
                pass: false,
                detail: format!("build exited with {}", status.status),
            };
        }
        outputs.push(std::fs::read(&path).unwrap());
    }
    std::fs::remove_dir_all(&dir).ok();
    let same = outputs[0] == outputs[1];
    Outcome {
        pass: same && !outputs[0].is_empty(),
        detail: format!(
            "two builds {} ({} bytes)",
            if same { "byte-identical" } else { "differ" },
            outputs[0].len()
        ),
    }
}

#[test]
fn acceptance() {
    let results = [
        report(
            1,
            "reference sigma table",
            Some(Duration::from_secs(1)),
            table_reproduction,
        ),
        report(
            2,
            "enumeration suite",
            Some(Duration::from_secs(10)),
            enumeration_suite,
        ),
        report(
            3,
            "sigma property suite",
            Some(Duration::from_secs(30)),
            sigma_properties,
        ),
        report(4, "exact piece identity", None, piece_identity),
        report(
            5,
            "univariate end-to-end",
            Some(Duration::from_secs(120)),
            univariate,
        ),
        report(
            6,
            "multivariate end-to-end",
            Some(Duration::from_secs(600)),
            multivariate,
        ),
        report(7, "constants are exact", None, constants),
        report(8, "determinism", None, determinism),
    ];
    let failed: Vec<usize> = (0..8).filter(|&i| !results[i]).map(|i| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
