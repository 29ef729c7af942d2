//! Built-in targets and tabulated targets read from CSV.

use std::f64::consts::PI;
use std::path::Path;

use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Identity,
    Const(f64),
    /// `|x - 1/2|`
    AbsShift,
    /// `sin(pi x)`
    SinPi,
    /// `(x + y) / 2`
    Mean2,
    /// `x y`
    Product2,
    /// Linear interpolation through sorted samples, constant outside them.
    Table {
        path: String,
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
}

impl Target {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let spec = spec.trim();
        if let Some(c) = spec.strip_prefix("const:") {
            let c: f64 = c
                .parse()
                .map_err(|_| CliError::Usage(format!("bad constant {c:?}")))?;
            if !c.is_finite() {
                return Err(CliError::Usage("constant must be finite".into()));
            }
            return Ok(Target::Const(c));
        }
        if let Some(p) = spec.strip_prefix("table:") {
            return Self::from_csv(Path::new(p));
        }
        Ok(match spec {
            "identity" => Target::Identity,
            "abs-shift" => Target::AbsShift,
            "sin-pi" => Target::SinPi,
            "mean2" => Target::Mean2,
            "product2" => Target::Product2,
            _ => return Err(CliError::Usage(format!("unknown function {spec:?}"))),
        })
    }

    /// Two numeric columns `x,y`; a non-numeric first row is taken as a header.
    pub fn from_csv(path: &Path) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut pts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(CliError::Usage(format!(
                    "row {} has fewer than 2 columns",
                    i + 1
                )));
            }
            let (x, y) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match (x, y) {
                (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => pts.push((x, y)),
                _ if i == 0 => continue,
                _ => return Err(CliError::Usage(format!("row {} is not numeric", i + 1))),
            }
        }
        if pts.len() < 2 {
            return Err(CliError::Usage("table needs at least 2 samples".into()));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CliError::Usage("table has repeated x values".into()));
        }
        Ok(Target::Table {
            path: path.display().to_string(),
            xs: pts.iter().map(|p| p.0).collect(),
            ys: pts.iter().map(|p| p.1).collect(),
        })
    }

    pub fn name(&self) -> String {
        match self {
            Target::Identity => "identity".into(),
            Target::Const(c) => format!("const:{c}"),
            Target::AbsShift => "abs-shift".into(),
            Target::SinPi => "sin-pi".into(),
            Target::Mean2 => "mean2".into(),
            Target::Product2 => "product2".into(),
            Target::Table { path, .. } => format!("table:{path}"),
        }
    }

    fn natural_dimension(&self) -> Option<usize> {
        match self {
            Target::Const(_) => None,
            Target::Mean2 | Target::Product2 => Some(2),
            _ => Some(1),
        }
    }

    /// Checks a requested dimension against the function's own.
    pub fn dimension(&self, requested: Option<usize>) -> CliResult<usize> {
        match (self.natural_dimension(), requested) {
            (_, Some(0)) => Err(CliError::Usage("dimension must be at least 1".into())),
            (_, Some(d)) if d > 4 => {
                Err(CliError::Usage("dimension above 4 is not supported".into()))
            }
            (Some(n), Some(d)) if n != d => Err(CliError::Usage(format!(
                "{} takes {n} variable(s), not {d}",
                self.name()
            ))),
            (Some(n), _) => Ok(n),
            (None, Some(d)) => Ok(d),
            (None, None) => Ok(1),
        }
    }

    /// Accuracy the default build reaches for this target.
    pub fn documented_eps(&self) -> f64 {
        match self {
            Target::Identity => 1e-2,
            Target::Const(_) => 1e-6,
            Target::AbsShift => 0.2,
            Target::SinPi => 0.1,
            Target::Mean2 => 0.2,
            Target::Product2 => 0.8,
            Target::Table { .. } => 0.2,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Target::Identity => x[0],
            Target::Const(c) => *c,
            Target::AbsShift => (x[0] - 0.5).abs(),
            Target::SinPi => (PI * x[0]).sin(),
            Target::Mean2 => (x[0] + x[1]) / 2.0,
            Target::Product2 => x[0] * x[1],
            Target::Table { xs, ys, .. } => interpolate(xs, ys, x[0]),
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x) - 1;
    let f = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + f * (ys[i + 1] - ys[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        assert_eq!(Target::parse("const:2.5").unwrap(), Target::Const(2.5));
        assert_eq!(Target::parse("mean2").unwrap().dimension(None).unwrap(), 2);
        assert_eq!(
            Target::parse("const:1")
                .unwrap()
                .dimension(Some(3))
                .unwrap(),
            3
        );
        assert!(Target::parse("mean2").unwrap().dimension(Some(1)).is_err());
        assert!(Target::parse("cosh").is_err());
        assert!(Target::parse("const:x").is_err());
    }

    #[test]
    fn table_interpolation() {
        let dir = std::env::temp_dir().join(format!("tlfn-table-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("t.csv");
        std::fs::write(&p, "x,y\n1,2\n0,0\n").unwrap();
        let t = Target::from_csv(&p).unwrap();
        assert_eq!(t.eval(&[0.25]), 0.5);
        assert_eq!(t.eval(&[-1.0]), 0.0);
        assert_eq!(t.eval(&[3.0]), 2.0);
        std::fs::write(&p, "x,y\n0,1\n").unwrap();
        assert!(Target::from_csv(&p).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
