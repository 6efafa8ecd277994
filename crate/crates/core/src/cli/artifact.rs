//! Controller artifact: a TOML document with every matrix stored row-major at
//! 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::synthesis::{DegreeRange, HomogeneousController, LinearPlant};

pub const FORMAT: &str = "homcone-controller-1";

/// Order in which matrices are written.
const MATRICES: [&str; 8] = ["A", "B", "K", "K0", "G0", "Y0", "G_d", "P"];

#[derive(Debug, Clone, Deserialize)]
struct MatrixEntry {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    n: usize,
    m: usize,
    mu: f64,
    tau: f64,
    mu_range: [f64; 2],
    positive_degree: bool,
    matrices: BTreeMap<String, MatrixEntry>,
}

/// A stored controller with the degree range it was synthesized for.
#[derive(Debug, Clone)]
pub struct ControllerArtifact {
    pub controller: HomogeneousController,
    pub range: DegreeRange,
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_matrix(out: &mut String, name: &str, m: &Matrix) {
    let values: Vec<String> = m.transpose().iter().map(|&v| num(v)).collect();
    let _ = writeln!(out, "\n[matrices.{name}]");
    let _ = writeln!(out, "rows = {}", m.nrows());
    let _ = writeln!(out, "cols = {}", m.ncols());
    let _ = writeln!(out, "values = [{}]", values.join(", "));
}

impl ControllerArtifact {
    pub fn to_toml(&self) -> String {
        let c = &self.controller;
        let mut out = String::new();
        let _ = writeln!(out, "format = \"{FORMAT}\"");
        let _ = writeln!(out, "n = {}", c.plant().n());
        let _ = writeln!(out, "m = {}", c.plant().m());
        let _ = writeln!(out, "mu = {}", num(c.mu()));
        let _ = writeln!(out, "tau = {}", num(self.range.tau_min));
        let _ = writeln!(out, "mu_range = [{}, {}]", num(self.range.lo), num(self.range.hi));
        let _ = writeln!(out, "positive_degree = {}", self.range.positive);
        let mats: [&Matrix; 8] = [
            c.plant().a(),
            c.plant().b(),
            c.k(),
            c.k0(),
            c.g0(),
            c.y0(),
            c.dilation().generator(),
            c.dilation().weight(),
        ];
        for (name, m) in MATRICES.iter().zip(mats) {
            write_matrix(&mut out, name, m);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            path: "controller artifact".into(),
            message,
        };
        let doc: Document = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        if doc.format != FORMAT {
            return Err(parse_err(format!("unknown format {:?}", doc.format)));
        }
        let get = |name: &str, rows: usize, cols: usize| -> Result<Matrix> {
            let e = doc
                .matrices
                .get(name)
                .ok_or_else(|| parse_err(format!("missing matrix {name}")))?;
            if (e.rows, e.cols) != (rows, cols) || e.values.len() != rows * cols {
                return Err(parse_err(format!(
                    "matrix {name}: expected {rows}x{cols}, got {}x{} with {} values",
                    e.rows,
                    e.cols,
                    e.values.len()
                )));
            }
            Ok(Matrix::from_row_slice(rows, cols, &e.values))
        };
        let (n, m) = (doc.n, doc.m);
        let plant = LinearPlant::new(get("A", n, n)?, get("B", n, m)?)?;
        let y0 = get("Y0", m, n)?;
        let gd = get("G_d", n, n)?;
        let controller = HomogeneousController::new(
            plant,
            get("K", m, n)?,
            get("K0", m, n)?,
            get("G0", n, n)?,
            doc.mu,
            get("P", n, n)?,
        )?;
        let scale = |a: &Matrix| a.amax().max(1.0);
        if (controller.y0() - &y0).amax() > 1e-12 * scale(&y0) {
            return Err(parse_err("Y0 inconsistent with K0 (G0 - I)".into()));
        }
        if (controller.dilation().generator() - &gd).amax() > 1e-12 * scale(&gd) {
            return Err(parse_err("G_d inconsistent with I + mu G0".into()));
        }
        Ok(ControllerArtifact {
            controller,
            range: DegreeRange {
                tau_min: doc.tau,
                lo: doc.mu_range[0],
                hi: doc.mu_range[1],
                positive: doc.positive_degree,
            },
        })
    }
}
