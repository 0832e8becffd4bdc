//! Problem configuration: parsing, defaults and validation with field paths.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::field::{build_coefficients, from_sturm_liouville, CoefficientField, Entry, ExprMatrix};
use crate::linalg::{c, CMat, C64};
use crate::propagate::PropagateOptions;
use crate::regular::{validate_boundary, BoundaryPair, SearchOptions};
use crate::timescale::{build_timescale, make_grid, Cell, Quadrature, TimeScale};
use crate::weyl::check_b_list;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub timescale: TimeScaleConfig,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub coefficients: Option<CoefficientsConfig>,
    #[serde(default)]
    pub sturm_liouville: Option<SturmLiouvilleConfig>,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeScaleConfig {
    pub cells: Vec<CellConfig>,
    pub t0: f64,
    /// Defaults to the largest point of the last cell.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Skip Sturmian validation (right shifts become unavailable).
    #[serde(default)]
    pub force: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum CellConfig {
    Interval([f64; 2]),
    Points(Vec<f64>),
    Arithmetic { start: f64, step: f64, count: usize },
    Geometric { start: f64, ratio: f64, count: usize },
}

impl CellConfig {
    fn cell(&self) -> Cell {
        match self {
            CellConfig::Interval([lo, hi]) => Cell::interval(*lo, *hi),
            CellConfig::Points(p) => Cell::Points(p.clone()),
            CellConfig::Arithmetic { start, step, count } => Cell::arithmetic(*start, *step, *count),
            CellConfig::Geometric { start, ratio, count } => Cell::geometric(*start, *ratio, *count),
        }
    }
}

/// An expression given as text or as a bare number.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ExprText {
    Text(String),
    Number(f64),
}

impl ExprText {
    fn parse(&self) -> Result<Expr> {
        match self {
            ExprText::Text(s) => parse_expr(s),
            ExprText::Number(x) => Ok(Expr::Num(*x)),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<ExprText>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<ExprText>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<ExprText>>,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<ExprText>>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<ExprText>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SturmLiouvilleConfig {
    pub n: usize,
    /// `p_0, …, p_n`.
    pub p: Vec<ExprText>,
    #[serde(default)]
    pub weight: Option<ExprText>,
}

/// A complex entry: a real number or `[re, im]`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum ComplexText {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexText {
    pub fn value(self) -> C64 {
        match self {
            ComplexText::Real(x) => c(x, 0.0),
            ComplexText::Pair([re, im]) => c(re, im),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub alpha: Vec<Vec<ComplexText>>,
    pub beta: Vec<Vec<ComplexText>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigConfig {
    pub b: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    #[serde(default)]
    pub max_count: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub h: Option<f64>,
    pub quadrature: Quadrature,
    pub scan_points: usize,
    pub b_list: Vec<f64>,
    pub lambda_list: Vec<ComplexText>,
    pub eig: Option<EigConfig>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-10,
            atol: 1e-12,
            h: None,
            quadrature: Quadrature::default(),
            scan_points: 2001,
            b_list: Vec::new(),
            lambda_list: vec![ComplexText::Pair([0.0, 1.0]), ComplexText::Pair([0.0, -1.0])],
            eig: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub path: Option<String>,
}

/// A validated problem ready for the command driver.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    /// The document as parsed, echoed into reports.
    pub raw: serde_json::Value,
    pub source: String,
    pub digest: String,
    pub ts: TimeScale,
    pub field: CoefficientField,
    pub bp: BoundaryPair,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn propagate_options(&self) -> PropagateOptions {
        let s = &self.config.solver;
        PropagateOptions { rtol: s.rtol, atol: s.atol, h: s.h, with_gram: true }
    }

    pub fn search_options(&self) -> SearchOptions {
        let max_count = self.config.solver.eig.as_ref().and_then(|e| e.max_count).unwrap_or(usize::MAX);
        SearchOptions { scan_points: self.config.solver.scan_points, max_count, ..SearchOptions::default() }
    }

    pub fn lambdas(&self) -> Vec<C64> {
        self.config.solver.lambda_list.iter().map(|z| z.value()).collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_config(path: &Path) -> Result<Problem> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| Error::ConfigSyntax(format!("not UTF-8: {e}")))?;
    let mut problem = parse_config(&text)?;
    problem.source = path.display().to_string();
    problem.digest = sha256_hex(&bytes);
    Ok(problem)
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<Problem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ProblemConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = Error::ConfigSyntax(e.into_inner().to_string());
        if path == "." {
            inner
        } else {
            inner.at(path)
        }
    })?;
    validate(config, text)
}

fn expr_matrix(rows: &[Vec<ExprText>], d: usize, path: &str) -> Result<ExprMatrix> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension(format!("expected a {d}x{d} matrix")).at(path));
    }
    let mut entries = Vec::with_capacity(d * d);
    for (i, row) in rows.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            entries.push(Entry::new(e.parse().map_err(|err| err.at(format!("{path}[{i}][{j}]")))?));
        }
    }
    ExprMatrix::new(d, entries).map_err(|e| e.at(path))
}

fn complex_matrix(rows: &[Vec<ComplexText>], d: usize, path: &str) -> Result<CMat> {
    if rows.len() != d || rows.iter().any(|r| r.len() != 2 * d) {
        return Err(Error::Dimension(format!("expected a {d}x{} matrix", 2 * d)).at(path));
    }
    Ok(CMat::from_fn(d, 2 * d, |i, j| rows[i][j].value()))
}

fn validate(config: ProblemConfig, text: &str) -> Result<Problem> {
    let tsc = &config.timescale;
    let cells: Vec<Cell> = tsc.cells.iter().map(CellConfig::cell).collect();
    let horizon = match tsc.horizon {
        Some(h) => h,
        None => tsc
            .cells
            .last()
            .map(|c| match c.cell() {
                Cell::Interval { hi, .. } => hi,
                Cell::Points(p) => p.last().copied().unwrap_or(f64::NAN),
            })
            .ok_or_else(|| Error::MalformedTimeScale("no cells".into()).at("timescale.cells"))?,
    };
    let ts = build_timescale(cells, tsc.t0, horizon, tsc.force).map_err(|e| e.at("timescale"))?;
    let sample = make_grid(&ts, ts.min(), ts.horizon(), (ts.horizon() - ts.min()) / 1024.0).map_err(|e| e.at("timescale"))?;

    let field = match (&config.coefficients, &config.sturm_liouville) {
        (Some(_), Some(_)) => {
            return Err(Error::ConfigSyntax("give either coefficients or sturm_liouville, not both".into()).at("coefficients"))
        }
        (None, None) => return Err(Error::ConfigSyntax("missing field `coefficients` (or `sturm_liouville`)".into()).at("coefficients")),
        (Some(co), None) => {
            let d = config.d.unwrap_or(co.a.len());
            if d == 0 {
                return Err(Error::Dimension("d must be positive".into()).at("d"));
            }
            let a = expr_matrix(&co.a, d, "coefficients.A")?;
            let b = expr_matrix(&co.b, d, "coefficients.B")?;
            let cc = expr_matrix(&co.c, d, "coefficients.C")?;
            let w1 = expr_matrix(&co.w1, d, "coefficients.W1")?;
            let w2 = expr_matrix(&co.w2, d, "coefficients.W2")?;
            build_coefficients(a, b, cc, w1, w2, &sample).map_err(|e| {
                let block = match &e {
                    Error::NotHermitian { block, .. } | Error::IndefiniteWeight { block, .. } => block.to_string(),
                    _ => "A".into(),
                };
                e.at(format!("coefficients.{block}"))
            })?
        }
        (None, Some(sl)) => {
            if sl.n == 0 || sl.p.len() != sl.n + 1 {
                return Err(Error::Dimension(format!("expected n + 1 = {} coefficients", sl.n + 1)).at("sturm_liouville.p"));
            }
            if let Some(d) = config.d {
                if d != sl.n {
                    return Err(Error::Dimension(format!("d = {d} but n = {}", sl.n)).at("d"));
                }
            }
            let p = sl
                .p
                .iter()
                .enumerate()
                .map(|(k, e)| e.parse().map_err(|err| err.at(format!("sturm_liouville.p[{k}]"))))
                .collect::<Result<Vec<_>>>()?;
            let weight = match &sl.weight {
                Some(w) => w.parse().map_err(|e| e.at("sturm_liouville.weight"))?,
                None => Expr::Num(1.0),
            };
            from_sturm_liouville(p, weight, &sample).map_err(|e| e.at("sturm_liouville"))?
        }
    };
    let d = field.dim();
    let alpha = complex_matrix(&config.boundary.alpha, d, "boundary.alpha")?;
    let beta = complex_matrix(&config.boundary.beta, d, "boundary.beta")?;
    let bp = validate_boundary(alpha, beta).map_err(|e| {
        let which = match &e {
            Error::Boundary { which, .. } => *which,
            _ => "alpha",
        };
        e.at(format!("boundary.{which}"))
    })?;

    let s = &config.solver;
    if !(s.rtol > 0.0) || !(s.atol > 0.0) {
        return Err(Error::ConfigSyntax("tolerances must be positive".into()).at("solver.rtol"));
    }
    if matches!(s.h, Some(h) if !(h > 0.0)) {
        return Err(Error::ConfigSyntax("h must be positive".into()).at("solver.h"));
    }
    if s.scan_points < 3 {
        return Err(Error::ConfigSyntax("scan_points must be at least 3".into()).at("solver.scan_points"));
    }
    if !s.b_list.is_empty() {
        check_b_list(&ts, &s.b_list).map_err(|e| e.at("solver.b_list"))?;
    }
    for (k, z) in s.lambda_list.iter().enumerate() {
        let z = z.value();
        if !(z.re.is_finite() && z.im.is_finite()) || z.im == 0.0 {
            return Err(Error::RealLambda(z.re).at(format!("solver.lambda_list[{k}]")));
        }
    }
    if let Some(eig) = &s.eig {
        if !(eig.lambda_lo < eig.lambda_hi) {
            return Err(Error::ConfigSyntax("lambda_lo must be below lambda_hi".into()).at("solver.eig"));
        }
        if !(eig.b > ts.t0()) || !ts.contains(eig.b) {
            return Err(Error::NotInTimeScale(eig.b).at("solver.eig.b"));
        }
    }
    let raw = serde_json::from_str(text).map_err(|e| Error::ConfigSyntax(e.to_string()))?;
    Ok(Problem { config, raw, source: String::new(), digest: sha256_hex(text.as_bytes()), ts, field, bp })
}
