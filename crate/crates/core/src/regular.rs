//! Regular spectral problem on `[ρ(t0), b]`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::linalg::{det, eigh, fro, hermitian_fn, hstack, identity, null_space, rank, singular_values, symplectic_j, vstack, CMat, C64};
use crate::propagate::{fundamental_to, propagate_fundamental, PropagateOptions, Trajectory};
use crate::system::SampledPath;
use crate::timescale::{make_grid, Grid, PointKind, Quadrature, TimeScale};

/// Tolerance for the normalization and isotropy of boundary matrices.
pub const BOUNDARY_TOL: f64 = 1e-10;

/// Assumed accuracy of a polished root, in units of `ε·max(1, |λ|)`.
const ROOT_ULPS: f64 = 64.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPair {
    pub alpha: CMat,
    pub beta: CMat,
    /// `M = (-Jα*, 0)`.
    pub m: CMat,
    /// `N = (0, Jβ*)`.
    pub n: CMat,
}

fn check_boundary(which: &'static str, x: &CMat) -> Result<()> {
    let d = x.nrows();
    if x.ncols() != 2 * d {
        return Err(Error::Boundary { which, message: format!("expected a {d}x{} matrix, got {}x{}", 2 * d, d, x.ncols()) });
    }
    if rank(x, 1e-12) != d {
        return Err(Error::Boundary { which, message: format!("rank must be {d}") });
    }
    let gram = x * x.adjoint() - identity(d);
    let dev = fro(&gram);
    if dev > BOUNDARY_TOL {
        return Err(Error::Boundary { which, message: format!("{which}{which}* must equal I (deviation {dev:.3e})") });
    }
    let iso = fro(&(x * symplectic_j(d) * x.adjoint()));
    if iso > BOUNDARY_TOL {
        return Err(Error::Boundary { which, message: format!("{which}J{which}* must vanish (deviation {iso:.3e})") });
    }
    Ok(())
}

pub fn validate_boundary(alpha: CMat, beta: CMat) -> Result<BoundaryPair> {
    check_boundary("alpha", &alpha)?;
    check_boundary("beta", &beta)?;
    let d = alpha.nrows();
    if beta.nrows() != d {
        return Err(Error::Boundary { which: "beta", message: format!("expected {d} rows, got {}", beta.nrows()) });
    }
    let j = symplectic_j(d);
    let zero = CMat::zeros(2 * d, d);
    let m = hstack(&-(&j * alpha.adjoint()), &zero);
    let n = hstack(&zero, &(&j * beta.adjoint()));
    let bp = BoundaryPair { alpha, beta, m, n };
    let j2 = symplectic_j(d);
    let iso = fro(&(bp.m.adjoint() * &j2 * &bp.m)) + fro(&(bp.n.adjoint() * &j2 * &bp.n));
    if iso > BOUNDARY_TOL || rank(&vstack(&bp.m, &bp.n), 1e-12) != 2 * d {
        return Err(Error::Boundary { which: "alpha", message: "M and N do not encode a self-adjoint pair".into() });
    }
    Ok(bp)
}

impl BoundaryPair {
    pub fn dim(&self) -> usize {
        self.alpha.nrows()
    }

    /// `Φ(b, λ) M - N`.
    pub fn characteristic_matrix(&self, phi_b: &CMat) -> CMat {
        phi_b * &self.m - &self.n
    }
}

/// Grid used for determinant evaluations: endpoints, scattered points and a
/// pair of dense panels per stretch, leaving step control to the integrator.
fn coarse_grid(ts: &TimeScale, b: f64) -> Result<Grid> {
    let a = ts.rho_t0();
    make_grid(ts, a, b, b - a)
}

/// `Φ(b, λ)` with `Φ(ρ(t0)) = I`, without the Gram integral.
pub fn phi_at(field: &CoefficientField, ts: &TimeScale, b: f64, lambda: C64, opts: &PropagateOptions) -> Result<CMat> {
    let grid = coarse_grid(ts, b)?;
    let traj = propagate_fundamental(field, lambda, &identity(2 * field.dim()), &grid, &opts.without_gram())?;
    Ok(traj.last().clone())
}

/// `det(Φ(b, λ) M - N)`.
pub fn char_det(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    b: f64,
    lambda: C64,
    opts: &PropagateOptions,
) -> Result<C64> {
    Ok(det(&bp.characteristic_matrix(&phi_at(field, ts, b, lambda, opts)?)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub scan_points: usize,
    pub max_count: usize,
    /// Largest admissible `|Im λ|` of a polished root.
    pub imag_tol: f64,
    /// Null-space threshold relative to the largest singular value.
    pub null_tol: f64,
    /// Roots closer than this are merged.
    pub merge_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { scan_points: 2001, max_count: usize::MAX, imag_tol: 1e-9, null_tol: 1e-8, merge_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub lambda: f64,
    pub multiplicity: usize,
    /// Columns are initial values `y(ρ(t0)) = Mξ`, orthonormal in `⟨·,·⟩_b`.
    pub initial: CMat,
    /// Coefficient vectors `ξ` spanning the null space of `Φ(b,λ)M - N`.
    pub xi: CMat,
    /// Smallest singular value of `Φ(b,λ)M - N` relative to the largest.
    pub residual: f64,
    /// Relative cutoff used for the null space: `null_tol` plus the change of
    /// the matrix across the floating-point uncertainty of the root.
    pub null_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EigenList {
    pub b: f64,
    pub pairs: Vec<Eigenpair>,
}

impl EigenList {
    /// Eigenvalues repeated according to multiplicity.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().flat_map(|p| std::iter::repeat(p.lambda).take(p.multiplicity)).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Order by `|λ|`, negative first on ties.
pub fn spectral_order(a: f64, b: f64) -> std::cmp::Ordering {
    a.abs().total_cmp(&b.abs()).then(a.total_cmp(&b))
}

/// Complex secant iteration started at `x0, x1`.
fn secant<F>(f: F, x0: f64, x1: f64, max_iter: usize) -> Result<Option<C64>>
where
    F: Fn(C64) -> Result<C64>,
{
    let mut a = C64::new(x0, 0.0);
    let mut b = C64::new(x1, 0.0);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    for _ in 0..max_iter {
        if fb == C64::new(0.0, 0.0) {
            return Ok(Some(b));
        }
        let den = fb - fa;
        if den == C64::new(0.0, 0.0) {
            return Ok(None);
        }
        let c = b - fb * (b - a) / den;
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Ok(None);
        }
        let step = (c - b).norm();
        a = b;
        fa = fb;
        b = c;
        fb = f(b)?;
        if step <= 1e-14 * b.norm().max(1.0) {
            return Ok(Some(b));
        }
    }
    Ok(None)
}

/// Real eigenvalues in `[lambda_lo, lambda_hi]` with orthonormalized eigenfunction data.
#[allow(clippy::too_many_arguments)]
pub fn find_eigenvalues(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    b: f64,
    lambda_lo: f64,
    lambda_hi: f64,
    search: &SearchOptions,
    opts: &PropagateOptions,
) -> Result<EigenList> {
    if !(lambda_lo < lambda_hi) || search.max_count == 0 {
        return Ok(EigenList { b, pairs: Vec::new() });
    }
    let n = search.scan_points.max(3);
    let step = (lambda_hi - lambda_lo) / (n - 1) as f64;
    let lams: Vec<f64> = (0..n).map(|k| lambda_lo + step * k as f64).collect();
    let f = |l: C64| char_det(field, ts, bp, b, l, opts);
    let vals: Vec<f64> = lams.par_iter().map(|&l| f(C64::new(l, 0.0)).map(|z| z.norm())).collect::<Result<_>>()?;
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    // Every local minimum is a candidate; deep ones must polish to a root.
    let candidates: Vec<(usize, bool)> = (0..n)
        .filter(|&k| {
            let left = k == 0 || vals[k] < vals[k - 1];
            let right = k + 1 == n || vals[k] <= vals[k + 1];
            left && right
        })
        .map(|k| (k, vals[k] <= 1e-3 * median))
        .collect();
    // `None` marks a deep minimum whose polish failed; shallow failures are dropped.
    let polished: Vec<Option<Option<f64>>> = candidates
        .par_iter()
        .map(|&(k, deep)| {
            let x0 = lams[k];
            if vals[k] == 0.0 {
                return Ok(Some(Some(x0)));
            }
            let root = secant(f, x0, x0 + 0.1 * step, 80)?;
            let slack = 1e-9 * lambda_lo.abs().max(lambda_hi.abs()).max(1.0);
            Ok(match root {
                Some(z)
                    if z.im.abs() <= search.imag_tol
                        && z.re >= lambda_lo - slack
                        && z.re <= lambda_hi + slack
                        && (z.re - x0).abs() <= 2.0 * step =>
                {
                    Some(Some(z.re))
                }
                _ if deep => None,
                _ => Some(None),
            })
        })
        .collect::<Result<_>>()?;
    let mut roots = Vec::new();
    for (p, &(k, _)) in polished.iter().zip(&candidates) {
        match p {
            None => {
                return Err(Error::EigenSearch(format!(
                    "root polish diverged near lambda = {}; scan resolution too coarse",
                    lams[k]
                )))
            }
            Some(r) => roots.extend(r),
        }
    }
    roots.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for r in roots {
        match merged.last() {
            Some(&m) if (r - m).abs() <= search.merge_tol * m.abs().max(1.0) => {}
            _ => merged.push(r),
        }
    }
    let mut pairs = Vec::new();
    if merged.is_empty() {
        return Err(Error::EigenSearch(format!("no roots found in [{lambda_lo}, {lambda_hi}]")));
    }
    for lam in merged {
        let ch_at = |l: f64| -> Result<CMat> { Ok(bp.characteristic_matrix(&phi_at(field, ts, b, C64::new(l, 0.0), opts)?)) };
        let ch = ch_at(lam)?;
        let scale = lam.abs().max(1.0);
        let eta = 1e-6 * scale;
        let slope = fro(&(ch_at(lam + eta)? - ch_at(lam - eta)?)) / (2.0 * eta);
        let sv = singular_values(&ch);
        let smax = sv[0].max(f64::MIN_POSITIVE);
        // A root located to a few ulps still leaves `slope · δλ` in the matrix.
        let threshold = search.null_tol * smax + slope * ROOT_ULPS * f64::EPSILON * scale;
        let ns = null_space(&ch, threshold / smax);
        if ns.is_empty() {
            return Err(Error::EigenSearch(format!(
                "characteristic matrix is not singular at the polished root {lam} (smallest singular value {:.3e})",
                sv.last().copied().unwrap_or(0.0)
            )));
        }
        let xi = CMat::from_columns(&ns);
        pairs.push(Eigenpair {
            lambda: lam,
            multiplicity: ns.len(),
            initial: &bp.m * &xi,
            xi,
            residual: sv.last().copied().unwrap_or(0.0) / smax,
            null_threshold: threshold / smax,
        });
    }
    pairs.sort_by(|a, b| spectral_order(a.lambda, b.lambda));
    let mut total = 0;
    pairs.retain(|p| {
        let keep = total < search.max_count;
        total += p.multiplicity;
        keep
    });
    for pair in &mut pairs {
        let grid = make_grid(ts, ts.rho_t0(), b, opts.refinement(ts.rho_t0(), b))?;
        let traj = propagate_fundamental(field, C64::new(pair.lambda, 0.0), &identity(2 * field.dim()), &grid, opts)?;
        let k = traj.last_gram();
        pair.initial = orthonormalize(&pair.initial, k)?;
    }
    Ok(EigenList { b, pairs })
}

/// Löwdin orthonormalization `U (U* K U)^{-1/2}`.
pub fn orthonormalize(u: &CMat, k: &CMat) -> Result<CMat> {
    let g = u.adjoint() * k * u;
    let (vals, _) = eigh(&g);
    if vals.first().copied().unwrap_or(0.0) <= 0.0 {
        return Err(Error::DefinitenessFailed { horizon: f64::NAN });
    }
    Ok(u * hermitian_fn(&g, |v| 1.0 / v.sqrt()))
}

/// Eigenfunctions `Φ(t, λ_j) y_j(ρ(t0))` sampled on a common grid.
pub fn eigenfunctions(
    field: &CoefficientField,
    ts: &TimeScale,
    list: &EigenList,
    opts: &PropagateOptions,
) -> Result<Vec<Trajectory>> {
    let a = ts.rho_t0();
    let grid = make_grid(ts, a, list.b, opts.refinement(a, list.b))?;
    list.pairs
        .iter()
        .map(|p| propagate_fundamental(field, C64::new(p.lambda, 0.0), &p.initial, &grid, opts))
        .collect()
}

/// `⟨y, z⟩ = ∫ (Υz)* W (Υy) ∇t` over the sampled range.
pub fn weighted_inner_product(field: &CoefficientField, y: &SampledPath, z: &SampledPath, rule: Quadrature) -> Result<CMat> {
    if y.points.len() != z.points.len() || y.points.iter().zip(&z.points).any(|(p, q)| p.t != q.t) {
        return Err(Error::GridMismatch("paths are sampled on different grids".into()));
    }
    let d = field.dim();
    let shifted = |path: &SampledPath, k: usize| -> CMat {
        let p = path.points[k];
        let mut v = path.values[k].clone();
        if p.kind == PointKind::Scattered && k > 0 {
            let c = v.ncols();
            v.view_mut((d, 0), (d, c)).copy_from(&path.values[k - 1].view((d, 0), (d, c)));
        }
        v
    };
    let samples: Vec<CMat> = (0..y.points.len())
        .map(|k| {
            let p = y.points[k];
            Ok(shifted(z, k).adjoint() * field.w(p.t, p.nu)? * shifted(y, k))
        })
        .collect::<Result<_>>()?;
    let grid = Grid::from_points(y.points.clone(), 0.0)?;
    Ok(grid.integrate(&samples, rule))
}

/// Gram matrix of a sampled eigenfunction family, entry `(j, k) = ⟨y_j, y_k⟩`.
pub fn eigen_gram(field: &CoefficientField, funcs: &[Trajectory], rule: Quadrature) -> Result<CMat> {
    let paths: Vec<SampledPath> = funcs.iter().map(|t| t.path(0..t.samples[0].ncols())).collect();
    let sizes: Vec<usize> = paths.iter().map(|p| p.values[0].ncols()).collect();
    let total: usize = sizes.iter().sum();
    let mut g = CMat::zeros(total, total);
    let mut r0 = 0;
    for (j, pj) in paths.iter().enumerate() {
        let mut c0 = 0;
        for (k, pk) in paths.iter().enumerate() {
            // ⟨y_j, y_k⟩ = ∫ (Υy_k)* W (Υy_j); store it as entry (k, j) of the block Gram.
            let ip = weighted_inner_product(field, pj, pk, rule)?;
            g.view_mut((c0, r0), (sizes[k], sizes[j])).copy_from(&ip);
            c0 += sizes[k];
        }
        r0 += sizes[j];
    }
    Ok(g)
}

/// `K(t, λ) = ∫_{ρ(t0)}^t (ΥΦ)* W (ΥΦ) ∇τ`.
pub fn gram_k(field: &CoefficientField, ts: &TimeScale, lambda: C64, t: f64, opts: &PropagateOptions) -> Result<CMat> {
    if t == ts.rho_t0() {
        let n = 2 * field.dim();
        return Ok(CMat::zeros(n, n));
    }
    let traj = fundamental_to(field, ts, lambda, t, opts)?;
    Ok(traj.last_gram().clone())
}
