//! Weyl circles and disks, m-functions, limit analysis and classification.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{quarter, CoefficientField};
use crate::linalg::{c, eigh, fro, hermitian_fn, hstack, identity, imag_part, max_eig, min_eig, solve, symplectic_j, vstack, CMat, CVec, C64, I};
use crate::propagate::{propagate_fundamental, PropagateOptions, Trajectory};
use crate::regular::{weighted_inner_product, BoundaryPair};
use crate::system::SampledPath;
use crate::timescale::{make_grid_with_stops, Quadrature, TimeScale};

/// Eigenvalue floor applied before inverting `F22`.
pub const RADIUS_FLOOR: f64 = 1e-14;
/// A track is finite when it grows by less than this factor over the final doubling.
pub const FINITE_RATIO: f64 = 1.05;
/// A track is diverging when it grows by at least this factor over the final doubling.
pub const DIVERGING_RATIO: f64 = 2.0;
/// Relative increase of a truncated norm below which it counts as a plateau.
pub const PLATEAU_TOL: f64 = 1e-6;

/// `Y(t, λ)` with `Y(ρ(t0)) = Ω = (α*, Jα*)`.
#[derive(Debug, Clone)]
pub struct WeylBasis {
    pub omega: CMat,
    pub traj: Trajectory,
}

pub fn omega(alpha: &CMat) -> CMat {
    let d = alpha.nrows();
    hstack(&alpha.adjoint(), &(symplectic_j(d) * alpha.adjoint()))
}

/// Propagate the Weyl basis to `b_max`, with every entry of `stops` on the grid.
pub fn build_y(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    lambda: C64,
    b_max: f64,
    stops: &[f64],
    opts: &PropagateOptions,
) -> Result<WeylBasis> {
    let a = ts.rho_t0();
    let grid = make_grid_with_stops(ts, a, b_max, opts.refinement(a, b_max), stops)?;
    let omega = omega(&bp.alpha);
    let traj = propagate_fundamental(field, lambda, &omega, &grid, opts)?;
    Ok(WeylBasis { omega, traj })
}

impl WeylBasis {
    pub fn dim(&self) -> usize {
        self.omega.nrows() / 2
    }

    pub fn lambda(&self) -> C64 {
        self.traj.lambda
    }

    /// `θ(b)` and `φ(b)`, the first and last `d` columns of `Y(b)`.
    pub fn theta_phi(&self, b: f64) -> Result<(CMat, CMat)> {
        let y = self.traj.at(b)?;
        let d = self.dim();
        Ok((y.columns(0, d).into_owned(), y.columns(d, d).into_owned()))
    }

    /// `χ = Y (I; M)` sampled on the grid up to `b`.
    pub fn chi(&self, m: &CMat, b: f64) -> Result<SampledPath> {
        let end = self.traj.index(b)?;
        let im = vstack(&identity(self.dim()), m);
        SampledPath::new(
            self.traj.grid.points()[..=end].to_vec(),
            self.traj.samples[..=end].iter().map(|y| y * &im).collect(),
        )
    }
}

fn half_plane(lambda: C64) -> Result<f64> {
    if lambda.im > 0.0 {
        Ok(-1.0)
    } else if lambda.im < 0.0 {
        Ok(1.0)
    } else {
        Err(Error::RealLambda(lambda.re))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylData {
    pub b: f64,
    pub lambda: C64,
    /// `∓ i Y*(b) J Y(b)`.
    pub f: CMat,
    /// `∓ i J + 2 |Im λ| ∫ (ΥY)* W (ΥY) ∇t`.
    pub f_integral: CMat,
}

impl WeylData {
    pub fn dim(&self) -> usize {
        self.f.nrows() / 2
    }

    pub fn f11(&self) -> CMat {
        quarter(&self.f, 0, 0)
    }

    pub fn f12(&self) -> CMat {
        quarter(&self.f, 0, 1)
    }

    pub fn f22(&self) -> CMat {
        quarter(&self.f, 1, 1)
    }

    /// `‖F_boundary - F_integral‖_F`.
    pub fn dual_path_residual(&self) -> f64 {
        fro(&(&self.f - &self.f_integral))
    }

    pub fn hermitian_residual(&self) -> f64 {
        fro(&(&self.f - self.f.adjoint()))
    }
}

pub fn weyl_f(basis: &WeylBasis, b: f64) -> Result<WeylData> {
    let lambda = basis.lambda();
    let s = half_plane(lambda)?;
    let k = basis.traj.index(b)?;
    let y = &basis.traj.samples[k];
    let j = symplectic_j(basis.dim());
    let f = (y.adjoint() * &j * y) * (I * s);
    let gram = basis.traj.gram.get(k).ok_or(Error::MissingSample(b))?;
    let f_integral = &j * (I * s) + gram * c(2.0 * lambda.im.abs(), 0.0);
    Ok(WeylData { b, lambda, f, f_integral })
}

/// `‖(F12 F22⁻¹ F12* - F11)(b, λ) - F22⁻¹(b, λ̄)‖_F`.
pub fn block_identity_residual(wd: &WeylData, wd_conj: &WeylData) -> Result<f64> {
    let f12 = wd.f12();
    let lhs = &f12 * inverse(&wd.f22(), wd.b)? * f12.adjoint() - wd.f11();
    Ok(fro(&(lhs - inverse(&wd_conj.f22(), wd.b)?)))
}

fn inverse(m: &CMat, b: f64) -> Result<CMat> {
    solve(m, &identity(m.nrows())).ok_or(Error::SingularRadius { b, min_eig: min_eig(m) })
}

/// `H^{-1/2}` with eigenvalues clamped at [`RADIUS_FLOOR`].
fn inv_sqrt(h: &CMat, b: f64) -> Result<CMat> {
    let lo = min_eig(h);
    if lo < -1e-10 * max_eig(h).abs().max(1.0) || !lo.is_finite() {
        return Err(Error::SingularRadius { b, min_eig: lo });
    }
    Ok(hermitian_fn(h, |v| 1.0 / v.max(RADIUS_FLOOR).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylDisk {
    pub b: f64,
    pub lambda: C64,
    /// `𝒞 = -F22⁻¹ F12*`.
    pub center: CMat,
    /// `ℛ(b, λ) = F22(b, λ)^{-1/2}`.
    pub radius_l: CMat,
    /// `ℛ(b, λ̄)`.
    pub radius_r: CMat,
}

pub fn weyl_disk(wd: &WeylData, wd_conj: &WeylData) -> Result<WeylDisk> {
    let f22 = wd.f22();
    let center = -solve(&f22, &wd.f12().adjoint()).ok_or(Error::SingularRadius { b: wd.b, min_eig: min_eig(&f22) })?;
    Ok(WeylDisk {
        b: wd.b,
        lambda: wd.lambda,
        center,
        radius_l: inv_sqrt(&f22, wd.b)?,
        radius_r: inv_sqrt(&wd_conj.f22(), wd_conj.b)?,
    })
}

impl WeylDisk {
    /// `𝒞 + ℛ(λ) V ℛ(λ̄)`: on the circle for unitary `V`, inside for `‖V‖ ≤ 1`.
    pub fn point(&self, v: &CMat) -> CMat {
        &self.center + &self.radius_l * v * &self.radius_r
    }

    /// Points of the circle for `count` deterministic unitary parameters.
    pub fn circle_points(&self, count: usize) -> Vec<CMat> {
        unitary_samples(self.center.nrows(), count).iter().map(|v| self.point(v)).collect()
    }
}

/// Deterministic unitary matrices `exp(i H_k)` spread over the group.
pub fn unitary_samples(d: usize, count: usize) -> Vec<CMat> {
    (0..count)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / count as f64;
            let mut h = CMat::zeros(d, d);
            for r in 0..d {
                for s in 0..d {
                    let phase = (r * d + s + k) as f64;
                    h[(r, s)] = if r == s {
                        c(theta + 0.7 * phase.sin(), 0.0)
                    } else {
                        c(0.5 * (phase * 1.3).cos(), 0.5 * (phase * 0.9).sin())
                    };
                }
            }
            let h = (&h + h.adjoint()).scale(0.5);
            let (vals, vecs) = eigh(&h);
            let diag = CMat::from_diagonal(&CVec::from_iterator(d, vals.iter().map(|&v| (I * v).exp())));
            &vecs * diag * vecs.adjoint()
        })
        .collect()
}

/// Largest eigenvalue of `C(M, b) = (I, M*) F (I; M)`; `≤ 0` inside the disk.
pub fn disk_membership(m: &CMat, wd: &WeylData) -> f64 {
    let im = vstack(&identity(wd.dim()), m);
    max_eig(&(im.adjoint() * &wd.f * im))
}

/// `M(λ, b) = -(βφ(b))⁻¹ βθ(b)`.
pub fn m_function(basis: &WeylBasis, b: f64, beta: &CMat) -> Result<CMat> {
    let (theta, phi) = basis.theta_phi(b)?;
    let bphi = beta * phi;
    let btheta = beta * theta;
    solve(&bphi, &btheta).map(|x| -x).ok_or(Error::SingularBoundaryBlock { b })
}

/// `(Im M) / |Im λ|` signed so that it bounds the truncated norm of `χ`.
pub fn norm_bound(m: &CMat, lambda: C64) -> CMat {
    imag_part(m) * c(lambda.im.signum() / lambda.im.abs(), 0.0)
}

/// `∫_{ρ(t0)}^b (Υχ)* W (Υχ) ∇t` for `χ = Y (I; M)`, by direct quadrature of samples.
pub fn truncated_norm(field: &CoefficientField, basis: &WeylBasis, m: &CMat, b: f64, rule: Quadrature) -> Result<CMat> {
    let chi = basis.chi(m, b)?;
    weighted_inner_product(field, &chi, &chi, rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackKind {
    Finite,
    Diverging,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitReport {
    pub lambda: [f64; 2],
    pub b_list: Vec<f64>,
    /// Ascending eigenvalues of `F22(b, λ)` for every `b`.
    pub mu: Vec<Vec<f64>>,
    /// `μ_j(b_last) / μ_j(b_mid)` over the final doubling.
    pub ratios: Vec<f64>,
    pub tracks: Vec<TrackKind>,
    pub rank: usize,
    /// Limits `γ_j` of the finite tracks.
    pub gamma: Vec<f64>,
    #[serde(skip)]
    pub c0: CMat,
    #[serde(skip)]
    pub r0: CMat,
    #[serde(skip)]
    pub disks: Vec<WeylDisk>,
    #[serde(skip)]
    pub data: Vec<WeylData>,
    /// Truncated norms of the Weyl solutions `χ = Y (I; 𝒞₀)`, one column per entry, per `b`.
    pub chi_norms: Vec<Vec<f64>>,
    /// Eigenvalues of the Gram block `∫ (Υφ)* W (Υφ) ∇t`, per `b`.
    pub phi_gram_eigs: Vec<Vec<f64>>,
}

/// At least three strictly increasing points of the time scale beyond `t0`.
pub fn check_b_list(ts: &TimeScale, b_list: &[f64]) -> Result<()> {
    if b_list.len() < 3 {
        return Err(Error::BList("at least three entries are required".into()));
    }
    if b_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BList("entries must be strictly increasing".into()));
    }
    if b_list[0] <= ts.t0() {
        return Err(Error::BList(format!("entries must exceed t0 = {}", ts.t0())));
    }
    for &b in b_list {
        if !ts.contains(b) {
            return Err(Error::NotInTimeScale(b));
        }
    }
    Ok(())
}

/// Index of the entry closest to `b_last / 2`, taken relative to `ρ(t0)`.
fn mid_index(a: f64, b_list: &[f64]) -> usize {
    let n = b_list.len();
    let target = a + 0.5 * (b_list[n - 1] - a);
    (0..n - 1).min_by(|&i, &j| (b_list[i] - target).abs().total_cmp(&(b_list[j] - target).abs())).unwrap_or(0)
}

/// Weyl data at `λ` and `λ̄` for every `b`.
pub fn weyl_sequence(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    lambda: C64,
    b_list: &[f64],
    opts: &PropagateOptions,
) -> Result<(WeylBasis, WeylBasis, Vec<WeylData>, Vec<WeylData>)> {
    half_plane(lambda)?;
    let b_max = *b_list.last().ok_or_else(|| Error::BList("empty".into()))?;
    let opts = PropagateOptions { with_gram: true, ..*opts };
    let mut bases: Vec<WeylBasis> = [lambda, lambda.conj()]
        .par_iter()
        .map(|&l| build_y(field, ts, bp, l, b_max, b_list, &opts))
        .collect::<Result<_>>()?;
    let conj = bases.pop().expect("two bases");
    let basis = bases.pop().expect("two bases");
    let data = b_list.iter().map(|&b| weyl_f(&basis, b)).collect::<Result<Vec<_>>>()?;
    let data_conj = b_list.iter().map(|&b| weyl_f(&conj, b)).collect::<Result<Vec<_>>>()?;
    Ok((basis, conj, data, data_conj))
}

/// Disks and `F22` eigenvalue tracks along `b_list`.
#[derive(Debug, Clone)]
pub struct WeylTrace {
    pub lambda: C64,
    pub b_list: Vec<f64>,
    pub basis: WeylBasis,
    pub basis_conj: WeylBasis,
    pub data: Vec<WeylData>,
    pub data_conj: Vec<WeylData>,
    pub disks: Vec<WeylDisk>,
    /// Ascending eigenvalues `μ_j(b)` of `F22(b, λ)`.
    pub mu: Vec<Vec<f64>>,
}

pub fn weyl_trace(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    lambda: C64,
    b_list: &[f64],
    opts: &PropagateOptions,
) -> Result<WeylTrace> {
    check_b_list(ts, b_list)?;
    let (basis, basis_conj, data, data_conj) = weyl_sequence(field, ts, bp, lambda, b_list, opts)?;
    let disks = data.iter().zip(&data_conj).map(|(w, wc)| weyl_disk(w, wc)).collect::<Result<Vec<_>>>()?;
    let mu: Vec<Vec<f64>> = data.iter().map(|w| eigh(&w.f22()).0).collect();
    for j in 0..bp.dim() {
        for k in 1..mu.len() {
            let (prev, next) = (mu[k - 1][j], mu[k][j]);
            if next < prev - 1e-10 * prev.abs().max(1.0) {
                return Err(Error::NonMonotoneTrack { track: j + 1, b_prev: b_list[k - 1], b_next: b_list[k] });
            }
        }
    }
    Ok(WeylTrace { lambda, b_list: b_list.to_vec(), basis, basis_conj, data, data_conj, disks, mu })
}

impl WeylTrace {
    /// Growth ratio of every track over the final doubling and its verdict.
    pub fn track_ratios(&self, a: f64) -> Vec<(f64, Option<TrackKind>)> {
        let n = self.b_list.len();
        let mid = mid_index(a, &self.b_list);
        (0..self.mu[0].len())
            .map(|j| {
                let ratio = self.mu[n - 1][j] / self.mu[mid][j];
                let kind = if ratio < FINITE_RATIO {
                    Some(TrackKind::Finite)
                } else if ratio >= DIVERGING_RATIO || !ratio.is_finite() {
                    Some(TrackKind::Diverging)
                } else {
                    None
                };
                (ratio, kind)
            })
            .collect()
    }

    /// Number of finite tracks, or [`Error::UnstableRank`] for a track in the gap.
    pub fn rank(&self, a: f64) -> Result<usize> {
        let mut r = 0;
        for (j, (ratio, kind)) in self.track_ratios(a).into_iter().enumerate() {
            match kind {
                Some(TrackKind::Finite) => r += 1,
                Some(TrackKind::Diverging) => {}
                None => return Err(Error::UnstableRank { track: j + 1, ratio }),
            }
        }
        Ok(r)
    }
}

pub fn limit_disk(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    lambda: C64,
    b_list: &[f64],
    opts: &PropagateOptions,
) -> Result<LimitReport> {
    let trace = weyl_trace(field, ts, bp, lambda, b_list, opts)?;
    trace.rank(ts.rho_t0())?;
    let d = bp.dim();
    let n = b_list.len();
    let (ratios, tracks): (Vec<f64>, Vec<TrackKind>) =
        trace.track_ratios(ts.rho_t0()).into_iter().map(|(r, k)| (r, k.expect("rank checked"))).unzip();
    let WeylTrace { basis, data, disks, mu, .. } = trace;
    let last = &data[n - 1];
    let (vals, vecs) = eigh(&last.f22());
    let gamma: Vec<f64> = (0..d).filter(|&j| tracks[j] == TrackKind::Finite).map(|j| vals[j]).collect();
    let r0_diag = CVec::from_iterator(
        d,
        (0..d).map(|j| if tracks[j] == TrackKind::Finite { c(1.0 / vals[j].max(RADIUS_FLOOR).sqrt(), 0.0) } else { c(0.0, 0.0) }),
    );
    let r0 = &vecs * CMat::from_diagonal(&r0_diag) * vecs.adjoint();
    let c0 = disks[n - 1].center.clone();
    let chi_norms = b_list
        .iter()
        .map(|&b| {
            let nrm = truncated_norm(field, &basis, &c0, b, Quadrature::Richardson)?;
            Ok((0..d).map(|j| nrm[(j, j)].re).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let phi_gram_eigs = b_list
        .iter()
        .map(|&b| Ok(eigh(&quarter(basis.traj.gram_at(b)?, 1, 1)).0))
        .collect::<Result<Vec<_>>>()?;
    Ok(LimitReport {
        lambda: [lambda.re, lambda.im],
        b_list: b_list.to_vec(),
        mu,
        ratios,
        rank: gamma.len(),
        tracks,
        gamma,
        c0,
        r0,
        disks,
        data,
        chi_norms,
        phi_gram_eigs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SquareSummable {
    pub lambda: [f64; 2],
    /// `d + r(λ)` from the disk radii.
    pub count: usize,
    pub rank: usize,
    /// Columns of the fundamental system `(χ, φ)` whose truncated norm plateaus:
    /// relative increase over the last interval below [`PLATEAU_TOL`].
    pub plateau_count: usize,
    /// Relative increases, `χ` columns first, then the `φ` Gram eigenvalues.
    pub plateau_increase: Vec<f64>,
    pub consistent: bool,
}

pub fn square_summable_from(report: &LimitReport, d: usize) -> SquareSummable {
    let n = report.b_list.len();
    let increase = |series: &[Vec<f64>]| -> Vec<f64> {
        series[n - 2].iter().zip(&series[n - 1]).map(|(p, l)| (l - p) / p.abs().max(f64::MIN_POSITIVE)).collect()
    };
    let mut plateau_increase = increase(&report.chi_norms);
    plateau_increase.extend(increase(&report.phi_gram_eigs));
    let plateau_count = plateau_increase.iter().filter(|&&x| x.abs() < PLATEAU_TOL).count();
    let count = d + report.rank;
    SquareSummable {
        lambda: report.lambda,
        count,
        rank: report.rank,
        plateau_count,
        plateau_increase,
        consistent: plateau_count == count,
    }
}

pub fn count_square_summable(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    lambda: C64,
    b_list: &[f64],
    opts: &PropagateOptions,
) -> Result<SquareSummable> {
    let report = limit_disk(field, ts, bp, lambda, b_list, opts)?;
    Ok(square_summable_from(&report, bp.dim()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "case")]
pub enum Label {
    Lpc,
    Lcc,
    Intermediate { d_plus: usize, d_minus: usize },
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Lpc => write!(f, "lpc"),
            Label::Lcc => write!(f, "lcc"),
            Label::Intermediate { d_plus, d_minus } => write!(f, "intermediate({d_plus},{d_minus})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LargestDefectCheck {
    pub lambda: [f64; 2],
    pub count: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub d: usize,
    pub d_plus: usize,
    pub d_minus: usize,
    pub r_plus: usize,
    pub r_minus: usize,
    pub label: Label,
    pub counts: Vec<SquareSummable>,
    pub limits: Vec<LimitReport>,
    /// Second-probe check, run when every solution is square summable at a probe.
    pub largest_defect: Option<LargestDefectCheck>,
    /// `d₊ = d₋`, reported for real coefficient fields.
    pub real_symmetry: Option<bool>,
}

pub fn label_for(d: usize, d_plus: usize, d_minus: usize) -> Label {
    if d_plus == d && d_minus == d {
        Label::Lpc
    } else if d_plus == 2 * d && d_minus == 2 * d {
        Label::Lcc
    } else {
        Label::Intermediate { d_plus, d_minus }
    }
}

pub fn classify(
    field: &CoefficientField,
    ts: &TimeScale,
    bp: &BoundaryPair,
    lambda_plus: C64,
    lambda_minus: C64,
    b_list: &[f64],
    opts: &PropagateOptions,
) -> Result<ClassificationReport> {
    if !(lambda_plus.im > 0.0) {
        return Err(Error::RealLambda(lambda_plus.re));
    }
    if !(lambda_minus.im < 0.0) {
        return Err(Error::RealLambda(lambda_minus.re));
    }
    let d = bp.dim();
    let limits = [lambda_plus, lambda_minus]
        .par_iter()
        .map(|&l| limit_disk(field, ts, bp, l, b_list, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut counts: Vec<SquareSummable> = limits.iter().map(|r| square_summable_from(r, d)).collect();
    let (r_plus, r_minus) = (limits[0].rank, limits[1].rank);
    let (d_plus, d_minus) = (d + r_plus, d + r_minus);
    let largest_defect = if d_plus == 2 * d || d_minus == 2 * d {
        let probe = if d_plus == 2 * d { lambda_plus + 1.0 } else { lambda_minus + 1.0 };
        let extra = count_square_summable(field, ts, bp, probe, b_list, opts)?;
        let check = LargestDefectCheck { lambda: [probe.re, probe.im], count: extra.count, holds: extra.count == 2 * d };
        counts.push(extra);
        Some(check)
    } else {
        None
    };
    Ok(ClassificationReport {
        d,
        d_plus,
        d_minus,
        r_plus,
        r_minus,
        label: label_for(d, d_plus, d_minus),
        counts,
        limits,
        largest_defect,
        real_symmetry: field.is_real().then_some(d_plus == d_minus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::field::ExprMatrix;
    use crate::linalg::hermitian_defect;
    use crate::regular::validate_boundary;
    use crate::timescale::{build_timescale, Cell};

    fn m1(s: &str) -> ExprMatrix {
        ExprMatrix::from_exprs(1, vec![parse_expr(s).unwrap()]).unwrap()
    }

    fn field(w1: &str) -> CoefficientField {
        CoefficientField::new(m1("0"), m1("1"), m1("0"), m1(w1), m1("0")).unwrap()
    }

    fn row(a: f64, b: f64) -> CMat {
        CMat::from_row_slice(1, 2, &[c(a, 0.0), c(b, 0.0)])
    }

    fn dirichlet() -> BoundaryPair {
        validate_boundary(row(1.0, 0.0), row(1.0, 0.0)).unwrap()
    }

    fn half_line(h: f64) -> TimeScale {
        build_timescale(vec![Cell::interval(0.0, h)], 0.0, h, false).unwrap()
    }

    #[test]
    fn omega_properties() {
        assert_eq!(omega(&row(1.0, 0.0)), identity(2));
        let s = 0.5f64.sqrt();
        let om = omega(&row(s, s));
        let j = symplectic_j(1);
        assert!(fro(&(om.adjoint() * &j * &om - &j)) <= 1e-12);
        assert!(fro(&(om.adjoint() * &om - identity(2))) <= 1e-12);
    }

    #[test]
    fn basis_columns_at_lambda_one() {
        let ts = half_line(5.0);
        let basis = build_y(&field("1"), &ts, &dirichlet(), c(1.0, 0.0), 5.0, &[], &PropagateOptions::default()).unwrap();
        for (k, p) in basis.traj.grid.points().iter().enumerate().step_by(97) {
            let y = &basis.traj.samples[k];
            assert!((y[(0, 0)] - c(p.t.cos(), 0.0)).norm() < 1e-8);
            assert!((y[(0, 1)] - c(p.t.sin(), 0.0)).norm() < 1e-8);
        }
    }

    #[test]
    fn real_lambda_rejected() {
        let ts = half_line(5.0);
        let basis = build_y(&field("1"), &ts, &dirichlet(), c(1.0, 0.0), 5.0, &[], &PropagateOptions::default()).unwrap();
        assert!(matches!(weyl_f(&basis, 5.0), Err(Error::RealLambda(_))));
    }

    #[test]
    fn m_function_closed_form() {
        let ts = half_line(3.0);
        let lam = c(0.4, 0.8);
        let basis = build_y(&field("1"), &ts, &dirichlet(), lam, 3.0, &[], &PropagateOptions::default()).unwrap();
        let m = m_function(&basis, 3.0, &row(1.0, 0.0)).unwrap();
        let sl = lam.sqrt();
        let want = -sl * (sl * 3.0).cos() / (sl * 3.0).sin();
        assert!((m[(0, 0)] - want).norm() < 1e-8);
        let wd = weyl_f(&basis, 3.0).unwrap();
        assert!(disk_membership(&m, &wd).abs() <= 1e-7);
        assert!(hermitian_defect(&wd.f) <= 1e-8);
    }

    #[test]
    fn disk_geometry() {
        let ts = half_line(4.0);
        let opts = PropagateOptions::default();
        let (_, _, data, data_conj) = weyl_sequence(&field("exp(-t)"), &ts, &dirichlet(), I, &[2.0, 3.0, 4.0], &opts).unwrap();
        let disk = weyl_disk(&data[2], &data_conj[2]).unwrap();
        let wd = &data[2];
        assert!(disk_membership(&disk.center, wd) < 0.0);
        for m in disk.circle_points(16) {
            assert!(disk_membership(&m, wd).abs() <= 1e-7);
        }
        let far = &disk.center + &disk.radius_l * c(10.0, 0.0);
        assert!(disk_membership(&far, wd) > 0.0);
        assert!(hermitian_defect(&disk.radius_l) <= 1e-10);
        // Scalar reduction.
        let f12 = wd.f12()[(0, 0)];
        let f22 = wd.f22()[(0, 0)];
        assert!((disk.center[(0, 0)] + f12.conj() / f22).norm() < 1e-12);
        assert!((disk.radius_l[(0, 0)].re - 1.0 / f22.re.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unitary_samples_are_unitary() {
        for d in 1..4 {
            let us = unitary_samples(d, 16);
            assert_eq!(us.len(), 16);
            for u in us {
                assert!(fro(&(u.adjoint() * &u - identity(d))) < 1e-12);
            }
        }
    }

    #[test]
    fn labels() {
        assert_eq!(label_for(1, 1, 1), Label::Lpc);
        assert_eq!(label_for(1, 2, 2), Label::Lcc);
        assert_eq!(label_for(2, 3, 3), Label::Intermediate { d_plus: 3, d_minus: 3 });
        assert_eq!(label_for(2, 3, 3).to_string(), "intermediate(3,3)");
    }

    #[test]
    fn b_list_validation() {
        let ts = half_line(10.0);
        let opts = PropagateOptions::default();
        let f = field("1");
        assert!(matches!(limit_disk(&f, &ts, &dirichlet(), I, &[2.0, 4.0], &opts), Err(Error::BList(_))));
        assert!(matches!(limit_disk(&f, &ts, &dirichlet(), I, &[2.0, 4.0, 3.0], &opts), Err(Error::BList(_))));
        assert!(matches!(limit_disk(&f, &ts, &dirichlet(), c(1.0, 0.0), &[2.0, 4.0, 8.0], &opts), Err(Error::RealLambda(_))));
    }
}
