//! Fundamental matrices of `y^∇ = S(t, λ) y` and conservation checks.

use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::linalg::{det, fro, identity, solve, symplectic_j, vstack, CMat, C64};
use crate::rk::{Dopri5, RkStats};
use crate::system::{s_matrix, SampledPath};
use crate::timescale::{make_grid, Grid, PointKind, Quadrature, TimeScale};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagateOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Dense grid refinement; `None` picks `(b - a) / 1024`.
    pub h: Option<f64>,
    /// Accumulate `K(t) = ∫ (ΥΦ)* W (ΥΦ) ∇τ` alongside `Φ`.
    pub with_gram: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions { rtol: 1e-10, atol: 1e-12, h: None, with_gram: true }
    }
}

impl PropagateOptions {
    pub fn without_gram(self) -> Self {
        PropagateOptions { with_gram: false, ..self }
    }

    pub fn refinement(&self, a: f64, b: f64) -> f64 {
        self.h.unwrap_or((b - a) / 1024.0)
    }
}

/// Samples of a matrix solution at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub lambda: C64,
    pub samples: Vec<CMat>,
    /// Gram integrals at every grid point (empty unless requested).
    pub gram: Vec<CMat>,
    pub initial: CMat,
    /// `det Φ` carried step by step: divided by `det(I - νS)` at scattered
    /// points, multiplied by `det Ψ` of the panel propagator on dense panels.
    pub det: Vec<C64>,
    pub stats: RkStats,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.samples[0].nrows() / 2
    }

    pub fn index(&self, t: f64) -> Result<usize> {
        self.grid.index_of(t).ok_or(Error::MissingSample(t))
    }

    pub fn at(&self, t: f64) -> Result<&CMat> {
        Ok(&self.samples[self.index(t)?])
    }

    pub fn gram_at(&self, t: f64) -> Result<&CMat> {
        let k = self.index(t)?;
        self.gram.get(k).ok_or(Error::MissingSample(t))
    }

    pub fn last(&self) -> &CMat {
        self.samples.last().expect("nonempty trajectory")
    }

    pub fn last_gram(&self) -> &CMat {
        self.gram.last().expect("trajectory built with a Gram integral")
    }

    /// `ΥΦ` at grid index `k`.
    pub fn shifted(&self, k: usize) -> CMat {
        let p = self.grid.points()[k];
        if p.kind == PointKind::Scattered && k > 0 {
            let d = self.dim();
            let mut out = self.samples[k].clone();
            let n = out.ncols();
            out.view_mut((d, 0), (d, n)).copy_from(&self.samples[k - 1].view((d, 0), (d, n)));
            out
        } else {
            self.samples[k].clone()
        }
    }

    /// Columns `cols` of the trajectory as a sampled path.
    pub fn path(&self, cols: std::ops::Range<usize>) -> SampledPath {
        SampledPath {
            points: self.grid.points().to_vec(),
            values: self.samples.iter().map(|m| m.columns(cols.start, cols.len()).into_owned()).collect(),
        }
    }
}

/// Propagate `Φ` from `initial` at the first grid point across the grid.
///
/// Scattered points use the implicit step `(I - νS) Φ(t) = Φ(ρ(t))`; dense
/// stretches run the adaptive integrator between consecutive grid points.
pub fn propagate_fundamental(
    field: &CoefficientField,
    lambda: C64,
    initial: &CMat,
    grid: &Grid,
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    let n = 2 * field.dim();
    if initial.nrows() != n {
        return Err(Error::Dimension(format!("initial value has {} rows, expected {n}", initial.nrows())));
    }
    let m = initial.ncols();
    let pts = grid.points();
    let mut samples = Vec::with_capacity(pts.len());
    let mut gram = Vec::with_capacity(if opts.with_gram { pts.len() } else { 0 });
    samples.push(initial.clone());
    let square = initial.is_square();
    let mut dets = vec![if square { det(initial) } else { C64::new(f64::NAN, 0.0) }];
    if opts.with_gram {
        gram.push(CMat::zeros(m, m));
    }
    let rk = Dopri5::new(opts.rtol, opts.atol);
    let mut stats = RkStats::default();
    let mut h = 0.0;
    let with_gram = opts.with_gram;
    // Dense panels integrate the panel propagator Ψ from the identity, with
    // G = ∫ Ψ* W Ψ alongside, and compose: Φ(t) = Ψ Φ(t_prev).
    let rhs = |t: f64, y: &CMat| -> Result<CMat> {
        let co = field.at(t, 0.0)?;
        let s = s_matrix(&co, 0.0, lambda, t)?;
        let psi = y.rows(0, n);
        let dpsi = &s * psi;
        if with_gram {
            let dg = psi.adjoint() * co.w() * psi;
            Ok(vstack(&dpsi, &dg))
        } else {
            Ok(dpsi)
        }
    };
    for k in 1..pts.len() {
        let p = pts[k];
        let prev = &samples[k - 1];
        if p.nu > 0.0 {
            let co = field.at(p.t, p.nu)?;
            let s = s_matrix(&co, p.nu, lambda, p.t)?;
            let step = identity(n) - s.scale(p.nu);
            let next = solve(&step, prev).ok_or(Error::SingularStep { t: p.t })?;
            if !next.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::SingularStep { t: p.t });
            }
            dets.push(dets[k - 1] / det(&step));
            if with_gram {
                let d = n / 2;
                let mut up = next.clone();
                up.view_mut((d, 0), (d, m)).copy_from(&prev.view((d, 0), (d, m)));
                let inc = up.adjoint() * co.w() * &up;
                let kk = &gram[k - 1] + inc.scale(p.nu);
                gram.push(kk);
            }
            samples.push(next);
        } else {
            let t_prev = pts[k - 1].t;
            let y0 = if with_gram { vstack(&identity(n), &CMat::zeros(n, n)) } else { identity(n) };
            let y1 = rk.integrate(rhs, t_prev, y0, p.t, &mut h, &mut stats)?;
            let psi = y1.rows(0, n);
            let next = &psi * prev;
            if with_gram {
                let g = y1.rows(n, n);
                gram.push(&gram[k - 1] + prev.adjoint() * g * prev);
            }
            dets.push(if square { dets[k - 1] * det(&psi.into_owned()) } else { dets[k - 1] });
            samples.push(next);
        }
    }
    Ok(Trajectory { grid: grid.clone(), lambda, samples, gram, initial: initial.clone(), det: dets, stats })
}

/// Fundamental matrix from `ρ(t0)` to `b` on a fresh grid.
pub fn fundamental_to(
    field: &CoefficientField,
    ts: &TimeScale,
    lambda: C64,
    b: f64,
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    let a = ts.rho_t0();
    let grid = make_grid(ts, a, b, opts.refinement(a, b))?;
    propagate_fundamental(field, lambda, &identity(2 * field.dim()), &grid, opts)
}

/// `ê_q(t_end, ρ(t0))`, the solution of `x^∇ = q x` with `x(ρ(t0)) = 1`.
pub fn nabla_exponential<Q>(q: Q, ts: &TimeScale, t_end: f64, opts: &PropagateOptions) -> Result<C64>
where
    Q: Fn(f64) -> Result<C64>,
{
    let a = ts.rho_t0();
    if t_end == a {
        return Ok(C64::new(1.0, 0.0));
    }
    let grid = make_grid(ts, a, t_end, opts.refinement(a, t_end))?;
    let rk = Dopri5::new(opts.rtol, opts.atol);
    let mut stats = RkStats::default();
    let mut h = 0.0;
    let mut x = C64::new(1.0, 0.0);
    let pts = grid.points();
    for k in 1..pts.len() {
        let p = pts[k];
        if p.nu > 0.0 {
            let den = C64::new(1.0, 0.0) - q(p.t)? * p.nu;
            if den.norm() <= 1e-14 {
                return Err(Error::NotRegressive { t: p.t });
            }
            x /= den;
        } else {
            let y = rk.integrate(
                |t, y| Ok(y.map(|z| z) * q(t)?),
                pts[k - 1].t,
                CMat::from_element(1, 1, x),
                p.t,
                &mut h,
                &mut stats,
            )?;
            x = y[(0, 0)];
        }
    }
    Ok(x)
}

fn same_grid(a: &Trajectory, b: &Trajectory) -> Result<()> {
    let (pa, pb) = (a.grid.points(), b.grid.points());
    if pa.len() != pb.len() || pa.iter().zip(pb).any(|(x, y)| x.t != y.t) {
        return Err(Error::GridMismatch("trajectories are sampled on different grids".into()));
    }
    Ok(())
}

/// `sup_t ‖Y*(t, λ̄) J Y(t, λ) - Y*(ρ(t0), λ̄) J Y(ρ(t0), λ)‖_F`.
pub fn symplectic_residual(traj_lambda: &Trajectory, traj_lambdabar: &Trajectory) -> Result<f64> {
    same_grid(traj_lambda, traj_lambdabar)?;
    let j = symplectic_j(traj_lambda.dim());
    let base = traj_lambdabar.initial.adjoint() * &j * &traj_lambda.initial;
    Ok(traj_lambda
        .samples
        .iter()
        .zip(&traj_lambdabar.samples)
        .map(|(y, z)| fro(&(z.adjoint() * &j * y - &base)))
        .fold(0.0, f64::max))
}

/// `sup_t |det(Φ*Φ) - 1| = sup_t | |det Φ|² - 1 |` from the carried determinant.
pub fn liouville_residual(traj: &Trajectory) -> f64 {
    traj.det.iter().map(|d| (d.norm_sqr() - 1.0).abs()).fold(0.0, f64::max)
}

/// Same quantity evaluated on each stored sample. Loses about `κ(Φ)·ε` of
/// accuracy, so it is only informative on well-conditioned trajectories.
pub fn liouville_residual_direct(traj: &Trajectory) -> f64 {
    traj.samples.iter().map(|phi| (det(phi).norm_sqr() - 1.0).abs()).fold(0.0, f64::max)
}

/// A sampled path together with its nabla derivative at every point.
#[derive(Debug, Clone, PartialEq)]
pub struct NablaPath {
    pub path: SampledPath,
    pub deriv: Vec<CMat>,
}

impl NablaPath {
    pub fn with_derivatives(path: SampledPath, deriv: Vec<CMat>) -> Result<NablaPath> {
        if deriv.len() != path.values.len() {
            return Err(Error::GridMismatch("one derivative per sample is required".into()));
        }
        Ok(NablaPath { path, deriv })
    }

    /// Backward differences at scattered points and five-point differences on
    /// dense stretches (centered inside, shifted toward the interior near the ends).
    pub fn with_differences(path: SampledPath) -> NablaPath {
        let pts = &path.points;
        let v = &path.values;
        let n = pts.len();
        let zero = v[0].scale(0.0);
        let mut deriv = vec![zero; n];
        let mut k = 0;
        while k < n {
            if pts[k].nu > 0.0 {
                if k > 0 {
                    deriv[k] = (&v[k] - &v[k - 1]).scale(1.0 / pts[k].nu);
                }
                k += 1;
                continue;
            }
            // Maximal dense stretch [k, e].
            let mut e = k;
            while e + 1 < n && pts[e + 1].nu == 0.0 {
                e += 1;
            }
            let len = e - k + 1;
            if len > 1 {
                let width = len.min(5);
                for i in k..=e {
                    let lo = i.saturating_sub(width / 2).max(k).min(e + 1 - width);
                    let nodes: Vec<f64> = (lo..lo + width).map(|m| pts[m].t).collect();
                    let w = derivative_weights(pts[i].t, &nodes);
                    let mut acc = v[lo].scale(w[0]);
                    for (m, wm) in w.iter().enumerate().skip(1) {
                        acc += v[lo + m].scale(*wm);
                    }
                    deriv[i] = acc;
                }
            }
            k = e + 1;
        }
        NablaPath { path, deriv }
    }

    fn shifted(&self, k: usize) -> CMat {
        let p = self.path.points[k];
        if p.kind == PointKind::Scattered && k > 0 {
            let d = self.path.values[k].nrows() / 2;
            let c = self.path.values[k].ncols();
            let mut out = self.path.values[k].clone();
            out.view_mut((d, 0), (d, c)).copy_from(&self.path.values[k - 1].view((d, 0), (d, c)));
            out
        } else {
            self.path.values[k].clone()
        }
    }
}

/// Weights of the first derivative at `x0` of the interpolant through `nodes`.
fn derivative_weights(x0: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|j| {
            let mut total = 0.0;
            for l in (0..n).filter(|&l| l != j) {
                let mut term = 1.0 / (nodes[j] - nodes[l]);
                for m in (0..n).filter(|&m| m != j && m != l) {
                    term *= (x0 - nodes[m]) / (nodes[j] - nodes[m]);
                }
                total += term;
            }
            total
        })
        .collect()
}

/// `‖∫ {(Υx)* ℒy - (ℒx)* Υy} ∇t - [x* J y]‖_F` over the sampled range, with
/// `ℒy = J y^∇ - P Υy`.
pub fn lagrange_residual(field: &CoefficientField, x: &NablaPath, y: &NablaPath, rule: Quadrature) -> Result<f64> {
    let pts = &x.path.points;
    if pts.len() != y.path.points.len() || pts.iter().zip(&y.path.points).any(|(a, b)| a.t != b.t) {
        return Err(Error::GridMismatch("paths are sampled on different grids".into()));
    }
    let j = symplectic_j(field.dim());
    let mut integrand = Vec::with_capacity(pts.len());
    for (k, p) in pts.iter().enumerate() {
        let pm = field.p(p.t, p.nu)?;
        let (ux, uy) = (x.shifted(k), y.shifted(k));
        let lx = &j * &x.deriv[k] - &pm * &ux;
        let ly = &j * &y.deriv[k] - &pm * &uy;
        integrand.push(ux.adjoint() * ly - lx.adjoint() * uy);
    }
    let grid = Grid::from_points(pts.clone(), 0.0)?;
    let lhs = grid.integrate(&integrand, rule);
    let last = pts.len() - 1;
    let form = |k: usize| x.path.values[k].adjoint() * &j * &y.path.values[k];
    let rhs = form(last) - form(0);
    Ok(fro(&(lhs - rhs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::field::ExprMatrix;
    use crate::linalg::c;
    use crate::timescale::{build_timescale, make_grid_with_stops, Cell};
    use std::f64::consts::PI;

    fn m1(s: &str) -> ExprMatrix {
        ExprMatrix::from_exprs(1, vec![parse_expr(s).unwrap()]).unwrap()
    }

    fn free() -> CoefficientField {
        CoefficientField::new(m1("0"), m1("1"), m1("0"), m1("1"), m1("0")).unwrap()
    }

    fn integers(n: usize) -> TimeScale {
        build_timescale(vec![Cell::arithmetic(0.0, 1.0, n + 1)], 1.0, n as f64, false).unwrap()
    }

    #[test]
    fn discrete_free_system_at_zero() {
        let ts = integers(100);
        let traj = fundamental_to(&free(), &ts, c(0.0, 0.0), 100.0, &PropagateOptions::default()).unwrap();
        for (k, phi) in traj.samples.iter().enumerate() {
            let expect = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(k as f64, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
            assert!(fro(&(phi - expect)) <= 1e-12, "k={k}");
        }
    }

    #[test]
    fn rotation_on_interval() {
        let ts = build_timescale(vec![Cell::interval(0.0, PI)], 0.0, PI, false).unwrap();
        let traj = fundamental_to(&free(), &ts, c(1.0, 0.0), PI, &PropagateOptions::default()).unwrap();
        let k = traj.grid.index_of(PI / 2.0).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
        assert!(fro(&(&traj.samples[k] - expect)) <= 1e-8);
        assert_eq!(traj.samples[0], identity(2));
        // K(π) = ∫ [cos², cos sin; cos sin, sin²] = diag(π/2, π/2).
        let g = traj.last_gram();
        assert!((g[(0, 0)].re - PI / 2.0).abs() < 1e-8);
        assert!((g[(1, 1)].re - PI / 2.0).abs() < 1e-8);
        assert!(g[(0, 1)].norm() < 1e-8);
    }

    #[test]
    fn exponentials() {
        let opts = PropagateOptions::default();
        let real = build_timescale(vec![Cell::interval(0.0, 2.0)], 0.0, 2.0, false).unwrap();
        let x = nabla_exponential(|_| Ok(c(0.7, 0.0)), &real, 2.0, &opts).unwrap();
        assert!((x - c((1.4f64).exp(), 0.0)).norm() < 1e-9);
        let ts = integers(5);
        let x = nabla_exponential(|_| Ok(c(0.5, 0.0)), &ts, 2.0, &opts).unwrap();
        assert!((x - c(4.0, 0.0)).norm() < 1e-14);
        let err = nabla_exponential(|_| Ok(c(1.0, 0.0)), &ts, 2.0, &opts);
        assert_eq!(err, Err(Error::NotRegressive { t: 1.0 }));
    }

    #[test]
    fn discrete_conservation() {
        let f = free();
        let opts = PropagateOptions::default();
        let ts = integers(20);
        let a = fundamental_to(&f, &ts, c(1.0, 1.0), 20.0, &opts).unwrap();
        let b = fundamental_to(&f, &ts, c(1.0, -1.0), 20.0, &opts).unwrap();
        assert!(symplectic_residual(&a, &b).unwrap() <= 1e-12);
        let ts = integers(50);
        let a = fundamental_to(&f, &ts, c(0.0, 1.0), 50.0, &opts).unwrap();
        assert!(liouville_residual(&a) <= 1e-9);
        assert_eq!(liouville_residual(&fundamental_to(&f, &ts, c(0.0, 1.0), 1.0, &opts).unwrap()), 0.0);
    }

    #[test]
    fn lagrange_zero_path() {
        let ts = integers(5);
        let grid = make_grid(&ts, 0.0, 5.0, 1.0).unwrap();
        let zero = SampledPath::new(grid.points().to_vec(), vec![CMat::zeros(2, 1); grid.len()]).unwrap();
        let x = NablaPath::with_differences(zero);
        assert_eq!(lagrange_residual(&free(), &x, &x, Quadrature::Richardson).unwrap(), 0.0);
    }

    #[test]
    fn five_point_differences_are_exact_on_quartics() {
        let ts = build_timescale(vec![Cell::interval(0.0, 2.0)], 0.0, 2.0, false).unwrap();
        let grid = make_grid_with_stops(&ts, 0.0, 2.0, 0.1, &[0.33, 1.71]).unwrap();
        let f = |t: f64| c(t.powi(4) - 2.0 * t, 0.5 * t.powi(3));
        let df = |t: f64| c(4.0 * t.powi(3) - 2.0, 1.5 * t * t);
        let vals = grid.times().map(|t| CMat::from_element(2, 1, f(t))).collect();
        let np = NablaPath::with_differences(SampledPath::new(grid.points().to_vec(), vals).unwrap());
        for (p, d) in grid.points().iter().zip(&np.deriv) {
            assert!((d[(0, 0)] - df(p.t)).norm() < 1e-9, "t = {}", p.t);
        }
    }

    #[test]
    fn solution_pair_satisfies_lagrange_identity() {
        // ℒy = λWΥy for solutions, so both sides vanish for real λ.
        let ts = build_timescale(vec![Cell::interval(0.0, PI)], 0.0, PI, false).unwrap();
        let field = CoefficientField::new(m1("0.3"), m1("1+t"), m1("cos(t)"), m1("1"), m1("0")).unwrap();
        let traj = fundamental_to(&field, &ts, c(2.0, 0.0), PI, &PropagateOptions::default()).unwrap();
        let deriv = |col: usize| -> Vec<CMat> {
            traj.grid
                .points()
                .iter()
                .zip(&traj.samples)
                .map(|(p, y)| {
                    let co = field.at(p.t, p.nu).unwrap();
                    s_matrix(&co, p.nu, c(2.0, 0.0), p.t).unwrap() * y.columns(col, 1)
                })
                .collect()
        };
        let x = NablaPath::with_derivatives(traj.path(0..1), deriv(0)).unwrap();
        let y = NablaPath::with_derivatives(traj.path(1..2), deriv(1)).unwrap();
        assert!(lagrange_residual(&field, &x, &y, Quadrature::Richardson).unwrap() <= 1e-8);
    }
}
