//! First-order propagation matrix, regressivity, partial shifts and definiteness.

use crate::error::{Error, Result};
use crate::field::{CoefficientField, Coefficients};
use crate::linalg::{fro, from_blocks, identity, min_eig, solve, symplectic_j, CMat, C64};
use crate::propagate::{propagate_fundamental, PropagateOptions};
use crate::timescale::{make_grid, make_grid_with_stops, GridPoint, PointKind, Quadrature, TimeScale};

#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    pub s: CMat,
    /// `S(t, λ̄)`, the partner in the regressivity identity.
    pub s_conj: CMat,
    /// `(I - νA)^{-1}`.
    pub e: CMat,
    pub nu: f64,
}

fn shift_inverse(co: &Coefficients, nu: f64, t: f64) -> Result<CMat> {
    let id = identity(co.a.nrows());
    if nu == 0.0 {
        return Ok(id);
    }
    let shift = &id - co.a.scale(nu);
    let e = solve(&shift, &id).ok_or(Error::SingularShift { t })?;
    if !e.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::SingularShift { t });
    }
    Ok(e)
}

fn s_with(co: &Coefficients, e: &CMat, nu: f64, lambda: C64) -> CMat {
    let es = e.adjoint();
    let bl = &co.b + co.w2.map(|z| z * lambda);
    let cl = &co.c - co.w1.map(|z| z * lambda);
    let s12 = &bl * &es;
    let s21 = &es * &cl;
    let s11 = &co.a - (&s12 * &cl).map(|z| z * nu);
    let s22 = -(&es * co.a.adjoint());
    from_blocks(&s11, &s12, &s21, &s22)
}

/// `S(t, λ)` alone, for inner loops.
pub fn s_matrix(co: &Coefficients, nu: f64, lambda: C64, t: f64) -> Result<CMat> {
    let e = shift_inverse(co, nu, t)?;
    Ok(s_with(co, &e, nu, lambda))
}

/// `S(t, λ)` from already evaluated coefficients.
pub fn assemble_from(co: &Coefficients, nu: f64, lambda: C64, t: f64) -> Result<SystemMatrix> {
    let e = shift_inverse(co, nu, t)?;
    Ok(SystemMatrix { s: s_with(co, &e, nu, lambda), s_conj: s_with(co, &e, nu, lambda.conj()), e, nu })
}

/// `S(t, λ)` at a point with graininess `nu`.
pub fn assemble_at(field: &CoefficientField, t: f64, nu: f64, lambda: C64) -> Result<SystemMatrix> {
    assemble_from(&field.at(t, nu)?, nu, lambda, t)
}

pub fn assemble_s(field: &CoefficientField, ts: &TimeScale, t: f64, lambda: C64) -> Result<SystemMatrix> {
    assemble_at(field, t, ts.jumps(t)?.nu, lambda)
}

/// `‖(I - νS(λ̄))* J (I - νS(λ)) - J‖_F`; for real `λ` both factors coincide.
pub fn check_regressivity(sm: &SystemMatrix) -> f64 {
    let n = sm.s.nrows();
    let j = symplectic_j(n / 2);
    let m = identity(n) - sm.s.scale(sm.nu);
    let mc = identity(n) - sm.s_conj.scale(sm.nu);
    fro(&(mc.adjoint() * &j * &m - j))
}

/// Regressivity residual for a hand-built `S`, taken as its own conjugate partner.
pub fn regressivity_residual(s: &CMat, nu: f64) -> f64 {
    check_regressivity(&SystemMatrix { s: s.clone(), s_conj: s.clone(), e: identity(s.nrows() / 2), nu })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftDirection {
    /// `Υy = (y1, y2^ρ)`.
    Left,
    /// `Υ⁻¹y = (y1, y2^σ)`.
    Right,
}

/// Values of a `2d`-row path at consecutive grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub points: Vec<GridPoint>,
    pub values: Vec<CMat>,
}

impl SampledPath {
    pub fn new(points: Vec<GridPoint>, values: Vec<CMat>) -> Result<SampledPath> {
        if points.len() != values.len() {
            return Err(Error::GridMismatch(format!("{} points but {} values", points.len(), values.len())));
        }
        Ok(SampledPath { points, values })
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }
}

/// Replace the lower half of `y` by the lower half of `other`.
fn splice(y: &CMat, other: &CMat) -> CMat {
    let d = y.nrows() / 2;
    let mut out = y.clone();
    out.view_mut((d, 0), (d, y.ncols())).copy_from(&other.view((d, 0), (d, y.ncols())));
    out
}

/// Apply a partial shift to a sampled path.
///
/// Points whose neighbour lies outside the sampled range are dropped: the first
/// point for a left shift when it is left-scattered, the last point for a right
/// shift when it is right-scattered.
pub fn apply_shift(ts: &TimeScale, y: &SampledPath, direction: ShiftDirection) -> Result<SampledPath> {
    let n = y.points.len();
    let mut points = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    match direction {
        ShiftDirection::Left => {
            for k in 0..n {
                let p = y.points[k];
                if p.kind == PointKind::Dense {
                    points.push(p);
                    values.push(y.values[k].clone());
                } else if k > 0 {
                    points.push(p);
                    values.push(splice(&y.values[k], &y.values[k - 1]));
                }
            }
        }
        ShiftDirection::Right => {
            if !ts.is_sturmian() {
                return Err(Error::RightShiftUnavailable);
            }
            for k in 0..n {
                let p = y.points[k];
                if !p.right_scattered {
                    points.push(p);
                    values.push(y.values[k].clone());
                } else if k + 1 < n {
                    points.push(p);
                    values.push(splice(&y.values[k], &y.values[k + 1]));
                }
            }
        }
    }
    Ok(SampledPath { points, values })
}

/// Default definiteness candidates: 16 points of the scale spread over `(t0, horizon]`.
pub fn default_candidates(ts: &TimeScale, count: usize) -> Result<Vec<f64>> {
    let t0 = ts.t0();
    let grid = make_grid(ts, ts.rho_t0(), ts.horizon(), (ts.horizon() - ts.rho_t0()) / 4096.0)?;
    let pts: Vec<f64> = grid.times().filter(|&t| t > t0).collect();
    if pts.is_empty() {
        return Err(Error::DefinitenessFailed { horizon: ts.horizon() });
    }
    let span = ts.horizon() - t0;
    let mut out: Vec<f64> = (1..=count)
        .map(|k| {
            let target = t0 + span * k as f64 / count as f64;
            let idx = pts.partition_point(|&t| t < target).min(pts.len() - 1);
            pts[idx]
        })
        .collect();
    out.dedup();
    Ok(out)
}

/// Smallest candidate `t1` such that the truncated Gram matrix of the `2d`
/// fundamental solutions is positive definite from `t1` on.
///
/// Positivity means `min eig K(t) > 1e-12 · ∫ tr W`.
pub fn check_definiteness(
    field: &CoefficientField,
    ts: &TimeScale,
    lambda: C64,
    candidates: Option<&[f64]>,
    opts: &PropagateOptions,
) -> Result<f64> {
    let mut cands: Vec<f64> = match candidates {
        Some(c) => c.to_vec(),
        None => default_candidates(ts, 16)?,
    };
    cands.sort_by(f64::total_cmp);
    let horizon = ts.horizon();
    let failed = Error::DefinitenessFailed { horizon };
    let Some(&last) = cands.last() else { return Err(failed) };
    let a = ts.rho_t0();
    let h = opts.h.unwrap_or((last - a) / 1024.0);
    let grid = make_grid_with_stops(ts, a, last, h, &cands)?;
    let n = 2 * field.dim();
    let traj = propagate_fundamental(field, lambda, &identity(n), &grid, opts)?;
    let trace_w: Vec<CMat> = grid
        .points()
        .iter()
        .map(|p| Ok(CMat::from_element(1, 1, field.w(p.t, p.nu)?.trace())))
        .collect::<Result<_>>()?;
    let mut ok = Vec::with_capacity(cands.len());
    for &t in &cands {
        let idx = grid.index_of(t).ok_or(Error::MissingSample(t))?;
        let scale = grid.integrate_range(&trace_w, 0, idx, Quadrature::Richardson)[(0, 0)].re;
        let tol = 1e-12 * scale;
        ok.push(scale > 0.0 && min_eig(&traj.gram[idx]) > tol);
    }
    // K is Loewner monotone, so the first passing candidate followed only by passes wins.
    let mut first = None;
    for (k, &pass) in ok.iter().enumerate().rev() {
        if pass {
            first = Some(k);
        } else {
            break;
        }
    }
    first.map(|k| cands[k]).ok_or(failed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::field::ExprMatrix;
    use crate::linalg::c;
    use crate::timescale::{build_timescale, Cell};

    fn m1(s: &str) -> ExprMatrix {
        ExprMatrix::from_exprs(1, vec![parse_expr(s).unwrap()]).unwrap()
    }

    fn field(a: &str, b: &str, cc: &str, w1: &str, w2: &str) -> CoefficientField {
        CoefficientField::new(m1(a), m1(b), m1(cc), m1(w1), m1(w2)).unwrap()
    }

    #[test]
    fn continuous_limit() {
        let f = field("0", "1", "t", "1", "0");
        let lam = c(0.5, 0.25);
        let sm = assemble_at(&f, 2.0, 0.0, lam).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0) - lam, c(0.0, 0.0)]);
        assert_eq!(sm.s, expect);
        // S = -J(λW + P) when ν = 0.
        let co = f.at(2.0, 0.0).unwrap();
        let other = -(symplectic_j(1) * (co.w().map(|z| z * lam) + co.p()));
        assert!(fro(&(other - &sm.s)) < 1e-15);
        assert_eq!(check_regressivity(&sm), 0.0);
    }

    #[test]
    fn discrete_free_system() {
        let f = field("0", "1", "0", "1", "0");
        let lam = c(0.3, -1.2);
        let sm = assemble_at(&f, 1.0, 1.0, lam).unwrap();
        let expect = CMat::from_row_slice(2, 2, &[lam, c(1.0, 0.0), -lam, c(0.0, 0.0)]);
        assert_eq!(sm.s, expect);
        assert!(check_regressivity(&sm) <= 1e-12);
    }

    #[test]
    fn singular_shift() {
        let f = field("1", "1", "0", "1", "0");
        assert_eq!(assemble_at(&f, 1.0, 1.0, c(0.0, 1.0)), Err(Error::SingularShift { t: 1.0 }));
    }

    #[test]
    fn non_hamiltonian_matrix_flagged() {
        let s = CMat::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        // (I - S) = diag(0.5, 0.5), so the form equals J/4.
        let r = regressivity_residual(&s, 1.0);
        assert!((r - fro(&symplectic_j(1).scale(0.75))).abs() < 1e-15);
    }

    #[test]
    fn regressive_for_random_matrix_coefficients() {
        let a = ExprMatrix::from_exprs(2, ["0.3", "1+2*i", "t", "-0.5"].iter().map(|s| parse_expr(s).unwrap()).collect()).unwrap();
        let b = ExprMatrix::from_exprs(2, ["2", "1-i", "1+i", "t"].iter().map(|s| parse_expr(s).unwrap()).collect()).unwrap();
        let cc = ExprMatrix::from_exprs(2, ["t^2", "3*i", "-3*i", "1"].iter().map(|s| parse_expr(s).unwrap()).collect()).unwrap();
        let w1 = ExprMatrix::from_exprs(2, ["2", "i", "-i", "1"].iter().map(|s| parse_expr(s).unwrap()).collect()).unwrap();
        let w2 = ExprMatrix::from_exprs(2, ["1", "0", "0", "0"].iter().map(|s| parse_expr(s).unwrap()).collect()).unwrap();
        let f = CoefficientField::new(a, b, cc, w1, w2).unwrap();
        for (t, nu) in [(1.0, 0.5), (2.0, 1.0), (3.0, 2.5)] {
            for lam in [c(0.0, 1.0), c(2.0, -3.0), c(-1.5, 0.0)] {
                let sm = assemble_at(&f, t, nu, lam).unwrap();
                assert!(check_regressivity(&sm) <= 1e-12, "t={t} nu={nu} lambda={lam}");
            }
        }
    }

    fn path(ts: &TimeScale, a: f64, b: f64) -> SampledPath {
        let grid = make_grid(ts, a, b, 0.1).unwrap();
        let values = grid
            .points()
            .iter()
            .map(|p| CMat::from_column_slice(2, 1, &[c(p.t * p.t, 0.0), c(p.t, 0.0)]))
            .collect();
        SampledPath::new(grid.points().to_vec(), values).unwrap()
    }

    #[test]
    fn left_shift_on_integers() {
        let ts = build_timescale(vec![Cell::arithmetic(0.0, 1.0, 11)], 1.0, 10.0, false).unwrap();
        let y = path(&ts, 0.0, 10.0);
        let s = apply_shift(&ts, &y, ShiftDirection::Left).unwrap();
        // The minimum has ρ(0) = 0 by convention, so only left-scattered points shift.
        for (p, v) in s.points.iter().zip(&s.values).filter(|(p, _)| p.nu > 0.0) {
            assert_eq!(v[(1, 0)], c(p.t - 1.0, 0.0));
            assert_eq!(v[(0, 0)], c(p.t * p.t, 0.0));
        }
    }

    #[test]
    fn dense_shift_is_identity() {
        let ts = build_timescale(vec![Cell::interval(0.0, 1.0)], 0.0, 1.0, false).unwrap();
        let y = path(&ts, 0.0, 1.0);
        assert_eq!(apply_shift(&ts, &y, ShiftDirection::Left).unwrap(), y);
        assert_eq!(apply_shift(&ts, &y, ShiftDirection::Right).unwrap(), y);
    }

    #[test]
    fn shift_round_trip_on_geometric_scale() {
        let ts = build_timescale(vec![Cell::Points(vec![1.0, 2.0, 4.0, 8.0])], 2.0, 8.0, false).unwrap();
        let y = path(&ts, 1.0, 8.0);
        let lr = apply_shift(&ts, &apply_shift(&ts, &y, ShiftDirection::Right).unwrap(), ShiftDirection::Left).unwrap();
        let rl = apply_shift(&ts, &apply_shift(&ts, &y, ShiftDirection::Left).unwrap(), ShiftDirection::Right).unwrap();
        // Compare on [t0, horizon): the minimum lies below t0 and σ(8) = 8 by convention.
        for composed in [lr, rl] {
            assert!(composed.points.iter().any(|p| p.t == 4.0));
            for (p, v) in composed.points.iter().zip(&composed.values).filter(|(p, _)| p.t >= ts.t0() && p.t < 8.0) {
                let k = y.points.iter().position(|q| q.t == p.t).unwrap();
                assert_eq!(v, &y.values[k]);
            }
        }
    }

    #[test]
    fn right_shift_needs_sturmian_scale() {
        let ts = build_timescale(vec![Cell::interval(0.0, 1.0), Cell::interval(2.0, 3.0)], 0.0, 3.0, true).unwrap();
        let y = path(&ts, 0.0, 3.0);
        assert_eq!(apply_shift(&ts, &y, ShiftDirection::Right), Err(Error::RightShiftUnavailable));
    }

    #[test]
    fn definiteness() {
        let ts = build_timescale(vec![Cell::interval(0.0, 10.0)], 0.0, 10.0, false).unwrap();
        let opts = PropagateOptions::default();
        let cands = default_candidates(&ts, 16).unwrap();
        let t1 = check_definiteness(&field("0", "1", "0", "1", "0"), &ts, c(0.0, 1.0), None, &opts).unwrap();
        assert_eq!(t1, cands[0]);
        let t1 = check_definiteness(&field("0", "1", "0", "exp(-t)", "0"), &ts, c(0.0, 1.0), None, &opts).unwrap();
        assert_eq!(t1, cands[0]);
        let err = check_definiteness(&field("0", "1", "0", "0", "0"), &ts, c(0.0, 1.0), None, &opts);
        assert_eq!(err, Err(Error::DefinitenessFailed { horizon: 10.0 }));
    }
}
