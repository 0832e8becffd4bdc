//! Sturmian time scales as finite ordered unions of dense intervals and
//! scattered points, with jump operators, evaluation grids and nabla
//! integration.
//!
//! A represented scale is a truncation of a (possibly unbounded) time scale.
//! Accumulation-point hybrids are approximated by truncating the scattered
//! sequence. The right end (the horizon) is treated as right-dense
//! (`σ(horizon) = horizon`) and the minimum as left-dense (`ρ(min) = min`);
//! both conventions are truncation artifacts, so the Sturmian check skips
//! those two points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Relative tolerance used when matching a real number against a point of the scale.
const POINT_TOL: f64 = 1e-12;

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= POINT_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Interval { lo: f64, hi: f64 },
    Points(Vec<f64>),
}

impl Cell {
    pub fn interval(lo: f64, hi: f64) -> Cell {
        Cell::Interval { lo, hi }
    }

    /// `start, start + step, …` (`count` points).
    pub fn arithmetic(start: f64, step: f64, count: usize) -> Cell {
        Cell::Points((0..count).map(|k| start + step * k as f64).collect())
    }

    /// `start, start·ratio, start·ratio², …` (`count` points).
    pub fn geometric(start: f64, ratio: f64, count: usize) -> Cell {
        Cell::Points((0..count).map(|k| start * ratio.powi(k as i32)).collect())
    }

    fn min(&self) -> f64 {
        match self {
            Cell::Interval { lo, .. } => *lo,
            Cell::Points(p) => p[0],
        }
    }

    fn max(&self) -> f64 {
        match self {
            Cell::Interval { hi, .. } => *hi,
            Cell::Points(p) => *p.last().unwrap(),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Cell::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::MalformedTimeScale(format!("interval [{lo}, {hi}] needs lo < hi")));
                }
            }
            Cell::Points(p) => {
                if p.is_empty() {
                    return Err(Error::MalformedTimeScale("empty point list".into()));
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::MalformedTimeScale("non-finite point".into()));
                }
                if let Some(w) = p.windows(2).find(|w| w[0] >= w[1]) {
                    return Err(Error::MalformedTimeScale(format!(
                        "points must be strictly increasing ({} then {})",
                        w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Restrict to `(-∞, limit]`; `None` when nothing is left.
    fn clip(&self, limit: f64) -> Option<Cell> {
        match self {
            Cell::Interval { lo, hi } => {
                if *lo > limit && !same(*lo, limit) {
                    None
                } else if *hi <= limit || same(*hi, limit) {
                    Some(self.clone())
                } else if same(*lo, limit) {
                    Some(Cell::Points(vec![*lo]))
                } else {
                    Some(Cell::Interval { lo: *lo, hi: limit })
                }
            }
            Cell::Points(p) => {
                let kept: Vec<f64> = p.iter().copied().filter(|&v| v <= limit || same(v, limit)).collect();
                (!kept.is_empty()).then_some(Cell::Points(kept))
            }
        }
    }
}

/// Jump operators at a point: `ρ(t)`, `σ(t)` and graininess `ν(t) = t − ρ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jumps {
    pub rho: f64,
    pub sigma: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    cells: Vec<Cell>,
    t0: f64,
    horizon: f64,
    sturmian: bool,
}

/// Builds and validates a time scale. With `force`, the Sturmian check is
/// skipped (and the right shift becomes unavailable) but structural checks
/// still apply.
pub fn build_timescale(cells: Vec<Cell>, t0: f64, horizon: f64, force: bool) -> Result<TimeScale> {
    if cells.is_empty() {
        return Err(Error::MalformedTimeScale("no cells".into()));
    }
    for c in &cells {
        c.check()?;
    }
    for w in cells.windows(2) {
        if w[1].min() <= w[0].max() {
            return Err(Error::MalformedTimeScale(format!(
                "cells overlap or are out of order near {}",
                w[1].min()
            )));
        }
    }
    let clipped: Vec<Cell> = cells.iter().filter_map(|c| c.clip(horizon)).collect();
    if clipped.is_empty() {
        return Err(Error::MalformedTimeScale(format!("horizon {horizon} lies below the time scale")));
    }
    let effective_horizon = clipped.last().unwrap().max();
    let mut ts = TimeScale { cells: clipped, t0, horizon: effective_horizon, sturmian: false };
    if !ts.contains(t0) {
        return Err(Error::NotInTimeScale(t0));
    }
    if !force {
        ts.validate_sturmian()?;
        ts.sturmian = true;
    }
    Ok(ts)
}

impl TimeScale {
    pub fn new(cells: Vec<Cell>, t0: f64, horizon: f64) -> Result<TimeScale> {
        build_timescale(cells, t0, horizon, false)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn min(&self) -> f64 {
        self.cells[0].min()
    }

    /// True when the Sturmian condition was validated at construction.
    pub fn is_sturmian(&self) -> bool {
        self.sturmian
    }

    /// `ρ(t0)`, the anchor of every initial value problem.
    pub fn rho_t0(&self) -> f64 {
        self.jumps(self.t0).map(|j| j.rho).unwrap_or(self.t0)
    }

    /// Canonical representative of `t` when it belongs to the scale.
    pub fn snap(&self, t: f64) -> Option<f64> {
        for cell in &self.cells {
            match cell {
                Cell::Interval { lo, hi } => {
                    if same(t, *lo) {
                        return Some(*lo);
                    }
                    if same(t, *hi) {
                        return Some(*hi);
                    }
                    if t > *lo && t < *hi {
                        return Some(t);
                    }
                }
                Cell::Points(p) => {
                    let k = p.partition_point(|&v| v < t);
                    for idx in [k.saturating_sub(1), k] {
                        if idx < p.len() && same(p[idx], t) {
                            return Some(p[idx]);
                        }
                    }
                }
            }
        }
        None
    }

    pub fn contains(&self, t: f64) -> bool {
        self.snap(t).is_some()
    }

    fn locate(&self, t: f64) -> Option<(usize, Option<usize>)> {
        for (ci, cell) in self.cells.iter().enumerate() {
            match cell {
                Cell::Interval { lo, hi } => {
                    if same(t, *lo) || same(t, *hi) || (t > *lo && t < *hi) {
                        return Some((ci, None));
                    }
                }
                Cell::Points(p) => {
                    let k = p.partition_point(|&v| v < t);
                    for idx in [k.saturating_sub(1), k] {
                        if idx < p.len() && same(p[idx], t) {
                            return Some((ci, Some(idx)));
                        }
                    }
                }
            }
        }
        None
    }

    /// Jump operators at `t ∈ 𝕋`.
    pub fn jumps(&self, t: f64) -> Result<Jumps> {
        let (ci, idx) = self.locate(t).ok_or(Error::NotInTimeScale(t))?;
        let prev_max = |ci: usize, t: f64| if ci == 0 { t } else { self.cells[ci - 1].max() };
        let next_min = |ci: usize, t: f64| if ci + 1 == self.cells.len() { t } else { self.cells[ci + 1].min() };
        let (t, rho, sigma) = match (&self.cells[ci], idx) {
            (Cell::Interval { lo, hi }, _) => {
                let t = if same(t, *lo) {
                    *lo
                } else if same(t, *hi) {
                    *hi
                } else {
                    t
                };
                let rho = if t == *lo { prev_max(ci, t) } else { t };
                let sigma = if t == *hi { next_min(ci, t) } else { t };
                (t, rho, sigma)
            }
            (Cell::Points(p), Some(k)) => {
                let t = p[k];
                let rho = if k > 0 { p[k - 1] } else { prev_max(ci, t) };
                let sigma = if k + 1 < p.len() { p[k + 1] } else { next_min(ci, t) };
                (t, rho, sigma)
            }
            (Cell::Points(_), None) => unreachable!(),
        };
        Ok(Jumps { rho, sigma, nu: t - rho })
    }

    /// Endpoints of intervals and all scattered points, in order.
    fn representable_points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for cell in &self.cells {
            match cell {
                Cell::Interval { lo, hi } => {
                    out.push(*lo);
                    out.push(*hi);
                }
                Cell::Points(p) => out.extend_from_slice(p),
            }
        }
        out
    }

    fn validate_sturmian(&self) -> Result<()> {
        let min = self.min();
        for t in self.representable_points() {
            if t < self.t0 && !same(t, self.t0) {
                continue;
            }
            if same(t, min) || same(t, self.horizon) {
                continue;
            }
            let j = self.jumps(t)?;
            let sigma_rho = self.jumps(j.rho)?.sigma;
            let rho_sigma = self.jumps(j.sigma)?.rho;
            if !same(sigma_rho, rho_sigma) {
                return Err(Error::NotSturmian { t, sigma_rho, rho_sigma });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    Dense,
    Scattered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub t: f64,
    pub nu: f64,
    pub kind: PointKind,
    /// True when `σ(t) > t`.
    pub right_scattered: bool,
}

/// Ordered evaluation points covering `[a, b]_𝕋`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<GridPoint>,
    refinement: f64,
}

/// Dense-stretch quadrature rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    Trapezoid,
    /// One Richardson step on top of the trapezoid rule (Simpson on panel pairs).
    #[default]
    Richardson,
}

pub fn make_grid(ts: &TimeScale, a: f64, b: f64, h: f64) -> Result<Grid> {
    make_grid_with_stops(ts, a, b, h, &[])
}

/// Like [`make_grid`], additionally guaranteeing that every `stop ∈ [a, b]_𝕋`
/// is a grid point. Dense stretches between consecutive stops are split
/// uniformly into an even number of panels of width `≤ h`.
pub fn make_grid_with_stops(ts: &TimeScale, a: f64, b: f64, h: f64, stops: &[f64]) -> Result<Grid> {
    let a = ts.snap(a).ok_or(Error::NotInTimeScale(a))?;
    let b = ts.snap(b).ok_or(Error::NotInTimeScale(b))?;
    if !(a < b) {
        return Err(Error::MalformedTimeScale(format!("grid range [{a}, {b}] is empty")));
    }
    if !(h > 0.0) {
        return Err(Error::MalformedTimeScale(format!("grid refinement must be positive, got {h}")));
    }
    let mut ts_points: Vec<f64> = Vec::new();
    for cell in ts.cells() {
        match cell {
            Cell::Interval { lo, hi } => {
                let lo_c = lo.max(a);
                let hi_c = hi.min(b);
                if lo_c > hi_c {
                    continue;
                }
                if lo_c == hi_c {
                    ts_points.push(lo_c);
                    continue;
                }
                let mut cuts: Vec<f64> = vec![lo_c];
                let mut inner: Vec<f64> =
                    stops.iter().copied().filter(|&s| s > lo_c && s < hi_c && !same(s, lo_c) && !same(s, hi_c)).collect();
                inner.sort_by(f64::total_cmp);
                inner.dedup_by(|x, y| same(*x, *y));
                cuts.extend(inner);
                cuts.push(hi_c);
                for w in cuts.windows(2) {
                    let len = w[1] - w[0];
                    let mut n = (len / h).ceil().max(1.0) as usize;
                    if n % 2 == 1 {
                        n += 1;
                    }
                    let step = len / n as f64;
                    for k in 0..n {
                        ts_points.push(w[0] + step * k as f64);
                    }
                }
                ts_points.push(hi_c);
            }
            Cell::Points(p) => {
                ts_points.extend(p.iter().copied().filter(|&v| (v >= a || same(v, a)) && (v <= b || same(v, b))));
            }
        }
    }
    ts_points.dedup_by(|x, y| same(*x, *y));
    let mut points = Vec::with_capacity(ts_points.len());
    for &t in &ts_points {
        let j = ts.jumps(t)?;
        let nu = j.nu;
        points.push(GridPoint {
            t,
            nu,
            kind: if nu > 0.0 { PointKind::Scattered } else { PointKind::Dense },
            right_scattered: j.sigma > t,
        });
    }
    Ok(Grid { points, refinement: h })
}

impl Grid {
    /// Grid from explicit points, which must be strictly increasing.
    pub fn from_points(points: Vec<GridPoint>, refinement: f64) -> Result<Grid> {
        if points.is_empty() || points.windows(2).any(|w| !(w[0].t < w[1].t)) {
            return Err(Error::MalformedTimeScale("grid points must be nonempty and strictly increasing".into()));
        }
        Ok(Grid { points, refinement })
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn refinement(&self) -> f64 {
        self.refinement
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.t)
    }

    pub fn first(&self) -> f64 {
        self.points[0].t
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    /// Index of the grid point matching `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = self.points.partition_point(|p| p.t < t);
        [k.saturating_sub(1), k].into_iter().find(|&i| i < self.points.len() && same(self.points[i].t, t))
    }

    /// Prefix of the grid ending at index `end` (inclusive).
    pub fn truncated(&self, end: usize) -> Grid {
        Grid { points: self.points[..=end].to_vec(), refinement: self.refinement }
    }

    /// `∫ f ∇t` over `(t_from, t_to]` from samples at every grid point.
    pub fn integrate_range(&self, samples: &[CMat], from: usize, to: usize, rule: Quadrature) -> CMat {
        assert_eq!(samples.len(), self.points.len(), "one sample per grid point");
        let mut acc = samples[from].scale(0.0);
        let mut k = from + 1;
        while k <= to {
            let p = &self.points[k];
            if p.nu > 0.0 {
                acc += samples[k].scale(p.nu);
                k += 1;
                continue;
            }
            let w1 = p.t - self.points[k - 1].t;
            let pair = rule == Quadrature::Richardson
                && k < to
                && self.points[k + 1].nu == 0.0
                && same(self.points[k + 1].t - p.t, w1);
            if pair {
                let f = &samples[k - 1] + samples[k].scale(4.0) + &samples[k + 1];
                acc += f.scale(w1 / 3.0);
                k += 2;
            } else {
                acc += (&samples[k - 1] + &samples[k]).scale(0.5 * w1);
                k += 1;
            }
        }
        acc
    }

    /// `∫ f ∇t` over the whole grid `(a, b]`.
    pub fn integrate(&self, samples: &[CMat], rule: Quadrature) -> CMat {
        self.integrate_range(samples, 0, self.points.len() - 1, rule)
    }
}

/// `∫_a^b f(t) ∇t` for a function evaluated at the grid points.
pub fn nabla_integrate<F>(grid: &Grid, f: F, rule: Quadrature) -> Result<CMat>
where
    F: Fn(f64) -> Result<CMat>,
{
    let samples = grid.times().map(f).collect::<Result<Vec<_>>>()?;
    Ok(grid.integrate(&samples, rule))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    fn scalar(v: f64) -> CMat {
        CMat::from_element(1, 1, C64::new(v, 0.0))
    }

    fn geometric() -> TimeScale {
        build_timescale(vec![Cell::Points(vec![1.0, 2.0, 4.0, 8.0])], 2.0, 8.0, false).unwrap()
    }

    #[test]
    fn real_interval_is_dense() {
        let ts = TimeScale::new(vec![Cell::interval(0.0, 10.0)], 0.0, 10.0).unwrap();
        let j = ts.jumps(std::f64::consts::PI).unwrap();
        assert_eq!(j.rho, std::f64::consts::PI);
        assert_eq!(j.sigma, std::f64::consts::PI);
        assert_eq!(j.nu, 0.0);
        assert!(ts.is_sturmian());
    }

    #[test]
    fn half_integers_are_sturmian() {
        let ts = TimeScale::new(vec![Cell::arithmetic(0.0, 0.5, 21)], 0.0, 10.0).unwrap();
        let j = ts.jumps(2.0).unwrap();
        assert_eq!((j.rho, j.nu), (1.5, 0.5));
        for k in 1..20 {
            let j = ts.jumps(0.5 * k as f64).unwrap();
            assert_eq!(j.nu, 0.5);
        }
    }

    #[test]
    fn gap_between_intervals_violates_sturmian() {
        let err = TimeScale::new(vec![Cell::interval(0.0, 1.0), Cell::interval(2.0, 3.0)], 0.0, 3.0).unwrap_err();
        match err {
            Error::NotSturmian { t, sigma_rho, rho_sigma } => {
                assert_eq!(t, 1.0);
                assert_eq!(sigma_rho, 2.0);
                assert_eq!(rho_sigma, 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let forced = build_timescale(vec![Cell::interval(0.0, 1.0), Cell::interval(2.0, 3.0)], 0.0, 3.0, true).unwrap();
        assert!(!forced.is_sturmian());
    }

    #[test]
    fn dense_cell_may_not_abut_scattered_cell() {
        let err = TimeScale::new(vec![Cell::interval(0.0, 1.0), Cell::Points(vec![1.5, 2.0, 2.5])], 0.0, 2.5);
        assert!(matches!(err, Err(Error::NotSturmian { t, .. }) if t == 1.0));
    }

    #[test]
    fn geometric_jumps() {
        let ts = geometric();
        let j = ts.jumps(4.0).unwrap();
        assert_eq!((j.rho, j.sigma, j.nu), (2.0, 8.0, 2.0));
        assert_eq!(ts.jumps(8.0).unwrap().sigma, 8.0);
        assert_eq!(ts.jumps(1.0).unwrap().rho, 1.0);
        assert!(ts.jumps(3.0).is_err());
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            TimeScale::new(vec![Cell::interval(0.0, 2.0), Cell::interval(1.0, 3.0)], 0.0, 3.0),
            Err(Error::MalformedTimeScale(_))
        ));
        assert!(matches!(
            TimeScale::new(vec![Cell::Points(vec![0.0, 2.0, 1.0])], 0.0, 3.0),
            Err(Error::MalformedTimeScale(_))
        ));
        assert!(matches!(TimeScale::new(vec![Cell::interval(0.0, 2.0)], 5.0, 3.0), Err(Error::NotInTimeScale(_))));
    }

    #[test]
    fn integer_grid_has_unit_graininess() {
        let ts = TimeScale::new(vec![Cell::arithmetic(-3.0, 1.0, 20)], 1.0, 16.0).unwrap();
        let g = make_grid(&ts, 0.0, 5.0, 0.1).unwrap();
        let t: Vec<f64> = g.times().collect();
        assert_eq!(t, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(g.points().iter().all(|p| p.nu == 1.0 && p.kind == PointKind::Scattered));
    }

    #[test]
    fn dense_grid_spacing() {
        let ts = TimeScale::new(vec![Cell::interval(0.0, 1.0)], 0.0, 1.0).unwrap();
        let g = make_grid(&ts, 0.0, 1.0, 0.25).unwrap();
        assert!(g.len() >= 5);
        for w in g.points().windows(2) {
            assert!(w[1].t - w[0].t <= 0.25 + 1e-15);
            assert_eq!(w[1].nu, 0.0);
        }
    }

    #[test]
    fn geometric_grid_is_exact() {
        let ts = geometric();
        let g = make_grid(&ts, 1.0, 8.0, 0.01).unwrap();
        assert_eq!(g.times().collect::<Vec<_>>(), vec![1.0, 2.0, 4.0, 8.0]);
        assert!(make_grid(&ts, 1.0, 3.0, 0.1).is_err());
    }

    #[test]
    fn stops_are_grid_points() {
        let ts = TimeScale::new(vec![Cell::interval(0.0, 40.0)], 0.0, 40.0).unwrap();
        let g = make_grid_with_stops(&ts, 0.0, 40.0, 40.0, &[5.0, 10.0, 20.0]).unwrap();
        for s in [5.0, 10.0, 20.0, 40.0] {
            assert!(g.index_of(s).is_some());
        }
    }

    #[test]
    fn scattered_sums() {
        let z = TimeScale::new(vec![Cell::arithmetic(0.0, 1.0, 10)], 1.0, 9.0).unwrap();
        let g = make_grid(&z, 0.0, 3.0, 1.0).unwrap();
        let v = nabla_integrate(&g, |_| Ok(scalar(1.0)), Quadrature::Trapezoid).unwrap();
        assert_eq!(v[(0, 0)].re, 3.0);

        let ts = geometric();
        let g = make_grid(&ts, 1.0, 8.0, 1.0).unwrap();
        let v = nabla_integrate(&g, |t| Ok(scalar(t)), Quadrature::Richardson).unwrap();
        assert_eq!(v[(0, 0)].re, 42.0);
    }

    #[test]
    fn dense_quadrature() {
        let ts = TimeScale::new(vec![Cell::interval(0.0, 1.0)], 0.0, 1.0).unwrap();
        let g = make_grid(&ts, 0.0, 1.0, 1.0 / 1024.0).unwrap();
        let v = nabla_integrate(&g, |t| Ok(scalar(t)), Quadrature::Trapezoid).unwrap();
        assert!((v[(0, 0)].re - 0.5).abs() < 1e-14);
        let v = nabla_integrate(&g, |t| Ok(scalar(t.exp())), Quadrature::Richardson).unwrap();
        assert!((v[(0, 0)].re - (1f64.exp() - 1.0)).abs() < 1e-13);
    }

    #[test]
    fn trapezoid_is_second_order() {
        let ts = TimeScale::new(vec![Cell::interval(0.0, 1.0)], 0.0, 1.0).unwrap();
        let exact = 1f64.exp() - 1.0;
        let err = |h: f64| {
            let g = make_grid(&ts, 0.0, 1.0, h).unwrap();
            let v = nabla_integrate(&g, |t| Ok(scalar(t.exp())), Quadrature::Trapezoid).unwrap();
            (v[(0, 0)].re - exact).abs()
        };
        let ratio = err(1.0 / 64.0) / err(1.0 / 128.0);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
    }
}
