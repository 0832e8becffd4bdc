//! Adaptive Dormand–Prince 5(4) integrator for matrix-valued linear ODEs.

use crate::error::{Error, Result};
use crate::linalg::CMat;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RkStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

fn combo(y: &CMat, h: f64, terms: &[(f64, &CMat)]) -> CMat {
    let mut out = y.clone();
    for &(w, k) in terms {
        if w != 0.0 {
            out.zip_apply(k, |o, v| *o += v * (h * w));
        }
    }
    out
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Dopri5 {
        Dopri5 { rtol, atol }
    }

    /// Integrate `y' = f(t, y)` from `t0` to `t1`, landing exactly on `t1`.
    ///
    /// `h` carries the step size between calls; a non-positive value asks for
    /// an initial guess.
    pub fn integrate<F>(&self, mut f: F, t0: f64, y0: CMat, t1: f64, h: &mut f64, stats: &mut RkStats) -> Result<CMat>
    where
        F: FnMut(f64, &CMat) -> Result<CMat>,
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(y0);
        }
        let mut t = t0;
        let mut y = y0;
        let mut k1 = f(t, &y)?;
        stats.evaluations += 1;
        if !(*h > 0.0) {
            *h = self.initial_step(&y, &k1, span);
        }
        let mut last_rejected = false;
        loop {
            let remaining = t1 - t;
            let final_step = *h >= remaining * (1.0 - 1e-12);
            let step = if final_step { remaining } else { *h };
            if step < 1e-13 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h: step });
            }
            let k2 = f(t + C2 * step, &combo(&y, step, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * step, &combo(&y, step, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * step, &combo(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(t + C5 * step, &combo(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let k6 = f(t + step, &combo(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
            let y_new = combo(&y, step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let t_new = if final_step { t1 } else { t + step };
            let k7 = f(t_new, &y_new)?;
            stats.evaluations += 6;
            let err_vec = combo(
                &CMat::zeros(y.nrows(), y.ncols()),
                step,
                &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
            );
            let mut acc = 0.0;
            for ((e, a), b) in err_vec.iter().zip(y.iter()).zip(y_new.iter()) {
                let sc = self.atol + self.rtol * a.norm().max(b.norm());
                acc += (e.norm() / sc).powi(2);
            }
            let err = (acc / err_vec.len().max(1) as f64).sqrt();
            if !err.is_finite() {
                *h = step * 0.2;
                stats.rejected += 1;
                last_rejected = true;
                continue;
            }
            let mut fac = if err == 0.0 { 10.0 } else { 0.9 * err.powf(-0.2) };
            fac = fac.clamp(0.2, 10.0);
            if err <= 1.0 {
                stats.accepted += 1;
                if last_rejected {
                    fac = fac.min(1.0);
                }
                // A step clipped to land on t1 says little about the natural step size.
                if final_step && step < *h {
                    *h = (*h).min(step * fac.max(1.0));
                } else {
                    *h = step * fac;
                }
                t = t_new;
                y = y_new;
                if final_step {
                    return Ok(y);
                }
                k1 = k7;
                last_rejected = false;
            } else {
                stats.rejected += 1;
                *h = step * fac.min(1.0);
                last_rejected = true;
            }
        }
    }

    fn initial_step(&self, y: &CMat, f0: &CMat, span: f64) -> f64 {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for (a, b) in y.iter().zip(f0.iter()) {
            let sc = self.atol + self.rtol * a.norm();
            d0 += (a.norm() / sc).powi(2);
            d1 += (b.norm() / sc).powi(2);
        }
        let n = y.len().max(1) as f64;
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h.min(span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, C64};

    #[test]
    fn exponential_growth() {
        let rk = Dopri5::new(1e-10, 1e-12);
        let mut h = 0.0;
        let mut st = RkStats::default();
        let y = rk
            .integrate(|_, y| Ok(y.map(|z| z * c(1.0, 2.0))), 0.0, CMat::from_element(1, 1, c(1.0, 0.0)), 2.0, &mut h, &mut st)
            .unwrap();
        let exact = (c(1.0, 2.0) * 2.0).exp();
        assert!((y[(0, 0)] - exact).norm() / exact.norm() < 1e-9);
        assert!(st.accepted > 0);
    }

    #[test]
    fn tighter_tolerance_is_more_accurate() {
        let run = |rtol: f64| {
            let rk = Dopri5::new(rtol, rtol * 1e-2);
            let mut h = 0.0;
            let mut st = RkStats::default();
            let y0 = CMat::identity(2, 2);
            let gen = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)]);
            let y = rk.integrate(|_, y| Ok(&gen * y), 0.0, y0, std::f64::consts::PI, &mut h, &mut st).unwrap();
            ((y[(0, 0)] + C64::new(1.0, 0.0)).norm(), st.accepted)
        };
        let (e1, n1) = run(1e-6);
        let (e2, n2) = run(1e-10);
        assert!(e2 < 1e-8);
        assert!(e2 < e1);
        assert!(n2 > n1);
    }

    #[test]
    fn carried_step_lands_on_target() {
        let rk = Dopri5::new(1e-10, 1e-12);
        let mut h = 0.0;
        let mut st = RkStats::default();
        let mut y = CMat::from_element(1, 1, c(1.0, 0.0));
        for k in 0..10 {
            let t0 = k as f64 * 0.1;
            y = rk.integrate(|_, y| Ok(-y), t0, y, t0 + 0.1, &mut h, &mut st).unwrap();
        }
        assert!((y[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-10);
    }
}
