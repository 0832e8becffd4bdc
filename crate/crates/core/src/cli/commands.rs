//! Command dispatch: each command turns a validated [`Problem`] into a [`Report`].

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::Problem;
use super::report::{cmat, complex, num, Report, Residual, Table};
use super::Command;
use crate::error::{Error, Result};
use crate::linalg::{fro, identity, imag_part, min_eig, symplectic_j, C64};
use crate::propagate::{lagrange_residual, liouville_residual, propagate_fundamental, NablaPath, Trajectory};
use crate::regular::{eigen_gram, eigenfunctions, find_eigenvalues};
use crate::timescale::{make_grid, Cell};
use crate::weyl::{classify, disk_membership, m_function, weyl_trace, WeylTrace};

/// Circle samples per disk in the nesting check.
const CIRCLE_SAMPLES: usize = 16;

pub fn run(command: Command, problem: &Problem) -> Result<Report> {
    let (results, diagnostics, residuals, table) = match command {
        Command::Eig => eig(problem)?,
        Command::WeylTrace => trace(problem)?,
        Command::Classify => classification(problem)?,
        Command::Verify => verify(problem)?,
    };
    Ok(Report {
        command: command.name().to_string(),
        config: problem.raw.clone(),
        config_sha256: problem.digest.clone(),
        results,
        diagnostics,
        residuals,
        table,
    })
}

type Parts = (Value, Value, Vec<Residual>, Table);

fn b_list(problem: &Problem) -> Result<&[f64]> {
    let list = &problem.config.solver.b_list;
    if list.is_empty() {
        return Err(Error::BList("this command needs solver.b_list".into()).at("solver.b_list"));
    }
    Ok(list)
}

fn eig(problem: &Problem) -> Result<Parts> {
    let eig = problem
        .config
        .solver
        .eig
        .as_ref()
        .ok_or_else(|| Error::ConfigSyntax("the eig command needs solver.eig".into()).at("solver.eig"))?;
    let opts = problem.propagate_options();
    let rule = problem.config.solver.quadrature;
    let list = find_eigenvalues(
        &problem.field,
        &problem.ts,
        &problem.bp,
        eig.b,
        eig.lambda_lo,
        eig.lambda_hi,
        &problem.search_options(),
        &opts,
    )?;
    let mut residuals = Vec::new();
    if !list.is_empty() {
        let funcs = eigenfunctions(&problem.field, &problem.ts, &list, &opts)?;
        let gram = eigen_gram(&problem.field, &funcs, rule)?;
        residuals.push(Residual::at_most("orthonormality", fro(&(&gram - identity(gram.nrows()))), 1e-6));
    }
    let mut table = Table::new(["index", "lambda", "multiplicity", "residual", "null_threshold"]);
    for (k, p) in list.pairs.iter().enumerate() {
        table.push(vec![(k + 1).to_string(), num(p.lambda), p.multiplicity.to_string(), num(p.residual), num(p.null_threshold)]);
    }
    let pairs: Vec<Value> = list
        .pairs
        .iter()
        .map(|p| {
            json!({
                "lambda": p.lambda,
                "multiplicity": p.multiplicity,
                "residual": p.residual,
                "null_threshold": p.null_threshold,
                "initial": cmat(&p.initial),
            })
        })
        .collect();
    let results = json!({
        "b": list.b,
        "range": [eig.lambda_lo, eig.lambda_hi],
        "eigenvalues": list.eigenvalues(),
        "pairs": pairs,
    });
    let diagnostics = json!({"scan_points": problem.config.solver.scan_points, "count": list.eigenvalues().len()});
    Ok((results, diagnostics, residuals, table))
}

fn traces(problem: &Problem) -> Result<Vec<WeylTrace>> {
    let b_list = b_list(problem)?;
    let opts = problem.propagate_options();
    problem
        .lambdas()
        .par_iter()
        .map(|&l| weyl_trace(&problem.field, &problem.ts, &problem.bp, l, b_list, &opts))
        .collect()
}

fn trace(problem: &Problem) -> Result<Parts> {
    let d = problem.dim();
    let a = problem.ts.rho_t0();
    let mut header = vec!["b".to_string(), "j".into(), "mu_j".into(), "radius_fro".into()];
    for r in 1..=d {
        for s in 1..=d {
            header.push(format!("center_re_{r}{s}"));
            header.push(format!("center_im_{r}{s}"));
        }
    }
    header.push("lambda_re".into());
    header.push("lambda_im".into());
    let mut table = Table::new(header);
    let mut results = Vec::new();
    let mut notes = Vec::new();
    for tr in traces(problem)? {
        for (k, disk) in tr.disks.iter().enumerate() {
            let radius = fro(&disk.radius_l);
            for j in 0..d {
                let mut row = vec![num(disk.b), (j + 1).to_string(), num(tr.mu[k][j]), num(radius)];
                for r in 0..d {
                    for s in 0..d {
                        row.push(num(disk.center[(r, s)].re));
                        row.push(num(disk.center[(r, s)].im));
                    }
                }
                row.push(num(tr.lambda.re));
                row.push(num(tr.lambda.im));
                table.push(row);
            }
        }
        let (ratios, verdicts): (Vec<f64>, Vec<Value>) =
            tr.track_ratios(a).into_iter().map(|(r, k)| (r, serde_json::to_value(k).expect("verdict"))).unzip();
        let rank = match tr.rank(a) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("lambda = {}: {e}", tr.lambda));
                None
            }
        };
        results.push(json!({
            "lambda": complex(tr.lambda),
            "b_list": tr.b_list,
            "mu": tr.mu,
            "radius_fro": tr.disks.iter().map(|w| fro(&w.radius_l)).collect::<Vec<_>>(),
            "centers": tr.disks.iter().map(|w| cmat(&w.center)).collect::<Vec<_>>(),
            "ratios": ratios,
            "verdicts": verdicts,
            "rank": rank,
        }));
    }
    Ok((json!({"traces": results}), json!({"rank": notes}), Vec::new(), table))
}

fn classification(problem: &Problem) -> Result<Parts> {
    let b_list = b_list(problem)?;
    let lambdas = problem.lambdas();
    let pick = |upper: bool| {
        lambdas.iter().copied().find(|z| (z.im > 0.0) == upper).ok_or_else(|| {
            let half = if upper { "upper" } else { "lower" };
            Error::ConfigSyntax(format!("classify needs a probe in the {half} half-plane")).at("solver.lambda_list")
        })
    };
    let (lp, lm) = (pick(true)?, pick(false)?);
    let report = classify(&problem.field, &problem.ts, &problem.bp, lp, lm, b_list, &problem.propagate_options())?;
    let mut table = Table::new(["lambda_re", "lambda_im", "rank", "count", "plateau_count", "consistent"]);
    for c in &report.counts {
        table.push(vec![
            num(c.lambda[0]),
            num(c.lambda[1]),
            c.rank.to_string(),
            c.count.to_string(),
            c.plateau_count.to_string(),
            c.consistent.to_string(),
        ]);
    }
    let limits: Vec<Value> = report
        .limits
        .iter()
        .map(|l| json!({"lambda": l.lambda, "center": cmat(&l.c0), "radius": cmat(&l.r0)}))
        .collect();
    let diagnostics = json!({
        "consistent": report.counts.iter().all(|c| c.consistent),
        "inference": "rank read from the F22 tracks over the final doubling of b_list",
    });
    let results = json!({
        "label": report.label.to_string(),
        "classification": report,
        "limit_disks": limits,
    });
    Ok((results, diagnostics, Vec::new(), table))
}

/// `sup_t ‖Z* J Y - Z₀* J Y₀‖_F / max(1, ‖Z‖_F ‖Y‖_F)`.
fn relative_symplectic(y: &Trajectory, z: &Trajectory) -> Result<f64> {
    if y.samples.len() != z.samples.len() {
        return Err(Error::GridMismatch("trajectories at lambda and its conjugate differ in length".into()));
    }
    let j = symplectic_j(y.dim());
    let base = z.initial.adjoint() * &j * &y.initial;
    Ok(y.samples
        .iter()
        .zip(&z.samples)
        .map(|(a, b)| fro(&(b.adjoint() * &j * a - &base)) / (fro(a) * fro(b)).max(1.0))
        .fold(0.0, f64::max))
}

fn verify(problem: &Problem) -> Result<Parts> {
    let ts = &problem.ts;
    let dense = ts.cells().iter().any(|c| matches!(c, Cell::Interval { lo, hi } if hi > lo));
    let (tol_symplectic, tol_liouville) = if dense { (1e-7, 1e-7) } else { (1e-12, 1e-10) };
    let opts = problem.propagate_options();
    let rule = problem.config.solver.quadrature;
    let d = problem.dim();
    let mut residuals = Vec::new();

    let traces = traces(problem)?;
    let mut symplectic = 0.0f64;
    let mut liouville = 0.0f64;
    let (mut dual, mut symmetry, mut nesting) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut sign = f64::INFINITY;
    for tr in &traces {
        symplectic = symplectic.max(relative_symplectic(&tr.basis.traj, &tr.basis_conj.traj)?);
        liouville = liouville.max(liouville_residual(&tr.basis.traj)).max(liouville_residual(&tr.basis_conj.traj));
        let s = tr.lambda.im.signum();
        for (k, wd) in tr.data.iter().enumerate() {
            dual = dual.max(wd.dual_path_residual() / fro(&wd.f).max(1.0));
            let m = m_function(&tr.basis, wd.b, &problem.bp.beta)?;
            let mc = m_function(&tr.basis_conj, wd.b, &problem.bp.beta)?;
            symmetry = symmetry.max(fro(&(mc.adjoint() - &m)) / fro(&m).max(1.0));
            sign = sign.min(min_eig(&(imag_part(&m) * C64::new(s, 0.0))));
            for point in tr.disks[k].circle_points(CIRCLE_SAMPLES) {
                let scale = (fro(&point).powi(2) + d as f64).max(1.0);
                for earlier in &tr.data[..k] {
                    nesting = nesting.max(disk_membership(&point, earlier) / (fro(&earlier.f) * scale).max(1.0));
                }
            }
        }
    }
    residuals.push(Residual::at_most("symplectic", symplectic, tol_symplectic));
    residuals.push(Residual::at_most("liouville", liouville, tol_liouville));

    let b_list = b_list(problem)?;
    let (a, end) = (ts.rho_t0(), b_list[0]);
    let lambda_real = problem.lambdas()[0].re;
    let grid = make_grid(ts, a, end, opts.refinement(a, end))?;
    let phi = propagate_fundamental(&problem.field, C64::new(lambda_real, 0.0), &identity(2 * d), &grid, &opts.without_gram())?;
    let scale = phi.samples.iter().map(|m| fro(m).powi(2)).fold(1.0, f64::max);
    let path = NablaPath::with_differences(phi.path(0..2 * d));
    let lagrange = lagrange_residual(&problem.field, &path, &path, rule)? / scale;
    residuals.push(Residual::at_most("lagrange", lagrange, 1e-6));

    residuals.push(Residual::at_most("dual_path_f", dual, 1e-7));
    residuals.push(Residual::at_most("herglotz_symmetry", symmetry, 1e-8));
    residuals.push(Residual::above("herglotz_sign", sign, 0.0));
    if b_list.len() > 1 {
        residuals.push(Residual::at_most("nesting", nesting, 1e-7));
    }

    let mut table = Table::new(["name", "value", "tolerance", "comparison", "pass"]);
    for r in &residuals {
        let cmp = serde_json::to_value(r.comparison).expect("comparison");
        table.push(vec![r.name.clone(), num(r.value), num(r.tolerance), cmp.as_str().unwrap_or("").into(), r.pass.to_string()]);
    }
    let results = json!({
        "lambdas": traces.iter().map(|t| complex(t.lambda)).collect::<Vec<_>>(),
        "b_list": b_list,
        "lagrange": {"lambda": lambda_real, "range": [a, end]},
        "passed": residuals.iter().all(|r| r.pass),
    });
    let diagnostics = json!({
        "dense": dense,
        "normalization": "residuals are divided by max(1, natural magnitude of the compared quantities)",
        "circle_samples": CIRCLE_SAMPLES,
    });
    Ok((results, diagnostics, residuals, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    fn free(extra: &str) -> String {
        format!(
            r#"{{
            "timescale": {{"cells": [{{"interval": [0, 8]}}], "t0": 0}},
            "coefficients": {{"A": [["0"]], "B": [["1"]], "C": [["0"]], "W1": [["1"]], "W2": [["0"]]}},
            "boundary": {{"alpha": [[1, 0]], "beta": [[1, 0]]}},
            "solver": {{{extra}}}
        }}"#
        )
    }

    #[test]
    fn eig_needs_its_section() {
        let p = parse_config(&free(r#""b_list": [2, 4, 8]"#)).unwrap();
        let err = run(Command::Eig, &p).unwrap_err();
        assert!(err.to_string().starts_with("solver.eig:"), "{err}");
    }

    #[test]
    fn eig_report() {
        let p = parse_config(&free(r#""scan_points": 401, "eig": {"b": 3.141592653589793, "lambda_lo": 0.5, "lambda_hi": 4.5}"#)).unwrap();
        let rep = run(Command::Eig, &p).unwrap();
        let ev: Vec<f64> = serde_json::from_value(rep.results["eigenvalues"].clone()).unwrap();
        assert_eq!(ev.len(), 2);
        assert!((ev[0] - 1.0).abs() < 1e-6 && (ev[1] - 4.0).abs() < 1e-6, "{ev:?}");
        assert!(rep.passed());
        assert!(rep.to_csv().starts_with("index,lambda,multiplicity,residual,null_threshold\n1,"));
    }

    #[test]
    fn trace_rows_and_header() {
        let p = parse_config(&free(r#""b_list": [2, 4, 8], "lambda_list": [[0, 1]]"#)).unwrap();
        let rep = run(Command::WeylTrace, &p).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "b,j,mu_j,radius_fro,center_re_11,center_im_11,lambda_re,lambda_im");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("2.0,1,"));
    }

    #[test]
    fn classify_needs_both_half_planes() {
        let p = parse_config(&free(r#""b_list": [2, 4, 8], "lambda_list": [[0, 1]]"#)).unwrap();
        let err = run(Command::Classify, &p).unwrap_err();
        assert!(err.to_string().starts_with("solver.lambda_list:"), "{err}");
    }

    #[test]
    fn verify_passes_on_free_system() {
        let p = parse_config(&free(r#""b_list": [2, 4, 8]"#)).unwrap();
        let rep = run(Command::Verify, &p).unwrap();
        for r in &rep.residuals {
            assert!(r.pass, "{r:?}");
        }
        assert_eq!(rep.residuals.len(), 7);
    }
}
