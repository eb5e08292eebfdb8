use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_file;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdRow {
    pub component: usize,
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub rows: Vec<FdRow>,
    pub max_relative_error: f64,
}

const ABS_FLOOR: f64 = 1e-12;

/// Central differences of `functional` on the listed components, compared
/// with `analytic`. Relative error is |a − fd| / max(|a|, |fd|, 1e-12).
pub fn fd_check(
    mut functional: impl FnMut(&[f64]) -> Result<f64>,
    analytic: &[f64],
    theta: &[f64],
    components: &[usize],
    step: f64,
) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step {step} must be positive")));
    }
    let mut x = theta.to_vec();
    let mut rows = Vec::with_capacity(components.len());
    for &c in components {
        if c >= theta.len() {
            return Err(Error::Bounds(format!("component {c} outside design of {}", theta.len())));
        }
        x[c] = theta[c] + step;
        let plus = functional(&x)?;
        x[c] = theta[c] - step;
        let minus = functional(&x)?;
        x[c] = theta[c];
        let fd = (plus - minus) / (2.0 * step);
        let a = analytic[c];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(ABS_FLOOR);
        rows.push(FdRow {
            component: c,
            analytic: a,
            finite_difference: fd,
            relative_error: rel,
        });
    }
    let max_relative_error = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    Ok(FdReport { rows, max_relative_error })
}

pub fn write_fd_csv(path: &Path, report: &FdReport) -> Result<()> {
    let mut s = String::from("component,analytic,fd,rel_error\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{:e},{:e},{:e}", r.component, r.analytic, r.finite_difference, r.relative_error);
    }
    write_file(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_functional_is_exact() {
        let a = [0.5, -2.0, 3.25, 1.0];
        let f = |x: &[f64]| Ok(x.iter().zip(&a).map(|(x, a)| x * a).sum());
        let r = fd_check(f, &a, &[0.1, 0.2, -0.3, 0.0], &[0, 1, 2, 3], 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-10, "{}", r.max_relative_error);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |x: &[f64]| Ok(x[0] * x[0]);
        let r = fd_check(f, &[1.0], &[1.0], &[0], 1e-5).unwrap();
        assert!((r.max_relative_error - 0.5).abs() < 1e-6);
    }

    #[test]
    fn bad_inputs() {
        let f = |_: &[f64]| Ok(0.0);
        assert!(fd_check(f, &[0.0], &[0.0], &[0], 0.0).is_err());
        assert!(fd_check(f, &[0.0], &[0.0], &[1], 1e-5).is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fd.csv");
        let r = fd_check(|x: &[f64]| Ok(2.0 * x[0]), &[2.0], &[0.0], &[0], 1e-3).unwrap();
        write_fd_csv(&p, &r).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("component,analytic,fd,rel_error\n0,2e0,"));
    }
}
