use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::lmi::LmiProblem;
use crate::param::{Assignment, Cone, Sense, VarId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Rejected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateReport {
    /// Largest eigenvalue of each `⪯ 0` constraint, smallest of each `⪰ 0`.
    pub residuals: Vec<f64>,
    /// Eigenvalue threshold applied to each constraint.
    pub thresholds: Vec<f64>,
    pub cone_violations: Vec<(VarId, f64)>,
    pub missing: Vec<VarId>,
    pub verdict: Verdict,
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.max()
}

/// Largest eigenvalue by power iteration on `M + sI` with `s = ‖M‖₁`, which
/// makes the shifted spectrum nonnegative.
pub fn power_max_eigenvalue(m: &DMatrix<f64>, max_iter: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let shifted = m + DMatrix::identity(n, n) * shift;
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v.normalize_mut();
    let mut rayleigh = v.dot(&(&shifted * &v));
    for _ in 0..max_iter {
        let w = &shifted * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return -shift;
        }
        v = w / norm;
        let next = v.dot(&(&shifted * &v));
        if (next - rayleigh).abs() <= 1e-16 * next.abs().max(1.0) {
            rayleigh = next;
            break;
        }
        rayleigh = next;
    }
    rayleigh - shift
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

/// Re-evaluates every constraint at `assignment`. Thresholds scale with the
/// matrix 1-norm: `tol · max(1, ‖M‖₁)`.
pub fn check_certificate(problem: &LmiProblem, assignment: &Assignment, tol: f64) -> CertificateReport {
    let mut residuals = Vec::new();
    let mut thresholds = Vec::new();
    let mut missing = Vec::new();
    let mut ok = true;
    for con in problem.constraints() {
        match con.matrix.evaluate_unchecked(assignment) {
            Ok(m) => {
                let thr = tol * one_norm(&m).max(1.0);
                let r = match con.sense {
                    Sense::Nsd => max_eigenvalue(&m),
                    Sense::Psd => -max_eigenvalue(&(-m)),
                };
                let good = match con.sense {
                    Sense::Nsd => r <= thr,
                    Sense::Psd => r >= -thr,
                };
                ok &= good;
                residuals.push(r);
                thresholds.push(thr);
            }
            Err(_) => {
                ok = false;
                residuals.push(f64::INFINITY);
                thresholds.push(tol);
            }
        }
    }
    let mut cone_violations = Vec::new();
    for (var, &cone) in problem.variables() {
        match assignment.get(var) {
            None => missing.push(var.clone()),
            Some(&v) if cone == Cone::Nonnegative && v < -tol => cone_violations.push((var.clone(), v)),
            Some(&v) if !v.is_finite() => cone_violations.push((var.clone(), v)),
            _ => {}
        }
    }
    ok &= cone_violations.is_empty() && missing.is_empty();
    CertificateReport {
        residuals,
        thresholds,
        cone_violations,
        missing,
        verdict: if ok { Verdict::Certified } else { Verdict::Rejected },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{ParamMatrix, SymSparse};

    fn scalar_problem(c: f64) -> LmiProblem {
        let mut pm = ParamMatrix::constant(SymSparse::from_triplets(1, [(0, 0, c)]));
        pm.add_var("d".into(), Cone::Free, SymSparse::from_triplets(1, [(0, 0, -1.0)])).unwrap();
        let mut p = LmiProblem::new();
        p.add_constraint(pm, Sense::Nsd).unwrap();
        p
    }

    #[test]
    fn scalar_certificates() {
        let p = scalar_problem(0.5);
        let good: Assignment = [("d".into(), 0.5)].into_iter().collect();
        let rep = check_certificate(&p, &good, 1e-6);
        assert_eq!(rep.verdict, Verdict::Certified);
        assert!(rep.residuals[0] <= 0.0);
        let bad: Assignment = [("d".into(), -0.5)].into_iter().collect();
        let rep = check_certificate(&p, &bad, 1e-6);
        assert_eq!(rep.verdict, Verdict::Rejected);
        assert!((rep.residuals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cone_violation_rejected() {
        let mut pm = ParamMatrix::constant(SymSparse::identity(2).scaled(-1.0));
        pm.add_var("g".into(), Cone::Nonnegative, SymSparse::zeros(2)).unwrap();
        let mut p = LmiProblem::new();
        p.add_constraint(pm, Sense::Nsd).unwrap();
        let a: Assignment = [("g".into(), -1e-6)].into_iter().collect();
        let rep = check_certificate(&p, &a, 1e-9);
        assert_eq!(rep.verdict, Verdict::Rejected);
        assert_eq!(rep.cone_violations.len(), 1);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.3, -1.0, 0.5, 0.0, 0.3, 0.0, -4.0]);
        let a = max_eigenvalue(&m);
        let b = power_max_eigenvalue(&m, 100_000);
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}
