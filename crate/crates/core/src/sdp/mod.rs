//! Solving [`LmiProblem`]s and re-checking their certificates.

mod certificate;
pub mod ipm;
mod lp;
mod sdpa;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

pub use certificate::{check_certificate, max_eigenvalue, power_max_eigenvalue, CertificateReport, Verdict};
pub use lp::{solve_lp, Lp, LpResult, LpStatus};
pub use sdpa::to_sdpa;

use crate::lmi::LmiProblem;
use crate::param::{Assignment, Cone, Sense, SymSparse, VarId};
use ipm::{Column, IpmSettings, IpmStatus, SdpData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Feasible,
    Optimal,
    Infeasible,
    Inaccurate,
    Failed,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub time_s: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub assignment: Option<Assignment>,
    pub objective_value: Option<f64>,
    /// For problems without objective: how far inside the feasible region the
    /// returned point is (negated smallest eigenvalue shift).
    pub margin: Option<f64>,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

/// The problem rewritten in the solver's block form.
pub(crate) struct Conversion {
    pub data: SdpData,
    pub vars: Vec<VarId>,
    /// Index of the slack variable `t` added to feasibility problems.
    pub slack: Option<usize>,
    /// Variables with no coefficients anywhere; fixed to zero.
    pub dropped: Vec<VarId>,
}

/// Builds `max bᵀy s.t. C − Σ y_j A_j ⪰ 0`. Each `F(θ) ⪯ 0` becomes
/// `C = −F_0, A_j = F_j`; each `F(θ) ⪰ 0` becomes `C = F_0, A_j = −F_j`;
/// 1×1 constraints and nonnegative variables go to the LP block. Without an
/// objective, a slack `t` shifts every constraint by `t I` and is minimized.
pub(crate) fn convert(problem: &LmiProblem) -> Conversion {
    let all: Vec<VarId> = problem.variables().keys().cloned().collect();
    let objective = problem.objective();
    let mut used: BTreeMap<&VarId, bool> = all.iter().map(|v| (v, false)).collect();
    for con in problem.constraints() {
        for t in con.matrix.terms() {
            if !t.basis.is_zero() {
                used.insert(&t.var, true);
            }
        }
    }
    let mut vars = Vec::new();
    let mut dropped = Vec::new();
    for v in &all {
        let coef = objective.and_then(|o| o.get(v)).copied().unwrap_or(0.0);
        if !used[v] && problem.variables()[v] == Cone::Free && coef == 0.0 {
            dropped.push(v.clone());
        } else {
            vars.push(v.clone());
        }
    }
    let index: BTreeMap<&VarId, usize> = vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let feasibility = objective.is_none();
    let m = vars.len() + usize::from(feasibility);
    let slack = feasibility.then_some(vars.len());

    let mut cols = vec![Column::default(); m];
    let mut psd_dims = Vec::new();
    let mut c_psd = Vec::new();
    let mut c_lp = Vec::new();
    for con in problem.constraints() {
        let sign = match con.sense {
            Sense::Nsd => 1.0,
            Sense::Psd => -1.0,
        };
        let dim = con.matrix.dim();
        if dim == 1 {
            let k = c_lp.len();
            c_lp.push(-sign * con.matrix.constant_part().get(0, 0));
            for t in con.matrix.terms() {
                let v = t.basis.get(0, 0);
                if v != 0.0 {
                    cols[index[&t.var]].lp.push((k, sign * v));
                }
            }
            if let Some(s) = slack {
                cols[s].lp.push((k, -1.0));
            }
        } else if dim > 1 {
            let k = psd_dims.len();
            psd_dims.push(dim);
            c_psd.push(con.matrix.constant_part().scaled(-sign));
            for t in con.matrix.terms() {
                if !t.basis.is_zero() {
                    cols[index[&t.var]].psd.push((k, t.basis.scaled(sign)));
                }
            }
            if let Some(s) = slack {
                cols[s].psd.push((k, SymSparse::identity(dim).scaled(-1.0)));
            }
        }
    }
    for (j, v) in vars.iter().enumerate() {
        if problem.variables()[v] == Cone::Nonnegative {
            let k = c_lp.len();
            c_lp.push(0.0);
            cols[j].lp.push((k, -1.0));
            if let Some(s) = slack {
                cols[s].lp.push((k, -1.0));
            }
        }
    }
    let mut b = vec![0.0; m];
    match (objective, slack) {
        (Some(obj), _) => {
            for (v, &coef) in obj {
                if let Some(&j) = index.get(v) {
                    b[j] = -coef;
                }
            }
        }
        (None, Some(s)) => {
            // t ≥ −1 keeps the problem bounded.
            let k = c_lp.len();
            c_lp.push(1.0);
            cols[s].lp.push((k, -1.0));
            b[s] = -1.0;
        }
        (None, None) => unreachable!(),
    }
    Conversion {
        data: SdpData {
            psd_dims,
            lp_dim: c_lp.len(),
            c_psd,
            c_lp,
            cols,
            b,
        },
        vars,
        slack,
        dropped,
    }
}

fn eval_without_vars(problem: &LmiProblem) -> SolveStatus {
    let ok = problem.constraints().iter().all(|con| {
        let m = con.matrix.constant_part().to_dense();
        if m.nrows() == 0 {
            return true;
        }
        let scale = 1e-9 * m.amax().max(1.0);
        let eig = SymmetricEigen::new(m).eigenvalues;
        match con.sense {
            Sense::Nsd => eig.max() <= scale,
            Sense::Psd => eig.min() >= -scale,
        }
    });
    if ok {
        SolveStatus::Feasible
    } else {
        SolveStatus::Infeasible
    }
}

/// Smallest eigenvalue of the slack with `t` removed, over all blocks.
fn strict_margin(data: &SdpData, y: &[f64], slack: usize) -> f64 {
    let mut y0 = y.to_vec();
    y0[slack] = 0.0;
    let (s, s_lp) = data.slack(&y0);
    // The last LP entry is the `t ≥ −1` bound, irrelevant once `t` is gone.
    let lp_min = s_lp
        .iter()
        .take(data.lp_dim.saturating_sub(1))
        .fold(f64::INFINITY, |m, &v| m.min(v));
    s.into_iter()
        .map(|b| SymmetricEigen::new(b).eigenvalues.min())
        .fold(lp_min, f64::min)
}

pub fn solve(problem: &LmiProblem, opts: &SolverOptions) -> SolveResult {
    let start = Instant::now();
    let mut stats = SolverStats::default();
    if problem.variables().is_empty() {
        let status = eval_without_vars(problem);
        stats.time_s = start.elapsed().as_secs_f64();
        return SolveResult {
            status,
            assignment: (status == SolveStatus::Feasible).then(Assignment::new),
            objective_value: problem.objective().map(|_| 0.0),
            margin: None,
            stats,
        };
    }
    let conv = convert(problem);
    let settings = IpmSettings {
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let out = match conv.slack {
        Some(s) => ipm::solve(&conv.data, settings, |y| y[s] < 0.0 && strict_margin(&conv.data, y, s) > 0.0),
        None => ipm::solve(&conv.data, settings, |_| false),
    };
    stats.iterations = out.iterations;
    stats.primal_infeasibility = out.pinf;
    stats.dual_infeasibility = out.dinf;
    stats.gap = out.gap;

    let mut assignment = Assignment::new();
    for (j, v) in conv.vars.iter().enumerate() {
        let mut val = out.y[j];
        if problem.variables()[v] == Cone::Nonnegative {
            val = val.max(0.0);
        }
        assignment.insert(v.clone(), val);
    }
    for v in &conv.dropped {
        assignment.insert(v.clone(), 0.0);
    }
    let objective_value = problem
        .objective()
        .map(|obj| obj.iter().map(|(v, c)| c * assignment[v]).sum::<f64>());

    let (status, margin) = match conv.slack {
        Some(s) => {
            let t = out.y[s];
            let status = match out.status {
                IpmStatus::Interrupted => SolveStatus::Feasible,
                IpmStatus::Optimal if t <= opts.tol => SolveStatus::Feasible,
                IpmStatus::Optimal => SolveStatus::Infeasible,
                IpmStatus::Inaccurate if t <= opts.tol => SolveStatus::Inaccurate,
                IpmStatus::Inaccurate if t > 1e-6 => SolveStatus::Infeasible,
                _ => SolveStatus::Failed,
            };
            (status, Some(-t))
        }
        None => {
            let status = match out.status {
                IpmStatus::Optimal => SolveStatus::Optimal,
                IpmStatus::Inaccurate => SolveStatus::Inaccurate,
                IpmStatus::DualInfeasible => SolveStatus::Infeasible,
                _ => SolveStatus::Failed,
            };
            (status, None)
        }
    };
    stats.time_s = start.elapsed().as_secs_f64();
    let has_point = matches!(status, SolveStatus::Feasible | SolveStatus::Optimal | SolveStatus::Inaccurate);
    SolveResult {
        status,
        assignment: has_point.then_some(assignment),
        objective_value: if has_point { objective_value } else { None },
        margin,
        stats,
    }
}
