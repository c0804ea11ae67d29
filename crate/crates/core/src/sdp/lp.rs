//! Linear programs solved as conic problems with only the diagonal block.

use nalgebra::DMatrix;

use super::ipm::{self, Column, IpmSettings, IpmStatus, SdpData};

/// `max cᵀx s.t. G x ≤ h`.
#[derive(Debug, Clone)]
pub struct Lp {
    pub c: Vec<f64>,
    pub g: DMatrix<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Failed,
}

#[derive(Debug, Clone)]
pub struct LpResult {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
}

pub fn solve_lp(lp: &Lp, tol: f64) -> LpResult {
    let (m, n) = lp.g.shape();
    assert_eq!(lp.c.len(), n, "objective length");
    assert_eq!(lp.h.len(), m, "right-hand side length");
    let cols = (0..n)
        .map(|j| Column {
            psd: Vec::new(),
            lp: (0..m).filter(|&i| lp.g[(i, j)] != 0.0).map(|i| (i, lp.g[(i, j)])).collect(),
        })
        .collect();
    let data = SdpData {
        psd_dims: Vec::new(),
        lp_dim: m,
        c_psd: Vec::new(),
        c_lp: lp.h.clone(),
        cols,
        b: lp.c.clone(),
    };
    let out = ipm::solve(
        &data,
        IpmSettings {
            tol,
            max_iter: 200,
        },
        |_| false,
    );
    let status = match out.status {
        IpmStatus::Optimal | IpmStatus::Inaccurate | IpmStatus::Interrupted => LpStatus::Optimal,
        IpmStatus::DualInfeasible => LpStatus::Infeasible,
        IpmStatus::DualUnbounded => LpStatus::Unbounded,
        IpmStatus::Failed => LpStatus::Failed,
    };
    let value = lp.c.iter().zip(&out.y).map(|(a, b)| a * b).sum();
    LpResult {
        status,
        x: out.y,
        value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_vertex() {
        // max x + 2y over {x ≥ 0, y ≥ 0, x + y ≤ 1}
        let lp = Lp {
            c: vec![1.0, 2.0],
            g: DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            h: vec![0.0, 0.0, 1.0],
        };
        let r = solve_lp(&lp, 1e-9);
        assert_eq!(r.status, LpStatus::Optimal);
        assert!((r.value - 2.0).abs() < 1e-7);
        assert!((r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn infeasible_lp() {
        let lp = Lp {
            c: vec![1.0],
            g: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            h: vec![0.0, -1.0],
        };
        assert_eq!(solve_lp(&lp, 1e-9).status, LpStatus::Infeasible);
    }
}
