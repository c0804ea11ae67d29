//! Dense primal-dual interior-point method for block-diagonal semidefinite
//! programs in the form
//!
//! ```text
//! primal:  min C•X  s.t.  A_j•X = b_j,  X ⪰ 0
//! dual:    max bᵀy  s.t.  Z = C − Σ y_j A_j ⪰ 0
//! ```
//!
//! The cone is a product of PSD blocks and one diagonal (LP) block. Search
//! directions use the HKM scaling with a Mehrotra predictor-corrector.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::param::SymSparse;

/// Coefficients of one dual variable across all blocks.
#[derive(Debug, Clone, Default)]
pub struct Column {
    pub psd: Vec<(usize, SymSparse)>,
    pub lp: Vec<(usize, f64)>,
}

impl Column {
    pub fn is_zero(&self) -> bool {
        self.psd.iter().all(|(_, m)| m.is_zero()) && self.lp.iter().all(|&(_, v)| v == 0.0)
    }

    fn norm_sq(&self) -> f64 {
        let psd: f64 = self
            .psd
            .iter()
            .flat_map(|(_, m)| m.entries().iter())
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum();
        psd + self.lp.iter().map(|&(_, v)| v * v).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct SdpData {
    pub psd_dims: Vec<usize>,
    pub lp_dim: usize,
    pub c_psd: Vec<SymSparse>,
    pub c_lp: Vec<f64>,
    pub cols: Vec<Column>,
    pub b: Vec<f64>,
}

impl SdpData {
    pub fn num_vars(&self) -> usize {
        self.cols.len()
    }

    /// Total cone order used for the barrier parameter.
    fn order(&self) -> f64 {
        (self.psd_dims.iter().sum::<usize>() + self.lp_dim) as f64
    }

    fn c_norm(&self) -> f64 {
        let psd: f64 = self
            .c_psd
            .iter()
            .flat_map(|m| m.entries().iter())
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum();
        (psd + self.c_lp.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Dual slack `C − Σ y_j A_j` without any residual correction.
    pub fn slack(&self, y: &[f64]) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut s: Vec<DMatrix<f64>> = self.c_psd.iter().map(SymSparse::to_dense).collect();
        let mut s_lp = DVector::from_column_slice(&self.c_lp);
        for (col, &yj) in self.cols.iter().zip(y) {
            if yj == 0.0 {
                continue;
            }
            for (k, m) in &col.psd {
                m.add_to_dense(&mut s[*k], -yj);
            }
            for &(k, v) in &col.lp {
                s_lp[k] -= yj * v;
            }
        }
        (s, s_lp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    /// Stopped by the caller's early-exit predicate.
    Interrupted,
    /// Stopped short of the tolerance; the point is dual feasible or close
    /// to optimal.
    Inaccurate,
    /// Dual problem (`max bᵀy`) infeasible.
    DualInfeasible,
    /// Dual objective unbounded above.
    DualUnbounded,
    Failed,
}

#[derive(Debug, Clone)]
pub struct IpmOutcome {
    pub status: IpmStatus,
    pub y: Vec<f64>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub iterations: usize,
    pub pinf: f64,
    pub dinf: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

struct Point {
    x: Vec<DMatrix<f64>>,
    x_lp: DVector<f64>,
    z: Vec<DMatrix<f64>>,
    z_lp: DVector<f64>,
    y: DVector<f64>,
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dx_lp: DVector<f64>,
    dz: Vec<DMatrix<f64>>,
    dz_lp: DVector<f64>,
    dy: DVector<f64>,
}

/// `A • G` for sparse symmetric `A` and arbitrary square `G` (trace of `A G`).
fn inner_general(a: &SymSparse, g: &DMatrix<f64>) -> f64 {
    a.entries()
        .iter()
        .map(|&(i, j, v)| if i == j { v * g[(i, i)] } else { v * (g[(i, j)] + g[(j, i)]) })
        .sum()
}

fn frob_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

fn dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `X A Z⁻¹` for sparse symmetric `A`.
fn scaled_product(x: &DMatrix<f64>, a: &SymSparse, zinv: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    if 2 * a.nnz() < n {
        let mut g = DMatrix::zeros(n, n);
        for &(p, q, v) in a.entries() {
            g.ger(v, &x.column(p), &zinv.row(q).transpose(), 1.0);
            if p != q {
                g.ger(v, &x.column(q), &zinv.row(p).transpose(), 1.0);
            }
        }
        g
    } else {
        let mut xa = DMatrix::zeros(n, n);
        for &(p, q, v) in a.entries() {
            xa.column_mut(q).axpy(v, &x.column(p), 1.0);
            if p != q {
                xa.column_mut(p).axpy(v, &x.column(q), 1.0);
            }
        }
        xa * zinv
    }
}

/// Largest `α` with `M + α D ⪰ 0`, given a Cholesky factor of `M`.
fn max_step_psd(chol: &Cholesky<f64, Dyn>, d: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let Some(tmp) = l.solve_lower_triangular(d) else {
        return 0.0;
    };
    let Some(tmp) = l.solve_lower_triangular(&tmp.transpose()) else {
        return 0.0;
    };
    let mut s = tmp;
    symmetrize(&mut s);
    let lam_min = SymmetricEigen::new(s).eigenvalues.min();
    if lam_min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam_min
    }
}

fn max_step_lp(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    x.iter()
        .zip(d.iter())
        .filter(|(_, &di)| di < 0.0)
        .map(|(&xi, &di)| -xi / di)
        .fold(f64::INFINITY, f64::min)
}

struct Workspace<'a> {
    data: &'a SdpData,
    /// For each PSD block, the columns with a nonzero component there.
    block_cols: Vec<Vec<(usize, &'a SymSparse)>>,
    lp_cols: Vec<Vec<(usize, f64)>>,
    b: DVector<f64>,
}

impl<'a> Workspace<'a> {
    fn new(data: &'a SdpData) -> Self {
        let mut block_cols = vec![Vec::new(); data.psd_dims.len()];
        let mut lp_cols = vec![Vec::new(); data.lp_dim];
        for (j, col) in data.cols.iter().enumerate() {
            for (k, m) in &col.psd {
                if !m.is_zero() {
                    block_cols[*k].push((j, m));
                }
            }
            for &(k, v) in &col.lp {
                if v != 0.0 {
                    lp_cols[k].push((j, v));
                }
            }
        }
        Workspace {
            data,
            block_cols,
            lp_cols,
            b: DVector::from_column_slice(&data.b),
        }
    }

    fn apply_a(&self, x: &[DMatrix<f64>], x_lp: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.data.num_vars());
        for (k, cols) in self.block_cols.iter().enumerate() {
            for &(j, m) in cols {
                out[j] += inner_general(m, &x[k]);
            }
        }
        for (k, cols) in self.lp_cols.iter().enumerate() {
            for &(j, v) in cols {
                out[j] += v * x_lp[k];
            }
        }
        out
    }

    fn apply_at(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut s: Vec<DMatrix<f64>> = self.data.psd_dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut s_lp = DVector::zeros(self.data.lp_dim);
        for (k, cols) in self.block_cols.iter().enumerate() {
            for &(j, m) in cols {
                if y[j] != 0.0 {
                    m.add_to_dense(&mut s[k], y[j]);
                }
            }
        }
        for (k, cols) in self.lp_cols.iter().enumerate() {
            for &(j, v) in cols {
                s_lp[k] += v * y[j];
            }
        }
        (s, s_lp)
    }

    fn initial_point(&self) -> Point {
        let data = self.data;
        let m = data.num_vars();
        let n_total = data.order().max(1.0);
        let col_norms: Vec<f64> = data.cols.iter().map(|c| c.norm_sq().sqrt()).collect();
        let mut xi = 10f64.max(n_total.sqrt());
        let mut eta = 10f64.max(n_total.sqrt()).max(data.c_norm());
        for j in 0..m {
            xi = xi.max(n_total * (1.0 + data.b[j].abs()) / (1.0 + col_norms[j]));
            eta = eta.max(col_norms[j]);
        }
        Point {
            x: data.psd_dims.iter().map(|&n| DMatrix::identity(n, n) * xi).collect(),
            x_lp: DVector::from_element(data.lp_dim, xi),
            z: data.psd_dims.iter().map(|&n| DMatrix::identity(n, n) * eta).collect(),
            z_lp: DVector::from_element(data.lp_dim, eta),
            y: DVector::zeros(m),
        }
    }

    fn schur(&self, pt: &Point, zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.data.num_vars();
        let mut schur = DMatrix::zeros(m, m);
        for (k, cols) in self.block_cols.iter().enumerate() {
            for (jj, &(j, aj)) in cols.iter().enumerate() {
                let g = scaled_product(&pt.x[k], aj, &zinv[k]);
                for &(i, ai) in &cols[..=jj] {
                    schur[(i, j)] += inner_general(ai, &g);
                }
            }
        }
        for (k, cols) in self.lp_cols.iter().enumerate() {
            let w = pt.x_lp[k] / pt.z_lp[k];
            for (jj, &(j, aj)) in cols.iter().enumerate() {
                for &(i, ai) in &cols[..=jj] {
                    schur[(i, j)] += ai * aj * w;
                }
            }
        }
        for j in 0..m {
            for i in 0..j {
                schur[(j, i)] = schur[(i, j)];
            }
        }
        schur
    }

    /// Solves for a direction given the complementarity right-hand side.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        pt: &Point,
        zinv: &[DMatrix<f64>],
        schur: &DMatrix<f64>,
        chol: &Cholesky<f64, Dyn>,
        rp: &DVector<f64>,
        rd: &[DMatrix<f64>],
        rd_lp: &DVector<f64>,
        rc: &[DMatrix<f64>],
        rc_lp: &DVector<f64>,
    ) -> Direction {
        // rhs_i = rp_i − A_i•Rc + A_i•(X Rd Z⁻¹)
        let xrdz: Vec<DMatrix<f64>> = pt
            .x
            .iter()
            .zip(rd)
            .zip(zinv)
            .map(|((x, r), zi)| {
                let mut g = x * r * zi;
                symmetrize(&mut g);
                g
            })
            .collect();
        let xrdz_lp = pt.x_lp.component_mul(rd_lp).component_div(&pt.z_lp);
        let tmp: Vec<DMatrix<f64>> = xrdz.iter().zip(rc).map(|(a, b)| a - b).collect();
        let rhs = rp + self.apply_a(&tmp, &(xrdz_lp - rc_lp));
        let dy = refined_solve(schur, chol, &rhs);
        let (ady, ady_lp) = self.apply_at(&dy);
        let dz: Vec<DMatrix<f64>> = rd.iter().zip(&ady).map(|(r, a)| r - a).collect();
        let dz_lp = rd_lp - ady_lp;
        let dx: Vec<DMatrix<f64>> = (0..pt.x.len())
            .map(|k| {
                let mut d = &rc[k] - &pt.x[k] * &dz[k] * &zinv[k];
                symmetrize(&mut d);
                d
            })
            .collect();
        let dx_lp = rc_lp - pt.x_lp.component_mul(&dz_lp).component_div(&pt.z_lp);
        Direction {
            dx,
            dx_lp,
            dz,
            dz_lp,
            dy,
        }
    }
}

fn step_lengths(
    x_chol: &[Cholesky<f64, Dyn>],
    z_chol: &[Cholesky<f64, Dyn>],
    pt: &Point,
    d: &Direction,
) -> (f64, f64) {
    let mut ap = max_step_lp(&pt.x_lp, &d.dx_lp);
    let mut ad = max_step_lp(&pt.z_lp, &d.dz_lp);
    for k in 0..pt.x.len() {
        ap = ap.min(max_step_psd(&x_chol[k], &d.dx[k]));
        ad = ad.min(max_step_psd(&z_chol[k], &d.dz[k]));
    }
    (ap, ad)
}

fn cholesky_all(ms: &[DMatrix<f64>]) -> Option<Vec<Cholesky<f64, Dyn>>> {
    ms.iter().map(|m| Cholesky::new(m.clone())).collect()
}

fn cholesky_regularized(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut reg = 1e-14;
    while reg < 1e-2 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += reg * scale;
        }
        if let Some(c) = Cholesky::new(mm) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

/// Solves `S x = r` with a possibly regularized factor of `S`, refining
/// against `S` itself while the residual keeps shrinking.
fn refined_solve(s: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>, r: &DVector<f64>) -> DVector<f64> {
    let mut x = chol.solve(r);
    let mut res = r - s * &x;
    let mut norm = res.norm();
    for _ in 0..10 {
        if norm <= 1e-15 * r.norm() {
            break;
        }
        let cand = &x + chol.solve(&res);
        let cand_res = r - s * &cand;
        let cand_norm = cand_res.norm();
        if cand_norm >= 0.5 * norm {
            if cand_norm < norm {
                x = cand;
            }
            break;
        }
        x = cand;
        res = cand_res;
        norm = cand_norm;
    }
    x
}

/// Runs the interior-point method. `stop` is called with the current `y`
/// after every iteration; returning `true` ends the solve early with status
/// [`IpmStatus::Interrupted`].
pub fn solve(data: &SdpData, settings: IpmSettings, mut stop: impl FnMut(&[f64]) -> bool) -> IpmOutcome {
    let ws = Workspace::new(data);
    let m = data.num_vars();
    let n_total = data.order();
    let b_norm = ws.b.norm();
    let c_norm = data.c_norm();
    let c_psd: Vec<DMatrix<f64>> = data.c_psd.iter().map(SymSparse::to_dense).collect();
    let c_lp = DVector::from_column_slice(&data.c_lp);

    let mut pt = ws.initial_point();
    let mut outcome = IpmOutcome {
        status: IpmStatus::Failed,
        y: vec![0.0; m],
        primal_obj: f64::NAN,
        dual_obj: f64::NAN,
        iterations: 0,
        pinf: f64::INFINITY,
        dinf: f64::INFINITY,
        gap: f64::INFINITY,
    };
    let mut best_score = f64::INFINITY;
    let mut best: Option<IpmOutcome> = None;
    // Dual-feasible iterate with the largest objective: what a certificate
    // needs, even when primal feasibility stalls.
    let mut best_dual: Option<IpmOutcome> = None;
    let mut stalls = 0;
    // Shortest step of the previous iteration; short steps call for more
    // centering.
    let mut last_step: f64 = 1.0;

    for iter in 0..=settings.max_iter {
        let ax = ws.apply_a(&pt.x, &pt.x_lp);
        let rp = &ws.b - &ax;
        let (aty, aty_lp) = ws.apply_at(&pt.y);
        let rd: Vec<DMatrix<f64>> = (0..c_psd.len()).map(|k| &c_psd[k] - &pt.z[k] - &aty[k]).collect();
        let rd_lp = &c_lp - &pt.z_lp - &aty_lp;

        let pobj = c_psd.iter().zip(&pt.x).map(|(c, x)| dot(c, x)).sum::<f64>() + c_lp.dot(&pt.x_lp);
        let dobj = ws.b.dot(&pt.y);
        let xz = pt.x.iter().zip(&pt.z).map(|(x, z)| dot(x, z)).sum::<f64>() + pt.x_lp.dot(&pt.z_lp);
        let mu = if n_total > 0.0 { xz / n_total } else { 0.0 };

        let pinf = rp.norm() / (1.0 + b_norm);
        let dinf = (rd.iter().map(frob_sq).sum::<f64>() + rd_lp.norm_squared()).sqrt() / (1.0 + c_norm);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let gap = gap.min(xz.abs() / (1.0 + pobj.abs() + dobj.abs()));

        outcome.y = pt.y.iter().copied().collect();
        outcome.primal_obj = pobj;
        outcome.dual_obj = dobj;
        outcome.iterations = iter;
        outcome.pinf = pinf;
        outcome.dinf = dinf;
        outcome.gap = gap;

        if !(pobj.is_finite() && dobj.is_finite() && mu.is_finite()) {
            break;
        }
        if pinf < settings.tol && dinf < settings.tol && gap < settings.tol {
            outcome.status = IpmStatus::Optimal;
            return outcome;
        }
        if iter > 0 && stop(&outcome.y) {
            outcome.status = IpmStatus::Interrupted;
            return outcome;
        }
        // Farkas-type certificates of infeasibility.
        if pobj < 0.0 && ax.norm() / -pobj < settings.tol {
            outcome.status = IpmStatus::DualInfeasible;
            return outcome;
        }
        if dobj > 0.0 && dinf * (1.0 + c_norm) / dobj < settings.tol && dobj > 1e8 * (1.0 + c_norm) {
            outcome.status = IpmStatus::DualUnbounded;
            return outcome;
        }
        if dinf < settings.tol && best_dual.as_ref().is_none_or(|b| dobj > b.dual_obj) {
            best_dual = Some(outcome.clone());
        }
        let score = pinf.max(dinf).max(gap);
        if score < best_score * 0.999 {
            best_score = score;
            best = Some(outcome.clone());
            stalls = 0;
        } else {
            stalls += 1;
        }
        if iter == settings.max_iter || stalls > 15 {
            break;
        }

        let Some(x_chol) = cholesky_all(&pt.x) else { break };
        let Some(z_chol) = cholesky_all(&pt.z) else { break };
        let zinv: Vec<DMatrix<f64>> = z_chol.iter().map(|c| {
            let mut i = c.inverse();
            symmetrize(&mut i);
            i
        }).collect();
        let schur = ws.schur(&pt, &zinv);
        let Some(chol) = cholesky_regularized(&schur) else { break };

        // Predictor.
        let rc: Vec<DMatrix<f64>> = pt.x.iter().map(|x| -x).collect();
        let rc_lp = -&pt.x_lp;
        let pred = ws.direction(&pt, &zinv, &schur, &chol, &rp, &rd, &rd_lp, &rc, &rc_lp);
        let (ap, ad) = step_lengths(&x_chol, &z_chol, &pt, &pred);
        let (ap1, ad1) = (ap.min(1.0), ad.min(1.0));
        let mut xz_aff = 0.0;
        for k in 0..pt.x.len() {
            let xa = &pt.x[k] + &pred.dx[k] * ap1;
            let za = &pt.z[k] + &pred.dz[k] * ad1;
            xz_aff += dot(&xa, &za);
        }
        xz_aff += (&pt.x_lp + &pred.dx_lp * ap1).dot(&(&pt.z_lp + &pred.dz_lp * ad1));
        let mu_aff = xz_aff / n_total;
        let mut sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
        if last_step < 0.2 {
            sigma = sigma.max(0.5);
        }

        // Corrector.
        let rc: Vec<DMatrix<f64>> = (0..pt.x.len())
            .map(|k| {
                let mut r = &zinv[k] * (sigma * mu) - &pt.x[k] - &pred.dx[k] * &pred.dz[k] * &zinv[k];
                symmetrize(&mut r);
                r
            })
            .collect();
        let rc_lp = DVector::from_fn(data.lp_dim, |k, _| {
            (sigma * mu - pred.dx_lp[k] * pred.dz_lp[k]) / pt.z_lp[k] - pt.x_lp[k]
        });
        let dir = ws.direction(&pt, &zinv, &schur, &chol, &rp, &rd, &rd_lp, &rc, &rc_lp);
        let (ap, ad) = step_lengths(&x_chol, &z_chol, &pt, &dir);
        let tau = 0.9 + 0.09 * ap1.min(ad1);
        let ap = (tau * ap).min(1.0);
        let ad = (tau * ad).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) || (ap < 1e-12 && ad < 1e-12) {
            break;
        }
        for k in 0..pt.x.len() {
            pt.x[k] += &dir.dx[k] * ap;
            pt.z[k] += &dir.dz[k] * ad;
            symmetrize(&mut pt.x[k]);
            symmetrize(&mut pt.z[k]);
        }
        pt.x_lp += &dir.dx_lp * ap;
        pt.z_lp += &dir.dz_lp * ad;
        pt.y += &dir.dy * ad;
        last_step = ap.min(ad);
    }

    let near = |o: &IpmOutcome| o.pinf.max(o.dinf).max(o.gap) < 1e-5;
    if let Some(mut d) = best_dual {
        d.status = IpmStatus::Inaccurate;
        return d;
    }
    let mut out = best.unwrap_or(outcome);
    out.status = if near(&out) {
        IpmStatus::Inaccurate
    } else {
        IpmStatus::Failed
    };
    out
}
