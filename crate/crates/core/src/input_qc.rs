//! Input sets and the quadratic-constraint families that over-approximate
//! them over `[x; 1]`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{matrix_from_rows, matrix_to_rows};
use crate::param::{Cone, ParamMatrix, Sense, SideConstraint, SparseRows, SymSparse, VarId};
use crate::sdp::{solve_lp, Lp, LpStatus};

/// Feasibility tolerance of the small LP probes.
pub const PROBE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum InputSet {
    Box { lo: DVector<f64>, hi: DVector<f64> },
    /// `{x : H x ≤ h}`.
    Polytope { h_mat: DMatrix<f64>, h: DVector<f64> },
    /// `{x_c + A λ : λ ∈ [0, 1]^m}`.
    Zonotope { center: DVector<f64>, generators: DMatrix<f64> },
    /// `{x : ‖A x + b‖ ≤ 1}`.
    Ellipsoid { a: DMatrix<f64>, b: DVector<f64> },
}

/// Constraint family of an input set; zonotopes also carry a coupling LMI.
#[derive(Debug, Clone, PartialEq)]
pub struct InputQc {
    pub family: ParamMatrix,
    pub side: Option<SideConstraint>,
}

impl InputQc {
    pub fn with_prefix(&self, prefix: &str) -> InputQc {
        InputQc {
            family: self.family.with_prefix(prefix),
            side: self.side.as_ref().map(|s| SideConstraint {
                matrix: s.matrix.with_prefix(prefix),
                sense: s.sense,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InputQcOptions {
    /// Drop polytope facet pairs whose intersection misses the polytope.
    pub prune_pairs: bool,
    /// Treat boxes as 2n-facet polytopes and use every facet pair.
    pub box_cross_terms: bool,
}

fn finite(v: impl IntoIterator<Item = f64>, what: &'static str) -> Result<()> {
    if v.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn dim_check(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

impl InputSet {
    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let set = InputSet::Box {
            lo: DVector::from_vec(lo),
            hi: DVector::from_vec(hi),
        };
        set.validate()?;
        Ok(set)
    }

    /// `{x : ‖x − center‖_∞ ≤ eps}`.
    pub fn linf_ball(center: &[f64], eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidInput(format!("radius must be nonnegative, got {eps}")));
        }
        Self::boxed(
            center.iter().map(|c| c - eps).collect(),
            center.iter().map(|c| c + eps).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        match self {
            InputSet::Box { lo, .. } => lo.len(),
            InputSet::Polytope { h_mat, .. } => h_mat.ncols(),
            InputSet::Zonotope { center, .. } => center.len(),
            InputSet::Ellipsoid { b, .. } => b.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InputSet::Box { lo, hi } => {
                dim_check("box bounds", lo.len(), hi.len())?;
                finite(lo.iter().chain(hi.iter()).copied(), "box bounds")?;
                if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
                    return Err(Error::InvalidInput(format!("box bounds reversed in coordinate {i}")));
                }
            }
            InputSet::Polytope { h_mat, h } => {
                dim_check("polytope offsets", h_mat.nrows(), h.len())?;
                finite(h_mat.iter().chain(h.iter()).copied(), "polytope")?;
                if polytope_depth(h_mat, h).is_none_or(|s| s < -PROBE_TOL) {
                    return Err(Error::EmptySet);
                }
            }
            InputSet::Zonotope { center, generators } => {
                dim_check("zonotope generators", center.len(), generators.nrows())?;
                finite(center.iter().chain(generators.iter()).copied(), "zonotope")?;
            }
            InputSet::Ellipsoid { a, b } => {
                dim_check("ellipsoid matrix", b.len(), a.nrows())?;
                dim_check("ellipsoid matrix", b.len(), a.ncols())?;
                finite(a.iter().chain(b.iter()).copied(), "ellipsoid")?;
                SymSparse::from_dense(a)?;
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        let v = DVector::from_column_slice(x);
        match self {
            InputSet::Box { lo, hi } => (0..lo.len()).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol),
            InputSet::Polytope { h_mat, h } => (h_mat * &v - h).iter().all(|&r| r <= tol),
            InputSet::Ellipsoid { a, b } => (a * &v + b).norm() <= 1.0 + tol,
            InputSet::Zonotope { center, generators } => {
                // max s s.t. |x − x_c − A λ| ≤ tol, s ≤ λ ≤ 1 − s, s ≤ 1; inside iff s ≥ 0.
                let (n, m) = generators.shape();
                let rows = 2 * n + 2 * m + 1;
                let mut g = DMatrix::zeros(rows, m + 1);
                let mut rhs = vec![0.0; rows];
                for i in 0..n {
                    for j in 0..m {
                        g[(i, j)] = generators[(i, j)];
                        g[(n + i, j)] = -generators[(i, j)];
                    }
                    rhs[i] = x[i] - center[i] + tol;
                    rhs[n + i] = center[i] - x[i] + tol;
                }
                for j in 0..m {
                    let (up, down) = (2 * n + j, 2 * n + m + j);
                    g[(up, j)] = 1.0;
                    g[(up, m)] = 1.0;
                    rhs[up] = 1.0;
                    g[(down, j)] = -1.0;
                    g[(down, m)] = 1.0;
                }
                g[(rows - 1, m)] = 1.0;
                rhs[rows - 1] = 1.0;
                let mut c = vec![0.0; m + 1];
                c[m] = 1.0;
                let r = solve_lp(&Lp { c, g, h: rhs }, 1e-10);
                r.status == LpStatus::Optimal && r.value >= -1e-9
            }
        }
    }

    /// Constraint family for this set.
    pub fn qc(&self, opts: &InputQcOptions) -> Result<InputQc> {
        self.validate()?;
        let family = match self {
            InputSet::Box { lo, hi } if opts.box_cross_terms => {
                let n = lo.len();
                let mut h_mat = DMatrix::zeros(2 * n, n);
                let mut h = DVector::zeros(2 * n);
                for i in 0..n {
                    h_mat[(i, i)] = 1.0;
                    h[i] = hi[i];
                    h_mat[(n + i, i)] = -1.0;
                    h[n + i] = -lo[i];
                }
                polytope_qc(&h_mat, &h, opts.prune_pairs)?
            }
            InputSet::Box { lo, hi } => hyperrect_qc(lo.as_slice(), hi.as_slice())?,
            InputSet::Polytope { h_mat, h } => polytope_qc(h_mat, h, opts.prune_pairs)?,
            InputSet::Ellipsoid { a, b } => ellipsoid_qc(a, b)?,
            InputSet::Zonotope { center, generators } => return zonotope_qc(center, generators),
        };
        Ok(InputQc { family, side: None })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InputSetFile = serde_json::from_str(text)?;
        let set = match file {
            InputSetFile::Box { lo, hi } => InputSet::Box {
                lo: DVector::from_vec(lo),
                hi: DVector::from_vec(hi),
            },
            InputSetFile::BoxInf { center, eps } => return InputSet::linf_ball(&center, eps),
            InputSetFile::Polytope { h_mat, h } => InputSet::Polytope {
                h_mat: matrix_from_rows(&h_mat, "polytope rows")?,
                h: DVector::from_vec(h),
            },
            InputSetFile::Zonotope { center, generators } => {
                let gens = matrix_from_rows(&generators, "zonotope generators")?;
                let n = center.len();
                if !generators.is_empty() && gens.ncols() != n {
                    return Err(Error::DimensionMismatch {
                        context: "zonotope generators",
                        expected: n,
                        actual: gens.ncols(),
                    });
                }
                InputSet::Zonotope {
                    center: DVector::from_vec(center),
                    generators: if generators.is_empty() { DMatrix::zeros(n, 0) } else { gens.transpose() },
                }
            }
            InputSetFile::Ellipsoid { a, b } => InputSet::Ellipsoid {
                a: matrix_from_rows(&a, "ellipsoid rows")?,
                b: DVector::from_vec(b),
            },
        };
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        let file = match self {
            InputSet::Box { lo, hi } => InputSetFile::Box {
                lo: lo.iter().copied().collect(),
                hi: hi.iter().copied().collect(),
            },
            InputSet::Polytope { h_mat, h } => InputSetFile::Polytope {
                h_mat: matrix_to_rows(h_mat),
                h: h.iter().copied().collect(),
            },
            InputSet::Zonotope { center, generators } => InputSetFile::Zonotope {
                center: center.iter().copied().collect(),
                generators: matrix_to_rows(&generators.transpose()),
            },
            InputSet::Ellipsoid { a, b } => InputSetFile::Ellipsoid {
                a: matrix_to_rows(a),
                b: b.iter().copied().collect(),
            },
        };
        serde_json::to_string_pretty(&file).expect("input set serializes")
    }
}

/// On-disk input set. Zonotope `generators` lists generator vectors, i.e. the
/// columns of `A`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum InputSetFile {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    BoxInf {
        center: Vec<f64>,
        eps: f64,
    },
    Polytope {
        #[serde(rename = "H")]
        h_mat: Vec<Vec<f64>>,
        h: Vec<f64>,
    },
    Zonotope {
        center: Vec<f64>,
        generators: Vec<Vec<f64>>,
    },
    Ellipsoid {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

/// Largest `s ≤ 1` with `H x + s ≤ h` feasible: positive iff the polytope has
/// interior, negative iff it is empty. `None` if the probe fails.
pub(crate) fn polytope_depth(h_mat: &DMatrix<f64>, h: &DVector<f64>) -> Option<f64> {
    let (m, n) = h_mat.shape();
    let mut g = DMatrix::zeros(m + 1, n + 1);
    g.view_mut((0, 0), (m, n)).copy_from(h_mat);
    for i in 0..m {
        g[(i, n)] = 1.0;
    }
    g[(m, n)] = 1.0;
    let mut rhs: Vec<f64> = h.iter().copied().collect();
    rhs.push(1.0);
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let r = solve_lp(&Lp { c, g, h: rhs }, 1e-10);
    (r.status == LpStatus::Optimal).then_some(r.value)
}

/// `P(Γ) = [[−2Γ, Γ(lo+hi)], [(lo+hi)ᵀΓ, −2 loᵀΓ hi]]` with diagonal `Γ ≥ 0`,
/// whose form is `2 Σ γ_i (x_i − lo_i)(hi_i − x_i)`. Zero-width coordinates also
/// get a free multiplier `e{i}` on the equality `x_i = lo_i`.
pub fn hyperrect_qc(lo: &[f64], hi: &[f64]) -> Result<ParamMatrix> {
    dim_check("box bounds", lo.len(), hi.len())?;
    if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
        return Err(Error::InvalidInput(format!("box bounds reversed in coordinate {i}")));
    }
    let n = lo.len();
    let mut pm = ParamMatrix::zeros(n + 1);
    for i in 0..n {
        let basis = SymSparse::from_triplets(
            n + 1,
            [(i, i, -2.0), (i, n, lo[i] + hi[i]), (n, n, -2.0 * lo[i] * hi[i])],
        );
        pm.add_var(VarId::new(format!("g{i}")), Cone::Nonnegative, basis)?;
        if lo[i] == hi[i] {
            // Fixed coordinate: 2 e_i (x_i − lo_i) = 0 for any sign of e_i.
            let eq = SymSparse::from_triplets(n + 1, [(i, n, 1.0), (n, n, -2.0 * lo[i])]);
            pm.add_var(VarId::new(format!("e{i}")), Cone::Free, eq)?;
        }
    }
    Ok(pm)
}

/// Facet-pair family: variable `p{i}_{j}` multiplies
/// `2 (H_iᵀx − h_i)(H_jᵀx − h_j)`.
pub fn polytope_qc(h_mat: &DMatrix<f64>, h: &DVector<f64>, prune: bool) -> Result<ParamMatrix> {
    let (m, n) = h_mat.shape();
    dim_check("polytope offsets", m, h.len())?;
    if polytope_depth(h_mat, h).is_none_or(|s| s < -PROBE_TOL) {
        return Err(Error::EmptySet);
    }
    let mut pm = ParamMatrix::zeros(n + 1);
    for i in 0..m {
        for j in (i + 1)..m {
            if prune && !pair_touches(h_mat, h, i, j) {
                continue;
            }
            let ai = facet_vector(h_mat, h, i);
            let aj = facet_vector(h_mat, h, j);
            let mut trip = Vec::new();
            for p in 0..=n {
                for q in 0..=n {
                    // Triplets (p, q) and (q, p) accumulate into one entry.
                    let v = if p == q { 2.0 } else { 1.0 } * ai[p] * aj[q];
                    if v != 0.0 {
                        trip.push((p, q, v));
                    }
                }
            }
            pm.add_var(VarId::new(format!("p{i}_{j}")), Cone::Nonnegative, SymSparse::from_triplets(n + 1, trip))?;
        }
    }
    Ok(pm)
}

fn facet_vector(h_mat: &DMatrix<f64>, h: &DVector<f64>, i: usize) -> Vec<f64> {
    h_mat.row(i).iter().copied().chain(std::iter::once(-h[i])).collect()
}

/// Whether facets `i` and `j` can be tight simultaneously inside the
/// polytope: `max (H_i + H_j)ᵀx` over the polytope reaches `h_i + h_j`.
fn pair_touches(h_mat: &DMatrix<f64>, h: &DVector<f64>, i: usize, j: usize) -> bool {
    let c: Vec<f64> = (0..h_mat.ncols()).map(|k| h_mat[(i, k)] + h_mat[(j, k)]).collect();
    let r = solve_lp(
        &Lp {
            c,
            g: h_mat.clone(),
            h: h.iter().copied().collect(),
        },
        1e-11,
    );
    if r.status != LpStatus::Optimal {
        warn!("pruning probe for facet pair ({i}, {j}) failed; keeping the pair");
        return true;
    }
    let target = h[i] + h[j];
    r.value >= target - PROBE_TOL * (1.0 + target.abs())
}

/// Free symmetric `P` (variables `z{i}_{j}`, `i ≤ j`) with the coupling
/// `[[A, x_c], [0, 1]]ᵀ P [[A, x_c], [0, 1]] + [[2Γ, −Γ1], [−1ᵀΓ, 0]] ⪰ 0`,
/// `Γ = diag(zg{k}) ≥ 0`.
pub fn zonotope_qc(center: &DVector<f64>, generators: &DMatrix<f64>) -> Result<InputQc> {
    let (n, m) = generators.shape();
    dim_check("zonotope generators", center.len(), n)?;
    let mut family = ParamMatrix::zeros(n + 1);
    for i in 0..=n {
        for j in i..=n {
            family.add_var(
                VarId::new(format!("z{i}_{j}")),
                Cone::Free,
                SymSparse::from_triplets(n + 1, [(i, j, 1.0)]),
            )?;
        }
    }
    let mut t = SparseRows::new(n + 1, m + 1);
    for i in 0..n {
        for j in 0..m {
            t.push(i, j, generators[(i, j)]);
        }
        t.push(i, m, center[i]);
    }
    t.push(n, m, 1.0);
    let mut side = family.congruence(&t);
    for k in 0..m {
        side.add_var(
            VarId::new(format!("zg{k}")),
            Cone::Nonnegative,
            SymSparse::from_triplets(m + 1, [(k, k, 2.0), (k, m, -1.0)]),
        )?;
    }
    Ok(InputQc {
        family,
        side: Some(SideConstraint {
            matrix: side,
            sense: Sense::Psd,
        }),
    })
}

/// `μ [[−AᵀA, −Aᵀb], [−bᵀA, 1 − bᵀb]]`, `μ ≥ 0`; form `μ(1 − ‖Ax + b‖²)`.
pub fn ellipsoid_qc(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<ParamMatrix> {
    let n = b.len();
    dim_check("ellipsoid matrix", n, a.nrows())?;
    dim_check("ellipsoid matrix", n, a.ncols())?;
    SymSparse::from_dense(a)?;
    let mut m = DMatrix::zeros(n + 1, n + 1);
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    m.view_mut((0, 0), (n, n)).copy_from(&(-ata));
    for i in 0..n {
        m[(i, n)] = -atb[i];
        m[(n, i)] = -atb[i];
    }
    m[(n, n)] = 1.0 - b.dot(b);
    let mut pm = ParamMatrix::zeros(n + 1);
    pm.add_var(VarId::new("mu"), Cone::Nonnegative, SymSparse::from_dense(&m)?)?;
    Ok(pm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{quad_form, Assignment};

    fn all_ones(pm: &ParamMatrix) -> Assignment {
        pm.cones().keys().map(|k| (k.clone(), 1.0)).collect()
    }

    fn form(pm: &ParamMatrix, a: &Assignment, x: &[f64]) -> f64 {
        let v: Vec<f64> = x.iter().copied().chain([1.0]).collect();
        quad_form(&pm.evaluate(a).unwrap(), &v).unwrap()
    }

    #[test]
    fn box_examples() {
        let pm = hyperrect_qc(&[0.9, 0.9], &[1.1, 1.1]).unwrap();
        let a = all_ones(&pm);
        assert!((form(&pm, &a, &[1.0, 1.0]) - 0.04).abs() < 1e-12);
        assert!(form(&pm, &a, &[1.1, 1.1]).abs() < 1e-12);
        assert!((form(&pm, &a, &[1.2, 1.0]) + 0.04).abs() < 1e-12);
        assert!(hyperrect_qc(&[1.0], &[0.0]).is_err());
    }

    fn unit_square() -> (DMatrix<f64>, DVector<f64>) {
        // x ≥ 0, y ≥ 0, x ≤ 1, y ≤ 1
        (
            DMatrix::from_row_slice(4, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]),
        )
    }

    #[test]
    fn polytope_pair_form() {
        let (hm, h) = unit_square();
        let pm = polytope_qc(&hm, &h, false).unwrap();
        assert_eq!(pm.num_vars(), 6);
        let mut a: Assignment = pm.cones().keys().map(|k| (k.clone(), 0.0)).collect();
        a.insert("p0_1".into(), 1.0);
        assert!((form(&pm, &a, &[0.5, 0.5]) - 0.5).abs() < 1e-12);
        assert!(form(&pm, &a, &[0.0, 0.7]).abs() < 1e-12);
        // Opposite facets share a coordinate: 2 (−x)(x − 1).
        a.insert("p0_1".into(), 0.0);
        a.insert("p0_2".into(), 1.0);
        assert!((form(&pm, &a, &[0.5, 0.3]) - 0.5).abs() < 1e-12);
        assert!((form(&pm, &a, &[0.2, 0.9]) - 0.32).abs() < 1e-12);
    }

    #[test]
    fn polytope_pruning() {
        // Opposite facets of the square never meet.
        let (hm, h) = unit_square();
        let pm = polytope_qc(&hm, &h, true).unwrap();
        assert_eq!(pm.num_vars(), 4);
        assert!(pm.cone(&"p0_2".into()).is_none());
        let tri_h = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]);
        let tri = polytope_qc(&tri_h, &DVector::from_vec(vec![0.0, 0.0, 1.0]), true).unwrap();
        assert_eq!(tri.num_vars(), 3);
    }

    #[test]
    fn empty_polytope_rejected() {
        let hm = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let h = DVector::from_vec(vec![0.0, -1.0]);
        assert!(matches!(polytope_qc(&hm, &h, false), Err(Error::EmptySet)));
    }

    #[test]
    fn zonotope_unit_cube() {
        let qc = zonotope_qc(&DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        let side = qc.side.unwrap();
        // P from the unit-box family with Γ = I, and the same Γ in the coupling.
        let boxp = hyperrect_qc(&[0.0, 0.0], &[1.0, 1.0]).unwrap().evaluate(&[("g0".into(), 1.0), ("g1".into(), 1.0)].into_iter().collect()).unwrap();
        let mut a = Assignment::new();
        for i in 0..3 {
            for j in i..3 {
                a.insert(VarId::new(format!("z{i}_{j}")), boxp[(i, j)]);
            }
        }
        a.insert("zg0".into(), 1.0);
        a.insert("zg1".into(), 1.0);
        let s = side.matrix.evaluate(&a).unwrap();
        let min = nalgebra::SymmetricEigen::new(s).eigenvalues.min();
        assert!(min >= -1e-12);
        let zero: Assignment = a.keys().map(|k| (k.clone(), 0.0)).collect();
        assert_eq!(side.matrix.evaluate(&zero).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn ellipsoid_examples() {
        let pm = ellipsoid_qc(&DMatrix::identity(2, 2), &DVector::zeros(2)).unwrap();
        let a = all_ones(&pm);
        assert_eq!(form(&pm, &a, &[0.0, 0.0]), 1.0);
        assert!(form(&pm, &a, &[0.6, 0.8]).abs() < 1e-12);
        assert_eq!(form(&pm, &a, &[2.0, 0.0]), -3.0);
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(ellipsoid_qc(&asym, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn file_formats() {
        let s = InputSet::from_json(r#"{"type":"box_inf","center":[1,1],"eps":0.1}"#).unwrap();
        assert_eq!(s, InputSet::boxed(vec![0.9, 0.9], vec![1.1, 1.1]).unwrap());
        let z = InputSet::from_json(r#"{"type":"zonotope","center":[0,0],"generators":[[1,0],[1,1],[0,2]]}"#).unwrap();
        match &z {
            InputSet::Zonotope { generators, .. } => assert_eq!(generators.shape(), (2, 3)),
            _ => unreachable!(),
        }
        assert_eq!(InputSet::from_json(&z.to_json()).unwrap(), z);
        assert!(InputSet::from_json(r#"{"type":"box","lo":[1],"hi":[0]}"#).is_err());
        assert!(InputSet::from_json(r#"{"type":"sphere"}"#).is_err());
    }

    #[test]
    fn zonotope_membership() {
        let z = InputSet::Zonotope {
            center: DVector::zeros(2),
            generators: DMatrix::identity(2, 2),
        };
        assert!(z.contains(&[0.5, 0.5], 1e-9));
        assert!(!z.contains(&[1.5, 0.5], 1e-9));
    }
}
