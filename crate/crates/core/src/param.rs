//! Affine families of symmetric matrices over scalar decision variables.
//!
//! Every quadratic-constraint family and every assembled LMI is a
//! [`ParamMatrix`]: a constant symmetric matrix plus a list of symmetric basis
//! matrices, one per named scalar variable. Variables carry a cone (free or
//! nonnegative) so that multiplier sign restrictions travel with the family.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest asymmetry tolerated when symmetrizing dense input.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Name of a scalar decision variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(String);

impl VarId {
    pub fn new(name: impl Into<String>) -> Self {
        VarId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn prefixed(&self, prefix: &str) -> VarId {
        VarId(format!("{prefix}{}", self.0))
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VarId {
    fn from(s: &str) -> Self {
        VarId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    Free,
    Nonnegative,
}

pub type Assignment = BTreeMap<VarId, f64>;

/// Sparse symmetric matrix holding only the upper triangle (`row <= col`).
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    pub fn zeros(dim: usize) -> Self {
        SymSparse {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        SymSparse {
            dim,
            entries: (0..dim).map(|i| (i, i, 1.0)).collect(),
        }
    }

    /// Builds from a dense matrix, symmetrizing `(M + Mᵀ)/2`. Fails if the
    /// correction exceeds [`SYMMETRY_TOL`] relative to the largest entry.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                context: "symmetric matrix",
                expected: m.nrows(),
                actual: m.ncols(),
            });
        }
        let n = m.nrows();
        let scale = m.amax().max(1.0);
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::NonFinite("symmetric matrix"));
                }
                let skew = 0.5 * (a - b).abs();
                if skew > SYMMETRY_TOL * scale {
                    return Err(Error::Asymmetric(skew));
                }
                let v = 0.5 * (a + b);
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Ok(SymSparse { dim: n, entries })
    }

    /// Builds from `(row, col, value)` triplets describing symmetric
    /// positions; `(i, j)` and `(j, i)` refer to the same entry and repeated
    /// triplets accumulate.
    pub fn from_triplets(dim: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in triplets {
            assert!(i < dim && j < dim, "triplet ({i},{j}) outside dimension {dim}");
            let key = if i <= j { (i, j) } else { (j, i) };
            *map.entry(key).or_insert(0.0) += v;
        }
        SymSparse {
            dim,
            entries: map
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((i, j), v)| (i, j, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Upper-triangular entries, sorted by `(row, col)`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.entries
            .binary_search_by_key(&key, |&(r, c, _)| (r, c))
            .map(|k| self.entries[k].2)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.add_to_dense(&mut m, 1.0);
        m
    }

    pub fn add_to_dense(&self, m: &mut DMatrix<f64>, scale: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += scale * v;
            if i != j {
                m[(j, i)] += scale * v;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> SymSparse {
        if s == 0.0 {
            return SymSparse::zeros(self.dim);
        }
        SymSparse {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, v)| (i, j, s * v)).collect(),
        }
    }

    pub fn add(&self, other: &SymSparse) -> SymSparse {
        assert_eq!(self.dim, other.dim, "adding symmetric matrices of different size");
        SymSparse::from_triplets(
            self.dim,
            self.entries.iter().chain(other.entries.iter()).copied(),
        )
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.dim);
        self.entries
            .iter()
            .map(|&(i, j, m)| if i == j { m * v[i] * v[i] } else { 2.0 * m * v[i] * v[j] })
            .sum()
    }

    /// Congruence `Tᵀ M T` where `t` maps the new coordinates into the old
    /// ones (`t.nrows() == self.dim()`).
    pub fn congruence(&self, t: &SparseRows) -> SymSparse {
        assert_eq!(t.nrows(), self.dim, "congruence row count");
        let n = t.ncols();
        let mut acc = DMatrix::<f64>::zeros(n, n);
        let mut mag = DMatrix::<f64>::zeros(n, n);
        for &(p, q, v) in &self.entries {
            let rp = t.row(p);
            let rq = t.row(q);
            for &(a, ta) in rp {
                for &(b, tb) in rq {
                    let x = v * ta * tb;
                    acc[(a, b)] += x;
                    mag[(a, b)] += x.abs();
                    if p != q {
                        acc[(b, a)] += x;
                        mag[(b, a)] += x.abs();
                    }
                }
            }
        }
        let mut entries = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                let v = 0.5 * (acc[(i, j)] + acc[(j, i)]);
                // Entries that cancel up to rounding are exact zeros.
                if v.abs() > 1e-13 * (mag[(i, j)] + mag[(j, i)]) {
                    entries.push((i, j, v));
                }
            }
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        SymSparse { dim: n, entries }
    }

    /// Re-indexes into a larger matrix: entry `(i, j)` moves to
    /// `(map[i], map[j])`.
    pub fn embed(&self, new_dim: usize, map: &[usize]) -> SymSparse {
        assert_eq!(map.len(), self.dim);
        SymSparse::from_triplets(
            new_dim,
            self.entries.iter().map(|&(i, j, v)| (map[i], map[j], v)),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, &(_, _, v)| m.max(v.abs()))
    }
}

/// Row-sparse rectangular matrix used for congruence transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    ncols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseRows {
            ncols,
            rows: vec![Vec::new(); nrows],
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = SparseRows::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.rows[i].push((j, m[(i, j)]));
                }
            }
        }
        t
    }

    pub fn push(&mut self, row: usize, col: usize, v: f64) {
        assert!(col < self.ncols);
        if v != 0.0 {
            self.rows[row].push((col, v));
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows.len(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] += v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub var: VarId,
    pub basis: SymSparse,
}

/// `M(θ) = constant + Σ θ_j · basis_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix {
    dim: usize,
    constant: SymSparse,
    terms: Vec<Term>,
    cones: BTreeMap<VarId, Cone>,
}

impl ParamMatrix {
    pub fn zeros(dim: usize) -> Self {
        ParamMatrix {
            dim,
            constant: SymSparse::zeros(dim),
            terms: Vec::new(),
            cones: BTreeMap::new(),
        }
    }

    pub fn constant(m: SymSparse) -> Self {
        ParamMatrix {
            dim: m.dim(),
            constant: m,
            terms: Vec::new(),
            cones: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_part(&self) -> &SymSparse {
        &self.constant
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn cones(&self) -> &BTreeMap<VarId, Cone> {
        &self.cones
    }

    pub fn cone(&self, var: &VarId) -> Option<Cone> {
        self.cones.get(var).copied()
    }

    pub fn num_vars(&self) -> usize {
        self.cones.len()
    }

    pub fn basis(&self, var: &VarId) -> Option<&SymSparse> {
        self.terms.iter().find(|t| &t.var == var).map(|t| &t.basis)
    }

    /// Declares a new variable with its basis matrix.
    pub fn add_var(&mut self, var: VarId, cone: Cone, basis: SymSparse) -> Result<()> {
        self.check_dim(basis.dim())?;
        if self.cones.contains_key(&var) {
            return Err(Error::VariableCollision(var));
        }
        self.cones.insert(var.clone(), cone);
        self.terms.push(Term { var, basis });
        Ok(())
    }

    /// Declares a variable that appears in this family only through
    /// other matrices (its basis here is zero).
    pub fn declare_var(&mut self, var: VarId, cone: Cone) -> Result<()> {
        self.add_var(var, cone, SymSparse::zeros(self.dim))
    }

    pub fn add_constant(&mut self, m: &SymSparse) -> Result<()> {
        self.check_dim(m.dim())?;
        self.constant = self.constant.add(m);
        Ok(())
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::DimensionMismatch {
                context: "parameterized matrix",
                expected: self.dim,
                actual: d,
            });
        }
        Ok(())
    }

    /// Sum of two families with disjoint variable sets.
    pub fn sum(&self, other: &ParamMatrix) -> Result<ParamMatrix> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        out.constant = out.constant.add(&other.constant);
        for t in &other.terms {
            out.add_var(t.var.clone(), other.cones[&t.var], t.basis.clone())?;
        }
        Ok(out)
    }

    /// Sum where shared variables must agree on their cone; their bases add.
    pub fn merge(&self, other: &ParamMatrix) -> Result<ParamMatrix> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        out.constant = out.constant.add(&other.constant);
        for t in &other.terms {
            let cone = other.cones[&t.var];
            match out.cones.get(&t.var) {
                Some(&c) if c != cone => return Err(Error::VariableCollision(t.var.clone())),
                Some(_) => {
                    let term = out.terms.iter_mut().find(|x| x.var == t.var).expect("term for declared var");
                    term.basis = term.basis.add(&t.basis);
                }
                None => out.add_var(t.var.clone(), cone, t.basis.clone())?,
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> ParamMatrix {
        ParamMatrix {
            dim: self.dim,
            constant: self.constant.scaled(s),
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    var: t.var.clone(),
                    basis: t.basis.scaled(s),
                })
                .collect(),
            cones: self.cones.clone(),
        }
    }

    pub fn congruence(&self, t: &SparseRows) -> ParamMatrix {
        ParamMatrix {
            dim: t.ncols(),
            constant: self.constant.congruence(t),
            terms: self
                .terms
                .iter()
                .map(|term| Term {
                    var: term.var.clone(),
                    basis: term.basis.congruence(t),
                })
                .collect(),
            cones: self.cones.clone(),
        }
    }

    pub fn embed(&self, new_dim: usize, map: &[usize]) -> ParamMatrix {
        ParamMatrix {
            dim: new_dim,
            constant: self.constant.embed(new_dim, map),
            terms: self
                .terms
                .iter()
                .map(|term| Term {
                    var: term.var.clone(),
                    basis: term.basis.embed(new_dim, map),
                })
                .collect(),
            cones: self.cones.clone(),
        }
    }

    pub fn with_prefix(&self, prefix: &str) -> ParamMatrix {
        ParamMatrix {
            dim: self.dim,
            constant: self.constant.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    var: t.var.prefixed(prefix),
                    basis: t.basis.clone(),
                })
                .collect(),
            cones: self.cones.iter().map(|(k, &c)| (k.prefixed(prefix), c)).collect(),
        }
    }

    /// `constant + Σ θ_j basis_j`, checking coverage and cones.
    pub fn evaluate(&self, assignment: &Assignment) -> Result<DMatrix<f64>> {
        let mut m = self.constant.to_dense();
        for t in &self.terms {
            let v = *assignment
                .get(&t.var)
                .ok_or_else(|| Error::MissingVariable(t.var.clone()))?;
            if self.cones[&t.var] == Cone::Nonnegative && v < 0.0 {
                return Err(Error::ConeViolation(t.var.clone(), v));
            }
            t.basis.add_to_dense(&mut m, v);
        }
        Ok(m)
    }

    /// Like [`evaluate`](Self::evaluate) without the cone check.
    pub fn evaluate_unchecked(&self, assignment: &Assignment) -> Result<DMatrix<f64>> {
        let mut m = self.constant.to_dense();
        for t in &self.terms {
            let v = *assignment
                .get(&t.var)
                .ok_or_else(|| Error::MissingVariable(t.var.clone()))?;
            t.basis.add_to_dense(&mut m, v);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// Negative semidefinite.
    #[serde(rename = "nsd")]
    Nsd,
    /// Positive semidefinite.
    #[serde(rename = "psd")]
    Psd,
}

/// Auxiliary LMI that couples variables of a family (zonotope input sets).
#[derive(Debug, Clone, PartialEq)]
pub struct SideConstraint {
    pub matrix: ParamMatrix,
    pub sense: Sense,
}

/// `vᵀ M v` for a dense symmetric matrix.
pub fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> Result<f64> {
    if m.nrows() != v.len() || m.ncols() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "quadratic form",
            expected: m.nrows(),
            actual: v.len(),
        });
    }
    let v = DVector::from_column_slice(v);
    Ok(v.dot(&(m * &v)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_term(cone: Cone) -> ParamMatrix {
        let mut pm = ParamMatrix::zeros(2);
        pm.add_var("theta".into(), cone, SymSparse::identity(2)).unwrap();
        pm
    }

    #[test]
    fn evaluate_single_term() {
        let pm = single_term(Cone::Nonnegative);
        let a: Assignment = [("theta".into(), 3.0)].into_iter().collect();
        assert_eq!(pm.evaluate(&a).unwrap(), DMatrix::identity(2, 2) * 3.0);
    }

    #[test]
    fn evaluate_zero_assignment_gives_constant() {
        let mut pm = single_term(Cone::Free);
        pm.add_constant(&SymSparse::from_triplets(2, [(0, 1, 2.0)])).unwrap();
        let a: Assignment = [("theta".into(), 0.0)].into_iter().collect();
        assert_eq!(pm.evaluate(&a).unwrap(), pm.constant_part().to_dense());
    }

    #[test]
    fn evaluate_rejects_cone_violation_and_missing() {
        let pm = single_term(Cone::Nonnegative);
        let a: Assignment = [("theta".into(), -1.0)].into_iter().collect();
        assert!(matches!(pm.evaluate(&a), Err(Error::ConeViolation(..))));
        assert!(matches!(pm.evaluate(&Assignment::new()), Err(Error::MissingVariable(_))));
    }

    #[test]
    fn quad_form_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(quad_form(&eye, &[1.0, 2.0, 2.0]).unwrap(), 9.0);
        assert_eq!(quad_form(&DMatrix::zeros(3, 3), &[1.0, 2.0, 2.0]).unwrap(), 0.0);
        let sig = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(quad_form(&sig, &[1.0, 1.0]).unwrap(), 0.0);
        assert!(quad_form(&eye, &[1.0]).is_err());
    }

    #[test]
    fn from_dense_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.5, 1.0]);
        assert!(matches!(SymSparse::from_dense(&m), Err(Error::Asymmetric(_))));
        let tiny = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0 + 1e-14, 1.0]);
        assert!(SymSparse::from_dense(&tiny).is_ok());
    }

    #[test]
    fn congruence_matches_dense_product() {
        let m = SymSparse::from_triplets(3, [(0, 0, 1.0), (0, 2, -2.0), (1, 1, 3.0), (2, 2, 0.5)]);
        let t = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, -1.0, 3.0, 0.5]);
        let got = m.congruence(&SparseRows::from_dense(&t)).to_dense();
        let want = t.transpose() * m.to_dense() * &t;
        assert!((got - want).amax() < 1e-12);
    }

    #[test]
    fn sum_rejects_collision_merge_adds() {
        let a = single_term(Cone::Free);
        assert!(matches!(a.sum(&a), Err(Error::VariableCollision(_))));
        let merged = a.merge(&a).unwrap();
        assert_eq!(merged.basis(&"theta".into()).unwrap().to_dense(), DMatrix::identity(2, 2) * 2.0);
        let b = single_term(Cone::Nonnegative);
        assert!(a.merge(&b).is_err());
    }
}
