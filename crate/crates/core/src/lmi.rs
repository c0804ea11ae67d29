//! Assembly of the stacked-state LMI from input-set, activation and safety
//! constraint families.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::input_qc::InputQc;
use crate::network::CompactNetwork;
use crate::param::{Cone, ParamMatrix, Sense, SideConstraint, SparseRows, SymSparse, VarId};

#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub matrix: ParamMatrix,
    pub sense: Sense,
}

/// Matrix inequalities affine in named scalar variables, with an optional
/// linear objective to minimize.
#[derive(Debug, Clone, Default)]
pub struct LmiProblem {
    variables: BTreeMap<VarId, Cone>,
    constraints: Vec<LmiConstraint>,
    objective: Option<BTreeMap<VarId, f64>>,
}

impl LmiProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declare(&mut self, var: VarId, cone: Cone) -> Result<()> {
        match self.variables.get(&var) {
            Some(&c) if c != cone => Err(Error::VariableCollision(var)),
            Some(_) => Ok(()),
            None => {
                self.variables.insert(var, cone);
                Ok(())
            }
        }
    }

    /// Adds `matrix ⪯ 0` (or `⪰ 0`), registering its variables. A variable
    /// may appear in several constraints as long as its cone agrees.
    pub fn add_constraint(&mut self, matrix: ParamMatrix, sense: Sense) -> Result<()> {
        for (var, &cone) in matrix.cones() {
            self.declare(var.clone(), cone)?;
        }
        self.constraints.push(LmiConstraint { matrix, sense });
        Ok(())
    }

    pub fn set_objective(&mut self, coeffs: BTreeMap<VarId, f64>) -> Result<()> {
        if let Some(var) = coeffs.keys().find(|v| !self.variables.contains_key(*v)) {
            return Err(Error::UndeclaredVariable(var.clone()));
        }
        self.objective = Some(coeffs);
        Ok(())
    }

    pub fn variables(&self) -> &BTreeMap<VarId, Cone> {
        &self.variables
    }

    pub fn constraints(&self) -> &[LmiConstraint] {
        &self.constraints
    }

    pub fn objective(&self) -> Option<&BTreeMap<VarId, f64>> {
        self.objective.as_ref()
    }
}

/// Safety-specification matrix over `[x; y; 1]`, affine in at most one
/// scalar variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyMatrix(ParamMatrix);

impl SafetyMatrix {
    pub fn new(matrix: ParamMatrix) -> Result<Self> {
        if matrix.num_vars() > 1 {
            return Err(Error::InvalidInput("safety matrix may contain at most one variable".into()));
        }
        Ok(SafetyMatrix(matrix))
    }

    /// Fixed matrix from dense data.
    pub fn constant(s: &DMatrix<f64>) -> Result<Self> {
        Ok(SafetyMatrix(ParamMatrix::constant(SymSparse::from_dense(s)?)))
    }

    pub fn matrix(&self) -> &ParamMatrix {
        &self.0
    }

    pub fn variable(&self) -> Option<&VarId> {
        self.0.cones().keys().next()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn with_prefix(&self, prefix: &str) -> SafetyMatrix {
        SafetyMatrix(self.0.with_prefix(prefix))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Offset {
    Fixed(f64),
    Variable(VarId),
}

/// `[x; y; 1]ᵀ S [x; y; 1] = 2(cᵀy − d)`.
pub fn hyperplane_spec(n_x: usize, c: &[f64], d: Offset) -> SafetyMatrix {
    let n_y = c.len();
    let dim = n_x + n_y + 1;
    let corner = dim - 1;
    let mut constant = SymSparse::from_triplets(dim, c.iter().enumerate().map(|(i, &ci)| (n_x + i, corner, ci)));
    let mut pm = ParamMatrix::zeros(dim);
    match d {
        Offset::Fixed(d) => {
            constant = constant.add(&SymSparse::from_triplets(dim, [(corner, corner, -2.0 * d)]));
        }
        Offset::Variable(var) => {
            pm.add_var(var, Cone::Free, SymSparse::from_triplets(dim, [(corner, corner, -2.0)]))
                .expect("fresh matrix");
        }
    }
    pm.add_constant(&constant).expect("same dimension");
    SafetyMatrix(pm)
}

/// One hyperplane matrix per row of `{y : C y ≤ d}`.
pub fn polytope_spec(n_x: usize, c: &DMatrix<f64>, d: &[f64]) -> Result<Vec<SafetyMatrix>> {
    if c.nrows() != d.len() {
        return Err(Error::DimensionMismatch {
            context: "polytope specification",
            expected: c.nrows(),
            actual: d.len(),
        });
    }
    Ok((0..c.nrows())
        .map(|i| {
            let row: Vec<f64> = c.row(i).iter().copied().collect();
            hyperplane_spec(n_x, &row, Offset::Fixed(d[i]))
        })
        .collect())
}

/// Margin rows `y_i − y_label ≤ 0` for every competing class `i`.
pub fn robustness_spec(n_x: usize, n_y: usize, label: usize) -> Result<Vec<SafetyMatrix>> {
    if label >= n_y {
        return Err(Error::InvalidInput(format!("label {label} out of range for {n_y} outputs")));
    }
    let mut c = DMatrix::zeros(n_y.saturating_sub(1), n_y);
    for (r, i) in (0..n_y).filter(|&i| i != label).enumerate() {
        c[(r, i)] = 1.0;
        c[(r, label)] = -1.0;
    }
    polytope_spec(n_x, &c, &vec![0.0; n_y - 1])
}

/// Rows `2(e_iᵀH(A x + B u) − h_i)` over `[x; u; 1]`, each with its own
/// variable `h_i` named `{prefix}{i}`.
pub fn invariance_spec(
    a_sys: &DMatrix<f64>,
    b_sys: &DMatrix<f64>,
    h: &DMatrix<f64>,
    prefix: &str,
) -> Result<Vec<SafetyMatrix>> {
    let n_x = a_sys.nrows();
    if a_sys.ncols() != n_x || b_sys.nrows() != n_x || h.ncols() != n_x {
        return Err(Error::DimensionMismatch {
            context: "closed-loop system",
            expected: n_x,
            actual: if a_sys.ncols() != n_x {
                a_sys.ncols()
            } else if b_sys.nrows() != n_x {
                b_sys.nrows()
            } else {
                h.ncols()
            },
        });
    }
    let n_u = b_sys.ncols();
    let dim = n_x + n_u + 1;
    let corner = dim - 1;
    let ha = h * a_sys;
    let hb = h * b_sys;
    Ok((0..h.nrows())
        .map(|i| {
            let entries = (0..n_x)
                .map(|j| (j, corner, ha[(i, j)]))
                .chain((0..n_u).map(|j| (n_x + j, corner, hb[(i, j)])));
            let mut pm = ParamMatrix::constant(SymSparse::from_triplets(dim, entries));
            pm.add_var(
                VarId::new(format!("{prefix}{i}")),
                Cone::Free,
                SymSparse::from_triplets(dim, [(corner, corner, -2.0)]),
            )
            .expect("fresh matrix");
            SafetyMatrix(pm)
        })
        .collect())
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Embeds the input family over `[x^0; 1]` into the stacked state
/// `[𝐱; 1]`; side constraints are forwarded unchanged.
pub fn build_min(qc: &InputQc, cnet: &CompactNetwork) -> Result<(ParamMatrix, Vec<SideConstraint>)> {
    check_dim("input constraint", cnet.n0 + 1, qc.family.dim())?;
    let big = cnet.state_dim() + 1;
    let map: Vec<usize> = (0..cnet.n0).chain(std::iter::once(big - 1)).collect();
    Ok((qc.family.embed(big, &map), qc.side.iter().cloned().collect()))
}

/// Congruence of the activation family over `[v; w; 1]` (pre- and
/// post-activations) by `[[A, b], [B, 0], [0, 1]]`.
pub fn build_mmid(q: &ParamMatrix, cnet: &CompactNetwork) -> Result<ParamMatrix> {
    let n = cnet.n();
    check_dim("activation constraint", 2 * n + 1, q.dim())?;
    let big = cnet.state_dim() + 1;
    let mut t = SparseRows::new(2 * n + 1, big);
    for i in 0..n {
        for j in 0..cnet.state_dim() {
            t.push(i, j, cnet.a[(i, j)]);
        }
        t.push(i, big - 1, cnet.bias[i]);
        t.push(n + i, cnet.n0 + i, 1.0);
    }
    t.push(2 * n, big - 1, 1.0);
    Ok(q.congruence(&t))
}

/// Congruence of the safety matrix over `[x; y; 1]` by
/// `[[E⁰, 0], [W^ℓ E^ℓ, b^ℓ], [0, 1]]`.
pub fn build_mout(s: &SafetyMatrix, cnet: &CompactNetwork) -> Result<ParamMatrix> {
    let n_y = cnet.output_dim();
    check_dim("safety matrix", cnet.n0 + n_y + 1, s.dim())?;
    let big = cnet.state_dim() + 1;
    let ell = cnet.hidden.len();
    let off = cnet.offset(ell);
    let mut t = SparseRows::new(cnet.n0 + n_y + 1, big);
    for i in 0..cnet.n0 {
        t.push(i, i, 1.0);
    }
    for i in 0..n_y {
        for j in 0..cnet.hidden[ell - 1] {
            t.push(cnet.n0 + i, off + j, cnet.w_out[(i, j)]);
        }
        t.push(cnet.n0 + i, big - 1, cnet.b_out[i]);
    }
    t.push(cnet.n0 + n_y, big - 1, 1.0);
    Ok(s.matrix().congruence(&t))
}

/// `M_in + M_mid + M_out ⪯ 0` plus side constraints. The three blocks must
/// use disjoint variables; side constraints may reuse input-block variables.
pub fn assemble(
    min: &ParamMatrix,
    mmid: &ParamMatrix,
    mout: &ParamMatrix,
    sides: &[SideConstraint],
    objective: Option<BTreeMap<VarId, f64>>,
) -> Result<LmiProblem> {
    let total = min.sum(mmid)?.sum(mout)?;
    let mut problem = LmiProblem::new();
    problem.add_constraint(total, Sense::Nsd)?;
    for side in sides {
        problem.add_constraint(side.matrix.clone(), side.sense)?;
    }
    if let Some(obj) = objective {
        problem.set_objective(obj)?;
    }
    Ok(problem)
}

/// `[𝐱; 1]` for a stacked state.
pub fn homogenize(x: &DVector<f64>) -> Vec<f64> {
    x.iter().copied().chain(std::iter::once(1.0)).collect()
}
