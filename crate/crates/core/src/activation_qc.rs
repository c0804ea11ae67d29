//! Quadratic-constraint families for activation functions over
//! `[v; w; 1]`, where `v` stacks the pre-activations and `w = φ(v)`.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Activation, SlopeRange};
use crate::param::{Cone, ParamMatrix, SymSparse, VarId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    None,
    #[default]
    Layerwise,
    Full,
}

impl std::str::FromStr for CouplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CouplingMode::None),
            "layerwise" => Ok(CouplingMode::Layerwise),
            "full" => Ok(CouplingMode::Full),
            _ => Err(Error::InvalidInput(format!("unknown coupling mode `{s}`"))),
        }
    }
}

impl CouplingMode {
    /// Neuron pairs `(i, j)`, `i < j`, that receive a cross multiplier.
    /// `layers` lists the neuron count of each hidden layer.
    pub fn pairs(self, layers: &[usize]) -> Vec<(usize, usize)> {
        let n: usize = layers.iter().sum();
        match self {
            CouplingMode::None => Vec::new(),
            CouplingMode::Full => (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect(),
            CouplingMode::Layerwise => {
                let mut out = Vec::new();
                let mut start = 0;
                for &s in layers {
                    for i in start..start + s {
                        for j in (i + 1)..start + s {
                            out.push((i, j));
                        }
                    }
                    start += s;
                }
                out
            }
        }
    }
}

/// Neurons known to be always active, always inactive, or undetermined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronPartition {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
    pub unknown: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronState {
    Active,
    Inactive,
    Unknown,
}

impl NeuronPartition {
    pub fn all_unknown(n: usize) -> Self {
        NeuronPartition {
            unknown: (0..n).collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.active.len() + self.inactive.len() + self.unknown.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-neuron states; fails unless the three sets partition `0..len`.
    pub fn states(&self) -> Result<Vec<NeuronState>> {
        let n = self.len();
        let mut states = vec![None; n];
        for (set, st) in [
            (&self.active, NeuronState::Active),
            (&self.inactive, NeuronState::Inactive),
            (&self.unknown, NeuronState::Unknown),
        ] {
            for &i in set {
                if i >= n || states[i].is_some() {
                    return Err(Error::InvalidInput("neuron partition is not a partition".into()));
                }
                states[i] = Some(st);
            }
        }
        Ok(states.into_iter().map(|s| s.expect("covered")).collect())
    }
}

struct Layout {
    n: usize,
}

impl Layout {
    fn v(&self, i: usize) -> usize {
        i
    }
    fn w(&self, i: usize) -> usize {
        self.n + i
    }
    fn one(&self) -> usize {
        2 * self.n
    }
    fn dim(&self) -> usize {
        2 * self.n + 1
    }
}

/// Entries of the pair matrix `(e_i − e_j)(e_i − e_j)ᵀ` placed in the block
/// with row offset `r` and column offset `c`, scaled by `s`.
fn pair_block(i: usize, j: usize, r: usize, c: usize, s: f64) -> Vec<(usize, usize, f64)> {
    let mut out = vec![(r + i, c + i, s), (r + j, c + j, s), (r + i, c + j, -s)];
    if r == c {
        // Symmetric placement already covers (j, i).
        out
    } else {
        out.push((r + j, c + i, -s));
        out
    }
}

fn pair_basis(lay: &Layout, i: usize, j: usize, range: SlopeRange) -> SymSparse {
    let (a, b) = (range.alpha, range.beta);
    let mut trip = pair_block(i, j, lay.v(0), lay.v(0), -2.0 * a * b);
    trip.extend(pair_block(i, j, lay.v(0), lay.w(0), a + b));
    trip.extend(pair_block(i, j, lay.w(0), lay.w(0), -2.0));
    SymSparse::from_triplets(lay.dim(), trip)
}

/// Cross-neuron chord constraints `λ_ij ≥ 0` for a slope-restricted
/// activation repeated over `n` neurons.
pub fn repeated_qc(n: usize, range: SlopeRange, pairs: &[(usize, usize)]) -> Result<ParamMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("repeated constraint needs at least one neuron".into()));
    }
    let lay = Layout { n };
    let mut pm = ParamMatrix::zeros(lay.dim());
    if pairs.is_empty() {
        warn!("no coupled neuron pairs; repeated constraint is vacuous");
    }
    for &(i, j) in pairs {
        pm.add_var(VarId::new(format!("l{i}_{j}")), Cone::Nonnegative, pair_basis(&lay, i, j, range))?;
    }
    Ok(pm)
}

/// `2 Σ d_i (w_i − lo_i)(hi_i − w_i)` with `d ≥ 0`.
pub fn bounded_qc(lo: &[f64], hi: &[f64]) -> Result<ParamMatrix> {
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch {
            context: "activation bounds",
            expected: lo.len(),
            actual: hi.len(),
        });
    }
    if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
        return Err(Error::InvalidInput(format!("activation bounds reversed for neuron {i}")));
    }
    let lay = Layout { n: lo.len() };
    let mut pm = ParamMatrix::zeros(lay.dim());
    for i in 0..lay.n {
        let basis = SymSparse::from_triplets(
            lay.dim(),
            [
                (lay.w(i), lay.w(i), -2.0),
                (lay.w(i), lay.one(), lo[i] + hi[i]),
                (lay.one(), lay.one(), -2.0 * lo[i] * hi[i]),
            ],
        );
        pm.add_var(VarId::new(format!("d{i}")), Cone::Nonnegative, basis)?;
    }
    Ok(pm)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReluQcOptions {
    /// Restrict the per-neuron multipliers to be nonnegative.
    pub lambda_nonneg: bool,
}

/// Piecewise-linear `y = max(αx, βx)` family over every `(x, y)`.
pub fn relu_global_qc(n: usize, range: SlopeRange, pairs: &[(usize, usize)], opts: ReluQcOptions) -> Result<ParamMatrix> {
    relu_local_qc(&NeuronPartition::all_unknown(n), range, pairs, opts)
}

/// Family valid for inputs consistent with `partition`. Active neurons use
/// the sector `[β, β]`, inactive ones `[α, α]`; multipliers of relations that
/// hold with equality are free.
pub fn relu_local_qc(
    partition: &NeuronPartition,
    range: SlopeRange,
    pairs: &[(usize, usize)],
    opts: ReluQcOptions,
) -> Result<ParamMatrix> {
    let states = partition.states()?;
    let n = states.len();
    if n == 0 {
        return Err(Error::InvalidInput("relu constraint needs at least one neuron".into()));
    }
    let lay = Layout { n };
    let (alpha, beta) = (range.alpha, range.beta);
    let mut pm = ParamMatrix::zeros(lay.dim());
    for (i, &st) in states.iter().enumerate() {
        let ai = if st == NeuronState::Active { beta } else { alpha };
        let bi = if st == NeuronState::Inactive { alpha } else { beta };
        let lam = SymSparse::from_triplets(
            lay.dim(),
            [
                (lay.v(i), lay.v(i), -2.0 * ai * bi),
                (lay.v(i), lay.w(i), ai + bi),
                (lay.w(i), lay.w(i), -2.0),
            ],
        );
        let lam_cone = if opts.lambda_nonneg { Cone::Nonnegative } else { Cone::Free };
        pm.add_var(VarId::new(format!("lam{i}")), lam_cone, lam)?;
        let nu = SymSparse::from_triplets(lay.dim(), [(lay.v(i), lay.one(), -bi), (lay.w(i), lay.one(), 1.0)]);
        let nu_cone = if st == NeuronState::Active { Cone::Free } else { Cone::Nonnegative };
        pm.add_var(VarId::new(format!("nu{i}")), nu_cone, nu)?;
        let eta = SymSparse::from_triplets(lay.dim(), [(lay.v(i), lay.one(), -ai), (lay.w(i), lay.one(), 1.0)]);
        let eta_cone = if st == NeuronState::Inactive { Cone::Free } else { Cone::Nonnegative };
        pm.add_var(VarId::new(format!("eta{i}")), eta_cone, eta)?;
    }
    for &(i, j) in pairs {
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidInput(format!("invalid neuron pair ({i}, {j})")));
        }
        let same = states[i] == states[j] && states[i] != NeuronState::Unknown;
        let cone = if same { Cone::Free } else { Cone::Nonnegative };
        pm.add_var(VarId::new(format!("l{i}_{j}")), cone, pair_basis(&lay, i, j, range))?;
    }
    Ok(pm)
}

/// `−2μ (w − K₁v)ᵀ(w − K₂v) ≥ 0`, `μ ≥ 0`; requires `K₂ − K₁` symmetric
/// positive semidefinite.
pub fn sector_vector_qc(k1: &DMatrix<f64>, k2: &DMatrix<f64>) -> Result<ParamMatrix> {
    let n = k1.nrows();
    if k1.shape() != (n, n) || k2.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "sector matrices",
            expected: n,
            actual: if k1.ncols() != n { k1.ncols() } else { k2.nrows() },
        });
    }
    let diff = k2 - k1;
    let scale = diff.amax().max(1.0);
    if (&diff - diff.transpose()).amax() > 1e-12 * scale
        || nalgebra::SymmetricEigen::new(diff.clone()).eigenvalues.min() < -1e-12 * scale
    {
        return Err(Error::InvalidInput("K2 − K1 must be symmetric positive semidefinite".into()));
    }
    let lay = Layout { n };
    let mut m = DMatrix::zeros(lay.dim(), lay.dim());
    let q11 = -(k1.transpose() * k2 + k2.transpose() * k1);
    let q12 = k1.transpose() + k2.transpose();
    m.view_mut((0, 0), (n, n)).copy_from(&q11);
    m.view_mut((0, n), (n, n)).copy_from(&q12);
    m.view_mut((n, 0), (n, n)).copy_from(&q12.transpose());
    m.view_mut((n, n), (n, n)).fill_with_identity();
    m.view_mut((n, n), (n, n)).scale_mut(-2.0);
    let mut pm = ParamMatrix::zeros(lay.dim());
    pm.add_var(VarId::new("mu"), Cone::Nonnegative, SymSparse::from_dense(&m)?)?;
    Ok(pm)
}

/// Per-neuron sector `α_i (v − 0) ≤ w − c ≤ β_i v` (sign-adjusted), i.e.
/// `(w − c − α_i v)(w − c − β_i v) ≤ 0`, with multipliers `s_i ≥ 0`.
pub fn sector_qc(alpha: &[f64], beta: &[f64], shift: f64) -> Result<ParamMatrix> {
    if alpha.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            context: "sector bounds",
            expected: alpha.len(),
            actual: beta.len(),
        });
    }
    let lay = Layout { n: alpha.len() };
    let c = shift;
    let mut pm = ParamMatrix::zeros(lay.dim());
    for i in 0..lay.n {
        let (a, b) = (alpha[i], beta[i]);
        if !(a.is_finite() && b.is_finite()) || a > b {
            return Err(Error::InvalidInput(format!("sector [{a}, {b}] invalid for neuron {i}")));
        }
        let basis = SymSparse::from_triplets(
            lay.dim(),
            [
                (lay.v(i), lay.v(i), -2.0 * a * b),
                (lay.v(i), lay.w(i), a + b),
                (lay.v(i), lay.one(), -c * (a + b)),
                (lay.w(i), lay.w(i), -2.0),
                (lay.w(i), lay.one(), 2.0 * c),
                (lay.one(), lay.one(), -2.0 * c * c),
            ],
        );
        pm.add_var(VarId::new(format!("s{i}")), Cone::Nonnegative, basis)?;
    }
    Ok(pm)
}

/// `(φ(x) − φ(0)) / x`, continuous at the origin.
fn secant_ratio(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Tanh => {
            if x == 0.0 {
                1.0
            } else {
                x.tanh() / x
            }
        }
        Activation::Sigmoid => {
            // σ(x) − 1/2 = tanh(x/2)/2
            if x == 0.0 {
                0.25
            } else {
                0.5 * (0.5 * x).tanh() / x
            }
        }
        _ => unreachable!("secant ratio only for tanh and sigmoid"),
    }
}

/// Sector bounds of `φ(x) − φ(0)` over each interval `[lo_i, hi_i]`.
///
/// The secant ratio is even and decreasing in `|x|` for tanh and the
/// centered sigmoid, so on a same-sign interval it ranges between its values
/// at the endpoints; an interval straddling zero also reaches `φ'(0)`.
pub fn local_sector(act: Activation, lo: &[f64], hi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !matches!(act, Activation::Tanh | Activation::Sigmoid) {
        return Err(Error::InvalidInput(format!("local sector bounds need tanh or sigmoid, got {act}")));
    }
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch {
            context: "sector interval",
            expected: lo.len(),
            actual: hi.len(),
        });
    }
    let mut alpha = Vec::with_capacity(lo.len());
    let mut beta = Vec::with_capacity(lo.len());
    for i in 0..lo.len() {
        let (l, h) = (lo[i], hi[i]);
        if !(l.is_finite() && h.is_finite()) || l > h {
            return Err(Error::InvalidInput(format!("interval [{l}, {h}] invalid for neuron {i}")));
        }
        let (rl, rh) = (secant_ratio(act, l), secant_ratio(act, h));
        if l < 0.0 && h > 0.0 {
            alpha.push(rl.min(rh));
            beta.push(act.slope_at_zero());
        } else {
            alpha.push(rl.min(rh));
            beta.push(rl.max(rh));
        }
    }
    Ok((alpha, beta))
}
