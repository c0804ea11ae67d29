//! End-to-end certification drivers.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation_qc::{
    bounded_qc, local_sector, relu_local_qc, repeated_qc, sector_qc, CouplingMode, NeuronPartition, ReluQcOptions,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::input_qc::{InputSet, InputQcOptions, PROBE_TOL};
use crate::lmi::{assemble, build_min, build_mmid, build_mout, hyperplane_spec, invariance_spec, robustness_spec};
use crate::lmi::{LmiProblem, Offset, SafetyMatrix};
use crate::network::{Activation, CompactNetwork, NeuralNetwork};
use crate::param::{Assignment, ParamMatrix, SideConstraint, SparseRows, VarId};
use crate::presolve::{bounding_box, interval_propagate, NeuronBounds};
use crate::sdp::{check_certificate, solve, solve_lp, Lp, LpStatus, SolveStatus, SolverOptions, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub coupling: CouplingMode,
    /// Use presolve-dependent activation constraints (neuron partition,
    /// interval sectors) instead of the global ones.
    pub local_qc: bool,
    /// Add interval bounds on the post-activations.
    pub bounded_qc: bool,
    pub lambda_nonneg: bool,
    pub input: InputQcOptions,
    pub solver: SolverOptions,
    /// Eigenvalue tolerance of the certificate check, relative to `‖M‖₁`.
    pub cert_tol: f64,
    pub exec: Exec,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            coupling: CouplingMode::Layerwise,
            local_qc: true,
            bounded_qc: true,
            lambda_nonneg: false,
            input: InputQcOptions::default(),
            solver: SolverOptions::default(),
            cert_tol: 1e-6,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Unknown,
}

/// Outcome of one SDP (one specification row or one direction).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowResult {
    pub solve_status: SolveStatus,
    pub verdict: Verdict,
    /// Certified upper bound, after accounting for the residual eigenvalue.
    pub bound: Option<f64>,
    /// Objective value returned by the solver.
    pub raw_bound: Option<f64>,
    /// Largest eigenvalue of the main matrix inequality.
    pub residual: f64,
    pub certificate: Option<Assignment>,
    pub iterations: usize,
    pub time_s: f64,
    pub message: Option<String>,
}

impl RowResult {
    fn failed(message: String) -> Self {
        RowResult {
            solve_status: SolveStatus::Failed,
            verdict: Verdict::Rejected,
            bound: None,
            raw_bound: None,
            residual: f64::INFINITY,
            certificate: None,
            iterations: 0,
            time_s: 0.0,
            message: Some(message),
        }
    }

    pub fn certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationResult {
    pub status: Status,
    /// Per-row bounds (`+∞`, written as `null`, where none was certified).
    pub bounds: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rows: Vec<RowResult>,
    pub options: VerifyOptions,
    pub time_s: f64,
}

impl VerificationResult {
    fn from_rows(rows: Vec<RowResult>, options: VerifyOptions, start: Instant) -> Self {
        let status = if rows.iter().all(RowResult::certified) {
            Status::Certified
        } else {
            Status::Unknown
        };
        VerificationResult {
            status,
            bounds: rows.iter().map(|r| r.bound.unwrap_or(f64::INFINITY)).collect(),
            residuals: rows.iter().map(|r| r.residual).collect(),
            rows,
            options,
            time_s: start.elapsed().as_secs_f64(),
        }
    }

    pub fn is_certified(&self) -> bool {
        self.status == Status::Certified
    }

    /// Every row's multipliers, each name prefixed with `r{k}/`.
    pub fn certificate(&self) -> Assignment {
        let mut out = Assignment::new();
        for (k, row) in self.rows.iter().enumerate() {
            for (v, &x) in row.certificate.iter().flatten() {
                out.insert(v.prefixed(&format!("r{k}/")), x);
            }
        }
        out
    }
}

/// Activation constraint family over `[v; w; 1]` for the whole network.
pub fn activation_family(cnet: &CompactNetwork, bounds: &NeuronBounds, opts: &VerifyOptions) -> Result<ParamMatrix> {
    let n = cnet.n();
    let act = cnet.activation;
    let pairs = opts.coupling.pairs(&cnet.hidden);
    let mut family = match act.relu_like() {
        Some(range) => {
            let partition = if opts.local_qc {
                bounds.partition.clone()
            } else {
                NeuronPartition::all_unknown(n)
            };
            let relu_opts = ReluQcOptions {
                lambda_nonneg: opts.lambda_nonneg,
            };
            relu_local_qc(&partition, range, &pairs, relu_opts)?.with_prefix("relu.")
        }
        None => {
            let range = act.slope_range();
            let (alpha, beta) = match act {
                Activation::Tanh | Activation::Sigmoid if opts.local_qc => {
                    local_sector(act, &bounds.pre_lo(), &bounds.pre_hi())?
                }
                _ => (vec![range.alpha; n], vec![range.beta; n]),
            };
            let mut fam = sector_qc(&alpha, &beta, act.offset())?.with_prefix("sec.");
            if !pairs.is_empty() {
                fam = fam.sum(&repeated_qc(n, range, &pairs)?.with_prefix("rep."))?;
            }
            fam
        }
    };
    if opts.bounded_qc {
        family = family.sum(&bounded_qc(&bounds.post_lo(), &bounds.post_hi())?.with_prefix("bnd."))?;
    }
    Ok(family)
}

/// Parts shared by every row of one (network, input set) instance.
struct Prepared {
    cnet: CompactNetwork,
    min: ParamMatrix,
    mmid: ParamMatrix,
    sides: Vec<SideConstraint>,
    /// Bound on `‖[𝐱; 1]‖²` over the input set.
    norm_sq: f64,
    /// Parametrization of the stacked states compatible with the neurons
    /// whose phase is fixed; the main inequality only has to hold there.
    restriction: Option<SparseRows>,
}

impl Prepared {
    fn restrict(&self, m: ParamMatrix) -> ParamMatrix {
        match &self.restriction {
            Some(t) => m.congruence(t),
            None => m,
        }
    }
}

/// `[𝐱; 1] = T [𝐳; 1]` where `𝐳` keeps the input and the undetermined
/// neurons, and each active (inactive) neuron is replaced by its slope `β`
/// (`α`) times its affine pre-activation.
fn phase_restriction(cnet: &CompactNetwork, partition: &NeuronPartition) -> Option<SparseRows> {
    let range = cnet.activation.relu_like()?;
    if partition.active.is_empty() && partition.inactive.is_empty() {
        return None;
    }
    let big = cnet.state_dim();
    let mut slope: Vec<Option<f64>> = vec![None; cnet.n()];
    for &i in &partition.active {
        slope[i] = Some(range.beta);
    }
    for &i in &partition.inactive {
        slope[i] = Some(range.alpha);
    }
    let kept: Vec<usize> = (0..big).filter(|&c| c < cnet.n0 || slope[c - cnet.n0].is_none()).collect();
    let r = kept.len();
    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(big);
    let mut next = 0;
    for c in 0..big {
        let mut row = DVector::zeros(r + 1);
        match (c >= cnet.n0).then(|| slope[c - cnet.n0]).flatten() {
            Some(s) => {
                let i = c - cnet.n0;
                // Pre-activations only read earlier coordinates.
                for (c2, prev) in rows.iter().enumerate() {
                    let a = cnet.a[(i, c2)];
                    if a != 0.0 {
                        row.axpy(s * a, prev, 1.0);
                    }
                }
                row[r] += s * cnet.bias[i];
            }
            None => {
                row[next] = 1.0;
                next += 1;
            }
        }
        rows.push(row);
    }
    let mut t = SparseRows::new(big + 1, r + 1);
    for (c, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            t.push(c, j, v);
        }
    }
    t.push(big, r, 1.0);
    Some(t)
}

fn prepare(net: &NeuralNetwork, set: &InputSet, opts: &VerifyOptions) -> Result<Prepared> {
    if set.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "input set",
            expected: net.input_dim(),
            actual: set.dim(),
        });
    }
    let cnet = net.compact_form()?;
    let bbox = bounding_box(set)?;
    let bounds = interval_propagate(net, &bbox)?;
    debug!(
        "presolve: {} active, {} inactive, {} unknown",
        bounds.partition.active.len(),
        bounds.partition.inactive.len(),
        bounds.partition.unknown.len()
    );
    let (min, sides) = build_min(&set.qc(&opts.input)?.with_prefix("in."), &cnet)?;
    let mmid = build_mmid(&activation_family(&cnet, &bounds, opts)?, &cnet)?;
    let restriction = if opts.local_qc {
        phase_restriction(&cnet, &bounds.partition)
    } else {
        None
    };
    let (min, mmid) = match &restriction {
        Some(t) => (min.congruence(t), mmid.congruence(t)),
        None => (min, mmid),
    };
    let InputSet::Box { lo, hi } = &bbox else { unreachable!() };
    let sq = |l: f64, h: f64| (l * l).max(h * h);
    let norm_sq = 1.0
        + lo.iter().zip(hi.iter()).map(|(&l, &h)| sq(l, h)).sum::<f64>()
        + bounds.post_lo().into_iter().zip(bounds.post_hi()).map(|(l, h)| sq(l, h)).sum::<f64>();
    Ok(Prepared {
        cnet,
        min,
        mmid,
        sides,
        norm_sq,
        restriction,
    })
}

fn solve_row(p: &Prepared, spec: &SafetyMatrix, minimize: bool, opts: &VerifyOptions) -> RowResult {
    let start = Instant::now();
    let spec = spec.with_prefix("out.");
    let objective_var = if minimize { spec.variable().cloned() } else { None };
    let problem = build_min_problem(p, &spec, objective_var.as_ref());
    let problem = match problem {
        Ok(pr) => pr,
        Err(e) => return RowResult::failed(e.to_string()),
    };
    let sol = solve(&problem, &opts.solver);
    let mut row = RowResult {
        solve_status: sol.status,
        verdict: Verdict::Rejected,
        bound: None,
        raw_bound: sol.objective_value,
        residual: f64::INFINITY,
        certificate: None,
        iterations: sol.stats.iterations,
        time_s: 0.0,
        message: None,
    };
    match sol.assignment {
        Some(asg) => {
            let report = check_certificate(&problem, &asg, opts.cert_tol);
            row.verdict = report.verdict;
            row.residual = report.residuals[0];
            let sides_ok = report.residuals[1..]
                .iter()
                .zip(&report.thresholds[1..])
                .all(|(r, t)| *r >= -t);
            if let (Some(raw), true) = (sol.objective_value, sides_ok && report.cone_violations.is_empty()) {
                // cᵀy − d ≤ λ_max ‖[𝐱; 1]‖² / 2 on the abstracted set.
                let bound = raw + row.residual.max(0.0) * p.norm_sq / 2.0;
                row.bound = bound.is_finite().then_some(bound);
            }
            if row.verdict == Verdict::Rejected {
                row.message = Some(format!(
                    "certificate rejected (residual {:.3e}, {} cone violations)",
                    row.residual,
                    report.cone_violations.len()
                ));
            }
            row.certificate = Some(asg);
        }
        None => row.message = Some(format!("solver returned {:?}", sol.status)),
    }
    if minimize && row.bound.is_none() {
        row.verdict = Verdict::Rejected;
    }
    row.time_s = start.elapsed().as_secs_f64();
    row
}

fn build_min_problem(p: &Prepared, spec: &SafetyMatrix, objective: Option<&VarId>) -> Result<LmiProblem> {
    let mout = p.restrict(build_mout(spec, &p.cnet)?);
    let obj = objective.map(|v| BTreeMap::from([(v.clone(), 1.0)]));
    assemble(&p.min, &p.mmid, &mout, &p.sides, obj)
}

/// The matrix inequality problem solved for each safety row, with variables
/// named as in the row certificates.
pub fn safety_problems(
    net: &NeuralNetwork,
    set: &InputSet,
    spec: &[SafetyMatrix],
    opts: &VerifyOptions,
) -> Result<Vec<LmiProblem>> {
    let p = prepare(net, set, opts)?;
    spec.iter()
        .map(|s| build_min_problem(&p, &s.with_prefix("out."), None))
        .collect()
}

/// The problem minimizing the offset of the half-space `cᵀy ≤ d`.
pub fn direction_problem(net: &NeuralNetwork, set: &InputSet, c: &[f64], opts: &VerifyOptions) -> Result<LmiProblem> {
    let p = prepare(net, set, opts)?;
    let spec = hyperplane_spec(net.input_dim(), c, Offset::Variable(VarId::new("d"))).with_prefix("out.");
    build_min_problem(&p, &spec, spec.variable())
}

/// Certifies `[x; f(x); 1]ᵀ S_k [x; f(x); 1] ≤ 0` on the input set for
/// every row `S_k`. Rows are independent problems.
pub fn certify_safety(
    net: &NeuralNetwork,
    set: &InputSet,
    spec: &[SafetyMatrix],
    opts: &VerifyOptions,
) -> Result<VerificationResult> {
    let start = Instant::now();
    let p = prepare(net, set, opts)?;
    let expected = net.input_dim() + net.output_dim() + 1;
    if let Some(s) = spec.iter().find(|s| s.dim() != expected) {
        return Err(Error::DimensionMismatch {
            context: "safety matrix",
            expected,
            actual: s.dim(),
        });
    }
    if let Some(s) = spec.iter().find(|s| s.variable().is_some()) {
        return Err(Error::InvalidInput(format!(
            "safety matrix for certification must be fixed, found variable {}",
            s.variable().unwrap()
        )));
    }
    let rows = opts.exec.map(spec, |s| solve_row(&p, s, false, opts));
    Ok(VerificationResult::from_rows(rows, *opts, start))
}

/// Certified upper bound on `sup cᵀf(x)` over the set (`+∞` on failure).
pub fn bound_direction(
    net: &NeuralNetwork,
    set: &InputSet,
    c: &[f64],
    opts: &VerifyOptions,
) -> Result<(f64, VerificationResult)> {
    let r = reach_polytope(net, set, &DMatrix::from_row_slice(1, c.len(), c), opts)?;
    Ok((r.bounds[0], r))
}

/// Bounds `h_i ≥ sup c_iᵀf(x)` for every row `c_i` of `directions`, so that
/// `{y : C y ≤ h} ⊇ f(set)`.
pub fn reach_polytope(
    net: &NeuralNetwork,
    set: &InputSet,
    directions: &DMatrix<f64>,
    opts: &VerifyOptions,
) -> Result<VerificationResult> {
    let start = Instant::now();
    if directions.nrows() == 0 {
        return Err(Error::InvalidInput("at least one direction is required".into()));
    }
    if directions.ncols() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "direction",
            expected: net.output_dim(),
            actual: directions.ncols(),
        });
    }
    if directions.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("direction"));
    }
    let p = prepare(net, set, opts)?;
    let n_x = net.input_dim();
    let specs: Vec<SafetyMatrix> = directions
        .row_iter()
        .map(|r| {
            let c: Vec<f64> = r.iter().copied().collect();
            hyperplane_spec(n_x, &c, Offset::Variable(VarId::new("d")))
        })
        .collect();
    let rows = opts.exec.map(&specs, |s| solve_row(&p, s, true, opts));
    Ok(VerificationResult::from_rows(rows, *opts, start))
}

/// `k` unit vectors equally spaced on the circle, starting at `e_1`.
pub fn compass_directions(k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, 2, |i, j| {
        let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
        if j == 0 {
            t.cos()
        } else {
            t.sin()
        }
    })
}

/// `±e_i` for every output coordinate.
pub fn box_directions(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        d[(2 * i, i)] = 1.0;
        d[(2 * i + 1, i)] = -1.0;
    }
    d
}

/// Certifies that every point of the `ℓ∞` ball around `x_star` is classified
/// as `label`.
pub fn certify_robustness(
    net: &NeuralNetwork,
    x_star: &[f64],
    eps: f64,
    label: usize,
    opts: &VerifyOptions,
) -> Result<VerificationResult> {
    let start = Instant::now();
    let y = net.forward_slice(x_star)?;
    let n_y = y.len();
    if label >= n_y {
        return Err(Error::InvalidInput(format!("label {label} out of range for {n_y} outputs")));
    }
    let predicted = y.argmax().0;
    if y[label] < y[predicted] {
        return Err(Error::LabelMismatch { label, predicted });
    }
    let set = InputSet::linf_ball(x_star, eps)?;
    if n_y == 1 {
        warn!("single-output network: robustness holds vacuously");
        return Ok(VerificationResult::from_rows(Vec::new(), *opts, start));
    }
    let spec = robustness_spec(net.input_dim(), n_y, label)?;
    let mut res = certify_safety(net, &set, &spec, opts)?;
    res.time_s = start.elapsed().as_secs_f64();
    Ok(res)
}

/// Closed loop `x⁺ = A x + B clamp(f(x), u_lo, u_hi)`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub a_sys: DMatrix<f64>,
    pub b_sys: DMatrix<f64>,
    pub controller: NeuralNetwork,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
}

impl ClosedLoop {
    pub fn step(&self, x: &[f64]) -> Result<DVector<f64>> {
        let u = self.controller.forward_slice(x)?;
        let u = DVector::from_iterator(u.len(), (0..u.len()).map(|i| u[i].clamp(self.u_lo[i], self.u_hi[i])));
        Ok(&self.a_sys * DVector::from_column_slice(x) + &self.b_sys * u)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvarianceResult {
    pub eps: f64,
    pub status: Status,
    /// Offsets `h` of the image polytope `{x : H x ≤ h}`.
    pub h: Vec<f64>,
    /// Largest `±x_j` over the image polytope, per coordinate and sign.
    pub support: Vec<f64>,
    pub verification: VerificationResult,
}

fn box_template(n: usize) -> DMatrix<f64> {
    box_directions(n)
}

/// Certifies that `{x : ‖x‖∞ ≤ eps}` is positively invariant for the closed
/// loop. `template` gives the facet normals of the image polytope; it
/// defaults to `±e_i`.
pub fn certify_invariance(
    sys: &ClosedLoop,
    eps: f64,
    template: Option<&DMatrix<f64>>,
    opts: &VerifyOptions,
) -> Result<InvarianceResult> {
    let start = Instant::now();
    let n_x = sys.a_sys.nrows();
    if sys.controller.input_dim() != n_x {
        return Err(Error::DimensionMismatch {
            context: "controller inputs",
            expected: n_x,
            actual: sys.controller.input_dim(),
        });
    }
    if sys.controller.output_dim() != sys.b_sys.ncols() {
        return Err(Error::DimensionMismatch {
            context: "controller outputs",
            expected: sys.b_sys.ncols(),
            actual: sys.controller.output_dim(),
        });
    }
    let h_mat = template.cloned().unwrap_or_else(|| box_template(n_x));
    for (i, row) in h_mat.row_iter().enumerate() {
        if (row.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("template row {i} is not normalized")));
        }
    }
    let net = sys.controller.embed_projection(&sys.u_lo, &sys.u_hi)?;
    let set = InputSet::linf_ball(&vec![0.0; n_x], eps)?;
    let p = prepare(&net, &set, opts)?;
    let specs = invariance_spec(&sys.a_sys, &sys.b_sys, &h_mat, "h")?;
    let rows = opts.exec.map(&specs, |s| solve_row(&p, s, true, opts));
    let mut verification = VerificationResult::from_rows(rows, *opts, start);
    let h = verification.bounds.clone();
    let mut support = Vec::new();
    let mut contained = h.iter().all(|v| v.is_finite());
    if contained {
        'outer: for j in 0..n_x {
            for sign in [1.0, -1.0] {
                let mut c = vec![0.0; n_x];
                c[j] = sign;
                let r = solve_lp(
                    &Lp {
                        c,
                        g: h_mat.clone(),
                        h: h.clone(),
                    },
                    PROBE_TOL,
                );
                if r.status != LpStatus::Optimal {
                    contained = false;
                    break 'outer;
                }
                support.push(r.value);
                if r.value > eps + PROBE_TOL * (1.0 + eps) {
                    contained = false;
                }
            }
        }
    }
    if verification.status == Status::Certified && !contained {
        verification.status = Status::Unknown;
    }
    verification.time_s = start.elapsed().as_secs_f64();
    Ok(InvarianceResult {
        eps,
        status: verification.status,
        h,
        support,
        verification,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsSearch {
    /// Largest certified radius found, if any.
    pub best: Option<InvarianceResult>,
    /// Every radius tried, with its outcome.
    pub trials: Vec<(f64, Status)>,
}

/// Bisection for the largest invariant radius in `[lo, hi]`, stopping when
/// the bracket is narrower than `resolution`.
pub fn search_invariant_eps(
    sys: &ClosedLoop,
    lo: f64,
    hi: f64,
    resolution: f64,
    template: Option<&DMatrix<f64>>,
    opts: &VerifyOptions,
) -> Result<EpsSearch> {
    if !(0.0 <= lo && lo <= hi && resolution > 0.0) {
        return Err(Error::InvalidInput("search bracket must satisfy 0 ≤ lo ≤ hi, resolution > 0".into()));
    }
    let mut trials = Vec::new();
    let mut best = None;
    let first = certify_invariance(sys, hi, template, opts)?;
    trials.push((hi, first.status));
    if first.status == Status::Certified {
        return Ok(EpsSearch {
            best: Some(first),
            trials,
        });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > resolution {
        let mid = 0.5 * (a + b);
        let r = certify_invariance(sys, mid, template, opts)?;
        trials.push((mid, r.status));
        if r.status == Status::Certified {
            a = mid;
            best = Some(r);
        } else {
            b = mid;
        }
    }
    Ok(EpsSearch { best, trials })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;

    fn net_a() -> NeuralNetwork {
        NeuralNetwork::new(
            Activation::Relu,
            vec![
                Layer::new(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 1.0]), DVector::zeros(2)),
                Layer::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::zeros(1)),
            ],
        )
        .unwrap()
    }

    fn unit_box() -> InputSet {
        InputSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn net_a_safety() {
        let opts = VerifyOptions::default();
        let ok = certify_safety(&net_a(), &unit_box(), &[hyperplane_spec(2, &[1.0], Offset::Fixed(1.5))], &opts).unwrap();
        assert!(ok.is_certified());
        let tight =
            certify_safety(&net_a(), &unit_box(), &[hyperplane_spec(2, &[1.0], Offset::Fixed(0.5))], &opts).unwrap();
        assert_eq!(tight.status, Status::Unknown);
    }

    #[test]
    fn net_a_bound_is_sound() {
        let (d, res) = bound_direction(&net_a(), &unit_box(), &[1.0], &VerifyOptions::default()).unwrap();
        assert!(res.is_certified());
        assert!(d >= 1.0 - 1e-6, "{d}");
        assert!(d < 1.5, "{d}");
    }

    #[test]
    fn identity_relu_net_is_exact() {
        let net = NeuralNetwork::new(
            Activation::Relu,
            vec![
                Layer::new(DMatrix::identity(2, 2), DVector::zeros(2)),
                Layer::new(DMatrix::identity(2, 2), DVector::zeros(2)),
            ],
        )
        .unwrap();
        let set = InputSet::boxed(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let (d, _) = bound_direction(&net, &set, &[1.0, 0.0], &VerifyOptions::default()).unwrap();
        assert!((d - 1.0).abs() < 1e-4, "{d}");
    }

    #[test]
    fn point_input_bound() {
        let x = [0.3, 0.8];
        let set = InputSet::boxed(x.to_vec(), x.to_vec()).unwrap();
        let fx = net_a().forward_slice(&x).unwrap()[0];
        let (d, r) = bound_direction(&net_a(), &set, &[1.0], &VerifyOptions::default()).unwrap();
        assert!((d - fx).abs() < 1e-6, "{d} vs {fx} {:?}", r.rows[0]);
    }

    #[test]
    fn robustness_single_output_is_vacuous() {
        let r = certify_robustness(&net_a(), &[0.5, 0.5], 0.1, 0, &VerifyOptions::default()).unwrap();
        assert!(r.is_certified());
        assert!(r.rows.is_empty());
    }

    #[test]
    fn robustness_label_checked() {
        let net = NeuralNetwork::new(
            Activation::Relu,
            vec![
                Layer::new(DMatrix::identity(2, 2), DVector::zeros(2)),
                Layer::new(DMatrix::identity(2, 2), DVector::zeros(2)),
            ],
        )
        .unwrap();
        let err = certify_robustness(&net, &[1.0, 0.0], 0.1, 1, &VerifyOptions::default());
        assert!(matches!(err, Err(Error::LabelMismatch { label: 1, predicted: 0 })));
        let ok = certify_robustness(&net, &[1.0, 0.0], 0.0, 0, &VerifyOptions::default()).unwrap();
        assert!(ok.is_certified());
    }

    fn zero_controller(n_x: usize) -> NeuralNetwork {
        NeuralNetwork::new(Activation::Relu, vec![Layer::new(DMatrix::zeros(1, n_x), DVector::zeros(1))]).unwrap()
    }

    #[test]
    fn stable_open_loop_invariant() {
        let sys = ClosedLoop {
            a_sys: DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.6]),
            b_sys: DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            controller: zero_controller(2),
            u_lo: vec![-1.0],
            u_hi: vec![1.0],
        };
        let r = certify_invariance(&sys, 1.0, None, &VerifyOptions::default()).unwrap();
        assert_eq!(r.status, Status::Certified, "{:?}", r.h);
        assert!((r.h[0] - 0.7).abs() < 1e-4, "{:?}", r.h);
    }

    #[test]
    fn unstable_open_loop_unknown() {
        let sys = ClosedLoop {
            a_sys: DMatrix::from_row_slice(2, 2, &[1.2, 1.2, 0.0, 1.2]),
            b_sys: DMatrix::from_row_slice(2, 1, &[1.0, 0.5]),
            controller: zero_controller(2),
            u_lo: vec![-1.0],
            u_hi: vec![1.0],
        };
        let r = certify_invariance(&sys, 0.5, None, &VerifyOptions::default()).unwrap();
        assert_eq!(r.status, Status::Unknown);
    }
}
