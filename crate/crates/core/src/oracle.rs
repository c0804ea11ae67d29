//! Ground truth for small instances: exact maximization of piecewise-linear
//! networks by activation-pattern enumeration, sampling lower bounds with
//! local ascent, and grid images.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::input_qc::{polytope_depth, InputSet, PROBE_TOL};
use crate::network::NeuralNetwork;
use crate::presolve::{bounding_box, interval_propagate};
use crate::sdp::{solve_lp, Lp, LpStatus};

pub const DEFAULT_MAX_UNKNOWN: usize = 16;

/// Maximizer of one linear region of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCertificate {
    /// Undetermined neurons, as indices into the flattened hidden layers.
    pub unknown: Vec<usize>,
    /// Branch of each undetermined neuron (`true` = active).
    pub pattern: Vec<bool>,
    pub x: Vec<f64>,
    /// `cᵀf(x)` evaluated by the forward pass.
    pub value: f64,
    /// Optimal value of the region's linear program.
    pub lp_value: f64,
    /// Largest violation of the region's constraints at `x`.
    pub residual: f64,
}

/// Affine map `x ↦ G x + g`.
#[derive(Clone)]
struct Affine {
    g: DMatrix<f64>,
    off: DVector<f64>,
}

/// Region constraints `G x ≤ h` and objective `cᵀf(x) = qᵀx + q0` of one
/// activation pattern, in the reduced coordinates.
fn region(
    net: &NeuralNetwork,
    base: &Affine,
    branch: &[bool],
    unknown_mask: &[bool],
    c: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<f64>, DVector<f64>, f64) {
    let range = net.activation().relu_like().expect("checked by caller");
    let mut cur = base.clone();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut idx = 0;
    let ell = net.num_hidden();
    for layer in &net.layers()[..ell] {
        let g = &layer.w * &cur.g;
        let off = &layer.w * &cur.off + &layer.b;
        let mut next_g = g.clone();
        let mut next_off = off.clone();
        for i in 0..g.nrows() {
            let active = branch[idx];
            if unknown_mask[idx] {
                // active: G_i x + g_i ≥ 0; inactive: G_i x + g_i ≤ 0
                let s = if active { -1.0 } else { 1.0 };
                let row = g.row(i).transpose() * s;
                let norm = row.norm().max(1e-300);
                rows.push(row / norm);
                rhs.push(-s * off[i] / norm);
            }
            let slope = if active { range.beta } else { range.alpha };
            next_g.row_mut(i).scale_mut(slope);
            next_off[i] *= slope;
            idx += 1;
        }
        cur = Affine { g: next_g, off: next_off };
    }
    let last = &net.layers()[ell];
    let q = (c.transpose() * &last.w * &cur.g).transpose();
    let q0 = c.dot(&(&last.w * &cur.off + &last.b));
    (rows, rhs, q, q0)
}

/// Exact `max cᵀf(x)` over a box for networks with piecewise-linear
/// (ReLU-type) activations, by solving one linear program per pattern of the
/// neurons that interval propagation leaves undetermined.
pub fn exact_max_relu(
    net: &NeuralNetwork,
    set: &InputSet,
    c: &[f64],
    max_unknown: usize,
    exec: Exec,
) -> Result<(f64, PatternCertificate)> {
    let InputSet::Box { lo, hi } = set else {
        return Err(Error::InvalidInput("exact maximization needs a box input".into()));
    };
    if net.activation().relu_like().is_none() {
        return Err(Error::InvalidInput(format!(
            "exact maximization needs a piecewise-linear activation, got {}",
            net.activation()
        )));
    }
    if c.len() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "objective direction",
            expected: net.output_dim(),
            actual: c.len(),
        });
    }
    let bounds = interval_propagate(net, set)?;
    let unknown = bounds.partition.unknown.clone();
    if unknown.len() > max_unknown {
        return Err(Error::TooManyUnknown {
            count: unknown.len(),
            max: max_unknown,
        });
    }
    let n_total = net.num_neurons();
    let mut unknown_mask = vec![false; n_total];
    let mut fixed_branch = vec![false; n_total];
    for &i in &unknown {
        unknown_mask[i] = true;
    }
    for &i in &bounds.partition.active {
        fixed_branch[i] = true;
    }
    // Reduce to the coordinates with positive width.
    let n_x = lo.len();
    let free: Vec<usize> = (0..n_x).filter(|&i| hi[i] > lo[i]).collect();
    let mut base_g = DMatrix::zeros(n_x, free.len());
    for (k, &i) in free.iter().enumerate() {
        base_g[(i, k)] = 1.0;
    }
    let base = Affine {
        g: base_g,
        off: DVector::from_fn(n_x, |i, _| if hi[i] > lo[i] { 0.0 } else { lo[i] }),
    };
    let cv = DVector::from_column_slice(c);
    let lift = |u: &[f64]| -> Vec<f64> {
        let mut x: Vec<f64> = lo.iter().copied().collect();
        for (k, &i) in free.iter().enumerate() {
            x[i] = u[k].clamp(lo[i], hi[i]);
        }
        x
    };
    let solve_pattern = |p: usize| -> Option<PatternCertificate> {
        let mut branch = fixed_branch.clone();
        let pattern: Vec<bool> = (0..unknown.len()).map(|k| (p >> k) & 1 == 1).collect();
        for (k, &i) in unknown.iter().enumerate() {
            branch[i] = pattern[k];
        }
        let (rows, rhs, q, q0) = region(net, &base, &branch, &unknown_mask, &cv);
        let x = if free.is_empty() {
            if rows.iter().zip(&rhs).any(|(_, &h)| h < -PROBE_TOL) {
                return None;
            }
            lo.iter().copied().collect()
        } else {
            let m = rows.len() + 2 * free.len();
            let nf = free.len();
            let mut g = DMatrix::zeros(m, nf);
            let mut h = Vec::with_capacity(m);
            for (r, (row, &b)) in rows.iter().zip(&rhs).enumerate() {
                g.row_mut(r).copy_from(&row.transpose());
                h.push(b);
            }
            for (k, &i) in free.iter().enumerate() {
                g[(rows.len() + 2 * k, k)] = 1.0;
                h.push(hi[i]);
                g[(rows.len() + 2 * k + 1, k)] = -1.0;
                h.push(-lo[i]);
            }
            let r = solve_lp(&Lp { c: q.as_slice().to_vec(), g, h }, 1e-10);
            match r.status {
                LpStatus::Optimal => lift(&r.x),
                LpStatus::Infeasible => return None,
                s => {
                    warn!("pattern {p:#b}: linear program ended with {s:?}");
                    return None;
                }
            }
        };
        let u: Vec<f64> = free.iter().map(|&i| x[i]).collect();
        let uv = DVector::from_vec(u);
        let residual = rows
            .iter()
            .zip(&rhs)
            .map(|(row, &b)| row.dot(&uv) - b)
            .fold(0.0, f64::max);
        let value = cv.dot(&net.forward_slice(&x).ok()?);
        Some(PatternCertificate {
            unknown: unknown.clone(),
            pattern,
            x,
            value,
            lp_value: q.dot(&uv) + q0,
            residual,
        })
    };
    let results = exec.map_range(1usize << unknown.len(), solve_pattern);
    let best = results
        .into_iter()
        .flatten()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or_else(|| Error::Solver("no activation pattern is feasible".into()))?;
    Ok((best.value, best))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub n_samples: usize,
    /// Number of best samples refined by local ascent.
    pub n_refine: usize,
    pub ascent_steps: usize,
    pub seed: u64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            n_samples: 10_000,
            n_refine: 100,
            ascent_steps: 50,
            seed: 0,
        }
    }
}

const FD_STEP: f64 = 1e-4;
const MAX_REJECTIONS: usize = 1000;

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws one point of the set. Zonotopes and ellipsoids are sampled through
/// their parametrizations; polytopes by rejection from the bounding box.
fn draw(set: &InputSet, bbox: (&DVector<f64>, &DVector<f64>), rng: &mut ChaCha8Rng) -> Option<DVector<f64>> {
    let (lo, hi) = bbox;
    let uniform_box = |rng: &mut ChaCha8Rng| DVector::from_fn(lo.len(), |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>());
    match set {
        InputSet::Box { .. } => Some(uniform_box(rng)),
        InputSet::Zonotope { center, generators } => {
            let lam = DVector::from_fn(generators.ncols(), |_, _| rng.random::<f64>());
            Some(center + generators * lam)
        }
        InputSet::Ellipsoid { a, b } => {
            let n = b.len();
            let mut dir: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            let norm = dir.norm().max(1e-300);
            dir /= norm;
            let r = rng.random::<f64>().powf(1.0 / n as f64);
            let inv = a.clone().try_inverse()?;
            Some(inv * (dir * r - b.clone()))
        }
        InputSet::Polytope { .. } => {
            (0..MAX_REJECTIONS).map(|_| uniform_box(rng)).find(|x| set.contains(x.as_slice(), 0.0))
        }
    }
}

fn project(set: &InputSet, x: DVector<f64>) -> Option<DVector<f64>> {
    match set {
        InputSet::Box { lo, hi } => Some(DVector::from_fn(x.len(), |i, _| x[i].clamp(lo[i], hi[i]))),
        _ => set.contains(x.as_slice(), 0.0).then_some(x),
    }
}

fn ascend(net: &NeuralNetwork, set: &InputSet, c: &DVector<f64>, x0: DVector<f64>, steps: usize, scale: f64) -> f64 {
    let obj = |x: &DVector<f64>| net.forward(x).map(|y| c.dot(&y)).unwrap_or(f64::NEG_INFINITY);
    let mut x = x0;
    let mut fx = obj(&x);
    let mut eta = 0.1 * scale;
    for _ in 0..steps {
        let mut grad = DVector::zeros(x.len());
        for j in 0..x.len() {
            let mut xp = x.clone();
            xp[j] += FD_STEP;
            let mut xm = x.clone();
            xm[j] -= FD_STEP;
            grad[j] = (obj(&xp) - obj(&xm)) / (2.0 * FD_STEP);
        }
        let gn = grad.norm();
        if gn == 0.0 || eta < 1e-12 * scale {
            break;
        }
        match project(set, &x + &grad * (eta / gn)) {
            Some(cand) if obj(&cand) > fx => {
                fx = obj(&cand);
                x = cand;
                eta *= 1.5;
            }
            _ => eta *= 0.5,
        }
    }
    fx
}

/// Lower bound on `sup cᵀf(x)` from random samples, the best of which are
/// refined by finite-difference ascent. Deterministic given the seed: each
/// sample uses its own random stream.
pub fn sample_lower_bound(
    net: &NeuralNetwork,
    set: &InputSet,
    c: &[f64],
    opts: &SampleOptions,
    exec: Exec,
) -> Result<f64> {
    if set.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "input set",
            expected: net.input_dim(),
            actual: set.dim(),
        });
    }
    if c.len() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "objective direction",
            expected: net.output_dim(),
            actual: c.len(),
        });
    }
    if opts.n_samples == 0 {
        return Err(Error::InvalidInput("at least one sample is required".into()));
    }
    let InputSet::Box { lo, hi } = bounding_box(set)? else { unreachable!() };
    let scale = (&hi - &lo).amax().max(1e-12);
    let cv = DVector::from_column_slice(c);
    let points: Vec<Option<DVector<f64>>> =
        exec.map_range(opts.n_samples, |i| draw(set, (&lo, &hi), &mut sample_rng(opts.seed, i)));
    let mut points: Vec<DVector<f64>> = points.into_iter().flatten().collect();
    if points.is_empty() {
        warn!("rejection sampling found no point of the set; using an interior point");
        points.push(interior_point(set)?);
    }
    let values: Vec<f64> = exec.map(&points, |x| net.forward(x).map(|y| cv.dot(&y)).unwrap_or(f64::NEG_INFINITY));
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(opts.n_refine.min(points.len()));
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let refined = if opts.ascent_steps == 0 {
        Vec::new()
    } else {
        exec.map(&order, |&i| ascend(net, set, &cv, points[i].clone(), opts.ascent_steps, scale))
    };
    Ok(refined.into_iter().fold(best, f64::max))
}

fn interior_point(set: &InputSet) -> Result<DVector<f64>> {
    let InputSet::Polytope { h_mat, h } = set else {
        return Err(Error::Solver("sampler produced no point".into()));
    };
    polytope_depth(h_mat, h).ok_or(Error::EmptySet)?;
    // Center of the depth problem: max s with H x + s ≤ h.
    let (m, n) = h_mat.shape();
    let mut g = DMatrix::zeros(m + 1, n + 1);
    g.view_mut((0, 0), (m, n)).copy_from(h_mat);
    for i in 0..m {
        g[(i, n)] = h_mat.row(i).norm();
    }
    g[(m, n)] = 1.0;
    let mut rhs: Vec<f64> = h.iter().copied().collect();
    rhs.push(1.0);
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let r = solve_lp(&Lp { c, g, h: rhs }, 1e-10);
    Ok(DVector::from_column_slice(&r.x[..n]))
}

/// `resolution` evenly spaced points per axis (the center if 1).
pub fn grid_points(lo: &[f64], hi: &[f64], resolution: usize) -> Vec<Vec<f64>> {
    let n = lo.len();
    let axis = |i: usize, k: usize| {
        if resolution == 1 {
            0.5 * (lo[i] + hi[i])
        } else {
            lo[i] + (hi[i] - lo[i]) * k as f64 / (resolution - 1) as f64
        }
    };
    let total = resolution.pow(n as u32);
    (0..total)
        .map(|mut p| {
            (0..n)
                .map(|i| {
                    let k = p % resolution;
                    p /= resolution;
                    axis(i, k)
                })
                .collect()
        })
        .collect()
}

/// Network outputs on a uniform grid over the box (at most three inputs).
pub fn grid_reach(net: &NeuralNetwork, set: &InputSet, resolution: usize, exec: Exec) -> Result<Vec<DVector<f64>>> {
    let InputSet::Box { lo, hi } = set else {
        return Err(Error::InvalidInput("grid evaluation needs a box input".into()));
    };
    if lo.len() > 3 {
        return Err(Error::InvalidInput(format!("grid evaluation supports at most 3 inputs, got {}", lo.len())));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    if lo.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "input box",
            expected: net.input_dim(),
            actual: lo.len(),
        });
    }
    let pts = grid_points(lo.as_slice(), hi.as_slice(), resolution);
    exec.map(&pts, |x| net.forward_slice(x)).into_iter().collect()
}

/// CSV with header `y1,y2,...` and one row per point.
pub fn points_to_csv(points: &[DVector<f64>]) -> String {
    let dim = points.first().map_or(0, |p| p.len());
    let mut out = (1..=dim).map(|i| format!("y{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for p in points {
        out.push_str(&p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
