//! Interval bound propagation and neuron classification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation_qc::NeuronPartition;
use crate::error::{Error, Result};
use crate::input_qc::{InputSet, PROBE_TOL};
use crate::network::NeuralNetwork;
use crate::sdp::{solve_lp, Lp, LpStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBounds {
    pub pre_lo: Vec<f64>,
    pub pre_hi: Vec<f64>,
    pub post_lo: Vec<f64>,
    pub post_hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronBounds {
    pub layers: Vec<LayerBounds>,
    pub partition: NeuronPartition,
}

impl NeuronBounds {
    fn flat(&self, f: impl Fn(&LayerBounds) -> &Vec<f64>) -> Vec<f64> {
        self.layers.iter().flat_map(|l| f(l).iter().copied()).collect()
    }

    /// Pre-activation lower bounds of all hidden neurons, layer by layer.
    pub fn pre_lo(&self) -> Vec<f64> {
        self.flat(|l| &l.pre_lo)
    }

    pub fn pre_hi(&self) -> Vec<f64> {
        self.flat(|l| &l.pre_hi)
    }

    pub fn post_lo(&self) -> Vec<f64> {
        self.flat(|l| &l.post_lo)
    }

    pub fn post_hi(&self) -> Vec<f64> {
        self.flat(|l| &l.post_hi)
    }
}

/// `W[lo, hi] + b` computed exactly by splitting `W` by sign.
fn affine_interval(w: &DMatrix<f64>, b: &DVector<f64>, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out_lo = b.as_slice().to_vec();
    let mut out_hi = b.as_slice().to_vec();
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let a = w[(i, j)];
            if a >= 0.0 {
                out_lo[i] += a * lo[j];
                out_hi[i] += a * hi[j];
            } else {
                out_lo[i] += a * hi[j];
                out_hi[i] += a * lo[j];
            }
        }
    }
    (out_lo, out_hi)
}

/// Propagates a box through the hidden layers. Neuron `i` is active when its
/// pre-activation lower bound is `≥ 0`, inactive when the upper bound is
/// `< 0`, and unknown otherwise.
pub fn interval_propagate(net: &NeuralNetwork, set: &InputSet) -> Result<NeuronBounds> {
    let InputSet::Box { lo, hi } = set else {
        return Err(Error::InvalidInput("interval propagation needs a box input".into()));
    };
    set.validate()?;
    if lo.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "input box",
            expected: net.input_dim(),
            actual: lo.len(),
        });
    }
    let act = net.activation();
    let mut cur_lo = lo.as_slice().to_vec();
    let mut cur_hi = hi.as_slice().to_vec();
    let mut layers = Vec::new();
    let mut partition = NeuronPartition::default();
    let mut idx = 0;
    for layer in &net.layers()[..net.num_hidden()] {
        let (pre_lo, pre_hi) = affine_interval(&layer.w, &layer.b, &cur_lo, &cur_hi);
        for i in 0..pre_lo.len() {
            if pre_lo[i] >= 0.0 {
                partition.active.push(idx);
            } else if pre_hi[i] < 0.0 {
                partition.inactive.push(idx);
            } else {
                partition.unknown.push(idx);
            }
            idx += 1;
        }
        let post_lo: Vec<f64> = pre_lo.iter().map(|&v| act.apply(v)).collect();
        let post_hi: Vec<f64> = pre_hi.iter().map(|&v| act.apply(v)).collect();
        cur_lo.clone_from(&post_lo);
        cur_hi.clone_from(&post_hi);
        layers.push(LayerBounds {
            pre_lo,
            pre_hi,
            post_lo,
            post_hi,
        });
    }
    Ok(NeuronBounds { layers, partition })
}

/// Smallest axis-aligned box containing the set.
pub fn bounding_box(set: &InputSet) -> Result<InputSet> {
    set.validate()?;
    let (lo, hi) = match set {
        InputSet::Box { .. } => return Ok(set.clone()),
        InputSet::Zonotope { center, generators } => {
            let pos = generators.map(|v| v.max(0.0)).column_sum();
            let neg = generators.map(|v| v.min(0.0)).column_sum();
            (center + neg, center + pos)
        }
        InputSet::Ellipsoid { a, b } => {
            // x = A⁻¹(u − b) with ‖u‖ ≤ 1.
            let inv = a.clone().try_inverse().ok_or(Error::Unbounded)?;
            let c = -(&inv * b);
            let r = DVector::from_iterator(inv.nrows(), inv.row_iter().map(|row| row.norm()));
            (&c - &r, &c + &r)
        }
        InputSet::Polytope { h_mat, h } => {
            let n = h_mat.ncols();
            let mut lo = DVector::zeros(n);
            let mut hi = DVector::zeros(n);
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let mut c = vec![0.0; n];
                    c[i] = sign;
                    let r = solve_lp(
                        &Lp {
                            c,
                            g: h_mat.clone(),
                            h: h.iter().copied().collect(),
                        },
                        PROBE_TOL,
                    );
                    match r.status {
                        LpStatus::Optimal if sign > 0.0 => hi[i] = r.value,
                        LpStatus::Optimal => lo[i] = -r.value,
                        LpStatus::Unbounded => return Err(Error::Unbounded),
                        LpStatus::Infeasible => return Err(Error::EmptySet),
                        LpStatus::Failed => return Err(Error::Solver("support LP failed".into())),
                    }
                }
            }
            // Round-off can cross the bounds of very thin polytopes.
            for i in 0..n {
                if lo[i] > hi[i] {
                    let m = 0.5 * (lo[i] + hi[i]);
                    lo[i] = m;
                    hi[i] = m;
                }
            }
            (lo, hi)
        }
    };
    Ok(InputSet::Box { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Layer};

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

    #[test]
    fn net_a_partition() {
        let nb = interval_propagate(&net_a(), &InputSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(nb.pre_lo(), vec![-1.0, 0.0]);
        assert_eq!(nb.pre_hi(), vec![1.0, 1.0]);
        assert_eq!(nb.partition.unknown, vec![0]);
        assert_eq!(nb.partition.active, vec![1]);
        assert!(nb.partition.inactive.is_empty());
        assert_eq!(nb.post_lo(), vec![0.0, 0.0]);
    }

    #[test]
    fn point_box_partition() {
        let nb = interval_propagate(&net_a(), &InputSet::boxed(vec![0.2, 0.7], vec![0.2, 0.7]).unwrap()).unwrap();
        assert_eq!(nb.pre_lo(), nb.pre_hi());
        assert_eq!(nb.partition.inactive, vec![0]);
        assert_eq!(nb.partition.active, vec![1]);
    }

    #[test]
    fn rejects_non_box() {
        let set = InputSet::Ellipsoid {
            a: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
        };
        assert!(interval_propagate(&net_a(), &set).is_err());
    }

    #[test]
    fn bounding_boxes() {
        let z = InputSet::Zonotope {
            center: DVector::zeros(2),
            generators: DMatrix::identity(2, 2),
        };
        assert_eq!(bounding_box(&z).unwrap(), InputSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap());
        let e = InputSet::Ellipsoid {
            a: DMatrix::identity(3, 3),
            b: DVector::zeros(3),
        };
        assert_eq!(bounding_box(&e).unwrap(), InputSet::boxed(vec![-1.0; 3], vec![1.0; 3]).unwrap());
        let b = InputSet::boxed(vec![0.0], vec![2.0]).unwrap();
        assert_eq!(bounding_box(&b).unwrap(), b);
        let tri = InputSet::Polytope {
            h_mat: DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            h: DVector::from_vec(vec![0.0, 0.0, 1.0]),
        };
        let InputSet::Box { lo, hi } = bounding_box(&tri).unwrap() else { panic!() };
        assert!(lo.iter().all(|v| v.abs() < 1e-7));
        assert!(hi.iter().all(|v| (v - 1.0).abs() < 1e-7));
        let half = InputSet::Polytope {
            h_mat: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            h: DVector::from_vec(vec![1.0]),
        };
        assert!(matches!(bounding_box(&half), Err(Error::Unbounded)));
    }
}
