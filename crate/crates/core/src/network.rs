//! Feed-forward networks: validation, evaluation, the stacked compact form and
//! the two-layer clamp embedding.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar activation applied coordinate-wise after every hidden layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Elu(f64),
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Elu(a) => {
                if x >= 0.0 {
                    x
                } else {
                    a * x.exp_m1()
                }
            }
            Activation::Identity => x,
        }
    }

    /// Global slope bounds `[alpha, beta]` of the activation.
    pub fn slope_range(self) -> SlopeRange {
        let (alpha, beta) = match self {
            Activation::Relu | Activation::Tanh | Activation::Sigmoid => (0.0, 1.0),
            Activation::LeakyRelu(a) => (a.min(1.0), a.max(1.0)),
            Activation::Elu(a) => (0.0, a.max(1.0)),
            Activation::Identity => (1.0, 1.0),
        };
        SlopeRange { alpha, beta }
    }

    /// Value at the origin; nonzero only for the sigmoid.
    pub fn offset(self) -> f64 {
        self.apply(0.0)
    }

    /// Derivative at the origin.
    pub fn slope_at_zero(self) -> f64 {
        match self {
            Activation::Relu | Activation::LeakyRelu(_) | Activation::Elu(_) => 1.0,
            Activation::Tanh | Activation::Identity => 1.0,
            Activation::Sigmoid => 0.25,
        }
    }

    /// Piecewise linear `max(alpha x, beta x)` type activations handled by the
    /// ReLU-specific constraint families.
    pub fn relu_like(self) -> Option<SlopeRange> {
        match self {
            Activation::Relu => Some(SlopeRange { alpha: 0.0, beta: 1.0 }),
            Activation::LeakyRelu(a) if a <= 1.0 => Some(SlopeRange { alpha: a, beta: 1.0 }),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Relu => f.write_str("relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky_relu:{a}"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::Elu(a) => write!(f, "elu:{a}"),
            Activation::Identity => f.write_str("identity"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let param = |rest: &str| -> Result<f64> {
            let a: f64 = rest
                .parse()
                .map_err(|_| Error::UnknownActivation(s.to_string()))?;
            if !a.is_finite() || a <= 0.0 {
                return Err(Error::InvalidInput(format!("activation parameter must be positive in `{s}`")));
            }
            Ok(a)
        };
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            _ => {
                if let Some(rest) = s.strip_prefix("leaky_relu:") {
                    Ok(Activation::LeakyRelu(param(rest)?))
                } else if let Some(rest) = s.strip_prefix("elu:") {
                    Ok(Activation::Elu(param(rest)?))
                } else {
                    Err(Error::UnknownActivation(s.to_string()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeRange {
    pub alpha: f64,
    pub beta: f64,
}

impl SlopeRange {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidInput("sector bounds must be finite".into()));
        }
        if alpha > beta {
            return Err(Error::InvalidInput(format!("sector [{alpha}, {beta}] is reversed")));
        }
        Ok(SlopeRange { alpha, beta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Layer {
    pub fn new(w: DMatrix<f64>, b: DVector<f64>) -> Self {
        Layer { w, b }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.w * x + &self.b
    }
}

/// `x^{k+1} = φ(W^k x^k + b^k)` for the hidden layers followed by an affine
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralNetwork {
    activation: Activation,
    layers: Vec<Layer>,
}

/// Pre- and post-activation values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// `states[k] = x^k`; `states[0]` is the input.
    pub states: Vec<DVector<f64>>,
    /// `pre[k] = W^k x^k + b^k`; the last entry is the output.
    pub pre: Vec<DVector<f64>>,
}

impl Trace {
    pub fn output(&self) -> &DVector<f64> {
        self.pre.last().expect("at least one layer")
    }

    /// Concatenated `[x^0; x^1; ...; x^ℓ]`.
    pub fn stacked(&self) -> DVector<f64> {
        let all: Vec<f64> = self.states.iter().flat_map(|s| s.iter().copied()).collect();
        DVector::from_vec(all)
    }
}

impl NeuralNetwork {
    pub fn new(activation: Activation, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.w.nrows() != layer.b.len() {
                return Err(Error::DimensionMismatch {
                    context: "bias length",
                    expected: layer.w.nrows(),
                    actual: layer.b.len(),
                });
            }
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("network weights"));
            }
            if layer.w.nrows() == 0 || layer.w.ncols() == 0 {
                return Err(Error::InvalidInput(format!("layer {k} has an empty weight matrix")));
            }
            if k > 0 && layers[k - 1].w.nrows() != layer.w.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "layer chain",
                    expected: layers[k - 1].w.nrows(),
                    actual: layer.w.ncols(),
                });
            }
        }
        Ok(NeuralNetwork { activation, layers })
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of hidden layers ℓ.
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.nrows()
    }

    /// Sizes `n_1..n_ℓ` of the hidden layers.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.num_hidden()].iter().map(|l| l.w.nrows()).collect()
    }

    pub fn num_neurons(&self) -> usize {
        self.hidden_sizes().iter().sum()
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.trace(x)?.output().clone())
    }

    pub fn forward_slice(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.forward(&DVector::from_column_slice(x))
    }

    pub fn trace(&self, x: &DVector<f64>) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut states = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&states[k]);
            if k < self.num_hidden() {
                states.push(z.map(|v| self.activation.apply(v)));
            }
            pre.push(z);
        }
        Ok(Trace { states, pre })
    }

    pub fn compact_form(&self) -> Result<CompactNetwork> {
        CompactNetwork::new(self)
    }

    /// Appends two ReLU layers so the output becomes the elementwise clamp of
    /// `f(x)` to `[u_lo, u_hi]`.
    pub fn embed_projection(&self, u_lo: &[f64], u_hi: &[f64]) -> Result<NeuralNetwork> {
        if self.activation != Activation::Relu {
            return Err(Error::InvalidInput(format!(
                "projection embedding needs a relu network, got {}",
                self.activation
            )));
        }
        let m = self.output_dim();
        for (what, v) in [("lower clamp", u_lo), ("upper clamp", u_hi)] {
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    context: what,
                    expected: m,
                    actual: v.len(),
                });
            }
        }
        if u_lo.iter().chain(u_hi).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("clamp bounds"));
        }
        if let Some(i) = (0..m).find(|&i| u_lo[i] > u_hi[i]) {
            return Err(Error::InvalidInput(format!("clamp bounds reversed in coordinate {i}")));
        }
        let lo = DVector::from_column_slice(u_lo);
        let hi = DVector::from_column_slice(u_hi);
        let mut layers = self.layers.clone();
        let last = layers.pop().unwrap();
        layers.push(Layer::new(last.w, last.b - &lo));
        layers.push(Layer::new(-DMatrix::identity(m, m), &hi - &lo));
        layers.push(Layer::new(-DMatrix::identity(m, m), hi));
        NeuralNetwork::new(Activation::Relu, layers)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from(self)).expect("network serializes")
    }
}

/// Network with weights and biases drawn from `N(0, std²)` where
/// `std = 1/sqrt(n_x)` and `n_x` is the input dimension.
pub fn random_network(dims: &[usize], activation: Activation, seed: u64) -> Result<NeuralNetwork> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidInput("dims needs at least two positive entries".into()));
    }
    let std = 1.0 / (dims[0] as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|d| {
            let w = DMatrix::from_fn(d[1], d[0], |_, _| normal.sample(&mut rng));
            let b = DVector::from_fn(d[1], |_, _| normal.sample(&mut rng));
            Layer::new(w, b)
        })
        .collect();
    NeuralNetwork::new(activation, layers)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    activation: String,
    layers: Vec<LayerFile>,
}

/// Row-major nested vectors to a matrix; rows must have equal length.
pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != nc) {
        return Err(Error::DimensionMismatch {
            context: what,
            expected: nc,
            actual: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl TryFrom<NetworkFile> for NeuralNetwork {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        let activation: Activation = file.activation.parse()?;
        let layers = file
            .layers
            .iter()
            .map(|l| Ok(Layer::new(matrix_from_rows(&l.w, "weight rows")?, DVector::from_vec(l.b.clone()))))
            .collect::<Result<Vec<_>>>()?;
        NeuralNetwork::new(activation, layers)
    }
}

impl From<&NeuralNetwork> for NetworkFile {
    fn from(net: &NeuralNetwork) -> Self {
        NetworkFile {
            activation: net.activation.to_string(),
            layers: net
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: matrix_to_rows(&l.w),
                    b: l.b.iter().copied().collect(),
                })
                .collect(),
        }
    }
}

/// Block form of the hidden layers over the stacked state
/// `𝐱 = [x^0; x^1; ...; x^ℓ]`: `B𝐱 = φ(A𝐱 + b)` and `f(x) = W^ℓ E^ℓ 𝐱 + b^ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactNetwork {
    pub n0: usize,
    pub hidden: Vec<usize>,
    pub a: DMatrix<f64>,
    pub b_sel: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
    pub activation: Activation,
}

impl CompactNetwork {
    pub fn new(net: &NeuralNetwork) -> Result<Self> {
        let ell = net.num_hidden();
        if ell == 0 {
            return Err(Error::InvalidInput("compact form needs at least one hidden layer".into()));
        }
        let n0 = net.input_dim();
        let hidden = net.hidden_sizes();
        let n: usize = hidden.iter().sum();
        let mut a = DMatrix::zeros(n, n0 + n);
        let mut bias = DVector::zeros(n);
        let (mut row, mut col) = (0, 0);
        for layer in &net.layers()[..ell] {
            let (r, c) = layer.w.shape();
            a.view_mut((row, col), (r, c)).copy_from(&layer.w);
            bias.rows_mut(row, r).copy_from(&layer.b);
            row += r;
            col += c;
        }
        let mut b_sel = DMatrix::zeros(n, n0 + n);
        b_sel.view_mut((0, n0), (n, n)).fill_with_identity();
        let last = &net.layers()[ell];
        Ok(CompactNetwork {
            n0,
            hidden,
            a,
            b_sel,
            bias,
            w_out: last.w.clone(),
            b_out: last.b.clone(),
            activation: net.activation(),
        })
    }

    /// Total hidden neurons n.
    pub fn n(&self) -> usize {
        self.bias.len()
    }

    /// Length of the stacked state, `n_0 + n`.
    pub fn state_dim(&self) -> usize {
        self.n0 + self.n()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.nrows()
    }

    /// Column offset of `x^k` inside the stacked state.
    pub fn offset(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.n0 + self.hidden[..k - 1].iter().sum::<usize>()
        }
    }

    /// Selector `E^k` with `E^k 𝐱 = x^k`.
    pub fn selector(&self, k: usize) -> DMatrix<f64> {
        let start = self.offset(k);
        let len = if k == 0 { self.n0 } else { self.hidden[k - 1] };
        let mut e = DMatrix::zeros(len, self.state_dim());
        e.view_mut((0, start), (len, len)).fill_with_identity();
        e
    }

    /// Index ranges of each hidden layer inside the neuron vector `1..n`.
    pub fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.hidden
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect()
    }
}
