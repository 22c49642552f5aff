//! The representation chain `H -> BN(W F(H)) / sqrt(d)` and its vanilla
//! counterpart.
//!
//! # Layer indexing
//!
//! Layer 1 is the input. A chain of depth `L` therefore applies `L - 1`
//! random steps and yields `L` traces, so a depth of 1 measures only the
//! input.
//!
//! # Activation scale
//!
//! Chain states have unit Frobenius norm, which puts individual entries at
//! order `1 / sqrt(d n)`. Nonlinear activations are applied at the scale of
//! the row-normalized state `Q = sqrt(d) H`, whose rows have unit norm, and
//! the result is scaled back by `1 / sqrt(d)`. For linear and ReLU this is
//! the same as applying `F` to `H` directly.
//!
//! # Weight sampling
//!
//! Only the product `W X` with `X = F(...)` enters a step. Writing the thin
//! QR factorization `X = Q R`, the rows of `W` are isotropic Gaussians, so
//! `W Q` is a `d x n` matrix with i.i.d. `N(0, 1/d)` entries and `W X` has
//! exactly the law of `G R`. [`WeightSampling::Factored`] draws `G` instead
//! of `W`, costing `O(d n^2)` per step instead of `O(d^2 n)`.
//! [`WeightSampling::Dense`] draws the full `W` and is what makes a fixed
//! seed replay the same weight sequence for different inputs.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::metrics::LayerTrace;
use crate::numerics::math;
use crate::numerics::{qr, r_factor, sample_gaussian_matrix, Matrix, SeededRng, Variance};
use crate::{Error, Result};

/// Row norms below this are rejected by [`batch_norm`].
pub const DEGENERATE_ROW_NORM: f64 = 1e-12;

/// Tolerance on the unit Frobenius norm accepted by [`Repr::new`].
pub const UNIT_NORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    Tanh,
    Sin,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 5] =
        [Activation::Linear, Activation::Relu, Activation::Tanh, Activation::Sin, Activation::Sigmoid];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => math::tanh(x),
            Activation::Sin => math::sin(x),
            Activation::Sigmoid => math::sigmoid(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sin => "sin",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(alloc::format!("unknown activation '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ChainKind {
    /// Row-normalized chain.
    #[default]
    Bn,
    /// No normalization beyond a global Frobenius rescale.
    Vanilla,
}

impl ChainKind {
    pub fn name(self) -> &'static str {
        match self {
            ChainKind::Bn => "bn",
            ChainKind::Vanilla => "vanilla",
        }
    }
}

impl fmt::Display for ChainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bn" => Ok(ChainKind::Bn),
            "vanilla" => Ok(ChainKind::Vanilla),
            _ => Err(Error::param(alloc::format!("unknown chain kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum WeightSampling {
    /// Draw the full `d x d` weight matrix.
    Dense,
    /// Draw the product directly through a thin QR of the input.
    #[default]
    Factored,
}

impl WeightSampling {
    pub fn name(self) -> &'static str {
        match self {
            WeightSampling::Dense => "dense",
            WeightSampling::Factored => "factored",
        }
    }
}

impl fmt::Display for WeightSampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightSampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dense" => Ok(WeightSampling::Dense),
            "factored" => Ok(WeightSampling::Factored),
            _ => Err(Error::param(alloc::format!("unknown weight sampling '{s}'"))),
        }
    }
}

/// Parameters of one simulated chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub d: usize,
    pub n: usize,
    pub depth: usize,
    pub activation: Activation,
    pub kind: ChainKind,
    pub sampling: WeightSampling,
    pub seed: u64,
}

impl ChainConfig {
    /// Linear BN chain with factored sampling and seed 0.
    pub fn new(d: usize, n: usize, depth: usize) -> Self {
        ChainConfig {
            d,
            n,
            depth,
            activation: Activation::Linear,
            kind: ChainKind::Bn,
            sampling: WeightSampling::Factored,
            seed: 0,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_kind(mut self, kind: ChainKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_sampling(mut self, sampling: WeightSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::param("width and batch size must be positive"));
        }
        if self.n > self.d {
            return Err(Error::param(alloc::format!("batch size n = {} exceeds width d = {}", self.n, self.d)));
        }
        if self.depth == 0 {
            return Err(Error::param("depth must be at least 1"));
        }
        Ok(())
    }
}

/// A `d x n` chain state with unit Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Repr {
    matrix: Matrix,
}

impl Repr {
    /// Wraps a matrix whose Frobenius norm is within [`UNIT_NORM_TOL`] of 1.
    pub fn new(matrix: Matrix) -> Result<Self> {
        matrix.check_finite()?;
        let norm = matrix.frobenius_norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm { norm });
        }
        Ok(Repr { matrix })
    }

    /// Rescales a nonzero matrix to unit Frobenius norm.
    pub fn normalized(matrix: Matrix) -> Result<Self> {
        matrix.check_finite()?;
        let norm = matrix.frobenius_norm();
        if norm == 0.0 {
            return Err(Error::ZeroMatrix);
        }
        Ok(Repr { matrix: matrix.scaled(1.0 / norm) })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn d(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n(&self) -> usize {
        self.matrix.cols()
    }

    /// Same state with columns reordered (`output[j] = input[perm[j]]`).
    pub fn permute_columns(&self, perm: &[usize]) -> Repr {
        Repr { matrix: self.matrix.permute_columns(perm) }
    }
}

/// How the input state of a chain is generated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InputKind {
    /// Gaussian matrix passed through one normalization step.
    #[default]
    Gaussian,
    /// Columns `normalize(u + eps g_i)` with shared Gaussian `u`, so all
    /// pairwise cosines are close to one.
    Correlated { eps: f64 },
    /// Orthonormal columns scaled by `1 / sqrt(n)`.
    Orthogonal,
}

impl InputKind {
    pub fn name(&self) -> &'static str {
        match self {
            InputKind::Gaussian => "gaussian",
            InputKind::Correlated { .. } => "correlated",
            InputKind::Orthogonal => "orthogonal",
        }
    }
}

/// Draws a `d x n` input state.
pub fn sample_input(kind: InputKind, d: usize, n: usize, rng: &mut SeededRng) -> Result<Repr> {
    if n == 0 || d == 0 {
        return Err(Error::param("input dimensions must be positive"));
    }
    let unit = Variance::new(1.0)?;
    match kind {
        InputKind::Gaussian => {
            let g = sample_gaussian_matrix(d, n, unit, rng);
            let h = batch_norm(&g)?.scaled(1.0 / math::sqrt(d as f64));
            Repr::normalized(h)
        }
        InputKind::Correlated { eps } => {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::param("correlation noise must be finite and non-negative"));
            }
            let mut u = alloc::vec![0.0; d];
            rng.fill_normal(&mut u, 1.0);
            let noise = sample_gaussian_matrix(d, n, unit, rng);
            let mut m = Matrix::from_fn(d, n, |i, j| u[i] + eps * noise[(i, j)]);
            let norms = m.column_norms();
            if let Some(col) = norms.iter().position(|&x| x == 0.0) {
                return Err(Error::ZeroColumn { col });
            }
            let scale: Vec<f64> = norms.iter().map(|x| 1.0 / (x * math::sqrt(n as f64))).collect();
            for i in 0..d {
                for (x, s) in m.row_mut(i).iter_mut().zip(&scale) {
                    *x *= s;
                }
            }
            Repr::normalized(m)
        }
        InputKind::Orthogonal => {
            if n > d {
                return Err(Error::param("orthogonal inputs need n <= d"));
            }
            let g = sample_gaussian_matrix(d, n, unit, rng);
            let q = qr(&g)?.q;
            Repr::normalized(q.scaled(1.0 / math::sqrt(n as f64)))
        }
    }
}

/// `diag(M M^T)^(-1/2) M`: every row scaled to unit norm, no mean removal.
pub fn batch_norm(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for (row, norm) in m.row_norms().into_iter().enumerate() {
        if !(norm >= DEGENERATE_ROW_NORM) {
            return Err(Error::DegenerateRow { row, norm });
        }
        out.row_mut(row).iter_mut().for_each(|x| *x /= norm);
    }
    Ok(out)
}

/// `F(sqrt(d) H) / sqrt(d)`, or `H` itself for the linear activation.
pub fn activate(h: &Matrix, activation: Activation) -> Matrix {
    if activation == Activation::Linear {
        return h.clone();
    }
    let s = math::sqrt(h.rows() as f64);
    h.map(|x| activation.apply(s * x) / s)
}

/// One draw of the pre-normalization product `W F(H)` with
/// `W ~ N(0, I_d / d)`.
pub fn sample_product(
    h: &Matrix,
    rng: &mut SeededRng,
    activation: Activation,
    sampling: WeightSampling,
) -> Result<Matrix> {
    h.check_finite()?;
    let d = h.rows();
    let x = activate(h, activation);
    let var = Variance::new(1.0 / d as f64)?;
    match sampling {
        WeightSampling::Dense => {
            let w = sample_gaussian_matrix(d, d, var, rng);
            Ok(w.matmul(&x))
        }
        WeightSampling::Factored => {
            if x.cols() > d {
                return Err(Error::param("factored sampling needs n <= d"));
            }
            let r = r_factor(&x)?;
            let g = sample_gaussian_matrix(d, x.cols(), var, rng);
            Ok(g.matmul(&r))
        }
    }
}

/// Output of one chain step together with the product it normalized.
#[derive(Debug, Clone)]
pub struct Step {
    pub next: Repr,
    pub product: Matrix,
}

fn finish(product: Matrix, kind: ChainKind) -> Result<Step> {
    let next = match kind {
        ChainKind::Bn => {
            let scaled = batch_norm(&product)?.scaled(1.0 / math::sqrt(product.rows() as f64));
            Repr::new(scaled)?
        }
        ChainKind::Vanilla => Repr::normalized(product.clone())?,
    };
    Ok(Step { next, product })
}

/// One step of either chain kind.
pub fn step(
    h: &Repr,
    rng: &mut SeededRng,
    activation: Activation,
    kind: ChainKind,
    sampling: WeightSampling,
) -> Result<Step> {
    let product = sample_product(h.matrix(), rng, activation, sampling)?;
    finish(product, kind)
}

/// `BN(W F(H)) / sqrt(d)` with a freshly drawn dense `W`.
pub fn bn_step(h: &Repr, rng: &mut SeededRng, activation: Activation) -> Result<Repr> {
    Ok(step(h, rng, activation, ChainKind::Bn, WeightSampling::Dense)?.next)
}

/// `BN(W F(H)) / sqrt(d)` with a caller-supplied `d x d` weight matrix.
pub fn bn_step_with_weights(h: &Repr, w: &Matrix, activation: Activation) -> Result<Repr> {
    if w.rows() != h.d() || w.cols() != h.d() {
        return Err(Error::shape("weight matrix must be d x d"));
    }
    Ok(finish(w.matmul(&activate(h.matrix(), activation)), ChainKind::Bn)?.next)
}

/// `W F(H)` rescaled to unit Frobenius norm, with a freshly drawn dense `W`.
pub fn vanilla_step(h: &Repr, rng: &mut SeededRng, activation: Activation) -> Result<Repr> {
    Ok(step(h, rng, activation, ChainKind::Vanilla, WeightSampling::Dense)?.next)
}

/// Runs a chain and calls `observe(layer, state, product)` at every layer,
/// starting with the input at layer 1 (where `product` is `None`).
///
/// Without an explicit input the chain starts from
/// `sample_input(InputKind::Gaussian, ..)` drawn from the same seeded stream
/// as the weights.
pub fn run_chain<F>(config: &ChainConfig, h0: Option<Repr>, mut observe: F) -> Result<()>
where
    F: FnMut(usize, &Repr, Option<&Matrix>) -> Result<()>,
{
    config.validate()?;
    let mut rng = SeededRng::new(config.seed);
    let mut h = match h0 {
        Some(h) => {
            if h.d() != config.d || h.n() != config.n {
                return Err(Error::shape(alloc::format!(
                    "input is {}x{} but the chain is configured for {}x{}",
                    h.d(),
                    h.n(),
                    config.d,
                    config.n
                )));
            }
            h
        }
        None => sample_input(InputKind::Gaussian, config.d, config.n, &mut rng)?,
    };
    observe(1, &h, None).map_err(|e| e.at_layer(1))?;
    for layer in 2..=config.depth {
        let s = step(&h, &mut rng, config.activation, config.kind, config.sampling).map_err(|e| e.at_layer(layer))?;
        observe(layer, &s.next, Some(&s.product)).map_err(|e| e.at_layer(layer))?;
        h = s.next;
    }
    Ok(())
}

/// Per-layer diagnostics of a simulated chain, one trace per layer.
pub fn simulate_chain(config: &ChainConfig, h0: Option<Repr>) -> Result<Vec<LayerTrace>> {
    let mut traces = Vec::with_capacity(config.depth);
    run_chain(config, h0, |layer, h, product| {
        traces.push(LayerTrace::measure(layer, h.matrix(), product)?);
        Ok(())
    })?;
    Ok(traces)
}
