//! Weight initializers.
//!
//! Besides the Gaussian and Xavier baselines this module builds weights from
//! the SVD of a batch of representations. For `H = U S V^T` (with `U` square)
//! the weights
//!
//! ```text
//! W = V' S^(-1/2) U^T / sqrt(sum_i s_i)
//! ```
//!
//! with any `V'` having orthonormal columns give `W H = V' S^(1/2) V^T / ..`,
//! whose singular values are `sqrt(s_i) / sqrt(sum_j s_j)`. Taking square
//! roots flattens the spectrum, so `V(W H) < V(H)` unless the spectrum is
//! already flat.
//!
//! When `H` has more columns `n` than rows `r`, both `H` and `W H` have rank
//! at most `r` and their orthogonality gap can never drop below
//! `sqrt((n - r) / (n r))`. [`verify_init_gap`] reports that floor and only
//! demands a decrease above it.
//!
//! The convolutional variant applies the same construction to the im2col
//! ("unfolded") patch matrix.

use alloc::vec;
use alloc::vec::Vec;

use crate::metrics::orthogonality_gap;
use crate::numerics::math;
use crate::numerics::{haar_orthogonal, qr, sample_gaussian_matrix, thin_svd, Matrix, SeededRng, Variance};
use crate::{Error, Result};

/// `N(0, 1 / fan_in)` entries, shape `fan_out x fan_in`.
pub fn gaussian_init(fan_out: usize, fan_in: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::param("layer dimensions must be positive"));
    }
    Ok(sample_gaussian_matrix(fan_out, fan_in, Variance::new(1.0 / fan_in as f64)?, rng))
}

/// `N(0, 2 / (fan_in + fan_out))` entries, shape `fan_out x fan_in`.
pub fn xavier_init(fan_out: usize, fan_in: usize, rng: &mut SeededRng) -> Result<Matrix> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::param("layer dimensions must be positive"));
    }
    let var = Variance::new(2.0 / (fan_in + fan_out) as f64)?;
    Ok(sample_gaussian_matrix(fan_out, fan_in, var, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    GaussianVarianceOverD,
    Xavier,
    #[default]
    IterativeOrthogonal,
}

/// What happens to singular values below `clamp_ratio * s_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClampMode {
    /// Reject the input as rank deficient.
    #[default]
    Strict,
    /// Raise them to the threshold and count them.
    Permissive,
}

pub const DEFAULT_CLAMP_RATIO: f64 = 1e-8;
pub const MAX_CLAMP_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitScheme {
    pub kind: InitKind,
    clamp_ratio: f64,
    pub mode: ClampMode,
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::new(InitKind::IterativeOrthogonal)
    }
}

impl InitScheme {
    pub fn new(kind: InitKind) -> Self {
        InitScheme { kind, clamp_ratio: DEFAULT_CLAMP_RATIO, mode: ClampMode::Strict }
    }

    /// Rejects ratios outside `(0, 1e-3]`.
    pub fn with_clamp_ratio(mut self, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= MAX_CLAMP_RATIO) {
            return Err(Error::param(alloc::format!("clamp ratio must lie in (0, {MAX_CLAMP_RATIO}], got {ratio}")));
        }
        self.clamp_ratio = ratio;
        Ok(self)
    }

    pub fn with_mode(mut self, mode: ClampMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn clamp_ratio(&self) -> f64 {
        self.clamp_ratio
    }

    /// Baseline weights of shape `fan_out x fan_in`. Data-dependent kinds
    /// need [`iterative_orthogonal_init`] instead.
    pub fn sample_baseline(&self, fan_out: usize, fan_in: usize, rng: &mut SeededRng) -> Result<Matrix> {
        match self.kind {
            InitKind::GaussianVarianceOverD => gaussian_init(fan_out, fan_in, rng),
            InitKind::Xavier => xavier_init(fan_out, fan_in, rng),
            InitKind::IterativeOrthogonal => {
                Err(Error::param("iterative orthogonal weights depend on the representations"))
            }
        }
    }
}

/// Weights from [`iterative_orthogonal_init`].
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalInit {
    pub weights: Matrix,
    /// Singular values raised to the clamp threshold (permissive mode).
    pub clamped: usize,
    /// `V'` came from a Haar draw because the slice of `V` was singular.
    pub used_fallback: bool,
}

/// Clamped singular values, `U` and `V` of an `r x N` matrix with `N >= r`.
fn clamped_svd(h: &Matrix, scheme: &InitScheme) -> Result<(Vec<f64>, Matrix, Matrix, usize)> {
    let (r, cols) = h.shape();
    if cols < r {
        return Err(Error::param(alloc::format!("need at least as many samples as features, got {r}x{cols}")));
    }
    let svd = thin_svd(h)?;
    let s = svd.singulars.values();
    if s[0] == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let cut = scheme.clamp_ratio * s[0];
    let small = s.iter().filter(|&&x| x < cut).count();
    if small > 0 && scheme.mode == ClampMode::Strict {
        return Err(Error::RankDeficient { rank: r - small, required: r });
    }
    let values = s.iter().map(|&x| x.max(cut)).collect();
    Ok((values, svd.left, svd.right, small))
}

/// `c V' S^(-1/2) U^T` for a caller-chosen `V'` of shape `out x r`, where
/// `H` is `r x N` with `N >= r`.
pub fn orthogonalizing_weights(h: &Matrix, v_prime: &Matrix, scheme: &InitScheme) -> Result<OrthogonalInit> {
    if v_prime.cols() != h.rows() {
        return Err(Error::shape("V' must have as many columns as H has rows"));
    }
    let (s, u, _, clamped) = clamped_svd(h, scheme)?;
    Ok(OrthogonalInit { weights: assemble(&s, &u, v_prime), clamped, used_fallback: false })
}

fn assemble(s: &[f64], u: &Matrix, v_prime: &Matrix) -> Matrix {
    let c = 1.0 / math::sqrt(s.iter().sum::<f64>());
    // S^(-1/2) U^T, row i scaled by 1/sqrt(s_i).
    let mut inner = u.transpose();
    for (i, &si) in s.iter().enumerate() {
        let f = c / math::sqrt(si);
        inner.row_mut(i).iter_mut().for_each(|x| *x *= f);
    }
    v_prime.matmul(&inner)
}

/// Pivot magnitude below which a slice of `V` counts as singular.
const SLICE_PIVOT_TOL: f64 = 1e-10;

/// Orthonormal `V'` of shape `out x r` taken from the first rows of the
/// `N x r` right factor `v`.
///
/// For `out >= r` the columns are orthonormal (Q of the first `out` rows);
/// for `out < r` the rows are orthonormal (leading rows of the square Q of
/// the first `r` rows). A Haar draw replaces singular slices.
fn slice_orthogonal(v: &Matrix, out: usize, rng: &mut SeededRng) -> Result<(Matrix, bool)> {
    let r = v.cols();
    let take = out.max(r).min(v.rows());
    let slice = v.top_rows(take);
    let f = qr(&slice)?;
    let singular = (0..r).any(|i| f.r[(i, i)].abs() < SLICE_PIVOT_TOL);
    let (q, fallback) = if singular {
        let haar = haar_orthogonal(take, rng);
        (Matrix::from_fn(take, r, |i, j| haar[(i, j)]), true)
    } else {
        let mut q = f.q;
        for j in 0..r {
            if f.r[(j, j)] < 0.0 {
                for i in 0..take {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        (q, false)
    };
    let v_prime = if out >= r {
        q
    } else {
        // Square r x r orthogonal; its first `out` rows are orthonormal.
        q.top_rows(out)
    };
    Ok((v_prime, fallback))
}

fn init_rectangular(h: &Matrix, out: usize, scheme: &InitScheme, rng: &mut SeededRng) -> Result<OrthogonalInit> {
    if out == 0 {
        return Err(Error::param("output dimension must be positive"));
    }
    let (s, u, v, clamped) = clamped_svd(h, scheme)?;
    if out > v.rows() {
        return Err(Error::param("output dimension exceeds the number of samples"));
    }
    let (v_prime, used_fallback) = slice_orthogonal(&v, out, rng)?;
    Ok(OrthogonalInit { weights: assemble(&s, &u, &v_prime), clamped, used_fallback })
}

/// Square `d x d` weights that flatten the spectrum of the `d x n` batch
/// `h` (`n >= d`).
///
/// `rng` is only consumed when the slice of `V` is singular.
pub fn iterative_orthogonal_init(h: &Matrix, scheme: &InitScheme, rng: &mut SeededRng) -> Result<OrthogonalInit> {
    init_rectangular(h, h.rows(), scheme, rng)
}

/// Smallest orthogonality gap of an `n`-column matrix of rank at most `r`.
pub fn rank_floor(n: usize, r: usize) -> f64 {
    if r == 0 || r >= n {
        return 0.0;
    }
    math::sqrt((n - r) as f64 / (n as f64 * r as f64))
}

/// Gaps below this are treated as already orthogonal.
pub const GAP_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitGap {
    pub v_before: f64,
    pub v_after: f64,
    /// Rank floor of `H`, the lowest gap any `W H` can reach.
    pub floor: f64,
    pub strict_decrease: bool,
    /// `v_before` exceeds the floor by more than [`GAP_EPS`].
    pub decrease_required: bool,
}

impl InitGap {
    pub fn holds(&self) -> bool {
        self.strict_decrease || !self.decrease_required
    }
}

/// Orthogonality gap of `h` and of `w h`.
pub fn verify_init_gap(h: &Matrix, w: &Matrix) -> Result<InitGap> {
    if w.cols() != h.rows() {
        return Err(Error::shape("W must have as many columns as H has rows"));
    }
    let v_before = orthogonality_gap(h)?;
    let v_after = orthogonality_gap(&w.matmul(h))?;
    let floor = rank_floor(h.cols(), h.rows().min(h.cols()));
    Ok(InitGap {
        v_before,
        v_after,
        floor,
        strict_decrease: v_after < v_before,
        decrease_required: v_before - floor > GAP_EPS,
    })
}

/// Applies freshly built weights layer after layer (no activation) and
/// returns the gap of the input followed by the gap after every layer.
pub fn propagate_orthogonal_init(
    h0: &Matrix,
    layers: usize,
    scheme: &InitScheme,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let mut gaps = Vec::with_capacity(layers + 1);
    gaps.push(orthogonality_gap(h0)?);
    let mut h = h0.clone();
    for layer in 0..layers {
        let w = iterative_orthogonal_init(&h, scheme, rng).map_err(|e| e.at_layer(layer + 1))?;
        h = w.weights.matmul(&h);
        let norm = h.frobenius_norm();
        h.scale_in_place(1.0 / norm);
        gaps.push(orthogonality_gap(&h)?);
    }
    Ok(gaps)
}

/// A batch of square multi-channel images, indexed `(channel, y, x, sample)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    channels: usize,
    side: usize,
    samples: usize,
    data: Vec<f64>,
}

impl FeatureMaps {
    /// `data` is laid out channel-major, then row, column and sample.
    pub fn new(channels: usize, side: usize, samples: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || side == 0 || samples == 0 {
            return Err(Error::shape("feature maps need positive dimensions"));
        }
        if data.len() != channels * side * side * samples {
            return Err(Error::shape("feature map data length does not match its shape"));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("feature maps must be finite"));
        }
        Ok(FeatureMaps { channels, side, samples, data })
    }

    pub fn gaussian(channels: usize, side: usize, samples: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut data = vec![0.0; channels * side * side * samples];
        rng.fill_normal(&mut data, 1.0);
        FeatureMaps::new(channels, side, samples, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    #[inline]
    fn offset(&self, c: usize, y: usize, x: usize, t: usize) -> usize {
        ((c * self.side + y) * self.side + x) * self.samples + t
    }

    pub fn get(&self, c: usize, y: usize, x: usize, t: usize) -> f64 {
        self.data[self.offset(c, y, x, t)]
    }

    /// One column per sample, rows `c * side^2 + y * side + x`.
    pub fn sample_matrix(&self) -> Matrix {
        let per = self.side * self.side;
        Matrix::from_fn(self.channels * per, self.samples, |row, t| {
            let c = row / per;
            let y = (row % per) / self.side;
            let x = row % self.side;
            self.get(c, y, x, t)
        })
    }
}

/// Geometry of a same-padded, stride-one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvInitSpec {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_filters: usize,
    pub side: usize,
    pub padding: usize,
}

impl ConvInitSpec {
    /// Odd `kernel`; padding `(kernel - 1) / 2` keeps the image side fixed.
    pub fn new(kernel: usize, in_channels: usize, out_filters: usize, side: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::param("kernel size must be odd"));
        }
        if in_channels == 0 || out_filters == 0 || side == 0 {
            return Err(Error::param("convolution dimensions must be positive"));
        }
        Ok(ConvInitSpec { kernel, in_channels, out_filters, side, padding: (kernel - 1) / 2 })
    }

    /// Rows of the unfolded matrix, `in_channels * kernel^2`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Source pixel of patch offset `(dy, dx)` centered at `(y, x)`.
    #[inline]
    fn source(&self, y: usize, dy: usize) -> Option<usize> {
        let pos = (y + dy).checked_sub(self.padding)?;
        (pos < self.side).then_some(pos)
    }
}

/// im2col: column `t m^2 + y m + x` holds the zero-padded `k x k` patch of
/// every input channel centered at pixel `(y, x)` of sample `t`, with row
/// `c k^2 + dy k + dx`.
pub fn unfold(h: &FeatureMaps, spec: &ConvInitSpec) -> Result<Matrix> {
    if h.channels != spec.in_channels || h.side != spec.side {
        return Err(Error::shape("feature maps do not match the convolution geometry"));
    }
    let (k, m) = (spec.kernel, spec.side);
    let mut out = Matrix::zeros(spec.patch_len(), m * m * h.samples);
    for t in 0..h.samples {
        for y in 0..m {
            for x in 0..m {
                let col = t * m * m + y * m + x;
                for c in 0..spec.in_channels {
                    for dy in 0..k {
                        let Some(sy) = spec.source(y, dy) else { continue };
                        for dx in 0..k {
                            let Some(sx) = spec.source(x, dx) else { continue };
                            out[(c * k * k + dy * k + dx, col)] = h.get(c, sy, sx, t);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// col2im: adds every patch entry back onto the pixel it was read from.
///
/// For `kernel = 1` this exactly inverts [`unfold`]; for larger kernels each
/// pixel is multiplied by the number of patches that cover it.
pub fn fold(m: &Matrix, spec: &ConvInitSpec) -> Result<FeatureMaps> {
    let side = spec.side;
    let k = spec.kernel;
    if m.rows() != spec.patch_len() || m.cols() % (side * side) != 0 {
        return Err(Error::shape("unfolded matrix does not match the convolution geometry"));
    }
    let samples = m.cols() / (side * side);
    let mut maps =
        FeatureMaps::new(spec.in_channels, side, samples, vec![0.0; spec.in_channels * side * side * samples])?;
    for t in 0..samples {
        for y in 0..side {
            for x in 0..side {
                let col = t * side * side + y * side + x;
                for c in 0..spec.in_channels {
                    for dy in 0..k {
                        let Some(sy) = spec.source(y, dy) else { continue };
                        for dx in 0..k {
                            let Some(sx) = spec.source(x, dx) else { continue };
                            let o = maps.offset(c, sy, sx, t);
                            maps.data[o] += m[(c * k * k + dy * k + dx, col)];
                        }
                    }
                }
            }
        }
    }
    Ok(maps)
}

/// Convolution weights and the gaps they produce.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvInit {
    /// `out_filters x (in_channels k^2)`.
    pub weights: Matrix,
    pub clamped: usize,
    pub used_fallback: bool,
    /// Gap of the unfolded patch matrix and of `W` times it.
    pub unfolded: InitGap,
    /// Gap of the per-sample input maps and of the per-sample output maps.
    pub maps_before: f64,
    pub maps_after: f64,
}

/// Builds filters from the SVD of the unfolded batch.
///
/// The gap decrease is only guaranteed on the unfolded product and only
/// when `out_filters >= in_channels k^2`; with fewer filters `W H'` has
/// lower rank than `H'` and the rank floor can exceed the input gap. The
/// per-sample feature-map gaps are reported without any claim.
pub fn conv_iterative_init(
    h: &FeatureMaps,
    spec: &ConvInitSpec,
    scheme: &InitScheme,
    rng: &mut SeededRng,
) -> Result<ConvInit> {
    let unfolded = unfold(h, spec)?;
    if unfolded.cols() < unfolded.rows() {
        return Err(Error::param(alloc::format!(
            "unfolded batch has {} columns but needs at least {}",
            unfolded.cols(),
            unfolded.rows()
        )));
    }
    let init = init_rectangular(&unfolded, spec.out_filters, scheme, rng)?;
    let gap = verify_init_gap(&unfolded, &init.weights)?;
    let product = init.weights.matmul(&unfolded);
    let out_spec = ConvInitSpec::new(1, spec.out_filters, spec.out_filters, spec.side)?;
    let out_maps = fold(&product, &out_spec)?;
    Ok(ConvInit {
        maps_before: orthogonality_gap(&h.sample_matrix())?,
        maps_after: orthogonality_gap(&out_maps.sample_matrix())?,
        weights: init.weights,
        clamped: init.clamped,
        used_fallback: init.used_fallback,
        unfolded: gap,
    })
}
