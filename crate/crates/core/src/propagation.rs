//! Heat semigroup, smoothing function, and unitary propagation.
//!
//! All production paths apply `f(H)` through sparse Chebyshev recurrences
//! (see [`crate::chebyshev`]); dense-eigendecomposition and scaling-squaring
//! backends are kept for graphs up to [`DENSE_MAX`] vertices as independent
//! oracles and exact spectral projections.
//!
//! The heat kernel is normalized against the vertex measure: the kernel row
//! at `x` is `exp(-sH)(delta_x / mu(x))`, so that `exp(-sH) psi (x) =
//! sum_y k_s(x, y) psi(y) mu(y)`. On a finite truncation the evolution
//! conserves `sum psi mu`, hence the mu-weighted row sums equal 1 up to
//! roundoff and the Markov bound holds with slack [`MARKOV_SLACK`].
//!
//! The smoothing function is the squared kernel-row norm
//! `phi(s, x) = sum_y k_s(x, y)^2 mu(y)`, which satisfies the bound
//! `phi(s, x) <= 1 / mu(x)`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chebyshev::{ChebyshevExpansion, ShiftScale, DEFAULT_TAIL_TOL, MAX_STEP_TAU};
use crate::error::{Error, Result};
use crate::operator::LaplacianOperator;
use crate::{parallel, C64};

/// Largest vertex count served by the dense backends.
pub const DENSE_MAX: usize = 512;

/// Heat values above this floor are treated as roundoff and clamped to 0.
pub const HEAT_NEGATIVITY_FLOOR: f64 = -1e-12;

/// Slack allowed on the mu-weighted kernel row sums.
pub const MARKOV_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatMethod {
    Chebyshev,
    DenseEigen,
    ScaledSquaring,
}

/// Applies a Chebyshev expansion of `f(H)` to a state via the three-term
/// recurrence on `T_k(S) psi` with `S = (H - c) / r`.
pub fn cheb_apply(
    h: &LaplacianOperator,
    expansion: &ChebyshevExpansion,
    psi: &[C64],
) -> Result<Vec<C64>> {
    let n = h.vertex_count();
    if psi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: psi.len() });
    }
    let coeffs = expansion.coeffs();
    let mut out: Vec<C64> = psi.iter().map(|&z| coeffs[0] * z).collect();
    if coeffs.len() == 1 {
        return Ok(out);
    }
    let shift = expansion.shift();
    let mut prev = psi.to_vec();
    let mut cur = s_apply(h, shift, psi)?;
    for (o, &c) in out.iter_mut().zip(cur.iter()) {
        *o += coeffs[1] * c;
    }
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for &coeff in &coeffs[2..] {
        // buf = 2 S cur - prev
        h.apply_into(&cur, &mut buf)?;
        let inv_r = 1.0 / shift.half_width;
        for x in 0..n {
            let s_cur = (buf[x] - shift.center * cur[x]) * inv_r;
            buf[x] = 2.0 * s_cur - prev[x];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut buf);
        for (o, &c) in out.iter_mut().zip(cur.iter()) {
            *o += coeff * c;
        }
    }
    Ok(out)
}

fn s_apply(h: &LaplacianOperator, shift: ShiftScale, psi: &[C64]) -> Result<Vec<C64>> {
    let mut out = h.apply(psi)?;
    let inv_r = 1.0 / shift.half_width;
    for (o, &p) in out.iter_mut().zip(psi.iter()) {
        *o = (*o - shift.center * p) * inv_r;
    }
    Ok(out)
}

/// Chebyshev expansion of `exp(-sH)` for this operator, reusable across
/// states and kernel rows.
pub fn heat_expansion(h: &LaplacianOperator, s: f64) -> Result<ChebyshevExpansion> {
    if s <= 0.0 {
        return Err(Error::NonpositiveTime(s));
    }
    ChebyshevExpansion::heat(h.lambda_max_est(), s, DEFAULT_TAIL_TOL)
}

/// `exp(-sH) psi` with the Chebyshev backend.
pub fn heat_apply(h: &LaplacianOperator, s: f64, psi: &[C64]) -> Result<Vec<C64>> {
    let expansion = heat_expansion(h, s)?;
    cheb_apply(h, &expansion, psi)
}

/// `exp(-sH) psi` with an explicit backend choice.
pub fn heat_apply_with(
    h: &LaplacianOperator,
    s: f64,
    psi: &[C64],
    method: HeatMethod,
) -> Result<Vec<C64>> {
    if s <= 0.0 {
        return Err(Error::NonpositiveTime(s));
    }
    match method {
        HeatMethod::Chebyshev => heat_apply(h, s, psi),
        HeatMethod::DenseEigen => {
            let dense = DenseSpectral::new(h)?;
            dense.heat_apply(s, psi)
        }
        HeatMethod::ScaledSquaring => heat_apply_scaled_squaring(h, s, psi),
    }
}

/// One row of the heat kernel, `k_s(x, .)`.
#[derive(Debug, Clone)]
pub struct HeatKernelSlice {
    pub source: usize,
    pub time: f64,
    pub values: Vec<f64>,
    pub method: HeatMethod,
}

impl HeatKernelSlice {
    /// Values with roundoff negatives (above the floor) clamped to zero.
    pub fn clamped_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|&v| if v < 0.0 && v >= HEAT_NEGATIVITY_FLOOR { 0.0 } else { v })
            .collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum_y k_s(x, y) mu(y)`; equals 1 up to roundoff on a finite graph.
    pub fn markov_sum(&self, mu: &[f64]) -> f64 {
        self.values.iter().zip(mu.iter()).map(|(&v, &m)| v * m).sum()
    }

    /// Checks nonnegativity above the floor and the Markov bound.
    pub fn invariant_violations(&self, mu: &[f64]) -> Vec<String> {
        let mut out = Vec::new();
        let min = self.min_value();
        if min < HEAT_NEGATIVITY_FLOOR {
            out.push(format!("kernel value {min} below floor {HEAT_NEGATIVITY_FLOOR}"));
        }
        let sum = self.markov_sum(mu);
        if sum > 1.0 + MARKOV_SLACK {
            out.push(format!("Markov sum {sum} exceeds 1 + {MARKOV_SLACK}"));
        }
        out
    }
}

/// Heat-kernel row at vertex `x`, computed as `exp(-sH)(delta_x / mu(x))`.
pub fn heat_kernel_row(
    h: &LaplacianOperator,
    s: f64,
    x: usize,
    method: HeatMethod,
) -> Result<HeatKernelSlice> {
    let n = h.vertex_count();
    if x >= n {
        return Err(Error::VertexOutOfRange { index: x, count: n });
    }
    let mut delta = vec![C64::new(0.0, 0.0); n];
    delta[x] = C64::new(1.0 / h.graph().mu_of(x), 0.0);
    let row = heat_apply_with(h, s, &delta, method)?;
    Ok(HeatKernelSlice {
        source: x,
        time: s,
        values: row.into_iter().map(|z| z.re).collect(),
        method,
    })
}

/// Smoothing function `phi(s, x) = sum_y k_s(x, y)^2 mu(y)`.
pub fn phi(h: &LaplacianOperator, s: f64, x: usize) -> Result<f64> {
    let expansion = heat_expansion(h, s)?;
    phi_from_expansion(h, &expansion, x)
}

fn phi_from_expansion(h: &LaplacianOperator, expansion: &ChebyshevExpansion, x: usize) -> Result<f64> {
    let n = h.vertex_count();
    if x >= n {
        return Err(Error::VertexOutOfRange { index: x, count: n });
    }
    let mu = h.graph().mu();
    let mut delta = vec![C64::new(0.0, 0.0); n];
    delta[x] = C64::new(1.0 / mu[x], 0.0);
    let row = cheb_apply(h, expansion, &delta)?;
    Ok(row.iter().zip(mu.iter()).map(|(z, &m)| z.re * z.re * m).sum())
}

/// `phi(s, x)` for every vertex; one kernel row per vertex, batched in
/// parallel when the `parallel` feature is on.
pub fn phi_all(h: &LaplacianOperator, s: f64) -> Result<Vec<f64>> {
    let expansion = heat_expansion(h, s)?;
    let values = parallel::map_range(h.vertex_count(), |x| {
        phi_from_expansion(h, &expansion, x).expect("vertex index in range")
    });
    Ok(values)
}

/// Sequential variant of [`phi_all`], kept for benchmarks and as the
/// fallback reference.
pub fn phi_all_seq(h: &LaplacianOperator, s: f64) -> Result<Vec<f64>> {
    let expansion = heat_expansion(h, s)?;
    let values = parallel::map_range_seq(h.vertex_count(), |x| {
        phi_from_expansion(h, &expansion, x).expect("vertex index in range")
    });
    Ok(values)
}

/// The pointwise upper bound `phi(s, x) <= 1 / mu(x)`, usable in place of
/// the exact values.
pub fn phi_upper_bound(h: &LaplacianOperator) -> Vec<f64> {
    h.graph().mu().iter().map(|&m| 1.0 / m).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorMethod {
    Chebyshev,
    DenseEigen,
}

enum PropagatorBackend {
    Cheb(ChebyshevExpansion),
    Dense(Box<DenseSpectral>),
}

/// Precompiled application of `exp(-itH)` for one time step.
pub struct PropagatorPlan {
    t: f64,
    backend: PropagatorBackend,
}

impl PropagatorPlan {
    /// Builds a plan; fails with [`Error::OrderOverflow`] when `t *
    /// half_width` needs more than the maximum Chebyshev order, signaling
    /// the caller to split the step (see [`evolve`]).
    pub fn new(h: &LaplacianOperator, t: f64, method: PropagatorMethod) -> Result<Self> {
        let backend = match method {
            PropagatorMethod::Chebyshev => PropagatorBackend::Cheb(ChebyshevExpansion::unitary(
                h.lambda_max_est(),
                t,
                DEFAULT_TAIL_TOL,
            )?),
            PropagatorMethod::DenseEigen => {
                PropagatorBackend::Dense(Box::new(DenseSpectral::new(h)?))
            }
        };
        Ok(Self { t, backend })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn method(&self) -> PropagatorMethod {
        match self.backend {
            PropagatorBackend::Cheb(_) => PropagatorMethod::Chebyshev,
            PropagatorBackend::Dense(_) => PropagatorMethod::DenseEigen,
        }
    }

    pub fn chebyshev_order(&self) -> Option<usize> {
        match &self.backend {
            PropagatorBackend::Cheb(e) => Some(e.order()),
            PropagatorBackend::Dense(_) => None,
        }
    }

    pub fn coefficient_tail_bound(&self) -> Option<f64> {
        match &self.backend {
            PropagatorBackend::Cheb(e) => Some(e.tail_bound()),
            PropagatorBackend::Dense(_) => None,
        }
    }

    pub fn shift_scale(&self) -> Option<ShiftScale> {
        match &self.backend {
            PropagatorBackend::Cheb(e) => Some(e.shift()),
            PropagatorBackend::Dense(_) => None,
        }
    }
}

/// `exp(-itH) psi` for the plan's time step.
pub fn unitary_apply(h: &LaplacianOperator, plan: &PropagatorPlan, psi: &[C64]) -> Result<Vec<C64>> {
    match &plan.backend {
        PropagatorBackend::Cheb(expansion) => cheb_apply(h, expansion, psi),
        PropagatorBackend::Dense(dense) => dense.unitary_apply(plan.t, psi),
    }
}

/// `exp(-itH) psi`, splitting long evolutions into steps with
/// `|t_step| * half_width <= MAX_STEP_TAU` to cap the polynomial order.
pub fn evolve(h: &LaplacianOperator, t: f64, psi: &[C64]) -> Result<Vec<C64>> {
    if psi.len() != h.vertex_count() {
        return Err(Error::DimensionMismatch {
            expected: h.vertex_count(),
            got: psi.len(),
        });
    }
    if t == 0.0 {
        return Ok(psi.to_vec());
    }
    let half_width = ShiftScale::for_spectrum(h.lambda_max_est()).half_width;
    let steps = ((t.abs() * half_width / MAX_STEP_TAU).ceil() as usize).max(1);
    let plan = PropagatorPlan::new(h, t / steps as f64, PropagatorMethod::Chebyshev)?;
    let mut state = psi.to_vec();
    for _ in 0..steps {
        state = unitary_apply(h, &plan, &state)?;
    }
    Ok(state)
}

/// Dense eigendecomposition backend (`n <= DENSE_MAX`).
///
/// The Laplacian is symmetrized by the similarity `M^{1/2} H M^{-1/2}`,
/// which is a plain symmetric matrix, so that arbitrary spectral functions
/// apply exactly. Kept independent of the Chebyshev route.
pub struct DenseSpectral {
    eigenvalues: Vec<f64>,
    basis: DMatrix<f64>,
    basis_t: DMatrix<f64>,
    mu_sqrt: Vec<f64>,
}

impl DenseSpectral {
    pub fn new(h: &LaplacianOperator) -> Result<Self> {
        let n = h.vertex_count();
        if n > DENSE_MAX {
            return Err(Error::DenseTooLarge { got: n, max: DENSE_MAX });
        }
        let sym = symmetrized_dense(h);
        let eig = sym.symmetric_eigen();
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let basis = eig.eigenvectors;
        let basis_t = basis.transpose();
        let mu_sqrt = h.graph().mu().iter().map(|&m| m.sqrt()).collect();
        Ok(Self { eigenvalues, basis, basis_t, mu_sqrt })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// Applies `f(H)` exactly through the eigenbasis.
    pub fn apply_function<F: Fn(f64) -> C64>(&self, f: F, psi: &[C64]) -> Result<Vec<C64>> {
        let n = self.eigenvalues.len();
        if psi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: psi.len() });
        }
        let re = DVector::from_iterator(n, psi.iter().zip(&self.mu_sqrt).map(|(z, m)| z.re * m));
        let im = DVector::from_iterator(n, psi.iter().zip(&self.mu_sqrt).map(|(z, m)| z.im * m));
        let yr = &self.basis_t * re;
        let yi = &self.basis_t * im;
        let mut zr = DVector::zeros(n);
        let mut zi = DVector::zeros(n);
        for i in 0..n {
            let c = f(self.eigenvalues[i]);
            let y = C64::new(yr[i], yi[i]);
            let w = c * y;
            zr[i] = w.re;
            zi[i] = w.im;
        }
        let or = &self.basis * zr;
        let oi = &self.basis * zi;
        Ok((0..n)
            .map(|x| C64::new(or[x], oi[x]) / self.mu_sqrt[x])
            .collect())
    }

    pub fn heat_apply(&self, s: f64, psi: &[C64]) -> Result<Vec<C64>> {
        if s <= 0.0 {
            return Err(Error::NonpositiveTime(s));
        }
        self.apply_function(|lambda| C64::new((-s * lambda).exp(), 0.0), psi)
    }

    pub fn unitary_apply(&self, t: f64, psi: &[C64]) -> Result<Vec<C64>> {
        self.apply_function(|lambda| C64::from_polar(1.0, -lambda * t), psi)
    }

    /// Sharp spectral projection onto eigenvalues below `l`.
    pub fn window_apply(&self, l: f64, psi: &[C64]) -> Result<Vec<C64>> {
        self.apply_function(
            |lambda| C64::new(if lambda.abs() < l { 1.0 } else { 0.0 }, 0.0),
            psi,
        )
    }
}

fn symmetrized_dense(h: &LaplacianOperator) -> DMatrix<f64> {
    let g = h.graph();
    let n = g.vertex_count();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        m[(x, x)] = g.weighted_degree(x) / g.mu_of(x);
        for (y, w) in g.neighbors(x) {
            m[(x, y)] -= w / (g.mu_of(x) * g.mu_of(y)).sqrt();
        }
    }
    m
}

fn heat_apply_scaled_squaring(h: &LaplacianOperator, s: f64, psi: &[C64]) -> Result<Vec<C64>> {
    let n = h.vertex_count();
    if n > DENSE_MAX {
        return Err(Error::DenseTooLarge { got: n, max: DENSE_MAX });
    }
    if psi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: psi.len() });
    }
    let g = h.graph();
    let expm = (symmetrized_dense(h) * (-s)).exp();
    let re = DVector::from_iterator(n, psi.iter().enumerate().map(|(x, z)| z.re * g.mu_of(x).sqrt()));
    let im = DVector::from_iterator(n, psi.iter().enumerate().map(|(x, z)| z.im * g.mu_of(x).sqrt()));
    let or = &expm * re;
    let oi = &expm * im;
    Ok((0..n)
        .map(|x| C64::new(or[x], oi[x]) / g.mu_of(x).sqrt())
        .collect())
}
