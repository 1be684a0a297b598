//! Wave packets, localization decay, and wave-operator experiments.
//!
//! Finite truncations have pure point spectrum, so absolutely continuous
//! initial states are emulated by ballistic Gaussian wave packets evaluated
//! strictly inside the pre-reflection trusted window: all reported times
//! stay below the reflection time estimate `dist(center, boundary) /
//! (2 sin k)`, after which boundary reflections would contaminate
//! infinite-volume behavior.
//!
//! Strong limits `t -> infinity` are replaced by Cauchy diagnostics on a
//! geometric time grid: the experiment reports the increments
//! `|W(t_{i+1}) psi - W(t_i) psi|` for `W(t) = exp(itH2) J exp(-itH1)` and
//! flags stagnation instead of claiming a limit.

use serde::{Deserialize, Serialize};

use crate::chebyshev::ChebyshevExpansion;
use crate::error::{Error, Result};
use crate::graph::{GraphPair, WeightedGraph};
use crate::operator::{
    assemble_laplacian, identification_difference_diagonal, mu_norm, IdentificationKind,
    IdentificationOperator, LaplacianOperator,
};
use crate::propagation::{cheb_apply, evolve, DenseSpectral, DENSE_MAX};
use crate::C64;

/// Minimum grid points for an equivalence verdict.
pub const MIN_EQUIVALENCE_GRID: usize = 10;
/// Minimum grid points for a wave-operator Cauchy verdict.
pub const MIN_WAVE_OP_GRID: usize = 6;
/// Packet mass required within 6 sigma of the center.
pub const PACKET_MASS_CRITERION: f64 = 0.999;

/// Strictly increasing time grid starting at 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `0, t_min, t_min * factor, ..., t_max` (with `t_max` appended).
    pub fn geometric(t_min: f64, factor: f64, t_max: f64) -> Result<Self> {
        if !(t_min > 0.0) || !(factor > 1.0) || !(t_max > t_min) {
            return Err(Error::InvalidTimeGrid(format!(
                "need 0 < t_min < t_max and factor > 1, got t_min = {t_min}, factor = {factor}, t_max = {t_max}"
            )));
        }
        let mut times = vec![0.0];
        let mut t = t_min;
        while t < t_max {
            times.push(t);
            t *= factor;
        }
        times.push(t_max);
        Ok(Self { times })
    }

    pub fn explicit(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times[0] < 0.0 {
            return Err(Error::InvalidTimeGrid("grid must start at t >= 0".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTimeGrid("times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Construction parameters kept with a packet and its reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacketProvenance {
    pub momentum: f64,
    pub center: i64,
    pub sigma: f64,
    pub graph_level: u32,
    pub mass_within_6_sigma: f64,
}

/// Normalized Gaussian wave packet with carrier momentum `k`:
/// `psi(n) = exp(ikn) exp(-(n - n0)^2 / (4 sigma^2))`, normalized in the
/// `mu`-weighted norm of its graph.
#[derive(Debug, Clone)]
pub struct WavePacket {
    pub momentum: f64,
    pub center: i64,
    pub sigma: f64,
    pub state: Vec<C64>,
    pub reflection_time_estimate: f64,
    pub provenance: PacketProvenance,
}

/// Builds a packet on a line-like graph. Fails when the 6-sigma core does
/// not fit between the center and the truncation boundary.
pub fn build_wave_packet(g: &WeightedGraph, k: f64, center: i64, sigma: f64) -> Result<WavePacket> {
    if !(k > 0.0 && k < std::f64::consts::PI) {
        return Err(Error::InvalidMomentum(k));
    }
    if !(sigma > 0.0) {
        return Err(Error::PacketDoesNotFit(format!("sigma must be positive, got {sigma}")));
    }
    let span = (6.0 * sigma).ceil() as i64;
    for n in (center - span)..=(center + span) {
        if g.index_of(n).is_none() {
            return Err(Error::PacketDoesNotFit(format!(
                "vertex {n} inside the 6-sigma core is not in the truncation"
            )));
        }
    }
    let mu = g.mu();
    let mut state: Vec<C64> = g
        .labels()
        .iter()
        .map(|&n| {
            let d = (n - center) as f64;
            let envelope = (-d * d / (4.0 * sigma * sigma)).exp();
            C64::from_polar(envelope, k * n as f64)
        })
        .collect();
    let norm = mu_norm(&state, mu)?;
    for z in state.iter_mut() {
        *z /= norm;
    }
    let core_mass: f64 = state
        .iter()
        .enumerate()
        .filter(|(x, _)| (g.label_of(*x) - center).abs() <= span)
        .map(|(x, z)| z.norm_sqr() * mu[x])
        .sum();
    if core_mass < PACKET_MASS_CRITERION {
        return Err(Error::PacketDoesNotFit(format!(
            "only {core_mass:.6} of the packet mass lies within 6 sigma"
        )));
    }
    let min_label = *g.labels().iter().min().unwrap();
    let max_label = *g.labels().iter().max().unwrap();
    let distance = (center - min_label).min(max_label - center) as f64;
    let group_speed = 2.0 * k.sin();
    Ok(WavePacket {
        momentum: k,
        center,
        sigma,
        reflection_time_estimate: distance / group_speed,
        provenance: PacketProvenance {
            momentum: k,
            center,
            sigma,
            graph_level: g.exhaustion_level(),
            mass_within_6_sigma: core_mass,
        },
        state,
    })
}

impl WavePacket {
    /// Momentum-reflected packet (`k -> -k`), the time reversal of the free
    /// dynamics; used to probe the opposite wave-operator sign.
    pub fn reflected(&self) -> WavePacket {
        let mut out = self.clone();
        out.momentum = -self.momentum;
        out.provenance.momentum = -self.momentum;
        out.state = self.state.iter().map(|z| z.conj()).collect();
        out
    }

    /// Mu-weighted center of mass in label coordinates.
    pub fn center_of_mass(g: &WeightedGraph, state: &[C64]) -> f64 {
        let mut total = 0.0;
        let mut weighted = 0.0;
        for (x, z) in state.iter().enumerate() {
            let w = z.norm_sqr() * g.mu_of(x);
            total += w;
            weighted += w * g.label_of(x) as f64;
        }
        weighted / total
    }
}

/// Vertex indices with labels within `half_width` of `center`.
pub fn vertex_window(g: &WeightedGraph, center: i64, half_width: i64) -> Vec<usize> {
    (0..g.vertex_count())
        .filter(|&x| (g.label_of(x) - center).abs() <= half_width)
        .collect()
}

fn check_window(grid: &TimeGrid, packet: &WavePacket) -> Result<()> {
    if grid.t_max() >= packet.reflection_time_estimate {
        return Err(Error::GridExceedsTrustedWindow {
            t_last: grid.t_max(),
            t_max: packet.reflection_time_estimate,
        });
    }
    Ok(())
}

/// Walks the grid, advancing the state step by step and reporting it.
fn along_trajectory<F: FnMut(f64, &[C64]) -> Result<()>>(
    h: &LaplacianOperator,
    initial: &[C64],
    grid: &TimeGrid,
    mut visit: F,
) -> Result<()> {
    let mut state = initial.to_vec();
    let mut prev_t = 0.0;
    for &t in grid.times() {
        if t > prev_t {
            state = evolve(h, t - prev_t, &state)?;
            prev_t = t;
        }
        visit(t, &state)?;
    }
    Ok(())
}

/// Mass remaining in a vertex window along the evolution, the localization
/// decay of a scattering state: `sum_{x in K} |exp(-itH) psi (x)|^2 mu(x)`.
pub fn rage_decay(
    h: &LaplacianOperator,
    packet: &WavePacket,
    window: &[usize],
    grid: &TimeGrid,
) -> Result<Vec<(f64, f64)>> {
    check_window(grid, packet)?;
    let mu = h.graph().mu();
    let mut out = Vec::with_capacity(grid.len());
    along_trajectory(h, &packet.state, grid, |t, state| {
        let mass: f64 = window.iter().map(|&x| state[x].norm_sqr() * mu[x]).sum();
        out.push((t, mass));
        Ok(())
    })?;
    Ok(out)
}

/// Cauchy increments of a wave-operator estimate along the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CauchyDiagnostics {
    /// `(t_{i+1}, |W(t_{i+1}) psi - W(t_i) psi|)`.
    pub increments: Vec<(f64, f64)>,
    pub threshold: f64,
    /// Increments decay monotonically over the last five points and end
    /// below the threshold.
    pub converged: bool,
}

fn cauchy_from_increments(increments: Vec<(f64, f64)>, threshold: f64) -> CauchyDiagnostics {
    let converged = if increments.len() >= 5 {
        let tail = &increments[increments.len() - 5..];
        // Monotone decay up to jitter of 1% of the threshold, so roundoff
        // noise at the floor does not break the verdict.
        let monotone = tail.windows(2).all(|w| w[1].1 <= w[0].1 + 0.01 * threshold);
        monotone && tail.iter().all(|&(_, inc)| inc <= threshold)
    } else {
        false
    };
    CauchyDiagnostics { increments, threshold, converged }
}

/// Verdict thresholds for the equivalence experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EquivalenceOptions {
    /// `equivalent` when `D(T) <= eps_eq * sup D`.
    pub eps_eq: f64,
    /// Cauchy increment threshold for wave-operator convergence.
    pub cauchy_threshold: f64,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        Self { eps_eq: 0.05, cauchy_threshold: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivalenceVerdict {
    Equivalent,
    NotEquivalent,
    Inconclusive,
}

/// Outcome of one equivalence experiment for one packet.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub packet: PacketProvenance,
    /// Upper end of the trusted window actually used.
    pub trusted_t_max: f64,
    pub reflection_time_estimate: f64,
    /// `(t, D(t))` with `D(t) = |(Jtilde - J) exp(-itH1) psi|_{mu2}`.
    pub decay_curve: Vec<(f64, f64)>,
    pub cauchy_j: CauchyDiagnostics,
    pub cauchy_jtilde: CauchyDiagnostics,
    /// `|W_J(T) psi - W_Jtilde(T) psi|_{mu2}` at the last trusted time.
    pub final_distance: f64,
    pub verdict: EquivalenceVerdict,
    pub options: EquivalenceOptions,
    /// Final wave-operator estimates as `(re, im)` pairs.
    pub w_j_final: Vec<[f64; 2]>,
    pub w_jtilde_final: Vec<[f64; 2]>,
}

fn pack_state(state: &[C64]) -> Vec<[f64; 2]> {
    state.iter().map(|z| [z.re, z.im]).collect()
}

/// Runs the Kato equivalence test for one packet: records the decay curve
/// `D(t)`, the wave-operator Cauchy diagnostics for both identification
/// operators, and the final distance between the two estimates.
pub fn asymptotic_equivalence_test(
    pair: &GraphPair,
    packet: &WavePacket,
    grid: &TimeGrid,
    options: EquivalenceOptions,
) -> Result<EquivalenceReport> {
    if grid.len() < MIN_EQUIVALENCE_GRID {
        return Err(Error::WindowTooShort {
            points: grid.len(),
            min: MIN_EQUIVALENCE_GRID,
        });
    }
    check_window(grid, packet)?;
    let h1 = assemble_laplacian(pair.g1().clone())?;
    let h2 = assemble_laplacian(pair.g2().clone())?;
    let j = IdentificationOperator::new(pair, IdentificationKind::UnitaryJ);
    let jtilde = IdentificationOperator::new(pair, IdentificationKind::TrivialJtilde);
    let diff = identification_difference_diagonal(pair);
    let mu2 = pair.g2().mu();

    let mut decay_curve = Vec::with_capacity(grid.len());
    let mut inc_j = Vec::new();
    let mut inc_jt = Vec::new();
    let mut prev_w_j: Option<Vec<C64>> = None;
    let mut prev_w_jt: Option<Vec<C64>> = None;
    let mut last_w_j = Vec::new();
    let mut last_w_jt = Vec::new();

    along_trajectory(&h1, &packet.state, grid, |t, state| {
        let d2: f64 = state
            .iter()
            .zip(diff.iter())
            .zip(mu2.iter())
            .map(|((z, &d), &m)| d * d * z.norm_sqr() * m)
            .sum();
        decay_curve.push((t, d2.sqrt()));

        let w_j = evolve(&h2, -t, &j.apply(state)?)?;
        let w_jt = evolve(&h2, -t, &jtilde.apply(state)?)?;
        if let Some(prev) = &prev_w_j {
            let delta: Vec<C64> = w_j.iter().zip(prev.iter()).map(|(a, b)| a - b).collect();
            inc_j.push((t, mu_norm(&delta, mu2)?));
        }
        if let Some(prev) = &prev_w_jt {
            let delta: Vec<C64> = w_jt.iter().zip(prev.iter()).map(|(a, b)| a - b).collect();
            inc_jt.push((t, mu_norm(&delta, mu2)?));
        }
        prev_w_j = Some(w_j.clone());
        prev_w_jt = Some(w_jt.clone());
        last_w_j = w_j;
        last_w_jt = w_jt;
        Ok(())
    })?;

    let final_delta: Vec<C64> = last_w_j
        .iter()
        .zip(last_w_jt.iter())
        .map(|(a, b)| a - b)
        .collect();
    let final_distance = mu_norm(&final_delta, mu2)?;

    let sup_d = decay_curve.iter().map(|&(_, d)| d).fold(0.0, f64::max);
    let d_final = decay_curve.last().map(|&(_, d)| d).unwrap_or(0.0);
    let verdict = if d_final <= options.eps_eq * sup_d {
        EquivalenceVerdict::Equivalent
    } else if d_final >= 0.5 * sup_d {
        EquivalenceVerdict::NotEquivalent
    } else {
        EquivalenceVerdict::Inconclusive
    };

    Ok(EquivalenceReport {
        packet: packet.provenance.clone(),
        trusted_t_max: grid.t_max(),
        reflection_time_estimate: packet.reflection_time_estimate,
        decay_curve,
        cauchy_j: cauchy_from_increments(inc_j, options.cauchy_threshold),
        cauchy_jtilde: cauchy_from_increments(inc_jt, options.cauchy_threshold),
        final_distance,
        verdict,
        options,
        w_j_final: pack_state(&last_w_j),
        w_jtilde_final: pack_state(&last_w_jt),
    })
}

/// Wave-operator estimate `W(T) psi = exp(iTH2) J exp(-iTH1) psi` at the
/// last trusted time, with the Cauchy increments along the grid.
pub fn wave_operator_estimate(
    pair: &GraphPair,
    kind: IdentificationKind,
    packet: &WavePacket,
    grid: &TimeGrid,
    options: EquivalenceOptions,
) -> Result<(Vec<C64>, CauchyDiagnostics)> {
    if grid.len() < MIN_WAVE_OP_GRID {
        return Err(Error::WindowTooShort { points: grid.len(), min: MIN_WAVE_OP_GRID });
    }
    check_window(grid, packet)?;
    let h1 = assemble_laplacian(pair.g1().clone())?;
    let h2 = assemble_laplacian(pair.g2().clone())?;
    let op = IdentificationOperator::new(pair, kind);
    let mu2 = pair.g2().mu();
    let mut increments = Vec::new();
    let mut prev: Option<Vec<C64>> = None;
    let mut last = Vec::new();
    along_trajectory(&h1, &packet.state, grid, |t, state| {
        let w = evolve(&h2, -t, &op.apply(state)?)?;
        if let Some(p) = &prev {
            let delta: Vec<C64> = w.iter().zip(p.iter()).map(|(a, b)| a - b).collect();
            increments.push((t, mu_norm(&delta, mu2)?));
        }
        prev = Some(w.clone());
        last = w;
        Ok(())
    })?;
    Ok((last, cauchy_from_increments(increments, options.cauchy_threshold)))
}

/// Spectral-projection backend for [`compactness_filter_decay`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionBackend {
    /// Dense when the graph fits, smoothed Chebyshev window otherwise.
    Auto,
    /// Exact projection by dense eigendecomposition (`n <= 512`).
    Dense,
    /// Smoothed window `1 / (1 + exp((lambda - l) / sharpness))` expanded
    /// with Jackson damping at the given order.
    ChebyshevWindow { order: usize, sharpness: f64 },
}

/// Curve `|D E_H(-l, l) exp(-itH) psi|_mu` over the grid, with the backend
/// parameters actually used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompactnessCurve {
    pub spectral_cutoff: f64,
    pub backend: ProjectionBackend,
    pub points: Vec<(f64, f64)>,
}

/// Decay of a compactly-localized observable `D` (a diagonal multiplier)
/// composed with a spectral window, along the evolution. For decaying or
/// finitely supported `D_diag` the infinite-volume operator would be
/// compact and the curve must decay for scattering-like packets.
pub fn compactness_filter_decay(
    h: &LaplacianOperator,
    d_diag: &[f64],
    packet: &WavePacket,
    l: f64,
    grid: &TimeGrid,
    backend: ProjectionBackend,
) -> Result<CompactnessCurve> {
    let n = h.vertex_count();
    if d_diag.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: d_diag.len() });
    }
    if !(l > 0.0) {
        return Err(Error::InvalidTimeGrid(format!("spectral cutoff must be positive, got {l}")));
    }
    let resolved = match backend {
        ProjectionBackend::Auto => {
            if n <= DENSE_MAX {
                ProjectionBackend::Dense
            } else {
                ProjectionBackend::ChebyshevWindow {
                    order: 512,
                    sharpness: (0.02 * h.lambda_max_est()).max(1e-6),
                }
            }
        }
        other => other,
    };
    enum Projector {
        Dense(Box<DenseSpectral>),
        Cheb(ChebyshevExpansion),
    }
    let projector = match resolved {
        ProjectionBackend::Dense => Projector::Dense(Box::new(DenseSpectral::new(h)?)),
        ProjectionBackend::ChebyshevWindow { order, sharpness } => {
            let window = move |lambda: f64| 1.0 / (1.0 + ((lambda - l) / sharpness).exp());
            Projector::Cheb(ChebyshevExpansion::window(h.lambda_max_est(), window, order))
        }
        ProjectionBackend::Auto => unreachable!(),
    };
    let mu = h.graph().mu();
    let mut points = Vec::with_capacity(grid.len());
    along_trajectory(h, &packet.state, grid, |t, state| {
        let filtered = match &projector {
            Projector::Dense(dense) => dense.window_apply(l, state)?,
            Projector::Cheb(exp) => cheb_apply(h, exp, state)?,
        };
        let weighted: Vec<C64> = filtered
            .iter()
            .zip(d_diag.iter())
            .map(|(&z, &d)| z * d)
            .collect();
        points.push((t, mu_norm(&weighted, mu)?));
        Ok(())
    })?;
    Ok(CompactnessCurve { spectral_cutoff: l, backend: resolved, points })
}
