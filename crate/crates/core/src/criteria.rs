//! Equivalence criteria evaluated over graph exhaustions.
//!
//! The summability criteria are finite-truncation views of infinite sums:
//! partial sums are taken over the nested vertex prefixes of an exhaustion
//! schedule, and a verdict is fitted to the tail increments. No finite
//! computation decides convergence, so the verdicts are explicit heuristics:
//!
//! - `converging` when the last three increments strictly decrease with a
//!   log-log slope (against vertex count) below -1, or when the partial
//!   sums have stabilized to roundoff;
//! - `diverging` when the increments are non-decreasing (within 1%) with a
//!   slope of at least 0.5, i.e. the per-vertex contribution stays bounded
//!   below by a positive constant;
//! - `inconclusive` otherwise.
//!
//! The criteria themselves:
//!
//! - `asp`: `sum_x (1 - 1/rho(x))^2 phi(s, x) mu1(x)`, with `phi` either the
//!   exact kernel-row norms or the upper bound `1/mu1`;
//! - `vertex_sum`: `sum_x |rho(x)^{1/2} - rho(x)^{-1/2}|`;
//! - `edge_sum` (per side `j`): the ordered double sum
//!   `sum_{x,y} |rho_tilde(x,y)^{1/2} - rho_tilde(x,y)^{-1/2}|
//!   (mu_j(x)^{-1} + mu_j(y)^{-1}) b_j(x,y)`;
//! - `quasi_equiv`: threshold check on the tight constants `a_mu`, `a_b`.
//!
//! The pointwise Riemannian ingredients are the pencil sample: for a
//! positive-definite pencil with eigenvalue list `spec(A)`, the distortion
//! is `delta = 2 sinh((m/4) max |log lambda|)` and the scalar density is
//! `rho = det(A)^{-1/2}`, with `|rho^{1/2} - rho^{-1/2}| <= delta`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphFamilySpec, GraphPair};
use crate::parallel;

/// Verdict slope thresholds (see module docs).
const CONVERGING_SLOPE: f64 = -1.0;
const DIVERGING_SLOPE: f64 = 0.5;
/// Increments below `STABILIZED_RTOL * max(1, total)` count as roundoff.
const STABILIZED_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionId {
    Asp,
    VertexSum,
    EdgeSumJ1,
    EdgeSumJ2,
    QuasiEquiv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converging,
    Diverging,
    Inconclusive,
}

/// Which graph's measure and weights enter an edge sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorSide {
    J1,
    J2,
}

/// Source of the `phi` weights in the `asp` criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// Exact kernel-row norms `phi(s, x)` at a specific `s`.
    Exact,
    /// The pointwise bound `1/mu1(x)`, valid for every `s`.
    Bound,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LevelValue {
    pub level: u32,
    pub value: f64,
}

/// Extra inputs recorded with a report. An absent `a_b` together with
/// `support_mismatch = true` signals an infinite constant.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CriterionParameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_mode: Option<PhiMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_b: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub support_mismatch: bool,
}

/// Partial sums of one criterion over the exhaustion, with a fitted verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub criterion_id: CriterionId,
    pub partial_sums: Vec<LevelValue>,
    pub verdict: Verdict,
    /// Log-log slope of the last increments against vertex count; absent
    /// when too few levels resolve a slope or the sums stabilized.
    pub tail_slope: Option<f64>,
    pub parameters: CriterionParameters,
}

/// Nested truncation schedule: scheduled levels with their vertex counts,
/// which are prefix lengths of the top-level graph's exhaustion ordering.
#[derive(Debug, Clone)]
pub struct ExhaustionSchedule {
    levels: Vec<u32>,
    prefix_counts: Vec<usize>,
}

impl ExhaustionSchedule {
    pub fn new(levels: Vec<u32>, prefix_counts: Vec<usize>) -> Result<Self> {
        if levels.is_empty() || levels.len() != prefix_counts.len() {
            return Err(Error::InvalidSchedule(
                "levels and prefix counts must be nonempty and aligned".into(),
            ));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule("levels must be strictly increasing".into()));
        }
        if prefix_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(
                "prefix counts must be strictly increasing".into(),
            ));
        }
        Ok(Self { levels, prefix_counts })
    }

    pub fn from_family(spec: &GraphFamilySpec, levels: &[u32]) -> Result<Self> {
        let counts = levels
            .iter()
            .map(|&l| spec.vertex_count_at(l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(levels.to_vec(), counts)
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn prefix_counts(&self) -> &[usize] {
        &self.prefix_counts
    }

    pub fn max_count(&self) -> usize {
        *self.prefix_counts.last().unwrap()
    }
}

/// Partial sums of nonnegative per-vertex terms over the schedule prefixes.
fn vertex_prefix_sums(terms: &[f64], schedule: &ExhaustionSchedule) -> Result<Vec<LevelValue>> {
    if terms.len() < schedule.max_count() {
        return Err(Error::InvalidSchedule(format!(
            "{} vertex terms for prefix of {}",
            terms.len(),
            schedule.max_count()
        )));
    }
    let mut out = Vec::with_capacity(schedule.levels.len());
    let mut acc = 0.0;
    let mut consumed = 0;
    for (&level, &count) in schedule.levels.iter().zip(&schedule.prefix_counts) {
        for &t in &terms[consumed..count] {
            acc += t;
        }
        consumed = count;
        out.push(LevelValue { level, value: acc });
    }
    Ok(out)
}

/// Fits verdict and tail slope from the partial sums.
fn classify(partial_sums: &[LevelValue], prefix_counts: &[usize]) -> (Verdict, Option<f64>) {
    let total = partial_sums.last().map(|lv| lv.value).unwrap_or(0.0);
    let floor = STABILIZED_RTOL * total.abs().max(1.0);
    if total.abs() <= floor {
        return (Verdict::Converging, None);
    }
    let increments: Vec<f64> = partial_sums
        .windows(2)
        .map(|w| w[1].value - w[0].value)
        .collect();
    if let Some(&last) = increments.last() {
        // The newest shell contributes nothing: the sum has stabilized.
        if last <= floor {
            return (Verdict::Converging, None);
        }
    }
    if increments.len() < 3 {
        return (Verdict::Inconclusive, None);
    }
    let tail = &increments[increments.len() - 3..];
    let counts = &prefix_counts[prefix_counts.len() - 3..];
    if tail.iter().any(|&d| d <= floor) {
        return (Verdict::Inconclusive, None);
    }
    let slope = log_log_slope(counts, tail);
    let decreasing = tail[0] > tail[1] && tail[1] > tail[2];
    let non_decreasing = tail[1] >= 0.99 * tail[0] && tail[2] >= 0.99 * tail[1];
    let verdict = if decreasing && slope < CONVERGING_SLOPE {
        Verdict::Converging
    } else if non_decreasing && slope >= DIVERGING_SLOPE {
        Verdict::Diverging
    } else {
        Verdict::Inconclusive
    };
    (verdict, Some(slope))
}

fn log_log_slope(counts: &[usize], increments: &[f64]) -> f64 {
    let xs: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let ys: Vec<f64> = increments.iter().map(|&d| d.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Precomputed `phi` weights for [`asp_partial_sum`].
#[derive(Debug, Clone)]
pub struct PhiValues {
    pub mode: PhiMode,
    pub s: Option<f64>,
    pub values: Vec<f64>,
}

/// The weighted criterion `sum_x (1 - 1/rho(x))^2 phi(s, x) mu1(x)`.
pub fn asp_partial_sum(
    pair: &GraphPair,
    phi: &PhiValues,
    schedule: &ExhaustionSchedule,
) -> Result<CriterionReport> {
    if phi.values.len() < schedule.max_count() {
        return Err(Error::MissingPhiValues {
            needed: schedule.max_count(),
            got: phi.values.len(),
        });
    }
    let mu1 = pair.g1().mu();
    let rho = pair.rho();
    let terms: Vec<f64> = (0..schedule.max_count())
        .map(|x| (1.0 - 1.0 / rho[x]).powi(2) * phi.values[x] * mu1[x])
        .collect();
    let partial_sums = vertex_prefix_sums(&terms, schedule)?;
    let (verdict, tail_slope) = classify(&partial_sums, schedule.prefix_counts());
    Ok(CriterionReport {
        criterion_id: CriterionId::Asp,
        partial_sums,
        verdict,
        tail_slope,
        parameters: CriterionParameters {
            s: phi.s,
            phi_mode: Some(phi.mode),
            ..Default::default()
        },
    })
}

/// The vertex summability criterion `sum_x |rho^{1/2} - rho^{-1/2}|`.
pub fn vertex_sum(pair: &GraphPair, schedule: &ExhaustionSchedule) -> Result<CriterionReport> {
    check_pair_size(pair, schedule)?;
    let terms: Vec<f64> = pair.rho()[..schedule.max_count()]
        .iter()
        .map(|&r| (r.sqrt() - 1.0 / r.sqrt()).abs())
        .collect();
    let partial_sums = vertex_prefix_sums(&terms, schedule)?;
    let (verdict, tail_slope) = classify(&partial_sums, schedule.prefix_counts());
    Ok(CriterionReport {
        criterion_id: CriterionId::VertexSum,
        partial_sums,
        verdict,
        tail_slope,
        parameters: CriterionParameters::default(),
    })
}

fn check_pair_size(pair: &GraphPair, schedule: &ExhaustionSchedule) -> Result<()> {
    if pair.vertex_count() < schedule.max_count() {
        return Err(Error::InvalidSchedule(format!(
            "pair has {} vertices, schedule needs {}",
            pair.vertex_count(),
            schedule.max_count()
        )));
    }
    Ok(())
}

/// The edge summability criterion for side `j`, summed over ordered pairs.
pub fn edge_sum(
    pair: &GraphPair,
    side: OperatorSide,
    schedule: &ExhaustionSchedule,
) -> Result<CriterionReport> {
    check_pair_size(pair, schedule)?;
    let (graph, criterion_id) = match side {
        OperatorSide::J1 => (pair.g1(), CriterionId::EdgeSumJ1),
        OperatorSide::J2 => (pair.g2(), CriterionId::EdgeSumJ2),
    };
    let mu = graph.mu();
    let counts = schedule.prefix_counts();
    // Each unordered union edge enters at the first level containing both
    // endpoints; the ordered double sum doubles the symmetric term.
    let mut level_totals = vec![0.0; counts.len()];
    for e in pair.edge_densities() {
        let b_j = match side {
            OperatorSide::J1 => e.b1,
            OperatorSide::J2 => e.b2,
        };
        if b_j == 0.0 {
            continue;
        }
        let needed = e.x.max(e.y);
        let Some(slot) = counts.iter().position(|&c| needed < c) else {
            continue;
        };
        let rt = e.rho_tilde;
        let term = (rt.sqrt() - 1.0 / rt.sqrt()).abs() * (1.0 / mu[e.x] + 1.0 / mu[e.y]) * b_j;
        level_totals[slot] += 2.0 * term;
    }
    let mut acc = 0.0;
    let partial_sums: Vec<LevelValue> = schedule
        .levels()
        .iter()
        .zip(&level_totals)
        .map(|(&level, &delta)| {
            acc += delta;
            LevelValue { level, value: acc }
        })
        .collect();
    let (verdict, tail_slope) = classify(&partial_sums, counts);
    Ok(CriterionReport {
        criterion_id,
        partial_sums,
        verdict,
        tail_slope,
        parameters: CriterionParameters::default(),
    })
}

/// Threshold check `a_mu <= a` and `a_b <= a` with the tight constants; the
/// partial-sum column records the constant restricted to each prefix.
pub fn quasi_equivalence_check(
    pair: &GraphPair,
    threshold: f64,
    schedule: &ExhaustionSchedule,
) -> Result<CriterionReport> {
    check_pair_size(pair, schedule)?;
    let counts = schedule.prefix_counts();
    let mut per_level = vec![1.0_f64; counts.len()];
    for (x, &r) in pair.rho()[..schedule.max_count()].iter().enumerate() {
        let slot = counts.iter().position(|&c| x < c).unwrap();
        per_level[slot] = per_level[slot].max(r).max(1.0 / r);
    }
    let mut support_mismatch = false;
    for e in pair.edge_densities() {
        let needed = e.x.max(e.y);
        let Some(slot) = counts.iter().position(|&c| needed < c) else {
            continue;
        };
        if e.b1 > 0.0 && e.b2 > 0.0 {
            per_level[slot] = per_level[slot].max(e.b1 / e.b2).max(e.b2 / e.b1);
        } else {
            support_mismatch = true;
        }
    }
    let mut running = 1.0_f64;
    let partial_sums: Vec<LevelValue> = schedule
        .levels()
        .iter()
        .zip(&per_level)
        .map(|(&level, &value)| {
            running = running.max(value);
            LevelValue { level, value: running }
        })
        .collect();
    let passes = pair.a_mu() <= threshold && pair.a_b().map(|a| a <= threshold).unwrap_or(false);
    Ok(CriterionReport {
        criterion_id: CriterionId::QuasiEquiv,
        partial_sums,
        verdict: if passes { Verdict::Converging } else { Verdict::Diverging },
        tail_slope: None,
        parameters: CriterionParameters {
            threshold: Some(threshold),
            a_mu: Some(pair.a_mu()),
            a_b: pair.a_b(),
            support_mismatch,
            ..Default::default()
        },
    })
}

/// Pointwise pencil comparing two metrics, reduced to a symmetric
/// positive-definite matrix whose spectrum is the pencil spectrum.
#[derive(Debug, Clone)]
pub struct MetricPairSample {
    pub dimension: usize,
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl MetricPairSample {
    /// From a symmetric positive-definite matrix in any basis.
    pub fn from_matrix(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::NotPositiveDefinite);
        }
        let asym = (&a - a.transpose()).norm();
        if asym > 1e-10 * a.norm().max(1.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let sym = (&a + a.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { dimension: sym.nrows(), matrix: sym, eigenvalues })
    }

    pub fn from_eigenvalues(eigenvalues: &[f64]) -> Result<Self> {
        Self::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            eigenvalues,
        )))
    }

    /// From a pair of metric tensors `g1`, `g2` at a point: the pencil
    /// `g1 g2^{-1}` is realized stably as `L^{-1} g1 L^{-T}` with
    /// `g2 = L L^T`, which is symmetric with the same spectrum.
    pub fn from_metric_pair(g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> Result<Self> {
        if g1.nrows() != g2.nrows() || g1.ncols() != g2.ncols() {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = nalgebra::Cholesky::new(g2.clone()).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l();
        let inv_l = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let reduced = &inv_l * g1 * inv_l.transpose();
        Self::from_matrix(reduced)
    }
}

/// Distortion `delta = 2 sinh((m/4) max_lambda |log lambda|)`; zero exactly
/// when every eigenvalue is 1.
pub fn delta_from_pencil(sample: &MetricPairSample) -> f64 {
    let max_log = sample
        .eigenvalues
        .iter()
        .map(|&l| l.ln().abs())
        .fold(0.0, f64::max);
    2.0 * ((sample.dimension as f64 / 4.0) * max_log).sinh()
}

/// Left and right side of the distortion inequality: `lhs = |rho^{1/2} -
/// rho^{-1/2}|` with `rho = det(A)^{-1/2}`, `rhs = delta`; always
/// `lhs <= rhs` up to roundoff.
pub fn lemma33_margin(sample: &MetricPairSample) -> (f64, f64) {
    // det(A)^{-1/2} via the eigenvalues keeps rho accurate for spread
    // spectra: log rho = -(1/2) sum log lambda.
    let log_rho: f64 = -0.5 * sample.eigenvalues.iter().map(|l| l.ln()).sum::<f64>();
    let lhs = 2.0 * (0.5 * log_rho).sinh().abs();
    (lhs, delta_from_pencil(sample))
}

/// [`lemma33_margin`] over a batch of samples, parallel when enabled.
pub fn lemma33_margins(samples: &[MetricPairSample]) -> Vec<(f64, f64)> {
    parallel::map_slice(samples, lemma33_margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{pair_graphs, ProfileKind, SiteProfile};
    use std::sync::Arc;

    fn line_spec(base: u32, b: SiteProfile, mu: SiteProfile) -> GraphFamilySpec {
        GraphFamilySpec::Line { base_half_width: base, b, mu }
    }

    fn line_pair(base: u32, levels: &[u32], mu2: SiteProfile) -> (GraphPair, ExhaustionSchedule) {
        let spec1 = line_spec(base, SiteProfile::constant(1.0), SiteProfile::constant(1.0));
        let spec2 = line_spec(base, SiteProfile::constant(1.0), mu2);
        let top = *levels.last().unwrap();
        let g1 = Arc::new(spec1.build_truncation(top).unwrap());
        let g2 = Arc::new(spec2.build_truncation(top).unwrap());
        let schedule = ExhaustionSchedule::from_family(&spec1, levels).unwrap();
        (pair_graphs(g1, g2).unwrap(), schedule)
    }

    #[test]
    fn vertex_sum_identity_is_zero_and_converging() {
        let (pair, schedule) = line_pair(4, &[0, 1, 2, 3], SiteProfile::constant(1.0));
        let report = vertex_sum(&pair, &schedule).unwrap();
        assert!(report.partial_sums.iter().all(|lv| lv.value == 0.0));
        assert_eq!(report.verdict, Verdict::Converging);
        assert!(report.tail_slope.is_none());
    }

    #[test]
    fn vertex_sum_geometric_converges() {
        let (pair, schedule) = line_pair(
            4,
            &[0, 1, 2, 3, 4],
            SiteProfile {
                base: ProfileKind::OnePlusGeometric { amplitude: 1.0 },
                overrides: vec![],
            },
        );
        let report = vertex_sum(&pair, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Converging, "{report:?}");
        for w in report.partial_sums.windows(2) {
            assert!(w[1].value >= w[0].value);
        }
    }

    #[test]
    fn vertex_sum_constant_rescale_diverges() {
        let (pair, schedule) = line_pair(4, &[0, 1, 2, 3], SiteProfile::constant(4.0));
        let report = vertex_sum(&pair, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Diverging);
        // increment per vertex is |2 - 1/2| = 1.5; level 0 has 9 vertices
        assert!((report.partial_sums[0].value - 1.5 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_sum_harmonic_is_inconclusive() {
        let (pair, schedule) = line_pair(
            125,
            &[0, 1, 2, 3, 4],
            SiteProfile { base: ProfileKind::OnePlusInverse, overrides: vec![] },
        );
        let report = vertex_sum(&pair, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Inconclusive, "{report:?}");
    }

    #[test]
    fn vertex_sum_zero_iff_rho_is_one() {
        let (pair, schedule) = line_pair(
            3,
            &[0, 1],
            SiteProfile {
                base: ProfileKind::Constant { value: 1.0 },
                overrides: vec![(2, 1.5)],
            },
        );
        let report = vertex_sum(&pair, &schedule).unwrap();
        assert!(report.partial_sums.last().unwrap().value > 0.0);
        assert!(pair.rho().iter().any(|&r| r != 1.0));
    }

    #[test]
    fn asp_examples() {
        // rho = 1: zero sums.
        let (pair, schedule) = line_pair(4, &[0, 1, 2], SiteProfile::constant(1.0));
        let phi = PhiValues { mode: PhiMode::Bound, s: None, values: vec![1.0; pair.vertex_count()] };
        let report = asp_partial_sum(&pair, &phi, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Converging);
        assert!(report.partial_sums.iter().all(|lv| lv.value == 0.0));

        // rho = 2 with translation-invariant phi: linear growth, diverging.
        let (pair, schedule) = line_pair(4, &[0, 1, 2, 3, 4], SiteProfile::constant(2.0));
        let phi = PhiValues { mode: PhiMode::Bound, s: None, values: vec![1.0; pair.vertex_count()] };
        let report = asp_partial_sum(&pair, &phi, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Diverging);

        // Geometric decay converges.
        let (pair, schedule) = line_pair(
            4,
            &[0, 1, 2, 3, 4],
            SiteProfile {
                base: ProfileKind::OnePlusGeometric { amplitude: 1.0 },
                overrides: vec![],
            },
        );
        let phi = PhiValues { mode: PhiMode::Bound, s: None, values: vec![1.0; pair.vertex_count()] };
        let report = asp_partial_sum(&pair, &phi, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Converging);
    }

    #[test]
    fn asp_missing_phi_values_error() {
        let (pair, schedule) = line_pair(4, &[0, 1], SiteProfile::constant(1.0));
        let phi = PhiValues { mode: PhiMode::Bound, s: None, values: vec![1.0; 3] };
        assert!(matches!(
            asp_partial_sum(&pair, &phi, &schedule),
            Err(Error::MissingPhiValues { .. })
        ));
    }

    #[test]
    fn exact_phi_never_exceeds_bound_mode() {
        use crate::operator::assemble_laplacian;
        use crate::propagation::{phi_all, phi_upper_bound};
        let (pair, schedule) = line_pair(
            4,
            &[0, 1, 2],
            SiteProfile {
                base: ProfileKind::OnePlusGeometric { amplitude: 1.0 },
                overrides: vec![],
            },
        );
        let h1 = assemble_laplacian(pair.g1().clone()).unwrap();
        for &s in &[0.25, 0.5, 0.75] {
            let exact = PhiValues {
                mode: PhiMode::Exact,
                s: Some(s),
                values: phi_all(&h1, s).unwrap(),
            };
            let bound = PhiValues {
                mode: PhiMode::Bound,
                s: None,
                values: phi_upper_bound(&h1),
            };
            let re = asp_partial_sum(&pair, &exact, &schedule).unwrap();
            let rb = asp_partial_sum(&pair, &bound, &schedule).unwrap();
            for (a, b) in re.partial_sums.iter().zip(rb.partial_sums.iter()) {
                assert!(a.value <= b.value + 1e-12);
            }
        }
    }

    #[test]
    fn edge_sum_examples() {
        // b1 = b2: identically zero.
        let (pair, schedule) = line_pair(4, &[0, 1, 2], SiteProfile::constant(3.0));
        for side in [OperatorSide::J1, OperatorSide::J2] {
            let report = edge_sum(&pair, side, &schedule).unwrap();
            assert!(report.partial_sums.iter().all(|lv| lv.value == 0.0));
            assert_eq!(report.verdict, Verdict::Converging);
        }

        // One perturbed edge: finitely many nonzero terms, converging.
        let spec1 = line_spec(2, SiteProfile::constant(1.0), SiteProfile::constant(1.0));
        let spec2 = line_spec(
            2,
            SiteProfile {
                base: ProfileKind::Constant { value: 1.0 },
                overrides: vec![(0, 4.0)],
            },
            SiteProfile::constant(1.0),
        );
        let g1 = Arc::new(spec1.build_truncation(3).unwrap());
        let g2 = Arc::new(spec2.build_truncation(3).unwrap());
        let pair = pair_graphs(g1, g2).unwrap();
        let schedule = ExhaustionSchedule::from_family(&spec1, &[0, 1, 2, 3]).unwrap();
        let report = edge_sum(&pair, OperatorSide::J1, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Converging);
        // rho_tilde = 1/4 on the edge (0, 1): the ordered sum contributes
        // 2 * |1/2 - 2| * (1 + 1) * 1 = 6, constant from level 0 on.
        assert!((report.partial_sums[0].value - 6.0).abs() < 1e-12);
        assert!((report.partial_sums.last().unwrap().value - 6.0).abs() < 1e-12);

        // Geometrically decaying edge perturbation converges.
        let spec_b = line_spec(
            4,
            SiteProfile {
                base: ProfileKind::OnePlusGeometric { amplitude: 1.0 },
                overrides: vec![],
            },
            SiteProfile::constant(1.0),
        );
        let base = line_spec(4, SiteProfile::constant(1.0), SiteProfile::constant(1.0));
        let g1 = Arc::new(base.build_truncation(4).unwrap());
        let g2 = Arc::new(spec_b.build_truncation(4).unwrap());
        let pair = pair_graphs(g1, g2).unwrap();
        let schedule = ExhaustionSchedule::from_family(&base, &[0, 1, 2, 3, 4]).unwrap();
        let report = edge_sum(&pair, OperatorSide::J2, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Converging, "{report:?}");
    }

    #[test]
    fn quasi_equivalence_examples() {
        let (pair, schedule) = line_pair(4, &[0, 1], SiteProfile::constant(1.0));
        let report = quasi_equivalence_check(&pair, 1.0, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Converging);
        assert_eq!(report.parameters.a_mu, Some(1.0));

        let (pair, schedule) = line_pair(4, &[0, 1], SiteProfile::constant(3.0));
        let report = quasi_equivalence_check(&pair, 2.0, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Diverging);
        assert_eq!(report.parameters.a_mu, Some(3.0));

        // Support mismatch: infinite a_b.
        let g1 = Arc::new(
            crate::graph::WeightedGraph::from_undirected_edges(
                vec![0, 1, 2],
                vec![1.0; 3],
                &[(0, 1, 1.0), (1, 2, 1.0)],
                0,
            )
            .unwrap(),
        );
        let g2 = Arc::new(
            crate::graph::WeightedGraph::from_undirected_edges(
                vec![0, 1, 2],
                vec![1.0; 3],
                &[(0, 1, 1.0)],
                0,
            )
            .unwrap(),
        );
        let pair = pair_graphs(g1, g2).unwrap();
        let schedule = ExhaustionSchedule::new(vec![0], vec![3]).unwrap();
        let report = quasi_equivalence_check(&pair, 10.0, &schedule).unwrap();
        assert_eq!(report.verdict, Verdict::Diverging);
        assert!(report.parameters.support_mismatch);
        assert!(report.parameters.a_b.is_none());
    }

    #[test]
    fn delta_examples() {
        let id = MetricPairSample::from_eigenvalues(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(delta_from_pencil(&id), 0.0);

        let spread = MetricPairSample::from_eigenvalues(&[4.0, 0.25]).unwrap();
        assert!((delta_from_pencil(&spread) - 1.5).abs() < 1e-12);

        let all_e = MetricPairSample::from_eigenvalues(&[std::f64::consts::E; 4]).unwrap();
        assert!((delta_from_pencil(&all_e) - 2.0 * 1.0_f64.sinh()).abs() < 1e-12);
    }

    #[test]
    fn lemma33_examples() {
        let id = MetricPairSample::from_eigenvalues(&[1.0, 1.0]).unwrap();
        assert_eq!(lemma33_margin(&id), (0.0, 0.0));

        // det = 1: lhs vanishes, rhs = 1.5.
        let balanced = MetricPairSample::from_eigenvalues(&[4.0, 0.25]).unwrap();
        let (lhs, rhs) = lemma33_margin(&balanced);
        assert!(lhs.abs() < 1e-12);
        assert!((rhs - 1.5).abs() < 1e-12);

        // Equality case: eigenvalues {1/4, 1/4}, rho = 4.
        let collapsed = MetricPairSample::from_eigenvalues(&[0.25, 0.25]).unwrap();
        let (lhs, rhs) = lemma33_margin(&collapsed);
        assert!((lhs - 1.5).abs() < 1e-12);
        assert!((rhs - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pencil_from_metric_pair_matches_generalized_eigenvalues() {
        // g1 = diag(4, 1), g2 = I: pencil eigenvalues {4, 1}.
        let g1 = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let g2 = DMatrix::identity(2, 2);
        let sample = MetricPairSample::from_metric_pair(&g1, &g2).unwrap();
        let mut eigs = sample.eigenvalues.clone();
        eigs.sort_by(f64::total_cmp);
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 4.0).abs() < 1e-12);

        // rho = det(A)^{-1/2} = sqrt(det g2 / det g1) = 1/2.
        let (lhs, _) = lemma33_margin(&sample);
        let rho: f64 = 0.5;
        assert!((lhs - (rho.sqrt() - 1.0 / rho.sqrt()).abs()).abs() < 1e-12);
    }

    #[test]
    fn non_positive_definite_rejected() {
        assert!(MetricPairSample::from_eigenvalues(&[1.0, -2.0]).is_err());
        assert!(MetricPairSample::from_eigenvalues(&[1.0, 0.0]).is_err());
        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        assert!(MetricPairSample::from_matrix(skew).is_err());
    }
}
