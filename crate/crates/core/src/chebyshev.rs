//! Chebyshev expansions of spectral functions.
//!
//! For a nonnegative operator with spectrum in `[0, lambda_max]` the affine
//! map `H = c + r S` with `c = lambda_max / 2` and `r = 1.01 * lambda_max / 2`
//! sends the spectrum of `S` into `[-1, 1]` with a 1% guard band against
//! an underestimated bound. Spectral functions are then expanded as
//! `f(H) = sum_k a_k T_k(S)` with Bessel-function coefficients:
//!
//! - `exp(-itH) = exp(-ict) * sum_k (2 - d_k0) (-i)^k J_k(t r) T_k(S)`,
//! - `exp(-sH)  = exp(sr - sc) * sum_k (2 - d_k0) (-1)^k e^{-sr} I_k(s r) T_k(S)`,
//!
//! where `J_k` are Bessel functions of the first kind and `e^{-x} I_k(x)` the
//! scaled modified Bessel functions; both full sequences come out of a single
//! Miller downward recurrence per expansion. The expansion order is chosen so
//! the summed magnitude of the dropped coefficients is below a tolerance
//! (`1e-12` by default), which bounds the operator-norm truncation error on
//! the mapped spectral interval.
//!
//! Smoothed spectral windows (for approximate projections `E_H(-l, l)`) use
//! Chebyshev-Gauss quadrature coefficients with Jackson damping.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Default bound on the truncated coefficient tail.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Hard cap on expansion orders; steps needing more must be split.
pub const MAX_ORDER: usize = 2048;

/// Evolution steps are split so that `|t| * half_width` stays below this.
pub const MAX_STEP_TAU: f64 = 500.0;

/// Affine spectral map `lambda = center + half_width * x`, `x` in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftScale {
    pub center: f64,
    pub half_width: f64,
}

impl ShiftScale {
    /// Map covering `[0, lambda_max]` with a 1% inflated half-width.
    pub fn for_spectrum(lambda_max: f64) -> Self {
        let center = 0.5 * lambda_max;
        Self { center, half_width: 1.01 * center }
    }

    /// Whether `[center - half_width, center + half_width]` covers `[0, hi]`.
    pub fn covers(&self, hi: f64) -> bool {
        self.center - self.half_width <= 0.0 && self.center + self.half_width >= hi
    }
}

/// A truncated expansion `sum_k coeffs[k] T_k((H - center) / half_width)`.
#[derive(Debug, Clone)]
pub struct ChebyshevExpansion {
    shift: ShiftScale,
    coeffs: Vec<C64>,
    tail_bound: f64,
}

impl ChebyshevExpansion {
    /// Expansion of `exp(-itH)`; `t` may be negative.
    pub fn unitary(lambda_max: f64, t: f64, tol: f64) -> Result<Self> {
        let shift = ShiftScale::for_spectrum(lambda_max);
        let tau = t * shift.half_width;
        // Bessel coefficients only start decaying past k ~ |tau|.
        if tau.abs() >= MAX_ORDER as f64 {
            return Err(Error::OrderOverflow { max: MAX_ORDER });
        }
        let n_upper = upper_order(tau.abs());
        let bessel = bessel_j_sequence(tau.abs(), n_upper);
        let unit = if tau >= 0.0 {
            C64::new(0.0, -1.0)
        } else {
            C64::new(0.0, 1.0)
        };
        let phase = C64::from_polar(1.0, -shift.center * t);
        let mut coeffs = Vec::with_capacity(n_upper + 1);
        let mut ipow = C64::new(1.0, 0.0);
        for (k, &jk) in bessel.iter().enumerate() {
            let factor = if k == 0 { 1.0 } else { 2.0 };
            coeffs.push(phase * ipow * (factor * jk));
            ipow *= unit;
        }
        Self::truncate(shift, coeffs, tol)
    }

    /// Expansion of `exp(-sH)`, `s > 0`.
    pub fn heat(lambda_max: f64, s: f64, tol: f64) -> Result<Self> {
        if s <= 0.0 {
            return Err(Error::NonpositiveTime(s));
        }
        let shift = ShiftScale::for_spectrum(lambda_max);
        let sigma = s * shift.half_width;
        if sigma >= MAX_ORDER as f64 {
            return Err(Error::OrderOverflow { max: MAX_ORDER });
        }
        let n_upper = upper_order(sigma);
        let scaled = bessel_i_scaled_sequence(sigma, n_upper);
        // exp(-sc) * I_k(sigma) = [e^{-sigma} I_k(sigma)] * e^{sigma - sc};
        // sigma - sc = 0.005 * s * lambda_max, so the front factor stays tame.
        let front = (sigma - s * shift.center).exp();
        let mut coeffs = Vec::with_capacity(n_upper + 1);
        let mut sign = 1.0;
        for (k, &ik) in scaled.iter().enumerate() {
            let factor = if k == 0 { 1.0 } else { 2.0 };
            coeffs.push(C64::new(factor * sign * ik * front, 0.0));
            sign = -sign;
        }
        Self::truncate(shift, coeffs, tol)
    }

    /// Jackson-damped expansion of an arbitrary bounded `f(lambda)` at a
    /// fixed order, via Chebyshev-Gauss quadrature. Used for smoothed
    /// spectral windows; `tail_bound` records the magnitude of the last
    /// kept coefficient.
    pub fn window<F: Fn(f64) -> f64>(lambda_max: f64, f: F, order: usize) -> Self {
        let shift = ShiftScale::for_spectrum(lambda_max);
        let order = order.min(MAX_ORDER);
        let nodes = (4 * (order + 1)).max(256);
        let samples: Vec<(f64, f64)> = (0..nodes)
            .map(|j| {
                let theta = std::f64::consts::PI * (j as f64 + 0.5) / nodes as f64;
                let x = theta.cos();
                (theta, f(shift.center + shift.half_width * x))
            })
            .collect();
        let np = (order + 1) as f64;
        let cot = 1.0 / (std::f64::consts::PI / np).tan();
        let mut coeffs = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut acc = 0.0;
            for &(theta, val) in &samples {
                acc += val * (k as f64 * theta).cos();
            }
            let raw = acc * if k == 0 { 1.0 } else { 2.0 } / nodes as f64;
            let arg = std::f64::consts::PI * k as f64 / np;
            let jackson = ((np - k as f64) * arg.cos() + arg.sin() * cot) / np;
            coeffs.push(C64::new(raw * jackson, 0.0));
        }
        let tail_bound = coeffs.last().map(|c| c.norm()).unwrap_or(0.0);
        Self { shift, coeffs, tail_bound }
    }

    fn truncate(shift: ShiftScale, coeffs: Vec<C64>, tol: f64) -> Result<Self> {
        let mags: Vec<f64> = coeffs.iter().map(|c| c.norm()).collect();
        // Smallest order whose dropped tail sums below tol.
        let mut tail = 0.0;
        let mut keep = coeffs.len();
        for k in (1..coeffs.len()).rev() {
            if tail + mags[k] > tol {
                break;
            }
            tail += mags[k];
            keep = k;
        }
        if keep > MAX_ORDER + 1 || (keep == coeffs.len() && tail <= 0.0 && coeffs.len() > 1) {
            return Err(Error::OrderOverflow { max: MAX_ORDER });
        }
        let mut kept = coeffs;
        kept.truncate(keep.max(1));
        Ok(Self { shift, coeffs: kept, tail_bound: tail })
    }

    pub fn shift(&self) -> ShiftScale {
        self.shift
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Highest retained polynomial degree.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Summed magnitude of the dropped coefficients.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Evaluates the expansion at a scalar `lambda` by Clenshaw recurrence.
    pub fn eval_scalar(&self, lambda: f64) -> C64 {
        let x = if self.shift.half_width > 0.0 {
            (lambda - self.shift.center) / self.shift.half_width
        } else {
            0.0
        };
        let mut b1 = C64::new(0.0, 0.0);
        let mut b2 = C64::new(0.0, 0.0);
        for k in (1..self.coeffs.len()).rev() {
            let b = self.coeffs[k] + 2.0 * x * b1 - b2;
            b2 = b1;
            b1 = b;
        }
        self.coeffs[0] + x * b1 - b2
    }
}

/// Order comfortably past the superexponential decay onset of the Bessel
/// coefficient sequences for argument `x`.
fn upper_order(x: f64) -> usize {
    let x = x.abs();
    (x + 30.0 * x.cbrt() + 60.0).ceil() as usize
}

/// `J_0(x), ..., J_{n_max}(x)` by Miller's downward recurrence with the
/// normalization `J_0 + 2 sum_k J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, n_max: usize) -> Vec<f64> {
    debug_assert!(x >= 0.0);
    let mut out = vec![0.0; n_max + 1];
    if x < 1e-12 {
        out[0] = 1.0 - 0.25 * x * x;
        if n_max >= 1 {
            out[1] = 0.5 * x;
        }
        return out;
    }
    let start = n_max + 16 + (2.0 * (n_max as f64).sqrt()) as usize;
    let mut upper = 0.0_f64; // unnormalized J_{k+1}
    let mut cur = 1e-300_f64; // unnormalized J_k
    let mut norm = 0.0_f64;
    for k in (0..=start).rev() {
        if k <= n_max {
            out[k] = cur;
        }
        if k % 2 == 0 {
            norm += if k == 0 { cur } else { 2.0 * cur };
        }
        if k > 0 {
            let next = (2.0 * k as f64 / x) * cur - upper;
            upper = cur;
            cur = next;
            if cur.abs() > 1e250 {
                upper *= 1e-250;
                cur *= 1e-250;
                norm *= 1e-250;
                for v in out.iter_mut() {
                    *v *= 1e-250;
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Scaled modified Bessel functions `e^{-x} I_0(x), ..., e^{-x} I_{n_max}(x)`
/// by downward recurrence with the normalization `I_0 + 2 sum_k I_k = e^x`.
pub fn bessel_i_scaled_sequence(x: f64, n_max: usize) -> Vec<f64> {
    debug_assert!(x >= 0.0);
    let mut out = vec![0.0; n_max + 1];
    if x < 1e-12 {
        out[0] = 1.0 - x;
        if n_max >= 1 {
            out[1] = 0.5 * x;
        }
        return out;
    }
    let start = n_max + 16 + (2.0 * (n_max as f64).sqrt()) as usize;
    let mut upper = 0.0_f64;
    let mut cur = 1e-300_f64;
    let mut norm = 0.0_f64;
    for k in (0..=start).rev() {
        if k <= n_max {
            out[k] = cur;
        }
        norm += if k == 0 { cur } else { 2.0 * cur };
        if k > 0 {
            let next = (2.0 * k as f64 / x) * cur + upper;
            upper = cur;
            cur = next;
            if cur.abs() > 1e250 {
                upper *= 1e-250;
                cur *= 1e-250;
                norm *= 1e-250;
                for v in out.iter_mut() {
                    *v *= 1e-250;
                }
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_j_matches_reference_values() {
        let j = bessel_j_sequence(1.0, 4);
        assert!((j[0] - 0.7651976865579666).abs() < 1e-14);
        assert!((j[1] - 0.4400505857449335).abs() < 1e-14);
        let j2 = bessel_j_sequence(2.0, 4);
        assert!((j2[0] - 0.2238907791412357).abs() < 1e-14);
        assert!((j2[1] - 0.5767248077568734).abs() < 1e-14);
    }

    #[test]
    fn bessel_j_square_sum_identity() {
        // J_0^2 + 2 sum_k J_k^2 = 1 for every argument.
        for &x in &[0.3, 2.0, 17.5, 240.0] {
            let n = upper_order(x);
            let j = bessel_j_sequence(x, n);
            let total = j[0] * j[0] + 2.0 * j[1..].iter().map(|v| v * v).sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12, "x = {x}: {total}");
        }
    }

    #[test]
    fn bessel_i_scaled_matches_reference_values() {
        let i = bessel_i_scaled_sequence(1.0, 3);
        assert!((i[0] - 0.4657596075936404).abs() < 1e-14);
        assert!((i[1] - 0.2079104153497084).abs() < 1e-14);
    }

    #[test]
    fn unitary_expansion_reproduces_exponential() {
        for &(lambda_max, t) in &[(4.0, 0.5), (4.0, 10.0), (4.0, -10.0), (7.3, 137.0)] {
            let exp = ChebyshevExpansion::unitary(lambda_max, t, DEFAULT_TAIL_TOL).unwrap();
            for step in 0..=40 {
                let lambda = lambda_max * step as f64 / 40.0;
                let exact = C64::from_polar(1.0, -lambda * t);
                let approx = exp.eval_scalar(lambda);
                assert!(
                    (exact - approx).norm() < 5e-12,
                    "t = {t}, lambda = {lambda}: err = {}",
                    (exact - approx).norm()
                );
            }
        }
    }

    #[test]
    fn heat_expansion_reproduces_exponential() {
        for &(lambda_max, s) in &[(4.0, 0.1), (4.0, 1.0), (9.0, 5.0)] {
            let exp = ChebyshevExpansion::heat(lambda_max, s, DEFAULT_TAIL_TOL).unwrap();
            for step in 0..=40 {
                let lambda = lambda_max * step as f64 / 40.0;
                let exact = (-s * lambda).exp();
                let approx = exp.eval_scalar(lambda);
                assert!(
                    (exact - approx.re).abs() < 5e-12 && approx.im == 0.0,
                    "s = {s}, lambda = {lambda}"
                );
            }
        }
    }

    #[test]
    fn tail_bound_is_enforced() {
        let exp = ChebyshevExpansion::unitary(4.0, 100.0, DEFAULT_TAIL_TOL).unwrap();
        assert!(exp.tail_bound() <= DEFAULT_TAIL_TOL);
        assert!(exp.order() >= (100.0 * exp.shift().half_width) as usize);
        assert!(exp.shift().covers(4.0));
    }

    #[test]
    fn zero_spectrum_collapses_to_identity() {
        let exp = ChebyshevExpansion::unitary(0.0, 3.0, DEFAULT_TAIL_TOL).unwrap();
        assert_eq!(exp.order(), 0);
        assert!((exp.eval_scalar(0.0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        let heat = ChebyshevExpansion::heat(0.0, 2.0, DEFAULT_TAIL_TOL).unwrap();
        assert_eq!(heat.order(), 0);
        assert!((heat.eval_scalar(0.0).re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn order_overflow_signals_step_split() {
        assert!(matches!(
            ChebyshevExpansion::unitary(4.0, 1.0e6, DEFAULT_TAIL_TOL),
            Err(Error::OrderOverflow { .. })
        ));
    }

    #[test]
    fn window_tracks_smooth_step_away_from_edge() {
        let l = 2.0;
        let width = 0.05;
        let f = |lambda: f64| 1.0 / (1.0 + ((lambda - l) / width).exp());
        let exp = ChebyshevExpansion::window(4.0, f, 512);
        for &lambda in &[0.1, 0.5, 1.0, 3.0, 3.9] {
            let err = (exp.eval_scalar(lambda).re - f(lambda)).abs();
            assert!(err < 0.02, "lambda = {lambda}: err = {err}");
        }
    }
}
