//! Numerical helpers: the Gaussian Q-function, adaptive quadrature and
//! discrete count distributions evaluated in the log domain.

use statrs::function::gamma::ln_gamma;

/// Gaussian tail probability `Q(z) = P(Z > z)`.
#[inline]
pub fn q_function(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

const INITIAL_PANELS: usize = 16;
const MAX_DEPTH: u32 = 40;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`.
///
/// The interval is first cut into a fixed number of panels, so integrands
/// with narrow features or jump discontinuities are not missed by the first
/// coarse estimate. Panels around a jump recurse to the depth limit, which
/// leaves an error of order `(b - a) · 2⁻⁴⁰` times the jump height.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_simpson_with_breaks(&f, &[a, b], tol)
}

/// Like [`adaptive_simpson`], but additionally splits at the given interior
/// break points. `points` must be sorted and include both end points.
pub fn adaptive_simpson_with_breaks<F: Fn(f64) -> f64>(f: &F, points: &[f64], tol: f64) -> f64 {
    let (lo, hi) = (points[0], points[points.len() - 1]);
    let total = hi - lo;
    if total <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / INITIAL_PANELS as f64;
        let panel_tol = tol * h / total;
        for i in 0..INITIAL_PANELS {
            let x0 = a + i as f64 * h;
            let x1 = if i + 1 == INITIAL_PANELS { b } else { x0 + h };
            let (f0, f1) = (f(x0), f(x1));
            let xm = 0.5 * (x0 + x1);
            let fm = f(xm);
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            sum += simpson_step(f, x0, x1, f0, fm, f1, whole, panel_tol, MAX_DEPTH);
        }
    }
    sum
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Probability mass of a non-negative integer random variable, stored from
/// `offset` onward. Entries below `offset` or past the end are zero (or too
/// small to represent).
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    offset: usize,
    pmf: Vec<f64>,
    /// `below[j] = P(N < offset + j)`
    below: Vec<f64>,
    /// `at_least[j] = P(N ≥ offset + j)`
    at_least: Vec<f64>,
}

/// Log-pmf entries this far below the mode underflow anyway.
const LOG_CUTOFF: f64 = 745.0;

/// Narrows `[lo, hi]` to the indices whose log-pmf lies within
/// `LOG_CUTOFF` of the mode. The log-pmf is unimodal, so each side is a
/// binary search.
fn significant_support<F: Fn(usize) -> f64>(
    log_pmf: &F,
    mode: usize,
    lo: usize,
    hi: usize,
) -> (usize, usize) {
    let floor = log_pmf(mode) - LOG_CUTOFF;
    // smallest k in [lo, mode] with log_pmf(k) >= floor
    let (mut a, mut b) = (lo, mode);
    while a < b {
        let m = a + (b - a) / 2;
        if log_pmf(m) >= floor {
            b = m;
        } else {
            a = m + 1;
        }
    }
    let first = a;
    // largest k in [mode, hi] with log_pmf(k) >= floor
    let (mut a, mut b) = (mode, hi);
    while a < b {
        let m = a + (b - a).div_ceil(2);
        if log_pmf(m) >= floor {
            a = m;
        } else {
            b = m - 1;
        }
    }
    (first, a)
}

impl CountDistribution {
    pub fn degenerate(value: usize) -> Self {
        Self::from_pmf(value, vec![1.0])
    }

    /// Poisson distribution with mean `lambda`, evaluated as
    /// `exp(k ln λ − λ − ln k!)` so that large means cannot overflow.
    pub fn poisson(lambda: f64) -> Self {
        assert!(lambda >= 0.0 && lambda.is_finite(), "Poisson mean {lambda}");
        if lambda == 0.0 {
            return Self::degenerate(0);
        }
        let log_pmf = |k: usize| k as f64 * lambda.ln() - lambda - ln_gamma(k as f64 + 1.0);
        let mode = lambda.floor() as usize;
        let spread = 40.0 * lambda.sqrt() + 50.0;
        let (lo, hi) = significant_support(
            &log_pmf,
            mode,
            (lambda - spread).max(0.0) as usize,
            (lambda + spread).ceil() as usize,
        );
        let pmf = (lo..=hi).map(|k| log_pmf(k).exp()).collect();
        Self::from_pmf(lo, pmf)
    }

    /// Binomial distribution with `n` trials and success probability `p`.
    pub fn binomial(n: u64, p: f64) -> Self {
        assert!((0.0..=1.0).contains(&p), "binomial probability {p}");
        if p == 0.0 || n == 0 {
            return Self::degenerate(0);
        }
        if p == 1.0 {
            return Self::degenerate(n as usize);
        }
        let nf = n as f64;
        let ln_n_fact = ln_gamma(nf + 1.0);
        let (lp, lq) = (p.ln(), (-p).ln_1p());
        let log_pmf = |k: usize| {
            let kf = k as f64;
            ln_n_fact - ln_gamma(kf + 1.0) - ln_gamma(nf - kf + 1.0) + kf * lp + (nf - kf) * lq
        };
        let mode = (((nf + 1.0) * p).floor() as usize).min(n as usize);
        let (lo, hi) = significant_support(&log_pmf, mode, 0, n as usize);
        let pmf = (lo..=hi).map(|k| log_pmf(k).exp()).collect();
        Self::from_pmf(lo, pmf)
    }

    fn from_pmf(offset: usize, pmf: Vec<f64>) -> Self {
        let n = pmf.len();
        let mut below = vec![0.0; n + 1];
        for j in 0..n {
            below[j + 1] = below[j] + pmf[j];
        }
        let mut at_least = vec![0.0; n + 1];
        for j in (0..n).rev() {
            at_least[j] = at_least[j + 1] + pmf[j];
        }
        CountDistribution {
            offset,
            pmf,
            below,
            at_least,
        }
    }

    /// Distribution of the sum of two independent counts.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut out = vec![0.0; self.pmf.len() + other.pmf.len() - 1];
        for (i, &p) in self.pmf.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (j, &q) in other.pmf.iter().enumerate() {
                out[i + j] += p * q;
            }
        }
        // trim negligible edges
        let max = out.iter().cloned().fold(0.0, f64::max);
        let floor = max * 1e-300;
        let first = out.iter().position(|&p| p > floor).unwrap_or(0);
        let last = out.iter().rposition(|&p| p > floor).unwrap_or(0);
        Self::from_pmf(
            self.offset + other.offset + first,
            out[first..=last].to_vec(),
        )
    }

    pub fn pmf(&self, k: usize) -> f64 {
        k.checked_sub(self.offset)
            .and_then(|j| self.pmf.get(j))
            .copied()
            .unwrap_or(0.0)
    }

    /// `P(N < k)`.
    pub fn prob_below(&self, k: usize) -> f64 {
        match k.checked_sub(self.offset) {
            None => 0.0,
            Some(j) if j >= self.pmf.len() => 1.0,
            Some(j) => self.below[j],
        }
    }

    /// `P(N ≥ k)`, summed from the upper tail so small values keep full
    /// relative precision.
    pub fn prob_at_least(&self, k: usize) -> f64 {
        match k.checked_sub(self.offset) {
            None | Some(0) => 1.0,
            Some(j) => self.at_least[j.min(self.pmf.len())],
        }
    }

    pub fn mean(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(j, p)| (self.offset + j) as f64 * p)
            .sum()
    }
}
