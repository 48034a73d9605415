//! Numerical and statistical helpers shared by the simulation modules,
//! the experiments and the test suites.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Compensated (Kahan) accumulator. Exponential sums over large generations
/// span many orders of magnitude; plain summation loses the low bits that
/// the exact-identity tests check.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    err: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.err;
        let t = self.sum + y;
        self.err = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl std::ops::AddAssign<f64> for KahanSum {
    #[inline]
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

/// Kahan sum of an iterator.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = KahanSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = kahan_sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let ss = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    let var = ss / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

/// Weighted mean with self-normalized weights, plus an effective-sample-size
/// based standard error.
pub fn weighted_mean_se(xs: &[f64], ws: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ws.len());
    let wsum = kahan_sum(ws.iter().copied());
    let mean = kahan_sum(xs.iter().zip(ws).map(|(x, w)| x * w)) / wsum;
    let w2 = kahan_sum(ws.iter().map(|w| w * w));
    let ess = wsum * wsum / w2;
    let var = kahan_sum(xs.iter().zip(ws).map(|(x, w)| w * (x - mean) * (x - mean))) / wsum;
    (mean, (var / ess).sqrt(), ess)
}

/// Median by total order on f64. Deterministic for identical inputs.
pub fn median(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Do the two 3-standard-error intervals overlap?
pub fn overlap_3se(m1: f64, se1: f64, m2: f64, se2: f64) -> bool {
    (m1 - m2).abs() <= 3.0 * (se1 + se2)
}

/// z-score of the difference of two independent estimates.
pub fn diff_z(m1: f64, se1: f64, m2: f64, se2: f64) -> f64 {
    (m1 - m2).abs() / (se1 * se1 + se2 * se2).sqrt().max(f64::MIN_POSITIVE)
}

/// One-sample Kolmogorov-Smirnov statistic against a CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i as f64 + 1.0) / n - f).abs());
    }
    d
}

/// Weighted one-sample KS statistic: sup distance between the
/// weight-normalized empirical CDF and the reference CDF.
pub fn weighted_ks_statistic<F: Fn(f64) -> f64>(sample: &[f64], weights: &[f64], cdf: F) -> f64 {
    assert_eq!(sample.len(), weights.len());
    let mut idx: Vec<usize> = (0..sample.len()).collect();
    idx.sort_by(|&a, &b| sample[a].total_cmp(&sample[b]));
    let total = kahan_sum(weights.iter().copied());
    let mut cum = 0.0;
    let mut d: f64 = 0.0;
    for &i in &idx {
        let f = cdf(sample[i]);
        d = d.max((f - cum / total).abs());
        cum += weights[i];
        d = d.max((cum / total - f).abs());
    }
    d
}

/// Two-sample KS statistic.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        if sa[i] <= sb[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Pearson chi-square goodness-of-fit p-value for observed counts against
/// expected probabilities (which must sum to 1).
pub fn chi_square_p(observed: &[u64], expected_probs: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected_probs.len());
    let n: u64 = observed.iter().sum();
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * n as f64;
        if e > 0.0 {
            stat += (o as f64 - e) * (o as f64 - e) / e;
        } else if o > 0 {
            return 0.0;
        }
    }
    let df = (observed.len() - 1) as f64;
    let chi = ChiSquared::new(df).expect("df > 0");
    1.0 - chi.cdf(stat)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Rayleigh CDF, the time-1 law of the Brownian meander.
pub fn rayleigh_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        1.0 - (-0.5 * x * x).exp()
    }
}

/// Maxwell CDF, the time-1 law of the three-dimensional Bessel process.
pub fn maxwell_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let phi = (2.0 / std::f64::consts::PI).sqrt();
    statrs::function::erf::erf(x / std::f64::consts::SQRT_2) - phi * x * (-0.5 * x * x).exp()
}

/// Weighted least-squares line fit. Returns (intercept, slope, slope_se).
pub fn wls_line(xs: &[f64], ys: &[f64], ses: &[f64]) -> (f64, f64, f64) {
    assert!(xs.len() == ys.len() && ys.len() == ses.len() && xs.len() >= 2);
    let w: Vec<f64> = ses
        .iter()
        .map(|s| {
            let s = s.max(1e-12);
            1.0 / (s * s)
        })
        .collect();
    let sw = kahan_sum(w.iter().copied());
    let swx = kahan_sum(w.iter().zip(xs).map(|(w, x)| w * x));
    let swy = kahan_sum(w.iter().zip(ys).map(|(w, y)| w * y));
    let swxx = kahan_sum(w.iter().zip(xs).map(|(w, x)| w * x * x));
    let swxy = kahan_sum(w.iter().zip(xs.iter().zip(ys)).map(|(w, (x, y))| w * x * y));
    let denom = sw * swxx - swx * swx;
    let slope = (sw * swxy - swx * swy) / denom;
    let intercept = (swy - slope * swx) / sw;
    let slope_se = (sw / denom).sqrt();
    (intercept, slope, slope_se)
}

/// Adaptive composite Simpson integration by interval halving until two
/// refinements agree to `tol` (absolute) or the panel budget is exhausted.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let mut n = 64usize;
    let mut prev = simpson_n(&f, a, b, n);
    loop {
        n *= 2;
        let cur = simpson_n(&f, a, b, n);
        if (cur - prev).abs() <= tol || n >= 1 << 22 {
            return cur;
        }
        prev = cur;
    }
}

fn simpson_n<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = KahanSum::new();
    acc.add(f(a));
    acc.add(f(b));
    for i in 1..n {
        let x = a + h * i as f64;
        acc.add(if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) });
    }
    acc.value() * h / 3.0
}
