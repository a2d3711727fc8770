//! Small statistics toolbox: deterministic reductions, confidence
//! intervals, KS / chi-square / Mann-Kendall tests. Everything here is
//! plain-f64 and allocation-light so it can sit inside replicate loops.

use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// z-score of the two-sided 95% interval.
pub const Z95: f64 = 1.959963984540054;

/// Pairwise (cascade) summation: deterministic for a fixed input order and
/// much better conditioned than naive accumulation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Mean / standard error / 95% CI of a sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

impl Summary {
    pub fn from_samples(xs: &[f64]) -> Summary {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Summary {
                mean: f64::NAN,
                stderr: f64::NAN,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
                n: 0,
            };
        }
        let mean = pairwise_sum(xs) / n;
        let sq: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
        let var = if xs.len() > 1 {
            pairwise_sum(&sq) / (n - 1.0)
        } else {
            0.0
        };
        let stderr = (var / n).sqrt();
        Summary {
            mean,
            stderr,
            ci_low: mean - Z95 * stderr,
            ci_high: mean + Z95 * stderr,
            n: xs.len() as u64,
        }
    }

    pub fn exact(value: f64, n: u64) -> Summary {
        Summary {
            mean: value,
            stderr: 0.0,
            ci_low: value,
            ci_high: value,
            n,
        }
    }

    /// Do the 95% intervals of two estimates overlap?
    pub fn ci_overlaps(&self, other: &Summary) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }

    /// |m1 - m2| measured in combined standard errors.
    pub fn z_against(&self, other: &Summary) -> f64 {
        let se = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        if se == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / se
        }
    }

    /// |mean - reference| in own standard errors.
    pub fn z_against_value(&self, reference: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.mean == reference {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - reference).abs() / self.stderr
        }
    }
}

/// Componentwise summary of complex-valued samples.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ComplexSummary {
    pub re: Summary,
    pub im: Summary,
}

impl ComplexSummary {
    pub fn from_samples(zs: &[Complex64]) -> ComplexSummary {
        let re: Vec<f64> = zs.iter().map(|z| z.re).collect();
        let im: Vec<f64> = zs.iter().map(|z| z.im).collect();
        ComplexSummary {
            re: Summary::from_samples(&re),
            im: Summary::from_samples(&im),
        }
    }

    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re.mean, self.im.mean)
    }

    pub fn ci_overlaps(&self, other: &ComplexSummary) -> bool {
        self.re.ci_overlaps(&other.re) && self.im.ci_overlaps(&other.im)
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn erf(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = pairwise_sum(xs) / n;
    let my = pairwise_sum(ys) / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Survival function of the Kolmogorov distribution,
/// `Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic one-sample KS p-value with Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf(d * (sn + 0.12 + 0.11 / sn))
}

/// One-sample KS statistic against a CDF; sorts the sample in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    d
}

/// One-sample KS test; returns (statistic, p-value).
pub fn ks_test(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let d = ks_statistic(samples, cdf);
    (d, ks_pvalue(d, samples.len()))
}

/// Two-sample KS test; returns (statistic, p-value).
pub fn ks2_test(a: &mut [f64], b: &mut [f64]) -> (f64, f64) {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len(), b.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let xa = a[i];
        let xb = b[j];
        let x = xa.min(xb);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    (d, ks_pvalue(d, ne.round() as usize))
}

/// Chi-square goodness-of-fit of observed counts against expected counts.
/// Bins with expected < 5 are pooled into their neighbour. Returns
/// (statistic, dof, p-value).
pub fn chi2_gof(observed: &[f64], expected: &[f64]) -> (f64, usize, f64) {
    assert_eq!(observed.len(), expected.len());
    let mut obs_pooled = Vec::new();
    let mut exp_pooled = Vec::new();
    let mut acc_o = 0.0;
    let mut acc_e = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        acc_o += o;
        acc_e += e;
        if acc_e >= 5.0 {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 {
        if let (Some(o), Some(e)) = (obs_pooled.last_mut(), exp_pooled.last_mut()) {
            *o += acc_o;
            *e += acc_e;
        } else {
            obs_pooled.push(acc_o);
            exp_pooled.push(acc_e);
        }
    }
    let mut stat = 0.0;
    for (&o, &e) in obs_pooled.iter().zip(&exp_pooled) {
        if e > 0.0 {
            stat += (o - e) * (o - e) / e;
        }
    }
    let dof = obs_pooled.len().saturating_sub(1).max(1);
    let p = chi2_sf(stat, dof);
    (stat, dof, p)
}

/// Two-sample chi-square homogeneity test on count histograms over a shared
/// bin domain. Returns (statistic, dof, p-value).
pub fn chi2_homogeneity(counts_a: &[u64], counts_b: &[u64]) -> (f64, usize, f64) {
    assert_eq!(counts_a.len(), counts_b.len());
    let na: f64 = counts_a.iter().sum::<u64>() as f64;
    let nb: f64 = counts_b.iter().sum::<u64>() as f64;
    let total = na + nb;
    // Pool bins until each pooled bin has >= 5 expected in both samples.
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&a, &b) in counts_a.iter().zip(counts_b) {
        acc.0 += a as f64;
        acc.1 += b as f64;
        let row = acc.0 + acc.1;
        if row * na / total >= 5.0 && row * nb / total >= 5.0 {
            pooled.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        if let Some(last) = pooled.last_mut() {
            last.0 += acc.0;
            last.1 += acc.1;
        } else {
            pooled.push(acc);
        }
    }
    let mut stat = 0.0;
    for &(a, b) in &pooled {
        let row = a + b;
        let ea = row * na / total;
        let eb = row * nb / total;
        if ea > 0.0 {
            stat += (a - ea) * (a - ea) / ea;
        }
        if eb > 0.0 {
            stat += (b - eb) * (b - eb) / eb;
        }
    }
    let dof = pooled.len().saturating_sub(1).max(1);
    (stat, dof, chi2_sf(stat, dof))
}

fn chi2_sf(stat: f64, dof: usize) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).unwrap();
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

/// Mann-Kendall trend z-statistic (ties handled via the variance
/// correction). Positive z indicates an increasing trend.
pub fn mann_kendall_z(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            s += match xs[j].partial_cmp(&xs[i]).unwrap() {
                std::cmp::Ordering::Greater => 1,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Equal => 0,
            };
        }
    }
    // Tie groups.
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut tie_term = 0.0;
    let mut run = 1usize;
    for i in 1..=n {
        if i < n && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            if run > 1 {
                let t = run as f64;
                tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
            }
            run = 1;
        }
    }
    let nf = n as f64;
    let var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
    if var <= 0.0 {
        return 0.0;
    }
    let s = s as f64;
    let adj = if s > 0.0 {
        s - 1.0
    } else if s < 0.0 {
        s + 1.0
    } else {
        0.0
    };
    adj / var.sqrt()
}

/// A pair of independent Monte-Carlo estimates of the same quantity,
/// as produced by the two sides of a duality identity.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TwoSidedEstimate {
    pub lhs: Summary,
    pub rhs: Summary,
}

impl TwoSidedEstimate {
    pub fn ci_overlaps(&self) -> bool {
        self.lhs.ci_overlaps(&self.rhs)
    }

    pub fn z_gap(&self) -> f64 {
        self.lhs.z_against(&self.rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn pairwise_sum_matches_naive_on_ints() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn summary_basics() {
        let s = Summary::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!(s.ci_low <= s.mean && s.mean <= s.ci_high);
    }

    #[test]
    fn ks_uniform_sample_accepts() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(10);
        let mut xs: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
        let (_, p) = ks_test(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn ks_detects_wrong_cdf() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let mut xs: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>().powi(2)).collect();
        let (_, p) = ks_test(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(p < 1e-6, "p = {p}");
    }

    #[test]
    fn ks2_same_distribution_accepts() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(12);
        let mut a: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        let mut b: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>()).collect();
        let (_, p) = ks2_test(&mut a, &mut b);
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn chi2_fair_die() {
        let observed = [95.0, 105.0, 100.0, 98.0, 102.0, 100.0];
        let expected = [100.0; 6];
        let (_, dof, p) = chi2_gof(&observed, &expected);
        assert_eq!(dof, 5);
        assert!(p > 0.5, "p = {p}");
    }

    #[test]
    fn mann_kendall_direction() {
        let inc: Vec<f64> = (0..30).map(|i| i as f64 + 0.1).collect();
        let dec: Vec<f64> = (0..30).map(|i| -(i as f64)).collect();
        assert!(mann_kendall_z(&inc) > 3.0);
        assert!(mann_kendall_z(&dec) < -3.0);
        let flat = vec![1.0; 30];
        assert_eq!(mann_kendall_z(&flat), 0.0);
    }

    #[test]
    fn kolmogorov_sf_reference_value() {
        // Q(1.0) ~ 0.26999967 (classical table value).
        assert!((kolmogorov_sf(1.0) - 0.2699996716773362).abs() < 1e-9);
    }
}
