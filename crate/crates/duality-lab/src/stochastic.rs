//! Seeded randomness shared by every simulator: addressable RNG streams,
//! Poisson event clocks, correlated Gaussian pairs and the Brownian-bridge
//! barrier-crossing probability used for within-step collision detection.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

/// Handle to a counter-based random stream.
///
/// Identical `(master_seed, stream_id)` pairs reproduce bit-identical draw
/// sequences; distinct stream ids are independently addressable, so
/// replicates can run on any number of workers without coordination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
}

/// splitmix64 finalizer, used to decorrelate derived stream ids.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha12Rng {
        let mut rng = ChaCha12Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Derive a sub-stream, e.g. one per replicate or per edge.
    /// The salt is mixed so that nested derivations do not collide.
    pub fn derive(&self, salt: u64) -> RngStream {
        RngStream {
            master_seed: self.master_seed,
            stream_id: mix64(self.stream_id ^ mix64(salt)),
        }
    }
}

/// Sorted event times of a homogeneous Poisson process on `[0, horizon]`.
#[derive(Debug, Clone)]
pub struct PoissonEvents {
    pub rate: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
}

/// Sample a Poisson event stream by accumulating exponential gaps.
///
/// `horizon == 0` yields an empty stream; negative inputs and nonpositive
/// rates are rejected.
pub fn sample_poisson_events<R: Rng>(
    rate: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<PoissonEvents> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::parameter(format!("poisson rate must be > 0, got {rate}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::parameter(format!(
            "poisson horizon must be >= 0, got {horizon}"
        )));
    }
    let exp = Exp::new(rate).expect("validated rate");
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon {
            break;
        }
        times.push(t);
    }
    Ok(PoissonEvents {
        rate,
        horizon,
        times,
    })
}

/// Sampler for pairs of standard normals with fixed correlation `rho`,
/// via `xi2 = rho*xi1 + sqrt(1-rho^2)*perp`.
#[derive(Debug, Clone, Copy)]
pub struct CorrelatedGaussSampler {
    rho: f64,
    ortho: f64,
}

impl CorrelatedGaussSampler {
    pub fn new(rho: f64) -> Result<Self> {
        if !((-1.0..=1.0).contains(&rho)) {
            return Err(Error::parameter(format!("|rho| must be <= 1, got {rho}")));
        }
        Ok(CorrelatedGaussSampler {
            rho,
            ortho: (1.0 - rho * rho).max(0.0).sqrt(),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let xi1: f64 = StandardNormal.sample(rng);
        let perp: f64 = StandardNormal.sample(rng);
        (xi1, self.rho * xi1 + self.ortho * perp)
    }
}

/// One correlated standard-normal pair; see [`CorrelatedGaussSampler`].
pub fn gaussian_pair<R: Rng>(rho: f64, rng: &mut R) -> Result<(f64, f64)> {
    Ok(CorrelatedGaussSampler::new(rho)?.sample(rng))
}

/// Batch of correlated pairs, mostly useful for statistical self-tests.
#[derive(Debug, Clone)]
pub struct CorrelatedGaussPair {
    pub rho: f64,
    pub draws: Vec<(f64, f64)>,
}

impl CorrelatedGaussPair {
    pub fn sample_n<R: Rng>(rho: f64, n: usize, rng: &mut R) -> Result<Self> {
        let sampler = CorrelatedGaussSampler::new(rho)?;
        let draws = (0..n).map(|_| sampler.sample(rng)).collect();
        Ok(CorrelatedGaussPair { rho, draws })
    }
}

/// Probability that a Brownian bridge from `a` to `b` (distances to the
/// barrier at the step endpoints) touches zero within a step of length `dt`.
///
/// `diffusivity` is the variance per unit time of the gap process; the gap
/// of two independent standard Brownian motions has diffusivity 2. Keeping
/// it explicit avoids the classic factor-of-two bug.
pub fn bridge_crossing_prob(a: f64, b: f64, dt: f64, diffusivity: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::parameter(format!(
            "bridge endpoints must be positive distances, got a={a}, b={b}"
        )));
    }
    if !(dt > 0.0) || !(diffusivity > 0.0) {
        return Err(Error::parameter(format!(
            "dt and diffusivity must be positive, got dt={dt}, diffusivity={diffusivity}"
        )));
    }
    Ok((-2.0 * a * b / (diffusivity * dt)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn identical_streams_reproduce() {
        let s = RngStream::new(7, 42);
        let mut a = s.rng();
        let mut b = s.rng();
        let xs: Vec<u64> = (0..32).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..32).map(|_| b.gen()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn distinct_streams_decorrelated() {
        // Basic cross-correlation sanity between neighbouring stream ids.
        let n = 20_000;
        let mut r1 = RngStream::new(123, 0).rng();
        let mut r2 = RngStream::new(123, 1).rng();
        let xs: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r1)).collect();
        let ys: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut r2)).collect();
        let corr = stats::correlation(&xs, &ys);
        assert!(corr.abs() < 4.0 / (n as f64).sqrt() * 1.5, "corr = {corr}");
    }

    #[test]
    fn poisson_zero_horizon_empty() {
        let mut rng = RngStream::new(1, 0).rng();
        let ev = sample_poisson_events(1.0, 0.0, &mut rng).unwrap();
        assert!(ev.times.is_empty());
    }

    #[test]
    fn poisson_rejects_bad_params() {
        let mut rng = RngStream::new(1, 0).rng();
        assert!(sample_poisson_events(0.0, 1.0, &mut rng).is_err());
        assert!(sample_poisson_events(-1.0, 1.0, &mut rng).is_err());
        assert!(sample_poisson_events(1.0, -1.0, &mut rng).is_err());
    }

    #[test]
    fn poisson_mean_count_rate_two() {
        // rate=2, horizon=10 over 10^4 streams: mean count 20 +- 0.6.
        let base = RngStream::new(2024, 0);
        let n = 10_000u64;
        let mut total = 0usize;
        for i in 0..n {
            let mut rng = base.derive(i).rng();
            total += sample_poisson_events(2.0, 10.0, &mut rng).unwrap().times.len();
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 20.0).abs() < 0.6, "mean = {mean}");
    }

    #[test]
    fn poisson_mean_count_voter_rate() {
        // Voter arrows fire at rate 1/2 per directed edge (d=1): horizon 100
        // gives mean 50 within a 3 sigma CLT band.
        let base = RngStream::new(99, 0);
        let n = 10_000u64;
        let mut total = 0usize;
        for i in 0..n {
            let mut rng = base.derive(i).rng();
            total += sample_poisson_events(0.5, 100.0, &mut rng).unwrap().times.len();
        }
        let mean = total as f64 / n as f64;
        let sigma = (50.0f64 / n as f64).sqrt();
        assert!((mean - 50.0).abs() < 3.0 * sigma, "mean = {mean}");
    }

    #[test]
    fn poisson_times_sorted_below_horizon() {
        let mut rng = RngStream::new(5, 9).rng();
        let ev = sample_poisson_events(3.0, 7.0, &mut rng).unwrap();
        assert!(ev.times.windows(2).all(|w| w[0] < w[1]));
        assert!(ev.times.iter().all(|&t| t <= 7.0));
    }

    #[test]
    fn poisson_gaps_pass_exponential_ks() {
        // KS of exponential gaps at level 0.01 with 10^4 gaps.
        let mut rng = RngStream::new(31337, 0).rng();
        let rate = 1.7;
        let ev = sample_poisson_events(rate, 7000.0, &mut rng).unwrap();
        let mut gaps: Vec<f64> = Vec::with_capacity(ev.times.len());
        let mut prev = 0.0;
        for &t in &ev.times {
            gaps.push(t - prev);
            prev = t;
        }
        gaps.truncate(10_000);
        assert!(gaps.len() >= 10_000, "need 10^4 gaps, got {}", gaps.len());
        let (_, p) = stats::ks_test(&mut gaps, |x| 1.0 - (-rate * x).exp());
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn gaussian_pair_extreme_rho() {
        let mut rng = RngStream::new(3, 3).rng();
        for _ in 0..100 {
            let (x, y) = gaussian_pair(1.0, &mut rng).unwrap();
            assert!((x - y).abs() < 1e-12);
            let (x, y) = gaussian_pair(-1.0, &mut rng).unwrap();
            assert!((x + y).abs() < 1e-12);
        }
        assert!(gaussian_pair(1.0001, &mut rng).is_err());
    }

    #[test]
    fn gaussian_pair_zero_rho_uncorrelated() {
        let mut rng = RngStream::new(4, 0).rng();
        let n = 100_000;
        let batch = CorrelatedGaussPair::sample_n(0.0, n, &mut rng).unwrap();
        let xs: Vec<f64> = batch.draws.iter().map(|d| d.0).collect();
        let ys: Vec<f64> = batch.draws.iter().map(|d| d.1).collect();
        let corr = stats::correlation(&xs, &ys);
        assert!(corr.abs() < 0.013, "corr = {corr}");
    }

    #[test]
    fn gaussian_marginals_pass_normality_ks() {
        let mut rng = RngStream::new(8, 1).rng();
        let n = 10_000;
        let batch = CorrelatedGaussPair::sample_n(-0.6, n, &mut rng).unwrap();
        let mut xs: Vec<f64> = batch.draws.iter().map(|d| d.0).collect();
        let mut ys: Vec<f64> = batch.draws.iter().map(|d| d.1).collect();
        let corr = stats::correlation(&xs, &ys);
        assert!((corr + 0.6).abs() < 4.0 / (n as f64).sqrt() * 1.5, "corr = {corr}");
        // ks_test sorts in place, so the correlation runs first
        let (_, px) = stats::ks_test(&mut xs, stats::std_normal_cdf);
        let (_, py) = stats::ks_test(&mut ys, stats::std_normal_cdf);
        assert!(px > 0.01 && py > 0.01, "px = {px}, py = {py}");
    }

    #[test]
    fn bridge_crossing_closed_form_values() {
        // Starts essentially at the barrier.
        assert!(bridge_crossing_prob(1e-12, 1.0, 1.0, 2.0).unwrap() > 1.0 - 1e-9);
        let p = bridge_crossing_prob(1.0, 1.0, 1.0, 2.0).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-15);
        // Far from the barrier on a tiny step.
        assert!(bridge_crossing_prob(3.0, 3.0, 0.01, 2.0).unwrap() < 1e-300);
        assert!(bridge_crossing_prob(-1.0, 1.0, 1.0, 2.0).is_err());
        assert!(bridge_crossing_prob(1.0, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn bridge_crossing_vs_fine_substep_monte_carlo() {
        // Discretely monitored bridge crossing underestimates the continuous
        // probability by O(sqrt(h)); Richardson-extrapolate two levels in
        // sqrt(h) and compare at 3 sigma.
        let (a, b, dt, diff) = (1.0, 1.0, 1.0, 2.0);
        let target = bridge_crossing_prob(a, b, dt, diff).unwrap();
        let estimate = |substeps: usize, stream: u64| -> (f64, f64) {
            let n = 100_000;
            let mut rng = RngStream::new(777, stream).rng();
            let mut hits = 0u64;
            let h = dt / substeps as f64;
            for _ in 0..n {
                let mut x = a;
                let mut s = 0.0;
                let mut crossed = false;
                for k in 0..substeps {
                    let remaining = dt - s;
                    let mean = x + h / remaining * (b - x);
                    let var = diff * h * (remaining - h) / remaining;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x = if k + 1 == substeps { b } else { mean + var.max(0.0).sqrt() * z };
                    s += h;
                    if x <= 0.0 {
                        crossed = true;
                        break;
                    }
                }
                if crossed {
                    hits += 1;
                }
            }
            let p = hits as f64 / n as f64;
            (p, (p * (1.0 - p) / n as f64).sqrt())
        };
        let (p1, se1) = estimate(512, 1);
        let (p2, se2) = estimate(2048, 2);
        // p(h) ~ p0 - c sqrt(h): with h2 = h1/4, p0 = 2*p2 - p1.
        let extrapolated = 2.0 * p2 - p1;
        let se = (4.0 * se2 * se2 + se1 * se1).sqrt();
        assert!(
            (extrapolated - target).abs() < 3.0 * se,
            "extrapolated = {extrapolated}, target = {target}, se = {se}"
        );
    }
}
