//! Coloured-particle moment dual on the lattice: continuous-time random
//! walks carrying colours in {1,2}, pairwise collision (co-location) time
//! ledgers and exponential weights for finite branching rate, the
//! measure-valued colour process driven by a linear ODE along the local
//! times, and its infinite-rate limit built from the jump operator applied
//! at new-pair meeting times.
//!
//! Walkers jump at rate 1/2 per direction, matching the `Delta/2` drift of
//! the unit-spacing field solver: that match is what makes the moment
//! duality an identity rather than an approximation. On the lattice the
//! collision local time is literal co-location time, so everything here is
//! event-driven and exact.

use crate::error::{Error, Result};
use crate::mc::{replicate_map, replicate_summary};
use crate::particles::{
    continuous_voter, Domain, Mode, ParticleSystem1D, PiecewiseConstantProfile, StepSchedule,
};
use crate::sbm::{FieldPair, SbmParams, SbmSimulator};
use crate::stats::{Summary, TwoSidedEstimate};
use crate::stochastic::RngStream;
use rand::Rng;

pub const MAX_WALKERS: usize = 12;

/// Pairwise accumulated co-location times, split into same-colour and
/// different-colour totals as the colours evolved along the path.
#[derive(Debug, Clone)]
pub struct LocalTimeLedger {
    pair: Vec<f64>,
    pub eq: f64,
    pub neq: f64,
}

impl LocalTimeLedger {
    pub fn new(n: usize) -> Self {
        LocalTimeLedger {
            pair: vec![0.0; n * (n - 1) / 2 + 1],
            eq: 0.0,
            neq: 0.0,
        }
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        b * (b - 1) / 2 + a
    }

    pub fn pair_time(&self, i: usize, j: usize) -> f64 {
        self.pair[self.idx(i, j)]
    }

    pub fn total_pair_time(&self) -> f64 {
        self.pair.iter().sum()
    }

    fn accumulate(&mut self, duration: f64, pairs: &[(usize, usize)], colours: &[u8]) {
        for &(i, j) in pairs {
            let k = self.idx(i, j);
            self.pair[k] += duration;
            if colours[i] == colours[j] {
                self.eq += duration;
            } else {
                self.neq += duration;
            }
        }
    }
}

/// Terminal state of a coloured dual run.
#[derive(Debug, Clone)]
pub struct ColouredWalkers {
    pub positions: Vec<i64>,
    pub colours: Vec<u8>,
    pub ledger: LocalTimeLedger,
    pub flips: u64,
}

fn validate_walker_input(x: &[i64], c: &[u8]) -> Result<()> {
    if x.is_empty() || x.len() > MAX_WALKERS {
        return Err(Error::Size(format!(
            "walker count must be in 1..={MAX_WALKERS}, got {}",
            x.len()
        )));
    }
    if c.len() != x.len() || c.iter().any(|&ci| ci != 1 && ci != 2) {
        return Err(Error::parameter("colours must be one of {1,2} per walker"));
    }
    Ok(())
}

fn colocated_pairs(pos: &[i64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..pos.len() {
        for j in (i + 1)..pos.len() {
            if pos[i] == pos[j] {
                out.push((i, j));
            }
        }
    }
    out
}

/// Event-driven coloured dual: walkers jump at rate 1/2 per direction;
/// while a same-coloured pair is co-located a rate-`gamma` clock runs, and
/// on ringing a uniformly chosen member of the pair flips colour. The
/// ledger collects pairwise co-location time split by colour agreement.
pub fn simulate_coloured_dual<R: Rng>(
    x: &[i64],
    c: &[u8],
    gamma: f64,
    rho: f64,
    t: f64,
    torus: Option<i64>,
    rng: &mut R,
) -> Result<ColouredWalkers> {
    validate_walker_input(x, c)?;
    if !(gamma >= 0.0) || rho.abs() > 1.0 {
        return Err(Error::parameter("need gamma >= 0 and |rho| <= 1"));
    }
    let n = x.len();
    let wrap = |p: i64| match torus {
        Some(l) => p.rem_euclid(l),
        None => p,
    };
    let mut pos: Vec<i64> = x.iter().map(|&p| wrap(p)).collect();
    let mut colours = c.to_vec();
    let mut ledger = LocalTimeLedger::new(n);
    let mut flips = 0u64;
    let mut now = 0.0;
    loop {
        let pairs = colocated_pairs(&pos);
        let same: Vec<(usize, usize)> = pairs
            .iter()
            .copied()
            .filter(|&(i, j)| colours[i] == colours[j])
            .collect();
        let rate = n as f64 + gamma * same.len() as f64;
        let dt = -rng.gen::<f64>().ln() / rate;
        if now + dt >= t {
            ledger.accumulate(t - now, &pairs, &colours);
            break;
        }
        ledger.accumulate(dt, &pairs, &colours);
        now += dt;
        if rng.gen::<f64>() * rate < n as f64 {
            let k = rng.gen_range(0..n);
            let step = if rng.gen::<bool>() { 1 } else { -1 };
            pos[k] = wrap(pos[k] + step);
        } else {
            let &(i, j) = &same[rng.gen_range(0..same.len())];
            let member = if rng.gen::<bool>() { i } else { j };
            colours[member] = 3 - colours[member];
            flips += 1;
        }
    }
    Ok(ColouredWalkers {
        positions: pos,
        colours,
        ledger,
        flips,
    })
}

/// Interval of constant co-location structure along a sampled path.
#[derive(Debug, Clone)]
pub struct PathSegment {
    pub duration: f64,
    pub pairs: Vec<(usize, usize)>,
}

/// Times at which a new pair of walkers first meets (pairs that were
/// apart at the previous meeting time), with the pair indices.
#[derive(Debug, Clone, Default)]
pub struct MeetingSchedule {
    pub events: Vec<(f64, usize, usize)>,
}

/// Walker paths reduced to what the colour evolution needs: co-location
/// segments and the new-pair meeting schedule.
#[derive(Debug, Clone)]
pub struct CoLocationPath {
    pub n: usize,
    pub horizon: f64,
    pub segments: Vec<PathSegment>,
    pub meetings: MeetingSchedule,
}

impl CoLocationPath {
    pub fn total_colocation_time(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.duration * s.pairs.len() as f64)
            .sum()
    }
}

/// Sample walker paths (no colours) and record the co-location structure.
pub fn sample_colocation_path<R: Rng>(
    x: &[i64],
    t: f64,
    torus: Option<i64>,
    rng: &mut R,
) -> Result<CoLocationPath> {
    if x.is_empty() || x.len() > MAX_WALKERS {
        return Err(Error::Size("walker count out of range".into()));
    }
    let n = x.len();
    let wrap = |p: i64| match torus {
        Some(l) => p.rem_euclid(l),
        None => p,
    };
    let mut pos: Vec<i64> = x.iter().map(|&p| wrap(p)).collect();
    let mut segments = Vec::new();
    let mut meetings = MeetingSchedule::default();
    // co-location matrix snapshot at the last meeting time
    let mut snapshot: Vec<bool> = {
        let pairs = colocated_pairs(&pos);
        pair_matrix(n, &pairs)
    };
    let mut now = 0.0;
    loop {
        let pairs = colocated_pairs(&pos);
        let rate = n as f64;
        let dt = -rng.gen::<f64>().ln() / rate;
        let duration = dt.min(t - now);
        segments.push(PathSegment { duration, pairs });
        if now + dt >= t {
            break;
        }
        now += dt;
        let k = rng.gen_range(0..n);
        let step = if rng.gen::<bool>() { 1 } else { -1 };
        pos[k] = wrap(pos[k] + step);
        // a jump can join walker k with several others at once; each pair
        // apart at the last meeting time counts as newly met
        let mut met_any = false;
        for j in 0..n {
            if j != k && pos[j] == pos[k] {
                let (a, b) = if k < j { (k, j) } else { (j, k) };
                if !snapshot[b * n + a] {
                    meetings.events.push((now, a, b));
                    met_any = true;
                }
            }
        }
        if met_any {
            snapshot = pair_matrix(n, &colocated_pairs(&pos));
        }
    }
    Ok(CoLocationPath {
        n,
        horizon: t,
        segments,
        meetings,
    })
}

fn pair_matrix(n: usize, pairs: &[(usize, usize)]) -> Vec<bool> {
    let mut m = vec![false; n * n];
    for &(i, j) in pairs {
        m[j * n + i] = true;
        m[i * n + j] = true;
    }
    m
}

/// Nonnegative weights over the `2^n` colourings `{1,2}^n`. Index bit `i`
/// is 0 for colour 1 and 1 for colour 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ColourMeasure {
    n: usize,
    pub weights: Vec<f64>,
}

impl ColourMeasure {
    pub fn delta(c: &[u8]) -> Result<Self> {
        if c.is_empty() || c.len() > MAX_WALKERS || c.iter().any(|&ci| ci != 1 && ci != 2) {
            return Err(Error::parameter("colouring must be nonempty over {1,2}"));
        }
        let n = c.len();
        let mut weights = vec![0.0; 1 << n];
        weights[colouring_index(c)] = 1.0;
        Ok(ColourMeasure { n, weights })
    }

    pub fn zero(n: usize) -> Self {
        ColourMeasure {
            n,
            weights: vec![0.0; 1 << n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn sup_distance(&self, other: &ColourMeasure) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn get(&self, c: &[u8]) -> f64 {
        self.weights[colouring_index(c)]
    }
}

pub fn colouring_index(c: &[u8]) -> usize {
    c.iter()
        .enumerate()
        .fold(0, |m, (i, &ci)| m | ((ci == 2) as usize) << i)
}

pub fn index_colouring(b: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| if b >> i & 1 == 1 { 2 } else { 1 }).collect()
}

/// The infinite-rate jump operator at a meeting of walkers `l1, l2`:
/// a colouring with the pair unequal contributes nothing; an equal pair
/// contributes itself plus half-weight flips at each member.
pub fn k_infinity_apply(m: &ColourMeasure, l1: usize, l2: usize) -> Result<ColourMeasure> {
    if l1 == l2 || l1 >= m.n || l2 >= m.n {
        return Err(Error::parameter("need two distinct walker indices"));
    }
    let mut out = ColourMeasure::zero(m.n);
    for (b, &w) in m.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let equal = (b >> l1 & 1) == (b >> l2 & 1);
        if equal {
            out.weights[b] += w;
            out.weights[b ^ (1 << l1)] += w / 2.0;
            out.weights[b ^ (1 << l2)] += w / 2.0;
        }
    }
    Ok(out)
}

/// Generator action of the colour ODE for a fixed set of co-located
/// pairs: `dM(b) = sum_pairs 1{b_i != b_j} [gamma*rho*M(b)
/// + gamma/2 (M(b flipped at i) + M(b flipped at j))] dL`.
fn generator_apply(
    w: &[f64],
    pairs: &[(usize, usize)],
    gamma: f64,
    rho: f64,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (b, o) in out.iter_mut().enumerate() {
        for &(i, j) in pairs {
            if (b >> i & 1) != (b >> j & 1) {
                *o += gamma * rho * w[b]
                    + 0.5 * gamma * (w[b ^ (1 << i)] + w[b ^ (1 << j)]);
            }
        }
    }
}

/// Apply `exp(G * ell)` to the weight vector by scaled Taylor series;
/// exact per co-location interval up to machine precision.
fn exp_generator(weights: &mut Vec<f64>, pairs: &[(usize, usize)], gamma: f64, rho: f64, ell: f64) {
    if pairs.is_empty() || ell <= 0.0 || gamma == 0.0 {
        return;
    }
    let norm = gamma * pairs.len() as f64 * (1.0 + rho.abs());
    let substeps = ((norm * ell / 0.5).ceil() as u64).max(1);
    let tau = ell / substeps as f64;
    let dim = weights.len();
    let mut term = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for _ in 0..substeps {
        term.copy_from_slice(weights);
        let mut k = 1u32;
        loop {
            generator_apply(&term, pairs, gamma, rho, &mut scratch);
            let c = tau / k as f64;
            let mut maxterm = 0.0f64;
            for (t_i, s_i) in term.iter_mut().zip(&scratch) {
                *t_i = c * s_i;
                maxterm = maxterm.max(t_i.abs());
            }
            for (w_i, t_i) in weights.iter_mut().zip(&term) {
                *w_i += t_i;
            }
            if maxterm < 1e-18 || k > 60 {
                break;
            }
            k += 1;
        }
    }
}

/// Evolve the colour measure along a sampled path at finite rate: the
/// linear ODE driven by the co-location times, integrated exactly per
/// interval of constant co-location structure.
pub fn evolve_colour_measure(
    path: &CoLocationPath,
    c: &[u8],
    gamma: f64,
    rho: f64,
) -> Result<ColourMeasure> {
    let mut m = ColourMeasure::delta(c)?;
    if c.len() != path.n {
        return Err(Error::parameter("colouring size must match the path"));
    }
    for seg in &path.segments {
        exp_generator(&mut m.weights, &seg.pairs, gamma, rho, seg.duration);
    }
    Ok(m)
}

/// Measure trajectory sampled at segment boundaries, for CSV export.
pub fn evolve_colour_measure_trajectory(
    path: &CoLocationPath,
    c: &[u8],
    gamma: f64,
    rho: f64,
) -> Result<Vec<(f64, ColourMeasure)>> {
    let mut m = ColourMeasure::delta(c)?;
    let mut out = vec![(0.0, m.clone())];
    let mut now = 0.0;
    for seg in &path.segments {
        exp_generator(&mut m.weights, &seg.pairs, gamma, rho, seg.duration);
        now += seg.duration;
        out.push((now, m.clone()));
    }
    Ok(out)
}

/// Infinite-rate colour measure (the stepping-stone regime): constant
/// between meeting times, jumping through the K-infinity operator at each
/// new-pair meeting up to time `t`.
pub fn evolve_colour_measure_infinite(
    schedule: &MeetingSchedule,
    c: &[u8],
    t: f64,
) -> Result<ColourMeasure> {
    let mut m = ColourMeasure::delta(c)?;
    for &(tau, i, j) in &schedule.events {
        if tau > t {
            break;
        }
        m = k_infinity_apply(&m, i, j)?;
    }
    Ok(m)
}

/// Conditional Monte-Carlo estimate of the colour measure on a fixed
/// path: simulate the colour dynamics given the co-location structure and
/// average the exponential weights per terminal colouring. This is the
/// independent oracle the ODE evolution is checked against.
pub fn conditional_colour_mc<R: Rng>(
    path: &CoLocationPath,
    c: &[u8],
    gamma: f64,
    rho: f64,
    reps: u64,
    rng: &mut R,
) -> Result<Vec<Summary>> {
    if c.len() != path.n {
        return Err(Error::parameter("colouring size must match the path"));
    }
    let dim = 1usize << path.n;
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(reps as usize); dim];
    for _ in 0..reps {
        let mut colours = c.to_vec();
        let mut log_weight = 0.0;
        for seg in &path.segments {
            let mut remaining = seg.duration;
            if seg.pairs.is_empty() {
                continue;
            }
            loop {
                let same: Vec<(usize, usize)> = seg
                    .pairs
                    .iter()
                    .copied()
                    .filter(|&(i, j)| colours[i] == colours[j])
                    .collect();
                let k_eq = same.len() as f64;
                let k_neq = seg.pairs.len() as f64 - k_eq;
                let flip_rate = gamma * k_eq;
                let dt = if flip_rate > 0.0 {
                    -rng.gen::<f64>().ln() / flip_rate
                } else {
                    f64::INFINITY
                };
                let step = dt.min(remaining);
                log_weight += gamma * (k_eq + rho * k_neq) * step;
                if dt >= remaining {
                    break;
                }
                remaining -= dt;
                let &(i, j) = &same[rng.gen_range(0..same.len())];
                let member = if rng.gen::<bool>() { i } else { j };
                colours[member] = 3 - colours[member];
            }
        }
        let weight = log_weight.exp();
        let b = colouring_index(&colours);
        for (bb, col) in samples.iter_mut().enumerate() {
            col.push(if bb == b { weight } else { 0.0 });
        }
    }
    Ok(samples.iter().map(|col| Summary::from_samples(col)).collect())
}

/// Report of a two-sided moment-duality check, with a heavy-tail flag on
/// the exponential weight.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MomentDualityReport {
    pub lhs: Summary,
    pub rhs: Summary,
    pub weight_cv: f64,
    pub heavy_tail: bool,
}

impl MomentDualityReport {
    pub fn ci_overlaps(&self) -> bool {
        self.lhs.ci_overlaps(&self.rhs)
    }
}

/// Moment duality for the branching field pair on the unit-spacing torus:
/// mixed moments of `(u_t, v_t)` equal expectations of initial fields read
/// along coloured dual walkers, weighted by
/// `exp(gamma (L_eq + rho L_neq))`.
#[allow(clippy::too_many_arguments)]
pub fn check_moment_duality(
    u0: &FieldPair,
    x: &[usize],
    c: &[u8],
    gamma: f64,
    rho: f64,
    t: f64,
    dt: f64,
    n: u64,
    stream: RngStream,
) -> Result<MomentDualityReport> {
    if (u0.dx - 1.0).abs() > 1e-12 {
        return Err(Error::parameter(
            "moment duality needs dx = 1 (walker generator matches the lattice Laplacian)",
        ));
    }
    if x.len() > 4 {
        return Err(Error::Size("duality checks capped at 4 walkers".into()));
    }
    validate_walker_input(&x.iter().map(|&s| s as i64).collect::<Vec<_>>(), c)?;
    let l = u0.len();
    if x.iter().any(|&s| s >= l) {
        return Err(Error::parameter("query sites outside the lattice"));
    }
    let params = SbmParams {
        rho,
        gamma,
        dt,
        dx: 1.0,
    };
    params.validate()?;
    let steps = (t / dt).round() as u64;
    let u0c = u0.clone();
    let xq = x.to_vec();
    let cq = c.to_vec();
    let lhs = replicate_summary(stream.derive(1), n, |_, rng| {
        let mut sim = SbmSimulator::new(u0c.clone(), params).expect("validated");
        sim.run(steps, rng);
        xq.iter()
            .zip(&cq)
            .map(|(&site, &col)| {
                if col == 1 {
                    sim.state.u[site]
                } else {
                    sim.state.v[site]
                }
            })
            .product()
    });
    let u0v = u0.u.clone();
    let v0v = u0.v.clone();
    let starts: Vec<i64> = x.iter().map(|&s| s as i64).collect();
    let cq = c.to_vec();
    let rhs_rows: Vec<(f64, f64)> = replicate_map(stream.derive(2), n, |_, rng| {
        let out = simulate_coloured_dual(&starts, &cq, gamma, rho, t, Some(l as i64), rng)
            .expect("validated");
        let weight = (gamma * (out.ledger.eq + rho * out.ledger.neq)).exp();
        let fields: f64 = out
            .positions
            .iter()
            .zip(&out.colours)
            .map(|(&p, &col)| {
                let site = p.rem_euclid(l as i64) as usize;
                if col == 1 {
                    u0v[site]
                } else {
                    v0v[site]
                }
            })
            .product();
        (fields * weight, weight)
    });
    let rhs_samples: Vec<f64> = rhs_rows.iter().map(|r| r.0).collect();
    let weights: Vec<f64> = rhs_rows.iter().map(|r| r.1).collect();
    let ws = Summary::from_samples(&weights);
    let weight_cv = if ws.mean != 0.0 {
        ws.stderr * (n as f64).sqrt() / ws.mean
    } else {
        f64::INFINITY
    };
    Ok(MomentDualityReport {
        lhs,
        rhs: Summary::from_samples(&rhs_samples),
        weight_cv,
        heavy_tail: weight_cv > 10.0,
    })
}

/// Coalescing-motion moment duality for the continuous voter regime
/// (anticorrelated infinite-rate limit with `u + v = 1`): products of
/// voter types versus products of `u0` along coalescing Brownian motions.
pub fn check_coalescing_duality(
    u0: &PiecewiseConstantProfile,
    x: &[f64],
    t: f64,
    dt: f64,
    n: u64,
    stream: RngStream,
) -> Result<TwoSidedEstimate> {
    if x.is_empty() || x.len() > 4 {
        return Err(Error::Size("duality checks capped at 4 points".into()));
    }
    if u0.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::parameter("u0 must take values in [0,1]"));
    }
    let schedule = StepSchedule::uniform(dt);
    let xq = x.to_vec();
    let u0a = u0.clone();
    let lhs = replicate_summary(stream.derive(1), n, |_, rng| {
        let types = continuous_voter(&u0a, &xq, t, &schedule, rng).expect("validated");
        types.iter().map(|&ty| ty as f64).product()
    });
    let u0b = u0.clone();
    let xq = x.to_vec();
    let rhs = replicate_summary(stream.derive(2), n, |_, rng| {
        let mut sys = ParticleSystem1D::new(xq.clone(), Domain::Line, Mode::Coalescing)
            .expect("distinct starts");
        sys.run_schedule(&schedule, t, rng);
        sys.positions().iter().map(|&y| u0b.eval(y)).product()
    });
    Ok(TwoSidedEstimate { lhs, rhs })
}

/// Annihilating-motion moment duality: products of `1 - 2u_t` versus the
/// same product of `1 - 2u0` over surviving annihilating motions, delayed
/// at finite rate or instantaneous at `gamma = None`.
#[allow(clippy::too_many_arguments)]
pub fn check_annihilating_moment_duality(
    u0: &PiecewiseConstantProfile,
    x: &[f64],
    gamma: Option<f64>,
    t: f64,
    dt: f64,
    n: u64,
    stream: RngStream,
) -> Result<TwoSidedEstimate> {
    if x.is_empty() || x.len() > 4 {
        return Err(Error::Size("duality checks capped at 4 points".into()));
    }
    if u0.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::parameter("u0 must take values in [0,1]"));
    }
    let schedule = StepSchedule::uniform(dt);
    let xq = x.to_vec();
    let u0a = u0.clone();
    let lhs = replicate_summary(stream.derive(1), n, |_, rng| {
        let types = continuous_voter(&u0a, &xq, t, &schedule, rng).expect("validated");
        types.iter().map(|&ty| 1.0 - 2.0 * ty as f64).product()
    });
    let mode = match gamma {
        None => Mode::Annihilating,
        Some(g) => Mode::DelayedAnnihilating {
            gamma: g,
            eps: 0.01,
        },
    };
    let u0b = u0.clone();
    let xq = x.to_vec();
    let rhs = replicate_summary(stream.derive(2), n, |_, rng| {
        let mut sys =
            ParticleSystem1D::new(xq.clone(), Domain::Line, mode).expect("distinct starts");
        sys.run_schedule(&schedule, t, rng);
        sys.positions()
            .iter()
            .map(|&y| 1.0 - 2.0 * u0b.eval(y))
            .product()
    });
    Ok(TwoSidedEstimate { lhs, rhs })
}

/// Colour-measure trajectory rows in the canonical export schema.
pub fn colour_measure_csv(trajectory: &[(f64, ColourMeasure)]) -> String {
    let mut out = String::from("time,colouring_index,weight\n");
    for (t, m) in trajectory {
        for (b, &w) in m.weights.iter().enumerate() {
            out.push_str(&format!("{t},{b},{w}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::Boundary;
    use crate::stats;

    #[test]
    fn k_infinity_algebra() {
        let unequal = ColourMeasure::delta(&[1, 2]).unwrap();
        let out = k_infinity_apply(&unequal, 0, 1).unwrap();
        assert_eq!(out.total_mass(), 0.0);
        let equal = ColourMeasure::delta(&[1, 1]).unwrap();
        let out = k_infinity_apply(&equal, 0, 1).unwrap();
        assert_eq!(out.get(&[1, 1]), 1.0);
        assert_eq!(out.get(&[2, 1]), 0.5);
        assert_eq!(out.get(&[1, 2]), 0.5);
        assert_eq!(out.get(&[2, 2]), 0.0);
        assert_eq!(out.total_mass(), 2.0);
        assert!(k_infinity_apply(&equal, 1, 1).is_err());
    }

    #[test]
    fn k_infinity_mass_dichotomy() {
        for b in 0..8usize {
            let c = index_colouring(b, 3);
            let m = ColourMeasure::delta(&c).unwrap();
            for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                let mass = k_infinity_apply(&m, i, j).unwrap().total_mass();
                assert!(mass == 0.0 || mass == 2.0, "mass = {mass}");
            }
        }
    }

    fn single_segment_path(n: usize, pairs: Vec<(usize, usize)>, ell: f64) -> CoLocationPath {
        CoLocationPath {
            n,
            horizon: ell,
            segments: vec![PathSegment {
                duration: ell,
                pairs,
            }],
            meetings: MeetingSchedule::default(),
        }
    }

    #[test]
    fn colour_ode_hand_solution_rho_zero() {
        // c = (1,1), one co-located pair, rho = 0: M(11) = 1, M(12) =
        // M(21) = gamma*ell/2, M(22) = 0.
        let gamma = 1.3;
        let ell = 0.7;
        let path = single_segment_path(2, vec![(0, 1)], ell);
        let m = evolve_colour_measure(&path, &[1, 1], gamma, 0.0).unwrap();
        assert!((m.get(&[1, 1]) - 1.0).abs() < 1e-10);
        assert!((m.get(&[1, 2]) - gamma * ell / 2.0).abs() < 1e-10);
        assert!((m.get(&[2, 1]) - gamma * ell / 2.0).abs() < 1e-10);
        assert!(m.get(&[2, 2]).abs() < 1e-10);
    }

    #[test]
    fn colour_ode_stepping_stone_closed_form() {
        // rho = -1, c = (1,1): M(12) = M(21) = (1 - exp(-gamma ell))/2,
        // M(11) = 1; alternating start decays to zero mass.
        let gamma = 2.0;
        let ell = 0.4;
        let path = single_segment_path(2, vec![(0, 1)], ell);
        let m = evolve_colour_measure(&path, &[1, 1], gamma, -1.0).unwrap();
        let want = 0.5 * (1.0 - (-gamma * ell).exp());
        assert!((m.get(&[1, 1]) - 1.0).abs() < 1e-10);
        assert!((m.get(&[1, 2]) - want).abs() < 1e-10);
        assert!((m.get(&[2, 1]) - want).abs() < 1e-10);
        let alt = evolve_colour_measure(&path, &[1, 2], gamma, -1.0).unwrap();
        assert!((alt.get(&[1, 2]) - (-gamma * ell).exp()).abs() < 1e-10);
        assert!(alt.get(&[1, 1]).abs() < 1e-12);
    }

    #[test]
    fn no_colocation_keeps_delta() {
        let path = single_segment_path(3, vec![], 5.0);
        let m = evolve_colour_measure(&path, &[1, 2, 1], 3.0, 0.5).unwrap();
        assert_eq!(m.get(&[1, 2, 1]), 1.0);
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn measure_stays_nonnegative() {
        let mut rng = RngStream::new(40, 0).rng();
        for rep in 0..50 {
            let path = sample_colocation_path(&[0, 0, 1], 2.0, None, &mut rng).unwrap();
            let m = evolve_colour_measure(&path, &[1, 2, 2], 1.5, -0.7).unwrap();
            assert!(
                m.weights.iter().all(|&w| w >= -1e-12),
                "rep {rep}: {:?}",
                m.weights
            );
        }
    }

    #[test]
    fn exchangeability_under_relabeling() {
        // swap walkers 0 and 2 consistently: outputs must match
        let mut rng_a = RngStream::new(41, 0).rng();
        let path = sample_colocation_path(&[0, 1, 0], 2.0, None, &mut rng_a).unwrap();
        let perm = [2usize, 1, 0];
        let permuted = CoLocationPath {
            n: path.n,
            horizon: path.horizon,
            segments: path
                .segments
                .iter()
                .map(|s| PathSegment {
                    duration: s.duration,
                    pairs: s
                        .pairs
                        .iter()
                        .map(|&(i, j)| {
                            let (a, b) = (perm[i], perm[j]);
                            (a.min(b), a.max(b))
                        })
                        .collect(),
                })
                .collect(),
            meetings: MeetingSchedule::default(),
        };
        let c = [1u8, 2, 2];
        let cp = [2u8, 2, 1];
        let m = evolve_colour_measure(&path, &c, 1.0, -0.5).unwrap();
        let mp = evolve_colour_measure(&permuted, &cp, 1.0, -0.5).unwrap();
        for b in 0..8usize {
            let col = index_colouring(b, 3);
            let colp: Vec<u8> = (0..3).map(|i| col[perm[i]]).collect();
            assert!((m.get(&col) - mp.get(&colp)).abs() < 1e-12);
        }
    }

    #[test]
    fn conditional_mc_matches_ode() {
        // the module's central correctness check, on shared paths
        let mut rng = RngStream::new(42, 0).rng();
        for rep in 0..6 {
            let path = sample_colocation_path(&[0, 1], 1.5, None, &mut rng).unwrap();
            let ode = evolve_colour_measure(&path, &[1, 1], 1.0, -0.5).unwrap();
            let mc = conditional_colour_mc(&path, &[1, 1], 1.0, -0.5, 3000, &mut rng).unwrap();
            for b in 0..4usize {
                let z = mc[b].z_against_value(ode.weights[b]);
                assert!(
                    z < 4.0,
                    "rep {rep} colouring {b}: mc {:?} vs ode {}",
                    mc[b],
                    ode.weights[b]
                );
            }
        }
    }

    #[test]
    fn single_walker_never_flips() {
        let mut rng = RngStream::new(43, 0).rng();
        let out = simulate_coloured_dual(&[5], &[2], 10.0, 0.3, 3.0, None, &mut rng).unwrap();
        assert_eq!(out.colours, vec![2]);
        assert_eq!(out.flips, 0);
        assert_eq!(out.ledger.eq, 0.0);
        assert_eq!(out.ledger.neq, 0.0);
    }

    #[test]
    fn zero_rate_freezes_colours() {
        let mut rng = RngStream::new(44, 0).rng();
        let out =
            simulate_coloured_dual(&[0, 0], &[1, 1], 0.0, -0.5, 2.0, None, &mut rng).unwrap();
        assert_eq!(out.colours, vec![1, 1]);
        assert_eq!(out.flips, 0);
        assert!(out.ledger.eq > 0.0);
    }

    #[test]
    fn ledger_splits_total_pair_time() {
        let mut rng = RngStream::new(45, 0).rng();
        for rep in 0..40 {
            let out = simulate_coloured_dual(
                &[0, 1, 1],
                &[1, 2, 1],
                2.0,
                -0.5,
                3.0,
                Some(8),
                &mut rng,
            )
            .unwrap();
            let total = out.ledger.total_pair_time();
            assert!(
                (out.ledger.eq + out.ledger.neq - total).abs() < 1e-9,
                "rep {rep}: {} + {} != {}",
                out.ledger.eq,
                out.ledger.neq,
                total
            );
        }
    }

    #[test]
    fn flip_count_matches_fine_time_discretization() {
        // brute-force oracle: tiny-step Bernoulli dynamics for two walkers
        // started together
        let gamma = 4.0;
        let t = 1.0;
        let fine_dt = 1e-4;
        let n = 3000u64;
        let event_driven = replicate_summary(RngStream::new(46, 0), n, |_, rng| {
            simulate_coloured_dual(&[0, 0], &[1, 1], gamma, -1.0, t, None, rng)
                .unwrap()
                .flips as f64
        });
        let discretized = replicate_summary(RngStream::new(47, 0), n, |_, rng| {
            let mut pos = [0i64, 0];
            let mut col = [1u8, 1];
            let mut flips = 0u64;
            let steps = (t / fine_dt) as u64;
            for _ in 0..steps {
                for k in 0..2 {
                    if rng.gen::<f64>() < fine_dt {
                        pos[k] += if rng.gen::<bool>() { 1 } else { -1 };
                    }
                }
                if pos[0] == pos[1] && col[0] == col[1] && rng.gen::<f64>() < gamma * fine_dt {
                    let m = usize::from(rng.gen::<bool>());
                    col[m] = 3 - col[m];
                    flips += 1;
                }
            }
            flips as f64
        });
        assert!(
            event_driven.z_against(&discretized) < 3.5,
            "{event_driven:?} vs {discretized:?}"
        );
    }

    #[test]
    fn infinite_measure_alternating_dies_at_first_meeting() {
        let mut rng = RngStream::new(48, 0).rng();
        let mut saw_meeting = false;
        for _ in 0..20 {
            let path = sample_colocation_path(&[0, 1], 3.0, None, &mut rng).unwrap();
            let m = evolve_colour_measure_infinite(&path.meetings, &[1, 2], 3.0).unwrap();
            if path.meetings.events.is_empty() {
                assert_eq!(m.get(&[1, 2]), 1.0);
            } else {
                saw_meeting = true;
                assert_eq!(m.total_mass(), 0.0);
                // equal colours instead: survives the first meeting
                let me = evolve_colour_measure_infinite(&path.meetings, &[1, 1], 3.0).unwrap();
                assert_eq!(me.get(&[1, 1]), 1.0);
                assert_eq!(me.get(&[1, 2]), 0.5);
                assert_eq!(me.get(&[2, 1]), 0.5);
            }
        }
        assert!(saw_meeting);
    }

    #[test]
    fn n2_has_single_meeting_event() {
        let mut rng = RngStream::new(49, 0).rng();
        for _ in 0..50 {
            let path = sample_colocation_path(&[0, 3], 5.0, Some(6), &mut rng).unwrap();
            assert!(path.meetings.events.len() <= 1, "{:?}", path.meetings);
        }
    }

    #[test]
    fn gamma_convergence_to_infinite_measure() {
        // sup-distance decreases across gamma on shared paths (rho = -1);
        // paths are conditioned on a co-location time small enough that
        // exp(-1000 ell) stays resolvable in f64
        let mut rng = RngStream::new(50, 0).rng();
        let mut checked = 0;
        for _ in 0..400 {
            if checked >= 5 {
                break;
            }
            let path = sample_colocation_path(&[0, 1], 2.0, None, &mut rng).unwrap();
            if path.meetings.events.is_empty() {
                continue;
            }
            let ell = path.total_colocation_time();
            if ell <= 1e-3 || ell > 0.03 {
                continue;
            }
            let minf = evolve_colour_measure_infinite(&path.meetings, &[1, 1], 2.0).unwrap();
            let mut prev = f64::INFINITY;
            for gamma in [1.0, 10.0, 100.0, 1000.0] {
                let m = evolve_colour_measure(&path, &[1, 1], gamma, -1.0).unwrap();
                let d = m.sup_distance(&minf);
                assert!(d < prev, "gamma {gamma}: {d} !< {prev}");
                prev = d;
            }
            checked += 1;
        }
        assert!(checked >= 5, "only {checked} usable paths");
    }

    #[test]
    fn moment_duality_single_walker_heat_flow() {
        let l = 16;
        let tau = 2.0 * std::f64::consts::PI;
        let u: Vec<f64> = (0..l)
            .map(|i| 1.0 + 0.5 * (tau * i as f64 / l as f64).cos())
            .collect();
        let v = vec![1.0; l];
        let u0 = FieldPair::new(1.0, u.clone(), v, Boundary::Periodic).unwrap();
        let t = 0.5;
        let rep = check_moment_duality(
            &u0,
            &[4],
            &[1],
            1.0,
            -0.5,
            t,
            0.01,
            6000,
            RngStream::new(51, 0),
        )
        .unwrap();
        assert!(rep.ci_overlaps(), "{rep:?}");
        // closed form: cos eigenmode decays at exp(-(1-cos(2 pi /L)) t)
        let decay = (-(1.0 - (tau / l as f64).cos()) * t).exp();
        let want = 1.0 + 0.5 * decay * (tau * 4.0 / l as f64).cos();
        assert!(rep.lhs.z_against_value(want) < 3.5, "{rep:?} vs {want}");
        assert!(rep.rhs.z_against_value(want) < 3.5, "{rep:?} vs {want}");
        assert!(!rep.heavy_tail);
    }

    #[test]
    fn moment_duality_two_walkers() {
        let l = 16;
        let u0 = FieldPair::new(1.0, vec![1.0; l], vec![1.0; l], Boundary::Periodic).unwrap();
        let rep = check_moment_duality(
            &u0,
            &[7, 9],
            &[1, 2],
            1.0,
            -0.5,
            0.5,
            0.005,
            8000,
            RngStream::new(52, 0),
        )
        .unwrap();
        assert!(rep.ci_overlaps(), "{rep:?}");
    }

    #[test]
    fn moment_duality_anticorrelated_bounded_by_one() {
        // flat fields, rho = -1, alternating colours: no flips ever, the
        // weight is exp(-gamma * pair time) <= 1 and u_t v_t <= 1 by
        // conservation; both sides agree below 1
        let l = 16;
        let u0 = FieldPair::new(1.0, vec![1.0; l], vec![1.0; l], Boundary::Periodic).unwrap();
        let rep = check_moment_duality(
            &u0,
            &[7, 8],
            &[1, 2],
            1.0,
            -1.0,
            0.5,
            0.005,
            8000,
            RngStream::new(62, 0),
        )
        .unwrap();
        assert!(rep.ci_overlaps(), "{rep:?}");
        assert!(rep.lhs.mean <= 1.0 + 3.0 * rep.lhs.stderr, "{rep:?}");
        assert!(rep.rhs.mean <= 1.0, "weights are <= 1 pathwise: {rep:?}");
    }

    #[test]
    fn moment_duality_validates_input() {
        let u0 = FieldPair::new(0.5, vec![1.0; 8], vec![1.0; 8], Boundary::Periodic).unwrap();
        assert!(check_moment_duality(
            &u0,
            &[1],
            &[1],
            1.0,
            0.0,
            0.1,
            0.01,
            10,
            RngStream::new(1, 1)
        )
        .is_err());
        let ok = FieldPair::new(1.0, vec![1.0; 8], vec![1.0; 8], Boundary::Periodic).unwrap();
        assert!(check_moment_duality(
            &ok,
            &[1, 2, 3, 4, 5],
            &[1, 1, 1, 1, 1],
            1.0,
            0.0,
            0.1,
            0.01,
            10,
            RngStream::new(1, 1)
        )
        .is_err());
    }

    #[test]
    fn coalescing_duality_consensus_and_step() {
        let ones = PiecewiseConstantProfile::constant(1.0);
        let est = check_coalescing_duality(
            &ones,
            &[-0.3, 0.4],
            0.3,
            0.01,
            400,
            RngStream::new(53, 0),
        )
        .unwrap();
        assert_eq!(est.lhs.mean, 1.0);
        assert_eq!(est.rhs.mean, 1.0);
        let step = PiecewiseConstantProfile::step(0.0, 1.0, 0.0);
        let est = check_coalescing_duality(
            &step,
            &[-0.5, 0.5],
            0.5,
            0.005,
            20_000,
            RngStream::new(54, 0),
        )
        .unwrap();
        assert!(est.ci_overlaps(), "{est:?}");
    }

    #[test]
    fn annihilating_duality_extremes() {
        let zeros = PiecewiseConstantProfile::constant(0.0);
        let est = check_annihilating_moment_duality(
            &zeros,
            &[0.0, 1.0],
            None,
            0.3,
            0.01,
            300,
            RngStream::new(55, 0),
        )
        .unwrap();
        assert_eq!(est.lhs.mean, 1.0);
        assert_eq!(est.rhs.mean, 1.0);
        // u0 = 1/2: both sides estimate P(pair annihilated by t)
        let half = PiecewiseConstantProfile::constant(0.5);
        let t = 0.5;
        let d = 0.6;
        let want = 1.0 - crate::particles::pair_survival_prob(d, t);
        let est = check_annihilating_moment_duality(
            &half,
            &[0.0, d],
            None,
            t,
            0.005,
            20_000,
            RngStream::new(56, 0),
        )
        .unwrap();
        assert!(est.lhs.z_against_value(want) < 3.0, "{est:?} vs {want}");
        assert!(est.rhs.z_against_value(want) < 3.0, "{est:?} vs {want}");
    }

    #[test]
    fn annihilating_duality_step_profile_infinite_rate() {
        let step = PiecewiseConstantProfile::step(0.0, 1.0, 0.0);
        let est = check_annihilating_moment_duality(
            &step,
            &[-0.4, 0.6],
            None,
            0.5,
            0.005,
            20_000,
            RngStream::new(57, 0),
        )
        .unwrap();
        assert!(est.ci_overlaps(), "{est:?}");
    }

    #[test]
    fn delayed_annihilating_duality_two_sided() {
        // finite-rate delayed annihilation: qualitative two-sided check
        let half = PiecewiseConstantProfile::constant(0.5);
        let est = check_annihilating_moment_duality(
            &half,
            &[0.0, 0.3],
            Some(4.0),
            0.4,
            0.002,
            8000,
            RngStream::new(58, 0),
        )
        .unwrap();
        // LHS is the instantaneous limit; the delayed side must sit between
        // 0 and the instantaneous value
        assert!(est.rhs.mean >= 0.0 && est.rhs.mean <= est.lhs.mean + 3.0 * est.lhs.stderr);
    }

    #[test]
    fn csv_trajectory_schema() {
        let path = single_segment_path(2, vec![(0, 1)], 0.5);
        let traj = evolve_colour_measure_trajectory(&path, &[1, 1], 1.0, 0.0).unwrap();
        let csv = colour_measure_csv(&traj);
        assert!(csv.starts_with("time,colouring_index,weight\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 4);
    }

    #[test]
    fn stats_sanity_on_weights() {
        // exponential weights have cv well below the heavy-tail threshold
        // in the certified parameter range
        let l = 16;
        let u0 = FieldPair::new(1.0, vec![1.0; l], vec![1.0; l], Boundary::Periodic).unwrap();
        let rep = check_moment_duality(
            &u0,
            &[7, 8],
            &[1, 1],
            1.0,
            -0.5,
            0.5,
            0.01,
            2000,
            RngStream::new(59, 0),
        )
        .unwrap();
        assert!(rep.weight_cv < 10.0, "cv = {}", rep.weight_cv);
        let _ = stats::Z95;
    }
}
