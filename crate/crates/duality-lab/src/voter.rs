//! Discrete voter model on a periodic 1-D lattice via the Harris graphical
//! construction, with pathwise-coupled coalescing-walk duals, annihilating
//! interface dynamics, and an exact CTMC oracle for small cycles.
//!
//! A site copies the opinion of a uniformly chosen neighbour at rate 1,
//! equivalently each directed edge of the cycle carries an independent
//! rate-1/2 Poisson arrow stream. Opinions flow upwards through the arrow
//! diagram; duals trace the same diagram downwards, which is what makes all
//! couplings here exact per path rather than just in distribution.

use crate::error::{Error, Result};
use crate::mc::{replicate_map, replicate_summary};
use crate::stats::{Summary, TwoSidedEstimate};
use crate::stochastic::{sample_poisson_events, RngStream};
use rand::Rng;
use std::collections::BTreeSet;

/// {0,1}-valued configuration on a periodic lattice of `L` sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinField {
    spins: Vec<u8>,
}

impl SpinField {
    pub fn new(spins: Vec<u8>) -> Result<Self> {
        if spins.iter().any(|&s| s > 1) {
            return Err(Error::parameter("spins must be 0/1"));
        }
        Ok(SpinField { spins })
    }

    pub fn constant(l: usize, value: u8) -> Self {
        SpinField {
            spins: vec![value.min(1); l],
        }
    }

    /// 1 on `0..=block_end`, 0 elsewhere.
    pub fn block(l: usize, block_end: usize) -> Self {
        let mut spins = vec![0u8; l];
        for s in spins.iter_mut().take(block_end + 1) {
            *s = 1;
        }
        SpinField { spins }
    }

    pub fn alternating(l: usize) -> Self {
        SpinField {
            spins: (0..l).map(|i| (i % 2 == 0) as u8).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn get(&self, x: usize) -> u8 {
        self.spins[x % self.spins.len()]
    }

    pub fn spins(&self) -> &[u8] {
        &self.spins
    }
}

/// One arrow of the graphical construction: at `time` the opinion at `from`
/// is copied onto the neighbouring site `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrow {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// Time-sorted merge of the per-directed-edge Poisson arrow streams.
#[derive(Debug, Clone)]
pub struct ArrowLog {
    pub l: usize,
    pub horizon: f64,
    arrows: Vec<Arrow>,
}

impl ArrowLog {
    pub fn arrows(&self) -> &[Arrow] {
        &self.arrows
    }
}

/// Sample the graphical construction on the `l`-cycle up to `horizon`:
/// one independent rate-1/2 Poisson stream per directed edge.
pub fn build_graphical<R: Rng>(l: usize, horizon: f64, rng: &mut R) -> Result<ArrowLog> {
    if l < 3 {
        return Err(Error::parameter(format!(
            "cycle needs at least 3 sites, got {l}"
        )));
    }
    if !(horizon >= 0.0) {
        return Err(Error::parameter("horizon must be >= 0"));
    }
    let mut arrows = Vec::new();
    for x in 0..l {
        for to in [(x + 1) % l, (x + l - 1) % l] {
            if horizon > 0.0 {
                let events = sample_poisson_events(0.5, horizon, rng)?;
                arrows.extend(events.times.into_iter().map(|time| Arrow { time, from: x, to }));
            }
        }
    }
    arrows.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    Ok(ArrowLog { l, horizon, arrows })
}

/// Flow the initial opinions upwards through the arrow diagram until `t`.
pub fn evolve_voter(eta0: &SpinField, log: &ArrowLog, t: f64) -> Result<SpinField> {
    if t > log.horizon {
        return Err(Error::Range(format!(
            "t = {t} beyond log horizon {}",
            log.horizon
        )));
    }
    if eta0.len() != log.l {
        return Err(Error::parameter("field length does not match log"));
    }
    let mut spins = eta0.spins.clone();
    for arrow in &log.arrows {
        if arrow.time > t {
            break;
        }
        spins[arrow.to] = spins[arrow.from];
    }
    Ok(SpinField { spins })
}

/// Trace the set-valued dual from `(t, x), x in sites` down to time 0 by
/// following arrows in reverse; the result satisfies the pathwise identity
/// `eta_t(x) = eta_0(dual position of x)` under the same log.
pub fn trace_dual(log: &ArrowLog, t: f64, sites: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
    if sites.is_empty() {
        return Err(Error::parameter("dual needs a nonempty site set"));
    }
    if t > log.horizon {
        return Err(Error::Range(format!(
            "t = {t} beyond log horizon {}",
            log.horizon
        )));
    }
    let mut positions = sites.clone();
    let upper = log.arrows.partition_point(|a| a.time <= t);
    for arrow in log.arrows[..upper].iter().rev() {
        if positions.remove(&arrow.to) {
            positions.insert(arrow.from);
        }
    }
    Ok(positions)
}

/// Interface of a configuration: sites `x` with `eta(x) != eta(x+1)`
/// cyclically. On a cycle the cardinality is always even.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceSet(pub BTreeSet<usize>);

pub fn interface_of(eta: &SpinField) -> InterfaceSet {
    let l = eta.len();
    let mut sites = BTreeSet::new();
    for x in 0..l {
        if eta.get(x) != eta.get((x + 1) % l) {
            sites.insert(x);
        }
    }
    InterfaceSet(sites)
}

/// Move interface particles along the same arrow log: an arrow `x -> x+1`
/// pushes the interface at `x` right, an arrow `x+1 -> x` pushes it left;
/// a particle landing on another annihilates both. Pathwise this commutes
/// with `interface_of` under a shared log.
pub fn evolve_interface_walks(i0: &InterfaceSet, log: &ArrowLog, t: f64) -> Result<InterfaceSet> {
    if t > log.horizon {
        return Err(Error::Range(format!(
            "t = {t} beyond log horizon {}",
            log.horizon
        )));
    }
    let l = log.l;
    let mut particles = i0.0.clone();
    for arrow in &log.arrows {
        if arrow.time > t {
            break;
        }
        let (mover, target) = if arrow.to == (arrow.from + 1) % l {
            // rightward arrow moves the interface particle at `from` right
            (arrow.from, (arrow.from + 1) % l)
        } else {
            // leftward arrow from..to moves the particle at `to` left
            (arrow.to, (arrow.to + l - 1) % l)
        };
        if particles.remove(&mover) {
            if !particles.insert(target) {
                particles.remove(&target);
            }
        }
    }
    Ok(InterfaceSet(particles))
}

/// Direct event-driven system of coalescing random walks on the cycle
/// (each walker jumps at rate 1); returns positions at time `t`.
pub fn run_coalescing_walks<R: Rng>(
    start: &BTreeSet<usize>,
    l: usize,
    t: f64,
    rng: &mut R,
) -> BTreeSet<usize> {
    run_walk_system(start, l, t, false, rng)
}

/// Direct event-driven system of annihilating random walks on the cycle.
pub fn run_annihilating_walks<R: Rng>(
    start: &BTreeSet<usize>,
    l: usize,
    t: f64,
    rng: &mut R,
) -> BTreeSet<usize> {
    run_walk_system(start, l, t, true, rng)
}

fn run_walk_system<R: Rng>(
    start: &BTreeSet<usize>,
    l: usize,
    t: f64,
    annihilating: bool,
    rng: &mut R,
) -> BTreeSet<usize> {
    let mut positions: Vec<usize> = start.iter().copied().collect();
    let mut clock = 0.0;
    while !positions.is_empty() {
        let rate = positions.len() as f64;
        clock += -rng.gen::<f64>().ln() / rate;
        if clock > t {
            break;
        }
        let idx = rng.gen_range(0..positions.len());
        let dir = if rng.gen::<bool>() { 1 } else { l - 1 };
        let dest = (positions[idx] + dir) % l;
        if let Some(hit) = positions.iter().position(|&p| p == dest) {
            if annihilating {
                let (a, b) = (idx.max(hit), idx.min(hit));
                positions.swap_remove(a);
                positions.swap_remove(b);
            } else {
                positions.swap_remove(idx);
            }
        } else {
            positions[idx] = dest;
        }
    }
    positions.into_iter().collect()
}

/// Two-sided Monte-Carlo check of the coalescing-walk duality: the voter
/// side samples fresh logs, the dual side runs independent coalescing
/// walks. Both estimate `E[prod_{x in A} eta_t(x)]`.
pub fn check_voter_duality(
    eta0: &SpinField,
    a: &BTreeSet<usize>,
    t: f64,
    n: u64,
    stream: RngStream,
) -> Result<TwoSidedEstimate> {
    if a.is_empty() {
        return Err(Error::parameter("A must be nonempty"));
    }
    let l = eta0.len();
    let eta0 = eta0.clone();
    let lhs = replicate_summary(stream.derive(1), n, |_, rng| {
        let log = build_graphical(l, t, rng).expect("valid log");
        let eta_t = evolve_voter(&eta0, &log, t).expect("evolve");
        a.iter().map(|&x| eta_t.get(x) as f64).product()
    });
    let rhs = replicate_summary(stream.derive(2), n, |_, rng| {
        let dual = run_coalescing_walks(a, l, t, rng);
        dual.iter().map(|&y| eta0.get(y) as f64).product()
    });
    Ok(TwoSidedEstimate { lhs, rhs })
}

/// Two-sided check of the interface parity duality: annihilating walks
/// started from the interface versus direct voter runs, both estimating
/// `P(eta_t(x) = eta_t(y))` via the parity of walkers in `[x, y-1]`.
pub fn parity_duality_check(
    eta0: &SpinField,
    x: usize,
    y: usize,
    t: f64,
    n: u64,
    stream: RngStream,
) -> Result<TwoSidedEstimate> {
    if x >= y {
        return Err(Error::parameter("need x < y"));
    }
    let l = eta0.len();
    if y >= l {
        return Err(Error::parameter("sites must lie on the cycle"));
    }
    let interface = interface_of(eta0);
    let walks = replicate_summary(stream.derive(1), n, |_, rng| {
        let alive = run_annihilating_walks(&interface.0, l, t, rng);
        let inside = alive.iter().filter(|&&p| p >= x && p <= y - 1).count();
        (inside % 2 == 0) as u8 as f64
    });
    let eta0c = eta0.clone();
    let voter = replicate_summary(stream.derive(2), n, |_, rng| {
        let log = build_graphical(l, t, rng).expect("valid log");
        let eta_t = evolve_voter(&eta0c, &log, t).expect("evolve");
        (eta_t.get(x) == eta_t.get(y)) as u8 as f64
    });
    Ok(TwoSidedEstimate {
        lhs: walks,
        rhs: voter,
    })
}

const ORACLE_MAX_SITES: usize = 12;

/// Exact `E[prod_{x in sites} eta_t(x)]` for the voter CTMC on a cycle of
/// at most 12 sites, by uniformization to absolute tolerance 1e-8.
pub fn exact_oracle(eta0: &SpinField, sites: &[usize], t: f64) -> Result<f64> {
    let l = eta0.len();
    let mask: u32 = sites.iter().try_fold(0u32, |m, &x| {
        if x < l {
            Ok(m | 1 << x)
        } else {
            Err(Error::parameter("observable site outside lattice"))
        }
    })?;
    transient_expectation(eta0, t, |state| ((state & mask) == mask) as u8 as f64)
}

/// Exact `P(eta_t(x) = eta_t(y))` from product observables.
pub fn exact_prob_equal(eta0: &SpinField, x: usize, y: usize, t: f64) -> Result<f64> {
    let ex = exact_oracle(eta0, &[x], t)?;
    let ey = exact_oracle(eta0, &[y], t)?;
    let exy = exact_oracle(eta0, &[x, y], t)?;
    Ok(1.0 - ex - ey + 2.0 * exy)
}

/// Distribution-level uniformization for the voter generator on `{0,1}^L`.
fn transient_expectation(
    eta0: &SpinField,
    t: f64,
    observable: impl Fn(u32) -> f64,
) -> Result<f64> {
    let l = eta0.len();
    if l > ORACLE_MAX_SITES {
        return Err(Error::Size(format!(
            "oracle limited to {ORACLE_MAX_SITES} sites, got {l}"
        )));
    }
    if l < 3 {
        return Err(Error::parameter("cycle needs at least 3 sites"));
    }
    if !(t >= 0.0) {
        return Err(Error::parameter("t must be >= 0"));
    }
    let nstates = 1usize << l;
    let start: u32 = eta0
        .spins()
        .iter()
        .enumerate()
        .fold(0, |m, (i, &s)| m | (s as u32) << i);

    // Per-site flip rates 1/2 * #{differing neighbours}; uniformization
    // constant L dominates every total outflow rate.
    let lam = l as f64;
    let flip_rate = |state: u32, x: usize| -> f64 {
        let here = (state >> x) & 1;
        let left = (state >> ((x + l - 1) % l)) & 1;
        let right = (state >> ((x + 1) % l)) & 1;
        0.5 * (((here != left) as u8 + (here != right) as u8) as f64)
    };

    let mut p = vec![0.0f64; nstates];
    p[start as usize] = 1.0;
    let mut next = vec![0.0f64; nstates];

    let lt = lam * t;
    let mut weight = (-lt).exp();
    let mut cum = weight;
    let mut result = weight * observable(start);
    let tol = 1e-10;
    let mut k = 0u64;
    while 1.0 - cum > tol {
        // p <- p * P with P = I + Q/lam.
        next.iter_mut().for_each(|v| *v = 0.0);
        for (state, &mass) in p.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let state = state as u32;
            let mut total = 0.0;
            for x in 0..l {
                let r = flip_rate(state, x);
                if r > 0.0 {
                    total += r;
                    next[(state ^ (1 << x)) as usize] += mass * r / lam;
                }
            }
            next[state as usize] += mass * (1.0 - total / lam);
        }
        std::mem::swap(&mut p, &mut next);
        k += 1;
        weight *= lt / k as f64;
        cum += weight;
        let mut expect = 0.0;
        for (state, &mass) in p.iter().enumerate() {
            if mass != 0.0 {
                expect += mass * observable(state as u32);
            }
        }
        result += weight * expect;
        if k > 100_000 {
            return Err(Error::Invariant("uniformization failed to converge".into()));
        }
    }
    Ok(result)
}

/// Exact distribution of a single rate-`jump_rate` simple random walk on
/// the `l`-cycle at time `t` (uniformization).
pub fn ctrw_distribution(l: usize, start: usize, jump_rate: f64, t: f64) -> Vec<f64> {
    let mut p = vec![0.0f64; l];
    p[start % l] = 1.0;
    let lt = jump_rate * t;
    let mut weight = (-lt).exp();
    let mut out: Vec<f64> = p.iter().map(|&v| v * weight).collect();
    let mut cum = weight;
    let mut k = 0u64;
    let mut next = vec![0.0f64; l];
    while 1.0 - cum > 1e-12 && k < 1_000_000 {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &mass) in p.iter().enumerate() {
            next[(i + 1) % l] += 0.5 * mass;
            next[(i + l - 1) % l] += 0.5 * mass;
        }
        std::mem::swap(&mut p, &mut next);
        k += 1;
        weight *= lt / k as f64;
        cum += weight;
        for (o, &mass) in out.iter_mut().zip(&p) {
            *o += weight * mass;
        }
    }
    out
}

/// Exact CDF of the meeting time of two independent rate-1 walkers on the
/// `l`-cycle started `d` apart: the difference walk jumps at rate 2 and is
/// absorbed at 0 (uniformization on the absorbing chain).
pub fn meeting_time_cdf(l: usize, d: usize, t: f64) -> f64 {
    let d = d % l;
    if d == 0 {
        return 1.0;
    }
    let lam = 2.0;
    let mut p = vec![0.0f64; l];
    p[d] = 1.0;
    let lt = lam * t;
    let mut weight = (-lt).exp();
    let mut cum = weight;
    let mut k = 0u64;
    let mut next = vec![0.0f64; l];
    // p[0] is the absorbed mass after each step.
    let mut result = weight * p[0];
    while 1.0 - cum > 1e-12 && k < 2_000_000 {
        next.iter_mut().for_each(|v| *v = 0.0);
        next[0] = p[0];
        for (i, &mass) in p.iter().enumerate().skip(1) {
            next[(i + 1) % l] += 0.5 * mass;
            next[(i + l - 1) % l] += 0.5 * mass;
        }
        std::mem::swap(&mut p, &mut next);
        k += 1;
        weight *= lt / k as f64;
        cum += weight;
        result += weight * p[0];
    }
    result
}

/// Monte-Carlo clustering curve `P(eta_t(x) = eta_t(y))` over a time grid,
/// plus the exact meeting-time lower bound from the duality argument.
#[derive(Debug, Clone)]
pub struct ClusteringCurve {
    pub t_grid: Vec<f64>,
    pub p_mc: Vec<Summary>,
    /// Summaries of `I(t_{k+1}) - I(t_k)` over shared replicates: the
    /// monotonicity check needs the correlated difference errors.
    pub diffs: Vec<Summary>,
    pub lower_bound: Vec<f64>,
}

pub fn clustering_curve(
    eta0: &SpinField,
    x: usize,
    y: usize,
    t_grid: &[f64],
    n: u64,
    stream: RngStream,
) -> Result<ClusteringCurve> {
    let l = eta0.len();
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::parameter("t_grid must be strictly increasing"));
    }
    let horizon = *t_grid.last().unwrap();
    let eta0 = eta0.clone();
    let grid = t_grid.to_vec();
    let per_rep: Vec<Vec<f64>> = replicate_map(stream, n, |_, rng| {
        let log = build_graphical(l, horizon, rng).expect("valid log");
        let mut spins = eta0.spins().to_vec();
        let mut idx = 0usize;
        let mut out = Vec::with_capacity(grid.len());
        let arrows = log.arrows();
        for &tg in &grid {
            while idx < arrows.len() && arrows[idx].time <= tg {
                spins[arrows[idx].to] = spins[arrows[idx].from];
                idx += 1;
            }
            out.push((spins[x] == spins[y]) as u8 as f64);
        }
        out
    });
    let mut p_mc = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let col: Vec<f64> = per_rep.iter().map(|r| r[k]).collect();
        p_mc.push(Summary::from_samples(&col));
    }
    let mut diffs = Vec::new();
    for k in 0..grid.len().saturating_sub(1) {
        let col: Vec<f64> = per_rep.iter().map(|r| r[k + 1] - r[k]).collect();
        diffs.push(Summary::from_samples(&col));
    }
    let d = (y + l - x) % l;
    let lower_bound = grid.iter().map(|&tg| meeting_time_cdf(l, d, tg)).collect();
    Ok(ClusteringCurve {
        t_grid: grid,
        p_mc,
        diffs,
        lower_bound,
    })
}
