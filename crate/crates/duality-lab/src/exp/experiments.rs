//! The experiment registry: one entry per library operation exposed
//! through the CLI, each with a typed parameter schema.

use super::{ExperimentOutput, ExperimentSpec, MetricRow, ParamSpec, RunCtx};
use crate::colour;
use crate::error::{Error, Result};
use crate::mc::replicate_map;
use crate::particles::{self, EntranceInit, PiecewiseConstantProfile, StepSchedule};
use crate::sbm::{self, Boundary, FieldPair, SbmParams, SbmSimulator};
use crate::stats::{self, Summary};
use crate::stochastic::{self, RngStream};
use crate::voter::{self, SpinField};
use std::collections::BTreeSet;
use std::sync::OnceLock;

fn stream(ctx: &RunCtx) -> RngStream {
    RngStream::new(ctx.seed, 0)
}

fn parse_eta0(ctx: &RunCtx, l: usize) -> Result<SpinField> {
    let kind = ctx.params.str_or("eta0", "alternating")?;
    match kind {
        "ones" => Ok(SpinField::constant(l, 1)),
        "zeros" => Ok(SpinField::constant(l, 0)),
        "alternating" => Ok(SpinField::alternating(l)),
        "block" => {
            let end = ctx.params.usize_or("block_end", l / 2 - 1)?;
            Ok(SpinField::block(l, end))
        }
        other => Err(Error::Config(format!("unknown eta0 kind: {other}"))),
    }
}

fn parse_init(ctx: &RunCtx, l: usize, dx: f64) -> Result<FieldPair> {
    match ctx.params.str_or("init", "heaviside")? {
        "heaviside" => sbm::heaviside_init(l, dx),
        "flat" => FieldPair::new(dx, vec![1.0; l], vec![1.0; l], Boundary::Periodic),
        "positive" => {
            let tau = 2.0 * std::f64::consts::PI;
            let u = (0..l)
                .map(|i| 1.0 + 0.25 * (tau * i as f64 / l as f64).cos())
                .collect();
            let v = (0..l)
                .map(|i| 1.0 - 0.2 * (tau * i as f64 / l as f64).sin())
                .collect();
            FieldPair::new(dx, u, v, Boundary::Periodic)
        }
        other => Err(Error::Config(format!("unknown init kind: {other}"))),
    }
}

fn parse_entrance(ctx: &RunCtx) -> Result<EntranceInit> {
    let n = ctx.params.u64("n")? as u32;
    match ctx.params.str("init")? {
        "lattice" => Ok(EntranceInit::Lattice { n }),
        "poisson" => Ok(EntranceInit::Poisson { n: n as f64 }),
        "paired_square" => Ok(EntranceInit::PairedSquare { n }),
        "paired_quarter" => Ok(EntranceInit::PairedQuarter { n }),
        other => Err(Error::Config(format!("unknown entrance init: {other}"))),
    }
}

fn parse_step_profile(ctx: &RunCtx, prefix: &str) -> Result<PiecewiseConstantProfile> {
    let at = ctx.params.f64_or(&format!("{prefix}_step_at"), 0.0)?;
    let left = ctx.params.f64_or(&format!("{prefix}_left"), 1.0)?;
    let right = ctx.params.f64_or(&format!("{prefix}_right"), 0.0)?;
    Ok(PiecewiseConstantProfile::step(at, left, right))
}

fn parse_colours(ctx: &RunCtx) -> Result<Vec<u8>> {
    Ok(ctx
        .params
        .usize_list("colours")?
        .into_iter()
        .map(|c| c as u8)
        .collect())
}

fn run_sample_poisson(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let rate = ctx.params.f64("rate")?;
    let horizon = ctx.params.f64("horizon")?;
    let counts: Vec<(f64, Vec<f64>)> = replicate_map(stream(ctx), ctx.replicates, |_, rng| {
        let ev = stochastic::sample_poisson_events(rate, horizon, rng).expect("validated");
        let mut gaps = Vec::with_capacity(ev.times.len());
        let mut prev = 0.0;
        for &t in &ev.times {
            gaps.push(t - prev);
            prev = t;
        }
        (ev.times.len() as f64, gaps)
    });
    stochastic::sample_poisson_events(rate, horizon, &mut stream(ctx).rng())?;
    let count_samples: Vec<f64> = counts.iter().map(|c| c.0).collect();
    let mut gaps: Vec<f64> = counts.into_iter().flat_map(|c| c.1).take(100_000).collect();
    let ks_p = if gaps.len() >= 100 {
        stats::ks_test(&mut gaps, |x| 1.0 - (-rate * x).exp()).1
    } else {
        f64::NAN
    };
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("mean_count", &Summary::from_samples(&count_samples)),
            MetricRow::exact("expected_count", rate * horizon),
            MetricRow::exact("gap_exponential_ks_p", ks_p),
        ],
        aux: vec![],
    })
}

fn run_gaussian_pair(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let rho = ctx.params.f64("rho")?;
    let draws: Vec<(f64, f64)> = replicate_map(stream(ctx), ctx.replicates, |_, rng| {
        stochastic::gaussian_pair(rho, rng).expect("validated")
    });
    stochastic::gaussian_pair(rho, &mut stream(ctx).rng())?;
    let mut xs: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let mut ys: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let corr = stats::correlation(&xs, &ys);
    let px = stats::ks_test(&mut xs, stats::std_normal_cdf).1;
    let py = stats::ks_test(&mut ys, stats::std_normal_cdf).1;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::exact("empirical_corr", corr),
            MetricRow::exact("target_corr", rho),
            MetricRow::exact("ks_p_xi1", px),
            MetricRow::exact("ks_p_xi2", py),
        ],
        aux: vec![],
    })
}

fn run_bridge_prob(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let p = stochastic::bridge_crossing_prob(
        ctx.params.f64("a")?,
        ctx.params.f64("b")?,
        ctx.params.f64("dt")?,
        ctx.params.f64_or("diffusivity", 2.0)?,
    )?;
    Ok(ExperimentOutput {
        rows: vec![MetricRow::exact("crossing_probability", p)],
        aux: vec![],
    })
}

fn run_voter_duality(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let t = ctx.params.f64("t")?;
    let sites: BTreeSet<usize> = ctx.params.usize_list("sites")?.into_iter().collect();
    let eta0 = parse_eta0(ctx, l)?;
    let est = voter::check_voter_duality(&eta0, &sites, t, ctx.replicates, stream(ctx))?;
    let mut rows = vec![
        MetricRow::from_summary("lhs_voter", &est.lhs),
        MetricRow::from_summary("rhs_dual", &est.rhs),
        MetricRow::exact("z_gap", est.z_gap()),
    ];
    if l <= 12 {
        let site_vec: Vec<usize> = sites.iter().copied().collect();
        rows.push(MetricRow::exact(
            "oracle",
            voter::exact_oracle(&eta0, &site_vec, t)?,
        ));
    }
    Ok(ExperimentOutput { rows, aux: vec![] })
}

fn run_parity_duality(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let (x, y) = (ctx.params.usize("x")?, ctx.params.usize("y")?);
    let t = ctx.params.f64("t")?;
    let eta0 = parse_eta0(ctx, l)?;
    let est = voter::parity_duality_check(&eta0, x, y, t, ctx.replicates, stream(ctx))?;
    let mut rows = vec![
        MetricRow::from_summary("p_even_walks", &est.lhs),
        MetricRow::from_summary("p_equal_voter", &est.rhs),
        MetricRow::exact("z_gap", est.z_gap()),
    ];
    if l <= 12 {
        rows.push(MetricRow::exact(
            "oracle",
            voter::exact_prob_equal(&eta0, x, y, t)?,
        ));
    }
    Ok(ExperimentOutput { rows, aux: vec![] })
}

fn run_clustering(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let (x, y) = (ctx.params.usize("x")?, ctx.params.usize("y")?);
    let grid = ctx.params.f64_list("t_grid")?;
    let eta0 = parse_eta0(ctx, l)?;
    let curve = voter::clustering_curve(&eta0, x, y, &grid, ctx.replicates, stream(ctx))?;
    let mut rows = Vec::new();
    for (tg, p) in curve.t_grid.iter().zip(&curve.p_mc) {
        rows.push(MetricRow::from_summary(format!("p_equal@{tg}"), p));
    }
    for (tg, lb) in curve.t_grid.iter().zip(&curve.lower_bound) {
        rows.push(MetricRow::exact(format!("lower_bound@{tg}"), *lb));
    }
    Ok(ExperimentOutput { rows, aux: vec![] })
}

fn run_exact_oracle(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let sites = ctx.params.usize_list("sites")?;
    let t = ctx.params.f64("t")?;
    let eta0 = parse_eta0(ctx, l)?;
    Ok(ExperimentOutput {
        rows: vec![MetricRow::exact(
            "expectation",
            voter::exact_oracle(&eta0, &sites, t)?,
        )],
        aux: vec![],
    })
}

fn bump(l: usize, base: f64, amp: f64, lo: usize, hi: usize) -> Vec<f64> {
    (0..l)
        .map(|i| base + if i >= lo && i < hi { amp } else { 0.0 })
        .collect()
}

fn test_functions(ctx: &RunCtx, l: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let phi = bump(
        l,
        ctx.params.f64_or("phi_base", 0.02)?,
        ctx.params.f64_or("phi_amp", 0.1)?,
        ctx.params.usize_or("phi_lo", l / 3)?,
        ctx.params.usize_or("phi_hi", 2 * l / 3)?,
    );
    let psi = bump(
        l,
        ctx.params.f64_or("psi_base", 0.02)?,
        ctx.params.f64_or("psi_amp", 0.08)?,
        ctx.params.usize_or("psi_lo", l / 2)?,
        ctx.params.usize_or("psi_hi", 5 * l / 6)?,
    );
    Ok((phi, psi))
}

fn run_self_duality(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let dx = ctx.params.f64_or("dx", 0.25)?;
    let u0 = parse_init(ctx, l, dx)?;
    let (phi, psi) = test_functions(ctx, l)?;
    let est = sbm::check_self_duality(
        &u0,
        &phi,
        &psi,
        ctx.params.f64("rho")?,
        ctx.params.f64("gamma")?,
        ctx.params.f64_or("dt", 0.01)?,
        ctx.params.f64("t")?,
        ctx.replicates,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("lhs_re", &est.lhs.re),
            MetricRow::from_summary("lhs_im", &est.lhs.im),
            MetricRow::from_summary("rhs_re", &est.rhs.re),
            MetricRow::from_summary("rhs_im", &est.rhs.im),
            MetricRow::exact("ci_overlap", est.ci_overlaps() as u8 as f64),
        ],
        aux: vec![],
    })
}

fn run_martingale_residual(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let dx = ctx.params.f64_or("dx", 0.25)?;
    let u0 = parse_init(ctx, l, dx)?;
    let (phi, psi) = test_functions(ctx, l)?;
    let res = sbm::martingale_residual(
        &u0,
        &phi,
        &psi,
        ctx.params.f64("rho")?,
        ctx.params.f64("gamma")?,
        ctx.params.f64_or("dt", 6.25e-4)?,
        ctx.params.f64("t")?,
        ctx.replicates,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("residual_re", &res.re),
            MetricRow::from_summary("residual_im", &res.im),
        ],
        aux: vec![],
    })
}

fn run_separation(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let dx = ctx.params.f64_or("dx", 1.0)?;
    let u0 = sbm::heaviside_init(l, dx)?;
    let gammas = ctx.params.f64_list("gammas")?;
    let site = ctx.params.usize_or("site", sbm::heaviside_junction(l))?;
    let out = sbm::separation_stat(
        &u0,
        ctx.params.f64("rho")?,
        &gammas,
        ctx.params.f64("t")?,
        site,
        ctx.replicates,
        ctx.params.f64_or("base_dt", 5e-3)?,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: out
            .iter()
            .map(|(g, s)| MetricRow::from_summary(format!("uv_mean@{g}"), s))
            .collect(),
        aux: vec![],
    })
}

fn run_rescaling(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let dx = ctx.params.f64_or("dx", 0.25)?;
    let u0 = parse_init(ctx, l, dx)?;
    let rep = sbm::rescaling_check(
        &u0,
        ctx.params.f64("rho")?,
        ctx.params.f64("gamma")?,
        ctx.params.u64("k")? as u32,
        ctx.params.f64("t")?,
        ctx.params.usize_or("site", sbm::heaviside_junction(l))?,
        ctx.replicates,
        ctx.params.f64_or("dt", 0.01)?,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::exact("ks_stat", rep.statistic),
            MetricRow::exact("ks_p", rep.p_value),
        ],
        aux: vec![],
    })
}

fn run_critical_curve(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let rho = ctx.params.f64("rho")?;
    Ok(ExperimentOutput {
        rows: vec![MetricRow::exact("p_rho", sbm::critical_curve(rho)?)],
        aux: vec![],
    })
}

fn run_moment_growth(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let growth = sbm::moment_growth_experiment(
        ctx.params.f64("rho")?,
        ctx.params.f64("gamma")?,
        ctx.params.f64("p")?,
        &ctx.params.f64_list("t_grid")?,
        ctx.params.usize_or("l", 32)?,
        ctx.params.f64_or("dx", 1.0)?,
        ctx.params.f64_or("dt", 0.01)?,
        ctx.replicates,
        stream(ctx),
    )?;
    let mut rows: Vec<MetricRow> = growth
        .t_grid
        .iter()
        .zip(&growth.moments)
        .map(|(t, s)| MetricRow::from_summary(format!("moment@{t}"), s))
        .collect();
    rows.push(MetricRow::exact("mann_kendall_z", growth.mk_z));
    Ok(ExperimentOutput { rows, aux: vec![] })
}

fn run_sbm_snapshot(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let dx = ctx.params.f64_or("dx", 0.25)?;
    let dt = ctx.params.f64_or("dt", 0.01)?;
    let u0 = parse_init(ctx, l, dx)?;
    let params = SbmParams {
        rho: ctx.params.f64("rho")?,
        gamma: ctx.params.f64("gamma")?,
        dt,
        dx,
    };
    let t = ctx.params.f64("t")?;
    let delta = ctx.params.f64_or("delta", 1e-6)?;
    let mut sim = SbmSimulator::new(u0, params)?;
    let mut rng = stream(ctx).rng();
    sim.run((t / dt).round() as u64, &mut rng);
    let region = sbm::interface_region(&sim.state, delta);
    let (lo, hi, width) = match region {
        Some((a, b)) => (a as f64, b as f64, (b - a + 1) as f64),
        None => (-1.0, -1.0, 0.0),
    };
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::exact("clamp_rate", sim.clamp.rate()),
            MetricRow::exact("interface_lo", lo),
            MetricRow::exact("interface_hi", hi),
            MetricRow::exact("interface_width_cells", width),
            MetricRow::exact("lambda_total", sim.lambda.total()),
        ],
        aux: vec![("field.csv".into(), sbm::field_csv(&sim.state, &sim.lambda))],
    })
}

fn run_moment_duality(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let l = ctx.params.usize("l")?;
    let u0 = parse_init(ctx, l, 1.0)?;
    let rep = colour::check_moment_duality(
        &u0,
        &ctx.params.usize_list("sites")?,
        &parse_colours(ctx)?,
        ctx.params.f64("gamma")?,
        ctx.params.f64("rho")?,
        ctx.params.f64("t")?,
        ctx.params.f64_or("dt", 5e-3)?,
        ctx.replicates,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("lhs_field", &rep.lhs),
            MetricRow::from_summary("rhs_dual", &rep.rhs),
            MetricRow::exact("weight_cv", rep.weight_cv),
            MetricRow::exact("heavy_tail", rep.heavy_tail as u8 as f64),
        ],
        aux: vec![],
    })
}

fn run_colour_trajectory(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let x: Vec<i64> = ctx
        .params
        .f64_list("x")?
        .into_iter()
        .map(|v| v as i64)
        .collect();
    let c = parse_colours(ctx)?;
    let t = ctx.params.f64("t")?;
    let mut rng = stream(ctx).rng();
    let path = colour::sample_colocation_path(&x, t, None, &mut rng)?;
    let mode = ctx.params.str_or("mode", "finite")?;
    let (csv, final_m) = match mode {
        "finite" => {
            let traj = colour::evolve_colour_measure_trajectory(
                &path,
                &c,
                ctx.params.f64("gamma")?,
                ctx.params.f64("rho")?,
            )?;
            let m = traj.last().expect("nonempty").1.clone();
            (colour::colour_measure_csv(&traj), m)
        }
        "infinite" => {
            let m = colour::evolve_colour_measure_infinite(&path.meetings, &c, t)?;
            (
                colour::colour_measure_csv(&[(t, m.clone())]),
                m,
            )
        }
        other => return Err(Error::Config(format!("unknown mode: {other}"))),
    };
    let rows = final_m
        .weights
        .iter()
        .enumerate()
        .map(|(b, &w)| MetricRow::exact(format!("weight@{b}"), w))
        .collect();
    Ok(ExperimentOutput {
        rows,
        aux: vec![("colour_measure.csv".into(), csv)],
    })
}

fn run_coalescing_duality(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let est = colour::check_coalescing_duality(
        &parse_step_profile(ctx, "u0")?,
        &ctx.params.f64_list("x")?,
        ctx.params.f64("t")?,
        ctx.params.f64_or("dt", 5e-3)?,
        ctx.replicates,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("lhs_voter", &est.lhs),
            MetricRow::from_summary("rhs_coalescing", &est.rhs),
            MetricRow::exact("z_gap", est.z_gap()),
        ],
        aux: vec![],
    })
}

fn run_annihilating_duality(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let gamma = match ctx.params.str_or("gamma", "inf")? {
        "inf" => None,
        s => Some(
            s.parse::<f64>()
                .map_err(|_| Error::Config("gamma must be a number or \"inf\"".into()))?,
        ),
    };
    let est = colour::check_annihilating_moment_duality(
        &parse_step_profile(ctx, "u0")?,
        &ctx.params.f64_list("x")?,
        gamma,
        ctx.params.f64("t")?,
        ctx.params.f64_or("dt", 5e-3)?,
        ctx.replicates,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("lhs_voter", &est.lhs),
            MetricRow::from_summary("rhs_annihilating", &est.rhs),
            MetricRow::exact("z_gap", est.z_gap()),
        ],
        aux: vec![],
    })
}

fn run_continuous_voter(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let u0 = parse_step_profile(ctx, "u0")?;
    let x = ctx.params.f64_list("x")?;
    let t = ctx.params.f64("t")?;
    let schedule = StepSchedule::uniform(ctx.params.f64_or("dt", 5e-3)?);
    let per_rep: Vec<Vec<u8>> = replicate_map(stream(ctx), ctx.replicates, |_, rng| {
        particles::continuous_voter(&u0, &x, t, &schedule, rng).expect("validated")
    });
    let mut rows = Vec::new();
    for (k, &xq) in x.iter().enumerate() {
        let col: Vec<f64> = per_rep.iter().map(|r| r[k] as f64).collect();
        rows.push(MetricRow::from_summary(
            format!("mean_type@{xq}"),
            &Summary::from_samples(&col),
        ));
    }
    Ok(ExperimentOutput { rows, aux: vec![] })
}

fn run_tribe_interface(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let t = ctx.params.f64("t")?;
    let dt = ctx.params.f64_or("dt", 0.01)?;
    let u0 = PiecewiseConstantProfile::step(0.0, 1.0, 0.0);
    let v0 = PiecewiseConstantProfile::step(0.0, 0.0, 1.0);
    let schedule = StepSchedule::uniform(dt);
    let mut samples: Vec<f64> = replicate_map(stream(ctx), ctx.replicates, |_, rng| {
        let (state, _, _) =
            particles::simulate_abm_colouring(&u0, &v0, t, &schedule, &[], rng).expect("validated");
        state.interfaces.positions()[0]
    });
    let summary = Summary::from_samples(&samples);
    let (ks_stat, ks_p) = stats::ks_test(&mut samples, |x| stats::std_normal_cdf(x / t.sqrt()));
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("interface_position", &summary),
            MetricRow::exact("ks_stat_vs_normal", ks_stat),
            MetricRow::exact("ks_p_vs_normal", ks_p),
        ],
        aux: vec![],
    })
}

fn run_abm_colouring(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let breaks = ctx.params.f64_list("breaks")?;
    let u_values = ctx.params.f64_list("u_values")?;
    let v_values = ctx.params.f64_list("v_values")?;
    let u0 = PiecewiseConstantProfile::new(breaks.clone(), u_values)?;
    let v0 = PiecewiseConstantProfile::new(breaks, v_values)?;
    let t = ctx.params.f64("t")?;
    let schedule = StepSchedule::uniform(ctx.params.f64_or("dt", 1e-3)?);
    let lo = ctx.params.f64_or("grid_lo", -3.0)?;
    let hi = ctx.params.f64_or("grid_hi", 3.0)?;
    let points = ctx.params.usize_or("grid_points", 121)?;
    let grid: Vec<f64> = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect();
    let mut rng = stream(ctx).rng();
    let (state, u_hat, v_hat) =
        particles::simulate_abm_colouring(&u0, &v0, t, &schedule, &grid, &mut rng)?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::exact("interfaces_alive", state.interfaces.alive_count() as f64),
            MetricRow::exact("leftmost_colour", state.leftmost_colour as f64),
        ],
        aux: vec![(
            "colouring.csv".into(),
            particles::colouring_csv(&grid, &u_hat, &v_hat),
        )],
    })
}

fn run_interface_sde(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let t = ctx.params.f64("t")?;
    let dt = ctx.params.f64_or("dt", 5e-4)?;
    let eps0 = ctx.params.f64_or("eps0", 1e-4)?;
    let at = ctx.params.f64_or("step_at", 0.0)?;
    let u_left = ctx.params.f64_or("u_left", 1.0)?;
    let v_right = ctx.params.f64_or("v_right", 2.0)?;
    let w0 = PiecewiseConstantProfile::step(at, u_left, v_right);
    let mut samples: Vec<f64> = replicate_map(stream(ctx), ctx.replicates, |_, rng| {
        particles::simulate_interface_sde(at, &w0, dt, t, eps0, rng).expect("validated")
    });
    // closed form P(I_t >= x) = S_t u0 / S_t w0 for u0 = u_left 1{x<=at}
    let cdf = move |x: f64| {
        let su = u_left * stats::std_normal_cdf((at - x) / t.sqrt());
        let sw = su + v_right * (1.0 - stats::std_normal_cdf((at - x) / t.sqrt()));
        1.0 - su / sw
    };
    let summary = Summary::from_samples(&samples);
    let (ks_stat, ks_p) = stats::ks_test(&mut samples, cdf);
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary("interface_position", &summary),
            MetricRow::exact("ks_stat_vs_ratio", ks_stat),
            MetricRow::exact("ks_p_vs_ratio", ks_p),
        ],
        aux: vec![],
    })
}

fn run_entrance_law(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let c = ctx.params.f64_or("c", 1.0)?;
    let t_grid = ctx.params.f64_list("t_grid")?;
    let init = parse_entrance(ctx)?;
    let counts = particles::entrance_counts(init, c, &t_grid, ctx.replicates, None, stream(ctx))?;
    let mut rows = Vec::new();
    for (k, tg) in t_grid.iter().enumerate() {
        let col: Vec<f64> = counts.iter().map(|r| r[k] as f64).collect();
        rows.push(MetricRow::from_summary(
            format!("count@{tg}"),
            &Summary::from_samples(&col),
        ));
    }
    Ok(ExperimentOutput { rows, aux: vec![] })
}

fn run_npoint_density(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let est = particles::estimate_npoint_density(
        parse_entrance(ctx)?,
        ctx.params.f64_or("c", 1.0)?,
        ctx.params.f64("t")?,
        &ctx.params.f64_list("x")?,
        ctx.params.f64("h")?,
        ctx.replicates,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::from_summary(format!("density@h={}", est.h), &est.estimate),
            MetricRow::from_summary(format!("density@h={}", est.refined_h), &est.refined),
        ],
        aux: vec![],
    })
}

fn run_entrance_consistency(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let rep = particles::entrance_consistency_check(
        parse_entrance(ctx)?,
        ctx.params.f64_or("c", 1.0)?,
        ctx.params.f64("s")?,
        ctx.params.f64("t")?,
        ctx.replicates,
        stream(ctx),
    )?;
    Ok(ExperimentOutput {
        rows: vec![
            MetricRow::exact("chi2_p", rep.chi2_p),
            MetricRow::exact("ks_gap_p", rep.ks_gap_p),
            MetricRow::from_summary("direct_mean_count", &rep.direct_mean),
            MetricRow::from_summary("split_mean_count", &rep.split_mean),
            MetricRow::from_summary("halved_dt_mean_count", &rep.halved_mean),
        ],
        aux: vec![],
    })
}

fn run_thinning(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let rep = particles::thinning_experiment(
        parse_entrance(ctx)?,
        ctx.params.f64_or("c", 1.0)?,
        &ctx.params.f64_list("t_grid")?,
        ctx.replicates,
        stream(ctx),
    )?;
    let mut rows: Vec<MetricRow> = rep
        .t_grid
        .iter()
        .zip(&rep.ratios)
        .map(|(t, s)| MetricRow::from_summary(format!("abm_cbm_ratio@{t}"), s))
        .collect();
    rows.push(MetricRow::exact(
        "coupled_monotone_fraction",
        rep.coupled_monotone_fraction,
    ));
    Ok(ExperimentOutput { rows, aux: vec![] })
}

fn run_particle_fan(ctx: &RunCtx) -> Result<ExperimentOutput> {
    let c = ctx.params.f64_or("c", 1.0)?;
    let init = parse_entrance(ctx)?;
    let t = ctx.params.f64("t")?;
    let mut rng = stream(ctx).rng();
    let (pts, _) = particles::entrance_positions(init, c, &mut rng)?;
    let schedule = StepSchedule::adaptive(1e-5, 1e-3);
    let points = particles::record_trajectories(
        pts,
        particles::Domain::Torus(c),
        particles::Mode::Annihilating,
        t,
        &schedule,
        &mut rng,
    )?;
    let final_count = points
        .iter()
        .filter(|p| (p.time - t).abs() < 1e-9)
        .count() as f64;
    Ok(ExperimentOutput {
        rows: vec![MetricRow::exact("final_count", final_count)],
        aux: vec![(
            "trajectories.csv".into(),
            particles::trajectories_csv(&points),
        )],
    })
}

macro_rules! p {
    ($key:literal, $kind:literal, $req:literal, $ex:literal, $help:literal) => {
        ParamSpec {
            key: $key,
            kind: $kind,
            required: $req,
            example: $ex,
            help: $help,
        }
    };
}

pub fn registry() -> &'static [ExperimentSpec] {
    static REGISTRY: OnceLock<Vec<ExperimentSpec>> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

fn build_registry() -> Vec<ExperimentSpec> {
    vec![
        ExperimentSpec {
            name: "sample_poisson_events",
            operation: "stochastic_core::sample_poisson_events",
            params: &[
                p!("rate", "f64", true, "2.0", "events per unit time"),
                p!("horizon", "f64", true, "10.0", "window length"),
            ],
            run: run_sample_poisson,
        },
        ExperimentSpec {
            name: "gaussian_pair",
            operation: "stochastic_core::gaussian_pair",
            params: &[p!("rho", "f64", true, "-0.5", "correlation in [-1,1]")],
            run: run_gaussian_pair,
        },
        ExperimentSpec {
            name: "bridge_crossing_prob",
            operation: "stochastic_core::bridge_crossing_prob",
            params: &[
                p!("a", "f64", true, "1.0", "gap at step start"),
                p!("b", "f64", true, "1.0", "gap at step end"),
                p!("dt", "f64", true, "1.0", "step length"),
                p!("diffusivity", "f64", false, "2.0", "variance per unit time of the gap"),
            ],
            run: run_bridge_prob,
        },
        ExperimentSpec {
            name: "check_voter_duality",
            operation: "voter_lattice::check_voter_duality",
            params: &[
                p!("l", "usize", true, "8", "cycle size"),
                p!("t", "f64", true, "1.0", "horizon"),
                p!("sites", "[usize]", true, "[0, 3]", "product observable sites"),
                p!("eta0", "str", false, "\"alternating\"", "ones|zeros|alternating|block"),
            ],
            run: run_voter_duality,
        },
        ExperimentSpec {
            name: "parity_duality_check",
            operation: "voter_lattice::parity_duality_check",
            params: &[
                p!("l", "usize", true, "8", "cycle size"),
                p!("x", "usize", true, "2", "left site"),
                p!("y", "usize", true, "5", "right site"),
                p!("t", "f64", true, "1.0", "horizon"),
                p!("eta0", "str", false, "\"block\"", "initial configuration"),
            ],
            run: run_parity_duality,
        },
        ExperimentSpec {
            name: "clustering_curve",
            operation: "voter_lattice::clustering_curve",
            params: &[
                p!("l", "usize", true, "16", "cycle size"),
                p!("x", "usize", true, "0", "left site"),
                p!("y", "usize", true, "4", "right site"),
                p!("t_grid", "[f64]", true, "[1.0, 5.0, 20.0, 100.0, 200.0]", "time grid"),
                p!("eta0", "str", false, "\"block\"", "initial configuration"),
            ],
            run: run_clustering,
        },
        ExperimentSpec {
            name: "exact_oracle",
            operation: "voter_lattice::exact_oracle",
            params: &[
                p!("l", "usize", true, "8", "cycle size (max 12)"),
                p!("sites", "[usize]", true, "[0, 3]", "product observable sites"),
                p!("t", "f64", true, "1.0", "horizon"),
                p!("eta0", "str", false, "\"alternating\"", "initial configuration"),
            ],
            run: run_exact_oracle,
        },
        ExperimentSpec {
            name: "check_self_duality",
            operation: "sbm_field::check_self_duality",
            params: &[
                p!("l", "usize", true, "32", "lattice size"),
                p!("rho", "f64", true, "-0.5", "noise correlation, |rho| < 1"),
                p!("gamma", "f64", true, "1.0", "branching rate"),
                p!("t", "f64", true, "0.25", "horizon"),
                p!("dx", "f64", false, "0.25", "lattice spacing"),
                p!("dt", "f64", false, "0.01", "time step"),
                p!("init", "str", false, "\"positive\"", "heaviside|flat|positive"),
            ],
            run: run_self_duality,
        },
        ExperimentSpec {
            name: "martingale_residual",
            operation: "sbm_field::martingale_residual",
            params: &[
                p!("l", "usize", true, "32", "lattice size"),
                p!("rho", "f64", true, "-0.5", "noise correlation"),
                p!("gamma", "f64", true, "1.0", "branching rate"),
                p!("t", "f64", true, "0.25", "horizon"),
                p!("dx", "f64", false, "0.25", "lattice spacing"),
                p!("dt", "f64", false, "6.25e-4", "time step"),
                p!("init", "str", false, "\"positive\"", "heaviside|flat|positive"),
            ],
            run: run_martingale_residual,
        },
        ExperimentSpec {
            name: "separation_stat",
            operation: "sbm_field::separation_stat",
            params: &[
                p!("l", "usize", true, "32", "lattice size"),
                p!("gammas", "[f64]", true, "[1.0, 10.0, 100.0]", "branching rates"),
                p!("rho", "f64", true, "-0.5", "noise correlation"),
                p!("t", "f64", true, "0.1", "horizon"),
                p!("dx", "f64", false, "1.0", "lattice spacing"),
                p!("base_dt", "f64", false, "5e-3", "time step at gamma = 1"),
                p!("site", "usize", false, "16", "observation site"),
            ],
            run: run_separation,
        },
        ExperimentSpec {
            name: "rescaling_check",
            operation: "sbm_field::rescaling_check",
            params: &[
                p!("l", "usize", true, "16", "lattice size"),
                p!("rho", "f64", true, "-0.5", "noise correlation"),
                p!("gamma", "f64", true, "1.0", "branching rate"),
                p!("k", "u64", true, "2", "diffusive rescaling factor"),
                p!("t", "f64", true, "0.1", "fine-system horizon"),
                p!("dx", "f64", false, "0.25", "coarse spacing"),
                p!("dt", "f64", false, "0.01", "coarse time step"),
                p!("site", "usize", false, "8", "matched observation site"),
                p!("init", "str", false, "\"heaviside\"", "scale-covariant profile"),
            ],
            run: run_rescaling,
        },
        ExperimentSpec {
            name: "critical_curve",
            operation: "sbm_field::critical_curve",
            params: &[p!("rho", "f64", true, "0.0", "correlation in [-1, 1)")],
            run: run_critical_curve,
        },
        ExperimentSpec {
            name: "moment_growth_experiment",
            operation: "sbm_field::moment_growth_experiment",
            params: &[
                p!("rho", "f64", true, "-0.5", "noise correlation"),
                p!("gamma", "f64", true, "1.0", "branching rate"),
                p!("p", "f64", true, "2.0", "moment order"),
                p!("t_grid", "[f64]", true, "[1.0, 5.0, 20.0, 50.0]", "time grid"),
                p!("l", "usize", false, "32", "torus size"),
                p!("dx", "f64", false, "1.0", "lattice spacing"),
                p!("dt", "f64", false, "0.01", "time step"),
            ],
            run: run_moment_growth,
        },
        ExperimentSpec {
            name: "sbm_snapshot",
            operation: "sbm_field::step_sbm",
            params: &[
                p!("l", "usize", true, "64", "lattice size"),
                p!("rho", "f64", true, "-0.9", "noise correlation"),
                p!("gamma", "f64", true, "10.0", "branching rate"),
                p!("t", "f64", true, "2.0", "horizon"),
                p!("dx", "f64", false, "0.25", "lattice spacing"),
                p!("dt", "f64", false, "0.001", "time step"),
                p!("init", "str", false, "\"heaviside\"", "initial fields"),
                p!("delta", "f64", false, "1e-6", "numerical support threshold"),
            ],
            run: run_sbm_snapshot,
        },
        ExperimentSpec {
            name: "check_moment_duality",
            operation: "colour_dual::check_moment_duality",
            params: &[
                p!("l", "usize", true, "32", "torus size (dx = 1)"),
                p!("sites", "[usize]", true, "[14, 17]", "walker start sites"),
                p!("colours", "[usize]", true, "[1, 2]", "walker colours in {1,2}"),
                p!("gamma", "f64", true, "1.0", "branching rate"),
                p!("rho", "f64", true, "-0.5", "noise correlation"),
                p!("t", "f64", true, "0.5", "horizon"),
                p!("dt", "f64", false, "5e-3", "field solver step"),
                p!("init", "str", false, "\"flat\"", "initial fields"),
            ],
            run: run_moment_duality,
        },
        ExperimentSpec {
            name: "colour_measure_trajectory",
            operation: "colour_dual::evolve_colour_measure",
            params: &[
                p!("x", "[f64]", true, "[0, 1]", "walker start sites"),
                p!("colours", "[usize]", true, "[1, 1]", "initial colouring"),
                p!("gamma", "f64", true, "1.0", "flip rate (finite mode)"),
                p!("rho", "f64", true, "-1.0", "weight correlation"),
                p!("t", "f64", true, "2.0", "horizon"),
                p!("mode", "str", false, "\"finite\"", "finite|infinite"),
            ],
            run: run_colour_trajectory,
        },
        ExperimentSpec {
            name: "check_coalescing_duality",
            operation: "colour_dual::check_coalescing_duality",
            params: &[
                p!("x", "[f64]", true, "[-0.5, 0.5]", "query points"),
                p!("t", "f64", true, "0.5", "horizon"),
                p!("dt", "f64", false, "5e-3", "particle step"),
                p!("u0_step_at", "f64", false, "0.0", "u0 step location"),
                p!("u0_left", "f64", false, "1.0", "u0 left value"),
                p!("u0_right", "f64", false, "0.0", "u0 right value"),
            ],
            run: run_coalescing_duality,
        },
        ExperimentSpec {
            name: "check_annihilating_moment_duality",
            operation: "colour_dual::check_annihilating_moment_duality",
            params: &[
                p!("x", "[f64]", true, "[-0.4, 0.6]", "query points"),
                p!("t", "f64", true, "0.5", "horizon"),
                p!("gamma", "str", false, "\"inf\"", "annihilation rate or \"inf\""),
                p!("dt", "f64", false, "5e-3", "particle step"),
                p!("u0_step_at", "f64", false, "0.0", "u0 step location"),
                p!("u0_left", "f64", false, "1.0", "u0 left value"),
                p!("u0_right", "f64", false, "0.0", "u0 right value"),
            ],
            run: run_annihilating_duality,
        },
        ExperimentSpec {
            name: "continuous_voter",
            operation: "interface_process::continuous_voter",
            params: &[
                p!("x", "[f64]", true, "[0.0, 0.5]", "query points"),
                p!("t", "f64", true, "0.5", "horizon"),
                p!("dt", "f64", false, "5e-3", "particle step"),
                p!("u0_step_at", "f64", false, "0.0", "u0 step location"),
                p!("u0_left", "f64", false, "1.0", "u0 left value"),
                p!("u0_right", "f64", false, "0.0", "u0 right value"),
            ],
            run: run_continuous_voter,
        },
        ExperimentSpec {
            name: "tribe_interface",
            operation: "interface_process::simulate_abm_colouring",
            params: &[
                p!("t", "f64", true, "1.0", "horizon"),
                p!("dt", "f64", false, "0.01", "particle step"),
            ],
            run: run_tribe_interface,
        },
        ExperimentSpec {
            name: "abm_colouring",
            operation: "interface_process::simulate_abm_colouring",
            params: &[
                p!("breaks", "[f64]", true, "[-1.0, 0.0, 1.0]", "shared breakpoints"),
                p!("u_values", "[f64]", true, "[1.0, 0.0, 1.0, 0.0]", "u pieces"),
                p!("v_values", "[f64]", true, "[0.0, 1.0, 0.0, 1.0]", "v pieces"),
                p!("t", "f64", true, "0.5", "horizon"),
                p!("dt", "f64", false, "1e-3", "particle step"),
                p!("grid_lo", "f64", false, "-3.0", "snapshot grid start"),
                p!("grid_hi", "f64", false, "3.0", "snapshot grid end"),
                p!("grid_points", "usize", false, "121", "snapshot grid size"),
            ],
            run: run_abm_colouring,
        },
        ExperimentSpec {
            name: "simulate_interface_sde",
            operation: "interface_process::simulate_interface_sde",
            params: &[
                p!("t", "f64", true, "0.5", "horizon"),
                p!("dt", "f64", false, "5e-4", "Euler step"),
                p!("eps0", "f64", false, "1e-4", "drift warm-up time"),
                p!("step_at", "f64", false, "0.0", "w0 step location"),
                p!("u_left", "f64", false, "1.0", "u0 height left of the step"),
                p!("v_right", "f64", false, "2.0", "v0 height right of the step"),
            ],
            run: run_interface_sde,
        },
        ExperimentSpec {
            name: "entrance_law_experiment",
            operation: "interface_process::entrance_law_experiment",
            params: &[
                p!("init", "str", true, "\"lattice\"", "lattice|poisson|paired_square|paired_quarter"),
                p!("n", "u64", true, "40", "pattern density"),
                p!("t_grid", "[f64]", true, "[0.05, 0.1]", "observation times"),
                p!("c", "f64", false, "1.0", "torus circumference"),
            ],
            run: run_entrance_law,
        },
        ExperimentSpec {
            name: "estimate_npoint_density",
            operation: "interface_process::estimate_npoint_density",
            params: &[
                p!("init", "str", true, "\"lattice\"", "starting pattern"),
                p!("n", "u64", true, "40", "pattern density"),
                p!("t", "f64", true, "0.1", "observation time"),
                p!("x", "[f64]", true, "[0.5]", "query points"),
                p!("h", "f64", true, "0.05", "window half-width"),
                p!("c", "f64", false, "1.0", "torus circumference"),
            ],
            run: run_npoint_density,
        },
        ExperimentSpec {
            name: "entrance_consistency_check",
            operation: "interface_process::entrance_consistency_check",
            params: &[
                p!("init", "str", true, "\"lattice\"", "starting pattern"),
                p!("n", "u64", true, "40", "pattern density"),
                p!("s", "f64", true, "0.05", "split time"),
                p!("t", "f64", true, "0.1", "final time"),
                p!("c", "f64", false, "1.0", "torus circumference"),
            ],
            run: run_entrance_consistency,
        },
        ExperimentSpec {
            name: "thinning_experiment",
            operation: "interface_process::thinning_experiment",
            params: &[
                p!("init", "str", true, "\"lattice\"", "starting pattern"),
                p!("n", "u64", true, "40", "pattern density"),
                p!("t_grid", "[f64]", true, "[0.02, 0.1]", "observation times"),
                p!("c", "f64", false, "1.0", "torus circumference"),
            ],
            run: run_thinning,
        },
        ExperimentSpec {
            name: "particle_fan",
            operation: "interface_process::step_particles",
            params: &[
                p!("init", "str", true, "\"lattice\"", "starting pattern"),
                p!("n", "u64", true, "10", "pattern density"),
                p!("t", "f64", true, "0.1", "horizon"),
                p!("c", "f64", false, "1.0", "torus circumference"),
            ],
            run: run_particle_fan,
        },
    ]
}
