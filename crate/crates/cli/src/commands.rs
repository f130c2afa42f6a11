//! The experiments behind each subcommand. Every command turns a resolved
//! configuration into a list of tables; nothing is written here.

use log::{info, warn};

use duct_channel::cir::{
    cir_flow_point, dispersion_peak_time, dispersion_peak_value, flow_point_window,
    flow_transit_times, Cir, DispersionModel, FlowModel, ImpulseResponse,
};
use duct_channel::link::{
    optimal_threshold, ser_analytic, ser_monte_carlo, OokLinkConfig, ParticleChannel, SerMethod,
    SerResult,
};
use duct_channel::model::{
    classify_regime, DuctChannelConfig, FlowSpec, ReceiverVolume, Regime, ReleaseSpec,
    REGIME_THRESHOLD_FACTOR,
};
use duct_channel::sim::{run, simulate_snapshots, SimConfig};
use duct_channel::{Error, Exec};

use crate::config::Resolved;
use crate::error::CliError;
use crate::output::{Cell, Table};

fn config_err(section: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| CliError::Config(format!("{section}: {e}"))
}

fn runtime_err(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn channel_with_radius(cfg: &Resolved, radius: f64) -> Result<DuctChannelConfig, CliError> {
    DuctChannelConfig::new(
        radius,
        cfg.number("channel.diffusion"),
        FlowSpec::MeanVelocity(cfg.number("channel.mean_velocity")),
    )
    .map_err(config_err("channel"))
}

pub fn channel(cfg: &Resolved) -> Result<DuctChannelConfig, CliError> {
    channel_with_radius(cfg, cfg.number("channel.radius"))
}

pub fn receiver(
    cfg: &Resolved,
    channel: &DuctChannelConfig,
    distance: f64,
) -> Result<ReceiverVolume, CliError> {
    ReceiverVolume::new(
        channel,
        distance,
        cfg.number("receiver.extent_x"),
        cfg.number("receiver.extent_r"),
        cfg.number("receiver.extent_phi"),
    )
    .map_err(config_err("receiver"))
}

fn release(
    cfg: &Resolved,
    channel: &DuctChannelConfig,
    point: bool,
    n_tx: u64,
) -> Result<ReleaseSpec, CliError> {
    if point {
        ReleaseSpec::point(
            channel,
            cfg.number("release.r0"),
            cfg.number("release.phi0"),
            n_tx,
        )
    } else {
        ReleaseSpec::uniform(n_tx)
    }
    .map_err(config_err("release"))
}

fn configured_release(
    cfg: &Resolved,
    channel: &DuctChannelConfig,
) -> Result<ReleaseSpec, CliError> {
    release(
        cfg,
        channel,
        cfg.text("release.kind") == Some("point"),
        cfg.count("release.n_tx"),
    )
}

/// Distance label for file names, e.g. `200um`.
fn micrometres(d: f64) -> String {
    let um = d * 1e6;
    if (um - um.round()).abs() < 1e-6 {
        format!("{}um", um.round() as i64)
    } else {
        format!("{um}um")
    }
}

/// The CIR time grid, snapped to multiples of the simulation step so that
/// analytic and simulated samples share their abscissae.
pub fn time_grid(cfg: &Resolved) -> Result<Vec<f64>, CliError> {
    let (start, end) = (cfg.number("cir.t_start"), cfg.number("cir.t_end"));
    let n = cfg.count("cir.points") as usize;
    let dt = cfg.number("sim.time_step");
    if end < start {
        return Err(CliError::Config(
            "cir.t_end: must not precede cir.t_start".into(),
        ));
    }
    let raw: Vec<f64> = match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (end - start) * i as f64 / (n - 1) as f64)
            .collect(),
    };
    let grid: Vec<f64> = raw.iter().map(|t| (t / dt).round() * dt).collect();
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CliError::Config(
            "cir.points: grid spacing is finer than sim.time_step".into(),
        ));
    }
    Ok(grid)
}

pub fn regime(cfg: &Resolved) -> Result<Vec<Table>, CliError> {
    let mut dots = Table::new(
        "regime",
        &[
            "a_m",
            "d_m",
            "d_over_a",
            "pe",
            "pe_boundary",
            "margin",
            "regime",
        ],
    );
    for &a in cfg.numbers("regime.radii") {
        let channel = channel_with_radius(cfg, a)?;
        for &d in cfg.numbers("receiver.distances") {
            let rx = ReceiverVolume::scaled(&channel, d).map_err(config_err("receiver"))?;
            let v = classify_regime(&channel, &rx);
            dots.push(vec![
                Cell::F(a),
                Cell::F(d),
                Cell::F(v.distance_ratio),
                Cell::F(v.peclet),
                Cell::F(REGIME_THRESHOLD_FACTOR * 4.0 * v.distance_ratio),
                Cell::F(v.margin),
                Cell::S(v.regime.as_str().into()),
            ]);
        }
    }
    let mut line =
        Table::new("regime_boundary", &["d_over_a", "pe"]).note("boundary", "pe = 4 d/a");
    for i in 0..=40 {
        let ratio = 10f64.powf(-1.0 + 4.0 * i as f64 / 40.0);
        line.push(vec![
            Cell::F(ratio),
            Cell::F(REGIME_THRESHOLD_FACTOR * 4.0 * ratio),
        ]);
    }
    info!("regime: {} scenario points", dots.rows.len());
    Ok(vec![dots, line])
}

fn push_curve(table: &mut Table, name: &str, d: f64, ir: &ImpulseResponse) {
    let hw = ir.half_widths();
    for (i, (&t, &p)) in ir.times().iter().zip(ir.values()).enumerate() {
        table.push(vec![
            Cell::S(name.into()),
            Cell::F(d),
            Cell::F(t),
            Cell::F(p),
            Cell::F(hw.map_or(0.0, |h| h[i])),
        ]);
    }
}

fn marker(table: &mut Table, kind: &str, model: &str, d: f64, t: f64, p: f64) {
    table.push(vec![
        Cell::S(kind.into()),
        Cell::S(model.into()),
        Cell::F(d),
        Cell::F(t),
        Cell::F(p),
    ]);
}

pub fn cir(cfg: &Resolved) -> Result<Vec<Table>, CliError> {
    let channel = channel(cfg)?;
    let grid = time_grid(cfg)?;
    let dt = cfg.number("sim.time_step");
    let z = cfg.number("sim.confidence_z");
    let n_tx = cfg.count("release.n_tx");
    let mut curves = Table::new("cir", &["model", "d_m", "t_s", "p_ob", "half_width"]);
    let mut markers = Table::new("cir_markers", &["marker", "model", "d_m", "t_s", "p_ob"]);
    let point = release(cfg, &channel, true, n_tx.max(1))?;

    for &d in cfg.numbers("receiver.distances") {
        let rx = receiver(cfg, &channel, d)?;
        if channel.diffusion() > 0.0 {
            let m = DispersionModel::new(&channel, &rx).map_err(config_err("channel"))?;
            let cir = Cir::Dispersion { model: m, rx };
            let ir = ImpulseResponse::sample(&grid, cir.model_tag(), |t| cir.p_ob(t))
                .map_err(runtime_err)?;
            push_curve(&mut curves, "dispersion_uniform", d, &ir);
            marker(
                &mut markers,
                "peak",
                "dispersion_uniform",
                d,
                dispersion_peak_time(&m, d),
                dispersion_peak_value(&m, &rx),
            );
        }
        if channel.mean_velocity() > 0.0 {
            let m = FlowModel::new(&channel, &rx).map_err(config_err("channel"))?;
            let cir = Cir::FlowUniform(m);
            let ir = ImpulseResponse::sample(&grid, cir.model_tag(), |t| cir.p_ob(t))
                .map_err(runtime_err)?;
            push_curve(&mut curves, "flow_uniform", d, &ir);
            let (t1, t2) = flow_transit_times(&channel, &rx).map_err(runtime_err)?;
            marker(&mut markers, "t1", "flow_uniform", d, t1, 0.0);
            marker(&mut markers, "t2", "flow_uniform", d, t2, cir.p_ob(t2));

            let cir = Cir::FlowPoint {
                channel,
                rx,
                release: point,
            };
            let ir = ImpulseResponse::sample(&grid, cir.model_tag(), |t| cir.p_ob(t))
                .map_err(runtime_err)?;
            push_curve(&mut curves, "flow_point", d, &ir);
            if let Some((a, b)) = flow_point_window(&channel, &rx, &point).map_err(runtime_err)? {
                let h = cir_flow_point(&channel, &rx, &point, a).map_err(runtime_err)?;
                marker(&mut markers, "window_start", "flow_point", d, a, h);
                marker(&mut markers, "window_end", "flow_point", d, b, h);
            }
        }
        let horizon = grid.last().copied().unwrap_or(0.0);
        let mut simulations = Vec::new();
        if cfg.flag("cir.simulate_uniform") && n_tx > 0 {
            simulations.push(("simulated_uniform", release(cfg, &channel, false, n_tx)?));
        }
        if cfg.flag("cir.simulate_point") && n_tx > 0 {
            simulations.push(("simulated_point", point));
        }
        for (name, rel) in simulations {
            info!("cir: simulating {n_tx} particles ({name}, d = {d:e} m)");
            let sim = SimConfig::new(channel, rx, rel, dt, horizon, cfg.seed(), &grid)
                .map_err(config_err("sim"))?;
            let obs = run(&sim);
            let ir = obs.to_impulse_response(&sim, z).map_err(runtime_err)?;
            push_curve(&mut curves, name, d, &ir);
            if let Some((t, p)) = ir.peak() {
                marker(&mut markers, "peak", name, d, t, p);
            }
        }
    }
    Ok(vec![curves, markers])
}

pub fn simulate(cfg: &Resolved) -> Result<Vec<Table>, CliError> {
    let channel = channel(cfg)?;
    let grid = time_grid(cfg)?;
    let rel = configured_release(cfg, &channel)?;
    let mut tables = Vec::new();
    for &d in cfg.numbers("receiver.distances") {
        let rx = receiver(cfg, &channel, d)?;
        let sim = SimConfig::new(
            channel,
            rx,
            rel,
            cfg.number("sim.time_step"),
            grid.last().copied().unwrap_or(0.0),
            cfg.seed(),
            &grid,
        )
        .map_err(config_err("sim"))?;
        info!("simulate: {} particles, d = {d:e} m", rel.n_tx());
        let obs = run(&sim);
        let mut t = Table::new(
            format!("simulate_d{}", micrometres(d)),
            &["t_s", "count", "n_tx"],
        )
        .note("distance_m", format!("{d:e}"));
        for (&time, &count) in obs.times.iter().zip(&obs.counts) {
            t.push(vec![Cell::F(time), Cell::U(count), Cell::U(obs.n_tx)]);
        }
        tables.push(t);
    }
    Ok(tables)
}

pub fn snapshot(cfg: &Resolved) -> Result<Vec<Table>, CliError> {
    let channel = channel(cfg)?;
    let rel = configured_release(cfg, &channel)?;
    let times = cfg.numbers("snapshot.times");
    let horizon = times.iter().cloned().fold(0.0, f64::max);
    // the receiver does not influence the particle motion
    let rx = ReceiverVolume::scaled(&channel, channel.radius()).map_err(config_err("receiver"))?;
    let sim = SimConfig::new(
        channel,
        rx,
        rel,
        cfg.number("sim.time_step"),
        horizon,
        cfg.seed(),
        times,
    )
    .map_err(config_err("snapshot.times"))?;
    info!(
        "snapshot: {} particles at {} times",
        rel.n_tx(),
        times.len()
    );
    let ensembles = simulate_snapshots(&sim, Exec::default()).map_err(runtime_err)?;
    Ok(ensembles
        .iter()
        .zip(sim.sample_times())
        .map(|(ens, t)| {
            let mut table = Table::new(format!("snapshot_t{t}s"), &["particle_id", "x_m", "r2_m2"])
                .note("t_s", format!("{t:e}"));
            for (i, (x, r2)) in ens.snapshot().into_iter().enumerate() {
                table.push(vec![Cell::U(i as u64), Cell::F(x), Cell::F(r2)]);
            }
            table
        })
        .collect())
}

fn method_from(name: &str) -> SerMethod {
    match name {
        "poisson_analytic" | "poisson" => SerMethod::PoissonAnalytic,
        "binomial_analytic" | "binomial" => SerMethod::BinomialAnalytic,
        "monte_carlo_counts" => SerMethod::MonteCarloCounts,
        _ => SerMethod::MonteCarloParticles,
    }
}

/// The CIR used by the link and its detection delay.
fn link_cir(
    cfg: &Resolved,
    channel: &DuctChannelConfig,
    rx: &ReceiverVolume,
) -> Result<(Cir, f64), CliError> {
    let model = match cfg.text("link.cir_model").unwrap_or("auto") {
        "auto" => match classify_regime(channel, rx).regime {
            Regime::FlowDominated => "flow_uniform",
            _ => "dispersion",
        },
        other => other,
    };
    let point = release(cfg, channel, true, 1)?;
    let cir = match model {
        "flow_uniform" => {
            Cir::FlowUniform(FlowModel::new(channel, rx).map_err(config_err("link.cir_model"))?)
        }
        "flow_point" => {
            FlowModel::new(channel, rx).map_err(config_err("link.cir_model"))?;
            Cir::FlowPoint {
                channel: *channel,
                rx: *rx,
                release: point,
            }
        }
        _ => Cir::Dispersion {
            model: DispersionModel::new(channel, rx).map_err(config_err("link.cir_model"))?,
            rx: *rx,
        },
    };
    let t2 = || {
        flow_transit_times(channel, rx)
            .map(|(_, t2)| t2)
            .map_err(config_err("link.detection_delay"))
    };
    let peak = || -> Result<f64, CliError> {
        match &cir {
            Cir::Dispersion { model, .. } => Ok(dispersion_peak_time(model, rx.distance())),
            Cir::FlowPoint { .. } => {
                let w = flow_point_window(channel, rx, &point)
                    .map_err(config_err("link.detection_delay"))?;
                w.map(|(a, b)| 0.5 * (a + b)).ok_or_else(|| {
                    CliError::Config(
                        "link.detection_delay: the point release never reaches the receiver".into(),
                    )
                })
            }
            _ => t2(),
        }
    };
    let t0 = match cfg.value("link.detection_delay") {
        crate::config::Value::Number(t) => *t,
        _ => match cfg.text("link.detection_delay") {
            Some("t2") => t2()?,
            _ => peak()?,
        },
    };
    Ok((cir, t0))
}

pub fn ser(cfg: &Resolved) -> Result<Vec<Table>, CliError> {
    let channel = channel(cfg)?;
    let seed = cfg.seed();
    let realizations = cfg.count("link.realizations");
    let methods: Vec<SerMethod> = cfg
        .texts("link.methods")
        .iter()
        .map(|m| method_from(m))
        .collect();
    let search = method_from(cfg.text("link.threshold_search").unwrap_or("poisson"));
    let mut table = Table::new(
        "ser",
        &[
            "T_s",
            "d_m",
            "xi_opt",
            "ser",
            "method",
            "realizations",
            "seed",
        ],
    );

    for &d in cfg.numbers("receiver.distances") {
        let rx = receiver(cfg, &channel, d)?;
        let (cir, t0) = link_cir(cfg, &channel, &rx)?;
        let mut previous: Vec<Option<f64>> = vec![None; methods.len()];
        for &t in cfg.numbers("link.symbol_intervals") {
            let mut link = OokLinkConfig::new(
                cir.clone(),
                cfg.count("link.n_tx"),
                t,
                cfg.count("link.seq_len") as usize,
                t0,
                cfg.number("link.noise_mean"),
                0,
            )
            .map_err(config_err("link"))?;
            let xi = match cfg.value("link.threshold") {
                crate::config::Value::Count(xi) => *xi,
                _ => {
                    optimal_threshold(&link, search, Exec::default())
                        .map_err(runtime_err)?
                        .0
                }
            };
            link = link
                .with_threshold(xi)
                .map_err(config_err("link.threshold"))?;
            info!("ser: d = {d:e} m, T = {t} s, xi = {xi}");
            for (j, &method) in methods.iter().enumerate() {
                let result: SerResult = match method {
                    SerMethod::PoissonAnalytic | SerMethod::BinomialAnalytic => {
                        ser_analytic(&link, method, Exec::default()).map_err(runtime_err)?
                    }
                    SerMethod::MonteCarloCounts => {
                        ser_monte_carlo(&link, realizations, seed, method, Exec::default())
                            .map_err(runtime_err)?
                    }
                    SerMethod::MonteCarloParticles => {
                        let phys = ParticleChannel {
                            channel,
                            rx,
                            release: configured_release(cfg, &channel)?
                                .with_n_tx(1)
                                .map_err(config_err("release"))?,
                            time_step: cfg.number("sim.time_step"),
                        };
                        let l = link
                            .clone()
                            .with_physical(phys)
                            .map_err(config_err("sim"))?;
                        ser_monte_carlo(&l, realizations, seed, method, Exec::default())
                            .map_err(runtime_err)?
                    }
                };
                if let Some(prev) = previous[j] {
                    if result.ser > prev {
                        warn!(
                            "ser: {} rises from {prev:e} to {:e} at d = {d:e} m, T = {t} s",
                            method.as_str(),
                            result.ser
                        );
                    }
                }
                previous[j] = Some(result.ser);
                table.push(vec![
                    Cell::F(t),
                    Cell::F(d),
                    Cell::U(xi),
                    Cell::F(result.ser),
                    Cell::S(method.as_str().into()),
                    Cell::U(if method.is_analytic() {
                        0
                    } else {
                        realizations
                    }),
                    Cell::U(seed),
                ]);
            }
        }
    }
    Ok(vec![table])
}

pub fn dispatch(command: &str, cfg: &Resolved) -> Result<Vec<Table>, CliError> {
    match command {
        "regime" => regime(cfg),
        "cir" => cir(cfg),
        "simulate" => simulate(cfg),
        "snapshot" => snapshot(cfg),
        "ser" => ser(cfg),
        other => Err(CliError::Config(format!("unknown command `{other}`"))),
    }
}
