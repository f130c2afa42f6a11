use duct_channel::cir::{
    cir_dispersion, cir_flow_uniform, effective_diffusion, Cir, DispersionModel, FlowModel,
};
use duct_channel::link::{
    optimal_threshold, ser_analytic, ser_monte_carlo, OokLinkConfig, ParticleChannel, SerMethod,
};
use duct_channel::model::{
    classify_regime, DuctChannelConfig, ReceiverVolume, Regime, ReleaseSpec,
};
use duct_channel::sim::{run, run_with, simulate_snapshots, SimConfig};
use duct_channel::Exec;

const UM: f64 = 1e-6;

fn large_duct(diffusion: f64) -> DuctChannelConfig {
    DuctChannelConfig::with_mean_velocity(200.0 * UM, diffusion, 1e-3).unwrap()
}

#[test]
fn flow_only_run_tracks_closed_form() {
    let ch = large_duct(0.0);
    let rx = ReceiverVolume::scaled(&ch, 400.0 * UM).unwrap();
    let model = FlowModel::new(&ch, &rx).unwrap();
    let times: Vec<f64> = (1..=60).map(|i| i as f64 * 0.01).collect();
    let cfg = SimConfig::new(
        ch,
        rx,
        ReleaseSpec::uniform(20_000).unwrap(),
        1e-3,
        0.6,
        3,
        &times,
    )
    .unwrap();
    let ir = run(&cfg).to_impulse_response(&cfg, 4.0).unwrap();
    let hw = ir.half_widths().unwrap();
    for ((t, p), h) in ir.times().iter().zip(ir.values()).zip(hw) {
        let exact = cir_flow_uniform(&model, *t);
        assert!((p - exact).abs() <= h.max(1e-12), "t = {t}: {p} vs {exact}");
    }
    assert_eq!(ir.meta.get("seed").map(String::as_str), Some("3"));
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let ch = large_duct(1e-10);
    let rx = ReceiverVolume::scaled(&ch, 200.0 * UM).unwrap();
    let times = [0.05, 0.1, 0.15, 0.2, 0.25];
    let cfg = SimConfig::new(
        ch,
        rx,
        ReleaseSpec::uniform(3000).unwrap(),
        2e-3,
        0.25,
        11,
        &times,
    )
    .unwrap();
    let a = run_with(&cfg, 3000, Exec::Sequential);
    let b = run_with(&cfg, 3000, Exec::default());
    assert_eq!(a, b);
    let sa = simulate_snapshots(&cfg, Exec::Sequential).unwrap();
    let sb = simulate_snapshots(&cfg, Exec::default()).unwrap();
    assert_eq!(sa, sb);
}

#[test]
fn small_duct_is_dispersive_and_spreads_like_taylor() {
    let ch = DuctChannelConfig::with_mean_velocity(10.0 * UM, 1e-10, 1e-3).unwrap();
    let rx = ReceiverVolume::scaled(&ch, 800.0 * UM).unwrap();
    assert_eq!(classify_regime(&ch, &rx).regime, Regime::Dispersion);
    let cfg = SimConfig::new(
        ch,
        rx,
        ReleaseSpec::uniform(5000).unwrap(),
        2e-3,
        0.6,
        5,
        &[0.6],
    )
    .unwrap();
    let snaps = simulate_snapshots(&cfg, Exec::default()).unwrap();
    let (mean, var) = snaps[0].axial_moments();
    assert!((mean / 6e-4 - 1.0).abs() < 0.05, "mean {mean}");
    let expected = 2.0 * effective_diffusion(&ch).unwrap() * 0.6;
    assert!(
        (var / expected - 1.0).abs() < 0.2,
        "variance ratio {}",
        var / expected
    );
}

#[test]
fn link_over_a_dispersion_channel() {
    let ch = DuctChannelConfig::with_mean_velocity(10.0 * UM, 1e-10, 1e-3).unwrap();
    let rx = ReceiverVolume::scaled(&ch, 200.0 * UM).unwrap();
    let model = DispersionModel::new(&ch, &rx).unwrap();
    let t0 = 0.2;
    assert!(cir_dispersion(&model, &rx, t0) > 0.0);
    let link = OokLinkConfig::new(Cir::Dispersion { model, rx }, 500, 0.4, 5, t0, 2.0, 0).unwrap();
    let (xi, best) =
        optimal_threshold(&link, SerMethod::BinomialAnalytic, Exec::default()).unwrap();
    assert!(xi > 0);
    let link = link.with_threshold(xi).unwrap();
    let exact = ser_analytic(&link, SerMethod::BinomialAnalytic, Exec::Sequential).unwrap();
    assert_eq!(exact.ser, best.ser);
    let mc = ser_monte_carlo(&link, 4000, 9, SerMethod::MonteCarloCounts, Exec::default()).unwrap();
    let sigma = (exact.ser * (1.0 - exact.ser) / 20_000.0).sqrt();
    assert!(
        (mc.ser - exact.ser).abs() <= 4.0 * sigma + 1e-4,
        "{} vs {}",
        mc.ser,
        exact.ser
    );
}

#[test]
fn particle_monte_carlo_runs_end_to_end() {
    let ch = large_duct(1e-12);
    let rx = ReceiverVolume::scaled(&ch, 200.0 * UM).unwrap();
    let model = FlowModel::new(&ch, &rx).unwrap();
    let physical = ParticleChannel {
        channel: ch,
        rx,
        release: ReleaseSpec::uniform(1).unwrap(),
        time_step: 5e-3,
    };
    let link = OokLinkConfig::new(Cir::FlowUniform(model), 200, 0.25, 3, model.t2, 1.0, 6)
        .unwrap()
        .with_physical(physical)
        .unwrap();
    let a = ser_monte_carlo(
        &link,
        40,
        2,
        SerMethod::MonteCarloParticles,
        Exec::Sequential,
    )
    .unwrap();
    let b = ser_monte_carlo(
        &link,
        40,
        2,
        SerMethod::MonteCarloParticles,
        Exec::default(),
    )
    .unwrap();
    assert_eq!(a, b);
    assert!(a.ser < 0.2, "ser {}", a.ser);
    assert_eq!(a.per_symbol_errors.len(), 3);
}
