//! Particle-based Monte Carlo simulation of advection and diffusion in the
//! duct.
//!
//! Each particle follows the Euler–Maruyama discretisation
//!
//! ```text
//! x ← x + v(r) Δt + √(2DΔt) ξ₀,   y ← y + √(2DΔt) ξ₁,   z ← z + √(2DΔt) ξ₂
//! ```
//!
//! with the velocity taken at the pre-step radius, followed by specular
//! reflection at the wall `r = a`. The normals for particle `i` in step `n`
//! come from one counter-based block keyed by the seed, so a particle's
//! trajectory is independent of every other particle and of how the
//! ensemble is partitioned across workers.

use std::f64::consts::PI;

use crate::cir::{config_hash, ImpulseResponse};
use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::model::{
    point_in_receiver, DuctChannelConfig, ReceiverVolume, ReleaseKind, ReleaseSpec,
};
use crate::rng::{self, Domain};

/// Particles per work item. Fixed so that partitioning never depends on
/// the thread count.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    channel: DuctChannelConfig,
    rx: ReceiverVolume,
    release: ReleaseSpec,
    time_step: f64,
    horizon: f64,
    seed: u64,
    requested_times: Vec<f64>,
    sample_steps: Vec<u64>,
}

impl SimConfig {
    /// Sample times are snapped to the nearest multiple of `time_step`; the
    /// requested values are kept for provenance.
    pub fn new(
        channel: DuctChannelConfig,
        rx: ReceiverVolume,
        release: ReleaseSpec,
        time_step: f64,
        horizon: f64,
        seed: u64,
        sample_times: &[f64],
    ) -> Result<Self> {
        if !(time_step > 0.0 && time_step.is_finite()) {
            return Err(domain("time_step", time_step, "must be positive"));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(domain("horizon", horizon, "must be non-negative"));
        }
        if rx.duct_radius() != channel.radius() {
            return Err(Error::Invalid(
                "receiver was validated against a different duct radius".into(),
            ));
        }
        if let ReleaseKind::Point { r0, .. } = release.kind() {
            if r0 > channel.radius() {
                return Err(domain("r0", r0, "must lie in [0, a]"));
            }
        }
        let horizon_steps = (horizon / time_step * (1.0 + 1e-12)).floor() as u64;
        let mut sample_steps = Vec::with_capacity(sample_times.len());
        for &t in sample_times {
            if !(t >= 0.0) {
                return Err(domain("sample time", t, "must be non-negative"));
            }
            let step = (t / time_step).round() as u64;
            if step > horizon_steps {
                return Err(domain("sample time", t, "must not exceed the horizon"));
            }
            if sample_steps.last().is_some_and(|&prev| step <= prev) {
                return Err(domain(
                    "sample time",
                    t,
                    "sample times must be increasing and at least one time step apart",
                ));
            }
            sample_steps.push(step);
        }
        Ok(SimConfig {
            channel,
            rx,
            release,
            time_step,
            horizon,
            seed,
            requested_times: sample_times.to_vec(),
            sample_steps,
        })
    }

    pub fn channel(&self) -> &DuctChannelConfig {
        &self.channel
    }

    pub fn rx(&self) -> &ReceiverVolume {
        &self.rx
    }

    pub fn release(&self) -> &ReleaseSpec {
        &self.release
    }

    pub fn time_step(&self) -> f64 {
        self.time_step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn requested_times(&self) -> &[f64] {
        &self.requested_times
    }

    pub fn sample_steps(&self) -> &[u64] {
        &self.sample_steps
    }

    /// Snapped sample times.
    pub fn sample_times(&self) -> Vec<f64> {
        self.sample_steps
            .iter()
            .map(|&n| n as f64 * self.time_step)
            .collect()
    }
}

/// Positions after `steps_taken` steps of a common time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<[f64; 3]>,
    pub steps_taken: u64,
}

/// Per-particle observation counts at the sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_tx: u64,
}

impl ObservationSeries {
    /// Observed fractions with normal-approximation binomial half-widths
    /// `z √(p(1-p)/n)`.
    pub fn to_impulse_response(&self, config: &SimConfig, z: f64) -> Result<ImpulseResponse> {
        let n = self.n_tx.max(1) as f64;
        let values: Vec<f64> = self.counts.iter().map(|&c| c as f64 / n).collect();
        let half_widths = values
            .iter()
            .map(|&p| z * (p * (1.0 - p) / n).sqrt())
            .collect();
        Ok(
            ImpulseResponse::simulated(self.times.clone(), values, half_widths)?
                .with_meta("seed", config.seed())
                .with_meta("config_hash", config_hash(config))
                .with_meta("n_tx", self.n_tx)
                .with_meta("confidence_z", z)
                .with_meta("time_step", config.time_step()),
        )
    }
}

/// Folds a point that left the disk back inside by specular reflection
/// about the circle `r = a`, repeating while it is still outside.
#[inline]
pub fn reflect_into_disk(y: f64, z: f64, a: f64) -> (f64, f64) {
    let r = y.hypot(z);
    if r <= a {
        return (y, z);
    }
    let (mut uy, mut uz) = (y / r, z / r);
    let mut r = r;
    while r > a {
        r = 2.0 * a - r;
        if r < 0.0 {
            r = -r;
            uy = -uy;
            uz = -uz;
        }
    }
    let (mut y, mut z) = (r * uy, r * uz);
    // rounding in r·u may land one ulp outside
    while y * y + z * z > a * a {
        y *= 1.0 - f64::EPSILON;
        z *= 1.0 - f64::EPSILON;
    }
    (y, z)
}

/// Initial position of one particle. Uniform releases are uniform in `r²`
/// and `φ`, i.e. uniform over the disk.
#[inline]
pub(crate) fn initial_position(
    release: &ReleaseSpec,
    radius: f64,
    key: [u64; 2],
    particle: u64,
    group: [u64; 2],
) -> [f64; 3] {
    match release.kind() {
        ReleaseKind::Point { r0, phi0 } => [0.0, r0 * phi0.cos(), r0 * phi0.sin()],
        ReleaseKind::UniformCrossSection => {
            let w = rng::philox4x64([particle, group[0], group[1], 0], key);
            let r = radius * rng::unit_open_high(w[0]).sqrt();
            let phi = PI - 2.0 * PI * rng::unit_open_high(w[1]);
            let (s, c) = phi.sin_cos();
            let (y, z) = reflect_into_disk(r * c, r * s, radius);
            [0.0, y, z]
        }
    }
}

/// Initial positions of `n` particles, all at `x = 0`.
pub fn initial_positions(
    release: &ReleaseSpec,
    channel: &DuctChannelConfig,
    n: usize,
    seed: u64,
    exec: Exec,
) -> Vec<[f64; 3]> {
    let key = rng::key(seed, Domain::Release);
    exec.map_indexed(n, |i| {
        initial_position(release, channel.radius(), key, i as u64, [0, 0])
    })
}

/// One Euler–Maruyama step for single particles.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stepper {
    channel: DuctChannelConfig,
    dt: f64,
    noise_scale: f64,
    key: [u64; 2],
}

impl Stepper {
    pub(crate) fn new(channel: &DuctChannelConfig, dt: f64, seed: u64) -> Self {
        Stepper {
            channel: *channel,
            dt,
            noise_scale: (2.0 * channel.diffusion() * dt).sqrt(),
            key: rng::key(seed, Domain::StepNoise),
        }
    }

    #[inline]
    pub(crate) fn advance(
        &self,
        p: [f64; 3],
        particle: u64,
        step: u64,
        group: [u64; 2],
    ) -> [f64; 3] {
        let [x, y, z] = p;
        let v = self.channel.velocity_unchecked(y * y + z * z);
        if self.noise_scale == 0.0 {
            return [x + v * self.dt, y, z];
        }
        let n = rng::normal_triplet(self.key, particle, step, group);
        let s = self.noise_scale;
        let (y, z) = reflect_into_disk(y + s * n[1], z + s * n[2], self.channel.radius());
        [x + v * self.dt + s * n[0], y, z]
    }
}

#[inline]
pub(crate) fn observed(rx: &ReceiverVolume, p: [f64; 3]) -> bool {
    let [x, y, z] = p;
    if (x - rx.distance()).abs() > rx.extent_x() / 2.0 {
        return false;
    }
    point_in_receiver(rx, x, y.hypot(z), z.atan2(y))
}

/// Follows one particle from `start` (at step 0) and calls `visit(j, pos)`
/// at each of the increasing step indices `record_steps[j]`.
#[inline]
pub(crate) fn trace<F: FnMut(usize, [f64; 3])>(
    stepper: &Stepper,
    start: [f64; 3],
    particle: u64,
    group: [u64; 2],
    record_steps: &[u64],
    mut visit: F,
) {
    let mut pos = start;
    let mut step = 0u64;
    for (j, &target) in record_steps.iter().enumerate() {
        while step < target {
            pos = stepper.advance(pos, particle, step, group);
            step += 1;
        }
        visit(j, pos);
    }
}

impl ParticleEnsemble {
    /// The released ensemble at `t = 0`.
    pub fn release(config: &SimConfig, exec: Exec) -> Self {
        ParticleEnsemble {
            positions: initial_positions(
                config.release(),
                config.channel(),
                config.release().n_tx() as usize,
                config.seed(),
                exec,
            ),
            steps_taken: 0,
        }
    }

    /// Advances every particle by one step. The noise of particle `i` is
    /// addressed by `(seed, i, steps_taken)`, so stepping the ensemble
    /// reproduces [`run`] and [`simulate_snapshots`] exactly.
    pub fn step(&mut self, channel: &DuctChannelConfig, time_step: f64, seed: u64, exec: Exec) {
        let stepper = Stepper::new(channel, time_step, seed);
        let step = self.steps_taken;
        let positions = &self.positions;
        self.positions = exec.map_indexed(positions.len(), |i| {
            stepper.advance(positions[i], i as u64, step, [0, 0])
        });
        self.steps_taken += 1;
    }

    /// `(x, r²)` for every particle.
    pub fn snapshot(&self) -> Vec<(f64, f64)> {
        self.positions
            .iter()
            .map(|&[x, y, z]| (x, y * y + z * z))
            .collect()
    }

    /// Mean and (population) variance of the axial positions.
    pub fn axial_moments(&self) -> (f64, f64) {
        let n = self.positions.len() as f64;
        let mean = self.positions.iter().map(|p| p[0]).sum::<f64>() / n;
        let var = self
            .positions
            .iter()
            .map(|p| (p[0] - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var)
    }
}

/// Runs the configured release and counts the particles inside the
/// receiver at every sample time.
pub fn run(config: &SimConfig) -> ObservationSeries {
    run_with(config, config.release().n_tx(), Exec::default())
}

/// [`run`] with an explicit particle count (zero allowed) and strategy.
pub fn run_with(config: &SimConfig, n_particles: u64, exec: Exec) -> ObservationSeries {
    let stepper = Stepper::new(config.channel(), config.time_step(), config.seed());
    let release_key = rng::key(config.seed(), Domain::Release);
    let steps = config.sample_steps();
    let radius = config.channel().radius();
    let rx = config.rx();
    let counts = exec.sum_counts(n_particles as usize, CHUNK, steps.len(), |range| {
        let mut local = vec![0u64; steps.len()];
        for i in range {
            let start = initial_position(config.release(), radius, release_key, i as u64, [0, 0]);
            trace(&stepper, start, i as u64, [0, 0], steps, |j, p| {
                if observed(rx, p) {
                    local[j] += 1;
                }
            });
        }
        local
    });
    ObservationSeries {
        times: config.sample_times(),
        counts,
        n_tx: n_particles,
    }
}

/// Ensembles at each sample time of `config`, computed particle by
/// particle.
pub fn simulate_snapshots(config: &SimConfig, exec: Exec) -> Result<Vec<ParticleEnsemble>> {
    let n = config.release().n_tx() as usize;
    let steps = config.sample_steps();
    let bytes = n
        .checked_mul(steps.len())
        .and_then(|m| m.checked_mul(std::mem::size_of::<[f64; 3]>()));
    let mut probe: Vec<[f64; 3]> = Vec::new();
    if bytes.is_none() || probe.try_reserve_exact(n * steps.len()).is_err() {
        return Err(Error::ResourceExhausted(format!(
            "{n} particles × {} snapshots do not fit in memory",
            steps.len()
        )));
    }
    drop(probe);

    let stepper = Stepper::new(config.channel(), config.time_step(), config.seed());
    let release_key = rng::key(config.seed(), Domain::Release);
    let radius = config.channel().radius();
    let tracks = exec.map_indexed(n, |i| {
        let mut out = Vec::with_capacity(steps.len());
        let start = initial_position(config.release(), radius, release_key, i as u64, [0, 0]);
        trace(&stepper, start, i as u64, [0, 0], steps, |_, p| out.push(p));
        out
    });
    Ok(steps
        .iter()
        .enumerate()
        .map(|(j, &s)| ParticleEnsemble {
            positions: tracks.iter().map(|track| track[j]).collect(),
            steps_taken: s,
        })
        .collect())
}
