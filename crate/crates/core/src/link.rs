//! On-off keying over the duct: threshold detection and symbol error rate.
//!
//! Symbol `k` releases `n_tx` particles at `kT` when `a[k] = 1`. The receiver
//! counts the particles in its volume once per symbol, at `t0 + iT`, adds
//! external noise molecules and decides `1` iff the count reaches the
//! threshold `ξ`. The count for symbol `i` depends on the transmitted
//! symbols `a[0..=i]`.
//!
//! The analytic SER averages the per-symbol error probability over all
//! `2^K` equally likely sequences, modelling counts at different sampling
//! instants as independent. Counts are either approximated by a Poisson law
//! with the expected count as mean, or composed exactly from one binomial
//! term per earlier release plus Poisson noise.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::cir::Cir;
use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::math::CountDistribution;
use crate::model::{DuctChannelConfig, ReceiverVolume, ReleaseSpec};
use crate::rng::{self, CounterRng, Domain};
use crate::sim::{initial_position, observed, trace, Stepper};

/// Longest sequence the analytic SER will enumerate.
pub const MAX_ENUMERATED_SYMBOLS: usize = 20;

/// Work items per chunk in the reductions over prefixes and realizations.
const CHUNK: usize = 64;

/// Physical description used by the particle-based Monte Carlo mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleChannel {
    pub channel: DuctChannelConfig,
    pub rx: ReceiverVolume,
    /// Release pattern. Its `n_tx` is ignored in favour of the link's.
    pub release: ReleaseSpec,
    pub time_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OokLinkConfig {
    symbol_interval: f64,
    seq_len: usize,
    detection_delay: f64,
    threshold: u64,
    noise_mean: f64,
    n_tx: u64,
    cir: Cir,
    physical: Option<ParticleChannel>,
}

impl OokLinkConfig {
    pub fn new(
        cir: Cir,
        n_tx: u64,
        symbol_interval: f64,
        seq_len: usize,
        detection_delay: f64,
        noise_mean: f64,
        threshold: u64,
    ) -> Result<Self> {
        if !(symbol_interval > 0.0 && symbol_interval.is_finite()) {
            return Err(domain("T", symbol_interval, "must be positive"));
        }
        if seq_len == 0 {
            return Err(domain("K", 0.0, "must be at least 1"));
        }
        if !(detection_delay >= 0.0 && detection_delay.is_finite()) {
            return Err(domain("t0", detection_delay, "must be non-negative"));
        }
        if !(noise_mean >= 0.0 && noise_mean.is_finite()) {
            return Err(domain("noise mean", noise_mean, "must be non-negative"));
        }
        if n_tx == 0 {
            return Err(domain("n_tx", 0.0, "must be at least 1"));
        }
        if threshold > n_tx {
            return Err(domain(
                "threshold",
                threshold as f64,
                "must lie in {0, ..., n_tx}",
            ));
        }
        Ok(OokLinkConfig {
            symbol_interval,
            seq_len,
            detection_delay,
            threshold,
            noise_mean,
            n_tx,
            cir,
            physical: None,
        })
    }

    pub fn with_threshold(mut self, threshold: u64) -> Result<Self> {
        if threshold > self.n_tx {
            return Err(domain(
                "threshold",
                threshold as f64,
                "must lie in {0, ..., n_tx}",
            ));
        }
        self.threshold = threshold;
        Ok(self)
    }

    /// Changes `n_tx`, clamping the threshold into the new range.
    pub fn with_n_tx(mut self, n_tx: u64) -> Result<Self> {
        if n_tx == 0 {
            return Err(domain("n_tx", 0.0, "must be at least 1"));
        }
        self.n_tx = n_tx;
        self.threshold = self.threshold.min(n_tx);
        Ok(self)
    }

    pub fn with_seq_len(mut self, seq_len: usize) -> Result<Self> {
        if seq_len == 0 {
            return Err(domain("K", 0.0, "must be at least 1"));
        }
        self.seq_len = seq_len;
        Ok(self)
    }

    pub fn with_physical(mut self, physical: ParticleChannel) -> Result<Self> {
        if !(physical.time_step > 0.0 && physical.time_step.is_finite()) {
            return Err(domain("time_step", physical.time_step, "must be positive"));
        }
        self.physical = Some(physical);
        Ok(self)
    }

    pub fn symbol_interval(&self) -> f64 {
        self.symbol_interval
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn detection_delay(&self) -> f64 {
        self.detection_delay
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn noise_mean(&self) -> f64 {
        self.noise_mean
    }

    pub fn n_tx(&self) -> u64 {
        self.n_tx
    }

    pub fn cir(&self) -> &Cir {
        &self.cir
    }

    pub fn physical(&self) -> Option<&ParticleChannel> {
        self.physical.as_ref()
    }

    /// `P_ob(t0 + mT)` for `m = 0..K`: the contribution of a release `m`
    /// symbols before the sampling instant.
    pub fn isi_taps(&self) -> Vec<f64> {
        (0..self.seq_len)
            .map(|m| {
                self.cir
                    .p_ob(self.detection_delay + m as f64 * self.symbol_interval)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SerMethod {
    PoissonAnalytic,
    BinomialAnalytic,
    MonteCarloCounts,
    MonteCarloParticles,
}

impl SerMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SerMethod::PoissonAnalytic => "poisson_analytic",
            SerMethod::BinomialAnalytic => "binomial_analytic",
            SerMethod::MonteCarloCounts => "monte_carlo_counts",
            SerMethod::MonteCarloParticles => "monte_carlo_particles",
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(
            self,
            SerMethod::PoissonAnalytic | SerMethod::BinomialAnalytic
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerResult {
    pub ser: f64,
    /// Error probability (or frequency) of symbol `i`, averaged over
    /// sequences.
    pub per_symbol_errors: Vec<f64>,
    pub threshold_used: u64,
    pub method: SerMethod,
}

/// Expected count at time `t`: `n_tx Σ_k a[k] P_ob(t − kT) + N̄_n`.
pub fn mean_signal(link: &OokLinkConfig, sequence: &[bool], t: f64) -> f64 {
    let signal: f64 = sequence
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .map(|(k, _)| link.cir.p_ob(t - k as f64 * link.symbol_interval))
        .sum();
    link.n_tx as f64 * signal + link.noise_mean
}

#[inline]
pub fn detect(count: u64, threshold: u64) -> bool {
    count >= threshold
}

/// Error probability of symbol `i` under the Poisson approximation, given
/// `sequence[0..=i]`.
pub fn symbol_error_prob_poisson(link: &OokLinkConfig, sequence: &[bool], i: usize) -> Result<f64> {
    if i >= sequence.len() {
        return Err(Error::Invalid(format!(
            "symbol index {i} outside a sequence of length {}",
            sequence.len()
        )));
    }
    let lambda = mean_signal(
        link,
        &sequence[..=i],
        link.detection_delay + i as f64 * link.symbol_interval,
    );
    let dist = CountDistribution::poisson(lambda);
    Ok(symbol_error(&dist, sequence[i], link.threshold))
}

#[inline]
fn symbol_error(dist: &CountDistribution, sent: bool, threshold: u64) -> f64 {
    if sent {
        dist.prob_below(threshold as usize)
    } else {
        dist.prob_at_least(threshold as usize)
    }
}

/// Count distribution at the sampling instant of the last symbol of
/// `prefix`, where bit `k` of `prefix` is `a[k]` and `len` is `i + 1`.
fn prefix_distribution(
    link: &OokLinkConfig,
    taps: &[f64],
    binomials: &[CountDistribution],
    prefix: usize,
    len: usize,
    method: SerMethod,
) -> CountDistribution {
    let i = len - 1;
    let active = (0..len).filter(|k| prefix >> k & 1 == 1);
    match method {
        SerMethod::PoissonAnalytic => {
            let signal: f64 = active.map(|k| taps[i - k]).sum();
            CountDistribution::poisson(link.n_tx as f64 * signal + link.noise_mean)
        }
        _ => active.fold(CountDistribution::poisson(link.noise_mean), |acc, k| {
            acc.convolve(&binomials[i - k])
        }),
    }
}

struct PrefixTables<'a> {
    link: &'a OokLinkConfig,
    taps: Vec<f64>,
    binomials: Vec<CountDistribution>,
    method: SerMethod,
}

impl<'a> PrefixTables<'a> {
    fn new(link: &'a OokLinkConfig, method: SerMethod) -> Result<Self> {
        if !method.is_analytic() {
            return Err(Error::Invalid(format!(
                "{} is not an analytic method",
                method.as_str()
            )));
        }
        if link.seq_len > MAX_ENUMERATED_SYMBOLS {
            return Err(Error::SequenceTooLong(link.seq_len));
        }
        let taps = link.isi_taps();
        let binomials = match method {
            SerMethod::BinomialAnalytic => taps
                .iter()
                .map(|&p| CountDistribution::binomial(link.n_tx, p))
                .collect(),
            _ => Vec::new(),
        };
        Ok(PrefixTables {
            link,
            taps,
            binomials,
            method,
        })
    }

    /// Prefixes are numbered level by level: `(i, prefix)` has the flat
    /// index `2^(i+1) − 2 + prefix`.
    fn count(&self) -> usize {
        (1usize << (self.link.seq_len + 1)) - 2
    }

    fn locate(flat: usize) -> (usize, usize) {
        let len = (usize::BITS - (flat + 2).leading_zeros() - 1) as usize;
        (len, flat + 2 - (1 << len))
    }

    fn distribution(&self, len: usize, prefix: usize) -> CountDistribution {
        prefix_distribution(
            self.link,
            &self.taps,
            &self.binomials,
            prefix,
            len,
            self.method,
        )
    }
}

/// Analytic SER at the configured threshold, averaging over all `2^K`
/// sequences the mean per-symbol error of each sequence.
pub fn ser_analytic(link: &OokLinkConfig, method: SerMethod, exec: Exec) -> Result<SerResult> {
    let tables = PrefixTables::new(link, method)?;
    let k = link.seq_len;
    let xi = link.threshold;
    let errors: Vec<f64> = exec.map_indexed(tables.count(), |flat| {
        let (len, prefix) = PrefixTables::locate(flat);
        let dist = tables.distribution(len, prefix);
        symbol_error(&dist, prefix >> (len - 1) & 1 == 1, xi)
    });
    let error_of = |i: usize, seq: usize| errors[(1 << (i + 1)) - 2 + (seq & ((1 << (i + 1)) - 1))];

    let n_seq = 1usize << k;
    let per_sequence = exec.map_indexed(n_seq, |seq| {
        (0..k).map(|i| error_of(i, seq)).sum::<f64>() / k as f64
    });
    let ser = per_sequence.iter().sum::<f64>() / n_seq as f64;

    let per_symbol_errors = (0..k)
        .map(|i| (0..n_seq).map(|seq| error_of(i, seq)).sum::<f64>() / n_seq as f64)
        .collect();
    Ok(SerResult {
        ser: ser.clamp(0.0, 1.0),
        per_symbol_errors,
        threshold_used: xi,
        method,
    })
}

/// Analytic SER for every threshold `ξ ∈ {0, …, n_tx}`.
pub fn ser_curve(link: &OokLinkConfig, method: SerMethod, exec: Exec) -> Result<Vec<f64>> {
    let tables = PrefixTables::new(link, method)?;
    let width = link.n_tx as usize + 1;
    let cells = (tables.count() as u128) * width as u128;
    if cells > 1 << 36 {
        return Err(Error::ResourceExhausted(format!(
            "threshold search over {width} values for {} symbols",
            link.seq_len
        )));
    }
    let k = link.seq_len as f64;
    Ok(exec.sum_f64(tables.count(), CHUNK, width, |range| {
        let mut acc = vec![0.0; width];
        for flat in range {
            let (len, prefix) = PrefixTables::locate(flat);
            let dist = tables.distribution(len, prefix);
            let sent = prefix >> (len - 1) & 1 == 1;
            let weight = 1.0 / ((1u64 << len) as f64 * k);
            for (xi, slot) in acc.iter_mut().enumerate() {
                *slot += weight * symbol_error(&dist, sent, xi as u64);
            }
        }
        acc
    }))
}

/// Full search for the threshold minimising the analytic SER. Ties go to
/// the smallest threshold.
pub fn optimal_threshold(
    link: &OokLinkConfig,
    method: SerMethod,
    exec: Exec,
) -> Result<(u64, SerResult)> {
    let curve = ser_curve(link, method, exec)?;
    let mut best = 0;
    for (xi, &s) in curve.iter().enumerate() {
        if s < curve[best] {
            best = xi;
        }
    }
    let tuned = link.clone().with_threshold(best as u64)?;
    Ok((best as u64, ser_analytic(&tuned, method, exec)?))
}

fn random_sequence(seed: u64, realization: u64, k: usize) -> Vec<bool> {
    let mut rng = CounterRng::new(seed, Domain::SerSequence, realization);
    (0..k).map(|_| rng.random::<bool>()).collect()
}

fn poisson_draw<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean)
            .expect("finite positive mean")
            .sample(rng) as u64
    } else {
        0
    }
}

/// Monte Carlo SER at the configured threshold. Each realization draws a
/// uniform random sequence and simulates the counts either by sampling the
/// count model directly or by tracking particles.
pub fn ser_monte_carlo(
    link: &OokLinkConfig,
    realizations: u64,
    seed: u64,
    method: SerMethod,
    exec: Exec,
) -> Result<SerResult> {
    if realizations == 0 {
        return Err(domain("realizations", 0.0, "must be at least 1"));
    }
    let k = link.seq_len;
    let counts = match method {
        SerMethod::MonteCarloCounts => {
            let taps = link.isi_taps();
            exec.sum_counts(realizations as usize, CHUNK, k, |range| {
                let mut errors = vec![0u64; k];
                for r in range {
                    let seq = random_sequence(seed, r as u64, k);
                    let mut rng = CounterRng::new(seed, Domain::SerNoise, r as u64);
                    for i in 0..k {
                        let mut count = poisson_draw(&mut rng, link.noise_mean);
                        for j in (0..=i).filter(|&j| seq[j]) {
                            let p = taps[i - j];
                            if p > 0.0 {
                                count += Binomial::new(link.n_tx, p)
                                    .expect("p in [0, 1]")
                                    .sample(&mut rng);
                            }
                        }
                        if detect(count, link.threshold) != seq[i] {
                            errors[i] += 1;
                        }
                    }
                }
                errors
            })
        }
        SerMethod::MonteCarloParticles => {
            let phys = link.physical.as_ref().ok_or_else(|| {
                Error::Invalid("particle-based SER needs a physical channel description".into())
            })?;
            particle_errors(link, phys, realizations, seed, exec)
        }
        _ => {
            return Err(Error::Invalid(format!(
                "{} is not a Monte Carlo method",
                method.as_str()
            )))
        }
    };
    let per_symbol_errors: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / realizations as f64)
        .collect();
    let total: u64 = counts.iter().sum();
    Ok(SerResult {
        ser: total as f64 / (realizations as f64 * k as f64),
        per_symbol_errors,
        threshold_used: link.threshold,
        method,
    })
}

/// Per-symbol error counts with every particle tracked. The particles of
/// release `k` in realization `r` are stream group `[k, r]`, so each
/// particle is observed consistently at all later sampling instants.
fn particle_errors(
    link: &OokLinkConfig,
    phys: &ParticleChannel,
    realizations: u64,
    seed: u64,
    exec: Exec,
) -> Vec<u64> {
    let k = link.seq_len;
    let stepper = Stepper::new(&phys.channel, phys.time_step, seed);
    let release_key = rng::key(seed, Domain::Release);
    let radius = phys.channel.radius();
    // sampling steps for a release m symbols before the sample
    let lag_steps: Vec<u64> = (0..k)
        .map(|m| {
            ((link.detection_delay + m as f64 * link.symbol_interval) / phys.time_step).round()
                as u64
        })
        .collect();
    exec.sum_counts(realizations as usize, 1, k, |range| {
        let mut errors = vec![0u64; k];
        for r in range {
            let seq = random_sequence(seed, r as u64, k);
            let mut signal = vec![0u64; k];
            for j in (0..k).filter(|&j| seq[j]) {
                let steps = &lag_steps[..k - j];
                for p in 0..link.n_tx {
                    let group = [j as u64, r as u64];
                    let start = initial_position(&phys.release, radius, release_key, p, group);
                    trace(&stepper, start, p, group, steps, |m, pos| {
                        if observed(&phys.rx, pos) {
                            signal[j + m] += 1;
                        }
                    });
                }
            }
            let mut rng = CounterRng::new(seed, Domain::SerNoise, r as u64);
            for i in 0..k {
                let count = signal[i] + poisson_draw(&mut rng, link.noise_mean);
                if detect(count, link.threshold) != seq[i] {
                    errors[i] += 1;
                }
            }
        }
        errors
    })
}
