//! Closed-form channel impulse responses and the quadrature oracles that
//! check them.
//!
//! The impulse response `P_ob(t)` is the probability that one released
//! particle is inside the receiver at time `t`. Two regimes admit closed
//! forms:
//!
//! * dispersion (`Pe ≪ 4 d/a`): cross-sectional diffusion homogenises the
//!   particle cloud, which then spreads axially as a Gaussian with the
//!   Taylor–Aris coefficient [`effective_diffusion`];
//! * flow-dominated (`Pe ≫ 4 d/a`): particles ride the paraboloid
//!   `x = v(r) t`, giving [`cir_flow_uniform`] and [`cir_flow_point`].

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Debug;

use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::math::{adaptive_simpson_with_breaks, q_function};
use crate::model::{
    point_in_receiver, rx_area_fraction, velocity_at, DuctChannelConfig, ReceiverVolume,
    ReleaseKind, ReleaseSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelTag {
    DispersionUniform,
    FlowUniform,
    FlowPoint,
    SimulatedMC,
    QuadratureOracle,
}

impl ModelTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelTag::DispersionUniform => "dispersion_uniform",
            ModelTag::FlowUniform => "flow_uniform",
            ModelTag::FlowPoint => "flow_point",
            ModelTag::SimulatedMC => "simulated_mc",
            ModelTag::QuadratureOracle => "quadrature_oracle",
        }
    }
}

/// A sampled impulse response with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    times: Vec<f64>,
    values: Vec<f64>,
    half_widths: Option<Vec<f64>>,
    model_tag: ModelTag,
    pub meta: BTreeMap<String, String>,
}

impl ImpulseResponse {
    /// An analytical or oracle response. Simulated responses must use
    /// [`ImpulseResponse::simulated`] so they carry confidence bounds.
    pub fn new(times: Vec<f64>, values: Vec<f64>, model_tag: ModelTag) -> Result<Self> {
        if model_tag == ModelTag::SimulatedMC {
            return Err(Error::Invalid(
                "simulated responses must carry confidence half-widths".into(),
            ));
        }
        Self::build(times, values, None, model_tag)
    }

    pub fn simulated(times: Vec<f64>, values: Vec<f64>, half_widths: Vec<f64>) -> Result<Self> {
        if half_widths.len() != values.len() || half_widths.iter().any(|h| !(*h >= 0.0)) {
            return Err(Error::Invalid(
                "one non-negative half-width per sample is required".into(),
            ));
        }
        Self::build(times, values, Some(half_widths), ModelTag::SimulatedMC)
    }

    /// Samples `f` on `times`.
    pub fn sample<F: Fn(f64) -> f64>(times: &[f64], model_tag: ModelTag, f: F) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times.to_vec(), values, model_tag)
    }

    fn build(
        times: Vec<f64>,
        values: Vec<f64>,
        half_widths: Option<Vec<f64>>,
        model_tag: ModelTag,
    ) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Invalid(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("times must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(domain("probability", *v, "must lie in [0, 1]"));
        }
        Ok(ImpulseResponse {
            times,
            values,
            half_widths,
            model_tag,
            meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn half_widths(&self) -> Option<&[f64]> {
        self.half_widths.as_deref()
    }

    pub fn model_tag(&self) -> ModelTag {
        self.model_tag
    }

    /// Largest sample and its time (first occurrence).
    pub fn peak(&self) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((t, v));
            }
        }
        best
    }

    /// Linear interpolation between samples; zero outside the sampled range.
    pub fn interpolate(&self, t: f64) -> f64 {
        let (first, last) = match (self.times.first(), self.times.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => return 0.0,
        };
        if t < first || t > last {
            return 0.0;
        }
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.values[0];
        }
        if i == self.times.len() {
            return self.values[i - 1];
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        self.values[i - 1] * (1.0 - w) + self.values[i] * w
    }
}

/// Short stable digest of a configuration's debug rendering. `f64` debug
/// output is shortest-round-trip, so equal configurations hash equally.
pub fn config_hash<T: Debug>(config: &T) -> String {
    let digest = Sha256::digest(format!("{config:?}").as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Taylor–Aris effective diffusion coefficient `D (1 + Pe²/48)`.
pub fn effective_diffusion(channel: &DuctChannelConfig) -> Result<f64> {
    let d = channel.diffusion();
    if d == 0.0 {
        return Err(Error::NoDiffusion);
    }
    let pe = channel.mean_velocity() * channel.radius() / d;
    Ok(d * (1.0 + pe * pe / 48.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionModel {
    pub d_eff: f64,
    pub mean_velocity: f64,
    /// `A_rx / a²`
    pub rx_fraction: f64,
}

impl DispersionModel {
    pub fn new(channel: &DuctChannelConfig, rx: &ReceiverVolume) -> Result<Self> {
        Ok(DispersionModel {
            d_eff: effective_diffusion(channel)?,
            mean_velocity: channel.mean_velocity(),
            rx_fraction: rx_area_fraction(rx),
        })
    }
}

/// Observation probability in the dispersion regime: the axial Gaussian
/// with variance `2 D_eff t`, integrated over the receiver's axial extent
/// and scaled by its cross-sectional share.
pub fn cir_dispersion(model: &DispersionModel, rx: &ReceiverVolume, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let sigma = (2.0 * model.d_eff * t).sqrt();
    let centre = model.mean_velocity * t;
    let half = rx.extent_x() / 2.0;
    let z_lo = (rx.distance() - half - centre) / sigma;
    let z_hi = (rx.distance() + half - centre) / sigma;
    // Evaluate in whichever tail keeps both Q values small.
    let mass = if z_lo + z_hi >= 0.0 {
        q_function(z_lo) - q_function(z_hi)
    } else {
        q_function(-z_hi) - q_function(-z_lo)
    };
    model.rx_fraction * mass.max(0.0)
}

/// Time of the maximum of the Gaussian density at `x = d`, used as the
/// peak-time estimate of [`cir_dispersion`].
///
/// Computed in the rationalised form `d² / (D_eff (1 + √(1 + v̄²d²/D_eff²)))`,
/// which is exact, stays accurate for small `v̄` and reduces to
/// `d² / (2 D_eff)` without flow.
pub fn dispersion_peak_time(model: &DispersionModel, d: f64) -> f64 {
    let ratio = model.mean_velocity * d / model.d_eff;
    d * d / (model.d_eff * (1.0 + (1.0 + ratio * ratio).sqrt()))
}

pub fn dispersion_peak_value(model: &DispersionModel, rx: &ReceiverVolume) -> f64 {
    cir_dispersion(model, rx, dispersion_peak_time(model, rx.distance()))
}

/// Receiver entry/exit times of the paraboloid front: `t₁,₂ = (d ∓ cx/2) /
/// (2 v̄ (1 − (1 − cr/a)²))`.
pub fn flow_transit_times(channel: &DuctChannelConfig, rx: &ReceiverVolume) -> Result<(f64, f64)> {
    let v = channel.mean_velocity();
    if v == 0.0 {
        return Err(Error::NoFlow);
    }
    let gap = 1.0 - rx.extent_r() / channel.radius();
    let denom = 2.0 * v * (1.0 - gap * gap);
    let half = rx.extent_x() / 2.0;
    Ok((
        (rx.distance() - half) / denom,
        (rx.distance() + half) / denom,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowModel {
    pub t1: f64,
    pub t2: f64,
    pub rx_fraction: f64,
    /// `cφ / 2π`
    pub angle_fraction: f64,
    pub mean_velocity: f64,
    pub distance: f64,
    pub extent_x: f64,
    pub extent_r: f64,
    pub radius: f64,
}

impl FlowModel {
    pub fn new(channel: &DuctChannelConfig, rx: &ReceiverVolume) -> Result<Self> {
        let (t1, t2) = flow_transit_times(channel, rx)?;
        Ok(FlowModel {
            t1,
            t2,
            rx_fraction: rx_area_fraction(rx),
            angle_fraction: rx.angle_fraction(),
            mean_velocity: channel.mean_velocity(),
            distance: rx.distance(),
            extent_x: rx.extent_x(),
            extent_r: rx.extent_r(),
            radius: channel.radius(),
        })
    }
}

/// Flow-only observation probability after a uniform release: zero until
/// the front reaches the receiver at `t₁`, rising to its maximum at `t₂`,
/// then decaying as `1/t`.
pub fn cir_flow_uniform(model: &FlowModel, t: f64) -> f64 {
    if t <= model.t1 {
        return 0.0;
    }
    let two_vt = 2.0 * model.mean_velocity * t;
    if t < model.t2 {
        let entering = model.angle_fraction * (model.distance - model.extent_x / 2.0) / two_vt;
        (model.rx_fraction - entering).max(0.0)
    } else {
        model.angle_fraction * model.extent_x / two_vt
    }
}

/// Flow-only observation probability after a point release at `(r0, φ0)`:
/// a rectangle in time when the release point lies in the receiver's radial
/// and azimuthal window, zero otherwise. A release on the wall never moves.
pub fn cir_flow_point(
    channel: &DuctChannelConfig,
    rx: &ReceiverVolume,
    release: &ReleaseSpec,
    t: f64,
) -> Result<f64> {
    let (r0, phi0) = match release.kind() {
        ReleaseKind::Point { r0, phi0 } => (r0, phi0),
        ReleaseKind::UniformCrossSection => return Err(Error::NotPointRelease),
    };
    if !rx.window_contains(r0, phi0) || t < 0.0 {
        return Ok(0.0);
    }
    let x = velocity_at(channel, r0)? * t;
    let half = rx.extent_x() / 2.0;
    let inside = rx.distance() - half <= x && x <= rx.distance() + half;
    Ok(if inside { 1.0 } else { 0.0 })
}

/// Time window `[start, end]` during which a flow-only point release is
/// observed, or `None` if it never is.
pub fn flow_point_window(
    channel: &DuctChannelConfig,
    rx: &ReceiverVolume,
    release: &ReleaseSpec,
) -> Result<Option<(f64, f64)>> {
    let (r0, phi0) = match release.kind() {
        ReleaseKind::Point { r0, phi0 } => (r0, phi0),
        ReleaseKind::UniformCrossSection => return Err(Error::NotPointRelease),
    };
    let v = velocity_at(channel, r0)?;
    if !rx.window_contains(r0, phi0) || v == 0.0 {
        return Ok(None);
    }
    let half = rx.extent_x() / 2.0;
    Ok(Some((
        (rx.distance() - half) / v,
        (rx.distance() + half) / v,
    )))
}

const FLOW_ORACLE_TOL: f64 = 1e-10;

/// Flow-only observation probability by direct quadrature of the receiver
/// indicator over the release distribution, with each particle placed at
/// `x = v(r) t`. Shares no algebra with [`cir_flow_uniform`].
pub fn oracle_cir_flow(
    channel: &DuctChannelConfig,
    rx: &ReceiverVolume,
    release: &ReleaseSpec,
    t: f64,
) -> Result<f64> {
    let a = channel.radius();
    match release.kind() {
        ReleaseKind::Point { r0, phi0 } => {
            let x = velocity_at(channel, r0)? * t.max(0.0);
            Ok(if point_in_receiver(rx, x, r0, phi0) {
                1.0
            } else {
                0.0
            })
        }
        ReleaseKind::UniformCrossSection => {
            // Uniform density 1/(π a²) over the disk; in ρ = r/a the
            // measure is ρ dρ dφ / π.
            let half_phi = (rx.extent_phi() / 2.0).min(PI);
            let phi_breaks = [-PI, -half_phi, half_phi, PI];
            let inner = |rho: f64| {
                let r = (rho * a).min(a);
                let x = channel.velocity_unchecked(r * r) * t;
                adaptive_simpson_with_breaks(
                    &|phi| {
                        if point_in_receiver(rx, x, r, phi) {
                            1.0
                        } else {
                            0.0
                        }
                    },
                    &phi_breaks,
                    FLOW_ORACLE_TOL,
                )
            };
            // The indicator jumps at the receiver's inner radius and where the
            // front position crosses either receiver face.
            let displacement = |rho: f64| channel.velocity_unchecked(rho * rho * a * a) * t;
            let half = rx.extent_x() / 2.0;
            let mut rho_breaks = vec![0.0, 1.0 - rx.extent_r() / a, 1.0];
            for face in [rx.distance() - half, rx.distance() + half] {
                if let Some(rho) = bisect_decreasing(displacement, face) {
                    rho_breaks.push(rho);
                }
            }
            rho_breaks.sort_by(f64::total_cmp);
            Ok(
                adaptive_simpson_with_breaks(&|rho| rho * inner(rho), &rho_breaks, FLOW_ORACLE_TOL)
                    / PI,
            )
        }
    }
}

/// Root of `f(ρ) = target` on `[0, 1]` for a decreasing `f`, if bracketed.
fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, target: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    if !(f(lo) > target && f(hi) < target) {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Dispersion-regime observation probability by quadrature of the axial
/// Gaussian density over the receiver's axial extent. Shares no algebra with
/// [`cir_dispersion`].
pub fn oracle_cir_dispersion(model: &DispersionModel, rx: &ReceiverVolume, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let sigma = (2.0 * model.d_eff * t).sqrt();
    let centre = model.mean_velocity * t;
    let half = rx.extent_x() / 2.0;
    let z_lo = (rx.distance() - half - centre) / sigma;
    let z_hi = (rx.distance() + half - centre) / sigma;
    let mut points = vec![z_lo];
    for k in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
        if k > z_lo && k < z_hi {
            points.push(k);
        }
    }
    points.push(z_hi);
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    model.rx_fraction * adaptive_simpson_with_breaks(&density, &points, 1e-14)
}

/// Any source of `P_ob(t)` the link layer can evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum Cir {
    Dispersion {
        model: DispersionModel,
        rx: ReceiverVolume,
    },
    FlowUniform(FlowModel),
    FlowPoint {
        channel: DuctChannelConfig,
        rx: ReceiverVolume,
        release: ReleaseSpec,
    },
    Sampled(ImpulseResponse),
}

impl Cir {
    /// `P_ob(t)`, zero for `t ≤ 0`.
    pub fn p_ob(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Cir::Dispersion { model, rx } => cir_dispersion(model, rx, t),
            Cir::FlowUniform(m) => cir_flow_uniform(m, t),
            Cir::FlowPoint {
                channel,
                rx,
                release,
            } => cir_flow_point(channel, rx, release, t).unwrap_or(0.0),
            Cir::Sampled(ir) => ir.interpolate(t),
        }
    }

    pub fn model_tag(&self) -> ModelTag {
        match self {
            Cir::Dispersion { .. } => ModelTag::DispersionUniform,
            Cir::FlowUniform(_) => ModelTag::FlowUniform,
            Cir::FlowPoint { .. } => ModelTag::FlowPoint,
            Cir::Sampled(ir) => ir.model_tag(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const UM: f64 = 1e-6;

    fn large_duct() -> (DuctChannelConfig, ReceiverVolume) {
        let c = DuctChannelConfig::with_mean_velocity(200.0 * UM, 1e-10, 1e-3).unwrap();
        let rx = ReceiverVolume::scaled(&c, 200.0 * UM).unwrap();
        (c, rx)
    }

    fn small_duct() -> (DuctChannelConfig, ReceiverVolume) {
        let c = DuctChannelConfig::with_mean_velocity(10.0 * UM, 1e-10, 1e-3).unwrap();
        let rx = ReceiverVolume::scaled(&c, 800.0 * UM).unwrap();
        (c, rx)
    }

    #[test]
    fn effective_diffusion_examples() {
        let (c, _) = small_duct();
        // 1e-10 · (1 + 100²/48)
        assert_relative_eq!(
            effective_diffusion(&c).unwrap(),
            2.093_333_333_333_333_4e-8,
            max_relative = 1e-12
        );
        let (c, _) = large_duct();
        assert_relative_eq!(
            effective_diffusion(&c).unwrap(),
            1e-10 * (1.0 + 2000.0 * 2000.0 / 48.0),
            max_relative = 1e-12
        );
        let still = DuctChannelConfig::with_mean_velocity(10.0 * UM, 3e-10, 0.0).unwrap();
        assert_eq!(effective_diffusion(&still).unwrap(), 3e-10);
        let flow_only = DuctChannelConfig::with_mean_velocity(10.0 * UM, 0.0, 1e-3).unwrap();
        assert_eq!(effective_diffusion(&flow_only), Err(Error::NoDiffusion));
    }

    #[test]
    fn dispersion_cir_examples() {
        let (c, rx) = small_duct();
        let m = DispersionModel::new(&c, &rx).unwrap();
        assert_eq!(cir_dispersion(&m, &rx, 0.0), 0.0);
        assert!(cir_dispersion(&m, &rx, 1e-6) < 1e-300);
        // at v̄ t = d the receiver is centred on the Gaussian
        let t = 0.8;
        let sigma = (2.0 * m.d_eff * t).sqrt();
        let expected = m.rx_fraction * (1.0 - 2.0 * q_function(rx.extent_x() / 2.0 / sigma));
        assert_relative_eq!(cir_dispersion(&m, &rx, t), expected, max_relative = 1e-12);
        assert!((cir_dispersion(&m, &rx, t) - 2.0e-3).abs() < 0.05e-3);
    }

    #[test]
    fn dispersion_peak_examples() {
        let (c, rx) = small_duct();
        let m = DispersionModel::new(&c, &rx).unwrap();
        let tmax = dispersion_peak_time(&m, rx.distance());
        // direct evaluation of the unrationalised form
        let direct =
            m.d_eff / 1e-6 * (-1.0 + (1.0 + 1e-6 * (800.0 * UM).powi(2) / m.d_eff.powi(2)).sqrt());
        assert_relative_eq!(tmax, direct, max_relative = 1e-12);
        assert!((tmax - 0.779).abs() < 1e-3 && tmax < 0.8, "{tmax}");
        // argmax of the Gaussian density at x = d by dense sampling
        let density =
            |t: f64| (-(800.0 * UM - 1e-3 * t).powi(2) / (4.0 * m.d_eff * t)).exp() / t.sqrt();
        let argmax = (1..20_000)
            .map(|i| i as f64 * 1e-4)
            .max_by(|a, b| density(*a).total_cmp(&density(*b)))
            .unwrap();
        assert!((argmax - tmax).abs() < 1e-4);
        assert_eq!(dispersion_peak_time(&m, 0.0), 0.0);

        let still = DispersionModel {
            mean_velocity: 0.0,
            ..m
        };
        assert_relative_eq!(
            dispersion_peak_time(&still, 1e-4),
            1e-8 / (2.0 * m.d_eff),
            max_relative = 1e-14
        );
    }

    #[test]
    fn dispersion_peak_value_is_near_stationary() {
        let (c, rx) = small_duct();
        let m = DispersionModel::new(&c, &rx).unwrap();
        let tmax = dispersion_peak_time(&m, rx.distance());
        let p = dispersion_peak_value(&m, &rx);
        assert!(p >= cir_dispersion(&m, &rx, tmax * 0.99) * (1.0 - 1e-4));
        assert!(p >= cir_dispersion(&m, &rx, tmax * 1.01) * (1.0 - 1e-4));

        // without flow the peak probability follows from t = d²/(2 D_eff)
        let still = DispersionModel {
            mean_velocity: 0.0,
            ..m
        };
        let d = rx.distance();
        let sigma = (2.0 * m.d_eff * d * d / (2.0 * m.d_eff)).sqrt();
        let half = rx.extent_x() / 2.0;
        let want =
            m.rx_fraction * (q_function((d - half) / sigma) - q_function((d + half) / sigma));
        assert_relative_eq!(
            dispersion_peak_value(&still, &rx),
            want,
            max_relative = 1e-12
        );
    }

    #[test]
    fn transit_time_examples() {
        let (c, rx) = large_duct();
        let (t1, t2) = flow_transit_times(&c, &rx).unwrap();
        assert_relative_eq!(t1, 0.1, max_relative = 1e-12);
        assert_relative_eq!(t2, 1.0 / 6.0, max_relative = 1e-12);
        let far = ReceiverVolume::scaled(&c, 800.0 * UM).unwrap();
        let (t1, t2) = flow_transit_times(&c, &far).unwrap();
        assert_relative_eq!(t1, 0.5, max_relative = 1e-12);
        assert_relative_eq!(t2, 0.85 / 1.5, max_relative = 1e-12);
        let thin = ReceiverVolume::new(&c, 200.0 * UM, 1e-12, 100.0 * UM, PI / 2.0).unwrap();
        let (t1, t2) = flow_transit_times(&c, &thin).unwrap();
        assert_relative_eq!(t1, t2, max_relative = 1e-8);
        let still = DuctChannelConfig::with_mean_velocity(200.0 * UM, 1e-10, 0.0).unwrap();
        assert_eq!(flow_transit_times(&still, &rx), Err(Error::NoFlow));
    }

    #[test]
    fn flow_uniform_examples() {
        let (c, rx) = large_duct();
        let m = FlowModel::new(&c, &rx).unwrap();
        assert_relative_eq!(cir_flow_uniform(&m, m.t2), 0.075, max_relative = 1e-12);
        assert_eq!(cir_flow_uniform(&m, m.t1), 0.0);
        assert_relative_eq!(
            cir_flow_uniform(&m, 2.0 * m.t2),
            0.0375,
            max_relative = 1e-12
        );
        // middle branch evaluated at t2 gives the same value
        let mid = m.rx_fraction
            - m.angle_fraction * (m.distance - m.extent_x / 2.0) / (2.0 * m.mean_velocity * m.t2);
        assert_relative_eq!(mid, 0.075, max_relative = 1e-12);
    }

    #[test]
    fn flow_point_examples() {
        let (c, rx) = large_duct();
        let rel = ReleaseSpec::point(&c, 150.0 * UM, 0.0, 1).unwrap();
        let (start, end) = flow_point_window(&c, &rx, &rel).unwrap().unwrap();
        assert_relative_eq!(start, 0.15 / 0.875, max_relative = 1e-12);
        assert_relative_eq!(end, 0.25 / 0.875, max_relative = 1e-12);
        assert!((start - 0.1714).abs() < 1e-4 && (end - 0.2857).abs() < 1e-4);
        assert_eq!(cir_flow_point(&c, &rx, &rel, start - 1e-6).unwrap(), 0.0);
        assert_eq!(cir_flow_point(&c, &rx, &rel, 0.2).unwrap(), 1.0);
        assert_eq!(cir_flow_point(&c, &rx, &rel, end + 1e-6).unwrap(), 0.0);
        assert_eq!(
            cir_flow_point(&c, &rx, &rel, 200.0 / 0.875 * 1e-3).unwrap(),
            1.0
        );

        let centre = ReleaseSpec::point(&c, 0.0, 0.0, 1).unwrap();
        for t in [0.0, 0.05, 0.1, 0.2, 1.0] {
            assert_eq!(cir_flow_point(&c, &rx, &centre, t).unwrap(), 0.0);
        }
        let wall = ReleaseSpec::point(&c, 200.0 * UM, 0.0, 1).unwrap();
        assert_eq!(flow_point_window(&c, &rx, &wall).unwrap(), None);
        assert_eq!(cir_flow_point(&c, &rx, &wall, 1e6).unwrap(), 0.0);
        let off_angle = ReleaseSpec::point(&c, 150.0 * UM, 1.0, 1).unwrap();
        assert_eq!(cir_flow_point(&c, &rx, &off_angle, 0.2).unwrap(), 0.0);
        let uni = ReleaseSpec::uniform(1).unwrap();
        assert_eq!(
            cir_flow_point(&c, &rx, &uni, 0.2),
            Err(Error::NotPointRelease)
        );
    }

    #[test]
    fn flow_point_integrates_to_window_width() {
        let (c, rx) = large_duct();
        let rel = ReleaseSpec::point(&c, 120.0 * UM, 0.3, 1).unwrap();
        let v = velocity_at(&c, 120.0 * UM).unwrap();
        let dt = 1e-6;
        let integral: f64 = (0..1_000_000)
            .map(|i| cir_flow_point(&c, &rx, &rel, (i as f64 + 0.5) * dt).unwrap() * dt)
            .sum();
        assert!((integral - rx.extent_x() / v).abs() < 2.0 * dt);
    }

    #[test]
    fn oracles_match_closed_forms_on_examples() {
        let (c, rx) = large_duct();
        let m = FlowModel::new(&c, &rx).unwrap();
        let uni = ReleaseSpec::uniform(1).unwrap();
        for t in [0.05, 0.1, 0.12, 0.15, 1.0 / 6.0, 0.3, 2.0] {
            let o = oracle_cir_flow(&c, &rx, &uni, t).unwrap();
            assert!(
                (o - cir_flow_uniform(&m, t)).abs() < 1e-6,
                "t={t}: {o} vs {}",
                cir_flow_uniform(&m, t)
            );
        }
        let (c, rx) = small_duct();
        let dm = DispersionModel::new(&c, &rx).unwrap();
        for t in [0.01, 0.3, 0.779, 0.8, 1.5, 10.0] {
            assert!(
                (oracle_cir_dispersion(&dm, &rx, t) - cir_dispersion(&dm, &rx, t)).abs() < 1e-9
            );
        }
        assert!(oracle_cir_dispersion(&dm, &rx, 1e9) < 1e-6);
        // receiver axially much wider than the Gaussian: all of A_rx/a²
        let wide = ReceiverVolume::new(&c, 1.0, 1.9, 5.0 * UM, PI / 2.0).unwrap();
        let dm = DispersionModel::new(&c, &wide).unwrap();
        assert_relative_eq!(
            oracle_cir_dispersion(&dm, &wide, 1000.0),
            dm.rx_fraction,
            max_relative = 1e-9
        );
    }

    #[test]
    fn sampled_response_validation_and_interpolation() {
        assert!(ImpulseResponse::new(vec![0.0, 1.0], vec![0.1], ModelTag::FlowUniform).is_err());
        assert!(
            ImpulseResponse::new(vec![1.0, 1.0], vec![0.1, 0.1], ModelTag::FlowUniform).is_err()
        );
        assert!(
            ImpulseResponse::new(vec![0.0, 1.0], vec![0.1, 1.1], ModelTag::FlowUniform).is_err()
        );
        assert!(ImpulseResponse::new(vec![0.0], vec![0.1], ModelTag::SimulatedMC).is_err());
        assert!(ImpulseResponse::simulated(vec![0.0], vec![0.1], vec![]).is_err());
        let ir = ImpulseResponse::new(
            vec![1.0, 2.0, 4.0],
            vec![0.2, 0.4, 0.0],
            ModelTag::FlowUniform,
        )
        .unwrap();
        assert_eq!(ir.interpolate(0.5), 0.0);
        assert_relative_eq!(ir.interpolate(1.5), 0.3);
        assert_relative_eq!(ir.interpolate(3.0), 0.2);
        assert_eq!(ir.interpolate(4.0), 0.0);
        assert_eq!(ir.interpolate(5.0), 0.0);
        assert_eq!(ir.peak(), Some((2.0, 0.4)));
        assert_eq!(Cir::Sampled(ir).p_ob(2.0), 0.4);
    }

    #[test]
    fn hash_is_stable_and_discriminating() {
        let (c, _) = large_duct();
        let (c2, _) = small_duct();
        assert_eq!(config_hash(&c), config_hash(&c));
        assert_ne!(config_hash(&c), config_hash(&c2));
        assert_eq!(config_hash(&c).len(), 16);
    }

    fn geometry() -> impl Strategy<Value = (DuctChannelConfig, ReceiverVolume)> {
        (
            1.0f64..500.0,
            0.05f64..1.0,
            0.05f64..1.0,
            0.1f64..(2.0 * PI),
            0.6f64..50.0,
            1e-4f64..1e-2,
        )
            .prop_map(|(a_um, cr_frac, cx_frac, cphi, d_over_cx, v)| {
                let a = a_um * UM;
                let c = DuctChannelConfig::with_mean_velocity(a, 0.0, v).unwrap();
                let cx = cx_frac * a;
                let rx = ReceiverVolume::new(&c, d_over_cx * cx, cx, cr_frac * a, cphi).unwrap();
                (c, rx)
            })
    }

    proptest! {
        #[test]
        fn flow_uniform_structure((c, rx) in geometry(), alpha in 0.01f64..=1.0) {
            let m = FlowModel::new(&c, &rx).unwrap();
            let p2 = cir_flow_uniform(&m, m.t2);
            prop_assert!(m.t1 > 0.0 && m.t1 < m.t2);
            // continuity at t1 and t2
            let eps = 1e-9;
            let just_after_t1 = cir_flow_uniform(&m, m.t1 * (1.0 + eps));
            prop_assert!(just_after_t1 < 1e-6 * p2);
            let below_t2 = m.rx_fraction - m.angle_fraction * (m.distance - m.extent_x / 2.0) / (2.0 * m.mean_velocity * m.t2);
            prop_assert!((below_t2 - p2).abs() <= 1e-12 * p2);
            let at_t1 = m.rx_fraction - m.angle_fraction * (m.distance - m.extent_x / 2.0) / (2.0 * m.mean_velocity * m.t1);
            prop_assert!(at_t1.abs() <= 1e-12 * p2);
            // alpha-fraction law and 1/t tail
            let pa = cir_flow_uniform(&m, m.t2 / alpha);
            prop_assert!((pa - alpha * p2).abs() <= 1e-12 * p2);
            prop_assert!(p2 <= m.rx_fraction * (1.0 + 1e-12));
            // zero before t1, maximum at t2 on a dense grid
            for i in 0..=400 {
                let t = m.t2 * 3.0 * i as f64 / 400.0;
                let p = cir_flow_uniform(&m, t);
                prop_assert!(p <= p2 * (1.0 + 1e-12));
                if t <= m.t1 { prop_assert_eq!(p, 0.0); }
                if t >= m.t2 { prop_assert!((p * t - p2 * m.t2).abs() <= 1e-12 * p2 * m.t2); }
            }
        }

        #[test]
        fn dispersion_bounded_and_peak_early(a_um in 1.0f64..500.0, dcoef in 1e-12f64..1e-9, v in 1e-5f64..1e-2,
                                             d_um in 10.0f64..5000.0, t in 1e-3f64..100.0) {
            let a = a_um * UM;
            let c = DuctChannelConfig::with_mean_velocity(a, dcoef, v).unwrap();
            let rx = ReceiverVolume::new(&c, d_um * UM, (d_um * UM).min(a), a / 2.0, PI / 2.0).unwrap();
            let m = DispersionModel::new(&c, &rx).unwrap();
            prop_assert!(m.d_eff > dcoef);
            let p = cir_dispersion(&m, &rx, t);
            prop_assert!((0.0..=m.rx_fraction).contains(&p));
            prop_assert!(dispersion_peak_time(&m, rx.distance()) < rx.distance() / v);
        }

        #[test]
        fn effective_diffusion_grows_with_peclet(dcoef in 1e-12f64..1e-9, v1 in 0.0f64..1e-2, v2 in 0.0f64..1e-2) {
            let c1 = DuctChannelConfig::with_mean_velocity(1e-4, dcoef, v1.min(v2)).unwrap();
            let c2 = DuctChannelConfig::with_mean_velocity(1e-4, dcoef, v1.max(v2)).unwrap();
            prop_assert!(effective_diffusion(&c1).unwrap() <= effective_diffusion(&c2).unwrap());
        }

        #[test]
        fn point_oracle_matches_rect((c, rx) in geometry(), r_frac in 0.0f64..=1.0, phi in -3.0f64..3.0, s in 0.0f64..3.0) {
            let rel = ReleaseSpec::point(&c, r_frac * c.radius(), phi, 1).unwrap();
            let t = s * rx.distance() / c.mean_velocity();
            prop_assert_eq!(oracle_cir_flow(&c, &rx, &rel, t).unwrap(), cir_flow_point(&c, &rx, &rel, t).unwrap());
        }
    }
}
