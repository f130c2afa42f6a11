//! Duct geometry, Poiseuille flow and transport-regime classification.
//!
//! Coordinates are cylindrical `(x, r, φ)`: `x` along the duct axis, `r` the
//! distance from the axis and `φ ∈ (-π, π]` the azimuth. All quantities are
//! SI.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};

/// How the mean flow velocity was specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowSpec {
    MeanVelocity(f64),
    /// Pressure gradient magnitude [Pa/m] and dynamic viscosity [Pa·s].
    PressureDriven {
        gradient: f64,
        viscosity: f64,
    },
}

/// A straight, rigid cylindrical duct with steady laminar flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuctChannelConfig {
    radius: f64,
    diffusion: f64,
    mean_velocity: f64,
    flow: FlowSpec,
}

impl DuctChannelConfig {
    pub fn new(radius: f64, diffusion: f64, flow: FlowSpec) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(domain("radius", radius, "must be positive and finite"));
        }
        if !(diffusion >= 0.0 && diffusion.is_finite()) {
            return Err(domain(
                "diffusion",
                diffusion,
                "must be non-negative and finite",
            ));
        }
        let mean_velocity = match flow {
            FlowSpec::MeanVelocity(v) => v,
            FlowSpec::PressureDriven {
                gradient,
                viscosity,
            } => mean_velocity_from_pressure(gradient, radius, viscosity)?,
        };
        if !(mean_velocity >= 0.0 && mean_velocity.is_finite()) {
            return Err(domain(
                "mean_velocity",
                mean_velocity,
                "must be non-negative and finite",
            ));
        }
        if mean_velocity == 0.0 && diffusion == 0.0 {
            return Err(Error::Invalid(
                "diffusion and mean velocity are both zero; there is no transport".into(),
            ));
        }
        Ok(DuctChannelConfig {
            radius,
            diffusion,
            mean_velocity,
            flow,
        })
    }

    pub fn with_mean_velocity(radius: f64, diffusion: f64, mean_velocity: f64) -> Result<Self> {
        Self::new(radius, diffusion, FlowSpec::MeanVelocity(mean_velocity))
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn mean_velocity(&self) -> f64 {
        self.mean_velocity
    }

    pub fn flow(&self) -> FlowSpec {
        self.flow
    }

    /// Poiseuille velocity `2 v̄ (1 - r²/a²)` without domain checks. Radii
    /// beyond the wall are clamped to zero velocity.
    #[inline]
    pub(crate) fn velocity_unchecked(&self, r2: f64) -> f64 {
        let a2 = self.radius * self.radius;
        (2.0 * self.mean_velocity * (1.0 - r2 / a2)).max(0.0)
    }
}

/// Wall-mounted receiver: `|x - d| ≤ cx/2`, `a - cr ≤ r ≤ a`, `|φ| ≤ cφ/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverVolume {
    distance: f64,
    extent_x: f64,
    extent_r: f64,
    extent_phi: f64,
    radius: f64,
}

impl ReceiverVolume {
    pub fn new(
        channel: &DuctChannelConfig,
        distance: f64,
        extent_x: f64,
        extent_r: f64,
        extent_phi: f64,
    ) -> Result<Self> {
        let a = channel.radius();
        if !(extent_x > 0.0 && extent_x.is_finite()) {
            return Err(domain("extent_x", extent_x, "must be positive"));
        }
        if !(extent_r > 0.0 && extent_r <= a) {
            return Err(domain("extent_r", extent_r, "must lie in (0, a]"));
        }
        if !(extent_phi > 0.0 && extent_phi <= 2.0 * PI) {
            return Err(domain("extent_phi", extent_phi, "must lie in (0, 2π]"));
        }
        if !(distance > extent_x / 2.0 && distance.is_finite()) {
            return Err(domain(
                "distance",
                distance,
                "receiver must lie fully downstream of the release plane (d > cx/2)",
            ));
        }
        Ok(ReceiverVolume {
            distance,
            extent_x,
            extent_r,
            extent_phi,
            radius: a,
        })
    }

    /// Receiver whose size follows the duct: `cx = cr = a/2`, `cφ = π/2`.
    pub fn scaled(channel: &DuctChannelConfig, distance: f64) -> Result<Self> {
        let a = channel.radius();
        Self::new(channel, distance, a / 2.0, a / 2.0, PI / 2.0)
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn extent_x(&self) -> f64 {
        self.extent_x
    }

    pub fn extent_r(&self) -> f64 {
        self.extent_r
    }

    pub fn extent_phi(&self) -> f64 {
        self.extent_phi
    }

    /// Duct radius the receiver was validated against.
    pub fn duct_radius(&self) -> f64 {
        self.radius
    }

    /// `cφ / 2π`.
    pub fn angle_fraction(&self) -> f64 {
        self.extent_phi / (2.0 * PI)
    }

    /// True if the radial/azimuthal window of the receiver contains `(r, φ)`.
    #[inline]
    pub fn window_contains(&self, r: f64, phi: f64) -> bool {
        r >= self.radius - self.extent_r && r <= self.radius && phi.abs() <= self.extent_phi / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReleaseKind {
    UniformCrossSection,
    Point { r0: f64, phi0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseSpec {
    kind: ReleaseKind,
    n_tx: u64,
}

impl ReleaseSpec {
    pub fn uniform(n_tx: u64) -> Result<Self> {
        Self::new(ReleaseKind::UniformCrossSection, n_tx, f64::INFINITY)
    }

    pub fn point(channel: &DuctChannelConfig, r0: f64, phi0: f64, n_tx: u64) -> Result<Self> {
        Self::new(ReleaseKind::Point { r0, phi0 }, n_tx, channel.radius())
    }

    fn new(kind: ReleaseKind, n_tx: u64, radius: f64) -> Result<Self> {
        if n_tx == 0 {
            return Err(domain(
                "n_tx",
                0.0,
                "at least one particle must be released",
            ));
        }
        if let ReleaseKind::Point { r0, phi0 } = kind {
            if !(0.0..=radius).contains(&r0) {
                return Err(domain("r0", r0, "must lie in [0, a]"));
            }
            if !(phi0 > -PI && phi0 <= PI) {
                return Err(domain("phi0", phi0, "must lie in (-π, π]"));
            }
        }
        Ok(ReleaseSpec { kind, n_tx })
    }

    pub fn kind(&self) -> ReleaseKind {
        self.kind
    }

    pub fn n_tx(&self) -> u64 {
        self.n_tx
    }

    pub fn with_n_tx(self, n_tx: u64) -> Result<Self> {
        if n_tx == 0 {
            return Err(domain(
                "n_tx",
                0.0,
                "at least one particle must be released",
            ));
        }
        Ok(ReleaseSpec { n_tx, ..self })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Dispersion,
    FlowDominated,
    Boundary,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Dispersion => "dispersion",
            Regime::FlowDominated => "flow_dominated",
            Regime::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeVerdict {
    pub peclet: f64,
    pub distance_ratio: f64,
    pub regime: Regime,
    /// `Pe / (4 d/a)`.
    pub margin: f64,
}

/// Safety factor applied to the separating line `Pe = 4 d/a`. At 1 the
/// comparison is strict and only exact equality is reported as
/// [`Regime::Boundary`]; callers wanting a wider band can threshold
/// [`RegimeVerdict::margin`] themselves.
pub const REGIME_THRESHOLD_FACTOR: f64 = 1.0;

/// Poiseuille velocity at radius `r`.
pub fn velocity_at(channel: &DuctChannelConfig, r: f64) -> Result<f64> {
    let a = channel.radius();
    if !(0.0..=a).contains(&r) {
        return Err(domain("r", r, "must lie in [0, a]"));
    }
    if r == a {
        return Ok(0.0);
    }
    Ok(2.0 * channel.mean_velocity() * (1.0 - (r / a) * (r / a)))
}

/// Mean velocity of pressure-driven flow, `|∇p| a² / (8 η)`.
pub fn mean_velocity_from_pressure(
    pressure_gradient: f64,
    radius: f64,
    viscosity: f64,
) -> Result<f64> {
    if !(viscosity > 0.0) {
        return Err(domain("viscosity", viscosity, "must be positive"));
    }
    if !(radius > 0.0) {
        return Err(domain("radius", radius, "must be positive"));
    }
    Ok(pressure_gradient.abs() * radius * radius / (8.0 * viscosity))
}

/// `v̄ a / D`. Returns `f64::INFINITY` for flow-only transport (`D = 0`).
pub fn peclet_number(channel: &DuctChannelConfig) -> f64 {
    if channel.diffusion() == 0.0 {
        return f64::INFINITY;
    }
    channel.mean_velocity() * channel.radius() / channel.diffusion()
}

pub fn classify_regime(channel: &DuctChannelConfig, rx: &ReceiverVolume) -> RegimeVerdict {
    let peclet = peclet_number(channel);
    let distance_ratio = rx.distance() / channel.radius();
    let margin = peclet / (4.0 * distance_ratio);
    let regime = if margin < 1.0 / REGIME_THRESHOLD_FACTOR {
        Regime::Dispersion
    } else if margin > REGIME_THRESHOLD_FACTOR {
        Regime::FlowDominated
    } else {
        Regime::Boundary
    };
    RegimeVerdict {
        peclet,
        distance_ratio,
        regime,
        margin,
    }
}

/// Cross-sectional area of the receiver band relative to `a²`:
/// `(cφ/2π)(2 a cr - cr²) / a²`.
pub fn rx_area_fraction(rx: &ReceiverVolume) -> f64 {
    let a = rx.duct_radius();
    let cr = rx.extent_r();
    rx.angle_fraction() * (2.0 * a * cr - cr * cr) / (a * a)
}

#[inline]
pub fn point_in_receiver(rx: &ReceiverVolume, x: f64, r: f64, phi: f64) -> bool {
    (x - rx.distance()).abs() <= rx.extent_x() / 2.0 && rx.window_contains(r, phi)
}
