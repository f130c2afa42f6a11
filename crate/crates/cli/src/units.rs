//! Quantities with unit suffixes, e.g. `200 um`, `1 mm/s`, `1e-10 m^2/s`,
//! `90 deg`. A bare number is taken to be in SI units.

use std::f64::consts::PI;

/// Conversion to SI. Sub-units divide by an exact power of ten so that,
/// e.g., `10 um` is the same double as `1e-5`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    Mul(f64),
    Div(f64),
    Deg,
}

impl Scale {
    fn apply(self, x: f64) -> f64 {
        match self {
            Scale::Mul(f) => x * f,
            Scale::Div(f) => x / f,
            Scale::Deg => x * PI / 180.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Dimensionless,
    Length,
    Time,
    Velocity,
    Diffusivity,
    Angle,
    PressureGradient,
    Viscosity,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, Scale)] {
        match self {
            Dimension::Dimensionless => &[],
            Dimension::Length => &[
                ("m", Scale::Mul(1.0)),
                ("cm", Scale::Div(1e2)),
                ("mm", Scale::Div(1e3)),
                ("um", Scale::Div(1e6)),
                ("µm", Scale::Div(1e6)),
                ("nm", Scale::Div(1e9)),
            ],
            Dimension::Time => &[
                ("s", Scale::Mul(1.0)),
                ("ms", Scale::Div(1e3)),
                ("us", Scale::Div(1e6)),
                ("µs", Scale::Div(1e6)),
                ("min", Scale::Mul(60.0)),
            ],
            Dimension::Velocity => &[
                ("m/s", Scale::Mul(1.0)),
                ("cm/s", Scale::Div(1e2)),
                ("mm/s", Scale::Div(1e3)),
                ("um/s", Scale::Div(1e6)),
                ("µm/s", Scale::Div(1e6)),
            ],
            Dimension::Diffusivity => &[
                ("m^2/s", Scale::Mul(1.0)),
                ("m2/s", Scale::Mul(1.0)),
                ("cm^2/s", Scale::Div(1e4)),
                ("cm2/s", Scale::Div(1e4)),
                ("mm^2/s", Scale::Div(1e6)),
                ("mm2/s", Scale::Div(1e6)),
                ("um^2/s", Scale::Div(1e12)),
                ("um2/s", Scale::Div(1e12)),
                ("µm^2/s", Scale::Div(1e12)),
                ("µm2/s", Scale::Div(1e12)),
            ],
            Dimension::Angle => &[
                ("rad", Scale::Mul(1.0)),
                ("deg", Scale::Deg),
                ("°", Scale::Deg),
            ],
            Dimension::PressureGradient => &[
                ("Pa/m", Scale::Mul(1.0)),
                ("kPa/m", Scale::Mul(1e3)),
                ("Pa/mm", Scale::Mul(1e3)),
            ],
            Dimension::Viscosity => &[
                ("Pa s", Scale::Mul(1.0)),
                ("Pa*s", Scale::Mul(1.0)),
                ("Pa.s", Scale::Mul(1.0)),
                ("mPa s", Scale::Div(1e3)),
                ("mPa*s", Scale::Div(1e3)),
                ("mPa.s", Scale::Div(1e3)),
            ],
        }
    }
}

/// Parses `number [unit]` and converts to SI.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || matches!(c, '.' | '+' | '-')
                || ((c == 'e' || c == 'E') && is_exponent(text, i)))
        })
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (number, unit) = text.split_at(split);
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` does not start with a number"))?;
    if !value.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(value);
    }
    let normalized: String = unit.split_whitespace().collect::<Vec<_>>().join(" ");
    dim.units()
        .iter()
        .find(|(name, _)| *name == normalized)
        .map(|(_, scale)| scale.apply(value))
        .ok_or_else(|| {
            let known: Vec<&str> = dim.units().iter().map(|(n, _)| *n).collect();
            if known.is_empty() {
                format!("`{text}` must be a plain number")
            } else {
                format!(
                    "unknown unit `{unit}` in `{text}` (expected one of {})",
                    known.join(", ")
                )
            }
        })
}

/// `e` in `1e-10` is an exponent only when a digit precedes it and a digit
/// or sign follows it.
fn is_exponent(text: &str, i: usize) -> bool {
    let bytes = text.as_bytes();
    let before = i > 0 && bytes[i - 1].is_ascii_digit() || i > 0 && bytes[i - 1] == b'.';
    let after = bytes
        .get(i + 1)
        .is_some_and(|b| b.is_ascii_digit() || *b == b'-' || *b == b'+');
    before && after
}
