//! Physical quantities written as `"<number> <unit>"` strings.
//!
//! Each newtype stores its value in the library's working unit. A bare number
//! is rejected so that a missing unit never passes silently.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

/// Split `"1.8 mm"` into `(1.8, "mm")`.
pub fn split_quantity(s: &str) -> Result<(f64, &str), String> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-' || ((c == 'e' || c == 'E') && i > 0)))
        .map_or(s.len(), |(i, _)| i);
    // "1e" followed by a letter is a unit, not an exponent
    let mut end = end;
    while end > 0 && matches!(s.as_bytes()[end - 1], b'e' | b'E') {
        end -= 1;
    }
    let (num, unit) = s.split_at(end);
    let value: f64 = num.parse().map_err(|_| format!("`{s}` does not start with a number"))?;
    if !value.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok((value, unit.trim()))
}

macro_rules! quantity {
    ($(#[$doc:meta])* $name:ident, $what:literal, [$($unit:literal => $factor:expr),+ $(,)?]) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name(pub f64);

        impl $name {
            pub const UNITS: &'static [&'static str] = &[$($unit),+];

            pub fn parse(s: &str) -> Result<Self, String> {
                let (v, unit) = split_quantity(s)?;
                if unit.is_empty() {
                    return Err(format!("{} `{s}` has no unit (expected one of {})", $what, Self::UNITS.join(", ")));
                }
                match unit {
                    $($unit => Ok(Self(v * $factor)),)+
                    other => Err(format!("unknown {} unit `{other}` (expected one of {})", $what, Self::UNITS.join(", "))),
                }
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                        write!(f, "a {} with a unit, e.g. \"{} {}\"", $what, 1, [$($unit),+][0])
                    }
                    fn visit_str<E: de::Error>(self, s: &str) -> Result<$name, E> {
                        $name::parse(s).map_err(E::custom)
                    }
                    fn visit_i64<E: de::Error>(self, v: i64) -> Result<$name, E> {
                        Err(E::custom(format!("{} `{v}` has no unit; write it as a string such as \"{v} {}\"", $what, [$($unit),+][0])))
                    }
                    fn visit_u64<E: de::Error>(self, v: u64) -> Result<$name, E> {
                        self.visit_i64(v as i64)
                    }
                    fn visit_f64<E: de::Error>(self, v: f64) -> Result<$name, E> {
                        Err(E::custom(format!("{} `{v}` has no unit; write it as a string such as \"{v} {}\"", $what, [$($unit),+][0])))
                    }
                }
                d.deserialize_any(V)
            }
        }
    };
}

quantity!(
    /// mm
    Length, "length", ["mm" => 1.0, "um" => 1e-3, "µm" => 1e-3, "μm" => 1e-3, "cm" => 10.0, "m" => 1e3]
);
quantity!(
    /// MHz
    Frequency, "frequency", ["MHz" => 1.0, "kHz" => 1e-3, "Hz" => 1e-6, "GHz" => 1e3]
);
quantity!(
    /// µs
    Duration, "duration", ["us" => 1.0, "µs" => 1.0, "μs" => 1.0, "ns" => 1e-3, "ms" => 1e3, "s" => 1e6]
);
quantity!(
    /// m/s
    Speed, "sound speed", ["m/s" => 1.0, "mm/us" => 1e3, "mm/µs" => 1e3, "km/s" => 1e3]
);
quantity!(
    /// kg/m³
    Density, "density", ["kg/m3" => 1.0, "kg/m^3" => 1.0, "kg/m³" => 1.0, "g/cm3" => 1e3, "g/cm^3" => 1e3, "g/cm³" => 1e3]
);
quantity!(
    /// dB/cm
    Attenuation, "attenuation", ["dB/cm" => 1.0, "dB/mm" => 10.0, "dB/m" => 0.01]
);
quantity!(
    /// dB
    Decibels, "level", ["dB" => 1.0]
);
quantity!(
    /// degrees
    Angle, "angle", ["deg" => 1.0, "°" => 1.0, "rad" => 180.0 / std::f64::consts::PI]
);
quantity!(
    /// mW/cm²
    Intensity, "intensity", ["mW/cm2" => 1.0, "mW/cm^2" => 1.0, "mW/cm²" => 1.0, "W/cm2" => 1e3, "W/m2" => 0.1, "W/m^2" => 0.1]
);
quantity!(
    /// Pa
    Pressure, "pressure", ["Pa" => 1.0, "kPa" => 1e3, "MPa" => 1e6]
);
