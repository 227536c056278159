use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact rational number used for every cost computation.
pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not a decimal number: {0:?}")]
pub struct ParseDecimalError(pub String);

/// Parse `"0.2"`, `"-3"`, `"2e-6"` or `"1.5E3"` exactly.
pub fn parse_decimal(text: &str) -> Result<Rational, ParseDecimalError> {
    let err = || ParseDecimalError(text.to_string());
    let s = text.trim();
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| err())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all: String = format!("{int_part}{frac_part}");
    let numer: i128 = if all.is_empty() {
        0
    } else {
        all.parse().map_err(|_| err())?
    };
    let scale = exponent - frac_part.len() as i32;
    if scale.unsigned_abs() > 30 {
        return Err(err());
    }
    let pow = 10i128.pow(scale.unsigned_abs());
    let value = if scale >= 0 {
        Rational::from_integer(numer * pow)
    } else {
        Rational::new(numer, pow)
    };
    Ok(if negative { -value } else { value })
}

/// Decimal rendering: exact when the expansion terminates within
/// `max_places`, otherwise rounded half away from zero. Trailing zeros are
/// trimmed.
pub fn format_decimal(value: &Rational, max_places: u32) -> String {
    let scale = 10i128.pow(max_places);
    let scaled = value * Rational::from_integer(scale);
    let rounded = scaled.round().to_integer();
    let negative = rounded < 0;
    let abs = rounded.abs();
    let (int, frac) = abs.div_rem(&scale);
    let mut frac_s = format!("{:0width$}", frac, width = max_places as usize);
    while frac_s.ends_with('0') {
        frac_s.pop();
    }
    let sign = if negative { "-" } else { "" };
    if frac_s.is_empty() {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac_s}")
    }
}

/// Round a non-negative rational to the nearest integer, halves up.
pub fn round_to_u64(value: &Rational) -> u64 {
    value.round().to_integer().max(0) as u64
}

/// An exact amount of money in currency units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(Rational);

impl Money {
    pub const ZERO: Money = Money(Ratio::new_raw(0, 1));

    pub fn new(value: Rational) -> Self {
        Money(value)
    }

    pub fn from_integer(units: i128) -> Self {
        Money(Rational::from_integer(units))
    }

    pub fn parse(text: &str) -> Result<Self, ParseDecimalError> {
        parse_decimal(text).map(Money)
    }

    pub fn rational(&self) -> Rational {
        self.0
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn to_decimal_string(&self, max_places: u32) -> String {
        format_decimal(&self.0, max_places)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match f.precision() {
            Some(p) => {
                // fixed number of places
                let mut s = format_decimal(&self.0, p as u32);
                let places = s.split_once('.').map(|(_, fr)| fr.len()).unwrap_or(0);
                if p > 0 && places == 0 {
                    s.push('.');
                }
                for _ in places..p {
                    s.push('0');
                }
                s
            }
            None => format_decimal(&self.0, 12),
        };
        match f.width() {
            Some(w) if f.align() == Some(fmt::Alignment::Left) => write!(f, "{s:<w$}"),
            Some(w) => write!(f, "{s:>w$}"),
            None => f.write_str(&s),
        }
    }
}

impl FromStr for Money {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Money::parse(s)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Mul<Rational> for Money {
    type Output = Money;
    fn mul(self, rhs: Rational) -> Money {
        Money(self.0 * rhs)
    }
}

impl Mul<u64> for Money {
    type Output = Money;
    fn mul(self, rhs: u64) -> Money {
        Money(self.0 * Rational::from_integer(rhs as i128))
    }
}

impl Div<u64> for Money {
    type Output = Money;
    fn div(self, rhs: u64) -> Money {
        Money(self.0 / Rational::from_integer(rhs as i128))
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

/// Serde helper writing a rational as a decimal string.
pub fn serialize_rational<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format_decimal(value, 12))
}

/// Serialized as a decimal string so no binary float ever touches a price.
impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_decimal(&self.0, 12))
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Int(i) => i.to_string(),
            // shortest round-trip representation, e.g. 0.2 -> "0.2"
            Raw::Float(f) => f.to_string(),
        };
        Money::parse(&text).map_err(serde::de::Error::custom)
    }
}
