//! Hexadecimal floating-point text encoding (`-0x1.8p+1` style).
//!
//! Used for every real value in serialized models so that a save/load cycle
//! is bit-exact. Normal numbers are written as `0x1.<frac>p<exp>`, subnormals
//! as `0x0.<frac>p-1022`, zeros as `0x0p+0` (with sign), and the non-finite
//! values as `inf`, `-inf` and `nan`.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HexFloatError {
    #[error("empty hex-float literal")]
    Empty,
    #[error("missing 0x prefix in {0:?}")]
    MissingPrefix(String),
    #[error("no hex digits in {0:?}")]
    NoDigits(String),
    #[error("missing or malformed binary exponent in {0:?}")]
    BadExponent(String),
    #[error("unexpected character {ch:?} in {text:?}")]
    BadChar { ch: char, text: String },
}

const MANT_BITS: u32 = 52;
const EXP_BIAS: i64 = 1023;

pub fn format(v: f64) -> String {
    let mut out = String::with_capacity(24);
    write_to(&mut out, v);
    out
}

pub fn write_to(out: &mut String, v: f64) {
    if v.is_nan() {
        out.push_str("nan");
        return;
    }
    if v.is_sign_negative() {
        out.push('-');
    }
    if v.is_infinite() {
        out.push_str("inf");
        return;
    }
    let bits = v.to_bits();
    let biased = ((bits >> MANT_BITS) & 0x7ff) as i64;
    let frac = bits & ((1u64 << MANT_BITS) - 1);
    if biased == 0 && frac == 0 {
        out.push_str("0x0p+0");
        return;
    }
    let (lead, exp) = if biased == 0 {
        (0, 1 - EXP_BIAS)
    } else {
        (1, biased - EXP_BIAS)
    };
    let _ = write!(out, "0x{lead}");
    if frac != 0 {
        let digits = format!("{frac:013x}");
        out.push('.');
        out.push_str(digits.trim_end_matches('0'));
    }
    let _ = write!(out, "p{exp:+}");
}

/// Parses a hex-float literal. Inputs with more precision than an `f64`
/// holds are rounded to nearest, ties to even.
pub fn parse(text: &str) -> Result<f64, HexFloatError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(HexFloatError::Empty);
    }
    let (negative, body) = match s.as_bytes()[0] {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let sign = if negative { -1.0 } else { 1.0 };
    match body {
        "inf" | "infinity" => return Ok(sign * f64::INFINITY),
        "nan" => return Ok(f64::NAN),
        _ => {}
    }
    let rest = body
        .strip_prefix("0x")
        .or_else(|| body.strip_prefix("0X"))
        .ok_or_else(|| HexFloatError::MissingPrefix(text.to_string()))?;
    let (mantissa_text, exp_text) = match rest.find(['p', 'P']) {
        Some(i) => (&rest[..i], &rest[i + 1..]),
        None => return Err(HexFloatError::BadExponent(text.to_string())),
    };
    let exp10: i64 = parse_exponent(exp_text).ok_or_else(|| HexFloatError::BadExponent(text.to_string()))?;

    // Up to 16 significant hex digits fit in a u64; anything after that only
    // matters as a sticky bit for rounding.
    let mut mant: u64 = 0;
    let mut sig_digits = 0u32;
    let mut exp2: i64 = exp10;
    let mut sticky = false;
    let mut seen_digit = false;
    let mut seen_point = false;
    for ch in mantissa_text.chars() {
        if ch == '.' {
            if seen_point {
                return Err(HexFloatError::BadChar { ch, text: text.to_string() });
            }
            seen_point = true;
            continue;
        }
        let d = ch
            .to_digit(16)
            .ok_or_else(|| HexFloatError::BadChar { ch, text: text.to_string() })? as u64;
        seen_digit = true;
        if mant == 0 && d == 0 {
            if seen_point {
                exp2 = exp2.saturating_sub(4);
            }
            continue;
        }
        if sig_digits < 16 {
            mant = (mant << 4) | d;
            sig_digits += 1;
            if seen_point {
                exp2 = exp2.saturating_sub(4);
            }
        } else {
            sticky |= d != 0;
            if !seen_point {
                exp2 = exp2.saturating_add(4);
            }
        }
    }
    if !seen_digit {
        return Err(HexFloatError::NoDigits(text.to_string()));
    }
    Ok(sign * compose(mant, exp2, sticky))
}

fn parse_exponent(t: &str) -> Option<i64> {
    let (neg, digits) = match t.as_bytes().first()? {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // Saturate absurd exponents; the value is 0 or inf either way.
    let mut v: i64 = 0;
    for b in digits.bytes() {
        v = v.saturating_mul(10).saturating_add((b - b'0') as i64);
    }
    v = v.min(1 << 40);
    Some(if neg { -v } else { v })
}

/// Value of `mant * 2^exp2` (plus a sticky fraction below the last digit),
/// correctly rounded to f64.
fn compose(mant: u64, exp2: i64, sticky: bool) -> f64 {
    if mant == 0 {
        return 0.0;
    }
    let width = 64 - mant.leading_zeros() as i64;
    // Exponent of the leading bit.
    let top = exp2 + width - 1;
    if top > 1023 {
        return f64::INFINITY;
    }
    // Lowest representable bit position for this magnitude.
    let lsb = if top >= -1022 { top - 52 } else { -1074 };
    let shift = lsb - exp2;
    let (mut kept, round_up) = if shift <= 0 {
        (mant << (-shift) as u32, false)
    } else if shift >= 64 {
        // Everything is below the lowest bit; only rounding can produce 2^-1074.
        let half = shift == 64 && (mant >> 63) == 1;
        let above_half = half && ((mant << 1) != 0 || sticky);
        (0u64, above_half)
    } else {
        let kept = mant >> shift;
        let rem = mant & ((1u64 << shift) - 1);
        let half = 1u64 << (shift - 1);
        let up = rem > half || (rem == half && (sticky || kept & 1 == 1));
        (kept, up)
    };
    if round_up {
        kept += 1;
    }
    // `kept * 2^lsb` is exact in f64 unless rounding carried past 53 bits,
    // which the multiplication handles exactly as well (power of two).
    let mut value = kept as f64;
    let mut e = lsb;
    // Scale in steps to avoid intermediate overflow/underflow.
    while e > 0 {
        let step = e.min(1000);
        value *= 2f64.powi(step as i32);
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(1000);
        value *= 2f64.powi(-(step as i32));
        e += step;
    }
    value
}

/// Serde adapters for hex-float encoded reals.
/// A real read from JSON: a hex-float string or, for hand-written input, a
/// plain number.
#[derive(serde::Deserialize)]
#[serde(untagged)]
enum Real {
    Number(f64),
    Text(String),
}

impl Real {
    fn value(self) -> Result<f64, HexFloatError> {
        match self {
            Real::Number(v) => Ok(v),
            Real::Text(t) => parse(&t),
        }
    }
}

pub mod serde_f64 {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        super::Real::deserialize(d)?.value().map_err(D::Error::custom)
    }
}

pub mod serde_vec {
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&super::format(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<super::Real>::deserialize(d)?;
        raw.into_iter()
            .map(|t| t.value().map_err(D::Error::custom))
            .collect()
    }
}

pub mod serde_vecs {
    use serde::{de::Error as _, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for inner in v {
            let text: Vec<String> = inner.iter().map(|x| super::format(*x)).collect();
            seq.serialize_element(&text)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        let raw = Vec::<Vec<std::borrow::Cow<str>>>::deserialize(d)?;
        raw.iter()
            .map(|inner| {
                inner
                    .iter()
                    .map(|t| super::parse(t).map_err(D::Error::custom))
                    .collect()
            })
            .collect()
    }
}

pub mod serde_opt {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_some(&super::format(*x)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let raw = Option::<std::borrow::Cow<str>>::deserialize(d)?;
        raw.map(|t| super::parse(&t).map_err(D::Error::custom)).transpose()
    }
}
