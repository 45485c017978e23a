//! Angle literals: plain radians (`0.5236`) or rational multiples of π
//! (`pi/6`, `-3pi/8`, `3*pi/8`, `π/4`, `2pi`).

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub fn parse_angle(text: &str) -> Result<f64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let t = t.replace('π', "pi");
    let bad = || Error::Parse(format!("angle {text:?} is neither radians nor a multiple of pi"));
    let Some(pos) = t.find("pi") else {
        let v: f64 = t.parse().map_err(|_| bad())?;
        return if v.is_finite() { Ok(v) } else { Err(bad()) };
    };
    let (head, tail) = (&t[..pos], &t[pos + 2..]);
    let head = head.strip_suffix('*').unwrap_or(head);
    let numerator = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let denominator = match tail {
        "" => 1.0,
        d => d
            .strip_prefix('/')
            .ok_or_else(bad)?
            .parse::<f64>()
            .map_err(|_| bad())?,
    };
    if denominator == 0.0 || !numerator.is_finite() || !denominator.is_finite() {
        return Err(bad());
    }
    Ok(numerator * PI / denominator)
}
