//! Plain-text export of readout curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// `%.12g`: 12 significant digits, shortest of fixed and exponent notation.
pub fn fmt_g(x: f64) -> String {
    const PREC: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (PREC - 1) as usize, x);
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PREC).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PREC - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Independent variable of a curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    TSeconds,
    PhiRad,
}

impl Axis {
    pub fn column(self) -> &'static str {
        match self {
            Axis::TSeconds => "t_seconds",
            Axis::PhiRad => "phi_rad",
        }
    }
}

/// `P↓` sampled along a time or phase axis by a named model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutCurve {
    pub axis: Axis,
    pub x: Vec<f64>,
    pub p_down: Vec<f64>,
    pub model_name: String,
}

impl ReadoutCurve {
    pub fn new(axis: Axis, x: Vec<f64>, p_down: Vec<f64>, model_name: impl Into<String>) -> Result<Self> {
        ensure(x.len() == p_down.len(), || {
            format!("{} abscissae but {} values", x.len(), p_down.len())
        })?;
        let model_name = model_name.into();
        ensure(!model_name.contains([',', '\n']), || "model name may not contain ',' or newlines".into())?;
        Ok(ReadoutCurve {
            axis,
            x,
            p_down,
            model_name,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},p_down,model_name\n", self.axis.column());
        for (x, p) in self.x.iter().zip(&self.p_down) {
            let _ = writeln!(out, "{},{},{}", fmt_g(*x), fmt_g(*p), self.model_name);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_g_matches_printf() {
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(0.25), "0.25");
        assert_eq!(fmt_g(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_g(-2.5e-7), "-2.5e-07");
        assert_eq!(fmt_g(1.5e13), "1.5e+13");
        assert_eq!(fmt_g(123456789012.0), "123456789012");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(9.9999999999999e-5), "0.0001");
    }

    #[test]
    fn curve_csv_layout() {
        let c = ReadoutCurve::new(Axis::TSeconds, vec![0.0, 1e-5], vec![0.0, 0.5], "blue_resonant").unwrap();
        assert_eq!(c.to_csv(), "t_seconds,p_down,model_name\n0,0,blue_resonant\n1e-05,0.5,blue_resonant\n");
        assert!(ReadoutCurve::new(Axis::PhiRad, vec![0.0], vec![], "x").is_err());
    }
}
