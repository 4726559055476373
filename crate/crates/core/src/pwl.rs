//! Scalar piecewise-linear functions.
//!
//! A [`PwlFunction`] is stored as breakpoints `t_0 < ... < t_n` with values
//! `f(t_i)`; between breakpoints it interpolates linearly and outside
//! `[t_0, t_n]` it continues with configurable extension slopes (by default
//! the slopes of the end segments).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPwl", into = "RawPwl")]
pub struct PwlFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    left_slope: f64,
    right_slope: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPwl {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right_slope: Option<f64>,
}

impl TryFrom<RawPwl> for PwlFunction {
    type Error = Error;

    fn try_from(raw: RawPwl) -> Result<Self> {
        let f = PwlFunction::new(raw.breakpoints, raw.values)?;
        let left = raw.left_slope.unwrap_or(f.left_slope);
        let right = raw.right_slope.unwrap_or(f.right_slope);
        f.with_extension_slopes(left, right)
    }
}

impl From<PwlFunction> for RawPwl {
    fn from(f: PwlFunction) -> Self {
        let (natural_left, natural_right) = (f.segment_slope(0), f.segment_slope(f.segments() - 1));
        RawPwl {
            left_slope: (f.left_slope != natural_left).then_some(f.left_slope),
            right_slope: (f.right_slope != natural_right).then_some(f.right_slope),
            breakpoints: f.breakpoints,
            values: f.values,
        }
    }
}

/// One hidden unit `coeff * ReLU(weight * x + bias)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluUnit {
    pub weight: f64,
    pub bias: f64,
    pub coeff: f64,
}

/// `f(x) = constant + sum_i coeff_i * ReLU(weight_i * x + bias_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluForm {
    pub constant: f64,
    pub units: Vec<ReluUnit>,
}

impl ReluForm {
    pub fn eval(&self, x: f64) -> f64 {
        self.units
            .iter()
            .fold(self.constant, |acc, u| acc + u.coeff * (u.weight * x + u.bias).max(0.0))
    }

    /// Coefficient of the unit `ReLU(x - shift)`, if present.
    pub fn coefficient_at(&self, shift: f64) -> f64 {
        self.units
            .iter()
            .filter(|u| u.weight == 1.0 && u.bias == -shift)
            .map(|u| u.coeff)
            .sum()
    }
}

impl PwlFunction {
    /// Builds a function with linear continuation of the end segments.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Pwl(format!(
                "need at least 2 breakpoints, got {}",
                breakpoints.len()
            )));
        }
        if breakpoints.len() != values.len() {
            return Err(Error::Pwl(format!(
                "{} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Pwl("non-finite breakpoint or value".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Pwl("breakpoints must be strictly increasing".into()));
        }
        let mut f = PwlFunction {
            breakpoints,
            values,
            left_slope: 0.0,
            right_slope: 0.0,
        };
        f.left_slope = f.segment_slope(0);
        f.right_slope = f.segment_slope(f.segments() - 1);
        Ok(f)
    }

    pub fn with_extension_slopes(mut self, left: f64, right: f64) -> Result<Self> {
        if !left.is_finite() || !right.is_finite() {
            return Err(Error::Pwl("non-finite extension slope".into()));
        }
        self.left_slope = left;
        self.right_slope = right;
        Ok(self)
    }

    /// `min(max(x, 0), 1)`, flat outside `[0, 1]`.
    pub fn clamp_unit() -> Self {
        PwlFunction::new(vec![0.0, 1.0], vec![0.0, 1.0])
            .and_then(|f| f.with_extension_slopes(0.0, 0.0))
            .expect("static clamp is valid")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn extension_slopes(&self) -> (f64, f64) {
        (self.left_slope, self.right_slope)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn segment_slope(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.breakpoints[i + 1] - self.breakpoints[i])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let t = &self.breakpoints;
        let n = t.len() - 1;
        if x <= t[0] {
            return self.values[0] + self.left_slope * (x - t[0]);
        }
        if x >= t[n] {
            return self.values[n] + self.right_slope * (x - t[n]);
        }
        // first index with t[idx] > x; x lies in segment idx - 1
        let idx = t.partition_point(|&b| b <= x);
        let i = idx - 1;
        if x == t[i] {
            return self.values[i];
        }
        let frac = (x - t[i]) / (t[i + 1] - t[i]);
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    /// Points of the graph on `[l, u]`: both endpoints and every breakpoint
    /// strictly inside.
    pub fn graph_on(&self, l: f64, u: f64) -> Vec<(f64, f64)> {
        let mut pts = vec![(l, self.eval(l))];
        pts.extend(
            self.breakpoints
                .iter()
                .zip(&self.values)
                .filter(|(&t, _)| t > l && t < u)
                .map(|(&t, &v)| (t, v)),
        );
        if u > l {
            pts.push((u, self.eval(u)));
        }
        pts
    }

    /// Exact image of `[l, u]`.
    pub fn range_on(&self, l: f64, u: f64) -> (f64, f64) {
        self.graph_on(l, u)
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, v)| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Decomposes the function into a constant plus ReLU units:
    /// `f(t_0) + s_L (x - t_0) + (s_0 - s_L) ReLU(x - t_0)
    ///  + sum_{i=1}^{n-1} (s_i - s_{i-1}) ReLU(x - t_i) + (s_R - s_{n-1}) ReLU(x - t_n)`.
    /// The linear term is carried by the pair `ReLU(x - t_0) - ReLU(t_0 - x)`.
    pub fn relu_form(&self) -> ReluForm {
        let t = &self.breakpoints;
        let n = self.segments();
        let mut units = Vec::new();
        if self.left_slope != 0.0 {
            units.push(ReluUnit {
                weight: 1.0,
                bias: -t[0],
                coeff: self.left_slope,
            });
            units.push(ReluUnit {
                weight: -1.0,
                bias: t[0],
                coeff: -self.left_slope,
            });
        }
        let mut prev = self.left_slope;
        for (i, &ti) in t.iter().enumerate() {
            let slope = if i < n { self.segment_slope(i) } else { self.right_slope };
            let coeff = slope - prev;
            if coeff != 0.0 {
                units.push(ReluUnit {
                    weight: 1.0,
                    bias: -ti,
                    coeff,
                });
            }
            prev = slope;
        }
        ReluForm {
            constant: self.values[0],
            units,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_hits_breakpoints_exactly() {
        let f = PwlFunction::new(vec![-1.0, 0.3, 2.0], vec![0.1, -0.7, 3.3]).unwrap();
        for (t, v) in f.breakpoints().iter().zip(f.values()) {
            assert_eq!(f.eval(*t), *v);
        }
        assert!((f.eval(-0.35) - (0.1 + 0.5 * (-0.8))).abs() < 1e-15);
    }

    #[test]
    fn linear_extension_by_default() {
        let f = PwlFunction::new(vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        assert_eq!(f.eval(-1.0), -2.0);
        assert_eq!(f.eval(3.0), 6.0);
        let c = PwlFunction::clamp_unit();
        assert_eq!(c.eval(-5.0), 0.0);
        assert_eq!(c.eval(5.0), 1.0);
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(PwlFunction::new(vec![0.0], vec![0.0]).is_err());
        assert!(PwlFunction::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(PwlFunction::new(vec![1.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(PwlFunction::new(vec![0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn clamp_relu_form_is_sigma0_minus_sigma1() {
        let form = PwlFunction::clamp_unit().relu_form();
        assert_eq!(form.constant, 0.0);
        assert_eq!(form.units.len(), 2);
        assert_eq!(form.coefficient_at(0.0), 1.0);
        assert_eq!(form.coefficient_at(1.0), -1.0);
    }

    #[test]
    fn range_on_uses_interior_breakpoints() {
        let f = PwlFunction::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(f.range_on(0.5, 1.5), (0.5, 1.0));
    }

    #[test]
    fn serde_keeps_custom_extension() {
        let f = PwlFunction::clamp_unit();
        let s = serde_json::to_string(&f).unwrap();
        let g: PwlFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(f, g);
        let plain: PwlFunction = serde_json::from_str(r#"{"breakpoints":[0,1,2],"values":[0,1,0]}"#).unwrap();
        assert_eq!(plain.extension_slopes(), (1.0, -1.0));
    }
}
