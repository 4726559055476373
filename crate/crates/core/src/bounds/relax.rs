//! Per-neuron linear relaxations of activation functions.

use crate::error::{Error, Result};
use crate::model::Layer;
use crate::pwl::PwlFunction;

use super::IntervalBox;

/// Lines `lower_slope * z + lower_intercept <= act(z) <= upper_slope * z + upper_intercept`
/// valid for `z` in the neuron's pre-activation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronRelaxation {
    pub lower_slope: f64,
    pub lower_intercept: f64,
    pub upper_slope: f64,
    pub upper_intercept: f64,
}

impl NeuronRelaxation {
    pub const ZERO: NeuronRelaxation = NeuronRelaxation {
        lower_slope: 0.0,
        lower_intercept: 0.0,
        upper_slope: 0.0,
        upper_intercept: 0.0,
    };

    pub const IDENTITY: NeuronRelaxation = NeuronRelaxation {
        lower_slope: 1.0,
        lower_intercept: 0.0,
        upper_slope: 1.0,
        upper_intercept: 0.0,
    };

    pub fn lower(&self, z: f64) -> f64 {
        self.lower_slope * z + self.lower_intercept
    }

    pub fn upper(&self, z: f64) -> f64 {
        self.upper_slope * z + self.upper_intercept
    }

    fn from_lines(lower: (f64, f64), upper: (f64, f64)) -> Self {
        NeuronRelaxation {
            lower_slope: lower.0,
            lower_intercept: lower.1,
            upper_slope: upper.0,
            upper_intercept: upper.1,
        }
    }
}

fn check_interval(l: f64, u: f64) -> Result<()> {
    if !(l.is_finite() && u.is_finite()) || l > u {
        return Err(Error::Interval { lower: l, upper: u });
    }
    Ok(())
}

/// Chord upper line; lower line `z` when `u >= |l|`, else `0`.
pub fn relax_relu(l: f64, u: f64) -> Result<NeuronRelaxation> {
    check_interval(l, u)?;
    if u <= 0.0 {
        return Ok(NeuronRelaxation::ZERO);
    }
    if l >= 0.0 {
        return Ok(NeuronRelaxation::IDENTITY);
    }
    let slope = u / (u - l);
    let lower_slope = if u >= -l { 1.0 } else { 0.0 };
    Ok(NeuronRelaxation {
        lower_slope,
        lower_intercept: 0.0,
        upper_slope: slope,
        upper_intercept: -l * slope,
    })
}

/// Hull-based lines for a piecewise-linear activation on `[l, u]`.
pub fn relax_pwl(f: &PwlFunction, l: f64, u: f64) -> Result<NeuronRelaxation> {
    check_interval(l, u)?;
    let (start, end) = f.domain();
    if l < start || u > end {
        return Err(Error::Domain {
            lower: l,
            upper: u,
            start,
            end,
        });
    }
    Ok(relax_points(&f.graph_on(l, u), true))
}

/// Lines bounding the polyline through `points` (sorted by abscissa) from
/// below and above. With `vertex_search` the lines minimise the maximum gap
/// over all valid lines; otherwise the best hull edge is used.
pub fn relax_points(points: &[(f64, f64)], vertex_search: bool) -> NeuronRelaxation {
    let lower = lower_line(points, vertex_search);
    let negated: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, -y)).collect();
    let (s, b) = lower_line(&negated, vertex_search);
    NeuronRelaxation::from_lines(lower, (-s, -b))
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn lower_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        if let Some(last) = hull.last() {
            if last.0 == p.0 {
                if p.1 < last.1 {
                    hull.pop();
                } else {
                    continue;
                }
            }
        }
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// (max gap, area between polyline and line) for a candidate lower line,
/// after lowering the intercept just enough to be valid at every point.
fn score(points: &[(f64, f64)], slope: f64, intercept: f64) -> (f64, f64, f64) {
    let shortfall = points
        .iter()
        .map(|&(x, y)| y - (slope * x + intercept))
        .fold(f64::INFINITY, f64::min);
    let intercept = if shortfall < 0.0 {
        intercept + shortfall
    } else {
        intercept
    };
    let gap = |&(x, y): &(f64, f64)| y - (slope * x + intercept);
    let mut max_gap = 0.0f64;
    let mut area = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for p in points {
        let g = gap(p);
        max_gap = max_gap.max(g);
        if let Some((x0, g0)) = prev {
            area += 0.5 * (g0 + g) * (p.0 - x0);
        }
        prev = Some((p.0, g));
    }
    (max_gap, area, intercept)
}

fn lower_line(points: &[(f64, f64)], vertex_search: bool) -> (f64, f64) {
    let hull = lower_hull(points);
    if hull.len() < 2 {
        let y = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        return (0.0, y);
    }
    let mut best: Option<(f64, f64, f64, f64)> = None; // (gap, area, slope, intercept)
    let mut consider = |slope: f64, through: (f64, f64)| {
        let (gap, area, intercept) = score(points, slope, through.1 - slope * through.0);
        let better = match best {
            None => true,
            Some((bg, ba, _, _)) => gap < bg - 1e-12 || (gap <= bg + 1e-12 && area < ba - 1e-12),
        };
        if better {
            best = Some((gap, area, slope, intercept));
        }
    };
    let slopes: Vec<f64> = hull.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    for (w, &s) in hull.windows(2).zip(&slopes) {
        consider(s, w[0]);
    }
    if vertex_search {
        for i in 1..hull.len() - 1 {
            let v = hull[i];
            let (lo, hi) = (slopes[i - 1], slopes[i]);
            for q in points.iter().filter(|q| q.0 < v.0) {
                for p in points.iter().filter(|p| p.0 > v.0) {
                    let s = ((p.1 - q.1) / (p.0 - q.0)).clamp(lo, hi);
                    consider(s, v);
                }
            }
        }
    }
    let (_, _, slope, intercept) = best.expect("hull has at least one edge");
    (slope, intercept)
}

/// Relaxations for every neuron of an activation layer.
pub fn relax_layer(layer: &Layer, preact: &IntervalBox) -> Result<Vec<NeuronRelaxation>> {
    match layer {
        Layer::Relu => preact.iter().map(|(l, u)| relax_relu(l, u)).collect(),
        Layer::Pwl(fs) => fs
            .iter()
            .zip(preact.iter())
            .map(|(f, (l, u))| relax_pwl(f, l, u))
            .collect(),
        Layer::Affine(_) => Err(Error::State("affine layers are not relaxed".into())),
    }
}

/// Exact interval image of an activation layer.
pub fn activation_image(layer: &Layer, preact: &IntervalBox) -> IntervalBox {
    match layer {
        Layer::Relu => IntervalBox::from_pairs(preact.iter().map(|(l, u)| (l.max(0.0), u.max(0.0)))),
        Layer::Pwl(fs) => IntervalBox::from_pairs(fs.iter().zip(preact.iter()).map(|(f, (l, u))| f.range_on(l, u))),
        Layer::Affine(_) => preact.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_check(r: &NeuronRelaxation, l: f64, u: f64, act: impl Fn(f64) -> f64) -> f64 {
        (0..=1000)
            .map(|i| l + (u - l) * i as f64 / 1000.0)
            .map(|z| (act(z) - r.lower(z)).min(r.upper(z) - act(z)))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn relu_examples() {
        let r = relax_relu(-1.0, 1.0).unwrap();
        assert_eq!((r.upper_slope, r.upper_intercept), (0.5, 0.5));
        assert_eq!((r.lower_slope, r.lower_intercept), (1.0, 0.0));
        assert_eq!(relax_relu(2.0, 5.0).unwrap(), NeuronRelaxation::IDENTITY);
        assert_eq!(relax_relu(-4.0, -1.0).unwrap(), NeuronRelaxation::ZERO);
        let r = relax_relu(-3.0, 1.0).unwrap();
        assert_eq!((r.upper_slope, r.upper_intercept, r.lower_slope), (0.25, 0.75, 0.0));
        assert!(grid_check(&r, -3.0, 1.0, |z| z.max(0.0)) >= -1e-12);
        assert!(matches!(relax_relu(1.0, 0.0), Err(Error::Interval { .. })));
    }

    #[test]
    fn clamp_on_linear_part_is_exact() {
        let r = relax_pwl(&clamp_wide(), 0.2, 0.8).unwrap();
        assert!((r.lower_slope - 1.0).abs() < 1e-12 && r.lower_intercept.abs() < 1e-12);
        assert!((r.upper_slope - 1.0).abs() < 1e-12 && r.upper_intercept.abs() < 1e-12);
    }

    fn clamp_wide() -> PwlFunction {
        PwlFunction::new(vec![-2.0, 0.0, 1.0, 3.0], vec![0.0, 0.0, 1.0, 1.0]).unwrap()
    }

    #[test]
    fn clamp_straddling_zero() {
        let f = clamp_wide();
        let r = relax_pwl(&f, -0.5, 0.5).unwrap();
        assert!((r.upper_slope - 0.5).abs() < 1e-12);
        assert!((r.upper_intercept - 0.25).abs() < 1e-12);
        assert!((r.lower_slope - 0.5).abs() < 1e-12);
        assert!(r.lower_intercept.abs() < 1e-12);
        assert!(grid_check(&r, -0.5, 0.5, |z| f.eval(z)) >= -1e-12);
    }

    #[test]
    fn outside_domain_is_rejected() {
        assert!(matches!(relax_pwl(&clamp_wide(), -3.0, 0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn degenerate_interval_is_flat() {
        let r = relax_pwl(&clamp_wide(), 0.5, 0.5).unwrap();
        assert_eq!(r.lower(0.5), 0.5);
        assert_eq!(r.upper(0.5), 0.5);
    }
}
