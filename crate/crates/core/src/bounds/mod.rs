//! Linear relaxation bound propagation.
//!
//! The engine bounds a [`LayerChain`] whose input `x` is itself bounded by
//! linear functions of a low-dimensional parameter `y` over a box:
//! `A_L y + b_L <= x <= A_U y + b_U`. Pre-activation intervals come from a
//! forward pass that carries linear bounds in `y` through every layer
//! (sign-split through affine layers, relaxation lines through activations)
//! and concretizes them per layer, optionally tightened by a backward pass
//! from each activation layer. The output bounds come from one backward
//! pass that composes the relaxations from the target rows down to `x` and
//! finally substitutes the input bounds.

mod propagate;
mod relax;

pub use propagate::{
    backward_bounds, backward_intervals, backward_to_input, forward_intervals, layer_intervals, margin_matrix,
    InputLinearBounds, IntervalMethod, Target,
};
pub use relax::{activation_image, relax_layer, relax_points, relax_pwl, relax_relu, NeuronRelaxation};

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Per-coordinate intervals `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::shape("box bounds", lower.len(), upper.len()));
        }
        if let Some((&l, &u)) = lower
            .iter()
            .zip(&upper)
            .find(|(l, u)| !(l.is_finite() && u.is_finite()) || l > u)
        {
            return Err(Error::Interval { lower: l, upper: u });
        }
        Ok(IntervalBox { lower, upper })
    }

    pub fn point(x: &[f64]) -> Self {
        IntervalBox {
            lower: x.to_vec(),
            upper: x.to_vec(),
        }
    }

    /// `[-radius, radius]^dim`.
    pub fn symmetric(dim: usize, radius: f64) -> Self {
        IntervalBox {
            lower: vec![-radius; dim],
            upper: vec![radius; dim],
        }
    }

    pub(crate) fn from_pairs(pairs: impl Iterator<Item = (f64, f64)>) -> Self {
        let (lower, upper) = pairs.unzip();
        IntervalBox { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.lower.iter().copied().zip(self.upper.iter().copied())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.iter().zip(x).all(|((l, u), &v)| v >= l - tol && v <= u + tol)
    }

    pub fn contains_box(&self, other: &IntervalBox) -> bool {
        other.dim() == self.dim()
            && self
                .iter()
                .zip(other.iter())
                .all(|((l, u), (ol, ou))| l <= ol && ou <= u)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.iter().map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.iter().map(|(l, u)| u - l).collect()
    }

    /// Componentwise min/max hull of several boxes.
    pub fn merge<'a>(boxes: impl IntoIterator<Item = &'a IntervalBox>) -> Result<Self> {
        let mut iter = boxes.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::State("cannot merge an empty set of boxes".into()))?
            .clone();
        iter.try_fold(first, |mut acc, b| {
            if b.dim() != acc.dim() {
                return Err(Error::shape("merged box", acc.dim(), b.dim()));
            }
            for i in 0..acc.dim() {
                acc.lower[i] = acc.lower[i].min(b.lower[i]);
                acc.upper[i] = acc.upper[i].max(b.upper[i]);
            }
            Ok(acc)
        })
    }

    /// Componentwise intersection; a crossing caused by rounding collapses
    /// to the midpoint.
    pub fn intersect(&self, other: &IntervalBox) -> IntervalBox {
        IntervalBox::from_pairs(self.iter().zip(other.iter()).map(|((l, u), (ol, ou))| {
            let (lo, hi) = (l.max(ol), u.min(ou));
            if lo <= hi {
                (lo, hi)
            } else {
                let m = 0.5 * (lo + hi);
                (m, m)
            }
        }))
    }

    /// Splits into `parts` equal pieces along every axis of positive width
    /// (Cartesian product), in lexicographic order.
    pub fn split_uniform(&self, parts: usize) -> Vec<IntervalBox> {
        let parts = parts.max(1);
        let mut cells = vec![IntervalBox {
            lower: Vec::new(),
            upper: Vec::new(),
        }];
        for (l, u) in self.iter() {
            let parts = if u > l { parts } else { 1 };
            let step = (u - l) / parts as f64;
            let pieces: Vec<(f64, f64)> = (0..parts)
                .map(|i| {
                    let lo = l + step * i as f64;
                    let hi = if i + 1 == parts { u } else { l + step * (i + 1) as f64 };
                    (lo, hi)
                })
                .collect();
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    pieces.iter().map(move |&(lo, hi)| {
                        let mut c = c.clone();
                        c.lower.push(lo);
                        c.upper.push(hi);
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

/// Linear lower and upper bounds `A_L y + b_L <= g(y) <= A_U y + b_U`
/// valid for `y` in `domain`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBounds {
    pub a_lower: Array2<f64>,
    pub b_lower: Array1<f64>,
    pub a_upper: Array2<f64>,
    pub b_upper: Array1<f64>,
    pub domain: IntervalBox,
}

impl AffineBounds {
    pub fn new(
        a_lower: Array2<f64>,
        b_lower: Array1<f64>,
        a_upper: Array2<f64>,
        b_upper: Array1<f64>,
        domain: IntervalBox,
    ) -> Result<Self> {
        if a_lower.dim() != a_upper.dim() {
            return Err(Error::shape("A_U rows", a_lower.nrows(), a_upper.nrows()));
        }
        if b_lower.len() != a_lower.nrows() || b_upper.len() != a_lower.nrows() {
            return Err(Error::shape(
                "bias rows",
                a_lower.nrows(),
                b_lower.len().min(b_upper.len()),
            ));
        }
        if a_lower.ncols() != domain.dim() {
            return Err(Error::shape("bound columns", domain.dim(), a_lower.ncols()));
        }
        Ok(AffineBounds {
            a_lower,
            b_lower,
            a_upper,
            b_upper,
            domain,
        })
    }

    /// `y <= x <= y` over `domain`: the input is the parameter itself.
    pub fn identity(domain: IntervalBox) -> Self {
        let n = domain.dim();
        AffineBounds {
            a_lower: Array2::eye(n),
            b_lower: Array1::zeros(n),
            a_upper: Array2::eye(n),
            b_upper: Array1::zeros(n),
            domain,
        }
    }

    /// Constant bounds equal to a box over a parameter `domain`.
    pub fn constant(values: &IntervalBox, domain: IntervalBox) -> Self {
        let n = values.dim();
        AffineBounds {
            a_lower: Array2::zeros((n, domain.dim())),
            b_lower: Array1::from(values.lower.clone()),
            a_upper: Array2::zeros((n, domain.dim())),
            b_upper: Array1::from(values.upper.clone()),
            domain,
        }
    }

    pub fn rows(&self) -> usize {
        self.a_lower.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.a_lower.ncols()
    }

    pub fn eval_lower(&self, y: &[f64]) -> Array1<f64> {
        self.a_lower.dot(&ArrayView1::from(y)) + &self.b_lower
    }

    pub fn eval_upper(&self, y: &[f64]) -> Array1<f64> {
        self.a_upper.dot(&ArrayView1::from(y)) + &self.b_upper
    }

    /// Exact minimum of each lower row over the bounds' own domain.
    pub fn concretize_min(&self) -> Vec<f64> {
        concretize(&self.a_lower, &self.b_lower, &self.domain, false)
    }

    pub fn concretize_max(&self) -> Vec<f64> {
        concretize(&self.a_upper, &self.b_upper, &self.domain, true)
    }

    /// Minimum of each lower row over a sub-box of the domain.
    pub fn concretize_min_on(&self, region: &IntervalBox) -> Vec<f64> {
        concretize(&self.a_lower, &self.b_lower, region, false)
    }

    pub fn concretize_max_on(&self, region: &IntervalBox) -> Vec<f64> {
        concretize(&self.a_upper, &self.b_upper, region, true)
    }

    pub fn to_box(&self) -> IntervalBox {
        IntervalBox::from_pairs(self.concretize_min().into_iter().zip(self.concretize_max()))
    }

    /// Rows stacked: `self` first, then `other` (same parameter domain).
    pub fn stack(&self, other: &AffineBounds) -> Result<AffineBounds> {
        if self.domain != other.domain {
            return Err(Error::State("stacked bounds must share a domain".into()));
        }
        let cat2 = |a: &Array2<f64>, b: &Array2<f64>| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("column counts match")
        };
        let cat1 = |a: &Array1<f64>, b: &Array1<f64>| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("1-d concat")
        };
        AffineBounds::new(
            cat2(&self.a_lower, &other.a_lower),
            cat1(&self.b_lower, &other.b_lower),
            cat2(&self.a_upper, &other.a_upper),
            cat1(&self.b_upper, &other.b_upper),
            self.domain.clone(),
        )
    }
}

/// `sum_i min(A[r,i] l_i, A[r,i] u_i) + b[r]` per row (or the max when `upper`).
pub fn concretize(a: &Array2<f64>, b: &Array1<f64>, region: &IntervalBox, upper: bool) -> Vec<f64> {
    a.outer_iter()
        .zip(b.iter())
        .map(|(row, &bias)| {
            row.iter().zip(region.iter()).fold(bias, |acc, (&w, (l, u))| {
                let (x, y) = (w * l, w * u);
                acc + if upper { x.max(y) } else { x.min(y) }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn concretize_small_example() {
        let region = IntervalBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let v = concretize(&array![[2.0, -3.0]], &array![1.0], &region, false);
        assert_eq!(v, vec![-2.0]);
        let v = concretize(&Array2::zeros((1, 2)), &array![0.7], &region, false);
        assert_eq!(v, vec![0.7]);
    }

    #[test]
    fn merge_takes_min_and_max() {
        let a = IntervalBox::new(vec![-1.0], vec![2.0]).unwrap();
        let b = IntervalBox::new(vec![0.0], vec![3.0]).unwrap();
        let m = IntervalBox::merge([&a, &b]).unwrap();
        assert_eq!((m.lower[0], m.upper[0]), (-1.0, 3.0));
        assert!(m.contains_box(&a) && m.contains_box(&b));
    }

    #[test]
    fn invalid_box_rejected() {
        assert!(matches!(
            IntervalBox::new(vec![1.0], vec![0.0]),
            Err(Error::Interval { .. })
        ));
        assert!(IntervalBox::new(vec![f64::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn split_uniform_covers_box() {
        let b = IntervalBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        let parts = b.split_uniform(4);
        assert_eq!(parts.len(), 16);
        assert_eq!(IntervalBox::merge(&parts).unwrap(), b);
        let flat = IntervalBox::new(vec![0.0, 0.5], vec![1.0, 0.5]).unwrap();
        assert_eq!(flat.split_uniform(3).len(), 3);
    }
}
