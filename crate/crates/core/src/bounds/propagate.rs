use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Layer, LayerChain};

use super::relax::{activation_image, relax_layer, NeuronRelaxation};
use super::{concretize, AffineBounds, IntervalBox};

/// Which output functions to bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Every output coordinate.
    Logits,
    /// `f_c - f_j` for every `j != c`, in increasing `j`.
    Margins { class: usize },
}

/// Rows `e_c - e_j` for `j != class`.
pub fn margin_matrix(num_outputs: usize, class: usize) -> Array2<f64> {
    let mut c = Array2::zeros((num_outputs.saturating_sub(1), num_outputs));
    for (row, j) in (0..num_outputs).filter(|&j| j != class).enumerate() {
        c[[row, class]] = 1.0;
        c[[row, j]] = -1.0;
    }
    c
}

impl Target {
    fn matrix(&self, num_outputs: usize) -> Result<Array2<f64>> {
        match *self {
            Target::Logits => Ok(Array2::eye(num_outputs)),
            Target::Margins { class } if class < num_outputs => Ok(margin_matrix(num_outputs, class)),
            Target::Margins { class } => Err(Error::shape("target class", num_outputs, class)),
        }
    }
}

fn positive(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v.max(0.0))
}

fn negative(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v.min(0.0))
}

/// Linear bounds of the current layer's values in the parameter.
struct Symbolic {
    al: Array2<f64>,
    bl: Array1<f64>,
    au: Array2<f64>,
    bu: Array1<f64>,
    /// Lower and upper functions coincide.
    exact: bool,
}

impl Symbolic {
    fn from_input(input: &AffineBounds) -> Self {
        let exact = input.a_lower == input.a_upper && input.b_lower == input.b_upper;
        Symbolic {
            al: input.a_lower.clone(),
            bl: input.b_lower.clone(),
            au: input.a_upper.clone(),
            bu: input.b_upper.clone(),
            exact,
        }
    }

    fn affine(&self, w: &Array2<f64>, bias: &Array1<f64>) -> Symbolic {
        if self.exact {
            let a = w.dot(&self.al);
            let b = w.dot(&self.bl) + bias;
            return Symbolic {
                al: a.clone(),
                bl: b.clone(),
                au: a,
                bu: b,
                exact: true,
            };
        }
        let (wp, wn) = (positive(w), negative(w));
        Symbolic {
            al: wp.dot(&self.al) + wn.dot(&self.au),
            bl: wp.dot(&self.bl) + wn.dot(&self.bu) + bias,
            au: wp.dot(&self.au) + wn.dot(&self.al),
            bu: wp.dot(&self.bu) + wn.dot(&self.bl) + bias,
            exact: false,
        }
    }

    fn activate(&self, relax: &[NeuronRelaxation]) -> Symbolic {
        let mut out = Symbolic {
            al: self.al.clone(),
            bl: self.bl.clone(),
            au: self.au.clone(),
            bu: self.bu.clone(),
            exact: self.exact,
        };
        for (r, rel) in relax.iter().enumerate() {
            let lines_match = rel.lower_slope == rel.upper_slope && rel.lower_intercept == rel.upper_intercept;
            if !(lines_match && self.exact) {
                out.exact = false;
            }
            let (ls, us) = (rel.lower_slope, rel.upper_slope);
            let (src_l, src_bl) = if ls >= 0.0 {
                (self.al.row(r), self.bl[r])
            } else {
                (self.au.row(r), self.bu[r])
            };
            out.al.row_mut(r).assign(&src_l.mapv(|v| ls * v));
            out.bl[r] = ls * src_bl + rel.lower_intercept;
            let (src_u, src_bu) = if us >= 0.0 {
                (self.au.row(r), self.bu[r])
            } else {
                (self.al.row(r), self.bl[r])
            };
            out.au.row_mut(r).assign(&src_u.mapv(|v| us * v));
            out.bu[r] = us * src_bu + rel.upper_intercept;
        }
        out
    }

    fn concretize(&self, domain: &IntervalBox) -> IntervalBox {
        IntervalBox::from_pairs(
            concretize(&self.al, &self.bl, domain, false)
                .into_iter()
                .zip(concretize(&self.au, &self.bu, domain, true)),
        )
    }
}

fn interval_affine(w: &Array2<f64>, bias: &Array1<f64>, x: &IntervalBox) -> IntervalBox {
    let l = Array1::from(x.lower.clone());
    let u = Array1::from(x.upper.clone());
    let (wp, wn) = (positive(w), negative(w));
    let lo = wp.dot(&l) + wn.dot(&u) + bias;
    let hi = wp.dot(&u) + wn.dot(&l) + bias;
    IntervalBox::from_pairs(lo.into_iter().zip(hi))
}

/// Certified intervals for the values entering every layer of `chain`,
/// followed by the output interval (`chain.layers().len() + 1` boxes).
pub fn forward_intervals(chain: &LayerChain<'_>, input: &AffineBounds) -> Result<Vec<IntervalBox>> {
    sweep_intervals(chain, input, false)
}

fn sweep_intervals(chain: &LayerChain<'_>, input: &AffineBounds, tighten: bool) -> Result<Vec<IntervalBox>> {
    if input.rows() != chain.input_dim() {
        return Err(Error::shape("input bounds rows", chain.input_dim(), input.rows()));
    }
    chain.dims()?;
    let domain = &input.domain;
    let mut sym = Symbolic::from_input(input);
    let mut boxes = vec![sym.concretize(domain)];
    for (i, layer) in chain.layers().iter().enumerate() {
        if tighten && !matches!(layer, Layer::Affine(_)) {
            let prefix = LayerChain::new(chain.input_dim(), chain.layers()[..i].iter().copied())?;
            let b = backward_bounds(&prefix, input, &boxes[..i], Target::Logits)?.to_box();
            boxes[i] = boxes[i].intersect(&b);
        }
        let prev = boxes.last().expect("at least the input box");
        let (next_sym, direct) = match layer {
            Layer::Affine(a) => (
                sym.affine(&a.weights, &a.bias),
                interval_affine(&a.weights, &a.bias, prev),
            ),
            Layer::Relu | Layer::Pwl(_) => {
                let relax = relax_layer(layer, prev)?;
                (sym.activate(&relax), activation_image(layer, prev))
            }
        };
        sym = next_sym;
        let b = sym.concretize(domain).intersect(&direct);
        boxes.push(b);
    }
    Ok(boxes)
}

/// Output bounds expressed linearly in the chain's input `x`:
/// `lambda_lower x + const_lower <= C f(x) <= lambda_upper x + const_upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLinearBounds {
    pub lambda_lower: Array2<f64>,
    pub const_lower: Array1<f64>,
    pub lambda_upper: Array2<f64>,
    pub const_upper: Array1<f64>,
}

impl InputLinearBounds {
    /// Substitutes `A_L y + b_L <= x <= A_U y + b_U` to land in parameter space.
    pub fn substitute(&self, input: &AffineBounds) -> Result<AffineBounds> {
        if input.rows() != self.lambda_lower.ncols() {
            return Err(Error::shape(
                "substituted input rows",
                self.lambda_lower.ncols(),
                input.rows(),
            ));
        }
        let (llp, lln) = (positive(&self.lambda_lower), negative(&self.lambda_lower));
        let (lup, lun) = (positive(&self.lambda_upper), negative(&self.lambda_upper));
        AffineBounds::new(
            llp.dot(&input.a_lower) + lln.dot(&input.a_upper),
            llp.dot(&input.b_lower) + lln.dot(&input.b_upper) + &self.const_lower,
            lup.dot(&input.a_upper) + lun.dot(&input.a_lower),
            lup.dot(&input.b_upper) + lun.dot(&input.b_lower) + &self.const_upper,
            input.domain.clone(),
        )
    }
}

/// Backward pass from the target rows to the chain input, relaxing every
/// activation layer over `preact[i]` (the interval entering layer `i`).
pub fn backward_to_input(chain: &LayerChain<'_>, preact: &[IntervalBox], target: Target) -> Result<InputLinearBounds> {
    let dims = chain.dims()?;
    let c = target.matrix(*dims.last().unwrap())?;
    let m = c.nrows();
    let mut lam_l = c.clone();
    let mut lam_u = c;
    let mut const_l = Array1::<f64>::zeros(m);
    let mut const_u = Array1::<f64>::zeros(m);
    for (i, layer) in chain.layers().iter().enumerate().rev() {
        match layer {
            Layer::Affine(a) => {
                const_l = const_l + lam_l.dot(&a.bias);
                const_u = const_u + lam_u.dot(&a.bias);
                lam_l = lam_l.dot(&a.weights);
                lam_u = lam_u.dot(&a.weights);
            }
            Layer::Relu | Layer::Pwl(_) => {
                let b = preact
                    .get(i)
                    .ok_or_else(|| Error::State(format!("missing pre-activation interval for layer {i}")))?;
                if b.dim() != dims[i] {
                    return Err(Error::shape(
                        format!("pre-activation interval of layer {i}"),
                        dims[i],
                        b.dim(),
                    ));
                }
                let relax = relax_layer(layer, b)?;
                for row in 0..m {
                    let mut cl = 0.0;
                    let mut cu = 0.0;
                    Zip::from(lam_l.row_mut(row))
                        .and(lam_u.row_mut(row))
                        .and(&ndarray::ArrayView1::from(&relax[..]))
                        .for_each(|ll, lu, r| {
                            if *ll >= 0.0 {
                                cl += *ll * r.lower_intercept;
                                *ll *= r.lower_slope;
                            } else {
                                cl += *ll * r.upper_intercept;
                                *ll *= r.upper_slope;
                            }
                            if *lu >= 0.0 {
                                cu += *lu * r.upper_intercept;
                                *lu *= r.upper_slope;
                            } else {
                                cu += *lu * r.lower_intercept;
                                *lu *= r.lower_slope;
                            }
                        });
                    const_l[row] += cl;
                    const_u[row] += cu;
                }
            }
        }
    }
    Ok(InputLinearBounds {
        lambda_lower: lam_l,
        const_lower: const_l,
        lambda_upper: lam_u,
        const_upper: const_u,
    })
}

/// Linear bounds on the target rows in the parameter of `input`.
pub fn backward_bounds(
    chain: &LayerChain<'_>,
    input: &AffineBounds,
    preact: &[IntervalBox],
    target: Target,
) -> Result<AffineBounds> {
    backward_to_input(chain, preact, target)?.substitute(input)
}

/// How the intervals entering each activation layer are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    /// One forward pass of linear bounds in the parameter.
    Forward,
    /// The forward pass, tightened by a backward pass from every activation
    /// layer down to the parameter.
    #[default]
    Backward,
}

/// Per-layer intervals by `method`, in the layout of [`forward_intervals`].
pub fn layer_intervals(
    chain: &LayerChain<'_>,
    input: &AffineBounds,
    method: IntervalMethod,
) -> Result<Vec<IntervalBox>> {
    match method {
        IntervalMethod::Forward => forward_intervals(chain, input),
        IntervalMethod::Backward => backward_intervals(chain, input),
    }
}

/// Like [`forward_intervals`], but every activation layer's input interval
/// is first tightened by a backward pass from that layer to the input.
pub fn backward_intervals(chain: &LayerChain<'_>, input: &AffineBounds) -> Result<Vec<IntervalBox>> {
    sweep_intervals(chain, input, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sign_flip_preactivation() {
        let layers = vec![Layer::affine(array![[1.0], [-1.0]], array![0.0, 0.0]).unwrap()];
        let chain = LayerChain::new(1, &layers).unwrap();
        let input = AffineBounds::identity(IntervalBox::new(vec![-2.0], vec![3.0]).unwrap());
        let boxes = forward_intervals(&chain, &input).unwrap();
        assert_eq!(boxes[1].lower, vec![-2.0, -3.0]);
        assert_eq!(boxes[1].upper, vec![3.0, 2.0]);
    }

    #[test]
    fn single_relu_lower_bound() {
        let layers = vec![Layer::Relu];
        let chain = LayerChain::new(1, &layers).unwrap();
        let input = AffineBounds::identity(IntervalBox::new(vec![-1.0], vec![1.0]).unwrap());
        let pre = forward_intervals(&chain, &input).unwrap();
        let out = backward_bounds(&chain, &input, &pre, Target::Logits).unwrap();
        assert_eq!(out.concretize_min(), vec![-1.0]);
        assert_eq!(out.concretize_max(), vec![1.0]);
    }

    #[test]
    fn missing_preactivation_is_state_error() {
        let layers = vec![Layer::affine(array![[1.0]], array![0.0]).unwrap(), Layer::Relu];
        let chain = LayerChain::new(1, &layers).unwrap();
        assert!(matches!(
            backward_to_input(&chain, &[], Target::Logits),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn margin_rows() {
        let c = margin_matrix(3, 1);
        assert_eq!(c, array![[-1.0, 1.0, 0.0], [0.0, 1.0, -1.0]]);
    }

    #[test]
    fn backward_intervals_nest_inside_forward() {
        let layers = vec![
            Layer::affine(array![[1.0, -2.0], [0.5, 1.0], [-1.0, 1.5]], array![0.1, -0.2, 0.0]).unwrap(),
            Layer::Relu,
            Layer::affine(array![[1.0, -1.0, 2.0], [-0.5, 1.0, 1.0]], array![0.0, 0.3]).unwrap(),
            Layer::Relu,
            Layer::affine(array![[1.0, -1.0]], array![0.0]).unwrap(),
        ];
        let chain = LayerChain::new(2, &layers).unwrap();
        let input = AffineBounds::identity(IntervalBox::new(vec![-1.0, -0.5], vec![1.0, 0.5]).unwrap());
        let fwd = forward_intervals(&chain, &input).unwrap();
        let bwd = layer_intervals(&chain, &input, IntervalMethod::Backward).unwrap();
        for (f, b) in fwd.iter().zip(&bwd) {
            assert!(f.contains_box(b));
        }
        for i in 0..=20 {
            for j in 0..=20 {
                let x = [-1.0 + 0.1 * i as f64, -0.5 + 0.05 * j as f64];
                let mut v = x.to_vec();
                for (k, layer) in layers.iter().enumerate() {
                    assert!(bwd[k].contains(&v, 1e-12));
                    v = layer.apply(Array1::from(v)).to_vec();
                }
                assert!(bwd[layers.len()].contains(&v, 1e-12));
            }
        }
    }
}
