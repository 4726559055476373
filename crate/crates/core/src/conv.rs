//! Lowering of 2-D convolutions to dense affine layers.
//!
//! Activations are laid out row-major as `(h, w, c)` on both sides of the
//! convolution, matching [`Image`](crate::model::Image).

use ndarray::{Array1, Array2, Array4};

use crate::error::{Error, Result};
use crate::model::Layer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
}

impl std::str::FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PadMode::Zero),
            other => Err(Error::Config(format!(
                "unsupported padding mode {other:?} (only \"zero\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    /// `(height, width, channels)` of the input activation.
    pub input_shape: (usize, usize, usize),
    /// `(out_channels, in_channels, kernel_h, kernel_w)`.
    pub filters: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    pub padding: usize,
    pub pad: PadMode,
}

impl ConvSpec {
    pub fn output_shape(&self) -> Result<(usize, usize, usize)> {
        let (h, w, c) = self.input_shape;
        let (oc, ic, kh, kw) = self.filters.dim();
        if ic != c {
            return Err(Error::shape("conv input channels", c, ic));
        }
        if self.bias.len() != oc {
            return Err(Error::shape("conv bias", oc, self.bias.len()));
        }
        if self.stride == 0 {
            return Err(Error::Config("conv stride must be at least 1".into()));
        }
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if kh == 0 || kw == 0 || kh > ph || kw > pw {
            return Err(Error::Config(format!(
                "kernel {kh}x{kw} does not fit padded input {ph}x{pw}"
            )));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1, oc))
    }
}

/// Explicit weight matrix whose product with the flattened input equals the
/// convolution of that input.
pub fn lower_conv_to_affine(conv: &ConvSpec) -> Result<Layer> {
    let (h, w, c) = conv.input_shape;
    let (oh, ow, oc) = conv.output_shape()?;
    let (_, _, kh, kw) = conv.filters.dim();
    let pad = conv.padding as isize;
    let mut weights = Array2::<f64>::zeros((oh * ow * oc, h * w * c));
    let mut bias = Array1::<f64>::zeros(oh * ow * oc);
    for orow in 0..oh {
        for ocol in 0..ow {
            for o in 0..oc {
                let row = (orow * ow + ocol) * oc + o;
                bias[row] = conv.bias[o];
                for ki in 0..kh {
                    let r = (orow * conv.stride + ki) as isize - pad;
                    if r < 0 || r >= h as isize {
                        continue;
                    }
                    for kj in 0..kw {
                        let s = (ocol * conv.stride + kj) as isize - pad;
                        if s < 0 || s >= w as isize {
                            continue;
                        }
                        for ch in 0..c {
                            let col = (r as usize * w + s as usize) * c + ch;
                            weights[[row, col]] += conv.filters[[o, ch, ki, kj]];
                        }
                    }
                }
            }
        }
    }
    Layer::affine(weights, bias)
}
