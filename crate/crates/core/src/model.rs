//! Feed-forward classifiers and their exact evaluation.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::pwl::PwlFunction;

/// An `H x W x C` image with pixels in `[0, 1]`, stored row-major as `(h, w, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Config(format!("images have 1 or 3 channels, got {channels}")));
        }
        let expected = height * width * channels;
        if pixels.len() != expected {
            return Err(Error::shape("image pixels", expected, pixels.len()));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    /// Builds an image from values that may have drifted marginally outside
    /// `[0, 1]` through floating-point error; they are clipped.
    pub fn from_clipped(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        Image::new(
            height,
            width,
            channels,
            pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[self.index(row, col, channel)]
    }

    /// Same shape, new pixels (clipped to `[0, 1]`).
    pub fn with_pixels(&self, pixels: Vec<f64>) -> Result<Self> {
        Image::from_clipped(self.height, self.width, self.channels, pixels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl AffineLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::shape("affine bias", weights.nrows(), bias.len()));
        }
        Ok(AffineLayer { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        self.weights.dot(x) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Affine(AffineLayer),
    Relu,
    /// One function per neuron.
    Pwl(Vec<PwlFunction>),
}

impl Layer {
    pub fn affine(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        AffineLayer::new(weights, bias).map(Layer::Affine)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Affine(_) => "affine",
            Layer::Relu => "relu",
            Layer::Pwl(_) => "pwl_activation",
        }
    }

    /// Output dimension given the input dimension, checking compatibility.
    pub fn output_dim(&self, input_dim: usize) -> Result<usize> {
        match self {
            Layer::Affine(a) if a.input_dim() != input_dim => {
                Err(Error::shape("affine input", a.input_dim(), input_dim))
            }
            Layer::Affine(a) => Ok(a.output_dim()),
            Layer::Relu => Ok(input_dim),
            Layer::Pwl(fs) if fs.len() != input_dim => Err(Error::shape("pwl_activation neurons", input_dim, fs.len())),
            Layer::Pwl(_) => Ok(input_dim),
        }
    }

    pub fn apply(&self, x: Array1<f64>) -> Array1<f64> {
        match self {
            Layer::Affine(a) => a.apply(&x),
            Layer::Relu => x.mapv_into(|v| v.max(0.0)),
            Layer::Pwl(fs) => Array1::from_iter(x.iter().zip(fs).map(|(&v, f)| f.eval(v))),
        }
    }
}

/// An ordered borrowed view of layers with a known input dimension, used to
/// evaluate and bound compositions such as `f ∘ g_x` without copying weights.
#[derive(Debug, Clone)]
pub struct LayerChain<'a> {
    input_dim: usize,
    layers: Vec<&'a Layer>,
}

impl<'a> LayerChain<'a> {
    pub fn new(input_dim: usize, layers: impl IntoIterator<Item = &'a Layer>) -> Result<Self> {
        let chain = LayerChain {
            input_dim,
            layers: layers.into_iter().collect(),
        };
        chain.output_dim()?;
        Ok(chain)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[&'a Layer] {
        &self.layers
    }

    /// Dimension entering each layer, followed by the final output dimension.
    pub fn dims(&self) -> Result<Vec<usize>> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        let mut d = self.input_dim;
        dims.push(d);
        for (i, layer) in self.layers.iter().enumerate() {
            d = layer.output_dim(d).map_err(|e| Error::parse(Some(i), e.to_string()))?;
            dims.push(d);
        }
        Ok(dims)
    }

    pub fn output_dim(&self) -> Result<usize> {
        Ok(*self.dims()?.last().unwrap())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Array1<f64>> {
        if input.len() != self.input_dim {
            return Err(Error::shape("network input", self.input_dim, input.len()));
        }
        Ok(self
            .layers
            .iter()
            .fold(Array1::from(input.to_vec()), |x, layer| layer.apply(x)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Vec<f64>,
    pub predicted_class: usize,
}

impl Logits {
    pub fn from_values(values: Vec<f64>) -> Self {
        let predicted_class = argmax(&values);
        Logits {
            values,
            predicted_class,
        }
    }

    /// `f_c - f_j` minimised over `j != c`.
    pub fn min_margin(&self, class: usize) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != class)
            .map(|(_, &v)| self.values[class] - v)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            },
        )
        .0
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    input_shape: (usize, usize, usize),
    num_classes: usize,
    layers: Vec<Layer>,
}

impl NetworkModel {
    pub fn new(input_shape: (usize, usize, usize), num_classes: usize, layers: Vec<Layer>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let model = NetworkModel {
            input_shape,
            num_classes,
            layers,
        };
        let out = model.chain()?.output_dim()?;
        if out != num_classes {
            return Err(Error::parse(
                model.layers.len().checked_sub(1),
                format!("final output dimension {out} does not match num_classes {num_classes}"),
            ));
        }
        Ok(model)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn chain(&self) -> Result<LayerChain<'_>> {
        LayerChain::new(self.input_dim(), &self.layers)
    }

    /// `self ∘ prefix`, where `prefix` maps `prefix_input_dim` values onto this
    /// model's input.
    pub fn chain_with_prefix<'a>(&'a self, prefix_input_dim: usize, prefix: &'a [Layer]) -> Result<LayerChain<'a>> {
        LayerChain::new(prefix_input_dim, prefix.iter().chain(&self.layers))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Logits> {
        let out = self.chain()?.forward(input)?;
        Ok(Logits::from_values(out.to_vec()))
    }

    pub fn classify(&self, image: &Image) -> Result<usize> {
        Ok(self.forward(image.pixels())?.predicted_class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_affine_forward() {
        let m = NetworkModel::new(
            (1, 2, 1),
            2,
            vec![Layer::affine(Array2::eye(2), Array1::zeros(2)).unwrap()],
        )
        .unwrap();
        let out = m.forward(&[0.3, 0.7]).unwrap();
        assert_eq!(out.values, vec![0.3, 0.7]);
        assert_eq!(out.predicted_class, 1);
    }

    #[test]
    fn relu_clips_negative_preactivation() {
        let chain_layers = vec![Layer::affine(array![[1.0, -1.0]], array![0.0]).unwrap(), Layer::Relu];
        let chain = LayerChain::new(2, &chain_layers).unwrap();
        assert_eq!(chain.forward(&[0.2, 0.5]).unwrap()[0], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        let m = NetworkModel::new(
            (1, 2, 1),
            2,
            vec![Layer::affine(Array2::eye(2), Array1::zeros(2)).unwrap()],
        )
        .unwrap();
        assert!(matches!(m.forward(&[0.1]), Err(Error::Shape { .. })));
    }

    #[test]
    fn layer_chaining_is_validated() {
        let layers = vec![
            Layer::affine(Array2::zeros((3, 2)), Array1::zeros(3)).unwrap(),
            Layer::Relu,
            Layer::affine(Array2::zeros((2, 4)), Array1::zeros(2)).unwrap(),
        ];
        let err = NetworkModel::new((1, 2, 1), 2, layers).unwrap_err();
        assert!(matches!(err, Error::Parse { layer: Some(2), .. }));
        let wrong_k = vec![Layer::affine(Array2::zeros((3, 2)), Array1::zeros(3)).unwrap()];
        assert!(NetworkModel::new((1, 2, 1), 2, wrong_k).is_err());
    }

    #[test]
    fn image_rejects_out_of_range_pixels() {
        assert!(Image::new(1, 2, 1, vec![0.0, 1.5]).is_err());
        assert!(Image::new(1, 2, 2, vec![0.0; 4]).is_err());
        assert!(Image::new(1, 2, 1, vec![0.0; 3]).is_err());
        let img = Image::from_clipped(1, 2, 1, vec![-1e-12, 1.0 + 1e-12]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(Logits::from_values(vec![0.5, 0.2, 0.1]).min_margin(0), 0.3);
    }
}
