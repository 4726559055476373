//! Color-space semantic perturbations.
//!
//! Each transform is a function of a global parameter vector `ε` shared by
//! every pixel. The `build_*_sp` functions compile it into an exact
//! `affine -> ReLU -> affine` network mapping `ε` to the perturbed pixels;
//! the `apply_*` functions evaluate the transform directly.
//!
//! Hue is measured on the `[0, 6)` scale (60° per unit).

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::{Image, Layer, LayerChain};
use crate::pwl::{PwlFunction, ReluForm};

/// Saturation below this is treated as gray.
pub const GRAY_SATURATION: f64 = 1e-6;
/// `|2l - 1|` above `1 - EXTREME_LIGHTNESS` is treated as pure black/white.
pub const EXTREME_LIGHTNESS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HslPixel {
    /// Hue in `[0, 6)`.
    pub h: f64,
    pub s: f64,
    pub l: f64,
    rgb: [f64; 3],
}

impl HslPixel {
    /// Chroma `d = (1 - |2l - 1|) s`.
    pub fn chroma(&self) -> f64 {
        (1.0 - (2.0 * self.l - 1.0).abs()) * self.s
    }

    /// `m = l - d / 2`.
    pub fn offset(&self) -> f64 {
        self.l - self.chroma() / 2.0
    }

    /// `(c - l) / s` per channel; zero for gray pixels.
    pub fn saturation_scales(&self) -> [f64; 3] {
        if self.s < GRAY_SATURATION {
            return [0.0; 3];
        }
        self.rgb.map(|c| (c - self.l) / self.s)
    }

    /// `(c - l) / (1 - |2l - 1|)` per channel; zero at pure black or white.
    pub fn lightness_scales(&self) -> [f64; 3] {
        let denom = 1.0 - (2.0 * self.l - 1.0).abs();
        if denom < EXTREME_LIGHTNESS {
            return [0.0; 3];
        }
        self.rgb.map(|c| (c - self.l) / denom)
    }

    pub fn rgb(&self) -> [f64; 3] {
        self.rgb
    }
}

pub fn rgb_to_hsl(r: f64, g: f64, b: f64) -> HslPixel {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let l = 0.5 * (max + min);
    let (h, s) = if chroma <= 0.0 {
        (0.0, 0.0)
    } else {
        let h = if max == r {
            ((g - b) / chroma).rem_euclid(6.0)
        } else if max == g {
            (b - r) / chroma + 2.0
        } else {
            (r - g) / chroma + 4.0
        };
        let denom = 1.0 - (2.0 * l - 1.0).abs();
        let s = if denom > 0.0 { (chroma / denom).min(1.0) } else { 0.0 };
        (if h >= 6.0 { h - 6.0 } else { h }, s)
    };
    HslPixel {
        h,
        s,
        l,
        rgb: [r, g, b],
    }
}

/// `(φ_R, φ_G, φ_B)` of the color wheel at hue `h` (taken modulo 6).
pub fn hue_wheel(h: f64) -> [f64; 3] {
    let h = h.rem_euclid(6.0);
    let v = 1.0 - ((h % 2.0) - 1.0).abs();
    match h as usize {
        0 => [1.0, v, 0.0],
        1 => [v, 1.0, 0.0],
        2 => [0.0, 1.0, v],
        3 => [0.0, v, 1.0],
        4 => [v, 0.0, 1.0],
        _ => [1.0, 0.0, v],
    }
}

pub fn hsl_to_rgb(h: f64, s: f64, l: f64) -> [f64; 3] {
    let chroma = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let m = l - chroma / 2.0;
    hue_wheel(h).map(|phi| chroma * phi + m)
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// `φ^h_channel` on `[0, 6]` with flat continuation, the form whose ReLU
/// expansion is the textbook one (e.g. `1 + σ_2 + σ_4 - σ_5 - σ_1` for red).
pub fn hue_channel_pwl(channel: usize) -> PwlFunction {
    let ts: Vec<f64> = (0..=6).map(f64::from).collect();
    let vs = ts.iter().map(|&t| hue_wheel(t)[channel]).collect();
    PwlFunction::new(ts, vs)
        .and_then(|f| f.with_extension_slopes(0.0, 0.0))
        .expect("hue wheel breakpoints are valid")
}

/// Periodic extension of `φ^h_channel` over `[-6, 12]`, so `h + ε` needs no
/// wrapping for any hue `h` in `[0, 6)` and `|ε| <= 6`.
pub fn hue_channel_periodic(channel: usize) -> PwlFunction {
    let ts: Vec<f64> = (-6..=12).map(f64::from).collect();
    let vs = ts.iter().map(|&t| hue_wheel(t)[channel]).collect();
    PwlFunction::new(ts, vs).expect("hue wheel breakpoints are valid")
}

/// `φ^s(s') = min(max(s', 0), 1)`.
pub fn saturation_pwl() -> PwlFunction {
    PwlFunction::clamp_unit()
}

/// `φ^l_1(l') = 1 - |2 min(max(l', 0), 1) - 1|`.
pub fn lightness_scale_pwl() -> PwlFunction {
    PwlFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0])
        .and_then(|f| f.with_extension_slopes(0.0, 0.0))
        .expect("static breakpoints are valid")
}

/// `φ^l_2(l') = min(max(l', 0), 1)`.
pub fn lightness_offset_pwl() -> PwlFunction {
    PwlFunction::clamp_unit()
}

/// Single-input `affine -> ReLU -> affine` network evaluating `f` exactly.
pub fn pwl_to_relu(f: &PwlFunction) -> Result<Vec<Layer>> {
    let form = f.relu_form();
    let n = form.units.len();
    let w1 = Array2::from_shape_fn((n, 1), |(i, _)| form.units[i].weight);
    let b1 = Array1::from_iter(form.units.iter().map(|u| u.bias));
    let w2 = Array2::from_shape_fn((1, n), |(_, j)| form.units[j].coeff);
    Ok(vec![
        Layer::affine(w1, b1)?,
        Layer::Relu,
        Layer::affine(w2, Array1::from(vec![form.constant]))?,
    ])
}

/// A semantic perturbation sub-network mapping `param_dim` parameters onto
/// the pixels of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SpNetwork {
    pub param_dim: usize,
    pub layers: Vec<Layer>,
}

impl SpNetwork {
    pub fn chain(&self) -> Result<LayerChain<'_>> {
        LayerChain::new(self.param_dim, &self.layers)
    }

    pub fn forward(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.chain()?.forward(params)?.to_vec())
    }

    pub fn hidden_units(&self) -> usize {
        match self.layers.first() {
            Some(Layer::Affine(a)) => a.output_dim(),
            _ => 0,
        }
    }
}

/// Accumulates hidden units `ReLU(w · ε + b)` and output rows
/// `constant + Σ coeff · unit`.
/// Identical units are shared across the whole image, so every pixel that
/// depends on the same `ReLU(w · ε + b)` reads the same neuron.
struct SpBuilder {
    param_dim: usize,
    unit_weights: Vec<Vec<f64>>,
    unit_bias: Vec<f64>,
    unit_index: BTreeMap<Vec<u64>, usize>,
    outputs: Vec<(f64, Vec<(usize, f64)>)>,
}

impl SpBuilder {
    fn new(param_dim: usize) -> Self {
        SpBuilder {
            param_dim,
            unit_weights: Vec::new(),
            unit_bias: Vec::new(),
            unit_index: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    /// Adds outputs `scale_c * form(z) + offset_c` for the scalar pre-image
    /// `z = dz · ε + z0`, sharing units between channels.
    fn add_group(&mut self, dz: &[f64], z0: f64, forms: &[(&ReluForm, f64, f64)]) {
        let mut rows: Vec<(f64, BTreeMap<usize, f64>)> = Vec::with_capacity(forms.len());
        for &(form, scale, offset) in forms {
            let mut coeffs = BTreeMap::new();
            if scale != 0.0 {
                for u in &form.units {
                    let weights: Vec<f64> = dz.iter().map(|d| u.weight * d).collect();
                    let bias = u.weight * z0 + u.bias;
                    let key: Vec<u64> = weights.iter().chain([&bias]).map(|v| (v + 0.0).to_bits()).collect();
                    let idx = *self.unit_index.entry(key).or_insert_with(|| {
                        self.unit_weights.push(weights);
                        self.unit_bias.push(bias);
                        self.unit_weights.len() - 1
                    });
                    *coeffs.entry(idx).or_insert(0.0) += scale * u.coeff;
                }
            }
            rows.push((scale * form.constant + offset, coeffs));
        }
        self.outputs
            .extend(rows.into_iter().map(|(c, m)| (c, m.into_iter().collect())));
    }

    fn build(self) -> Result<SpNetwork> {
        let h = self.unit_weights.len();
        let mut w1 = Array2::zeros((h, self.param_dim));
        for (i, row) in self.unit_weights.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                w1[[i, j]] = v;
            }
        }
        let n = self.outputs.len();
        let mut w2 = Array2::zeros((n, h));
        let mut b2 = Array1::zeros(n);
        for (i, (constant, coeffs)) in self.outputs.iter().enumerate() {
            b2[i] = *constant;
            for &(j, c) in coeffs {
                w2[[i, j]] += c;
            }
        }
        Ok(SpNetwork {
            param_dim: self.param_dim,
            layers: vec![
                Layer::affine(w1, Array1::from(self.unit_bias))?,
                Layer::Relu,
                Layer::affine(w2, b2)?,
            ],
        })
    }
}

fn pixels_hsl(image: &Image) -> Vec<HslPixel> {
    let c = image.channels();
    image
        .pixels()
        .chunks(c)
        .map(|p| match c {
            3 => rgb_to_hsl(p[0], p[1], p[2]),
            _ => rgb_to_hsl(p[0], p[0], p[0]),
        })
        .collect()
}

fn require_rgb(image: &Image, what: &str) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::Config(format!("{what} needs an RGB image")));
    }
    Ok(())
}

/// Hue SP-layer, input `ε_h`: `d · φ^h_c(h + ε_h) + m` per channel.
pub fn build_hue_sp(image: &Image) -> Result<SpNetwork> {
    require_rgb(image, "hue perturbation")?;
    let forms: Vec<ReluForm> = (0..3).map(|c| hue_channel_periodic(c).relu_form()).collect();
    let mut b = SpBuilder::new(1);
    for px in pixels_hsl(image) {
        let (d, m) = (px.chroma(), px.offset());
        let group: Vec<(&ReluForm, f64, f64)> = forms.iter().map(|f| (f, d, m)).collect();
        b.add_group(&[1.0], px.h, &group);
    }
    b.build()
}

/// Saturation SP-layer, input `ε_s`: `d_c · φ^s(s + ε_s) + l`.
pub fn build_saturation_sp(image: &Image) -> Result<SpNetwork> {
    let form = saturation_pwl().relu_form();
    let mut b = SpBuilder::new(1);
    let c = image.channels();
    for px in pixels_hsl(image) {
        let scales = px.saturation_scales();
        let group: Vec<(&ReluForm, f64, f64)> = scales[..c].iter().map(|&d| (&form, d, px.l)).collect();
        b.add_group(&[1.0], px.s, &group);
    }
    b.build()
}

/// Lightness SP-layer, input `ε_l`: `d_c · φ^l_1(l + ε_l) + φ^l_2(l + ε_l)`.
pub fn build_lightness_sp(image: &Image) -> Result<SpNetwork> {
    let scale_form = lightness_scale_pwl().relu_form();
    let offset_form = lightness_offset_pwl().relu_form();
    let mut b = SpBuilder::new(1);
    let c = image.channels();
    for px in pixels_hsl(image) {
        let scales = px.lightness_scales();
        // φ^l_1 and φ^l_2 are merged unit-by-unit into one form per channel
        let forms: Vec<ReluForm> = scales[..c]
            .iter()
            .map(|&d| combine(&scale_form, d, &offset_form, 1.0))
            .collect();
        let group: Vec<(&ReluForm, f64, f64)> = forms.iter().map(|f| (f, 1.0, 0.0)).collect();
        b.add_group(&[1.0], px.l, &group);
    }
    b.build()
}

fn combine(a: &ReluForm, sa: f64, b: &ReluForm, sb: f64) -> ReluForm {
    let mut units = Vec::new();
    for u in &a.units {
        units.push(crate::pwl::ReluUnit {
            coeff: sa * u.coeff,
            ..*u
        });
    }
    for u in &b.units {
        units.push(crate::pwl::ReluUnit {
            coeff: sb * u.coeff,
            ..*u
        });
    }
    units.retain(|u| u.coeff != 0.0);
    ReluForm {
        constant: sa * a.constant + sb * b.constant,
        units,
    }
}

/// Brightness/contrast SP-layer, input `(ε_b, ε_c)`:
/// `clamp(x + ε_b + x ε_c) = σ_0(·) - σ_1(·)` per pixel value.
pub fn build_brightness_contrast_sp(image: &Image) -> Result<SpNetwork> {
    let form = PwlFunction::clamp_unit().relu_form();
    let mut b = SpBuilder::new(2);
    for &x in image.pixels() {
        b.add_group(&[1.0, x], x, &[(&form, 1.0, 0.0)]);
    }
    b.build()
}

pub fn apply_hue(image: &Image, eps: f64) -> Result<Image> {
    require_rgb(image, "hue perturbation")?;
    let out = pixels_hsl(image)
        .into_iter()
        .flat_map(|px| {
            let (d, m) = (px.chroma(), px.offset());
            hue_wheel(px.h + eps).map(|phi| d * phi + m)
        })
        .collect();
    image.with_pixels(out)
}

pub fn apply_saturation(image: &Image, eps: f64) -> Result<Image> {
    let c = image.channels();
    let out = pixels_hsl(image)
        .into_iter()
        .flat_map(|px| {
            let s = clamp01(px.s + eps);
            let scales = px.saturation_scales();
            scales.into_iter().take(c).map(move |d| d * s + px.l)
        })
        .collect();
    image.with_pixels(out)
}

pub fn apply_lightness(image: &Image, eps: f64) -> Result<Image> {
    let c = image.channels();
    let out = pixels_hsl(image)
        .into_iter()
        .flat_map(|px| {
            let l = clamp01(px.l + eps);
            let scale = 1.0 - (2.0 * l - 1.0).abs();
            let scales = px.lightness_scales();
            scales.into_iter().take(c).map(move |d| d * scale + l)
        })
        .collect();
    image.with_pixels(out)
}

pub fn apply_brightness_contrast(image: &Image, brightness: f64, contrast: f64) -> Result<Image> {
    let out = image
        .pixels()
        .iter()
        .map(|&x| clamp01((1.0 + contrast) * x + brightness))
        .collect();
    image.with_pixels(out)
}
