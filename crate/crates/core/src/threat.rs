//! Threat specifications: which semantic transform, its parameters and the
//! parameter domain attached to a radius.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attack::{occlude, translate};
use crate::bounds::IntervalBox;
use crate::color;
use crate::error::{Error, Result};
use crate::model::Image;
use crate::rotation::{rotate_image_with, Boundary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreatKind {
    Hue,
    Saturation,
    Lightness,
    BrightnessContrast,
    Rotation,
    Translation,
    Occlusion,
}

impl ThreatKind {
    pub const ALL: [ThreatKind; 7] = [
        ThreatKind::Hue,
        ThreatKind::Saturation,
        ThreatKind::Lightness,
        ThreatKind::BrightnessContrast,
        ThreatKind::Rotation,
        ThreatKind::Translation,
        ThreatKind::Occlusion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ThreatKind::Hue => "hue",
            ThreatKind::Saturation => "saturation",
            ThreatKind::Lightness => "lightness",
            ThreatKind::BrightnessContrast => "brightness_contrast",
            ThreatKind::Rotation => "rotation",
            ThreatKind::Translation => "translation",
            ThreatKind::Occlusion => "occlusion",
        }
    }

    /// Parameter dimension `k`.
    pub fn param_dim(&self) -> usize {
        match self {
            ThreatKind::BrightnessContrast | ThreatKind::Translation => 2,
            ThreatKind::Occlusion => 3,
            _ => 1,
        }
    }

    /// Parameterized by reals (as opposed to enumerated).
    pub fn is_continuous(&self) -> bool {
        !matches!(self, ThreatKind::Translation | ThreatKind::Occlusion)
    }
}

impl fmt::Display for ThreatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThreatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        ThreatKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown threat {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    #[default]
    Linf,
}

impl Norm {
    pub fn of(&self, v: &[f64]) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Linf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// Which part of `[-δ, δ]` a radius covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Symmetric,
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatSpec {
    pub kind: ThreatKind,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default)]
    pub side: Side,
    /// Brightness/contrast only: hold contrast in `[-c, c]` and let the radius
    /// measure brightness alone.
    #[serde(default)]
    pub fixed_contrast: Option<f64>,
    /// Rotation lookups outside the image.
    #[serde(default)]
    pub boundary: Boundary,
    /// Translation: replicate edges instead of zero padding.
    #[serde(default)]
    pub edge_padding: bool,
    /// Occlusion patch value.
    #[serde(default)]
    pub fill_value: f64,
}

impl ThreatSpec {
    pub fn new(kind: ThreatKind) -> Self {
        ThreatSpec {
            kind,
            norm: Norm::Linf,
            side: Side::Symmetric,
            fixed_contrast: None,
            boundary: Boundary::Replicate,
            edge_padding: false,
            fill_value: 0.0,
        }
    }

    pub fn with_fixed_contrast(mut self, half_width: f64) -> Self {
        self.fixed_contrast = Some(half_width);
        self
    }

    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    pub fn param_dim(&self) -> usize {
        self.kind.param_dim()
    }

    /// Axes whose extent is the radius.
    pub fn free_axes(&self) -> Vec<usize> {
        match (self.kind, self.fixed_contrast) {
            (ThreatKind::BrightnessContrast, Some(_)) => vec![0],
            _ => (0..self.param_dim()).collect(),
        }
    }

    /// Largest radius worth certifying.
    pub fn default_delta_max(&self) -> f64 {
        match self.kind {
            // ±3 already covers the whole color wheel
            ThreatKind::Hue => 3.0,
            ThreatKind::Rotation => 180.0,
            _ => 1.0,
        }
    }

    /// Extent `[lo, hi]` of a free axis at radius `delta`.
    pub fn axis_range(&self, delta: f64) -> (f64, f64) {
        match self.side {
            Side::Symmetric => (-delta, delta),
            Side::Positive => (0.0, delta),
            Side::Negative => (-delta, 0.0),
        }
    }

    /// Parameter box certified at radius `delta`.
    pub fn domain(&self, delta: f64) -> Result<IntervalBox> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!(
                "radius must be finite and nonnegative, got {delta}"
            )));
        }
        let (lo, hi) = self.axis_range(delta);
        let mut lower = vec![lo; self.param_dim()];
        let mut upper = vec![hi; self.param_dim()];
        if let (ThreatKind::BrightnessContrast, Some(c)) = (self.kind, self.fixed_contrast) {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Config(format!(
                    "contrast half-width must be nonnegative, got {c}"
                )));
            }
            lower[1] = -c;
            upper[1] = c;
        }
        IntervalBox::new(lower, upper)
    }

    /// Norm of a parameter restricted to the free axes.
    pub fn radius_of(&self, eps: &[f64]) -> f64 {
        let free: Vec<f64> = self.free_axes().into_iter().map(|a| eps[a]).collect();
        self.norm.of(&free)
    }

    /// Exact transform `g(x, ε)`.
    pub fn apply(&self, image: &Image, eps: &[f64]) -> Result<Image> {
        if eps.len() != self.param_dim() {
            return Err(Error::shape(
                format!("{} parameters", self.kind),
                self.param_dim(),
                eps.len(),
            ));
        }
        match self.kind {
            ThreatKind::Hue => color::apply_hue(image, eps[0]),
            ThreatKind::Saturation => color::apply_saturation(image, eps[0]),
            ThreatKind::Lightness => color::apply_lightness(image, eps[0]),
            ThreatKind::BrightnessContrast => color::apply_brightness_contrast(image, eps[0], eps[1]),
            ThreatKind::Rotation => Ok(rotate_image_with(image, eps[0], self.boundary)),
            ThreatKind::Translation => Ok(translate(
                image,
                eps[0].round() as i64,
                eps[1].round() as i64,
                self.edge_padding,
            )),
            ThreatKind::Occlusion => {
                let [r, c, s] = [eps[0], eps[1], eps[2]].map(|v| v.round().max(0.0) as usize);
                occlude(image, r, c, s, self.fill_value)
            }
        }
    }
}
