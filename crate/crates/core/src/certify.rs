//! Certified-radius drivers: pixel-box baselines, SP-layer certification and
//! its explicit (cell sweep) and implicit (merged sub-interval) refinements.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attack::grid_attack;
use crate::bounds::{
    backward_bounds, backward_to_input, layer_intervals, AffineBounds, IntervalBox, IntervalMethod, Target,
};
use crate::color::{self, SpNetwork};
use crate::error::{Error, Result};
use crate::model::{Image, LayerChain, NetworkModel};
use crate::rotation::{bound_rotation_interval, SamplingConfig};
use crate::threat::{Side, ThreatKind, ThreatSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Naive,
    Weighted,
    Spl,
    SplExplicit,
    SplImplicit,
    SplRefine,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Naive,
        Mode::Weighted,
        Mode::Spl,
        Mode::SplExplicit,
        Mode::SplImplicit,
        Mode::SplRefine,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Naive => "naive",
            Mode::Weighted => "weighted",
            Mode::Spl => "spl",
            Mode::SplExplicit => "spl_explicit",
            Mode::SplImplicit => "spl_implicit",
            Mode::SplRefine => "spl_refine",
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, Mode::Naive | Mode::Weighted)
    }

    /// Cell sweep rather than bisection.
    pub fn uses_cells(&self) -> bool {
        matches!(self, Mode::SplExplicit | Mode::SplRefine)
    }

    pub fn uses_implicit(&self) -> bool {
        matches!(self, Mode::SplImplicit | Mode::SplRefine)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    /// Explicit cell side; `None` picks the threat default.
    pub explicit_size: Option<f64>,
    /// Implicit splits per axis; `None` picks the threat default.
    pub implicit_splits: Option<usize>,
    pub delta_max: Option<f64>,
    pub tol: f64,
    pub max_bisections: usize,
    /// Parameter grid points per axis for baseline pixel ranges.
    pub baseline_grid: usize,
    pub sampling: SamplingConfig,
    /// Pair every radius with a grid attack and assert it is not exceeded.
    pub check_attack: bool,
    /// Attack granularity; `None` uses a tenth of the explicit cell.
    pub attack_granularity: Option<f64>,
    pub intervals: IntervalMethod,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            explicit_size: None,
            implicit_splits: None,
            delta_max: None,
            tol: 1e-3,
            max_bisections: 30,
            baseline_grid: 1001,
            sampling: SamplingConfig::default(),
            check_attack: true,
            attack_granularity: None,
            intervals: IntervalMethod::default(),
        }
    }
}

impl CertifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.implicit_splits == Some(0) {
            return Err(Error::Config("implicit splits must be at least 1".into()));
        }
        if let Some(e) = self.explicit_size {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("explicit size must be positive, got {e}")));
            }
        }
        if self.baseline_grid < 2 {
            return Err(Error::Config("baseline grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn explicit_size_for(&self, threat: &ThreatSpec) -> f64 {
        self.explicit_size.unwrap_or(match threat.kind {
            ThreatKind::Rotation => 0.5,
            _ => 0.1,
        })
    }

    pub fn implicit_splits_for(&self, threat: &ThreatSpec) -> usize {
        self.implicit_splits.unwrap_or(match threat.kind {
            ThreatKind::Rotation => 100,
            _ => 1,
        })
    }

    pub fn delta_max_for(&self, threat: &ThreatSpec) -> f64 {
        self.delta_max.unwrap_or_else(|| threat.default_delta_max())
    }

    pub fn attack_granularity_for(&self, threat: &ThreatSpec) -> f64 {
        self.attack_granularity
            .unwrap_or_else(|| self.explicit_size_for(threat) / 10.0)
    }
}

/// One verification attempt on a parameter cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub verified: bool,
    /// Smallest certified margin lower bound (negative when unverified).
    pub worst_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub image_id: usize,
    pub threat: ThreatSpec,
    pub mode: Mode,
    pub label: usize,
    pub misclassified: bool,
    pub certified_radius: f64,
    pub attack_upper: Option<f64>,
    pub explicit_interval_size: Option<f64>,
    pub implicit_splits: usize,
    pub delta_max: f64,
    pub tol: f64,
    pub trace: Vec<TraceEntry>,
    pub wall_time: f64,
}

/// Outcome of one certification cycle on a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellVerdict {
    pub verified: bool,
    pub worst_margin: f64,
}

/// Certifies a pixel-space box: every margin `f_c - f_j` has a positive
/// lower bound. Returns the verdict and the smallest lower bound.
pub fn verify_box(
    model: &NetworkModel,
    pixel_box: &IntervalBox,
    label: usize,
    method: IntervalMethod,
) -> Result<CellVerdict> {
    let chain = model.chain()?;
    let input = AffineBounds::identity(pixel_box.clone());
    let pre = layer_intervals(&chain, &input, method)?;
    let bounds = backward_bounds(&chain, &input, &pre, Target::Margins { class: label })?;
    let worst = bounds.concretize_min().into_iter().fold(f64::INFINITY, f64::min);
    Ok(CellVerdict {
        verified: worst > 0.0,
        worst_margin: worst,
    })
}

/// A model, an image and a threat, with the SP-layers built once.
pub struct Certifier<'a> {
    model: &'a NetworkModel,
    image: &'a Image,
    label: usize,
    threat: ThreatSpec,
    config: CertifyConfig,
    sp: Option<SpNetwork>,
}

impl<'a> Certifier<'a> {
    pub fn new(
        model: &'a NetworkModel,
        image: &'a Image,
        label: usize,
        threat: ThreatSpec,
        mut config: CertifyConfig,
    ) -> Result<Self> {
        config.validate()?;
        // rotation bounds must see the same boundary as the rendered images
        config.sampling.boundary = threat.boundary;
        if !threat.kind.is_continuous() {
            return Err(Error::Config(format!("{} is certified by enumeration", threat.kind)));
        }
        if image.shape() != model.input_shape() {
            return Err(Error::shape("image size", model.input_dim(), image.len()));
        }
        if label >= model.num_classes() {
            return Err(Error::shape("label", model.num_classes(), label));
        }
        let sp = match threat.kind {
            ThreatKind::Hue => Some(color::build_hue_sp(image)?),
            ThreatKind::Saturation => Some(color::build_saturation_sp(image)?),
            ThreatKind::Lightness => Some(color::build_lightness_sp(image)?),
            ThreatKind::BrightnessContrast => Some(color::build_brightness_contrast_sp(image)?),
            _ => None,
        };
        Ok(Certifier {
            model,
            image,
            label,
            threat,
            config,
            sp,
        })
    }

    pub fn threat(&self) -> &ThreatSpec {
        &self.threat
    }

    pub fn config(&self) -> &CertifyConfig {
        &self.config
    }

    /// Network from the parameter to the logits, and the bounds on its input
    /// over `cell`.
    fn problem(&self, cell: &IntervalBox) -> Result<(LayerChain<'_>, AffineBounds)> {
        match &self.sp {
            Some(sp) => Ok((
                self.model.chain_with_prefix(sp.param_dim, &sp.layers)?,
                AffineBounds::identity(cell.clone()),
            )),
            None => Ok((
                self.model.chain()?,
                bound_rotation_interval(self.image, cell.lower[0], cell.upper[0], &self.config.sampling)?,
            )),
        }
    }

    /// Margin bounds in the parameter produced by one certification cycle on
    /// `cell` with `splits` implicit sub-cells per axis, one entry per
    /// sub-cell (each valid on its own sub-cell).
    pub fn cycle_bounds(&self, cell: &IntervalBox, splits: usize) -> Result<Vec<AffineBounds>> {
        let target = Target::Margins { class: self.label };
        let subs = if splits > 1 {
            cell.split_uniform(splits)
        } else {
            vec![cell.clone()]
        };
        if subs.len() == 1 {
            let (chain, input) = self.problem(&subs[0])?;
            let pre = layer_intervals(&chain, &input, self.config.intervals)?;
            return Ok(vec![backward_bounds(&chain, &input, &pre, target)?]);
        }
        let mut chain = None;
        let mut inputs = Vec::with_capacity(subs.len());
        let mut merged: Option<Vec<IntervalBox>> = None;
        for sub in &subs {
            let (c, input) = self.problem(sub)?;
            let pre = layer_intervals(&c, &input, self.config.intervals)?;
            merged = Some(match merged {
                None => pre,
                Some(m) => m
                    .iter()
                    .zip(&pre)
                    .map(|(a, b)| IntervalBox::merge([a, b]))
                    .collect::<Result<_>>()?,
            });
            inputs.push(input);
            chain.get_or_insert(c);
        }
        let chain = chain.expect("at least one sub-cell");
        let shared = backward_to_input(&chain, merged.as_deref().unwrap_or(&[]), target)?;
        inputs.iter().map(|input| shared.substitute(input)).collect()
    }

    /// One certification cycle; unverified when the clean prediction at the
    /// cell center already differs or the rotation bounds cannot be built.
    pub fn check_cell(&self, cell: &IntervalBox, splits: usize) -> Result<CellVerdict> {
        let center = self.threat.apply(self.image, &cell.midpoint())?;
        let logits = self.model.forward(center.pixels())?;
        if logits.predicted_class != self.label {
            return Ok(CellVerdict {
                verified: false,
                worst_margin: logits.min_margin(self.label),
            });
        }
        let bounds = match self.cycle_bounds(cell, splits) {
            Ok(b) => b,
            Err(Error::Bounding { .. }) => {
                return Ok(CellVerdict {
                    verified: false,
                    worst_margin: f64::NEG_INFINITY,
                })
            }
            Err(e) => return Err(e),
        };
        let worst = bounds
            .iter()
            .flat_map(|b| b.concretize_min())
            .fold(f64::INFINITY, f64::min);
        Ok(CellVerdict {
            verified: worst > 0.0,
            worst_margin: worst,
        })
    }

    /// Pixel intervals reachable over the parameter box at radius `delta`.
    pub fn pixel_ranges(&self, delta: f64) -> Result<IntervalBox> {
        let domain = self.threat.domain(delta)?;
        let pixels = self.image.pixels();
        if self.threat.kind == ThreatKind::BrightnessContrast {
            // increasing in both parameters for nonnegative pixels
            let (lo, hi) = (&domain.lower, &domain.upper);
            return IntervalBox::new(
                pixels
                    .iter()
                    .map(|&x| ((1.0 + lo[1]) * x + lo[0]).clamp(0.0, 1.0))
                    .collect(),
                pixels
                    .iter()
                    .map(|&x| ((1.0 + hi[1]) * x + hi[0]).clamp(0.0, 1.0))
                    .collect(),
            );
        }
        let (a, b) = (domain.lower[0], domain.upper[0]);
        let n = self.config.baseline_grid;
        let mut lower = pixels.to_vec();
        let mut upper = pixels.to_vec();
        let absorb = |img: &Image, offset: usize, lower: &mut Vec<f64>, upper: &mut Vec<f64>| {
            for (k, &v) in img.pixels().iter().enumerate() {
                lower[offset + k] = lower[offset + k].min(v);
                upper[offset + k] = upper[offset + k].max(v);
            }
        };
        for k in 0..n {
            let eps = a + (b - a) * k as f64 / (n - 1) as f64;
            let img = self.threat.apply(self.image, &[eps])?;
            absorb(&img, 0, &mut lower, &mut upper);
        }
        // exact kinks of the per-pixel functions of the color threats
        let c = self.image.channels();
        for (p, px) in pixels.chunks(c).enumerate() {
            let hsl = match c {
                3 => color::rgb_to_hsl(px[0], px[1], px[2]),
                _ => color::rgb_to_hsl(px[0], px[0], px[0]),
            };
            let kinks: Vec<f64> = match self.threat.kind {
                ThreatKind::Hue => (-6..=12).map(|t| t as f64 - hsl.h).collect(),
                ThreatKind::Saturation => vec![-hsl.s, 1.0 - hsl.s],
                ThreatKind::Lightness => vec![-hsl.l, 0.5 - hsl.l, 1.0 - hsl.l],
                _ => Vec::new(),
            };
            let single = Image::new(1, 1, c, px.to_vec())?;
            for eps in kinks.into_iter().filter(|e| (a..=b).contains(e)) {
                let img = self.threat.apply(&single, &[eps])?;
                absorb(&img, p * c, &mut lower, &mut upper);
            }
        }
        IntervalBox::new(lower, upper)
    }

    fn baseline_box(&self, delta: f64, naive: bool) -> Result<IntervalBox> {
        let ranges = self.pixel_ranges(delta)?;
        if !naive {
            return Ok(ranges);
        }
        let mid = ranges.midpoint();
        let radius = ranges.widths().into_iter().fold(0.0, f64::max) / 2.0;
        IntervalBox::new(
            mid.iter().map(|m| (m - radius).max(0.0)).collect(),
            mid.iter().map(|m| (m + radius).min(1.0)).collect(),
        )
    }

    pub fn baseline_naive(&self, delta: f64) -> Result<CellVerdict> {
        verify_box(
            self.model,
            &self.baseline_box(delta, true)?,
            self.label,
            self.config.intervals,
        )
    }

    pub fn baseline_weighted(&self, delta: f64) -> Result<CellVerdict> {
        verify_box(
            self.model,
            &self.baseline_box(delta, false)?,
            self.label,
            self.config.intervals,
        )
    }

    /// Cells of side `step` on ring `ring` (cells whose outer face lies at
    /// `(ring + 1) * step`), with the outer faces pulled in to `extent`.
    fn ring_cells(&self, ring: usize, step: f64, extent: f64) -> Result<Vec<IntervalBox>> {
        let domain = self.threat.domain(extent)?;
        let free = self.threat.free_axes();
        let ring = ring as i64;
        let indices: Vec<i64> = match self.threat.side {
            Side::Symmetric => (-ring - 1..=ring).collect(),
            Side::Positive => (0..=ring).collect(),
            Side::Negative => (-ring - 1..0).collect(),
        };
        let level = |j: i64| if j >= 0 { j } else { -j - 1 };
        let interval = |j: i64| {
            let (lo, hi) = (j as f64 * step, (j + 1) as f64 * step);
            (lo.max(-extent), hi.min(extent))
        };
        let mut combos: Vec<Vec<i64>> = vec![Vec::new()];
        for _ in &free {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    indices.iter().map(move |&j| {
                        let mut c = c.clone();
                        c.push(j);
                        c
                    })
                })
                .collect();
        }
        Ok(combos
            .into_iter()
            .filter(|c| c.iter().map(|&j| level(j)).max() == Some(ring))
            .map(|c| {
                let mut cell = domain.clone();
                for (&axis, &j) in free.iter().zip(&c) {
                    let (lo, hi) = interval(j);
                    cell.lower[axis] = lo;
                    cell.upper[axis] = hi;
                }
                cell
            })
            .filter(|cell| cell.iter().all(|(l, u)| l <= u))
            .collect())
    }

    /// Verifies the parameter box at radius `delta` as explicit cells of side
    /// `explicit_size` (one cell when `None`), each with `splits` implicit
    /// sub-cells.
    pub fn certify_spl(&self, delta: f64, splits: usize, explicit_size: Option<f64>) -> Result<bool> {
        let Some(step) = explicit_size else {
            return Ok(self.check_cell(&self.threat.domain(delta)?, splits)?.verified);
        };
        let rings = (delta / step - 1e-12).ceil().max(1.0) as usize;
        for ring in 0..rings {
            for cell in self.ring_cells(ring, step, delta)? {
                if !self.check_cell(&cell, splits)?.verified {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    fn record(trace: &mut Vec<TraceEntry>, cell: &IntervalBox, v: CellVerdict) {
        trace.push(TraceEntry {
            lower: cell.lower.clone(),
            upper: cell.upper.clone(),
            verified: v.verified,
            worst_margin: v.worst_margin,
        });
    }

    /// Largest `δ` in `[0, hi]` accepted by `check`, by bisection.
    fn bisect(
        &self,
        mut lo: f64,
        mut hi: f64,
        trace: &mut Vec<TraceEntry>,
        mut check: impl FnMut(f64, &mut Vec<TraceEntry>) -> Result<bool>,
    ) -> Result<f64> {
        if check(hi, trace)? {
            return Ok(hi);
        }
        for _ in 0..self.config.max_bisections {
            if hi - lo <= self.config.tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if check(mid, trace)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    fn sweep(&self, step: f64, splits: usize, delta_max: f64, trace: &mut Vec<TraceEntry>) -> Result<f64> {
        let mut ring = 0;
        loop {
            let inner = ring as f64 * step;
            if inner >= delta_max {
                return Ok(delta_max);
            }
            let outer = (inner + step).min(delta_max);
            let ring_ok = |extent: f64, trace: &mut Vec<TraceEntry>| -> Result<bool> {
                for cell in self.ring_cells(ring, step, extent)? {
                    let v = self.check_cell(&cell, splits)?;
                    Self::record(trace, &cell, v);
                    if !v.verified {
                        return Ok(false);
                    }
                }
                Ok(true)
            };
            if ring_ok(outer, trace)? {
                ring += 1;
                continue;
            }
            return self.bisect(inner, outer, trace, |t, trace| {
                if t <= inner {
                    return Ok(true);
                }
                ring_ok(t, trace)
            });
        }
    }

    /// Radius for `mode`, with the trace of verification attempts.
    pub fn radius(&self, mode: Mode) -> Result<(f64, Vec<TraceEntry>)> {
        let delta_max = self.config.delta_max_for(&self.threat);
        let splits = if mode.uses_implicit() {
            self.config.implicit_splits_for(&self.threat)
        } else {
            1
        };
        let mut trace = Vec::new();
        let radius = if mode.uses_cells() {
            let step = self.config.explicit_size_for(&self.threat);
            self.sweep(step, splits, delta_max, &mut trace)?
        } else {
            self.bisect(0.0, delta_max, &mut trace, |delta, trace| {
                let v = match mode {
                    Mode::Naive => self.baseline_naive(delta)?,
                    Mode::Weighted => self.baseline_weighted(delta)?,
                    _ => self.check_cell(&self.threat.domain(delta)?, splits)?,
                };
                Self::record(trace, &self.threat.domain(delta)?, v);
                Ok(v.verified)
            })?
        };
        Ok((radius, trace))
    }
}

/// Certified radius of `image` under `threat` with `mode`, paired with a grid
/// attack when configured; a radius above the attack bound is an error.
pub fn max_certified_radius(
    model: &NetworkModel,
    image: &Image,
    label: usize,
    threat: &ThreatSpec,
    mode: Mode,
    config: &CertifyConfig,
) -> Result<CertificationResult> {
    let start = Instant::now();
    let certifier = Certifier::new(model, image, label, threat.clone(), config.clone())?;
    let misclassified = model.classify(image)? != label;
    let (radius, trace) = if misclassified {
        (0.0, Vec::new())
    } else {
        certifier.radius(mode)?
    };
    let delta_max = config.delta_max_for(threat);
    let attack_upper = if config.check_attack && !misclassified {
        let g = config.attack_granularity_for(threat);
        Some(grid_attack(model, image, label, threat, g, delta_max)?.upper_bound)
    } else {
        None
    };
    if let Some(upper) = attack_upper {
        if radius > upper {
            return Err(Error::State(format!(
                "certified radius {radius} exceeds attack bound {upper} ({} / {mode})",
                threat.kind
            )));
        }
    }
    Ok(CertificationResult {
        image_id: 0,
        threat: threat.clone(),
        mode,
        label,
        misclassified,
        certified_radius: radius,
        attack_upper,
        explicit_interval_size: mode.uses_cells().then(|| config.explicit_size_for(threat)),
        implicit_splits: if mode.uses_implicit() {
            config.implicit_splits_for(threat)
        } else {
            1
        },
        delta_max,
        tol: config.tol,
        trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;
    use ndarray::array;

    /// Two classes on one pixel: class 0 iff `x < 0.6`.
    fn threshold_model() -> NetworkModel {
        let l = Layer::affine(array![[-1.0], [0.0]], array![0.6, 0.0]).unwrap();
        NetworkModel::new((1, 1, 1), 2, vec![l]).unwrap()
    }

    fn brightness() -> ThreatSpec {
        ThreatSpec::new(ThreatKind::BrightnessContrast).with_fixed_contrast(0.0)
    }

    fn quick() -> CertifyConfig {
        CertifyConfig {
            explicit_size: Some(0.05),
            tol: 1e-4,
            ..CertifyConfig::default()
        }
    }

    #[test]
    fn point_box_verifies_correct_prediction() {
        let m = threshold_model();
        assert!(
            verify_box(&m, &IntervalBox::point(&[0.2]), 0, IntervalMethod::Forward)
                .unwrap()
                .verified
        );
        assert!(
            !verify_box(&m, &IntervalBox::point(&[0.2]), 1, IntervalMethod::Backward)
                .unwrap()
                .verified
        );
        assert!(
            !verify_box(
                &m,
                &IntervalBox::new(vec![0.5], vec![0.7]).unwrap(),
                0,
                IntervalMethod::Forward
            )
            .unwrap()
            .verified
        );
    }

    #[test]
    fn linear_brightness_radius_is_analytic() {
        let m = threshold_model();
        let img = Image::new(1, 1, 1, vec![0.2]).unwrap();
        for mode in Mode::ALL {
            let r = max_certified_radius(&m, &img, 0, &brightness(), mode, &quick()).unwrap();
            assert!(r.certified_radius <= 0.4 + 1e-12, "{mode}");
            assert!(r.certified_radius >= 0.4 - 2e-4, "{mode}: {}", r.certified_radius);
        }
    }

    #[test]
    fn misclassified_image_has_zero_radius() {
        let m = threshold_model();
        let img = Image::new(1, 1, 1, vec![0.9]).unwrap();
        let r = max_certified_radius(&m, &img, 0, &brightness(), Mode::Spl, &quick()).unwrap();
        assert!(r.misclassified);
        assert_eq!(r.certified_radius, 0.0);
    }

    #[test]
    fn brightness_pixel_ranges_are_shifted_clamps() {
        let m = NetworkModel::new(
            (1, 2, 1),
            2,
            vec![Layer::affine(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0]).unwrap()],
        )
        .unwrap();
        let img = Image::new(1, 2, 1, vec![0.05, 0.5]).unwrap();
        let c = Certifier::new(&m, &img, 1, brightness(), quick()).unwrap();
        let r = c.pixel_ranges(0.1).unwrap();
        assert_eq!(r.lower, vec![0.0, 0.4]);
        assert!((r.upper[0] - 0.15).abs() < 1e-15 && (r.upper[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn explicit_cells_cover_the_box() {
        let m = threshold_model();
        let img = Image::new(1, 1, 1, vec![0.2]).unwrap();
        let joint = ThreatSpec::new(ThreatKind::BrightnessContrast);
        let c = Certifier::new(&m, &img, 0, joint, quick()).unwrap();
        let ring0 = c.ring_cells(0, 0.1, 0.1).unwrap();
        assert_eq!(ring0.len(), 4);
        let ring1 = c.ring_cells(1, 0.1, 0.15).unwrap();
        assert_eq!(ring1.len(), 12);
        let all: Vec<IntervalBox> = ring0.into_iter().chain(ring1).collect();
        let hull = IntervalBox::merge(&all).unwrap();
        assert!(hull.contains_box(&IntervalBox::symmetric(2, 0.15)));
        let area: f64 = all.iter().map(|b| b.widths().iter().product::<f64>()).sum();
        assert!((area - 0.09).abs() < 1e-12);
    }

    #[test]
    fn one_split_matches_unsplit_cycle() {
        let m = threshold_model();
        let img = Image::new(1, 1, 1, vec![0.2]).unwrap();
        let c = Certifier::new(&m, &img, 0, brightness(), quick()).unwrap();
        let cell = brightness().domain(0.3).unwrap();
        assert_eq!(c.check_cell(&cell, 1).unwrap(), c.check_cell(&cell, 1).unwrap());
        assert!(c.certify_spl(0.3, 1, None).unwrap());
        assert!(!c.certify_spl(0.5, 1, Some(0.1)).unwrap());
    }
}
