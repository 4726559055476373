//! Grid-search attacks (upper bounds on the certified radius) and exhaustive
//! enumeration for translation and occlusion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Image, NetworkModel};
use crate::threat::{Side, ThreatKind, ThreatSpec};

/// Shifts the image content by `(dy, dx)` pixels: output `(i, j)` reads
/// source `(i - dy, j - dx)`. Vacated pixels are zero or the nearest edge.
pub fn translate(image: &Image, dy: i64, dx: i64, edge: bool) -> Image {
    let (h, w, c) = image.shape();
    let mut pixels = vec![0.0; image.len()];
    for i in 0..h {
        for j in 0..w {
            let (si, sj) = (i as i64 - dy, j as i64 - dx);
            let inside = (0..h as i64).contains(&si) && (0..w as i64).contains(&sj);
            if !inside && !edge {
                continue;
            }
            let (si, sj) = (si.clamp(0, h as i64 - 1) as usize, sj.clamp(0, w as i64 - 1) as usize);
            for ch in 0..c {
                pixels[image.index(i, j, ch)] = image.get(si, sj, ch);
            }
        }
    }
    image.with_pixels(pixels).expect("same shape as the source")
}

/// Square patch of side `size` with top-left pixel `(row, col)`.
pub fn occlude(image: &Image, row: usize, col: usize, size: usize, fill: f64) -> Result<Image> {
    if row + size > image.height() || col + size > image.width() {
        return Err(Error::Config(format!(
            "patch {size}x{size} at ({row}, {col}) does not fit a {}x{} image",
            image.height(),
            image.width()
        )));
    }
    let mut pixels = image.pixels().to_vec();
    for i in row..row + size {
        for j in col..col + size {
            for ch in 0..image.channels() {
                pixels[image.index(i, j, ch)] = fill;
            }
        }
    }
    image.with_pixels(pixels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub threat: ThreatKind,
    pub success: bool,
    /// Smallest misclassifying parameter found.
    pub epsilon: Option<Vec<f64>>,
    /// Norm of `epsilon`, or the search radius when nothing was found.
    pub upper_bound: f64,
    pub granularity: f64,
    pub adversarial_class: Option<usize>,
    pub evaluated: usize,
}

fn axis_values(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step - 1e-9).ceil().max(0.0) as usize;
    (0..=n)
        .map(|k| if k == n { hi } else { lo + step * k as f64 })
        .collect()
}

/// Grid points of the threat's parameter space within `radius_max`, sorted
/// by norm over the free axes.
pub fn attack_grid(threat: &ThreatSpec, granularity: f64, radius_max: f64) -> Result<Vec<Vec<f64>>> {
    if !(granularity > 0.0 && granularity.is_finite() && radius_max >= 0.0 && radius_max.is_finite()) {
        return Err(Error::Config(format!(
            "attack needs granularity > 0 and radius >= 0 (got {granularity}, {radius_max})"
        )));
    }
    if !threat.kind.is_continuous() {
        return Err(Error::Config(format!("{} is enumerated, not attacked", threat.kind)));
    }
    let domain = threat.domain(radius_max)?;
    let free = threat.free_axes();
    let axes: Vec<Vec<f64>> = (0..threat.param_dim())
        .map(|a| {
            if free.contains(&a) {
                let n = (radius_max / granularity + 1e-9).floor() as i64;
                let (lo, hi) = match threat.side {
                    Side::Symmetric => (-n, n),
                    Side::Positive => (0, n),
                    Side::Negative => (-n, 0),
                };
                (lo..=hi).map(|k| k as f64 * granularity).collect()
            } else {
                axis_values(domain.lower[a], domain.upper[a], granularity)
            }
        })
        .collect();
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for values in &axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    let mut keyed: Vec<(f64, Vec<f64>)> = points.into_iter().map(|p| (threat.radius_of(&p), p)).collect();
    keyed.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| {
                a.1.iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
                    .total_cmp(&b.1.iter().map(|v| v.abs()).sum())
            })
            .then_with(|| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

/// Evaluates the model on the grid in order of increasing norm and stops at
/// the first parameter that changes the prediction away from `label`.
pub fn grid_attack(
    model: &NetworkModel,
    image: &Image,
    label: usize,
    threat: &ThreatSpec,
    granularity: f64,
    radius_max: f64,
) -> Result<AttackResult> {
    let grid = attack_grid(threat, granularity, radius_max)?;
    let total = grid.len();
    for (n, eps) in grid.into_iter().enumerate() {
        let predicted = model.classify(&threat.apply(image, &eps)?)?;
        if predicted != label {
            return Ok(AttackResult {
                threat: threat.kind,
                success: true,
                upper_bound: threat.radius_of(&eps),
                epsilon: Some(eps),
                granularity,
                adversarial_class: Some(predicted),
                evaluated: n + 1,
            });
        }
    }
    Ok(AttackResult {
        threat: threat.kind,
        success: false,
        epsilon: None,
        upper_bound: radius_max,
        granularity,
        adversarial_class: None,
        evaluated: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub threat: ThreatKind,
    /// Largest radius whose every parameter keeps the label.
    pub radius: f64,
    /// Radius reached when every parameter keeps the label.
    pub max_radius: f64,
    pub evaluated: usize,
    /// First parameter (in enumeration order) that changes the label.
    pub counterexample: Option<Vec<i64>>,
}

/// Shifts with `|dy| < H`, `|dx| < W`; radius in the ℓ2 norm of the shift.
pub fn enumerate_translation(
    model: &NetworkModel,
    image: &Image,
    label: usize,
    edge: bool,
) -> Result<EnumerationResult> {
    let (h, w) = (image.height() as i64, image.width() as i64);
    let mut shifts: Vec<(i64, i64, i64)> = (-(h - 1)..h)
        .flat_map(|dy| (-(w - 1)..w).map(move |dx| (dy * dy + dx * dx, dy, dx)))
        .collect();
    shifts.sort_unstable();
    let max_norm2 = shifts.last().map_or(0, |s| s.0);
    let mut below = None;
    for (n, &(norm2, dy, dx)) in shifts.iter().enumerate() {
        if n > 0 && shifts[n - 1].0 < norm2 {
            below = Some(shifts[n - 1].0);
        }
        if model.classify(&translate(image, dy, dx, edge))? != label {
            return Ok(EnumerationResult {
                threat: ThreatKind::Translation,
                radius: below.map_or(0.0, |b| (b as f64).sqrt()),
                max_radius: (max_norm2 as f64).sqrt(),
                evaluated: n + 1,
                counterexample: Some(vec![dy, dx]),
            });
        }
    }
    Ok(EnumerationResult {
        threat: ThreatKind::Translation,
        radius: (max_norm2 as f64).sqrt(),
        max_radius: (max_norm2 as f64).sqrt(),
        evaluated: shifts.len(),
        counterexample: None,
    })
}

/// Square patches of every side from 1 up to the image size at every
/// position; radius is the largest side all of whose patches keep the label.
pub fn enumerate_occlusion(model: &NetworkModel, image: &Image, label: usize, fill: f64) -> Result<EnumerationResult> {
    let max_side = image.height().min(image.width());
    let mut evaluated = 0;
    for size in 1..=max_side {
        for row in 0..=image.height() - size {
            for col in 0..=image.width() - size {
                evaluated += 1;
                if model.classify(&occlude(image, row, col, size, fill)?)? != label {
                    return Ok(EnumerationResult {
                        threat: ThreatKind::Occlusion,
                        radius: (size - 1) as f64,
                        max_radius: max_side as f64,
                        evaluated,
                        counterexample: Some(vec![row as i64, col as i64, size as i64]),
                    });
                }
            }
        }
    }
    Ok(EnumerationResult {
        threat: ThreatKind::Occlusion,
        radius: max_side as f64,
        max_radius: max_side as f64,
        evaluated,
        counterexample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Layer;
    use ndarray::{array, Array1, Array2};

    fn sum_model(dim: usize, threshold: f64) -> NetworkModel {
        // class 1 iff the pixel sum exceeds `threshold`
        let w = Array2::from_shape_fn((2, dim), |(r, _)| if r == 1 { 1.0 } else { 0.0 });
        let layer = Layer::affine(w, array![threshold, 0.0]).unwrap();
        NetworkModel::new((1, dim, 1), 2, vec![layer]).unwrap()
    }

    #[test]
    fn zero_shift_is_identity() {
        let img = Image::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(translate(&img, 0, 0, false), img);
        let moved = translate(&img, 1, 0, false);
        assert_eq!(moved.pixels(), &[0.0, 0.0, 0.1, 0.2]);
        let moved = translate(&img, 0, -1, true);
        assert_eq!(moved.pixels(), &[0.2, 0.2, 0.4, 0.4]);
    }

    #[test]
    fn constant_image_survives_everything() {
        let img = Image::new(1, 3, 1, vec![0.0; 3]).unwrap();
        let model = sum_model(3, 0.5);
        let t = enumerate_translation(&model, &img, 0, false).unwrap();
        assert_eq!(t.radius, t.max_radius);
        assert_eq!(t.radius, 2.0);
        let o = enumerate_occlusion(&model, &img, 0, 0.0).unwrap();
        assert_eq!(o.radius, 1.0);
    }

    #[test]
    fn occlusion_flips_at_first_large_patch() {
        let img = Image::new(2, 2, 1, vec![0.5; 4]).unwrap();
        // 2x2 only: sum 2.0 > 1.2 → class 1; one zeroed pixel keeps it, all four do not
        let w = Array2::from_elem((2, 4), 0.0);
        let mut w = w;
        w.row_mut(1).fill(1.0);
        let model = NetworkModel::new(
            (2, 2, 1),
            2,
            vec![Layer::affine(w, Array1::from(vec![1.2, 0.0])).unwrap()],
        )
        .unwrap();
        let o = enumerate_occlusion(&model, &img, 1, 0.0).unwrap();
        assert_eq!(o.radius, 1.0);
        assert_eq!(o.counterexample, Some(vec![0, 0, 2]));
    }

    #[test]
    fn brightness_attack_finds_flip_point() {
        // class 1 iff x + b > 0.5 + 0.5 with x = 0.3 → flip at b* = 0.2 (class 0 → 1 above)
        let img = Image::new(1, 1, 1, vec![0.3]).unwrap();
        let model = sum_model(1, 0.5);
        let threat = ThreatSpec::new(ThreatKind::BrightnessContrast).with_fixed_contrast(0.0);
        let r = grid_attack(&model, &img, 0, &threat, 0.01, 1.0).unwrap();
        assert!(r.success);
        assert!((r.upper_bound - 0.2).abs() <= 0.01 + 1e-12);
        assert_eq!(r.adversarial_class, Some(1));
        let r = grid_attack(&model, &img, 0, &threat, 0.01, 0.1).unwrap();
        assert!(!r.success);
        assert_eq!(r.upper_bound, 0.1);
    }

    #[test]
    fn grid_is_sorted_by_norm() {
        let threat = ThreatSpec::new(ThreatKind::BrightnessContrast);
        let g = attack_grid(&threat, 0.1, 0.3).unwrap();
        assert_eq!(g.len(), 49);
        assert_eq!(g[0], vec![0.0, 0.0]);
        assert!(g.windows(2).all(|w| threat.radius_of(&w[0]) <= threat.radius_of(&w[1])));
    }
}
