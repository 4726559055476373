//! Rotation about the image center with a cone interpolation kernel, and
//! sampled linear bounds of every output pixel as a function of the angle.
//!
//! Output pixel `(i, j)` at angle `θ` (degrees) reads the source point
//! `i' = i cos θ - j sin θ`, `j' = j cos θ + i sin θ` (center-relative) and
//! averages the lattice pixels `(k, l)` with weights
//! `max(0, 1 - |(k, l) - (i', j')|)`, normalized to sum one.
//!
//! The linear bounds are sound only up to sampling resolution: each pixel
//! function is sampled, hulled, inflated by a curvature slack and then
//! checked on a denser validation grid.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::bounds::{relax_points, AffineBounds, IntervalBox};
use crate::error::{Error, Result};
use crate::model::Image;

/// Value of source lookups outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Nearest edge pixel.
    #[default]
    Replicate,
    Zero,
}

#[derive(Debug, Clone, Copy)]
pub struct RotationKernel<'a> {
    image: &'a Image,
    center: (f64, f64),
    boundary: Boundary,
}

impl<'a> RotationKernel<'a> {
    pub fn new(image: &'a Image, boundary: Boundary) -> Self {
        let center = ((image.height() as f64 - 1.0) / 2.0, (image.width() as f64 - 1.0) / 2.0);
        RotationKernel {
            image,
            center,
            boundary,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    /// Source point read by output pixel `(i, j)`.
    pub fn source_point(&self, i: usize, j: usize, cos: f64, sin: f64) -> (f64, f64) {
        let (ci, cj) = (i as f64 - self.center.0, j as f64 - self.center.1);
        (ci * cos - cj * sin + self.center.0, cj * cos + ci * sin + self.center.1)
    }

    fn lookup(&self, k: i64, l: i64, ch: usize) -> f64 {
        let (h, w) = (self.image.height() as i64, self.image.width() as i64);
        if (0..h).contains(&k) && (0..w).contains(&l) {
            return self.image.get(k as usize, l as usize, ch);
        }
        match self.boundary {
            Boundary::Zero => 0.0,
            Boundary::Replicate => self
                .image
                .get(k.clamp(0, h - 1) as usize, l.clamp(0, w - 1) as usize, ch),
        }
    }

    /// Writes every channel of output pixel `(i, j)` into `out`.
    pub fn sample(&self, i: usize, j: usize, cos: f64, sin: f64, out: &mut [f64]) {
        let (si, sj) = self.source_point(i, j, cos, sin);
        let (fi, fj) = (si.floor() as i64, sj.floor() as i64);
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for k in fi..=fi + 1 {
            for l in fj..=fj + 1 {
                let dist = ((k as f64 - si).powi(2) + (l as f64 - sj).powi(2)).sqrt();
                let wt = (1.0 - dist).max(0.0);
                if wt > 0.0 {
                    total += wt;
                    for (ch, v) in out.iter_mut().enumerate() {
                        *v += wt * self.lookup(k, l, ch);
                    }
                }
            }
        }
        if total > 0.0 {
            out.iter_mut().for_each(|v| *v /= total);
        } else {
            let (k, l) = (si.round() as i64, sj.round() as i64);
            for (ch, v) in out.iter_mut().enumerate() {
                *v = self.lookup(k, l, ch);
            }
        }
    }

    /// Common value of all lattice pixels the source point of `(i, j)` can
    /// reach while the angle sweeps `[lo, hi]`, if there is one.
    fn constant_over(&self, i: usize, j: usize, lo: f64, hi: f64) -> Option<Vec<f64>> {
        let (ci, cj) = (i as f64 - self.center.0, j as f64 - self.center.1);
        let radius = (ci * ci + cj * cj).sqrt();
        let reach = 1.0 + radius * (hi - lo).to_radians();
        let t = lo.to_radians();
        let (si, sj) = self.source_point(i, j, t.cos(), t.sin());
        let rows = (si - reach).floor() as i64..=(si + reach).ceil() as i64;
        let cols = (sj - reach).floor() as i64..=(sj + reach).ceil() as i64;
        let channels = self.image.channels();
        let first: Vec<f64> = (0..channels)
            .map(|ch| self.lookup(*rows.start(), *cols.start(), ch))
            .collect();
        for k in rows {
            for l in cols.clone() {
                if (0..channels).any(|ch| self.lookup(k, l, ch) != first[ch]) {
                    return None;
                }
            }
        }
        Some(first)
    }
}

pub fn rotate_image_with(image: &Image, theta: f64, boundary: Boundary) -> Image {
    let kernel = RotationKernel::new(image, boundary);
    let t = theta.to_radians();
    let (cos, sin) = (t.cos(), t.sin());
    let c = image.channels();
    let mut pixels = vec![0.0; image.len()];
    for i in 0..image.height() {
        for j in 0..image.width() {
            let start = image.index(i, j, 0);
            kernel.sample(i, j, cos, sin, &mut pixels[start..start + c]);
        }
    }
    Image::from_clipped(image.height(), image.width(), c, pixels).expect("same shape as the source")
}

/// Rotation by `theta` degrees with replicated edges.
pub fn rotate_image(image: &Image, theta: f64) -> Image {
    rotate_image_with(image, theta, Boundary::Replicate)
}

/// `θ ↦ x'_{i,j}(θ)` for every channel of pixel `(i, j)`.
pub fn pixel_angle_function(image: &Image, i: usize, j: usize) -> impl Fn(f64) -> Vec<f64> + '_ {
    let kernel = RotationKernel::new(image, Boundary::Replicate);
    move |theta| {
        let t = theta.to_radians();
        let mut out = vec![0.0; image.channels()];
        kernel.sample(i, j, t.cos(), t.sin(), &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub samples: usize,
    pub validation: usize,
    pub boundary: Boundary,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            samples: 64,
            validation: 512,
            boundary: Boundary::Replicate,
        }
    }
}

const SLACK_ROUNDS: usize = 4;

/// Linear bounds of every pixel value over `θ ∈ [lo, hi]`, as bounds on the
/// flattened image over the one-dimensional angle domain.
pub fn bound_rotation_interval(image: &Image, lo: f64, hi: f64, config: &SamplingConfig) -> Result<AffineBounds> {
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::Interval { lower: lo, upper: hi });
    }
    let (n, m) = (config.samples, config.validation);
    if n < 2 || m < n {
        return Err(Error::Config(format!(
            "rotation bounding needs samples >= 2 and validation >= samples (got {n}, {m})"
        )));
    }
    let kernel = RotationKernel::new(image, config.boundary);
    let c = image.channels();
    let rows = image.len();
    let mut a_lower = Array2::zeros((rows, 1));
    let mut a_upper = Array2::zeros((rows, 1));
    let mut b_lower = Array1::zeros(rows);
    let mut b_upper = Array1::zeros(rows);

    let mut active = Vec::new();
    for i in 0..image.height() {
        for j in 0..image.width() {
            match kernel.constant_over(i, j, lo, hi) {
                Some(v) => {
                    let start = image.index(i, j, 0);
                    for ch in 0..c {
                        b_lower[start + ch] = v[ch];
                        b_upper[start + ch] = v[ch];
                    }
                }
                None => active.push((i, j)),
            }
        }
    }
    if !active.is_empty() {
        let angles = |count: usize, offset: f64, denom: f64| -> Vec<f64> {
            (0..count)
                .map(|k| lo + (hi - lo) * (k as f64 + offset) / denom)
                .collect()
        };
        let sample_angles = angles(n, 0.0, (n - 1) as f64);
        let check_angles = angles(m, 0.5, m as f64);
        let trig = |ts: &[f64]| -> Vec<(f64, f64)> {
            ts.iter()
                .map(|t| (t.to_radians().cos(), t.to_radians().sin()))
                .collect()
        };
        let (sample_trig, check_trig) = (trig(&sample_angles), trig(&check_angles));
        let sample_all = |trig: &[(f64, f64)]| -> Vec<f64> {
            // layout: [pixel][channel][angle]
            let mut vals = vec![0.0; active.len() * c * trig.len()];
            let mut buf = vec![0.0; c];
            for (s, &(cos, sin)) in trig.iter().enumerate() {
                for (p, &(i, j)) in active.iter().enumerate() {
                    kernel.sample(i, j, cos, sin, &mut buf);
                    for ch in 0..c {
                        vals[(p * c + ch) * trig.len() + s] = buf[ch];
                    }
                }
            }
            vals
        };
        let samples = sample_all(&sample_trig);
        let checks = sample_all(&check_trig);

        for (p, &(i, j)) in active.iter().enumerate() {
            for ch in 0..c {
                let row = image.index(i, j, ch);
                let q = p * c + ch;
                let ys = &samples[q * n..(q + 1) * n];
                let points: Vec<(f64, f64)> = sample_angles.iter().copied().zip(ys.iter().copied()).collect();
                let relax = relax_points(&points, false);
                let mut slack = ys
                    .windows(3)
                    .map(|w| (w[0] - 2.0 * w[1] + w[2]).abs())
                    .fold(0.0, f64::max);
                let vs = &checks[q * m..(q + 1) * m];
                let mut rounds = 0;
                loop {
                    let violation = check_angles
                        .iter()
                        .zip(vs)
                        .map(|(&t, &v)| (relax.lower(t) - slack - v).max(v - relax.upper(t) - slack))
                        .fold(f64::NEG_INFINITY, f64::max);
                    if violation <= 0.0 {
                        break;
                    }
                    rounds += 1;
                    if rounds > SLACK_ROUNDS || !violation.is_finite() {
                        return Err(Error::Bounding { pixel: row, violation });
                    }
                    slack += 2.0 * violation;
                }
                a_lower[[row, 0]] = relax.lower_slope;
                a_upper[[row, 0]] = relax.upper_slope;
                b_lower[row] = relax.lower_intercept - slack;
                b_upper[row] = relax.upper_intercept + slack;
            }
        }
    }
    AffineBounds::new(
        a_lower,
        b_lower,
        a_upper,
        b_upper,
        IntervalBox::new(vec![lo], vec![hi])?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let px = (0..h)
            .flat_map(|i| (0..w).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Image::new(h, w, 1, px).unwrap()
    }

    #[test]
    fn zero_angle_is_identity() {
        let img = grid(5, 4, |i, j| ((i * 7 + j * 3) % 10) as f64 / 10.0);
        assert_eq!(rotate_image(&img, 0.0), img);
    }

    #[test]
    fn center_pixel_is_fixed() {
        let img = grid(3, 3, |i, j| if (i, j) == (1, 1) { 1.0 } else { 0.0 });
        let out = rotate_image(&img, 90.0);
        assert!((out.get(1, 1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_moves_off_center_pixel() {
        // output (0,1) reads (0, -1) relative to the center at 90°, i.e. (1, 0)
        let img = grid(3, 3, |i, j| if (i, j) == (1, 0) { 1.0 } else { 0.0 });
        let out = rotate_image(&img, 90.0);
        assert!((out.get(0, 1, 0) - 1.0).abs() < 1e-12);
        assert!(out.get(1, 0, 0).abs() < 1e-12);
    }

    #[test]
    fn full_turn_periodicity() {
        let img = grid(6, 6, |i, j| ((i * 5 + j) % 7) as f64 / 7.0);
        let f = pixel_angle_function(&img, 0, 0);
        for t in [3.0, 17.5, 123.0] {
            let (a, b) = (f(t), f(t + 360.0));
            assert!((a[0] - b[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_image_gives_flat_bounds() {
        let img = grid(4, 4, |_, _| 0.3);
        let b = bound_rotation_interval(&img, 0.0, 10.0, &SamplingConfig::default()).unwrap();
        assert!(b.a_lower.iter().chain(b.a_upper.iter()).all(|&v| v == 0.0));
        assert!(b.b_lower.iter().chain(b.b_upper.iter()).all(|&v| v == 0.3));
    }

    #[test]
    fn degenerate_interval_rejected() {
        let img = grid(2, 2, |_, _| 0.0);
        assert!(matches!(
            bound_rotation_interval(&img, 1.0, 1.0, &SamplingConfig::default()),
            Err(Error::Interval { .. })
        ));
    }

    #[test]
    fn bounds_contain_dense_samples() {
        let img = grid(7, 7, |i, j| if (i + 2 * j) % 5 == 0 { 1.0 } else { 0.2 });
        let b = bound_rotation_interval(&img, -4.0, 6.0, &SamplingConfig::default()).unwrap();
        for k in 0..=997 {
            let t = -4.0 + 10.0 * k as f64 / 997.0;
            let x = rotate_image(&img, t);
            let (lo, hi) = (b.eval_lower(&[t]), b.eval_upper(&[t]));
            for (p, &v) in x.pixels().iter().enumerate() {
                assert!(lo[p] <= v + 1e-9 && v <= hi[p] + 1e-9, "pixel {p} at {t}");
            }
        }
    }
}
