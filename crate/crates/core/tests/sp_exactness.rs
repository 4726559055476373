use proptest::prelude::*;
use semcert::color::{
    apply_brightness_contrast, apply_hue, apply_lightness, apply_saturation, build_brightness_contrast_sp,
    build_hue_sp, build_lightness_sp, build_saturation_sp, pwl_to_relu,
};
use semcert::format::load_model;
use semcert::model::{Image, LayerChain};
use semcert::pwl::PwlFunction;

const TOL: f64 = 1e-9;

fn rgb_image(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..=1.0, h * w * 3).prop_map(move |px| Image::new(h, w, 3, px).unwrap())
}

/// Pixels drawn from a few levels so that gray, saturated and extreme pixels
/// all show up.
fn quantized_rgb(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0u8..=4, h * w * 3)
        .prop_map(move |q| Image::new(h, w, 3, q.into_iter().map(|v| v as f64 / 4.0).collect()).unwrap())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn hue_layer_is_exact(img in rgb_image(2, 3), eps in -6.0f64..=6.0) {
        let sp = build_hue_sp(&img).unwrap();
        let direct = apply_hue(&img, eps).unwrap();
        prop_assert!(max_diff(&sp.forward(&[eps]).unwrap(), direct.pixels()) < TOL);
    }

    #[test]
    fn saturation_layer_is_exact(img in quantized_rgb(2, 2), eps in -1.5f64..=1.5) {
        let sp = build_saturation_sp(&img).unwrap();
        let direct = apply_saturation(&img, eps).unwrap();
        prop_assert!(max_diff(&sp.forward(&[eps]).unwrap(), direct.pixels()) < TOL);
    }

    #[test]
    fn lightness_layer_is_exact(img in rgb_image(2, 2), eps in -1.5f64..=1.5) {
        let sp = build_lightness_sp(&img).unwrap();
        let direct = apply_lightness(&img, eps).unwrap();
        prop_assert!(max_diff(&sp.forward(&[eps]).unwrap(), direct.pixels()) < TOL);
    }

    #[test]
    fn lightness_layer_is_exact_on_gray(px in prop::collection::vec(0u8..=4, 6), eps in -1.5f64..=1.5) {
        let img = Image::new(2, 3, 1, px.into_iter().map(|v| v as f64 / 4.0).collect()).unwrap();
        let sp = build_lightness_sp(&img).unwrap();
        let direct = apply_lightness(&img, eps).unwrap();
        prop_assert!(max_diff(&sp.forward(&[eps]).unwrap(), direct.pixels()) < TOL);
    }

    #[test]
    fn brightness_contrast_layer_is_exact(img in rgb_image(2, 2), b in -1.0f64..=1.0, c in -1.0f64..=1.0) {
        let sp = build_brightness_contrast_sp(&img).unwrap();
        let direct = apply_brightness_contrast(&img, b, c).unwrap();
        prop_assert!(max_diff(&sp.forward(&[b, c]).unwrap(), direct.pixels()) < TOL);
    }

    #[test]
    fn random_pwl_compiles_exactly(
        gaps in prop::collection::vec(0.05f64..2.0, 1..8),
        start in -3.0f64..3.0,
        values in prop::collection::vec(-2.0f64..2.0, 9),
        slopes in (-2.0f64..2.0, -2.0f64..2.0),
        probe in prop::collection::vec(-10.0f64..10.0, 32),
    ) {
        let mut ts = vec![start];
        for g in &gaps {
            ts.push(ts.last().unwrap() + g);
        }
        let vs = values[..ts.len()].to_vec();
        let f = PwlFunction::new(ts, vs).unwrap().with_extension_slopes(slopes.0, slopes.1).unwrap();
        let layers = pwl_to_relu(&f).unwrap();
        let chain = LayerChain::new(1, &layers).unwrap();
        for &x in &probe {
            let y = chain.forward(&[x]).unwrap()[0];
            prop_assert!((y - f.eval(x)).abs() < TOL, "x={} relu={} direct={}", x, y, f.eval(x));
        }
    }
}

#[test]
fn composition_matches_classifier_on_transformed_image() {
    let model = load_model(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/rgb_tiny.json")).unwrap();
    let img = Image::new(8, 8, 3, (0..192).map(|k| ((k * 37) % 101) as f64 / 100.0).collect()).unwrap();
    let sp = build_hue_sp(&img).unwrap();
    let chain = model.chain_with_prefix(1, &sp.layers).unwrap();
    for k in -12..=12 {
        let eps = k as f64 * 0.25;
        let composed = chain.forward(&[eps]).unwrap();
        let direct = model.forward(apply_hue(&img, eps).unwrap().pixels()).unwrap();
        assert!(max_diff(composed.as_slice().unwrap(), &direct.values) < 1e-9);
    }
}
