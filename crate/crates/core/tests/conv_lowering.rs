use ndarray::{Array1, Array4};
use proptest::prelude::*;
use semcert::conv::{lower_conv_to_affine, ConvSpec, PadMode};

/// Direct sliding-window convolution over an `(h, w, c)` row-major input.
fn direct_conv(spec: &ConvSpec, x: &[f64]) -> Vec<f64> {
    let (h, w, c) = spec.input_shape;
    let (oc, _, kh, kw) = spec.filters.dim();
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    let oh = (h as isize + 2 * p - kh as isize) / s + 1;
    let ow = (w as isize + 2 * p - kw as isize) / s + 1;
    let mut out = Vec::new();
    for oi in 0..oh {
        for oj in 0..ow {
            for o in 0..oc {
                let mut acc = spec.bias[o];
                for di in 0..kh as isize {
                    for dj in 0..kw as isize {
                        let (i, j) = (oi * s + di - p, oj * s + dj - p);
                        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
                            continue;
                        }
                        for ch in 0..c {
                            let v = x[(i as usize * w + j as usize) * c + ch];
                            acc += spec.filters[[o, ch, di as usize, dj as usize]] * v;
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn spec_strategy() -> impl Strategy<Value = (ConvSpec, Vec<f64>)> {
    (
        3usize..7,
        3usize..7,
        1usize..4,
        1usize..4,
        1usize..4,
        1usize..3,
        0usize..2,
    )
        .prop_filter("kernel fits", |&(h, w, _, _, k, _, p)| k <= h + 2 * p && k <= w + 2 * p)
        .prop_flat_map(|(h, w, c, oc, k, stride, padding)| {
            (
                prop::collection::vec(-1.0f64..1.0, oc * c * k * k),
                prop::collection::vec(-1.0f64..1.0, oc),
                prop::collection::vec(0.0f64..1.0, h * w * c),
            )
                .prop_map(move |(f, b, x)| {
                    let spec = ConvSpec {
                        input_shape: (h, w, c),
                        filters: Array4::from_shape_vec((oc, c, k, k), f).unwrap(),
                        bias: Array1::from(b),
                        stride,
                        padding,
                        pad: PadMode::Zero,
                    };
                    (spec, x)
                })
        })
}

proptest! {
    #[test]
    fn lowered_conv_matches_direct((spec, x) in spec_strategy()) {
        let layer = lower_conv_to_affine(&spec).unwrap();
        let lowered = layer.apply(Array1::from(x.clone()));
        let direct = direct_conv(&spec, &x);
        prop_assert_eq!(lowered.len(), direct.len());
        let (oh, ow, oc) = spec.output_shape().unwrap();
        prop_assert_eq!(direct.len(), oh * ow * oc);
        for (a, b) in lowered.iter().zip(&direct) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
