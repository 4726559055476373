use ndarray::{Array1, Array2};
use proptest::prelude::*;
use semcert::attack::{enumerate_occlusion, enumerate_translation};
use semcert::model::{Image, Layer, NetworkModel};

const N: usize = 4;

fn toy_model(weights: &[f64]) -> NetworkModel {
    let w1 = Array2::from_shape_fn((6, N * N), |(r, c)| weights[(r * 7 + c) % weights.len()]);
    let w2 = Array2::from_shape_fn((3, 6), |(r, c)| weights[(r * 5 + c * 3 + 1) % weights.len()]);
    let layers = vec![
        Layer::affine(w1, Array1::from_elem(6, 0.1)).unwrap(),
        Layer::Relu,
        Layer::affine(w2, Array1::zeros(3)).unwrap(),
    ];
    NetworkModel::new((N, N, 1), 3, layers).unwrap()
}

fn shifted(px: &[f64], dy: i64, dx: i64, edge: bool) -> Vec<f64> {
    let n = N as i64;
    let mut out = vec![0.0; N * N];
    for i in 0..n {
        for j in 0..n {
            let (si, sj) = (i - dy, j - dx);
            let inside = (0..n).contains(&si) && (0..n).contains(&sj);
            out[(i * n + j) as usize] = if inside {
                px[(si * n + sj) as usize]
            } else if edge {
                px[(si.clamp(0, n - 1) * n + sj.clamp(0, n - 1)) as usize]
            } else {
                0.0
            };
        }
    }
    out
}

fn classify(model: &NetworkModel, px: &[f64]) -> usize {
    model.forward(px).unwrap().predicted_class
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn translation_matches_brute_force(
        weights in prop::collection::vec(-1.0f64..1.0, 11..30),
        px in prop::collection::vec(0.0f64..=1.0, N * N),
        edge in any::<bool>(),
    ) {
        let model = toy_model(&weights);
        let label = classify(&model, &px);
        let img = Image::new(N, N, 1, px.clone()).unwrap();
        let got = enumerate_translation(&model, &img, label, edge).unwrap();

        let n = N as i64;
        let mut norms = Vec::new();
        let mut first_fail: Option<i64> = None;
        for dy in -(n - 1)..n {
            for dx in -(n - 1)..n {
                let norm2 = dy * dy + dx * dx;
                norms.push(norm2);
                let fails = [(dy, dx), (-dy, -dx)]
                    .iter()
                    .any(|&(a, b)| classify(&model, &shifted(&px, a, b, edge)) != label);
                if fails {
                    first_fail = Some(first_fail.map_or(norm2, |f: i64| f.min(norm2)));
                }
            }
        }
        let max2 = *norms.iter().max().unwrap();
        let want = match first_fail {
            None => (max2 as f64).sqrt(),
            Some(f) => norms.iter().filter(|&&q| q < f).max().map_or(0.0, |&q| (q as f64).sqrt()),
        };
        prop_assert_eq!(got.radius, want);
        prop_assert_eq!(got.max_radius, (max2 as f64).sqrt());
        match (first_fail, &got.counterexample) {
            (None, None) => {}
            (Some(f), Some(ce)) => prop_assert_eq!(ce[0] * ce[0] + ce[1] * ce[1], f),
            _ => prop_assert!(false, "counterexample mismatch: {:?} vs {:?}", first_fail, got.counterexample),
        }
    }

    #[test]
    fn occlusion_matches_brute_force(
        weights in prop::collection::vec(-1.0f64..1.0, 11..30),
        px in prop::collection::vec(0.0f64..=1.0, N * N),
        fill in prop_oneof![Just(0.0), Just(0.5), Just(1.0)],
    ) {
        let model = toy_model(&weights);
        let label = classify(&model, &px);
        let img = Image::new(N, N, 1, px.clone()).unwrap();
        let got = enumerate_occlusion(&model, &img, label, fill).unwrap();

        let mut smallest_failing = None;
        'sizes: for size in 1..=N {
            for r in 0..=N - size {
                for c in 0..=N - size {
                    let mut q = px.clone();
                    for i in r..r + size {
                        for j in c..c + size {
                            q[i * N + j] = fill;
                        }
                    }
                    if classify(&model, &q) != label {
                        smallest_failing = Some(size);
                        break 'sizes;
                    }
                }
            }
        }
        let want = smallest_failing.map_or(N as f64, |s| (s - 1) as f64);
        prop_assert_eq!(got.radius, want);
        prop_assert_eq!(got.counterexample.as_ref().map(|ce| ce[2] as usize), smallest_failing);
    }
}
