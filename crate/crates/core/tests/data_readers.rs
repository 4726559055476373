use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semcert::data::{images_to_json, load_cifar10_bin, load_mnist_idx, parse_json_images};

fn data(name: &str) -> String {
    format!("{}/../../data/{name}", env!("CARGO_MANIFEST_DIR"))
}

/// Minimal IDX reader: big-endian header words, then raw bytes.
fn read_idx(path: &str) -> (Vec<u32>, Vec<u8>) {
    let mut bytes = Vec::new();
    std::fs::File::open(path).unwrap().read_to_end(&mut bytes).unwrap();
    let ndim = bytes[3] as usize;
    let words: Vec<u32> = (0..=ndim)
        .map(|k| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().unwrap()))
        .collect();
    (words, bytes[4 * (ndim + 1)..].to_vec())
}

#[test]
fn mnist_loader_agrees_with_independent_reader() {
    let (img_path, lbl_path) = (
        data("mnist/t10k-images-idx3-ubyte"),
        data("mnist/t10k-labels-idx1-ubyte"),
    );
    let samples = load_mnist_idx(&img_path, &lbl_path).unwrap();
    let (header, body) = read_idx(&img_path);
    let (lheader, labels) = read_idx(&lbl_path);
    assert_eq!(header[0], 0x0803);
    assert_eq!(lheader[0], 0x0801);
    let (count, rows, cols) = (header[1] as usize, header[2] as usize, header[3] as usize);
    assert_eq!(samples.len(), count);
    assert_eq!(lheader[1] as usize, count);
    let size = rows * cols;
    let mut byte_sum = 0u64;
    let mut loaded_sum = 0.0;
    for (k, s) in samples.iter().enumerate() {
        assert_eq!((s.image.height(), s.image.width(), s.image.channels()), (rows, cols, 1));
        assert_eq!(s.label, labels[k] as usize);
        byte_sum += body[k * size..(k + 1) * size].iter().map(|&b| b as u64).sum::<u64>();
        loaded_sum += s.image.pixels().iter().map(|p| (p * 255.0).round()).sum::<f64>();
    }
    assert_eq!(loaded_sum as u64, byte_sum);
    // spot check exact scaling on one image
    let k = count / 2;
    for (p, &b) in samples[k].image.pixels().iter().zip(&body[k * size..(k + 1) * size]) {
        assert_eq!(*p, b as f64 / 255.0);
    }
}

#[test]
fn cifar_loader_agrees_with_independent_reader() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let records: Vec<Vec<u8>> = (0..10)
        .map(|_| {
            let mut rec = vec![rng.random_range(0..10u8)];
            rec.extend((0..3072).map(|_| rng.random::<u8>()));
            rec
        })
        .collect();
    let dir = std::env::temp_dir().join(format!("semcert-cifar-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("batch.bin");
    std::fs::write(&path, records.concat()).unwrap();
    let samples = load_cifar10_bin(&path).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(samples.len(), 10);
    for (s, rec) in samples.iter().zip(&records) {
        assert_eq!(s.label, rec[0] as usize);
        for row in 0..32 {
            for col in 0..32 {
                for ch in 0..3 {
                    let byte = rec[1 + ch * 1024 + row * 32 + col];
                    assert_eq!(s.image.get(row, col, ch), byte as f64 / 255.0);
                }
            }
        }
    }
}

#[test]
fn json_images_round_trip() {
    let text = std::fs::read_to_string(data("rgb_synthetic.json")).unwrap();
    let samples = parse_json_images(&text).unwrap();
    assert_eq!(samples.len(), 200);
    assert!(samples.iter().all(|s| s.image.shape() == (8, 8, 3)));
    assert_eq!(parse_json_images(&images_to_json(&samples).unwrap()).unwrap(), samples);
}
