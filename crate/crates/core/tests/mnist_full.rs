//! Full MNIST IDX files, read from `MNIST_DIR` (skipped when unset).

use std::path::PathBuf;
use tsee::dataset::load_idx;

const TRAIN_COUNTS: [usize; 10] = [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];
const TEST_COUNTS: [usize; 10] = [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009];

fn histogram(labels: &[usize]) -> [usize; 10] {
    let mut h = [0; 10];
    for &l in labels {
        h[l] += 1;
    }
    h
}

#[test]
fn full_mnist_loads_with_published_label_counts() {
    let Some(dir) = std::env::var_os("MNIST_DIR").map(PathBuf::from) else {
        eprintln!("MNIST_DIR not set, skipping");
        return;
    };
    let train = load_idx::<f32>(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")).unwrap();
    let test = load_idx::<f32>(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!((train.len(), train.dim()), (60_000, 784));
    assert_eq!((test.len(), test.dim()), (10_000, 784));
    assert_eq!(histogram(train.labels.as_ref().unwrap()), TRAIN_COUNTS);
    assert_eq!(histogram(test.labels.as_ref().unwrap()), TEST_COUNTS);
    let px = train.features.as_slice();
    assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(px.iter().copied().fold(0.0f32, f32::max), 1.0);
}

#[test]
fn bundled_subsets_are_prefixes_of_the_full_files() {
    let Some(dir) = std::env::var_os("MNIST_DIR").map(PathBuf::from) else {
        eprintln!("MNIST_DIR not set, skipping");
        return;
    };
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let sub = load_idx::<f64>(
        data.join("mnist-test-1k-images-idx3-ubyte.gz"),
        data.join("mnist-test-1k-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    let full = load_idx::<f64>(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).unwrap();
    assert_eq!(sub.features, full.head(1000).features);
    assert_eq!(sub.labels, full.head(1000).labels);
}
