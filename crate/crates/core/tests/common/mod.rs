#![allow(dead_code)]

use altsom::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Exhaustive permutations of 0..n (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        heap(k - 1, a, out);
    }
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = Vec::new();
    heap(n, &mut a, &mut out);
    out
}

pub fn brute_force_max_trace(values: &[Vec<f64>]) -> f64 {
    permutations(values.len())
        .iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| values[i][j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Matched fraction by enumerating every one-to-one cluster/class matching.
pub fn brute_force_ce(assign: &[usize], truth: &[usize]) -> f64 {
    let mut clusters: Vec<usize> = assign.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut classes: Vec<usize> = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let size = clusters.len().max(classes.len());
    let mut table = vec![vec![0.0; size]; size];
    for (a, t) in assign.iter().zip(truth) {
        let i = clusters.binary_search(a).unwrap();
        let j = classes.binary_search(t).unwrap();
        table[i][j] += 1.0;
    }
    brute_force_max_trace(&table) / assign.len() as f64
}

/// Well separated Gaussian blobs in the first `informative` dimensions plus
/// uniform noise dimensions, rescaled to [0, 1].
pub fn gaussian_blobs(per_class: usize, informative: usize, noise: usize, sd: f64, seed: u64) -> Dataset {
    let centers = [
        [0.15, 0.20, 0.80, 0.30, 0.70],
        [0.85, 0.25, 0.20, 0.70, 0.30],
        [0.50, 0.85, 0.50, 0.50, 0.50],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, sd).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let mut row: Vec<f64> = (0..informative).map(|d| center[d] + gauss.sample(&mut rng)).collect();
            row.extend((0..noise).map(|_| rng.random::<f64>()));
            rows.push(row);
            labels.push(Some(c));
        }
    }
    let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
    altsom::rescale_minmax(&Dataset::from_rows(rows, labels, names).unwrap())
}
