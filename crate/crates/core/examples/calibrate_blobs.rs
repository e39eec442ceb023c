//! Sweeps the blob noise level and prints mean k-means ACC next to the ACC
//! of assigning every point to its nearest true class mean.
//!
//!     cargo run --release -p comclust --example calibrate_blobs -- 0.4,0.45,0.5

use comclust::eval::accuracy;
use comclust::generate_blobs;
use comclust::seeding::kmeans_init;

const K: usize = 5;
const N: usize = 2000;
const D: usize = 16;
const SEEDS: u64 = 10;

fn nearest_mean_labels(rows: &[&[f64]], truth: &[i64]) -> Vec<usize> {
    let mut means = vec![vec![0.0; D]; K];
    let mut counts = vec![0.0; K];
    for (row, &t) in rows.iter().zip(truth) {
        counts[t as usize] += 1.0;
        for (m, v) in means[t as usize].iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for (m, c) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= c);
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    rows.iter()
        .map(|row| {
            (0..K)
                .min_by(|&a, &b| dist(row, &means[a]).total_cmp(&dist(row, &means[b])))
                .unwrap()
        })
        .collect()
}

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "0.4,0.45,0.5".into());
    println!("spread  kmeans_acc  nearest_mean_acc");
    for spread in arg.split(',').map(|s| s.parse::<f64>().expect("spread")) {
        let (mut km, mut oracle) = (0.0, 0.0);
        for seed in 0..SEEDS {
            let data = generate_blobs(K, N, D, spread, seed).unwrap();
            let truth = data.ground_truth().unwrap();
            let rows: Vec<&[f64]> = (0..data.len()).map(|i| data.row(i)).collect();
            km += accuracy(&kmeans_init(&data, K, seed).unwrap(), truth).unwrap();
            oracle += accuracy(&nearest_mean_labels(&rows, truth), truth).unwrap();
        }
        println!("{spread:<7} {:<11.4} {:.4}", km / SEEDS as f64, oracle / SEEDS as f64);
    }
}
