//! Oracles shared by the integration tests.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ccm_core::geometry::MetricField;
use nalgebra::DVector;

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Shortest path on a `k×k` lattice over the domain, with edges to every
/// node reachable by a primitive step of at most `radius` in each axis and
/// weights equal to the Riemannian length of the straight edge.
pub fn lattice_distance(mf: &MetricField, k: usize, radius: i64, from: (usize, usize), to: (usize, usize)) -> f64 {
    let d = mf.domain();
    let coord = |i: usize, j: usize| {
        let h0 = (d.upper[0] - d.lower[0]) / (k - 1) as f64;
        let h1 = (d.upper[1] - d.lower[1]) / (k - 1) as f64;
        [d.lower[0] + i as f64 * h0, d.lower[1] + j as f64 * h1]
    };
    let edge = |a: [f64; 2], b: [f64; 2]| {
        let sub = 16;
        let delta = [(b[0] - a[0]) / sub as f64, (b[1] - a[1]) / sub as f64];
        let dv = DVector::from_column_slice(&delta);
        (0..sub)
            .map(|s| {
                let t = (s as f64 + 0.5) / sub as f64;
                let m = mf.metric_at(&[a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]).unwrap();
                dv.dot(&(&m * &dv)).sqrt()
            })
            .sum::<f64>()
    };
    let steps: Vec<(i64, i64)> = (-radius..=radius)
        .flat_map(|a| (-radius..=radius).map(move |b| (a, b)))
        .filter(|&(a, b)| (a, b) != (0, 0) && gcd(a, b) == 1)
        .collect();
    let idx = |i: usize, j: usize| i * k + j;
    let mut dist = vec![f64::INFINITY; k * k];
    let mut heap = BinaryHeap::new();
    dist[idx(from.0, from.1)] = 0.0;
    heap.push(Reverse((0u64, from.0, from.1)));
    while let Some(Reverse((bits, i, j))) = heap.pop() {
        let dcur = f64::from_bits(bits);
        if dcur > dist[idx(i, j)] {
            continue;
        }
        if (i, j) == to {
            return dcur;
        }
        for &(a, b) in &steps {
            let (ni, nj) = (i as i64 + a, j as i64 + b);
            if ni < 0 || nj < 0 || ni >= k as i64 || nj >= k as i64 {
                continue;
            }
            let (ni, nj) = (ni as usize, nj as usize);
            let nd = dcur + edge(coord(i, j), coord(ni, nj));
            if nd < dist[idx(ni, nj)] {
                dist[idx(ni, nj)] = nd;
                // Non-negative floats order like their bit patterns.
                heap.push(Reverse((nd.to_bits(), ni, nj)));
            }
        }
    }
    f64::INFINITY
}
