use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Latin hypercube of `k` points in `[-1, 1]^d`: along every axis each of
/// the `k` bins of width `2/k` holds exactly one point.
pub fn lhs(k: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![vec![0.0; d]; k];
    for a in 0..d {
        let mut bins: Vec<usize> = (0..k).collect();
        bins.shuffle(&mut rng);
        for (p, b) in pts.iter_mut().zip(bins) {
            p[a] = to_unit(b, k, rng.random());
        }
    }
    pts
}

fn to_unit(bin: usize, k: usize, jitter: f64) -> f64 {
    (-1.0 + 2.0 * (bin as f64 + jitter) / k as f64).clamp(-1.0, 1.0)
}

/// Largest `s >= 2` with `s^d` dividing `k`.
pub fn orthogonal_split(k: usize, d: usize) -> Option<usize> {
    if d == 0 {
        return None;
    }
    let mut best = None;
    let mut s = 2usize;
    while let Some(cells) = s.checked_pow(d as u32) {
        if cells > k {
            break;
        }
        if k.is_multiple_of(cells) {
            best = Some(s);
        }
        s += 1;
    }
    best
}

/// Orthogonal Latin hypercube. Each axis is cut into `s` blocks with the
/// largest `s` such that `s^d` divides `k`; every one of the `s^d` subcubes
/// gets `k / s^d` points, and the Latin property holds on the `k` fine bins.
/// Falls back to plain LHS (with a warning) when no such `s` exists.
pub fn orthogonal_lhs(k: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let Some(s) = orthogonal_split(k, d) else {
        if k > 1 {
            log::warn!("no orthogonal Latin hypercube for {k} points in {d} dimensions; using plain LHS");
        }
        return lhs(k, d, seed);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = s.pow(d as u32);
    let per_cell = k / cells;
    // Cell coordinates of every point.
    let coords: Vec<Vec<usize>> = (0..k)
        .map(|i| {
            let mut c = i / per_cell;
            (0..d)
                .map(|_| {
                    let v = c % s;
                    c /= s;
                    v
                })
                .collect()
        })
        .collect();
    let bins_per_block = k / s;
    let mut pts = vec![vec![0.0; d]; k];
    for a in 0..d {
        for block in 0..s {
            let members: Vec<usize> = (0..k).filter(|&i| coords[i][a] == block).collect();
            let mut bins: Vec<usize> = (block * bins_per_block..(block + 1) * bins_per_block).collect();
            bins.shuffle(&mut rng);
            for (&i, b) in members.iter().zip(bins) {
                pts[i][a] = to_unit(b, k, rng.random());
            }
        }
    }
    pts.shuffle(&mut rng);
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bin(x: f64, k: usize) -> usize {
        (((x + 1.0) / 2.0 * k as f64).floor() as usize).min(k - 1)
    }

    fn is_latin(pts: &[Vec<f64>], k: usize, d: usize) -> bool {
        (0..d).all(|a| {
            let mut seen = vec![false; k];
            pts.iter().all(|p| !std::mem::replace(&mut seen[bin(p[a], k)], true))
        })
    }

    #[test]
    fn four_points_in_two_dimensions() {
        let p = lhs(4, 2, 1);
        assert!(is_latin(&p, 4, 2));
        let single = lhs(1, 3, 1);
        assert_eq!(single.len(), 1);
        assert!(single[0].iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn orthogonal_quadrants() {
        assert_eq!(orthogonal_split(48, 2), Some(4));
        assert_eq!(orthogonal_split(500, 2), Some(10));
        assert_eq!(orthogonal_split(27, 3), Some(3));
        assert_eq!(orthogonal_split(7, 2), None);
        let p = orthogonal_lhs(48, 2, 3);
        assert!(is_latin(&p, 48, 2));
        let mut quad = [0; 4];
        for x in &p {
            quad[usize::from(x[0] >= 0.0) * 2 + usize::from(x[1] >= 0.0)] += 1;
        }
        assert_eq!(quad, [12; 4]);
    }

    proptest! {
        #[test]
        fn latin_projection_property(k in 1usize..80, d in 1usize..4, seed in any::<u64>()) {
            prop_assert!(is_latin(&lhs(k, d, seed), k, d));
            let o = orthogonal_lhs(k, d, seed);
            prop_assert_eq!(o.len(), k);
            prop_assert!(is_latin(&o, k, d));
            if let Some(s) = orthogonal_split(k, d) {
                let mut counts = std::collections::HashMap::new();
                for p in &o {
                    let cell: Vec<usize> = p.iter().map(|&x| bin(x, s)).collect();
                    *counts.entry(cell).or_insert(0usize) += 1;
                }
                prop_assert_eq!(counts.len(), s.pow(d as u32));
                prop_assert!(counts.values().all(|&c| c == k / s.pow(d as u32)));
            }
        }
    }
}
