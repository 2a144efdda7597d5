use rayon::prelude::*;

/// Mutual nearest neighbors under Euclidean descriptor distance.
///
/// Returns `(i, j, distance)` for every pair where `j` is the nearest
/// neighbor of `desc0[i]` in `desc1`, `i` is the nearest neighbor of
/// `desc1[j]` in `desc0`, and the distance is at most `max_distance`. Ties
/// resolve to the lower index. Output is sorted by `i`.
pub fn match_forward_backward<D: AsRef<[f32]> + Sync>(
    desc0: &[D],
    desc1: &[D],
    max_distance: f32,
) -> Vec<(usize, usize, f32)> {
    if desc0.is_empty() || desc1.is_empty() {
        return Vec::new();
    }
    let forward = nearest_all(desc0, desc1);
    let backward = nearest_all(desc1, desc0);
    forward
        .iter()
        .enumerate()
        .filter_map(|(i, &(j, d2))| {
            (backward[j].0 == i && d2.sqrt() <= max_distance).then(|| (i, j, d2.sqrt()))
        })
        .collect()
}

fn nearest_all<D: AsRef<[f32]> + Sync>(from: &[D], to: &[D]) -> Vec<(usize, f32)> {
    from.par_iter()
        .map(|a| {
            let a = a.as_ref();
            let mut best = (usize::MAX, f32::INFINITY);
            for (j, b) in to.iter().enumerate() {
                let d2: f32 = a.iter().zip(b.as_ref()).map(|(x, y)| (x - y) * (x - y)).sum();
                if d2 < best.1 {
                    best = (j, d2);
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_desc(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect()
    }

    fn pairs(m: &[(usize, usize, f32)]) -> Vec<(usize, usize)> {
        m.iter().map(|&(i, j, _)| (i, j)).collect()
    }

    #[test]
    fn identical_lists_match_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_desc(&mut rng, 30, 16);
        let m = match_forward_backward(&d, &d, f32::INFINITY);
        assert_eq!(pairs(&m), (0..30).map(|i| (i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn permutation_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d0 = random_desc(&mut rng, 25, 16);
        let perm: Vec<usize> = (0..25).map(|i| (i * 7 + 3) % 25).collect();
        let mut d1 = vec![Vec::new(); 25];
        for (i, &p) in perm.iter().enumerate() {
            d1[p] = d0[i].clone();
        }
        let m = match_forward_backward(&d0, &d1, f32::INFINITY);
        assert_eq!(pairs(&m), perm.iter().enumerate().map(|(i, &p)| (i, p)).collect::<Vec<_>>());
    }

    #[test]
    fn planted_pair_among_far_descriptors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dim = 8;
        // far descriptors live in disjoint boxes per list
        let mut d0: Vec<Vec<f32>> = (0..10)
            .map(|_| (0..dim).map(|_| rng.random_range(10.0..20.0)).collect())
            .collect();
        let mut d1: Vec<Vec<f32>> = (0..12)
            .map(|_| (0..dim).map(|_| rng.random_range(-20.0..-10.0)).collect())
            .collect();
        let planted: Vec<f32> = vec![0.0; dim];
        d0[4] = planted.clone();
        let mut near = planted.clone();
        near[0] = 0.1;
        d1[7] = near;

        // exhaustive oracle: mutual nearest pairs within the threshold
        let dist = |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f32>().sqrt();
        let mut oracle = Vec::new();
        for i in 0..d0.len() {
            for j in 0..d1.len() {
                let dij = dist(&d0[i], &d1[j]);
                let fwd = (0..d1.len()).all(|k| dist(&d0[i], &d1[k]) >= dij);
                let bwd = (0..d0.len()).all(|k| dist(&d0[k], &d1[j]) >= dij);
                if fwd && bwd && dij <= 1.0 {
                    oracle.push((i, j));
                }
            }
        }
        assert_eq!(oracle, vec![(4, 7)]);
        assert_eq!(pairs(&match_forward_backward(&d0, &d1, 1.0)), oracle);
    }

    #[test]
    fn empty_inputs() {
        let e: Vec<Vec<f32>> = Vec::new();
        let d = vec![vec![1.0f32]];
        assert!(match_forward_backward(&e, &d, 1.0).is_empty());
        assert!(match_forward_backward(&d, &e, 1.0).is_empty());
    }
}
