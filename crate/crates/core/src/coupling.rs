//! Minibatch pairing of source and data samples.
//!
//! The optimal-transport coupling solves the assignment problem exactly
//! (Jonker-Volgenant shortest augmenting paths) on squared Euclidean costs.
//! Exactness is the point: batches are small, and the brute-force
//! enumeration oracle in the tests only makes sense against an exact solver.

use crate::error::{Error, Result};
use crate::numerics::Vector;

pub const MAX_ASSIGNMENT_SIZE: usize = 128;

/// Minimum-cost assignment on a dense square cost matrix.
/// Returns `perm` with row i matched to column perm[i].
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::Contract(format!(
            "assignment limited to n <= {MAX_ASSIGNMENT_SIZE}, got {n}"
        )));
    }
    for row in cost {
        if row.len() != n {
            return Err(Error::Contract("cost matrix must be square".into()));
        }
        if row.iter().any(|c| !c.is_finite()) {
            return Err(Error::Contract("cost matrix has non-finite entries".into()));
        }
    }

    // Jonker-Volgenant with 1-based potentials; p[j] is the row matched to
    // column j, column 0 is the virtual root.
    let mut u = vec![0.0_f64; n + 1];
    let mut v = vec![0.0_f64; n + 1];
    let mut p = vec![0_usize; n + 1];
    let mut way = vec![0_usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0_usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0_usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0_usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    Ok(perm)
}

/// Pairing permutation π minimizing Σᵢ ‖x₀ⁱ − x₁^{π(i)}‖² exactly.
pub fn ot_pair(batch_x0: &[Vector], batch_x1: &[Vector]) -> Result<Vec<usize>> {
    if batch_x0.len() != batch_x1.len() {
        return Err(Error::Contract(format!(
            "batch sizes differ: {} vs {}",
            batch_x0.len(),
            batch_x1.len()
        )));
    }
    let cost: Vec<Vec<f64>> = batch_x0
        .iter()
        .map(|a| {
            batch_x1
                .iter()
                .map(|b| {
                    let d = a.sub(b);
                    d.dot(&d)
                })
                .collect()
        })
        .collect();
    min_cost_assignment(&cost)
}

pub fn assignment_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_standard_normal, RngState};
    use proptest::prelude::*;

    fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
        let n = cost.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, cost, &mut best);
        best
    }

    fn permute(perm: &mut Vec<usize>, k: usize, cost: &[Vec<f64>], best: &mut f64) {
        if k == perm.len() {
            *best = best.min(assignment_cost(cost, perm));
            return;
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            permute(perm, k + 1, cost, best);
            perm.swap(k, i);
        }
    }

    #[test]
    fn singleton_is_identity() {
        let x0 = vec![Vector::new(vec![0.0])];
        let x1 = vec![Vector::new(vec![5.0])];
        assert_eq!(ot_pair(&x0, &x1).unwrap(), vec![0]);
    }

    #[test]
    fn two_point_swap() {
        // x0 = {(0), (10)}, x1 = {(9), (1)}: swapping costs 2, identity 162
        let x0 = vec![Vector::new(vec![0.0]), Vector::new(vec![10.0])];
        let x1 = vec![Vector::new(vec![9.0]), Vector::new(vec![1.0])];
        assert_eq!(ot_pair(&x0, &x1).unwrap(), vec![1, 0]);
    }

    #[test]
    fn matches_exhaustive_enumeration_n6() {
        let mut rng = RngState::new(500);
        for _ in 0..20 {
            let x0: Vec<Vector> = (0..6).map(|_| sample_standard_normal(&mut rng, 3)).collect();
            let x1: Vec<Vector> = (0..6).map(|_| sample_standard_normal(&mut rng, 3)).collect();
            let cost: Vec<Vec<f64>> = x0
                .iter()
                .map(|a| x1.iter().map(|b| { let d = a.sub(b); d.dot(&d) }).collect())
                .collect();
            let perm = ot_pair(&x0, &x1).unwrap();
            let got = assignment_cost(&cost, &perm);
            let want = brute_force_min(&cost);
            assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn translation_leaves_permutation_unchanged() {
        let mut rng = RngState::new(501);
        for _ in 0..10 {
            let x0: Vec<Vector> = (0..8).map(|_| sample_standard_normal(&mut rng, 2)).collect();
            let x1: Vec<Vector> = (0..8).map(|_| sample_standard_normal(&mut rng, 2)).collect();
            let shift = sample_standard_normal(&mut rng, 2);
            let shifted: Vec<Vector> = x0.iter().map(|x| x.add(&shift)).collect();
            assert_eq!(ot_pair(&x0, &x1).unwrap(), ot_pair(&shifted, &x1).unwrap());
        }
    }

    proptest! {
        #[test]
        fn assignment_never_beats_enumeration(seed in 0u64..1000) {
            let mut rng = RngState::new(seed);
            let n = 1 + (seed as usize % 5);
            let x0: Vec<Vector> = (0..n).map(|_| sample_standard_normal(&mut rng, 2)).collect();
            let x1: Vec<Vector> = (0..n).map(|_| sample_standard_normal(&mut rng, 2)).collect();
            let cost: Vec<Vec<f64>> = x0
                .iter()
                .map(|a| x1.iter().map(|b| { let d = a.sub(b); d.dot(&d) }).collect())
                .collect();
            let perm = ot_pair(&x0, &x1).unwrap();
            let got = assignment_cost(&cost, &perm);
            let want = brute_force_min(&cost);
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        }
    }
}
