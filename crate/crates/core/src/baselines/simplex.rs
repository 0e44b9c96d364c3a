//! Euclidean projection onto the probability simplex `{x >= 0, sum x = 1}`.

/// Threshold `tau` such that `max(v - tau, 0)` sums to one, found without
/// sorting: a running pivot over a shrinking candidate list, expected
/// linear time.
pub fn simplex_threshold(v: &[f64]) -> f64 {
    let Some((&first, rest)) = v.split_first() else {
        return 0.0;
    };
    let mut active = Vec::with_capacity(v.len());
    let mut parked = Vec::new();
    active.push(first);
    let mut tau = first - 1.0;
    for &y in rest {
        if y > tau {
            tau += (y - tau) / (active.len() as f64 + 1.0);
            if tau > y - 1.0 {
                active.push(y);
            } else {
                parked.append(&mut active);
                active.push(y);
                tau = y - 1.0;
            }
        }
    }
    for &y in &parked {
        if y > tau {
            active.push(y);
            tau += (y - tau) / active.len() as f64;
        }
    }
    loop {
        let before = active.len();
        let mut i = 0;
        while i < active.len() {
            let y = active[i];
            if y <= tau {
                active.swap_remove(i);
                tau += (tau - y) / active.len() as f64;
            } else {
                i += 1;
            }
        }
        if active.len() == before {
            break;
        }
    }
    tau
}

pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let tau = simplex_threshold(v);
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

pub fn simplex_project_into(v: &[f64], out: &mut [f64]) {
    let tau = simplex_threshold(v);
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - tau).max(0.0);
    }
}

/// Sort-based reference: largest `k` with `u_k > (sum_{j<=k} u_j - 1) / k`
/// over the values in decreasing order.
pub fn simplex_project_sorted(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut tau = 0.0;
    for (k, &x) in u.iter().enumerate() {
        prefix += x;
        let candidate = (prefix - 1.0) / (k as f64 + 1.0);
        if x > candidate {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        assert_eq!(simplex_project(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(simplex_project(&[1.0, 1.0]), vec![0.5, 0.5]);
        assert_eq!(simplex_project(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(simplex_project(&[-4.0]), vec![1.0]);
        assert!(simplex_project(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn lands_on_simplex_and_agrees_with_sorting(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let x = simplex_project(&v);
            prop_assert!(x.iter().all(|&a| a >= 0.0));
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let y = simplex_project_sorted(&v);
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let again = simplex_project(&x);
            for (a, b) in x.iter().zip(&again) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
