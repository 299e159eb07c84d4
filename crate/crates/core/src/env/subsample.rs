use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::types::Instance;
use crate::error::{FlowError, Result};

/// Per-class output counts for the largest subset whose hop proportions
/// track `target`. The scarcest class (relative to its target share) fixes
/// the output size; counts are then apportioned by largest remainder.
pub fn hop_quota(available: &BTreeMap<usize, usize>, target: &BTreeMap<usize, f64>) -> Result<BTreeMap<usize, usize>> {
    let total: f64 = target.values().sum();
    if (total - 1.0).abs() > 1e-9 || target.values().any(|p| *p < 0.0) {
        return Err(FlowError::Config(format!("hop distribution sums to {total}, expected 1")));
    }
    let mut size = f64::INFINITY;
    for (&hops, &p) in target.iter().filter(|(_, p)| **p > 0.0) {
        let have = *available.get(&hops).unwrap_or(&0);
        if have == 0 {
            return Err(FlowError::EmptySubset(format!("no {hops}-hop instances in the pool")));
        }
        size = size.min(have as f64 / p);
    }
    let size = (size + 1e-9).floor() as usize;
    if size == 0 {
        return Err(FlowError::EmptySubset("target distribution admits no instances".into()));
    }
    let mut quota: BTreeMap<usize, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for (&hops, &p) in target.iter().filter(|(_, p)| **p > 0.0) {
        let exact = p * size as f64;
        let base = (exact + 1e-9).floor() as usize;
        quota.insert(hops, base);
        remainders.push((exact - base as f64, hops));
    }
    let assigned: usize = quota.values().sum();
    // largest fractional part first, lower hop count on ties
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, hops) in remainders.into_iter().take(size.saturating_sub(assigned)) {
        let q = quota.get_mut(&hops).expect("quota entry");
        if *q < available[&hops] {
            *q += 1;
        }
    }
    Ok(quota)
}

/// Deterministically subsamples `instances` so each hop class appears with
/// (close to) its target frequency. Output keeps the pool's stream order.
pub fn subsample_to_hops(instances: &[Instance], target: &BTreeMap<usize, f64>, seed: u64) -> Result<Vec<Instance>> {
    let mut by_hops: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_hops.entry(inst.hops).or_default().push(i);
    }
    let available = by_hops.iter().map(|(h, v)| (*h, v.len())).collect();
    let quota = hop_quota(&available, target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep: Vec<usize> = Vec::new();
    for (hops, count) in quota {
        let pool = &by_hops[&hops];
        keep.extend(pool.choose_multiple(&mut rng, count).copied());
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| instances[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
        pairs.iter().copied().collect()
    }

    fn dist(pairs: &[(usize, f64)]) -> BTreeMap<usize, f64> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn matching_pool_is_kept_whole() {
        let q = hop_quota(&counts(&[(2, 50), (3, 30), (4, 20)]), &dist(&[(2, 0.5), (3, 0.3), (4, 0.2)]));
        assert_eq!(q.unwrap(), counts(&[(2, 50), (3, 30), (4, 20)]));
    }

    #[test]
    fn scarce_class_bounds_the_output() {
        // 90 two-hop and 10 four-hop rebalanced to 50/50
        let q = hop_quota(&counts(&[(2, 90), (4, 10)]), &dist(&[(2, 0.5), (4, 0.5)])).unwrap();
        assert_eq!(q.values().sum::<usize>(), 20);
    }

    #[test]
    fn missing_class_is_an_error() {
        let q = hop_quota(&counts(&[(2, 90)]), &dist(&[(2, 0.5), (4, 0.5)]));
        assert!(matches!(q, Err(FlowError::EmptySubset(_))));
        assert!(hop_quota(&counts(&[(2, 9)]), &dist(&[(2, 0.7)])).is_err());
    }

    proptest! {
        #[test]
        fn quota_within_one_over_n(
            a in 1usize..200, b in 1usize..200, c in 1usize..200,
            wa in 1u32..10, wb in 1u32..10, wc in 0u32..10,
        ) {
            let w = (wa + wb + wc) as f64;
            let target = dist(&[(2, wa as f64 / w), (3, wb as f64 / w), (4, wc as f64 / w)]);
            let q = hop_quota(&counts(&[(2, a), (3, b), (4, c)]), &target).unwrap();
            let n: usize = q.values().sum();
            prop_assert!(n > 0);
            for (h, p) in &target {
                let got = *q.get(h).unwrap_or(&0) as f64 / n as f64;
                prop_assert!((got - p).abs() <= 1.0 / n as f64 + 1e-12);
            }
        }
    }
}
