//! The CDF dominance test agrees with an explicit matching on integer laws.

mod common;

use common::bipartite_feasible;
use daot_core::feasibility::check_da_feasibility_bins;
use daot_core::{Measure, TimeGrid};
use proptest::prelude::*;

fn counts_pair() -> impl Strategy<Value = (Vec<i64>, Vec<i64>, usize)> {
    (2usize..12).prop_flat_map(|n| {
        (prop::collection::vec(0i64..4, n), prop::collection::vec(0i64..4, n), 0usize..5)
    })
}

/// Rescale `b` to the total of `a` by moving single units, keeping both positive.
fn equalize(a: &mut [i64], b: &mut [i64]) {
    if a.iter().sum::<i64>() == 0 {
        a[0] = 1;
    }
    if b.iter().sum::<i64>() == 0 {
        b[b.len() - 1] = 1;
    }
    let (sa, sb): (i64, i64) = (a.iter().sum(), b.iter().sum());
    let last = b.len() - 1;
    if sa > sb {
        b[last] += sa - sb;
    } else {
        a[0] += sb - sa;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn dominance_matches_matching((a, b, shift) in counts_pair()) {
        let (mut a, mut b) = (a, b);
        equalize(&mut a, &mut b);
        let n = a.len();
        let total: i64 = a.iter().sum();
        let grid = TimeGrid::new(1.0, n).unwrap();
        let m = |c: &[i64]| Measure::new(grid, c.iter().map(|x| *x as f64 / total as f64).collect()).unwrap();
        let ours = check_da_feasibility_bins(&m(&a), &m(&b), shift).unwrap();
        prop_assert_eq!(ours.feasible, bipartite_feasible(&a, &b, shift), "a={:?} b={:?} shift={}", a, b, shift);
    }
}
