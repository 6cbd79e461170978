//! Sanity checks for the combinatorial solvers the other test targets lean on.

mod common;

use common::{bipartite_feasible, line_lp_cost, MaxFlow, MinCostFlow};

#[test]
fn max_flow_textbook_network() {
    // s=0, t=5; the classic six-node example with maximum flow 23.
    let mut g = MaxFlow::new(6);
    for (a, b, c) in [(0, 1, 16), (0, 2, 13), (1, 3, 12), (2, 1, 4), (2, 4, 14), (3, 2, 9), (3, 5, 20), (4, 3, 7), (4, 5, 4)] {
        g.add_edge(a, b, c);
    }
    assert_eq!(g.run(0, 5), 23);
}

#[test]
fn min_cost_flow_picks_cheap_assignment() {
    // Two workers, two jobs; the diagonal costs 1 + 1, the anti-diagonal 5 + 5.
    let mut g = MinCostFlow::new(6);
    g.add_edge(4, 0, 1, 0.0);
    g.add_edge(4, 1, 1, 0.0);
    g.add_edge(2, 5, 1, 0.0);
    g.add_edge(3, 5, 1, 0.0);
    g.add_edge(0, 2, 1, 1.0);
    g.add_edge(0, 3, 1, 5.0);
    g.add_edge(1, 2, 1, 5.0);
    g.add_edge(1, 3, 1, 1.0);
    assert_eq!(g.run(4, 5, 2), (2, 2.0));
}

#[test]
fn bipartite_small_cases() {
    assert!(bipartite_feasible(&[1, 0, 0], &[0, 0, 1], 2));
    assert!(!bipartite_feasible(&[0, 1, 0], &[0, 0, 1], 2));
    assert!(bipartite_feasible(&[1, 1], &[1, 1], 0));
    assert!(!bipartite_feasible(&[0, 1], &[1, 0], 0));
}

#[test]
fn line_lp_direct_and_split_paths() {
    let dt = 0.1;
    let n = 9;
    let mut a = vec![0; n];
    let mut b = vec![0; n];
    a[0] = 1;
    b[n - 1] = 1;
    let direct = line_lp_cost(&a, &b, &[], &[2.0], dt).unwrap();
    assert!((direct - 2.0 / 0.8).abs() < 1e-12);
    // Equal weights through one uncapped interior node split the gap evenly.
    let split = line_lp_cost(&a, &b, &[vec![1; n]], &[1.0, 1.0], dt).unwrap();
    assert!((split - 2.0 / 0.4).abs() < 1e-12);
    // Blocking the midpoint forces the next best split, 3 + 5 bins.
    let mut cap = vec![1; n];
    cap[4] = 0;
    let blocked = line_lp_cost(&a, &b, &[cap], &[1.0, 1.0], dt).unwrap();
    assert!((blocked - (1.0 / 0.3 + 1.0 / 0.5)).abs() < 1e-12);
    // No interior bin at all: nothing can be routed.
    assert!(line_lp_cost(&a, &b, &[vec![0; n]], &[1.0, 1.0], dt).is_none());
}
