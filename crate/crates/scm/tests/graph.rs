//! DAG validation, ordering (against a brute-force permutation oracle), and
//! the graph text format.

use cda_scm::{topological_order, validate_dag, CausalGraph, GraphError};
use ndarray::{array, Array2};
use proptest::prelude::*;

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

#[test]
fn two_node_chain_is_valid() {
    let a = array![[0.0, 1.0], [0.0, 0.0]];
    assert!(validate_dag(&a.view()).is_ok());
    assert_eq!(topological_order(&a.view()).unwrap(), vec![0, 1]);
}

#[test]
fn two_cycle_is_rejected() {
    let a = array![[0.0, 1.0], [1.0, 0.0]];
    match validate_dag(&a.view()) {
        Err(GraphError::Cycle(nodes)) => {
            assert!(!nodes.is_empty());
            for &i in &nodes {
                assert!(i < 2);
            }
        }
        other => panic!("expected a cycle error, got {other:?}"),
    }
}

#[test]
fn self_loop_is_rejected() {
    let a = array![[1.0, 0.0], [0.0, 0.0]];
    assert!(matches!(validate_dag(&a.view()), Err(GraphError::Cycle(_))));
}

#[test]
fn non_square_and_non_finite_are_rejected() {
    let a = Array2::<f64>::zeros((2, 3));
    assert!(matches!(validate_dag(&a.view()), Err(GraphError::NotSquare { .. })));

    let mut b = Array2::<f64>::zeros((2, 2));
    b[[0, 1]] = f64::NAN;
    assert!(matches!(validate_dag(&b.view()), Err(GraphError::NonFinite { .. })));
}

#[test]
fn edgeless_graph_orders_by_index() {
    let a = Array2::<f64>::zeros((2, 2));
    assert_eq!(topological_order(&a.view()).unwrap(), vec![0, 1]);
    let a5 = Array2::<f64>::zeros((5, 5));
    assert_eq!(topological_order(&a5.view()).unwrap(), vec![0, 1, 2, 3, 4]);
}

/// Checks an order against the definition: every edge points forward.
fn order_respects_edges(a: &Array2<f64>, order: &[usize]) -> bool {
    let n = a.nrows();
    let mut pos = vec![0; n];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }
    (0..n).all(|j| (0..n).all(|i| a[[j, i]] == 0.0 || pos[j] < pos[i]))
}

/// All permutations of 0..n (n <= 5 keeps this tiny).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in out {
            for v in 0..n {
                if !p.contains(&v) {
                    let mut q = p.clone();
                    q.push(v);
                    next.push(q);
                }
            }
        }
        out = next;
    }
    out
}

/// Random DAG adjacency: nodes get a random rank, edges only point from lower
/// to higher rank, so acyclicity holds by construction.
fn random_dag(n: usize, seed: u64, density: f64) -> Array2<f64> {
    use cda_tensor::rng::{derive_rng, next_uniform};
    let mut rng = derive_rng(seed, "random-dag", 0);
    let mut rank: Vec<usize> = (0..n).collect();
    // Fisher-Yates on the rank assignment.
    for i in (1..n).rev() {
        let j = (next_uniform::<f64>(&mut rng, 0.0, (i + 1) as f64)) as usize;
        rank.swap(i, j.min(i));
    }
    let mut a = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            if rank[j] < rank[i] && next_uniform::<f64>(&mut rng, 0.0, 1.0) < density {
                a[[j, i]] = next_uniform::<f64>(&mut rng, -1.5, 1.5);
            }
        }
    }
    a
}

#[test]
fn topological_order_matches_brute_force_search() {
    for seed in 0..30 {
        let n = 2 + (seed as usize % 4);
        let a = random_dag(n, seed, 0.6);
        let order = topological_order(&a.view()).unwrap();
        assert!(order_respects_edges(&a, &order), "returned order violates an edge");

        let brute: Vec<Vec<usize>> = permutations(n)
            .into_iter()
            .filter(|p| order_respects_edges(&a, p))
            .collect();
        assert!(!brute.is_empty(), "oracle found no valid order for a DAG");
        assert!(brute.contains(&order), "returned order not among oracle's valid orders");
    }
}

#[test]
fn text_format_roundtrips() {
    let a = array![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]];
    let g = CausalGraph::new(a, vec!["angle".into(), "light".into(), "shadow".into()]).unwrap();
    let text = g.to_text();
    let g2 = CausalGraph::from_text(&text).unwrap();
    assert_eq!(g2.n(), 3);
    assert_eq!(g2.adjacency(), g.adjacency());
    assert_eq!(g2.names(), g.names());
    assert_eq!(g2.order(), g.order());
    assert_eq!(g2.to_text(), text, "serialisation is canonical");
}

#[test]
fn text_format_keeps_fractional_weights() {
    let a = array![[0.0, 0.75], [0.0, 0.0]];
    let g = CausalGraph::new(a.clone(), names(2)).unwrap();
    let g2 = CausalGraph::from_text(&g.to_text()).unwrap();
    assert_eq!(g2.adjacency(), &a);
}

#[test]
fn text_format_rejects_malformed_input() {
    assert!(CausalGraph::from_text("").is_err());
    assert!(CausalGraph::from_text("n = 2\nnames = a,b\nrow0 = 0,1\n").is_err()); // missing row
    assert!(CausalGraph::from_text("n = two\n").is_err());
    assert!(CausalGraph::from_text("n = 1\nnames = a\nrow0 = 0\nbogus = 1\n").is_err());
    // Inconsistent declared order.
    let bad = "n = 2\nnames = a,b\nrow0 = 0,1\nrow1 = 0,0\norder = 1,0\n";
    assert!(matches!(CausalGraph::from_text(bad), Err(GraphError::BadOrder(_))));
    // Cycle inside an otherwise well-formed file.
    let cyc = "n = 2\nnames = a,b\nrow0 = 0,1\nrow1 = 1,0\n";
    assert!(matches!(CausalGraph::from_text(cyc), Err(GraphError::Cycle(_))));
}

#[test]
fn graph_accessors() {
    let a = array![[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]];
    let g = CausalGraph::new(a, vec!["angle".into(), "light".into(), "shadow".into()]).unwrap();
    assert_eq!(g.parents(2), vec![0, 1]);
    assert_eq!(g.parents(0), Vec::<usize>::new());
    assert_eq!(g.descendants(0), vec![2]);
    assert!(g.is_ancestor(0, 2));
    assert!(!g.is_ancestor(2, 0));
    assert_eq!(g.index_of("light"), Some(1));
    assert_eq!(g.index_of("nope"), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Rank-constructed matrices are always accepted, and the returned order
    /// respects every edge.
    #[test]
    fn random_dags_validate_and_order(seed in 0u64..10_000, n in 1usize..6, density in 0.0f64..1.0) {
        let a = random_dag(n, seed, density);
        prop_assert!(validate_dag(&a.view()).is_ok());
        let order = topological_order(&a.view()).unwrap();
        prop_assert!(order_respects_edges(&a, &order));
        let mut sorted = order.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    /// Planting a back edge on top of a chain always trips the cycle check.
    #[test]
    fn planted_cycles_are_caught(n in 2usize..6, back in 0usize..5, front in 0usize..5) {
        let (back, front) = (back % n, front % n);
        prop_assume!(back < front || (front == back && n > 1));
        let (lo, hi) = if back < front { (back, front) } else { (0, 1) };
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n - 1 {
            a[[i, i + 1]] = 1.0; // forward chain
        }
        a[[hi, lo]] = 1.0; // back edge closes a cycle
        prop_assert!(matches!(validate_dag(&a.view()), Err(GraphError::Cycle(_))));
    }
}
