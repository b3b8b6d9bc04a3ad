use std::collections::HashMap;

use crate::graph::Graph;

/// Structural role per node from 1-WL color refinement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WlRoles {
    pub role_id: Vec<usize>,
    pub num_roles: usize,
    pub iterations_used: usize,
}

/// Renumbers `keys` densely by first appearance.
fn relabel<K: std::hash::Hash + Eq>(keys: impl IntoIterator<Item = K>) -> (Vec<usize>, usize) {
    let mut ids = HashMap::new();
    let out = keys
        .into_iter()
        .map(|k| {
            let next = ids.len();
            *ids.entry(k).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

/// 1-WL refinement starting from in-degree.
///
/// Each round a node's new color is determined by its current color together
/// with the sorted multiset of its in-neighbors' colors. Colors are kept as
/// dense ids assigned in node order, so role ids never depend on hash values.
/// Stops once the partition no longer splits or after `max_iterations` rounds.
pub fn wl_roles(g: &Graph, max_iterations: usize) -> WlRoles {
    let n = g.num_nodes();
    let (mut colors, mut count) = relabel((0..n).map(|i| g.in_degree(i)));
    let mut iterations_used = 0;
    for _ in 0..max_iterations.max(1) {
        let signatures = (0..n).map(|i| {
            let mut neigh: Vec<usize> = g.in_neighbors(i).iter().map(|&j| colors[j]).collect();
            neigh.sort_unstable();
            (colors[i], neigh)
        });
        let (next, next_count) = relabel(signatures);
        iterations_used += 1;
        let stable = next_count == count;
        colors = next;
        count = next_count;
        if stable {
            break;
        }
    }
    WlRoles {
        role_id: colors,
        num_roles: count,
        iterations_used,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::tensor::Tensor;

    fn undirected(n: usize, pairs: &[(usize, usize)]) -> Graph {
        let edges: Vec<_> = pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        build_graph(n, &edges, Tensor::zeros(&[n, 1]), Tensor::zeros(&[edges.len(), 0])).unwrap()
    }

    #[test]
    fn cycle_has_one_role() {
        let r = wl_roles(&undirected(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]), 5);
        assert_eq!(r.num_roles, 1);
        assert_eq!(r.role_id, vec![0; 4]);
    }

    #[test]
    fn path_has_two_roles() {
        let r = wl_roles(&undirected(3, &[(0, 1), (1, 2)]), 5);
        assert_eq!(r.role_id, vec![0, 1, 0]);
        assert_eq!(r.num_roles, 2);
    }

    #[test]
    fn star_has_two_roles() {
        let r = wl_roles(&undirected(4, &[(0, 1), (0, 2), (0, 3)]), 5);
        assert_eq!(r.num_roles, 2);
        assert_eq!(r.role_id, vec![0, 1, 1, 1]);
    }

    #[test]
    fn refinement_splits_beyond_degree() {
        // path 0-1-2-3-4: degrees give {ends}, {inner}; refinement separates 2
        let r = wl_roles(&undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]), 10);
        assert_eq!(r.num_roles, 3);
        assert_eq!(r.role_id[0], r.role_id[4]);
        assert_eq!(r.role_id[1], r.role_id[3]);
        assert_ne!(r.role_id[1], r.role_id[2]);
        let one = wl_roles(&undirected(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]), 1);
        assert_eq!(one.iterations_used, 1);
    }
}
