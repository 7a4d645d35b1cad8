//! Random simple graphs with prescribed degrees: configuration-model stub
//! pairing followed by double-edge swaps that repair self-loops,
//! duplicates and disallowed pairs.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

const RESTARTS: usize = 20;

fn key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

struct EdgeSet {
    counts: HashMap<(usize, usize), usize>,
}

impl EdgeSet {
    fn insert(&mut self, e: (usize, usize)) {
        *self.counts.entry(key(e.0, e.1)).or_insert(0) += 1;
    }

    fn remove(&mut self, e: (usize, usize)) {
        let k = key(e.0, e.1);
        let c = self.counts.get_mut(&k).expect("edge present");
        *c -= 1;
        if *c == 0 {
            self.counts.remove(&k);
        }
    }

    fn count(&self, e: (usize, usize)) -> usize {
        self.counts.get(&key(e.0, e.1)).copied().unwrap_or(0)
    }
}

/// Edges giving every node in `nodes` exactly `k` neighbors among the pairs
/// `allowed` accepts. When `k * nodes.len()` is odd one stub is dropped, so
/// a single node ends with `k - 1`.
pub(crate) fn regular(
    nodes: &[usize],
    k: usize,
    allowed: &dyn Fn(usize, usize) -> bool,
    rng: &mut impl Rng,
) -> Result<Vec<(usize, usize)>> {
    if k == 0 || nodes.is_empty() {
        return Ok(Vec::new());
    }
    if k >= nodes.len() {
        return Err(Error::Infeasible(format!(
            "{k} neighbors requested among {} nodes",
            nodes.len()
        )));
    }
    let mut stubs: Vec<usize> = nodes.iter().flat_map(|&v| std::iter::repeat_n(v, k)).collect();
    stubs.shuffle(rng);
    if stubs.len() % 2 == 1 {
        stubs.pop();
    }

    let is_bad = |e: (usize, usize), set: &EdgeSet| e.0 == e.1 || !allowed(e.0, e.1) || set.count(e) > 1;
    let fits = |e: (usize, usize), set: &EdgeSet| e.0 != e.1 && allowed(e.0, e.1) && set.count(e) == 0;

    for _ in 0..RESTARTS {
        stubs.shuffle(rng);
        let mut edges: Vec<(usize, usize)> = stubs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
        let m = edges.len();
        let mut set = EdgeSet { counts: HashMap::new() };
        for &e in &edges {
            set.insert(e);
        }
        let mut budget = 200 * m + 1000;
        'repair: loop {
            let bad: Vec<usize> = (0..m).filter(|&i| is_bad(edges[i], &set)).collect();
            if bad.is_empty() {
                return Ok(edges);
            }
            for i in bad {
                while is_bad(edges[i], &set) {
                    if budget == 0 {
                        break 'repair;
                    }
                    budget -= 1;
                    let j = rng.random_range(0..m);
                    if j == i {
                        continue;
                    }
                    let (a, b) = edges[i];
                    let (c, d) = edges[j];
                    let (e1, e2) = if rng.random::<bool>() { ((a, c), (b, d)) } else { ((a, d), (b, c)) };
                    set.remove(edges[i]);
                    set.remove(edges[j]);
                    if key(e1.0, e1.1) != key(e2.0, e2.1) && fits(e1, &set) && fits(e2, &set) {
                        set.insert(e1);
                        set.insert(e2);
                        edges[i] = e1;
                        edges[j] = e2;
                    } else {
                        set.insert(edges[i]);
                        set.insert(edges[j]);
                    }
                }
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no simple {k}-regular pairing found over {} nodes after {RESTARTS} restarts",
        nodes.len()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn check(nodes: &[usize], edges: &[(usize, usize)], k: usize, allowed: &dyn Fn(usize, usize) -> bool) {
        let mut seen = HashSet::new();
        let mut deg = HashMap::new();
        for &(u, v) in edges {
            assert_ne!(u, v);
            assert!(allowed(u, v));
            assert!(seen.insert(key(u, v)));
            *deg.entry(u).or_insert(0) += 1;
            *deg.entry(v).or_insert(0) += 1;
        }
        let short = nodes.iter().filter(|v| deg.get(v).copied().unwrap_or(0) != k).count();
        assert!(short <= (nodes.len() * k) % 2);
    }

    #[test]
    fn regular_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nodes: Vec<usize> = (10..60).collect();
        for k in [1, 2, 5, 9, 49] {
            let e = regular(&nodes, k, &|_, _| true, &mut rng).unwrap();
            check(&nodes, &e, k, &|_, _| true);
        }
        let odd: Vec<usize> = (0..7).collect();
        let e = regular(&odd, 3, &|_, _| true, &mut rng).unwrap();
        assert_eq!(e.len(), 10);
        check(&odd, &e, 3, &|_, _| true);
    }

    #[test]
    fn bipartite_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let nodes: Vec<usize> = (0..40).collect();
        let across = |u: usize, v: usize| (u < 20) != (v < 20);
        for k in [1, 3, 8, 12] {
            let e = regular(&nodes, k, &across, &mut rng).unwrap();
            check(&nodes, &e, k, &across);
        }
    }

    #[test]
    fn impossible_requests_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let nodes: Vec<usize> = (0..4).collect();
        assert!(matches!(regular(&nodes, 4, &|_, _| true, &mut rng), Err(Error::Infeasible(_))));
        let across = |u: usize, v: usize| (u < 2) != (v < 2);
        assert!(matches!(regular(&nodes, 3, &across, &mut rng), Err(Error::Infeasible(_))));
    }
}
