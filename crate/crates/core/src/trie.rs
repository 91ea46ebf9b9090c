//! Binary tries over lazily generated bit streams.
//!
//! Each stream is stored at the shallowest node on its path that no other
//! stream passes through. A node at depth `d` splits its streams on the bit
//! at position `d`, so a leaf's depth is the length of the stream's minimal
//! distinguishing prefix. Streams are extended only as far as the
//! construction reads them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::source::{BitStream, Symbol};

/// Default depth cap for `n` strings: `128 * ceil(log2(n + 2))`.
pub fn default_max_depth(n: usize) -> usize {
    let bits = usize::BITS - (n + 1).leading_zeros();
    128 * bits as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Empty,
    Leaf {
        stream: usize,
        depth: usize,
    },
    Internal {
        depth: usize,
        children: [Option<usize>; 2],
    },
}

#[derive(Debug, Clone)]
pub struct Trie {
    nodes: Vec<Node>,
    n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrieStats {
    pub n: usize,
    /// External path length: the sum of leaf depths.
    pub epl: u64,
    /// Number of internal nodes, unary ones included.
    pub size: usize,
    pub height: usize,
    pub depth_histogram: BTreeMap<usize, usize>,
}

pub fn build_trie(streams: &mut [BitStream], max_depth: usize) -> Result<Trie> {
    let n = streams.len();
    match n {
        0 => {
            return Ok(Trie {
                nodes: vec![Node::Empty],
                n,
            })
        }
        1 => {
            return Ok(Trie {
                nodes: vec![Node::Leaf {
                    stream: 0,
                    depth: 0,
                }],
                n,
            })
        }
        _ => {}
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut nodes = vec![Node::Internal {
        depth: 0,
        children: [None, None],
    }];
    // (node id, range into `order`)
    let mut pending = vec![(0usize, 0usize, n)];
    while let Some((id, start, end)) = pending.pop() {
        let depth = match nodes[id] {
            Node::Internal { depth, .. } => depth,
            _ => unreachable!(),
        };
        let group = &mut order[start..end];
        if depth >= max_depth {
            let mut indices = group.to_vec();
            indices.sort_unstable();
            return Err(Error::DepthExceeded {
                indices,
                max_depth,
                replicate: None,
            });
        }
        // Stable-free partition: zeros to the front.
        let mut split = 0;
        for i in 0..group.len() {
            if streams[group[i]].bit(depth) == Symbol::Zero {
                group.swap(i, split);
                split += 1;
            }
        }
        let ranges = [(start, start + split), (start + split, end)];
        let mut children = [None, None];
        for (side, &(a, b)) in ranges.iter().enumerate() {
            let count = b - a;
            if count == 0 {
                continue;
            }
            let child = nodes.len();
            if count == 1 {
                nodes.push(Node::Leaf {
                    stream: order[a],
                    depth: depth + 1,
                });
            } else {
                nodes.push(Node::Internal {
                    depth: depth + 1,
                    children: [None, None],
                });
                pending.push((child, a, b));
            }
            children[side] = Some(child);
        }
        nodes[id] = Node::Internal { depth, children };
    }
    Ok(Trie { nodes, n })
}

impl Trie {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// `(stream index, depth)` for every leaf.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Leaf { stream, depth } => Some((stream, depth)),
            _ => None,
        })
    }

    pub fn external_path_length(&self) -> u64 {
        self.leaves().map(|(_, d)| d as u64).sum()
    }

    /// External path lengths of the two root subtrees, each re-rooted as a
    /// trie over its own strings. Both are zero for `n <= 1`.
    pub fn subtree_path_lengths(&self) -> [u64; 2] {
        let mut out = [0u64; 2];
        if let Node::Internal { children, .. } = self.nodes[0] {
            for (side, child) in children.iter().enumerate() {
                if let Some(c) = child {
                    out[side] = self.path_length_below(*c);
                }
            }
        }
        out
    }

    /// Path length measured below the root split: `epl - n` for `n >= 2`,
    /// zero otherwise. This is the functional obeying the split recurrences
    /// with toll `n` and `L_0 = L_1 = 0` exactly.
    pub fn split_path_length(&self) -> u64 {
        let [a, b] = self.subtree_path_lengths();
        a + b
    }

    fn path_length_below(&self, id: usize) -> u64 {
        let base = match self.nodes[id] {
            Node::Internal { depth, .. } | Node::Leaf { depth, .. } => depth,
            Node::Empty => return 0,
        };
        let mut total = 0u64;
        let mut stack = vec![id];
        while let Some(i) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { depth, .. } => total += (depth - base) as u64,
                Node::Internal { children, .. } => stack.extend(children.iter().flatten()),
                Node::Empty => {}
            }
        }
        total
    }

    pub fn stats(&self) -> TrieStats {
        let mut depth_histogram = BTreeMap::new();
        for (_, d) in self.leaves() {
            *depth_histogram.entry(d).or_insert(0) += 1;
        }
        TrieStats {
            n: self.n,
            epl: self.external_path_length(),
            size: self
                .nodes
                .iter()
                .filter(|n| matches!(n, Node::Internal { .. }))
                .count(),
            height: depth_histogram.keys().next_back().copied().unwrap_or(0),
            depth_histogram,
        }
    }
}

impl TrieStats {
    /// Two-column `depth,count` CSV.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("depth,count\n");
        for (d, c) in &self.depth_histogram {
            out.push_str(&format!("{d},{c}\n"));
        }
        out
    }
}

/// Smallest external path length of any binary tree with `n` leaves, attained
/// by the perfectly balanced shape. Zero for `n <= 1`.
pub fn balanced_epl(n: usize) -> u64 {
    if n <= 1 {
        return 0;
    }
    let q = (usize::BITS - 1 - n.leading_zeros()) as u64;
    let n = n as u64;
    n * q + 2 * (n - (1u64 << q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::{generate_strings, MarkovChain};
    use proptest::prelude::*;

    /// Fair streams rejection-sampled to start with the given prefixes.
    fn fixed(prefixes: &[&str]) -> Vec<BitStream> {
        let chain = MarkovChain::new(0.5, 0.5, 0.5).unwrap();
        let mut out = Vec::new();
        let mut idx = 0u64;
        for p in prefixes {
            let bits: Vec<u8> = p.bytes().map(|b| b - b'0').collect();
            loop {
                let mut s = BitStream::new(chain, 12345, idx, None);
                idx += 1;
                if s.prefix(bits.len()) == bits {
                    out.push(s);
                    break;
                }
            }
        }
        out
    }

    #[test]
    fn four_string_example() {
        let mut s = fixed(&["000", "001", "01", "1"]);
        let t = build_trie(&mut s, 64).unwrap();
        let mut depths: Vec<_> = t.leaves().collect();
        depths.sort();
        assert_eq!(depths, vec![(0, 3), (1, 3), (2, 2), (3, 1)]);
        assert_eq!(t.external_path_length(), 9);
        let st = t.stats();
        assert_eq!(st.height, 3);
        assert_eq!(st.size, 3);
        assert_eq!(st.depth_histogram, BTreeMap::from([(1, 1), (2, 1), (3, 2)]));
        assert_eq!(st.histogram_csv(), "depth,count\n1,1\n2,1\n3,2\n");
    }

    #[test]
    fn small_tries() {
        let t = build_trie(&mut [], 8).unwrap();
        assert_eq!((t.external_path_length(), t.len()), (0, 0));
        assert_eq!(*t.root(), Node::Empty);
        let chain = MarkovChain::new(0.5, 0.5, 0.5).unwrap();
        let mut one = [BitStream::new(chain, 1, 0, None)];
        let t = build_trie(&mut one, 8).unwrap();
        assert_eq!(t.external_path_length(), 0);
        assert_eq!(one[0].len(), 0, "no bit drawn for n = 1");
        let mut two = fixed(&["00", "01"]);
        assert_eq!(build_trie(&mut two, 8).unwrap().external_path_length(), 4);
    }

    #[test]
    fn shared_prefix_of_length_k() {
        for k in 1..6 {
            let common = "0".repeat(k - 1);
            let mut s = fixed(&[&format!("{common}0"), &format!("{common}1")]);
            let t = build_trie(&mut s, 64).unwrap();
            assert_eq!(t.external_path_length(), 2 * k as u64);
        }
    }

    #[test]
    fn depth_cap_is_reported() {
        let mut s = fixed(&["0000000", "0000001", "1"]);
        match build_trie(&mut s, 4) {
            Err(Error::DepthExceeded {
                indices, max_depth, ..
            }) => {
                assert_eq!(indices, vec![0, 1]);
                assert_eq!(max_depth, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_cap() {
        assert_eq!(default_max_depth(0), 128);
        assert_eq!(default_max_depth(2), 128 * 2);
        assert_eq!(default_max_depth(3), 128 * 3);
        assert_eq!(default_max_depth(1000), 128 * 10);
    }

    #[test]
    fn balanced_helper() {
        assert_eq!(balanced_epl(2), 2);
        assert_eq!(balanced_epl(3), 5);
        assert_eq!(balanced_epl(4), 8);
        assert_eq!(balanced_epl(5), 12);
    }

    fn random_trie(n: usize, seed: u64) -> (Trie, Vec<BitStream>) {
        let chain = MarkovChain::new(0.4, 0.6, 0.7).unwrap();
        let mut s = generate_strings(&chain, n, seed, None);
        let t = build_trie(&mut s, default_max_depth(n)).unwrap();
        (t, s)
    }

    proptest! {
        #[test]
        fn structural_invariants(n in 0usize..120, seed in any::<u64>()) {
            let (t, mut streams) = random_trie(n, seed);
            let st = t.stats();
            let mut seen: Vec<_> = t.leaves().map(|(s, _)| s).collect();
            seen.sort();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            prop_assert_eq!(st.epl, st.depth_histogram.iter().map(|(d, c)| (*d * *c) as u64).sum::<u64>());
            prop_assert!(st.epl >= balanced_epl(n));
            if n >= 2 {
                prop_assert_eq!(st.epl, n as u64 + t.split_path_length());
                // Minimality: each leaf's parent prefix is shared by another stream.
                let prefixes: Vec<Vec<u8>> = streams.iter_mut().map(|s| s.prefix(st.height)).collect();
                for (i, d) in t.leaves() {
                    prop_assert!(d >= 1);
                    let head = &prefixes[i][..d - 1];
                    let shared = (0..n).any(|j| j != i && &prefixes[j][..d - 1] == head);
                    prop_assert!(shared);
                    let unique = (0..n).all(|j| j == i || prefixes[j][..d] != prefixes[i][..d]);
                    prop_assert!(unique);
                }
            }
        }

        #[test]
        fn permutation_invariance(n in 2usize..80, seed in any::<u64>(), rot in 0usize..80) {
            let chain = MarkovChain::new(0.4, 0.6, 0.7).unwrap();
            let mut a = generate_strings(&chain, n, seed, None);
            let mut b = a.clone();
            b.rotate_left(rot % n);
            b.reverse();
            let sa = build_trie(&mut a, 512).unwrap().stats();
            let sb = build_trie(&mut b, 512).unwrap().stats();
            prop_assert_eq!(sa, sb);
        }

        #[test]
        fn inserting_never_decreases_epl(n in 1usize..100, seed in any::<u64>()) {
            let (small, _) = random_trie(n, seed);
            let (big, _) = random_trie(n + 1, seed);
            prop_assert!(big.external_path_length() >= small.external_path_length());
        }
    }
}
