//! Tree representation and the growing routine shared by all forest kinds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::{best_cutpoint, best_logrank_split, logrank_scores, select_feature, GrowData};
use super::{ForestConfig, ForestKind};
use crate::estimators::RiskTable;

/// A tree node. Observations with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf(Leaf),
}

/// Terminal node: the risk table of the training records routed here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub table: RiskTable,
    /// `(training index, bootstrap multiplicity)` pairs; kept only by
    /// conditional inference ensembles for count pooling across trees.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<(u32, u32)>,
}

/// A tree stored as a node arena; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Index of the leaf reached by `x`.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf(_) => return i,
            }
        }
    }

    pub fn leaf(&self, x: &[f64]) -> &Leaf {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf(l) => l,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Leaf> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf(l) => Some(l),
            Node::Split { .. } => None,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => {
                    1 + go(t, *left as usize).max(go(t, *right as usize))
                }
            }
        }
        go(self, 0)
    }
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a; stable across platforms and toolchains.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub(crate) fn tree_seed(seed: u64, tree_index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(tree_index as u64 ^ 0x5EED))
}

/// Bootstrap sample (or the identity sample when bootstrapping is off).
pub(crate) fn draw_sample(n: usize, cfg: &ForestConfig, seed: u64) -> Vec<u32> {
    if !cfg.bootstrap {
        return (0..n as u32).collect();
    }
    let size = ((n as f64) * cfg.sample_fraction).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size).map(|_| rng.random_range(0..n as u32)).collect()
}

/// `mtry` features with the smallest per-node keys. Keys depend only on the
/// node path and each feature's identity, not on column order.
pub(crate) fn sample_features(data: &GrowData, node_key: u64, mtry: usize) -> Vec<usize> {
    let mut keyed: Vec<(u64, u64, usize)> = data
        .feature_keys
        .iter()
        .enumerate()
        .map(|(f, &fk)| (splitmix64(node_key ^ fk), fk, f))
        .collect();
    keyed.sort_unstable();
    keyed.truncate(mtry);
    keyed.sort_unstable_by_key(|k| k.1);
    keyed.into_iter().map(|k| k.2).collect()
}

pub(crate) struct Grower<'a> {
    pub data: &'a GrowData,
    pub cfg: &'a ForestConfig,
    pub kind: ForestKind,
    pub mtry: usize,
    pub keep_members: bool,
}

impl Grower<'_> {
    pub fn grow(&self, sample: Vec<u32>, seed: u64) -> Tree {
        let mut nodes = Vec::new();
        self.grow_node(&mut nodes, sample, splitmix64(seed ^ 1), 0);
        Tree { nodes }
    }

    fn make_leaf(&self, idx: &[u32]) -> Node {
        let table = RiskTable::from_observations(
            idx.iter()
                .map(|&i| (self.data.times[i as usize], self.data.status[i as usize])),
        );
        let members = if self.keep_members {
            let mut sorted = idx.to_vec();
            sorted.sort_unstable();
            let mut members: Vec<(u32, u32)> = Vec::new();
            for i in sorted {
                match members.last_mut() {
                    Some((j, c)) if *j == i => *c += 1,
                    _ => members.push((i, 1)),
                }
            }
            members
        } else {
            Vec::new()
        };
        Node::Leaf(Leaf { table, members })
    }

    /// Split chosen for the node, or `None` when it must become a leaf.
    pub fn choose_split(&self, idx: &[u32], node_key: u64) -> Option<(usize, f64)> {
        let min = self.cfg.min_node_events;
        if self.data.n_events(idx) < 2 * min || self.data.n_features() == 0 {
            return None;
        }
        let features = sample_features(self.data, node_key, self.mtry);
        match self.kind {
            ForestKind::Rsf | ForestKind::RsfCompeting => {
                best_logrank_split(self.data, idx, &features, min, self.cfg.max_cutpoints)
                    .filter(|s| s.statistic > 0.0)
                    .map(|s| (s.feature, s.threshold))
            }
            ForestKind::ConditionalEnsemble => {
                let scores = logrank_scores(self.data, idx);
                let assoc = select_feature(self.data, idx, &scores, &features)?;
                if assoc.p_adjusted > self.cfg.alpha {
                    return None;
                }
                best_cutpoint(self.data, idx, &scores, assoc.feature, min, self.cfg.max_cutpoints)
                    .filter(|s| s.statistic > 0.0)
                    .map(|s| (s.feature, s.threshold))
            }
        }
    }

    fn grow_node(&self, nodes: &mut Vec<Node>, idx: Vec<u32>, node_key: u64, depth: usize) -> u32 {
        let at = nodes.len() as u32;
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok {
            self.choose_split(&idx, node_key)
        } else {
            None
        };
        let Some((feature, threshold)) = split else {
            nodes.push(self.make_leaf(&idx));
            return at;
        };
        let col = &self.data.columns[feature];
        let (left_idx, right_idx): (Vec<u32>, Vec<u32>) =
            idx.into_iter().partition(|&i| col[i as usize] <= threshold);
        nodes.push(Node::Split {
            feature,
            threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow_node(nodes, left_idx, splitmix64(node_key ^ 0xA), depth + 1);
        let right = self.grow_node(nodes, right_idx, splitmix64(node_key ^ 0xB), depth + 1);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut nodes[at as usize]
        {
            *l = left;
            *r = right;
        }
        at
    }
}
