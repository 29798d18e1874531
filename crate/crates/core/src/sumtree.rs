//! Binary computational trees describing a summation order.
//!
//! Leaves are the inputs `x_1..x_n`; internal node `k` (for `k = 2..=n`)
//! holds the partial sum `s_k` and is executed at step `k`. A node's children
//! are leaves or earlier nodes, so the node index doubles as a timestamp.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wide::WideReal;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Child {
    Leaf(usize),
    Node(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: usize,
    pub left: Child,
    pub right: Child,
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    n: usize,
    nodes: Vec<NodeSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TreeJson", into = "TreeJson")]
pub struct SumTree {
    n: usize,
    /// `children[k - 2]` are the operands of node `k`.
    children: Vec<(Child, Child)>,
    /// Parent node of node `k` (index `k`), 0 for the root.
    node_parent: Vec<usize>,
    /// Parent node of leaf `i` (index `i`), 0 when `n = 1`.
    leaf_parent: Vec<usize>,
    /// Height of node `k` (index `k`).
    heights: Vec<usize>,
}

impl From<SumTree> for TreeJson {
    fn from(t: SumTree) -> Self {
        TreeJson {
            n: t.n,
            nodes: t.nodes(),
        }
    }
}

impl TryFrom<TreeJson> for SumTree {
    type Error = Error;
    fn try_from(j: TreeJson) -> Result<Self> {
        let mut nodes = j.nodes;
        nodes.sort_by_key(|s| s.id);
        for (i, s) in nodes.iter().enumerate() {
            if s.id != i + 2 {
                return Err(Error::InvalidTree(format!(
                    "node ids must be 2..={}, found {}",
                    j.n, s.id
                )));
            }
        }
        SumTree::from_nodes(j.n, nodes.into_iter().map(|s| (s.left, s.right)).collect())
    }
}

impl SumTree {
    /// Build from the children of nodes `2..=n` in execution order.
    pub fn from_nodes(n: usize, children: Vec<(Child, Child)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidTree("a tree needs at least one leaf".into()));
        }
        if children.len() != n - 1 {
            return Err(Error::InvalidTree(format!(
                "{n} leaves need {} internal nodes, got {}",
                n - 1,
                children.len()
            )));
        }
        let mut leaf_parent = vec![0usize; n + 1];
        let mut node_parent = vec![0usize; n + 1];
        let mut heights = vec![0usize; n + 1];
        for (offset, &(left, right)) in children.iter().enumerate() {
            let k = offset + 2;
            let mut h = 0;
            for child in [left, right] {
                match child {
                    Child::Leaf(i) => {
                        if i == 0 || i > n {
                            return Err(Error::InvalidTree(format!(
                                "node {k} refers to missing leaf {i}"
                            )));
                        }
                        if leaf_parent[i] != 0 {
                            return Err(Error::InvalidTree(format!("leaf {i} has two parents")));
                        }
                        leaf_parent[i] = k;
                    }
                    Child::Node(j) => {
                        if j < 2 || j >= k {
                            return Err(Error::InvalidTree(format!(
                                "node {k} refers to node {j}, which is not executed before it"
                            )));
                        }
                        if node_parent[j] != 0 {
                            return Err(Error::InvalidTree(format!("node {j} has two parents")));
                        }
                        node_parent[j] = k;
                        h = h.max(heights[j]);
                    }
                }
            }
            heights[k] = h + 1;
        }
        if n > 1 {
            if let Some(i) = (1..=n).find(|&i| leaf_parent[i] == 0) {
                return Err(Error::InvalidTree(format!("leaf {i} is never summed")));
            }
            if let Some(j) = (2..n).find(|&j| node_parent[j] == 0) {
                return Err(Error::InvalidTree(format!("node {j} is never used")));
            }
        }
        Ok(Self {
            n,
            children,
            node_parent,
            leaf_parent,
            heights,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn leaf_count(&self) -> usize {
        self.n
    }

    pub fn children(&self, k: usize) -> Result<(Child, Child)> {
        self.check_node(k)?;
        Ok(self.children[k - 2])
    }

    /// Internal nodes with their operands, in execution order.
    pub fn nodes(&self) -> Vec<NodeSpec> {
        self.children
            .iter()
            .enumerate()
            .map(|(i, &(left, right))| NodeSpec {
                id: i + 2,
                left,
                right,
            })
            .collect()
    }

    pub fn height(&self) -> usize {
        if self.n == 1 {
            0
        } else {
            self.heights[self.n]
        }
    }

    pub fn node_height(&self, k: usize) -> Result<usize> {
        self.check_node(k)?;
        Ok(self.heights[k])
    }

    /// Parent of internal node `k`, `None` for the root.
    pub fn parent(&self, k: usize) -> Result<Option<usize>> {
        self.check_node(k)?;
        Ok(Some(self.node_parent[k]).filter(|&p| p != 0))
    }

    /// Node into which leaf `i` is summed, `None` when `n = 1`.
    pub fn leaf_parent(&self, i: usize) -> Result<Option<usize>> {
        if i == 0 || i > self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                max: self.n,
            });
        }
        Ok(Some(self.leaf_parent[i]).filter(|&p| p != 0))
    }

    /// `j ≺ k`: node `j` lies strictly below node `k`.
    pub fn is_descendant(&self, j: usize, k: usize) -> Result<bool> {
        self.check_node(j)?;
        self.check_node(k)?;
        let mut cur = self.node_parent[j];
        while cur != 0 && cur <= k {
            if cur == k {
                return Ok(true);
            }
            cur = self.node_parent[cur];
        }
        Ok(false)
    }

    /// Nodes strictly above `k`, in increasing execution order.
    pub fn ancestors(&self, k: usize) -> Result<Vec<usize>> {
        self.check_node(k)?;
        let mut out = Vec::new();
        let mut cur = self.node_parent[k];
        while cur != 0 {
            out.push(cur);
            cur = self.node_parent[cur];
        }
        Ok(out)
    }

    /// Internal nodes strictly below `k`, in increasing order.
    pub fn descendants(&self, k: usize) -> Result<Vec<usize>> {
        self.check_node(k)?;
        let mut out = Vec::new();
        let mut stack = vec![k];
        while let Some(cur) = stack.pop() {
            let (a, b) = self.children[cur - 2];
            for c in [a, b] {
                if let Child::Node(j) = c {
                    out.push(j);
                    stack.push(j);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Exact partial sums indexed by node: entry `k` is `s_k` for
    /// `k = 2..=n`, entry 1 holds `x_1` and entry 0 is zero.
    pub fn exact_partial_sums(&self, x: &[WideReal]) -> Result<Vec<WideReal>> {
        if x.len() != self.n {
            return Err(Error::InvalidParameter(format!(
                "tree has {} leaves but {} inputs were given",
                self.n,
                x.len()
            )));
        }
        let prec = x[0].prec();
        let mut s = Vec::with_capacity(self.n + 1);
        s.push(WideReal::zero(prec));
        s.push(x[0].clone());
        for &(left, right) in &self.children {
            let value = {
                let get = |c: Child| match c {
                    Child::Leaf(i) => &x[i - 1],
                    Child::Node(j) => &s[j],
                };
                get(left).exact_add(get(right))
            };
            s.push(value);
        }
        Ok(s)
    }

    /// The exact value at the root.
    pub fn root_sum(&self, x: &[WideReal]) -> Result<WideReal> {
        let s = self.exact_partial_sums(x)?;
        Ok(if self.n == 1 {
            x[0].clone()
        } else {
            s[self.n].clone()
        })
    }

    /// Whether every node `k` sums node `k-1` (leaf 1 for `k = 2`) with leaf `k`.
    pub fn is_sequential(&self) -> bool {
        self.children.iter().enumerate().all(|(i, &c)| {
            let k = i + 2;
            let prev = if k == 2 { Child::Leaf(1) } else { Child::Node(k - 1) };
            c == (prev, Child::Leaf(k))
        })
    }

    fn check_node(&self, k: usize) -> Result<()> {
        if k < 2 || k > self.n {
            Err(Error::IndexOutOfRange {
                index: k,
                max: self.n,
            })
        } else {
            Ok(())
        }
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidTree("a tree needs at least one leaf".into()))
    } else {
        Ok(())
    }
}

/// Left-to-right recursive summation.
pub fn sequential_tree(n: usize) -> Result<SumTree> {
    check_n(n)?;
    let children = (2..=n)
        .map(|k| {
            let prev = if k == 2 { Child::Leaf(1) } else { Child::Node(k - 1) };
            (prev, Child::Leaf(k))
        })
        .collect();
    SumTree::from_nodes(n, children)
}

/// Level-by-level pairing; an odd element left over on a level moves up
/// unchanged.
pub fn pairwise_tree(n: usize) -> Result<SumTree> {
    check_n(n)?;
    let mut level: Vec<Child> = (1..=n).map(Child::Leaf).collect();
    let mut children = Vec::with_capacity(n - 1);
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            match pair {
                [a, b] => {
                    children.push((*a, *b));
                    next.push(Child::Node(children.len() + 1));
                }
                [a] => next.push(*a),
                _ => unreachable!(),
            }
        }
        level = next;
    }
    SumTree::from_nodes(n, children)
}

/// Repeatedly remove two random operands from the pool and add their sum
/// back, reproducibly from `seed`.
pub fn random_tree(n: usize, seed: u64) -> Result<SumTree> {
    check_n(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<Child> = (1..=n).map(Child::Leaf).collect();
    let mut children = Vec::with_capacity(n - 1);
    while pool.len() > 1 {
        let a = pool.swap_remove(rng.random_range(0..pool.len()));
        let b = pool.swap_remove(rng.random_range(0..pool.len()));
        children.push((a, b));
        pool.push(Child::Node(children.len() + 1));
    }
    SumTree::from_nodes(n, children)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Sequential,
    Pairwise,
    Random,
}

impl TreeKind {
    pub fn build(self, n: usize, seed: u64) -> Result<SumTree> {
        match self {
            TreeKind::Sequential => sequential_tree(n),
            TreeKind::Pairwise => pairwise_tree(n),
            TreeKind::Random => random_tree(n, seed),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TreeKind::Sequential => "sequential",
            TreeKind::Pairwise => "pairwise",
            TreeKind::Random => "random",
        }
    }
}

impl std::str::FromStr for TreeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(TreeKind::Sequential),
            "pairwise" => Ok(TreeKind::Pairwise),
            "random" => Ok(TreeKind::Random),
            other => Err(Error::InvalidParameter(format!("unknown tree `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: f64) -> WideReal {
        WideReal::from_f64(64, v)
    }

    #[test]
    fn sequential_shapes() {
        assert_eq!(sequential_tree(4).unwrap().height(), 3);
        assert_eq!(sequential_tree(1).unwrap().height(), 0);
        let t = sequential_tree(2).unwrap();
        assert_eq!(t.height(), 1);
        assert_eq!(t.children(2).unwrap(), (Child::Leaf(1), Child::Leaf(2)));
        assert!(sequential_tree(0).is_err());
        assert!(t.is_sequential());
    }

    #[test]
    fn pairwise_shapes() {
        let t = pairwise_tree(4).unwrap();
        assert_eq!(t.height(), 2);
        assert_eq!(t.children(2).unwrap(), (Child::Leaf(1), Child::Leaf(2)));
        assert_eq!(t.children(3).unwrap(), (Child::Leaf(3), Child::Leaf(4)));
        assert_eq!(t.children(4).unwrap(), (Child::Node(2), Child::Node(3)));
        assert_eq!(pairwise_tree(5).unwrap().height(), 3);
        assert_eq!(pairwise_tree(1).unwrap().height(), 0);
        assert!(!t.is_sequential());
    }

    #[test]
    fn heights_match_closed_forms() {
        for n in 1..=4096usize {
            let ceil_log2 = (usize::BITS - (n - 1).leading_zeros()) as usize;
            assert_eq!(pairwise_tree(n).unwrap().height(), ceil_log2, "n={n}");
        }
        for n in (1..=4096usize).step_by(37) {
            assert_eq!(sequential_tree(n).unwrap().height(), n - 1);
        }
    }

    #[test]
    fn partial_order() {
        let seq = sequential_tree(4).unwrap();
        assert!(seq.is_descendant(2, 4).unwrap());
        assert!(!seq.is_descendant(4, 2).unwrap());
        assert!(!seq.is_descendant(3, 3).unwrap());
        let pw = pairwise_tree(4).unwrap();
        assert!(!pw.is_descendant(2, 3).unwrap());
        assert!(pw.is_descendant(3, 4).unwrap());
        assert!(pw.ancestors(4).unwrap().is_empty());
        assert_eq!(seq.ancestors(2).unwrap(), vec![3, 4]);
        assert_eq!(seq.descendants(4).unwrap(), vec![2, 3]);
        assert!(seq.is_descendant(1, 4).is_err());
        assert!(seq.ancestors(5).is_err());
    }

    #[test]
    fn random_trees_are_reproducible() {
        assert_eq!(random_tree(3, 7).unwrap(), random_tree(3, 7).unwrap());
        assert_eq!(random_tree(2, 1).unwrap().height(), 1);
        for seed in 0..20 {
            let h = random_tree(64, seed).unwrap().height();
            assert!((6..=63).contains(&h));
        }
    }

    #[test]
    fn exact_partial_sums_small() {
        let t = sequential_tree(3).unwrap();
        let s = t.exact_partial_sums(&[w(1.0), w(2.0), w(3.0)]).unwrap();
        assert_eq!(s[2].to_f64(), 3.0);
        assert_eq!(s[3].to_f64(), 6.0);
        let one = sequential_tree(1).unwrap();
        assert_eq!(one.root_sum(&[w(2.5)]).unwrap().to_f64(), 2.5);
        assert!(t.exact_partial_sums(&[w(1.0)]).is_err());
    }

    #[test]
    fn rejects_malformed_trees() {
        use Child::*;
        assert!(SumTree::from_nodes(2, vec![(Leaf(1), Leaf(1))]).is_err());
        assert!(SumTree::from_nodes(3, vec![(Leaf(1), Leaf(2)), (Node(3), Leaf(3))]).is_err());
        assert!(SumTree::from_nodes(3, vec![(Leaf(1), Leaf(2)), (Leaf(2), Leaf(3))]).is_err());
        assert!(SumTree::from_nodes(3, vec![(Leaf(1), Leaf(2))]).is_err());
        assert!(SumTree::from_nodes(2, vec![(Leaf(1), Leaf(3))]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = random_tree(9, 3).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        assert!(text.contains("\"nodes\""));
        let back: SumTree = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"n":2,"nodes":[{"id":2,"left":{"leaf":1},"right":{"leaf":1}}]}"#;
        assert!(serde_json::from_str::<SumTree>(bad).is_err());
    }
}
