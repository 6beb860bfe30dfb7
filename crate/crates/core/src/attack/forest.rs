//! Random-projection forest for approximate nearest-neighbor search.
//!
//! Each internal node splits by the perpendicular bisector of two random
//! items: `normal = (p − q)/‖p − q‖`, `offset = normal·(p + q)/2`. Items with
//! `normal·x − offset > 0` go right, the rest go left. Normals and offsets
//! are rounded to `f32` before items are routed, so a reloaded index routes
//! exactly as the one that was built.
//!
//! `RPF1` layout (little-endian): magic `RPF1`, `u32` dimension, `u32` tree
//! count, `u32` leaf capacity, `u64` seed, then each tree as a preorder node
//! stream. A node starts with a tag byte: `0` internal (`dim × f32` normal,
//! `f32` offset, `u64` left and right child offsets), `1` leaf (`u32` count,
//! then `u64` ids). Child offsets are absolute byte positions in the file.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AttackError, ResponseDatabase};
use crate::par::{derive_seed, map_indexed, Execution};

const INDEX_MAGIC: &[u8; 4] = b"RPF1";
const HEADER_LEN: u64 = 4 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Internal {
        normal: Vec<f32>,
        offset: f32,
        left: usize,
        right: usize,
    },
    Leaf(Vec<u64>),
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpForestIndex {
    dim: usize,
    leaf_capacity: usize,
    seed: u64,
    items: usize,
    trees: Vec<Tree>,
}

/// One query result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

fn margin(normal: &[f32], offset: f32, x: impl Iterator<Item = f64>) -> f64 {
    normal.iter().zip(x).map(|(&n, xi)| f64::from(n) * xi).sum::<f64>() - f64::from(offset)
}

fn row_margin(normal: &[f32], offset: f32, row: &[f32]) -> f64 {
    margin(normal, offset, row.iter().map(|&x| f64::from(x)))
}

fn bisector(p: &[f32], q: &[f32]) -> Option<(Vec<f32>, f32)> {
    let diff: Vec<f64> = p.iter().zip(q).map(|(&a, &b)| f64::from(a) - f64::from(b)).collect();
    let len = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    if len == 0.0 {
        return None;
    }
    let normal: Vec<f64> = diff.iter().map(|d| d / len).collect();
    let offset: f64 = normal
        .iter()
        .zip(p.iter().zip(q))
        .map(|(n, (&a, &b))| n * (f64::from(a) + f64::from(b)) / 2.0)
        .sum();
    Some((normal.iter().map(|&x| x as f32).collect(), offset as f32))
}

struct Builder<'a> {
    db: &'a ResponseDatabase,
    leaf_capacity: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    /// Two items with different embeddings, or `None` if all are equal.
    fn pick_pair(&mut self, ids: &[u64]) -> Option<(usize, usize)> {
        let emb = |i: u64| self.db.embedding(i as usize);
        let first = self.rng.random_range(0..ids.len());
        for _ in 0..8 {
            let mut second = self.rng.random_range(0..ids.len() - 1);
            if second >= first {
                second += 1;
            }
            if emb(ids[first]) != emb(ids[second]) {
                return Some((ids[first] as usize, ids[second] as usize));
            }
        }
        ids.iter()
            .find(|&&j| emb(j) != emb(ids[first]))
            .map(|&j| (ids[first] as usize, j as usize))
    }

    fn build(&mut self, ids: Vec<u64>) -> usize {
        let at = self.nodes.len();
        if ids.len() <= self.leaf_capacity {
            self.nodes.push(Node::Leaf(ids));
            return at;
        }
        let Some((p, q)) = self.pick_pair(&ids) else {
            self.nodes.push(Node::Leaf(ids));
            return at;
        };
        let Some((normal, offset)) = bisector(self.db.embedding(p), self.db.embedding(q)) else {
            self.nodes.push(Node::Leaf(ids));
            return at;
        };
        let (right, left): (Vec<u64>, Vec<u64>) = ids
            .iter()
            .partition(|&&i| row_margin(&normal, offset, self.db.embedding(i as usize)) > 0.0);
        if left.is_empty() || right.is_empty() {
            // f32 rounding can put both points on one side
            self.nodes.push(Node::Leaf(ids));
            return at;
        }
        self.nodes.push(Node::Leaf(Vec::new()));
        let l = self.build(left);
        let r = self.build(right);
        self.nodes[at] = Node::Internal {
            normal,
            offset,
            left: l,
            right: r,
        };
        at
    }
}

pub fn build_index(
    db: &ResponseDatabase,
    num_trees: usize,
    leaf_capacity: usize,
    seed: u64,
) -> Result<RpForestIndex, AttackError> {
    build_index_with(db, num_trees, leaf_capacity, seed, Execution::default())
}

/// Tree `t` draws from its own generator seeded by `(seed, t)`, so trees can
/// be built concurrently with identical results.
pub fn build_index_with(
    db: &ResponseDatabase,
    num_trees: usize,
    leaf_capacity: usize,
    seed: u64,
    exec: Execution,
) -> Result<RpForestIndex, AttackError> {
    if num_trees == 0 || leaf_capacity == 0 {
        return Err(AttackError::Config(
            "tree count and leaf capacity must be positive".into(),
        ));
    }
    if db.is_empty() {
        return Err(AttackError::EmptyDatabase);
    }
    let trees = map_indexed(exec, num_trees, |t| {
        let mut b = Builder {
            db,
            leaf_capacity,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64, 0)),
            nodes: Vec::new(),
        };
        b.build((0..db.len() as u64).collect());
        Tree { nodes: b.nodes }
    });
    Ok(RpForestIndex {
        dim: db.dim(),
        leaf_capacity,
        seed,
        items: db.len(),
        trees,
    })
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    key: f64,
    tree: usize,
    node: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.tree.cmp(&other.tree))
            .then(self.node.cmp(&other.node))
    }
}

/// Best-first search over all trees, then exact re-ranking of the candidate
/// union by euclidean distance (ties by id).
///
/// Every node taken off the queue counts as one visit. The search stops
/// once `search_budget` visits are spent and at least `k` candidates are
/// known, or when every node has been visited.
pub fn query_index(
    index: &RpForestIndex,
    db: &ResponseDatabase,
    q: &[f64],
    k: usize,
    search_budget: usize,
) -> Result<Vec<Neighbor>, AttackError> {
    if q.len() != index.dim {
        return Err(AttackError::Dimension {
            context: "query".into(),
            expected: index.dim,
            found: q.len(),
        });
    }
    index.check_database(db)?;
    if k == 0 {
        return Err(AttackError::Config("k must be positive".into()));
    }
    let mut heap: BinaryHeap<Reverse<Pending>> = (0..index.trees.len())
        .map(|tree| {
            Reverse(Pending {
                key: 0.0,
                tree,
                node: 0,
            })
        })
        .collect();
    let mut seen = vec![false; db.len()];
    let mut candidates: Vec<usize> = Vec::new();
    let mut visits = 0usize;
    while let Some(Reverse(p)) = heap.pop() {
        if visits >= search_budget && candidates.len() >= k {
            break;
        }
        visits += 1;
        match &index.trees[p.tree].nodes[p.node] {
            Node::Leaf(ids) => {
                for &id in ids {
                    if !std::mem::replace(&mut seen[id as usize], true) {
                        candidates.push(id as usize);
                    }
                }
            }
            Node::Internal {
                normal,
                offset,
                left,
                right,
            } => {
                let m = margin(normal, *offset, q.iter().copied());
                let (near, far) = if m > 0.0 { (*right, *left) } else { (*left, *right) };
                heap.push(Reverse(Pending {
                    key: p.key,
                    tree: p.tree,
                    node: near,
                }));
                heap.push(Reverse(Pending {
                    key: p.key.max(m.abs()),
                    tree: p.tree,
                    node: far,
                }));
            }
        }
    }
    Ok(rank_exact(db, q, candidates.into_iter(), k))
}

/// Exact `k` nearest neighbors among `ids`, by distance then id.
pub fn rank_exact(db: &ResponseDatabase, q: &[f64], ids: impl Iterator<Item = usize>, k: usize) -> Vec<Neighbor> {
    let mut scored: Vec<(f64, usize)> = ids
        .map(|id| {
            let d2: f64 = db
                .embedding(id)
                .iter()
                .zip(q)
                .map(|(&x, &y)| (f64::from(x) - y).powi(2))
                .sum();
            (d2, id)
        })
        .collect();
    scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(d2, id)| Neighbor {
            id,
            distance: d2.sqrt(),
        })
        .collect()
}

/// Exhaustive nearest neighbors; the reference for recall measurements.
pub fn exact_neighbors(db: &ResponseDatabase, q: &[f64], k: usize) -> Vec<Neighbor> {
    rank_exact(db, q, 0..db.len(), k)
}

impl RpForestIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    /// Items indexed by every tree.
    pub fn item_count(&self) -> usize {
        self.items
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    /// Leaf contents of tree `t`, in preorder.
    pub fn leaves(&self, t: usize) -> Vec<&[u64]> {
        self.trees[t]
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(ids) => Some(ids.as_slice()),
                Node::Internal { .. } => None,
            })
            .collect()
    }

    /// Unit-norm deviation of the worst stored normal.
    pub fn max_normal_error(&self) -> f64 {
        self.trees
            .iter()
            .flat_map(|t| &t.nodes)
            .filter_map(|n| match n {
                Node::Internal { normal, .. } => {
                    Some((normal.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt() - 1.0).abs())
                }
                Node::Leaf(_) => None,
            })
            .fold(0.0, f64::max)
    }

    fn check_database(&self, db: &ResponseDatabase) -> Result<(), AttackError> {
        if db.len() != self.items || db.dim() != self.dim {
            return Err(AttackError::Format(format!(
                "index covers {} items of dimension {}, database has {} of dimension {}",
                self.items,
                self.dim,
                db.len(),
                db.dim()
            )));
        }
        Ok(())
    }

    fn node_size(&self, node: &Node) -> u64 {
        match node {
            Node::Internal { .. } => 1 + 4 * self.dim as u64 + 4 + 16,
            Node::Leaf(ids) => 1 + 4 + 8 * ids.len() as u64,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.leaf_capacity as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        let mut pos = HEADER_LEN;
        for tree in &self.trees {
            let mut offsets = Vec::with_capacity(tree.nodes.len());
            for node in &tree.nodes {
                offsets.push(pos);
                pos += self.node_size(node);
            }
            for node in &tree.nodes {
                match node {
                    Node::Internal {
                        normal,
                        offset,
                        left,
                        right,
                    } => {
                        out.push(0);
                        for x in normal {
                            out.extend_from_slice(&x.to_le_bytes());
                        }
                        out.extend_from_slice(&offset.to_le_bytes());
                        out.extend_from_slice(&offsets[*left].to_le_bytes());
                        out.extend_from_slice(&offsets[*right].to_le_bytes());
                    }
                    Node::Leaf(ids) => {
                        out.push(1);
                        out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
                        for id in ids {
                            out.extend_from_slice(&id.to_le_bytes());
                        }
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AttackError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != INDEX_MAGIC {
            return Err(AttackError::Format("index file: missing RPF1 header".into()));
        }
        let dim = r.u32()? as usize;
        let tree_count = r.u32()? as usize;
        let leaf_capacity = r.u32()? as usize;
        let seed = r.u64()?;
        if dim == 0 || tree_count == 0 || leaf_capacity == 0 {
            return Err(AttackError::Format(
                "index file: zero dimension, tree count or leaf capacity".into(),
            ));
        }
        let mut trees = Vec::with_capacity(tree_count);
        let mut items = None;
        for t in 0..tree_count {
            let mut nodes = Vec::new();
            r.node(dim, &mut nodes)?;
            let mut ids: Vec<u64> = nodes
                .iter()
                .flat_map(|n| match n {
                    Node::Leaf(ids) => ids.clone(),
                    Node::Internal { .. } => Vec::new(),
                })
                .collect();
            ids.sort_unstable();
            if ids.iter().enumerate().any(|(i, &id)| id != i as u64) {
                return Err(AttackError::Format(format!(
                    "index file: tree {t} does not hold each item exactly once"
                )));
            }
            if *items.get_or_insert(ids.len()) != ids.len() {
                return Err(AttackError::Format(format!(
                    "index file: tree {t} covers a different item count"
                )));
            }
            trees.push(Tree { nodes });
        }
        if r.pos != bytes.len() {
            return Err(AttackError::Format("index file: trailing bytes".into()));
        }
        Ok(RpForestIndex {
            dim,
            leaf_capacity,
            seed,
            items: items.unwrap_or(0),
            trees,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), AttackError> {
        fs::write(path, self.to_bytes()).map_err(|e| AttackError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, AttackError> {
        let bytes = fs::read(path).map_err(|e| AttackError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AttackError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| AttackError::Format("index file: truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, AttackError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, AttackError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32, AttackError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    /// Parses the subtree starting at the current position into `nodes`
    /// (preorder) and returns its node index.
    fn node(&mut self, dim: usize, nodes: &mut Vec<Node>) -> Result<usize, AttackError> {
        let at = nodes.len();
        match self.take(1)?[0] {
            0 => {
                let normal = (0..dim).map(|_| self.f32()).collect::<Result<Vec<_>, _>>()?;
                let offset = self.f32()?;
                let (left_pos, right_pos) = (self.u64()?, self.u64()?);
                nodes.push(Node::Leaf(Vec::new()));
                if left_pos != self.pos as u64 {
                    return Err(AttackError::Format(format!(
                        "index file: bad left child offset {left_pos}"
                    )));
                }
                let left = self.node(dim, nodes)?;
                if right_pos != self.pos as u64 {
                    return Err(AttackError::Format(format!(
                        "index file: bad right child offset {right_pos}"
                    )));
                }
                let right = self.node(dim, nodes)?;
                nodes[at] = Node::Internal {
                    normal,
                    offset,
                    left,
                    right,
                };
            }
            1 => {
                let count = self.u32()? as usize;
                let ids = (0..count).map(|_| self.u64()).collect::<Result<Vec<_>, _>>()?;
                nodes.push(Node::Leaf(ids));
            }
            tag => return Err(AttackError::Format(format!("index file: unknown node tag {tag}"))),
        }
        Ok(at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn random_db(n: usize, dim: usize, seed: u64) -> ResponseDatabase {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        ResponseDatabase::from_f32((0..n).map(|i| tokenize(&format!("r{i}"))).collect(), dim, data).unwrap()
    }

    #[test]
    fn single_item_is_a_leaf() {
        let db = random_db(1, 3, 0);
        let idx = build_index(&db, 4, 16, 1).unwrap();
        for t in 0..4 {
            assert_eq!(idx.leaves(t), vec![&[0u64][..]]);
        }
        let res = query_index(&idx, &db, &db.embedding_f64(0), 5, 10).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].distance, 0.0);
    }

    #[test]
    fn identical_embeddings_make_one_leaf() {
        let db = ResponseDatabase::from_f32(vec![tokenize("a"); 50], 2, vec![0.5; 100]).unwrap();
        let idx = build_index(&db, 2, 4, 0).unwrap();
        assert_eq!(idx.leaves(0).len(), 1);
        assert_eq!(idx.leaves(0)[0].len(), 50);
    }

    #[test]
    fn every_item_once_per_tree() {
        let db = random_db(1000, 8, 3);
        let idx = build_index(&db, 5, 16, 9).unwrap();
        for t in 0..5 {
            let leaves = idx.leaves(t);
            assert!(leaves.iter().all(|l| l.len() <= 16));
            let mut ids: Vec<u64> = leaves.concat();
            ids.sort_unstable();
            assert_eq!(ids, (0..1000u64).collect::<Vec<_>>());
        }
        assert!(idx.max_normal_error() < 1e-6);
    }

    #[test]
    fn bytes_round_trip_and_determinism() {
        let db = random_db(300, 5, 4);
        let a = build_index(&db, 3, 8, 42).unwrap();
        let b = build_index_with(&db, 3, 8, 42, Execution::Sequential).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let back = RpForestIndex::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(back, a);
        let c = build_index(&db, 3, 8, 43).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let db = random_db(100, 4, 5);
        let bytes = build_index(&db, 2, 8, 1).unwrap().to_bytes();
        assert!(RpForestIndex::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(RpForestIndex::from_bytes(&extra).is_err());
        let mut bad_tag = bytes.clone();
        bad_tag[HEADER_LEN as usize] = 7;
        assert!(RpForestIndex::from_bytes(&bad_tag).is_err());
        assert!(RpForestIndex::from_bytes(b"RPF0").is_err());
    }

    #[test]
    fn unlimited_budget_is_exact() {
        let db = random_db(500, 6, 6);
        let idx = build_index(&db, 4, 10, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = query_index(&idx, &db, &q, 10, usize::MAX).unwrap();
            assert_eq!(got, exact_neighbors(&db, &q, 10));
        }
    }

    #[test]
    fn query_errors() {
        let db = random_db(10, 3, 1);
        let idx = build_index(&db, 1, 4, 0).unwrap();
        assert!(query_index(&idx, &db, &[0.0; 2], 1, 10).is_err());
        assert!(query_index(&idx, &db, &[0.0; 3], 0, 10).is_err());
        assert!(query_index(&idx, &random_db(11, 3, 1), &[0.0; 3], 1, 10).is_err());
        assert_eq!(query_index(&idx, &db, &[0.0; 3], 50, 1).unwrap().len(), 10);
        assert!(build_index(&db, 0, 4, 0).is_err());
    }
}
