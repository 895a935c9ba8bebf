//! Rooted binary trees with fixed branch lengths.
//!
//! Nodes are numbered backwards in time: leaves take ids `1..=n` in the
//! order they appear in the Newick text, internal nodes take `n+1..=2n-1`
//! in post-order (children as written), so the root is always `2n-1` and
//! every parent id is larger than its children's ids. Removing the top
//! `g-1` nodes of the tree is then a suffix truncation of the id range.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use crate::error::{domain, Error, Result};

/// A strictly binary rooted tree with branch lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    n_leaves: usize,
    // All vectors are indexed by `id - 1`.
    parent: Vec<Option<usize>>,
    children: Vec<Option<[usize; 2]>>,
    branch_length: Vec<f64>,
    root_length: Option<f64>,
    leaf_names: Vec<String>,
}

impl Tree {
    /// Builds a tree from its parent map, checking the numbering invariants.
    ///
    /// `parent[i]` is the parent id of node `i + 1` and must be `None` only
    /// for the root; `branch_length[i]` is the length of the branch above
    /// node `i + 1` (ignored for the root).
    pub fn from_parent_map(
        leaf_names: Vec<String>,
        parent: Vec<Option<usize>>,
        branch_length: Vec<f64>,
    ) -> Result<Self> {
        let n = leaf_names.len();
        if n < 2 {
            return Err(Error::UnsupportedTree(format!(
                "need at least 2 leaves, got {n}"
            )));
        }
        let n_nodes = 2 * n - 1;
        if parent.len() != n_nodes || branch_length.len() != n_nodes {
            return Err(Error::UnsupportedTree(format!(
                "{n} leaves require {n_nodes} nodes, got {} parents and {} lengths",
                parent.len(),
                branch_length.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &leaf_names {
            if name.is_empty() {
                return Err(Error::UnsupportedTree("empty leaf name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::UnsupportedTree(format!(
                    "duplicate leaf name {name:?}"
                )));
            }
        }

        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for (idx, p) in parent.iter().enumerate() {
            let id = idx + 1;
            match *p {
                None if id == n_nodes => {}
                None => {
                    return Err(Error::UnsupportedTree(format!(
                        "node {id} has no parent but the root must be {n_nodes}"
                    )))
                }
                Some(_) if id == n_nodes => {
                    return Err(Error::UnsupportedTree("root has a parent".into()))
                }
                Some(pid) => {
                    if pid <= n || pid > n_nodes {
                        return Err(Error::UnsupportedTree(format!(
                            "parent {pid} of node {id} is not an internal node"
                        )));
                    }
                    if pid <= id {
                        return Err(Error::UnsupportedTree(format!(
                            "parent {pid} of node {id} does not have a larger id"
                        )));
                    }
                    children[pid - 1].push(id);
                }
            }
            let len = branch_length[idx];
            if id != n_nodes && !(len.is_finite() && len >= 0.0) {
                return Err(Error::UnsupportedTree(format!(
                    "branch above node {id} has invalid length {len}"
                )));
            }
        }

        let mut child_pairs = Vec::with_capacity(n_nodes);
        for (idx, kids) in children.into_iter().enumerate() {
            let id = idx + 1;
            match (id <= n, kids.as_slice()) {
                (true, []) => child_pairs.push(None),
                (false, &[a, b]) => child_pairs.push(Some([a, b])),
                (true, _) => {
                    return Err(Error::UnsupportedTree(format!("leaf {id} has children")))
                }
                (false, k) => {
                    return Err(Error::UnsupportedTree(format!(
                        "internal node {id} has {} children",
                        k.len()
                    )))
                }
            }
        }

        let mut branch_length = branch_length;
        branch_length[n_nodes - 1] = 0.0;
        Ok(Self {
            n_leaves: n,
            parent,
            children: child_pairs,
            branch_length,
            root_length: None,
            leaf_names,
        })
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.n_leaves - 1
    }

    pub fn root(&self) -> usize {
        self.n_nodes()
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        (1..=self.n_leaves).contains(&id)
    }

    /// The parent map: `None` for the root.
    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parent[id - 1]
    }

    /// Children of an internal node in the order written in the Newick text.
    pub fn children(&self, id: usize) -> Option<[usize; 2]> {
        self.children[id - 1]
    }

    /// Length of the branch above `id`; zero for the root.
    pub fn branch_length(&self, id: usize) -> f64 {
        self.branch_length[id - 1]
    }

    /// Length written after the root clade, if any. Not used by any model.
    pub fn root_length(&self) -> Option<f64> {
        self.root_length
    }

    pub fn leaf_names(&self) -> &[String] {
        &self.leaf_names
    }

    /// Parses a single rooted binary Newick expression with branch lengths.
    pub fn parse_newick(text: &str) -> Result<Self> {
        let mut parser = NewickParser::new(text);
        parser.clade()?;
        parser.skip_ws();
        let mut root_length = None;
        if parser.peek() == Some(b':') {
            parser.bump();
            root_length = Some(parser.length()?);
        }
        parser.skip_ws();
        if parser.peek() == Some(b';') {
            parser.bump();
        }
        parser.skip_ws();
        if let Some(c) = parser.peek() {
            return Err(parser.error(format!("unexpected trailing character {:?}", c as char)));
        }
        let mut tree = parser.finish()?;
        tree.root_length = root_length;
        Ok(tree)
    }

    /// Serializes back to Newick with shortest round-trip branch lengths.
    pub fn to_newick(&self) -> String {
        let mut out = String::new();
        self.write_clade(self.root(), &mut out);
        if let Some(len) = self.root_length {
            let _ = write!(out, ":{len:?}");
        }
        out.push(';');
        out
    }

    fn write_clade(&self, id: usize, out: &mut String) {
        match self.children(id) {
            None => out.push_str(&self.leaf_names[id - 1]),
            Some([a, b]) => {
                out.push('(');
                self.write_clade(a, out);
                out.push(',');
                self.write_clade(b, out);
                out.push(')');
            }
        }
        if id != self.root() {
            let _ = write!(out, ":{:?}", self.branch_length(id));
        }
    }

    /// Number of nodes kept when the top `g - 1` nodes are removed.
    pub fn kept_nodes(&self, g: usize) -> Result<usize> {
        self.check_cutoff(g)?;
        Ok(self.n_nodes() + 1 - g)
    }

    fn check_cutoff(&self, g: usize) -> Result<()> {
        if g == 0 || g > self.n_leaves {
            return Err(domain(format!(
                "cut-off g = {g} outside 1..={}",
                self.n_leaves
            )));
        }
        Ok(())
    }

    /// Removed nodes `2n-g+1..=2n-1` that are the parent of at least one
    /// kept node `1..=2n-g`, in increasing id order. Empty for `g = 1`.
    pub fn boundary_nodes(&self, g: usize) -> Result<Vec<usize>> {
        let kept = self.kept_nodes(g)?;
        let set: BTreeSet<usize> = (1..=kept)
            .filter_map(|id| self.parent(id))
            .filter(|&p| p > kept)
            .collect();
        Ok(set.into_iter().collect())
    }
}

struct NewickParser<'a> {
    text: &'a [u8],
    pos: usize,
    leaves: Vec<String>,
    // Temporary arena in parse order; leaves and internals are renumbered
    // by `finish`.
    nodes: Vec<RawNode>,
    internal_order: Vec<usize>,
}

struct RawNode {
    leaf: Option<usize>,
    children: Option<[usize; 2]>,
    length: Option<f64>,
}

impl<'a> NewickParser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            text: text.as_bytes(),
            pos: 0,
            leaves: Vec::new(),
            nodes: Vec::new(),
            internal_order: Vec::new(),
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Newick {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn bump(&mut self) {
        self.pos += 1;
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_whitespace()) {
            self.bump();
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {:?}", c as char)))
        }
    }

    fn label(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.peek() {
            if matches!(c, b'(' | b')' | b',' | b':' | b';' | b'[' | b']') || c.is_ascii_whitespace()
            {
                break;
            }
            self.bump();
        }
        String::from_utf8_lossy(&self.text[start..self.pos]).into_owned()
    }

    fn length(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, b'.' | b'-' | b'+' | b'e' | b'E'))
        {
            self.bump();
        }
        let raw = std::str::from_utf8(&self.text[start..self.pos]).unwrap_or("");
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
            Ok(v) => Err(Error::Newick {
                offset: start,
                message: format!("branch length {v} must be finite and nonnegative"),
            }),
            Err(_) => Err(Error::Newick {
                offset: start,
                message: "missing or malformed branch length".into(),
            }),
        }
    }

    /// Parses a clade without the length of the branch above it.
    fn clade(&mut self) -> Result<usize> {
        self.skip_ws();
        let node = if self.peek() == Some(b'(') {
            let open = self.pos;
            self.bump();
            let first = self.child()?;
            self.expect(b',')?;
            let second = self.child()?;
            self.skip_ws();
            match self.peek() {
                Some(b')') => self.bump(),
                Some(b',') => {
                    return Err(Error::Newick {
                        offset: self.pos,
                        message: format!(
                            "non-binary node opened at offset {open}: more than two children"
                        ),
                    })
                }
                _ => return Err(self.error("expected ')' (unbalanced parentheses)")),
            }
            // Internal labels (e.g. support values) are accepted and dropped.
            let _ = self.label();
            let idx = self.nodes.len();
            self.nodes.push(RawNode {
                leaf: None,
                children: Some([first, second]),
                length: None,
            });
            self.internal_order.push(idx);
            idx
        } else {
            let name = self.label();
            if name.is_empty() {
                return Err(self.error("expected a leaf label or '('"));
            }
            let idx = self.nodes.len();
            self.nodes.push(RawNode {
                leaf: Some(self.leaves.len()),
                children: None,
                length: None,
            });
            self.leaves.push(name);
            idx
        };
        Ok(node)
    }

    fn child(&mut self) -> Result<usize> {
        let idx = self.clade()?;
        self.skip_ws();
        if self.peek() != Some(b':') {
            return Err(self.error("missing branch length"));
        }
        self.bump();
        self.nodes[idx].length = Some(self.length()?);
        Ok(idx)
    }

    fn finish(self) -> Result<Tree> {
        let n = self.leaves.len();
        if n < 2 {
            return Err(Error::UnsupportedTree(format!(
                "need at least 2 leaves, got {n}"
            )));
        }
        let mut id_of = vec![0usize; self.nodes.len()];
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some(leaf) = node.leaf {
                id_of[idx] = leaf + 1;
            }
        }
        for (rank, &idx) in self.internal_order.iter().enumerate() {
            id_of[idx] = n + 1 + rank;
        }
        let n_nodes = 2 * n - 1;
        let mut parent = vec![None; n_nodes];
        let mut lengths = vec![0.0; n_nodes];
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some([a, b]) = node.children {
                for c in [a, b] {
                    parent[id_of[c] - 1] = Some(id_of[idx]);
                }
            }
            lengths[id_of[idx] - 1] = node.length.unwrap_or(0.0);
        }
        Tree::from_parent_map(self.leaves, parent, lengths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BASE_TREE: &str = "(((Taxon0:1.0,Taxon1:1.0):1.0,(Taxon2:1.0,Taxon3:1.0):1.0):1.0,((Taxon4:1.0,Taxon5:1.0):1.0,(Taxon6:1.0,Taxon7:1.0):1.0):1.0):1.0";

    #[test]
    fn parses_base_tree() {
        let t = Tree::parse_newick(BASE_TREE).unwrap();
        assert_eq!(t.n_leaves(), 8);
        assert_eq!(t.root(), 15);
        for id in 1..15 {
            assert_eq!(t.branch_length(id), 1.0);
        }
        assert_eq!(t.leaf_names()[0], "Taxon0");
        assert_eq!(t.leaf_names()[7], "Taxon7");
        // post-order: (0,1)=9 (2,3)=10 -> 11, (4,5)=12 (6,7)=13 -> 14, root 15
        assert_eq!(t.parent(1), Some(9));
        assert_eq!(t.parent(3), Some(10));
        assert_eq!(t.parent(9), Some(11));
        assert_eq!(t.parent(12), Some(14));
        assert_eq!(t.parent(11), Some(15));
        assert_eq!(t.parent(15), None);
        assert_eq!(t.root_length(), Some(1.0));
    }

    #[test]
    fn smallest_tree() {
        let t = Tree::parse_newick("(A:1.0,B:2.0);").unwrap();
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.root(), 3);
        assert_eq!(t.parent(1), Some(3));
        assert_eq!(t.parent(2), Some(3));
        assert_eq!(t.branch_length(1), 1.0);
        assert_eq!(t.branch_length(2), 2.0);
    }

    #[test]
    fn rejects_non_binary() {
        let err = Tree::parse_newick("(A:1.0,B:1.0,C:1.0);").unwrap_err();
        match err {
            Error::Newick { message, offset } => {
                assert!(message.contains("non-binary"), "{message}");
                assert_eq!(offset, 12);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn syntax_errors_report_offsets() {
        for (text, offset) in [
            ("((A:1,B:1):1,C:1", 16),
            ("(A:1,B);", 6),
            ("(A:1,B:x);", 7),
            ("(A:1,B:1));", 9),
        ] {
            match Tree::parse_newick(text) {
                Err(Error::Newick { offset: o, .. }) => assert_eq!(o, offset, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_single_leaf() {
        assert!(matches!(
            Tree::parse_newick("A;"),
            Err(Error::UnsupportedTree(_))
        ));
    }

    #[test]
    fn zero_lengths_and_internal_labels() {
        let t = Tree::parse_newick("((A:0,B:0)0.95:0.5,C:2);").unwrap();
        assert_eq!(t.branch_length(1), 0.0);
        assert_eq!(t.branch_length(4), 0.5);
    }

    #[test]
    fn boundary_trivial_cases() {
        let t = Tree::parse_newick(BASE_TREE).unwrap();
        assert!(t.boundary_nodes(1).unwrap().is_empty());
        assert_eq!(t.boundary_nodes(2).unwrap(), vec![15]);
        assert!(t.boundary_nodes(0).is_err());
        assert!(t.boundary_nodes(9).is_err());
    }

    #[test]
    fn boundary_base_tree_g4() {
        let t = Tree::parse_newick(BASE_TREE).unwrap();
        // Brute force: parents of kept nodes 1..=12 that fall in {13,14,15}.
        let mut expected = BTreeSet::new();
        for id in 1..=12 {
            let p = t.parent(id).unwrap();
            if p >= 13 {
                expected.insert(p);
            }
        }
        let got = t.boundary_nodes(4).unwrap();
        assert_eq!(got, expected.into_iter().collect::<Vec<_>>());
        assert_eq!(got, vec![13, 14, 15]);
        // g = n removes every internal node: cherry parents plus nothing else.
        assert_eq!(t.boundary_nodes(8).unwrap(), vec![9, 10, 12, 13]);
    }

    #[test]
    fn newick_round_trip() {
        let t = Tree::parse_newick("((A:0.1,B:0.30000000000000004):1e-3,(C:2.5,D:7):0);").unwrap();
        let again = Tree::parse_newick(&t.to_newick()).unwrap();
        assert_eq!(t, again);
    }
}
