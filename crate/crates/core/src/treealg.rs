//! Directed trees with roots and shoots: enumeration under the structural
//! identity convention, the recursive partial order on right trees, right
//! subtrees generated by antichains, and quotient trees by line contraction.
//!
//! Vertices carry labels `0..n` (the labeling map is part of the data, so
//! identity is structural equality after canonical ordering of line sets).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("tree is not right: component of vertex {0} has {1} root lines")]
    NotRight(usize, usize),
    #[error("internal lines contain a cycle")]
    Cyclic,
    #[error("line {0} is not an internal line")]
    NotInternal(usize),
    #[error("vertex {0} out of range")]
    BadVertex(usize),
    #[error("antichain contains comparable vertices {0} and {1}")]
    NotAntichain(usize, usize),
}

/// A line of a directed tree. Internal lines are stored with the upper
/// (greater in the partial order) vertex first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Line {
    Internal { upper: usize, lower: usize },
    Root { vertex: usize },
    Shoot { vertex: usize, label: usize },
}

impl Line {
    /// Vertex the line comes into, if any (internal: upper end; shoots
    /// come into their vertex).
    pub fn comes_into(&self) -> Option<usize> {
        match *self {
            Line::Internal { upper, .. } => Some(upper),
            Line::Shoot { vertex, .. } => Some(vertex),
            Line::Root { .. } => None,
        }
    }
    /// Vertex the line comes from, if any (internal: lower end; roots
    /// come from their vertex).
    pub fn comes_from(&self) -> Option<usize> {
        match *self {
            Line::Internal { lower, .. } => Some(lower),
            Line::Root { vertex } => Some(vertex),
            Line::Shoot { .. } => None,
        }
    }
}

/// A directed tree: labeled vertices plus a canonically ordered line list.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DirectedTree {
    pub n: usize,
    pub lines: Vec<Line>,
}

impl DirectedTree {
    pub fn new(n: usize, mut lines: Vec<Line>) -> Self {
        lines.sort();
        DirectedTree { n, lines }
    }

    pub fn internal_lines(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.lines.iter().enumerate().filter_map(|(i, l)| match *l {
            Line::Internal { upper, lower } => Some((i, upper, lower)),
            _ => None,
        })
    }

    pub fn root_lines(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lines.iter().enumerate().filter_map(|(i, l)| match *l {
            Line::Root { vertex } => Some((i, vertex)),
            _ => None,
        })
    }

    pub fn shoot_lines(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.lines.iter().enumerate().filter_map(|(i, l)| match *l {
            Line::Shoot { vertex, label } => Some((i, vertex, label)),
            _ => None,
        })
    }

    pub fn n_shoots(&self) -> usize {
        self.shoot_lines().count()
    }

    pub fn n_roots(&self) -> usize {
        self.root_lines().count()
    }

    /// Ids of lines that are not shoots (these carry delay parameters).
    pub fn delay_lines(&self) -> Vec<usize> {
        self.lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !matches!(l, Line::Shoot { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of lines coming into each vertex (children plus shoots).
    pub fn fan_in(&self) -> Vec<usize> {
        let mut f = vec![0usize; self.n];
        for l in &self.lines {
            if let Some(v) = l.comes_into() {
                f[v] += 1;
            }
        }
        f
    }

    /// Parent of each vertex through internal lines (None for root vertices).
    pub fn parent(&self) -> Vec<Option<usize>> {
        let mut p = vec![None; self.n];
        for (_, upper, lower) in self.internal_lines() {
            p[lower] = Some(upper);
        }
        p
    }

    /// Connected components over internal lines; returns component id per
    /// vertex, ids ordered by smallest member vertex.
    pub fn components(&self) -> Vec<usize> {
        let mut uf: Vec<usize> = (0..self.n).collect();
        fn find(uf: &mut Vec<usize>, mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for (_, a, b) in self.internal_lines() {
            let (ra, rb) = (find(&mut uf, a), find(&mut uf, b));
            if ra != rb {
                uf[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut reps: Vec<usize> = (0..self.n).map(|v| find(&mut uf, v)).collect();
        let mut seen: Vec<usize> = reps.clone();
        seen.sort_unstable();
        seen.dedup();
        for r in reps.iter_mut() {
            *r = seen.binary_search(r).unwrap();
        }
        reps
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().iter().all(|&c| c == 0)
    }

    /// Validate acyclicity, rightness, and internal-line orientation
    /// (upper end strictly greater in the derived order).
    pub fn validate_right(&self) -> Result<(), TreeError> {
        // Acyclic: every vertex has at most one parent and parent chains
        // terminate.
        let mut parent = vec![usize::MAX; self.n];
        for (_, upper, lower) in self.internal_lines() {
            if upper >= self.n || lower >= self.n {
                return Err(TreeError::BadVertex(upper.max(lower)));
            }
            if parent[lower] != usize::MAX {
                return Err(TreeError::Cyclic);
            }
            parent[lower] = upper;
        }
        for v in 0..self.n {
            let mut seen = vec![false; self.n];
            let mut x = v;
            while parent[x] != usize::MAX {
                if seen[x] {
                    return Err(TreeError::Cyclic);
                }
                seen[x] = true;
                x = parent[x];
            }
        }
        // Right: exactly one root line per component, at the component top.
        let comps = self.components();
        let ncomp = comps.iter().copied().max().map_or(0, |m| m + 1);
        let mut roots_per = vec![0usize; ncomp];
        for (_, v) in self.root_lines() {
            roots_per[comps[v]] += 1;
            if parent[v] != usize::MAX {
                // Root line must sit at the maximal vertex of its component.
                return Err(TreeError::NotRight(v, roots_per[comps[v]]));
            }
        }
        for v in 0..self.n {
            let c = comps[v];
            if roots_per[c] != 1 {
                return Err(TreeError::NotRight(v, roots_per[c]));
            }
        }
        Ok(())
    }

    /// Partial order of a right tree: `order[v][w]` is true when `v < w`
    /// strictly (w is an ancestor of v through internal lines).
    pub fn partial_order(&self) -> Result<Vec<Vec<bool>>, TreeError> {
        self.validate_right()?;
        let parent = self.parent();
        let mut ord = vec![vec![false; self.n]; self.n];
        for v in 0..self.n {
            let mut x = v;
            while let Some(p) = parent[x] {
                ord[v][p] = true;
                x = p;
            }
        }
        Ok(ord)
    }

    /// All right subtrees, one per nonempty antichain.
    pub fn right_subtrees(&self) -> Result<Vec<RightSubtree>, TreeError> {
        let ord = self.partial_order()?;
        let verts: Vec<usize> = (0..self.n).collect();
        let mut out = Vec::new();
        for mask in 1u64..(1u64 << self.n) {
            let chosen: Vec<usize> = verts
                .iter()
                .copied()
                .filter(|&v| mask >> v & 1 == 1)
                .collect();
            let mut anti = true;
            'outer: for &a in &chosen {
                for &b in &chosen {
                    if a != b && (ord[a][b] || ord[b][a]) {
                        anti = false;
                        break 'outer;
                    }
                }
            }
            if anti {
                out.push(self.subtree_at(&chosen, &ord)?);
            }
        }
        Ok(out)
    }

    /// The right subtree generated by an antichain: vertices below some
    /// chosen vertex keep their internal lines; the line coming from each
    /// chosen vertex is redirected into a root line of the subtree.
    pub fn subtree_at(
        &self,
        antichain: &[usize],
        ord: &[Vec<bool>],
    ) -> Result<RightSubtree, TreeError> {
        for &a in antichain {
            if a >= self.n {
                return Err(TreeError::BadVertex(a));
            }
            for &b in antichain {
                if a != b && (ord[a][b] || ord[b][a]) {
                    return Err(TreeError::NotAntichain(a, b));
                }
            }
        }
        let keep: Vec<bool> = (0..self.n)
            .map(|v| antichain.iter().any(|&a| v == a || ord[v][a]))
            .collect();
        let vertex_map: Vec<usize> = (0..self.n).filter(|&v| keep[v]).collect();
        let relabel = |v: usize| vertex_map.binary_search(&v).unwrap();
        let mut lines = Vec::new();
        let mut root_provenance = Vec::new();
        for (id, l) in self.lines.iter().enumerate() {
            match *l {
                Line::Internal { upper, lower } if keep[upper] && keep[lower] => {
                    lines.push(Line::Internal {
                        upper: relabel(upper),
                        lower: relabel(lower),
                    });
                }
                Line::Shoot { vertex, label } if keep[vertex] => {
                    lines.push(Line::Shoot {
                        vertex: relabel(vertex),
                        label,
                    });
                }
                _ => {}
            }
            let _ = id;
        }
        // Each antichain vertex becomes a root vertex; remember which line
        // of the parent tree its root line came from.
        for &v in antichain {
            let from_line = self
                .lines
                .iter()
                .enumerate()
                .find(|(_, l)| l.comes_from() == Some(v))
                .map(|(i, _)| i);
            lines.push(Line::Root { vertex: relabel(v) });
            root_provenance.push((relabel(v), from_line));
        }
        let tree = DirectedTree::new(vertex_map.len(), lines);
        tree.validate_right()?;
        Ok(RightSubtree {
            antichain: antichain.to_vec(),
            tree,
            vertex_map,
            root_provenance,
        })
    }

    /// Contract the internal lines in `contract` (by line id); components of
    /// the contracted edge set collapse to single vertices, relabeled in
    /// order of their smallest original member.
    pub fn quotient(&self, contract: &[usize]) -> Result<QuotientTree, TreeError> {
        for &id in contract {
            match self.lines.get(id) {
                Some(Line::Internal { .. }) => {}
                _ => return Err(TreeError::NotInternal(id)),
            }
        }
        let mut uf: Vec<usize> = (0..self.n).collect();
        fn find(uf: &mut Vec<usize>, mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for &id in contract {
            if let Line::Internal { upper, lower } = self.lines[id] {
                let (ra, rb) = (find(&mut uf, upper), find(&mut uf, lower));
                if ra != rb {
                    uf[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let reps: Vec<usize> = (0..self.n).map(|v| find(&mut uf, v)).collect();
        let mut sorted_reps = reps.clone();
        sorted_reps.sort_unstable();
        sorted_reps.dedup();
        let comp_of = |v: usize| sorted_reps.binary_search(&reps[v]).unwrap();
        let mut lines = Vec::new();
        let mut line_map = vec![None; self.lines.len()];
        for (id, l) in self.lines.iter().enumerate() {
            if contract.contains(&id) {
                continue;
            }
            let new = match *l {
                Line::Internal { upper, lower } => Line::Internal {
                    upper: comp_of(upper),
                    lower: comp_of(lower),
                },
                Line::Root { vertex } => Line::Root {
                    vertex: comp_of(vertex),
                },
                Line::Shoot { vertex, label } => Line::Shoot {
                    vertex: comp_of(vertex),
                    label,
                },
            };
            lines.push((id, new));
        }
        lines.sort_by_key(|&(_, l)| l);
        for (new_id, &(old_id, _)) in lines.iter().enumerate() {
            line_map[old_id] = Some(new_id);
        }
        let tree = DirectedTree::new(sorted_reps.len(), lines.into_iter().map(|(_, l)| l).collect());
        tree.validate_right()?;
        Ok(QuotientTree {
            tree,
            component_of: (0..self.n).map(comp_of).collect(),
            line_map,
        })
    }

    /// Delay-line ids along the decreasing path from the root line down to
    /// `v` inclusive (root line first).
    pub fn root_path(&self, v: usize) -> Vec<usize> {
        let parent = self.parent();
        let mut path = Vec::new();
        let mut x = v;
        loop {
            match parent[x] {
                Some(p) => {
                    let id = self
                        .lines
                        .iter()
                        .position(|l| matches!(*l, Line::Internal { upper, lower } if upper == p && lower == x))
                        .expect("parent line");
                    path.push(id);
                    x = p;
                }
                None => {
                    if let Some((id, _)) = self.root_lines().find(|&(_, rv)| rv == x) {
                        path.push(id);
                    }
                    break;
                }
            }
        }
        path.reverse();
        path
    }
}

/// A right subtree generated by an antichain, with maps back to the parent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RightSubtree {
    pub antichain: Vec<usize>,
    pub tree: DirectedTree,
    /// Subtree vertex -> original vertex.
    pub vertex_map: Vec<usize>,
    /// (subtree root vertex, originating line id in the parent tree).
    pub root_provenance: Vec<(usize, Option<usize>)>,
}

/// A quotient tree with the contraction bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotientTree {
    pub tree: DirectedTree,
    /// Original vertex -> merged vertex.
    pub component_of: Vec<usize>,
    /// Original line id -> surviving line id.
    pub line_map: Vec<Option<usize>>,
}

/// Enumerate all right directed trees with `n` labeled vertices, `shoots`
/// labeled shoots, and fan-in (lines coming into a vertex) at most `max_in`.
/// Disconnected trees are included unless `connected_only` is set.
pub fn enumerate_trees(
    n: usize,
    max_in: usize,
    shoots: usize,
    connected_only: bool,
) -> Vec<DirectedTree> {
    assert!(n >= 1, "need at least one vertex");
    let mut out = Vec::new();
    // parents[v] in 0..n encodes the internal line v -> parent; parents[v]
    // == n marks a root vertex carrying the component's root line.
    let mut parents = vec![0usize; n];
    'next: loop {
        // Acyclicity check of the parent map.
        let mut ok = true;
        for v in 0..n {
            if parents[v] == v {
                ok = false;
                break;
            }
            let mut seen = 0usize;
            let mut x = v;
            while ok && parents[x] != n {
                x = parents[x];
                seen += 1;
                if x == v || seen > n {
                    ok = false;
                }
            }
        }
        if ok {
            let base: Vec<Line> = (0..n)
                .map(|v| {
                    if parents[v] == n {
                        Line::Root { vertex: v }
                    } else {
                        Line::Internal {
                            upper: parents[v],
                            lower: v,
                        }
                    }
                })
                .collect();
            let skeleton = DirectedTree::new(n, base.clone());
            if (!connected_only || skeleton.is_connected())
                && skeleton.validate_right().is_ok()
            {
                // Distribute labeled shoots over vertices.
                let mut assign = vec![0usize; shoots];
                loop {
                    let mut lines = base.clone();
                    for (label, &v) in assign.iter().enumerate() {
                        lines.push(Line::Shoot { vertex: v, label });
                    }
                    let t = DirectedTree::new(n, lines);
                    if t.fan_in().iter().all(|&f| f <= max_in) {
                        out.push(t);
                    }
                    // Advance the shoot assignment.
                    let mut i = 0;
                    loop {
                        if i == shoots {
                            break;
                        }
                        assign[i] += 1;
                        if assign[i] < n {
                            break;
                        }
                        assign[i] = 0;
                        i += 1;
                    }
                    if shoots == 0 || i == shoots {
                        break;
                    }
                }
            }
        }
        // Advance the parent map.
        let mut i = 0;
        loop {
            if i == n {
                break 'next;
            }
            parents[i] += 1;
            if parents[i] <= n {
                break;
            }
            parents[i] = 0;
            i += 1;
        }
    }
    out.sort_by(|a, b| a.lines.cmp(&b.lines).then(a.n.cmp(&b.n)));
    out.dedup();
    out
}

/// Independent generate-and-filter reference enumerator: build all
/// unordered internal edge sets, root placements, and shoot maps, then
/// filter by the tree axioms. Exponentially slower than `enumerate_trees`;
/// used by the acceptance suite as the combinatorial oracle.
pub fn brute_force_enumerate(
    n: usize,
    max_in: usize,
    shoots: usize,
    connected_only: bool,
) -> Vec<DirectedTree> {
    brute_force_impl(n, max_in, shoots, connected_only)
}

fn brute_force_impl(n: usize, max_in: usize, shoots: usize, connected_only: bool) -> Vec<DirectedTree> {
    use std::collections::BTreeSet;
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            pairs.push((a, b));
        }
    }
    let mut out = BTreeSet::new();
        for edge_mask in 0u64..(1 << pairs.len()) {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| edge_mask >> i & 1 == 1)
                .map(|(_, &p)| p)
                .collect();
            for root_mask in 0u64..(1 << n) {
                let roots: Vec<usize> = (0..n).filter(|&v| root_mask >> v & 1 == 1).collect();
                // Orient edges away from roots by BFS; reject if any edge
                // cannot be oriented (cycle or multiple roots per comp).
                let mut parent = vec![usize::MAX; n];
                let mut visited = vec![false; n];
                let mut stack: Vec<usize> = roots.clone();
                for &r in &roots {
                    visited[r] = true;
                }
                let mut adj = vec![Vec::new(); n];
                for &(a, b) in &edges {
                    adj[a].push(b);
                    adj[b].push(a);
                }
                while let Some(v) = stack.pop() {
                    for &w in &adj[v] {
                        if !visited[w] {
                            visited[w] = true;
                            parent[w] = v;
                            stack.push(w);
                        }
                    }
                }
                if !visited.iter().all(|&x| x) {
                    continue;
                }
                // Every edge must be a parent link exactly once.
                let mut links = 0;
                for &(a, b) in &edges {
                    if parent[a] == b || parent[b] == a {
                        links += 1;
                    }
                }
                if links != edges.len() {
                    continue;
                }
                let mut lines: Vec<Line> = Vec::new();
                for v in 0..n {
                    if parent[v] != usize::MAX {
                        lines.push(Line::Internal {
                            upper: parent[v],
                            lower: v,
                        });
                    }
                }
                for &r in &roots {
                    lines.push(Line::Root { vertex: r });
                }
                let skel = DirectedTree::new(n, lines.clone());
                if skel.validate_right().is_err() {
                    continue;
                }
                if connected_only && !skel.is_connected() {
                    continue;
                }
                let mut assign = vec![0usize; shoots];
                loop {
                    let mut all = lines.clone();
                    for (label, &v) in assign.iter().enumerate() {
                        all.push(Line::Shoot { vertex: v, label });
                    }
                    let t = DirectedTree::new(n, all);
                    if t.fan_in().iter().all(|&f| f <= max_in) {
                        out.insert(t);
                    }
                    let mut i = 0;
                    loop {
                        if i == shoots {
                            break;
                        }
                        assign[i] += 1;
                        if assign[i] < n {
                            break;
                        }
                        assign[i] = 0;
                        i += 1;
                    }
                    if shoots == 0 || i == shoots {
                        break;
                    }
                }
            }
        }
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(n: usize, max_in: usize, shoots: usize, connected_only: bool) -> Vec<DirectedTree> {
        brute_force_enumerate(n, max_in, shoots, connected_only)
    }

    #[test]
    fn single_vertex_right_tree() {
        let ts = enumerate_trees(1, 4, 0, true);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].lines, vec![Line::Root { vertex: 0 }]);
    }

    #[test]
    fn matches_brute_force_n2_connected() {
        let a = enumerate_trees(2, 4, 0, true);
        let b = brute_force(2, 4, 0, true);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2); // chain rooted at 0 or at 1
    }

    #[test]
    fn matches_brute_force_n3_all() {
        for connected in [false, true] {
            let a = enumerate_trees(3, 4, 0, connected);
            let b = brute_force(3, 4, 0, connected);
            assert_eq!(a, b, "connected={connected}");
            for t in &a {
                t.validate_right().unwrap();
            }
        }
    }

    #[test]
    fn matches_brute_force_with_shoots() {
        let a = enumerate_trees(2, 2, 2, false);
        let b = brute_force(2, 2, 2, false);
        assert_eq!(a, b);
    }

    #[test]
    fn matches_brute_force_n4_connected() {
        let a = enumerate_trees(4, 4, 0, true);
        let b = brute_force(4, 4, 0, true);
        assert_eq!(a, b);
        // Labeled rooted trees on 4 vertices: 4^3 = 64, minus fan-in > 4
        // (none at n=4), so 64.
        assert_eq!(a.len(), 64);
    }

    fn chain2() -> DirectedTree {
        DirectedTree::new(
            2,
            vec![
                Line::Root { vertex: 1 },
                Line::Internal { upper: 1, lower: 0 },
            ],
        )
    }

    #[test]
    fn partial_order_chain() {
        let t = chain2();
        let ord = t.partial_order().unwrap();
        assert!(ord[0][1]);
        assert!(!ord[1][0]);
    }

    #[test]
    fn partial_order_matches_reachability() {
        // Root 2 with children 0 and 1: children incomparable, both < root.
        let t = DirectedTree::new(
            3,
            vec![
                Line::Root { vertex: 2 },
                Line::Internal { upper: 2, lower: 0 },
                Line::Internal { upper: 2, lower: 1 },
            ],
        );
        let ord = t.partial_order().unwrap();
        assert!(ord[0][2] && ord[1][2]);
        assert!(!ord[0][1] && !ord[1][0]);
    }

    #[test]
    fn right_subtrees_chain() {
        let t = chain2();
        let subs = t.right_subtrees().unwrap();
        // Antichains: {0}, {1}; {0,1} is comparable so excluded.
        assert_eq!(subs.len(), 2);
        // Antichain {1} regenerates the full tree.
        let full = subs.iter().find(|s| s.antichain == vec![1]).unwrap();
        assert_eq!(full.tree, t);
    }

    #[test]
    fn right_subtrees_match_subset_filter() {
        let t = DirectedTree::new(
            3,
            vec![
                Line::Root { vertex: 2 },
                Line::Internal { upper: 2, lower: 1 },
                Line::Internal { upper: 1, lower: 0 },
            ],
        );
        let subs = t.right_subtrees().unwrap();
        let ord = t.partial_order().unwrap();
        let mut count = 0;
        for mask in 1u8..8 {
            let chosen: Vec<usize> = (0..3).filter(|&v| mask >> v & 1 == 1).collect();
            let anti = chosen
                .iter()
                .all(|&a| chosen.iter().all(|&b| a == b || (!ord[a][b] && !ord[b][a])));
            if anti {
                count += 1;
            }
        }
        assert_eq!(subs.len(), count);
        // The maximal subtree (antichain = {2}) is the whole tree.
        assert!(subs.iter().any(|s| s.tree == t));
    }

    #[test]
    fn quotient_identity_and_full() {
        let t = chain2();
        let q = t.quotient(&[]).unwrap();
        assert_eq!(q.tree, t);
        let internal: Vec<usize> = t.internal_lines().map(|(i, _, _)| i).collect();
        let q2 = t.quotient(&internal).unwrap();
        assert_eq!(q2.tree.n, 1);
        assert_eq!(q2.tree.lines, vec![Line::Root { vertex: 0 }]);
    }

    #[test]
    fn quotient_rejects_root_lines() {
        let t = chain2();
        let root_id = t.root_lines().next().unwrap().0;
        assert!(matches!(
            t.quotient(&[root_id]),
            Err(TreeError::NotInternal(_))
        ));
    }

    #[test]
    fn quotient_composition() {
        // All trees with 3 vertices: contracting {a} then {b'} equals {a, b}.
        for t in enumerate_trees(3, 4, 0, true) {
            let ids: Vec<usize> = t.internal_lines().map(|(i, _, _)| i).collect();
            assert_eq!(ids.len(), 2);
            let (a, b) = (ids[0], ids[1]);
            let q1 = t.quotient(&[a]).unwrap();
            let b_new = q1.line_map[b].unwrap();
            let q12 = q1.tree.quotient(&[b_new]).unwrap();
            let q_both = t.quotient(&[a, b]).unwrap();
            assert_eq!(q12.tree, q_both.tree);
        }
    }

    #[test]
    fn root_path_includes_root_line() {
        let t = DirectedTree::new(
            3,
            vec![
                Line::Root { vertex: 2 },
                Line::Internal { upper: 2, lower: 1 },
                Line::Internal { upper: 1, lower: 0 },
            ],
        );
        let path = t.root_path(0);
        assert_eq!(path.len(), 3);
        assert!(matches!(t.lines[path[0]], Line::Root { vertex: 2 }));
    }
}
