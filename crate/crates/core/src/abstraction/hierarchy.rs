use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::JobId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HierarchyError {
    #[error("option {0} has fewer than two children")]
    Arity(usize),
    #[error("job {0} appears in more than one leaf")]
    DuplicateLeaf(JobId),
    #[error("job {0} is not covered by any leaf")]
    MissingLeaf(JobId),
    #[error("leaf job {0} is outside the job set")]
    UnknownLeaf(JobId),
    #[error("node {0} does not exist")]
    UnknownNode(usize),
    #[error("node {0} is reachable more than once")]
    SharedNode(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HNode {
    Leaf(JobId),
    Option(Vec<usize>),
}

/// A rooted tree whose leaves are jobs and whose inner nodes are abstract
/// options. Nodes live in an arena; only nodes reachable from the root count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionHierarchy {
    nodes: Vec<HNode>,
    root: usize,
}

/// JSON form: a job id, or an array of sub-hierarchies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nested {
    Job(JobId),
    Group(Vec<Nested>),
}

impl OptionHierarchy {
    /// Builder starting from an empty arena; finish with [`Self::with_root`].
    pub fn builder() -> HierarchyBuilder {
        HierarchyBuilder { nodes: Vec::new() }
    }

    pub fn single(job: JobId) -> Self {
        Self { nodes: vec![HNode::Leaf(job)], root: 0 }
    }

    /// Every job directly under one root option.
    pub fn flat(n_jobs: usize) -> Self {
        if n_jobs == 1 {
            return Self::single(0);
        }
        let mut nodes: Vec<HNode> = (0..n_jobs).map(HNode::Leaf).collect();
        nodes.push(HNode::Option((0..n_jobs).collect()));
        Self { nodes, root: n_jobs }
    }

    pub fn from_nested(nested: &Nested) -> Result<Self, HierarchyError> {
        fn build(b: &mut HierarchyBuilder, n: &Nested) -> Result<usize, HierarchyError> {
            match n {
                Nested::Job(j) => Ok(b.leaf(*j)),
                Nested::Group(items) if items.len() == 1 => build(b, &items[0]),
                Nested::Group(items) => {
                    let kids = items.iter().map(|i| build(b, i)).collect::<Result<Vec<_>, _>>()?;
                    b.option(kids)
                }
            }
        }
        let mut b = Self::builder();
        let root = build(&mut b, nested)?;
        b.with_root(root)
    }

    pub fn to_nested(&self) -> Nested {
        self.nested_at(self.root)
    }

    fn nested_at(&self, id: usize) -> Nested {
        match &self.nodes[id] {
            HNode::Leaf(j) => Nested::Job(*j),
            HNode::Option(kids) => Nested::Group(kids.iter().map(|&k| self.nested_at(k)).collect()),
        }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &HNode {
        &self.nodes[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        match &self.nodes[id] {
            HNode::Leaf(_) => &[],
            HNode::Option(kids) => kids,
        }
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        matches!(self.nodes[id], HNode::Leaf(_))
    }

    /// Jobs under `id`, left to right.
    pub fn jobs_under(&self, id: usize) -> Vec<JobId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match &self.nodes[n] {
                HNode::Leaf(j) => out.push(*j),
                HNode::Option(kids) => stack.extend(kids.iter().rev()),
            }
        }
        out
    }

    pub fn jobs(&self) -> Vec<JobId> {
        self.jobs_under(self.root)
    }

    /// Root-to-leaf node path for every job, indexed by job id.
    pub fn paths(&self, n_jobs: usize) -> Result<Vec<Vec<usize>>, HierarchyError> {
        self.validate(n_jobs)?;
        let mut paths = vec![Vec::new(); n_jobs];
        let mut stack = vec![(self.root, vec![self.root])];
        while let Some((id, path)) = stack.pop() {
            match &self.nodes[id] {
                HNode::Leaf(j) => paths[*j] = path,
                HNode::Option(kids) => {
                    for &k in kids {
                        let mut p = path.clone();
                        p.push(k);
                        stack.push((k, p));
                    }
                }
            }
        }
        Ok(paths)
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(self.root, 0)];
        while let Some((id, d)) = stack.pop() {
            best = best.max(d);
            for &k in self.children(id) {
                stack.push((k, d + 1));
            }
        }
        best
    }

    /// Inner options reachable from the root.
    pub fn n_options(&self) -> usize {
        let mut count = 0;
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if let HNode::Option(kids) = &self.nodes[id] {
                count += 1;
                stack.extend(kids);
            }
        }
        count
    }

    /// Checks that the leaves partition `0..n_jobs` and options branch.
    pub fn validate(&self, n_jobs: usize) -> Result<(), HierarchyError> {
        let mut seen_job = vec![false; n_jobs];
        let mut seen_node = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if id >= self.nodes.len() {
                return Err(HierarchyError::UnknownNode(id));
            }
            if std::mem::replace(&mut seen_node[id], true) {
                return Err(HierarchyError::SharedNode(id));
            }
            match &self.nodes[id] {
                HNode::Leaf(j) => {
                    let slot = seen_job.get_mut(*j).ok_or(HierarchyError::UnknownLeaf(*j))?;
                    if std::mem::replace(slot, true) {
                        return Err(HierarchyError::DuplicateLeaf(*j));
                    }
                }
                HNode::Option(kids) => {
                    if kids.len() < 2 {
                        return Err(HierarchyError::Arity(id));
                    }
                    stack.extend(kids);
                }
            }
        }
        match seen_job.iter().position(|s| !s) {
            Some(j) => Err(HierarchyError::MissingLeaf(j)),
            None => Ok(()),
        }
    }

    /// Same tree shape with children sorted by their smallest job id, so
    /// equal hierarchies built in different orders compare equal.
    pub fn canonical(&self) -> Nested {
        fn canon(n: Nested) -> (JobId, Nested) {
            match n {
                Nested::Job(j) => (j, Nested::Job(j)),
                Nested::Group(items) => {
                    let mut kids: Vec<(JobId, Nested)> = items.into_iter().map(canon).collect();
                    kids.sort_by_key(|(k, _)| *k);
                    let min = kids[0].0;
                    (min, Nested::Group(kids.into_iter().map(|(_, n)| n).collect()))
                }
            }
        }
        canon(self.to_nested()).1
    }
}

impl fmt::Display for OptionHierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(h: &OptionHierarchy, id: usize, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match h.node(id) {
                HNode::Leaf(j) => write!(f, "{j}"),
                HNode::Option(kids) => {
                    f.write_str("(")?;
                    for (i, &k) in kids.iter().enumerate() {
                        if i > 0 {
                            f.write_str(",")?;
                        }
                        go(h, k, f)?;
                    }
                    f.write_str(")")
                }
            }
        }
        go(self, self.root, f)
    }
}

pub struct HierarchyBuilder {
    nodes: Vec<HNode>,
}

impl HierarchyBuilder {
    pub fn leaf(&mut self, job: JobId) -> usize {
        self.nodes.push(HNode::Leaf(job));
        self.nodes.len() - 1
    }

    pub fn option(&mut self, children: Vec<usize>) -> Result<usize, HierarchyError> {
        if let Some(&bad) = children.iter().find(|&&c| c >= self.nodes.len()) {
            return Err(HierarchyError::UnknownNode(bad));
        }
        self.nodes.push(HNode::Option(children));
        let id = self.nodes.len() - 1;
        if self.children_len(id) < 2 {
            return Err(HierarchyError::Arity(id));
        }
        Ok(id)
    }

    /// Appends `child` to an existing option.
    pub fn absorb(&mut self, option: usize, child: usize) -> Result<(), HierarchyError> {
        if child >= self.nodes.len() {
            return Err(HierarchyError::UnknownNode(child));
        }
        match self.nodes.get_mut(option) {
            Some(HNode::Option(kids)) => {
                kids.push(child);
                Ok(())
            }
            _ => Err(HierarchyError::UnknownNode(option)),
        }
    }

    fn children_len(&self, id: usize) -> usize {
        match &self.nodes[id] {
            HNode::Leaf(_) => 0,
            HNode::Option(k) => k.len(),
        }
    }

    pub fn with_root(self, root: usize) -> Result<OptionHierarchy, HierarchyError> {
        if root >= self.nodes.len() {
            return Err(HierarchyError::UnknownNode(root));
        }
        Ok(OptionHierarchy { nodes: self.nodes, root })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five_jobs() -> OptionHierarchy {
        // abc(ab(a,b),c), de(d,e) with a..e = 0..4
        let mut b = OptionHierarchy::builder();
        let (a, bb, c, d, e) = (b.leaf(0), b.leaf(1), b.leaf(2), b.leaf(3), b.leaf(4));
        let ab = b.option(vec![a, bb]).unwrap();
        let abc = b.option(vec![ab, c]).unwrap();
        let de = b.option(vec![d, e]).unwrap();
        let root = b.option(vec![abc, de]).unwrap();
        b.with_root(root).unwrap()
    }

    #[test]
    fn structure_queries() {
        let h = five_jobs();
        h.validate(5).unwrap();
        assert_eq!(h.height(), 3);
        assert_eq!(h.n_options(), 4);
        assert_eq!(h.jobs(), vec![0, 1, 2, 3, 4]);
        assert_eq!(h.to_string(), "(((0,1),2),(3,4))");
        let paths = h.paths(5).unwrap();
        assert_eq!(paths[0].len(), 4);
        assert_eq!(paths[3].len(), 3);
    }

    #[test]
    fn validation_catches_broken_partitions() {
        let h = five_jobs();
        assert_eq!(h.validate(6), Err(HierarchyError::MissingLeaf(5)));
        assert_eq!(h.validate(4), Err(HierarchyError::UnknownLeaf(4)));
        let dup = OptionHierarchy::from_nested(&Nested::Group(vec![Nested::Job(0), Nested::Job(0)])).unwrap();
        assert_eq!(dup.validate(1), Err(HierarchyError::DuplicateLeaf(0)));
        let mut b = OptionHierarchy::builder();
        let a = b.leaf(0);
        assert!(matches!(b.option(vec![a]), Err(HierarchyError::Arity(_))));
    }

    #[test]
    fn json_round_trip_as_nested_arrays() {
        let h = five_jobs();
        let text = serde_json::to_string(&h.to_nested()).unwrap();
        assert_eq!(text, "[[[0,1],2],[3,4]]");
        let back: Nested = serde_json::from_str(&text).unwrap();
        assert_eq!(OptionHierarchy::from_nested(&back).unwrap().to_nested(), h.to_nested());
    }

    #[test]
    fn flat_and_single() {
        let f = OptionHierarchy::flat(4);
        f.validate(4).unwrap();
        assert_eq!(f.height(), 1);
        let s = OptionHierarchy::flat(1);
        s.validate(1).unwrap();
        assert_eq!(s.height(), 0);
    }

    #[test]
    fn canonical_ignores_child_order() {
        let a = OptionHierarchy::from_nested(&serde_json::from_str("[[2,1],0]").unwrap()).unwrap();
        let b = OptionHierarchy::from_nested(&serde_json::from_str("[0,[1,2]]").unwrap()).unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
