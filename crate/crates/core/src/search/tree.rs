//! Search-tree nodes. Statistics sit behind a per-node lock and children
//! behind a read-write lock, so the same tree serves serial search and
//! tree-parallel search with several workers.

use std::sync::Arc;

use parking_lot::{Mutex, RwLock, RwLockReadGuard};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub visits: u64,
    pub sum: f64,
}

impl Stats {
    pub fn mean(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.sum / self.visits as f64
        }
    }
}

#[derive(Debug)]
pub struct Node {
    /// Option (or job) played to reach this node; meaningless at the root.
    pub action: usize,
    stats: Mutex<Stats>,
    children: RwLock<Vec<Arc<Node>>>,
}

impl Node {
    pub fn new(action: usize) -> Arc<Self> {
        Arc::new(Self {
            action,
            stats: Mutex::new(Stats::default()),
            children: RwLock::new(Vec::new()),
        })
    }

    pub fn root() -> Arc<Self> {
        Self::new(usize::MAX)
    }

    pub fn stats(&self) -> Stats {
        *self.stats.lock()
    }

    /// Adds one visit with the given score.
    pub fn update(&self, score: f64) {
        let mut s = self.stats.lock();
        s.visits += 1;
        s.sum += score;
    }

    pub fn children(&self) -> RwLockReadGuard<'_, Vec<Arc<Node>>> {
        self.children.read()
    }

    pub fn child(&self, action: usize) -> Option<Arc<Node>> {
        self.children.read().iter().find(|c| c.action == action).cloned()
    }

    /// Adds a child for `action` unless another worker already did.
    pub fn expand(&self, action: usize) -> Arc<Node> {
        let mut kids = self.children.write();
        if let Some(c) = kids.iter().find(|c| c.action == action) {
            return c.clone();
        }
        let c = Node::new(action);
        kids.push(c.clone());
        c
    }

    /// Node count per depth below (and including) this node.
    pub fn widths(self: &Arc<Self>) -> Vec<usize> {
        let mut widths = Vec::new();
        let mut level = vec![self.clone()];
        while !level.is_empty() {
            widths.push(level.len());
            level = level.iter().flat_map(|n| n.children().clone()).collect();
        }
        widths
    }

    pub fn size(self: &Arc<Self>) -> usize {
        self.widths().iter().sum()
    }

    /// Checks that no node has fewer visits than its children combined and
    /// every mean lies in `[0, 1]`.
    pub fn check_invariants(self: &Arc<Self>) -> bool {
        let mut stack = vec![self.clone()];
        while let Some(n) = stack.pop() {
            let s = n.stats();
            let kids = n.children().clone();
            let child_visits: u64 = kids.iter().map(|c| c.stats().visits).sum();
            if child_visits > s.visits || !(0.0..=1.0).contains(&s.mean()) {
                return false;
            }
            stack.extend(kids);
        }
        true
    }
}

impl Drop for Node {
    // Deep single-path trees would otherwise drop recursively.
    fn drop(&mut self) {
        let mut stack: Vec<Arc<Node>> = std::mem::take(self.children.get_mut());
        while let Some(n) = stack.pop() {
            if let Ok(mut inner) = Arc::try_unwrap(n) {
                stack.append(inner.children.get_mut());
            }
        }
    }
}
