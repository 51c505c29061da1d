/// Average playout score of consecutive action pairs, shared across the
/// whole search. Row `k` stands for "no previous action".
#[derive(Debug, Clone)]
pub struct BigramHistory {
    k: usize,
    table: Vec<(f64, u64)>,
}

impl BigramHistory {
    pub fn new(n_actions: usize) -> Self {
        Self { k: n_actions, table: vec![(0.0, 0); (n_actions + 1) * n_actions] }
    }

    fn idx(&self, prev: Option<usize>, action: usize) -> usize {
        prev.unwrap_or(self.k) * self.k + action
    }

    /// Mean score of `(prev, action)`, 0 when the pair was never seen.
    pub fn score(&self, prev: Option<usize>, action: usize) -> f64 {
        let (sum, n) = self.table[self.idx(prev, action)];
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn count(&self, prev: Option<usize>, action: usize) -> u64 {
        self.table[self.idx(prev, action)].1
    }

    pub fn record(&mut self, prev: Option<usize>, action: usize, score: f64) {
        let i = self.idx(prev, action);
        self.table[i].0 += score;
        self.table[i].1 += 1;
    }

    /// Credits every consecutive pair of `actions` (the first paired with
    /// `prev`) with `score`.
    pub fn record_sequence(&mut self, mut prev: Option<usize>, actions: &[usize], score: f64) {
        for &a in actions {
            self.record(prev, a, score);
            prev = Some(a);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_per_pair() {
        let mut h = BigramHistory::new(3);
        assert_eq!(h.score(None, 1), 0.0);
        h.record_sequence(None, &[1, 2, 0], 0.6);
        h.record_sequence(Some(1), &[2], 0.2);
        assert!((h.score(Some(1), 2) - 0.4).abs() < 1e-12);
        assert_eq!(h.count(Some(1), 2), 2);
        assert!((h.score(None, 1) - 0.6).abs() < 1e-12);
        assert_eq!(h.count(Some(2), 1), 0);
    }
}
