use super::{euclidean, pairwise_distance, AbstractionError, JobFeatures, Metric, OptionHierarchy};

/// Single-linkage agglomeration: repeatedly joins the two nearest options
/// into a new binary option until one root remains. Equal distances are
/// resolved by input order, so reordering the jobs can change the tree.
pub fn detached_abstraction(features: &[JobFeatures], metric: Metric) -> Result<OptionHierarchy, AbstractionError> {
    let n = features.len();
    if n == 0 {
        return Err(AbstractionError::NoJobs);
    }
    if n == 1 {
        return Ok(OptionHierarchy::single(0));
    }
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = pairwise_distance(&features[i], &features[j], metric)?;
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    // Prim's minimum spanning tree; single linkage merges along its edges
    let mut in_tree = vec![false; n];
    let mut reach = vec![(f64::INFINITY, 0usize); n];
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(n - 1);
    in_tree[0] = true;
    for v in 1..n {
        reach[v] = (dist[v], 0);
    }
    for _ in 1..n {
        let v = (0..n)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| reach[a].0.total_cmp(&reach[b].0).then(a.cmp(&b)))
            .expect("vertices left");
        in_tree[v] = true;
        let from = reach[v].1;
        edges.push((reach[v].0, from.min(v), from.max(v)));
        for u in 0..n {
            if !in_tree[u] && dist[v * n + u] < reach[u].0 {
                reach[u] = (dist[v * n + u], v);
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut b = OptionHierarchy::builder();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut node_of: Vec<usize> = (0..n).map(|j| b.leaf(j)).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut root = node_of[0];
    for (_, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        let joined = b.option(vec![node_of[ri], node_of[rj]])?;
        parent[rj] = ri;
        node_of[ri] = joined;
        root = joined;
    }
    Ok(b.with_root(root)?)
}

/// Half the median distance between distinct feature vectors; 1.0 when all
/// vectors coincide.
pub fn default_bandwidth(features: &[JobFeatures]) -> f64 {
    let unique = dedup(features).0;
    let mut d = Vec::new();
    for i in 0..unique.len() {
        for j in i + 1..unique.len() {
            d.push(euclidean(&unique[i], &unique[j]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    0.5 * median
}

/// Distinct vectors in first-appearance order, their multiplicities, and the
/// index of each input's vector.
fn dedup(features: &[JobFeatures]) -> (Vec<JobFeatures>, Vec<f64>, Vec<usize>) {
    let mut unique: Vec<JobFeatures> = Vec::new();
    let mut weight = Vec::new();
    let mut index = Vec::with_capacity(features.len());
    for f in features {
        match unique.iter().position(|u| u == f) {
            Some(i) => {
                weight[i] += 1.0;
                index.push(i);
            }
            None => {
                unique.push(f.clone());
                weight.push(1.0);
                index.push(unique.len() - 1);
            }
        }
    }
    (unique, weight, index)
}

/// Flat-kernel mean-shift. Every point climbs to the weighted mean of the
/// points within `bandwidth` until it stops moving; modes closer than the
/// bandwidth form one cluster. Returns a cluster id per input, numbered by
/// first appearance.
pub fn mean_shift(features: &[JobFeatures], bandwidth: f64) -> Result<Vec<usize>, AbstractionError> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(AbstractionError::Bandwidth(bandwidth));
    }
    if let Some(f) = features.first() {
        if let Some(bad) = features.iter().find(|g| g.len() != f.len()) {
            return Err(AbstractionError::DimensionMismatch(f.len(), bad.len()));
        }
    }
    let (unique, weight, index) = dedup(features);
    let tol = 1e-9 * bandwidth;
    let mut modes: Vec<JobFeatures> = Vec::with_capacity(unique.len());
    for start in &unique {
        let mut x = start.clone();
        for _ in 0..500 {
            let mut next = vec![0.0; x.len()];
            let mut total = 0.0;
            for (p, w) in unique.iter().zip(&weight) {
                if euclidean(p, &x) <= bandwidth {
                    for (n, v) in next.iter_mut().zip(p) {
                        *n += w * v;
                    }
                    total += w;
                }
            }
            next.iter_mut().for_each(|v| *v /= total);
            let moved = euclidean(&next, &x);
            x = next;
            if moved <= tol {
                break;
            }
        }
        modes.push(x);
    }
    let mut centers: Vec<JobFeatures> = Vec::new();
    let mut cluster_of_unique = Vec::with_capacity(unique.len());
    for m in &modes {
        match centers.iter().position(|c| euclidean(c, m) < bandwidth) {
            Some(c) => cluster_of_unique.push(c),
            None => {
                centers.push(m.clone());
                cluster_of_unique.push(centers.len() - 1);
            }
        }
    }
    Ok(index.into_iter().map(|u| cluster_of_unique[u]).collect())
}
