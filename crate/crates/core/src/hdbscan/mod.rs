//! Density-based hierarchical clustering of buses on similarity-derived
//! distances: core distances, mutual reachability, minimum spanning tree,
//! single-linkage hierarchy, condensed tree, stability extraction, a
//! fixed-epsilon DBSCAN* cut, and noise assignment.
//!
//! All operations are deterministic; ties break on bus indices.

mod tree;
mod union_find;

pub use tree::{
    build_hierarchy, condense_tree, condensed_tree_json, extract_clusters, CondensedCluster,
    CondensedTree, Dendrogram, Merge,
};

use crate::coherency::SimilarityMatrix;
use crate::error::{Error, Result};

/// Symmetric pairwise distance matrix with zero diagonal, entries in
/// `[0, 1]`. The triangle inequality is not assumed.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Clustering knobs. `m_pts` is the self-inclusive neighborhood size used
/// for core distances; `d_floor` guards the `1/distance` density transform
/// against zero distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdbscanParams {
    pub m_pts: usize,
    pub min_cluster_size: usize,
    pub d_floor: f64,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            m_pts: 4,
            min_cluster_size: 3,
            d_floor: 1e-12,
        }
    }
}

impl HdbscanParams {
    pub fn validate(&self, n_buses: usize) -> Result<()> {
        if self.m_pts < 2 {
            return Err(Error::InvalidParameter(format!(
                "m_pts must be at least 2, got {}",
                self.m_pts
            )));
        }
        if self.m_pts > n_buses {
            return Err(Error::InvalidParameter(format!(
                "m_pts {} exceeds bus count {n_buses}",
                self.m_pts
            )));
        }
        if self.min_cluster_size < 2 {
            return Err(Error::InvalidParameter(format!(
                "min_cluster_size must be at least 2, got {}",
                self.min_cluster_size
            )));
        }
        if self.min_cluster_size > n_buses {
            return Err(Error::InvalidParameter(format!(
                "min_cluster_size {} exceeds bus count {n_buses}",
                self.min_cluster_size
            )));
        }
        if !(self.d_floor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "d_floor must be positive, got {}",
                self.d_floor
            )));
        }
        Ok(())
    }
}

/// Per-bus cluster labels; `-1` marks noise until [`assign_noise`] runs.
/// Cluster ids are contiguous `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub labels: Vec<i32>,
    pub k: usize,
}

impl Partition {
    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }

    /// Bus indices carrying `label`.
    pub fn members(&self, label: i32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// One spanning-tree edge; endpoints are bus indices with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

/// Bridge similarities to distances: `d = 1 - s`, zero diagonal.
pub fn similarity_to_distance(s: &SimilarityMatrix) -> DistanceMatrix {
    let n = s.bus_count();
    let values = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { 1.0 - s.values[i][j] })
                .collect()
        })
        .collect();
    DistanceMatrix { values }
}

/// Core distance of each bus: the `m_pts`-th smallest entry of its row,
/// counting the zero self-distance.
pub fn core_distances(d: &DistanceMatrix, params: &HdbscanParams) -> Result<Vec<f64>> {
    let n = d.len();
    params.validate(n)?;
    Ok((0..n)
        .map(|p| {
            let mut row = d.values[p].clone();
            row.sort_by(|a, b| a.total_cmp(b));
            row[params.m_pts - 1]
        })
        .collect())
}

/// Density-aware distance: `mr[a][b] = max(core[a], core[b], d[a][b])` off
/// the diagonal, zero on it.
pub fn mutual_reachability(d: &DistanceMatrix, core: &[f64]) -> DistanceMatrix {
    let n = d.len();
    assert_eq!(core.len(), n, "core distances must match the matrix");
    let values = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    if a == b {
                        0.0
                    } else {
                        d.values[a][b].max(core[a]).max(core[b])
                    }
                })
                .collect()
        })
        .collect();
    DistanceMatrix { values }
}

/// Dense Prim MST over a complete distance matrix. Ties break on
/// `(distance, min bus, max bus)` of the candidate edge, which makes the
/// output unique. Edges come back sorted ascending by the same key.
pub fn minimum_spanning_tree(d: &DistanceMatrix) -> Vec<MstEdge> {
    let n = d.len();
    assert!(n >= 2, "need at least two buses");

    #[derive(Clone, Copy)]
    struct Candidate {
        dist: f64,
        a: usize, // min endpoint
        b: usize, // max endpoint
    }
    fn key(c: &Candidate) -> (f64, usize, usize) {
        (c.dist, c.a, c.b)
    }

    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    // Initial frontier: every candidate edge leaves vertex 0.
    let mut best: Vec<Candidate> = (0..n)
        .map(|v| Candidate {
            dist: d.values[0][v],
            a: 0,
            b: v,
        })
        .collect();

    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick = usize::MAX;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            if pick == usize::MAX {
                pick = v;
                continue;
            }
            let (ka, kb) = (key(&best[v]), key(&best[pick]));
            if ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.cmp(&kb.2))
                == std::cmp::Ordering::Less
            {
                pick = v;
            }
        }
        let chosen = best[pick];
        edges.push(MstEdge {
            a: chosen.a,
            b: chosen.b,
            distance: chosen.dist,
        });
        in_tree[pick] = true;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let cand = Candidate {
                dist: d.values[pick][v],
                a: pick.min(v),
                b: pick.max(v),
            };
            let (kc, kv) = (key(&cand), key(&best[v]));
            if kc.0.total_cmp(&kv.0).then(kc.1.cmp(&kv.1)).then(kc.2.cmp(&kv.2))
                == std::cmp::Ordering::Less
            {
                best[v] = cand;
            }
        }
    }

    edges.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    edges
}

/// Fixed-epsilon DBSCAN* on a raw distance matrix: core points are those
/// with at least `m_pts` neighbors within `eps` (self included); clusters
/// are connected components of core points under mutual epsilon-membership,
/// which for a symmetric matrix reduces to `d <= eps`. Non-core points are
/// noise — no border points.
pub fn dbscan_star_cut(d: &DistanceMatrix, eps: f64, params: &HdbscanParams) -> Result<Partition> {
    let n = d.len();
    params.validate(n)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }

    let is_core: Vec<bool> = (0..n)
        .map(|p| d.values[p].iter().filter(|&&x| x <= eps).count() >= params.m_pts)
        .collect();

    let mut labels = vec![-1i32; n];
    let mut k = 0i32;
    for start in 0..n {
        if !is_core[start] || labels[start] >= 0 {
            continue;
        }
        let mut stack = vec![start];
        labels[start] = k;
        while let Some(p) = stack.pop() {
            for q in 0..n {
                if is_core[q] && labels[q] < 0 && d.values[p][q] <= eps {
                    labels[q] = k;
                    stack.push(q);
                }
            }
        }
        k += 1;
    }
    Ok(Partition {
        labels,
        k: k as usize,
    })
}

/// Give every noise bus the cluster with the highest mean similarity to that
/// cluster's pre-assignment members; ties go to the lowest cluster id. With
/// no clusters at all, every bus falls into a single cluster 0.
pub fn assign_noise(partition: &Partition, s: &SimilarityMatrix) -> Partition {
    let n = partition.labels.len();
    assert_eq!(n, s.bus_count(), "partition does not match the similarity matrix");

    if partition.k == 0 {
        return Partition {
            labels: vec![0; n],
            k: 1,
        };
    }

    let members: Vec<Vec<usize>> = (0..partition.k as i32).map(|c| partition.members(c)).collect();
    let mut labels = partition.labels.clone();
    for p in 0..n {
        if labels[p] >= 0 {
            continue;
        }
        let mut best_label = 0i32;
        let mut best_score = f64::NEG_INFINITY;
        for (c, group) in members.iter().enumerate() {
            let score =
                group.iter().map(|&q| s.values[p][q]).sum::<f64>() / group.len() as f64;
            if score > best_score {
                best_score = score;
                best_label = c as i32;
            }
        }
        labels[p] = best_label;
    }
    Partition {
        labels,
        k: partition.k,
    }
}

/// End-to-end clustering of a similarity matrix; bundles the intermediate
/// products the pipeline and reports need.
#[derive(Debug, Clone)]
pub struct Clustering {
    pub tree: CondensedTree,
    /// Labels straight out of extraction, noise still `-1`.
    pub raw: Partition,
    /// Labels after noise assignment; covers every bus.
    pub assigned: Partition,
}

/// similarity -> distance -> core -> mutual reachability -> MST ->
/// hierarchy -> condensed tree -> extraction -> noise assignment.
pub fn cluster(s: &SimilarityMatrix, params: &HdbscanParams) -> Result<Clustering> {
    let d = similarity_to_distance(s);
    let core = core_distances(&d, params)?;
    let mr = mutual_reachability(&d, &core);
    let mst = minimum_spanning_tree(&mr);
    let dendro = build_hierarchy(&mst, d.len())?;
    let tree = condense_tree(&dendro, params);
    let raw = extract_clusters(&tree);
    let assigned = assign_noise(&raw, s);
    Ok(Clustering { tree, raw, assigned })
}
