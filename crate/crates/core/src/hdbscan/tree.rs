//! Single-linkage dendrogram, condensed cluster tree and stability-based
//! flat-cluster extraction.

use std::collections::VecDeque;

use crate::error::{Error, Result};

use super::union_find::UnionFind;
use super::{HdbscanParams, MstEdge, Partition};

/// Single-linkage merge tree. Leaves are buses `0..n_leaves`; merge `m`
/// creates node `n_leaves + m`. Merge distances are non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<Merge>,
}

/// One agglomeration step: nodes `a` and `b` join at `distance` into a
/// component of `size` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
    pub size: usize,
}

impl Dendrogram {
    /// Number of points under a node.
    fn node_size(&self, node: usize) -> usize {
        if node < self.n_leaves {
            1
        } else {
            self.merges[node - self.n_leaves].size
        }
    }

    fn leaves_under(&self, node: usize, out: &mut Vec<usize>) {
        if node < self.n_leaves {
            out.push(node);
            return;
        }
        let m = &self.merges[node - self.n_leaves];
        self.leaves_under(m.a, out);
        self.leaves_under(m.b, out);
    }

    /// Connected components after keeping only merges with
    /// `distance <= eps`. Labels are assigned by ascending smallest member
    /// index; every point gets a label (no noise at this level).
    pub fn flat_cut(&self, eps: f64) -> Partition {
        let n = self.n_leaves;
        let mut uf = UnionFind::new(n);
        // Representative leaf for every dendrogram node; children always
        // precede their parent, so rep[child] is filled when needed.
        let mut rep: Vec<usize> = (0..n).collect();
        for m in &self.merges {
            rep.push(rep[m.a]);
        }
        for m in &self.merges {
            if m.distance > eps {
                break; // merges sorted by distance
            }
            uf.union(rep[m.a], rep[m.b]);
        }

        let mut label_of_root = vec![-1i32; n];
        let mut labels = vec![-1i32; n];
        let mut k = 0i32;
        for p in 0..n {
            let r = uf.find(p);
            if label_of_root[r] < 0 {
                label_of_root[r] = k;
                k += 1;
            }
            labels[p] = label_of_root[r];
        }
        Partition {
            labels,
            k: k as usize,
        }
    }
}

/// Build the single-linkage dendrogram from a spanning edge list. Edges are
/// processed in ascending `(distance, a, b)` order; passing a non-spanning
/// edge set is a structural error.
pub fn build_hierarchy(edges: &[MstEdge], n_buses: usize) -> Result<Dendrogram> {
    if n_buses < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n_buses });
    }
    if edges.len() != n_buses - 1 {
        return Err(Error::NotSpanning);
    }
    let mut sorted: Vec<MstEdge> = edges.to_vec();
    sorted.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });

    let mut uf = UnionFind::new(n_buses);
    // Dendrogram node currently representing each component; indexed by
    // union-find root.
    let mut component_node: Vec<usize> = (0..n_buses).collect();
    let mut merges = Vec::with_capacity(n_buses - 1);

    for (m, edge) in sorted.iter().enumerate() {
        if edge.a >= n_buses || edge.b >= n_buses {
            return Err(Error::NotSpanning);
        }
        let ra = uf.find(edge.a);
        let rb = uf.find(edge.b);
        if ra == rb {
            return Err(Error::NotSpanning); // cycle: cannot be a tree
        }
        let na = component_node[ra];
        let nb = component_node[rb];
        let root = uf.union(ra, rb).expect("distinct roots");
        let size = uf.size_of(root);
        merges.push(Merge {
            a: na.min(nb),
            b: na.max(nb),
            distance: edge.distance,
            size,
        });
        component_node[root] = n_buses + m;
    }

    debug_assert!(merges.windows(2).all(|w| w[0].distance <= w[1].distance));
    Ok(Dendrogram {
        n_leaves: n_buses,
        merges,
    })
}

/// One cluster of the condensed hierarchy. `lambda = 1 / max(distance,
/// d_floor)`; points leave either individually (`departures`) or by the
/// cluster splitting into `children`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedCluster {
    pub parent: Option<usize>,
    pub lambda_birth: f64,
    pub lambda_death: f64,
    pub children: Vec<usize>,
    pub departures: Vec<(usize, f64)>,
    pub stability: f64,
    pub size: usize,
}

/// Condensed cluster tree: the dendrogram pruned by `min_cluster_size`,
/// annotated with birth/death densities and excess-of-mass stabilities.
/// Cluster 0 is the root and covers every bus.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedTree {
    pub clusters: Vec<CondensedCluster>,
    pub n_points: usize,
}

/// Walk the dendrogram top-down, keeping a split only when both sides reach
/// `min_cluster_size`; smaller sides become point departures at the split
/// density. `stability(C)` accumulates `(lambda_event - lambda_birth)` over
/// every point mass leaving `C`.
pub fn condense_tree(dendro: &Dendrogram, params: &HdbscanParams) -> CondensedTree {
    let n = dendro.n_leaves;
    let mcs = params.min_cluster_size;
    let lambda = |d: f64| 1.0 / d.max(params.d_floor);

    let mut clusters = vec![CondensedCluster {
        parent: None,
        lambda_birth: 0.0,
        lambda_death: 0.0,
        children: Vec::new(),
        departures: Vec::new(),
        stability: 0.0,
        size: n,
    }];

    // BFS guarantees parents receive smaller indices than their children.
    let root_node = n + dendro.merges.len() - 1;
    let mut queue: VecDeque<(usize, usize)> = VecDeque::from([(root_node, 0usize)]);

    while let Some((node, cidx)) = queue.pop_front() {
        let merge = &dendro.merges[node - n];
        let (a, b) = (merge.a, merge.b);
        let (sa, sb) = (dendro.node_size(a), dendro.node_size(b));
        let lam = lambda(merge.distance);
        let birth = clusters[cidx].lambda_birth;

        match (sa >= mcs, sb >= mcs) {
            (true, true) => {
                clusters[cidx].stability += (lam - birth) * (sa + sb) as f64;
                clusters[cidx].lambda_death = lam;
                for (child, size) in [(a, sa), (b, sb)] {
                    let idx = clusters.len();
                    clusters.push(CondensedCluster {
                        parent: Some(cidx),
                        lambda_birth: lam,
                        lambda_death: lam,
                        children: Vec::new(),
                        departures: Vec::new(),
                        stability: 0.0,
                        size,
                    });
                    clusters[cidx].children.push(idx);
                    queue.push_back((child, idx));
                }
            }
            (true, false) => {
                drop_points(dendro, b, lam, &mut clusters[cidx]);
                clusters[cidx].stability += (lam - birth) * sb as f64;
                clusters[cidx].lambda_death = lam;
                queue.push_back((a, cidx));
            }
            (false, true) => {
                drop_points(dendro, a, lam, &mut clusters[cidx]);
                clusters[cidx].stability += (lam - birth) * sa as f64;
                clusters[cidx].lambda_death = lam;
                queue.push_back((b, cidx));
            }
            (false, false) => {
                drop_points(dendro, a, lam, &mut clusters[cidx]);
                drop_points(dendro, b, lam, &mut clusters[cidx]);
                clusters[cidx].stability += (lam - birth) * (sa + sb) as f64;
                clusters[cidx].lambda_death = lam;
            }
        }
    }

    if cfg!(debug_assertions) {
        let departed: usize = clusters.iter().map(|c| c.departures.len()).sum();
        debug_assert_eq!(departed, n, "every bus departs exactly once");
        debug_assert!(clusters.iter().all(|c| c.lambda_death >= c.lambda_birth));
        debug_assert!(clusters.iter().all(|c| c.stability >= 0.0));
    }
    CondensedTree {
        clusters,
        n_points: n,
    }
}

fn drop_points(dendro: &Dendrogram, node: usize, lam: f64, cluster: &mut CondensedCluster) {
    let mut leaves = Vec::new();
    dendro.leaves_under(node, &mut leaves);
    for p in leaves {
        cluster.departures.push((p, lam));
    }
}

/// Excess-of-mass flat extraction: pick the non-overlapping set of non-root
/// clusters maximizing total stability (a parent wins over its descendants
/// only when strictly more stable). Points not covered by a winning cluster
/// are noise (-1). A root-only tree yields one all-bus cluster.
pub fn extract_clusters(tree: &CondensedTree) -> Partition {
    let nc = tree.clusters.len();
    if nc == 1 {
        return Partition {
            labels: vec![0; tree.n_points],
            k: 1,
        };
    }

    let mut best = vec![0.0f64; nc];
    let mut selected = vec![false; nc];
    for c in (1..nc).rev() {
        let node = &tree.clusters[c];
        if node.children.is_empty() {
            selected[c] = true;
            best[c] = node.stability;
            continue;
        }
        let child_sum: f64 = node.children.iter().map(|&ch| best[ch]).sum();
        if node.stability > child_sum {
            selected[c] = true;
            best[c] = node.stability;
            let mut stack = node.children.clone();
            while let Some(d) = stack.pop() {
                selected[d] = false;
                stack.extend(&tree.clusters[d].children);
            }
        } else {
            best[c] = child_sum;
        }
    }

    // Members of a winning cluster: departures of its whole subtree.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for c in 1..nc {
        if !selected[c] {
            continue;
        }
        let mut members = Vec::new();
        let mut stack = vec![c];
        while let Some(d) = stack.pop() {
            members.extend(tree.clusters[d].departures.iter().map(|&(p, _)| p));
            stack.extend(&tree.clusters[d].children);
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups.sort_by_key(|g| g[0]);

    let mut labels = vec![-1i32; tree.n_points];
    for (id, group) in groups.iter().enumerate() {
        for &p in group {
            labels[p] = id as i32;
        }
    }
    Partition {
        labels,
        k: groups.len(),
    }
}

/// JSON dump of the condensed tree:
/// `{"clusters": [{id, lambda_birth, lambda_death, stability, children,
/// departures: [{bus, lambda}]}]}`.
pub fn condensed_tree_json(tree: &CondensedTree) -> serde_json::Value {
    let clusters: Vec<serde_json::Value> = tree
        .clusters
        .iter()
        .enumerate()
        .map(|(id, c)| {
            serde_json::json!({
                "id": id,
                "lambda_birth": c.lambda_birth,
                "lambda_death": c.lambda_death,
                "stability": c.stability,
                "children": c.children,
                "departures": c
                    .departures
                    .iter()
                    .map(|&(bus, lambda)| serde_json::json!({"bus": bus, "lambda": lambda}))
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    serde_json::json!({ "clusters": clusters })
}
