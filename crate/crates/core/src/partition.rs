//! Topology-aware islanding: repair clusters into connected islands,
//! extract the cutset, and assemble island reports.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coherency::{group_coherency_index, group_separation_index, IntegrityIndices, SimilarityMatrix};
use crate::error::{Error, Result};
use crate::hdbscan::Partition;

/// Undirected transmission edge between two bus indices, `a < b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoEdge {
    pub a: usize,
    pub b: usize,
    pub line_id: Option<String>,
}

/// Static grid topology. The graph must be connected and self-loop free;
/// both are validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTopology {
    pub bus_ids: Vec<String>,
    pub edges: Vec<TopoEdge>,
}

impl GridTopology {
    /// Build a topology over an explicit bus order from string edge
    /// endpoints.
    pub fn new(bus_ids: Vec<String>, raw_edges: &[(String, String, Option<String>)]) -> Result<Self> {
        let index: HashMap<&str, usize> = bus_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        if index.len() != bus_ids.len() {
            return Err(Error::Topology("duplicate bus id".into()));
        }
        let mut edges = Vec::with_capacity(raw_edges.len());
        for (a, b, line_id) in raw_edges {
            let ia = *index
                .get(a.as_str())
                .ok_or_else(|| Error::Topology(format!("unknown bus {a:?} in edge list")))?;
            let ib = *index
                .get(b.as_str())
                .ok_or_else(|| Error::Topology(format!("unknown bus {b:?} in edge list")))?;
            if ia == ib {
                return Err(Error::Topology(format!("self-loop at bus {a:?}")));
            }
            edges.push(TopoEdge {
                a: ia.min(ib),
                b: ia.max(ib),
                line_id: line_id.clone(),
            });
        }
        let topo = GridTopology { bus_ids, edges };
        if !topo.is_connected(None) {
            return Err(Error::Topology("grid graph is not connected".into()));
        }
        Ok(topo)
    }

    /// Load a topology CSV (`bus_a,bus_b[,line_id]`). The bus set is the
    /// union of endpoints, ordered by first appearance.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty topology file".into()))?;
        let cols: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "bus_a" || cols[1] != "bus_b" {
            return Err(Error::Format(format!(
                "topology header must start with 'bus_a,bus_b', got {header:?}"
            )));
        }
        let has_line_id = cols.len() >= 3;

        let mut bus_ids: Vec<String> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut raw = Vec::new();
        for (no, line) in lines.enumerate() {
            let fields: Vec<&str> = line.trim_end_matches('\r').split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(Error::Format(format!(
                    "topology line {}: expected {} fields, got {}",
                    no + 2,
                    cols.len(),
                    fields.len()
                )));
            }
            for id in &fields[..2] {
                if !seen.contains_key(*id) {
                    seen.insert(id.to_string(), bus_ids.len());
                    bus_ids.push(id.to_string());
                }
            }
            let line_id = if has_line_id && !fields[2].is_empty() {
                Some(fields[2].to_string())
            } else {
                None
            };
            raw.push((fields[0].to_string(), fields[1].to_string(), line_id));
        }
        Self::new(bus_ids, &raw)
    }

    /// Reorder bus indices to match an external bus ordering. Errors when
    /// the bus sets differ.
    pub fn aligned_to(&self, bus_ids: &[String]) -> Result<Self> {
        if bus_ids.len() != self.bus_ids.len() {
            return Err(Error::Consistency(format!(
                "topology has {} buses, traces have {}",
                self.bus_ids.len(),
                bus_ids.len()
            )));
        }
        let target: HashMap<&str, usize> = bus_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut remap = vec![0usize; self.bus_ids.len()];
        for (i, id) in self.bus_ids.iter().enumerate() {
            remap[i] = *target
                .get(id.as_str())
                .ok_or_else(|| Error::Consistency(format!("bus {id:?} missing from trace set")))?;
        }
        let edges = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (remap[e.a], remap[e.b]);
                TopoEdge {
                    a: a.min(b),
                    b: a.max(b),
                    line_id: e.line_id.clone(),
                }
            })
            .collect();
        Ok(GridTopology {
            bus_ids: bus_ids.to_vec(),
            edges,
        })
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.bus_ids.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        adj
    }

    /// Connectivity of the whole graph, or of the subgraph induced by
    /// `members` when given.
    fn is_connected(&self, members: Option<&[usize]>) -> bool {
        let n = self.bus_ids.len();
        let in_set: Vec<bool> = match members {
            None => vec![true; n],
            Some(m) => {
                let mut f = vec![false; n];
                for &i in m {
                    f[i] = true;
                }
                f
            }
        };
        let total = in_set.iter().filter(|&&x| x).count();
        if total == 0 {
            return true;
        }
        let start = in_set.iter().position(|&x| x).unwrap();
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        let mut count = 1;
        while let Some(p) = stack.pop() {
            for &q in &adj[p] {
                if in_set[q] && !seen[q] {
                    seen[q] = true;
                    count += 1;
                    stack.push(q);
                }
            }
        }
        count == total
    }

    /// Connected components of the subgraph induced by `members`, each
    /// sorted ascending, ordered by smallest member.
    fn induced_components(&self, members: &[usize]) -> Vec<Vec<usize>> {
        let n = self.bus_ids.len();
        let mut in_set = vec![false; n];
        for &i in members {
            in_set[i] = true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        let mut sorted_members = members.to_vec();
        sorted_members.sort_unstable();
        for &start in &sorted_members {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(p) = stack.pop() {
                for &q in &adj[p] {
                    if in_set[q] && !seen[q] {
                        seen[q] = true;
                        comp.push(q);
                        stack.push(q);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }
}

/// Reassign topologically stranded cluster fragments until every island is
/// connected. The largest fragment of each cluster keeps its label (ties to
/// the one containing the smallest bus); every smaller fragment moves as a
/// unit to the adjacent cluster with the highest total boundary similarity
/// (ties to the lowest cluster id).
pub fn enforce_island_connectivity(
    partition: &Partition,
    topo: &GridTopology,
    s: &SimilarityMatrix,
) -> Partition {
    let n = topo.bus_ids.len();
    assert_eq!(partition.labels.len(), n, "partition does not cover the bus set");
    assert!(partition.labels.iter().all(|&l| l >= 0), "noise must be assigned first");

    let mut labels = partition.labels.clone();
    let adj = topo.adjacency();

    // A bus of the component that keeps each label, chosen from the input
    // partition before any move: largest component, ties to the one holding
    // the smallest bus. Kept components only ever grow, so these buses never
    // change label.
    let anchor: Vec<Option<usize>> = (0..partition.k as i32)
        .map(|label| {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == label).collect();
            if members.is_empty() {
                return None;
            }
            topo.induced_components(&members)
                .iter()
                .max_by(|x, y| x.len().cmp(&y.len()).then(y[0].cmp(&x[0])))
                .map(|c| c[0])
        })
        .collect();

    // Each move merges at least two induced components, so n passes always
    // suffice.
    for _pass in 0..=n {
        let mut moved = false;
        for label in 0..partition.k as i32 {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == label).collect();
            if members.is_empty() {
                continue;
            }
            let comps = topo.induced_components(&members);
            if comps.len() <= 1 {
                continue;
            }

            let a = anchor[label as usize].expect("non-empty cluster has an anchor");
            let keep = comps
                .iter()
                .position(|c| c.contains(&a))
                .expect("anchor never moves");
            for (ci, comp) in comps.iter().enumerate() {
                if ci == keep {
                    continue;
                }
                let mut in_comp = vec![false; n];
                for &p in comp {
                    in_comp[p] = true;
                }
                let mut score: HashMap<i32, f64> = HashMap::new();
                for &p in comp {
                    for &q in &adj[p] {
                        if !in_comp[q] {
                            *score.entry(labels[q]).or_default() += s.values[p][q];
                        }
                    }
                }
                let target = score
                    .iter()
                    .max_by(|(la, sa), (lb, sb)| sa.total_cmp(sb).then(lb.cmp(la)))
                    .map(|(&l, _)| l)
                    .expect("connected graph guarantees a boundary");
                for &p in comp {
                    labels[p] = target;
                }
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    debug_assert!((0..partition.k as i32).all(|label| {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == label).collect();
        members.is_empty() || topo.is_connected(Some(&members))
    }));
    Partition {
        labels,
        k: partition.k,
    }
}

/// Edges whose endpoints sit in different islands, sorted by
/// `(min endpoint, max endpoint)`.
pub fn cutset(partition: &Partition, topo: &GridTopology) -> Vec<TopoEdge> {
    let mut cut: Vec<TopoEdge> = topo
        .edges
        .iter()
        .filter(|e| partition.labels[e.a] != partition.labels[e.b])
        .cloned()
        .collect();
    cut.sort_by(|x, y| x.a.cmp(&y.a).then(x.b.cmp(&y.b)));
    cut
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub id: usize,
    pub buses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutsetEdge {
    pub a: String,
    pub b: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_id: Option<String>,
}

/// Final islanding product: member lists, severed lines, integrity indices
/// and per-island internals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandReport {
    pub islands: Vec<Island>,
    pub cutset: Vec<CutsetEdge>,
    pub gci: f64,
    pub gsi: Option<f64>,
    pub degenerate_buses: Vec<String>,
    pub per_island_internal_similarity: Vec<Option<f64>>,
}

/// Assemble the report for a connected-island partition. The supplied
/// indices are recomputed from `s` and must match exactly.
pub fn island_report(
    partition: &Partition,
    topo: &GridTopology,
    s: &SimilarityMatrix,
    indices: &IntegrityIndices,
) -> Result<IslandReport> {
    let n = topo.bus_ids.len();
    if s.bus_count() != n || partition.labels.len() != n {
        return Err(Error::Consistency(format!(
            "bus sets disagree: topology {n}, similarity {}, partition {}",
            s.bus_count(),
            partition.labels.len()
        )));
    }
    if s.bus_ids != topo.bus_ids {
        return Err(Error::Consistency("bus id order differs between inputs".into()));
    }
    if partition.labels.iter().any(|&l| l < 0) {
        return Err(Error::Consistency("partition still contains noise labels".into()));
    }

    let gci = group_coherency_index(s, partition)?;
    let gsi = match group_separation_index(s, partition) {
        Ok(v) => Some(v),
        Err(Error::UndefinedIndex(_)) => None,
        Err(e) => return Err(e),
    };
    if gci != indices.gci || gsi != indices.gsi {
        return Err(Error::Consistency(format!(
            "supplied indices (gci {}, gsi {:?}) do not match recomputation (gci {gci}, gsi {gsi:?})",
            indices.gci, indices.gsi
        )));
    }

    let mut islands = Vec::with_capacity(partition.k);
    let mut internal = Vec::with_capacity(partition.k);
    for label in 0..partition.k as i32 {
        let members = partition.members(label);
        if members.is_empty() {
            return Err(Error::Consistency(format!("island {label} is empty")));
        }
        if !topo.is_connected(Some(&members)) {
            return Err(Error::Consistency(format!("island {label} is not connected")));
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for (ii, &p) in members.iter().enumerate() {
            for &q in &members[ii + 1..] {
                sum += s.values[p][q];
                pairs += 1;
            }
        }
        internal.push((pairs > 0).then(|| sum / pairs as f64));
        islands.push(Island {
            id: label as usize,
            buses: members.iter().map(|&i| topo.bus_ids[i].clone()).collect(),
        });
    }

    let cut = cutset(partition, topo)
        .into_iter()
        .map(|e| CutsetEdge {
            a: topo.bus_ids[e.a].clone(),
            b: topo.bus_ids[e.b].clone(),
            line_id: e.line_id,
        })
        .collect();

    Ok(IslandReport {
        islands,
        cutset: cut,
        gci,
        gsi,
        degenerate_buses: s.degenerate_bus_ids(),
        per_island_internal_similarity: internal,
    })
}
