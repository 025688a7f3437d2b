//! Undirected graph storage and the handful of topology metrics the rest of
//! the toolkit is built on: connected components, density, cut ratio, core
//! numbers, k-hop neighborhoods, and average shortest-path distance.
//!
//! Node ids are dense `u32` values in `[0, num_nodes)`. All node-set
//! parameters are treated as sets: order is irrelevant and duplicates are
//! ignored.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node id {node} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { node: u32, num_nodes: usize },
    #[error("{op} requires a non-empty node set")]
    EmptyNodeSet { op: &'static str },
    #[error("cut ratio is undefined when the node set covers the whole graph")]
    NoExterior,
    #[error("k-hop neighborhood requires k >= 1")]
    ZeroHops,
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Simple undirected graph with sorted adjacency lists.
///
/// Construction canonicalizes the edge set: self-loops are dropped, parallel
/// and mirrored duplicates collapse to a single undirected edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
    num_edges: usize,
}

impl Graph {
    /// Builds a graph over `num_nodes` nodes from an arbitrary edge iterator.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Graph, GraphError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut canon: Vec<(u32, u32)> = Vec::new();
        for (u, v) in edges {
            for node in [u, v] {
                if node as usize >= num_nodes {
                    return Err(GraphError::NodeOutOfRange { node, num_nodes });
                }
            }
            if u == v {
                continue;
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut adj = vec![Vec::new(); num_nodes];
        for &(u, v) in &canon {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph {
            adj,
            num_edges: canon.len(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adj[u as usize].binary_search(&v).is_ok()
    }

    /// All undirected edges as `(u, v)` pairs with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges);
        for (u, nbrs) in self.adj.iter().enumerate() {
            let u = u as u32;
            for &v in nbrs {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    fn check_node(&self, v: u32) -> Result<(), GraphError> {
        if (v as usize) < self.num_nodes() {
            Ok(())
        } else {
            Err(GraphError::NodeOutOfRange {
                node: v,
                num_nodes: self.num_nodes(),
            })
        }
    }

    fn check_set(&self, nodes: &[u32], op: &'static str) -> Result<(), GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::EmptyNodeSet { op });
        }
        for &v in nodes {
            self.check_node(v)?;
        }
        Ok(())
    }

    /// Membership mask over all node ids. Duplicate entries are harmless.
    fn mask(&self, nodes: &[u32]) -> Vec<bool> {
        let mut m = vec![false; self.num_nodes()];
        for &v in nodes {
            m[v as usize] = true;
        }
        m
    }

    /// Loads a whitespace-separated edge list. Lines starting with `#` and
    /// blank lines are skipped; the node count is the largest id plus one.
    pub fn load_edge_list(path: &Path) -> Result<Graph, GraphError> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut edges: Vec<(u32, u32)> = Vec::new();
        let mut max_id: i64 = -1;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parse = |tok: &str| -> Result<u32, GraphError> {
                tok.parse::<u32>().map_err(|e| GraphError::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    msg: format!("bad node id {tok:?}: {e}"),
                })
            };
            let mut toks = trimmed.split_whitespace();
            let (u, v) = match (toks.next(), toks.next(), toks.next()) {
                (Some(a), Some(b), None) => (parse(a)?, parse(b)?),
                _ => {
                    return Err(GraphError::Parse {
                        path: path.display().to_string(),
                        line: idx + 1,
                        msg: "expected exactly two node ids".into(),
                    })
                }
            };
            max_id = max_id.max(u as i64).max(v as i64);
            edges.push((u, v));
        }
        Graph::from_edges((max_id + 1) as usize, edges)
    }

    /// Writes the canonical edge list: one `u v` pair per undirected edge,
    /// `u < v`, sorted. Loading the result reproduces the graph exactly.
    pub fn save_edge_list(&self, path: &Path) -> Result<(), GraphError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# undirected edge list, {} nodes", self.num_nodes())?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// A labeled subgraph: a node set over some base graph plus its class labels
/// and the connected components it decomposes into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    pub id: usize,
    /// Sorted, deduplicated member node ids.
    pub nodes: Vec<u32>,
    /// Label indices into the dataset's label-name table.
    pub labels: Vec<usize>,
    /// Connected components of the induced subgraph, each sorted ascending,
    /// ordered by smallest member.
    pub components: Vec<Vec<u32>>,
}

impl Subgraph {
    pub fn new(
        graph: &Graph,
        id: usize,
        mut nodes: Vec<u32>,
        labels: Vec<usize>,
    ) -> Result<Subgraph, GraphError> {
        nodes.sort_unstable();
        nodes.dedup();
        graph.check_set(&nodes, "subgraph")?;
        let components = connected_components(graph, &nodes)?;
        Ok(Subgraph {
            id,
            nodes,
            labels,
            components,
        })
    }
}

/// Connected components of the subgraph induced by `nodes`.
///
/// Each component is sorted ascending and the component list is ordered by
/// smallest member, so the output is independent of input order.
pub fn connected_components(graph: &Graph, nodes: &[u32]) -> Result<Vec<Vec<u32>>, GraphError> {
    graph.check_set(nodes, "connected_components")?;
    let member = graph.mask(nodes);
    let mut sorted: Vec<u32> = nodes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let mut seen = vec![false; graph.num_nodes()];
    let mut comps = Vec::new();
    for &start in &sorted {
        if seen[start as usize] {
            continue;
        }
        let mut comp = vec![start];
        seen[start as usize] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                if member[v as usize] && !seen[v as usize] {
                    seen[v as usize] = true;
                    comp.push(v);
                    queue.push_back(v);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    // Scanning starts in ascending order already yields components ordered
    // by smallest member.
    Ok(comps)
}

/// Density of the induced subgraph: `2e / (n (n - 1))`, and 0 for sets of
/// fewer than two nodes.
pub fn density(graph: &Graph, nodes: &[u32]) -> Result<f64, GraphError> {
    graph.check_set(nodes, "density")?;
    let member = graph.mask(nodes);
    let n = member.iter().filter(|&&m| m).count();
    if n < 2 {
        return Ok(0.0);
    }
    let mut internal = 0usize;
    for (u, &is_member) in member.iter().enumerate() {
        if !is_member {
            continue;
        }
        for &v in graph.neighbors(u as u32) {
            if (v as usize) > u && member[v as usize] {
                internal += 1;
            }
        }
    }
    Ok(2.0 * internal as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Cut ratio of the node set: border edges divided by `|S| * |V \ S|`.
pub fn cut_ratio(graph: &Graph, nodes: &[u32]) -> Result<f64, GraphError> {
    graph.check_set(nodes, "cut_ratio")?;
    let member = graph.mask(nodes);
    let inside = member.iter().filter(|&&m| m).count();
    let outside = graph.num_nodes() - inside;
    if outside == 0 {
        return Err(GraphError::NoExterior);
    }
    let mut border = 0usize;
    for (u, &is_member) in member.iter().enumerate() {
        if !is_member {
            continue;
        }
        border += graph
            .neighbors(u as u32)
            .iter()
            .filter(|&&v| !member[v as usize])
            .count();
    }
    Ok(border as f64 / (inside as f64 * outside as f64))
}

/// Core number of every node, by minimum-degree peeling in O(V + E).
pub fn core_numbers(graph: &Graph) -> Vec<u32> {
    let n = graph.num_nodes();
    let mut deg: Vec<usize> = (0..n).map(|v| graph.degree(v as u32)).collect();
    let max_deg = deg.iter().copied().max().unwrap_or(0);

    // Bucket sort nodes by degree; `pos`/`order` track each node's slot so
    // peeling can demote neighbors in O(1).
    let mut bucket_start = vec![0usize; max_deg + 2];
    for &d in &deg {
        bucket_start[d + 1] += 1;
    }
    for i in 1..bucket_start.len() {
        bucket_start[i] += bucket_start[i - 1];
    }
    let mut next_slot = bucket_start.clone();
    let mut order = vec![0u32; n];
    let mut pos = vec![0usize; n];
    for v in 0..n {
        let slot = next_slot[deg[v]];
        order[slot] = v as u32;
        pos[v] = slot;
        next_slot[deg[v]] += 1;
    }

    let mut core = vec![0u32; n];
    let mut peeled = vec![false; n];
    let mut current = 0usize;
    for i in 0..n {
        let v = order[i] as usize;
        current = current.max(deg[v]);
        core[v] = current as u32;
        peeled[v] = true;
        for &w in graph.neighbors(v as u32) {
            let w = w as usize;
            if peeled[w] || deg[w] <= deg[v] {
                continue;
            }
            // Swap w to the front of its bucket, then shrink its degree.
            let dw = deg[w];
            let front = bucket_start[dw].max(i + 1);
            let u = order[front] as usize;
            order.swap(pos[w], front);
            pos.swap(w, u);
            bucket_start[dw] = front + 1;
            deg[w] -= 1;
        }
    }
    core
}

/// Nodes at shortest-path distance in `[1, k]` from the set, excluding the
/// set itself. Sorted ascending.
pub fn khop_neighborhood(graph: &Graph, nodes: &[u32], k: usize) -> Result<Vec<u32>, GraphError> {
    if k == 0 {
        return Err(GraphError::ZeroHops);
    }
    graph.check_set(nodes, "khop_neighborhood")?;
    let member = graph.mask(nodes);
    let mut dist = vec![u32::MAX; graph.num_nodes()];
    let mut queue = VecDeque::new();
    for (v, &is_member) in member.iter().enumerate() {
        if is_member {
            dist[v] = 0;
            queue.push_back(v as u32);
        }
    }
    let mut out = Vec::new();
    while let Some(u) = queue.pop_front() {
        let d = dist[u as usize];
        if d as usize >= k {
            continue;
        }
        for &v in graph.neighbors(u) {
            if dist[v as usize] == u32::MAX {
                dist[v as usize] = d + 1;
                out.push(v);
                queue.push_back(v);
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Mean shortest-path distance over all pairs in `from x to`, as a count of
/// hops. Returns infinity if any pair is disconnected. Nodes shared by both
/// sets contribute zero-distance pairs.
pub fn avg_shortest_path(graph: &Graph, from: &[u32], to: &[u32]) -> Result<f64, GraphError> {
    graph.check_set(from, "avg_shortest_path")?;
    graph.check_set(to, "avg_shortest_path")?;
    let mut from_sorted = from.to_vec();
    from_sorted.sort_unstable();
    from_sorted.dedup();
    let mut to_sorted = to.to_vec();
    to_sorted.sort_unstable();
    to_sorted.dedup();

    let mut total = 0.0f64;
    let mut pairs = 0usize;
    for &s in &from_sorted {
        let index = DistanceIndex::from_sources(graph, &[s]);
        for &t in &to_sorted {
            match index.distance(t) {
                Some(d) => {
                    total += d as f64;
                    pairs += 1;
                }
                None => return Ok(f64::INFINITY),
            }
        }
    }
    Ok(total / pairs as f64)
}

/// Breadth-first distances from a source set to every node in the graph.
#[derive(Debug, Clone)]
pub struct DistanceIndex {
    dist: Vec<u32>,
}

impl DistanceIndex {
    /// Multi-source BFS; distance is hops to the nearest source.
    pub fn from_sources(graph: &Graph, sources: &[u32]) -> DistanceIndex {
        let mut dist = vec![u32::MAX; graph.num_nodes()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if dist[s as usize] == u32::MAX {
                dist[s as usize] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let d = dist[u as usize];
            for &v in graph.neighbors(u) {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = d + 1;
                    queue.push_back(v);
                }
            }
        }
        DistanceIndex { dist }
    }

    /// Hop distance to `v`, or `None` when unreachable.
    pub fn distance(&self, v: u32) -> Option<u32> {
        match self.dist[v as usize] {
            u32::MAX => None,
            d => Some(d),
        }
    }

    /// Mean distance from the indexed sources to a node set, infinity when
    /// any member is unreachable.
    pub fn mean_distance(&self, nodes: &[u32]) -> f64 {
        let mut total = 0.0f64;
        for &v in nodes {
            match self.distance(v) {
                Some(d) => total += d as f64,
                None => return f64::INFINITY,
            }
        }
        total / nodes.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(n: usize) -> Graph {
        Graph::from_edges(n, (0..n as u32 - 1).map(|i| (i, i + 1))).unwrap()
    }

    fn complete_graph(n: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                edges.push((u, v));
            }
        }
        Graph::from_edges(n, edges).unwrap()
    }

    /// Star with `leaves` outer nodes; node 0 is the hub.
    fn star_graph(leaves: usize) -> Graph {
        Graph::from_edges(leaves + 1, (1..=leaves as u32).map(|v| (0, v))).unwrap()
    }

    #[test]
    fn construction_canonicalizes_edges() {
        let g = Graph::from_edges(3, vec![(0, 1), (1, 0), (1, 1), (2, 1), (0, 1)]).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert!(!g.has_edge(0, 2));
    }

    #[test]
    fn out_of_range_node_is_rejected() {
        assert!(matches!(
            Graph::from_edges(2, vec![(0, 2)]),
            Err(GraphError::NodeOutOfRange { node: 2, .. })
        ));
        let g = path_graph(3);
        assert!(density(&g, &[0, 7]).is_err());
    }

    #[test]
    fn components_split_and_sort() {
        // Two components within the set {0,1,4,3}: {0,1} and {3,4}.
        let g = Graph::from_edges(6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)]).unwrap();
        let comps = connected_components(&g, &[4, 0, 3, 1]).unwrap();
        assert_eq!(comps, vec![vec![0, 1], vec![3, 4]]);

        let comps = connected_components(&g, &[5, 2, 0]).unwrap();
        assert_eq!(comps, vec![vec![0], vec![2], vec![5]]);
    }

    #[test]
    fn density_matches_hand_counts() {
        let g = path_graph(3);
        assert_eq!(density(&g, &[0, 1, 2]).unwrap(), 2.0 / 3.0);
        assert_eq!(density(&g, &[0]).unwrap(), 0.0);
        let k4 = complete_graph(4);
        assert_eq!(density(&k4, &[0, 1, 2, 3]).unwrap(), 1.0);
        // Duplicates in the set must not double-count.
        assert_eq!(density(&g, &[0, 1, 1, 0]).unwrap(), 1.0);
    }

    #[test]
    fn cut_ratio_matches_hand_counts() {
        let g = star_graph(4);
        assert_eq!(cut_ratio(&g, &[0]).unwrap(), 1.0);
        // {hub, one leaf}: 3 border edges, 2 * 3 cross pairs.
        assert_eq!(cut_ratio(&g, &[0, 1]).unwrap(), 0.5);
        assert!(matches!(
            cut_ratio(&g, &[0, 1, 2, 3, 4]),
            Err(GraphError::NoExterior)
        ));
    }

    #[test]
    fn core_numbers_match_peeling_oracle() {
        let k4 = complete_graph(4);
        assert_eq!(core_numbers(&k4), vec![3, 3, 3, 3]);
        let p5 = path_graph(5);
        assert_eq!(core_numbers(&p5), vec![1, 1, 1, 1, 1]);

        // K4 with a pendant: the pendant is 1-core, the clique stays 3-core.
        let mut edges = complete_graph(4).edges();
        edges.push((3, 4));
        let g = Graph::from_edges(5, edges).unwrap();
        assert_eq!(core_numbers(&g), vec![3, 3, 3, 3, 1]);

        for seed in 0..30u64 {
            let g = random_graph(seed, 12);
            assert_eq!(core_numbers(&g), core_oracle(&g), "seed {seed}");
        }
    }

    #[test]
    fn khop_excludes_the_set_and_respects_depth() {
        let g = path_graph(5);
        assert_eq!(khop_neighborhood(&g, &[2], 1).unwrap(), vec![1, 3]);
        assert_eq!(khop_neighborhood(&g, &[2], 2).unwrap(), vec![0, 1, 3, 4]);
        assert_eq!(
            khop_neighborhood(&g, &[0, 1, 2, 3, 4], 3).unwrap(),
            Vec::<u32>::new()
        );
        assert!(matches!(
            khop_neighborhood(&g, &[2], 0),
            Err(GraphError::ZeroHops)
        ));
    }

    #[test]
    fn avg_shortest_path_on_a_path_graph() {
        let g = path_graph(4);
        // Pairs (0,2)=2 and (0,3)=3.
        assert_eq!(avg_shortest_path(&g, &[0], &[2, 3]).unwrap(), 2.5);
        // Shared node contributes a zero-distance pair.
        assert_eq!(avg_shortest_path(&g, &[1], &[1]).unwrap(), 0.0);

        let split = Graph::from_edges(4, vec![(0, 1), (2, 3)]).unwrap();
        assert!(avg_shortest_path(&split, &[0], &[1, 3])
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn distance_index_agrees_with_pairwise_bfs() {
        let g = Graph::from_edges(7, vec![(0, 1), (1, 2), (2, 3), (4, 5)]).unwrap();
        let idx = DistanceIndex::from_sources(&g, &[0, 4]);
        assert_eq!(idx.distance(3), Some(3));
        assert_eq!(idx.distance(5), Some(1));
        assert_eq!(idx.distance(6), None);
        assert_eq!(idx.mean_distance(&[1, 5]), 1.0);
        assert!(idx.mean_distance(&[6]).is_infinite());
    }

    #[test]
    fn edge_list_round_trip() {
        let dir = std::env::temp_dir().join("subgnn-graph-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("edges.txt");
        let g = Graph::from_edges(5, vec![(0, 1), (3, 2), (1, 4)]).unwrap();
        g.save_edge_list(&path).unwrap();
        let back = Graph::load_edge_list(&path).unwrap();
        assert_eq!(g, back);

        std::fs::write(&path, "0 1\n1 junk\n").unwrap();
        let err = Graph::load_edge_list(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    /// Independent peeling oracle: for each k, repeatedly delete nodes of
    /// degree < k; survivors have core number >= k.
    fn core_oracle(g: &Graph) -> Vec<u32> {
        let n = g.num_nodes();
        let mut core = vec![0u32; n];
        let max_deg = (0..n).map(|v| g.degree(v as u32)).max().unwrap_or(0);
        for k in 1..=max_deg {
            let mut alive = vec![true; n];
            loop {
                let mut changed = false;
                for v in 0..n {
                    if !alive[v] {
                        continue;
                    }
                    let deg = g
                        .neighbors(v as u32)
                        .iter()
                        .filter(|&&w| alive[w as usize])
                        .count();
                    if deg < k {
                        alive[v] = false;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            for v in 0..n {
                if alive[v] {
                    core[v] = k as u32;
                }
            }
        }
        core
    }

    fn random_graph(seed: u64, max_n: usize) -> Graph {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=max_n);
        let p = rng.gen_range(0.1..0.6);
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                if rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        Graph::from_edges(n, edges).unwrap()
    }
}
