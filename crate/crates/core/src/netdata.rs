//! Binary network data: adjacency matrices, ingestion, density and
//! hop-count geodesics.

use std::collections::{HashMap, VecDeque};
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense n×n binary adjacency matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<u8>,
    directed: bool,
    labels: Option<Vec<String>>,
}

impl AdjacencyMatrix {
    /// An empty (edgeless) network on `n` nodes.
    pub fn empty(n: usize, directed: bool) -> Self {
        Self {
            n,
            entries: vec![0; n * n],
            directed,
            labels: None,
        }
    }

    /// Builds a matrix from row-major entries, validating binarity and the
    /// zero diagonal.
    pub fn from_dense(n: usize, entries: Vec<u8>, directed: bool) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::InvalidNetwork(format!(
                "expected {} entries for n = {n}, got {}",
                n * n,
                entries.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if v > 1 {
                    return Err(Error::InvalidNetwork(format!(
                        "entry ({i}, {j}) = {v} is not binary"
                    )));
                }
                if i == j && v != 0 {
                    return Err(Error::InvalidNetwork(format!("self-loop at node {i}")));
                }
                if !directed && v != entries[j * n + i] {
                    return Err(Error::InvalidNetwork(format!(
                        "undirected network is asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            entries,
            directed,
            labels: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.n + j]
    }

    /// Sets y_ij (and y_ji for undirected networks). Self-loops are refused.
    pub fn set(&mut self, i: usize, j: usize, value: bool) -> Result<()> {
        if i == j {
            return Err(Error::InvalidNetwork(format!("self-loop at node {i}")));
        }
        let v = u8::from(value);
        self.entries[i * self.n + j] = v;
        if !self.directed {
            self.entries[j * self.n + i] = v;
        }
        Ok(())
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    /// Node labels from a string-labelled edge list, in index order.
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn edge_count(&self) -> usize {
        self.entries.iter().map(|&v| v as usize).sum()
    }

    /// Writes the canonical on-disk form: n rows of n comma-separated 0/1
    /// values, no header.
    pub fn write_dense_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = String::with_capacity(2 * self.n);
        for i in 0..self.n {
            line.clear();
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push(if *v == 1 { '1' } else { '0' });
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Simultaneously permutes rows and columns: node `perm[i]` of the result
    /// is node `i` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut entries = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[perm[i] * n + perm[j]] = self.entries[i * n + j];
            }
        }
        Self {
            n,
            entries,
            directed: self.directed,
            labels: None,
        }
    }
}

/// On-disk network formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkFormat {
    /// n rows of n comma-separated 0/1 values.
    DenseCsv,
    /// One `src,dst[,weight]` pair per line, optional header.
    EdgeList,
}

impl NetworkFormat {
    /// Guesses the format from a file extension; `.csv` is dense, anything
    /// else an edge list.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => NetworkFormat::DenseCsv,
            _ => NetworkFormat::EdgeList,
        }
    }
}

/// Reads a network. `n` fixes the node count for integer edge lists (needed
/// when trailing nodes are isolated); it is ignored for dense input.
pub fn load_network<R: Read>(
    source: R,
    format: NetworkFormat,
    directed: bool,
    n: Option<usize>,
) -> Result<AdjacencyMatrix> {
    match format {
        NetworkFormat::DenseCsv => load_dense_csv(source, directed),
        NetworkFormat::EdgeList => load_edge_list(source, directed, n),
    }
}

fn load_dense_csv<R: Read>(source: R, directed: bool) -> Result<AdjacencyMatrix> {
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (lineno, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row = trimmed
            .split(',')
            .map(|tok| match tok.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::InvalidNetwork(format!(
                    "line {}: non-binary entry {other:?}",
                    lineno + 1
                ))),
            })
            .collect::<Result<Vec<u8>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(Error::InvalidNetwork("empty dense CSV".into()));
    }
    let mut entries = Vec::with_capacity(n * n);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidNetwork(format!(
                "ragged CSV: row {} has {} fields, expected {n}",
                i + 1,
                row.len()
            )));
        }
        entries.extend(row);
    }
    AdjacencyMatrix::from_dense(n, entries, directed)
}

const HEADER_NAMES: &[&str] = &["src", "source", "from", "i", "node1", "sender"];

fn load_edge_list<R: Read>(source: R, directed: bool, n: Option<usize>) -> Result<AdjacencyMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let mut pairs: Vec<(String, String, usize)> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let lineno = idx + 1;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0
            && record
                .get(0)
                .is_some_and(|f| HEADER_NAMES.contains(&f.to_ascii_lowercase().as_str()))
        {
            continue;
        }
        if record.len() < 2 || record.len() > 3 {
            return Err(Error::InvalidNetwork(format!(
                "line {lineno}: expected `src,dst[,weight]`, got {} fields",
                record.len()
            )));
        }
        if record.len() == 3 {
            match record[2].parse::<f64>() {
                Ok(w) if w == 1.0 => {}
                Ok(w) if w == 0.0 => continue,
                _ => {
                    return Err(Error::InvalidNetwork(format!(
                        "line {lineno}: non-binary weight {:?}",
                        &record[2]
                    )))
                }
            }
        }
        pairs.push((record[0].to_string(), record[1].to_string(), lineno));
    }

    let numeric = pairs
        .iter()
        .all(|(a, b, _)| a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok());

    let (node_count, indexed, labels): (usize, Vec<(usize, usize, usize)>, Option<Vec<String>>) =
        if numeric {
            let idx: Vec<_> = pairs
                .iter()
                .map(|(a, b, l)| (a.parse::<usize>().unwrap(), b.parse::<usize>().unwrap(), *l))
                .collect();
            let max_id = idx.iter().map(|&(a, b, _)| a.max(b) + 1).max().unwrap_or(0);
            let count = match n {
                Some(n) if n < max_id => {
                    return Err(Error::InvalidNetwork(format!(
                        "node id {} out of range for n = {n}",
                        max_id - 1
                    )))
                }
                Some(n) => n,
                None => max_id,
            };
            (count, idx, None)
        } else {
            let mut map: HashMap<String, usize> = HashMap::new();
            let mut names = Vec::new();
            let mut intern = |s: &str| -> usize {
                if let Some(&k) = map.get(s) {
                    return k;
                }
                let k = names.len();
                names.push(s.to_string());
                map.insert(s.to_string(), k);
                k
            };
            let idx: Vec<_> = pairs
                .iter()
                .map(|(a, b, l)| (intern(a), intern(b), *l))
                .collect();
            (names.len(), idx, Some(names))
        };

    if node_count == 0 {
        return Err(Error::InvalidNetwork(
            "edge list is empty and no node count was given".into(),
        ));
    }
    let mut y = AdjacencyMatrix::empty(node_count, directed);
    for (a, b, lineno) in indexed {
        if a == b {
            return Err(Error::InvalidNetwork(format!(
                "line {lineno}: self-loop at node {a}"
            )));
        }
        y.set(a, b, true)?;
    }
    y.labels = labels;
    Ok(y)
}

/// Fraction of present arcs among the n(n−1) ordered pairs.
pub fn density(y: &AdjacencyMatrix) -> Result<f64> {
    let n = y.n();
    if n < 2 {
        return Err(Error::InvalidNetwork(format!(
            "density undefined for n = {n}"
        )));
    }
    Ok(y.edge_count() as f64 / (n * (n - 1)) as f64)
}

/// Hop-count shortest paths on the symmetrized graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeodesicMatrix {
    n: usize,
    hops: Vec<u32>,
}

impl GeodesicMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.hops[i * self.n + j]
    }

    /// Distance assigned to unreachable pairs.
    pub fn unreachable_value(&self) -> u32 {
        self.n as u32
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j) as f64)
    }
}

/// BFS hop distances. An arc in either direction counts as an undirected
/// edge; unreachable pairs get distance n.
pub fn geodesic_distances(y: &AdjacencyMatrix) -> GeodesicMatrix {
    let n = y.n();
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && (y.get(i, j) == 1 || y.get(j, i) == 1))
                .collect()
        })
        .collect();
    let unreachable = n as u32;
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|src| {
            let mut dist = vec![u32::MAX; n];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &neighbours[u] {
                    if dist[v] == u32::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            dist.into_iter()
                .map(|d| if d == u32::MAX { unreachable } else { d })
                .collect()
        })
        .collect();
    GeodesicMatrix {
        n,
        hops: rows.into_iter().flatten().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edges(n: usize, list: &[(usize, usize)], directed: bool) -> AdjacencyMatrix {
        let mut y = AdjacencyMatrix::empty(n, directed);
        for &(a, b) in list {
            y.set(a, b, true).unwrap();
        }
        y
    }

    #[test]
    fn edge_list_two_arcs() {
        let y = load_network("0,1\n1,0\n".as_bytes(), NetworkFormat::EdgeList, true, Some(2))
            .unwrap();
        assert_eq!(y.entries(), &[0, 1, 1, 0]);
    }

    #[test]
    fn empty_edge_list_gives_zero_matrix() {
        let y = load_network("".as_bytes(), NetworkFormat::EdgeList, true, Some(3)).unwrap();
        assert_eq!(y.n(), 3);
        assert_eq!(y.edge_count(), 0);
    }

    #[test]
    fn dense_self_loop_rejected() {
        let err = load_network(
            "0,1,0\n0,1,0\n0,0,0\n".as_bytes(),
            NetworkFormat::DenseCsv,
            true,
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("self-loop"), "{err}");
    }

    #[test]
    fn ragged_and_non_binary_rejected() {
        assert!(load_network("0,1\n1\n".as_bytes(), NetworkFormat::DenseCsv, true, None).is_err());
        assert!(load_network("0,2\n1,0\n".as_bytes(), NetworkFormat::DenseCsv, true, None).is_err());
        assert!(load_network("0,1,0.5\n".as_bytes(), NetworkFormat::EdgeList, true, None).is_err());
        assert!(load_network("3,3\n".as_bytes(), NetworkFormat::EdgeList, true, None).is_err());
    }

    #[test]
    fn labelled_edge_list_with_header() {
        let src = "source,target\nalice,bob\nbob,carol\n";
        let y = load_network(src.as_bytes(), NetworkFormat::EdgeList, true, None).unwrap();
        assert_eq!(y.n(), 3);
        assert_eq!(y.labels().unwrap(), &["alice", "bob", "carol"]);
        assert_eq!(y.get(0, 1), 1);
        assert_eq!(y.get(1, 2), 1);
        assert_eq!(y.get(2, 1), 0);
    }

    #[test]
    fn undirected_edge_list_symmetrizes() {
        let y = load_network("0,1\n".as_bytes(), NetworkFormat::EdgeList, false, None).unwrap();
        assert_eq!(y.get(1, 0), 1);
    }

    #[test]
    fn density_cases() {
        let mut full = AdjacencyMatrix::empty(3, true);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    full.set(i, j, true).unwrap();
                }
            }
        }
        assert_eq!(density(&full).unwrap(), 1.0);
        assert_eq!(density(&AdjacencyMatrix::empty(4, true)).unwrap(), 0.0);
        assert!(density(&AdjacencyMatrix::empty(1, true)).is_err());
    }

    #[test]
    fn density_of_football_sized_network() {
        // 497 arcs among 55 nodes.
        let n = 55;
        let mut y = AdjacencyMatrix::empty(n, true);
        let mut placed = 0;
        'outer: for i in 0..n {
            for j in 0..n {
                if i != j {
                    y.set(i, j, true).unwrap();
                    placed += 1;
                    if placed == 497 {
                        break 'outer;
                    }
                }
            }
        }
        assert!((density(&y).unwrap() - 0.1673).abs() < 5e-5);
    }

    #[test]
    fn geodesic_path_and_disconnected() {
        let path = edges(3, &[(0, 1), (1, 2)], true);
        assert_eq!(geodesic_distances(&path).get(0, 2), 2);
        assert_eq!(geodesic_distances(&path).get(2, 0), 2);

        let split = edges(4, &[(0, 1), (2, 3)], true);
        let d = geodesic_distances(&split);
        assert_eq!(d.get(0, 2), 4);
        assert_eq!(d.get(0, 1), 1);
    }

    #[test]
    fn geodesic_star_leaves_are_two_apart() {
        let star = edges(5, &[(0, 1), (0, 2), (3, 0), (0, 4)], true);
        let d = geodesic_distances(&star);
        for a in 1..5 {
            for b in 1..5 {
                if a != b {
                    assert_eq!(d.get(a, b), 2);
                }
            }
            assert_eq!(d.get(0, a), 1);
        }
    }

    fn arb_network(max_n: usize) -> impl Strategy<Value = AdjacencyMatrix> {
        (2..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(proptest::bool::weighted(0.2), n * n).prop_map(move |bits| {
                let mut y = AdjacencyMatrix::empty(n, true);
                for i in 0..n {
                    for j in 0..n {
                        if i != j && bits[i * n + j] {
                            y.set(i, j, true).unwrap();
                        }
                    }
                }
                y
            })
        })
    }

    proptest! {
        #[test]
        fn geodesics_satisfy_triangle_inequality(y in arb_network(20)) {
            let d = geodesic_distances(&y);
            let n = y.n();
            let far = d.unreachable_value();
            for i in 0..n {
                prop_assert_eq!(d.get(i, i), 0);
                for j in 0..n {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                    for k in 0..n {
                        let (a, b, c) = (d.get(i, j), d.get(j, k), d.get(i, k));
                        if a != far && b != far {
                            prop_assert!(c <= a + b);
                        }
                    }
                }
            }
        }

        #[test]
        fn density_is_permutation_invariant(y in arb_network(12), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..y.n()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(density(&y).unwrap(), density(&y.permuted(&perm)).unwrap());
        }

        #[test]
        fn dense_csv_round_trip(y in arb_network(15)) {
            let mut buf = Vec::new();
            y.write_dense_csv(&mut buf).unwrap();
            let back = load_network(buf.as_slice(), NetworkFormat::DenseCsv, true, None).unwrap();
            prop_assert_eq!(back, y);
        }
    }
}
