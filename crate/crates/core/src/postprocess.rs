//! Posterior summaries across chains: Procrustes alignment of positions,
//! the posterior similarity matrix, the PEAR partition, label permutation of
//! component means, and modal estimates with credible intervals.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use kodama::{linkage, Method};
use log::warn;
use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{adjusted_rand_index, procrustes_correlation};
use crate::sampler::Sample;
use crate::simulate::PlantedTruth;

/// Number of distinct labels present.
pub fn count_nonempty(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Empirical quantile: the smallest sample value whose cumulative frequency
/// reaches `q`.
fn lower_quantile<T: Copy + PartialOrd>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Most frequent value (smallest on ties) and the 2.5% to 97.5% interval,
/// widened if needed so that it contains the mode.
pub fn posterior_mode_and_ci(samples: &[usize]) -> Result<(usize, (usize, usize))> {
    if samples.is_empty() {
        return Err(Error::Degenerate("no samples to summarize".into()));
    }
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in samples {
        *freq.entry(s).or_default() += 1;
    }
    let best = freq.values().copied().max().unwrap_or(0);
    let mode = *freq.iter().find(|(_, &c)| c == best).map(|(v, _)| v).unwrap_or(&samples[0]);
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let lo = lower_quantile(&sorted, 0.025).min(mode);
    let hi = lower_quantile(&sorted, 0.975).max(mode);
    Ok((mode, (lo, hi)))
}

/// Rigid transform x ↦ (x − from) R + to.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidTransform {
    pub from: RowDVector<f64>,
    pub rotation: DMatrix<f64>,
    pub to: RowDVector<f64>,
}

impl RigidTransform {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let x = pad_columns(x, self.rotation.nrows());
        let mut centred = x;
        for mut row in centred.row_iter_mut() {
            row -= &self.from;
        }
        let mut out = centred * &self.rotation;
        for mut row in out.row_iter_mut() {
            row += &self.to;
        }
        out
    }
}

/// Zero-pads or truncates to `cols` columns.
pub fn pad_columns(x: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols, |i, l| if l < x.ncols() { x[(i, l)] } else { 0.0 })
}

fn column_means(x: &DMatrix<f64>) -> RowDVector<f64> {
    RowDVector::from_fn(x.ncols(), |_, l| x.column(l).mean())
}

/// Translation plus rotation/reflection (no scaling) of `sample` that best
/// matches `reference` in Frobenius norm. The sample is padded or truncated
/// to the reference's column count.
pub fn procrustes_align(sample: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<(DMatrix<f64>, RigidTransform)> {
    if sample.nrows() != reference.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "sample has {} rows, reference {}",
            sample.nrows(),
            reference.nrows()
        )));
    }
    let p = reference.ncols();
    let x = pad_columns(sample, p);
    let from = column_means(&x);
    let to = column_means(reference);
    let mut xc = x.clone();
    let mut rc = reference.clone();
    for mut row in xc.row_iter_mut() {
        row -= &from;
    }
    for mut row in rc.row_iter_mut() {
        row -= &to;
    }
    let cross = xc.transpose() * &rc;
    let rotation = if cross.norm() <= 1e-300 {
        DMatrix::identity(p, p)
    } else {
        let svd = cross.svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(u), Some(vt)) => u * vt,
            _ => DMatrix::identity(p, p),
        }
    };
    let t = RigidTransform { from, rotation, to };
    Ok((t.apply(&x), t))
}

/// Co-clustering counts over a set of partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSimilarityMatrix {
    n: usize,
    samples: usize,
    counts: Vec<u32>,
}

impl PosteriorSimilarityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.count(i, j) as f64 / self.samples as f64
    }

    /// Combined matrix over the union of both sample sets.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch("similarity matrices of different size".into()));
        }
        Ok(Self {
            n: self.n,
            samples: self.samples + other.samples,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for i in 0..self.n {
            w.write_record((0..self.n).map(|j| format_float(self.get(i, j))))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fraction of partitions placing each pair of nodes together.
pub fn posterior_similarity(partitions: &[Vec<usize>]) -> Result<PosteriorSimilarityMatrix> {
    let n = partitions.first().map(|p| p.len()).ok_or_else(|| Error::Degenerate("no partitions".into()))?;
    let mut counts = vec![0u32; n * n];
    for part in partitions {
        if part.len() != n {
            return Err(Error::DimensionMismatch("partitions of different length".into()));
        }
        for i in 0..n {
            let row = &mut counts[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += (part[i] == part[j]) as u32;
            }
        }
    }
    Ok(PosteriorSimilarityMatrix {
        n,
        samples: partitions.len(),
        counts,
    })
}

/// Relabels to 0, 1, … in order of first appearance.
pub fn canonical_partition(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Mean ARI of `candidate` against every sampled partition.
pub fn expected_ari(candidate: &[usize], partitions: &[Vec<usize>]) -> Result<f64> {
    let mut acc = 0.0;
    for p in partitions {
        acc += adjusted_rand_index(candidate, p)?;
    }
    Ok(acc / partitions.len() as f64)
}

/// Cuts of the average-linkage tree on 1 − PSM at every number of clusters.
pub fn hierarchical_cuts(psm: &PosteriorSimilarityMatrix) -> Vec<Vec<usize>> {
    let n = psm.n();
    if n < 2 {
        return vec![vec![0; n]];
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            condensed.push(1.0 - psm.get(i, j));
        }
    }
    let dendrogram = linkage(&mut condensed, n, Method::Average);
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut cuts = vec![(0..n).collect::<Vec<usize>>()];
    for (k, step) in dendrogram.steps().iter().enumerate() {
        let new = n + k;
        let a = find(&mut parent, step.cluster1);
        let b = find(&mut parent, step.cluster2);
        parent[a] = new;
        parent[b] = new;
        let labels: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        cuts.push(canonical_partition(&labels));
    }
    cuts
}

#[derive(Debug, Clone, PartialEq)]
pub struct PearEstimate {
    /// Canonical 0-based labels.
    pub partition: Vec<usize>,
    pub expected_ari: f64,
}

/// The candidate partition with the highest posterior expected ARI, over the
/// distinct sampled partitions and all hierarchical cuts.
pub fn maximize_pear(psm: &PosteriorSimilarityMatrix, partitions: &[Vec<usize>]) -> Result<PearEstimate> {
    if partitions.is_empty() {
        return Err(Error::Degenerate("no partitions".into()));
    }
    let mut candidates: Vec<Vec<usize>> = partitions.iter().map(|p| canonical_partition(p)).collect();
    candidates.extend(hierarchical_cuts(psm));
    candidates.sort();
    candidates.dedup();
    let mut best: Option<PearEstimate> = None;
    for c in candidates {
        let v = expected_ari(&c, partitions)?;
        if best.as_ref().is_none_or(|b| v > b.expected_ari + 1e-12) {
            best = Some(PearEstimate {
                partition: c,
                expected_ari: v,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Minimum-cost assignment of each row to a distinct column (rows ≤
/// columns). Returns the column of each row.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = (cost.nrows(), cost.ncols());
    assert!(n <= m, "more rows than columns");
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

fn sq_dist_rows(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let p = a.ncols().max(b.ncols());
    (0..p)
        .map(|l| {
            let x = if l < a.ncols() { a[(i, l)] } else { 0.0 };
            let y = if l < b.ncols() { b[(j, l)] } else { 0.0 };
            (x - y) * (x - y)
        })
        .sum()
}

/// Label permutation of one sample: `perm[g]` is the new label of sample
/// component g. Non-empty components are matched to the reference's
/// non-empty components by minimum summed squared distance between means;
/// empty components take the remaining slots in order.
pub fn permute_cluster_labels(
    means: &DMatrix<f64>,
    labels: &[usize],
    reference_means: &DMatrix<f64>,
    reference_labels: &[usize],
) -> Vec<usize> {
    let g_total = means.nrows();
    let occupied = |labels: &[usize], g_total: usize| {
        let mut used = vec![false; g_total];
        labels.iter().for_each(|&c| used[c] = true);
        (0..g_total).filter(|&g| used[g]).collect::<Vec<usize>>()
    };
    let rows = occupied(labels, g_total);
    let cols = occupied(reference_labels, reference_means.nrows());
    let mut perm = vec![usize::MAX; g_total];
    let mut taken = vec![false; g_total.max(reference_means.nrows())];
    if rows.len() <= cols.len() {
        let cost = DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
            sq_dist_rows(means, rows[a], reference_means, cols[b])
        });
        for (a, b) in hungarian(&cost).into_iter().enumerate() {
            perm[rows[a]] = cols[b];
            taken[cols[b]] = true;
        }
    } else {
        warn!(
            "sample has {} occupied components but the reference only {}; matching greedily",
            rows.len(),
            cols.len()
        );
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for &r in &rows {
            for &c in &cols {
                pairs.push((sq_dist_rows(means, r, reference_means, c), r, c));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (_, r, c) in pairs {
            if perm[r] == usize::MAX && !taken[c] {
                perm[r] = c;
                taken[c] = true;
            }
        }
    }
    let mut free = (0..g_total).filter(|&g| !taken[g]);
    for g in 0..g_total {
        if perm[g] == usize::MAX {
            perm[g] = free.next().expect("as many slots as components");
        }
    }
    perm
}

/// Per-chain sampler diagnostics carried into the summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub chain: usize,
    pub samples: usize,
    pub z_acceptance: f64,
    pub alpha_acceptance: f64,
    pub position_step: f64,
    pub alpha_step: f64,
    pub reference_loglik: f64,
    pub adaptations: usize,
}

/// Samples of one chain together with its best burn-in positions.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub samples: Vec<Sample>,
    pub reference: DMatrix<f64>,
    pub reference_loglik: f64,
    pub diagnostics: ChainDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub values: Vec<usize>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn from_samples(samples: &[usize]) -> Self {
        let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
        samples.iter().for_each(|&s| *freq.entry(s).or_default() += 1);
        Self {
            values: freq.keys().copied().collect(),
            counts: freq.values().copied().collect(),
        }
    }

    /// Expands back into the sample multiset, in ascending order.
    pub fn expand(&self) -> Vec<usize> {
        self.values
            .iter()
            .zip(&self.counts)
            .flat_map(|(&v, &c)| std::iter::repeat_n(v, c))
            .collect()
    }

    pub fn write_csv(&self, path: &Path, name: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([name, "count"])?;
        for (v, c) in self.values.iter().zip(&self.counts) {
            w.write_record([v.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub nu: f64,
    pub chains: usize,
    pub samples: usize,
    pub p_mode: usize,
    pub p_interval: (usize, usize),
    pub g_mode: usize,
    pub g_interval: (usize, usize),
    pub p_histogram: Histogram,
    pub g_histogram: Histogram,
    /// PEAR partition, 1-based contiguous labels.
    pub pear_partition: Vec<usize>,
    pub pear_clusters: usize,
    pub pear_expected_ari: f64,
    /// Aligned posterior mean positions, leading p_m columns.
    pub positions: Vec<Vec<f64>>,
    /// Posterior mean of the relabeled component means, per occupied
    /// reference component.
    pub cluster_means: Vec<Vec<f64>>,
    pub ari: Option<f64>,
    pub pc: Option<f64>,
    pub diagnostics: Vec<ChainDiagnostics>,
}

impl PosteriorSummary {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn write_positions_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let p = self.positions.first().map_or(0, |r| r.len());
        let mut header = vec!["node".to_string()];
        header.extend((1..=p).map(|l| format!("z{l}")));
        w.write_record(&header)?;
        for (i, row) in self.positions.iter().enumerate() {
            let mut rec = vec![(i + 1).to_string()];
            rec.extend(row.iter().map(|&v| format_float(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fixed-precision float rendering shared by all CSV outputs.
pub fn format_float(v: f64) -> String {
    format!("{v:.6}")
}

/// Pools all chains and computes the posterior summary. With a planted
/// truth, ARI compares the PEAR partition with the true labels and PC the
/// aligned posterior mean positions with the true positions over the leading
/// min(p_m, p*) dimensions.
pub fn summarize(chains: &[ChainDraws], nu: f64, truth: Option<&PlantedTruth>) -> Result<(PosteriorSummary, PosteriorSimilarityMatrix)> {
    let pooled: Vec<&Sample> = chains.iter().flat_map(|c| c.samples.iter()).collect();
    if pooled.is_empty() {
        return Err(Error::Degenerate("no stored samples in any chain".into()));
    }
    let n = pooled[0].state.n();
    if pooled.iter().any(|s| s.state.n() != n) {
        return Err(Error::DimensionMismatch("samples disagree on the number of nodes".into()));
    }
    let ps: Vec<usize> = pooled.iter().map(|s| s.state.p()).collect();
    let gs: Vec<usize> = pooled.iter().map(|s| count_nonempty(&s.state.labels)).collect();
    let (p_mode, p_interval) = posterior_mode_and_ci(&ps)?;
    let (g_mode, g_interval) = posterior_mode_and_ci(&gs)?;

    let partitions: Vec<Vec<usize>> = pooled.iter().map(|s| s.state.labels.clone()).collect();
    let psm = posterior_similarity(&partitions)?;
    let pear = maximize_pear(&psm, &partitions)?;

    // Reference positions: best burn-in configuration over chains, cut to
    // the modal dimension and padded to the widest sample.
    let best = chains
        .iter()
        .filter(|c| c.reference.nrows() == n)
        .max_by(|a, b| a.reference_loglik.total_cmp(&b.reference_loglik))
        .ok_or_else(|| Error::DimensionMismatch("no chain reference matches the samples".into()))?;
    let width = ps.iter().copied().max().unwrap_or(1).max(p_mode);
    let reference = pad_columns(&pad_columns(&best.reference, p_mode.min(best.reference.ncols())), width);

    let mut mean_z = DMatrix::zeros(n, width);
    let mut transforms = Vec::with_capacity(pooled.len());
    for s in &pooled {
        let (aligned, t) = procrustes_align(&s.state.z, &reference)?;
        mean_z += aligned;
        transforms.push(t);
    }
    mean_z /= pooled.len() as f64;

    // Label permutation against the sample closest to the PEAR partition.
    let mut closest = 0;
    let mut closest_ari = f64::NEG_INFINITY;
    for (k, part) in partitions.iter().enumerate() {
        let a = adjusted_rand_index(part, &pear.partition)?;
        if a > closest_ari {
            closest_ari = a;
            closest = k;
        }
    }
    let ref_means = transforms[closest].apply(&pooled[closest].state.mu);
    let ref_labels = &pooled[closest].state.labels;
    let ref_slots: Vec<usize> = {
        let mut v = ref_labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut sums = vec![vec![0.0; width]; ref_slots.len()];
    let mut hits = vec![0usize; ref_slots.len()];
    for (s, t) in pooled.iter().zip(&transforms) {
        let means = t.apply(&s.state.mu);
        let perm = permute_cluster_labels(&means, &s.state.labels, &ref_means, ref_labels);
        let occupied = {
            let mut v = s.state.labels.clone();
            v.sort_unstable();
            v.dedup();
            v
        };
        for g in occupied {
            if let Ok(slot) = ref_slots.binary_search(&perm[g]) {
                hits[slot] += 1;
                for l in 0..width {
                    sums[slot][l] += means[(g, l)];
                }
            }
        }
    }
    let cluster_means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&hits)
        .map(|(s, &h)| s.iter().take(p_mode).map(|v| v / h.max(1) as f64).collect())
        .collect();

    let positions_full = mean_z.columns(0, p_mode.min(width)).into_owned();
    let (ari, pc) = match truth {
        Some(t) => {
            if t.labels.len() != n {
                return Err(Error::DimensionMismatch("truth and samples disagree on n".into()));
            }
            let ari = adjusted_rand_index(&pear.partition, &t.labels)?;
            let tz = t.z_matrix();
            let k = p_mode.min(tz.ncols()).max(1);
            let pc = procrustes_correlation(
                &pad_columns(&positions_full, k),
                &tz.columns(0, k).into_owned(),
            )?;
            (Some(ari), Some(pc))
        }
        None => (None, None),
    };

    let summary = PosteriorSummary {
        nu,
        chains: chains.len(),
        samples: pooled.len(),
        p_mode,
        p_interval,
        g_mode,
        g_interval,
        p_histogram: Histogram::from_samples(&ps),
        g_histogram: Histogram::from_samples(&gs),
        pear_clusters: count_nonempty(&pear.partition),
        pear_partition: pear.partition.iter().map(|c| c + 1).collect(),
        pear_expected_ari: pear.expected_ari,
        positions: positions_full.row_iter().map(|r| r.iter().copied().collect()).collect(),
        cluster_means,
        ari,
        pc,
        diagnostics: chains.iter().map(|c| c.diagnostics.clone()).collect(),
    };
    Ok((summary, psm))
}
