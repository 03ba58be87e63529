//! The pair-stream model: events, the exact frequency oracle, the implicit
//! matrix `a_ij = f_ij/m − f_i·f_j/m²` it defines, and seeded generators.
//!
//! Indices are 1-based throughout: a stream over `[n]` carries pairs with
//! `1 ≤ i, j ≤ n`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::hadamard::{ExplicitMatrix, HadamardFunction};
use crate::hashing::{derive_seed, mix64, unit_open, BitHash};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StreamEvent {
    pub i: usize,
    pub j: usize,
}

impl StreamEvent {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.i == 0 || self.j == 0 || self.i > n || self.j > n {
            return Err(Error::OutOfRange { i: self.i, j: self.j, n });
        }
        Ok(())
    }
}

/// Exact frequencies `f_i`, `f_j`, `f_ij` and `m` of a pair stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactHistogram {
    n: usize,
    m: u64,
    f_row: Vec<u64>,
    f_col: Vec<u64>,
    f_joint: BTreeMap<(usize, usize), u64>,
}

impl ExactHistogram {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("stream domain needs n >= 1"));
        }
        Ok(Self { n, m: 0, f_row: vec![0; n], f_col: vec![0; n], f_joint: BTreeMap::new() })
    }

    pub fn from_events(n: usize, events: &[StreamEvent]) -> Result<Self> {
        let mut h = Self::new(n)?;
        for &e in events {
            h.ingest(e)?;
        }
        Ok(h)
    }

    pub fn ingest(&mut self, e: StreamEvent) -> Result<()> {
        self.ingest_weighted(e, 1)
    }

    pub fn ingest_weighted(&mut self, e: StreamEvent, count: u64) -> Result<()> {
        e.check(self.n)?;
        self.m += count;
        self.f_row[e.i - 1] += count;
        self.f_col[e.j - 1] += count;
        *self.f_joint.entry((e.i, e.j)).or_insert(0) += count;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn row_count(&self, i: usize) -> u64 {
        self.f_row[i - 1]
    }

    pub fn col_count(&self, j: usize) -> u64 {
        self.f_col[j - 1]
    }

    pub fn joint_count(&self, i: usize, j: usize) -> u64 {
        self.f_joint.get(&(i, j)).copied().unwrap_or(0)
    }

    /// Non-zero `f_ij` in `(i, j)` order.
    pub fn joint(&self) -> impl Iterator<Item = ((usize, usize), u64)> + '_ {
        self.f_joint.iter().map(|(&k, &v)| (k, v))
    }

    /// Checks the marginal-consistency invariants.
    pub fn is_consistent(&self) -> bool {
        let rows: u64 = self.f_row.iter().sum();
        let cols: u64 = self.f_col.iter().sum();
        let joint: u64 = self.f_joint.values().sum();
        rows == self.m
            && cols == self.m
            && joint == self.m
            && self.f_joint.iter().all(|(&(i, j), &c)| self.f_row[i - 1] >= c && self.f_col[j - 1] >= c)
    }

    pub fn view(&self) -> Result<ImplicitMatrixView<'_>> {
        if self.m == 0 {
            return Err(Error::EmptyStream);
        }
        Ok(ImplicitMatrixView { hist: self })
    }

    /// `Σ_{i,j} g(f_ij/m − f_i·f_j/m²)` over all `n²` cells.
    pub fn exact_distance(&self, g: HadamardFunction) -> Result<f64> {
        let view = self.view()?;
        Ok(view.row_weights_where(g, |_| true).into_iter().sum())
    }

    /// Bytes held by the oracle's counters.
    pub fn space_bytes(&self) -> usize {
        8 * (2 * self.n + 1) + self.f_joint.len() * (2 * std::mem::size_of::<usize>() + 8)
    }
}

/// Read-only accessor for the implicit matrix of a non-empty histogram.
#[derive(Debug, Clone, Copy)]
pub struct ImplicitMatrixView<'a> {
    hist: &'a ExactHistogram,
}

impl<'a> ImplicitMatrixView<'a> {
    pub fn n(&self) -> usize {
        self.hist.n
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> f64 {
        let m = self.hist.m as f64;
        let fij = self.hist.joint_count(i, j) as f64;
        let fi = self.hist.f_row[i - 1] as f64;
        let fj = self.hist.f_col[j - 1] as f64;
        fij / m - fi * fj / (m * m)
    }

    /// Per-row `Σ_j g(a_ij)` for rows selected by `keep`, zero elsewhere.
    fn row_weights_where(&self, g: HadamardFunction, keep: impl Fn(usize) -> bool) -> Vec<f64> {
        let n = self.hist.n;
        let m = self.hist.m as f64;
        let mut weights = vec![0.0; n];
        let mut dense = vec![0u64; n];
        let mut joint = self.hist.f_joint.iter().peekable();
        for i in 1..=n {
            let mut touched = Vec::new();
            while let Some((&(ri, rj), &c)) = joint.peek() {
                if ri != i {
                    break;
                }
                dense[rj - 1] = c;
                touched.push(rj - 1);
                joint.next();
            }
            if keep(i) {
                let fi = self.hist.f_row[i - 1] as f64;
                weights[i - 1] =
                    (0..n).map(|j| g.eval(dense[j] as f64 / m - fi * self.hist.f_col[j] as f64 / (m * m))).sum();
            }
            for j in touched {
                dense[j] = 0;
            }
        }
        weights
    }

    pub fn row_weights(&self, g: HadamardFunction) -> Vec<f64> {
        self.row_weights_where(g, |_| true)
    }

    /// `Σ_{i: H(i)=1} Σ_j g(a_ij)`, the exact value BA2 approximates.
    pub fn masked_cell_weight(&self, g: HadamardFunction, mask: &BitHash) -> Result<f64> {
        if mask.n() != self.hist.n {
            return Err(Error::domain(format!("mask over [{}] on stream over [{}]", mask.n(), self.hist.n)));
        }
        Ok(self.row_weights_where(g, |i| mask.admits(i)).into_iter().sum())
    }

    /// Dense reconstruction of the implicit matrix.
    pub fn to_explicit(&self) -> ExplicitMatrix {
        let n = self.hist.n;
        let m = self.hist.m as f64;
        let mut a = ExplicitMatrix::zeros(n);
        for i in 1..=n {
            let fi = self.hist.f_row[i - 1] as f64;
            for (j, x) in a.row_mut(i).iter_mut().enumerate() {
                *x = -fi * self.hist.f_col[j] as f64 / (m * m);
            }
        }
        for (&(i, j), &c) in &self.hist.f_joint {
            let fi = self.hist.f_row[i - 1] as f64;
            a.set(i, j, c as f64 / m - fi * self.hist.f_col[j - 1] as f64 / (m * m));
        }
        a
    }
}

/// A batch of events aggregated to distinct pairs, grouped by row.
///
/// All sketches are linear in the pair counts, so ingesting a batch is
/// equivalent to ingesting its events one by one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairCounts {
    /// Distinct columns with their counts, ascending.
    pub(crate) cols: Vec<(usize, u64)>,
    /// `(row, row count, range into entries)`, ascending by row.
    pub(crate) rows: Vec<RowGroup>,
    /// `(index into cols, count)`.
    pub(crate) entries: Vec<(u32, u64)>,
    pub(crate) total: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RowGroup {
    pub row: usize,
    pub count: u64,
    pub start: usize,
    pub end: usize,
}

impl PairCounts {
    pub fn from_events(n: usize, events: &[StreamEvent]) -> Result<Self> {
        let mut counts: HashMap<StreamEvent, u64> = HashMap::new();
        for &e in events {
            e.check(n)?;
            *counts.entry(e).or_insert(0) += 1;
        }
        Ok(Self::from_counts(counts))
    }

    pub fn from_weighted(n: usize, pairs: &[(StreamEvent, u64)]) -> Result<Self> {
        let mut counts: HashMap<StreamEvent, u64> = HashMap::new();
        for &(e, c) in pairs {
            e.check(n)?;
            if c > 0 {
                *counts.entry(e).or_insert(0) += c;
            }
        }
        Ok(Self::from_counts(counts))
    }

    pub fn from_histogram(h: &ExactHistogram) -> Self {
        Self::from_sorted(h.joint().map(|((i, j), c)| (StreamEvent::new(i, j), c)).collect())
    }

    fn from_counts(counts: HashMap<StreamEvent, u64>) -> Self {
        let mut pairs: Vec<_> = counts.into_iter().collect();
        pairs.sort_unstable();
        Self::from_sorted(pairs)
    }

    fn from_sorted(pairs: Vec<(StreamEvent, u64)>) -> Self {
        let mut col_totals: BTreeMap<usize, u64> = BTreeMap::new();
        for (e, c) in &pairs {
            *col_totals.entry(e.j).or_insert(0) += c;
        }
        let cols: Vec<(usize, u64)> = col_totals.into_iter().collect();
        let col_index: HashMap<usize, u32> = cols.iter().enumerate().map(|(k, &(j, _))| (j, k as u32)).collect();
        let mut rows: Vec<RowGroup> = Vec::new();
        let mut entries = Vec::with_capacity(pairs.len());
        let mut total = 0;
        for (e, c) in pairs {
            total += c;
            match rows.last_mut() {
                Some(g) if g.row == e.i => {
                    g.count += c;
                    g.end += 1;
                }
                _ => rows.push(RowGroup { row: e.i, count: c, start: entries.len(), end: entries.len() + 1 }),
            }
            entries.push((col_index[&e.j], c));
        }
        Self { cols, rows, entries, total }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn distinct_pairs(&self) -> usize {
        self.entries.len()
    }

    /// Expands back to `(event, count)` pairs in `(i, j)` order.
    pub fn pairs(&self) -> impl Iterator<Item = (StreamEvent, u64)> + '_ {
        self.rows.iter().flat_map(move |g| {
            self.entries[g.start..g.end]
                .iter()
                .map(move |&(col, c)| (StreamEvent::new(g.row, self.cols[col as usize].0), c))
        })
    }
}

/// Stream families for experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    /// `i` and `j` drawn independently and uniformly from `[n]`.
    Independent,
    /// `i` uniform, `j = i`.
    PerfectDependence,
    /// With probability `weights[k]` the event is `(r_k, r_k)` for planted row
    /// `r_k`; otherwise `i` and `j` are independent and uniform over the
    /// remaining rows. Planted rows come from [`planted_rows`].
    PlantedRows { weights: Vec<f64> },
    /// Dependent (`j = i`) with probability `λ`, independent otherwise.
    Mixture { lambda: f64 },
}

impl GeneratorMode {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            GeneratorMode::Mixture { lambda } if !(0.0..=1.0).contains(lambda) => {
                Err(Error::domain(format!("mixture weight must lie in [0, 1], got {lambda}")))
            }
            GeneratorMode::PlantedRows { weights } => {
                let total: f64 = weights.iter().sum();
                if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || total > 1.0 + 1e-12 {
                    return Err(Error::domain("planted weights must be non-negative and sum to at most 1"));
                }
                if weights.len() > n {
                    return Err(Error::domain(format!("{} planted rows exceed n = {n}", weights.len())));
                }
                if weights.len() == n && total < 1.0 - 1e-12 {
                    return Err(Error::domain("no background rows left for the unplanted mass"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            GeneratorMode::Independent => "independent".into(),
            GeneratorMode::PerfectDependence => "perfect-dependence".into(),
            GeneratorMode::PlantedRows { weights } => format!("planted-rows{weights:?}"),
            GeneratorMode::Mixture { lambda } => format!("mixture({lambda})"),
        }
    }
}

/// Distinct planted rows for `count` planted weights, chosen from the seed.
pub fn planted_rows(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rows = Vec::with_capacity(count);
    let mut t = 0u64;
    while rows.len() < count.min(n) {
        let r = uniform_index(mix64(derive_seed(seed, 0x504c_414e) ^ t), n);
        if !rows.contains(&r) {
            rows.push(r);
        }
        t += 1;
    }
    rows
}

#[inline]
fn uniform_index(h: u64, n: usize) -> usize {
    ((h as u128 * n as u128) >> 64) as usize + 1
}

/// Counter-based generator: event `k` depends only on `(seed, k)`, through
/// three lanes `derive_seed(seed, k)` mixed with lane tags 1, 2 and 3.
pub struct StreamGenerator {
    mode: GeneratorMode,
    n: usize,
    seed: u64,
    planted: Vec<usize>,
    background: Vec<usize>,
    cumulative: Vec<f64>,
}

impl StreamGenerator {
    pub fn new(mode: GeneratorMode, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("stream domain needs n >= 1"));
        }
        mode.validate(n)?;
        let (planted, background, cumulative) = match &mode {
            GeneratorMode::PlantedRows { weights } => {
                let planted = planted_rows(n, weights.len(), seed);
                let background = (1..=n).filter(|r| !planted.contains(r)).collect();
                let cumulative = weights
                    .iter()
                    .scan(0.0, |acc, w| {
                        *acc += w;
                        Some(*acc)
                    })
                    .collect();
                (planted, background, cumulative)
            }
            _ => (Vec::new(), Vec::new(), Vec::new()),
        };
        Ok(Self { mode, n, seed, planted, background, cumulative })
    }

    pub fn planted(&self) -> &[usize] {
        &self.planted
    }

    pub fn event(&self, k: u64) -> StreamEvent {
        let base = derive_seed(self.seed, k);
        let lane = |t: u64| mix64(base ^ t.wrapping_mul(0xd6e8_feb8_6659_fd93));
        let n = self.n;
        match &self.mode {
            GeneratorMode::Independent => StreamEvent::new(uniform_index(lane(1), n), uniform_index(lane(2), n)),
            GeneratorMode::PerfectDependence => {
                let i = uniform_index(lane(1), n);
                StreamEvent::new(i, i)
            }
            GeneratorMode::Mixture { lambda } => {
                let i = uniform_index(lane(1), n);
                if unit_open(lane(3)) < *lambda {
                    StreamEvent::new(i, i)
                } else {
                    StreamEvent::new(i, uniform_index(lane(2), n))
                }
            }
            GeneratorMode::PlantedRows { .. } => {
                let u = unit_open(lane(3));
                if let Some(k) = self.cumulative.iter().position(|&c| u < c) {
                    let r = self.planted[k];
                    StreamEvent::new(r, r)
                } else {
                    let b = &self.background;
                    StreamEvent::new(b[uniform_index(lane(1), b.len()) - 1], b[uniform_index(lane(2), b.len()) - 1])
                }
            }
        }
    }

    pub fn events(&self, m: usize) -> impl Iterator<Item = StreamEvent> + '_ {
        (0..m as u64).map(move |k| self.event(k))
    }
}

/// `m` events of the given family over `[n]`, deterministic per seed.
pub fn generate(mode: &GeneratorMode, n: usize, m: usize, seed: u64) -> Result<Vec<StreamEvent>> {
    if m == 0 {
        return Err(Error::domain("stream length must be >= 1"));
    }
    let g = StreamGenerator::new(mode.clone(), n, seed)?;
    Ok(g.events(m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(pairs: &[(usize, usize)]) -> Vec<StreamEvent> {
        pairs.iter().map(|&(i, j)| StreamEvent::new(i, j)).collect()
    }

    #[test]
    fn ingest_updates_counters() {
        let mut h = ExactHistogram::new(3).unwrap();
        h.ingest(StreamEvent::new(1, 1)).unwrap();
        assert_eq!(h.m(), 1);
        assert_eq!((h.row_count(1), h.row_count(2)), (1, 0));
        assert_eq!(h.joint_count(1, 1), 1);

        let mut h = ExactHistogram::new(3).unwrap();
        h.ingest(StreamEvent::new(2, 3)).unwrap();
        h.ingest(StreamEvent::new(2, 3)).unwrap();
        assert_eq!((h.joint_count(2, 3), h.m()), (2, 2));

        assert_eq!(h.ingest(StreamEvent::new(0, 1)), Err(Error::OutOfRange { i: 0, j: 1, n: 3 }));
        assert!(h.ingest(StreamEvent::new(1, 4)).is_err());
        assert_eq!(h.m(), 2);
    }

    #[test]
    fn hand_checked_distances() {
        let abs = HadamardFunction::AbsValue;
        let indep = ExactHistogram::from_events(2, &ev(&[(1, 1), (1, 2), (2, 1), (2, 2)])).unwrap();
        assert!(indep.exact_distance(abs).unwrap().abs() < 1e-12);
        let diag = ExactHistogram::from_events(2, &ev(&[(1, 1), (2, 2)])).unwrap();
        assert!((diag.exact_distance(abs).unwrap() - 1.0).abs() < 1e-12);
        let point = ExactHistogram::from_events(2, &[StreamEvent::new(1, 1); 7]).unwrap();
        assert!(point.exact_distance(abs).unwrap().abs() < 1e-12);
        assert_eq!(ExactHistogram::new(2).unwrap().exact_distance(abs), Err(Error::EmptyStream));
    }

    #[test]
    fn masked_weights_on_diagonal_stream() {
        let abs = HadamardFunction::AbsValue;
        let h = ExactHistogram::from_events(2, &ev(&[(1, 1), (2, 2)])).unwrap();
        let view = h.view().unwrap();
        let dense = view.to_explicit();
        for bits in 0..4u8 {
            let mask = BitHash::from_bits(vec![bits & 1 == 1, bits & 2 == 2]).unwrap();
            let brute: f64 = (1..=2)
                .filter(|&i| mask.admits(i))
                .flat_map(|i| (1..=2).map(move |j| (i, j)))
                .map(|(i, j)| dense.get(i, j).abs())
                .sum();
            assert!((view.masked_cell_weight(abs, &mask).unwrap() - brute).abs() < 1e-15);
        }
        assert_eq!(view.masked_cell_weight(abs, &BitHash::zeros(2)).unwrap(), 0.0);
        assert_eq!(view.masked_cell_weight(abs, &BitHash::ones(2)).unwrap(), h.exact_distance(abs).unwrap());
        assert!(view.masked_cell_weight(abs, &BitHash::ones(3)).is_err());
    }

    #[test]
    fn perfect_dependence_is_diagonal() {
        let events = generate(&GeneratorMode::PerfectDependence, 4, 100, 1).unwrap();
        assert!(events.iter().all(|e| e.i == e.j));
        assert!(events.iter().all(|e| (1..=4).contains(&e.i)));
    }

    #[test]
    fn generators_are_deterministic_and_positional() {
        let mode = GeneratorMode::Mixture { lambda: 0.3 };
        let a = generate(&mode, 16, 500, 9).unwrap();
        assert_eq!(a, generate(&mode, 16, 500, 9).unwrap());
        assert_ne!(a, generate(&mode, 16, 500, 10).unwrap());
        let g = StreamGenerator::new(mode, 16, 9).unwrap();
        assert_eq!(g.event(321), a[321]);
    }

    #[test]
    fn degenerate_mixture_is_independent() {
        let a = generate(&GeneratorMode::Mixture { lambda: 0.0 }, 16, 300, 4).unwrap();
        let b = generate(&GeneratorMode::Independent, 16, 300, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generator_validation() {
        assert!(generate(&GeneratorMode::Mixture { lambda: 1.5 }, 4, 10, 1).is_err());
        assert!(generate(&GeneratorMode::Independent, 4, 0, 1).is_err());
        assert!(generate(&GeneratorMode::PlantedRows { weights: vec![0.7, 0.6] }, 4, 10, 1).is_err());
        assert!(generate(&GeneratorMode::PlantedRows { weights: vec![0.5] }, 1, 10, 1).is_err());
    }

    #[test]
    fn planted_rows_dominate() {
        let mode = GeneratorMode::PlantedRows { weights: vec![0.25, 0.15, 0.10] };
        let g = StreamGenerator::new(mode, 16, 3).unwrap();
        let planted = g.planted().to_vec();
        assert_eq!(planted.len(), 3);
        let h = ExactHistogram::from_events(16, &g.events(20_000).collect::<Vec<_>>()).unwrap();
        let w = h.view().unwrap().row_weights(HadamardFunction::AbsValue);
        let heavy = crate::hadamard::WeightVector(w).alpha_heavy(0.1);
        assert_eq!(heavy.len(), 3);
        assert!(planted.iter().all(|r| heavy.contains(r)));
    }

    #[test]
    fn pair_counts_aggregate() {
        let events = ev(&[(2, 1), (1, 3), (2, 1), (1, 1)]);
        let pc = PairCounts::from_events(3, &events).unwrap();
        assert_eq!(pc.total(), 4);
        assert_eq!(pc.distinct_pairs(), 3);
        let pairs: Vec<_> = pc.pairs().collect();
        assert_eq!(pairs, vec![(StreamEvent::new(1, 1), 1), (StreamEvent::new(1, 3), 1), (StreamEvent::new(2, 1), 2)]);
        assert!(PairCounts::from_events(2, &events).is_err());
        let h = ExactHistogram::from_events(3, &events).unwrap();
        assert_eq!(PairCounts::from_histogram(&h), pc);
    }
}
