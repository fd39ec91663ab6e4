//! Datasets and client partitioning.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Labelled samples with features stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_dim: usize,
    n_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(feature_dim: usize, n_classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != feature_dim * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: feature_dim * labels.len(),
                found: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes.max(1)) {
            return Err(Error::param("labels", format!("label {bad} >= n_classes {n_classes}")));
        }
        Ok(Dataset {
            feature_dim,
            n_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn y(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.x(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            feature_dim: self.feature_dim,
            n_classes: self.n_classes,
            features,
            labels,
        }
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Shuffle and split off the last `test_fraction` of samples.
    pub fn split<R: Rng + ?Sized>(&self, test_fraction: f64, rng: &mut R) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::param("test_fraction", format!("{test_fraction} outside [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (train, test) = idx.split_at(self.len() - n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

/// One client's local data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub data: Dataset,
}

impl ClientDataset {
    /// Single featureless sample; used by models whose local objective is
    /// fully determined by the client id (quadratic testbeds).
    pub fn marker(client_id: usize) -> Self {
        ClientDataset {
            client_id,
            data: Dataset {
                feature_dim: 0,
                n_classes: 1,
                features: Vec::new(),
                labels: vec![0],
            },
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Gaussian class clusters with unit covariance. Class means sit at distance
/// `class_separation` apart (two classes) or on a sphere of radius
/// `class_separation / 2` (more classes).
pub fn make_synthetic_classification<R: Rng + ?Sized>(
    n_samples: usize,
    feature_dim: usize,
    n_classes: usize,
    class_separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n_samples == 0 || feature_dim == 0 || n_classes < 2 {
        return Err(Error::param(
            "synthetic",
            "need n_samples >= 1, feature_dim >= 1, n_classes >= 2",
        ));
    }
    if !(class_separation >= 0.0) {
        return Err(Error::param("class_separation", "must be non-negative"));
    }
    let random_unit = |rng: &mut R| {
        let v: Vec<f64> = (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        v.into_iter().map(|x| x / norm).collect::<Vec<f64>>()
    };
    let half = 0.5 * class_separation;
    let means: Vec<Vec<f64>> = if n_classes == 2 {
        let u = random_unit(rng);
        vec![u.iter().map(|x| -half * x).collect(), u.iter().map(|x| half * x).collect()]
    } else {
        (0..n_classes)
            .map(|_| random_unit(rng).into_iter().map(|x| half * x).collect())
            .collect()
    };

    let mut labels: Vec<usize> = (0..n_samples).map(|i| i % n_classes).collect();
    labels.shuffle(rng);
    let mut features = Vec::with_capacity(n_samples * feature_dim);
    for &y in &labels {
        for mu in &means[y] {
            let z: f64 = rng.sample(StandardNormal);
            features.push(mu + z);
        }
    }
    Dataset::new(feature_dim, n_classes, features, labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionKind {
    Iid,
    /// Per-class client proportions drawn from `Dirichlet(beta * 1_N)`.
    Dirichlet(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionSpec {
    pub kind: PartitionKind,
    pub n_clients: usize,
}

const MAX_DIRICHLET_ATTEMPTS: usize = 100;

/// Assign every sample to exactly one of `spec.n_clients` non-empty clients.
pub fn partition<R: Rng + ?Sized>(
    dataset: &Dataset,
    spec: &PartitionSpec,
    rng: &mut R,
) -> Result<Vec<ClientDataset>> {
    let n = spec.n_clients;
    if n == 0 {
        return Err(Error::param("n_clients", "must be at least 1"));
    }
    if n > dataset.len() {
        return Err(Error::InfeasiblePartition(format!(
            "{n} clients but only {} samples",
            dataset.len()
        )));
    }
    let assignment = match spec.kind {
        PartitionKind::Iid => {
            let mut idx: Vec<usize> = (0..dataset.len()).collect();
            idx.shuffle(rng);
            let mut buckets = vec![Vec::new(); n];
            for (pos, i) in idx.into_iter().enumerate() {
                buckets[pos % n].push(i);
            }
            buckets
        }
        PartitionKind::Dirichlet(beta) => {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::param("concentration", format!("{beta} must be positive")));
            }
            dirichlet_assignment(dataset, n, beta, rng)?
        }
    };
    Ok(assignment
        .into_iter()
        .enumerate()
        .map(|(client_id, idx)| ClientDataset {
            client_id,
            data: dataset.subset(&idx),
        })
        .collect())
}

fn dirichlet_assignment<R: Rng + ?Sized>(
    dataset: &Dataset,
    n_clients: usize,
    beta: f64,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    let gamma = Gamma::new(beta, 1.0).map_err(|e| Error::param("concentration", e.to_string()))?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes()];
    for i in 0..dataset.len() {
        by_class[dataset.y(i)].push(i);
    }
    for _ in 0..MAX_DIRICHLET_ATTEMPTS {
        let mut buckets = vec![Vec::new(); n_clients];
        for members in &by_class {
            if members.is_empty() {
                continue;
            }
            let props = dirichlet_proportions(&gamma, n_clients, rng);
            let counts = largest_remainder(members.len(), &props);
            let mut shuffled = members.clone();
            shuffled.shuffle(rng);
            let mut start = 0;
            for (bucket, &count) in buckets.iter_mut().zip(&counts) {
                bucket.extend_from_slice(&shuffled[start..start + count]);
                start += count;
            }
        }
        if buckets.iter().all(|b| !b.is_empty()) {
            return Ok(buckets);
        }
    }
    Err(Error::InfeasiblePartition(format!(
        "no Dirichlet({beta}) draw left every one of {n_clients} clients non-empty after \
         {MAX_DIRICHLET_ATTEMPTS} attempts"
    )))
}

/// One Dirichlet draw via normalized Gammas. Retries the (underflow) case
/// where every Gamma draw is zero.
pub(crate) fn dirichlet_proportions<R: Rng + ?Sized>(gamma: &Gamma<f64>, n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 && total.is_finite() {
            return g.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Integer counts summing to `total` that best match `total * props`.
pub(crate) fn largest_remainder(total: usize, props: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Read a numeric CSV with a header row. Every column except `label_column`
/// is a feature; labels must be non-negative integers.
pub fn load_csv_dataset(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::NoRows(path.to_path_buf()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let feature_dim = headers.len() - 1;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        for (col, cell) in record.iter().enumerate() {
            let column = headers.get(col).unwrap_or("?").to_string();
            if col == label_idx {
                let y: usize = cell.parse().map_err(|_| Error::CsvCell {
                    row,
                    column,
                    message: format!("label {cell:?} is not a non-negative integer"),
                })?;
                labels.push(y);
            } else {
                let x: f64 = cell.parse().map_err(|_| Error::CsvCell {
                    row,
                    column,
                    message: format!("{cell:?} is not a number"),
                })?;
                features.push(x);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::NoRows(path.to_path_buf()));
    }
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(feature_dim, n_classes, features, labels)
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;
    use crate::rng::seeded;

    fn label_multiset(parts: &[ClientDataset]) -> Vec<Vec<u64>> {
        let mut rows: Vec<Vec<u64>> = parts
            .iter()
            .flat_map(|c| (0..c.len()).map(move |i| {
                let mut r: Vec<u64> = c.data.x(i).iter().map(|v| v.to_bits()).collect();
                r.push(c.data.y(i) as u64);
                r
            }))
            .collect();
        rows.sort();
        rows
    }

    fn all_rows(d: &Dataset) -> Vec<Vec<u64>> {
        let mut rows: Vec<Vec<u64>> = (0..d.len())
            .map(|i| {
                let mut r: Vec<u64> = d.x(i).iter().map(|v| v.to_bits()).collect();
                r.push(d.y(i) as u64);
                r
            })
            .collect();
        rows.sort();
        rows
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = make_synthetic_classification(100, 3, 2, 1.0, &mut seeded(1)).unwrap();
        let b = make_synthetic_classification(100, 3, 2, 1.0, &mut seeded(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![50, 50]);
    }

    #[test]
    fn zero_separation_means_coincide() {
        let d = make_synthetic_classification(20_000, 3, 4, 0.0, &mut seeded(2)).unwrap();
        let mut sums = vec![vec![0.0; 3]; 4];
        let counts = d.class_counts();
        for i in 0..d.len() {
            for (s, x) in sums[d.y(i)].iter_mut().zip(d.x(i)) {
                *s += x;
            }
        }
        for (c, s) in sums.iter().enumerate() {
            for v in s {
                assert!((v / counts[c] as f64).abs() < 0.06);
            }
        }
    }

    #[test]
    fn iid_partition_is_exact_and_balanced() {
        let d = make_synthetic_classification(100, 2, 2, 1.0, &mut seeded(3)).unwrap();
        let spec = PartitionSpec {
            kind: PartitionKind::Iid,
            n_clients: 10,
        };
        let parts = partition(&d, &spec, &mut seeded(4)).unwrap();
        assert_eq!(parts.len(), 10);
        assert!(parts.iter().all(|c| c.len() == 10));
        assert_eq!(label_multiset(&parts), all_rows(&d));
        assert_eq!(parts[3].client_id, 3);
    }

    #[test]
    fn dirichlet_partition_is_exact() {
        let d = make_synthetic_classification(500, 2, 3, 1.0, &mut seeded(5)).unwrap();
        let spec = PartitionSpec {
            kind: PartitionKind::Dirichlet(0.3),
            n_clients: 8,
        };
        let parts = partition(&d, &spec, &mut seeded(6)).unwrap();
        assert!(parts.iter().all(|c| !c.is_empty()));
        assert_eq!(parts.iter().map(|c| c.len()).sum::<usize>(), 500);
        assert_eq!(label_multiset(&parts), all_rows(&d));
        let again = partition(&d, &spec, &mut seeded(6)).unwrap();
        assert_eq!(parts, again);
    }

    #[test]
    fn huge_concentration_matches_global_proportions() {
        let d = make_synthetic_classification(10_000, 2, 2, 1.0, &mut seeded(7)).unwrap();
        let spec = PartitionSpec {
            kind: PartitionKind::Dirichlet(1e6),
            n_clients: 5,
        };
        let parts = partition(&d, &spec, &mut seeded(8)).unwrap();
        for c in &parts {
            let frac = c.data.class_counts()[0] as f64 / c.len() as f64;
            assert!((frac - 0.5).abs() < 0.02, "{frac}");
        }
    }

    #[test]
    fn dirichlet_is_more_heterogeneous_than_iid() {
        // variance across clients of the class-0 share, averaged over seeds
        let spread = |kind: PartitionKind, seed: u64| {
            let d = make_synthetic_classification(400, 2, 2, 1.0, &mut seeded(seed)).unwrap();
            let parts = partition(&d, &PartitionSpec { kind, n_clients: 10 }, &mut seeded(seed + 1000))
                .unwrap();
            let shares: Vec<f64> = parts
                .iter()
                .map(|c| c.data.class_counts()[0] as f64 / c.len() as f64)
                .collect();
            crate::stats::variance(&shares)
        };
        let (mut iid, mut dir) = (0.0, 0.0);
        for seed in 0..50 {
            iid += spread(PartitionKind::Iid, seed);
            dir += spread(PartitionKind::Dirichlet(0.3), seed);
        }
        assert!(dir > 3.0 * iid, "dirichlet {dir} vs iid {iid}");
    }

    #[test]
    fn infeasible_partition() {
        let d = make_synthetic_classification(5, 2, 2, 1.0, &mut seeded(9)).unwrap();
        let spec = PartitionSpec {
            kind: PartitionKind::Iid,
            n_clients: 6,
        };
        assert!(matches!(partition(&d, &spec, &mut seeded(1)), Err(Error::InfeasiblePartition(_))));
    }

    #[test]
    fn dirichlet_proportions_sum_to_one() {
        let gamma = Gamma::new(0.3, 1.0).unwrap();
        let mut rng = seeded(10);
        for _ in 0..100 {
            let p = dirichlet_proportions(&gamma, 7, &mut rng);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(largest_remainder(10, &[0.33, 0.33, 0.34]), vec![3, 3, 4]);
        assert_eq!(largest_remainder(7, &[0.5, 0.5]).iter().sum::<usize>(), 7);
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_loads_rows_in_order() {
        let f = write_csv("x0,x1,label\n1.0,2.0,0\n3.5,-1,1\n0,0,1\n");
        let d = load_csv_dataset(f.path(), "label").unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.feature_dim(), 2);
        assert_eq!(d.x(1), &[3.5, -1.0]);
        assert_eq!(d.labels(), &[0, 1, 1]);
    }

    #[test]
    fn csv_reports_bad_cell_location() {
        let f = write_csv("x0,x1,label\n1.0,2.0,0\n3.5,abc,1\n0,0,1\n");
        match load_csv_dataset(f.path(), "label") {
            Err(Error::CsvCell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "x1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_empty_and_missing_label() {
        let f = write_csv("");
        assert!(matches!(load_csv_dataset(f.path(), "label"), Err(Error::NoRows(_))));
        let f = write_csv("x0,label\n");
        assert!(matches!(load_csv_dataset(f.path(), "label"), Err(Error::NoRows(_))));
        let f = write_csv("x0,y\n1,0\n");
        assert!(matches!(load_csv_dataset(f.path(), "label"), Err(Error::MissingColumn(_))));
    }
}
