//! Multi-class datasets: CSV loading, standardisation, splitting and a
//! synthetic Gaussian-cluster generator.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{OpeError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl ClassificationDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(OpeError::InvalidData("features and labels differ in length".into()));
        }
        if let Some(first) = features.first() {
            if features.iter().any(|x| x.len() != first.len()) {
                return Err(OpeError::InvalidData("rows have different feature counts".into()));
            }
        }
        if let Some(bad) = labels.iter().find(|y| **y >= n_classes) {
            return Err(OpeError::InvalidData(format!("label {bad} outside {n_classes} classes")));
        }
        Ok(ClassificationDataset { features, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    /// Rescales every column to zero mean and unit variance; constant
    /// columns become 0.
    pub fn standardize(&mut self) {
        let n = self.len() as f64;
        for j in 0..self.dim() {
            let mean = self.features.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = self.features.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            for x in self.features.iter_mut() {
                x[j] = if sd > 0.0 { (x[j] - mean) / sd } else { 0.0 };
            }
        }
    }

    fn subset(&self, idx: &[usize]) -> Self {
        ClassificationDataset {
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }
}

/// Parses numeric feature columns followed by an integer label.
///
/// A first row that is entirely non-numeric is taken as a header. Labels are
/// mapped to `0..C` in increasing order of their original values. Values are
/// returned as read; see [`load_classification_csv`] for the standardised
/// form.
pub fn parse_classification_csv<R: std::io::Read>(reader: R) -> Result<ClassificationDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| OpeError::Parse { row, msg: e.to_string() })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && rec.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() < 2 {
            return Err(OpeError::Parse { row, msg: "need at least one feature and a label".into() });
        }
        let mut x = Vec::with_capacity(rec.len() - 1);
        for f in rec.iter().take(rec.len() - 1) {
            let v: f64 = f.parse().map_err(|_| OpeError::Parse { row, msg: format!("not a number: {f:?}") })?;
            if !v.is_finite() {
                return Err(OpeError::Parse { row, msg: format!("non-finite value {f:?}") });
            }
            x.push(v);
        }
        let label_field = &rec[rec.len() - 1];
        let label: i64 = label_field
            .parse::<i64>()
            .or_else(|_| label_field.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64).ok_or(()))
            .map_err(|_| OpeError::Parse { row, msg: format!("label {label_field:?} is not an integer") })?;
        if let Some(first) = features.first() {
            let first: &Vec<f64> = first;
            if first.len() != x.len() {
                return Err(OpeError::Parse { row, msg: format!("expected {} features, found {}", first.len(), x.len()) });
            }
        }
        features.push(x);
        raw_labels.push(label);
    }
    if features.is_empty() {
        return Err(OpeError::EmptyInput);
    }
    let mut classes = raw_labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let labels = raw_labels.iter().map(|l| classes.binary_search(l).expect("label is present")).collect();
    ClassificationDataset::new(features, labels, classes.len())
}

/// Reads a classification CSV and standardises its feature columns.
pub fn load_classification_csv(path: &Path) -> Result<ClassificationDataset> {
    let file = std::fs::File::open(path).map_err(|e| OpeError::Io(format!("{}: {e}", path.display())))?;
    let mut data = parse_classification_csv(std::io::BufReader::new(file))?;
    data.standardize();
    Ok(data)
}

/// Shuffles with `seed` and puts the first `round(train_frac · n)` rows in
/// the training split.
pub fn split_train_eval(
    data: &ClassificationDataset,
    train_frac: f64,
    seed: u64,
) -> Result<(ClassificationDataset, ClassificationDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(OpeError::InvalidConfig(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (train_frac * data.len() as f64).round() as usize;
    Ok((data.subset(&idx[..cut]), data.subset(&idx[cut..])))
}

/// Gaussian class clusters: class means drawn from `N(0, separation²·I)`,
/// rows from `N(mean_y, I)`, labels uniform.
pub fn synthetic_clusters(
    n_classes: usize,
    n: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<ClassificationDataset> {
    if n_classes < 2 || n == 0 || dim == 0 {
        return Err(OpeError::InvalidConfig("synthetic data needs ≥ 2 classes, ≥ 1 row and ≥ 1 feature".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..dim).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = rng.random_range(0..n_classes);
        features.push(means[y].iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect());
        labels.push(y);
    }
    ClassificationDataset::new(features, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_echo() {
        let text = "0.5,1.25,3\n-2,0,7\n4.5,1e-3,3\n";
        let d = parse_classification_csv(text.as_bytes()).unwrap();
        assert_eq!(d.features, vec![vec![0.5, 1.25], vec![-2.0, 0.0], vec![4.5, 1e-3]]);
        assert_eq!(d.labels, vec![0, 1, 0]);
        assert_eq!(d.n_classes, 2);
    }

    #[test]
    fn header_is_skipped_and_errors_carry_rows() {
        let d = parse_classification_csv("a,b,label\n1,2,0\n3,4,1\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        match parse_classification_csv("1,2,0\n3,x,1\n".as_bytes()).unwrap_err() {
            OpeError::Parse { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn standardised_columns() {
        let mut d = parse_classification_csv("1,5,0\n2,5,1\n3,5,0\n".as_bytes()).unwrap();
        d.standardize();
        let col0: Vec<f64> = d.features.iter().map(|x| x[0]).collect();
        assert!(col0.iter().sum::<f64>().abs() < 1e-12);
        assert!((col0.iter().map(|v| v * v).sum::<f64>() / 3.0 - 1.0).abs() < 1e-12);
        assert!(d.features.iter().all(|x| x[1] == 0.0));
    }

    #[test]
    fn split_sizes_union_and_determinism() {
        let d = synthetic_clusters(3, 10, 2, 1.0, 5).unwrap();
        let (a, b) = split_train_eval(&d, 0.3, 1).unwrap();
        assert_eq!((a.len(), b.len()), (3, 7));
        let mut all: Vec<String> = a.features.iter().chain(&b.features).map(|x| format!("{x:?}")).collect();
        let mut orig: Vec<String> = d.features.iter().map(|x| format!("{x:?}")).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert_eq!(split_train_eval(&d, 0.3, 1).unwrap(), (a, b));
    }
}
