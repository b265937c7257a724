use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Where latent codes came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentSource {
    /// One reparameterized posterior draw per row.
    Sampled,
    /// The deterministic posterior mean.
    PosteriorMean,
}

impl LatentSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sampled => "sampled",
            Self::PosteriorMean => "posterior_mean",
        }
    }
}

impl std::str::FromStr for LatentSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(Self::Sampled),
            "posterior_mean" | "posterior-mean" => Ok(Self::PosteriorMean),
            other => Err(Error::Config(format!("unknown latent source '{other}'"))),
        }
    }
}

/// Labeled latent codes, one row per example.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTable {
    pub codes: DenseMatrix,
    pub labels: Vec<usize>,
    pub source: LatentSource,
}

impl LatentTable {
    pub fn new(codes: DenseMatrix, labels: Vec<usize>, source: LatentSource) -> Result<Self> {
        if codes.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} codes but {} labels",
                codes.rows(),
                labels.len()
            )));
        }
        Ok(Self { codes, labels, source })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Fraction of test rows misclassified by a Euclidean k-nearest-neighbour
/// vote over the training rows. Distance ties go to the lower training
/// index; vote ties go to the smallest tied label.
pub fn knn_error(train: &LatentTable, test: &LatentTable, k: usize) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("kNN needs non-empty train and test tables".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!("k = {k} outside 1..={}", train.len())));
    }
    if train.codes.cols() != test.codes.cols() {
        return Err(Error::Dimension(format!(
            "train codes have {} columns, test codes {}",
            train.codes.cols(),
            test.codes.cols()
        )));
    }
    let classes = train.labels.iter().max().map_or(0, |m| m + 1);
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    let mut votes = vec![0usize; classes];
    let mut wrong = 0;
    for (q, &truth) in test.codes.row_iter().zip(&test.labels) {
        dist.clear();
        dist.extend(train.codes.row_iter().enumerate().map(|(i, r)| {
            let d: f64 = r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        }));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, by_distance);
        }
        votes.iter_mut().for_each(|v| *v = 0);
        for &(_, i) in &dist[..k] {
            votes[train.labels[i]] += 1;
        }
        // max_by_key keeps the last maximum, so scan in reverse label order
        let pred = (0..classes)
            .rev()
            .max_by_key(|&c| votes[c])
            .expect("at least one class");
        if pred != truth {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}
