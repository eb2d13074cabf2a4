//! Feature scores in sample geometry and their deterministic ranking.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StpcaError};

/// How samples carry variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Each mode-1 dimension (horizontal slice) is one variable.
    SliceWise,
    /// Each tube fiber (sample element) is one variable.
    TubeWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    PerDimension,
    PerElement,
}

impl Scenario {
    pub fn granularity(self) -> Granularity {
        match self {
            Scenario::SliceWise => Granularity::PerDimension,
            Scenario::TubeWise => Granularity::PerElement,
        }
    }
}

/// Nonnegative scores stored first-mode-fastest; feature `j` is the linear index `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    shape: Vec<usize>,
    scores: Vec<f64>,
    ranking: Vec<usize>,
    granularity: Granularity,
}

/// Indices sorted by descending score; ties keep ascending index order.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

impl ScoreMap {
    pub fn new(shape: Vec<usize>, scores: Vec<f64>, granularity: Granularity) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n != scores.len() {
            return Err(StpcaError::Shape(format!("score shape {:?} with {} scores", shape, scores.len())));
        }
        if let Some(j) = scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(StpcaError::Numerical(format!("score {} is {}", j, scores[j])));
        }
        // -0.0 and 0.0 must tie.
        let scores: Vec<f64> = scores.into_iter().map(|s| if s == 0.0 { 0.0 } else { s }).collect();
        let ranking = rank_descending(&scores);
        Ok(Self { shape, scores, ranking, granularity })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// The `h` highest-scoring features, best first.
    pub fn top(&self, h: usize) -> Vec<usize> {
        self.ranking.iter().copied().take(h).collect()
    }

    /// Rank (0 = best) of each feature.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.ranking.len()];
        for (pos, &j) in self.ranking.iter().enumerate() {
            r[j] = pos;
        }
        r
    }

    /// Row sums over every mode after the first.
    pub fn per_dimension(&self) -> ScoreMap {
        if self.shape.len() == 1 {
            return ScoreMap { granularity: Granularity::PerDimension, ..self.clone() };
        }
        let d1 = self.shape[0];
        let mut rows = vec![0.0; d1];
        for (lin, s) in self.scores.iter().enumerate() {
            rows[lin % d1] += s;
        }
        ScoreMap::new(vec![d1], rows, Granularity::PerDimension).expect("row sums of valid scores")
    }

    /// Multi-index (0-based) of a feature.
    pub fn position(&self, feature: usize) -> Vec<usize> {
        let mut rem = feature;
        self.shape
            .iter()
            .map(|&d| {
                let i = rem % d;
                rem /= d;
                i
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_by_index() {
        let m = ScoreMap::new(vec![4], vec![1.0, 2.0, 1.0, 2.0], Granularity::PerDimension).unwrap();
        assert_eq!(m.ranking(), &[1, 3, 0, 2]);
        assert_eq!(m.top(2), vec![1, 3]);
        assert_eq!(m.ranks(), vec![2, 0, 3, 1]);
    }

    #[test]
    fn zero_scores_rank_by_index() {
        let m = ScoreMap::new(vec![3], vec![0.0, -0.0, 0.0], Granularity::PerDimension).unwrap();
        assert_eq!(m.ranking(), &[0, 1, 2]);
    }

    #[test]
    fn rejects_negative() {
        assert!(ScoreMap::new(vec![2], vec![1.0, -1.0], Granularity::PerDimension).is_err());
        assert!(ScoreMap::new(vec![2], vec![1.0], Granularity::PerDimension).is_err());
    }

    #[test]
    fn row_sums() {
        let m = ScoreMap::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0], Granularity::PerElement).unwrap();
        let d = m.per_dimension();
        assert_eq!(d.scores(), &[4.0, 6.0]);
        assert_eq!(m.position(3), vec![1, 1]);
    }
}
