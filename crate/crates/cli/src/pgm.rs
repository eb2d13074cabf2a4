//! 8-bit binary PGM heatmaps of score maps.

use stpca::score::ScoreMap;

/// `(height, width)`: mode 1 runs down the rows; the remaining modes, first
/// fastest, run across.
pub fn dimensions(shape: &[usize]) -> (usize, usize) {
    let height = shape.first().copied().unwrap_or(1);
    let width = shape.iter().skip(1).product::<usize>();
    (height, width)
}

/// Gray level of each score, `255 · s / max`, rounded; all black when every score is 0.
pub fn levels(scores: &[f64]) -> Vec<u8> {
    let max = scores.iter().copied().fold(0.0, f64::max);
    scores
        .iter()
        .map(|&s| if max > 0.0 { (255.0 * s / max).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect()
}

/// P5 encoding, pixels in row-major order.
pub fn encode(map: &ScoreMap) -> Vec<u8> {
    let (h, w) = dimensions(map.shape());
    let gray = levels(map.scores());
    let mut out = format!("P5\n{} {}\n255\n", w, h).into_bytes();
    out.reserve(h * w);
    for r in 0..h {
        for c in 0..w {
            // Linear index is first-mode fastest.
            out.push(gray[r + c * h]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use stpca::score::Granularity;

    #[test]
    fn golden_two_by_three() {
        // Column-major scores: column 0 = (0, 1), column 1 = (2, 3), column 2 = (4, 0).
        let map = ScoreMap::new(vec![2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 0.0], Granularity::PerElement).unwrap();
        let mut want = b"P5\n3 2\n255\n".to_vec();
        want.extend_from_slice(&[0, 128, 255, 64, 191, 0]);
        assert_eq!(encode(&map), want);
    }

    #[test]
    fn zero_scores_are_black() {
        assert_eq!(levels(&[0.0, 0.0]), vec![0, 0]);
        assert_eq!(dimensions(&[4]), (4, 1));
    }
}
