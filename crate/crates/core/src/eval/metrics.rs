//! Label alignment and clustering / selection metrics.

use std::collections::BTreeMap;

/// Optimal assignment on a square profit matrix (maximization), O(n³).
/// Returns `col[row]`.
pub fn kuhn_munkres(profit: &[Vec<f64>]) -> Vec<usize> {
    let n = profit.len();
    if n == 0 {
        return Vec::new();
    }
    let max = profit.iter().flatten().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    // Minimize cost = max - profit with the shortest augmenting path method.
    let cost = |i: usize, j: usize| max - profit[i][j];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            col[p[j] - 1] = j - 1;
        }
    }
    col
}

fn distinct(labels: &[usize]) -> Vec<usize> {
    let mut d = labels.to_vec();
    d.sort_unstable();
    d.dedup();
    d
}

/// Relabels `pseudo` with the one-to-one cluster→class map that maximizes
/// agreement with `truth`. Clusters left without a class get fresh ids above
/// every class id.
pub fn kuhn_munkres_map(pseudo: &[usize], truth: &[usize]) -> Vec<usize> {
    assert_eq!(pseudo.len(), truth.len(), "labelings differ in length");
    let clusters = distinct(pseudo);
    let classes = distinct(truth);
    let n = clusters.len().max(classes.len());
    let mut profit = vec![vec![0.0; n]; n];
    for (p, t) in pseudo.iter().zip(truth) {
        let i = clusters.binary_search(p).expect("present");
        let j = classes.binary_search(t).expect("present");
        profit[i][j] += 1.0;
    }
    let assign = kuhn_munkres(&profit);
    let mut fresh = classes.last().copied().unwrap_or(0);
    let mut map = BTreeMap::new();
    for (i, &c) in clusters.iter().enumerate() {
        let target = if assign[i] < classes.len() {
            classes[assign[i]]
        } else {
            fresh += 1;
            fresh
        };
        map.insert(c, target);
    }
    pseudo.iter().map(|p| map[p]).collect()
}

/// Fraction of positions where the labelings agree.
pub fn acc(mapped: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(mapped.len(), truth.len(), "labelings differ in length");
    if truth.is_empty() {
        return 0.0;
    }
    mapped.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Accuracy after optimal label alignment.
pub fn clustering_acc(pseudo: &[usize], truth: &[usize]) -> f64 {
    acc(&kuhn_munkres_map(pseudo, truth), truth)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts.filter(|&c| c > 0).map(|c| {
        let p = c as f64 / n;
        -p * p.ln()
    }).sum()
}

/// `I(a; b) / sqrt(H(a)·H(b))` with natural logs; 0 when either labeling has a
/// single value.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as f64;
    let (da, db) = (distinct(a), distinct(b));
    if da.len() < 2 || db.len() < 2 {
        log::warn!("NMI of a labeling with fewer than 2 distinct values is defined as 0");
        return 0.0;
    }
    let mut joint = vec![vec![0usize; db.len()]; da.len()];
    for (x, y) in a.iter().zip(b) {
        joint[da.binary_search(x).unwrap()][db.binary_search(y).unwrap()] += 1;
    }
    let ra: Vec<usize> = joint.iter().map(|r| r.iter().sum()).collect();
    let cb: Vec<usize> = (0..db.len()).map(|j| joint.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in joint.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (ra[i] as f64 * cb[j] as f64)).ln();
            }
        }
    }
    let (ha, hb) = (entropy(ra.into_iter(), n), entropy(cb.into_iter(), n));
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

fn correct(selection: &[usize], truth: &[usize]) -> usize {
    distinct(selection).iter().filter(|j| truth.contains(j)).count()
}

/// Correctly selected features over `h·g`.
pub fn poc(selections: &[Vec<usize>], truth: &[usize], h: usize) -> f64 {
    if selections.is_empty() || h == 0 {
        return 0.0;
    }
    let c: usize = selections.iter().map(|s| correct(s, truth)).sum();
    c as f64 / (h * selections.len()) as f64
}

/// Fraction of runs that select every true feature.
pub fn potc(selections: &[Vec<usize>], truth: &[usize]) -> f64 {
    if selections.is_empty() {
        return 0.0;
    }
    let t = distinct(truth);
    let s = selections.iter().filter(|s| correct(s, &t) == t.len()).count();
    s as f64 / selections.len() as f64
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}
