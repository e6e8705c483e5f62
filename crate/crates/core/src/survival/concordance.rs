//! Harrell's concordance index for a linear risk score.
//!
//! A pair `(i, j)` is comparable when `i` has an event and `j` is still at
//! risk at `time_i`: either `time_j > time_i`, or `time_j == time_i` with `j`
//! censored. Under left truncation `j` must also have entered by `time_i`.
//! The pair is concordant when `i` has the higher score `beta' x`; equal
//! scores earn half credit.

use super::data::{Coefficients, Dataset};
use super::kernel::linear_predictor;
use crate::error::{Error, Result};

pub fn concordance_index(beta: &Coefficients, data: &Dataset) -> Result<f64> {
    if beta.len() != data.p() {
        return Err(Error::Contract(format!(
            "beta has {} entries, data has p = {}",
            beta.len(),
            data.p()
        )));
    }
    let scores: Vec<f64> = (0..data.len())
        .map(|i| linear_predictor(beta, data.covariates(i)))
        .collect();
    let (concordant, comparable) = if data.is_truncated() {
        count_pairs_truncated(data, &scores)
    } else {
        count_pairs_sorted(data, &scores)
    };
    if comparable == 0.0 {
        return Err(Error::UndefinedConcordance);
    }
    Ok(concordant / comparable)
}

fn count_pairs_truncated(data: &Dataset, scores: &[f64]) -> (f64, f64) {
    let n = data.len();
    let mut concordant = 0.0;
    let mut comparable = 0.0;
    for i in (0..n).filter(|&i| data.is_event(i)) {
        let t = data.time(i);
        for j in 0..n {
            let later = data.time(j) > t || (data.time(j) == t && !data.is_event(j));
            if j == i || !later || data.entry(j) > t {
                continue;
            }
            comparable += 1.0;
            if scores[i] > scores[j] {
                concordant += 1.0;
            } else if scores[i] == scores[j] {
                concordant += 0.5;
            }
        }
    }
    (concordant, comparable)
}

/// `O(n log n)`: walk times in descending order while a Fenwick tree over score
/// ranks holds everyone seen so far.
fn count_pairs_sorted(data: &Dataset, scores: &[f64]) -> (f64, f64) {
    let n = data.len();
    let mut by_score: Vec<usize> = (0..n).collect();
    by_score.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for k in 0..n {
        if k > 0 && scores[by_score[k]] != scores[by_score[k - 1]] {
            r += 1;
        }
        rank[by_score[k]] = r;
    }
    let mut tree = Fenwick::new(r + 1);

    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_unstable_by(|&a, &b| data.time(b).total_cmp(&data.time(a)));

    let mut concordant = 0.0;
    let mut comparable = 0.0;
    let mut start = 0;
    while start < n {
        let t = data.time(by_time[start]);
        let mut end = start;
        while end < n && data.time(by_time[end]) == t {
            end += 1;
        }
        let group = &by_time[start..end];
        // censored subjects at the same time count as surviving longer
        for &j in group.iter().filter(|&&j| !data.is_event(j)) {
            tree.add(rank[j], 1);
        }
        for &i in group.iter().filter(|&&i| data.is_event(i)) {
            let below = tree.prefix(rank[i]);
            let equal = tree.prefix(rank[i] + 1) - below;
            comparable += tree.total() as f64;
            concordant += below as f64 + 0.5 * equal as f64;
        }
        for &i in group.iter().filter(|&&i| data.is_event(i)) {
            tree.add(rank[i], 1);
        }
        start = end;
    }
    (concordant, comparable)
}

struct Fenwick {
    tree: Vec<u64>,
    total: u64,
}

impl Fenwick {
    fn new(size: usize) -> Self {
        Self {
            tree: vec![0; size + 1],
            total: 0,
        }
    }

    fn add(&mut self, pos: usize, v: u64) {
        self.total += v;
        let mut k = pos + 1;
        while k < self.tree.len() {
            self.tree[k] += v;
            k += k & k.wrapping_neg();
        }
    }

    /// Sum over positions `< pos`.
    fn prefix(&self, pos: usize) -> u64 {
        let mut k = pos;
        let mut s = 0;
        while k > 0 {
            s += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        s
    }

    fn total(&self) -> u64 {
        self.total
    }
}
