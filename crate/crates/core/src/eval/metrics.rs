//! Ranks and the ranking metrics built on them.

/// 1-based rank of `truth` under descending score; ties go to the lower id.
pub fn rank_of_truth(scores: &[f64], truth: usize) -> usize {
    let s = scores[truth];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < truth))
        .count()
}

pub const ACC_CUTOFFS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RankSummary {
    pub count: usize,
    pub mrr: f64,
    pub acc1: f64,
    pub acc5: f64,
    pub acc10: f64,
}

impl RankSummary {
    pub fn from_ranks(ranks: &[usize]) -> Self {
        if ranks.is_empty() {
            return Self::default();
        }
        let m = ranks.len() as f64;
        let acc = |n: usize| ranks.iter().filter(|&&r| r <= n).count() as f64 / m;
        Self {
            count: ranks.len(),
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / m,
            acc1: acc(1),
            acc5: acc(5),
            acc10: acc(10),
        }
    }

    pub fn acc_at(&self, n: usize) -> Option<f64> {
        match n {
            1 => Some(self.acc1),
            5 => Some(self.acc5),
            10 => Some(self.acc10),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_ranks() {
        assert_eq!(rank_of_truth(&[0.2, 0.5, 0.3], 0), 3);
        assert_eq!(rank_of_truth(&[0.2, 0.5, 0.3], 1), 1);
        assert_eq!(rank_of_truth(&[1.0; 4], 2), 3);
    }

    #[test]
    fn summary_of_one_two_four() {
        let s = RankSummary::from_ranks(&[1, 2, 4]);
        assert!((s.mrr - 0.583333).abs() < 1e-6);
        assert!((s.acc1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.acc5, 1.0);
        let eleven = RankSummary::from_ranks(&[11]);
        assert_eq!(eleven.acc10, 0.0);
        assert!((eleven.mrr - 1.0 / 11.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_transform(raw in prop::collection::vec(-50i32..50, 1..30), pick in 0usize..30) {
            let scores: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
            let truth = pick % scores.len();
            let mapped: Vec<f64> = scores.iter().map(|s| (s / 4.0).exp() + 3.0).collect();
            prop_assert_eq!(rank_of_truth(&scores, truth), rank_of_truth(&mapped, truth));
        }
    }
}
