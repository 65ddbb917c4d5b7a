use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Class,
    Overall,
}

/// Ratio of uncommon to all mistakes for one model; `None` when it made no mistakes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub zero_denominator: bool,
}

impl Ratio {
    fn of(num: usize, den: usize) -> Self {
        if den == 0 {
            Ratio { value: 0.0, zero_denominator: true }
        } else {
            Ratio { value: num as f64 / den as f64, zero_denominator: false }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MistakeRow {
    /// Class index, or `None` for the overall row.
    pub class: Option<usize>,
    pub n: usize,
    pub acc1: f64,
    pub acc2: f64,
    /// Only model 1 correct.
    pub g1: usize,
    /// Only model 2 correct.
    pub g2: usize,
    /// Both wrong.
    pub common: usize,
    pub both_correct: usize,
    /// g2 / (g2 + common).
    pub r1: Ratio,
    /// g1 / (g1 + common).
    pub r2: Ratio,
}

impl MistakeRow {
    /// Ratios under the swapped orientation: (g1/(g1+common), g2/(g2+common)).
    pub fn swapped(&self) -> (Ratio, Ratio) {
        (self.r2, self.r1)
    }
}

pub fn mistake_ratios(g1: usize, g2: usize, common: usize) -> (Ratio, Ratio) {
    (Ratio::of(g2, g2 + common), Ratio::of(g1, g1 + common))
}

fn row(class: Option<usize>, items: impl Iterator<Item = (bool, bool)>) -> MistakeRow {
    let (mut g1, mut g2, mut common, mut both) = (0, 0, 0, 0);
    for (c1, c2) in items {
        match (c1, c2) {
            (true, false) => g1 += 1,
            (false, true) => g2 += 1,
            (false, false) => common += 1,
            (true, true) => both += 1,
        }
    }
    let n = g1 + g2 + common + both;
    let acc = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    let (r1, r2) = mistake_ratios(g1, g2, common);
    MistakeRow { class, n, acc1: acc(g1 + both), acc2: acc(g2 + both), g1, g2, common, both_correct: both, r1, r2 }
}

/// Agreement of two models' mistakes, per class (ascending) or overall.
pub fn mistake_table(preds1: &[usize], preds2: &[usize], labels: &[usize], group_by: GroupBy) -> Result<Vec<MistakeRow>> {
    if preds1.len() != labels.len() || preds2.len() != labels.len() {
        return Err(Error::Domain(format!(
            "prediction lengths {} and {} differ from {} labels",
            preds1.len(),
            preds2.len(),
            labels.len()
        )));
    }
    let correct = |i: usize| (preds1[i] == labels[i], preds2[i] == labels[i]);
    Ok(match group_by {
        GroupBy::Overall => vec![row(None, (0..labels.len()).map(correct))],
        GroupBy::Class => {
            let classes = labels.iter().max().map_or(0, |m| m + 1);
            (0..classes)
                .map(|c| row(Some(c), (0..labels.len()).filter(|&i| labels[i] == c).map(correct)))
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_predictions() {
        let labels = [0, 1, 2, 0, 1];
        let p = [0, 2, 2, 1, 1];
        let t = mistake_table(&p, &p, &labels, GroupBy::Overall).unwrap();
        assert_eq!((t[0].g1, t[0].g2), (0, 0));
        assert_eq!(t[0].r1.value, 0.0);
        assert_eq!(t[0].r2.value, 0.0);
    }

    #[test]
    fn one_model_perfect() {
        let labels = [0, 1, 2, 3];
        let wrong = [1, 2, 3, 0];
        let t = mistake_table(&labels, &wrong, &labels, GroupBy::Overall).unwrap();
        let r = &t[0];
        assert_eq!((r.g1, r.g2, r.common), (4, 0, 0));
        assert!(r.r1.zero_denominator);
        assert_eq!(r.r1.value, 0.0);
        assert_eq!(r.r2.value, 1.0);
    }

    #[test]
    fn partitions_per_class() {
        let labels = [0, 0, 1, 1, 1, 2];
        let p1 = [0, 1, 1, 0, 1, 2];
        let p2 = [0, 0, 0, 0, 1, 1];
        let t = mistake_table(&p1, &p2, &labels, GroupBy::Class).unwrap();
        assert_eq!(t.len(), 3);
        for r in &t {
            assert_eq!(r.g1 + r.g2 + r.common + r.both_correct, r.n);
        }
        assert_eq!(t.iter().map(|r| r.n).sum::<usize>(), labels.len());
        assert!(mistake_table(&p1, &p2[..5], &labels, GroupBy::Class).is_err());
    }
}
