use rand::seq::SliceRandom;

use super::{DataError, JudgmentRecord, Label};
use crate::rng;

/// Seeded, label-stratified 80/20 split. Exactly `⌈0.8·n⌉` records go to
/// training; each class contributes in proportion (largest remainder), and a
/// class with at least two records appears on both sides.
pub fn split_80_20(
    records: &[JudgmentRecord],
    seed: u64,
) -> Result<(Vec<JudgmentRecord>, Vec<JudgmentRecord>), DataError> {
    let n = records.len();
    if n < 5 {
        return Err(DataError::TooFewRecords { need: 5, got: n });
    }
    let train_total = (4 * n).div_ceil(5);
    let mut rng = rng::stream(seed, &[0x5917]);

    let mut groups: Vec<Vec<&JudgmentRecord>> = Label::ALL
        .iter()
        .map(|l| records.iter().filter(|r| r.judgment == *l).collect())
        .collect();
    for g in &mut groups {
        g.shuffle(&mut rng);
    }

    // largest-remainder apportionment of train_total across classes
    let mut quota: Vec<usize> = groups.iter().map(|g| g.len() * train_total / n).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&c| std::cmp::Reverse((groups[c].len() * train_total) % n));
    let mut missing = train_total - quota.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if missing == 0 {
            break;
        }
        if quota[c] < groups[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    // keep both classes on both sides when a class has two or more records
    for c in 0..groups.len() {
        let other = 1 - c;
        let size = groups[c].len();
        if size >= 2 && quota[c] == size && quota[other] < groups[other].len() {
            quota[c] -= 1;
            quota[other] += 1;
        } else if size >= 2 && quota[c] == 0 && quota[other] > 1 {
            quota[c] += 1;
            quota[other] -= 1;
        }
    }

    let mut train = Vec::with_capacity(train_total);
    let mut validation = Vec::with_capacity(n - train_total);
    for (g, &q) in groups.iter().zip(&quota) {
        train.extend(g[..q].iter().map(|r| (*r).clone()));
        validation.extend(g[q..].iter().map(|r| (*r).clone()));
    }
    train.shuffle(&mut rng);
    validation.shuffle(&mut rng);
    Ok((train, validation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_corpus;

    fn count(rs: &[JudgmentRecord], l: Label) -> usize {
        rs.iter().filter(|r| r.judgment == l).count()
    }

    #[test]
    fn sizes_and_determinism() {
        let recs = synth_corpus(200, 3);
        let (tr, va) = split_80_20(&recs, 11).unwrap();
        assert_eq!((tr.len(), va.len()), (160, 40));
        assert_eq!(split_80_20(&recs, 11).unwrap(), (tr, va));
        assert!(split_80_20(&recs[..4], 1).is_err());
    }

    #[test]
    fn balanced_forty() {
        let recs = synth_corpus(40, 5);
        let (tr, va) = split_80_20(&recs, 2).unwrap();
        assert_eq!(count(&tr, Label::Petitioner), 16);
        assert_eq!(count(&tr, Label::Respondent), 16);
        assert_eq!(count(&va, Label::Petitioner), 4);
        assert_eq!(count(&va, Label::Respondent), 4);
    }

    #[test]
    fn skewed_classes_still_on_both_sides() {
        let mut recs = synth_corpus(10, 1);
        for r in recs.iter_mut() {
            r.judgment = Label::Petitioner;
        }
        recs[0].judgment = Label::Respondent;
        recs[1].judgment = Label::Respondent;
        let (tr, va) = split_80_20(&recs, 0).unwrap();
        assert_eq!(tr.len(), 8);
        assert_eq!(count(&tr, Label::Respondent), 1);
        assert_eq!(count(&va, Label::Respondent), 1);
    }
}
