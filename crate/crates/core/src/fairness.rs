//! Accuracy and group-fairness metrics for binary predictions.
//!
//! Group `a = 0` is the disparate-impact numerator throughout.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datagen::LabeledImageSet;
use crate::error::{Error, Result};
use crate::models::{Embed, LinearHead};
use crate::ude::Edit;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    predictions: Vec<u8>,
    labels: Vec<u8>,
    attrs: Vec<u8>,
}

impl EvalRecord {
    pub fn new(predictions: Vec<u8>, labels: Vec<u8>, attrs: Vec<u8>) -> Result<Self> {
        if predictions.len() != labels.len() || labels.len() != attrs.len() {
            return Err(Error::shape(format!(
                "predictions {}, labels {}, attrs {}",
                predictions.len(),
                labels.len(),
                attrs.len()
            )));
        }
        let binary = |v: &[u8]| v.iter().all(|&x| x <= 1);
        if !(binary(&predictions) && binary(&labels) && binary(&attrs)) {
            return Err(Error::Format("evaluation entries must be 0 or 1".into()));
        }
        Ok(Self {
            predictions,
            labels,
            attrs,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn predictions(&self) -> &[u8] {
        &self.predictions
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn attrs(&self) -> &[u8] {
        &self.attrs
    }

    fn samples(&self) -> impl Iterator<Item = (u8, u8, u8)> + '_ {
        self.predictions
            .iter()
            .zip(&self.labels)
            .zip(&self.attrs)
            .map(|((&p, &y), &a)| (p, y, a))
    }
}

/// `|TPR(a=0) − TPR(a=1)|` for `target_class`, where TPR is the rate of
/// predicting the target class among samples whose label is that class.
pub fn equal_opportunity(rec: &EvalRecord, target_class: u8) -> Result<f64> {
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    for (p, y, a) in rec.samples() {
        if y == target_class {
            total[a as usize] += 1;
            hit[a as usize] += usize::from(p == target_class);
        }
    }
    if let Some(a) = total.iter().position(|&t| t == 0) {
        return Err(Error::UndefinedMetric(format!(
            "group a={a} has no samples of class {target_class}"
        )));
    }
    let tpr0 = hit[0] as f64 / total[0] as f64;
    let tpr1 = hit[1] as f64 / total[1] as f64;
    Ok((tpr0 - tpr1).abs())
}

/// Positive-prediction rate of group 0 over that of group 1, with
/// `|1 − DI|`.
pub fn disparate_impact(rec: &EvalRecord) -> Result<(f64, f64)> {
    let mut pos = [0usize; 2];
    let mut total = [0usize; 2];
    for (p, _, a) in rec.samples() {
        total[a as usize] += 1;
        pos[a as usize] += p as usize;
    }
    if let Some(a) = total.iter().position(|&t| t == 0) {
        return Err(Error::UndefinedMetric(format!("group a={a} is empty")));
    }
    if pos[1] == 0 {
        return Err(Error::UndefinedMetric(
            "group a=1 has no positive predictions".into(),
        ));
    }
    let di = (pos[0] as f64 / total[0] as f64) / (pos[1] as f64 / total[1] as f64);
    Ok((di, (1.0 - di).abs()))
}

pub fn accuracy(rec: &EvalRecord) -> Result<f64> {
    if rec.is_empty() {
        return Err(Error::Empty("evaluation record"));
    }
    let correct = rec.samples().filter(|(p, y, _)| p == y).count();
    Ok(correct as f64 / rec.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub accuracy: f64,
    pub eo_neg: f64,
    pub eo_pos: f64,
    pub di: f64,
    pub one_minus_di_abs: f64,
    /// Which group is the DI numerator.
    pub di_numerator_group: u8,
    /// Samples per group, `[a=0, a=1]`.
    pub group_counts: [usize; 2],
}

impl FairnessReport {
    pub fn from_record(rec: &EvalRecord) -> Result<Self> {
        let (di, one_minus_di_abs) = disparate_impact(rec)?;
        let mut group_counts = [0; 2];
        for &a in rec.attrs() {
            group_counts[a as usize] += 1;
        }
        Ok(Self {
            accuracy: accuracy(rec)?,
            eo_neg: equal_opportunity(rec, 0)?,
            eo_pos: equal_opportunity(rec, 1)?,
            di,
            one_minus_di_abs,
            di_numerator_group: 0,
            group_counts,
        })
    }

    pub const CSV_HEADER: &'static str = "EO_n,EO_p,DI,Acc";

    /// `EO_n,EO_p,DI,Acc` where the DI column is `|1 − DI|`.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.eo_neg, self.eo_pos, self.one_minus_di_abs, self.accuracy
        )
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())?;
        Ok(())
    }
}

/// Predictions of `head` on `φ(x + ε)` (plain `φ(x)` without an edit).
pub fn predict(
    head: &LinearHead<f32>,
    oracle: &impl Embed<f32>,
    edit: Option<&Edit>,
    images: &crate::numerics::Tensor<f32>,
) -> Result<Vec<u8>> {
    let x = match edit {
        Some(e) => e.apply(images)?,
        None => images.clone(),
    };
    head.predict(&oracle.embed(&x)?)
}

/// Fraction of `labels` the head reproduces.
pub fn head_accuracy(
    head: &LinearHead<f32>,
    oracle: &impl Embed<f32>,
    edit: Option<&Edit>,
    images: &crate::numerics::Tensor<f32>,
    labels: &[u8],
) -> Result<f64> {
    let pred = predict(head, oracle, edit, images)?;
    if pred.len() != labels.len() {
        return Err(Error::shape(format!("{} labels for {} images", labels.len(), pred.len())));
    }
    if pred.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / pred.len() as f64)
}

/// Disease head report on a test set with both label arrays.
pub fn evaluate(
    head: &LinearHead<f32>,
    oracle: &impl Embed<f32>,
    edit: Option<&Edit>,
    test: &LabeledImageSet,
) -> Result<FairnessReport> {
    let pred = predict(head, oracle, edit, &test.images)?;
    let rec = EvalRecord::new(pred, test.disease()?.to_vec(), test.sa()?.to_vec())?;
    FairnessReport::from_record(&rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(p: &[u8], y: &[u8], a: &[u8]) -> EvalRecord {
        EvalRecord::new(p.to_vec(), y.to_vec(), a.to_vec()).unwrap()
    }

    #[test]
    fn eo_examples() {
        let r = rec(&[1, 1, 0, 1], &[1, 1, 1, 1], &[0, 0, 1, 1]);
        assert_eq!(equal_opportunity(&r, 1).unwrap(), 0.5);
        let same = rec(&[1, 0, 1, 0], &[1, 1, 1, 1], &[0, 0, 1, 1]);
        assert_eq!(equal_opportunity(&same, 1).unwrap(), 0.0);
        let missing = rec(&[1, 1, 0], &[1, 1, 0], &[0, 0, 1]);
        assert!(matches!(equal_opportunity(&missing, 1), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn di_examples() {
        let r = rec(
            &[1, 1, 1, 1, 0, 1, 1, 0, 0, 0],
            &[0; 10],
            &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
        );
        let (di, gap) = disparate_impact(&r).unwrap();
        assert!((di - 2.0).abs() < 1e-12);
        assert!((gap - 1.0).abs() < 1e-12);
        let eq = rec(&[1, 0, 1, 0], &[0; 4], &[0, 0, 1, 1]);
        assert_eq!(disparate_impact(&eq).unwrap(), (1.0, 0.0));
        let zero = rec(&[1, 0, 0, 0], &[0; 4], &[0, 0, 1, 1]);
        assert!(matches!(disparate_impact(&zero), Err(Error::UndefinedMetric(_))));
        let one_group = rec(&[1, 0], &[0; 2], &[1, 1]);
        assert!(disparate_impact(&one_group).is_err());
    }

    fn balanced(per_cell: usize) -> (Vec<u8>, Vec<u8>) {
        let mut y = Vec::new();
        let mut a = Vec::new();
        for yy in 0..2 {
            for aa in 0..2 {
                for _ in 0..per_cell {
                    y.push(yy);
                    a.push(aa);
                }
            }
        }
        (y, a)
    }

    #[test]
    fn perfect_and_constant_classifiers() {
        let (y, a) = balanced(20);
        let perfect = FairnessReport::from_record(&rec(&y, &y, &a)).unwrap();
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!((perfect.eo_neg, perfect.eo_pos, perfect.di), (0.0, 0.0, 1.0));

        let constant = FairnessReport::from_record(&rec(&vec![1; 80], &y, &a)).unwrap();
        assert_eq!(constant.accuracy, 0.5);
        assert_eq!((constant.eo_neg, constant.eo_pos, constant.di), (0.0, 0.0, 1.0));
        assert_eq!(constant.one_minus_di_abs, 0.0);
        assert_eq!(constant.group_counts, [40, 40]);
    }

    #[test]
    fn record_validation() {
        assert!(EvalRecord::new(vec![0, 1], vec![0], vec![0, 1]).is_err());
        assert!(EvalRecord::new(vec![2], vec![0], vec![0]).is_err());
    }

    #[test]
    fn csv_row_uses_gap_column() {
        let (y, a) = balanced(1);
        let r = FairnessReport::from_record(&rec(&y, &y, &a)).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "EO_n,EO_p,DI,Acc\n0,0,0,1\n");
    }

    fn records() -> impl Strategy<Value = EvalRecord> {
        (1usize..=64).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
            )
                .prop_map(|(p, y, a)| EvalRecord::new(p, y, a).unwrap())
        })
    }

    fn swap_groups(r: &EvalRecord) -> EvalRecord {
        let a = r.attrs().iter().map(|a| 1 - a).collect();
        EvalRecord::new(r.predictions().to_vec(), r.labels().to_vec(), a).unwrap()
    }

    proptest! {
        #[test]
        fn metrics_ignore_sample_order(r in records(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut idx: Vec<usize> = (0..r.len()).collect();
            idx.shuffle(&mut crate::rng::seeded(seed));
            let pick = |v: &[u8]| idx.iter().map(|&i| v[i]).collect::<Vec<u8>>();
            let shuffled = EvalRecord::new(pick(r.predictions()), pick(r.labels()), pick(r.attrs())).unwrap();
            prop_assert_eq!(FairnessReport::from_record(&r).ok(), FairnessReport::from_record(&shuffled).ok());
        }

        #[test]
        fn group_swap_keeps_eo_and_inverts_di(r in records()) {
            let s = swap_groups(&r);
            for c in 0..2 {
                prop_assert_eq!(equal_opportunity(&r, c).ok(), equal_opportunity(&s, c).ok());
            }
            if let (Ok((di, _)), Ok((di_s, _))) = (disparate_impact(&r), disparate_impact(&s)) {
                prop_assert!((di * di_s - 1.0).abs() < 1e-12);
            }
        }
    }
}
