//! Pixel accuracy, mean accuracy and mean IoU over a class confusion matrix.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::ClassMap;

/// `counts[i * C + j]` = pixels of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegConfusion {
    class_count: usize,
    counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegScores {
    pub pixel_accuracy: f64,
    pub mean_accuracy: f64,
    pub mean_iou: f64,
}

impl SegConfusion {
    pub fn new(class_count: usize) -> Self {
        Self { class_count, counts: vec![0; class_count * class_count] }
    }

    /// From a dense row-major matrix.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self { class_count: c, counts: rows.concat() })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.class_count + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_total(&self, i: usize) -> u64 {
        (0..self.class_count).map(|j| self.get(i, j)).sum()
    }

    fn col_total(&self, j: usize) -> u64 {
        (0..self.class_count).map(|i| self.get(i, j)).sum()
    }

    fn diagonal(&self) -> u64 {
        (0..self.class_count).map(|i| self.get(i, i)).sum()
    }

    /// Adds one count per pixel whose ground truth is not the ignore id.
    pub fn accumulate(&mut self, pred: &ClassMap, gt: &ClassMap) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::shape(pred.dims(), gt.dims()));
        }
        if pred.class_count() != gt.class_count() {
            return Err(Error::ClassCountMismatch { left: pred.class_count(), right: gt.class_count() });
        }
        if gt.class_count() as usize != self.class_count {
            return Err(Error::ClassCountMismatch { left: self.class_count as u32, right: gt.class_count() });
        }
        let c = self.class_count;
        // Check before mutating so a failed call leaves the counts untouched.
        for (i, (&p, &g)) in pred.values().iter().zip(gt.values()).enumerate() {
            if Some(g) != gt.ignore_id() && p as usize >= c {
                return Err(Error::PredictedIgnore { id: p, row: i / pred.width(), col: i % pred.width() });
            }
        }
        for (&p, &g) in pred.values().iter().zip(gt.values()) {
            if Some(g) == gt.ignore_id() {
                continue;
            }
            self.counts[g as usize * c + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &SegConfusion) -> Result<()> {
        if other.class_count != self.class_count {
            return Err(Error::ClassCountMismatch { left: self.class_count as u32, right: other.class_count as u32 });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn pixel_accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Undefined("pixel accuracy of an empty confusion matrix"));
        }
        Ok(self.diagonal() as f64 / total as f64)
    }

    /// Mean per-class recall over classes present in the ground truth.
    pub fn mean_accuracy(&self) -> Result<f64> {
        let recalls: Vec<f64> = (0..self.class_count)
            .filter_map(|i| {
                let t = self.row_total(i);
                (t > 0).then(|| self.get(i, i) as f64 / t as f64)
            })
            .collect();
        mean_or_undefined(&recalls, "mean accuracy with no ground-truth pixels")
    }

    /// Mean IoU over classes with a non-empty union.
    pub fn mean_iou(&self) -> Result<f64> {
        let ious: Vec<f64> = (0..self.class_count)
            .filter_map(|i| {
                let inter = self.get(i, i);
                let union = self.row_total(i) + self.col_total(i) - inter;
                (union > 0).then(|| inter as f64 / union as f64)
            })
            .collect();
        mean_or_undefined(&ious, "mean IoU with every class union empty")
    }

    pub fn scores(&self) -> Result<SegScores> {
        Ok(SegScores {
            pixel_accuracy: self.pixel_accuracy()?,
            mean_accuracy: self.mean_accuracy()?,
            mean_iou: self.mean_iou()?,
        })
    }
}

fn mean_or_undefined(xs: &[f64], what: &'static str) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Undefined(what));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Accumulates a fresh confusion matrix over the image pairs.
pub fn confusion_for<'a>(
    class_count: usize,
    pairs: impl IntoIterator<Item = (&'a ClassMap, &'a ClassMap)>,
) -> Result<SegConfusion> {
    let mut conf = SegConfusion::new(class_count);
    for (pred, gt) in pairs {
        conf.accumulate(pred, gt)?;
    }
    Ok(conf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_class() -> SegConfusion {
        SegConfusion::from_rows(&[vec![5, 1, 0], vec![2, 6, 2], vec![0, 1, 3]]).unwrap()
    }

    #[test]
    fn accumulate_examples() {
        let m = ClassMap::new(2, 2, 2, None, vec![0, 1, 1, 0]).unwrap();
        let mut conf = SegConfusion::new(2);
        conf.accumulate(&m, &m).unwrap();
        assert_eq!((conf.get(0, 0), conf.get(1, 1), conf.get(0, 1), conf.get(1, 0)), (2, 2, 0, 0));

        let gt = ClassMap::new(2, 2, 2, Some(255), vec![255; 4]).unwrap();
        let before = conf.clone();
        conf.accumulate(&m, &gt).unwrap();
        assert_eq!(conf, before);

        let pred = ClassMap::new(1, 2, 2, None, vec![0, 1]).unwrap();
        let gt = ClassMap::new(1, 2, 2, None, vec![1, 1]).unwrap();
        let mut conf = SegConfusion::new(2);
        conf.accumulate(&pred, &gt).unwrap();
        assert_eq!((conf.get(1, 0), conf.get(1, 1)), (1, 1));
        assert_eq!(conf.pixel_accuracy().unwrap(), 0.5);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let a = ClassMap::filled(2, 3, 2, 0).unwrap();
        let b = ClassMap::filled(3, 2, 2, 0).unwrap();
        let err = SegConfusion::new(2).accumulate(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("3x2"), "{msg}");
    }

    #[test]
    fn predicted_ignore_is_rejected() {
        let pred = ClassMap::new(1, 2, 2, Some(255), vec![255, 0]).unwrap();
        let gt = ClassMap::new(1, 2, 2, None, vec![0, 0]).unwrap();
        let mut conf = SegConfusion::new(2);
        assert!(matches!(conf.accumulate(&pred, &gt), Err(Error::PredictedIgnore { .. })));
        assert_eq!(conf.total(), 0);
    }

    #[test]
    fn three_class_scores() {
        let c = three_class();
        assert!((c.pixel_accuracy().unwrap() - 0.7).abs() < 1e-12);
        assert!((c.mean_accuracy().unwrap() - (5. / 6. + 0.6 + 0.75) / 3.).abs() < 1e-12);
        assert!((c.mean_accuracy().unwrap() - 0.727778).abs() < 1e-6);
        // unions 8, 12 and 6
        assert!((c.mean_iou().unwrap() - (5. / 8. + 6. / 12. + 3. / 6.) / 3.).abs() < 1e-12);
    }

    #[test]
    fn exclusion_rules() {
        let c = SegConfusion::from_rows(&[vec![3, 1], vec![0, 0]]).unwrap();
        assert_eq!(c.mean_accuracy().unwrap(), 0.75);
        let sym = SegConfusion::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap();
        assert!((sym.mean_iou().unwrap() - 1. / 3.).abs() < 1e-15);
    }

    #[test]
    fn empty_confusion_is_undefined() {
        let c = SegConfusion::new(3);
        assert!(matches!(c.pixel_accuracy(), Err(Error::Undefined(_))));
        assert!(matches!(c.mean_accuracy(), Err(Error::Undefined(_))));
        assert!(matches!(c.mean_iou(), Err(Error::Undefined(_))));
    }

    #[test]
    fn perfect_diagonal_is_one() {
        let c = SegConfusion::from_rows(&[vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 9]]).unwrap();
        let s = c.scores().unwrap();
        assert_eq!((s.pixel_accuracy, s.mean_accuracy, s.mean_iou), (1.0, 1.0, 1.0));
    }
}
