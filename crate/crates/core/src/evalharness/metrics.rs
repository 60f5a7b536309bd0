//! Confusion matrices and the derived precision/recall/F1/accuracy, generic
//! over the scalar type so the same code runs in `f64` and in exact rationals.

use std::fmt::Debug;

use num_integer::Integer;
use num_rational::Rational64;
use num_traits::{Num, ToPrimitive};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Label;

/// Scalar usable for metric arithmetic.
pub trait MetricScalar: Num + Copy + PartialOrd + Debug {
    fn from_count(n: u64) -> Self;
    fn to_f64(self) -> f64;
}

impl MetricScalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl MetricScalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl MetricScalar for Rational64 {
    fn from_count(n: u64) -> Self {
        Rational64::from_integer(n as i64)
    }
    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

/// Counts with `Buggy` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Adds one decision. A missing prediction counts as wrong: a false
    /// negative for buggy samples, a false positive for clean ones.
    pub fn record(&mut self, gold: Label, predicted: Option<Label>) {
        match (gold, predicted) {
            (Label::Buggy, Some(Label::Buggy)) => self.tp += 1,
            (Label::Clean, Some(Label::Clean)) => self.tn += 1,
            (Label::Clean, Some(Label::Buggy)) | (Label::Clean, None) => self.fp += 1,
            (Label::Buggy, Some(Label::Clean)) | (Label::Buggy, None) => self.fn_ += 1,
        }
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix::new(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn_ + other.fn_,
            self.tn + other.tn,
        )
    }

    /// Smallest matrix whose precision and recall equal the given fractions
    /// exactly, padded with `tn` true negatives. Both fractions must lie in
    /// `(0, 1]`.
    pub fn realizing(precision: Rational64, recall: Rational64, tn: u64) -> Option<ConfusionMatrix> {
        let zero = Rational64::from_integer(0);
        let one = Rational64::from_integer(1);
        if precision <= zero || precision > one || recall <= zero || recall > one {
            return None;
        }
        let tp = precision.numer().lcm(recall.numer());
        let predicted_pos = tp / precision.numer() * precision.denom();
        let actual_pos = tp / recall.numer() * recall.denom();
        Some(ConfusionMatrix::new(
            u64::try_from(tp).ok()?,
            u64::try_from(predicted_pos - tp).ok()?,
            u64::try_from(actual_pos - tp).ok()?,
            tn,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub accuracy: T,
    pub unparsed_count: u64,
}

impl<T: MetricScalar> EvalMetrics<T> {
    pub fn with_unparsed(mut self, unparsed: u64) -> Self {
        self.unparsed_count = unparsed;
        self
    }

    pub fn to_f64(&self) -> EvalMetrics<f64> {
        EvalMetrics {
            precision: self.precision.to_f64(),
            recall: self.recall.to_f64(),
            f1: self.f1.to_f64(),
            accuracy: self.accuracy.to_f64(),
            unparsed_count: self.unparsed_count,
        }
    }
}

fn ratio<T: MetricScalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score<T: MetricScalar>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum == T::zero() {
        return T::zero();
    }
    let two = T::one() + T::one();
    two * precision * recall / sum
}

/// Zero denominators give 0 precision or recall. `unparsed_count` starts at
/// 0; see [`EvalMetrics::with_unparsed`].
pub fn compute_metrics<T: MetricScalar>(cm: &ConfusionMatrix) -> Result<EvalMetrics<T>, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyRun);
    }
    let precision = ratio::<T>(cm.tp, cm.tp + cm.fp);
    let recall = ratio::<T>(cm.tp, cm.tp + cm.fn_);
    Ok(EvalMetrics {
        precision,
        recall,
        f1: f1_score(precision, recall),
        accuracy: ratio(cm.tp + cm.tn, total),
        unparsed_count: 0,
    })
}

/// `100 * (new - base) / base`, in percent.
pub fn relative_improvement<T: MetricScalar>(base: T, new: T) -> Result<T, EvalError> {
    if base <= T::zero() {
        return Err(EvalError::UndefinedBaseline(base.to_f64()));
    }
    let hundred = T::from_count(100);
    Ok(hundred * (new - base) / base)
}

/// Arithmetic mean of the improvements of each `(base, new)` pair.
pub fn mean_improvement<T: MetricScalar>(pairs: &[(T, T)]) -> Result<T, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    let mut sum = T::zero();
    for &(base, new) in pairs {
        sum = sum + relative_improvement(base, new)?;
    }
    Ok(sum / T::from_count(pairs.len() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn metric_examples() {
        let m = compute_metrics::<f64>(&ConfusionMatrix::new(1, 1, 1, 1)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.5, 0.5, 0.5, 0.5));

        let m = compute_metrics::<f64>(&ConfusionMatrix::new(0, 0, 0, 10)).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (0.0, 0.0, 0.0, 1.0));

        assert!(matches!(
            compute_metrics::<f64>(&ConfusionMatrix::default()),
            Err(EvalError::EmptyRun)
        ));
    }

    #[test]
    fn exact_metrics_in_rationals() {
        let m = compute_metrics::<Rational64>(&ConfusionMatrix::new(3, 1, 2, 4)).unwrap();
        assert_eq!(m.precision, r(3, 4));
        assert_eq!(m.recall, r(3, 5));
        assert_eq!(m.f1, r(2, 3));
        assert_eq!(m.accuracy, r(7, 10));
        let m32 = compute_metrics::<f32>(&ConfusionMatrix::new(3, 1, 2, 4)).unwrap();
        assert!((m32.f1 - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn realizing_matrix_hits_fractions_exactly() {
        let cm = ConfusionMatrix::realizing(r(285, 1000), r(534, 1000), 0).unwrap();
        let m = compute_metrics::<Rational64>(&cm).unwrap();
        assert_eq!((m.precision, m.recall), (r(285, 1000), r(534, 1000)));
        // 57/200 and 267/500 share the factor 3, so tp = lcm(57, 267).
        assert_eq!(cm.tp, 57 * 89);
        assert!(ConfusionMatrix::realizing(r(0, 1), r(1, 2), 0).is_none());
    }

    #[test]
    fn record_scores_unparsed_as_wrong() {
        let mut cm = ConfusionMatrix::default();
        cm.record(Label::Buggy, None);
        cm.record(Label::Clean, None);
        cm.record(Label::Buggy, Some(Label::Buggy));
        cm.record(Label::Clean, Some(Label::Clean));
        assert_eq!(cm, ConfusionMatrix::new(1, 1, 1, 1));
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(relative_improvement(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(relative_improvement(r(1, 2), r(3, 4)).unwrap(), r(50, 1));
        assert!(matches!(
            relative_improvement(0.0, 0.3),
            Err(EvalError::UndefinedBaseline(_))
        ));
        let imp: f64 = relative_improvement(0.539, 0.642).unwrap();
        assert!((imp - 19.109).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn identities(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            prop_assume!(tp + fp + fn_ + tn > 0);
            let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
            let m = compute_metrics::<Rational64>(&cm).unwrap();
            let swapped = compute_metrics::<Rational64>(&ConfusionMatrix::new(tn, fn_, fp, tp)).unwrap();
            prop_assert_eq!(m.accuracy, swapped.accuracy);
            prop_assert_eq!(f1_score(m.precision, m.recall), f1_score(m.recall, m.precision));
            let zero = Rational64::from_integer(0);
            let one = Rational64::from_integer(1);
            for v in [m.precision, m.recall, m.f1, m.accuracy] {
                prop_assert!(v >= zero && v <= one);
            }
            let echo = ConfusionMatrix::new(tp + fn_, 0, 0, tn + fp);
            prop_assert_eq!(compute_metrics::<Rational64>(&echo).unwrap().accuracy, one);
        }

        #[test]
        fn improvement_round_trips(base in 0.001f64..1.0, new in 0.0f64..1.0) {
            let imp = relative_improvement(base, new).unwrap();
            prop_assert!((base * (1.0 + imp / 100.0) - new).abs() < 1e-9);
        }
    }
}
