use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{EvalScores, Validate};
use crate::util::round_to;

/// Rows of the gap table, in display order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapRow {
    Professionalism,
    Accuracy,
    MedicalExpertise,
    Satisfaction,
    Trustworthiness,
    ConsumerPreference,
    Overall,
}

impl GapRow {
    pub const ALL: [GapRow; 7] = [
        GapRow::Professionalism,
        GapRow::Accuracy,
        GapRow::MedicalExpertise,
        GapRow::Satisfaction,
        GapRow::Trustworthiness,
        GapRow::ConsumerPreference,
        GapRow::Overall,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GapRow::Professionalism => "Professionalism",
            GapRow::Accuracy => "Accuracy",
            GapRow::MedicalExpertise => "Overall Medical Expertise",
            GapRow::Satisfaction => "Satisfaction",
            GapRow::Trustworthiness => "Trustworthiness",
            GapRow::ConsumerPreference => "Overall Consumer Preference",
            GapRow::Overall => "Overall Performance",
        }
    }

    pub fn is_composite(self) -> bool {
        matches!(self, GapRow::MedicalExpertise | GapRow::ConsumerPreference | GapRow::Overall)
    }

    pub fn value(self, s: &EvalScores) -> f64 {
        match self {
            GapRow::Professionalism => s.professionalism,
            GapRow::Accuracy => s.accuracy,
            GapRow::MedicalExpertise => s.medical_expertise(),
            GapRow::Satisfaction => s.satisfaction,
            GapRow::Trustworthiness => s.trustworthiness,
            GapRow::ConsumerPreference => s.consumer_preference(),
            GapRow::Overall => s.overall(),
        }
    }
}

/// Per-row means, rounded to one decimal.
pub type RowMeans = [f64; 7];

pub fn row_means(scores: &[EvalScores]) -> Result<RowMeans, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    for s in scores {
        if let Some(v) = s.violations().into_iter().next() {
            return Err(EvalError::InvalidScores(v.to_string()));
        }
    }
    let n = scores.len() as f64;
    Ok(GapRow::ALL.map(|row| round_to(scores.iter().map(|s| row.value(s)).sum::<f64>() / n, 1)))
}

/// Relative gap of `model` to `human` in percent, to two decimals. Inputs are
/// taken at their one-decimal display precision.
pub fn gap_percent(model: f64, human: f64) -> f64 {
    let (m, h) = (round_to(model, 1), round_to(human, 1));
    round_to((m - h) / h * 100.0, 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    pub n: usize,
    pub means: RowMeans,
    pub gaps: [f64; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub model_n: usize,
    pub model: RowMeans,
    pub samples: Vec<GapSample>,
}

impl GapReport {
    pub fn gap(&self, sample: usize, row: GapRow) -> f64 {
        self.samples[sample].gaps[row as usize]
    }
}

/// Gap table from already-aggregated means (e.g. printed figures).
pub fn gap_table_from_means(
    model: RowMeans,
    model_n: usize,
    samples: &[(usize, RowMeans)],
) -> Result<GapReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyScores);
    }
    let mut out = Vec::with_capacity(samples.len());
    for (n, means) in samples {
        if means.iter().any(|h| round_to(*h, 1) == 0.0) {
            return Err(EvalError::ZeroBaseline);
        }
        let gaps = std::array::from_fn(|i| gap_percent(model[i], means[i]));
        out.push(GapSample { n: *n, means: *means, gaps });
    }
    Ok(GapReport { model_n, model, samples: out })
}

pub fn gap_table(model_scores: &[EvalScores], samples: &[Vec<EvalScores>]) -> Result<GapReport, EvalError> {
    let model = row_means(model_scores)?;
    let means = samples
        .iter()
        .map(|s| Ok((s.len(), row_means(s)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    gap_table_from_means(model, model_scores.len(), &means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn printed_examples() {
        assert_eq!(gap_percent(85.1, 87.4), -2.63);
        assert_eq!(gap_percent(82.7, 85.7), -3.50);
        assert_eq!(gap_percent(87.5, 87.5), 0.0);
    }

    #[test]
    fn composite_rows_average_components() {
        let s = EvalScores::new(80.0, 90.0, 70.0, 60.0);
        assert_eq!(GapRow::MedicalExpertise.value(&s), 85.0);
        assert_eq!(GapRow::ConsumerPreference.value(&s), 65.0);
        assert_eq!(GapRow::Overall.value(&s), 75.0);
    }

    #[test]
    fn table_from_scores() {
        let model = vec![EvalScores::new(90.0, 80.0, 85.0, 85.0), EvalScores::new(80.0, 80.0, 75.0, 85.0)];
        let human = vec![EvalScores::new(90.0, 90.0, 90.0, 90.0)];
        let r = gap_table(&model, &[human.clone(), human]).unwrap();
        assert_eq!(r.model[GapRow::Professionalism as usize], 85.0);
        assert_eq!(r.gap(0, GapRow::Professionalism), round_to(-5.0 / 90.0 * 100.0, 2));
        assert_eq!(r.gap(1, GapRow::Accuracy), round_to(-10.0 / 90.0 * 100.0, 2));
        assert_eq!(r.samples.len(), 2);
    }

    #[test]
    fn empty_and_invalid() {
        assert_eq!(gap_table(&[], &[]), Err(EvalError::EmptyScores));
        let bad = EvalScores::new(120.0, 0.0, 0.0, 0.0);
        assert!(matches!(row_means(&[bad]), Err(EvalError::InvalidScores(_))));
        let zero = EvalScores::new(0.0, 0.0, 0.0, 0.0);
        let ok = EvalScores::new(50.0, 50.0, 50.0, 50.0);
        assert_eq!(gap_table(&[ok], &[vec![zero]]), Err(EvalError::ZeroBaseline));
    }

    proptest! {
        #[test]
        fn gap_sign(m in 1u32..1000, h in 1u32..1000) {
            let (m, h) = (m as f64 / 10.0, h as f64 / 10.0);
            let g = gap_percent(m, h);
            prop_assert_eq!(g < 0.0, m < h);
            prop_assert_eq!(g == 0.0, m == h);
        }

        #[test]
        fn overall_is_mean_of_four(a in 0.0f64..100.0, b in 0.0f64..100.0, c in 0.0f64..100.0, d in 0.0f64..100.0) {
            let s = EvalScores::new(a, b, c, d);
            prop_assert!((GapRow::Overall.value(&s) - (a + b + c + d) / 4.0).abs() < 1e-9);
        }
    }
}
