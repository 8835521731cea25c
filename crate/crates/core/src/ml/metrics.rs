use super::MlError;

/// Which score a task reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Accuracy,
    R2,
}

impl ScoreKind {
    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Accuracy => "accuracy",
            ScoreKind::R2 => "r2",
        }
    }
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> Result<f64, MlError> {
    if truth.len() != predicted.len() {
        return Err(MlError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(MlError::Empty);
    }
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Coefficient of determination. Undefined (an error, never NaN) for fewer
/// than two samples or a constant target.
pub fn r2(truth: &[f64], predicted: &[f64]) -> Result<f64, MlError> {
    if truth.len() != predicted.len() {
        return Err(MlError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.len() < 2 {
        return Err(MlError::UndefinedScore("fewer than two samples"));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(MlError::UndefinedScore("target is constant"));
    }
    let ss_res: f64 = truth.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}
