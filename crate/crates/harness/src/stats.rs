use serde::Serialize;

/// Mean, sample standard deviation and 95% confidence half-width
/// (normal approximation). The spread is `None` for a single run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: usize,
    pub mean: f64,
    pub std: Option<f64>,
    pub ci95: Option<f64>,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate { runs: 0, mean: f64::NAN, std: None, ci95: None };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Aggregate { runs: 1, mean, std: None, ci95: None };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    Aggregate { runs: n, mean, std: Some(std), ci95: Some(1.96 * std / (n as f64).sqrt()) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_run_has_no_spread() {
        let a = aggregate(&[1.2]);
        assert_eq!((a.runs, a.mean, a.std, a.ci95), (1, 1.2, None, None));
    }

    #[test]
    fn sample_statistics() {
        let a = aggregate(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(a.mean, 2.5);
        let std = (5.0f64 / 3.0).sqrt();
        assert_relative_eq!(a.std.unwrap(), std, epsilon = 1e-12);
        assert_relative_eq!(a.ci95.unwrap(), 1.96 * std / 2.0, epsilon = 1e-12);
    }
}
