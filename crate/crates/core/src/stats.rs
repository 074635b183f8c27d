//! Batch-means standard errors and ordinary least squares.

/// Number of contiguous batches used for Monte Carlo standard errors.
pub const BATCHES: usize = 16;
/// Smallest reported standard error.
pub const STDERR_FLOOR: f64 = 1e-15;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and batch-means standard error over `BATCHES` contiguous batches.
pub fn batch_means(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let m = mean(values);
    if n < BATCHES {
        return (m, f64::INFINITY);
    }
    let size = n / BATCHES;
    let batch: Vec<f64> = (0..BATCHES).map(|b| mean(&values[b * size..(b + 1) * size])).collect();
    let bm = mean(&batch);
    let var = batch.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (m, (var / BATCHES as f64).sqrt().max(STDERR_FLOOR))
}

/// Least-squares line `y = slope * x + intercept`; `None` for fewer than 2 distinct x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|a| -0.7 * a + 2.0).collect();
        let (s, c) = linear_fit(&x, &y).unwrap();
        assert!((s + 0.7).abs() < 1e-12 && (c - 2.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn batch_stderr_matches_iid_scale() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..160_000).map(|_| rng.random::<f64>()).collect();
        let (m, se) = batch_means(&v);
        let iid = (1.0 / 12.0f64 / 160_000.0).sqrt();
        assert!((m - 0.5).abs() < 5.0 * iid);
        assert!(se > 0.4 * iid && se < 2.0 * iid, "{se} vs {iid}");
        let (_, se0) = batch_means(&[0.3; 64]);
        assert_eq!(se0, STDERR_FLOOR);
    }
}
