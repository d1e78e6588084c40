//! Least-squares slope of `ln(error)` against `ln(n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares on `(ln n, ln error)` for snapshots with
/// `lo ≤ n ≤ hi` and `error > 0`.
pub fn fit_loglog(snapshots: &[(u64, f64)], window: (u64, u64)) -> Result<RateFit> {
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> = snapshots
        .iter()
        .filter(|(n, e)| *n >= lo && *n <= hi && *n > 0 && *e > 0.0 && e.is_finite())
        .map(|&(n, e)| ((n as f64).ln(), e.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} usable snapshots in [{lo}, {hi}], need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all snapshots share the same n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::snapshot_grid;
    use crate::rng::StreamRng;

    fn synthetic(mut f: impl FnMut(f64) -> f64) -> Vec<(u64, f64)> {
        snapshot_grid(1_000_000)
            .into_iter()
            .map(|n| (n, f(n as f64)))
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_loglog(&synthetic(|n| n.powf(-0.5)), (1, u64::MAX)).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let fit = fit_loglog(&synthetic(|n| 3.0 * n.powf(-0.3)), (1, u64::MAX)).unwrap();
        assert!((fit.slope + 0.3).abs() < 1e-12);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn noisy_slope_is_recovered() {
        let mut rng = StreamRng::new(5, 0);
        let data = synthetic(|n| 2.0 * n.powf(-0.45) * (1.0 + rng.uniform_in(-0.2, 0.2)));
        let fit = fit_loglog(&data, (1000, 1_000_000)).unwrap();
        assert!((fit.slope + 0.45).abs() < 0.05, "{fit:?}");
        assert!((0.0..=1.0).contains(&fit.r_squared));
    }

    #[test]
    fn window_and_point_count() {
        let data = synthetic(|n| 1.0 / n);
        let fit = fit_loglog(&data, (1000, 1_000_000)).unwrap();
        assert!(
            data.iter()
                .filter(|(n, _)| (1000..=1_000_000).contains(n))
                .count()
                == fit.points
        );
        assert!(matches!(fit_loglog(&data, (100, 300)), Err(Error::Fit(_))));
        let zeros: Vec<(u64, f64)> = (1..10).map(|n| (n, 0.0)).collect();
        assert!(matches!(fit_loglog(&zeros, (1, 10)), Err(Error::Fit(_))));
    }
}
