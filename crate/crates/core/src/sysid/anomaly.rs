use super::SysidError;
use crate::dynamics::Signal;

/// Fraction of the residual record taken as the healthy baseline.
pub const DEFAULT_HEALTHY_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anomaly {
    pub t_start: f64,
    pub t_end: f64,
    /// Peak of |window mean − baseline mean| in units of σ/√window.
    pub score: f64,
}

/// [`detect_anomaly_with_prefix`] with the first 20% of the record as the
/// healthy baseline.
pub fn detect_anomaly(residuals: &Signal, window: usize, threshold_sigma: f64) -> Result<Vec<Anomaly>, SysidError> {
    let prefix = (residuals.len() as f64 * DEFAULT_HEALTHY_FRACTION).floor() as usize;
    detect_anomaly_with_prefix(residuals, window, threshold_sigma, prefix)
}

/// Flags every maximal run of samples where the trailing `window`-sample
/// mean departs from the baseline mean by more than
/// `threshold_sigma·σ/√window`; mean and σ come from the first
/// `healthy_len` samples. Each run is reported by the times of its first and
/// last window ends.
pub fn detect_anomaly_with_prefix(
    residuals: &Signal,
    window: usize,
    threshold_sigma: f64,
    healthy_len: usize,
) -> Result<Vec<Anomaly>, SysidError> {
    if window < 2 {
        return Err(SysidError::Window(window));
    }
    if healthy_len < window || healthy_len > residuals.len() {
        return Err(SysidError::Prefix {
            prefix: healthy_len,
            window,
        });
    }
    let r = residuals.values();
    let base = &r[..healthy_len];
    let mean = base.iter().sum::<f64>() / healthy_len as f64;
    let var = base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (healthy_len - 1) as f64;
    let scale = var.sqrt() / (window as f64).sqrt();

    let mut prefix = Vec::with_capacity(r.len() + 1);
    prefix.push(0.0);
    for v in r {
        prefix.push(prefix.last().unwrap() + (v - mean));
    }
    let mut out = Vec::new();
    let mut open: Option<(usize, usize, f64)> = None;
    for k in window - 1..r.len() {
        let dev = ((prefix[k + 1] - prefix[k + 1 - window]) / window as f64).abs();
        let score = if scale > 0.0 {
            dev / scale
        } else if dev > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if score > threshold_sigma {
            open = Some(match open {
                Some((s, _, peak)) => (s, k, peak.max(score)),
                None => (k, k, score),
            });
        } else if let Some((s, e, peak)) = open.take() {
            out.push(anomaly(residuals, s, e, peak));
        }
    }
    if let Some((s, e, peak)) = open {
        out.push(anomaly(residuals, s, e, peak));
    }
    Ok(out)
}

fn anomaly(sig: &Signal, s: usize, e: usize, score: f64) -> Anomaly {
    Anomaly {
        t_start: sig.time(s),
        t_end: sig.time(e),
        score,
    }
}
