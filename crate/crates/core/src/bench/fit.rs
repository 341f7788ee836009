use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
}

/// Least-squares line through `(ln n, ln t)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::invalid("fit_loglog_slope", format!("need 3 distinct sizes, got {}", xs.len())));
    }
    if points.iter().any(|&(n, t)| !(n > 0.0 && t > 0.0)) {
        return Err(Error::invalid("fit_loglog_slope", "sizes and times must be positive"));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, t)| (n.ln(), t.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (logs.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / k).sqrt();
    Ok(LogLogFit {
        slope,
        intercept,
        residual,
    })
}

/// Percent runtime saved relative to attention; negative when slower.
pub fn speedup(t_attention: f64, t_alternative: f64) -> Result<f64> {
    if !(t_attention > 0.0) {
        return Err(Error::invalid("speedup", format!("baseline time {t_attention} must be positive")));
    }
    Ok((t_attention - t_alternative) / t_attention * 100.0)
}
