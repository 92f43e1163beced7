use log::debug;

use super::FitHistory;
use crate::error::{Error, Result};

/// Starting log-exponents for rank `k` from the optima of ranks `k-1` and `k-2`.
///
/// Endpoints extrapolate by repeating the last gap; interior points blend
/// neighbouring rank `k-1` optima with ratios that reproduce how rank `k-1`
/// sat between rank `k-2` optima.
pub fn init_theta(history: &FitHistory, k: usize) -> Result<Vec<f64>> {
    let need = |rank: usize| -> Result<&[f64]> {
        history
            .theta_for_rank(rank)
            .ok_or_else(|| Error::Precondition(format!("rank {k} initialization needs the rank-{rank} optimum")))
    };
    match k {
        0 => Err(Error::Precondition("rank must be at least 1".into())),
        1 => Ok(vec![0.0]),
        2 => {
            let t1 = need(1)?[0];
            Ok(vec![t1 - 1.0, t1 + 1.0])
        }
        _ => {
            let prev = need(k - 1)?;
            let prev2 = need(k - 2)?;
            let mut theta = vec![0.0; k];
            theta[0] = prev[0] + (prev[0] - prev2[0]);
            theta[k - 1] = prev[k - 2] + (prev[k - 2] - prev2[k - 3]);
            let mut r_prev = 0.5;
            for i in 1..k - 1 {
                let r = if i == k - 2 {
                    if k == 3 {
                        0.5
                    } else {
                        r_prev
                    }
                } else {
                    interior_ratio(prev[i], prev2[i - 1], prev2[i])
                };
                theta[i] = r * prev[i - 1] + (1.0 - r) * prev[i];
                r_prev = r;
            }
            Ok(theta)
        }
    }
}

/// `r` with `t = r·lo + (1-r)·hi`.
fn interior_ratio(t: f64, lo: f64, hi: f64) -> f64 {
    let den = hi - lo;
    if den.abs() <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        debug!("degenerate gap in the rank-continuation history; using r = 1/2");
        return 0.5;
    }
    let r = (hi - t) / den;
    if r > 0.0 && r < 1.0 {
        r
    } else {
        r.clamp(0.1, 0.9)
    }
}
