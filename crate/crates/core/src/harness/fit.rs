//! Log–log least-squares fits of regret against horizon.

use serde::Serialize;

use crate::error::{BcoError, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Checkpoints dropped because their regret was not positive.
    pub excluded: Vec<f64>,
}

/// Fits `ln Reg = slope · ln T + intercept`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ExponentFit> {
    if points.len() < 4 {
        return Err(BcoError::Invariant(format!(
            "exponent fit needs at least 4 checkpoints, got {}",
            points.len()
        )));
    }
    let mut excluded = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, r) in points {
        if r > 0.0 && t > 0.0 {
            xs.push(t.ln());
            ys.push(r.ln());
        } else {
            log::warn!("checkpoint T = {t} has nonpositive regret {r}; excluded from the fit");
            excluded.push(t);
        }
    }
    if xs.len() < 2 {
        return Err(BcoError::Invariant(
            "fewer than two positive checkpoints".into(),
        ));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(BcoError::Invariant(
            "checkpoints share a single horizon".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
        excluded,
    })
}
