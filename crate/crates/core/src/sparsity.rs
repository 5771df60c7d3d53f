//! Simplex projections that produce exact zeros: plain sparsemax, and the
//! neighbourhood-aware variant that orders candidates by credibility before
//! applying the sparsemax support rule.

use crate::error::{Error, Result};
use crate::sphere::AnchorSet;

/// Floor for the similarity term before dividing by it.
const SIMILARITY_FLOOR: f64 = 1e-30;

/// Inputs whose sum deviates from one by more than this are reported.
pub const SUM_TOLERANCE: f64 = 1e-6;

fn check_finite(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::invalid("input vector is empty"));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("entry {i} is not finite")));
    }
    Ok(())
}

/// Euclidean projection of `z` onto the probability simplex.
pub fn sparsemax(z: &[f64]) -> Result<Vec<f64>> {
    check_finite(z)?;
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut kappa = 1;
    let mut support_sum = sorted[0];
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let k1 = (k + 1) as f64;
        if 1.0 + k1 * v > cumsum {
            kappa = k + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / kappa as f64;
    Ok(z.iter().map(|v| (v - tau).max(0.0)).collect())
}

/// Intermediate quantities of [`slsparsemax`].
#[derive(Debug, Clone, PartialEq)]
pub struct CredibilityReport {
    /// `P - max(P)`; the maximum maps to zero.
    pub p_norm: Vec<f64>,
    /// `exp(-|p_norm_i - mean of neighbours' p_norm|)`.
    pub p_simi: Vec<f64>,
    /// `p_norm / p_simi`.
    pub p_cred: Vec<f64>,
    /// Indices sorted by credibility, descending, ties by ascending index.
    pub order: Vec<usize>,
    /// Retained count.
    pub kappa: usize,
    pub tau: f64,
    pub input_sum: f64,
}

impl CredibilityReport {
    /// True when the input was not a distribution, so the output need not
    /// sum to one either.
    pub fn input_not_normalized(&self) -> bool {
        (self.input_sum - 1.0).abs() > SUM_TOLERANCE
    }
}

/// Normalises against the maximum, scores each entry by its similarity to
/// its anchor neighbourhood, and sorts by the resulting credibility.
/// `kappa` and `tau` are left at zero.
pub fn credibility(p: &[f64], anchors: &AnchorSet) -> Result<CredibilityReport> {
    check_finite(p)?;
    if p.len() != anchors.len() {
        return Err(Error::invalid(format!(
            "{} entries for {} anchors",
            p.len(),
            anchors.len()
        )));
    }
    if anchors.k_nn() == 0 {
        return Err(Error::invalid("credibility needs nonempty neighbourhoods"));
    }
    let max = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let p_norm: Vec<f64> = p.iter().map(|v| v - max).collect();
    let p_simi: Vec<f64> = (0..p.len())
        .map(|i| {
            let nb = anchors.neighbors(i);
            let mean = nb.iter().map(|&j| p_norm[j]).sum::<f64>() / nb.len() as f64;
            (-(p_norm[i] - mean).abs()).exp()
        })
        .collect();
    let p_cred: Vec<f64> = p_norm
        .iter()
        .zip(&p_simi)
        .map(|(n, s)| n / s.max(SIMILARITY_FLOOR))
        .collect();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p_cred[b].total_cmp(&p_cred[a]).then(a.cmp(&b)));
    Ok(CredibilityReport {
        p_norm,
        p_simi,
        p_cred,
        order,
        kappa: 0,
        tau: 0.0,
        input_sum: p.iter().sum(),
    })
}

/// Sparsemax with candidates visited in credibility order.
///
/// The support rule compares against the smallest value seen so far in the
/// prefix, not the last one: credibility order need not follow value order.
/// `κ` is the largest prefix length `k` with `1 + k·min(prefix) > Σ prefix`,
/// `τ = (Σ_{first κ} P - 1)/κ`, and every entry becomes `max(P_i - τ, 0)`.
///
/// The input is not renormalised; see [`CredibilityReport::input_not_normalized`].
pub fn slsparsemax(p: &[f64], anchors: &AnchorSet) -> Result<(Vec<f64>, CredibilityReport)> {
    let mut report = credibility(p, anchors)?;
    let mut cumsum = 0.0;
    let mut running_min = f64::INFINITY;
    let mut kappa = 1;
    let mut support_sum = p[report.order[0]];
    for (k, &i) in report.order.iter().enumerate() {
        cumsum += p[i];
        running_min = running_min.min(p[i]);
        if 1.0 + (k + 1) as f64 * running_min > cumsum {
            kappa = k + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / kappa as f64;
    report.kappa = kappa;
    report.tau = tau;
    if report.input_not_normalized() {
        log::debug!(
            "slsparsemax input sums to {}, output is not a distribution",
            report.input_sum
        );
    }
    Ok((p.iter().map(|v| (v - tau).max(0.0)).collect(), report))
}
