use alloc::vec::Vec;

use crate::nn::KernelMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InstabilityOptions {
    /// A drift above `factor` times the median of earlier drifts fires.
    pub drift_factor: f64,
    /// A train loss above `factor` times the previous logged loss fires...
    pub loss_factor: f64,
    /// ...if it also exceeds this fraction of the initial loss.
    pub loss_floor: f64,
    /// Earlier drifts needed before the median test applies.
    pub min_history: usize,
}

impl Default for InstabilityOptions {
    fn default() -> Self {
        Self { drift_factor: 10.0, loss_factor: 10.0, loss_floor: 1e-3, min_history: 2 }
    }
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// `(step, mean |Theta(step) - Theta(previous snapshot)|)`.
pub fn drift_series(snapshots: &[(usize, KernelMatrix)]) -> Vec<(usize, f64)> {
    snapshots.windows(2).map(|w| (w[1].0, w[1].1.mean_abs_diff(&w[0].1))).collect()
}

/// Earliest step at which the kernel jumps or the loss spikes.
pub fn detect_instability(
    drifts: &[(usize, f64)],
    losses: &[(usize, f64)],
    opts: &InstabilityOptions,
) -> Option<usize> {
    detect_from(drifts, losses, losses.first().map(|l| l.1), opts)
}

fn detect_from(
    drifts: &[(usize, f64)],
    losses: &[(usize, f64)],
    initial: Option<f64>,
    opts: &InstabilityOptions,
) -> Option<usize> {
    let mut first: Option<usize> = None;
    for k in opts.min_history..drifts.len() {
        let prior: Vec<f64> = drifts[..k].iter().map(|d| d.1).collect();
        let (step, d) = drifts[k];
        if d > opts.drift_factor * median(&prior) {
            first = Some(step);
            break;
        }
    }
    if let Some(initial) = initial {
        for w in losses.windows(2) {
            let (step, l) = w[1];
            if !l.is_finite() || (l > opts.loss_factor * w[0].1 && l > opts.loss_floor * initial) {
                if first.is_none_or(|f| step < f) {
                    first = Some(step);
                }
                break;
            }
        }
    }
    first
}

/// First instability at or after `from` that follows at least `quiet` steps
/// without one. Flags inside a noisy stretch restart the search just past
/// them, with a fresh drift history. The loss floor stays relative to the
/// first loss of the whole run.
pub fn detect_after_quiet(
    drifts: &[(usize, f64)],
    losses: &[(usize, f64)],
    from: usize,
    quiet: usize,
    opts: &InstabilityOptions,
) -> Option<usize> {
    let initial = losses.first().map(|l| l.1);
    let mut start = from;
    loop {
        let d: Vec<_> = drifts.iter().copied().filter(|&(s, _)| s > start).collect();
        let l: Vec<_> = losses.iter().copied().filter(|&(s, _)| s >= start).collect();
        let hit = detect_from(&d, &l, initial, opts)?;
        if hit >= start + quiet {
            return Some(hit);
        }
        start = hit;
    }
}
