//! Filterbank channel geometry shared by the ontology and the frontend.

/// Logarithmically spaced channel centre frequencies from `lo` to `hi` Hz inclusive.
pub fn log_spaced_centers(channels: usize, lo: f64, hi: f64) -> Vec<f64> {
    match channels {
        0 => Vec::new(),
        1 => vec![(lo * hi).sqrt()],
        n => {
            let ratio = (hi / lo).ln() / (n - 1) as f64;
            (0..n).map(|i| lo * (ratio * i as f64).exp()).collect()
        }
    }
}

/// Energy-weighted geometric centroid (Hz) of a non-negative profile over `centers`.
///
/// Returns `None` when the profile carries no energy.
pub fn geometric_centroid(profile: &[f64], centers: &[f64]) -> Option<f64> {
    let total: f64 = profile.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let log_mean = profile
        .iter()
        .zip(centers)
        .map(|(w, f)| w * f.ln())
        .sum::<f64>()
        / total;
    Some(log_mean.exp())
}

/// Moves spectral mass by `shift` channels (positive = upward in frequency).
///
/// Each channel's mass is split linearly between the two nearest destination
/// channels, so the first moment of an interior profile moves by exactly `shift`.
/// Mass pushed past either edge is discarded.
pub fn shift_profile(profile: &[f64], shift: f64) -> Vec<f64> {
    let n = profile.len();
    let mut out = vec![0.0; n];
    if shift == 0.0 {
        out.copy_from_slice(profile);
        return out;
    }
    for (i, &mass) in profile.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let pos = i as f64 + shift;
        let lo = pos.floor();
        let frac = pos - lo;
        let lo = lo as isize;
        if lo >= 0 && (lo as usize) < n {
            out[lo as usize] += mass * (1.0 - frac);
        }
        let hi = lo + 1;
        if hi >= 0 && (hi as usize) < n && frac > 0.0 {
            out[hi as usize] += mass * frac;
        }
    }
    out
}

/// Channel shift equivalent to scaling every frequency by `ratio` on a log-spaced bank.
pub fn ratio_to_channel_shift(ratio: f64, centers: &[f64]) -> f64 {
    if centers.len() < 2 {
        return 0.0;
    }
    let step = (centers[1] / centers[0]).ln();
    ratio.ln() / step
}
