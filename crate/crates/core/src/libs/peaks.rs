//! Peak detection: local maxima filtered by height and topographic
//! prominence.

use serde::{Deserialize, Serialize};

use crate::spectra::Spectrum;

/// Default thresholds on [0, 1]-normalized spectra.
pub const MIN_PEAK_HEIGHT: f64 = 0.01;
pub const MIN_PEAK_PROMINENCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub index: usize,
    pub wavelength_nm: f64,
    pub height: f64,
    pub prominence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
    pub min_height: f64,
    pub min_prominence: f64,
}

impl PeakList {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }
}

/// Find local maxima of the spectrum. A maximum is a sample strictly greater
/// than its neighbors; plateaus count once, at their center bin. Prominence
/// is the height above the higher of the two base saddles, where each base is
/// the minimum between the peak and the nearest strictly higher sample (or
/// the signal edge).
pub fn detect_peaks(spectrum: &Spectrum, min_height: f64, min_prominence: f64) -> PeakList {
    let v = spectrum.values();
    let n = v.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 <= n.saturating_sub(1) {
        if v[i] > v[i - 1] {
            // Possible peak; extend over a plateau of equal values.
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let mid = (i + j) / 2;
                let height = v[mid];
                if height >= min_height {
                    let prominence = prominence_at(v, mid);
                    if prominence >= min_prominence {
                        peaks.push(Peak {
                            index: mid,
                            wavelength_nm: spectrum.grid().position(mid),
                            height,
                            prominence,
                        });
                    }
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    PeakList { peaks, min_height, min_prominence }
}

fn prominence_at(v: &[f64], peak: usize) -> f64 {
    let h = v[peak];
    // Left base: minimum between the peak and the nearest higher sample on
    // the left (or the left edge).
    let mut left_min = h;
    let mut k = peak;
    while k > 0 {
        k -= 1;
        if v[k] > h {
            break;
        }
        left_min = left_min.min(v[k]);
    }
    let mut right_min = h;
    let mut k = peak;
    while k + 1 < v.len() {
        k += 1;
        if v[k] > h {
            break;
        }
        right_min = right_min.min(v[k]);
    }
    h - left_min.max(right_min)
}
