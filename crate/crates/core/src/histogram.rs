//! Locale height histograms, Gaussian smoothing and salient-curve detection.
//!
//! A salient curve is a maximal run of smoothed bins whose central second
//! difference is negative. The top two curves of a locale give the cut
//! height between the top canopy layer and the one below it.

use alloc::vec::Vec;

use crate::error::{invalid, Result};

pub const DEFAULT_BIN_WIDTH_M: f64 = 0.25;
pub const DEFAULT_SIGMA_M: f64 = 5.0;
/// Kernel support in standard deviations on each side.
pub const KERNEL_TRUNCATION_SIGMAS: f64 = 4.0;
pub const DEFAULT_MIN_CURVE_MASS: f64 = 1.0;
/// Reach of the Gaussian used for curvature evaluation, in standard
/// deviations. Beyond it the second difference is below 1e-7 of its peak.
pub const CURVATURE_SUPPORT_SIGMAS: f64 = 6.0;

/// Second differences above `-CURVATURE_EPS * peak` count as flat, which
/// keeps floating-point ripple on constant stretches out of the curve set.
const CURVATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HeightHistogram {
    pub bin_width: f64,
    /// `counts[b]` holds heights in `[b * bin_width, (b + 1) * bin_width)`.
    pub counts: Vec<u32>,
}

impl HeightHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[inline]
pub(crate) fn bin_of(height: f64, bin_width: f64) -> usize {
    libm::floor(height / bin_width) as usize
}

pub fn build_height_histogram(heights: &[f64], bin_width: f64) -> Result<HeightHistogram> {
    if !(bin_width > 0.0) {
        return Err(invalid("histogram bin width must be positive"));
    }
    let mut counts: Vec<u32> = Vec::new();
    for &h in heights {
        if !(h >= 0.0) || !h.is_finite() {
            return Err(invalid(alloc::format!(
                "histogram heights must be finite and non-negative, got {h}"
            )));
        }
        let b = bin_of(h, bin_width);
        if b >= counts.len() {
            counts.resize(b + 1, 0);
        }
        counts[b] += 1;
    }
    Ok(HeightHistogram { bin_width, counts })
}

/// Smoothed histogram. `values[i]` belongs to bin `first_bin + i`; the
/// zero-padded tails extend below bin 0 and above the last source bin so no
/// mass is lost.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedHistogram {
    pub bin_width: f64,
    pub sigma_m: f64,
    pub first_bin: i64,
    pub values: Vec<f64>,
    /// Second difference at each bin (first and last entries are 0),
    /// evaluated with the Gaussian continued past its truncation point so
    /// the cut-off steps of distant modes add no false inflections.
    pub curvature: Vec<f64>,
}

impl SmoothedHistogram {
    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Smoothed value at an absolute bin index (zero outside the array).
    pub fn value_at_bin(&self, bin: i64) -> f64 {
        let i = bin - self.first_bin;
        if i < 0 {
            return 0.0;
        }
        self.values.get(i as usize).copied().unwrap_or(0.0)
    }
}

/// Normalized Gaussian kernel truncated at ±4σ.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    weights: Vec<f64>,
    /// Untruncated minus truncated second-difference kernel at offsets
    /// `half..`, for curvature evaluation.
    curvature_tail: Vec<f64>,
    half: usize,
    sigma_m: f64,
    bin_width: f64,
}

impl GaussianKernel {
    pub fn new(sigma_m: f64, bin_width: f64) -> Result<Self> {
        if !(sigma_m > 0.0) || !(bin_width > 0.0) {
            return Err(invalid("smoothing sigma and bin width must be positive"));
        }
        let sigma_bins = sigma_m / bin_width;
        let half = libm::ceil(KERNEL_TRUNCATION_SIGMAS * sigma_bins) as usize;
        let mut weights: Vec<f64> = (0..=2 * half)
            .map(|j| {
                let d = j as f64 - half as f64;
                libm::exp(-d * d / (2.0 * sigma_bins * sigma_bins))
            })
            .collect();
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        let g = |d: usize| {
            let d = d as f64;
            libm::exp(-d * d / (2.0 * sigma_bins * sigma_bins)) / sum
        };
        let far = (libm::ceil(CURVATURE_SUPPORT_SIGMAS * sigma_bins) as usize).max(half + 2);
        let curvature_tail: Vec<f64> = (half..=far)
            .map(|m| {
                let extended = g(m - 1) - 2.0 * g(m) + g(m + 1);
                let truncated = if m == half {
                    g(m - 1) - 2.0 * g(m)
                } else if m == half + 1 {
                    g(m - 1)
                } else {
                    0.0
                };
                extended - truncated
            })
            .collect();
        Ok(Self {
            weights,
            curvature_tail,
            half,
            sigma_m,
            bin_width,
        })
    }

    pub fn sigma_bins(&self) -> f64 {
        self.sigma_m / self.bin_width
    }

    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Convolves `counts` into `out` (resized to `counts.len() + 2 * half`);
    /// `out[i]` corresponds to bin `i - half`.
    pub(crate) fn smooth_counts_into(&self, counts: &[u32], out: &mut Vec<f64>) {
        out.clear();
        if counts.is_empty() {
            return;
        }
        out.resize(counts.len() + 2 * self.half, 0.0);
        let klen = self.weights.len();
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            for (o, w) in out[i..i + klen].iter_mut().zip(&self.weights) {
                *o += c * w;
            }
        }
    }

    /// Second differences of the smoothed output `values` (as produced by
    /// [`Self::smooth_counts_into`] from `counts`), corrected for the kernel
    /// cut-off: every source bin's contribution is continued as an untruncated
    /// Gaussian out to [`CURVATURE_SUPPORT_SIGMAS`].
    pub(crate) fn curvature_into(&self, counts: &[u32], values: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let len = values.len();
        if len < 3 {
            out.resize(len, 0.0);
            return;
        }
        out.push(0.0);
        out.extend(values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]));
        out.push(0.0);
        let h = self.half;
        for (j, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let center = j + h;
            for (m, corr) in (h..).zip(&self.curvature_tail) {
                if let Some(o) = center.checked_sub(m).filter(|&o| o >= 1) {
                    out[o] += c * corr;
                }
                let o = center + m;
                if o + 1 < len {
                    out[o] += c * corr;
                }
            }
        }
    }

    pub fn smooth(&self, hist: &HeightHistogram) -> SmoothedHistogram {
        let mut values = Vec::new();
        let mut curvature = Vec::new();
        self.smooth_counts_into(&hist.counts, &mut values);
        self.curvature_into(&hist.counts, &values, &mut curvature);
        SmoothedHistogram {
            bin_width: hist.bin_width,
            sigma_m: self.sigma_m,
            first_bin: if values.is_empty() { 0 } else { -(self.half as i64) },
            values,
            curvature,
        }
    }
}

pub fn gaussian_smooth(hist: &HeightHistogram, sigma_m: f64) -> Result<SmoothedHistogram> {
    Ok(GaussianKernel::new(sigma_m, hist.bin_width)?.smooth(hist))
}

/// Maximal run of bins with negative second difference (inclusive bounds,
/// absolute bin indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SalientCurve {
    pub start_bin: i64,
    pub end_bin: i64,
    pub peak_value: f64,
    pub mass: f64,
}

impl SalientCurve {
    /// Outer lower boundary of the run, in meters.
    pub fn lower_edge_m(&self, bin_width: f64) -> f64 {
        self.start_bin as f64 * bin_width
    }

    /// Outer upper boundary of the run, in meters.
    pub fn upper_edge_m(&self, bin_width: f64) -> f64 {
        (self.end_bin + 1) as f64 * bin_width
    }

    pub fn contains_bin(&self, bin: i64) -> bool {
        self.start_bin <= bin && bin <= self.end_bin
    }
}

/// Scans from the highest bin downward and collects at most `limit` curves
/// with mass at least `min_mass`. `curvature[i]` is the second difference
/// at bin `i`.
pub(crate) fn curves_top_down(
    values: &[f64],
    curvature: &[f64],
    first_bin: i64,
    min_mass: f64,
    limit: usize,
    out: &mut Vec<SalientCurve>,
) {
    out.clear();
    let n = values.len();
    if n < 3 || limit == 0 {
        return;
    }
    let peak = values.iter().copied().fold(0.0f64, f64::max);
    let tol = CURVATURE_EPS * peak;
    let concave = |i: usize| curvature[i] < -tol;

    let mut i = n - 2;
    loop {
        if concave(i) {
            let end = i;
            let mut start = i;
            while start > 1 && concave(start - 1) {
                start -= 1;
            }
            let run = &values[start..=end];
            let mass: f64 = run.iter().sum();
            if mass >= min_mass {
                out.push(SalientCurve {
                    start_bin: first_bin + start as i64,
                    end_bin: first_bin + end as i64,
                    peak_value: run.iter().copied().fold(f64::MIN, f64::max),
                    mass,
                });
                if out.len() == limit {
                    return;
                }
            }
            if start <= 1 {
                return;
            }
            i = start - 1;
        } else {
            if i == 1 {
                return;
            }
            i -= 1;
        }
    }
}

/// All salient curves, ordered top-down (descending start height).
pub fn find_salient_curves(smooth: &SmoothedHistogram, min_curve_mass: f64) -> Vec<SalientCurve> {
    let mut out = Vec::new();
    curves_top_down(
        &smooth.values,
        &smooth.curvature,
        smooth.first_bin,
        min_curve_mass,
        usize::MAX,
        &mut out,
    );
    out
}

/// Cut height between the top two curves: the midpoint of the gap between
/// the lower edge of the top curve and the upper edge of the second.
/// `None` (take-all) with fewer than two curves.
pub fn cell_threshold(curves: &[SalientCurve], bin_width: f64) -> Option<f64> {
    let (top, second) = match curves {
        [top, second, ..] => (top, second),
        _ => return None,
    };
    let mid = 0.5 * (top.lower_edge_m(bin_width) + second.upper_edge_m(bin_width));
    Some(mid.max(0.0))
}

/// Convenience for tests and reports: smoothed histogram of raw heights.
pub fn smooth_heights(heights: &[f64], bin_width: f64, sigma_m: f64) -> Result<SmoothedHistogram> {
    gaussian_smooth(&build_height_histogram(heights, bin_width)?, sigma_m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    #[test]
    fn histogram_examples() {
        let h = build_height_histogram(&[0.1, 0.2], 0.25).unwrap();
        assert_eq!(h.counts, vec![2]);
        let h = build_height_histogram(&[10.0], 0.25).unwrap();
        assert_eq!(h.counts.len(), 41);
        assert_eq!(h.counts[40], 1);
        assert!(build_height_histogram(&[], 0.25).unwrap().is_empty());
        assert!(build_height_histogram(&[-0.01], 0.25).is_err());
    }

    #[test]
    fn kernel_sigma_is_twenty_bins_at_defaults() {
        let k = GaussianKernel::new(DEFAULT_SIGMA_M, DEFAULT_BIN_WIDTH_M).unwrap();
        assert_eq!(k.sigma_bins(), 20.0);
        assert_eq!(k.half_width(), 80);
        assert!((k.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impulse_reproduces_kernel() {
        let h = HeightHistogram {
            bin_width: 0.25,
            counts: vec![0, 0, 1],
        };
        let s = gaussian_smooth(&h, 5.0).unwrap();
        let peak = s.value_at_bin(2);
        let pdf0 = 1.0 / (20.0 * (2.0 * PI).sqrt());
        assert!((peak - pdf0).abs() < 1e-5, "{peak} vs {pdf0}");
        assert!((peak - 0.019947).abs() < 1e-5);
        assert!(s.values.iter().all(|&v| v <= peak));
    }

    #[test]
    fn constant_interior_is_preserved() {
        let h = HeightHistogram {
            bin_width: 0.25,
            counts: vec![7; 400],
        };
        let s = gaussian_smooth(&h, 5.0).unwrap();
        for b in 100..300 {
            assert!((s.value_at_bin(b) - 7.0).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_histogram_smooths_to_empty() {
        let h = HeightHistogram {
            bin_width: 0.25,
            counts: vec![],
        };
        assert!(gaussian_smooth(&h, 5.0).unwrap().values.is_empty());
    }

    fn gaussian_bump_counts(centers_m: &[f64], sigma_m: f64, mass: f64, len: usize) -> Vec<u32> {
        (0..len)
            .map(|b| {
                let h = (b as f64 + 0.5) * 0.25;
                centers_m
                    .iter()
                    .map(|c| {
                        let z = (h - c) / sigma_m;
                        mass * 0.25 / (sigma_m * (2.0 * PI).sqrt()) * (-0.5 * z * z).exp()
                    })
                    .sum::<f64>()
                    .round() as u32
            })
            .collect()
    }

    #[test]
    fn single_bump_gives_one_curve_containing_peak() {
        let counts = gaussian_bump_counts(&[20.0], 2.0, 1000.0, 140);
        let s = gaussian_smooth(
            &HeightHistogram {
                bin_width: 0.25,
                counts,
            },
            5.0,
        )
        .unwrap();
        let curves = find_salient_curves(&s, 1.0);
        assert_eq!(curves.len(), 1);
        let peak_bin = argmax_bin(&s);
        assert!(curves[0].contains_bin(peak_bin));
    }

    fn argmax_bin(s: &SmoothedHistogram) -> i64 {
        let (i, _) = s
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        s.first_bin + i as i64
    }

    /// Independent route: the smoothed two-bump histogram is, up to binning,
    /// a sum of two Gaussians with sigma sqrt(2^2 + 5^2). Counting the
    /// concave runs of that analytic curve by brute force gives the expected
    /// curve count and their peak locations.
    #[test]
    fn two_bumps_fifteen_meters_apart_give_two_curves() {
        let centers = [10.0, 25.0];
        let counts = gaussian_bump_counts(&centers, 2.0, 1000.0, 160);
        let s = gaussian_smooth(
            &HeightHistogram {
                bin_width: 0.25,
                counts,
            },
            5.0,
        )
        .unwrap();
        let curves = find_salient_curves(&s, 1.0);

        let sig = (4.0f64 + 25.0).sqrt();
        let f = |h: f64| -> f64 { centers.iter().map(|c| (-0.5 * ((h - c) / sig).powi(2)).exp()).sum() };
        let mut runs = 0;
        let mut inside = false;
        let dh = 0.25;
        let mut h = -20.0;
        while h < 60.0 {
            let d2 = f(h - dh) - 2.0 * f(h) + f(h + dh);
            if d2 < 0.0 && !inside {
                runs += 1;
            }
            inside = d2 < 0.0;
            h += dh;
        }
        assert_eq!(runs, 2);
        assert_eq!(curves.len(), 2);
        assert!(curves[0].contains_bin(100)); // 25 m
        assert!(curves[1].contains_bin(40)); // 10 m
        assert!(curves[0].start_bin > curves[1].end_bin);
    }

    #[test]
    fn linear_ramp_has_no_curves() {
        let values: Vec<f64> = (0..50).map(|i| i as f64 * 2.0).collect();
        let s = SmoothedHistogram {
            bin_width: 0.25,
            sigma_m: 5.0,
            first_bin: 0,
            curvature: (0..50)
                .map(|i| {
                    if i == 0 || i == 49 {
                        0.0
                    } else {
                        values[i - 1] - 2.0 * values[i] + values[i + 1]
                    }
                })
                .collect(),
            values,
        };
        assert!(find_salient_curves(&s, 0.0).is_empty());
    }

    #[test]
    fn threshold_examples() {
        let c = |lo_m: f64, hi_m: f64| SalientCurve {
            start_bin: (lo_m / 0.25) as i64,
            end_bin: (hi_m / 0.25) as i64 - 1,
            peak_value: 1.0,
            mass: 10.0,
        };
        assert_eq!(cell_threshold(&[c(20.0, 30.0), c(8.0, 16.0)], 0.25), Some(18.0));
        assert_eq!(cell_threshold(&[c(12.0, 20.0), c(4.0, 12.0)], 0.25), Some(12.0));
        assert_eq!(cell_threshold(&[c(12.0, 20.0)], 0.25), None);
        assert_eq!(cell_threshold(&[], 0.25), None);
    }

    #[test]
    fn mass_filter_drops_ripples() {
        let counts = gaussian_bump_counts(&[20.0], 2.0, 1000.0, 140);
        let s = gaussian_smooth(
            &HeightHistogram {
                bin_width: 0.25,
                counts,
            },
            5.0,
        )
        .unwrap();
        let all = find_salient_curves(&s, 0.0);
        let kept = find_salient_curves(&s, 1.0);
        assert!(all.len() >= kept.len());
        assert!(kept.iter().all(|c| c.mass >= 1.0));
    }

    proptest! {
        #[test]
        fn smoothing_conserves_mass(counts in proptest::collection::vec(0u32..500, 0..200)) {
            let h = HeightHistogram { bin_width: 0.25, counts };
            let s = gaussian_smooth(&h, 5.0).unwrap();
            let total = h.total() as f64;
            if total > 0.0 {
                prop_assert!((s.total_mass() - total).abs() <= 1e-6 * total);
            }
            prop_assert!(s.values.iter().all(|&v| v >= 0.0));
            prop_assert!(s.values.len() >= h.counts.len());
        }

        #[test]
        fn local_maxima_lie_in_some_curve(heights in proptest::collection::vec(0.0f64..40.0, 1..300)) {
            let s = smooth_heights(&heights, 0.25, 5.0).unwrap();
            // every concave run, before any salience filter
            let mut curves = Vec::new();
            curves_top_down(&s.values, &s.curvature, s.first_bin, 0.0, usize::MAX, &mut curves);
            let v = &s.values;
            for i in 1..v.len().saturating_sub(1) {
                if v[i] > 0.0 && v[i] > v[i - 1] && v[i] >= v[i + 1] {
                    let bin = s.first_bin + i as i64;
                    prop_assert!(curves.iter().any(|c| c.contains_bin(bin)), "max at bin {} uncovered", bin);
                }
            }
            for c in &curves {
                for b in c.start_bin..=c.end_bin {
                    prop_assert!(s.curvature[(b - s.first_bin) as usize] < 0.0);
                }
            }
        }
    }
}
