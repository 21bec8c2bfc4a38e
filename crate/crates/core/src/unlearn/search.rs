use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::SignalTable;

/// Step of the forward difference estimating `h'(0)`.
pub const SLOPE_STEP: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-4;
/// Values of `h` up to this size are rounding noise and count as zero.
pub const H_FLOOR: f64 = 1e-13;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ZeroBracket {
    /// `h(lo) ≤ H_FLOOR < h(hi)`.
    Interval { lo: f64, hi: f64 },
    /// `h ≤ 0` on the whole sampled range up to 1.
    CappedAtOne,
    /// Slope at 0 is not negative; nothing to search.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSearchResult {
    pub eta_max: f64,
    pub admissible: bool,
    pub slope_at_zero: f64,
    /// Every evaluation `(η, h(η))`, starting with `(0, 0)`.
    pub h_samples: Vec<(f64, f64)>,
    pub zero_bracket: ZeroBracket,
}

impl EtaSearchResult {
    pub fn is_capped(&self) -> bool {
        self.zero_bracket == ZeroBracket::CappedAtOne
    }
}

/// Largest `η ∈ [0, 1]` with `h(η) ≤ 0` for a convex `h` with `h(0) = 0`.
///
/// The returned η is on the non-positive side of the root (up to
/// [`H_FLOOR`]) and within `tol` of it, with `|h(η)| ≤ tol` unless capped
/// at 1.
pub fn find_eta_max_with(
    mut h: impl FnMut(f64) -> Result<f64>,
    tol: f64,
) -> Result<EtaSearchResult> {
    if !(tol > 0.0) || tol >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance {tol} must be in (0, 1)"
        )));
    }
    let mut samples = vec![(0.0, 0.0)];
    let mut eval = |eta: f64, samples: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = h(eta)?;
        if v.is_nan() {
            return Err(Error::NonFinite("h(η)"));
        }
        samples.push((eta, v));
        Ok(v)
    };
    let slope = eval(SLOPE_STEP, &mut samples)? / SLOPE_STEP;
    if !(slope < 0.0) {
        return Ok(EtaSearchResult {
            eta_max: 0.0,
            admissible: false,
            slope_at_zero: slope,
            h_samples: samples,
            zero_bracket: ZeroBracket::None,
        });
    }
    let (mut lo, mut h_lo) = (0.0, 0.0);
    let mut eta = tol;
    let mut hi = loop {
        let v = eval(eta, &mut samples)?;
        if v > H_FLOOR {
            break eta;
        }
        (lo, h_lo) = (eta, v);
        if eta >= 1.0 {
            return Ok(EtaSearchResult {
                eta_max: 1.0,
                admissible: true,
                slope_at_zero: slope,
                h_samples: samples,
                zero_bracket: ZeroBracket::CappedAtOne,
            });
        }
        eta = (2.0 * eta).min(1.0);
    };
    for _ in 0..MAX_BISECTIONS {
        if hi - lo < tol && h_lo.abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = eval(mid, &mut samples)?;
        if v > H_FLOOR {
            hi = mid;
        } else {
            (lo, h_lo) = (mid, v);
        }
    }
    Ok(EtaSearchResult {
        eta_max: lo,
        admissible: true,
        slope_at_zero: slope,
        h_samples: samples,
        zero_bracket: ZeroBracket::Interval { lo, hi },
    })
}

pub fn find_eta_max(table: &SignalTable, tol: f64) -> Result<EtaSearchResult> {
    find_eta_max_with(|eta| table.h(eta), tol)
}

/// `h` on an even grid of `steps + 1` points over `[0, 1]`.
pub fn h_curve(table: &SignalTable, steps: usize) -> Result<Vec<(f64, f64)>> {
    if steps == 0 {
        return Err(Error::InvalidArgument(
            "grid needs at least one step".into(),
        ));
    }
    (0..=steps)
        .map(|k| {
            let eta = k as f64 / steps as f64;
            Ok((eta, table.h(eta)?))
        })
        .collect()
}

pub fn h_curve_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("eta,h\n");
    for (eta, h) in points {
        out.push_str(&format!("{eta:?},{h:?}\n"));
    }
    out
}

/// `h(η_{k+1}) − 2h(η_k) + h(η_{k−1})` over consecutive points.
pub fn second_differences(points: &[(f64, f64)]) -> Vec<f64> {
    points
        .windows(3)
        .map(|w| w[2].1 - 2.0 * w[1].1 + w[0].1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_stub() {
        let tol = 1e-4;
        let r = find_eta_max_with(|e| Ok(e * (e - 0.6)), tol).unwrap();
        assert!(r.admissible);
        assert!((r.eta_max - 0.6).abs() <= tol, "{}", r.eta_max);
        assert!(r.eta_max * (r.eta_max - 0.6) <= H_FLOOR);
        assert_eq!(r.h_samples[0], (0.0, 0.0));
    }

    #[test]
    fn flat_h_is_not_admissible() {
        let r = find_eta_max_with(|_| Ok(0.0), 1e-4).unwrap();
        assert!(!r.admissible);
        assert_eq!(r.eta_max, 0.0);
        assert_eq!(r.zero_bracket, ZeroBracket::None);
    }

    #[test]
    fn negative_everywhere_caps() {
        let r = find_eta_max_with(|e| Ok(-e), 1e-4).unwrap();
        assert!(r.is_capped());
        assert_eq!(r.eta_max, 1.0);
    }

    #[test]
    fn steep_root_meets_value_tolerance() {
        let tol = 1e-4;
        let r = find_eta_max_with(|e| Ok(500.0 * e * (e - 0.3)), tol).unwrap();
        let h = 500.0 * r.eta_max * (r.eta_max - 0.3);
        assert!(h <= H_FLOOR && h.abs() <= tol);
    }

    #[test]
    fn rounding_noise_at_one_still_caps() {
        let r = find_eta_max_with(|e| Ok(-e * (1.0 - e) + 1e-17), 1e-4).unwrap();
        assert!(r.is_capped());
    }

    #[test]
    fn csv_layout() {
        let csv = h_curve_csv(&[(0.0, 0.0), (0.5, -0.25)]);
        assert_eq!(csv, "eta,h\n0.0,0.0\n0.5,-0.25\n");
    }

    proptest! {
        #[test]
        fn root_of_any_parabola(root in 0.001f64..0.999, scale in 0.01f64..50.0) {
            let tol = 1e-4;
            let r = find_eta_max_with(|e| Ok(scale * e * (e - root)), tol).unwrap();
            prop_assert!(r.eta_max <= root + 1e-9);
            prop_assert!(root - r.eta_max <= tol);
        }
    }
}
