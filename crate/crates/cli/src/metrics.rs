use crate::error::{CliError, Result};

/// Reported when the two maps agree exactly.
pub const PSNR_CAP_DB: f64 = 300.0;

/// `10·log10(peak² / MSE)` with `peak = max |reference|`, capped at
/// [`PSNR_CAP_DB`].
pub fn psnr(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(CliError::Config(format!(
            "PSNR of maps with {} and {} values",
            reference.len(),
            test.len()
        )));
    }
    if reference.is_empty() {
        return Err(CliError::Config("PSNR of empty maps".into()));
    }
    let peak = reference.iter().fold(0.0f64, |p, v| p.max(v.abs()));
    let sse: f64 = reference.iter().zip(test).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(psnr_from_sums(peak, sse, reference.len()))
}

/// PSNR from an accumulated squared error over `count` values.
pub fn psnr_from_sums(peak: f64, sse: f64, count: usize) -> f64 {
    let mse = sse / count as f64;
    if mse == 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB)
}

/// PSNR restricted to the pixels where `keep` holds.
pub fn psnr_masked(reference: &[f64], test: &[f64], keep: &[bool]) -> Result<Option<f64>> {
    if keep.len() != reference.len() {
        return Err(CliError::Config("mask size differs from map size".into()));
    }
    let (a, b): (Vec<f64>, Vec<f64>) =
        reference.iter().zip(test).zip(keep).filter(|(_, &k)| k).map(|((a, b), _)| (*a, *b)).unzip();
    if a.is_empty() {
        return Ok(None);
    }
    psnr(&a, &b).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_maps_hit_the_cap() {
        let a = [0.1, 0.5, 1.0];
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
    }

    #[test]
    fn uniform_offset_on_unit_peak() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.1).collect();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn invariant_to_joint_scaling() {
        let a = [0.2, 0.9, 0.4, 0.7];
        let b = [0.25, 0.85, 0.4, 0.75];
        let p = psnr(&a, &b).unwrap();
        for s in [1e-6, 3.0, 1e5] {
            let sa: Vec<f64> = a.iter().map(|v| v * s).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * s).collect();
            assert!((psnr(&sa, &sb).unwrap() - p).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(psnr(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn masked_skips_excluded_pixels() {
        let a = [1.0, 1.0, 5.0];
        let b = [1.0, 1.0, 0.0];
        assert_eq!(psnr_masked(&a, &b, &[true, true, false]).unwrap(), Some(PSNR_CAP_DB));
        assert_eq!(psnr_masked(&a, &b, &[false; 3]).unwrap(), None);
    }
}
