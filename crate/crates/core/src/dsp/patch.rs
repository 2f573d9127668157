use super::AudioSignal;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Patch base length used for full-rate training (0.682 s at 48 kHz).
pub const PATCH_BASE: usize = 32_768;

/// `base - base mod r`, so the patch divides evenly by the ratio.
pub fn patch_length(base: usize, r: usize) -> usize {
    base - base % r
}

/// Contiguous patch of `patch_length(base, r)` samples at a uniformly drawn offset.
pub fn extract_patch<T: Scalar>(y: &AudioSignal<T>, r: usize, base: usize, rng: &mut Rng) -> Result<AudioSignal<T>> {
    if r == 0 {
        return Err(Error::InvalidArgument("ratio must be positive".into()));
    }
    let len = patch_length(base, r);
    if len == 0 || y.len() < len {
        return Err(Error::InvalidArgument(format!(
            "signal of {} samples is shorter than the {len}-sample patch",
            y.len()
        )));
    }
    let start = rng.below(y.len() - len + 1);
    y.slice(start, start + len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_follow_ratio() {
        assert_eq!(patch_length(PATCH_BASE, 2), 32_768);
        assert_eq!(patch_length(PATCH_BASE, 3), 32_766);
    }

    #[test]
    fn patch_is_a_contiguous_slice() {
        let y = AudioSignal::new((0..40_000).map(|i| i as f64).collect(), 48_000).unwrap();
        let mut rng = Rng::new(9);
        for r in [2, 3] {
            let p = extract_patch(&y, r, PATCH_BASE, &mut rng).unwrap();
            assert_eq!(p.len() % r, 0);
            let start = p.samples()[0] as usize;
            assert_eq!(p.samples(), &y.samples()[start..start + p.len()]);
        }
    }

    #[test]
    fn short_signal_is_rejected() {
        let y = AudioSignal::new(vec![0.0f64; 100], 48_000).unwrap();
        assert!(extract_patch(&y, 2, PATCH_BASE, &mut Rng::new(0)).is_err());
    }
}
