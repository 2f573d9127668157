use super::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const TRIM_WINDOW: usize = 1024;
pub const TRIM_HOP: usize = 256;
pub const TRIM_THRESHOLD_DB: f64 = 15.0;

/// Drops leading and trailing runs of windows whose peak amplitude is more
/// than `threshold_db` below the global peak. Interior quiet stretches are
/// kept.
pub fn trim_silence<T: Scalar>(y: &AudioSignal<T>, threshold_db: f64) -> Result<AudioSignal<T>> {
    y.require_nonempty("trim_silence")?;
    let x = y.samples();
    let global = y.peak();
    if global == T::zero() {
        return Err(Error::Empty("trim_silence: signal is entirely silent".into()));
    }
    let threshold = global * T::lit(10f64.powf(-threshold_db / 20.0));
    let quiet = |s: &[T]| s.iter().all(|v| v.abs() < threshold);
    let win = TRIM_WINDOW.min(x.len());

    let mut start = 0;
    let mut pos = 0;
    while pos + win <= x.len() && quiet(&x[pos..pos + win]) {
        start = pos + win;
        pos += TRIM_HOP;
    }
    let mut end = x.len();
    let mut pos = x.len();
    while pos >= win && quiet(&x[pos - win..pos]) {
        end = pos - win;
        if pos < TRIM_HOP {
            break;
        }
        pos -= TRIM_HOP;
    }
    // the global peak is never inside a quiet window, so start < end
    y.slice(start, end)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loud_edges_are_untouched() {
        let x: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.05).sin()).collect();
        let y = AudioSignal::new(x, 8000).unwrap();
        assert_eq!(trim_silence(&y, 15.0).unwrap(), y);
    }

    #[test]
    fn quiet_padding_is_removed_within_one_hop() {
        let (lead, body, tail) = (5000usize, 9000usize, 4321usize);
        let mut x = Vec::new();
        x.extend((0..lead).map(|i| 0.01 * (i as f64 * 0.3).sin()));
        x.extend((0..body).map(|i| (i as f64 * 0.2).sin().signum()));
        x.extend((0..tail).map(|i| 0.01 * (i as f64 * 0.7).cos()));
        let y = AudioSignal::new(x, 16_000).unwrap();
        let t = trim_silence(&y, 15.0).unwrap();
        let offset = (0..=y.len() - t.len()).find(|&o| y.samples()[o..o + t.len()] == *t.samples()).unwrap();
        assert!(offset <= lead && lead - offset < TRIM_HOP, "start {offset}");
        let end = offset + t.len();
        assert!(end >= lead + body && end - (lead + body) < TRIM_HOP, "end {end}");
    }

    #[test]
    fn all_zero_is_an_error() {
        let y = AudioSignal::new(vec![0.0f64; 4096], 8000).unwrap();
        assert!(matches!(trim_silence(&y, 15.0), Err(Error::Empty(_))));
    }
}
