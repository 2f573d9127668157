use super::{NoiseLevel, NoiseSchedule};
use crate::dsp::AudioSignal;
use crate::error::{Error, Result};
use crate::model::NuWaveNetwork;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Anything that predicts the noise in `y_t` given the low-rate conditioner.
pub trait NoiseEstimator<T: Scalar> {
    fn upscale_ratio(&self) -> usize;
    fn estimate(&self, y_t: &[T], y_d: &[T], level: NoiseLevel<T>) -> Result<Vec<T>>;
}

impl<T: Scalar> NoiseEstimator<T> for NuWaveNetwork<T> {
    fn upscale_ratio(&self) -> usize {
        self.config().ratio
    }

    fn estimate(&self, y_t: &[T], y_d: &[T], level: NoiseLevel<T>) -> Result<Vec<T>> {
        self.forward(y_t, y_d, level)
    }
}

/// Closed-form forward process: `s * y0 + sqrt(1 - s^2) * eps`.
pub fn diffuse<T: Scalar>(y0: &[T], level: NoiseLevel<T>, eps: &[T]) -> Result<Vec<T>> {
    if y0.len() != eps.len() {
        return Err(Error::Shape(format!("diffuse: signal {} vs noise {}", y0.len(), eps.len())));
    }
    let s = level.get();
    let n = (T::one() - s * s).sqrt();
    Ok(y0.iter().zip(eps).map(|(&y, &e)| s * y + n * e).collect())
}

/// Draws `t ~ U{1..T}` then `sqrt(alpha_bar) ~ U[sqrt(alpha_bar_t), sqrt(alpha_bar_{t-1})]`.
pub fn sample_noise_level<T: Scalar>(schedule: &NoiseSchedule<T>, rng: &mut Rng) -> Result<NoiseLevel<T>> {
    let t = 1 + rng.below(schedule.len());
    let lo = schedule.sqrt_alpha_bar(t).as_f64();
    let hi = schedule.sqrt_alpha_bar(t - 1).as_f64();
    let s = if lo < hi { rng.uniform(lo, hi)? } else { hi };
    NoiseLevel::new(T::lit(s))
}

/// One reverse-process update
/// `y_{t-1} = (y_t - (1 - alpha_t) / sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_t) + sigma_t z`.
/// `z = None` means zero noise, which is required at `t = 1`.
pub fn reverse_step<T: Scalar>(
    y_t: &[T],
    eps_hat: &[T],
    t: usize,
    schedule: &NoiseSchedule<T>,
    z: Option<&[T]>,
) -> Result<Vec<T>> {
    if t == 0 || t > schedule.len() {
        return Err(Error::InvalidArgument(format!("step {t} outside 1..={}", schedule.len())));
    }
    if eps_hat.len() != y_t.len() || z.is_some_and(|z| z.len() != y_t.len()) {
        return Err(Error::Shape("reverse_step: length mismatch".into()));
    }
    if t == 1 && z.is_some_and(|z| z.iter().any(|&v| v != T::zero())) {
        return Err(Error::InvalidArgument("the final step takes no noise".into()));
    }
    let alpha = schedule.alpha(t);
    let coef = (T::one() - alpha) / (T::one() - schedule.alpha_bar(t)).sqrt();
    let inv_sqrt_alpha = T::one() / alpha.sqrt();
    let sigma = schedule.sigma(t);
    let mut out: Vec<T> = y_t.iter().zip(eps_hat).map(|(&y, &e)| inv_sqrt_alpha * (y - coef * e)).collect();
    if let Some(z) = z {
        out.iter_mut().zip(z).for_each(|(o, &zv)| *o += sigma * zv);
    }
    Ok(out)
}

/// Reverse-process sampler: `y_T ~ N(0, I)` of length `r * len(y_d)`, then
/// reverse steps `T..1` with the model queried at `sqrt(alpha_bar_t)`.
/// Draw order from `rng`: `y_T`, then `z` for `t = T, ..., 2`.
pub fn sample<T: Scalar, M: NoiseEstimator<T> + ?Sized>(
    model: &M,
    y_d: &AudioSignal<T>,
    schedule: &NoiseSchedule<T>,
    r: usize,
    rng: &mut Rng,
) -> Result<AudioSignal<T>> {
    y_d.require_nonempty("sample")?;
    if r != model.upscale_ratio() {
        return Err(Error::ConfigMismatch(format!(
            "sampling with r = {r} from a model trained for r = {}",
            model.upscale_ratio()
        )));
    }
    schedule.validate()?;
    let len = r * y_d.len();
    let mut y = rng.normal_vec::<T>(len);
    for t in (1..=schedule.len()).rev() {
        let level = NoiseLevel::new(schedule.sqrt_alpha_bar(t))?;
        let eps_hat = model.estimate(&y, y_d.samples(), level)?;
        let z = (t > 1).then(|| rng.normal_vec::<T>(len));
        y = reverse_step(&y, &eps_hat, t, schedule, z.as_deref())?;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("sampled waveform"));
    }
    AudioSignal::new(y, y_d.sample_rate() * r as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::SchedulePreset;
    use std::cell::Cell;

    struct Zero {
        calls: Cell<usize>,
    }

    impl NoiseEstimator<f64> for Zero {
        fn upscale_ratio(&self) -> usize {
            2
        }
        fn estimate(&self, y_t: &[f64], _: &[f64], _: NoiseLevel<f64>) -> Result<Vec<f64>> {
            self.calls.set(self.calls.get() + 1);
            Ok(vec![0.0; y_t.len()])
        }
    }

    fn lvl(s: f64) -> NoiseLevel<f64> {
        NoiseLevel::new(s).unwrap()
    }

    #[test]
    fn diffuse_endpoints() {
        let mut rng = Rng::new(1);
        let y0: Vec<f64> = rng.normal_vec(64);
        let eps: Vec<f64> = rng.normal_vec(64);
        assert_eq!(diffuse(&y0, lvl(1.0), &eps).unwrap(), y0);
        let zero = vec![0.0; 64];
        let s = 0.6f64;
        let out = diffuse(&zero, lvl(s), &eps).unwrap();
        for (o, e) in out.iter().zip(&eps) {
            assert_eq!(*o, (1.0 - s * s).sqrt() * e);
        }
        assert!(diffuse(&y0, lvl(0.5), &eps[..10]).is_err());
    }

    #[test]
    fn diffuse_is_affine_in_signal_and_noise() {
        let mut rng = Rng::new(2);
        let (a, b) = (0.7, -1.3);
        let y: Vec<f64> = rng.normal_vec(100);
        let y2: Vec<f64> = rng.normal_vec(100);
        let eps: Vec<f64> = rng.normal_vec(100);
        let eps2: Vec<f64> = rng.normal_vec(100);
        let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
        let s = 0.37;
        let lhs = diffuse(&mix(&y, &y2), lvl(s), &mix(&eps, &eps2)).unwrap();
        let rhs = mix(&diffuse(&y, lvl(s), &eps).unwrap(), &diffuse(&y2, lvl(s), &eps2).unwrap());
        let direct: Vec<f64> =
            (0..100).map(|i| s * (a * y[i] + b * y2[i]) + (1.0 - s * s).sqrt() * (a * eps[i] + b * eps2[i])).collect();
        for i in 0..100 {
            assert!((lhs[i] - rhs[i]).abs() < 1e-12);
            assert!((lhs[i] - direct[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn diffuse_variance_identity() {
        // unit-power y0: E[power(y_s)] = s^2 + (1 - s^2)
        let mut rng = Rng::new(3);
        let n = 256;
        let y0: Vec<f64> = (0..n).map(|i| 2f64.sqrt() * (i as f64 * 0.3).sin()).collect();
        let p0 = y0.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let s = 0.4f64;
        let draws = 10_000;
        let mean_power = (0..draws)
            .map(|_| {
                let eps: Vec<f64> = rng.normal_vec(n);
                diffuse(&y0, lvl(s), &eps).unwrap().iter().map(|v| v * v).sum::<f64>() / n as f64
            })
            .sum::<f64>()
            / draws as f64;
        let expected = s * s * p0 + (1.0 - s * s);
        assert!((mean_power / expected - 1.0).abs() < 0.02, "{mean_power} vs {expected}");
    }

    #[test]
    fn single_step_level_interval() {
        let s = NoiseSchedule::<f64>::manual(&[0.3]).unwrap();
        let mut rng = Rng::new(4);
        for _ in 0..1000 {
            let l = sample_noise_level(&s, &mut rng).unwrap().get();
            assert!(l >= s.sqrt_alpha_bar(1) && l <= 1.0);
        }
    }

    #[test]
    fn level_draws_cover_bands_uniformly() {
        let s = SchedulePreset::PaperInfer8.build::<f64>();
        let mut rng = Rng::new(5);
        let n = 100_000;
        let mut counts = vec![0usize; s.len()];
        for _ in 0..n {
            let l = sample_noise_level(&s, &mut rng).unwrap().get();
            assert!(l >= s.final_level() && l <= 1.0);
            let t = (1..=s.len()).find(|&t| l >= s.sqrt_alpha_bar(t) && l <= s.sqrt_alpha_bar(t - 1)).unwrap();
            counts[t - 1] += 1;
        }
        let p = 1.0 / s.len() as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{c}");
        }
    }

    #[test]
    fn training_levels_are_contained() {
        let s = SchedulePreset::PaperTrain1000.build::<f64>();
        let mut rng = Rng::new(6);
        for _ in 0..100_000 {
            let l = sample_noise_level(&s, &mut rng).unwrap().get();
            assert!(l >= s.final_level() && l <= 1.0);
        }
    }

    #[test]
    fn reverse_step_reductions() {
        let s = SchedulePreset::PaperInfer8.build::<f64>();
        let mut rng = Rng::new(7);
        let y: Vec<f64> = rng.normal_vec(50);
        let zero = vec![0.0; 50];
        for t in 1..=8 {
            let out = reverse_step(&y, &zero, t, &s, None).unwrap();
            for (o, v) in out.iter().zip(&y) {
                assert!((o - v / s.alpha(t).sqrt()).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_step_inverts_diffusion() {
        let s = NoiseSchedule::<f64>::manual(&[0.37]).unwrap();
        let mut rng = Rng::new(8);
        let y0: Vec<f64> = rng.normal_vec(200);
        let eps: Vec<f64> = rng.normal_vec(200);
        let y1 = diffuse(&y0, NoiseLevel::new(s.sqrt_alpha_bar(1)).unwrap(), &eps).unwrap();
        let back = reverse_step(&y1, &eps, 1, &s, None).unwrap();
        for (b, y) in back.iter().zip(&y0) {
            assert!((b - y).abs() <= 1e-10 * y.abs().max(1e-3));
        }
    }

    #[test]
    fn reverse_step_guards() {
        let s = SchedulePreset::PaperInfer8.build::<f64>();
        let y = vec![0.1; 4];
        assert!(reverse_step(&y, &y, 0, &s, None).is_err());
        assert!(reverse_step(&y, &y, 9, &s, None).is_err());
        assert!(reverse_step(&y, &y[..3], 3, &s, None).is_err());
        assert!(reverse_step(&y, &y, 1, &s, Some(&[1.0, 0.0, 0.0, 0.0])).is_err());
        assert!(reverse_step(&y, &y, 1, &s, Some(&[0.0; 4])).is_ok());
    }

    #[test]
    fn sampler_shape_determinism_and_call_count() {
        let s = SchedulePreset::PaperInfer8.build::<f64>();
        let m = Zero { calls: Cell::new(0) };
        let yd = AudioSignal::new(vec![0.1; 37], 2000).unwrap();
        let a = sample(&m, &yd, &s, 2, &mut Rng::new(9)).unwrap();
        let b = sample(&m, &yd, &s, 2, &mut Rng::new(9)).unwrap();
        assert_eq!(a.len(), 74);
        assert_eq!(a.sample_rate(), 4000);
        assert_eq!(a, b);
        assert_eq!(m.calls.get(), 16);
        assert!(sample(&m, &yd, &s, 3, &mut Rng::new(9)).is_err());
    }
}
