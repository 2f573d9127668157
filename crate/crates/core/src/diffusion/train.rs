use super::{diffuse, sample_noise_level, NoiseLevel, NoiseSchedule};
use crate::dsp::{downsample, AudioSignal};
use crate::error::{Error, Result};
use crate::model::NuWaveNetwork;
use crate::optim::AdamState;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{Backend, Eager, Graph, Tensor};

/// Lower clamp on the mean absolute error before the log.
pub const LOSS_FLOOR: f64 = 1e-9;

/// `log(max(mean|eps - eps_hat|, LOSS_FLOOR))`.
pub fn log_l1_loss<T: Scalar, B: Backend<T>>(be: &mut B, eps: &B::Value, eps_hat: &B::Value) -> Result<B::Value> {
    let diff = be.sub(eps, eps_hat)?;
    let abs = be.abs(&diff)?;
    let mean = be.mean(&abs)?;
    let floored = be.clamp_min(&mean, T::lit(LOSS_FLOOR))?;
    be.log(&floored)
}

pub fn loss<T: Scalar>(eps: &[T], eps_hat: &[T]) -> Result<T> {
    if eps.len() != eps_hat.len() {
        return Err(Error::Shape(format!("loss: {} vs {} samples", eps.len(), eps_hat.len())));
    }
    let mut be = Eager;
    let a = be.input(Tensor::vector(eps.to_vec())?);
    let b = be.input(Tensor::vector(eps_hat.to_vec())?);
    let l = log_l1_loss(&mut be, &a, &b)?;
    l.item()
}

/// One training example: the diffused signal, its conditioner, the level and the true noise.
pub struct Example<'a, T> {
    pub y_t: &'a [T],
    pub y_d: &'a [T],
    pub level: NoiseLevel<T>,
    pub eps: &'a [T],
}

/// Loss over a batch (mean absolute error pooled over every sample) and its
/// gradient with respect to every network parameter, in parameter order.
pub fn objective_and_grad<T: Scalar>(
    model: &NuWaveNetwork<T>,
    batch: &[Example<'_, T>],
) -> Result<(T, Vec<Tensor<T>>)> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    let mut g = Graph::new();
    let handles: Vec<_> = model.params().iter().map(|p| g.param(p)).collect();
    let mut total = None;
    let mut count = 0usize;
    for ex in batch {
        let eps_hat = model.forward_on(&mut g, &handles, ex.y_t, ex.y_d, ex.level)?;
        let eps = g.input(Tensor::vector(ex.eps.to_vec())?);
        let diff = g.sub(&eps, &eps_hat)?;
        let abs = g.abs(&diff)?;
        let s = g.sum(&abs)?;
        count += ex.eps.len();
        total = Some(match total {
            None => s,
            Some(acc) => g.add(&acc, &s)?,
        });
    }
    let mean = g.scale(&total.expect("non-empty batch"), T::one() / T::from_usize_lossy(count))?;
    let floored = g.clamp_min(&mean, T::lit(LOSS_FLOOR))?;
    let l = g.log(&floored)?;
    let value = g.value(&l).item()?;
    let grads = g.grad(&l, &handles)?;
    Ok((value, grads))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<T> {
    pub loss: T,
    /// Noise levels drawn for each batch item.
    pub levels: Vec<T>,
}

/// One optimizer step on a batch of full-rate patches. For each patch the
/// draw order from `rng` is: level, then the noise vector.
pub fn train_step<T: Scalar>(
    model: &mut NuWaveNetwork<T>,
    batch: &[AudioSignal<T>],
    schedule: &NoiseSchedule<T>,
    adam: &mut AdamState<T>,
    rng: &mut Rng,
) -> Result<StepReport<T>> {
    let r = model.config().ratio;
    let mut prepared = Vec::with_capacity(batch.len());
    for y0 in batch {
        let y_d = downsample(y0, r)?;
        let level = sample_noise_level(schedule, rng)?;
        let eps: Vec<T> = rng.normal_vec(y0.len());
        let y_t = diffuse(y0.samples(), level, &eps)?;
        prepared.push((y_t, y_d, level, eps));
    }
    let examples: Vec<Example<'_, T>> =
        prepared.iter().map(|(y_t, y_d, level, eps)| Example { y_t, y_d: y_d.samples(), level: *level, eps }).collect();
    let (loss, grads) = objective_and_grad(model, &examples)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    for g in &grads {
        g.check_finite("gradient")?;
    }
    adam.step(model.params_mut(), &grads)?;
    Ok(StepReport { loss, levels: prepared.iter().map(|p| p.2.get()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::SchedulePreset;
    use crate::model::ModelConfig;
    use crate::optim::AdamConfig;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            channels: 8,
            dilation_cycle: vec![1, 2],
            embedding_dim: 16,
            embedding_hidden: 12,
            ..ModelConfig::desk(2)
        }
    }

    fn randomized(cfg: ModelConfig, seed: u64) -> NuWaveNetwork<f64> {
        let mut rng = Rng::new(seed);
        let mut m = NuWaveNetwork::new(cfg, &mut rng).unwrap();
        for p in m.params_mut() {
            for v in p.data_mut() {
                *v = 0.3 * rng.normal();
            }
        }
        m
    }

    #[test]
    fn loss_values() {
        assert!((loss(&[1.0f64, -1.0], &[0.0, 0.0]).unwrap()).abs() < 1e-15);
        assert!((loss(&[0.5f64; 4], &[0.0; 4]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(loss(&[0.3f64; 4], &[0.3; 4]).unwrap(), LOSS_FLOOR.ln());
        assert!(loss(&[0.3f64; 4], &[0.3; 3]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = randomized(tiny(), 11);
        let mut rng = Rng::new(12);
        let y_t: Vec<f64> = rng.normal_vec(64);
        let y_d: Vec<f64> = rng.normal_vec(32);
        let eps: Vec<f64> = rng.normal_vec(64);
        let level = NoiseLevel::new(0.63).unwrap();
        let ex = [Example { y_t: &y_t, y_d: &y_d, level, eps: &eps }];
        let (_, grads) = objective_and_grad(&m, &ex).unwrap();
        let h = 1e-6;
        for (pi, name) in m.names().iter().enumerate() {
            let n = m.params()[pi].numel();
            for k in 0..3.min(n) {
                let idx = (k * 7919 + pi) % n;
                let mut plus = m.clone();
                plus.params_mut()[pi].data_mut()[idx] += h;
                let mut minus = m.clone();
                minus.params_mut()[pi].data_mut()[idx] -= h;
                let lp = objective_and_grad(&plus, &ex).unwrap().0;
                let lm = objective_and_grad(&minus, &ex).unwrap().0;
                let fd = (lp - lm) / (2.0 * h);
                let an = grads[pi].data()[idx];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                assert!(rel < 1e-4, "{name}[{idx}]: analytic {an}, numeric {fd}");
            }
        }
    }

    #[test]
    fn step_is_deterministic() {
        let schedule = SchedulePreset::PaperTrain1000.build::<f64>();
        let y = AudioSignal::new((0..1024).map(|i| (i as f64 * 0.05).sin() * 0.5).collect(), 4000).unwrap();
        let run = || {
            let mut rng = Rng::new(3);
            let mut m = NuWaveNetwork::new(tiny(), &mut rng).unwrap();
            let mut adam = AdamState::new(AdamConfig::with_lr(1e-3), m.params());
            let mut reports = vec![];
            for step in 0..3 {
                let mut srng = Rng::stream(3, step);
                reports.push(train_step(&mut m, std::slice::from_ref(&y), &schedule, &mut adam, &mut srng).unwrap());
            }
            (m, reports)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_decreases_on_a_fixed_signal() {
        let schedule = SchedulePreset::PaperTrain1000.build::<f64>();
        let y = AudioSignal::new(
            (0..1024).map(|i| 0.4 * (i as f64 * 0.07).sin() + 0.2 * (i as f64 * 1.3).sin()).collect(),
            4000,
        )
        .unwrap();
        let mut rng = Rng::new(21);
        let mut m = NuWaveNetwork::new(tiny(), &mut rng).unwrap();
        let mut adam = AdamState::new(AdamConfig::with_lr(2e-3), m.params());
        let mut losses = vec![];
        for step in 0..500 {
            let mut srng = Rng::stream(21, step);
            losses.push(train_step(&mut m, std::slice::from_ref(&y), &schedule, &mut adam, &mut srng).unwrap().loss);
        }
        let head = losses[..50].iter().sum::<f64>() / 50.0;
        let tail = losses[450..].iter().sum::<f64>() / 50.0;
        assert!(tail < head - 0.1, "head {head}, tail {tail}");
    }
}
