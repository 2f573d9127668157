use nuwave::diffusion::NoiseLevel;
use nuwave::model::{receptive_field, ModelConfig, NuWaveNetwork};
use nuwave::rng::Rng;

fn network(cfg: &ModelConfig) -> NuWaveNetwork<f64> {
    let mut rng = Rng::new(17);
    let mut m = NuWaveNetwork::new(cfg.clone(), &mut rng).unwrap();
    for p in m.params_mut() {
        let fan_in = (p.numel() / p.shape()[0]).max(1) as f64;
        for v in p.data_mut() {
            *v = rng.normal() / fan_in.sqrt();
        }
    }
    m
}

fn changed(a: &[f64], b: &[f64]) -> (usize, usize) {
    let idx: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
    (idx[0], *idx.last().unwrap())
}

#[test]
fn noisy_input_reach_is_the_dilation_sum() {
    for r in [2, 3] {
        let cfg = ModelConfig::desk(r);
        let (main, _) = receptive_field(&cfg);
        assert_eq!(main, 15);
        let m = network(&cfg);
        let mut rng = Rng::new(1);
        let y_d: Vec<f64> = rng.normal_vec(60);
        let y: Vec<f64> = rng.normal_vec(60 * r);
        let level = NoiseLevel::new(0.5).unwrap();
        let base = m.forward(&y, &y_d, level).unwrap();
        let p = 30 * r;
        let mut y2 = y.clone();
        y2[p] += 1.0;
        let out = m.forward(&y2, &y_d, level).unwrap();
        assert_eq!(changed(&base, &out), (p - main, p + main));
    }
}

#[test]
fn conditioner_reach_is_nearly_twice_as_wide() {
    for r in [2, 3] {
        let cfg = ModelConfig::desk(r);
        let (main, cond) = receptive_field(&cfg);
        assert_eq!(cond, 2 * main - 1);
        let m = network(&cfg);
        let mut rng = Rng::new(2);
        let y_d: Vec<f64> = rng.normal_vec(60);
        let y: Vec<f64> = rng.normal_vec(60 * r);
        let level = NoiseLevel::new(0.5).unwrap();
        let base = m.forward(&y, &y_d, level).unwrap();
        let k = 30;
        let mut yd2 = y_d.clone();
        yd2[k] += 1.0;
        let out = m.forward(&y, &yd2, level).unwrap();
        // interpolation spreads y_d[k] over r*k - (r-1) ..= r*k + (r-1)
        assert_eq!(changed(&base, &out), (r * k - (r - 1) - cond, r * k + (r - 1) + cond));
    }
}
