//! Weight initializers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// He initialization: N(0, sqrt(2 / fan_in)), the usual choice ahead of
/// rectifier nonlinearities.
pub fn kaiming_normal(slice: &mut [f32], fan_in: usize, rng: &mut ChaCha8Rng) {
    let std = (2.0 / fan_in as f32).sqrt();
    for v in slice.iter_mut() {
        let z: f32 = rng.sample(StandardNormal);
        *v = z * std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngkey::derive_rng;

    #[test]
    fn std_tracks_fan_in() {
        let mut rng = derive_rng(0, &[92]);
        let mut buf = vec![0.0f32; 20_000];
        kaiming_normal(&mut buf, 50, &mut rng);
        let mean: f32 = buf.iter().sum::<f32>() / buf.len() as f32;
        let var: f32 = buf.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / buf.len() as f32;
        assert!(mean.abs() < 5e-3);
        assert!((var - 2.0 / 50.0).abs() < 5e-3);
    }
}
