//! Pixel-space diffusion over an abstract noise predictor.

mod oracle;
mod sample;
mod sampler;
mod schedule;

pub use oracle::{analytic_gaussian_denoiser, paired_gaussian_denoiser, GaussianDenoiser};
pub use sample::{Condition, Denoiser, Sample, DUAL_CHANNELS, MAP_CHANNELS};
pub use sampler::{
    cfg_combine, forward_sample, guided_dual_complete, guided_prediction, posterior_step, resample, sample,
    GuidanceParams, ResampleParams,
};
pub use schedule::{default_beta_range, linear_schedule, VarianceSchedule};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_sample(seed: u64) -> Sample<f64> {
        Sample::randn(3, 2, 4, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn cfg_identities() {
        let (c, u) = (rand_sample(1), rand_sample(2));
        assert_eq!(cfg_combine(&c, &u, 1.0).unwrap(), c);
        assert_eq!(cfg_combine(&c, &u, 0.0).unwrap(), u);
        let two = cfg_combine(&c, &u, 2.0).unwrap();
        for i in 0..c.len() {
            assert_eq!(two.data[i], 2.0 * c.data[i] - u.data[i]);
        }
        for l in [-1.0, 0.5, 3.0, 7.5] {
            let same = cfg_combine(&c, &c, l).unwrap();
            for (a, b) in same.data.iter().zip(&c.data) {
                assert!((a - b).abs() <= 1e-15 * (1.0 + l.abs()) * b.abs().max(1.0));
            }
        }
        assert!(cfg_combine(&c, &Sample::zeros(1, 2, 4), 2.0).is_err());
    }

    #[test]
    fn zero_prediction_step_rescales() {
        let s = VarianceSchedule::<f64>::default_linear(100).unwrap();
        let x = rand_sample(3);
        let z = Sample::zeros(3, 2, 4);
        for t in [1, 50, 100] {
            let y = posterior_step(&x, &z, t, &s, &z).unwrap();
            for (a, b) in y.data.iter().zip(&x.data) {
                assert_eq!(*a, b / s.alpha(t).sqrt());
            }
        }
        assert!(posterior_step(&x, &z, 0, &s, &z).is_err());
        assert!(posterior_step(&x, &z, 101, &s, &z).is_err());
    }

    #[test]
    fn forward_limits() {
        let tiny = VarianceSchedule::<f64>::from_betas(vec![1e-12, 2e-12]).unwrap();
        let (x0, e) = (rand_sample(4), rand_sample(5));
        let xt = forward_sample(&x0, 2, &e, &tiny).unwrap();
        assert!(xt.dist2(&x0) < 1e-10);
        let heavy = linear_schedule::<f64>(200, 0.1, 0.5).unwrap();
        let xt = forward_sample(&x0, 200, &e, &heavy).unwrap();
        assert!(xt.dist2(&e) < 1e-10);
        assert!(forward_sample(&x0, 1, &Sample::zeros(1, 1, 1), &heavy).is_err());
    }

    #[test]
    fn resample_timestep_rounding() {
        let p = ResampleParams::default();
        assert_eq!(p.timestep(100).unwrap(), 2);
        assert!(ResampleParams { t0: 0.004, repeats: 1 }.timestep(100).is_err());
        assert!(ResampleParams { t0: 0.1, repeats: 0 }.timestep(100).is_err());
        assert!(ResampleParams { t0: 1.0, repeats: 1 }.timestep(100).is_err());
        assert_eq!(ResampleParams { t0: 0.006, repeats: 1 }.timestep(100).unwrap(), 1);
    }

    #[test]
    fn guidance_validation() {
        assert!(GuidanceParams { lambda: 1.0, dropout_prob: 1.5 }.check().is_err());
        assert!(GuidanceParams { lambda: f64::NAN, dropout_prob: 0.1 }.check().is_err());
        assert!(GuidanceParams::default().check().is_ok());
    }
}
