use normcarve::denoiser::*;
use normcarve::diffusion::{Sample, VarianceSchedule};
use normcarve::raster::{silhouette_iou, NormalMap};
use normcarve::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_map(h: usize, w: usize, rng: &mut ChaCha8Rng) -> NormalMap<f64> {
    NormalMap::from_data(h, w, (0..h * w * 4).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn random_examples(n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Vec<TrainExample<f64>> {
    (0..n)
        .map(|_| TrainExample::new(random_map(h, w, rng), random_map(h, w, rng), random_map(h, w, rng)).unwrap())
        .collect()
}

fn tiny_arch() -> Architecture {
    Architecture { hidden: vec![2], kernel: 3, embed_dim: 2, steps: 3 }
}

/// Every parameter perturbed so no layer sits at its zero initialization.
fn tiny_params(rng: &mut ChaCha8Rng) -> DenoiserParams<f64> {
    let mut p = DenoiserParams::init(&tiny_arch(), rng).unwrap();
    for v in &mut p.data {
        *v += rng.gen_range(-0.3..0.3);
    }
    p
}

fn batch_loss<T: normcarve::Real>(
    p: &DenoiserParams<T>,
    batch: &[TrainExample<T>],
    ts: &[usize],
    noise: &[Sample<T>],
    dropout: f64,
    sched: &VarianceSchedule<T>,
) -> StepOutput<T> {
    train_step(p, batch, ts, noise, dropout, sched, &mut ChaCha8Rng::seed_from_u64(99)).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sched = VarianceSchedule::<f64>::from_betas(vec![0.1, 0.3, 0.5]).unwrap();
    let batch = random_examples(2, 5, 6, &mut rng);
    let ts = [1, 3];
    let noise: Vec<Sample<f64>> = (0..2).map(|_| Sample::randn(8, 5, 6, &mut rng)).collect();
    // Dropout 0 exercises the conditional path, dropout 1 the blank bias.
    for dropout in [0.0, 1.0] {
        let p = tiny_params(&mut rng);
        let analytic = batch_loss(&p, &batch, &ts, &noise, dropout, &sched).gradient;
        let h = 1e-6;
        let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let mut worst = 0.0f64;
        for i in 0..p.len() {
            let mut plus = p.clone();
            plus.data[i] += h;
            let mut minus = p.clone();
            minus.data[i] -= h;
            let fd = (batch_loss(&plus, &batch, &ts, &noise, dropout, &sched).loss
                - batch_loss(&minus, &batch, &ts, &noise, dropout, &sched).loss)
                / (2.0 * h);
            worst = worst.max((fd - analytic[i]).abs() / scale);
        }
        assert!(worst < 1e-3, "dropout {dropout}: worst relative error {worst:e} over {} params", p.len());
    }
}

#[test]
fn perfect_prediction_has_zero_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eps = Sample::<f64>::randn(8, 4, 4, &mut rng);
    let (loss, grad) = noise_prediction_loss(&eps, &eps).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.data.iter().all(|&g| g == 0.0));

    // Zero network with skip gains 1/√(1−ᾱ_t) on zero targets returns the injected noise.
    let sched = VarianceSchedule::<f64>::from_betas(vec![0.1, 0.3, 0.5]).unwrap();
    let mut p = DenoiserParams::init(&tiny_arch(), &mut rng).unwrap();
    p.data.iter_mut().for_each(|v| *v = 0.0);
    for t in 1..=3 {
        let g = 1.0 / (1.0 - sched.alpha_bar(t)).sqrt();
        p.skip_table_mut()[(t - 1) * 8..t * 8].iter_mut().for_each(|v| *v = g);
    }
    let flat = NormalMap::from_data(4, 4, vec![0.5; 64]).unwrap();
    let batch = vec![TrainExample::new(flat.clone(), flat.clone(), flat).unwrap(); 3];
    let noise: Vec<_> = (0..3).map(|_| Sample::randn(8, 4, 4, &mut rng)).collect();
    let out = batch_loss(&p, &batch, &[1, 2, 3], &noise, 0.5, &sched);
    assert!(out.loss < 1e-28, "loss {}", out.loss);
}

#[test]
fn dropout_extremes_control_blank_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sched = VarianceSchedule::<f64>::from_betas(vec![0.1, 0.3, 0.5]).unwrap();
    let p = tiny_params(&mut rng);
    let batch = random_examples(6, 4, 4, &mut rng);
    let noise: Vec<_> = (0..6).map(|_| Sample::randn(8, 4, 4, &mut rng)).collect();
    let ts = [1, 2, 3, 1, 2, 3];
    assert_eq!(batch_loss(&p, &batch, &ts, &noise, 1.0, &sched).blank_count, 6);
    assert_eq!(batch_loss(&p, &batch, &ts, &noise, 0.0, &sched).blank_count, 0);

    // With every condition dropped the condition maps cannot matter.
    let mut other = batch.clone();
    for ex in &mut other {
        ex.cond = random_map(4, 4, &mut rng);
    }
    let a = batch_loss(&p, &batch, &ts, &noise, 1.0, &sched);
    let b = batch_loss(&p, &other, &ts, &noise, 1.0, &sched);
    assert_eq!(a.loss, b.loss);
    assert_eq!(a.gradient, b.gradient);
}

#[test]
fn batch_loss_ignores_example_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sched = VarianceSchedule::<f64>::from_betas(vec![0.1, 0.3, 0.5]).unwrap();
    let p = tiny_params(&mut rng);
    let batch = random_examples(4, 5, 5, &mut rng);
    let noise: Vec<_> = (0..4).map(|_| Sample::randn(8, 5, 5, &mut rng)).collect();
    let ts = vec![1, 2, 3, 2];
    let perm = [2, 0, 3, 1];
    let pb: Vec<_> = perm.iter().map(|&i| batch[i].clone()).collect();
    let pn: Vec<_> = perm.iter().map(|&i| noise[i].clone()).collect();
    let pt: Vec<_> = perm.iter().map(|&i| ts[i]).collect();
    let a = batch_loss(&p, &batch, &ts, &noise, 0.0, &sched);
    let b = batch_loss(&p, &pb, &pt, &pn, 0.0, &sched);
    assert!((a.loss - b.loss).abs() < 1e-12 * a.loss.max(1.0));
    for (x, y) in a.gradient.iter().zip(&b.gradient) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn mismatched_batch_inputs_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sched = VarianceSchedule::<f64>::from_betas(vec![0.1, 0.3, 0.5]).unwrap();
    let p = tiny_params(&mut rng);
    let batch = random_examples(2, 4, 4, &mut rng);
    let noise = vec![Sample::zeros(8, 4, 4)];
    let err = train_step(&p, &batch, &[1, 2], &noise, 0.0, &sched, &mut rng).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
    let bad = Architecture { steps: 5, ..tiny_arch() };
    let p5 = DenoiserParams::init(&bad, &mut rng).unwrap();
    assert!(train(p5, &batch, 1, &TrainConfig::default(), &sched, &mut rng).is_err());
}

fn small_dataset(seed: u64) -> Vec<TrainExample<f32>> {
    let ranges = SynthRanges::default();
    synth_dataset(2, 16, &ranges, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap()
        .into_iter()
        .map(|s| s.example)
        .collect()
}

#[test]
fn training_is_deterministic_and_fits_two_examples() {
    let data = small_dataset(5);
    let arch = Architecture { hidden: vec![16, 16], kernel: 3, embed_dim: 8, steps: 100 };
    let sched = VarianceSchedule::<f32>::default_linear(100).unwrap();
    let cfg = TrainConfig { batch_size: 1, ..Default::default() };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let init = DenoiserParams::init(&arch, &mut rng).unwrap();
        let (p, curve) = train(init.clone(), &data, 800, &cfg, &sched, &mut rng).unwrap();
        (init, p, curve)
    };
    let (init, p1, c1) = run();
    let (_, p2, c2) = run();
    assert_eq!(c1, c2);
    assert_eq!(p1, p2);
    assert!(c1.iter().all(|l| l.is_finite()));
    // Fixed (t, ε) probes over both examples, conditioned.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ts: Vec<usize> = [5, 10, 20, 35, 50, 70].into_iter().flat_map(|t| [t, t]).collect();
    let batch: Vec<_> = (0..ts.len()).map(|i| data[i % 2].clone()).collect();
    let noise: Vec<_> = ts.iter().map(|_| Sample::randn(8, 16, 16, &mut rng)).collect();
    let before = batch_loss(&init, &batch, &ts, &noise, 0.0, &sched).loss;
    let after = batch_loss(&p1, &batch, &ts, &noise, 0.0, &sched).loss;
    assert!(after < 0.5 * before, "probe loss {before} -> {after}");
}

#[test]
fn checkpoint_file_round_trip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p: DenoiserParams<f32> = DenoiserParams::init(&Architecture::default(), &mut rng).unwrap();
    save_checkpoint(&p, &path).unwrap();
    let q: DenoiserParams<f32> = load_checkpoint(&path, Some(&Architecture::default())).unwrap();
    assert_eq!(p, q);
    let narrow = Architecture { hidden: vec![16, 16, 16], ..Default::default() };
    let msg = load_checkpoint::<f32>(&path, Some(&narrow)).unwrap_err().to_string();
    assert!(msg.contains("12-32-32-32-8") && msg.contains("12-16-16-16-8"), "{msg}");
    std::fs::write(&path, b"NCDN").unwrap();
    assert!(matches!(load_checkpoint::<f32>(&path, None), Err(Error::Corrupt { .. })));
}

#[test]
fn undisplaced_subject_matches_its_condition() {
    let ranges = SynthRanges { displacement: [0.0, 0.0], ..Default::default() };
    for s in synth_dataset(3, 32, &ranges, &mut ChaCha8Rng::seed_from_u64(8)).unwrap() {
        let ex = &s.example;
        let mad: f32 = ex.front.data.iter().zip(&ex.cond.data).map(|(a, b)| (a - b).abs()).sum::<f32>() / ex.front.data.len() as f32;
        assert!(mad < 0.01, "mean abs difference {mad}");
    }
}

#[test]
fn back_silhouette_mirrors_front() {
    for s in synth_dataset(3, 32, &SynthRanges::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap() {
        let ex = &s.example;
        let iou = silhouette_iou(&ex.front, &ex.back.flip_horizontal(), 0.5).unwrap();
        assert!(iou >= 0.98, "flip IoU {iou}");
        // Clothing only adds material around the proxy.
        let grown = silhouette_iou(&ex.front, &ex.cond, 0.5).unwrap();
        assert!(grown > 0.5 && ex.front.mask(0.5).iter().filter(|&&m| m).count() >= ex.cond.mask(0.5).iter().filter(|&&m| m).count());
    }
}
