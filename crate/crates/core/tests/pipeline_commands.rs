use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use normcarve::denoiser::{dual_sample, DenoiserParams};
use normcarve::diffusion::{Condition, Denoiser, GuidanceParams, Sample};
use normcarve::mesh::{make_body_proxy, validate, Mesh, ProxyKind};
use normcarve::pipeline::*;
use normcarve::raster::{rasterize, Camera, NormalMap};
use normcarve::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn sphere(center: [f64; 3], radius: f64) -> Mesh<f64> {
    make_body_proxy(&ProxyKind::Sphere { center, radius, subdivisions: 3 }).unwrap()
}

struct Fixture {
    cfg: PipelineConfig,
    dir: PathBuf,
    summary: E2eSummary,
    model: DenoiserParams<f32>,
}

/// One full default run at 32×32 shared by the tests that need a trained model.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = PipelineConfig { seed: Some(3), ..Default::default() };
        let dir = fresh_dir("pipeline_fixture");
        let summary = cmd_e2e(&cfg, &dir).unwrap();
        let model = load_model(&cfg, &dir).unwrap();
        Fixture { cfg, dir, summary, model }
    })
}

/// Size of the largest 4-connected component and of the whole mask.
fn largest_component(mask: &[bool], h: usize, w: usize) -> (usize, usize) {
    let mut seen = vec![false; mask.len()];
    let mut best = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let (mut stack, mut size) = (vec![start], 0);
        seen[start] = true;
        while let Some(p) = stack.pop() {
            size += 1;
            let (r, c) = (p / w, p % w);
            let mut push = |q: usize| {
                if mask[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if r > 0 { push(p - w); }
            if r + 1 < h { push(p + w); }
            if c > 0 { push(p - 1); }
            if c + 1 < w { push(p + 1); }
        }
        best = best.max(size);
    }
    (best, mask.iter().filter(|&&m| m).count())
}

#[test]
fn opposite_pairs_of_the_default_ring() {
    let pairs = opposite_pairs(36).unwrap();
    assert_eq!(pairs.len(), 18);
    assert!(pairs.contains(&(0, 18)) && pairs.contains(&(5, 23)));
    for (i, j) in &pairs {
        assert_eq!(*j, (i + 18) % 36);
    }
    assert!(opposite_pairs(35).is_err());
    assert!(opposite_pairs(0).is_err());
    let cfg = PipelineConfig::default();
    assert_eq!((cfg.views.n_views, cfg.views.yaw_step), (36, 10.0));
    assert_eq!((cfg.diffusion.resample.t0, cfg.diffusion.resample.repeats), (0.02, 2));
    assert_eq!((cfg.carve.initial_vertices, cfg.carve.total_iterations, cfg.carve.remesh_interval), (3000, 2000, 500));
}

#[test]
fn eval_of_a_mesh_against_itself_and_a_disjoint_mesh() {
    let cams = vec![Camera::new(0.0, 0.8, 16, 16).unwrap(), Camera::new(90.0, 0.8, 16, 16).unwrap()];
    let a = sphere([0.0, 0.0, 0.0], 0.3);
    let own = cmd_eval(&a, &EvalReference::Mesh(&a), &cams).unwrap();
    for v in &own.views {
        assert_eq!(v.iou, 1.0);
        assert!(v.angle_deg.unwrap().abs() < 1e-5, "{:?}", v.angle_deg);
    }
    // Offset vertically so the silhouettes are disjoint from every yaw.
    let b = sphere([0.0, 0.8, 0.0], 0.2);
    let apart = cmd_eval(&a, &EvalReference::Mesh(&b), &cams).unwrap();
    for v in &apart.views {
        assert_eq!(v.iou, 0.0);
        assert_eq!(v.angle_deg, None);
    }
    assert_eq!(apart.mean_angle_deg, None);
    let renders = vec![rasterize(&a, &cams[0], 0.0).unwrap()];
    assert!(matches!(cmd_eval(&a, &EvalReference::Renders(&renders), &cams), Err(Error::Shape { .. })));
}

#[test]
fn eval_matches_brute_force_recount() {
    let cam = Camera::new(30.0, 0.8, 16, 16).unwrap();
    let a = sphere([0.1, 0.0, 0.0], 0.45);
    let b = sphere([-0.1, 0.1, 0.0], 0.4);
    let report = cmd_eval(&a, &EvalReference::Mesh(&b), &[cam]).unwrap();
    let (ra, rb) = (rasterize(&a, &cam, 0.0).unwrap(), rasterize(&b, &cam, 0.0).unwrap());
    let (mut inter, mut union, mut angle_sum) = (0usize, 0usize, 0.0);
    for p in 0..256 {
        let (pa, pb) = (&ra.data[4 * p..4 * p + 4], &rb.data[4 * p..4 * p + 4]);
        let (ia, ib) = (pa[3] > 0.5, pb[3] > 0.5);
        union += (ia || ib) as usize;
        if ia && ib {
            inter += 1;
            let na: Vec<f64> = pa[..3].iter().map(|v| 2.0 * v - 1.0).collect();
            let nb: Vec<f64> = pb[..3].iter().map(|v| 2.0 * v - 1.0).collect();
            let dot: f64 = na.iter().zip(&nb).map(|(x, y)| x * y).sum();
            let norm = |n: &[f64]| n.iter().map(|x| x * x).sum::<f64>().sqrt();
            angle_sum += (dot / (norm(&na) * norm(&nb))).clamp(-1.0, 1.0).acos().to_degrees();
        }
    }
    assert!(inter > 0 && inter < union);
    let v = &report.views[0];
    assert!((v.iou - inter as f64 / union as f64).abs() < 1e-12);
    assert!((v.angle_deg.unwrap() - angle_sum / inter as f64).abs() < 1e-9);
}

#[test]
fn eval_report_round_trips_and_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let views = vec![
        ViewMetrics { view: 0, yaw: 0.0, iou: 0.91234567891, angle_deg: Some(3.25) },
        ViewMetrics { view: 1, yaw: 10.0, iou: 0.0, angle_deg: None },
    ];
    let report = EvalReport::from_views(views).unwrap();
    let path = dir.path().join("report.txt");
    report.write(&path).unwrap();
    assert_eq!(EvalReport::read(&path).unwrap(), report);
    let text = report.to_text().replace("mean_iou=", "mean_iou=1");
    assert!(matches!(EvalReport::parse(&text, &path), Err(Error::Corrupt { .. })));
    assert!(EvalReport::parse("view=0\n", &path).is_err());
    assert!(EvalReport::from_views(Vec::new()).is_err());
}

#[test]
fn manifest_covers_every_file_but_itself() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("sub")).unwrap();
    std::fs::write(dir.path().join("b.txt"), b"two").unwrap();
    std::fs::write(dir.path().join("sub/a.txt"), b"one").unwrap();
    std::fs::write(dir.path().join("manifest.txt"), b"stale").unwrap();
    let m = manifest_text(dir.path()).unwrap();
    assert_eq!(m, manifest_text(dir.path()).unwrap());
    let names: Vec<&str> = m.lines().map(|l| l.split_once("  ").unwrap().1).collect();
    assert_eq!(names, ["b.txt", "sub/a.txt"]);
    std::fs::write(dir.path().join("b.txt"), b"changed").unwrap();
    assert_ne!(m, manifest_text(dir.path()).unwrap());
}

#[test]
fn failing_stage_is_named() {
    let dir = fresh_dir("stage_failure");
    let mut cfg = PipelineConfig { seed: Some(1), resolution: 16, ..Default::default() };
    cfg.data.count = 2;
    cfg.train.epochs = 1;
    std::fs::create_dir_all(&dir).unwrap();
    // A plain file where the checkpoint directory should go.
    std::fs::write(dir.join(&cfg.paths.checkpoints), b"").unwrap();
    match cmd_e2e(&cfg, &dir) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "train"),
        other => panic!("expected a train-stage error, got {other:?}"),
    }
    let err = cmd_e2e(&PipelineConfig { seed: None, ..cfg.clone() }, &dir).unwrap_err();
    assert!(err.to_string().contains("seed"), "{err}");
}

#[test]
fn commands_need_a_checkpoint() {
    let dir = fresh_dir("no_checkpoint");
    let cfg = PipelineConfig { seed: Some(1), ..Default::default() };
    let err = cmd_generate(&cfg, &dir, &cfg.proxy.pose).unwrap_err();
    assert!(err.to_string().contains("checkpoint"), "{err}");
}

/// Knows the clean sample behind every condition and returns the exact noise of `x_t`.
struct CleanOracle {
    schedule: normcarve::diffusion::VarianceSchedule<f32>,
    clean: HashMap<Vec<u32>, Sample<f32>>,
}

impl Denoiser<f32> for CleanOracle {
    fn predict(&self, x: &Sample<f32>, t: usize, cond: Condition<'_, f32>) -> Result<Sample<f32>> {
        let Condition::Map(c) = cond else { return Err(Error::Parameter("oracle needs a condition".into())) };
        let x0 = &self.clean[&c.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()];
        let ab = self.schedule.alpha_bar(t);
        let data = x.data.iter().zip(&x0.data).map(|(xt, x0)| (xt - ab.sqrt() * x0) / (1.0 - ab).sqrt()).collect();
        Sample::from_data(x.channels, x.height, x.width, data)
    }
}

#[test]
fn refine_with_a_clean_oracle_is_identity_on_renders() {
    let mut cfg = PipelineConfig { seed: Some(4), resolution: 16, ..Default::default() };
    cfg.diffusion.guidance = GuidanceParams::new(1.0);
    cfg.views.n_views = 8;
    cfg.views.yaw_step = 45.0;
    let mesh = sphere([0.05, 0.0, 0.0], 0.6);
    let cams = cfg.ring().unwrap();
    let renders: Vec<NormalMap<f32>> = cams.iter().map(|c| rasterize(&mesh, c, 0.0).unwrap().cast()).collect();
    let conds: Vec<NormalMap<f32>> = cams.iter().map(|c| condition_map(&cfg, &cfg.proxy.pose, c).unwrap()).collect();
    let mut clean = HashMap::new();
    for (i, j) in opposite_pairs(cams.len()).unwrap() {
        let key = Sample::from_normal_map(&conds[i]).data.iter().map(|v| v.to_bits()).collect();
        clean.insert(key, dual_sample(&renders[i], &renders[j]).unwrap());
    }
    let oracle = CleanOracle { schedule: cfg.schedule().unwrap(), clean };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let refined = refine_views(&renders, &conds, &oracle, &cfg, &mut rng).unwrap();
    let n = renders.len() * renders[0].data.len();
    let delta: f64 = renders
        .iter()
        .zip(&refined)
        .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs() as f64))
        .sum::<f64>()
        / n as f64;
    assert!(delta < 0.02, "mean pixel delta {delta}");
}

#[test]
fn generate_is_deterministic_and_connected() {
    let f = fixture();
    let pose = dataset_subject(&f.cfg, &f.dir, 0).unwrap().pose;
    let (a_front, a_back) = cmd_generate(&f.cfg, &f.dir, &pose).unwrap();
    let bytes = std::fs::read(f.cfg.outputs_dir(&f.dir).join("generate/front.nmap")).unwrap();
    let (b_front, b_back) = cmd_generate(&f.cfg, &f.dir, &pose).unwrap();
    assert_eq!((&a_front, &a_back), (&b_front, &b_back));
    assert_eq!(bytes, std::fs::read(f.cfg.outputs_dir(&f.dir).join("generate/front.nmap")).unwrap());
    let res = f.cfg.resolution;
    for map in [&a_front, &a_back] {
        let (largest, total) = largest_component(&map.mask(0.5), res, res);
        assert!(total > 0 && largest as f64 >= 0.95 * total as f64, "largest component {largest} of {total}");
    }
}

#[test]
fn guidance_sweep_gives_distinct_samples() {
    let f = fixture();
    let cond = condition_map(&f.cfg, &f.cfg.proxy.pose, &f.cfg.front_camera().unwrap()).unwrap();
    let outs: Vec<Sample<f32>> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&lambda| {
            let mut cfg = f.cfg.clone();
            cfg.diffusion.guidance.lambda = lambda;
            let (front, back) = generate_maps(&f.model, &cond, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            dual_sample(&front, &back).unwrap()
        })
        .collect();
    for i in 0..3 {
        for j in i + 1..3 {
            assert!(outs[i].dist2(&outs[j]) > 0.0, "lambda indices {i} and {j} collide");
        }
    }
}

#[test]
fn guided_completion_keeps_front_and_mirrors_silhouette() {
    let f = fixture();
    let cam = f.cfg.front_camera().unwrap();
    let pose = f.cfg.proxy.pose;
    let front: NormalMap<f64> = condition_map(&f.cfg, &pose, &cam).unwrap().cast();
    let (out_front, back) = cmd_guided(&f.cfg, &f.dir, &front, &pose).unwrap();
    assert_eq!(
        out_front.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        front.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    let (_, again) = cmd_guided(&f.cfg, &f.dir, &front, &pose).unwrap();
    assert_eq!(back, again);
    let iou = normcarve::raster::silhouette_iou(&back, &front.flip_horizontal(), 0.5).unwrap();
    assert!(iou >= 0.9, "flip IoU {iou}");
}

#[test]
fn refinement_preserves_structure() {
    let f = fixture();
    let delta = f.summary.refine_delta_deg.expect("refined renders overlap the stage-1 renders");
    assert!(delta < 15.0, "mean angular delta {delta}");
    let rep = validate(&f.summary.final_mesh);
    assert!(rep.is_clean_closed() && rep.euler_characteristic == 2, "{rep}");
    let written: Mesh<f64> = normcarve::mesh::read_obj(f.cfg.outputs_dir(&f.dir).join("refine/mesh.obj")).unwrap();
    assert_eq!(written.faces, f.summary.final_mesh.faces);
}
