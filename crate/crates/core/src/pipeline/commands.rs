use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::eval::{cmd_eval, compare_maps, EvalReference, EvalReport};
use crate::carve::{carve, CarveTargets, TargetView};
use crate::denoiser::{
    dual_sample, load_checkpoint, render_subject, save_checkpoint, split_dual_sample, synth_dataset, train, DenoiserParams,
    SynthExample, SynthSubject, TrainExample,
};
use crate::diffusion::{resample, sample, Denoiser, Sample, DUAL_CHANNELS};
use crate::error::{Error, Result};
use crate::mesh::{decimate, make_body_proxy, validate, write_obj, BodyPose, Mesh, ProxyKind};
use crate::raster::{rasterize, Camera, NormalMap};

/// Independent RNG streams per pipeline stage, all derived from the one seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Synth = 1,
    Train = 2,
    Generate = 3,
    Refine = 4,
    Guided = 5,
    Audit = 6,
}

pub fn stage_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage { stage, source: Box::new(other) },
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_map(map: &NormalMap<f64>, dir: &Path, stem: &str) -> Result<()> {
    map.write_nmap(&dir.join(format!("{stem}.nmap")))?;
    map.write_png16(&dir.join(format!("{stem}.png")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexEntry {
    front: String,
    back: String,
    cond: String,
    subject: SynthSubject,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexFile {
    resolution: usize,
    example: Vec<IndexEntry>,
}

pub const DATASET_INDEX: &str = "index.toml";

/// Cached synthetic training data.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub resolution: usize,
    pub subjects: Vec<SynthSubject>,
    pub examples: Vec<TrainExample<f32>>,
}

pub fn write_dataset(dir: &Path, resolution: usize, examples: &[SynthExample]) -> Result<()> {
    ensure_dir(dir)?;
    let mut index = IndexFile { resolution, example: Vec::new() };
    for (i, ex) in examples.iter().enumerate() {
        let name = |part: &str| format!("example_{i:03}_{part}.nmap");
        ex.example.front.write_nmap(&dir.join(name("front")))?;
        ex.example.back.write_nmap(&dir.join(name("back")))?;
        ex.example.cond.write_nmap(&dir.join(name("cond")))?;
        index.example.push(IndexEntry { front: name("front"), back: name("back"), cond: name("cond"), subject: ex.subject.clone() });
    }
    let text = toml::to_string(&index).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(DATASET_INDEX), text)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(DATASET_INDEX);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::corrupt(&path, format!("cannot read dataset index: {e}")))?;
    let index: IndexFile = toml::from_str(&text).map_err(|e| Error::corrupt(&path, e.to_string()))?;
    let mut subjects = Vec::new();
    let mut examples = Vec::new();
    for e in index.example {
        let ex = TrainExample::new(
            NormalMap::read_nmap(&dir.join(&e.front))?,
            NormalMap::read_nmap(&dir.join(&e.back))?,
            NormalMap::read_nmap(&dir.join(&e.cond))?,
        )?;
        if ex.front.height != index.resolution || ex.front.width != index.resolution {
            return Err(Error::corrupt(&path, format!("{} is not {}x{}", e.front, index.resolution, index.resolution)));
        }
        subjects.push(e.subject);
        examples.push(ex);
    }
    if examples.is_empty() {
        return Err(Error::corrupt(&path, "dataset has no examples"));
    }
    Ok(Dataset { resolution: index.resolution, subjects, examples })
}

pub fn cmd_synth_data(cfg: &PipelineConfig, out: &Path) -> Result<Dataset> {
    let mut rng = stage_rng(cfg.seed()?, Stream::Synth);
    let made = synth_dataset(cfg.data.count, cfg.resolution, &cfg.data.ranges, &mut rng)?;
    write_dataset(&cfg.dataset_dir(out), cfg.resolution, &made)?;
    log::info!("wrote {} synthetic examples to {}", made.len(), cfg.dataset_dir(out).display());
    Ok(Dataset {
        resolution: cfg.resolution,
        subjects: made.iter().map(|m| m.subject.clone()).collect(),
        examples: made.into_iter().map(|m| m.example).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub params: DenoiserParams<f32>,
    pub losses: Vec<f32>,
}

pub fn cmd_train(cfg: &PipelineConfig, out: &Path) -> Result<Trained> {
    let data = read_dataset(&cfg.dataset_dir(out))?;
    if data.resolution != cfg.resolution {
        return Err(Error::Config(format!("dataset is {0}x{0}, config asks for {1}x{1}", data.resolution, cfg.resolution)));
    }
    let mut rng = stage_rng(cfg.seed()?, Stream::Train);
    let init = DenoiserParams::init(&cfg.model, &mut rng)?;
    log::info!("training {} ({} parameters) for {} epochs", cfg.model.describe(), init.len(), cfg.train.epochs);
    let (params, losses) = train(init, &data.examples, cfg.train.epochs, &cfg.optimizer(), &cfg.schedule()?, &mut rng)?;
    let ckpt = cfg.checkpoint_path(out);
    ensure_dir(ckpt.parent().expect("checkpoint path has a parent"))?;
    save_checkpoint(&params, &ckpt)?;
    let curve: String = losses.iter().enumerate().map(|(i, l)| format!("epoch={i} loss={l}\n")).collect();
    std::fs::write(ckpt.with_file_name("losses.txt"), curve)?;
    Ok(Trained { params, losses })
}

pub fn load_model(cfg: &PipelineConfig, out: &Path) -> Result<DenoiserParams<f32>> {
    let path = cfg.checkpoint_path(out);
    if !path.exists() {
        return Err(Error::Config(format!("no checkpoint at {} (run `train` first)", path.display())));
    }
    load_checkpoint(&path, Some(&cfg.model))
}

fn undisplaced(pose: &BodyPose<f64>) -> SynthSubject {
    SynthSubject { pose: *pose, amplitude: 0.0, seed: 0 }
}

/// Proxy front render as used for conditioning during training.
pub fn condition_map(cfg: &PipelineConfig, pose: &BodyPose<f64>, camera: &Camera<f64>) -> Result<NormalMap<f32>> {
    let proxy = undisplaced(pose).proxy(cfg.data.ranges.cells_per_height)?;
    Ok(rasterize(&proxy, camera, 0.0)?.cast())
}

/// Draws one dual sample for `cond`; the back map is returned in its own camera's orientation.
pub fn generate_maps<D: Denoiser<f32> + ?Sized>(
    denoiser: &D,
    cond: &NormalMap<f32>,
    cfg: &PipelineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(NormalMap<f32>, NormalMap<f32>)> {
    let c = Sample::from_normal_map(cond);
    let x = sample(denoiser, Some(&c), &cfg.schedule()?, &cfg.diffusion.guidance, [DUAL_CHANNELS, cond.height, cond.width], rng)?;
    split_dual_sample(&x)
}

pub fn cmd_generate(cfg: &PipelineConfig, out: &Path, pose: &BodyPose<f64>) -> Result<(NormalMap<f64>, NormalMap<f64>)> {
    let model = load_model(cfg, out)?;
    let cond = condition_map(cfg, pose, &cfg.front_camera()?)?;
    let mut rng = stage_rng(cfg.seed()?, Stream::Generate);
    let (front, back) = generate_maps(&model, &cond, cfg, &mut rng)?;
    let (front, back) = (front.cast::<f64>(), back.cast::<f64>());
    let dir = cfg.outputs_dir(out).join("generate");
    ensure_dir(&dir)?;
    write_map(&front, &dir, "front")?;
    write_map(&back, &dir, "back")?;
    write_map(&cond.cast(), &dir, "cond")?;
    Ok((front, back))
}

/// Proxy mesh carving starts from, decimated to the configured vertex budget.
pub fn carve_proxy(cfg: &PipelineConfig, pose: &BodyPose<f64>) -> Result<Mesh<f64>> {
    let mc = pose.to_multi_capsule(cfg.proxy.cells_per_height)?;
    let proxy = make_body_proxy(&ProxyKind::MultiCapsule(mc))?;
    decimate(&proxy, cfg.carve.initial_vertices)
}

fn validity_text(mesh: &Mesh<f64>) -> String {
    format!("{}\n", validate(mesh))
}

pub fn cmd_carve(
    cfg: &PipelineConfig,
    out: &Path,
    front: &NormalMap<f64>,
    back: &NormalMap<f64>,
    pose: &BodyPose<f64>,
) -> Result<Mesh<f64>> {
    for m in [front, back] {
        if m.height != cfg.resolution || m.width != cfg.resolution {
            return Err(Error::shape(format!("{0}x{0} maps", cfg.resolution), format!("{}x{}", m.height, m.width)));
        }
    }
    let init = carve_proxy(cfg, pose)?;
    let targets = CarveTargets::dual(front.clone(), back.clone(), cfg.front_camera()?, &init)?;
    let result = carve(&init, &targets, &cfg.stage_carve()?, false)?;
    let dir = cfg.outputs_dir(out).join("carve");
    ensure_dir(&dir)?;
    write_obj(&result.mesh, dir.join("mesh.obj"))?;
    std::fs::write(dir.join("validity.txt"), validity_text(&result.mesh))?;
    Ok(result.mesh)
}

/// Opposite-view pairs `(i, i + n/2)` of an `n`-view ring.
pub fn opposite_pairs(n: usize) -> Result<Vec<(usize, usize)>> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::param(format!("refinement needs an even number of views, got {n}")));
    }
    Ok((0..n / 2).map(|i| (i, i + n / 2)).collect())
}

/// Resamples every opposite pair of `renders`, conditioned on the frontal member's proxy map.
pub fn refine_views<D: Denoiser<f32> + ?Sized>(
    renders: &[NormalMap<f32>],
    conds: &[NormalMap<f32>],
    denoiser: &D,
    cfg: &PipelineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<NormalMap<f32>>> {
    if renders.len() != conds.len() {
        return Err(Error::shape(format!("{} condition maps", renders.len()), conds.len()));
    }
    let schedule = cfg.schedule()?;
    let mut refined: Vec<Option<NormalMap<f32>>> = vec![None; renders.len()];
    for (i, j) in opposite_pairs(renders.len())? {
        let x = dual_sample(&renders[i], &renders[j])?;
        let c = Sample::from_normal_map(&conds[i]);
        let y = resample(&x, denoiser, Some(&c), &cfg.diffusion.resample, &schedule, &cfg.diffusion.guidance, rng)?;
        let (f, b) = split_dual_sample(&y)?;
        refined[i] = Some(f);
        refined[j] = Some(b);
    }
    Ok(refined.into_iter().map(|m| m.expect("every view belongs to one pair")).collect())
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub mesh: Mesh<f64>,
    /// Ring renders of the input mesh.
    pub before: Vec<NormalMap<f64>>,
    pub refined: Vec<NormalMap<f64>>,
}

pub fn cmd_refine(cfg: &PipelineConfig, out: &Path, mesh: &Mesh<f64>, pose: &BodyPose<f64>) -> Result<Refined> {
    let model = load_model(cfg, out)?;
    refine_with(cfg, out, mesh, pose, &model)
}

pub fn refine_with<D: Denoiser<f32> + ?Sized>(
    cfg: &PipelineConfig,
    out: &Path,
    mesh: &Mesh<f64>,
    pose: &BodyPose<f64>,
    denoiser: &D,
) -> Result<Refined> {
    let cams = cfg.ring()?;
    opposite_pairs(cams.len())?;
    let before = cams.iter().map(|c| rasterize(mesh, c, 0.0)).collect::<Result<Vec<_>>>()?;
    let conds = cams.iter().map(|c| condition_map(cfg, pose, c)).collect::<Result<Vec<_>>>()?;
    let renders: Vec<NormalMap<f32>> = before.iter().map(|m| m.cast()).collect();
    let mut rng = stage_rng(cfg.seed()?, Stream::Refine);
    let refined: Vec<NormalMap<f64>> = refine_views(&renders, &conds, denoiser, cfg, &mut rng)?.iter().map(|m| m.cast()).collect();
    let dir = cfg.outputs_dir(out).join("refine");
    ensure_dir(&dir)?;
    for (i, m) in refined.iter().enumerate() {
        m.write_nmap(&dir.join(format!("view_{i:02}.nmap")))?;
    }
    let targets = CarveTargets {
        views: cams.iter().zip(&refined).map(|(c, m)| TargetView { camera: *c, map: m.clone() }).collect(),
        sides: Vec::new(),
    };
    let result = carve(mesh, &targets, &cfg.refine_carve(), true)?;
    write_obj(&result.mesh, dir.join("mesh.obj"))?;
    std::fs::write(dir.join("validity.txt"), validity_text(&result.mesh))?;
    Ok(Refined { mesh: result.mesh, before, refined })
}

pub fn cmd_guided(
    cfg: &PipelineConfig,
    out: &Path,
    front: &NormalMap<f64>,
    pose: &BodyPose<f64>,
) -> Result<(NormalMap<f64>, NormalMap<f64>)> {
    let model = load_model(cfg, out)?;
    if front.height != cfg.resolution || front.width != cfg.resolution {
        return Err(Error::shape(format!("{0}x{0} front map", cfg.resolution), format!("{}x{}", front.height, front.width)));
    }
    let cond = Sample::from_normal_map(&condition_map(cfg, pose, &cfg.front_camera()?)?);
    let mut rng = stage_rng(cfg.seed()?, Stream::Guided);
    let f32_front: NormalMap<f32> = front.cast();
    let (_, back) = crate::diffusion::guided_dual_complete(
        &Sample::from_normal_map(&f32_front),
        &model,
        Some(&cond),
        &cfg.schedule()?,
        &cfg.diffusion.guidance,
        &mut rng,
    )?;
    let back = back.to_normal_map()?.flip_horizontal().cast::<f64>();
    let dir = cfg.outputs_dir(out).join("guided");
    ensure_dir(&dir)?;
    write_map(front, &dir, "front")?;
    write_map(&back, &dir, "back")?;
    Ok((front.clone(), back))
}

/// Renders `mesh` over the configured ring into `dir`.
pub fn cmd_render(cfg: &PipelineConfig, mesh: &Mesh<f64>, dir: &Path) -> Result<Vec<NormalMap<f64>>> {
    ensure_dir(dir)?;
    cfg.ring()?
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let m = rasterize(mesh, cam, 0.0)?;
            write_map(&m, dir, &format!("view_{i:02}"))?;
            Ok(m)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalAudit {
    /// `distances[i][j]`: squared L2 between the sample for condition `i` and ground truth `j`.
    pub distances: Vec<Vec<f64>>,
    pub hits: usize,
}

impl RetrievalAudit {
    pub fn fraction(&self) -> f64 {
        self.hits as f64 / self.distances.len() as f64
    }
}

/// Samples once per training condition and checks it lands nearest its own ground truth.
pub fn retrieval_audit<D: Denoiser<f32> + ?Sized>(
    denoiser: &D,
    examples: &[TrainExample<f32>],
    cfg: &PipelineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<RetrievalAudit> {
    let truths = examples.iter().map(|e| e.target_sample()).collect::<Result<Vec<_>>>()?;
    let mut distances = Vec::with_capacity(examples.len());
    let mut hits = 0;
    for (i, ex) in examples.iter().enumerate() {
        let (f, b) = generate_maps(denoiser, &ex.cond, cfg, rng)?;
        let s = dual_sample(&f, &b)?;
        let row: Vec<f64> = truths.iter().map(|t| s.dist2(t) as f64).collect();
        if row.iter().enumerate().all(|(j, &d)| j == i || row[i] < d) {
            hits += 1;
        }
        distances.push(row);
    }
    Ok(RetrievalAudit { distances, hits })
}

fn collect_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.push(path.strip_prefix(base).expect("walk stays under base").to_path_buf());
        }
    }
    Ok(())
}

pub const MANIFEST: &str = "manifest.txt";

/// `sha256  relative/path` for every file under `out` except the manifest itself.
pub fn manifest_text(out: &Path) -> Result<String> {
    let mut files = Vec::new();
    collect_files(out, out, &mut files)?;
    files.retain(|p| p != Path::new(MANIFEST));
    files.sort();
    let mut text = String::new();
    for rel in files {
        let bytes = std::fs::read(out.join(&rel))?;
        text += &format!("{}  {}\n", hex::encode(Sha256::digest(&bytes)), rel.to_string_lossy().replace('\\', "/"));
    }
    Ok(text)
}

#[derive(Debug, Clone)]
pub struct E2eSummary {
    pub losses: Vec<f32>,
    pub retrieval: RetrievalAudit,
    /// Stage-1 and refined meshes, each against the clothed subject.
    pub carve_report: EvalReport,
    pub refine_report: EvalReport,
    /// Mean angle between the stage-1 ring renders and the refined mesh's renders.
    pub refine_delta_deg: Option<f64>,
    pub final_mesh: Mesh<f64>,
    pub manifest: String,
}

/// Dataset, training, generation, carving, refinement and evaluation for training subject 0.
pub fn cmd_e2e(cfg: &PipelineConfig, out: &Path) -> Result<E2eSummary> {
    cfg.check()?;
    ensure_dir(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let data = in_stage("synth-data", cmd_synth_data(cfg, out))?;
    let trained = in_stage("train", cmd_train(cfg, out))?;
    let subject = data.subjects[0].clone();
    let (front, back) = in_stage("generate", cmd_generate(cfg, out, &subject.pose))?;
    let stage1 = in_stage("carve", cmd_carve(cfg, out, &front, &back, &subject.pose))?;
    let refined = in_stage("refine", refine_with(cfg, out, &stage1, &subject.pose, &trained.params))?;

    let (carve_report, refine_report, refine_delta_deg, retrieval) = in_stage("eval", (|| {
        let cams = cfg.ring()?;
        let truth = subject.clothed(&subject.proxy(cfg.data.ranges.cells_per_height)?);
        let carve_report = cmd_eval(&stage1, &EvalReference::Mesh(&truth), &cams)?;
        let refine_report = cmd_eval(&refined.mesh, &EvalReference::Mesh(&truth), &cams)?;
        let delta = cmd_eval(&refined.mesh, &EvalReference::Renders(&refined.before), &cams)?.mean_angle_deg;
        let dir = cfg.outputs_dir(out).join("eval");
        ensure_dir(&dir)?;
        carve_report.write(&dir.join("carve_report.txt"))?;
        refine_report.write(&dir.join("refine_report.txt"))?;
        let mut rng = stage_rng(cfg.seed()?, Stream::Audit);
        let retrieval = retrieval_audit(&trained.params, &data.examples, cfg, &mut rng)?;
        Ok((carve_report, refine_report, delta, retrieval))
    })())?;

    let rep = validate(&refined.mesh);
    let opt = |a: Option<f64>| a.map_or_else(|| "absent".to_string(), |v| v.to_string());
    let summary = format!(
        "first_epoch_loss={}\nfinal_epoch_loss={}\nretrieval_hits={}\nretrieval_total={}\n\
         carve_mean_iou={}\ncarve_mean_angle_deg={}\nrefine_mean_iou={}\nrefine_mean_angle_deg={}\n\
         refine_delta_deg={}\nfinal_manifold={}\nfinal_euler={}\n",
        trained.losses.first().copied().unwrap_or(f32::NAN),
        trained.losses.last().copied().unwrap_or(f32::NAN),
        retrieval.hits,
        retrieval.distances.len(),
        carve_report.mean_iou,
        opt(carve_report.mean_angle_deg),
        refine_report.mean_iou,
        opt(refine_report.mean_angle_deg),
        opt(refine_delta_deg),
        rep.is_manifold,
        rep.euler_characteristic,
    );
    std::fs::write(out.join("summary.txt"), summary)?;
    let manifest = manifest_text(out)?;
    std::fs::write(out.join(MANIFEST), &manifest)?;
    Ok(E2eSummary {
        losses: trained.losses,
        retrieval,
        carve_report,
        refine_report,
        refine_delta_deg,
        final_mesh: refined.mesh,
        manifest,
    })
}

/// Looks a subject up in the cached dataset, for commands run after `synth-data`.
pub fn dataset_subject(cfg: &PipelineConfig, out: &Path, index: usize) -> Result<SynthSubject> {
    let data = read_dataset(&cfg.dataset_dir(out))?;
    data.subjects
        .get(index)
        .cloned()
        .ok_or_else(|| Error::param(format!("dataset has {} subjects, asked for {index}", data.subjects.len())))
}

/// Clothed ground truth of a subject as renders over the front/back cameras.
pub fn subject_maps(cfg: &PipelineConfig, subject: &SynthSubject) -> Result<TrainExample<f32>> {
    render_subject(subject, cfg.data.ranges.cells_per_height, &cfg.front_camera()?)
}

/// Ring-view comparison of two sets of maps.
pub fn compare_rings(a: &[NormalMap<f64>], b: &[NormalMap<f64>]) -> Result<Vec<(f64, Option<f64>)>> {
    a.iter().zip(b).map(|(x, y)| compare_maps(x, y, 0.5)).collect()
}
