use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{schedule, CarveConfig, AUTO_STEP_FRACTION};
use super::loss::{total_loss, CarveTargets, LossOptions};
use crate::error::{Error, Result};
use crate::mesh::{remesh_with, validate, write_obj, Adjacency, Mesh, RemeshOptions};
use crate::optim::Adam;
use crate::raster::Scene;
use crate::scalar::{cast, Real};
use crate::vec3::{self, Vec3};

const MEDIAN_WINDOW: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub view: usize,
    pub total: f64,
    /// Weighted normal and mask terms, comparable across stages.
    pub data: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone)]
pub struct CarveResult<T> {
    pub mesh: Mesh<T>,
    pub history: Vec<IterationLog>,
}

/// Deforms `initial` toward the target views with coarse-to-fine remeshing.
pub fn carve<T: Real>(
    initial: &Mesh<T>,
    targets: &CarveTargets<T>,
    config: &CarveConfig,
    second_stage: bool,
) -> Result<CarveResult<T>> {
    config.check()?;
    targets.check()?;
    if second_stage && config.weights.sides != 0.0 {
        return Err(Error::Config("second-stage carving requires a zero side weight".into()));
    }
    let rep = validate(initial);
    if !rep.is_manifold || !rep.is_oriented {
        return Err(Error::Mesh(format!("carving needs an oriented manifold mesh:\n{rep}")));
    }
    let mut mesh = initial.clone();
    let base_step = match config.initial_step_size {
        Some(s) => s,
        None => AUTO_STEP_FRACTION * mesh.bbox_diagonal().to_f64_lossy(),
    };
    let step_scale = base_step / config.initial_step_size.unwrap_or(AUTO_STEP_FRACTION);
    let pixel_world = targets
        .views
        .iter()
        .map(|v| 2.0 / (v.camera.scale.to_f64_lossy() * v.camera.height.max(v.camera.width) as f64))
        .fold(f64::INFINITY, f64::min);
    let edge_factor = if second_stage { 1.0 } else { config.remesh_edge_factor };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scene = Scene::new(&mesh);
    let mut adjacency = Adjacency::build(&mesh);
    let mut adam = Adam::new(mesh.num_vertices());
    let mut norms: VecDeque<f64> = VecDeque::with_capacity(MEDIAN_WINDOW);
    let mut history = Vec::with_capacity(config.total_iterations);
    let dump = |mesh: &Mesh<T>, name: &str| -> Result<()> {
        if let Some(dir) = &config.dump_dir {
            std::fs::create_dir_all(dir)?;
            write_obj(mesh, &dir.join(name))?;
        }
        Ok(())
    };
    dump(&mesh, "stage_0.obj")?;

    for it in 0..config.total_iterations {
        let sched = schedule(config, it)?;
        if it > 0 && it % config.remesh_interval == 0 {
            let mean = mesh.mean_edge_length().to_f64_lossy();
            // The pixel floor stops refinement; it never coarsens.
            let target = (edge_factor * mean).max((config.min_edge_pixels * pixel_world).min(mean));
            mesh = remesh_with(&mesh, &RemeshOptions::new(cast(target)))?;
            scene = Scene::new(&mesh);
            adjacency = Adjacency::build(&mesh);
            adam = Adam::new(mesh.num_vertices());
            norms.clear();
            log::info!(
                "iteration {it}: remeshed to {} vertices (target edge {target:.4})",
                mesh.num_vertices()
            );
            dump(&mesh, &format!("stage_{}.obj", sched.stage))?;
        }
        let view = rng.gen_range(0..targets.views.len());
        let opts = LossOptions {
            softness: config.softness,
            alpha_threshold: config.alpha_threshold,
            views: Some(&[view]),
        };
        let report = total_loss(&scene, &adjacency, &mesh, targets, &sched.weights, &opts)?;
        let total = report.total.to_f64_lossy();
        if !total.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                reason: format!("loss is {total}"),
            });
        }
        let data = report.data_loss(&sched.weights).to_f64_lossy();
        let mut grad = report.gradient;
        let norm = grad_norm(&grad);
        if !norm.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                reason: "non-finite gradient".into(),
            });
        }
        let clipped = clip(&mut grad, norm, &norms, config.clip_factor);
        if norms.len() == MEDIAN_WINDOW {
            norms.pop_front();
        }
        norms.push_back(norm);
        adam.step(&mut mesh.vertices, &grad, cast(sched.step_size * step_scale));
        history.push(IterationLog {
            iteration: it,
            view,
            total,
            data,
            clipped,
        });
        if it % 100 == 0 {
            log::debug!("iteration {it}: loss {total:.5}, view {view}");
        }
    }

    if !validate(&mesh).is_clean_closed() {
        // Optimisation can leave slivers; one pass at the current resolution cleans them.
        let target = mesh.mean_edge_length();
        mesh = remesh_with(&mesh, &RemeshOptions::new(target).with_iterations(2))?;
    }
    let rep = validate(&mesh);
    if !rep.is_clean_closed() {
        return Err(Error::Mesh(format!("carved mesh failed validation:\n{rep}")));
    }
    dump(&mesh, "final.obj")?;
    Ok(CarveResult { mesh, history })
}

fn grad_norm<T: Real>(g: &[Vec3<T>]) -> f64 {
    g.iter().map(|v| vec3::norm2(*v).to_f64_lossy()).sum::<f64>().sqrt()
}

fn clip<T: Real>(g: &mut [Vec3<T>], norm: f64, history: &VecDeque<f64>, factor: f64) -> bool {
    if history.len() < 8 {
        return false;
    }
    let mut sorted: Vec<f64> = history.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let limit = factor * sorted[sorted.len() / 2];
    if norm > limit && limit > 0.0 {
        let s: T = cast(limit / norm);
        for v in g.iter_mut() {
            *v = vec3::scale(*v, s);
        }
        true
    } else {
        false
    }
}
