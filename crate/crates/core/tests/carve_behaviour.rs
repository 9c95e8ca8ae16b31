use normcarve::carve::*;
use normcarve::mesh::{decimate, make_body_proxy, validate, Adjacency, Mesh, ProxyKind};
use normcarve::raster::{rasterize, render, Camera, Scene};
use normcarve::vec3::{self, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn jittered_box(seed: u64, half: f64) -> Mesh<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..8)
        .map(|i| {
            let s = |b: usize| if i >> b & 1 == 1 { half } else { -half };
            [s(0) + rng.gen_range(-0.08..0.08), s(1) + rng.gen_range(-0.08..0.08), s(2) + rng.gen_range(-0.08..0.08)]
        })
        .collect();
    let quads = [[0, 2, 3, 1], [4, 5, 7, 6], [0, 1, 5, 4], [2, 6, 7, 3], [0, 4, 6, 2], [1, 3, 7, 5]];
    let faces = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    Mesh::new(v, faces).unwrap()
}

fn sphere(radius: f64, subdivisions: usize) -> Mesh<f64> {
    make_body_proxy(&ProxyKind::Sphere { center: [0.0; 3], radius, subdivisions }).unwrap()
}

fn dual_targets(target: &Mesh<f64>, proxy: &Mesh<f64>, cam: Camera<f64>) -> CarveTargets<f64> {
    let front = rasterize(target, &cam, 0.0).unwrap();
    let back = rasterize(target, &cam.with_yaw(cam.yaw + 180.0), 0.0).unwrap();
    CarveTargets::dual(front, back, cam, proxy).unwrap()
}

/// Hard coverage, face ids and thresholded soft alpha over every camera used by the loss.
fn coverage_signature(mesh: &Mesh<f64>, targets: &CarveTargets<f64>, softness: f64) -> Vec<(Option<usize>, bool)> {
    let scene = Scene::new(mesh);
    let cams = targets.views.iter().map(|v| v.camera).chain(targets.sides.iter().map(|s| s.camera));
    let mut sig = Vec::new();
    for cam in cams {
        let soft = render(&scene, mesh, &cam, softness).unwrap();
        let alpha = soft.map.alpha_channel();
        for r in 0..cam.height {
            for c in 0..cam.width {
                sig.push((soft.face_at(r, c), alpha[r * cam.width + c] > 0.5));
            }
        }
    }
    sig
}

#[test]
fn total_loss_matches_finite_differences_on_small_box() {
    let softness = 1.5;
    let weights = LossWeights { normal: 1.0, mask: 2.0, sides: 0.1, laplacian: 10.0, normal_reg: 0.1 };
    let opts = LossOptions { softness, alpha_threshold: 0.5, views: None };
    let mut kept = 0;
    let mut total = 0;
    for seed in 0..4 {
        let mesh = jittered_box(seed, 0.45);
        let target = jittered_box(seed + 100, 0.5);
        let mut cam = Camera::new(25.0 + 10.0 * seed as f64, 0.9, 16, 16).unwrap();
        cam.pitch = 15.0;
        let targets = dual_targets(&target, &target, cam);
        let adj = Adjacency::build(&mesh);
        let report = total_loss(&Scene::new(&mesh), &adj, &mesh, &targets, &weights, &opts).unwrap();
        let eval = |m: &Mesh<f64>| total_loss(&Scene::new(m), &adj, m, &targets, &weights, &opts).unwrap().total;

        let base_sig = coverage_signature(&mesh, &targets, softness);
        let scale = report.gradient.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        let h = 1e-6;
        let mut work = mesh.clone();
        for v in 0..8 {
            for k in 0..3 {
                total += 1;
                let x = mesh.vertices[v][k];
                work.vertices[v][k] = x + h;
                let (fp, sp) = (eval(&work), coverage_signature(&work, &targets, softness));
                work.vertices[v][k] = x - h;
                let (fm, sm) = (eval(&work), coverage_signature(&work, &targets, softness));
                work.vertices[v][k] = x;
                if sp != base_sig || sm != base_sig {
                    continue;
                }
                kept += 1;
                let fd = (fp - fm) / (2.0 * h);
                let an = report.gradient[v][k];
                assert!((fd - an).abs() <= 5e-3 * scale, "seed {seed} vertex {v} axis {k}: {an} vs {fd}");
            }
        }
    }
    assert!(kept * 4 >= total * 3, "only {kept} of {total} coordinates kept coverage fixed");
}

#[test]
fn zero_weights_give_zero_loss_and_gradient() {
    let mesh = jittered_box(1, 0.5);
    let targets = dual_targets(&jittered_box(2, 0.5), &mesh, Camera::new(10.0, 0.9, 16, 16).unwrap());
    let r = total_loss(&Scene::new(&mesh), &Adjacency::build(&mesh), &mesh, &targets, &LossWeights::zero(), &LossOptions::default()).unwrap();
    assert_eq!(r.total, 0.0);
    assert!(r.gradient.iter().all(|g| *g == [0.0; 3]));
}

#[test]
fn laplacian_only_on_regular_tetrahedron() {
    let s = 1.0 / 3.0f64.sqrt();
    let tetra = Mesh::new(
        vec![[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]],
        vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
    )
    .unwrap();
    let targets = dual_targets(&tetra, &tetra, Camera::new(0.0, 0.5, 16, 16).unwrap());
    let w = LossWeights { laplacian: 1.0, ..LossWeights::zero() };
    let r = total_loss(&Scene::new(&tetra), &Adjacency::build(&tetra), &tetra, &targets, &w, &LossOptions::default()).unwrap();
    assert!((r.total - 16.0 / 9.0).abs() < 1e-12, "{}", r.total);
}

fn short_config(iterations: usize, interval: usize, seed: u64) -> CarveConfig {
    CarveConfig { total_iterations: iterations, remesh_interval: interval, seed, ..Default::default() }
}

#[test]
fn carve_is_seed_deterministic() {
    let init = decimate(&sphere(0.8, 3), 300).unwrap();
    let targets = dual_targets(&jittered_box(5, 0.6), &init, Camera::new(0.0, 0.8, 32, 32).unwrap());
    let a = carve(&init, &targets, &short_config(60, 30, 7), false).unwrap();
    let b = carve(&init, &targets, &short_config(60, 30, 7), false).unwrap();
    let c = carve(&init, &targets, &short_config(60, 30, 8), false).unwrap();
    let bits = |m: &Mesh<f64>| m.vertices.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.mesh), bits(&b.mesh));
    assert_eq!(a.mesh.faces, b.mesh.faces);
    assert_ne!(bits(&a.mesh), bits(&c.mesh));
    assert_eq!(a.history.len(), 60);
}

#[test]
fn second_stage_rejects_side_weight() {
    let init = decimate(&sphere(0.8, 3), 300).unwrap();
    let targets = dual_targets(&init, &init, Camera::new(0.0, 0.8, 16, 16).unwrap());
    assert!(carve(&init, &targets, &short_config(20, 10, 0), true).is_err());
}

/// Distance from `p` to triangle `abc`.
fn point_triangle_distance(p: Vec3<f64>, a: Vec3<f64>, b: Vec3<f64>, c: Vec3<f64>) -> f64 {
    let (ab, ac, ap) = (vec3::sub(b, a), vec3::sub(c, a), vec3::sub(p, a));
    let (d1, d2) = (vec3::dot(ab, ap), vec3::dot(ac, ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return vec3::norm(ap);
    }
    let bp = vec3::sub(p, b);
    let (d3, d4) = (vec3::dot(ab, bp), vec3::dot(ac, bp));
    if d3 >= 0.0 && d4 <= d3 {
        return vec3::norm(bp);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return vec3::norm(vec3::sub(p, vec3::add(a, vec3::scale(ab, v))));
    }
    let cp = vec3::sub(p, c);
    let (d5, d6) = (vec3::dot(ab, cp), vec3::dot(ac, cp));
    if d6 >= 0.0 && d5 <= d6 {
        return vec3::norm(cp);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return vec3::norm(vec3::sub(p, vec3::add(a, vec3::scale(ac, w))));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return vec3::norm(vec3::sub(p, vec3::add(b, vec3::scale(vec3::sub(c, b), w))));
    }
    let denom = 1.0 / (va + vb + vc);
    let q = vec3::add(a, vec3::add(vec3::scale(ab, vb * denom), vec3::scale(ac, vc * denom)));
    vec3::norm(vec3::sub(p, q))
}

fn one_sided(from: &Mesh<f64>, to: &Mesh<f64>) -> f64 {
    let points = from.vertices.iter().copied().chain((0..from.num_faces()).map(|f| {
        let [a, b, c] = from.face_positions(f);
        vec3::scale(vec3::add(vec3::add(a, b), c), 1.0 / 3.0)
    }));
    points
        .map(|p| {
            (0..to.num_faces())
                .map(|f| {
                    let [a, b, c] = to.face_positions(f);
                    point_triangle_distance(p, a, b, c)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[test]
fn point_triangle_distance_cases() {
    let (a, b, c) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    assert!((point_triangle_distance([0.2, 0.2, 0.5], a, b, c) - 0.5).abs() < 1e-15);
    assert!((point_triangle_distance([-1.0, -1.0, 0.0], a, b, c) - 2.0f64.sqrt()).abs() < 1e-15);
    assert!((point_triangle_distance([0.5, -2.0, 0.0], a, b, c) - 2.0).abs() < 1e-15);
    assert!((point_triangle_distance([1.0, 1.0, 0.0], a, b, c) - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn carving_toward_own_renders_is_a_fixed_point() {
    let init = decimate(&sphere(0.9, 4), 3000).unwrap();
    let targets = dual_targets(&init, &init, Camera::new(0.0, 0.8, 64, 64).unwrap());
    let out = carve(&init, &targets, &short_config(200, 100, 3), false).unwrap().mesh;
    let rep = validate(&out);
    assert!(rep.is_clean_closed() && rep.euler_characteristic == 2, "{rep}");
    assert_eq!(rep.degenerate_face_count, 0);
    let d = one_sided(&out, &init).max(one_sided(&init, &out));
    let diag = init.bbox_diagonal();
    assert!(d < 0.02 * diag, "Hausdorff {d} vs diagonal {diag}");
}

proptest! {
    #[test]
    fn side_loss_is_non_increasing_in_alpha(
        alpha in prop::collection::vec(0.0f64..1.0, 32),
        bump in prop::collection::vec(0.0f64..1.0, 32),
        mask in prop::collection::vec(any::<bool>(), 32),
    ) {
        let raised: Vec<f64> = alpha.iter().zip(&bump).map(|(a, b)| (a + b).min(1.0)).collect();
        let (lo, _) = side_loss(&alpha, &mask).unwrap();
        let (hi, _) = side_loss(&raised, &mask).unwrap();
        prop_assert!(hi <= lo);
    }
}
