use normcarve::mesh::{make_body_proxy, BodyPose, Mesh, ProxyKind};
use normcarve::raster::{rasterize, rasterize_backward, Camera, NormalMap};
use normcarve::vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn weighted_sum(map: &NormalMap<f64>, w: &NormalMap<f64>) -> f64 {
    map.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
}

/// Central differences of `Σ w ⊙ render(mesh)`; also reports whether hard coverage
/// changed under any perturbation.
fn numeric_gradient(mesh: &Mesh<f64>, cam: &Camera<f64>, softness: f64, w: &NormalMap<f64>, h: f64) -> (Vec<[f64; 3]>, bool) {
    let base = rasterize(mesh, cam, 0.0).unwrap().alpha_channel();
    let mut work = mesh.clone();
    let mut stable = true;
    let mut out = vec![[0.0; 3]; mesh.num_vertices()];
    for v in 0..mesh.num_vertices() {
        for k in 0..3 {
            let x = mesh.vertices[v][k];
            let mut eval = |val: f64| {
                work.vertices[v][k] = val;
                stable &= rasterize(&work, cam, 0.0).unwrap().alpha_channel() == base;
                weighted_sum(&rasterize(&work, cam, softness).unwrap(), w)
            };
            let (fp, fm) = (eval(x + h), eval(x - h));
            work.vertices[v][k] = x;
            out[v][k] = (fp - fm) / (2.0 * h);
        }
    }
    (out, stable)
}

fn relative_error(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn red_weights(h: usize, w: usize) -> NormalMap<f64> {
    let mut m = NormalMap::zeros(h, w);
    for px in m.data.chunks_exact_mut(4) {
        px[0] = 1.0;
    }
    m
}

#[test]
fn single_triangle_red_channel_matches_finite_differences() {
    let cam = Camera::new(0.0, 0.8, 32, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    for _ in 0..20 {
        let v: Vec<[f64; 3]> = vec![
            [-0.7 + rng.gen_range(-0.1..0.1), -0.6, rng.gen_range(-0.5..0.5)],
            [0.7, -0.5 + rng.gen_range(-0.1..0.1), rng.gen_range(-0.5..0.5)],
            [rng.gen_range(-0.2..0.2), 0.8, rng.gen_range(-0.5..0.5)],
        ];
        let mesh = Mesh::new(v, vec![[0, 1, 2]]).unwrap();
        let w = red_weights(32, 32);
        let (fd, stable) = numeric_gradient(&mesh, &cam, 0.0, &w, 1e-4);
        if !stable {
            continue;
        }
        let g = rasterize_backward(&mesh, &cam, 0.0, &w).unwrap().vertices;
        let err = relative_error(&g, &fd);
        assert!(err < 2e-3, "relative error {err}");
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} scenes kept coverage fixed");
}

#[test]
fn folded_pair_all_normal_channels_match_finite_differences() {
    let cam = Camera::new(15.0, 0.8, 32, 32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;
    for _ in 0..20 {
        let v: Vec<[f64; 3]> = vec![
            [-0.8, -0.7, rng.gen_range(-0.3..0.3)],
            [0.7, -0.8, rng.gen_range(-0.3..0.3)],
            [0.8, 0.7, rng.gen_range(-0.3..0.3)],
            [-0.7, 0.8, rng.gen_range(-0.3..0.3)],
        ];
        let mesh = Mesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let mut w = NormalMap::zeros(32, 32);
        for (i, x) in w.data.iter_mut().enumerate() {
            if i % 4 != 3 {
                *x = rng.gen_range(-1.0..1.0);
            }
        }
        let (fd, stable) = numeric_gradient(&mesh, &cam, 0.0, &w, 1e-4);
        if !stable {
            continue;
        }
        let g = rasterize_backward(&mesh, &cam, 0.0, &w).unwrap().vertices;
        let err = relative_error(&g, &fd);
        assert!(err < 2e-3, "relative error {err}");
        checked += 1;
    }
    assert!(checked >= 5);
}

fn alpha_weights(h: usize, w: usize) -> NormalMap<f64> {
    let mut m = NormalMap::zeros(h, w);
    for px in m.data.chunks_exact_mut(4) {
        px[3] = 1.0;
    }
    m
}

#[test]
fn soft_coverage_grows_when_silhouette_vertex_moves_outward() {
    let cam = Camera::new(0.0, 0.8, 32, 32).unwrap();
    let mesh = Mesh::new(vec![[-0.6, -0.5, 0.0], [0.6, -0.4, 0.1], [0.05, 0.7, -0.1]], vec![[0, 1, 2]]).unwrap();
    let w = alpha_weights(32, 32);
    let g = rasterize_backward(&mesh, &cam, 1.5, &w).unwrap().vertices;
    let (fd, _) = numeric_gradient(&mesh, &cam, 1.5, &w, 1e-5);
    let centroid = vec3::scale(vec3::add(vec3::add(mesh.vertices[0], mesh.vertices[1]), mesh.vertices[2]), 1.0 / 3.0);
    for v in 0..3 {
        let mut out = vec3::sub(mesh.vertices[v], centroid);
        out[2] = 0.0;
        let dir = vec3::normalize(out).unwrap();
        let (a, n) = (vec3::dot(g[v], dir), vec3::dot(fd[v], dir));
        assert!(a > 0.0 && n > 0.0, "vertex {v}: analytic {a}, numeric {n}");
        assert!((a - n).abs() / n < 0.05, "vertex {v}: analytic {a}, numeric {n}");
    }
    for k in 0..3 {
        for j in 0..3 {
            let (a, n) = (g[k][j], fd[k][j]);
            assert!(a.signum() == n.signum() || n.abs() < 1e-3 * 50.0, "{a} vs {n}");
        }
    }
}

#[test]
fn far_side_vertices_get_no_gradient() {
    let mesh = make_body_proxy(&ProxyKind::Sphere { center: [0.0; 3], radius: 1.0, subdivisions: 3 }).unwrap();
    let cam = Camera::new(0.0, 0.8, 48, 48).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut w = NormalMap::zeros(48, 48);
    for x in w.data.iter_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    let g = rasterize_backward(&mesh, &cam, 1.5, &w).unwrap().vertices;
    assert!(g.iter().flatten().all(|x: &f64| x.is_finite()));
    for (v, p) in mesh.vertices.iter().enumerate() {
        if p[2] < -0.5 {
            assert_eq!(g[v], [0.0; 3]);
        }
    }
    assert!(g.iter().any(|x| vec3::norm(*x) > 0.0));
}

#[test]
fn back_alpha_is_mirrored_front_alpha() {
    let meshes = [
        make_body_proxy(&ProxyKind::Sphere { center: [0.0; 3], radius: 0.9, subdivisions: 3 }).unwrap(),
        make_body_proxy(&ProxyKind::Capsule { a: [0.0, -0.6, 0.0], b: [0.0, 0.6, 0.0], radius: 0.3, segments: 20, rings: 5 })
            .unwrap(),
        make_body_proxy(&ProxyKind::MultiCapsule(BodyPose::<f64>::default().to_multi_capsule(40).unwrap()))
            .unwrap()
            .scaled(0.9),
    ];
    for mesh in &meshes {
        let front = rasterize(mesh, &Camera::new(0.0, 1.0, 64, 64).unwrap(), 0.0).unwrap();
        let back = rasterize(mesh, &Camera::new(180.0, 1.0, 64, 64).unwrap(), 0.0).unwrap();
        assert_eq!(back.alpha_channel(), front.flip_horizontal().alpha_channel());
    }
}

#[test]
fn rotating_the_mesh_equals_counter_rotating_the_camera() {
    let mesh = make_body_proxy(&ProxyKind::MultiCapsule(
        BodyPose::<f64> { arm_forward_deg: [25.0, -10.0], ..Default::default() }.to_multi_capsule(40).unwrap(),
    ))
    .unwrap();
    let phi = 37.0;
    let rotated = mesh.rotated_about_vertical(phi);
    let a = rasterize(&rotated, &Camera::new(50.0, 0.9, 64, 64).unwrap(), 0.0).unwrap();
    let b = rasterize(&mesh, &Camera::new(50.0 - phi, 0.9, 64, 64).unwrap(), 0.0).unwrap();
    let (h, w) = (64usize, 64usize);
    let on = |m: &NormalMap<f64>, r: usize, c: usize| m.pixel(r, c)[3] > 0.5;
    for r in 0..h {
        for c in 0..w {
            if on(&a, r, c) != on(&b, r, c) {
                let near = (r.saturating_sub(1)..=(r + 1).min(h - 1))
                    .any(|rr| (c.saturating_sub(1)..=(c + 1).min(w - 1)).any(|cc| on(&b, rr, cc) == on(&a, r, c)));
                assert!(near, "silhouette differs by more than a pixel at {r},{c}");
            } else if on(&a, r, c) {
                let na: Vec<f64> = a.pixel(r, c)[..3].iter().map(|x| 2.0 * x - 1.0).collect();
                let nb: Vec<f64> = b.pixel(r, c)[..3].iter().map(|x| 2.0 * x - 1.0).collect();
                let dot: f64 = na.iter().zip(&nb).map(|(x, y)| x * y).sum();
                assert!(dot.clamp(-1.0, 1.0).acos().to_degrees() < 2.0);
            }
        }
    }
}
