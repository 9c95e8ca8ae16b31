//! Differentiable weak-perspective rasterization into normal + alpha buffers.

mod camera;
mod normal_map;
mod render;

pub use camera::{camera_ring, Camera};
pub use normal_map::{decode_normal, encode_normal, mean_angular_error_deg, silhouette_iou, NormalMap, BACKGROUND};
pub(crate) use normal_map::decode_or_zero;
pub use render::{rasterize, rasterize_backward, render, Frame, RasterGradients, Scene};

/// Default soft-coverage width in pixels.
pub const DEFAULT_SOFTNESS: f64 = 1.5;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_body_proxy, Mesh, ProxyKind};

    fn facing_triangle() -> Mesh<f64> {
        Mesh::new(vec![[-0.8, -0.6, 0.0], [0.8, -0.6, 0.0], [0.0, 0.9, 0.0]], vec![[0, 1, 2]]).unwrap()
    }

    fn unit_sphere() -> Mesh<f64> {
        make_body_proxy(&ProxyKind::Sphere { center: [0.0; 3], radius: 1.0, subdivisions: 4 }).unwrap()
    }

    #[test]
    fn facing_triangle_encodes_plus_z() {
        let cam = Camera::new(0.0, 1.0, 32, 32).unwrap();
        let m = rasterize(&facing_triangle(), &cam, 0.0).unwrap();
        let c = m.pixel(16, 16);
        assert_eq!(&c[..3], &[0.5, 0.5, 1.0]);
        assert_eq!(c[3], 1.0);
        assert!(m.data.chunks_exact(4).any(|p| p[3] == 0.0 && p[..3] == [0.5; 3]));
    }

    #[test]
    fn back_facing_triangle_is_culled() {
        let cam = Camera::new(180.0, 1.0, 32, 32).unwrap();
        let m = rasterize(&facing_triangle(), &cam, 0.0).unwrap();
        assert!(m.alpha_channel().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn empty_mesh_renders_background() {
        let cam = Camera::new(0.0, 1.0, 16, 16).unwrap();
        let m = rasterize(&Mesh::<f64>::empty(), &cam, 1.5).unwrap();
        assert_eq!(m, NormalMap::background(16, 16));
    }

    #[test]
    fn sphere_silhouette_matches_disk_area() {
        let s = 0.7;
        let cam = Camera::new(0.0, s, 64, 64).unwrap();
        for softness in [0.0, 1.5] {
            let m = rasterize(&unit_sphere(), &cam, softness).unwrap();
            let covered = m.alpha_channel().iter().filter(|&&a| a >= 0.5).count() as f64;
            let disk = std::f64::consts::PI * (s * 1.0f64).powi(2) * 64.0 * 64.0 / 4.0;
            assert!((covered - disk).abs() / disk < 0.03, "{covered} vs {disk}");
            assert!(m.alpha_channel().iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
    }

    #[test]
    fn sphere_normals_are_unit_where_covered() {
        let cam = Camera::new(30.0, 0.8, 48, 48).unwrap();
        let m = rasterize(&unit_sphere(), &cam, 1.5).unwrap();
        for p in 0..m.num_pixels() {
            if m.alpha(p) > 0.5 {
                let n = m.rgb(p).map(|c| 2.0 * c - 1.0);
                let len = crate::vec3::norm(n);
                assert!((len - 1.0).abs() < 0.05);
            } else if m.alpha(p) == 0.0 {
                assert_eq!(m.rgb(p), [0.5; 3]);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let cam = Camera::new(10.0, 0.8, 32, 32).unwrap();
        let mesh = unit_sphere();
        let g = rasterize_backward(&mesh, &cam, 1.5, &NormalMap::zeros(32, 32)).unwrap();
        assert!(g.vertices.iter().all(|v| *v == [0.0; 3]));
    }

    #[test]
    fn mismatched_upstream_is_rejected() {
        let cam = Camera::new(0.0, 0.8, 32, 32).unwrap();
        assert!(rasterize_backward(&unit_sphere(), &cam, 1.5, &NormalMap::zeros(16, 32)).is_err());
        assert!(rasterize(&unit_sphere(), &cam, -1.0).is_err());
    }
}
