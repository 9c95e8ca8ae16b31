use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::raster::{mean_angular_error_deg, rasterize, silhouette_iou, Camera, NormalMap};

const REPORT_HEADER: &str = "# normcarve eval v1";

#[derive(Debug, Clone, PartialEq)]
pub struct ViewMetrics {
    pub view: usize,
    pub yaw: f64,
    pub iou: f64,
    /// Absent when the two silhouettes do not intersect.
    pub angle_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_iou: f64,
    /// Mean over the views that have an angular error.
    pub mean_angle_deg: Option<f64>,
}

pub enum EvalReference<'a> {
    Mesh(&'a Mesh<f64>),
    /// One map per camera of the ring.
    Renders(&'a [NormalMap<f64>]),
}

/// IoU of thresholded alphas and mean angle over their intersection.
pub fn compare_maps(a: &NormalMap<f64>, b: &NormalMap<f64>, threshold: f64) -> Result<(f64, Option<f64>)> {
    let iou = silhouette_iou(a, b, threshold)?;
    let overlap = (0..a.num_pixels()).any(|p| a.alpha(p) > threshold && b.alpha(p) > threshold);
    let angle = if overlap { Some(mean_angular_error_deg(a, b, threshold)?) } else { None };
    Ok((iou, angle))
}

impl EvalReport {
    pub fn from_views(views: Vec<ViewMetrics>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::param("evaluation needs at least one view"));
        }
        let mean_iou = views.iter().map(|v| v.iou).sum::<f64>() / views.len() as f64;
        let angles: Vec<f64> = views.iter().filter_map(|v| v.angle_deg).collect();
        let mean_angle_deg = if angles.is_empty() { None } else { Some(angles.iter().sum::<f64>() / angles.len() as f64) };
        Ok(Self { views, mean_iou, mean_angle_deg })
    }

    pub fn to_text(&self) -> String {
        let opt = |a: Option<f64>| a.map_or_else(|| "absent".to_string(), |v| v.to_string());
        let mut s = format!("{REPORT_HEADER}\n");
        for v in &self.views {
            s += &format!("view={} yaw={} iou={} angle_deg={}\n", v.view, v.yaw, v.iou, opt(v.angle_deg));
        }
        s += "[summary]\n";
        s += &format!("views={}\nmean_iou={}\nmean_angle_deg={}\n", self.views.len(), self.mean_iou, opt(self.mean_angle_deg));
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let bad = |line: &str, why: &str| Error::corrupt(origin, format!("{why}: {line:?}"));
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::corrupt(origin, "missing report header"));
        }
        let num = |line: &str, s: &str| s.parse::<f64>().map_err(|_| bad(line, "bad number"));
        let opt = |line: &str, s: &str| if s == "absent" { Ok(None) } else { num(line, s).map(Some) };
        let mut views = Vec::new();
        let mut summary = Vec::new();
        let mut in_summary = false;
        for line in lines {
            if line == "[summary]" {
                in_summary = true;
                continue;
            }
            let fields: Vec<(&str, &str)> = line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
            if in_summary {
                summary.extend(fields);
                continue;
            }
            let get = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| bad(line, "missing field"));
            views.push(ViewMetrics {
                view: get("view")?.parse().map_err(|_| bad(line, "bad view index"))?,
                yaw: num(line, get("yaw")?)?,
                iou: num(line, get("iou")?)?,
                angle_deg: opt(line, get("angle_deg")?)?,
            });
        }
        let report = Self::from_views(views)?;
        let get = |key: &str| summary.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| bad(key, "missing summary field"));
        let (iou, angle) = (num("mean_iou", get("mean_iou")?)?, opt("mean_angle_deg", get("mean_angle_deg")?)?);
        let n: usize = get("views")?.parse().map_err(|_| bad("views", "bad count"))?;
        if n != report.views.len() || iou.to_bits() != report.mean_iou.to_bits() || angle.map(f64::to_bits) != report.mean_angle_deg.map(f64::to_bits) {
            return Err(Error::corrupt(origin, "summary disagrees with the per-view records"));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }
}

/// Renders `mesh` over `cameras` and compares against the reference.
pub fn cmd_eval(mesh: &Mesh<f64>, reference: &EvalReference, cameras: &[Camera<f64>]) -> Result<EvalReport> {
    if let EvalReference::Renders(maps) = reference {
        if maps.len() != cameras.len() {
            return Err(Error::shape(format!("{} reference renders", cameras.len()), maps.len()));
        }
    }
    let views = cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let ours = rasterize(mesh, cam, 0.0)?;
            let theirs = match reference {
                EvalReference::Mesh(m) => rasterize(m, cam, 0.0)?,
                EvalReference::Renders(maps) => maps[i].clone(),
            };
            let (iou, angle_deg) = compare_maps(&ours, &theirs, 0.5)?;
            Ok(ViewMetrics { view: i, yaw: cam.yaw, iou, angle_deg })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_views(views)
}
