//! Tile-based Gaussian splatting with a per-pixel reference blender and a
//! 2×2 group blender, plus image metrics and PPM output.
//!
//! Pixel `(x, y)` is sampled at its centre `(x + 0.5, y + 0.5)`; the
//! principal point is the image centre.

mod blend;
mod image;
mod metrics;

use std::cmp::Ordering;

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::scene::{Camera, Gaussian, NodeId};

pub use blend::{
    blend_grouped, blend_reference, group_alpha_check, pixel_alpha, render_tiles, BlendMode, DivergenceStats, Rendered,
    ALPHA_MAX, ALPHA_MIN, T_MIN,
};
pub use image::{read_ppm, write_ppm, Image};
pub use metrics::{image_metrics, psnr, ssim, ImageMetrics, PSNR_CAP};

pub const TILE_SIZE: u32 = 16;
/// Added to both diagonal entries of every screen-space covariance.
pub const COV2D_FLOOR: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedGaussian {
    pub nid: NodeId,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    pub color: Vector3<f64>,
}

/// Screen-space footprint of `g`, or `None` when its centre is not beyond
/// the near plane.
pub fn project_gaussian(nid: NodeId, g: &Gaussian, camera: &Camera) -> Option<ProjectedGaussian> {
    let w = camera.rotation_matrix();
    let t = w * (g.mean - camera.position);
    if t.z <= camera.near {
        return None;
    }
    let f = camera.focal;
    let mean2d = Vector2::new(
        f * t.x / t.z + 0.5 * camera.width as f64,
        f * t.y / t.z + 0.5 * camera.height as f64,
    );
    let j = Matrix2x3::new(
        f / t.z,
        0.0,
        -f * t.x / (t.z * t.z),
        0.0,
        f / t.z,
        -f * t.y / (t.z * t.z),
    );
    let jw = j * w;
    let mut cov2d = jw * g.covariance() * jw.transpose();
    cov2d = 0.5 * (cov2d + cov2d.transpose());
    cov2d[(0, 0)] += COV2D_FLOOR;
    cov2d[(1, 1)] += COV2D_FLOOR;
    let conic = cov2d.try_inverse()?;
    Some(ProjectedGaussian {
        nid,
        mean2d,
        cov2d,
        conic,
        depth: t.z,
        opacity: g.opacity,
        color: g.color,
    })
}

/// Projects the selected Gaussians, scaling opacity by `weights` when given.
/// Gaussians at or in front of the near plane are dropped.
pub fn project_cut(
    gaussians: &[Gaussian],
    selected: &[NodeId],
    weights: Option<&[f64]>,
    camera: &Camera,
) -> Vec<ProjectedGaussian> {
    selected
        .iter()
        .enumerate()
        .filter_map(|(i, &nid)| {
            let mut pg = project_gaussian(nid, &gaussians[nid.idx()], camera)?;
            if let Some(w) = weights {
                pg.opacity *= w[i];
            }
            Some(pg)
        })
        .collect()
}

/// Per-tile lists of indices into the projection array, nearest first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileBins {
    pub tiles_x: u32,
    pub tiles_y: u32,
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    pub fn tile(&self, tx: u32, ty: u32) -> &[u32] {
        &self.lists[(ty * self.tiles_x + tx) as usize]
    }

    /// Total number of (Gaussian, tile) pairs.
    pub fn entries(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }
}

/// Axis-aligned 3σ screen box `(min, max)` of a projected Gaussian.
pub fn screen_extent(pg: &ProjectedGaussian) -> (Vector2<f64>, Vector2<f64>) {
    let r = Vector2::new(3.0 * pg.cov2d[(0, 0)].sqrt(), 3.0 * pg.cov2d[(1, 1)].sqrt());
    (pg.mean2d - r, pg.mean2d + r)
}

/// Appends every Gaussian to each tile its 3σ box touches, then sorts each
/// tile by `(depth, nid)`.
pub fn bin_gaussians(projected: &[ProjectedGaussian], width: u32, height: u32) -> TileBins {
    let tiles_x = width.div_ceil(TILE_SIZE).max(1);
    let tiles_y = height.div_ceil(TILE_SIZE).max(1);
    let mut lists = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    let ts = TILE_SIZE as f64;
    for (i, pg) in projected.iter().enumerate() {
        let (lo, hi) = screen_extent(pg);
        if !(hi.x >= 0.0 && hi.y >= 0.0 && lo.x < width as f64 && lo.y < height as f64) {
            continue;
        }
        let x0 = (lo.x / ts).floor().max(0.0) as u32;
        let y0 = (lo.y / ts).floor().max(0.0) as u32;
        let x1 = ((hi.x / ts).floor() as u32).min(tiles_x - 1);
        let y1 = ((hi.y / ts).floor() as u32).min(tiles_y - 1);
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                lists[(ty * tiles_x + tx) as usize].push(i as u32);
            }
        }
    }
    for list in &mut lists {
        list.sort_by(|&a, &b| depth_order(&projected[a as usize], &projected[b as usize]));
    }
    TileBins {
        tiles_x,
        tiles_y,
        lists,
    }
}

fn depth_order(a: &ProjectedGaussian, b: &ProjectedGaussian) -> Ordering {
    a.depth.total_cmp(&b.depth).then(a.nid.cmp(&b.nid))
}

/// Projects, bins and blends a cut in one call.
pub fn render(
    gaussians: &[Gaussian],
    selected: &[NodeId],
    weights: Option<&[f64]>,
    camera: &Camera,
    mode: BlendMode,
) -> Rendered {
    let projected = project_cut(gaussians, selected, weights, camera);
    let (w, h) = padded_size(camera.width, camera.height);
    let bins = bin_gaussians(&projected, w, h);
    render_tiles(&bins, &projected, camera.width, camera.height, mode)
}

/// Image size rounded up to even dimensions.
pub fn padded_size(width: u32, height: u32) -> (u32, u32) {
    (width + (width & 1), height + (height & 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture_camera;
    use nalgebra::Quaternion;

    fn iso(x: f64, y: f64, z: f64, s: f64) -> Gaussian {
        Gaussian {
            mean: Vector3::new(x, y, z),
            scale: Vector3::repeat(s),
            rotation: Quaternion::identity(),
            opacity: 1.0,
            color: Vector3::new(1.0, 0.0, 0.0),
        }
    }

    #[test]
    fn on_axis_covariance() {
        let cam = fixture_camera();
        let pg = project_gaussian(NodeId(0), &iso(0.0, 0.0, 10.0, 0.2), &cam).unwrap();
        let expected = (100.0 * 0.2 / 10.0f64).powi(2) + 0.3;
        assert!((pg.cov2d[(0, 0)] - expected).abs() < 1e-12);
        assert!((pg.cov2d[(1, 1)] - expected).abs() < 1e-12);
        assert!(pg.cov2d[(0, 1)].abs() < 1e-12);
        assert_eq!(pg.mean2d, Vector2::new(100.0, 100.0));
    }

    #[test]
    fn clipped_at_near_plane() {
        let cam = fixture_camera();
        assert!(project_gaussian(NodeId(0), &iso(0.0, 0.0, 0.1, 0.2), &cam).is_none());
        assert!(project_gaussian(NodeId(0), &iso(0.0, 0.0, -5.0, 0.2), &cam).is_none());
    }

    fn at_pixel(nid: u32, x: f64, y: f64, var: f64, depth: f64) -> ProjectedGaussian {
        let cov2d = Matrix2::new(var, 0.0, 0.0, var);
        ProjectedGaussian {
            nid: NodeId(nid),
            mean2d: Vector2::new(x, y),
            cov2d,
            conic: cov2d.try_inverse().unwrap(),
            depth,
            opacity: 1.0,
            color: Vector3::repeat(1.0),
        }
    }

    #[test]
    fn tiny_gaussian_lands_in_one_tile() {
        let bins = bin_gaussians(&[at_pixel(0, 40.0, 40.0, 0.3, 1.0)], 64, 64);
        assert_eq!(bins.entries(), 1);
        assert_eq!(bins.tile(2, 2), &[0]);
    }

    #[test]
    fn corner_gaussian_touches_four_tiles() {
        let bins = bin_gaussians(&[at_pixel(0, 16.0, 16.0, 1.0, 1.0)], 64, 64);
        assert_eq!(bins.entries(), 4);
        for (tx, ty) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            assert_eq!(bins.tile(tx, ty), &[0]);
        }
    }

    #[test]
    fn ties_break_on_nid() {
        let p = [
            at_pixel(7, 8.0, 8.0, 1.0, 5.0),
            at_pixel(3, 8.0, 8.0, 1.0, 5.0),
            at_pixel(9, 8.0, 8.0, 1.0, 2.0),
        ];
        let bins = bin_gaussians(&p, 16, 16);
        assert_eq!(bins.tile(0, 0), &[2, 1, 0]);
    }

    #[test]
    fn offscreen_gaussian_is_not_binned() {
        let bins = bin_gaussians(&[at_pixel(0, -50.0, 8.0, 1.0, 1.0)], 32, 32);
        assert_eq!(bins.entries(), 0);
    }
}
