//! Front-to-back α-blending over 2×2 pixel groups.
//!
//! Both blenders walk the same tile lists group by group, so they differ
//! only in how a (Gaussian, group) pair decides which lanes integrate.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::Image;
use super::{padded_size, ProjectedGaussian, TileBins, TILE_SIZE};

pub const ALPHA_MAX: f64 = 0.99;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
/// A pixel whose transmittance falls below this stops integrating.
pub const T_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    /// Every pixel tests its own α.
    Reference,
    /// One α test at the 2×2 group centre decides for all four pixels.
    Grouped,
}

impl std::str::FromStr for BlendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference" => Ok(Self::Reference),
            "grouped" => Ok(Self::Grouped),
            other => Err(format!("unknown blend mode {other:?}, expected reference or grouped")),
        }
    }
}

impl std::fmt::Display for BlendMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Reference => "reference",
            Self::Grouped => "grouped",
        })
    }
}

/// Lane activity over (Gaussian, 2×2 group) evaluations.
///
/// An evaluation is one Gaussian considered by one group that still has a
/// live pixel. In the reference blender a lane is active when its pixel is
/// live and its α reaches [`ALPHA_MIN`]; in the grouped blender all four
/// lanes share the group decision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DivergenceStats {
    pub evaluations: u64,
    pub full_active: u64,
    pub full_skip: u64,
    pub mixed: u64,
    pub active_lanes: u64,
}

impl DivergenceStats {
    /// Active lanes over the lanes occupied by evaluations that blend at
    /// least one pixel; 1 when nothing blends.
    pub fn simd_utilization(&self) -> f64 {
        let blending = self.full_active + self.mixed;
        if blending == 0 {
            1.0
        } else {
            self.active_lanes as f64 / (4 * blending) as f64
        }
    }

    pub fn add(&mut self, other: &Self) {
        self.evaluations += other.evaluations;
        self.full_active += other.full_active;
        self.full_skip += other.full_skip;
        self.mixed += other.mixed;
        self.active_lanes += other.active_lanes;
    }
}

#[derive(Serialize, Deserialize)]
struct DivergenceJson {
    evaluations: u64,
    full_active: u64,
    full_skip: u64,
    mixed: u64,
    active_lanes: u64,
    simd_utilization: f64,
}

impl Serialize for DivergenceStats {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DivergenceJson {
            evaluations: self.evaluations,
            full_active: self.full_active,
            full_skip: self.full_skip,
            mixed: self.mixed,
            active_lanes: self.active_lanes,
            simd_utilization: self.simd_utilization(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DivergenceStats {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = DivergenceJson::deserialize(d)?;
        Ok(Self {
            evaluations: j.evaluations,
            full_active: j.full_active,
            full_skip: j.full_skip,
            mixed: j.mixed,
            active_lanes: j.active_lanes,
        })
    }
}

/// Blender output with per-tile counters, row-major over tiles.
#[derive(Clone, Debug, PartialEq)]
pub struct Rendered {
    pub image: Image,
    pub stats: DivergenceStats,
    pub tiles: Vec<DivergenceStats>,
}

/// `-½ dᵀ·conic·d` at pixel position `p`.
fn power_at(pg: &ProjectedGaussian, p: &Vector2<f64>) -> f64 {
    let d = p - pg.mean2d;
    -0.5 * (d.transpose() * pg.conic * d)[(0, 0)]
}

pub fn pixel_alpha(pg: &ProjectedGaussian, p: &Vector2<f64>) -> f64 {
    (pg.opacity * power_at(pg, p).exp()).min(ALPHA_MAX)
}

/// Keeps `pg` for a whole group when `opacity·exp(power) ≥ 1/255` at the
/// group centre, decided on the exponent alone.
pub fn group_alpha_check(pg: &ProjectedGaussian, group_center: &Vector2<f64>) -> bool {
    if pg.opacity <= 0.0 {
        return false;
    }
    power_at(pg, group_center) >= -(255.0 * pg.opacity).ln()
}

/// Blends every tile with the chosen mode. The image is `width × height`;
/// odd sizes are rendered one pixel larger and cropped.
/// Pixels written by one tile, with its divergence counters.
type TileOutput = (Vec<(u32, u32, Vector3<f64>)>, DivergenceStats);

pub fn render_tiles(
    bins: &TileBins,
    projected: &[ProjectedGaussian],
    width: u32,
    height: u32,
    mode: BlendMode,
) -> Rendered {
    let (pw, ph) = padded_size(width, height);
    let tiles: Vec<(u32, u32)> = (0..bins.tiles_y)
        .flat_map(|ty| (0..bins.tiles_x).map(move |tx| (tx, ty)))
        .collect();
    let results: Vec<TileOutput> = tiles
        .par_iter()
        .map(|&(tx, ty)| blend_tile(bins.tile(tx, ty), projected, tx, ty, pw, ph, mode))
        .collect();

    let mut image = Image::new(width, height);
    let mut stats = DivergenceStats::default();
    let mut per_tile = Vec::with_capacity(results.len());
    for (pixels, s) in results {
        for (x, y, c) in pixels {
            if x < width && y < height {
                image.set(x, y, c);
            }
        }
        stats.add(&s);
        per_tile.push(s);
    }
    Rendered {
        image,
        stats,
        tiles: per_tile,
    }
}

fn blend_tile(
    list: &[u32],
    projected: &[ProjectedGaussian],
    tx: u32,
    ty: u32,
    pw: u32,
    ph: u32,
    mode: BlendMode,
) -> (Vec<(u32, u32, Vector3<f64>)>, DivergenceStats) {
    let x_end = ((tx + 1) * TILE_SIZE).min(pw);
    let y_end = ((ty + 1) * TILE_SIZE).min(ph);
    let mut out = Vec::new();
    let mut stats = DivergenceStats::default();
    for gy in (ty * TILE_SIZE..y_end).step_by(2) {
        for gx in (tx * TILE_SIZE..x_end).step_by(2) {
            let lanes = [(gx, gy), (gx + 1, gy), (gx, gy + 1), (gx + 1, gy + 1)];
            let centers = lanes.map(|(x, y)| Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
            let colors = match mode {
                BlendMode::Reference => blend_group_reference(list, projected, &centers, &mut stats),
                BlendMode::Grouped => {
                    let group_center = Vector2::new(gx as f64 + 1.0, gy as f64 + 1.0);
                    blend_group_grouped(list, projected, &centers, &group_center, &mut stats)
                }
            };
            out.extend(lanes.iter().zip(colors).map(|(&(x, y), c)| (x, y, c)));
        }
    }
    (out, stats)
}

fn blend_group_reference(
    list: &[u32],
    projected: &[ProjectedGaussian],
    centers: &[Vector2<f64>; 4],
    stats: &mut DivergenceStats,
) -> [Vector3<f64>; 4] {
    let mut color = [Vector3::zeros(); 4];
    let mut t = [1.0f64; 4];
    let mut live = [true; 4];
    for &i in list {
        let live_count = live.iter().filter(|&&l| l).count() as u64;
        if live_count == 0 {
            break;
        }
        let pg = &projected[i as usize];
        let mut active = 0u64;
        for lane in 0..4 {
            if !live[lane] {
                continue;
            }
            let alpha = pixel_alpha(pg, &centers[lane]);
            if alpha < ALPHA_MIN {
                continue;
            }
            active += 1;
            color[lane] += pg.color * (alpha * t[lane]);
            t[lane] *= 1.0 - alpha;
            if t[lane] < T_MIN {
                live[lane] = false;
            }
        }
        stats.evaluations += 1;
        stats.active_lanes += active;
        if active == live_count {
            stats.full_active += 1;
        } else if active == 0 {
            stats.full_skip += 1;
        } else {
            stats.mixed += 1;
        }
    }
    color
}

fn blend_group_grouped(
    list: &[u32],
    projected: &[ProjectedGaussian],
    centers: &[Vector2<f64>; 4],
    group_center: &Vector2<f64>,
    stats: &mut DivergenceStats,
) -> [Vector3<f64>; 4] {
    let mut color = [Vector3::zeros(); 4];
    let mut t = [1.0f64; 4];
    for &i in list {
        if t.iter().all(|&x| x < T_MIN) {
            break;
        }
        let pg = &projected[i as usize];
        stats.evaluations += 1;
        if !group_alpha_check(pg, group_center) {
            stats.full_skip += 1;
            continue;
        }
        stats.full_active += 1;
        stats.active_lanes += 4;
        for lane in 0..4 {
            let alpha = pixel_alpha(pg, &centers[lane]);
            color[lane] += pg.color * (alpha * t[lane]);
            t[lane] *= 1.0 - alpha;
        }
    }
    color
}

pub fn blend_reference(
    bins: &TileBins,
    projected: &[ProjectedGaussian],
    width: u32,
    height: u32,
) -> (Image, DivergenceStats) {
    let r = render_tiles(bins, projected, width, height, BlendMode::Reference);
    (r.image, r.stats)
}

pub fn blend_grouped(
    bins: &TileBins,
    projected: &[ProjectedGaussian],
    width: u32,
    height: u32,
) -> (Image, DivergenceStats) {
    let r = render_tiles(bins, projected, width, height, BlendMode::Grouped);
    (r.image, r.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::NodeId;
    use crate::splat::bin_gaussians;
    use nalgebra::Matrix2;

    fn splat(nid: u32, x: f64, y: f64, var: f64, depth: f64, opacity: f64, color: [f64; 3]) -> ProjectedGaussian {
        let cov2d = Matrix2::new(var, 0.0, 0.0, var);
        ProjectedGaussian {
            nid: NodeId(nid),
            mean2d: Vector2::new(x, y),
            cov2d,
            conic: cov2d.try_inverse().unwrap(),
            depth,
            opacity,
            color: Vector3::from(color),
        }
    }

    #[test]
    fn opaque_gaussian_on_a_pixel_centre() {
        let p = [splat(0, 4.5, 4.5, 2.0, 1.0, 1.0, [0.2, 0.6, 1.0])];
        let bins = bin_gaussians(&p, 8, 8);
        let (img, _) = blend_reference(&bins, &p, 8, 8);
        let c = img.get(4, 4);
        assert_eq!(c, Vector3::new(0.2, 0.6, 1.0) * 0.99);
    }

    #[test]
    fn empty_cut_is_black() {
        let bins = bin_gaussians(&[], 8, 8);
        for mode in [BlendMode::Reference, BlendMode::Grouped] {
            let r = render_tiles(&bins, &[], 8, 8, mode);
            assert!(r.image.pixels().iter().all(|c| *c == Vector3::zeros()));
            assert_eq!(r.stats, DivergenceStats::default());
        }
    }

    #[test]
    fn front_to_back_compositing() {
        // Huge footprints make α equal to the opacity everywhere near the centre.
        let p = [
            splat(0, 4.0, 4.0, 1e12, 1.0, 0.5, [1.0, 0.0, 0.0]),
            splat(1, 4.0, 4.0, 1e12, 2.0, 0.5, [0.0, 0.0, 1.0]),
        ];
        let bins = bin_gaussians(&p, 8, 8);
        let (img, _) = blend_reference(&bins, &p, 8, 8);
        let c = img.get(3, 3);
        assert!((c - Vector3::new(0.5, 0.0, 0.25)).norm() < 1e-9, "{c:?}");
    }

    #[test]
    fn group_check_boundary_and_centre() {
        let g = splat(0, 0.0, 0.0, 1.0, 1.0, 1.0, [1.0; 3]);
        assert!(group_alpha_check(&g, &Vector2::zeros()));
        // power = -x²/2 exactly at ln(1/255)
        let x = (2.0 * 255.0f64.ln()).sqrt();
        let boundary = Vector2::new(x, 0.0);
        let power = -0.5 * x * x;
        assert_eq!(power >= -(255.0f64).ln(), group_alpha_check(&g, &boundary));
        let zero = splat(0, 0.0, 0.0, 1.0, 1.0, 0.0, [1.0; 3]);
        assert!(!group_alpha_check(&zero, &Vector2::zeros()));
    }

    #[test]
    fn grouped_never_diverges_and_reference_does() {
        let p: Vec<_> = (0..20)
            .map(|i| {
                splat(
                    i,
                    3.0 + 1.7 * i as f64,
                    5.0 + 0.9 * i as f64,
                    1.5,
                    i as f64,
                    0.7,
                    [0.5, 0.5, 0.5],
                )
            })
            .collect();
        let bins = bin_gaussians(&p, 32, 32);
        let (_, g) = blend_grouped(&bins, &p, 32, 32);
        let (_, r) = blend_reference(&bins, &p, 32, 32);
        assert_eq!(g.mixed, 0);
        assert_eq!(g.simd_utilization(), 1.0);
        assert!(r.mixed > 0);
        assert!(r.simd_utilization() < 1.0);
    }

    #[test]
    fn odd_sizes_are_cropped() {
        let p = [splat(0, 2.5, 2.5, 4.0, 1.0, 0.8, [1.0, 1.0, 1.0])];
        let bins = bin_gaussians(&p, 6, 6);
        let r = render_tiles(&bins, &p, 5, 5, BlendMode::Grouped);
        assert_eq!((r.image.width(), r.image.height()), (5, 5));
    }

    #[test]
    fn stats_json_includes_utilization() {
        let s = DivergenceStats {
            evaluations: 3,
            full_active: 1,
            full_skip: 1,
            mixed: 1,
            active_lanes: 6,
        };
        let v: serde_json::Value = serde_json::to_value(s).unwrap();
        assert_eq!(v["simd_utilization"], 0.75);
        assert_eq!(serde_json::from_value::<DivergenceStats>(v).unwrap(), s);
    }
}
