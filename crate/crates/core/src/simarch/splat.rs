//! Splatting core: projection units, tile sorting and SP units.
//!
//! Projection retires one Gaussian per unit per cycle, overlapped with the
//! streaming of Gaussian records into the global buffer. Sorting costs
//! `ceil(n·log2(max(n, 2)) / sort_units)` cycles per tile. SP units take
//! tiles in row-major order, earliest-free unit first, and spend one cycle
//! per (Gaussian, 2×2 group) evaluation.

use super::{ArchConfig, SimReport, UnitReport, ID_BYTES, PIXEL_BYTES};
use crate::error::Result;
use crate::scene::{Camera, Gaussian};
use crate::splat::{bin_gaussians, padded_size, project_cut, render_tiles, BlendMode, Image};
use crate::traversal::Cut;

pub fn sort_cycles(n: usize, sort_units: usize) -> u64 {
    if n == 0 {
        return 0;
    }
    let work = n as f64 * (n.max(2) as f64).log2();
    (work / sort_units as f64).ceil() as u64
}

pub fn simulate_splat(
    gaussians: &[Gaussian],
    cut: &Cut,
    camera: &Camera,
    cfg: &ArchConfig,
    mode: BlendMode,
) -> Result<(Image, SimReport)> {
    cfg.validate()?;
    camera.validate()?;
    let n = cut.len();
    let projected = project_cut(gaussians, &cut.selected, cut.weights.as_deref(), camera);
    let (pw, ph) = padded_size(camera.width, camera.height);
    let bins = bin_gaussians(&projected, pw, ph);
    let rendered = render_tiles(&bins, &projected, camera.width, camera.height, mode);

    let g_bytes = cfg.gaussian_record_bytes as u64;
    let load_bytes = n as u64 * g_bytes;
    let bandwidth = cfg.dram_bytes_per_cycle * cfg.dram_channels as f64;
    let projection = (n as u64)
        .div_ceil(cfg.projection_units as u64)
        .max((load_bytes as f64 / bandwidth).ceil() as u64);
    let sort: u64 = bins.lists.iter().map(|l| sort_cycles(l.len(), cfg.sort_units)).sum();

    let mut sp_free = vec![0u64; cfg.sp_units];
    let mut sp_busy = vec![0u64; cfg.sp_units];
    for tile in &rendered.tiles {
        if tile.evaluations == 0 {
            continue;
        }
        let u = (0..cfg.sp_units)
            .min_by_key(|&u| (sp_free[u], u))
            .expect("at least one SP unit");
        sp_free[u] += tile.evaluations;
        sp_busy[u] += tile.evaluations;
    }
    let sp = sp_free.iter().copied().max().unwrap_or(0);

    let mut units = Vec::new();
    let pu = cfg.projection_units as u64;
    for i in 0..pu {
        units.push((format!("proj{i}"), n as u64 / pu + u64::from(i < n as u64 % pu)));
    }
    for i in 0..cfg.sort_units {
        units.push((format!("sort{i}"), sort));
    }
    for (i, &b) in sp_busy.iter().enumerate() {
        units.push((format!("sp{i}"), b));
    }

    let entries = bins.entries() as u64;
    let mut r = SimReport {
        splat_cycles: projection + sort + sp,
        units: units
            .into_iter()
            .map(|(name, busy)| UnitReport {
                name,
                busy,
                idle: 0,
                utilization: 0.0,
            })
            .collect(),
        dram_bytes_streaming: load_bytes
            + n as u64 * ID_BYTES
            + u64::from(camera.width) * u64::from(camera.height) * PIXEL_BYTES,
        sram_accesses: projected.len() as u64 + entries,
        sram_bytes: (projected.len() as u64 + entries) * g_bytes,
        gaussians_rendered: projected.len() as u64,
        divergence: rendered.stats,
        ..SimReport::default()
    };
    r.finish(&cfg.energy_weights);
    Ok((rendered.image, r))
}
