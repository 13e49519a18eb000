//! Cycle-approximate model of the LoD-search core and the splatting core.
//!
//! The model is single-threaded and deterministic: identical inputs give
//! identical reports. Every unit retires one operation per cycle; memory is
//! accounted in bytes, split into SRAM, streaming DRAM and random DRAM, and
//! weighted into a relative energy figure.

mod lod;
mod splat;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Camera, LodTree};
use crate::sltree::SlTree;
use crate::splat::{BlendMode, DivergenceStats, Image};

pub use lod::{fill_latency, simulate_lod};
pub use splat::{simulate_splat, sort_cycles};

/// Bytes per subtree id in the subtree queue and per node id in the output
/// buffer.
pub const ID_BYTES: u64 = 4;
/// Bytes per pixel written back for the final image.
pub const PIXEL_BYTES: u64 = 3;

/// Relative energy per byte moved.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyWeights {
    pub sram_access: f64,
    pub dram_streaming: f64,
    pub dram_random: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        Self {
            sram_access: 1.0,
            dram_streaming: 25.0 / 3.0,
            dram_random: 25.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub lt_units: usize,
    pub clock_hz: f64,
    pub cache_ways: usize,
    pub cache_sets: usize,
    /// Records per cache entry; must hold a whole subtree.
    pub cache_entry_nodes: usize,
    pub output_buffer_bytes: usize,
    pub subtree_queue_bytes: usize,
    pub sp_units: usize,
    pub projection_units: usize,
    pub sort_units: usize,
    pub global_buffer_bytes: usize,
    pub dram_channels: usize,
    /// Per channel.
    pub dram_bytes_per_cycle: f64,
    pub node_record_bytes: usize,
    pub gaussian_record_bytes: usize,
    pub energy_weights: EnergyWeights,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            lt_units: 4,
            clock_hz: 1e9,
            cache_ways: 4,
            cache_sets: 128,
            cache_entry_nodes: 32,
            output_buffer_bytes: 8192,
            subtree_queue_bytes: 48,
            sp_units: 4,
            projection_units: 4,
            sort_units: 4,
            global_buffer_bytes: 262_144,
            dram_channels: 4,
            dram_bytes_per_cycle: 16.0,
            node_record_bytes: 40,
            gaussian_record_bytes: 56,
            energy_weights: EnergyWeights::default(),
        }
    }
}

const RATIO_TOLERANCE: f64 = 1e-9;

impl ArchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(Error::from_json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialisation cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("lt_units", self.lt_units),
            ("cache_ways", self.cache_ways),
            ("cache_sets", self.cache_sets),
            ("cache_entry_nodes", self.cache_entry_nodes),
            ("output_buffer_bytes", self.output_buffer_bytes),
            ("sp_units", self.sp_units),
            ("projection_units", self.projection_units),
            ("sort_units", self.sort_units),
            ("global_buffer_bytes", self.global_buffer_bytes),
            ("dram_channels", self.dram_channels),
            ("node_record_bytes", self.node_record_bytes),
            ("gaussian_record_bytes", self.gaussian_record_bytes),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if (self.subtree_queue_bytes as u64) < ID_BYTES {
            return Err(Error::Config(format!(
                "subtree_queue_bytes must hold at least one {ID_BYTES}-byte id"
            )));
        }
        if (self.output_buffer_bytes as u64) < 2 * ID_BYTES {
            return Err(Error::Config("output_buffer_bytes must hold one id per half".into()));
        }
        for (name, v) in [
            ("clock_hz", self.clock_hz),
            ("dram_bytes_per_cycle", self.dram_bytes_per_cycle),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        let w = &self.energy_weights;
        if !(w.sram_access > 0.0 && w.dram_streaming > 0.0 && w.dram_random > 0.0)
            || ![w.sram_access, w.dram_streaming, w.dram_random]
                .iter()
                .all(|v| v.is_finite())
        {
            return Err(Error::Config("energy weights must be positive and finite".into()));
        }
        let random_to_sram = w.dram_random / w.sram_access;
        let random_to_stream = w.dram_random / w.dram_streaming;
        if (random_to_sram - 25.0).abs() > 25.0 * RATIO_TOLERANCE {
            return Err(Error::Config(format!(
                "dram_random : sram_access must be 25 : 1, got {random_to_sram}"
            )));
        }
        if (random_to_stream - 3.0).abs() > 3.0 * RATIO_TOLERANCE {
            return Err(Error::Config(format!(
                "dram_random : dram_streaming must be 3 : 1, got {random_to_stream}"
            )));
        }
        Ok(())
    }

    /// Errors when a cache entry cannot hold a `tau_s`-record subtree.
    pub fn check_tau(&self, tau_s: usize) -> Result<()> {
        if self.cache_entry_nodes < tau_s {
            return Err(Error::Config(format!(
                "cache entries hold {} records but subtrees need {tau_s}",
                self.cache_entry_nodes
            )));
        }
        Ok(())
    }

    pub fn subtree_queue_capacity(&self) -> usize {
        self.subtree_queue_bytes / ID_BYTES as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitReport {
    pub name: String,
    pub busy: u64,
    pub idle: u64,
    pub utilization: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub sram: f64,
    pub dram_streaming: f64,
    pub dram_random: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub lod_cycles: u64,
    pub splat_cycles: u64,
    pub total_cycles: u64,
    pub units: Vec<UnitReport>,
    pub cache_fills: u64,
    /// Cycles in which the fill engine waited for a finished entry in the
    /// target set.
    pub fill_stall_cycles: u64,
    /// Subtree ids that overflowed the on-chip queue into DRAM.
    pub queue_spills: u64,
    pub output_swaps: u64,
    /// Streaming DRAM bytes attributable to the LoD search.
    pub lod_dram_bytes: u64,
    pub dram_bytes_streaming: u64,
    pub dram_bytes_random: u64,
    pub sram_accesses: u64,
    pub sram_bytes: u64,
    pub energy: EnergyBreakdown,
    pub nodes_visited: u64,
    pub subtrees_processed: u64,
    pub gaussians_rendered: u64,
    pub divergence: DivergenceStats,
}

pub const CSV_HEADER: &str = "lod_cycles,splat_cycles,total_cycles,lod_share,cache_fills,fill_stall_cycles,\
queue_spills,lod_dram_bytes,dram_bytes_streaming,dram_bytes_random,sram_bytes,energy_total,nodes_visited,\
subtrees_processed,gaussians_rendered,evaluations,mixed,simd_utilization";

impl SimReport {
    /// Fraction of total cycles spent in the LoD search.
    pub fn lod_share(&self) -> f64 {
        if self.total_cycles == 0 {
            0.0
        } else {
            self.lod_cycles as f64 / self.total_cycles as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialisation cannot fail")
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{},{},{},{},{},{},{:.3},{},{},{},{},{},{:.6}",
            self.lod_cycles,
            self.splat_cycles,
            self.total_cycles,
            self.lod_share(),
            self.cache_fills,
            self.fill_stall_cycles,
            self.queue_spills,
            self.lod_dram_bytes,
            self.dram_bytes_streaming,
            self.dram_bytes_random,
            self.sram_bytes,
            self.energy.total,
            self.nodes_visited,
            self.subtrees_processed,
            self.gaussians_rendered,
            self.divergence.evaluations,
            self.divergence.mixed,
            self.divergence.simd_utilization(),
        )
    }

    /// Recomputes idle cycles, utilization and energy from the counters.
    fn finish(&mut self, weights: &EnergyWeights) {
        self.total_cycles = self.lod_cycles + self.splat_cycles;
        for u in &mut self.units {
            u.idle = self.total_cycles - u.busy;
            u.utilization = if self.total_cycles == 0 {
                0.0
            } else {
                u.busy as f64 / self.total_cycles as f64
            };
        }
        let sram = self.sram_bytes as f64 * weights.sram_access;
        let dram_streaming = self.dram_bytes_streaming as f64 * weights.dram_streaming;
        let dram_random = self.dram_bytes_random as f64 * weights.dram_random;
        self.energy = EnergyBreakdown {
            sram,
            dram_streaming,
            dram_random,
            total: sram + dram_streaming + dram_random,
        };
    }

    /// Runs `lod` then `splat` back to back.
    fn serial(lod: SimReport, splat: SimReport, weights: &EnergyWeights) -> SimReport {
        let mut r = SimReport {
            lod_cycles: lod.lod_cycles,
            splat_cycles: splat.splat_cycles,
            units: lod.units.into_iter().chain(splat.units).collect(),
            cache_fills: lod.cache_fills,
            fill_stall_cycles: lod.fill_stall_cycles,
            queue_spills: lod.queue_spills,
            output_swaps: lod.output_swaps,
            lod_dram_bytes: lod.lod_dram_bytes,
            dram_bytes_streaming: lod.dram_bytes_streaming + splat.dram_bytes_streaming,
            dram_bytes_random: lod.dram_bytes_random + splat.dram_bytes_random,
            sram_accesses: lod.sram_accesses + splat.sram_accesses,
            sram_bytes: lod.sram_bytes + splat.sram_bytes,
            nodes_visited: lod.nodes_visited,
            subtrees_processed: lod.subtrees_processed,
            gaussians_rendered: splat.gaussians_rendered,
            divergence: splat.divergence,
            ..SimReport::default()
        };
        r.finish(weights);
        r
    }
}

/// LoD search followed by splatting of the resulting cut.
pub fn simulate_end_to_end(
    sltree: &SlTree,
    camera: &Camera,
    epsilon: f64,
    cfg: &ArchConfig,
    mode: BlendMode,
) -> Result<(Image, SimReport)> {
    let (cut, lod) = simulate_lod(sltree, camera, epsilon, cfg)?;
    let (image, splat) = simulate_splat(sltree.gaussians(), &cut, camera, cfg, mode)?;
    Ok((image, SimReport::serial(lod, splat, &cfg.energy_weights)))
}

/// Streaming scan of every node record, the traffic an exhaustive search
/// would need.
pub fn exhaustive_baseline(tree: &LodTree, cfg: &ArchConfig) -> Result<SimReport> {
    cfg.validate()?;
    let n = tree.len() as u64;
    let rec = cfg.node_record_bytes as u64;
    let bytes = n * rec;
    let bandwidth = cfg.dram_bytes_per_cycle * cfg.dram_channels as f64;
    let cycles = n
        .div_ceil(cfg.lt_units as u64)
        .max((bytes as f64 / bandwidth).ceil() as u64);
    let units = (0..cfg.lt_units)
        .map(|i| UnitReport {
            name: format!("lt{i}"),
            busy: n / cfg.lt_units as u64 + u64::from((i as u64) < n % cfg.lt_units as u64),
            idle: 0,
            utilization: 0.0,
        })
        .collect();
    let mut r = SimReport {
        lod_cycles: cycles,
        units,
        lod_dram_bytes: bytes,
        dram_bytes_streaming: bytes,
        sram_accesses: n,
        sram_bytes: bytes,
        nodes_visited: n,
        ..SimReport::default()
    };
    r.finish(&cfg.energy_weights);
    Ok(r)
}
