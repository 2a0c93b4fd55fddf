//! Match-action pipeline emulation under switch-style resource constraints.
//!
//! The pipeline hosts staged re-implementations of the pruning algorithms
//! and enforces the hardware discipline the reference implementations are
//! written against:
//!
//! * a packet traverses stages strictly in order,
//! * each register array is read-modify-written at most once per packet,
//! * per-stage ALU usage stays within the profile,
//! * SRAM and TCAM stay within the packed budget.
//!
//! Violating any of these is an internal invariant error (a bug in a staged
//! program), never a runtime condition. Staged programs must produce the
//! same decision as the reference algorithm for every packet; the test
//! suites drive both side by side.

pub mod logtable;
mod programs;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::algorithms::{AlgorithmConfig, Decision, EntryView, Pass, TableSide};
use crate::planner::{
    estimate_resources, pack_queries, AlgorithmShape, ConfigError, Placement, ResourceFootprint,
    SwitchProfile,
};
use crate::transport::{Packet, PacketKind};

pub use logtable::{aph_score, approx_log, msb_index, LogTable, MsbTcam, DEFAULT_BETA};
use programs::Program;

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("packing failed: {0}")]
    Packing(#[from] ConfigError),
    #[error("invariant violation: register array {array} in stage {stage} accessed twice in one packet")]
    RegisterReused { stage: usize, array: usize },
    #[error("invariant violation: stage {stage} ALU usage {used} exceeds profile {cap}")]
    AluOverflow { stage: usize, used: u32, cap: u32 },
    #[error("invariant violation: stage order regressed from {last} to {stage}")]
    StageOrder { last: usize, stage: usize },
    #[error("invariant violation: {0}")]
    Program(String),
    #[error("flow {0} bound to unknown query index {1}")]
    UnknownQuery(u16, usize),
}

/// Handle to a register array placed in a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayRef {
    stage: usize,
    index: usize,
}

#[derive(Debug)]
struct RegArray {
    cells: Vec<u64>,
    last_epoch: u64,
}

#[derive(Debug, Default)]
struct Stage {
    arrays: Vec<RegArray>,
    alu_epoch: u64,
    alus_used: u32,
}

/// Per-flow binding: which resident query processes the flow, and in what
/// role.
#[derive(Debug, Clone, Copy)]
pub struct FlowBinding {
    pub query: usize,
    pub side: TableSide,
    pub pass: Pass,
}

/// Outcome of pushing one packet through the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketOutcome {
    /// No query matches the flow; the packet passes through untouched.
    Unmatched,
    Evaluated { query: usize, decision: Decision },
}

/// The emulated pipeline: packed stage ranges, register arrays, and one
/// staged program per resident query, plus the final decision stage that
/// selects each packet's prune bit.
#[derive(Debug)]
pub struct Pipeline {
    profile: SwitchProfile,
    placement: Placement,
    footprints: Vec<ResourceFootprint>,
    stages: Vec<Stage>,
    programs: Vec<Program>,
    flows: BTreeMap<u16, FlowBinding>,
    epoch: u64,
}

/// The footprint a staged program actually allocates, used for packing.
///
/// Mostly the public per-algorithm footprints; two corrections keep packing
/// honest about the simulator's real layout: the FIFO cache adds its cursor
/// array (one more ALU and d more cells) and the group-by matrix carries
/// key cells alongside the accounted value cells.
fn internal_footprint(
    cfg: &AlgorithmConfig,
    profile: &SwitchProfile,
) -> Result<ResourceFootprint, ConfigError> {
    let shape = match cfg {
        AlgorithmConfig::Filter(c) => AlgorithmShape::Filter {
            conditions: (crate::algorithms::CompiledFilter::new(c)
                .map(|f| f.atoms.len() as u32)
                .unwrap_or(1))
            .max(1),
        },
        AlgorithmConfig::Distinct(c) => match c.policy {
            crate::algorithms::ReplacePolicy::Lru => AlgorithmShape::DistinctLru {
                rows: c.rows as u64,
                width: c.width as u32,
            },
            crate::algorithms::ReplacePolicy::Fifo => AlgorithmShape::DistinctFifo {
                rows: c.rows as u64,
                width: c.width as u32 + 1, // rotating-cursor array rides along
                alus_per_stage: profile.alus_per_stage,
            },
        },
        AlgorithmConfig::TopNDet(c) => AlgorithmShape::TopNDet {
            width: c.thresholds as u32,
        },
        AlgorithmConfig::TopNRand(c) => AlgorithmShape::TopNRand {
            rows: c.rows as u64,
            width: c.width as u32,
        },
        AlgorithmConfig::Skyline(c) => match c.score {
            crate::algorithms::ScoreKind::Sum => AlgorithmShape::SkylineSum {
                dims: c.dims as u32,
                width: c.width as u32,
            },
            crate::algorithms::ScoreKind::Aph { .. } => AlgorithmShape::SkylineAph {
                dims: c.dims as u32,
                width: c.width as u32,
            },
        },
        AlgorithmConfig::GroupBy(c) => {
            let base = estimate_resources(AlgorithmShape::GroupBy {
                rows: c.rows as u64,
                width: c.hashes as u32,
            })?;
            // Key array next to each value array: same stages, twice the
            // cells and accesses.
            return Ok(ResourceFootprint {
                stages: base.stages,
                alus: base.alus * 2,
                sram_bits: base.sram_bits * 2,
                tcam_entries: 0,
            });
        }
        AlgorithmConfig::Join(c) => AlgorithmShape::JoinBloom {
            filter_bits: c.total_bits,
            hash_count: c.hash_count as u32,
        },
        AlgorithmConfig::Having(c) => match c {
            crate::algorithms::HavingConfig::MinMax { cache, .. } => {
                AlgorithmShape::HavingMinMax {
                    rows: cache.rows as u64,
                    width: cache.width as u32,
                }
            }
            crate::algorithms::HavingConfig::Sketch { rows, width, .. } => {
                AlgorithmShape::HavingSketch {
                    rows: *rows as u32,
                    width: *width as u64,
                    alus_per_stage: profile.alus_per_stage,
                }
            }
        },
    };
    estimate_resources(shape)
}

/// Pack the queries onto the profile and realize each algorithm's staged
/// state machine.
pub fn build_pipeline(
    configs: &[AlgorithmConfig],
    profile: &SwitchProfile,
) -> Result<Pipeline, PipelineError> {
    if configs.is_empty() {
        return Err(PipelineError::Packing(ConfigError::Invalid(
            "no queries to host".into(),
        )));
    }
    let footprints: Vec<ResourceFootprint> = configs
        .iter()
        .map(|c| internal_footprint(c, profile).map_err(PipelineError::Packing))
        .collect::<Result<_, _>>()?;
    let placement = pack_queries(&footprints, profile)?;

    let mut pipeline = Pipeline {
        profile: *profile,
        placement: placement.clone(),
        footprints,
        stages: (0..profile.stages).map(|_| Stage::default()).collect(),
        programs: Vec::new(),
        flows: BTreeMap::new(),
        epoch: 0,
    };
    for (qi, cfg) in configs.iter().enumerate() {
        let first_stage = placement
            .assignments
            .iter()
            .find(|a| a.query == qi)
            .expect("every query placed")
            .first_stage as usize;
        let program = Program::build(cfg, first_stage, &mut pipeline)
            .map_err(|e| PipelineError::Program(format!("query {qi}: {e}")))?;
        pipeline.programs.push(program);
    }
    Ok(pipeline)
}

impl Pipeline {
    pub fn profile(&self) -> &SwitchProfile {
        &self.profile
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn footprints(&self) -> &[ResourceFootprint] {
        &self.footprints
    }

    /// Route a flow to a resident query.
    pub fn bind_flow(&mut self, fid: u16, binding: FlowBinding) -> Result<(), PipelineError> {
        if binding.query >= self.programs.len() {
            return Err(PipelineError::UnknownQuery(fid, binding.query));
        }
        self.flows.insert(fid, binding);
        Ok(())
    }

    /// Two-pass barrier for a resident query.
    pub fn finish_pass(&mut self, query: usize, pass: Pass) {
        self.programs[query].finish_pass(pass);
    }

    /// Place a register array in a stage. The control plane may set a
    /// nonzero initial cell value at configure time (e.g. the MIN identity).
    fn alloc_array(&mut self, stage: usize, cells: usize) -> ArrayRef {
        self.alloc_array_init(stage, cells, 0)
    }

    fn alloc_array_init(&mut self, stage: usize, cells: usize, init: u64) -> ArrayRef {
        let arrays = &mut self.stages[stage].arrays;
        arrays.push(RegArray {
            cells: vec![init; cells],
            last_epoch: 0,
        });
        ArrayRef {
            stage,
            index: arrays.len() - 1,
        }
    }

    /// Push one packet through: DATA packets of bound flows run their
    /// query's staged program; unknown flows pass through untouched.
    pub fn process_packet(&mut self, pkt: &Packet) -> Result<PacketOutcome, PipelineError> {
        if pkt.kind != PacketKind::Data {
            return Ok(PacketOutcome::Unmatched);
        }
        let Some(binding) = self.flows.get(&pkt.fid).copied() else {
            return Ok(PacketOutcome::Unmatched);
        };
        let view = EntryView {
            flow: pkt.fid,
            seq: pkt.seq,
            values: &pkt.values,
            side: binding.side,
            pass: binding.pass,
        };
        let decision = self.process_view(binding.query, &view)?;
        Ok(PacketOutcome::Evaluated {
            query: binding.query,
            decision,
        })
    }

    /// Run one entry view through a resident query's staged program.
    pub fn process_view(
        &mut self,
        query: usize,
        view: &EntryView,
    ) -> Result<Decision, PipelineError> {
        self.epoch += 1;
        let epoch = self.epoch;
        let mut program = std::mem::replace(&mut self.programs[query], Program::Tombstone);
        let mut ctx = ExecCtx {
            stages: &mut self.stages,
            epoch,
            alu_cap: self.profile.alus_per_stage,
            last_stage: 0,
        };
        let result = program.execute(&mut ctx, view);
        self.programs[query] = program;
        let prune = result?;
        // Decision stage: one ALU op to select the flow's prune bit.
        self.epoch += 1;
        let mut ctx = ExecCtx {
            stages: &mut self.stages,
            epoch: self.epoch,
            alu_cap: self.profile.alus_per_stage,
            last_stage: self.placement.decision_stage as usize,
        };
        ctx.alu(self.placement.decision_stage as usize, 1)?;
        Ok(if prune {
            Decision::Prune
        } else {
            Decision::Forward
        })
    }

    /// Stage layout summary for debugging.
    pub fn dump_layout(&self) -> String {
        let mut out = String::new();
        for a in &self.placement.assignments {
            out.push_str(&format!(
                "query {} -> stages {}..={}\n",
                a.query, a.first_stage, a.last_stage
            ));
        }
        out.push_str(&format!("decision stage {}\n", self.placement.decision_stage));
        for (i, s) in self.stages.iter().enumerate() {
            if !s.arrays.is_empty() {
                let cells: usize = s.arrays.iter().map(|a| a.cells.len()).sum();
                out.push_str(&format!(
                    "stage {i}: {} register arrays, {cells} cells\n",
                    s.arrays.len()
                ));
            }
        }
        out
    }
}

/// Per-packet execution context enforcing the constraint model.
pub(crate) struct ExecCtx<'a> {
    stages: &'a mut [Stage],
    epoch: u64,
    alu_cap: u32,
    last_stage: usize,
}

impl<'a> ExecCtx<'a> {
    fn touch_stage(&mut self, stage: usize) -> Result<(), PipelineError> {
        if stage < self.last_stage {
            return Err(PipelineError::StageOrder {
                last: self.last_stage,
                stage,
            });
        }
        self.last_stage = stage;
        Ok(())
    }

    /// Count `n` ALU operations in a stage for this packet.
    pub(crate) fn alu(&mut self, stage: usize, n: u32) -> Result<(), PipelineError> {
        self.touch_stage(stage)?;
        let s = &mut self.stages[stage];
        if s.alu_epoch != self.epoch {
            s.alu_epoch = self.epoch;
            s.alus_used = 0;
        }
        s.alus_used += n;
        if s.alus_used > self.alu_cap {
            return Err(PipelineError::AluOverflow {
                stage,
                used: s.alus_used,
                cap: self.alu_cap,
            });
        }
        Ok(())
    }

    /// The single read-modify-write this packet gets on `array`. Returns
    /// the pre-write value. Counts one ALU op.
    pub(crate) fn rmw(
        &mut self,
        array: ArrayRef,
        index: usize,
        write: impl FnOnce(u64) -> u64,
    ) -> Result<u64, PipelineError> {
        self.alu(array.stage, 1)?;
        let arr = &mut self.stages[array.stage].arrays[array.index];
        if arr.last_epoch == self.epoch {
            return Err(PipelineError::RegisterReused {
                stage: array.stage,
                array: array.index,
            });
        }
        arr.last_epoch = self.epoch;
        let old = arr.cells[index];
        arr.cells[index] = write(old);
        Ok(old)
    }
}
