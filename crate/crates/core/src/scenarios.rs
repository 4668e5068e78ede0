//! Seeded random market generation for block-structured experiment designs.
//!
//! # Random streams
//!
//! Every instance draws from its own ChaCha8 stream. The 256-bit key is four
//! consecutive SplitMix64 outputs of the master seed, written little-endian;
//! the ChaCha stream id is the instance index (the global index across all
//! blocks, or the within-block index when common random numbers are
//! enabled). A uniform variate on `[0, 1)` is the top 53 bits of the next
//! `u64` times `2^-53`, and a draw from `[min, max)` is `min + (max - min) u`.
//!
//! Within an instance the draw order is `D`, then `a_s`, `b_s`, `x_b` for each
//! prosumer in index order. The mapping is therefore independent of the
//! platform, of the order in which instances are generated and of any
//! parallelism.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, MarketInstance, Mode, ProsumerParams, Result};

/// Uniform distribution on `[min, max)`; `min == max` yields the constant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RangeSpec {
    pub min: f64,
    pub max: f64,
}

impl RangeSpec {
    pub const fn new(min: f64, max: f64) -> Self {
        RangeSpec { min, max }
    }

    pub const fn constant(v: f64) -> Self {
        RangeSpec { min: v, max: v }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn sample(&self, stream: &mut Substream) -> f64 {
        self.min + (self.max - self.min) * stream.next_unit()
    }

    fn validate(&self, field: &'static str, lower: f64, strict: bool) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::InvalidParameter {
                field,
                value: self.min,
            });
        }
        let ok = if strict {
            self.min > lower
        } else {
            self.min >= lower
        };
        if !ok {
            return Err(Error::InvalidParameter {
                field,
                value: self.min,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProsumerSpec {
    pub a_s: RangeSpec,
    pub b_s: RangeSpec,
    pub x_b: RangeSpec,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockSpec {
    pub n_instances: usize,
    pub demand: RangeSpec,
    pub prosumers: Vec<ProsumerSpec>,
}

impl BlockSpec {
    pub fn n_prosumers(&self) -> usize {
        self.prosumers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.prosumers.len() < 2 {
            return Err(Error::TooFewProsumers(self.prosumers.len()));
        }
        self.demand.validate("D", 0.0, true)?;
        for p in &self.prosumers {
            p.a_s.validate("a_s", 0.0, true)?;
            p.b_s.validate("b_s", 0.0, false)?;
            p.x_b.validate("x_b", 0.0, false)?;
        }
        Ok(())
    }

    /// The instance with every parameter at the middle of its range.
    pub fn midpoint_instance(&self, mode: Mode) -> Result<MarketInstance> {
        let prosumers = self
            .prosumers
            .iter()
            .map(|p| ProsumerParams::new(p.a_s.midpoint(), p.b_s.midpoint(), p.x_b.midpoint()))
            .collect::<Result<Vec<_>>>()?;
        MarketInstance::new(self.demand.midpoint(), prosumers, mode)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExperimentDesign {
    pub name: String,
    pub master_seed: u64,
    /// Blocks in sweep order.
    pub blocks: Vec<BlockSpec>,
    /// Reuse the same streams in every block (variance reduction).
    #[cfg_attr(feature = "serde", serde(default))]
    pub common_random_numbers: bool,
}

/// Position of one instance inside a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceSlot {
    pub instance_index: usize,
    pub block_index: usize,
    /// Stream id passed to [`substream`].
    pub stream_index: u64,
}

impl ExperimentDesign {
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidConfig("design has no blocks"));
        }
        self.blocks.iter().try_for_each(BlockSpec::validate)
    }

    pub fn total_instances(&self) -> usize {
        self.blocks.iter().map(|b| b.n_instances).sum()
    }

    /// Multiplies every block's instance count by `factor`, rounding and
    /// keeping at least one instance per block.
    pub fn scaled(&self, factor: f64) -> Result<ExperimentDesign> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter {
                field: "scale",
                value: factor,
            });
        }
        let mut out = self.clone();
        for b in &mut out.blocks {
            b.n_instances = (libm::round(b.n_instances as f64 * factor) as usize).max(1);
        }
        Ok(out)
    }

    /// All instance slots in index order.
    pub fn slots(&self) -> Vec<InstanceSlot> {
        let mut out = Vec::with_capacity(self.total_instances());
        let mut next = 0;
        for (block_index, block) in self.blocks.iter().enumerate() {
            for local in 0..block.n_instances {
                let stream_index = if self.common_random_numbers {
                    local
                } else {
                    next
                };
                out.push(InstanceSlot {
                    instance_index: next,
                    block_index,
                    stream_index: stream_index as u64,
                });
                next += 1;
            }
        }
        out
    }

    pub fn instance(&self, slot: &InstanceSlot, mode: Mode) -> Result<MarketInstance> {
        let block = self
            .blocks
            .get(slot.block_index)
            .ok_or(Error::IndexOutOfRange {
                index: slot.block_index,
                len: self.blocks.len(),
            })?;
        let mut stream = substream(self.master_seed, slot.stream_index);
        sample_instance(block, mode, &mut stream)
    }
}

/// An independent, deterministic random stream for one instance.
#[derive(Debug, Clone)]
pub struct Substream(ChaCha8Rng);

impl Substream {
    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn next_unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn substream(master_seed: u64, instance_index: u64) -> Substream {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(instance_index);
    Substream(rng)
}

/// Draws one market from `block`: `D` first, then `a_s`, `b_s`, `x_b` per
/// prosumer.
pub fn sample_instance(
    block: &BlockSpec,
    mode: Mode,
    stream: &mut Substream,
) -> Result<MarketInstance> {
    let demand = block.demand.sample(stream);
    let prosumers = block
        .prosumers
        .iter()
        .map(|spec| {
            let a_s = spec.a_s.sample(stream);
            let b_s = spec.b_s.sample(stream);
            let x_b = spec.x_b.sample(stream);
            ProsumerParams::new(a_s, b_s, x_b)
        })
        .collect::<Result<Vec<_>>>()?;
    MarketInstance::new(demand, prosumers, mode)
}

/// The four built-in designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DesignName {
    TwoProsumer,
    SevenProsumer,
    CostSweep,
    DemandSweep,
}

impl DesignName {
    pub const ALL: [DesignName; 4] = [
        DesignName::TwoProsumer,
        DesignName::SevenProsumer,
        DesignName::CostSweep,
        DesignName::DemandSweep,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignName::TwoProsumer => "two-prosumer",
            DesignName::SevenProsumer => "seven-prosumer",
            DesignName::CostSweep => "cost-sweep",
            DesignName::DemandSweep => "demand-sweep",
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(self, DesignName::CostSweep | DesignName::DemandSweep)
    }
}

impl FromStr for DesignName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DesignName::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or(Error::UnknownDesign)
    }
}

const INSTANCES_PER_BLOCK: usize = 1000;
const SWEEP_PROSUMERS: usize = 7;

const SWEEP_DEMAND: RangeSpec = RangeSpec::new(20.0, 30.0);
const SWEEP_LINEAR_COST: RangeSpec = RangeSpec::new(0.1, 1.0);
const LOW_COST_SLOPE: RangeSpec = RangeSpec::new(1.0, 2.0);
const HIGH_COST_SLOPE: RangeSpec = RangeSpec::new(9.0, 10.0);
const HIGH_CONSUMPTION: RangeSpec = RangeSpec::new(1.5, 2.5);
const LOW_CONSUMPTION: RangeSpec = RangeSpec::new(0.1, 1.0);

pub fn builtin_design(name: &str, master_seed: u64) -> Result<ExperimentDesign> {
    let which: DesignName = name.parse()?;
    let blocks = match which {
        DesignName::TwoProsumer => vec![BlockSpec {
            n_instances: INSTANCES_PER_BLOCK,
            demand: RangeSpec::new(5.0, 10.0),
            prosumers: vec![
                ProsumerSpec {
                    a_s: RangeSpec::new(0.1, 10.0),
                    b_s: RangeSpec::new(0.0, 5.0),
                    x_b: RangeSpec::new(5.0, 10.0),
                },
                ProsumerSpec {
                    a_s: RangeSpec::new(0.1, 10.0),
                    b_s: RangeSpec::new(0.0, 5.0),
                    x_b: RangeSpec::new(0.0, 5.0),
                },
            ],
        }],
        DesignName::SevenProsumer => vec![BlockSpec {
            n_instances: INSTANCES_PER_BLOCK,
            demand: RangeSpec::new(20.0, 30.0),
            prosumers: vec![
                ProsumerSpec {
                    a_s: RangeSpec::new(1.0, 10.0),
                    b_s: RangeSpec::new(0.1, 1.0),
                    x_b: RangeSpec::new(1.0, 2.0),
                };
                SWEEP_PROSUMERS
            ],
        }],
        // Block k: the first k prosumers have cheap technology.
        DesignName::CostSweep => (0..=SWEEP_PROSUMERS)
            .map(|k| sweep_block(|i| ProsumerSpec {
                a_s: if i < k { LOW_COST_SLOPE } else { HIGH_COST_SLOPE },
                b_s: SWEEP_LINEAR_COST,
                x_b: RangeSpec::new(1.0, 2.0),
            }))
            .collect(),
        // Block k: the first k prosumers consume a lot.
        DesignName::DemandSweep => (0..=SWEEP_PROSUMERS)
            .map(|k| sweep_block(|i| ProsumerSpec {
                a_s: LOW_COST_SLOPE,
                b_s: SWEEP_LINEAR_COST,
                x_b: if i < k { HIGH_CONSUMPTION } else { LOW_CONSUMPTION },
            }))
            .collect(),
    };
    Ok(ExperimentDesign {
        name: String::from(which.as_str()),
        master_seed,
        blocks,
        common_random_numbers: false,
    })
}

fn sweep_block(spec: impl Fn(usize) -> ProsumerSpec) -> BlockSpec {
    BlockSpec {
        n_instances: INSTANCES_PER_BLOCK,
        demand: SWEEP_DEMAND,
        prosumers: (0..SWEEP_PROSUMERS).map(spec).collect(),
    }
}

impl core::fmt::Display for InstanceSlot {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "instance {} (block {}, stream {})",
            self.instance_index, self.block_index, self.stream_index
        )
    }
}
