//! Marshalling plans and proxy-code generation.
//!
//! A [`CopyPlan`] is the authoritative description of the bytes a proxy moves
//! from the trusted carrier into untrusted memory (and which trusted bytes it
//! clears first). The C text produced by [`generate`] is a rendering of it.

mod render;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::decl::{InterfaceDef, ResolvedProgram};
use crate::layout::{occupied_ranges, padded_bytes, AbiModel, LayoutError, Layouter, StructLayout};
use crate::leak::{outward_carriers, Carrier, LeakChannel};

pub use render::{
    generate, proxy_file, types_header, GeneratedSource, STUB_HEADER, STUB_HEADER_NAME,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Strategy {
    /// Whole-struct copy, padding included.
    #[serde(rename = "shallow")]
    ShallowVulnerable,
    /// Per-member copy that never touches padding.
    #[serde(rename = "deep")]
    DeepCopy,
    /// Carrier (and everything it contains) packed to 1.
    #[serde(rename = "packed")]
    Packed,
    /// Zero the whole trusted value before initializing members.
    #[serde(rename = "memset")]
    FullMemset,
    /// Zero exactly the padding bytes before a whole-struct copy.
    #[serde(rename = "selective")]
    SelectivePaddingClear,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::ShallowVulnerable,
        Strategy::DeepCopy,
        Strategy::Packed,
        Strategy::FullMemset,
        Strategy::SelectivePaddingClear,
    ];

    pub const HARDENED: [Strategy; 4] = [
        Strategy::DeepCopy,
        Strategy::Packed,
        Strategy::FullMemset,
        Strategy::SelectivePaddingClear,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            Strategy::ShallowVulnerable => "shallow",
            Strategy::DeepCopy => "deep",
            Strategy::Packed => "packed",
            Strategy::FullMemset => "memset",
            Strategy::SelectivePaddingClear => "selective",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.cli_name() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Trusted,
    Untrusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CopyStep {
    Move {
        src_region: Region,
        src_offset: u64,
        dst_region: Region,
        dst_offset: u64,
        length: u64,
    },
    Zero {
        region: Region,
        offset: u64,
        length: u64,
    },
}

impl CopyStep {
    /// Trusted-to-untrusted move at identical offsets.
    pub fn out(offset: u64, length: u64) -> Self {
        CopyStep::Move {
            src_region: Region::Trusted,
            src_offset: offset,
            dst_region: Region::Untrusted,
            dst_offset: offset,
            length,
        }
    }

    pub fn zero_trusted(offset: u64, length: u64) -> Self {
        CopyStep::Zero {
            region: Region::Trusted,
            offset,
            length,
        }
    }

    pub fn length(&self) -> u64 {
        match self {
            CopyStep::Move { length, .. } | CopyStep::Zero { length, .. } => *length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyPlan {
    pub interface_name: String,
    pub channel: LeakChannel,
    pub carrier: Carrier,
    pub strategy: Strategy,
    /// Layout the plan operates on; the packed layout under [`Strategy::Packed`].
    pub carrier_layout: StructLayout,
    pub steps: Vec<CopyStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("strategy `{strategy}` cannot remove the padding of `{struct_name}`")]
    UnsupportedStrategy {
        strategy: Strategy,
        struct_name: String,
    },
}

/// One plan per struct value the interface moves out of the enclave.
pub fn plan(
    iface: &InterfaceDef,
    strategy: Strategy,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
) -> Result<Vec<CopyPlan>, PlanError> {
    let mut natural = Layouter::new(resolved, abi);
    let mut packed = Layouter::packed(resolved, abi);
    outward_carriers(iface, resolved)
        .into_iter()
        .map(|(channel, carrier)| {
            let layout = if strategy == Strategy::Packed {
                let l = packed.layout(&carrier.struct_name)?;
                if padded_bytes(&l) != 0 {
                    return Err(PlanError::UnsupportedStrategy {
                        strategy,
                        struct_name: carrier.struct_name.clone(),
                    });
                }
                l
            } else {
                natural.layout(&carrier.struct_name)?
            };
            let steps = steps_for(strategy, &layout);
            Ok(CopyPlan {
                interface_name: iface.name.clone(),
                channel,
                carrier,
                strategy,
                carrier_layout: layout.as_ref().clone(),
                steps,
            })
        })
        .collect()
}

fn steps_for(strategy: Strategy, layout: &StructLayout) -> Vec<CopyStep> {
    let whole = CopyStep::out(0, layout.size);
    match strategy {
        Strategy::ShallowVulnerable | Strategy::Packed => vec![whole],
        Strategy::DeepCopy => occupied_ranges(layout)
            .into_iter()
            .map(|r| CopyStep::out(r.start, r.length))
            .collect(),
        Strategy::FullMemset => vec![CopyStep::zero_trusted(0, layout.size), whole],
        Strategy::SelectivePaddingClear => layout
            .hole_ranges()
            .into_iter()
            .map(|r| CopyStep::zero_trusted(r.start, r.length))
            .chain(std::iter::once(whole))
            .collect(),
    }
}
