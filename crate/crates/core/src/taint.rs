//! Byte-granular provenance simulation of a [`CopyPlan`].
//!
//! Every byte of the trusted carrier starts out [`ByteTag::Secret`] (it holds
//! whatever the enclave heap or stack held before) and every byte of the
//! untrusted destination starts out [`ByteTag::UntrustedJunk`]. Member
//! initialization and plan steps rewrite tags; whatever is still `Secret` in
//! untrusted memory afterwards has escaped.

use serde::Serialize;
use thiserror::Error;

use crate::codegen::{plan, CopyPlan, CopyStep, PlanError, Region, Strategy};
use crate::decl::{InterfaceDef, ResolvedProgram};
use crate::layout::{occupied_ranges, push_coalesced, AbiModel, ByteRange};
use crate::leak::Carrier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteTag {
    Secret,
    Initialized,
    UntrustedJunk,
}

/// Which members of the trusted carrier are assigned before marshalling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InitPolicy {
    AllMembers,
    None,
    /// Top-level member names.
    Partial(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("copy step {step_index} exceeds buffer bounds")]
    OutOfBounds { step_index: usize },
    #[error("carrier `{struct_name}` has no member `{member}`")]
    UnknownMember { struct_name: String, member: String },
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub trusted: Vec<ByteTag>,
    pub untrusted: Vec<ByteTag>,
    pub write_log: Vec<CopyStep>,
}

impl SimState {
    pub fn new(trusted_len: usize, untrusted_len: usize) -> Self {
        Self {
            trusted: vec![ByteTag::Secret; trusted_len],
            untrusted: vec![ByteTag::UntrustedJunk; untrusted_len],
            write_log: Vec::new(),
        }
    }

    fn region(&self, r: Region) -> &[ByteTag] {
        match r {
            Region::Trusted => &self.trusted,
            Region::Untrusted => &self.untrusted,
        }
    }

    fn region_mut(&mut self, r: Region) -> &mut [ByteTag] {
        match r {
            Region::Trusted => &mut self.trusted,
            Region::Untrusted => &mut self.untrusted,
        }
    }

    fn range(buf: &[ByteTag], offset: u64, length: u64) -> Option<std::ops::Range<usize>> {
        let end = offset.checked_add(length)?;
        (end <= buf.len() as u64).then_some(offset as usize..end as usize)
    }

    pub fn apply(&mut self, step_index: usize, step: CopyStep) -> Result<(), SimError> {
        let oob = SimError::OutOfBounds { step_index };
        match step {
            CopyStep::Zero {
                region,
                offset,
                length,
            } => {
                let buf = self.region_mut(region);
                let r = Self::range(buf, offset, length).ok_or(oob)?;
                buf[r].fill(ByteTag::Initialized);
            }
            CopyStep::Move {
                src_region,
                src_offset,
                dst_region,
                dst_offset,
                length,
            } => {
                let src = self.region(src_region);
                let sr = Self::range(src, src_offset, length).ok_or(oob.clone())?;
                let tags = src[sr].to_vec();
                let dst = self.region_mut(dst_region);
                let dr = Self::range(dst, dst_offset, length).ok_or(oob)?;
                dst[dr].copy_from_slice(&tags);
            }
        }
        self.write_log.push(step);
        Ok(())
    }

    /// Untrusted ranges still tagged `Secret`, coalesced.
    pub fn escaped(&self) -> Vec<ByteRange> {
        let mut out = Vec::new();
        for (i, t) in self.untrusted.iter().enumerate() {
            if *t == ByteTag::Secret {
                push_coalesced(&mut out, ByteRange::new(i as u64, 1));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaintReport {
    #[serde(rename = "interface")]
    pub interface_name: String,
    pub carrier: Carrier,
    pub strategy: Strategy,
    #[serde(serialize_with = "ser_escaped")]
    pub escaped: Vec<ByteRange>,
    pub escaped_total: u64,
    /// Fraction of the carrier's scalar bytes initialized before marshalling.
    #[serde(skip)]
    pub member_init_coverage: f64,
}

pub(crate) fn ser_escaped<S: serde::Serializer>(
    ranges: &[ByteRange],
    s: S,
) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Escaped {
        offset: u64,
        length: u64,
    }
    s.collect_seq(ranges.iter().map(|r| Escaped {
        offset: r.start,
        length: r.length,
    }))
}

/// Runs one plan against fresh trusted/untrusted buffers.
pub fn simulate(plan: &CopyPlan, init: &InitPolicy) -> Result<TaintReport, SimError> {
    let layout = &plan.carrier_layout;
    let occupied = occupied_ranges(layout);
    let mut state = SimState::new(layout.size as usize, layout.size as usize);

    let init_ranges: Vec<ByteRange> = match init {
        InitPolicy::AllMembers => occupied.clone(),
        InitPolicy::None => Vec::new(),
        InitPolicy::Partial(members) => {
            let mut out = Vec::new();
            for name in members {
                let field = layout.field(name).ok_or_else(|| SimError::UnknownMember {
                    struct_name: layout.struct_name.clone(),
                    member: name.clone(),
                })?;
                let (lo, hi) = (field.offset, field.offset + field.size);
                out.extend(occupied.iter().filter_map(|r| {
                    let s = r.start.max(lo);
                    let e = r.end().min(hi);
                    (s < e).then(|| ByteRange::new(s, e - s))
                }));
            }
            out
        }
    };
    for r in &init_ranges {
        state.trusted[r.start as usize..r.end() as usize].fill(ByteTag::Initialized);
    }
    let scalar_bytes: u64 = occupied.iter().map(|r| r.length).sum();
    let initialized = occupied
        .iter()
        .flat_map(|r| r.start..r.end())
        .filter(|&i| state.trusted[i as usize] == ByteTag::Initialized)
        .count() as u64;
    let member_init_coverage = if scalar_bytes == 0 {
        1.0
    } else {
        initialized as f64 / scalar_bytes as f64
    };

    for (i, step) in plan.steps.iter().enumerate() {
        state.apply(i, *step)?;
    }
    let escaped = state.escaped();
    Ok(TaintReport {
        interface_name: plan.interface_name.clone(),
        carrier: plan.carrier.clone(),
        strategy: plan.strategy,
        escaped_total: escaped.iter().map(|r| r.length).sum(),
        escaped,
        member_init_coverage,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CarrierLeak {
    pub carrier: Carrier,
    pub ranges: Vec<ByteRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", content = "leaks", rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    /// Escaped ranges per leaking carrier, in carrier order.
    Leaks(Vec<CarrierLeak>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Simulates every carrier of `iface` with all members initialized.
pub fn verify_strategy(
    iface: &InterfaceDef,
    strategy: Strategy,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
) -> Result<Verdict, VerifyError> {
    let mut leaks = Vec::new();
    for p in plan(iface, strategy, resolved, abi)? {
        let report = simulate(&p, &InitPolicy::AllMembers)?;
        if report.escaped_total > 0 {
            leaks.push(CarrierLeak {
                carrier: report.carrier,
                ranges: report.escaped,
            });
        }
    }
    Ok(if leaks.is_empty() {
        Verdict::Clean
    } else {
        Verdict::Leaks(leaks)
    })
}
