//! Finds the two outward channels through which padding bytes of enclave
//! structs reach untrusted memory: ECALL return values and by-value OCALL
//! parameters.

use serde::Serialize;

use crate::decl::{Direction, InterfaceDef, ResolvedProgram};
use crate::layout::{padded_bytes, AbiModel, ByteRange, LayoutError, Layouter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakChannel {
    EcallReturn,
    OcallInput,
}

impl LeakChannel {
    pub fn direction(self) -> Direction {
        match self {
            LeakChannel::EcallReturn => Direction::Ecall,
            LeakChannel::OcallInput => Direction::Ocall,
        }
    }
}

/// A struct value that leaves the enclave through an interface.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Carrier {
    /// Parameter name, or `None` for a return value.
    pub param: Option<String>,
    /// Canonical struct name.
    #[serde(rename = "type")]
    pub struct_name: String,
}

impl Carrier {
    /// Name of the marshalling-struct member holding this carrier.
    pub fn ms_field(&self) -> String {
        match &self.param {
            Some(p) => format!("ms_{p}"),
            None => "ms_retval".to_string(),
        }
    }

    pub fn label(&self) -> String {
        match &self.param {
            Some(p) => format!("{p}: {}", self.struct_name),
            None => format!("return: {}", self.struct_name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Leak,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeakFinding {
    pub interface: String,
    pub channel: LeakChannel,
    pub carrier: Carrier,
    /// Coalesced hole ranges in the carrier's coordinates.
    pub escaping_ranges: Vec<ByteRange>,
    pub total_bytes: u64,
    pub severity: Severity,
}

/// Struct values an interface moves from trusted to untrusted memory, in
/// parameter order (an ECALL has at most its return value).
pub fn outward_carriers(
    iface: &InterfaceDef,
    resolved: &ResolvedProgram,
) -> Vec<(LeakChannel, Carrier)> {
    let canonical = |name: &str| {
        resolved
            .canonical(name)
            .unwrap_or_else(|| panic!("struct `{name}` was not resolved"))
            .to_string()
    };
    match iface.direction {
        Direction::Ecall => iface
            .return_type
            .as_ref()
            .and_then(|t| t.as_struct_ref())
            .map(|name| {
                (
                    LeakChannel::EcallReturn,
                    Carrier {
                        param: None,
                        struct_name: canonical(name),
                    },
                )
            })
            .into_iter()
            .collect(),
        Direction::Ocall => iface
            .params
            .iter()
            .filter_map(|p| {
                p.ty.as_struct_ref().map(|name| {
                    (
                        LeakChannel::OcallInput,
                        Carrier {
                            param: Some(p.name.clone()),
                            struct_name: canonical(name),
                        },
                    )
                })
            })
            .collect(),
    }
}

pub fn analyze(
    resolved: &ResolvedProgram,
    abi: &AbiModel,
) -> Result<Vec<LeakFinding>, LayoutError> {
    let mut layouter = Layouter::new(resolved, abi);
    let mut findings = Vec::new();
    for iface in &resolved.program().interfaces {
        for (channel, carrier) in outward_carriers(iface, resolved) {
            let layout = layouter.layout(&carrier.struct_name)?;
            let total_bytes = padded_bytes(&layout);
            if total_bytes == 0 {
                continue;
            }
            findings.push(LeakFinding {
                interface: iface.name.clone(),
                channel,
                carrier,
                escaping_ranges: layout.hole_ranges(),
                total_bytes,
                severity: Severity::Leak,
            });
        }
    }
    Ok(findings)
}

/// One informational line naming every pointer-typed parameter, whose
/// pointee marshalling is not modeled. `None` when there are none.
pub fn pointer_note(resolved: &ResolvedProgram) -> Option<String> {
    let params: Vec<String> = resolved
        .program()
        .interfaces
        .iter()
        .flat_map(|i| {
            i.params
                .iter()
                .filter(|p| p.ty.is_pointer())
                .map(move |p| format!("{}({})", i.name, p.name))
        })
        .collect();
    if params.is_empty() {
        None
    } else {
        Some(format!(
            "note: pointer parameters are not analyzed (pointee marshalling is not modeled): {}",
            params.join(", ")
        ))
    }
}
