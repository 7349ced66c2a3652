//! C99 rendering of marshalling structs, proxy functions and the shared
//! types header.

use std::collections::HashSet;
use std::fmt::Write;

use super::{plan, CopyPlan, CopyStep, PlanError, Strategy};
use crate::decl::print::{declaration, type_name};
use crate::decl::{Direction, InterfaceDef, ResolvedProgram, TypeExpr, TypeKind};
use crate::layout::{AbiModel, LayoutError, Layouter, StructLayout};
use crate::leak::outward_carriers;

pub const STUB_HEADER_NAME: &str = "padguard_stub.h";
pub const STUB_HEADER: &str = include_str!("padguard_stub.h");

const INDENT: &str = "    ";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSource {
    /// `ms_<interface>_t` typedef; empty when the interface marshals nothing.
    pub marshalling_struct_text: String,
    pub proxy_text: String,
    pub language_dialect: &'static str,
}

/// Renders the marshalling struct and proxy function of one interface.
pub fn generate(
    iface: &InterfaceDef,
    strategy: Strategy,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
) -> Result<GeneratedSource, PlanError> {
    let plans = plan(iface, strategy, resolved, abi)?;
    let mut r = Renderer {
        resolved,
        layouter: Layouter::new(resolved, abi),
        strategy,
    };
    let proxy_text = match iface.direction {
        Direction::Ecall => r.ecall_proxy(iface, &plans)?,
        Direction::Ocall => r.ocall_proxy(iface, &plans)?,
    };
    Ok(GeneratedSource {
        marshalling_struct_text: marshalling_struct(resolved, iface),
        proxy_text,
        language_dialect: "C99 text output",
    })
}

/// Complete `<interface>_proxy.c` contents.
pub fn proxy_file(program_name: &str, strategy: Strategy, src: &GeneratedSource) -> String {
    let mut out = format!(
        "/* Generated by padguard (strategy: {strategy}). Do not edit. */\n#include \"{program_name}_types.h\"\n\n"
    );
    if !src.marshalling_struct_text.is_empty() {
        out.push_str(&src.marshalling_struct_text);
        out.push('\n');
    }
    out.push_str(&src.proxy_text);
    out
}

/// `<program>_types.h`: struct definitions in dependency order plus the
/// trusted-side prototypes. Under [`Strategy::Packed`] every struct that can
/// leave the enclave by value is emitted inside `#pragma pack(push, 1)`.
pub fn types_header(program_name: &str, strategy: Strategy, resolved: &ResolvedProgram) -> String {
    let program = resolved.program();
    let guard: String = program_name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    let packed = if strategy == Strategy::Packed {
        packed_closure(resolved)
    } else {
        HashSet::new()
    };

    let mut out = String::new();
    writeln!(
        out,
        "/* Generated by padguard (strategy: {strategy}). Do not edit. */"
    )
    .unwrap();
    writeln!(out, "#ifndef {guard}_TYPES_H").unwrap();
    writeln!(out, "#define {guard}_TYPES_H\n").unwrap();
    writeln!(out, "#include \"{STUB_HEADER_NAME}\"").unwrap();

    for name in resolved.order() {
        let def = &program.structs[name];
        let pack = if packed.contains(name) {
            Some(1)
        } else {
            def.pack
        };
        out.push('\n');
        if let Some(p) = pack {
            writeln!(out, "#pragma pack(push, {p})").unwrap();
        }
        match (def.typedef, &def.tag) {
            (true, Some(tag)) => writeln!(out, "typedef struct {tag} {{").unwrap(),
            (true, None) => out.push_str("typedef struct {\n"),
            (false, _) => writeln!(out, "struct {name} {{").unwrap(),
        }
        for m in &def.members {
            writeln!(out, "{INDENT}{};", declaration(program, &m.ty, &m.name)).unwrap();
        }
        if def.typedef {
            writeln!(out, "}} {name};").unwrap();
        } else {
            out.push_str("};\n");
        }
        if pack.is_some() {
            out.push_str("#pragma pack(pop)\n");
        }
    }

    let ecalls: Vec<_> = program
        .interfaces
        .iter()
        .filter(|i| i.direction == Direction::Ecall)
        .collect();
    if !ecalls.is_empty() {
        out.push_str("\n/* trusted functions */\n");
        for i in ecalls {
            let ret = i
                .return_type
                .as_ref()
                .map_or_else(|| "void".to_string(), |t| type_name(program, t));
            writeln!(out, "{ret} {}({});", i.name, param_list(resolved, i, false)).unwrap();
        }
    }
    let ocalls: Vec<_> = program
        .interfaces
        .iter()
        .filter(|i| i.direction == Direction::Ocall)
        .collect();
    if !ocalls.is_empty() {
        out.push_str("\n/* untrusted function proxies */\n");
        for i in ocalls {
            writeln!(
                out,
                "sgx_status_t SGX_CDECL {}({});",
                i.name,
                param_list(resolved, i, true)
            )
            .unwrap();
        }
    }
    writeln!(out, "\n#endif /* {guard}_TYPES_H */").unwrap();
    out
}

/// Structs reachable by value from any outward carrier.
fn packed_closure(resolved: &ResolvedProgram) -> HashSet<String> {
    let program = resolved.program();
    let mut seen = HashSet::new();
    let mut stack: Vec<String> = program
        .interfaces
        .iter()
        .flat_map(|i| outward_carriers(i, resolved))
        .map(|(_, c)| c.struct_name)
        .collect();
    while let Some(name) = stack.pop() {
        if !seen.insert(name.clone()) {
            continue;
        }
        for m in &program.structs[&name].members {
            if let Some(dep) = m.ty.base().as_struct_ref() {
                stack.push(resolved.canonical(dep).unwrap().to_string());
            }
        }
    }
    seen
}

fn param_list(resolved: &ResolvedProgram, iface: &InterfaceDef, ocall_proxy: bool) -> String {
    let program = resolved.program();
    let mut parts = Vec::new();
    if ocall_proxy {
        if let Some(ret) = &iface.return_type {
            parts.push(format!("{}* retval", type_name(program, ret)));
        }
    }
    parts.extend(
        iface
            .params
            .iter()
            .map(|p| declaration(program, &p.ty, &p.name)),
    );
    if parts.is_empty() {
        "void".to_string()
    } else {
        parts.join(", ")
    }
}

fn marshalling_struct(resolved: &ResolvedProgram, iface: &InterfaceDef) -> String {
    let program = resolved.program();
    let mut members = Vec::new();
    if let Some(ret) = &iface.return_type {
        members.push(declaration(program, ret, "ms_retval"));
    }
    members.extend(
        iface
            .params
            .iter()
            .map(|p| declaration(program, &p.ty, &format!("ms_{}", p.name))),
    );
    if members.is_empty() {
        return String::new();
    }
    let ms = format!("ms_{}_t", iface.name);
    let mut out = format!("typedef struct {ms} {{\n");
    for m in members {
        writeln!(out, "{INDENT}{m};").unwrap();
    }
    writeln!(out, "}} {ms};").unwrap();
    out
}

struct Renderer<'a> {
    resolved: &'a ResolvedProgram,
    layouter: Layouter<'a>,
    strategy: Strategy,
}

impl Renderer<'_> {
    fn struct_type(&self, name: &str) -> String {
        self.resolved.c_struct_name(name)
    }

    fn ecall_proxy(
        &mut self,
        iface: &InterfaceDef,
        plans: &[CopyPlan],
    ) -> Result<String, LayoutError> {
        let ms = format!("ms_{}_t", iface.name);
        let args: Vec<String> = iface
            .params
            .iter()
            .map(|p| format!("ms->ms_{}", p.name))
            .collect();
        let call = format!("{}({})", iface.name, args.join(", "));
        let mut body = Vec::new();
        let has_ms = iface.return_type.is_some() || !iface.params.is_empty();

        let mut out = String::new();
        writeln!(
            out,
            "static sgx_status_t SGX_CDECL sgx_{}(void* pms)\n{{",
            iface.name
        )
        .unwrap();
        if has_ms {
            body.push(format!("CHECK_REF_POINTER(pms, sizeof({ms}));"));
            body.push(format!("{ms}* ms = SGX_CAST({ms}*, pms);"));
            body.push("sgx_status_t status = SGX_SUCCESS;".into());
            body.push(String::new());
        } else {
            body.push("sgx_status_t status = SGX_SUCCESS;".into());
            body.push("if (pms != NULL) return SGX_ERROR_INVALID_PARAMETER;".into());
        }

        match (&iface.return_type, plans.first()) {
            (None, _) => body.push(format!("{call};")),
            (Some(_), None) => body.push(format!("ms->ms_retval = {call};")),
            (Some(_), Some(plan)) => {
                let ty = self.struct_type(&plan.carrier.struct_name);
                let layout = plan.carrier_layout.clone();
                match self.strategy {
                    Strategy::ShallowVulnerable => body.push(format!(
                        "ms->ms_retval = {call}; /* whole-struct copy: padding bytes included */"
                    )),
                    Strategy::Packed => body.push(format!(
                        "ms->ms_retval = {call}; /* packed carrier: no padding bytes */"
                    )),
                    Strategy::DeepCopy => {
                        body.push(format!("{ty} __retval = {call};"));
                        body.push("/* per-member copy: padding is never read */".into());
                        self.flatten(&layout, "ms->ms_retval", "__retval", &mut body)?;
                    }
                    Strategy::FullMemset => {
                        body.push(format!("{ty} __result = {call};"));
                        body.push(format!("{ty} __retval;"));
                        body.push("memset(&__retval, 0, sizeof(__retval));".into());
                        self.flatten(&layout, "__retval", "__result", &mut body)?;
                        body.push("ms->ms_retval = __retval;".into());
                    }
                    Strategy::SelectivePaddingClear => {
                        body.push(format!("{ty} __retval = {call};"));
                        zero_lines(plan, "__retval", &mut body);
                        body.push("ms->ms_retval = __retval;".into());
                    }
                }
            }
        }
        body.push(String::new());
        body.push("return status;".into());
        push_body(&mut out, &body);
        out.push_str("}\n");
        Ok(out)
    }

    fn ocall_proxy(
        &mut self,
        iface: &InterfaceDef,
        plans: &[CopyPlan],
    ) -> Result<String, LayoutError> {
        let program = self.resolved.program();
        let index = program
            .interfaces
            .iter()
            .filter(|i| i.direction == Direction::Ocall)
            .position(|i| i.name == iface.name)
            .expect("ocall belongs to the program");
        let ms = format!("ms_{}_t", iface.name);
        let has_ms = iface.return_type.is_some() || !iface.params.is_empty();

        let mut out = String::new();
        writeln!(
            out,
            "sgx_status_t SGX_CDECL {}({})\n{{",
            iface.name,
            param_list(self.resolved, iface, true)
        )
        .unwrap();
        let mut body = vec!["sgx_status_t status = SGX_SUCCESS;".to_string()];
        if !has_ms {
            body.push(format!("status = sgx_ocall({index}, NULL);"));
            body.push(String::new());
            body.push("return status;".into());
            push_body(&mut out, &body);
            out.push_str("}\n");
            return Ok(out);
        }
        body.extend([
            String::new(),
            format!("{ms}* ms = NULL;"),
            format!("size_t ocalloc_size = sizeof({ms});"),
            "void *__tmp = NULL;".into(),
            String::new(),
            "__tmp = sgx_ocalloc(ocalloc_size);".into(),
            "if (__tmp == NULL) {".into(),
            format!("{INDENT}sgx_ocfree();"),
            format!("{INDENT}return SGX_ERROR_UNEXPECTED;"),
            "}".into(),
            format!("ms = ({ms}*)__tmp;"),
            format!("__tmp = (void *)((size_t)__tmp + sizeof({ms}));"),
            String::new(),
        ]);

        for p in &iface.params {
            let plan = plans
                .iter()
                .find(|pl| pl.carrier.param.as_deref() == Some(p.name.as_str()));
            let Some(plan) = plan else {
                body.push(format!("ms->ms_{0} = {0};", p.name));
                continue;
            };
            let ty = self.struct_type(&plan.carrier.struct_name);
            let field = format!("ms->ms_{}", p.name);
            let layout = plan.carrier_layout.clone();
            match self.strategy {
                Strategy::ShallowVulnerable => body.push(format!(
                    "{field} = {}; /* whole-struct copy: padding bytes included */",
                    p.name
                )),
                Strategy::Packed => body.push(format!(
                    "{field} = {}; /* packed carrier: no padding bytes */",
                    p.name
                )),
                Strategy::DeepCopy => {
                    body.push("/* per-member copy: padding is never read */".into());
                    self.flatten(&layout, &field, &p.name, &mut body)?;
                }
                Strategy::FullMemset => {
                    let staging = format!("__{}", p.name);
                    body.push(format!("{ty} {staging};"));
                    body.push(format!("memset(&{staging}, 0, sizeof({staging}));"));
                    self.flatten(&layout, &staging, &p.name, &mut body)?;
                    body.push(format!("{field} = {staging};"));
                }
                Strategy::SelectivePaddingClear => {
                    zero_lines(plan, &p.name, &mut body);
                    body.push(format!("{field} = {};", p.name));
                }
            }
        }

        body.push(format!("status = sgx_ocall({index}, ms);"));
        if iface.return_type.is_some() {
            body.push("if (status == SGX_SUCCESS) {".into());
            body.push(format!("{INDENT}if (retval) *retval = ms->ms_retval;"));
            body.push("}".into());
        }
        body.push(String::new());
        body.push("sgx_ocfree();".into());
        body.push("return status;".into());
        push_body(&mut out, &body);
        out.push_str("}\n");
        Ok(out)
    }

    /// Member-by-member assignments from `src` into `dst`, recursing through
    /// nested structs. Arrays whose elements carry padding are unrolled;
    /// padding-free arrays are copied whole.
    fn flatten(
        &mut self,
        layout: &StructLayout,
        dst: &str,
        src: &str,
        out: &mut Vec<String>,
    ) -> Result<(), LayoutError> {
        for f in &layout.fields {
            self.flatten_value(
                &f.ty,
                &format!("{dst}.{}", f.name),
                &format!("{src}.{}", f.name),
                out,
            )?;
        }
        Ok(())
    }

    fn flatten_value(
        &mut self,
        ty: &TypeExpr,
        dst: &str,
        src: &str,
        out: &mut Vec<String>,
    ) -> Result<(), LayoutError> {
        match &ty.kind {
            TypeKind::Scalar(_) | TypeKind::Pointer { .. } => out.push(format!("{dst} = {src};")),
            TypeKind::StructRef(name) => {
                let layout = self.layouter.layout(name)?;
                self.flatten(&layout, dst, src, out)?;
            }
            TypeKind::Array { element, count } => {
                if self.layouter.type_padding(element)? > 0 {
                    for i in 0..*count {
                        self.flatten_value(
                            element,
                            &format!("{dst}[{i}]"),
                            &format!("{src}[{i}]"),
                            out,
                        )?;
                    }
                } else {
                    out.push(format!("memcpy({dst}, {src}, sizeof({src}));"));
                }
            }
        }
        Ok(())
    }
}

fn zero_lines(plan: &CopyPlan, var: &str, out: &mut Vec<String>) {
    for step in &plan.steps {
        if let CopyStep::Zero { offset, length, .. } = step {
            out.push(format!("memset((uint8_t*)&{var} + {offset}, 0, {length});"));
        }
    }
}

fn push_body(out: &mut String, lines: &[String]) {
    for l in lines {
        if l.is_empty() {
            out.push('\n');
        } else {
            writeln!(out, "{INDENT}{l}").unwrap();
        }
    }
}
