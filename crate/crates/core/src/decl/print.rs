use std::fmt::Write;

use super::{Direction, Program, TypeExpr, TypeKind};

/// Renders a program back into the accepted input grammar.
///
/// Interfaces are grouped into `trusted`/`untrusted` blocks by consecutive
/// runs so that declaration order survives a re-parse.
pub fn print(program: &Program) -> String {
    let mut out = String::new();
    for def in program.structs.values() {
        if let Some(pack) = def.pack {
            writeln!(out, "#pragma pack({pack})").unwrap();
        }
        match (def.typedef, &def.tag) {
            (true, Some(tag)) => writeln!(out, "typedef struct {tag} {{").unwrap(),
            (true, None) => out.push_str("typedef struct {\n"),
            (false, _) => writeln!(out, "struct {} {{", def.name).unwrap(),
        }
        for m in &def.members {
            writeln!(out, "    {};", declaration(program, &m.ty, &m.name)).unwrap();
        }
        if def.typedef {
            writeln!(out, "}} {};", def.name).unwrap();
        } else {
            out.push_str("};\n");
        }
        out.push('\n');
    }

    let mut current: Option<Direction> = None;
    for iface in &program.interfaces {
        if current != Some(iface.direction) {
            if current.is_some() {
                out.push_str("};\n\n");
            }
            out.push_str(match iface.direction {
                Direction::Ecall => "trusted {\n",
                Direction::Ocall => "untrusted {\n",
            });
            current = Some(iface.direction);
        }
        let ret = iface
            .return_type
            .as_ref()
            .map(|t| type_name(program, t))
            .unwrap_or_else(|| "void".to_string());
        let params = if iface.params.is_empty() {
            "void".to_string()
        } else {
            iface
                .params
                .iter()
                .map(|p| declaration(program, &p.ty, &p.name))
                .collect::<Vec<_>>()
                .join(", ")
        };
        writeln!(out, "    {ret} {}({params});", iface.name).unwrap();
    }
    if current.is_some() {
        out.push_str("};\n");
    }
    out
}

/// `T name[a][b]` for a (possibly array) type.
pub(crate) fn declaration(program: &Program, ty: &TypeExpr, name: &str) -> String {
    let dims: String = ty.dims().iter().map(|d| format!("[{d}]")).collect();
    format!("{} {name}{dims}", type_name(program, ty.base()))
}

/// C spelling of a non-array type.
pub(crate) fn type_name(program: &Program, ty: &TypeExpr) -> String {
    match &ty.kind {
        TypeKind::Scalar(s) => s.c_name().to_string(),
        TypeKind::Pointer { pointee } => format!("{pointee}*"),
        TypeKind::StructRef(name) => match program.structs.get(name) {
            Some(d) if d.typedef => d.name.clone(),
            _ => format!("struct {name}"),
        },
        TypeKind::Array { .. } => declaration(program, ty, ""),
    }
}
