use std::collections::HashMap;

use thiserror::Error;

use super::{Program, Span, StructDef, TypeExpr, TypeKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("{span}: unresolved type `{name}`")]
    UnresolvedType { name: String, span: Span },
    #[error("recursive type: {}", cycle.join(" -> "))]
    RecursiveType { cycle: Vec<String> },
}

/// A program whose struct references are all bound, with structs ordered so
/// that every struct follows the structs it contains by value.
#[derive(Debug, Clone)]
pub struct ResolvedProgram {
    program: Program,
    order: Vec<String>,
    aliases: HashMap<String, String>,
}

impl ResolvedProgram {
    pub fn program(&self) -> &Program {
        &self.program
    }

    /// Canonical struct names in dependency order.
    pub fn order(&self) -> &[String] {
        &self.order
    }

    /// Maps a typedef name or tag to the canonical struct name.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        self.aliases.get(name).map(String::as_str)
    }

    pub fn struct_def(&self, name: &str) -> Option<&StructDef> {
        self.canonical(name).map(|c| &self.program.structs[c])
    }

    /// Like [`struct_def`](Self::struct_def) for names that resolution has
    /// already vouched for.
    pub fn expect_struct(&self, name: &str) -> &StructDef {
        self.struct_def(name)
            .unwrap_or_else(|| panic!("struct `{name}` was not resolved"))
    }

    /// C spelling of a resolved struct reference.
    pub fn c_struct_name(&self, name: &str) -> String {
        self.expect_struct(name).c_spelling()
    }

    /// Canonical names of structs contained by value (through arrays).
    fn dependencies<'a>(&'a self, def: &'a StructDef) -> impl Iterator<Item = &'a str> + 'a {
        def.members
            .iter()
            .filter_map(|m| m.ty.base().as_struct_ref())
            .map(|n| self.aliases[n].as_str())
    }
}

fn check_ref(aliases: &HashMap<String, String>, ty: &TypeExpr) -> Result<(), ResolveError> {
    match &ty.kind {
        TypeKind::StructRef(name) if !aliases.contains_key(name) => {
            Err(ResolveError::UnresolvedType {
                name: name.clone(),
                span: ty.span,
            })
        }
        TypeKind::Array { element, .. } => check_ref(aliases, element),
        _ => Ok(()),
    }
}

/// Binds struct references, detects by-value cycles and computes a
/// dependency order over structs.
pub fn resolve(program: Program) -> Result<ResolvedProgram, ResolveError> {
    let mut aliases = HashMap::new();
    for def in program.structs.values() {
        aliases.insert(def.name.clone(), def.name.clone());
        if let Some(tag) = &def.tag {
            aliases.insert(tag.clone(), def.name.clone());
        }
    }
    for def in program.structs.values() {
        for m in &def.members {
            check_ref(&aliases, &m.ty)?;
        }
    }
    for iface in &program.interfaces {
        if let Some(ret) = &iface.return_type {
            check_ref(&aliases, ret)?;
        }
        for p in &iface.params {
            check_ref(&aliases, &p.ty)?;
        }
    }

    let mut resolved = ResolvedProgram {
        program,
        order: Vec::new(),
        aliases,
    };

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unvisited,
        OnStack,
        Done,
    }

    fn visit(
        rp: &ResolvedProgram,
        name: &str,
        marks: &mut HashMap<String, Mark>,
        stack: &mut Vec<String>,
        order: &mut Vec<String>,
    ) -> Result<(), ResolveError> {
        match marks[name] {
            Mark::Done => return Ok(()),
            Mark::OnStack => {
                let from = stack.iter().position(|s| s == name).unwrap();
                let mut cycle = stack[from..].to_vec();
                cycle.push(name.to_string());
                return Err(ResolveError::RecursiveType { cycle });
            }
            Mark::Unvisited => {}
        }
        marks.insert(name.to_string(), Mark::OnStack);
        stack.push(name.to_string());
        let def = &rp.program.structs[name];
        for dep in rp.dependencies(def) {
            visit(rp, dep, marks, stack, order)?;
        }
        stack.pop();
        marks.insert(name.to_string(), Mark::Done);
        order.push(name.to_string());
        Ok(())
    }

    let mut marks: HashMap<String, Mark> = resolved
        .program
        .structs
        .keys()
        .map(|k| (k.clone(), Mark::Unvisited))
        .collect();
    let mut order = Vec::new();
    for name in resolved.program.structs.keys() {
        visit(&resolved, name, &mut marks, &mut Vec::new(), &mut order)?;
    }
    resolved.order = order;
    Ok(resolved)
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn dependency_order() {
        let p = parse("struct A { struct B b; }; struct B { uint8_t x; };").unwrap();
        let r = resolve(p).unwrap();
        assert_eq!(r.order(), ["B", "A"]);
    }

    #[test]
    fn unresolved() {
        let p = parse("struct A { Missing m; };").unwrap();
        match resolve(p).unwrap_err() {
            ResolveError::UnresolvedType { name, span } => {
                assert_eq!(name, "Missing");
                assert_eq!(span, Span::new(1, 12));
            }
            e => panic!("{e:?}"),
        }
        let p = parse("untrusted { void o(struct Nope n); };").unwrap();
        assert!(matches!(
            resolve(p).unwrap_err(),
            ResolveError::UnresolvedType { .. }
        ));
    }

    #[test]
    fn mutual_recursion() {
        let p = parse("struct A { struct B b; }; struct B { struct A a[2]; };").unwrap();
        assert_eq!(
            resolve(p).unwrap_err(),
            ResolveError::RecursiveType {
                cycle: vec!["A".into(), "B".into(), "A".into()]
            }
        );
    }

    #[test]
    fn tag_aliases_resolve() {
        let p = parse("typedef struct in { int a; } in_t; struct out { struct in x; in_t y; };")
            .unwrap();
        let r = resolve(p).unwrap();
        assert_eq!(r.canonical("in"), Some("in_t"));
        assert_eq!(r.order(), ["in_t", "out"]);
        assert_eq!(r.c_struct_name("out"), "struct out");
        assert_eq!(r.c_struct_name("in"), "in_t");
    }
}
