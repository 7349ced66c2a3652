//! A small interpreter for the copy statements in generated proxies.
//!
//! It reads the struct definitions back out of the emitted `_types.h` (so
//! packing comes from the emitted pragmas), resolves member paths with the
//! naive layout oracle and turns every statement that touches one carrier
//! into byte-level [`CopyStep`]s.

use padguard::codegen::{CopyPlan, CopyStep, Region};
use padguard::decl::{parse, Program};
use padguard::leak::LeakChannel;

use super::naive::Naive;

/// Struct definitions of a generated `_types.h`, as a [`Program`].
pub fn header_program(types_h: &str) -> Program {
    let start = types_h
        .find("#include \"padguard_stub.h\"")
        .map(|i| i + "#include \"padguard_stub.h\"".len())
        .expect("stub include");
    let body = &types_h[start..];
    let end = [
        "/* trusted functions */",
        "/* untrusted function proxies */",
        "#endif",
    ]
    .iter()
    .filter_map(|m| body.find(m))
    .min()
    .unwrap_or(body.len());
    let mut text = String::new();
    for line in body[..end].lines() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix("#pragma pack(push, ") {
            text.push_str(&format!("#pragma pack({}\n", rest));
        } else if t != "#pragma pack(pop)" {
            text.push_str(line);
            text.push('\n');
        }
    }
    parse(&text).unwrap_or_else(|e| panic!("emitted header does not parse: {e}\n{text}"))
}

/// Names the generated code uses for the trusted copy of a carrier.
pub fn trusted_names(plan: &CopyPlan) -> Vec<String> {
    match (&plan.channel, &plan.carrier.param) {
        (LeakChannel::EcallReturn, _) => vec!["__retval".into(), "__result".into()],
        (LeakChannel::OcallInput, Some(p)) => vec![p.clone(), format!("__{p}")],
        (LeakChannel::OcallInput, None) => panic!("ocall carrier without a parameter"),
    }
}

struct Ctx<'a, 'p> {
    naive: Naive<'p>,
    carrier: &'a str,
    field: String,
    vars: &'a [String],
}

impl Ctx<'_, '_> {
    /// Splits `expr` into a trusted variable and its member path.
    fn trusted<'e>(&self, expr: &'e str) -> Option<&'e str> {
        let expr = expr.trim();
        self.vars.iter().find_map(|v| {
            let rest = expr.strip_prefix(v.as_str())?;
            (rest.is_empty() || rest.starts_with(['.', '['])).then_some(rest)
        })
    }

    /// Member path below the carrier's marshalling field.
    fn untrusted<'e>(&self, expr: &'e str) -> Option<&'e str> {
        let rest = expr
            .trim()
            .strip_prefix("ms->")?
            .strip_prefix(self.field.as_str())?;
        (rest.is_empty() || rest.starts_with(['.', '['])).then_some(rest)
    }

    fn path(&mut self, path: &str) -> (u64, u64) {
        self.naive.path(self.carrier, path)
    }

    fn statement(&mut self, stmt: &str, out: &mut Vec<CopyStep>) {
        if let Some(args) = stmt
            .strip_prefix("memset(")
            .and_then(|s| s.strip_suffix(")"))
        {
            let args: Vec<&str> = args.split(", ").collect();
            assert_eq!(args.len(), 3, "memset arity: {stmt}");
            assert_eq!(args[1], "0", "memset fill value: {stmt}");
            if let Some(target) = args[0].strip_prefix("(uint8_t*)&") {
                let (var, off) = target.split_once(" + ").expect("byte offset");
                if let Some(path) = self.trusted(var) {
                    assert!(path.is_empty(), "offset memset on a member: {stmt}");
                    out.push(CopyStep::Zero {
                        region: Region::Trusted,
                        offset: off.parse().unwrap(),
                        length: args[2].parse().unwrap(),
                    });
                }
            } else if let Some(target) = args[0].strip_prefix('&') {
                if let Some(path) = self.trusted(target) {
                    assert_eq!(args[2], format!("sizeof({target})"), "{stmt}");
                    let (offset, length) = self.path(path);
                    out.push(CopyStep::Zero {
                        region: Region::Trusted,
                        offset,
                        length,
                    });
                }
            } else {
                panic!("unrecognized memset: {stmt}");
            }
            return;
        }
        if let Some(args) = stmt
            .strip_prefix("memcpy(")
            .and_then(|s| s.strip_suffix(")"))
        {
            let args: Vec<&str> = args.split(", ").collect();
            assert_eq!(args.len(), 3, "memcpy arity: {stmt}");
            assert_eq!(args[2], format!("sizeof({})", args[1]), "{stmt}");
            self.assign(args[0], args[1], stmt, out);
            return;
        }
        if let Some((lhs, rhs)) = stmt.split_once(" = ") {
            self.assign(lhs, rhs, stmt, out);
        }
    }

    fn assign(&mut self, lhs: &str, rhs: &str, stmt: &str, out: &mut Vec<CopyStep>) {
        if let Some(dst) = self.untrusted(lhs) {
            let (dst_offset, length) = self.path(dst);
            if let Some(src) = self.trusted(rhs) {
                let (src_offset, src_len) = self.path(src);
                assert_eq!(src_len, length, "size mismatch: {stmt}");
                out.push(CopyStep::Move {
                    src_region: Region::Trusted,
                    src_offset,
                    dst_region: Region::Untrusted,
                    dst_offset,
                    length,
                });
            } else if rhs.contains('(') && dst.is_empty() {
                // the callee's return value is the trusted carrier itself
                out.push(CopyStep::out(0, length));
            } else {
                panic!("unrecognized source for carrier write: {stmt}");
            }
            return;
        }
        // declarations such as `T __retval = f(...)` and writes to other
        // variables do not touch this carrier's bytes
        let Some(dst) = self.trusted(lhs) else {
            return;
        };
        match self.trusted(rhs) {
            Some(src) => {
                // staging copy between trusted variables of the same type
                assert_eq!(
                    self.path(dst),
                    self.path(src),
                    "trusted copy moves bytes: {stmt}"
                );
            }
            None => panic!("unrecognized trusted write: {stmt}"),
        }
    }
}

/// Steps performed on the carrier of `plan` by the statements in `proxy`,
/// with struct definitions taken from `types`.
pub fn interpret(proxy: &str, types: &Program, plan: &CopyPlan) -> Vec<CopyStep> {
    let vars = trusted_names(plan);
    let mut ctx = Ctx {
        naive: Naive::new(types),
        carrier: &plan.carrier.struct_name,
        field: plan.carrier.ms_field(),
        vars: &vars,
    };
    let body_start = proxy.find("\n{\n").expect("function body");
    let mut out = Vec::new();
    for line in proxy[body_start..].lines() {
        let mut t = line.trim();
        if let Some(i) = t.find("/*") {
            t = t[..i].trim_end();
        }
        if let Some(stmt) = t.strip_suffix(';') {
            ctx.statement(stmt, &mut out);
        }
    }
    normalize(out)
}

/// Merges consecutive steps that continue each other byte for byte.
pub fn normalize(steps: Vec<CopyStep>) -> Vec<CopyStep> {
    let mut out: Vec<CopyStep> = Vec::new();
    for s in steps {
        if s.length() == 0 {
            continue;
        }
        let merged = match (out.last_mut(), s) {
            (
                Some(CopyStep::Move {
                    src_region,
                    src_offset,
                    dst_region,
                    dst_offset,
                    length,
                }),
                CopyStep::Move {
                    src_region: sr,
                    src_offset: so,
                    dst_region: dr,
                    dst_offset: d,
                    length: l,
                },
            ) if *src_region == sr
                && *dst_region == dr
                && *src_offset + *length == so
                && *dst_offset + *length == d =>
            {
                *length += l;
                true
            }
            (
                Some(CopyStep::Zero {
                    region,
                    offset,
                    length,
                }),
                CopyStep::Zero {
                    region: r,
                    offset: o,
                    length: l,
                },
            ) if *region == r && *offset + *length == o => {
                *length += l;
                true
            }
            _ => false,
        };
        if !merged {
            out.push(s);
        }
    }
    out
}
