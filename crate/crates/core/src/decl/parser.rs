use std::collections::HashSet;

use thiserror::Error;

use super::lexer::{tokenize, Tok, Token};
use super::{
    Direction, InterfaceDef, Member, Param, Program, ScalarKind, Span, StructDef, TypeExpr,
    TypeKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{span}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        span: Span,
        expected: Vec<String>,
        found: String,
    },
    #[error("{span}: duplicate {kind} name `{name}`")]
    DuplicateName {
        kind: &'static str,
        name: String,
        span: Span,
    },
    #[error("{span}: unsupported feature: {feature}")]
    UnsupportedFeature { feature: String, span: Span },
    #[error("{span}: pack value {value} is not a power of two between 1 and 16")]
    InvalidPack { value: u64, span: Span },
    #[error("{span}: struct `{name}` contains itself by value")]
    SelfReferential { name: String, span: Span },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::DuplicateName { span, .. }
            | ParseError::UnsupportedFeature { span, .. }
            | ParseError::InvalidPack { span, .. }
            | ParseError::SelfReferential { span, .. } => *span,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

/// Parses declaration text into a [`Program`].
pub fn parse(source: &str) -> PResult<Program> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        program: Program::default(),
        struct_names: HashSet::new(),
    };
    p.file()?;
    Ok(p.program)
}

const UNSUPPORTED_KEYWORDS: &[(&str, &str)] = &[
    ("union", "unions"),
    ("enum", "enums"),
    (
        "unsigned",
        "`unsigned` (use fixed-width types such as uint32_t)",
    ),
    ("signed", "`signed` (use fixed-width types such as int32_t)"),
    ("long", "`long` (use fixed-width types such as int64_t)"),
    ("short", "`short` (use fixed-width types such as int16_t)"),
    ("const", "type qualifiers"),
    ("volatile", "type qualifiers"),
    ("public", "EDL attributes"),
];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    program: Program,
    /// Canonical names and tags already declared.
    struct_names: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn peek_at(&self, n: usize) -> &Token {
        let idx = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[idx]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> PResult<T> {
        let t = self.peek();
        Err(ParseError::Syntax {
            span: t.span,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.describe(),
        })
    }

    fn is_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_punct(&mut self, c: char) -> PResult<Span> {
        if self.is_punct(c) {
            Ok(self.bump().span)
        } else {
            self.error(&[&format!("`{c}`")])
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> PResult<Span> {
        if self.is_keyword(kw) {
            Ok(self.bump().span)
        } else {
            self.error(&[&format!("`{kw}`")])
        }
    }

    fn expect_ident(&mut self, what: &str) -> PResult<(String, Span)> {
        self.reject_unsupported_keyword()?;
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                Ok((s, self.bump().span))
            }
            _ => self.error(&[what]),
        }
    }

    fn reject_unsupported_keyword(&self) -> PResult<()> {
        if let Tok::Ident(s) = &self.peek().tok {
            if let Some((_, feature)) = UNSUPPORTED_KEYWORDS.iter().find(|(kw, _)| kw == s) {
                return Err(ParseError::UnsupportedFeature {
                    feature: feature.to_string(),
                    span: self.peek().span,
                });
            }
        }
        if self.is_punct('[') {
            return Err(ParseError::UnsupportedFeature {
                feature: "EDL attributes".into(),
                span: self.peek().span,
            });
        }
        Ok(())
    }

    fn file(&mut self) -> PResult<()> {
        loop {
            self.reject_unsupported_keyword()?;
            match &self.peek().tok {
                Tok::Eof => return Ok(()),
                Tok::Hash => {
                    let pack = self.pragma_pack()?;
                    if !(self.is_keyword("struct") || self.is_keyword("typedef")) {
                        return self.error(&["`struct`", "`typedef`"]);
                    }
                    self.struct_decl(Some(pack))?;
                }
                Tok::Ident(s) => match s.as_str() {
                    "struct" | "typedef" => self.struct_decl(None)?,
                    "enclave" => {
                        self.bump();
                        self.expect_punct('{')?;
                        while !self.is_punct('}') {
                            self.reject_unsupported_keyword()?;
                            if self.is_keyword("trusted") || self.is_keyword("untrusted") {
                                self.block()?;
                            } else {
                                return self.error(&["`trusted`", "`untrusted`", "`}`"]);
                            }
                        }
                        self.bump();
                        self.expect_punct(';')?;
                    }
                    "trusted" | "untrusted" => self.block()?,
                    _ => {
                        return self.error(&[
                            "`struct`",
                            "`typedef`",
                            "`#pragma`",
                            "`trusted`",
                            "`untrusted`",
                            "`enclave`",
                        ])
                    }
                },
                _ => {
                    return self.error(&[
                        "`struct`",
                        "`typedef`",
                        "`#pragma`",
                        "`trusted`",
                        "`untrusted`",
                        "`enclave`",
                    ])
                }
            }
        }
    }

    /// `# pragma pack ( n )`
    fn pragma_pack(&mut self) -> PResult<u32> {
        let hash = self.bump().span;
        // the lexer rejects every other directive
        self.expect_keyword("pragma")?;
        match &self.peek().tok {
            Tok::Ident(s) if s == "pack" => {
                self.bump();
            }
            Tok::Ident(s) => {
                return Err(ParseError::UnsupportedFeature {
                    feature: format!("`#pragma {s}`"),
                    span: hash,
                })
            }
            _ => return self.error(&["`pack`"]),
        }
        self.expect_punct('(')?;
        let (value, span) = match self.peek().tok {
            Tok::Int(n) => (n, self.bump().span),
            _ => return self.error(&["pack value"]),
        };
        self.expect_punct(')')?;
        if !(1..=16).contains(&value) || !value.is_power_of_two() {
            return Err(ParseError::InvalidPack { value, span });
        }
        Ok(value as u32)
    }

    fn declare_struct_name(&mut self, name: &str, span: Span) -> PResult<()> {
        if !self.struct_names.insert(name.to_string()) {
            return Err(ParseError::DuplicateName {
                kind: "struct",
                name: name.to_string(),
                span,
            });
        }
        Ok(())
    }

    fn struct_decl(&mut self, pack: Option<u32>) -> PResult<()> {
        let start = self.peek().span;
        let typedef = if self.is_keyword("typedef") {
            self.bump();
            true
        } else {
            false
        };
        self.reject_unsupported_keyword()?;
        self.expect_keyword("struct")?;
        let tag = match &self.peek().tok {
            Tok::Ident(_) => Some(self.expect_ident("struct tag")?),
            _ if typedef => None,
            _ => return self.error(&["struct tag"]),
        };
        if !self.is_punct('{') {
            if tag.is_some() && self.is_punct(';') {
                return Err(ParseError::UnsupportedFeature {
                    feature: "forward declarations".into(),
                    span: start,
                });
            }
            return self.error(&["`{`"]);
        }
        let open = self.bump().span;
        let mut members: Vec<Member> = Vec::new();
        while !self.is_punct('}') {
            let member = self.member()?;
            if members.iter().any(|m| m.name == member.name) {
                return Err(ParseError::DuplicateName {
                    kind: "member",
                    name: member.name,
                    span: member.span,
                });
            }
            members.push(member);
        }
        if members.is_empty() {
            return Err(ParseError::UnsupportedFeature {
                feature: "empty struct".into(),
                span: open,
            });
        }
        self.bump();
        let name = if typedef {
            let (name, span) = self.expect_ident("typedef name")?;
            if let Some((t, tspan)) = &tag {
                if t != &name {
                    self.declare_struct_name(t, *tspan)?;
                }
            }
            self.declare_struct_name(&name, span)?;
            name
        } else {
            let (t, tspan) = tag.clone().expect("tag present for plain struct");
            self.declare_struct_name(&t, tspan)?;
            t
        };
        self.expect_punct(';')?;

        let tag_name = tag.map(|(t, _)| t);
        for m in &members {
            if let Some(target) = m.ty.base().as_struct_ref() {
                if target == name || tag_name.as_deref() == Some(target) {
                    return Err(ParseError::SelfReferential {
                        name: name.clone(),
                        span: m.span,
                    });
                }
            }
        }

        self.program.structs.insert(
            name.clone(),
            StructDef {
                name,
                tag: tag_name,
                typedef,
                members,
                pack,
                span: start,
            },
        );
        Ok(())
    }

    /// Base type spelling: a scalar, `struct X`, or a bare name. Returns the
    /// type and the C spelling used when it becomes a pointee.
    fn type_spec(&mut self, allow_void: bool) -> PResult<(Option<TypeExpr>, String)> {
        self.reject_unsupported_keyword()?;
        let span = self.peek().span;
        let word = match &self.peek().tok {
            Tok::Ident(s) => s.clone(),
            _ => return self.error(&["type name"]),
        };
        self.bump();
        if word == "struct" {
            if self.is_punct('{') {
                return Err(ParseError::UnsupportedFeature {
                    feature: "anonymous struct members".into(),
                    span,
                });
            }
            let (name, _) = self.expect_ident("struct tag")?;
            if self.is_punct('{') {
                return Err(ParseError::UnsupportedFeature {
                    feature: "nested struct definitions".into(),
                    span,
                });
            }
            let spelling = format!("struct {name}");
            return Ok((
                Some(TypeExpr::new(TypeKind::StructRef(name), span)),
                spelling,
            ));
        }
        if word == "void" {
            if self.is_punct('(') {
                return Err(ParseError::UnsupportedFeature {
                    feature: "function pointer members".into(),
                    span: self.peek().span,
                });
            }
            if allow_void || self.is_punct('*') {
                return Ok((None, word));
            }
            return Err(ParseError::Syntax {
                span,
                expected: vec!["non-void type".into()],
                found: "`void`".into(),
            });
        }
        if word == "typedef" {
            return Err(ParseError::Syntax {
                span,
                expected: vec!["type name".into()],
                found: "`typedef`".into(),
            });
        }
        let kind = match ScalarKind::from_name(&word) {
            Some(s) => TypeKind::Scalar(s),
            None => TypeKind::StructRef(word.clone()),
        };
        Ok((Some(TypeExpr::new(kind, span)), word))
    }

    /// Wraps `base` in as many pointer levels as there are `*` tokens.
    fn pointer_suffix(&mut self, base: Option<TypeExpr>, spelling: String) -> Option<TypeExpr> {
        let span = base.as_ref().map(|b| b.span).unwrap_or(self.peek().span);
        let mut stars = 0;
        while self.is_punct('*') {
            self.bump();
            stars += 1;
        }
        if stars == 0 {
            return base;
        }
        let pointee = format!("{spelling}{}", "*".repeat(stars - 1));
        Some(TypeExpr::new(TypeKind::Pointer { pointee }, span))
    }

    fn member(&mut self) -> PResult<Member> {
        if self.peek().tok == Tok::Eof {
            return self.error(&["member declaration", "`}`"]);
        }
        let (base, spelling) = self.type_spec(false)?;
        if self.is_punct('(') {
            return Err(ParseError::UnsupportedFeature {
                feature: "function pointer members".into(),
                span: self.peek().span,
            });
        }
        let ty = self
            .pointer_suffix(base, spelling)
            .expect("void rejected by type_spec");
        if self.is_punct('(') {
            return Err(ParseError::UnsupportedFeature {
                feature: "function pointer members".into(),
                span: self.peek().span,
            });
        }
        let (name, span) = self.expect_ident("member name")?;
        let mut dims = Vec::new();
        while self.is_punct('[') {
            self.bump();
            let (count, cspan) = match self.peek().tok {
                Tok::Int(n) => (n, self.bump().span),
                _ => return self.error(&["array length"]),
            };
            if count == 0 {
                return Err(ParseError::UnsupportedFeature {
                    feature: "zero-length arrays".into(),
                    span: cspan,
                });
            }
            self.expect_punct(']')?;
            dims.push((count, cspan));
        }
        if self.is_punct(':') {
            return Err(ParseError::UnsupportedFeature {
                feature: "bitfields".into(),
                span: self.peek().span,
            });
        }
        if self.is_punct('=') {
            return Err(ParseError::UnsupportedFeature {
                feature: "initializers".into(),
                span: self.peek().span,
            });
        }
        self.expect_punct(';')?;
        let ty = dims.into_iter().rev().fold(ty, |element, (count, cspan)| {
            TypeExpr::new(
                TypeKind::Array {
                    element: Box::new(element),
                    count,
                },
                cspan,
            )
        });
        Ok(Member { name, ty, span })
    }

    fn block(&mut self) -> PResult<()> {
        let direction = if self.is_keyword("trusted") {
            Direction::Ecall
        } else {
            Direction::Ocall
        };
        self.bump();
        self.expect_punct('{')?;
        while !self.is_punct('}') {
            if self.peek().tok == Tok::Eof {
                return self.error(&["interface declaration", "`}`"]);
            }
            let iface = self.interface(direction)?;
            if self.program.interface(&iface.name).is_some() {
                return Err(ParseError::DuplicateName {
                    kind: "interface",
                    name: iface.name,
                    span: iface.span,
                });
            }
            self.program.interfaces.push(iface);
        }
        self.bump();
        self.expect_punct(';')?;
        Ok(())
    }

    fn interface(&mut self, direction: Direction) -> PResult<InterfaceDef> {
        let start = self.peek().span;
        let (base, spelling) = self.type_spec(true)?;
        let return_type = self.pointer_suffix(base, spelling);
        let (name, _) = self.expect_ident("interface name")?;
        self.expect_punct('(')?;
        let mut params: Vec<Param> = Vec::new();
        let void_only = self.is_keyword("void") && self.peek_at(1).tok == Tok::Punct(')');
        if void_only {
            self.bump();
        } else if !self.is_punct(')') {
            loop {
                let (base, spelling) = self.type_spec(false)?;
                let ty = self
                    .pointer_suffix(base, spelling)
                    .expect("void rejected by type_spec");
                let (pname, pspan) = self.expect_ident("parameter name")?;
                if self.is_punct('[') {
                    return Err(ParseError::UnsupportedFeature {
                        feature: "array parameters".into(),
                        span: self.peek().span,
                    });
                }
                if params.iter().any(|p| p.name == pname) {
                    return Err(ParseError::DuplicateName {
                        kind: "parameter",
                        name: pname,
                        span: pspan,
                    });
                }
                params.push(Param {
                    name: pname,
                    ty,
                    span: pspan,
                });
                if self.is_punct(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect_punct(')')?;
        self.expect_punct(';')?;
        Ok(InterfaceDef {
            name,
            direction,
            return_type,
            params,
            span: start,
        })
    }
}
