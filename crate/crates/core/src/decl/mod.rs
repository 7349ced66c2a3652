//! Declaration front end: a C-subset struct grammar plus EDL-style
//! `trusted { ... };` / `untrusted { ... };` interface blocks.
//!
//! The accepted grammar is documented in `docs/grammar.md`.

mod lexer;
mod parser;
pub(crate) mod print;
mod resolve;

use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

pub use parser::{parse, ParseError};
pub use print::print;
pub use resolve::{resolve, ResolveError, ResolvedProgram};

/// 1-based position in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct Span {
    pub line: u32,
    pub column: u32,
}

impl Span {
    pub const fn new(line: u32, column: u32) -> Self {
        Self { line, column }
    }

    /// Whether this position lies inside `text`, counting the position just
    /// past the last character of each line (end of input included).
    pub fn within(&self, text: &str) -> bool {
        if self.line == 0 || self.column == 0 {
            return false;
        }
        match text.split('\n').nth(self.line as usize - 1) {
            Some(line) => self.column as usize <= line.chars().count() + 1,
            None => false,
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKind {
    U8,
    U16,
    U32,
    U64,
    I8,
    I16,
    I32,
    I64,
    F32,
    F64,
    Char,
    Int,
    SizeT,
    Pointer,
}

impl ScalarKind {
    pub const ALL: [ScalarKind; 14] = [
        ScalarKind::U8,
        ScalarKind::U16,
        ScalarKind::U32,
        ScalarKind::U64,
        ScalarKind::I8,
        ScalarKind::I16,
        ScalarKind::I32,
        ScalarKind::I64,
        ScalarKind::F32,
        ScalarKind::F64,
        ScalarKind::Char,
        ScalarKind::Int,
        ScalarKind::SizeT,
        ScalarKind::Pointer,
    ];

    /// Spelling used when emitting C.
    pub fn c_name(self) -> &'static str {
        match self {
            ScalarKind::U8 => "uint8_t",
            ScalarKind::U16 => "uint16_t",
            ScalarKind::U32 => "uint32_t",
            ScalarKind::U64 => "uint64_t",
            ScalarKind::I8 => "int8_t",
            ScalarKind::I16 => "int16_t",
            ScalarKind::I32 => "int32_t",
            ScalarKind::I64 => "int64_t",
            ScalarKind::F32 => "float",
            ScalarKind::F64 => "double",
            ScalarKind::Char => "char",
            ScalarKind::Int => "int",
            ScalarKind::SizeT => "size_t",
            ScalarKind::Pointer => "void*",
        }
    }

    /// Looks up a non-pointer scalar by any accepted spelling.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "u8" | "uint8_t" => ScalarKind::U8,
            "u16" | "uint16_t" => ScalarKind::U16,
            "u32" | "uint32_t" => ScalarKind::U32,
            "u64" | "uint64_t" => ScalarKind::U64,
            "i8" | "int8_t" => ScalarKind::I8,
            "i16" | "int16_t" => ScalarKind::I16,
            "i32" | "int32_t" => ScalarKind::I32,
            "i64" | "int64_t" => ScalarKind::I64,
            "f32" | "float" => ScalarKind::F32,
            "f64" | "double" => ScalarKind::F64,
            "char" => ScalarKind::Char,
            "int" => ScalarKind::Int,
            "size_t" => ScalarKind::SizeT,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeKind {
    Scalar(ScalarKind),
    /// Data pointer. The pointee is kept only as its C spelling; pointees
    /// are never marshalled, so nothing else about them is modeled.
    Pointer {
        pointee: String,
    },
    Array {
        element: Box<TypeExpr>,
        count: u64,
    },
    StructRef(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeExpr {
    pub kind: TypeKind,
    pub span: Span,
}

impl TypeExpr {
    pub fn new(kind: TypeKind, span: Span) -> Self {
        Self { kind, span }
    }

    pub fn scalar(kind: ScalarKind) -> Self {
        Self::new(TypeKind::Scalar(kind), Span::default())
    }

    pub fn struct_ref(name: impl Into<String>) -> Self {
        Self::new(TypeKind::StructRef(name.into()), Span::default())
    }

    pub fn array(element: TypeExpr, count: u64) -> Self {
        Self::new(
            TypeKind::Array {
                element: Box::new(element),
                count,
            },
            Span::default(),
        )
    }

    pub fn pointer(pointee: impl Into<String>) -> Self {
        Self::new(
            TypeKind::Pointer {
                pointee: pointee.into(),
            },
            Span::default(),
        )
    }

    /// The innermost non-array type.
    pub fn base(&self) -> &TypeExpr {
        match &self.kind {
            TypeKind::Array { element, .. } => element.base(),
            _ => self,
        }
    }

    /// Array dimensions from outermost to innermost.
    pub fn dims(&self) -> Vec<u64> {
        let mut dims = Vec::new();
        let mut ty = self;
        while let TypeKind::Array { element, count } = &ty.kind {
            dims.push(*count);
            ty = element;
        }
        dims
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self.kind, TypeKind::Pointer { .. })
    }

    /// Name of the struct this type is (not contains), if any.
    pub fn as_struct_ref(&self) -> Option<&str> {
        match &self.kind {
            TypeKind::StructRef(name) => Some(name),
            _ => None,
        }
    }

    fn strip_spans(&mut self) {
        self.span = Span::default();
        if let TypeKind::Array { element, .. } = &mut self.kind {
            element.strip_spans();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Member {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructDef {
    /// Canonical name: the typedef name when there is one, else the tag.
    pub name: String,
    /// `struct <tag>` name, if written.
    pub tag: Option<String>,
    /// Declared through `typedef struct ... name;`.
    pub typedef: bool,
    pub members: Vec<Member>,
    /// Value of a `#pragma pack(n)` directly preceding the declaration.
    pub pack: Option<u32>,
    pub span: Span,
}

impl StructDef {
    /// Builds a typedef'd struct, the form used throughout the tests.
    pub fn new(name: impl Into<String>, members: Vec<(String, TypeExpr)>) -> Self {
        Self {
            name: name.into(),
            tag: None,
            typedef: true,
            members: members
                .into_iter()
                .map(|(name, ty)| Member {
                    name,
                    ty,
                    span: Span::default(),
                })
                .collect(),
            pack: None,
            span: Span::default(),
        }
    }

    pub fn with_pack(mut self, pack: Option<u32>) -> Self {
        self.pack = pack;
        self
    }

    /// How C code refers to this type.
    pub fn c_spelling(&self) -> String {
        if self.typedef {
            self.name.clone()
        } else {
            format!("struct {}", self.name)
        }
    }

    pub fn member(&self, name: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Ecall,
    Ocall,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeExpr,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceDef {
    pub name: String,
    pub direction: Direction,
    /// `None` for `void`.
    pub return_type: Option<TypeExpr>,
    pub params: Vec<Param>,
    pub span: Span,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub structs: IndexMap<String, StructDef>,
    pub interfaces: Vec<InterfaceDef>,
}

impl Program {
    pub fn interface(&self, name: &str) -> Option<&InterfaceDef> {
        self.interfaces.iter().find(|i| i.name == name)
    }

    /// Copy with every span reset, for structural comparison.
    pub fn without_spans(&self) -> Program {
        let mut out = self.clone();
        for def in out.structs.values_mut() {
            def.span = Span::default();
            for m in &mut def.members {
                m.span = Span::default();
                m.ty.strip_spans();
            }
        }
        for iface in &mut out.interfaces {
            iface.span = Span::default();
            if let Some(ret) = &mut iface.return_type {
                ret.strip_spans();
            }
            for p in &mut iface.params {
                p.span = Span::default();
                p.ty.strip_spans();
            }
        }
        out
    }

    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.without_spans() == other.without_spans()
    }
}
