//! Brute-force layout calculator used as a test oracle.
//!
//! Works byte by byte: every byte of a type is labeled either as data or as
//! a hole with an identity and a kind, and alignment is found by stepping the
//! cursor one byte at a time. Shares no code with the library's layout engine.

use padguard::decl::{Program, ScalarKind, TypeExpr, TypeKind};
use padguard::layout::HoleKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Data,
    Hole { id: u64, kind: HoleKind },
}

#[derive(Debug, Clone)]
pub struct NaiveType {
    pub size: u64,
    pub align: u64,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveLayout {
    pub size: u64,
    pub align: u64,
    pub offsets: Vec<u64>,
    pub holes: Vec<(u64, u64, HoleKind)>,
}

pub fn scalar_size(kind: ScalarKind) -> u64 {
    use ScalarKind::*;
    match kind {
        U8 | I8 | Char => 1,
        U16 | I16 => 2,
        U32 | I32 | F32 | Int => 4,
        U64 | I64 | F64 | SizeT | Pointer => 8,
    }
}

pub struct Naive<'a> {
    program: &'a Program,
    next_id: u64,
}

impl<'a> Naive<'a> {
    pub fn new(program: &'a Program) -> Self {
        Self {
            program,
            next_id: 0,
        }
    }

    fn fresh(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn def(&self, name: &str) -> &'a padguard::decl::StructDef {
        let program = self.program;
        program
            .structs
            .get(name)
            .or_else(|| {
                program
                    .structs
                    .values()
                    .find(|d| d.tag.as_deref() == Some(name))
            })
            .unwrap_or_else(|| panic!("unknown struct {name}"))
    }

    /// Relabels hole identities so every copy of a type has distinct holes.
    fn copy_cells(&mut self, cells: &[Cell], map_kind: impl Fn(HoleKind) -> HoleKind) -> Vec<Cell> {
        let mut renamed: Vec<(u64, u64)> = Vec::new();
        cells
            .iter()
            .map(|c| match *c {
                Cell::Data => Cell::Data,
                Cell::Hole { id, kind } => {
                    let new_id = match renamed.iter().find(|(old, _)| *old == id) {
                        Some((_, n)) => *n,
                        None => {
                            let n = self.fresh();
                            renamed.push((id, n));
                            n
                        }
                    };
                    Cell::Hole {
                        id: new_id,
                        kind: map_kind(kind),
                    }
                }
            })
            .collect()
    }

    pub fn of_type(&mut self, ty: &TypeExpr) -> NaiveType {
        match &ty.kind {
            TypeKind::Scalar(k) => {
                let n = scalar_size(*k);
                NaiveType {
                    size: n,
                    align: n,
                    cells: vec![Cell::Data; n as usize],
                }
            }
            TypeKind::Pointer { .. } => NaiveType {
                size: 8,
                align: 8,
                cells: vec![Cell::Data; 8],
            },
            TypeKind::StructRef(name) => self.of_struct(name).0,
            TypeKind::Array { element, count } => {
                let elem = self.of_type(element);
                let mut cells = Vec::new();
                for _ in 0..*count {
                    let copy = self.copy_cells(&elem.cells, |_| HoleKind::ArrayElementInternal);
                    cells.extend(copy);
                }
                NaiveType {
                    size: cells.len() as u64,
                    align: elem.align,
                    cells,
                }
            }
        }
    }

    pub fn of_struct(&mut self, name: &str) -> (NaiveType, Vec<u64>) {
        let def = self.def(name);
        let pack = def.pack.map(u64::from);
        let mut cells: Vec<Cell> = Vec::new();
        let mut struct_align = 1;
        let mut offsets = Vec::new();
        for m in &def.members {
            let t = self.of_type(&m.ty);
            let align = match pack {
                Some(p) if p < t.align => p,
                _ => t.align,
            };
            if align > struct_align {
                struct_align = align;
            }
            let id = self.fresh();
            while !(cells.len() as u64).is_multiple_of(align) {
                cells.push(Cell::Hole {
                    id,
                    kind: HoleKind::InterField,
                });
            }
            offsets.push(cells.len() as u64);
            let nested = matches!(m.ty.kind, TypeKind::StructRef(_));
            let copy = self.copy_cells(&t.cells, |k| match k {
                HoleKind::InterField if nested => HoleKind::NestedInterField,
                HoleKind::Trailing if nested => HoleKind::NestedTrailing,
                k => k,
            });
            cells.extend(copy);
        }
        let id = self.fresh();
        while !(cells.len() as u64).is_multiple_of(struct_align) {
            cells.push(Cell::Hole {
                id,
                kind: HoleKind::Trailing,
            });
        }
        (
            NaiveType {
                size: cells.len() as u64,
                align: struct_align,
                cells,
            },
            offsets,
        )
    }

    pub fn layout(&mut self, name: &str) -> NaiveLayout {
        let (t, offsets) = self.of_struct(name);
        NaiveLayout {
            size: t.size,
            align: t.align,
            offsets,
            holes: holes_of(&t.cells),
        }
    }

    /// Byte offset and size of a member path such as `a.b[2].c`, relative
    /// to the start of `root`.
    pub fn path(&mut self, root: &str, path: &str) -> (u64, u64) {
        let mut offset = 0;
        let mut ty = TypeExpr::struct_ref(root);
        let mut rest = path;
        while !rest.is_empty() {
            if let Some(r) = rest.strip_prefix('.') {
                let end = r.find(['.', '[']).unwrap_or(r.len());
                let (member, tail) = r.split_at(end);
                let TypeKind::StructRef(name) = &ty.kind else {
                    panic!("`.{member}` applied to a non-struct in {path}");
                };
                let name = name.clone();
                let (_, offsets) = self.of_struct(&name);
                let def = self.def(&name);
                let idx = def
                    .members
                    .iter()
                    .position(|m| m.name == member)
                    .unwrap_or_else(|| panic!("no member {member} in {name}"));
                offset += offsets[idx];
                ty = def.members[idx].ty.clone();
                rest = tail;
            } else if let Some(r) = rest.strip_prefix('[') {
                let close = r.find(']').expect("unclosed index");
                let index: u64 = r[..close].parse().expect("numeric index");
                let TypeKind::Array { element, count } = &ty.kind else {
                    panic!("index applied to a non-array in {path}");
                };
                assert!(index < *count, "index out of range in {path}");
                let element = (**element).clone();
                offset += index * self.of_type(&element).size;
                ty = element;
                rest = &r[close + 1..];
            } else {
                panic!("malformed path {path}");
            }
        }
        (offset, self.of_type(&ty).size)
    }
}

/// Groups hole bytes into `(start, length, kind)` by identity.
pub fn holes_of(cells: &[Cell]) -> Vec<(u64, u64, HoleKind)> {
    let mut out: Vec<(u64, u64, HoleKind)> = Vec::new();
    let mut last_id = None;
    for (i, c) in cells.iter().enumerate() {
        match *c {
            Cell::Hole { id, kind } => {
                if last_id == Some(id) {
                    out.last_mut().unwrap().1 += 1;
                } else {
                    out.push((i as u64, 1, kind));
                }
                last_id = Some(id);
            }
            Cell::Data => last_id = None,
        }
    }
    out
}

pub fn data_bytes(cells: &[Cell]) -> u64 {
    cells.iter().filter(|c| **c == Cell::Data).count() as u64
}
