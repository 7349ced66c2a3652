//! Struct layout under a configurable C ABI model: member offsets, sizes,
//! alignment and the exact byte coordinates of every padding hole.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::decl::{ResolvedProgram, ScalarKind, StructDef, TypeExpr, TypeKind};

/// Largest struct (in bytes) the engine will lay out.
pub const MAX_STRUCT_SIZE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("struct `{name}` exceeds the maximum supported size of {MAX_STRUCT_SIZE} bytes")]
    TooLarge { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScalarInfo {
    pub size: u64,
    pub align: u64,
}

/// Size/alignment rules for scalars plus global packing knobs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbiModel {
    scalars: BTreeMap<ScalarKind, ScalarInfo>,
    pub max_align: u64,
    /// Pack value applied to structs that carry no pack directive.
    pub default_pack: Option<u32>,
}

impl AbiModel {
    /// 64-bit model where every scalar is aligned to its size.
    pub fn x86_64() -> Self {
        let scalars = ScalarKind::ALL
            .iter()
            .map(|&k| {
                let size = match k {
                    ScalarKind::U8 | ScalarKind::I8 | ScalarKind::Char => 1,
                    ScalarKind::U16 | ScalarKind::I16 => 2,
                    ScalarKind::U32 | ScalarKind::I32 | ScalarKind::F32 | ScalarKind::Int => 4,
                    ScalarKind::U64
                    | ScalarKind::I64
                    | ScalarKind::F64
                    | ScalarKind::SizeT
                    | ScalarKind::Pointer => 8,
                };
                (k, ScalarInfo { size, align: size })
            })
            .collect();
        Self {
            scalars,
            max_align: 16,
            default_pack: None,
        }
    }

    pub fn with_default_pack(mut self, pack: Option<u32>) -> Self {
        self.default_pack = pack;
        self
    }

    /// Overrides one scalar entry. Alignment must be a power of two.
    pub fn set_scalar(&mut self, kind: ScalarKind, info: ScalarInfo) {
        assert!(
            info.align.is_power_of_two(),
            "alignment must be a power of two"
        );
        self.scalars.insert(kind, info);
    }

    pub fn scalar(&self, kind: ScalarKind) -> ScalarInfo {
        let info = self.scalars[&kind];
        ScalarInfo {
            size: info.size,
            align: info.align.min(self.max_align),
        }
    }
}

impl Default for AbiModel {
    fn default() -> Self {
        Self::x86_64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ByteRange {
    pub start: u64,
    pub length: u64,
}

impl ByteRange {
    pub const fn new(start: u64, length: u64) -> Self {
        Self { start, length }
    }

    pub const fn end(&self) -> u64 {
        self.start + self.length
    }
}

impl From<(u64, u64)> for ByteRange {
    fn from((start, length): (u64, u64)) -> Self {
        Self { start, length }
    }
}

/// Appends `r`, merging it into the last range when they touch.
pub fn push_coalesced(ranges: &mut Vec<ByteRange>, r: ByteRange) {
    if r.length == 0 {
        return;
    }
    if let Some(last) = ranges.last_mut() {
        if last.end() == r.start {
            last.length += r.length;
            return;
        }
    }
    ranges.push(r);
}

/// Sorts and merges overlapping or adjacent ranges.
pub fn coalesce(mut ranges: Vec<ByteRange>) -> Vec<ByteRange> {
    ranges.sort();
    let mut out: Vec<ByteRange> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.start <= last.end() => {
                let end = last.end().max(r.end());
                last.length = end - last.start;
            }
            _ if r.length > 0 => out.push(r),
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HoleKind {
    /// Between two members of the struct itself.
    InterField,
    /// After the last member, up to the struct size.
    Trailing,
    /// An inter-field hole of a nested struct member.
    NestedInterField,
    /// A trailing hole of a nested struct member.
    NestedTrailing,
    /// Any hole inside an element of an array member.
    ArrayElementInternal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PaddingHole {
    pub start: u64,
    pub length: u64,
    pub kind: HoleKind,
}

impl PaddingHole {
    pub fn range(&self) -> ByteRange {
        ByteRange::new(self.start, self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSlot {
    pub name: String,
    pub offset: u64,
    pub size: u64,
    pub ty: TypeExpr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructLayout {
    pub struct_name: String,
    pub size: u64,
    pub align: u64,
    pub fields: Vec<FieldSlot>,
    /// Every hole in outer coordinates, nested and array-element holes included.
    pub holes: Vec<PaddingHole>,
    /// Scalar-occupied bytes, coalesced.
    occupied: Vec<ByteRange>,
}

impl StructLayout {
    pub fn field(&self, name: &str) -> Option<&FieldSlot> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Holes as plain ranges with adjacent holes merged.
    pub fn hole_ranges(&self) -> Vec<ByteRange> {
        let mut out = Vec::new();
        for h in &self.holes {
            push_coalesced(&mut out, h.range());
        }
        out
    }
}

pub fn padded_bytes(layout: &StructLayout) -> u64 {
    layout.holes.iter().map(|h| h.length).sum()
}

/// Maximal sorted ranges covered by scalar data: the complement of the holes
/// within `[0, size)`.
pub fn occupied_ranges(layout: &StructLayout) -> Vec<ByteRange> {
    layout.occupied.clone()
}

pub fn layout_struct(
    def: &StructDef,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
) -> Result<StructLayout, LayoutError> {
    Layouter::new(resolved, abi)
        .layout(&def.name)
        .map(|l| l.as_ref().clone())
}

/// Layout with every struct in the tree forced to pack(1).
pub fn layout_struct_packed(
    def: &StructDef,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
) -> Result<StructLayout, LayoutError> {
    Layouter::packed(resolved, abi)
        .layout(&def.name)
        .map(|l| l.as_ref().clone())
}

/// Size, alignment, holes and occupied bytes of a type in its own coordinates.
struct Shape {
    size: u64,
    align: u64,
    holes: Vec<PaddingHole>,
    occupied: Vec<ByteRange>,
}

/// Memoizing layout calculator over one resolved program.
pub struct Layouter<'a> {
    resolved: &'a ResolvedProgram,
    abi: &'a AbiModel,
    force_pack: Option<u32>,
    cache: HashMap<String, Arc<StructLayout>>,
}

impl<'a> Layouter<'a> {
    pub fn new(resolved: &'a ResolvedProgram, abi: &'a AbiModel) -> Self {
        Self {
            resolved,
            abi,
            force_pack: None,
            cache: HashMap::new(),
        }
    }

    /// A layouter that ignores pack directives and packs everything to 1.
    pub fn packed(resolved: &'a ResolvedProgram, abi: &'a AbiModel) -> Self {
        Self {
            force_pack: Some(1),
            ..Self::new(resolved, abi)
        }
    }

    pub fn resolved(&self) -> &'a ResolvedProgram {
        self.resolved
    }

    pub fn abi(&self) -> &'a AbiModel {
        self.abi
    }

    /// Layout of a struct by any of its names.
    pub fn layout(&mut self, name: &str) -> Result<Arc<StructLayout>, LayoutError> {
        let def = self.resolved.expect_struct(name);
        if let Some(l) = self.cache.get(&def.name) {
            return Ok(l.clone());
        }
        let l = Arc::new(self.compute(def)?);
        self.cache.insert(def.name.clone(), l.clone());
        Ok(l)
    }

    /// `(size, align)` of an arbitrary type.
    pub fn size_align(&mut self, ty: &TypeExpr) -> Result<(u64, u64), LayoutError> {
        let s = self.shape(ty)?;
        Ok((s.size, s.align))
    }

    /// Padding bytes inside one value of `ty`.
    pub fn type_padding(&mut self, ty: &TypeExpr) -> Result<u64, LayoutError> {
        Ok(match &ty.kind {
            TypeKind::Scalar(_) | TypeKind::Pointer { .. } => 0,
            TypeKind::StructRef(name) => padded_bytes(&*self.layout(name)?),
            TypeKind::Array { element, count } => self.type_padding(element)? * count,
        })
    }

    fn shape(&mut self, ty: &TypeExpr) -> Result<Shape, LayoutError> {
        Ok(match &ty.kind {
            TypeKind::Scalar(k) => self.scalar_shape(*k),
            TypeKind::Pointer { .. } => self.scalar_shape(ScalarKind::Pointer),
            TypeKind::StructRef(name) => {
                let l = self.layout(name)?;
                Shape {
                    size: l.size,
                    align: l.align,
                    holes: l.holes.clone(),
                    occupied: l.occupied.clone(),
                }
            }
            TypeKind::Array { element, count } => {
                let elem = self.shape(element)?;
                let size = elem
                    .size
                    .checked_mul(*count)
                    .filter(|s| *s <= MAX_STRUCT_SIZE)
                    .ok_or_else(|| LayoutError::TooLarge {
                        name: String::new(),
                    })?;
                let mut holes = Vec::with_capacity(elem.holes.len() * *count as usize);
                let mut occupied = Vec::new();
                for i in 0..*count {
                    let base = i * elem.size;
                    holes.extend(elem.holes.iter().map(|h| PaddingHole {
                        start: base + h.start,
                        length: h.length,
                        kind: HoleKind::ArrayElementInternal,
                    }));
                    for r in &elem.occupied {
                        push_coalesced(&mut occupied, ByteRange::new(base + r.start, r.length));
                    }
                }
                Shape {
                    size,
                    align: elem.align,
                    holes,
                    occupied,
                }
            }
        })
    }

    fn scalar_shape(&self, kind: ScalarKind) -> Shape {
        let info = self.abi.scalar(kind);
        Shape {
            size: info.size,
            align: info.align,
            holes: Vec::new(),
            occupied: vec![ByteRange::new(0, info.size)],
        }
    }

    fn compute(&mut self, def: &StructDef) -> Result<StructLayout, LayoutError> {
        let pack = self
            .force_pack
            .or(def.pack)
            .or(self.abi.default_pack)
            .map(u64::from);
        let too_large = || LayoutError::TooLarge {
            name: def.name.clone(),
        };

        let mut cursor = 0u64;
        let mut align = 1u64;
        let mut fields = Vec::with_capacity(def.members.len());
        let mut holes = Vec::new();
        let mut occupied = Vec::new();
        for m in &def.members {
            let shape = self.shape(&m.ty).map_err(|e| match e {
                LayoutError::TooLarge { name } if name.is_empty() => too_large(),
                e => e,
            })?;
            let eff = pack.map_or(shape.align, |p| shape.align.min(p));
            align = align.max(eff);
            let offset = cursor.next_multiple_of(eff);
            if offset > cursor {
                holes.push(PaddingHole {
                    start: cursor,
                    length: offset - cursor,
                    kind: HoleKind::InterField,
                });
            }
            let nested = matches!(m.ty.kind, TypeKind::StructRef(_));
            holes.extend(shape.holes.iter().map(|h| PaddingHole {
                start: offset + h.start,
                length: h.length,
                kind: match h.kind {
                    HoleKind::InterField if nested => HoleKind::NestedInterField,
                    HoleKind::Trailing if nested => HoleKind::NestedTrailing,
                    k => k,
                },
            }));
            for r in &shape.occupied {
                push_coalesced(&mut occupied, ByteRange::new(offset + r.start, r.length));
            }
            fields.push(FieldSlot {
                name: m.name.clone(),
                offset,
                size: shape.size,
                ty: m.ty.clone(),
            });
            cursor = offset.checked_add(shape.size).ok_or_else(too_large)?;
        }
        let size = cursor.next_multiple_of(align);
        if size > MAX_STRUCT_SIZE {
            return Err(too_large());
        }
        if size > cursor {
            holes.push(PaddingHole {
                start: cursor,
                length: size - cursor,
                kind: HoleKind::Trailing,
            });
        }
        Ok(StructLayout {
            struct_name: def.name.clone(),
            size,
            align,
            fields,
            holes,
            occupied,
        })
    }
}
