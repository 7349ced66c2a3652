//! Seeded random struct trees and programs.

use padguard::decl::{
    Direction, InterfaceDef, Param, Program, ScalarKind, Span, StructDef, TypeExpr,
};
use rand::seq::SliceRandom;
use rand::Rng;

pub const MAX_DEPTH: u32 = 4;
pub const MAX_MEMBERS: usize = 12;

const SCALARS: &[ScalarKind] = &[
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
];

const PACKS: &[u32] = &[1, 2, 4, 8, 16];

pub struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    program: Program,
    /// Probability that a struct carries its own `#pragma pack`.
    pub pack_chance: f64,
}

impl<'r, R: Rng> Gen<'r, R> {
    pub fn new(rng: &'r mut R) -> Self {
        Self {
            rng,
            program: Program::default(),
            pack_chance: 0.2,
        }
    }

    fn leaf(&mut self) -> TypeExpr {
        if self.rng.gen_bool(0.1) {
            TypeExpr::pointer(*["char", "void", "uint8_t"].choose(self.rng).unwrap())
        } else {
            TypeExpr::scalar(*SCALARS.choose(self.rng).unwrap())
        }
    }

    fn member_type(&mut self, depth: u32) -> TypeExpr {
        let nest = depth < MAX_DEPTH && self.rng.gen_bool(0.25 / f64::from(depth));
        let base = if nest {
            TypeExpr::struct_ref(self.tree(depth + 1))
        } else {
            self.leaf()
        };
        if self.rng.gen_bool(0.2) {
            let dims = if self.rng.gen_bool(0.2) { 2 } else { 1 };
            let mut ty = base;
            // innermost dimension wraps first
            for _ in 0..dims {
                ty = TypeExpr::array(ty, self.rng.gen_range(1..=3));
            }
            ty
        } else {
            base
        }
    }

    /// Adds a struct of nesting depth at most `MAX_DEPTH - depth + 1` and
    /// all of its dependencies; returns its name.
    pub fn tree(&mut self, depth: u32) -> String {
        let n = self.rng.gen_range(1..=MAX_MEMBERS);
        let members = (0..n)
            .map(|i| (format!("m{i}"), self.member_type(depth)))
            .collect();
        let pack = self
            .rng
            .gen_bool(self.pack_chance)
            .then(|| *PACKS.choose(self.rng).unwrap());
        let name = format!("s{}", self.program.structs.len());
        let mut def = StructDef::new(name.clone(), members).with_pack(pack);
        if self.rng.gen_bool(0.3) {
            def.typedef = false;
            def.tag = Some(name.clone());
        }
        self.program.structs.insert(name.clone(), def);
        name
    }

    fn param_type(&mut self, structs: &[String]) -> TypeExpr {
        match self.rng.gen_range(0..4) {
            0 => TypeExpr::pointer("char"),
            1 => TypeExpr::scalar(*SCALARS.choose(self.rng).unwrap()),
            _ => TypeExpr::struct_ref(structs.choose(self.rng).unwrap().clone()),
        }
    }

    /// Random structs plus a mix of ecalls and ocalls over them.
    pub fn program(mut self) -> Program {
        let roots = self.rng.gen_range(1..=3);
        let structs: Vec<String> = (0..roots).map(|_| self.tree(1)).collect();
        let n_ifaces = self.rng.gen_range(0..=4);
        for i in 0..n_ifaces {
            let direction = if self.rng.gen_bool(0.5) {
                Direction::Ecall
            } else {
                Direction::Ocall
            };
            let return_type = match self.rng.gen_range(0..3) {
                0 => None,
                1 => Some(TypeExpr::scalar(ScalarKind::Int)),
                _ => Some(TypeExpr::struct_ref(
                    structs.choose(self.rng).unwrap().clone(),
                )),
            };
            let params = (0..self.rng.gen_range(0..=3))
                .map(|j| Param {
                    name: format!("p{j}"),
                    ty: self.param_type(&structs),
                    span: Span::default(),
                })
                .collect();
            let prefix = match direction {
                Direction::Ecall => "ecall",
                Direction::Ocall => "ocall",
            };
            self.program.interfaces.push(InterfaceDef {
                name: format!("{prefix}_{i}"),
                direction,
                return_type,
                params,
                span: Span::default(),
            });
        }
        self.program
    }

    /// One struct tree crossing both channels: returned by an ecall and
    /// passed by value to an ocall.
    pub fn tree_program(mut self) -> (Program, String) {
        let root = self.tree(1);
        let ty = TypeExpr::struct_ref(root.clone());
        self.program.interfaces.push(InterfaceDef {
            name: "ecall_root".into(),
            direction: Direction::Ecall,
            return_type: Some(ty.clone()),
            params: vec![Param {
                name: "input".into(),
                ty: TypeExpr::pointer("char"),
                span: Span::default(),
            }],
            span: Span::default(),
        });
        self.program.interfaces.push(InterfaceDef {
            name: "ocall_root".into(),
            direction: Direction::Ocall,
            return_type: None,
            params: vec![
                Param {
                    name: "value".into(),
                    ty,
                    span: Span::default(),
                },
                Param {
                    name: "n".into(),
                    ty: TypeExpr::scalar(ScalarKind::Int),
                    span: Span::default(),
                },
            ],
            span: Span::default(),
        });
        (self.program, root)
    }
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}
