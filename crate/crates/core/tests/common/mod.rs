#![allow(dead_code)]

pub mod gen;
pub mod interp;
pub mod naive;

use std::path::PathBuf;

use padguard::codegen::{generate, plan, proxy_file, types_header, CopyPlan, Strategy};
use padguard::decl::{parse, resolve, ResolvedProgram};
use padguard::layout::AbiModel;

pub const EXAMPLE_EDL: &str = include_str!("../../examples/paper.edl");

pub fn resolved(src: &str) -> ResolvedProgram {
    resolve(parse(src).expect("parse")).expect("resolve")
}

/// Runs the interpreter over every proxy of `resolved` under `strategy` and
/// returns the first plan whose emitted statements disagree with it.
pub fn codegen_mismatch(
    resolved: &ResolvedProgram,
    strategy: Strategy,
    abi: &AbiModel,
) -> Option<(CopyPlan, Vec<padguard::codegen::CopyStep>)> {
    let header = types_header("prog", strategy, resolved);
    let types = interp::header_program(&header);
    for iface in &resolved.program().interfaces {
        let src = generate(iface, strategy, resolved, abi).expect("generate");
        for p in plan(iface, strategy, resolved, abi).expect("plan") {
            let steps = interp::interpret(&src.proxy_text, &types, &p);
            if steps != p.steps {
                return Some((p, steps));
            }
        }
    }
    None
}

pub const REFERENCE_EDL: &str = include_str!("../fixtures/reference_structs.edl");
pub const REFERENCE_TABLE: &str = include_str!("../fixtures/reference_layouts.txt");

/// Compares the layout engine against the compiler-produced fixture table.
/// Returns the number of structs checked and a description of each mismatch.
pub fn reference_mismatches() -> (usize, Vec<String>) {
    let r = resolved(REFERENCE_EDL);
    let abi = AbiModel::default();
    let mut layouter = padguard::layout::Layouter::new(&r, &abi);
    let mut checked = 0;
    let mut bad = Vec::new();
    for line in REFERENCE_TABLE.lines().filter(|l| !l.starts_with('#')) {
        let mut it = line.split_whitespace();
        let name = it.next().unwrap();
        let nums: Vec<u64> = it.map(|n| n.parse().unwrap()).collect();
        let l = layouter.layout(name).unwrap();
        let got: Vec<u64> = [l.size, l.align]
            .into_iter()
            .chain(l.fields.iter().map(|f| f.offset))
            .collect();
        if got != nums {
            bad.push(format!("{name}: compiler {nums:?}, padguard {got:?}"));
        }
        checked += 1;
    }
    (checked, bad)
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Every file `generate` writes for the bundled example, by file name.
pub fn example_outputs(strategy: Strategy) -> Vec<(String, String)> {
    let r = resolved(EXAMPLE_EDL);
    let abi = AbiModel::default();
    let mut out = vec![(
        "paper_types.h".to_string(),
        types_header("paper", strategy, &r),
    )];
    for iface in &r.program().interfaces {
        let src = generate(iface, strategy, &r, &abi).unwrap();
        out.push((
            format!("{}_proxy.c", iface.name),
            proxy_file("paper", strategy, &src),
        ));
    }
    out
}

/// Golden files that differ from freshly generated output.
pub fn golden_mismatches() -> Vec<String> {
    let mut bad = Vec::new();
    for s in Strategy::ALL {
        for (name, text) in example_outputs(s) {
            let path = golden_dir().join(s.cli_name()).join(&name);
            match std::fs::read_to_string(&path) {
                Ok(want) if want == text => {}
                Ok(_) => bad.push(format!("{} differs", path.display())),
                Err(e) => bad.push(format!("{}: {e}", path.display())),
            }
        }
    }
    bad
}
