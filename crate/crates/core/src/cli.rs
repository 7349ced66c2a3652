//! `padguard` command line: parse → resolve → layout/analyze/generate/simulate.
//!
//! Exit codes: 0 clean, 1 input or I/O error, 2 leak findings
//! (`analyze`, `check`).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::codegen::{self, plan, Strategy, STUB_HEADER, STUB_HEADER_NAME};
use crate::decl::{parse, resolve, ResolvedProgram, Span};
use crate::layout::{padded_bytes, AbiModel, ByteRange, HoleKind, Layouter, StructLayout};
use crate::leak::{analyze, pointer_note, LeakFinding};
use crate::taint::{simulate, verify_strategy, InitPolicy, TaintReport, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FINDINGS: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Parser)]
#[command(
    name = "padguard",
    version,
    about = "Detect and fix struct padding leaks across enclave call boundaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Declaration file (structs plus trusted/untrusted blocks).
    input: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Pack value for structs without a pack directive.
    #[arg(long, value_parser = parse_pack)]
    pack: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print struct layouts and padding holes.
    Layout(Common),
    /// Report ECALL-return and OCALL-input padding leaks.
    Analyze(Common),
    /// Write proxy sources for every interface.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate marshalling and report escaped uninitialized bytes.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// `all`, `none` or `partial=<member>[,<member>...]`.
        #[arg(long, default_value = "all", value_parser = parse_init)]
        init: InitPolicy,
        /// Restrict to one interface.
        #[arg(long)]
        interface: Option<String>,
    },
    /// Analyze and cross-check every finding against the simulator.
    Check(Common),
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

fn parse_pack(s: &str) -> Result<u32, String> {
    let n: u32 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (1..=16).contains(&n) && n.is_power_of_two() {
        Ok(n)
    } else {
        Err(format!(
            "pack value {n} is not a power of two between 1 and 16"
        ))
    }
}

fn parse_init(s: &str) -> Result<InitPolicy, String> {
    match s {
        "all" => Ok(InitPolicy::AllMembers),
        "none" => Ok(InitPolicy::None),
        _ => match s.strip_prefix("partial=") {
            Some(list) => Ok(InitPolicy::Partial(
                list.split(',')
                    .map(str::trim)
                    .filter(|m| !m.is_empty())
                    .map(String::from)
                    .collect(),
            )),
            None => Err(format!(
                "expected all, none or partial=<members>, got `{s}`"
            )),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Layout,
    Analyze,
    Generate,
    Simulate,
    Check,
}

/// One fully-validated invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input_path: PathBuf,
    pub subcommand: Action,
    pub format: Format,
    pub strategy: Option<Strategy>,
    pub out_dir: Option<PathBuf>,
    pub init: InitPolicy,
    pub interface: Option<String>,
    pub pack_default: Option<u32>,
}

impl RunConfig {
    pub fn new(subcommand: Action, input_path: impl Into<PathBuf>) -> Self {
        Self {
            input_path: input_path.into(),
            subcommand,
            format: Format::Json,
            strategy: None,
            out_dir: None,
            init: InitPolicy::AllMembers,
            interface: None,
            pack_default: None,
        }
    }

    fn from_cli(cli: Cli) -> Self {
        let (sub, common, strategy, out_dir, init, interface) = match cli.command {
            Command::Layout(c) => (Action::Layout, c, None, None, None, None),
            Command::Analyze(c) => (Action::Analyze, c, None, None, None, None),
            Command::Check(c) => (Action::Check, c, None, None, None, None),
            Command::Generate {
                common,
                strategy,
                out,
            } => (
                Action::Generate,
                common,
                Some(strategy),
                Some(out),
                None,
                None,
            ),
            Command::Simulate {
                common,
                strategy,
                init,
                interface,
            } => (
                Action::Simulate,
                common,
                Some(strategy),
                None,
                Some(init),
                interface,
            ),
        };
        Self {
            input_path: common.input,
            subcommand: sub,
            format: common.format,
            strategy,
            out_dir,
            init: init.unwrap_or(InitPolicy::AllMembers),
            interface,
            pack_default: common.pack,
        }
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&RunConfig::from_cli(cli), stdout, stderr),
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                EXIT_ERROR
            } else {
                let _ = write!(stdout, "{rendered}");
                EXIT_OK
            }
        }
    }
}

/// An error already rendered for the user.
struct Failure(String);

pub fn run(config: &RunConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    match execute(config, stdout, stderr) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(stderr, "{msg}");
            EXIT_ERROR
        }
    }
}

fn diagnostic(path: &Path, source: &str, span: Option<Span>, msg: &str) -> String {
    let mut out = String::new();
    match span {
        Some(span) => {
            let _ = writeln!(out, "{}:{span}: error: {msg}", path.display());
            if let Some(line) = source.split('\n').nth(span.line as usize - 1) {
                let _ = writeln!(out, "    {line}");
                let _ = write!(out, "    {}^", " ".repeat(span.column as usize - 1));
            }
        }
        None => {
            let _ = write!(out, "{}: error: {msg}", path.display());
        }
    }
    out
}

fn load(config: &RunConfig) -> Result<ResolvedProgram, Failure> {
    let path = &config.input_path;
    let source =
        fs::read_to_string(path).map_err(|e| Failure(format!("{}: error: {e}", path.display())))?;
    let program = parse(&source).map_err(|e| {
        // the error's Display leads with the span; strip it for the diagnostic
        let text = e.to_string();
        let msg = text.split_once(": ").map_or(text.as_str(), |(_, m)| m);
        Failure(diagnostic(path, &source, Some(e.span()), msg))
    })?;
    resolve(program).map_err(|e| {
        let span = match &e {
            crate::decl::ResolveError::UnresolvedType { span, .. } => Some(*span),
            crate::decl::ResolveError::RecursiveType { .. } => None,
        };
        let text = e.to_string();
        let msg = match span {
            Some(_) => text
                .split_once(": ")
                .map_or(text.clone(), |(_, m)| m.to_string()),
            None => text,
        };
        Failure(diagnostic(path, &source, span, &msg))
    })
}

fn fail(e: impl std::fmt::Display) -> Failure {
    Failure(format!("error: {e}"))
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(fail)?;
    writeln!(out, "{s}").map_err(fail)
}

fn execute(
    config: &RunConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let resolved = load(config)?;
    let abi = AbiModel::default().with_default_pack(config.pack_default);
    match config.subcommand {
        Action::Layout => cmd_layout(config, &resolved, &abi, stdout),
        Action::Analyze => cmd_analyze(config, &resolved, &abi, stdout, stderr),
        Action::Generate => cmd_generate(config, &resolved, &abi, stdout),
        Action::Simulate => cmd_simulate(config, &resolved, &abi, stdout),
        Action::Check => cmd_check(config, &resolved, &abi, stdout, stderr),
    }
}

#[derive(Serialize)]
struct FieldJson<'a> {
    name: &'a str,
    offset: u64,
    size: u64,
}

#[derive(Serialize)]
struct HoleJson {
    start: u64,
    length: u64,
    kind: HoleKind,
}

#[derive(Serialize)]
struct LayoutJson<'a> {
    name: &'a str,
    size: u64,
    align: u64,
    fields: Vec<FieldJson<'a>>,
    holes: Vec<HoleJson>,
}

impl<'a> From<&'a StructLayout> for LayoutJson<'a> {
    fn from(l: &'a StructLayout) -> Self {
        LayoutJson {
            name: &l.struct_name,
            size: l.size,
            align: l.align,
            fields: l
                .fields
                .iter()
                .map(|f| FieldJson {
                    name: &f.name,
                    offset: f.offset,
                    size: f.size,
                })
                .collect(),
            holes: l
                .holes
                .iter()
                .map(|h| HoleJson {
                    start: h.start,
                    length: h.length,
                    kind: h.kind,
                })
                .collect(),
        }
    }
}

fn cmd_layout(
    config: &RunConfig,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let mut layouter = Layouter::new(resolved, abi);
    let layouts = resolved
        .program()
        .structs
        .keys()
        .map(|name| layouter.layout(name))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail)?;
    match config.format {
        Format::Json => {
            let json: Vec<LayoutJson> = layouts
                .iter()
                .map(|l| LayoutJson::from(l.as_ref()))
                .collect();
            emit_json(stdout, &json)?;
        }
        Format::Text => {
            for l in &layouts {
                write!(stdout, "{}", hole_map(l)).map_err(fail)?;
            }
        }
    }
    Ok(EXIT_OK)
}

const RULER_WIDTH: u64 = 64;
const FIELD_GLYPHS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Table of fields and holes followed by a byte ruler where each field is
/// drawn with its own letter and padding with `.`.
pub fn hole_map(layout: &StructLayout) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}: size {}, align {}, padding {}",
        layout.struct_name,
        layout.size,
        layout.align,
        padded_bytes(layout)
    );
    enum Row<'a> {
        Field(usize, &'a str),
        Hole(HoleKind),
    }
    let mut rows: Vec<(u64, u64, Row)> = layout
        .fields
        .iter()
        .enumerate()
        .map(|(i, f)| (f.offset, f.size, Row::Field(i, &f.name)))
        .collect();
    // nested holes sit inside a field's span; list only the top-level ones
    rows.extend(
        layout
            .holes
            .iter()
            .filter(|h| matches!(h.kind, HoleKind::InterField | HoleKind::Trailing))
            .map(|h| (h.start, h.length, Row::Hole(h.kind))),
    );
    rows.sort_by_key(|r| r.0);
    let _ = writeln!(out, "  {:>8} {:>8}  item", "offset", "size");
    for (off, len, row) in &rows {
        let item = match row {
            Row::Field(i, name) => {
                format!("[{}] {name}", FIELD_GLYPHS[i % FIELD_GLYPHS.len()] as char)
            }
            Row::Hole(kind) => format!("[.] padding ({})", hole_kind_name(*kind)),
        };
        let _ = writeln!(out, "  {off:>8} {len:>8}  {item}");
    }
    let nested: u64 = layout
        .holes
        .iter()
        .filter(|h| !matches!(h.kind, HoleKind::InterField | HoleKind::Trailing))
        .map(|h| h.length)
        .sum();
    if nested > 0 {
        let _ = writeln!(out, "  ({nested} padding bytes inside nested members)");
    }

    let mut ruler = vec![b'?'; layout.size as usize];
    for (i, f) in layout.fields.iter().enumerate() {
        let g = FIELD_GLYPHS[i % FIELD_GLYPHS.len()];
        ruler[f.offset as usize..(f.offset + f.size) as usize].fill(g);
    }
    for h in &layout.holes {
        ruler[h.start as usize..(h.start + h.length) as usize].fill(b'.');
    }
    for (row, chunk) in ruler.chunks(RULER_WIDTH as usize).enumerate() {
        let _ = writeln!(
            out,
            "  {:>8} |{}|",
            row as u64 * RULER_WIDTH,
            String::from_utf8_lossy(chunk)
        );
    }
    out.push('\n');
    out
}

fn hole_kind_name(kind: HoleKind) -> &'static str {
    match kind {
        HoleKind::InterField => "inter_field",
        HoleKind::Trailing => "trailing",
        HoleKind::NestedInterField => "nested_inter_field",
        HoleKind::NestedTrailing => "nested_trailing",
        HoleKind::ArrayElementInternal => "array_element_internal",
    }
}

fn fmt_ranges(ranges: &[ByteRange]) -> String {
    ranges
        .iter()
        .map(|r| format!("[{},{})", r.start, r.end()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn findings_table(findings: &[LeakFinding]) -> String {
    if findings.is_empty() {
        return "no padding leaks found\n".to_string();
    }
    let mut out = format!(
        "{:<28} {:<13} {:<28} {:>6}  ranges\n",
        "interface", "channel", "carrier", "bytes"
    );
    for f in findings {
        let channel = match f.channel {
            crate::leak::LeakChannel::EcallReturn => "ecall_return",
            crate::leak::LeakChannel::OcallInput => "ocall_input",
        };
        let _ = writeln!(
            out,
            "{:<28} {:<13} {:<28} {:>6}  {}",
            f.interface,
            channel,
            f.carrier.label(),
            f.total_bytes,
            fmt_ranges(&f.escaping_ranges)
        );
    }
    out
}

fn cmd_analyze(
    config: &RunConfig,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let findings = analyze(resolved, abi).map_err(fail)?;
    if let Some(note) = pointer_note(resolved) {
        let _ = writeln!(stderr, "{note}");
    }
    match config.format {
        Format::Json => emit_json(stdout, &findings)?,
        Format::Text => write!(stdout, "{}", findings_table(&findings)).map_err(fail)?,
    }
    Ok(if findings.is_empty() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    })
}

fn program_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "program".to_string())
}

fn cmd_generate(
    config: &RunConfig,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let strategy = config.strategy.expect("generate requires a strategy");
    let out_dir = config.out_dir.as_ref().expect("generate requires --out");
    let name = program_name(&config.input_path);

    let mut files: Vec<(String, String)> = Vec::new();
    files.push((
        format!("{name}_types.h"),
        codegen::types_header(&name, strategy, resolved),
    ));
    for iface in &resolved.program().interfaces {
        let src = codegen::generate(iface, strategy, resolved, abi).map_err(fail)?;
        files.push((
            format!("{}_proxy.c", iface.name),
            codegen::proxy_file(&name, strategy, &src),
        ));
    }
    files.push((STUB_HEADER_NAME.to_string(), STUB_HEADER.to_string()));

    fs::create_dir_all(out_dir)
        .map_err(|e| Failure(format!("{}: error: {e}", out_dir.display())))?;
    let mut written = Vec::new();
    for (file, text) in files {
        let path = out_dir.join(file);
        fs::write(&path, text).map_err(|e| Failure(format!("{}: error: {e}", path.display())))?;
        written.push(path.display().to_string());
    }
    match config.format {
        Format::Json => emit_json(stdout, &written)?,
        Format::Text => {
            for w in written {
                writeln!(stdout, "wrote {w}").map_err(fail)?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn cmd_simulate(
    config: &RunConfig,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let strategy = config.strategy.expect("simulate requires a strategy");
    let interfaces: Vec<_> = match &config.interface {
        Some(name) => vec![resolved
            .program()
            .interface(name)
            .ok_or_else(|| fail(format!("no interface named `{name}`")))?],
        None => resolved.program().interfaces.iter().collect(),
    };
    let mut reports: Vec<TaintReport> = Vec::new();
    for iface in interfaces {
        for p in plan(iface, strategy, resolved, abi).map_err(fail)? {
            reports.push(simulate(&p, &config.init).map_err(fail)?);
        }
    }
    match config.format {
        Format::Json => emit_json(stdout, &reports)?,
        Format::Text => {
            if reports.is_empty() {
                writeln!(stdout, "no struct values leave the enclave").map_err(fail)?;
            }
            for r in &reports {
                writeln!(
                    stdout,
                    "{} ({}) [{}]: {} escaped byte(s){} (member init coverage {:.0}%)",
                    r.interface_name,
                    r.carrier.label(),
                    r.strategy,
                    r.escaped_total,
                    if r.escaped.is_empty() {
                        String::new()
                    } else {
                        format!(" {}", fmt_ranges(&r.escaped))
                    },
                    r.member_init_coverage * 100.0
                )
                .map_err(fail)?;
            }
        }
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SimulationJson {
    interface: String,
    carrier: crate::leak::Carrier,
    #[serde(serialize_with = "crate::taint::ser_escaped")]
    escaped: Vec<ByteRange>,
    escaped_total: u64,
}

#[derive(Debug, Serialize)]
struct CheckJson {
    findings: Vec<LeakFinding>,
    simulation: Vec<SimulationJson>,
    agree: bool,
}

fn cmd_check(
    config: &RunConfig,
    resolved: &ResolvedProgram,
    abi: &AbiModel,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<i32, Failure> {
    let findings = analyze(resolved, abi).map_err(fail)?;
    if let Some(note) = pointer_note(resolved) {
        let _ = writeln!(stderr, "{note}");
    }
    let mut simulation = Vec::new();
    for iface in &resolved.program().interfaces {
        let verdict =
            verify_strategy(iface, Strategy::ShallowVulnerable, resolved, abi).map_err(fail)?;
        if let Verdict::Leaks(leaks) = verdict {
            for l in leaks {
                simulation.push(SimulationJson {
                    interface: iface.name.clone(),
                    carrier: l.carrier,
                    escaped_total: l.ranges.iter().map(|r| r.length).sum(),
                    escaped: l.ranges,
                });
            }
        }
    }
    let agree = findings.len() == simulation.len()
        && findings.iter().zip(&simulation).all(|(f, s)| {
            f.interface == s.interface
                && f.carrier == s.carrier
                && f.escaping_ranges == s.escaped
                && f.total_bytes == s.escaped_total
        });
    if !agree {
        let _ = writeln!(
            stderr,
            "error: analyzer findings and simulated escapes disagree"
        );
    }
    let has_findings = !findings.is_empty();
    match config.format {
        Format::Json => emit_json(
            stdout,
            &CheckJson {
                findings,
                simulation,
                agree,
            },
        )?,
        Format::Text => {
            write!(stdout, "{}", findings_table(&findings)).map_err(fail)?;
            writeln!(
                stdout,
                "simulation (shallow copy, all members initialized): {} carrier(s) leak; {}",
                simulation.len(),
                if agree {
                    "matches the analysis"
                } else {
                    "DISAGREES with the analysis"
                }
            )
            .map_err(fail)?;
        }
    }
    Ok(if has_findings || !agree {
        EXIT_FINDINGS
    } else {
        EXIT_OK
    })
}
