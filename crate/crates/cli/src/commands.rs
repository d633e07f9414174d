use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context as _;
use serde_json::{Map, Value};
use sphflow_core::evalkit;
use sphflow_core::fixtures;
use sphflow_core::postproc::registry::{descriptor, descriptors, invoke_tool, ToolDescriptor, ToolError};
use sphflow_core::validate::{parse_failure_report, validate_case, ContactPair, GroundTruthSpec};
use sphflow_core::{
    diff_cases, emit_case, export_frame, generate_particles, parse_case, render_snapshot, run_pipeline_with,
    validate_semantics, CaseDefinition, ExportFormat, PipelineOptions, RunData, ViewSpec,
};

use crate::{planner_factory, usage, CaseArg, CaseCommand, Cli, CliResult, Command, EvalCommand, SessionCommand, EXIT_FINDINGS, EXIT_OK};

pub fn dispatch(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Case(c) => case(cli, c),
        Command::Gen(a) => gen(cli, a),
        Command::Check(a) => check(cli, a),
        Command::Run(a) => run(cli, a),
        Command::Analyze(a) => analyze(cli, a),
        Command::Session(SessionCommand::Serve { bind, port, reference }) => {
            let factory = planner_factory(&cli.planner, Duration::from_secs(cli.planner_timeout))?;
            let config = session_config(cli, reference.as_deref())?;
            crate::service::serve_blocking(&format!("{bind}:{port}"), cli.out.join("sessions"), factory, config)?;
            Ok(EXIT_OK)
        }
        Command::Session(SessionCommand::Repl(a)) => {
            let factory = planner_factory(&cli.planner, Duration::from_secs(cli.planner_timeout))?;
            let config = session_config(cli, a.reference.as_deref())?;
            let stdin = std::io::stdin();
            crate::repl::run_repl(a, &cli.out, factory, config, stdin.lock(), std::io::stdout())
        }
        Command::Eval(e) => eval(cli, e),
    }
}

pub fn session_config(cli: &Cli, reference: Option<&str>) -> Result<sphflow_core::SessionConfig, crate::CliError> {
    let truth = match reference {
        Some(r) => Some(builtin(r).ok_or_else(|| usage(format!("unknown reference case '{r}'")))?.1),
        None => None,
    };
    Ok(sphflow_core::SessionConfig {
        hitl_cap: cli.hitl_cap,
        truth,
        csv_only: false,
    })
}

/// Built-in case by id, with its reference spec.
pub fn builtin(id: &str) -> Option<(CaseDefinition, GroundTruthSpec)> {
    if id.eq_ignore_ascii_case("hydrostatic") {
        let c = fixtures::hydrostatic_tank();
        let dp = c.numerics.dp;
        return Some((c.clone(), GroundTruthSpec::from_reference(c, 0.01, dp / 2.0)));
    }
    fixtures::by_id(id)
}

/// Outcome of reading a case argument: a case, or a document that does not
/// parse.
pub enum Loaded {
    Case(CaseDefinition, String),
    Unparsable(sphflow_core::ParseError),
}

/// Resolve a case argument to a parsed case and a default output name.
pub fn load(arg: &str) -> Result<Loaded, crate::CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {arg}"))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into());
        return Ok(match parse_case(&text) {
            Ok(c) => Loaded::Case(c, name),
            Err(e) => Loaded::Unparsable(e),
        });
    }
    match builtin(arg) {
        Some((c, _)) => Ok(Loaded::Case(c, arg.to_ascii_lowercase())),
        None => Err(usage(format!("'{arg}' is neither a file nor a built-in case (C1..C5, hydrostatic)"))),
    }
}

fn load_case(arg: &str) -> Result<(CaseDefinition, String), crate::CliError> {
    match load(arg)? {
        Loaded::Case(c, n) => Ok((c, n)),
        Loaded::Unparsable(e) => Err(crate::CliError::Failed(anyhow::anyhow!("{arg}: {e}"))),
    }
}

fn out_dir(cli: &Cli, name: &str) -> anyhow::Result<PathBuf> {
    let d = cli.out.join(name);
    fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d)
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(p) = path.parent() {
        fs::create_dir_all(p)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn case(cli: &Cli, c: &CaseCommand) -> CliResult {
    match c {
        CaseCommand::Validate { case } => match load(case)? {
            Loaded::Unparsable(e) => {
                print!("{}", parse_failure_report(&e).to_text());
                Ok(EXIT_FINDINGS)
            }
            Loaded::Case(c, _) => {
                let issues = validate_semantics(&c);
                if issues.is_empty() {
                    println!("ok: {} primitives, dp = {} m", c.primitives.len(), c.numerics.dp);
                    Ok(EXIT_OK)
                } else {
                    for i in &issues {
                        println!("{i}");
                    }
                    Ok(EXIT_FINDINGS)
                }
            }
        },
        CaseCommand::Emit(a) => {
            let (c, name) = load_case(&a.case)?;
            let path = cli.out.join(format!("{}.xml", a.name.as_deref().unwrap_or(&name)));
            write(&path, &emit_case(&c)?)?;
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
        CaseCommand::Diff { reference, candidate, tol } => {
            let (r, _) = load_case(reference)?;
            let (c, _) = load_case(candidate)?;
            let d = diff_cases(&r, &c, *tol);
            println!("{}", serde_json::to_string_pretty(&d)?);
            Ok(if d.is_empty() { EXIT_OK } else { EXIT_FINDINGS })
        }
    }
}

fn gen(cli: &Cli, a: &CaseArg) -> CliResult {
    let (c, name) = load_case(&a.case)?;
    let frame = generate_particles(&c)?;
    let dir = out_dir(cli, a.name.as_deref().unwrap_or(&name))?;
    export_frame(&frame, ExportFormat::Csv, &dir.join("particles.csv"))?;
    export_frame(&frame, ExportFormat::VtkLegacyAscii, &dir.join("particles.vtk"))?;
    let svg = render_snapshot(&frame, &ViewSpec::side("kind"))?;
    write(&dir.join("preview.svg"), &svg)?;
    println!("{} particles -> {}", frame.len(), dir.display());
    Ok(EXIT_OK)
}

fn reference_spec(a: &crate::CheckArgs) -> Result<GroundTruthSpec, crate::CliError> {
    let mut spec = match load(&a.reference)? {
        Loaded::Unparsable(e) => return Err(usage(format!("reference {}: {e}", a.reference))),
        Loaded::Case(r, _) if !Path::new(&a.reference).is_file() => {
            builtin(&a.reference).map(|b| b.1).unwrap_or_else(|| GroundTruthSpec::from_reference(r, a.dim_tol, 0.0))
        }
        Loaded::Case(r, _) => {
            let pos = a.pos_tol.unwrap_or(r.numerics.dp / 2.0);
            GroundTruthSpec::from_reference(r, a.dim_tol, pos)
        }
    };
    for c in &a.contacts {
        let parsed = c
            .split_once(':')
            .and_then(|(f, w)| Some(ContactPair::new(f.trim().parse().ok()?, w.trim().parse().ok()?)))
            .ok_or_else(|| usage(format!("--contact expects FLUID:WALL, got '{c}'")))?;
        spec.contacts.push(parsed);
    }
    Ok(spec)
}

fn check(cli: &Cli, a: &crate::CheckArgs) -> CliResult {
    let spec = reference_spec(a)?;
    let name = match load(&a.case.case)? {
        Loaded::Case(_, n) => n,
        Loaded::Unparsable(_) => "case".into(),
    };
    let dir = out_dir(cli, a.case.name.as_deref().unwrap_or(&name))?;
    let report = match load(&a.case.case)? {
        Loaded::Unparsable(e) => parse_failure_report(&e),
        Loaded::Case(c, _) => validate_case(&c, &spec),
    };
    write(&dir.join("validation.txt"), &report.to_text())?;
    write(&dir.join("validation.json"), &report.to_json())?;
    print!("{}", report.to_text());
    Ok(if report.passed { EXIT_OK } else { EXIT_FINDINGS })
}

fn run(cli: &Cli, a: &crate::RunArgs) -> CliResult {
    let (mut c, name) = load_case(&a.case.case)?;
    if let Some(t) = a.t_end {
        c.controls.t_end = t;
    }
    if let Some(dt) = a.interval {
        c.controls.output_interval = dt;
    }
    let truth = match &a.reference {
        Some(r) => Some(builtin(r).ok_or_else(|| usage(format!("unknown reference case '{r}'")))?.1),
        None => None,
    };
    let dir = out_dir(cli, a.case.name.as_deref().unwrap_or(&name))?;
    let options = PipelineOptions {
        truth,
        csv_only: a.csv_only,
    };
    let total = c.controls.frame_count();
    let s = run_pipeline_with(&c, &dir, &options, |p| {
        if let Some(k) = p.frame {
            eprintln!("frame {k}/{} t = {:.3} s", total - 1, p.time);
        }
    })?;
    println!(
        "{} frames, t = {} s, {} steps, {} particles -> {}",
        s.frames_written,
        s.final_time,
        s.steps,
        s.particles,
        dir.display()
    );
    if let Some(e) = &s.instability {
        println!("instability: {e}");
        return Ok(EXIT_FINDINGS);
    }
    Ok(EXIT_OK)
}

/// `value` parsed as a number, bool, comma-separated number list, or text.
fn arg_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        if !v.is_string() {
            return v;
        }
    }
    if raw.contains(',') {
        let nums: Option<Vec<f64>> = raw.split(',').map(|s| s.trim().parse().ok()).collect();
        if let Some(n) = nums {
            return Value::from(n);
        }
    }
    Value::String(raw.into())
}

/// Turn `--key value` pairs into a tool argument object.
pub fn tool_args(raw: &[String]) -> Result<Value, crate::CliError> {
    let mut map = Map::new();
    let mut it = raw.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| usage(format!("expected --key value pairs, got '{flag}'")))?
            .replace('-', "_");
        let value = it.next().ok_or_else(|| usage(format!("--{key} needs a value")))?;
        if key == "plane" {
            let v = arg_value(value);
            let n: Vec<f64> = v
                .as_array()
                .map(|a| a.iter().filter_map(Value::as_f64).collect())
                .filter(|n: &Vec<f64>| n.len() == 6)
                .ok_or_else(|| usage("--plane expects px,py,pz,nx,ny,nz"))?;
            map.insert("plane_point".into(), Value::from(n[..3].to_vec()));
            map.insert("plane_normal".into(), Value::from(n[3..].to_vec()));
        } else {
            map.insert(key, arg_value(value));
        }
    }
    Ok(Value::Object(map))
}

fn schema_help(d: &ToolDescriptor) -> String {
    let mut s = format!("{}: {}\n", d.name, d.doc);
    for p in &d.params {
        let units = if p.units.is_empty() { String::new() } else { format!(" [{}]", p.units) };
        let req = if p.required { "required" } else { "optional" };
        s.push_str(&format!("  --{} ({:?}, {req}){units}: {}\n", p.name, p.kind, p.doc));
    }
    s
}

fn analyze(cli: &Cli, a: &crate::AnalyzeArgs) -> CliResult {
    if a.tool == "list" {
        for d in descriptors() {
            print!("{}", schema_help(&d));
        }
        return Ok(EXIT_OK);
    }
    let desc = descriptor(&a.tool).ok_or_else(|| usage(format!("unknown tool '{}'; `analyze list` shows all tools", a.tool)))?;
    let run_dir = a.run.as_ref().ok_or_else(|| usage("--run <dir> is required"))?;
    let args = tool_args(&a.args)?;
    let data = RunData::load(run_dir)?;
    let dir = cli.out.join("analysis").join(a.name.as_deref().unwrap_or(&a.tool));
    match invoke_tool(&data, &a.tool, &args, &dir) {
        Ok(o) => {
            println!("{}", o.summary);
            for f in &o.files {
                println!("{}", f.display());
            }
            write(&dir.join("result.json"), &serde_json::to_string_pretty(&o.value)?)?;
            Ok(EXIT_OK)
        }
        Err(e @ ToolError::BadArgs { .. }) => Err(usage(format!("{e}\n{}", schema_help(&desc)))),
        Err(e) => Err(anyhow::anyhow!(e).into()),
    }
}

fn eval(cli: &Cli, e: &EvalCommand) -> CliResult {
    let read = |input: &crate::EvalInput, bundled: &str| -> Result<String, crate::CliError> {
        match &input.input {
            Some(p) => fs::read_to_string(p).map_err(|err| usage(format!("{}: {err}", p.display()))),
            None => Ok(bundled.to_string()),
        }
    };
    let (name, text, json) = match e {
        EvalCommand::Geometry { input, cap } => {
            let recs = evalkit::read_geometry_csv(read(input, evalkit::GEOMETRY_RUNS_CSV)?.as_bytes()).map_err(|e| usage(e.to_string()))?;
            let cells = evalkit::aggregate_geometry(&recs, *cap);
            ("geometry", evalkit::geometry_table(&cells), serde_json::to_string_pretty(&cells)?)
        }
        EvalCommand::Tasks(input) => {
            let recs = evalkit::read_tasks_csv(read(input, evalkit::TASK_SCORES_CSV)?.as_bytes()).map_err(|e| usage(e.to_string()))?;
            let rows = evalkit::aggregate_tasks(&recs);
            ("tasks", evalkit::task_table(&rows), serde_json::to_string_pretty(&rows)?)
        }
        EvalCommand::Pc(input) => {
            let recs = evalkit::read_tasks_csv(read(input, evalkit::TASK_SCORES_CSV)?.as_bytes()).map_err(|e| usage(e.to_string()))?;
            let cells = evalkit::stratify_by_pc(&recs);
            ("pc", evalkit::pc_table(&cells), serde_json::to_string_pretty(&cells)?)
        }
    };
    let dir = out_dir(cli, "eval")?;
    write(&dir.join(format!("{name}.txt")), &text)?;
    write(&dir.join(format!("{name}.json")), &json)?;
    print!("{text}");
    Ok(EXIT_OK)
}
