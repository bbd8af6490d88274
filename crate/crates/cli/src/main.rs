use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfly_core::experiment::{
    merge_csv, parse_csv, run_manifest, voq_factors, write_atomic, ExperimentManifest,
};
use dfly_core::routing::emit_fabric_dump;
use dfly_core::topology::NodeRef;
use dfly_core::{
    analytic_flow_counts, build_cdg, build_topology, check_deadlock_free, DragonflyParams, Engine,
    Topology,
};

/// Dragonfly topology, routing and simulation toolkit.
#[derive(Debug, Parser)]
#[command(name = "dfly", version)]
struct Cli {
    /// Directory for generated files.
    #[arg(long, global = true, env = "DFLY_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a topology, print its size and analytic channel loads, write its channel list.
    Build {
        /// `a,h,p` or `a,h,p,g`.
        #[arg(long)]
        params: DragonflyParams,
        /// Topology file (defaults to the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize routing tables and write the fabric dump.
    Route {
        #[arg(long)]
        engine: Engine,
        #[arg(long)]
        params: DragonflyParams,
        /// Dump file (defaults to the output directory; `-` for stdout).
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Check the channel dependency graph for cycles. Exit 1 when cyclic.
    Verify {
        #[arg(long)]
        engine: Engine,
        #[arg(long)]
        params: DragonflyParams,
        /// Keep every packet on VL 0.
        #[arg(long)]
        disable_vl_shift: bool,
    },
    /// Run every row of a manifest, skipping rows whose results exist.
    Sweep {
        manifest: PathBuf,
        /// Parallel rows.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        /// Allow rows with more than 100 endnodes.
        #[arg(long)]
        large: bool,
    },
    /// Merge result CSVs (files or directories) into one table.
    PlotData {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Merged CSV (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append VOQ improvement factors as comment lines.
        #[arg(long)]
        factors: bool,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

fn out_dir(cli_dir: &Option<PathBuf>) -> PathBuf {
    cli_dir.clone().unwrap_or_else(|| PathBuf::from("dfly-out"))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
    }
    write_atomic(path, contents.as_bytes()).map_err(|e| io(path, e))
}

fn topology(params: DragonflyParams) -> Result<Topology, Failure> {
    build_topology(params).map_err(|e| usage(e.to_string()))
}

fn file_stem(params: &DragonflyParams) -> String {
    format!("{}-{}-{}-{}", params.a, params.h, params.p, params.g)
}

fn cmd_build(params: DragonflyParams, out: Option<PathBuf>, dir: PathBuf) -> Result<u8, Failure> {
    let t = topology(params)?;
    let (terminal, local, global) = t.cable_counts();
    println!("N={} groups={}", t.num_endnodes(), params.g);
    println!("switches={} radix={}", t.num_switches(), t.max_radix());
    println!("cables terminal={terminal} local={local} global={global}");
    match analytic_flow_counts(&params) {
        Ok(f) => println!("f_t={} f_g={} f_l={}", f.f_t, f.f_g, f.f_l),
        Err(e) => println!("flow counts unavailable: {e}"),
    }
    let path = out.unwrap_or_else(|| dir.join(format!("topology-{}.txt", file_stem(&params))));
    write_file(&path, &t.dump())?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_route(
    engine: Engine,
    params: DragonflyParams,
    dump: Option<PathBuf>,
    dir: PathBuf,
) -> Result<u8, Failure> {
    let t = topology(params)?;
    let config = engine.route(&t).map_err(|e| usage(e.to_string()))?;
    let text = emit_fabric_dump(&config);
    if dump.as_deref() == Some(Path::new("-")) {
        print!("{text}");
        return Ok(0);
    }
    println!(
        "engine={engine} params={params} sls={} vls={}",
        config.resources.sls, config.resources.vls
    );
    let path = dump.unwrap_or_else(|| dir.join(format!("{engine}-{}.dump", file_stem(&params))));
    write_file(&path, &text)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn describe_channel(t: &Topology, channel: dfly_core::topology::ChannelId) -> String {
    let ch = t.channel(channel).expect("cycle channels exist");
    let node = |n: NodeRef| n.to_string();
    format!(
        "{}:{} -> {}:{} {}",
        node(ch.src),
        ch.src_port,
        node(ch.dst),
        ch.dst_port,
        ch.kind.short_name()
    )
}

fn cmd_verify(
    engine: Engine,
    params: DragonflyParams,
    disable_vl_shift: bool,
) -> Result<u8, Failure> {
    let t = topology(params)?;
    let mut config = engine.route(&t).map_err(|e| usage(e.to_string()))?;
    if disable_vl_shift {
        config = config.without_vl_shift();
    }
    let cdg = build_cdg(&t, &config).map_err(|e| usage(e.to_string()))?;
    let report = check_deadlock_free(&cdg);
    let summary = format!(
        "engine={engine} params={params} vls={} vertices={} edges={}",
        config.resources.vls,
        cdg.vertex_count(),
        cdg.edge_count()
    );
    if report.acyclic {
        println!("ACYCLIC {summary}");
        return Ok(0);
    }
    println!("CYCLIC {summary}");
    println!("witness cycle of {} dependencies:", report.cycle.len());
    for (v, (src, dst)) in report.cycle.iter().zip(&report.inducing_flows) {
        println!(
            "  {v} {} from flow e{}->e{}",
            describe_channel(&t, v.channel),
            src.0,
            dst.0
        );
    }
    Ok(1)
}

fn cmd_sweep(
    manifest_path: &Path,
    jobs: usize,
    large: bool,
    cli_dir: &Option<PathBuf>,
) -> Result<u8, Failure> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io(manifest_path, e))?;
    let manifest: ExperimentManifest = text
        .parse()
        .map_err(|e| usage(format!("{}: {e}", manifest_path.display())))?;
    let big = manifest
        .check_size(large)
        .map_err(|e| usage(e.to_string()))?;
    for row in big {
        eprintln!(
            "warning: line {}: {} endnodes; expect long run times",
            row.line,
            row.params.endnodes()
        );
    }
    let dir = cli_dir
        .clone()
        .or_else(|| manifest.output.clone())
        .unwrap_or_else(|| PathBuf::from("dfly-out"));
    let report = run_manifest(&manifest, &dir, jobs);
    println!(
        "manifest={} rows={} written={} skipped={} failed={} dir={}",
        manifest.hash(),
        manifest.rows.len(),
        report.written.len(),
        report.skipped.len(),
        report.failed.len(),
        dir.display()
    );
    if report.failed.is_empty() {
        return Ok(0);
    }
    for (row, err) in &report.failed {
        eprintln!(
            "row {row} (line {}) failed: {err}",
            manifest.rows[row - 1].line
        );
    }
    Ok(1)
}

fn collect_csvs(inputs: &[PathBuf]) -> Result<Vec<String>, Failure> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(|e| io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    files
        .iter()
        .map(|p| fs::read_to_string(p).map_err(|e| io(p, e)))
        .collect()
}

fn cmd_plot_data(inputs: &[PathBuf], out: Option<PathBuf>, factors: bool) -> Result<u8, Failure> {
    let texts = collect_csvs(inputs)?;
    let mut merged = merge_csv(&texts).map_err(usage)?;
    if factors {
        let records = parse_csv(&merged).map_err(usage)?;
        for (engine, buffer, factor) in voq_factors(&records) {
            merged.push_str(&format!(
                "# voq-factor engine={engine} buffer={buffer} factor={factor:.3}\n"
            ));
        }
    }
    match out {
        Some(path) => write_file(&path, &merged)?,
        None => print!("{merged}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dir = out_dir(&cli.out_dir);
    let result = match cli.command {
        Command::Build { params, out } => cmd_build(params, out, dir),
        Command::Route {
            engine,
            params,
            dump,
        } => cmd_route(engine, params, dump, dir),
        Command::Verify {
            engine,
            params,
            disable_vl_shift,
        } => cmd_verify(engine, params, disable_vl_shift),
        Command::Sweep {
            manifest,
            jobs,
            large,
        } => cmd_sweep(&manifest, jobs, large, &cli.out_dir),
        Command::PlotData {
            inputs,
            out,
            factors,
        } => cmd_plot_data(&inputs, out, factors),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
