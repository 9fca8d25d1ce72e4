//! Command-line front end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fuseplan_core::analysis::{classify_boundaries, classify_dependency, fusible_segments};
use fuseplan_core::codegen::generate_fused_source;
use fuseplan_core::pipeline::parse_partition;
use fuseplan_core::planner::{plan, PlanError, PlanOptions};
use fuseplan_core::sim::{synth_video, SyntheticSceneSpec, VideoData};
use fuseplan_core::tiling::{
    data_utilization, input_box, optimal_tile, LaunchLimits, StagingLayout,
};
use fuseplan_core::{Halo, HaloMode, KernelDesc, Pipeline, TileShape, TransferVariant, VideoDims};
use serde::Serialize;
use serde_json::json;

use crate::calibrate::{fit, read_measurements};
use crate::config::render_device;
use crate::fpvd::read_video;
use crate::profiles::{load_device, load_pipeline, DEFAULT_DEVICE, DEFAULT_PIPELINE};
use crate::report::{build_report, default_scene, render_csv, render_text, SimInput};
use crate::trajectory::write_csv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HaloModeArg {
    PaperMax,
    Cumulative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Paper,
    Exact,
}

#[derive(Parser, Debug)]
#[command(
    name = "fuseplan",
    version,
    about = "Kernel-fusion planner for stencil video pipelines"
)]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value = "text")]
    pub format: Format,
    #[arg(long, global = true, value_enum, default_value = "cumulative")]
    pub halo_mode: HaloModeArg,
    #[arg(long, global = true, value_enum, default_value = "exact")]
    pub transfer_variant: VariantArg,
    /// Seed for synthetic scenes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Leave the generation time out of reports.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Inputs {
    /// Pipeline file or bundled name.
    #[arg(long, default_value = DEFAULT_PIPELINE)]
    pub pipeline: String,
    /// Device file, name in $FUSEPLAN_DEVICE_DIR, or bundled name.
    #[arg(long, default_value = DEFAULT_DEVICE)]
    pub device: String,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Operation types, dependency classes and fusible segments.
    Analyze {
        #[arg(long, default_value = DEFAULT_PIPELINE)]
        pipeline: String,
    },
    /// Optimal (or forced) fusion plan.
    Plan {
        #[command(flatten)]
        inputs: Inputs,
        /// Intervals such as "1-2,3-5".
        #[arg(long)]
        force_partition: Option<String>,
        /// Report No/Two/Full Fusion and the optimum side by side.
        #[arg(long)]
        compare: bool,
    },
    /// Data-utilization sweep over square tiles.
    Tile {
        #[arg(long, default_value = DEFAULT_DEVICE)]
        device: String,
        /// Halo totals "dx,dy,dt" or per side "x_lo,x_hi,y_lo,y_hi,t_lo,t_hi".
        #[arg(long, default_value = "0,0,0")]
        halo: String,
        /// "x_from:x_to[:step],t_from:t_to[:step]".
        #[arg(long, default_value = "1:64,1:16")]
        sweep: String,
        #[arg(long, default_value_t = 4)]
        bytes_per_elem: u32,
        /// Staged copies of the box (2 for ping-pong staging).
        #[arg(long, default_value_t = 1)]
        buffers: u32,
    },
    /// Fused-kernel sources for every tile-local group of the plan.
    Codegen {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long)]
        force_partition: Option<String>,
        #[arg(long, default_value = "generated")]
        out_dir: PathBuf,
    },
    /// Sequential vs tiled execution with traffic counters.
    Simulate {
        #[command(flatten)]
        inputs: Inputs,
        /// Raw FPVD video.
        #[arg(long, conflicts_with = "synth")]
        video: Option<PathBuf>,
        /// "WxHxF" for the default two-marker scene, or a scene JSON file.
        #[arg(long)]
        synth: Option<String>,
        #[arg(long)]
        force_partition: Option<String>,
        /// Side of the square tracking window, pixels.
        #[arg(long, default_value_t = 15)]
        roi: u32,
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
    },
    /// Fits the cost coefficients to measured launch times.
    Calibrate {
        /// CSV with n_kernels,blocks,tile_x,tile_y,tile_t,halo_dx,halo_dy,halo_dt,measured_time.
        #[arg(long)]
        measurements: PathBuf,
        /// Device whose cost block is replaced in the written file.
        #[arg(long, default_value = DEFAULT_DEVICE)]
        device: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Exit status 1 for resource infeasibility, 2 for bad input.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Infeasible(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn plan_err(e: PlanError) -> CliError {
    if e.is_infeasible() {
        CliError::Infeasible(e.to_string())
    } else {
        CliError::Input(e.to_string())
    }
}

impl Cli {
    fn plan_options(&self, force: Option<&str>) -> Result<PlanOptions, CliError> {
        Ok(PlanOptions {
            halo_mode: match self.halo_mode {
                HaloModeArg::PaperMax => HaloMode::PaperMax,
                HaloModeArg::Cumulative => HaloMode::Cumulative,
            },
            transfer_variant: match self.transfer_variant {
                VariantArg::Paper => TransferVariant::Paper,
                VariantArg::Exact => TransferVariant::Exact,
            },
            forced: force.map(parse_partition).transpose().map_err(input)?,
        })
    }
}

fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report is serializable");
    s.push('\n');
    s
}

fn csv_of<R: Serialize>(rows: &[R]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}

#[derive(Serialize)]
struct KernelRow {
    id: u32,
    name: String,
    op_type: String,
    dependency: String,
    halo: String,
    scope: String,
}

fn halo_str(h: &Halo) -> String {
    format!(
        "x {}+{} y {}+{} t {}+{}",
        h.x_lo, h.x_hi, h.y_lo, h.y_hi, h.t_lo, h.t_hi
    )
}

fn cmd_analyze(cli: &Cli, pipeline: &str) -> Result<String, CliError> {
    let (p, _) = load_pipeline(pipeline).map_err(input)?;
    let rows: Vec<KernelRow> = p
        .kernels()
        .iter()
        .map(|k| KernelRow {
            id: k.id,
            name: k.name.clone(),
            op_type: k.op_type.to_string(),
            dependency: classify_dependency(k).to_string(),
            halo: halo_str(&k.halo),
            scope: format!("{:?}", k.scope),
        })
        .collect();
    let boundaries = classify_boundaries(&p);
    let segments: Vec<String> = fusible_segments(&p)
        .iter()
        .map(|s| s.interval.to_string())
        .collect();
    Ok(match cli.format {
        Format::Json => to_json(&json!({
            "kernels": rows,
            "boundaries": boundaries,
            "segments": segments,
        })),
        Format::Csv => csv_of(&rows),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<4} {:<18} {:<15} {:<5} {:<24} scope",
                "id", "name", "op_type", "dep", "halo"
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "K{:<3} {:<18} {:<15} {:<5} {:<24} {}",
                    r.id, r.name, r.op_type, r.dependency, r.halo, r.scope
                );
            }
            let _ = writeln!(s);
            if boundaries.is_empty() {
                let _ = writeln!(s, "boundaries: none");
            }
            for b in &boundaries {
                let _ = writeln!(
                    s,
                    "boundary K{}->K{}: {} ({})",
                    b.consumer_id - 1,
                    b.consumer_id,
                    b.dep_type,
                    b.reason
                );
            }
            let _ = writeln!(s, "segments: {}", segments.join(" | "));
            s
        }
    })
}

fn cmd_plan(
    cli: &Cli,
    inputs: &Inputs,
    force: Option<&str>,
    compare: bool,
) -> Result<String, CliError> {
    let (p, _) = load_pipeline(&inputs.pipeline).map_err(input)?;
    let device = load_device(&inputs.device).map_err(input)?;
    let opts = cli.plan_options(force)?;
    if compare {
        let out = build_report(&p, &device, &opts, None, !cli.no_timestamp).map_err(input)?;
        return Ok(match cli.format {
            Format::Json => to_json(&out.report),
            Format::Csv => render_csv(&out.report),
            Format::Text => render_text(&out.report),
        });
    }
    let fp = plan(&p, &device, &opts).map_err(plan_err)?;
    Ok(match cli.format {
        Format::Json => to_json(&fp),
        Format::Csv => {
            #[derive(Serialize)]
            struct Row {
                group: String,
                kernels: String,
                tile_x: u32,
                tile_y: u32,
                tile_t: u32,
                halo_dx: u32,
                halo_dy: u32,
                halo_dt: u32,
                du: f64,
                smem_bytes: u64,
                occupancy: f64,
                cost: f64,
                transfer_serial: u64,
                transfer_fused_paper: u64,
                transfer_fused_exact: u64,
            }
            let rows: Vec<Row> = fp
                .groups()
                .map(|g| Row {
                    group: g.interval.to_string(),
                    kernels: g.kernels.join(" "),
                    tile_x: g.tile.x,
                    tile_y: g.tile.y,
                    tile_t: g.tile.t,
                    halo_dx: g.halo.dx(),
                    halo_dy: g.halo.dy(),
                    halo_dt: g.halo.dt(),
                    du: g.du,
                    smem_bytes: g.smem_bytes,
                    occupancy: g.launch.occupancy,
                    cost: g.total_cost,
                    transfer_serial: g.transfers.serial_elems,
                    transfer_fused_paper: g.transfers.fused_paper_elems,
                    transfer_fused_exact: g.transfers.fused_exact_elems,
                })
                .collect();
            csv_of(&rows)
        }
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "device: {}", fp.device);
            let _ = writeln!(s, "halo mode: {}", fp.halo_mode.as_str());
            for seg in &fp.segments {
                let _ = writeln!(
                    s,
                    "segment {} ({} candidates{}): cost {:.6e}",
                    seg.interval,
                    seg.candidate_count,
                    if seg.forced { ", forced" } else { "" },
                    seg.cost
                );
                for g in &seg.groups {
                    let _ = writeln!(
                        s,
                        "  group {} [{}]: tile {}x{}x{} halo {} DU {:.4} smem {} B occupancy {:.3} cost {:.6e}",
                        g.interval,
                        g.kernels.join(", "),
                        g.tile.x,
                        g.tile.y,
                        g.tile.t,
                        halo_str(&g.halo),
                        g.du,
                        g.smem_bytes,
                        g.launch.occupancy,
                        g.total_cost
                    );
                    let _ = writeln!(
                        s,
                        "    transfers: serial {} fused-paper {} fused-exact {} ({:.2}% reduction)",
                        g.transfers.serial_elems,
                        g.transfers.fused_paper_elems,
                        g.transfers.fused_exact_elems,
                        g.transfers.reduction_pct
                    );
                }
            }
            let _ = writeln!(
                s,
                "partition: {}",
                crate::report::partition_string(&fp.partition())
            );
            let _ = writeln!(s, "total cost: {:.6e}", fp.total_cost);
            let _ = writeln!(
                s,
                "GMEM buffers: {} (unfused {}); policy: {}",
                fp.buffers.count, fp.buffers_unfused.count, fp.buffers.policy
            );
            s
        }
    })
}

fn parse_halo(text: &str) -> Result<Halo, CliError> {
    let v: Vec<u32> = text
        .split(',')
        .map(|s| s.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| {
            CliError::Input(format!(
                "invalid halo {text:?}: expected non-negative integers"
            ))
        })?;
    match v[..] {
        [dx, dy, dt] => Ok(Halo::from_totals(dx, dy, dt)),
        [a, b, c, d, e, f] => Ok(Halo::new(a, b, c, d, e, f)),
        _ => Err(CliError::Input(format!(
            "invalid halo {text:?}: give 3 totals or 6 per-side pads"
        ))),
    }
}

fn parse_range(text: &str) -> Option<(u32, u32, u32)> {
    let parts: Vec<u32> = text
        .split(':')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    let (lo, hi, step) = match parts[..] {
        [lo, hi] => (lo, hi, 1),
        [lo, hi, step] => (lo, hi, step),
        _ => return None,
    };
    (lo >= 1 && hi >= lo && step >= 1).then_some((lo, hi, step))
}

#[derive(Serialize, Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub x: u32,
    pub y: u32,
    pub t: u32,
    #[serde(rename = "DU")]
    pub du: f64,
    #[serde(rename = "V")]
    pub v: u64,
    pub feasible: bool,
}

/// Square-tile sweep. A row is feasible when its input box fits the staged
/// budget; infeasible rows report DU 0.
pub fn tile_sweep(
    halo: &Halo,
    budget: u64,
    xs: (u32, u32, u32),
    ts: (u32, u32, u32),
) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for x in (xs.0..=xs.1).step_by(xs.2 as usize) {
        for t in (ts.0..=ts.1).step_by(ts.2 as usize) {
            let tile = TileShape::new(x, x, t);
            let v = input_box(tile, halo).volume();
            let feasible = v <= budget;
            rows.push(SweepRow {
                x,
                y: x,
                t,
                du: if feasible {
                    data_utilization(tile, halo)
                } else {
                    0.0
                },
                v,
                feasible,
            });
        }
    }
    rows
}

fn cmd_tile(
    cli: &Cli,
    device: &str,
    halo: &str,
    sweep: &str,
    bytes_per_elem: u32,
    buffers: u32,
) -> Result<String, CliError> {
    let device = load_device(device).map_err(input)?;
    let halo = parse_halo(halo)?;
    let (xr, tr) = sweep
        .split_once(',')
        .and_then(|(a, b)| Some((parse_range(a)?, parse_range(b)?)))
        .ok_or_else(|| CliError::Input(format!("invalid sweep {sweep:?}")))?;
    if bytes_per_elem == 0 || buffers == 0 {
        return Err(CliError::Input(
            "bytes-per-elem and buffers must be positive".into(),
        ));
    }
    let staging = StagingLayout {
        elem_bytes: bytes_per_elem,
        buffers,
    };
    let budget = staging.budget_elems(device.smem_bytes);
    let rows = tile_sweep(&halo, budget, xr, tr);
    let best = rows
        .iter()
        .filter(|r| r.feasible)
        .max_by(|a, b| {
            fuseplan_core::tiling::compare_tiles(
                TileShape::new(a.x, a.y, a.t),
                TileShape::new(b.x, b.y, b.t),
                &halo,
            )
        })
        .copied();
    let limits = LaunchLimits {
        max_input_elems: budget,
        bytes_per_elem: staging.bytes_per_staged_elem(),
        ..LaunchLimits::default()
    };
    let optimum = optimal_tile(&halo, budget, &limits).ok();
    Ok(match cli.format {
        Format::Csv => csv_of(&rows),
        Format::Json => to_json(&json!({
            "device": device.name,
            "halo": halo,
            "budget_elems": budget,
            "rows": rows,
            "best_row": best,
            "optimal_tile": optimum,
        })),
        Format::Text => {
            let mut s = String::new();
            let _ = writeln!(s, "device {}: {} staged elements", device.name, budget);
            let _ = writeln!(
                s,
                "{:>5} {:>5} {:>5} {:>10} {:>10} feasible",
                "x", "y", "t", "DU", "V"
            );
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:>5} {:>5} {:>5} {:>10.6} {:>10} {}",
                    r.x, r.y, r.t, r.du, r.v, r.feasible
                );
            }
            if let Some(b) = best {
                let _ = writeln!(s, "best swept tile: {}x{}x{} DU {:.6}", b.x, b.y, b.t, b.du);
            }
            if let Some(o) = optimum {
                let _ = writeln!(
                    s,
                    "optimal tile: {}x{}x{} DU {:.6}",
                    o.tile.x, o.tile.y, o.tile.t, o.du
                );
            }
            s
        }
    })
}

fn group_kernels(p: &Pipeline, first: u32, last: u32) -> &[KernelDesc] {
    p.slice(fuseplan_core::KernelInterval::new(first, last))
}

fn cmd_codegen(
    cli: &Cli,
    inputs: &Inputs,
    force: Option<&str>,
    out_dir: &Path,
) -> Result<String, CliError> {
    let (p, stem) = load_pipeline(&inputs.pipeline).map_err(input)?;
    let device = load_device(&inputs.device).map_err(input)?;
    let fp = plan(&p, &device, &cli.plan_options(force)?).map_err(plan_err)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("{}: {e}", out_dir.display())))?;
    let mut manifest = Vec::new();
    for (k, g) in fp.groups().enumerate() {
        let name = format!("{stem}_group{}", k + 1);
        let kernels = group_kernels(&p, g.interval.first, g.interval.last);
        if !g.tile_local {
            manifest.push(json!({
                "group": k + 1,
                "interval": g.interval.to_string(),
                "file": null,
                "skipped": "runs as a separate sequential stage",
            }));
            continue;
        }
        let emitted = generate_fused_source(&name, kernels, g.tile, g.halo, &device, &fp.video)
            .map_err(|e| CliError::Infeasible(format!("group {}: {e}", g.interval)))?;
        let file = format!("{name}.genkernel");
        let path = out_dir.join(&file);
        std::fs::write(&path, &emitted.source_text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        manifest.push(json!({
            "group": k + 1,
            "interval": g.interval.to_string(),
            "file": file,
            "tile": g.tile,
            "halo": g.halo,
            "smem_bytes": emitted.smem_bytes,
            "buffers": emitted.buffers,
            "sync_points": emitted.sync_points,
            "threads": emitted.launch.threads,
        }));
    }
    let doc = json!({ "pipeline": stem, "device": device.name, "groups": manifest });
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, to_json(&doc))
        .map_err(|e| CliError::Input(format!("{}: {e}", manifest_path.display())))?;
    Ok(match cli.format {
        Format::Json => to_json(&doc),
        _ => {
            let mut s = String::new();
            for g in doc["groups"].as_array().into_iter().flatten() {
                match g["file"].as_str() {
                    Some(f) => {
                        let _ = writeln!(
                            s,
                            "group {}: {}",
                            g["interval"].as_str().unwrap_or(""),
                            out_dir.join(f).display()
                        );
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            "group {}: skipped (sequential stage)",
                            g["interval"].as_str().unwrap_or("")
                        );
                    }
                }
            }
            let _ = writeln!(s, "manifest: {}", manifest_path.display());
            s
        }
    })
}

fn parse_dims(text: &str, channels: u32, fps: u32) -> Option<VideoDims> {
    let v: Vec<u32> = text
        .split('x')
        .map(|s| s.trim().parse().ok())
        .collect::<Option<_>>()?;
    match v[..] {
        [w, h, f] => VideoDims::new(w, h, f, fps, channels).ok(),
        _ => None,
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cli: &Cli,
    inputs: &Inputs,
    video: Option<&Path>,
    synth: Option<&str>,
    force: Option<&str>,
    roi: u32,
    trajectory_out: Option<&Path>,
) -> Result<String, CliError> {
    let (p, _) = load_pipeline(&inputs.pipeline).map_err(input)?;
    let device = load_device(&inputs.device).map_err(input)?;
    let opts = cli.plan_options(force)?;
    let pv = p.video;
    let (data, truth): (VideoData, Option<Vec<Vec<[f64; 2]>>>) = match (video, synth) {
        (Some(path), _) => {
            let f = std::fs::File::open(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let (v, _) = read_video(std::io::BufReader::new(f), pv.fps).map_err(input)?;
            (v, None)
        }
        (None, spec) => {
            let spec = spec.unwrap_or("64x64x32");
            let scene = if let Some(dims) = parse_dims(spec, pv.channels, pv.fps) {
                default_scene(dims, cli.seed).map_err(input)?
            } else {
                let text = std::fs::read_to_string(spec).map_err(|e| {
                    CliError::Input(format!("--synth {spec:?}: not WxHxF and not readable: {e}"))
                })?;
                let mut s: SyntheticSceneSpec = serde_json::from_str(&text).map_err(input)?;
                if cli.seed != 0 {
                    s.seed = cli.seed;
                }
                synth_video(&s).map_err(input)?
            };
            (scene.video, Some(scene.truth))
        }
    };
    if data.dims.channels != pv.channels {
        return Err(CliError::Input(format!(
            "video has {} channel(s), pipeline expects {}",
            data.dims.channels, pv.channels
        )));
    }
    let dims = VideoDims {
        fps: pv.fps,
        ..data.dims
    };
    let p = p.retarget(dims).map_err(input)?;
    let sim = SimInput {
        video: &data,
        truth: truth.as_deref(),
        roi_size: roi,
    };
    let base = PlanOptions {
        forced: None,
        ..opts.clone()
    };
    let forced = opts.forced.clone();
    let out = if let Some(f) = forced {
        let fp = plan(
            &p,
            &device,
            &PlanOptions {
                forced: Some(f),
                ..opts
            },
        )
        .map_err(plan_err)?;
        let mut out =
            build_report(&p, &device, &base, Some(&sim), !cli.no_timestamp).map_err(input)?;
        out.report.selected_partition = Some(crate::report::partition_string(&fp.partition()));
        out
    } else {
        build_report(&p, &device, &base, Some(&sim), !cli.no_timestamp).map_err(input)?
    };
    if let (Some(path), Some(tr)) = (trajectory_out, &out.trajectories) {
        let f = std::fs::File::create(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        write_csv(f, tr).map_err(input)?;
    }
    Ok(match cli.format {
        Format::Json => to_json(&out.report),
        Format::Csv => render_csv(&out.report),
        Format::Text => render_text(&out.report),
    })
}

fn cmd_calibrate(
    cli: &Cli,
    measurements: &Path,
    device: &str,
    output: Option<&Path>,
) -> Result<String, CliError> {
    let text = std::fs::read_to_string(measurements)
        .map_err(|e| CliError::Input(format!("{}: {e}", measurements.display())))?;
    let rows = read_measurements(&text).map_err(input)?;
    let c = fit(&rows).map_err(input)?;
    let mut dev = load_device(device).map_err(input)?;
    dev.cost = c.params;
    if let Some(path) = output {
        std::fs::write(path, render_device(&dev))
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(match cli.format {
        Format::Json => to_json(&json!({ "calibration": c, "device": dev })),
        Format::Csv => {
            let mut s = String::from("row,residual\n");
            for (i, r) in c.residuals.iter().enumerate() {
                let _ = writeln!(s, "{},{}", i + 1, r);
            }
            s
        }
        Format::Text => {
            let p = c.params;
            let mut s = String::new();
            let _ = writeln!(s, "rows: {} (rank {})", c.rows, c.rank);
            let _ = writeln!(s, "gmem_cost_per_elem: {:e}", p.gmem_cost_per_elem);
            let _ = writeln!(s, "smem_cost_per_elem: {:e}", p.smem_cost_per_elem);
            let _ = writeln!(s, "compute_cost_unit: {:e}", p.compute_cost_unit);
            let _ = writeln!(s, "launch_overhead: {:e}", p.launch_overhead);
            let _ = writeln!(
                s,
                "residual RMS: {:e} (relative {:e})",
                c.rms_residual, c.rms_relative_residual
            );
            if let Some(path) = output {
                let _ = writeln!(s, "wrote {}", path.display());
            }
            s
        }
    })
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Analyze { pipeline } => cmd_analyze(cli, pipeline),
        Command::Plan {
            inputs,
            force_partition,
            compare,
        } => cmd_plan(cli, inputs, force_partition.as_deref(), *compare),
        Command::Tile {
            device,
            halo,
            sweep,
            bytes_per_elem,
            buffers,
        } => cmd_tile(cli, device, halo, sweep, *bytes_per_elem, *buffers),
        Command::Codegen {
            inputs,
            force_partition,
            out_dir,
        } => cmd_codegen(cli, inputs, force_partition.as_deref(), out_dir),
        Command::Simulate {
            inputs,
            video,
            synth,
            force_partition,
            roi,
            trajectory_out,
        } => cmd_simulate(
            cli,
            inputs,
            video.as_deref(),
            synth.as_deref(),
            force_partition.as_deref(),
            *roi,
            trajectory_out.as_deref(),
        ),
        Command::Calibrate {
            measurements,
            device,
            output,
        } => cmd_calibrate(cli, measurements, device, output.as_deref()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fuseplan_core::tiling::fused_halo;

    #[test]
    fn halo_forms() {
        assert_eq!(parse_halo("4,4,2").unwrap(), Halo::from_totals(4, 4, 2));
        assert_eq!(
            parse_halo("1,2,3,4,0,1").unwrap(),
            Halo::new(1, 2, 3, 4, 0, 1)
        );
        assert!(parse_halo("1,2").is_err());
        assert!(parse_halo("-1,0,0").is_err());
    }

    #[test]
    fn zero_halo_sweep_has_unit_du() {
        let rows = tile_sweep(&Halo::ZERO, 4096, (1, 32, 1), (1, 8, 1));
        assert!(rows.iter().filter(|r| r.feasible).all(|r| r.du == 1.0));
        assert!(rows.iter().any(|r| !r.feasible && r.du == 0.0));
    }

    #[test]
    fn smaller_device_flags_smaller_volumes() {
        let h = Halo::from_totals(4, 4, 0);
        let big = tile_sweep(&h, 49152 / 4, (1, 64, 1), (1, 4, 1));
        let small = tile_sweep(&h, 16384 / 4, (1, 64, 1), (1, 4, 1));
        let min_bad = |rows: &[SweepRow]| {
            rows.iter()
                .filter(|r| !r.feasible)
                .map(|r| r.v)
                .min()
                .unwrap()
        };
        assert!(min_bad(&small) < min_bad(&big));
    }

    #[test]
    fn dims_shorthand() {
        assert_eq!(parse_dims("64x32x8", 4, 30).unwrap().height, 32);
        assert!(parse_dims("64x32", 4, 30).is_none());
    }

    #[test]
    fn paper_max_uses_fused_halo() {
        let p =
            fuseplan_core::pipeline::bundled_pipeline(VideoDims::new(32, 32, 8, 30, 4).unwrap())
                .unwrap();
        let ks = group_kernels(&p, 1, 5);
        assert_eq!(fused_halo(ks, HaloMode::PaperMax), Halo::spatial(2, 2));
    }
}
