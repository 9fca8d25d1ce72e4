//! Side-by-side metrics for the No/Two/Full Fusion baselines and the
//! optimal plan, optionally with simulator measurements.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use fuseplan_core::analysis::fusible_segments;
use fuseplan_core::planner::{plan, FusionPlan, PlanOptions};
use fuseplan_core::sim::{
    compare_outputs, paper_max_masks, run_sequential, synth_video, track_features, Boundary,
    CompareReport, GroupSpec, Marker, Roi, SimError, SyntheticScene, SyntheticSceneSpec,
    TrafficCounters, Trajectory, VideoData,
};
use fuseplan_core::tiling::{transfer_fused_ragged, BufferReport, BUFFER_POLICY};
use fuseplan_core::{
    Device, HaloMode, KalmanParams, KernelInterval, Pipeline, StencilOp, TileShape, TransferVariant,
};
use serde::Serialize;

use crate::parallel::run_tiled_parallel;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FusionOption {
    #[serde(rename = "No Fusion")]
    NoFusion,
    #[serde(rename = "Two Fusion")]
    TwoFusion,
    #[serde(rename = "Full Fusion")]
    FullFusion,
    #[serde(rename = "Optimal")]
    Optimal,
}

impl FusionOption {
    pub const ALL: [FusionOption; 4] = [
        FusionOption::NoFusion,
        FusionOption::TwoFusion,
        FusionOption::FullFusion,
        FusionOption::Optimal,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            FusionOption::NoFusion => "No Fusion",
            FusionOption::TwoFusion => "Two Fusion",
            FusionOption::FullFusion => "Full Fusion",
            FusionOption::Optimal => "Optimal",
        }
    }

    /// Intervals the option forces; `None` lets the planner choose.
    ///
    /// Two Fusion fuses the first two kernels of every segment of at least
    /// three kernels and the rest of that segment as a second group.
    pub fn forced(&self, pipeline: &Pipeline) -> Option<Vec<KernelInterval>> {
        let segs = fusible_segments(pipeline);
        match self {
            FusionOption::Optimal => None,
            FusionOption::NoFusion => Some(
                (1..=pipeline.len() as u32)
                    .map(KernelInterval::single)
                    .collect(),
            ),
            FusionOption::FullFusion => Some(segs.iter().map(|s| s.interval).collect()),
            FusionOption::TwoFusion => {
                let mut out = Vec::new();
                for s in &segs {
                    let iv = s.interval;
                    if s.len() >= 3 {
                        out.push(KernelInterval::new(iv.first, iv.first + 1));
                        out.push(KernelInterval::new(iv.first + 2, iv.last));
                    }
                }
                Some(out)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupMetrics {
    pub interval: KernelInterval,
    pub tile: TileShape,
    pub halo_totals: [u32; 3],
    pub du: f64,
    pub smem_bytes: u64,
    pub blocks: u64,
    pub occupancy: f64,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TransferTotals {
    pub serial: u64,
    pub fused_paper: u64,
    pub fused_exact: u64,
}

/// Simulator tallies over the tile-local groups of one option.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measured {
    pub counters: TrafficCounters,
    /// The analytic count the measured GMEM total is checked against.
    pub analytic_gmem: u64,
    pub gmem_matches_analytic: bool,
    pub compare: CompareReport,
    pub outputs_identical: bool,
    pub interior_identical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptionReport {
    pub option: FusionOption,
    pub partition: String,
    pub feasible: bool,
    pub error: Option<String>,
    pub total_cost: Option<f64>,
    pub groups: Vec<GroupMetrics>,
    pub transfers: TransferTotals,
    pub buffers: Option<BufferReport>,
    pub measured: Option<Measured>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingSummary {
    pub markers: usize,
    /// `None` for markers with no frame after 20.
    pub rmse_after_frame_20: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub generated_unix_secs: Option<u64>,
    pub device: String,
    pub video: fuseplan_core::VideoDims,
    pub kernels: Vec<String>,
    pub halo_mode: HaloMode,
    pub transfer_variant: TransferVariant,
    pub buffer_policy: String,
    pub selected_partition: Option<String>,
    pub options: Vec<OptionReport>,
    /// Measured fused GMEM over measured serial GMEM, as a reduction in percent.
    pub measured_reduction_pct: Option<f64>,
    pub tracking: Option<TrackingSummary>,
}

pub fn partition_string(p: &[KernelInterval]) -> String {
    p.iter()
        .map(|iv| iv.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn group_metrics(plan: &FusionPlan) -> Vec<GroupMetrics> {
    plan.groups()
        .map(|g| GroupMetrics {
            interval: g.interval,
            tile: g.tile,
            halo_totals: g.halo.totals(),
            du: g.du,
            smem_bytes: g.smem_bytes,
            blocks: g.launch.blocks,
            occupancy: g.launch.occupancy,
            cost: g.total_cost,
        })
        .collect()
}

fn transfer_totals(plan: &FusionPlan) -> TransferTotals {
    let mut t = TransferTotals::default();
    for g in plan.groups().filter(|g| g.tile_local) {
        t.serial += g.transfers.serial_elems;
        t.fused_paper += g.transfers.fused_paper_elems;
        t.fused_exact += g.transfers.fused_exact_elems;
    }
    t
}

/// Inputs for the measured half of a report.
pub struct SimInput<'a> {
    pub video: &'a VideoData,
    pub truth: Option<&'a [Vec<[f64; 2]>]>,
    pub roi_size: u32,
}

fn tile_local_specs(pipeline: &Pipeline, plan: &FusionPlan) -> Vec<GroupSpec> {
    plan.group_specs()
        .into_iter()
        .filter(|g| pipeline.slice(g.interval).iter().all(|k| k.is_tile_local()))
        .collect()
}

fn measure(
    pipeline: &Pipeline,
    plan: &FusionPlan,
    option: FusionOption,
    video: &VideoData,
    reference: &VideoData,
    serial: TrafficCounters,
) -> Result<Measured, SimError> {
    let specs = tile_local_specs(pipeline, plan);
    let local_kernels: u64 = specs.iter().map(|g| g.interval.len() as u64).sum();
    if option == FusionOption::NoFusion {
        let analytic = 2 * local_kernels * pipeline.video.pixels();
        return Ok(Measured {
            counters: serial,
            analytic_gmem: analytic,
            gmem_matches_analytic: serial.gmem_total() == analytic,
            compare: compare_outputs(reference, reference, &[])?,
            outputs_identical: true,
            interior_identical: true,
        });
    }
    let run = run_tiled_parallel(pipeline, &specs, video)?;
    let analytic: u64 = specs
        .iter()
        .map(|g| transfer_fused_ragged(&pipeline.video, g.tile, &g.halo))
        .sum();
    let masks = match plan.halo_mode {
        HaloMode::PaperMax => paper_max_masks(pipeline, &specs),
        HaloMode::Cumulative => Vec::new(),
    };
    let compare = compare_outputs(reference, &run.output, &masks)?;
    Ok(Measured {
        counters: run.counters,
        analytic_gmem: analytic,
        gmem_matches_analytic: run.counters.gmem_total() == analytic,
        outputs_identical: compare.identical(),
        interior_identical: compare.interior_differing == 0,
        compare,
    })
}

/// Root-mean-square position error per marker over frames after 20.
pub fn tracking_rmse(trajectories: &[Trajectory], truth: &[Vec<[f64; 2]>]) -> Vec<Option<f64>> {
    trajectories
        .iter()
        .zip(truth)
        .map(|(tr, gt)| {
            let errs: Vec<f64> = tr
                .points
                .iter()
                .filter(|p| p.frame > 20)
                .map(|p| {
                    let [x, y] = gt[p.frame as usize];
                    (p.state[0] - x).powi(2) + (p.state[1] - y).powi(2)
                })
                .collect();
            (!errs.is_empty()).then(|| (errs.iter().sum::<f64>() / errs.len() as f64).sqrt())
        })
        .collect()
}

/// Tracking parameters of the pipeline's first Kalman kernel, if any.
pub fn kalman_params(pipeline: &Pipeline) -> Option<KalmanParams> {
    pipeline.kernels().iter().find_map(|k| match k.stencil_op {
        StencilOp::Kalman(p) => Some(p),
        _ => None,
    })
}

/// One ROI per marker, centred on its frame-0 position.
pub fn rois_from_truth(truth: &[Vec<[f64; 2]>], size: u32) -> Vec<Roi> {
    truth
        .iter()
        .map(|t| Roi::centered(t[0][0], t[0][1], size, size))
        .collect()
}

pub struct ReportOutput {
    pub report: RunReport,
    pub trajectories: Option<Vec<Trajectory>>,
}

/// Builds the report; with `sim`, every feasible option is also executed.
pub fn build_report(
    pipeline: &Pipeline,
    device: &Device,
    base: &PlanOptions,
    sim: Option<&SimInput>,
    timestamp: bool,
) -> Result<ReportOutput, SimError> {
    let sequential = match sim {
        Some(s) => Some(run_sequential(pipeline, s.video)?),
        None => None,
    };
    let mut options = Vec::new();
    let mut selected = None;
    for option in FusionOption::ALL {
        let opts = PlanOptions {
            forced: option.forced(pipeline),
            ..base.clone()
        };
        let result = plan(pipeline, device, &opts);
        let entry = match result {
            Ok(p) => {
                if option == FusionOption::Optimal {
                    selected = Some(partition_string(&p.partition()));
                }
                let measured = match (sim, &sequential) {
                    (Some(s), Some(seq)) => Some(measure(
                        pipeline,
                        &p,
                        option,
                        s.video,
                        seq.output(),
                        seq.counters,
                    )?),
                    _ => None,
                };
                OptionReport {
                    option,
                    partition: partition_string(&p.partition()),
                    feasible: true,
                    error: None,
                    total_cost: Some(p.total_cost),
                    groups: group_metrics(&p),
                    transfers: transfer_totals(&p),
                    buffers: Some(p.buffers.clone()),
                    measured,
                }
            }
            Err(e) => OptionReport {
                option,
                partition: opts
                    .forced
                    .as_deref()
                    .map(partition_string)
                    .unwrap_or_default(),
                feasible: false,
                error: Some(e.to_string()),
                total_cost: None,
                groups: Vec::new(),
                transfers: TransferTotals::default(),
                buffers: None,
                measured: None,
            },
        };
        options.push(entry);
    }

    let gmem = |o: FusionOption| {
        options
            .iter()
            .find(|r| r.option == o)
            .and_then(|r| r.measured.as_ref())
            .map(|m| m.counters.gmem_total())
    };
    let measured_reduction_pct = match (gmem(FusionOption::NoFusion), gmem(FusionOption::Optimal)) {
        (Some(s), Some(f)) if s > 0 => Some(100.0 * (1.0 - f as f64 / s as f64)),
        _ => None,
    };

    let mut trajectories = None;
    let mut tracking = None;
    if let (Some(s), Some(seq), Some(params)) = (sim, &sequential, kalman_params(pipeline)) {
        if let Some(truth) = s.truth {
            let rois = rois_from_truth(truth, s.roi_size);
            if !rois.is_empty() {
                let tr = track_features(seq.output(), &rois, &params)?;
                tracking = Some(TrackingSummary {
                    markers: tr.len(),
                    rmse_after_frame_20: tracking_rmse(&tr, truth),
                });
                trajectories = Some(tr);
            }
        }
    }

    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        generated_unix_secs: timestamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        }),
        device: device.name.clone(),
        video: pipeline.video,
        kernels: pipeline.kernels().iter().map(|k| k.name.clone()).collect(),
        halo_mode: base.halo_mode,
        transfer_variant: base.transfer_variant,
        buffer_policy: BUFFER_POLICY.to_string(),
        selected_partition: selected,
        options,
        measured_reduction_pct,
        tracking,
    };
    Ok(ReportOutput {
        report,
        trajectories,
    })
}

pub fn render_text(r: &RunReport) -> String {
    let mut s = String::new();
    let v = &r.video;
    let _ = writeln!(s, "device: {}", r.device);
    let _ = writeln!(
        s,
        "video: {}x{}x{} @ {} fps, {} channel(s)",
        v.width, v.height, v.frames, v.fps, v.channels
    );
    let _ = writeln!(s, "kernels: {}", r.kernels.join(", "));
    let _ = writeln!(s, "halo mode: {}", r.halo_mode.as_str());
    let _ = writeln!(s, "transfer variant: {}", r.transfer_variant.as_str());
    let _ = writeln!(s, "buffer policy: {}", r.buffer_policy);
    if let Some(p) = &r.selected_partition {
        let _ = writeln!(s, "selected partition: {p}");
    }
    for o in &r.options {
        let _ = writeln!(s);
        let _ = writeln!(s, "[{}] partition {}", o.option.label(), o.partition);
        if let Some(e) = &o.error {
            let _ = writeln!(s, "  infeasible: {e}");
            continue;
        }
        let _ = writeln!(
            s,
            "  predicted cost: {:.6e}",
            o.total_cost.unwrap_or(f64::NAN)
        );
        if let Some(b) = &o.buffers {
            let _ = writeln!(s, "  GMEM buffers: {} ({} bytes)", b.count, b.bytes);
        }
        let t = &o.transfers;
        let _ = writeln!(
            s,
            "  transfers (tile-local groups): serial {} fused-paper {} fused-exact {}",
            t.serial, t.fused_paper, t.fused_exact
        );
        for g in &o.groups {
            let _ = writeln!(
                s,
                "  group {}: tile {}x{}x{} halo {:?} DU {:.4} smem {} B blocks {} occupancy {:.3}",
                g.interval,
                g.tile.x,
                g.tile.y,
                g.tile.t,
                g.halo_totals,
                g.du,
                g.smem_bytes,
                g.blocks,
                g.occupancy
            );
        }
        if let Some(m) = &o.measured {
            let _ = writeln!(
                s,
                "  measured GMEM: reads {} writes {} total {} (analytic {}, match: {})",
                m.counters.gmem_reads,
                m.counters.gmem_writes,
                m.counters.gmem_total(),
                m.analytic_gmem,
                m.gmem_matches_analytic
            );
            let _ = writeln!(s, "  outputs identical: {}", m.outputs_identical);
            let _ = writeln!(
                s,
                "  interior identical: {} (boundary differing {}, interior differing {})",
                m.interior_identical, m.compare.boundary_differing, m.compare.interior_differing
            );
        }
    }
    if let Some(p) = r.measured_reduction_pct {
        let _ = writeln!(s);
        let _ = writeln!(s, "measured GMEM reduction, optimal vs no fusion: {p:.2}%");
    }
    if let Some(t) = &r.tracking {
        for (i, e) in t.rmse_after_frame_20.iter().enumerate() {
            let _ = match e {
                Some(e) => writeln!(s, "marker {i}: position RMSE after frame 20 = {e:.3} px"),
                None => writeln!(s, "marker {i}: no frames after 20"),
            };
        }
    }
    s
}

/// One CSV row per option.
pub fn render_csv(r: &RunReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let _ = w.write_record([
        "option",
        "partition",
        "feasible",
        "total_cost",
        "buffers",
        "transfer_serial",
        "transfer_fused_paper",
        "transfer_fused_exact",
        "measured_gmem",
        "outputs_identical",
        "boundary_differing",
    ]);
    for o in &r.options {
        let m = o.measured.as_ref();
        let _ = w.write_record([
            o.option.label().to_string(),
            o.partition.clone(),
            o.feasible.to_string(),
            o.total_cost.map(|c| c.to_string()).unwrap_or_default(),
            o.buffers
                .as_ref()
                .map(|b| b.count.to_string())
                .unwrap_or_default(),
            o.transfers.serial.to_string(),
            o.transfers.fused_paper.to_string(),
            o.transfers.fused_exact.to_string(),
            m.map(|m| m.counters.gmem_total().to_string())
                .unwrap_or_default(),
            m.map(|m| m.outputs_identical.to_string())
                .unwrap_or_default(),
            m.map(|m| m.compare.boundary_differing.to_string())
                .unwrap_or_default(),
        ]);
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
}

/// Default scene for `--synth WxHxF`: two markers bouncing off the frame edges.
/// On 64x64 their 15-pixel tracking windows never overlap in 200 frames.
pub fn default_scene(
    dims: fuseplan_core::VideoDims,
    seed: u64,
) -> Result<SyntheticScene, SimError> {
    let (w, h) = (dims.width as f64, dims.height as f64);
    let r = (w.min(h) / 16.0).clamp(1.5, 4.0);
    synth_video(&SyntheticSceneSpec {
        dims,
        markers: vec![
            Marker {
                start: [w * 0.1, h * 0.1],
                velocity: [1.0, 0.0],
                radius: r,
                intensity: 255.0,
            },
            Marker {
                start: [w * 0.25, h * 0.35],
                velocity: [0.5, 0.5],
                radius: r,
                intensity: 255.0,
            },
        ],
        noise_sigma: 8.0 / 255.0,
        seed,
        boundary: Boundary::Reflect,
    })
}
