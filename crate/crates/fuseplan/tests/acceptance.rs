//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p fuseplan --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use fuseplan::calibrate::{synthetic_measurements, write_measurements};
use fuseplan::parallel::run_tiled_parallel;
use fuseplan::profiles::{load_device, load_pipeline};
use fuseplan::report::{
    default_scene, kalman_params, rois_from_truth, tracking_rmse, FusionOption,
};
use fuseplan_core::analysis::{classify_dependency, fusible_segments};
use fuseplan_core::codegen::{find_out_of_box_access, generate_fused_source};
use fuseplan_core::planner::candidates::enumerate_candidates;
use fuseplan_core::planner::solve::{solve_branch_and_bound, solve_dp, CostTable};
use fuseplan_core::planner::{plan, PlanOptions};
use fuseplan_core::sim::{
    compare_outputs, paper_max_masks, run_sequential, run_tiled, track_features, BoxOrder,
    GroupSpec, VideoData,
};
use fuseplan_core::tiling::{
    block_count, continuous_seed, fused_halo, gmem_buffers, input_box, optimal_tile,
    transfer_fused, transfer_serial, LaunchLimits, StagingLayout, BUFFER_POLICY,
};
use fuseplan_core::{
    CostParams, Device, Halo, HaloMode, KernelDesc, KernelInterval, Pipeline, StencilOp, TileShape,
    TransferVariant, VideoDims,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------- 1

/// Every contiguous partition by cut mask; costs summed left to right.
fn brute_force(table: &CostTable) -> (f64, Vec<usize>) {
    let n = table.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut ends: Vec<usize> = (1..n).filter(|&i| mask & (1 << (i - 1)) != 0).collect();
        ends.push(n);
        let mut cost = 0.0;
        let mut start = 0;
        for &e in &ends {
            cost += table.get(start, e - 1);
            start = e;
        }
        let better = match &best {
            None => true,
            Some((c, b)) => cost < *c || (cost == *c && ends < *b),
        };
        if better {
            best = Some((cost, ends));
        }
    }
    best.expect("n >= 1")
}

fn partition_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut infeasible = 0;
    for case in 0..200 {
        let n = rng.random_range(1..=12usize);
        let integral = case % 2 == 0;
        let raw: Vec<f64> = (0..n * n)
            .map(|_| {
                if rng.random_bool(0.1) {
                    f64::INFINITY
                } else if integral {
                    rng.random_range(1..=40) as f64
                } else {
                    rng.random_range(0.5..1000.0)
                }
            })
            .collect();
        let table = CostTable::from_fn(n, |a, b| {
            if a == b {
                raw[a * n + b].min(1e6)
            } else {
                raw[a * n + b]
            }
        });
        infeasible += raw.iter().filter(|c| c.is_infinite()).count();
        let (bf_cost, bf_ends) = brute_force(&table);
        let dp = solve_dp(&table).ok_or("DP found no partition")?;
        let bb = solve_branch_and_bound(&table).ok_or("branch-and-bound found no partition")?;
        ensure(dp.cost == bf_cost && bb.cost == bf_cost, || {
            format!(
                "case {case} (n={n}): dp {} bb {} brute {}",
                dp.cost, bb.cost, bf_cost
            )
        })?;
        ensure(dp.ends == bf_ends && bb.ends == bf_ends, || {
            format!(
                "case {case}: tie-break differs: dp {:?} bb {:?} brute {:?}",
                dp.ends, bb.ends, bf_ends
            )
        })?;
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "200 segments, n <= 12, {infeasible} infeasible candidates, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 2

fn candidate_count() -> Outcome {
    let device = Device::k20_like();
    for n in 1..=50u32 {
        let video = VideoDims::new(32, 32, 4, 30, 1).unwrap();
        let kernels: Vec<KernelDesc> = (1..=n)
            .map(|id| {
                let op = if id % 2 == 0 {
                    StencilOp::Gradient
                } else {
                    StencilOp::Identity
                };
                KernelDesc::from_op(id, format!("k{id}"), op, 4, 4)
            })
            .collect();
        let p = Pipeline::new(video, kernels).map_err(|e| e.to_string())?;
        let segs = fusible_segments(&p);
        ensure(segs.len() == 1, || {
            format!("n={n}: {} segments", segs.len())
        })?;
        let got =
            enumerate_candidates(&segs[0], &device, &video, HaloMode::Cumulative).len() as u32;
        ensure(got == n * (n + 1) / 2, || {
            format!("n={n}: {got} candidates")
        })?;
    }
    Ok("n(n+1)/2 candidates for n = 1..50".into())
}

// ---------------------------------------------------------------- 3

fn tile_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_seed = 0.0f64;
    for case in 0..50 {
        let d = rng.random_range(0..=8u32);
        let dt = rng.random_range(0..=4u32);
        let budget = rng.random_range(256..=65536u64);
        let halo = Halo::from_totals(d, d, dt);
        // exhaustive grid over square tiles with x²t <= budget
        let (mut bn, mut bd) = (0u128, 1u128);
        let mut x = 1u64;
        while x * x <= budget {
            for t in 1..=budget / (x * x) {
                let num = (x * x * t) as u128;
                let den = ((x + d as u64) * (x + d as u64) * (t + dt as u64)) as u128;
                if num * bd > bn * den {
                    (bn, bd) = (num, den);
                }
            }
            x += 1;
        }
        let r = optimal_tile(&halo, budget, &LaunchLimits::default()).map_err(|e| e.to_string())?;
        let tile = r.tile;
        let num = tile.volume() as u128;
        let den = input_box(tile, &halo).volume() as u128;
        ensure(tile.volume() <= budget && num * bd == bn * den, || {
            format!("case {case}: halo {d},{d},{dt} budget {budget}: got {tile:?} ({num}/{den}), grid {bn}/{bd}")
        })?;
        if d > 0 && dt > 0 {
            let s = continuous_seed(&halo, budget);
            let lhs = s.x.powi(3) * dt as f64;
            let rhs = budget as f64 * d as f64;
            let rel = (lhs - rhs).abs() / rhs;
            worst_seed = worst_seed.max(rel);
            ensure(rel <= 1e-9, || {
                format!("case {case}: seed x³δt {lhs} vs budget·δx {rhs}")
            })?;
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "50 cases match the grid optimum, seed residual {worst_seed:.1e}, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

// ------------------------------------------------------- random instances

fn random_video(rng: &mut ChaCha8Rng, dims: VideoDims) -> VideoData {
    let data: Vec<f32> = (0..dims.elements())
        .map(|_| rng.random_range(0..=255u32) as f32)
        .collect();
    VideoData::from_vec(dims, data).unwrap()
}

fn random_op(rng: &mut ChaCha8Rng, temporal: bool) -> StencilOp {
    match rng.random_range(0..7) {
        0 => StencilOp::Identity,
        1 => StencilOp::IirTemporal {
            alpha: [0.25, 0.5, 0.75][rng.random_range(0..3)],
        },
        2 => StencilOp::Gaussian {
            radius: rng.random_range(1..=2),
            sigma: 1.0,
        },
        3 => StencilOp::Gradient,
        4 => StencilOp::Threshold {
            level: rng.random_range(20..200) as f64,
        },
        _ => StencilOp::BoxMean {
            rx: rng.random_range(0..=2),
            ry: rng.random_range(0..=2),
            rt_lo: if temporal { rng.random_range(0..=1) } else { 0 },
            rt_hi: if temporal { rng.random_range(0..=1) } else { 0 },
        },
    }
}

/// Tile-local chain of 1..=max_len kernels over a `channels`-channel video.
fn random_pipeline(rng: &mut ChaCha8Rng, dims: VideoDims, max_len: u32) -> Pipeline {
    let n = rng.random_range(1..=max_len);
    let temporal = dims.frames > 1;
    let ops: Vec<StencilOp> = (0..n)
        .map(|i| {
            if i == 0 && dims.channels == 4 {
                StencilOp::Rgba2Gray
            } else {
                random_op(rng, temporal)
            }
        })
        .collect();
    let kernels = ops
        .into_iter()
        .enumerate()
        .map(|(i, op)| KernelDesc::from_op(i as u32 + 1, op.name(), op, 4, 4))
        .collect();
    Pipeline::new(dims, kernels).unwrap()
}

fn random_partition(rng: &mut ChaCha8Rng, n: u32) -> Vec<KernelInterval> {
    let mut out = Vec::new();
    let mut first = 1;
    for k in 1..=n {
        if k == n || rng.random_bool(0.4) {
            out.push(KernelInterval::new(first, k));
            first = k + 1;
        }
    }
    out
}

fn random_dims(rng: &mut ChaCha8Rng) -> VideoDims {
    let channels = if rng.random_bool(0.5) { 4 } else { 1 };
    VideoDims::new(
        rng.random_range(4..=64),
        rng.random_range(4..=64),
        rng.random_range(1..=32),
        30,
        channels,
    )
    .unwrap()
}

fn divisor(rng: &mut ChaCha8Rng, n: u32) -> u32 {
    let ds: Vec<u32> = (1..=n).filter(|d| n.is_multiple_of(*d)).collect();
    ds[rng.random_range(0..ds.len())]
}

// ---------------------------------------------------------------- 4

fn traffic_model() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sizes = [8u32, 12, 16, 24, 32, 48, 64];
    let mut groups_checked = 0;
    for case in 0..20 {
        let dims = VideoDims::new(
            sizes[rng.random_range(0..sizes.len())],
            sizes[rng.random_range(0..sizes.len())],
            [4u32, 8, 16, 32][rng.random_range(0..4)],
            30,
            if case % 2 == 0 { 4 } else { 1 },
        )
        .unwrap();
        let p = random_pipeline(&mut rng, dims, 5);
        let n = p.len() as u64;
        let v = random_video(&mut rng, dims);

        let seq_tile = TileShape::new(
            divisor(&mut rng, dims.width),
            divisor(&mut rng, dims.height),
            divisor(&mut rng, dims.frames),
        );
        let seq = run_sequential(&p, &v).map_err(|e| e.to_string())?;
        let serial = transfer_serial(n, block_count(&dims, seq_tile), seq_tile);
        ensure(seq.counters.gmem_total() == serial, || {
            format!(
                "case {case}: sequential GMEM {} vs transfer_serial {serial}",
                seq.counters.gmem_total()
            )
        })?;

        let groups: Vec<GroupSpec> = random_partition(&mut rng, p.len() as u32)
            .into_iter()
            .map(|iv| GroupSpec {
                interval: iv,
                tile: TileShape::new(
                    divisor(&mut rng, dims.width),
                    divisor(&mut rng, dims.height),
                    divisor(&mut rng, dims.frames),
                ),
                halo: fused_halo(p.slice(iv), HaloMode::Cumulative),
            })
            .collect();
        let run = run_tiled(&p, &groups, &v, BoxOrder::Natural).map_err(|e| e.to_string())?;
        let mut total = 0;
        for (g, c) in groups.iter().zip(&run.per_group) {
            let expect = transfer_fused(
                block_count(&dims, g.tile),
                g.tile,
                &g.halo,
                TransferVariant::Exact,
            );
            ensure(c.gmem_total() == expect, || {
                format!(
                    "case {case}: group {} measured {} vs transfer_fused {expect}",
                    g.interval,
                    c.gmem_total()
                )
            })?;
            total += expect;
            groups_checked += 1;
        }
        ensure(run.counters.gmem_total() == total, || {
            format!("case {case}: totals differ")
        })?;
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "20 pipelines, {groups_checked} fused groups, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 5

fn traffic_reduction() -> Outcome {
    let (bundled, _) = load_pipeline("tableII_pipeline").map_err(|e| e.to_string())?;
    let device = Device::k20_like();
    let iv = KernelInterval::new(1, 5);
    let members = bundled.slice(iv);
    let halo = fused_halo(members, HaloMode::Cumulative);
    let staging = StagingLayout::for_group(members);
    let budget = staging.budget_elems(device.smem_bytes);
    let x = 32u32;
    let t = ((budget / (x as u64 * x as u64)) as u32).max(1);
    let tile = TileShape::new(x, x, t);

    let full = bundled.video;
    let blocks = block_count(&full, tile);
    let analytic = transfer_serial(5, blocks, tile) as f64
        / transfer_fused(blocks, tile, &halo, TransferVariant::Exact) as f64;

    let dims = VideoDims::new(64, 64, 2 * t, full.fps, 4).unwrap();
    let p = bundled.retarget(dims).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v = random_video(&mut rng, dims);
    let seq = run_sequential(&p, &v).map_err(|e| e.to_string())?;
    let spec = GroupSpec {
        interval: iv,
        tile,
        halo,
    };
    let fused = run_tiled(&p, &[spec], &v, BoxOrder::Natural).map_err(|e| e.to_string())?;
    // sequential counters cover the tile-local K1..K5
    let measured = seq.counters.gmem_total() as f64 / fused.counters.gmem_total() as f64;
    ensure(analytic >= 2.0 && measured >= 2.0, || {
        format!("ratio analytic {analytic:.3}, measured {measured:.3}")
    })?;
    Ok(format!(
        "tile 32x32x{t}, halo {}x{}x{}: serial/fused analytic {analytic:.3}, measured {measured:.3}",
        halo.dx(),
        halo.dy(),
        halo.dt()
    ))
}

// ---------------------------------------------------------------- 6

/// No temporal recurrence after a kernel with a temporal halo; only then does
/// the PaperMax error stay inside the eroded band.
fn paper_max_checkable(p: &Pipeline) -> bool {
    let mut temporal = false;
    for k in p.kernels() {
        if temporal && k.stencil_op.temporal_recurrence() {
            return false;
        }
        temporal |= k.halo.dt() > 0;
    }
    true
}

fn fused_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut pm_checked, mut pm_boundary) = (0, 0);
    for case in 0..30 {
        let dims = random_dims(&mut rng);
        let p = random_pipeline(&mut rng, dims, 5);
        let v = random_video(&mut rng, dims);
        let partition = random_partition(&mut rng, p.len() as u32);
        let tiles: Vec<TileShape> = partition
            .iter()
            .map(|_| {
                TileShape::new(
                    rng.random_range(1..=dims.width),
                    rng.random_range(1..=dims.height),
                    rng.random_range(1..=dims.frames),
                )
            })
            .collect();
        let specs = |mode| -> Vec<GroupSpec> {
            partition
                .iter()
                .zip(&tiles)
                .map(|(&iv, &tile)| GroupSpec {
                    interval: iv,
                    tile,
                    halo: fused_halo(p.slice(iv), mode),
                })
                .collect()
        };
        let seq = run_sequential(&p, &v).map_err(|e| e.to_string())?;
        let order = BoxOrder::Shuffled(case);
        let cum =
            run_tiled(&p, &specs(HaloMode::Cumulative), &v, order).map_err(|e| e.to_string())?;
        let bits = |a: &VideoData| a.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&cum.output) == bits(seq.output()), || {
            format!(
                "case {case}: cumulative tiling differs from sequential ({} kernels)",
                p.len()
            )
        })?;
        if paper_max_checkable(&p) {
            let pm_specs = specs(HaloMode::PaperMax);
            let pm = run_tiled(&p, &pm_specs, &v, order).map_err(|e| e.to_string())?;
            let r = compare_outputs(&pm.output, seq.output(), &paper_max_masks(&p, &pm_specs))
                .map_err(|e| e.to_string())?;
            ensure(r.interior_differing == 0, || {
                format!(
                    "case {case}: PaperMax interior differs at {} elements",
                    r.interior_differing
                )
            })?;
            pm_checked += 1;
            pm_boundary += (r.boundary_differing > 0) as u32;
        }
    }
    Ok(format!(
        "30 instances bit-identical; PaperMax interior clean on {pm_checked} ({pm_boundary} with boundary divergence)"
    ))
}

// ---------------------------------------------------------------- 7

fn dependency_table() -> Outcome {
    let (p, _) = load_pipeline("tableII_pipeline").map_err(|e| e.to_string())?;
    let deps: Vec<String> = p
        .kernels()
        .iter()
        .map(|k| classify_dependency(k).to_string())
        .collect();
    let want = ["TT", "TT", "TMT", "TMT", "TT", "KK"];
    ensure(deps == want, || format!("dependencies {deps:?}"))?;
    let segs: Vec<String> = fusible_segments(&p)
        .iter()
        .map(|s| s.interval.to_string())
        .collect();
    ensure(segs == ["1-5", "6"], || format!("segments {segs:?}"))?;
    Ok(format!("{} | segments {}", deps.join(" "), segs.join(", ")))
}

// ---------------------------------------------------------------- 8

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

fn golden_group(second: StencilOp) -> Vec<KernelDesc> {
    vec![
        KernelDesc::from_op(1, "rgba2gray", StencilOp::Rgba2Gray, 4, 4),
        KernelDesc::from_op(2, second.name(), second, 4, 4),
    ]
}

fn golden_video() -> VideoDims {
    VideoDims::new(64, 64, 32, 30, 4).unwrap()
}

fn ordered(text: &str, markers: &[&str]) -> bool {
    let mut at = 0;
    for m in markers {
        match text[at..].find(m) {
            Some(i) => at += i + m.len(),
            None => return false,
        }
    }
    true
}

fn codegen_structure() -> Outcome {
    let device = Device::k20_like();
    let video = golden_video();
    let cases = [
        (
            "rgba2gray_threshold",
            StencilOp::Threshold { level: 128.0 },
            vec![0usize],
        ),
        (
            "rgba2gray_gaussian",
            StencilOp::Gaussian {
                radius: 2,
                sigma: 1.0,
            },
            vec![0, 1],
        ),
    ];
    for (name, op, syncs) in &cases {
        let group = golden_group(op.clone());
        let halo = fused_halo(&group, HaloMode::Cumulative);
        let k = generate_fused_source(
            name,
            &group,
            TileShape::new(16, 16, 1),
            halo,
            &device,
            &video,
        )
        .map_err(|e| e.to_string())?;
        let golden = std::fs::read_to_string(golden_dir().join(format!("{name}.genkernel")))
            .map_err(|e| format!("{name}: golden snapshot: {e}"))?;
        ensure(k.source_text == golden, || {
            format!("{name}: output differs from golden snapshot")
        })?;
        ensure(&k.sync_points == syncs, || {
            format!("{name}: sync points {:?}", k.sync_points)
        })?;
        let barriers = k.source_text.matches("__syncthreads();").count();
        ensure(barriers == syncs.len(), || {
            format!("{name}: {barriers} barriers in text")
        })?;
        let second = format!("// K2 {}", op.name());
        let mut markers = vec![
            "// copy the input box into shared memory",
            "__syncthreads();",
            "// K1 rgba2gray",
        ];
        if syncs.len() > 1 {
            markers.push("__syncthreads();");
        }
        markers.extend([second.as_str(), "// store the output box"]);
        ensure(ordered(&k.source_text, &markers), || {
            format!("{name}: staging/barrier/body/write-back order")
        })?;
    }

    let (bundled, _) = load_pipeline("tableII_pipeline").map_err(|e| e.to_string())?;
    let groups: Vec<(String, Vec<KernelDesc>)> = vec![
        (
            "threshold".into(),
            golden_group(StencilOp::Threshold { level: 128.0 }),
        ),
        (
            "gaussian".into(),
            golden_group(StencilOp::Gaussian {
                radius: 2,
                sigma: 1.0,
            }),
        ),
        (
            "bundled 1-5".into(),
            bundled.slice(KernelInterval::new(1, 5)).to_vec(),
        ),
    ];
    let mut checked = 0u32;
    for (label, group) in &groups {
        for mode in [HaloMode::Cumulative, HaloMode::PaperMax] {
            let halo = fused_halo(group, mode);
            for t in 1..=4 {
                for y in 1..=16 {
                    for x in 1..=16 {
                        let k = generate_fused_source(
                            "g",
                            group,
                            TileShape::new(x, y, t),
                            halo,
                            &device,
                            &video,
                        )
                        .map_err(|e| format!("{label} {x}x{y}x{t}: {e}"))?;
                        if let Some((kid, at)) = find_out_of_box_access(&k) {
                            return Err(format!(
                                "{label} {} tile {x}x{y}x{t}: K{kid} reads staged offset {at:?} outside the box",
                                mode.as_str()
                            ));
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(format!(
        "2 golden snapshots match; tap containment on {checked} tiles"
    ))
}

// ---------------------------------------------------------------- 9

fn buffer_accounting() -> Outcome {
    let (p, _) = load_pipeline("tableII_pipeline").map_err(|e| e.to_string())?;
    let device = Device::k20_like();
    // counts the completed partition, K6 included
    let count = |o: FusionOption| {
        let opts = PlanOptions {
            forced: o.forced(&p),
            ..PlanOptions::default()
        };
        let fp = plan(&p, &device, &opts).expect("bundled options are feasible");
        assert_eq!(fp.buffers, gmem_buffers(&p, &fp.partition()));
        fp.buffers.count
    };
    let (none, two, full) = (
        count(FusionOption::NoFusion),
        count(FusionOption::TwoFusion),
        count(FusionOption::FullFusion),
    );
    ensure((none, two, full) == (7, 4, 3), || {
        format!("buffers {none}, {two}, {full}")
    })?;
    Ok(format!(
        "No {none} > Two {two} > Full {full}; policy: {BUFFER_POLICY}"
    ))
}

// ---------------------------------------------------------------- 10

fn tracking() -> Outcome {
    let start = Instant::now();
    let (bundled, _) = load_pipeline("tableII_pipeline").map_err(|e| e.to_string())?;
    let device = load_device("k20_like").map_err(|e| e.to_string())?;
    let dims = VideoDims::new(64, 64, 200, bundled.video.fps, 4).unwrap();
    let p = bundled.retarget(dims).map_err(|e| e.to_string())?;
    let scene = default_scene(dims, 10).map_err(|e| e.to_string())?;
    let fp = plan(&p, &device, &PlanOptions::default()).map_err(|e| e.to_string())?;
    let run = run_tiled_parallel(&p, &fp.group_specs(), &scene.video).map_err(|e| e.to_string())?;
    let params = kalman_params(&p).ok_or("no Kalman kernel")?;
    let tracks = track_features(&run.output, &rois_from_truth(&scene.truth, 15), &params)
        .map_err(|e| e.to_string())?;
    let rmse = tracking_rmse(&tracks, &scene.truth);
    let rmse: Vec<f64> = rmse
        .into_iter()
        .map(|r| r.unwrap_or(f64::INFINITY))
        .collect();
    ensure(rmse.len() == 2 && rmse.iter().all(|&r| r <= 1.5), || {
        format!("RMSE {rmse:?} px")
    })?;
    within(start.elapsed(), 20.0)?;
    Ok(format!(
        "RMSE after frame 20: {:.3} px, {:.3} px; {:.2} s",
        rmse[0],
        rmse[1],
        start.elapsed().as_secs_f64()
    ))
}

// ---------------------------------------------------------------- 11

fn calibration() -> Outcome {
    let truth = CostParams::from_array([97.0, 1.3, 0.7, 12_500.0]);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("timings.csv");
    let out = dir.path().join("device.json");
    std::fs::write(&csv, write_measurements(&synthetic_measurements(&truth)))
        .map_err(|e| e.to_string())?;
    let res = Command::new(env!("CARGO_BIN_EXE_fuseplan"))
        .args(["--format", "json", "calibrate", "--measurements"])
        .arg(&csv)
        .arg("--output")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(res.status.success(), || {
        format!(
            "exit {:?}: {}",
            res.status.code(),
            String::from_utf8_lossy(&res.stderr)
        )
    })?;
    let doc: serde_json::Value = serde_json::from_slice(&res.stdout).map_err(|e| e.to_string())?;
    let got: CostParams =
        serde_json::from_value(doc["calibration"]["params"].clone()).map_err(|e| e.to_string())?;
    let written =
        fuseplan::config::parse_device(&std::fs::read_to_string(&out).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (g, w) in got.as_array().iter().zip(truth.as_array()) {
        worst = worst.max((g - w).abs() / w.abs());
    }
    ensure(worst <= 1e-9, || format!("relative error {worst:.2e}"))?;
    ensure(written.cost == got, || {
        "written device file has different params".into()
    })?;
    Ok(format!(
        "4 coefficients recovered, worst relative error {worst:.1e}"
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("partition optimality", partition_optimality),
        ("candidate count", candidate_count),
        ("tile optimality", tile_optimality),
        ("traffic model", traffic_model),
        ("traffic reduction", traffic_reduction),
        ("fused correctness", fused_correctness),
        ("dependency table", dependency_table),
        ("codegen structure", codegen_structure),
        ("GMEM buffers", buffer_accounting),
        ("tracking", tracking),
        ("calibration", calibration),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
