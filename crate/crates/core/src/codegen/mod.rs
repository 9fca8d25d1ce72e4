//! Fused-kernel source emission in a C-like GPU dialect.
//!
//! Layout of every emitted kernel: per-thread index computation, loops
//! staging the input box into shared memory, a barrier, each member body in
//! pipeline order (a barrier before every member that reads neighbors), and
//! loops storing the output box. Point members update the staged box in
//! place; members with a halo read one staged array and write the other.

pub mod access;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::classify_dependency;
use crate::device::Device;
use crate::halo::{Halo, HaloMode};
use crate::kernel::{DependencyType, KernelDesc, StencilOp};
use crate::planner::cost::remaining_halos;
use crate::sim::stencil::Prepared;
use crate::tiling::{
    fused_halo, input_box, launch_config, LaunchConfig, StagingLayout, TileShape, TilingError,
};
use crate::video::VideoDims;

pub use access::{parse_access, rewrite_access, staged_index, GlobalAccess};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodegenError {
    #[error("fused group is empty")]
    EmptyGroup,
    #[error("non-canonical access {0:?}")]
    NonCanonicalAccess(String),
    #[error("kernel {kernel}: stencil {op} has no fused-code template")]
    UnsupportedOp { kernel: u32, op: &'static str },
    #[error("staging needs {needed} bytes of shared memory, device has {available}")]
    SmemOverflow { needed: u64, available: u64 },
    #[error(transparent)]
    Launch(#[from] TilingError),
}

/// What one member body does, in staged coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberCode {
    pub kernel_id: u32,
    pub name: String,
    pub dep_type: DependencyType,
    pub barrier_before: bool,
    pub source: String,
    pub dest: String,
    /// Output-relative region computed, `hi` exclusive.
    pub region_lo: [i32; 3],
    pub region_hi: [i32; 3],
    /// First loop offset per axis; a multiple of the thread count, so every
    /// member assigns an element to the same thread.
    pub loop_start: [i32; 3],
    /// Staged offsets (halo shift plus tap) read per output element.
    pub reads: Vec<[i32; 3]>,
    pub write: [i32; 3],
    /// Reads are clamped into the staged box (staged halo below the summed one).
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmittedKernel {
    pub name: String,
    pub source_text: String,
    /// Barriers, as the number of member bodies preceding each (0: after staging).
    pub sync_points: Vec<usize>,
    pub staged_extent: [u32; 3],
    pub staged_buffer_elems: u64,
    pub buffers: u32,
    pub smem_bytes: u64,
    pub tile: TileShape,
    pub halo: Halo,
    pub launch: LaunchConfig,
    pub members: Vec<MemberCode>,
}

struct Emitter {
    out: String,
    depth: usize,
}

impl Emitter {
    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.out.push_str("    ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn blank(&mut self) {
        self.out.push('\n');
    }
}

fn ident(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn float(v: f64) -> String {
    let s = format!("{}", v as f32);
    if s.contains('.') || s.contains('e') {
        format!("{s}f")
    } else {
        format!("{s}.0f")
    }
}

/// Canonical global-form access with displacement `d`.
fn global(d: [i32; 3]) -> String {
    let term = |v: &str, l: &str, x: i32| match x {
        0 => format!("{v}+{l}"),
        x if x > 0 => format!("{v}+{l}+{x}"),
        x => format!("{v}+{l}-{}", -x),
    };
    format!(
        "Iin[{}, {}, {}]",
        term("i", "ii", d[0]),
        term("j", "jj", d[1]),
        term("k", "tt", d[2])
    )
}

struct Ctx<'a> {
    src: &'a str,
    dst: &'a str,
    shift: [i32; 3],
    clamped: bool,
    reads: Vec<[i32; 3]>,
}

impl Ctx<'_> {
    fn read(&mut self, d: [i32; 3]) -> Result<String, CodegenError> {
        let off = [
            d[0] + self.shift[0],
            d[1] + self.shift[1],
            d[2] + self.shift[2],
        ];
        self.reads.push(off);
        let rewritten = rewrite_access(&global(d), self.src, self.shift)?;
        if !self.clamped {
            return Ok(rewritten);
        }
        let a = parse_access(
            &rewritten
                .replace("thx+ii", "i+ii")
                .replace("thy+jj", "j+jj")
                .replace("tht+tt", "k+tt"),
        )?;
        let terms: Vec<String> = a
            .displacement
            .iter()
            .enumerate()
            .map(|(axis, &o)| {
                format!(
                    "{}({})",
                    ["CLX", "CLY", "CLT"][axis],
                    access::staged_term(axis, o)
                )
            })
            .collect();
        Ok(format!("{}[{}]", self.src, terms.join(", ")))
    }

    fn write(&self) -> Result<String, CodegenError> {
        let target = global([0; 3]).replace("Iin", "Iout");
        rewrite_access(&target, self.dst, self.shift)
    }
}

fn aligned_start(lo: i32, step: i32) -> i32 {
    if lo >= 0 {
        0
    } else {
        -((-lo + step - 1) / step) * step
    }
}

/// Emits the fused kernel for `group` with output `tile` and staged `halo`.
pub fn generate_fused_source(
    name: &str,
    group: &[KernelDesc],
    tile: TileShape,
    halo: Halo,
    device: &Device,
    video: &VideoDims,
) -> Result<EmittedKernel, CodegenError> {
    if group.is_empty() {
        return Err(CodegenError::EmptyGroup);
    }
    for k in group {
        if let StencilOp::Kalman(_) = k.stencil_op {
            return Err(CodegenError::UnsupportedOp {
                kernel: k.id,
                op: k.stencil_op.name(),
            });
        }
    }
    let staging = StagingLayout::for_group(group);
    let ibox = input_box(tile, &halo);
    let smem_bytes = staging.smem_bytes(ibox);
    if smem_bytes > device.smem_bytes {
        return Err(CodegenError::SmemOverflow {
            needed: smem_bytes,
            available: device.smem_bytes,
        });
    }
    let launch = launch_config(device, video, tile, smem_bytes)?;
    let [thx_n, thy_n, _] = launch.threads;
    let steps = [thx_n as i32, thy_n as i32, 1];
    let clamped = !halo.covers(&fused_halo(group, HaloMode::Cumulative));
    let shift = [halo.x_lo as i32, halo.y_lo as i32, halo.t_lo as i32];
    let ext = ibox.dims();
    let recurrent = group.iter().any(|k| k.stencil_op.temporal_recurrence());
    let fname = ident(name);

    let mut e = Emitter {
        out: String::new(),
        depth: 0,
    };
    let names: Vec<String> = group
        .iter()
        .map(|k| format!("K{} {}", k.id, k.name))
        .collect();
    e.line(&format!("// fused kernel {fname}: {}", names.join(", ")));
    e.line(&format!(
        "// output box {}x{}x{}, staged box {}x{}x{}, halo x {}+{} y {}+{} t {}+{}",
        tile.x,
        tile.y,
        tile.t,
        ext[0],
        ext[1],
        ext[2],
        halo.x_lo,
        halo.x_hi,
        halo.y_lo,
        halo.y_hi,
        halo.t_lo,
        halo.t_hi
    ));
    e.line(&format!(
        "// threads {}x{}x{}, {} pixel(s) per thread per axis",
        launch.threads[0], launch.threads[1], launch.threads[2], launch.pixels_per_thread
    ));
    e.line(&format!(
        "// shared memory: {} x {} elements x {} bytes = {} bytes",
        staging.buffers,
        ibox.volume(),
        staging.elem_bytes,
        smem_bytes
    ));
    e.blank();
    e.line("typedef union { uchar4 rgba; float v; } pixel_t;");
    e.blank();
    e.line("#define WHITE 255.0f");
    e.line("#define BLACK 0.0f");
    for (a, (n, v)) in ["TILE_X", "TILE_Y", "TILE_T"]
        .iter()
        .zip(tile.dims())
        .enumerate()
    {
        let _ = a;
        e.line(&format!("#define {n} {v}"));
    }
    for (n, v) in ["STAGED_X", "STAGED_Y", "STAGED_T"].iter().zip(ext) {
        e.line(&format!("#define {n} {v}"));
    }
    if clamped {
        e.line("#define CLX(a) min(max((a), 0), STAGED_X - 1)");
        e.line("#define CLY(a) min(max((a), 0), STAGED_Y - 1)");
        e.line("#define CLT(a) min(max((a), 0), STAGED_T - 1)");
    }
    for k in group {
        match &k.stencil_op {
            StencilOp::Gaussian { .. } | StencilOp::BoxMean { .. } => {
                if let Ok(Prepared::Weighted { weights, .. }) = Prepared::new(&k.stencil_op) {
                    let ws: Vec<String> = weights.iter().map(|&w| float(w)).collect();
                    e.line(&format!(
                        "__constant__ float W_K{}[{}] = {{ {} }};",
                        k.id,
                        ws.len(),
                        ws.join(", ")
                    ));
                }
            }
            StencilOp::Threshold { level } => {
                e.line(&format!("#define TH_K{} {}", k.id, float(*level)))
            }
            StencilOp::IirTemporal { alpha } => {
                e.line(&format!("#define ALPHA_K{} {}", k.id, float(*alpha)))
            }
            _ => {}
        }
    }
    e.blank();
    let carry = if recurrent { ", float* Carry" } else { "" };
    e.line(&format!(
        "__global__ void {fname}(const pixel_t* Iin, pixel_t* Iout{carry}, int N, int M, int F)"
    ));
    e.line("{");
    e.depth = 1;
    e.line("__shared__ pixel_t SharedA[STAGED_T][STAGED_Y][STAGED_X];");
    if staging.buffers > 1 {
        e.line("__shared__ pixel_t SharedB[STAGED_T][STAGED_Y][STAGED_X];");
    }
    e.blank();
    e.line("// pixel index, computed once per thread");
    e.line("const int thx = threadIdx.x;");
    e.line("const int thy = threadIdx.y;");
    e.line("const int tht = threadIdx.z;");
    e.line("const int i = blockIdx.x * TILE_X + thx;");
    e.line("const int j = blockIdx.y * TILE_Y + thy;");
    e.line("const int k = blockIdx.z * TILE_T + tht;");
    e.blank();

    e.line("// copy the input box into shared memory");
    e.line(&format!(
        "for (int tt = 0; tt < STAGED_T; tt += {})",
        steps[2]
    ));
    e.line(&format!(
        "    for (int jj = 0; jj < STAGED_Y; jj += {})",
        steps[1]
    ));
    e.line(&format!(
        "        for (int ii = 0; ii < STAGED_X; ii += {})",
        steps[0]
    ));
    e.line("            if (thx+ii < STAGED_X && thy+jj < STAGED_Y)");
    let sh = |axis: usize| -> String {
        let v = ["i+ii", "j+jj", "k+tt"][axis];
        match shift[axis] {
            0 => String::from(v),
            s => format!("{v}-{s}"),
        }
    };
    e.line(&format!(
        "                SharedA[thx+ii, thy+jj, tht+tt] = Iin[clamp({}, 0, N-1), clamp({}, 0, M-1), clamp({}, 0, F-1)];",
        sh(0),
        sh(1),
        sh(2)
    ));
    e.line("__syncthreads();");
    let mut sync_points = alloc::vec![0usize];

    let remaining = remaining_halos(group, &halo);
    let mut current = "SharedA";
    let mut members = Vec::with_capacity(group.len());
    for (m, (k, rem)) in group.iter().zip(&remaining).enumerate() {
        let dep_type = classify_dependency(k);
        let barrier_before = m > 0 && dep_type == DependencyType::TMT;
        let dest = if k.halo.is_zero() {
            current
        } else if current == "SharedA" {
            "SharedB"
        } else {
            "SharedA"
        };
        let lo = [-(rem.x_lo as i32), -(rem.y_lo as i32), -(rem.t_lo as i32)];
        let hi = [
            (tile.x + rem.x_hi) as i32,
            (tile.y + rem.y_hi) as i32,
            (tile.t + rem.t_hi) as i32,
        ];
        let start = [
            aligned_start(lo[0], steps[0]),
            aligned_start(lo[1], steps[1]),
            lo[2],
        ];
        e.blank();
        if barrier_before {
            e.line("__syncthreads();");
            sync_points.push(m);
        }
        let dep_name = if m == 0 {
            "reads the staged box"
        } else {
            dep_type.long_name()
        };
        let place = if dest == current {
            format!("in place on {current}")
        } else {
            format!("reads {current}, writes {dest}")
        };
        e.line(&format!("// K{} {}: {}, {}", k.id, k.name, dep_name, place));
        let mut ctx = Ctx {
            src: current,
            dst: dest,
            shift,
            clamped,
            reads: Vec::new(),
        };
        let guard = format!(
            "if (thx+ii < {} || thx+ii >= {} || thy+jj < {} || thy+jj >= {}) continue;",
            lo[0], hi[0], lo[1], hi[1]
        );
        let recurrent_member = k.stencil_op.temporal_recurrence();
        if !recurrent_member {
            e.line(&format!(
                "for (int tt = {}; tt < {}; tt += 1)",
                start[2], hi[2]
            ));
            e.depth += 1;
        }
        e.line(&format!(
            "for (int jj = {}; jj < {}; jj += {})",
            start[1], hi[1], steps[1]
        ));
        e.line(&format!(
            "    for (int ii = {}; ii < {}; ii += {})",
            start[0], hi[0], steps[0]
        ));
        e.line("    {");
        e.depth += 2;
        e.line(&guard);
        let w = ctx.write()?;
        match &k.stencil_op {
            StencilOp::Identity => {
                let r = ctx.read([0, 0, 0])?;
                e.line(&format!("{w} = {r};"));
            }
            StencilOp::Rgba2Gray => {
                let r = ctx.read([0, 0, 0])?;
                e.line(&format!(
                    "{w}.v = 0.299f * {r}.rgba.x + 0.587f * {r}.rgba.y + 0.114f * {r}.rgba.z;"
                ));
            }
            StencilOp::IirTemporal { .. } => {
                e.line("float state = Carry[i+ii, j+jj];");
                e.line(&format!(
                    "for (int tt = {}; tt < {}; tt += 1)",
                    lo[2], hi[2]
                ));
                e.line("{");
                let r = ctx.read([0, 0, 0])?;
                e.line(&format!("    const float x = {r}.v;"));
                e.line(&format!(
                    "    state = (k + tt == 0) ? x : ALPHA_K{id} * x + (1.0f - ALPHA_K{id}) * state;",
                    id = k.id
                ));
                e.line(&format!("    {w}.v = state;"));
                e.line("}");
                e.line("Carry[i+ii, j+jj] = state;");
            }
            StencilOp::Gaussian { .. } | StencilOp::BoxMean { .. } => {
                e.line("float acc = 0.0f;");
                for (n, tap) in k.stencil_op.taps().into_iter().enumerate() {
                    let r = ctx.read(tap)?;
                    e.line(&format!("acc += W_K{}[{n}] * {r}.v;", k.id));
                }
                e.line(&format!("{w}.v = acc;"));
            }
            StencilOp::Gradient => {
                let mut p = |dx: i32, dy: i32| ctx.read([dx, dy, 0]).map(|s| format!("{s}.v"));
                let gx = format!(
                    "const float gx = ({} + 2.0f * {} + {}) - ({} + 2.0f * {} + {});",
                    p(1, -1)?,
                    p(1, 0)?,
                    p(1, 1)?,
                    p(-1, -1)?,
                    p(-1, 0)?,
                    p(-1, 1)?
                );
                let gy = format!(
                    "const float gy = ({} + 2.0f * {} + {}) - ({} + 2.0f * {} + {});",
                    p(-1, 1)?,
                    p(0, 1)?,
                    p(1, 1)?,
                    p(-1, -1)?,
                    p(0, -1)?,
                    p(1, -1)?
                );
                e.line(&gx);
                e.line(&gy);
                e.line(&format!("{w}.v = sqrtf(gx * gx + gy * gy);"));
            }
            StencilOp::Threshold { .. } => {
                let r = ctx.read([0, 0, 0])?;
                e.line(&format!(
                    "if ({r}.v >= TH_K{}) {w}.v = WHITE; else {w}.v = BLACK;",
                    k.id
                ));
            }
            StencilOp::Kalman(_) => unreachable!("rejected above"),
        }
        e.depth -= 2;
        e.line("    }");
        if !recurrent_member {
            e.depth -= 1;
        }
        let mut reads = ctx.reads;
        reads.dedup();
        members.push(MemberCode {
            kernel_id: k.id,
            name: k.name.clone(),
            dep_type,
            barrier_before,
            source: String::from(current),
            dest: String::from(dest),
            region_lo: lo,
            region_hi: hi,
            loop_start: start,
            reads,
            write: shift,
            clamped,
        });
        current = dest;
    }

    e.blank();
    e.line("// store the output box");
    e.line(&format!(
        "for (int tt = 0; tt < TILE_T; tt += {})",
        steps[2]
    ));
    e.line(&format!(
        "    for (int jj = 0; jj < TILE_Y; jj += {})",
        steps[1]
    ));
    e.line(&format!(
        "        for (int ii = 0; ii < TILE_X; ii += {})",
        steps[0]
    ));
    e.line(
        "            if (thx+ii < TILE_X && thy+jj < TILE_Y && i+ii < N && j+jj < M && k+tt < F)",
    );
    let src = staged_index(current, &shift);
    let mut store = String::new();
    let _ = write!(store, "                Iout[i+ii, j+jj, k+tt] = {src};");
    e.line(&store);
    e.depth = 0;
    e.line("}");

    Ok(EmittedKernel {
        name: fname,
        source_text: e.out,
        sync_points,
        staged_extent: ext,
        staged_buffer_elems: ibox.volume(),
        buffers: staging.buffers,
        smem_bytes,
        tile,
        halo,
        launch,
        members,
    })
}

/// Every element index a member touches, for all threads of a block:
/// returns the first out-of-box staged coordinate, if any.
pub fn find_out_of_box_access(kernel: &EmittedKernel) -> Option<(u32, [i64; 3])> {
    let [tx, ty, _] = kernel.launch.threads;
    let ext = kernel.staged_extent.map(|e| e as i64);
    let steps = [tx as i32, ty as i32, 1];
    for m in &kernel.members {
        let axis_values = |a: usize, th: i32| -> Vec<i32> {
            let mut v = Vec::new();
            let mut off = m.loop_start[a];
            while off < m.region_hi[a] {
                let o = th + off;
                if o >= m.region_lo[a] && o < m.region_hi[a] {
                    v.push(o);
                }
                off += steps[a];
            }
            v
        };
        for thy in 0..ty as i32 {
            for thx in 0..tx as i32 {
                let xs = axis_values(0, thx);
                let ys = axis_values(1, thy);
                let ts = axis_values(2, 0);
                for &t in &ts {
                    for &y in &ys {
                        for &x in &xs {
                            for off in m.reads.iter().chain(core::iter::once(&m.write)) {
                                let mut p = [
                                    x as i64 + off[0] as i64,
                                    y as i64 + off[1] as i64,
                                    t as i64 + off[2] as i64,
                                ];
                                if m.clamped {
                                    for a in 0..3 {
                                        p[a] = p[a].clamp(0, ext[a] - 1);
                                    }
                                }
                                if (0..3).any(|a| p[a] < 0 || p[a] >= ext[a]) {
                                    return Some((m.kernel_id, p));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    None
}
