//! JSON pipeline and device files.

use fuseplan_core::device::DeviceError;
use fuseplan_core::{
    Device, Halo, KalmanParams, KernelDesc, OperationType, Pipeline, PipelineError, Scope,
    StencilOp, VideoDims,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("kernel {kernel}: {field}: {reason}")]
    Field {
        kernel: u32,
        field: String,
        reason: String,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

fn field_err(kernel: u32, field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        kernel,
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineFile {
    video: VideoDims,
    kernels: Vec<KernelFile>,
}

/// Pads are read signed so that a negative value gets its own diagnostic.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HaloFile {
    x_lo: i64,
    x_hi: i64,
    y_lo: i64,
    y_hi: i64,
    t_lo: i64,
    t_hi: i64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelFile {
    #[serde(default)]
    id: Option<u32>,
    name: String,
    #[serde(default)]
    op_type: Option<OperationType>,
    #[serde(default)]
    halo: Option<HaloFile>,
    #[serde(default)]
    scope: Option<Scope>,
    stencil_op: String,
    #[serde(default)]
    params: Map<String, Value>,
    #[serde(default = "four")]
    in_bytes_per_elem: u32,
    #[serde(default = "four")]
    out_bytes_per_elem: u32,
    #[serde(default)]
    compute_weight: Option<f64>,
}

fn four() -> u32 {
    4
}

struct Params<'a> {
    kernel: u32,
    map: &'a Map<String, Value>,
    allowed: &'static [&'static str],
}

impl Params<'_> {
    fn check_keys(&self) -> Result<(), ConfigError> {
        match self
            .map
            .keys()
            .find(|k| !self.allowed.contains(&k.as_str()))
        {
            Some(k) => Err(field_err(
                self.kernel,
                format!("params.{k}"),
                "unknown parameter",
            )),
            None => Ok(()),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| {
                field_err(self.kernel, format!("params.{key}"), "expected a number")
            }),
        }
    }

    fn u32(&self, key: &str, default: u32) -> Result<u32, ConfigError> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| {
                    field_err(
                        self.kernel,
                        format!("params.{key}"),
                        "expected a non-negative integer",
                    )
                }),
        }
    }
}

fn stencil_op(kernel: u32, name: &str, map: &Map<String, Value>) -> Result<StencilOp, ConfigError> {
    let allowed: &'static [&'static str] = match name {
        "identity" | "rgba2gray" | "gradient" => &[],
        "iir_temporal" => &["alpha"],
        "gaussian" => &["radius", "sigma"],
        "threshold" => &["level"],
        "box_mean" => &["rx", "ry", "rt_lo", "rt_hi"],
        "kalman" => &["process_noise", "measurement_noise", "initial_covariance"],
        other => {
            return Err(field_err(
                kernel,
                "stencil_op",
                format!("unknown stencil_op {other:?}"),
            ))
        }
    };
    let p = Params {
        kernel,
        map,
        allowed,
    };
    p.check_keys()?;
    Ok(match name {
        "identity" => StencilOp::Identity,
        "rgba2gray" => StencilOp::Rgba2Gray,
        "gradient" => StencilOp::Gradient,
        "iir_temporal" => StencilOp::IirTemporal {
            alpha: p.f64("alpha", 0.5)?,
        },
        "gaussian" => StencilOp::Gaussian {
            radius: p.u32("radius", 2)?,
            sigma: p.f64("sigma", 1.0)?,
        },
        "threshold" => StencilOp::Threshold {
            level: p.f64("level", 128.0)?,
        },
        "box_mean" => StencilOp::BoxMean {
            rx: p.u32("rx", 1)?,
            ry: p.u32("ry", 1)?,
            rt_lo: p.u32("rt_lo", 0)?,
            rt_hi: p.u32("rt_hi", 0)?,
        },
        _ => {
            let d = KalmanParams::default();
            StencilOp::Kalman(KalmanParams {
                process_noise: p.f64("process_noise", d.process_noise)?,
                measurement_noise: p.f64("measurement_noise", d.measurement_noise)?,
                initial_covariance: p.f64("initial_covariance", d.initial_covariance)?,
            })
        }
    })
}

fn halo(kernel: u32, h: &HaloFile) -> Result<Halo, ConfigError> {
    let sides = [
        ("x_lo", h.x_lo),
        ("x_hi", h.x_hi),
        ("y_lo", h.y_lo),
        ("y_hi", h.y_hi),
        ("t_lo", h.t_lo),
        ("t_hi", h.t_hi),
    ];
    let mut v = [0u32; 6];
    for (i, (field, pad)) in sides.into_iter().enumerate() {
        if pad < 0 {
            return Err(PipelineError::NegativeHalo { kernel, field }.into());
        }
        v[i] = u32::try_from(pad)
            .map_err(|_| field_err(kernel, format!("halo.{field}"), "too large"))?;
    }
    Ok(Halo::new(v[0], v[1], v[2], v[3], v[4], v[5]))
}

fn kernel(pos: usize, k: &KernelFile) -> Result<KernelDesc, ConfigError> {
    let id = pos as u32 + 1;
    if let Some(found) = k.id {
        if found != id {
            return Err(PipelineError::KernelId { kernel: id, found }.into());
        }
    }
    let op = stencil_op(id, &k.stencil_op, &k.params)?;
    let mut desc = KernelDesc::from_op(
        id,
        k.name.clone(),
        op,
        k.in_bytes_per_elem,
        k.out_bytes_per_elem,
    );
    if let Some(h) = &k.halo {
        desc.halo = halo(id, h)?;
    }
    if let Some(t) = k.op_type {
        desc.op_type = t;
    } else if k.halo.is_some() {
        desc.op_type =
            fuseplan_core::classify_operation(&desc.halo, desc.stencil_op.multi_frame()).primary;
    }
    if let Some(s) = k.scope {
        desc.scope = s;
    }
    if let Some(w) = k.compute_weight {
        desc.compute_weight = w;
    }
    Ok(desc)
}

/// Parses and validates a pipeline document. Omitted kernel fields take the
/// catalog defaults of their `stencil_op`.
pub fn parse_pipeline(text: &str) -> Result<Pipeline, ConfigError> {
    let file: PipelineFile = serde_json::from_str(text)?;
    let kernels = file
        .kernels
        .iter()
        .enumerate()
        .map(|(i, k)| kernel(i, k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Pipeline::new(file.video, kernels)?)
}

fn params_json(op: &StencilOp) -> Value {
    match *op {
        StencilOp::Identity | StencilOp::Rgba2Gray | StencilOp::Gradient => json!({}),
        StencilOp::IirTemporal { alpha } => json!({ "alpha": alpha }),
        StencilOp::Gaussian { radius, sigma } => json!({ "radius": radius, "sigma": sigma }),
        StencilOp::Threshold { level } => json!({ "level": level }),
        StencilOp::BoxMean {
            rx,
            ry,
            rt_lo,
            rt_hi,
        } => {
            json!({ "rx": rx, "ry": ry, "rt_lo": rt_lo, "rt_hi": rt_hi })
        }
        StencilOp::Kalman(p) => json!({
            "process_noise": p.process_noise,
            "measurement_noise": p.measurement_noise,
            "initial_covariance": p.initial_covariance,
        }),
    }
}

pub fn pipeline_to_json(p: &Pipeline) -> Value {
    let kernels: Vec<Value> = p
        .kernels()
        .iter()
        .map(|k| {
            json!({
                "id": k.id,
                "name": k.name,
                "op_type": k.op_type,
                "halo": k.halo,
                "scope": k.scope,
                "stencil_op": k.stencil_op.name(),
                "params": params_json(&k.stencil_op),
                "in_bytes_per_elem": k.in_bytes_per_elem,
                "out_bytes_per_elem": k.out_bytes_per_elem,
                "compute_weight": k.compute_weight,
            })
        })
        .collect();
    json!({ "video": p.video, "kernels": kernels })
}

pub fn render_pipeline(p: &Pipeline) -> String {
    let mut s =
        serde_json::to_string_pretty(&pipeline_to_json(p)).expect("pipeline is serializable");
    s.push('\n');
    s
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    name: String,
    smem_bytes: u64,
    sm_count: u32,
    warp_size: u32,
    max_threads_per_block: u32,
    max_blocks_per_sm: u32,
    max_warps_per_sm: u32,
    cost: CostFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostFile {
    gmem_cost_per_elem: f64,
    smem_cost_per_elem: f64,
    compute_cost_unit: f64,
    launch_overhead: f64,
}

pub fn parse_device(text: &str) -> Result<Device, ConfigError> {
    let f: DeviceFile = serde_json::from_str(text)?;
    let d = Device {
        name: f.name,
        smem_bytes: f.smem_bytes,
        sm_count: f.sm_count,
        warp_size: f.warp_size,
        max_threads_per_block: f.max_threads_per_block,
        max_blocks_per_sm: f.max_blocks_per_sm,
        max_warps_per_sm: f.max_warps_per_sm,
        cost: fuseplan_core::CostParams {
            gmem_cost_per_elem: f.cost.gmem_cost_per_elem,
            smem_cost_per_elem: f.cost.smem_cost_per_elem,
            compute_cost_unit: f.cost.compute_cost_unit,
            launch_overhead: f.cost.launch_overhead,
        },
    };
    d.validate()?;
    Ok(d)
}

pub fn render_device(d: &Device) -> String {
    let mut s = serde_json::to_string_pretty(d).expect("device is serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use fuseplan_core::pipeline::{bundled_pipeline, bundled_video};

    #[test]
    fn bundled_round_trip() {
        let p = bundled_pipeline(bundled_video()).unwrap();
        assert_eq!(parse_pipeline(&render_pipeline(&p)).unwrap(), p);
    }

    #[test]
    fn minimal_kernel_defaults() {
        let p = parse_pipeline(
            r#"{"video":{"width":8,"height":8,"frames":2,"fps":30,"channels":1},
                "kernels":[{"name":"t","stencil_op":"threshold"}]}"#,
        )
        .unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.kernels()[0].op_type, OperationType::SinglePoint);
    }

    #[test]
    fn negative_halo_is_named() {
        let err = parse_pipeline(
            r#"{"video":{"width":8,"height":8,"frames":2,"fps":30,"channels":1},
                "kernels":[{"name":"g","stencil_op":"gaussian","params":{"radius":1,"sigma":1.0},
                            "halo":{"x_lo":-1,"x_hi":1,"y_lo":1,"y_hi":1,"t_lo":0,"t_hi":0}}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("negative halo"), "{err}");
        assert!(err.to_string().contains("x_lo"), "{err}");
    }

    #[test]
    fn op_type_mismatch() {
        let err = parse_pipeline(
            r#"{"video":{"width":8,"height":8,"frames":2,"fps":30,"channels":1},
                "kernels":[{"name":"g","stencil_op":"gaussian","op_type":"SinglePoint"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Pipeline(PipelineError::OpTypeMismatch { kernel: 1, .. })
        ));
    }

    #[test]
    fn unknown_param_and_op() {
        let base = |k: &str| {
            format!(
                r#"{{"video":{{"width":8,"height":8,"frames":2,"fps":30,"channels":1}},"kernels":[{k}]}}"#
            )
        };
        assert!(parse_pipeline(&base(r#"{"name":"x","stencil_op":"blur"}"#)).is_err());
        assert!(parse_pipeline(&base(
            r#"{"name":"x","stencil_op":"threshold","params":{"lvl":3}}"#
        ))
        .is_err());
    }

    #[test]
    fn devices() {
        let k20 = Device::k20_like();
        assert_eq!(parse_device(&render_device(&k20)).unwrap(), k20);
        let bad = render_device(&k20).replace("\"sm_count\": 13", "\"sm_count\": 0");
        assert!(matches!(
            parse_device(&bad),
            Err(ConfigError::Device(DeviceError::NonPositive("sm_count")))
        ));
        assert!(parse_device("{\"name\": \"x\"}").is_err());
    }
}
