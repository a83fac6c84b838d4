//! Run configuration: JSON files validated against the published schema.
//!
//! Validation happens on the raw document, before any default is filled in, so
//! schema errors point at what the user actually wrote. The resolved config
//! (defaults included) is what gets echoed into every metadata sidecar.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use sohb_core::alignment::{Kernel, KernelShape, PeriodicBox};
use sohb_core::micro::{InitialOrientations, Model, Representation, SimParams};
use sohb_core::rotations::Thresholds;
use sohb_core::UnitQuaternion;

use crate::error::{HarnessError, Result};

pub const RUN_CONFIG_SCHEMA: &str = include_str!("../schemas/run_config.schema.json");
pub const METADATA_SCHEMA: &str = include_str!("../schemas/metadata.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Simulate,
    Single,
    Constants,
    Gci,
    Macro,
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub radius: f64,
    pub shape: KernelShape,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            radius: 1.0,
            shape: KernelShape::Indicator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitConfig {
    #[default]
    Uniform,
    Identical {
        q: [f64; 4],
    },
    VonMises {
        center: [f64; 4],
        #[serde(rename = "D")]
        d: f64,
    },
}

/// Single particle in a constant prescribed field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleSection {
    /// Field orientation as a quaternion `(w, x, y, z)`.
    pub field: [f64; 4],
    pub burn_in: f64,
}

impl Default for SingleSection {
    fn default() -> Self {
        Self {
            field: [1.0, 0.0, 0.0, 0.0],
            burn_in: 0.0,
        }
    }
}

/// Periodic line of `nodes` cells carrying `ρ = 1 + a cos(2πx/L)` and the twisted
/// orientation `Rz(α sin(2πx/L)) Rx(β cos(4πx/L))`, with `twist = [α, β]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroSection {
    pub nodes: usize,
    pub length: f64,
    pub twist: [f64; 2],
    pub density_amplitude: f64,
    pub nu: f64,
    pub sigma: f64,
}

impl Default for MacroSection {
    fn default() -> Self {
        Self {
            nodes: 64,
            length: std::f64::consts::TAU,
            twist: [0.9, 0.6],
            density_amplitude: 0.3,
            nu: 0.5,
            sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub model: Model,
    pub representation: Representation,
    pub t_end: f64,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(rename = "box", default = "default_box")]
    pub box_lengths: [f64; 3],
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default = "default_save_every")]
    pub save_every: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub single: SingleSection,
    #[serde(rename = "macro", default)]
    pub macro_section: MacroSection,
}

fn default_dt() -> f64 {
    0.01
}

fn default_box() -> [f64; 3] {
    [10.0; 3]
}

fn default_save_every() -> u64 {
    10
}

fn default_replicas() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("sohb_out")
}

fn quaternion(v: &[f64; 4], key: &str) -> Result<UnitQuaternion> {
    let v = Vector4::from_column_slice(v);
    let n = v.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(HarnessError::Schema {
            path: key.into(),
            message: "quaternion must be finite and nonzero".into(),
        });
    }
    Ok(UnitQuaternion::from_vector_normalize(v))
}

impl RunConfig {
    pub fn sim_params(&self) -> Result<SimParams> {
        let params = SimParams {
            n: self.n,
            d: self.d,
            pbox: PeriodicBox::new(self.box_lengths)?,
            kernel: Kernel::new(self.kernel.radius, self.kernel.shape)?,
            dt: self.dt,
            model: self.model,
            representation: self.representation,
            seed: self.seed,
            thresholds: self.thresholds,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn initial_orientations(&self) -> Result<InitialOrientations> {
        Ok(match &self.init {
            InitConfig::Uniform => InitialOrientations::Uniform,
            InitConfig::Identical { q } => InitialOrientations::Identical(quaternion(q, "/init/q")?),
            InitConfig::VonMises { center, d } => InitialOrientations::VonMises {
                center: quaternion(center, "/init/center")?,
                d: *d,
            },
        })
    }

    pub fn field(&self) -> Result<UnitQuaternion> {
        quaternion(&self.single.field, "/single/field")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn compile(schema: &Value) -> jsonschema::Validator {
    jsonschema::validator_for(schema).expect("bundled schema compiles")
}

pub fn run_config_schema() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| serde_json::from_str(RUN_CONFIG_SCHEMA).expect("bundled schema parses"))
}

fn run_config_validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| compile(run_config_schema()))
}

/// The sidecar schema with the run-config schema embedded under `$defs/run_config`.
pub fn metadata_schema() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| {
        let mut schema: Value =
            serde_json::from_str(METADATA_SCHEMA).expect("bundled schema parses");
        schema["$defs"]["run_config"] = run_config_schema().clone();
        schema
    })
}

fn metadata_validator() -> &'static jsonschema::Validator {
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    VALIDATOR.get_or_init(|| compile(metadata_schema()))
}

fn first_error(validator: &jsonschema::Validator, instance: &Value) -> Result<()> {
    match validator.iter_errors(instance).next() {
        None => Ok(()),
        Some(e) => Err(HarnessError::Schema {
            path: e.instance_path().as_str().to_string(),
            message: e.to_string(),
        }),
    }
}

pub fn validate_metadata(sidecar: &Value) -> Result<()> {
    first_error(metadata_validator(), sidecar)
}

/// Validates a parsed document and resolves every default.
pub fn config_from_value(value: Value) -> Result<RunConfig> {
    first_error(run_config_validator(), &value)?;
    let config: RunConfig = serde_json::from_value(value).map_err(|e| HarnessError::Parse {
        what: "config".into(),
        message: e.to_string(),
    })?;
    // Catch semantic errors (box vs radius, zero quaternions) at load time.
    config.sim_params()?;
    config.initial_orientations()?;
    config.field()?;
    Ok(config)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        what: "config".into(),
        message: e.to_string(),
    })?;
    config_from_value(value)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({"N": 100, "D": 1.0, "model": "gradual", "representation": "matrix", "t_end": 1.0, "seed": 7})
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = config_from_value(minimal()).unwrap();
        assert_eq!(c.mode, Mode::Simulate);
        assert_eq!(c.dt, 0.01);
        assert_eq!(c.box_lengths, [10.0; 3]);
        assert_eq!(c.kernel, KernelConfig::default());
        assert_eq!(c.save_every, 10);
        assert_eq!(c.replicas, 1);
        assert_eq!(c.thresholds, Thresholds::default());
    }

    #[test]
    fn negative_d_names_the_field() {
        let mut v = minimal();
        v["D"] = json!(-1.0);
        match config_from_value(v) {
            Err(HarnessError::Schema { path, .. }) => assert_eq!(path, "/D"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut v = minimal();
        v["colour"] = json!("red");
        match config_from_value(v) {
            Err(HarnessError::Schema { message, .. }) => assert!(message.contains("colour")),
            other => panic!("expected schema error, got {other:?}"),
        }
        let mut v = minimal();
        v["kernel"] = json!({"radius": 1.0, "sharpness": 2});
        assert!(matches!(config_from_value(v), Err(HarnessError::Schema { .. })));
    }

    #[test]
    fn resolved_config_revalidates_and_round_trips() {
        let c = config_from_value(minimal()).unwrap();
        let echoed = c.to_value();
        first_error(run_config_validator(), &echoed).unwrap();
        assert_eq!(config_from_value(echoed).unwrap(), c);
    }

    // Schema defaults and serde defaults are written twice; keep them equal.
    #[test]
    fn schema_defaults_match_resolved_defaults() {
        let echoed = config_from_value(minimal()).unwrap().to_value();
        let props = &run_config_schema()["properties"];
        for (key, spec) in props.as_object().unwrap() {
            if let Some(d) = spec.get("default") {
                assert_eq!(&echoed[key], d, "top-level default of {key}");
            }
            if let Some(inner) = spec.get("properties").and_then(Value::as_object) {
                for (k, s) in inner {
                    if let Some(d) = s.get("default") {
                        assert_eq!(&echoed[key][k], d, "default of {key}.{k}");
                    }
                }
            }
        }
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(parse_config("{not json"), Err(HarnessError::Parse { .. })));
    }

    #[test]
    fn kernel_larger_than_half_box_is_refused() {
        let mut v = minimal();
        v["box"] = json!([1.0, 1.0, 1.0]);
        assert!(matches!(config_from_value(v), Err(HarnessError::Core(_))));
    }

    #[test]
    fn init_variants_parse() {
        let mut v = minimal();
        v["init"] = json!({"kind": "von-mises", "center": [0.0, 1.0, 0.0, 0.0], "D": 0.1});
        let c = config_from_value(v).unwrap();
        assert!(matches!(
            c.initial_orientations().unwrap(),
            InitialOrientations::VonMises { d, .. } if d == 0.1
        ));
        let mut v = minimal();
        v["init"] = json!({"kind": "identical"});
        assert!(config_from_value(v).is_err());
    }
}
