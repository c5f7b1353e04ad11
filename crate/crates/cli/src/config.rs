//! Experiment configuration: JSON file, dotted-path overrides, canonical hash.

use mflab::field::{DensityField, GridSpec, ProductDensity};
use mflab::kernels::{validate_kernels, KernelSpec, Kernels};
use mflab::particles::Scheme;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::RunError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(rename = "G_x")]
    pub gx: usize,
    #[serde(rename = "G_m")]
    pub gm: usize,
    pub m_max: f64,
}

impl Grids {
    pub fn spec(&self) -> Result<GridSpec, RunError> {
        GridSpec::new(self.dim, self.gx, self.gm, self.m_max).map_err(|e| RunError::Config(format!("grids: {e}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Times {
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Spacing of stored mean-field and Kolmogorov frames.
    pub frame_dt: f64,
    /// Particle time step.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Keep every k-th particle step.
    #[serde(default = "one_usize")]
    pub store_every: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParticlesSection {
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for ParticlesSection {
    fn default() -> Self {
        Self { n: 1000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ChaosSection {
    #[serde(rename = "N")]
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub seeds: Vec<u64>,
    pub lambda: f64,
    /// Extra comparison times before `T`.
    pub checkpoints: Vec<f64>,
    /// PDE grid of the study; the main grid when absent.
    pub grids: Option<Grids>,
    /// Particle count and sample count of the exponential-moment estimate at
    /// each checkpoint; skipped when absent.
    pub delta_n: Option<usize>,
    pub delta_samples: usize,
    /// Allowed deviation of the free-case slope from -1/2.
    pub slope_band: f64,
}

impl Default for ChaosSection {
    fn default() -> Self {
        Self {
            ns: vec![64, 256, 1024, 4096],
            replicas: 4,
            seeds: vec![1, 2, 3, 4, 5],
            lambda: 1.0,
            checkpoints: Vec::new(),
            grids: None,
            delta_n: None,
            delta_samples: 1000,
            slope_band: 0.15,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct KolmogorovSection {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "G_x")]
    pub gx: usize,
    #[serde(rename = "G_m")]
    pub gm: usize,
    pub m_max: f64,
    pub tol_ent: f64,
    pub gronwall_margin: f64,
}

impl Default for KolmogorovSection {
    fn default() -> Self {
        Self { n: 2, gx: 12, gm: 12, m_max: 6.0, tol_ent: 1e-2, gronwall_margin: 0.1 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub b_max: u32,
    /// `[G_x, G_m]` levels of the cancellation refinement study.
    pub refinement: Vec<[usize; 2]>,
    pub refinement_m_max: f64,
    pub min_slope: f64,
    pub bruteforce_cells: usize,
    pub bruteforce_m_max: f64,
    pub tol_cancel: f64,
    pub gamma_slack: f64,
    #[serde(rename = "mc_N")]
    pub mc_ns: Vec<usize>,
    pub mc_samples: usize,
    pub trend_tol: f64,
    /// Cells by which the second initial datum of the stability check is shifted.
    pub stability_shift: isize,
    pub stability_margin: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            b_max: 12,
            refinement: vec![[8, 16], [16, 32], [32, 64]],
            refinement_m_max: 8.0,
            min_slope: 0.9,
            bruteforce_cells: 12,
            bruteforce_m_max: 8.0,
            tol_cancel: 1e-3,
            gamma_slack: 0.05,
            mc_ns: vec![8, 16, 32, 64],
            mc_samples: 10_000,
            trend_tol: 0.01,
            stability_shift: 3,
            stability_margin: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernels: KernelSpec,
    pub initial: ProductDensity,
    pub grids: Grids,
    pub times: Times,
    #[serde(default)]
    pub particles: ParticlesSection,
    #[serde(default)]
    pub chaos: ChaosSection,
    #[serde(default)]
    pub kolmogorov: KolmogorovSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; not part of the hash.
    #[serde(default)]
    pub output: Option<String>,
}

fn one_usize() -> usize {
    1
}

fn default_cfl() -> f64 {
    mflab::meanfield::DEFAULT_CFL
}

fn default_dt() -> f64 {
    0.01
}

/// Sets `path` (dot-separated) in `root` to `value`, parsed as JSON when it
/// parses and kept as a string otherwise. Intermediate objects are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), RunError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(RunError::Config(format!("override path `{path}` has an empty segment")));
        }
        let obj = match node {
            Value::Object(map) => map,
            Value::Array(items) => {
                let idx: usize = key
                    .parse()
                    .map_err(|_| RunError::Config(format!("`{key}` in `{path}` must index an array")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| RunError::Config(format!("index {idx} out of range ({len}) in `{path}`")))?;
                if i + 1 == keys.len() {
                    *slot = value;
                    return Ok(());
                }
                node = slot;
                continue;
            }
            _ => return Err(RunError::Config(format!("`{path}` descends into a non-object"))),
        };
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// A parsed configuration together with its canonical form.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: ExperimentConfig,
    /// Canonical JSON (sorted keys, defaults filled, output removed).
    pub canonical: String,
    pub hash: String,
}

impl Loaded {
    pub fn hash12(&self) -> &str {
        &self.hash[..12]
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Loaded, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut raw: Value =
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{} is not valid JSON: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut raw, o)?;
    }
    from_value(raw)
}

pub fn from_value(raw: Value) -> Result<Loaded, RunError> {
    let config: ExperimentConfig = serde_json::from_value(raw).map_err(|e| RunError::Config(format!("config: {e}")))?;
    validate(&config)?;
    let mut canonical_value = serde_json::to_value(&config).map_err(|e| RunError::Config(e.to_string()))?;
    if let Value::Object(map) = &mut canonical_value {
        map.remove("output");
    }
    // serde_json's map is ordered by key, so this string is canonical.
    let canonical = serde_json::to_string(&canonical_value).map_err(|e| RunError::Config(e.to_string()))?;
    let hash = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { config, canonical, hash })
}

fn validate(c: &ExperimentConfig) -> Result<(), RunError> {
    let bad = |m: &str| Err(RunError::Config(m.to_string()));
    c.grids.spec()?;
    if let Some(g) = &c.chaos.grids {
        g.spec()?;
    }
    let t = &c.times;
    if !(t.t_end > 0.0 && t.t_end.is_finite()) {
        return bad("times.T must be positive");
    }
    if !(t.frame_dt > 0.0 && t.frame_dt <= t.t_end) {
        return bad("times.frame_dt must lie in (0, T]");
    }
    if !(t.dt > 0.0 && t.dt <= t.t_end) {
        return bad("times.dt must lie in (0, T]");
    }
    if !(t.cfl > 0.0 && t.cfl <= mflab::meanfield::MAX_CFL) {
        return bad("times.cfl must lie in (0, 0.5]");
    }
    if c.particles.n == 0 {
        return bad("particles.N must be positive");
    }
    if c.chaos.lambda.is_nan() || c.chaos.lambda <= 0.0 {
        return bad("chaos.lambda must be positive");
    }
    let kernels = Kernels::from_spec(&c.kernels).map_err(|e| RunError::Config(format!("kernels: {e}")))?;
    if kernels.dim() != c.grids.dim {
        return bad("kernel dimension differs from grids.dim");
    }
    let report = validate_kernels(&kernels, 64).map_err(|e| RunError::Config(format!("kernels: {e}")))?;
    if !report.ok() {
        return Err(RunError::Config(format!("kernels fail validation: {report:?}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn kernels(&self) -> Kernels {
        Kernels::from_spec(&self.kernels).expect("validated at load")
    }

    pub fn initial_on(&self, grid: GridSpec) -> Result<DensityField, RunError> {
        self.initial.discretize(grid).map_err(|e| RunError::Config(format!("initial: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "kernels": {"interaction": {"family": "constant", "c": [0.0]}, "influence": {"form": "zero"}},
            "initial": {"x": {"profile": "uniform"}, "m": {"profile": "exponential"}},
            "grids": {"G_x": 8, "G_m": 16, "m_max": 8.0},
            "times": {"T": 0.5, "frame_dt": 0.25}
        })
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let mut v = minimal();
        apply_override(&mut v, "grids.G_x=64").unwrap();
        apply_override(&mut v, "chaos.N=[8,16]").unwrap();
        apply_override(&mut v, "kernels.interaction.c.0=0.5").unwrap();
        let l = from_value(v).unwrap();
        assert_eq!(l.config.grids.gx, 64);
        assert_eq!(l.config.chaos.ns, vec![8, 16]);
        assert!(matches!(&l.config.kernels.interaction, mflab::kernels::InteractionSpec::Constant { c } if c == &vec![0.5]));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = minimal();
        v["grids"]["G_y"] = json!(3);
        assert!(matches!(from_value(v), Err(RunError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_and_key_order() {
        let a = from_value(minimal()).unwrap();
        let mut v = minimal();
        v["output"] = json!("elsewhere");
        let b = from_value(v).unwrap();
        assert_eq!(a.hash, b.hash);
        let mut v = minimal();
        v["seed"] = json!(7);
        assert_ne!(from_value(v).unwrap().hash, a.hash);
    }
}
