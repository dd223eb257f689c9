//! Run configuration: TOML schema, benchmark definitions and model
//! assembly from a config.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{ElasticParams, FEModelBuilder, ObjectiveKind};
use crate::grid::HexGrid;
use crate::lengthscale::LengthScaleSpec;
use crate::mask::{MaskSet, MaskShape, Polarity};
use crate::sls::{self, SlsConfig, SlsDriver};

/// A length given either in absolute units or as a multiple of the cell
/// size, e.g. `4.0` or `"4cs"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LsValue {
    Absolute(f64),
    CellMultiple(f64),
}

impl LsValue {
    pub fn resolve(&self, cs: f64) -> f64 {
        match self {
            LsValue::Absolute(v) => *v,
            LsValue::CellMultiple(m) => m * cs,
        }
    }
}

impl Serialize for LsValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LsValue::Absolute(v) => s.serialize_f64(*v),
            LsValue::CellMultiple(m) => s.serialize_str(&format!("{m}cs")),
        }
    }
}

impl<'de> Deserialize<'de> for LsValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(LsValue::Absolute(v)),
            Raw::Str(s) => {
                let t = s.trim();
                let stripped = t
                    .strip_suffix("cs")
                    .map(str::trim)
                    .ok_or_else(|| serde::de::Error::custom(format!("expected a number or \"<k>cs\", got {t:?}")))?;
                let m: f64 = stripped
                    .parse()
                    .map_err(|_| serde::de::Error::custom(format!("bad cell multiple {t:?}")))?;
                Ok(LsValue::CellMultiple(m))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCfg {
    pub n_cols: usize,
    pub n_rows: usize,
    pub cs: f64,
}

fn default_max_radius() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MasksCfg {
    pub polarity: Polarity,
    #[serde(default = "default_shape")]
    pub shape: MaskShape,
    pub alpha: f64,
    pub eta: f64,
    /// Mask counts per axis; defaults to round(axis length / vars-per-mask).
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default = "default_max_radius")]
    pub max_radius: f64,
    #[serde(default)]
    pub alpha_continuation: Vec<f64>,
}

fn default_shape() -> MaskShape {
    MaskShape::Elliptical
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveCfg {
    pub kind: ObjectiveKind,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LsCfg {
    pub min_ls: LsValue,
    pub max_ls: LsValue,
    #[serde(default = "default_p")]
    pub p: u32,
}

fn default_p() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SlsSection {
    pub vf_init: f64,
    pub vf_min: f64,
    pub vf_max: f64,
    pub tol_init: f64,
    pub delta_eps: f64,
    pub eps_int: f64,
    pub step_evals: usize,
    pub max_steps: usize,
    pub total_eval_budget: usize,
    pub sed_threshold: f64,
    pub refresh_regions_every_outer: bool,
    pub smooth_steps: usize,
}

impl Default for SlsSection {
    fn default() -> Self {
        SlsSection {
            vf_init: 0.2,
            vf_min: 0.1,
            vf_max: 0.5,
            tol_init: 1.0,
            delta_eps: 10.0,
            eps_int: 1.0,
            step_evals: 100,
            max_steps: 40,
            total_eval_budget: 4000,
            sed_threshold: 1e-6,
            refresh_regions_every_outer: true,
            smooth_steps: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeCfg {
    pub e: f64,
    pub nu: f64,
    pub thickness: f64,
    pub rho_min: f64,
}

impl Default for FeCfg {
    fn default() -> Self {
        FeCfg {
            e: 1.0,
            nu: 0.3,
            thickness: 1.0,
            rho_min: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportCfg {
    /// Node selector: axis-aligned box [x0, y0, x1, y1]...
    #[serde(default, rename = "box")]
    pub region: Option<[f64; 4]>,
    /// ...or the node nearest to a point.
    #[serde(default)]
    pub at: Option<[f64; 2]>,
    /// "x", "y" or "xy".
    pub fix: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadCfg {
    #[serde(default, rename = "box")]
    pub region: Option<[f64; 4]>,
    #[serde(default)]
    pub at: Option<[f64; 2]>,
    /// Total force; split equally over the selected nodes.
    pub force: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismCfg {
    pub output_at: [f64; 2],
    pub output_dir: [f64; 2],
    #[serde(default)]
    pub input_spring: f64,
    #[serde(default)]
    pub output_spring: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputCfg {
    pub dir: String,
}

impl Default for OutputCfg {
    fn default() -> Self {
        OutputCfg { dir: "out".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridCfg,
    pub masks: MasksCfg,
    pub objective: ObjectiveCfg,
    pub lengthscale: LsCfg,
    #[serde(default)]
    pub sls: SlsSection,
    #[serde(default)]
    pub fe: FeCfg,
    pub supports: Vec<SupportCfg>,
    #[serde(default)]
    pub loads: Vec<LoadCfg>,
    #[serde(default)]
    pub mechanism: Option<MechanismCfg>,
    #[serde(default)]
    pub output: OutputCfg,
    /// Reserved; the pipeline is deterministic.
    #[serde(default)]
    pub rng_seed: u64,
}

/// Everything needed to run: grid, FE model, initial masks and the driver.
pub struct BuiltProblem {
    pub grid: Arc<HexGrid>,
    pub driver: SlsDriver,
    pub masks0: MaskSet,
    pub support_nodes: Vec<usize>,
    pub load_nodes: Vec<usize>,
    pub smooth_steps: usize,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn select_nodes(
        grid: &HexGrid,
        region: &Option<[f64; 4]>,
        at: &Option<[f64; 2]>,
        what: &str,
    ) -> Result<Vec<usize>> {
        match (region, at) {
            (Some(bx), None) => {
                let nodes = grid.nodes_in_box(*bx);
                if nodes.is_empty() {
                    return Err(Error::Config(format!(
                        "{what} box {bx:?} selects no nodes"
                    )));
                }
                Ok(nodes)
            }
            (None, Some(p)) => Ok(vec![grid.nearest_node(*p)]),
            (Some(_), Some(_)) => Err(Error::Config(format!(
                "{what}: give either box or at, not both"
            ))),
            (None, None) => Err(Error::Config(format!("{what}: needs box or at"))),
        }
    }

    /// Default per-axis mask count: round(axis length / design variables
    /// per mask), at least 1.
    fn default_mask_count(len: f64, vars_per_mask: usize) -> usize {
        ((len / vars_per_mask as f64).round() as usize).max(1)
    }

    pub fn build(&self) -> Result<BuiltProblem> {
        let grid = Arc::new(HexGrid::new(self.grid.n_cols, self.grid.n_rows, self.grid.cs)?);
        let cs = self.grid.cs;
        let ls = LengthScaleSpec::new(
            self.lengthscale.min_ls.resolve(cs),
            self.lengthscale.max_ls.resolve(cs),
            self.lengthscale.p,
        )?;

        let params = ElasticParams {
            e: self.fe.e,
            nu: self.fe.nu,
            thickness: self.fe.thickness,
        };
        let mut builder = FEModelBuilder::new(Arc::clone(&grid), params);

        let mut support_nodes = Vec::new();
        for (i, s) in self.supports.iter().enumerate() {
            let (fx, fy) = match s.fix.as_str() {
                "x" => (true, false),
                "y" => (false, true),
                "xy" | "yx" => (true, true),
                other => {
                    return Err(Error::Config(format!(
                        "support {i}: fix must be \"x\", \"y\" or \"xy\", got {other:?}"
                    )))
                }
            };
            let nodes = Self::select_nodes(&grid, &s.region, &s.at, &format!("support {i}"))?;
            for n in nodes {
                builder.fix_node(n, fx, fy);
                support_nodes.push(n);
            }
        }

        let mut load_nodes = Vec::new();
        if self.loads.is_empty() && self.objective.kind == ObjectiveKind::Compliance {
            return Err(Error::Config("compliance run without loads".into()));
        }
        for (i, l) in self.loads.iter().enumerate() {
            let nodes = Self::select_nodes(&grid, &l.region, &l.at, &format!("load {i}"))?;
            let share = 1.0 / nodes.len() as f64;
            for &n in &nodes {
                builder.add_point_load(n, [l.force[0] * share, l.force[1] * share]);
                load_nodes.push(n);
            }
        }

        if self.objective.kind == ObjectiveKind::Mechanism {
            let mech = self.mechanism.as_ref().ok_or_else(|| {
                Error::Config("mechanism objective requires a [mechanism] section".into())
            })?;
            let out_node = grid.nearest_node(mech.output_at);
            builder.output_port(out_node, mech.output_dir);
            if mech.output_spring > 0.0 {
                let axis = if mech.output_dir[0].abs() >= mech.output_dir[1].abs() { 0 } else { 1 };
                builder.add_spring(out_node, axis, mech.output_spring);
            }
            if mech.input_spring > 0.0 {
                if let Some(l) = self.loads.first() {
                    let nodes = Self::select_nodes(&grid, &l.region, &l.at, "load 0")?;
                    let axis = if l.force[0].abs() >= l.force[1].abs() { 0 } else { 1 };
                    builder.add_spring(nodes[0], axis, mech.input_spring);
                }
            }
        }

        let model = builder.build()?;

        // initial masks evenly spread, a = b = mR/4 clamped into bounds
        let (lo, hi) = grid.bbox();
        let vp = match self.masks.shape {
            MaskShape::Elliptical => 5,
            MaskShape::Circular => 3,
        };
        let nx = self
            .masks
            .nx
            .unwrap_or_else(|| Self::default_mask_count(hi[0] - lo[0], vp));
        let ny = self
            .masks
            .ny
            .unwrap_or_else(|| Self::default_mask_count(hi[1] - lo[1], vp));
        let m_r = self.masks.max_radius;
        let lower_ab = match self.masks.polarity {
            Polarity::Negative => ls.min_ls.min(m_r * 0.99),
            Polarity::Positive => 1e-2,
        };
        let a_init = (m_r / 4.0).clamp(lower_ab, m_r);
        let masks0 = sls::evenly_spread_masks(
            &grid,
            nx,
            ny,
            self.masks.polarity,
            self.masks.shape,
            self.masks.alpha,
            self.masks.eta,
            a_init,
        )?;

        let cfg = SlsConfig {
            vf_init: self.sls.vf_init,
            vf_min: self.sls.vf_min,
            vf_max: self.sls.vf_max,
            tol_init: self.sls.tol_init,
            delta_eps: self.sls.delta_eps,
            eps_int: self.sls.eps_int,
            ls,
            step_evals: self.sls.step_evals,
            max_steps: self.sls.max_steps,
            total_eval_budget: self.sls.total_eval_budget,
            sed_threshold: self.sls.sed_threshold,
            refresh_regions_every_outer: self.sls.refresh_regions_every_outer,
            alpha_continuation: self.masks.alpha_continuation.clone(),
            max_radius: m_r,
        };

        let driver = SlsDriver {
            model,
            kind: self.objective.kind,
            s_scale: self.objective.scale,
            rho_min: self.fe.rho_min,
            cfg,
        };

        Ok(BuiltProblem {
            grid,
            driver,
            masks0,
            support_nodes,
            load_nodes,
            smooth_steps: self.sls.smooth_steps,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    I,
    II,
    III,
    IV,
}

impl std::str::FromStr for Benchmark {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Benchmark::I),
            "II" | "2" => Ok(Benchmark::II),
            "III" | "3" => Ok(Benchmark::III),
            "IV" | "4" => Ok(Benchmark::IV),
            other => Err(Error::invalid(format!("unknown benchmark {other:?}"))),
        }
    }
}

fn scaled(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).round() as usize).max(1)
}

/// Shipped benchmark configs, optionally mesh-scaled. Scaling shrinks cell
/// and mask counts while growing `cs` to keep the physical domain fixed.
pub fn benchmark_config(bench: Benchmark, scale: f64, polarity: Polarity) -> Result<RunConfig> {
    if !(scale > 0.0 && scale <= 4.0) {
        return Err(Error::invalid(format!("scale must be in (0, 4], got {scale}")));
    }
    let (n_cols0, n_rows0, cs0) = match bench {
        Benchmark::I => (150usize, 80usize, 0.38),
        Benchmark::II => (200, 80, 0.28),
        Benchmark::III | Benchmark::IV => (150, 75, 0.38),
    };
    let n_cols = scaled(n_cols0, scale);
    let n_rows = scaled(n_rows0, scale);
    let cs = cs0 * n_cols0 as f64 / n_cols as f64;

    // geometry of the scaled grid
    let sx = 0.5 * 3f64.sqrt() * cs;
    let lo = [-sx, -cs];
    let hi = [
        sx * (2.0 * (n_cols as f64 - 1.0) + 1.0) + sx,
        0.5 * cs * (3.0 * (n_rows as f64 - 1.0)) + cs,
    ];
    let mid_y = 0.5 * (lo[1] + hi[1]);
    let edge = 1.1 * sx;
    let corner = 1.2 * cs.max(sx);

    // benchmarks I/II ship with their reference 20x10 mask grids; III/IV
    // fall back to the per-axis count rule
    let (nx0, ny0) = match bench {
        Benchmark::I | Benchmark::II => (20usize, 10usize),
        Benchmark::III | Benchmark::IV => (20, 9),
    };
    let nx = scaled(nx0, scale);
    let ny = scaled(ny0, scale);

    let (kind, s_scale) = match bench {
        Benchmark::I | Benchmark::II => (ObjectiveKind::Compliance, 1.0),
        Benchmark::III | Benchmark::IV => (ObjectiveKind::Mechanism, 1e6),
    };
    let (min_ls, max_ls) = match bench {
        Benchmark::I | Benchmark::II => (4.0, 7.0),
        Benchmark::III | Benchmark::IV => (4.0, 6.0),
    };
    let vf_init = match bench {
        Benchmark::I | Benchmark::II => 0.2,
        Benchmark::III | Benchmark::IV => 0.3,
    };

    let supports;
    let loads;
    let mut mechanism = None;
    match bench {
        Benchmark::I => {
            supports = vec![SupportCfg {
                region: Some([lo[0], lo[1], lo[0] + edge, hi[1]]),
                at: None,
                fix: "xy".into(),
            }];
            loads = vec![LoadCfg {
                region: None,
                at: Some([hi[0], lo[1]]),
                force: [0.0, -3.0],
            }];
        }
        Benchmark::II => {
            supports = vec![
                SupportCfg {
                    region: Some([lo[0], lo[1], lo[0] + edge, hi[1]]),
                    at: None,
                    fix: "x".into(),
                },
                SupportCfg {
                    region: None,
                    at: Some([hi[0], lo[1]]),
                    fix: "y".into(),
                },
            ];
            loads = vec![LoadCfg {
                region: None,
                at: Some([lo[0], lo[1]]),
                force: [0.0, -2.0],
            }];
        }
        Benchmark::III => {
            supports = vec![
                SupportCfg {
                    region: Some([lo[0], lo[1], lo[0] + edge, lo[1] + corner]),
                    at: None,
                    fix: "xy".into(),
                },
                SupportCfg {
                    region: Some([lo[0], hi[1] - corner, lo[0] + edge, hi[1]]),
                    at: None,
                    fix: "xy".into(),
                },
            ];
            loads = vec![LoadCfg {
                region: None,
                at: Some([lo[0], mid_y]),
                force: [1.0, 0.0],
            }];
            mechanism = Some(MechanismCfg {
                output_at: [hi[0], mid_y],
                output_dir: [-1.0, 0.0],
                input_spring: 0.0,
                output_spring: 0.0,
            });
        }
        Benchmark::IV => {
            supports = vec![
                SupportCfg {
                    region: Some([lo[0], lo[1], lo[0] + edge, lo[1] + corner]),
                    at: None,
                    fix: "xy".into(),
                },
                SupportCfg {
                    region: Some([lo[0], hi[1] - corner, lo[0] + edge, hi[1]]),
                    at: None,
                    fix: "xy".into(),
                },
            ];
            loads = vec![LoadCfg {
                region: None,
                at: Some([lo[0], mid_y]),
                force: [1.0, 0.0],
            }];
            // crimper: upper jaw at the right edge closes downward
            mechanism = Some(MechanismCfg {
                output_at: [hi[0], mid_y + 0.25 * (hi[1] - lo[1])],
                output_dir: [0.0, -1.0],
                input_spring: 0.0,
                output_spring: 0.0,
            });
        }
    }

    let sed_threshold = match polarity {
        // at rho_min = 1e-3 the background keeps island SED near 1e-5
        Polarity::Positive => 1e-4,
        Polarity::Negative => 1e-6,
    };

    Ok(RunConfig {
        grid: GridCfg { n_cols, n_rows, cs },
        masks: MasksCfg {
            polarity,
            shape: MaskShape::Elliptical,
            alpha: 6.0,
            eta: 3.0,
            nx: Some(nx),
            ny: Some(ny),
            max_radius: 10.0,
            alpha_continuation: vec![],
        },
        objective: ObjectiveCfg { kind, scale: s_scale },
        lengthscale: LsCfg {
            min_ls: LsValue::CellMultiple(min_ls),
            max_ls: LsValue::CellMultiple(max_ls),
            p: 1,
        },
        sls: SlsSection {
            vf_init,
            sed_threshold,
            ..SlsSection::default()
        },
        fe: FeCfg::default(),
        supports,
        loads,
        mechanism,
        output: OutputCfg { dir: "out".into() },
        rng_seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ls_value_forms() {
        #[derive(Deserialize)]
        struct T {
            a: LsValue,
            b: LsValue,
        }
        let t: T = toml::from_str("a = 1.52\nb = \"4cs\"").unwrap();
        assert_eq!(t.a.resolve(0.38), 1.52);
        assert!((t.b.resolve(0.38) - 1.52).abs() < 1e-12);
        assert!(toml::from_str::<T>("a = 1\nb = \"4 meters\"").is_err());
    }

    #[test]
    fn benchmark_i_reference_setup() {
        let cfg = benchmark_config(Benchmark::I, 1.0, Polarity::Negative).unwrap();
        assert_eq!(cfg.grid.n_cols, 150);
        assert_eq!(cfg.grid.n_rows, 80);
        assert_eq!(cfg.grid.cs, 0.38);
        assert_eq!(cfg.masks.nx, Some(20));
        assert_eq!(cfg.masks.ny, Some(10));
        assert_eq!(cfg.masks.alpha, 6.0);
        assert_eq!(cfg.masks.eta, 3.0);
        assert_eq!(cfg.objective.kind, ObjectiveKind::Compliance);
        assert!((cfg.lengthscale.min_ls.resolve(0.38) - 1.52).abs() < 1e-12);
    }

    #[test]
    fn benchmark_scaling_keeps_domain() {
        let full = benchmark_config(Benchmark::I, 1.0, Polarity::Negative).unwrap();
        let desk = benchmark_config(Benchmark::I, 0.4, Polarity::Negative).unwrap();
        assert_eq!(desk.grid.n_cols, 60);
        assert_eq!(desk.grid.n_rows, 32);
        assert_eq!(desk.masks.nx, Some(8));
        assert_eq!(desk.masks.ny, Some(4));
        let w_full = full.grid.n_cols as f64 * full.grid.cs;
        let w_desk = desk.grid.n_cols as f64 * desk.grid.cs;
        assert!((w_full - w_desk).abs() < 1e-9);
    }

    #[test]
    fn build_resolves_everything() {
        let mut cfg = benchmark_config(Benchmark::I, 0.15, Polarity::Negative).unwrap();
        cfg.sls.step_evals = 5;
        let built = cfg.build().unwrap();
        assert!(!built.support_nodes.is_empty());
        assert_eq!(built.load_nodes.len(), 1);
        assert_eq!(built.masks0.masks.len(), 3 * 2);
        assert!(built.driver.cfg.ls.min_ls > 0.0);
    }

    #[test]
    fn mechanism_benchmarks_have_ports() {
        for b in [Benchmark::III, Benchmark::IV] {
            let cfg = benchmark_config(b, 0.2, Polarity::Negative).unwrap();
            assert!(cfg.mechanism.is_some());
            let built = cfg.build().unwrap();
            assert!(built.driver.model.has_output());
            assert_eq!(built.driver.s_scale, 1e6);
        }
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = benchmark_config(Benchmark::II, 0.3, Polarity::Positive).unwrap();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back.grid.n_cols, cfg.grid.n_cols);
        assert_eq!(back.masks.polarity, cfg.masks.polarity);
        assert_eq!(back.sls.sed_threshold, cfg.sls.sed_threshold);
        assert_eq!(
            back.lengthscale.min_ls.resolve(1.0),
            cfg.lengthscale.min_ls.resolve(1.0)
        );
    }

    #[test]
    fn config_errors_are_anchored() {
        let bad = "grid = { n_cols = 10, n_rows = }";
        let err = RunConfig::from_toml(bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line"), "error should carry a line anchor: {msg}");
    }

    #[test]
    fn empty_selector_is_rejected() {
        let mut cfg = benchmark_config(Benchmark::I, 0.15, Polarity::Negative).unwrap();
        cfg.supports[0].region = Some([-500.0, -500.0, -400.0, -400.0]);
        assert!(matches!(cfg.build(), Err(Error::Config(_))));
    }

    #[test]
    fn default_mask_count_rule() {
        // 100-unit axis, 5 variables per elliptical mask -> 20
        assert_eq!(RunConfig::default_mask_count(100.0, 5), 20);
        // 46-unit axis -> 9
        assert_eq!(RunConfig::default_mask_count(46.0, 5), 9);
        // circular masks divide by 3
        assert_eq!(RunConfig::default_mask_count(99.0, 3), 33);
        assert_eq!(RunConfig::default_mask_count(1.0, 5), 1);
    }
}
