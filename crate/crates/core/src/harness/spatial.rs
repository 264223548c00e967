use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::placer::{
    offset_stats, resolve_geometric, target_geometry, AxisConvention, CategoryMap, LlmPlacer, OffsetSample,
    PlacerError, ResolveConfig, SpatialSpecifier,
};
use crate::world::{load_scene, Held, Scene, Vec3};

/// One spatial-evaluation scene: a held object to place relative to a target
/// object or category.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCase {
    pub id: String,
    pub scene: Scene,
    pub held: Held,
    pub target: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    scene: String,
    target: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    case: Vec<ManifestEntry>,
}

/// Loads cases from a manifest of `[[case]]` tables with `id`, `scene` (a
/// scene file with a held object, relative to the manifest) and `target`.
pub fn load_spatial_cases(manifest: &Path) -> Result<Vec<SpatialCase>, HarnessError> {
    let text = fs::read_to_string(manifest).map_err(|e| HarnessError::io(manifest, e))?;
    let parsed: Manifest = toml::from_str(&text).map_err(|e| HarnessError::Scenario {
        path: manifest.display().to_string(),
        message: e.to_string(),
    })?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    parsed
        .case
        .into_iter()
        .map(|entry| {
            let path = base.join(&entry.scene);
            let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
            let scene_error = |message: String| HarnessError::Scene {
                path: path.display().to_string(),
                message,
            };
            let scene = load_scene(&text).map_err(|e| scene_error(e.to_string()))?;
            let held = scene
                .held()
                .cloned()
                .ok_or_else(|| scene_error("spatial scenes must hold an object".into()))?;
            Ok(SpatialCase {
                id: entry.id,
                scene,
                held,
                target: entry.target,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SpatialEvalConfig {
    pub specifiers: Vec<SpatialSpecifier>,
    pub trials: usize,
    /// Half-width of the uniform per-axis noise on target translations, m.
    pub sigma: f64,
    pub seed: u64,
    pub convention: AxisConvention,
    pub categories: CategoryMap,
    pub resolve: ResolveConfig,
    /// Resolve through the model sub-prompt instead of the geometric rule.
    pub llm: Option<LlmPlacer>,
}

impl Default for SpatialEvalConfig {
    fn default() -> Self {
        Self {
            specifiers: SpatialSpecifier::ALL.to_vec(),
            trials: 1,
            sigma: 0.0,
            seed: 0,
            convention: AxisConvention::default(),
            categories: CategoryMap::default(),
            resolve: ResolveConfig::default(),
            llm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialRow {
    pub specifier: SpatialSpecifier,
    pub location: String,
    /// `None` when every trial failed.
    pub avg_variance: Option<f64>,
    pub mean_offset: Option<[f64; 3]>,
    pub samples: usize,
    /// Model answers replaced by the geometric answer.
    pub fallbacks: usize,
    /// Distinct placer errors, `case: message`.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialReport {
    pub sigma: f64,
    pub trials: usize,
    pub seed: u64,
    pub cases: usize,
    /// `geometric` or the placement backend's identity.
    pub resolver: String,
    pub rows: Vec<SpatialRow>,
}

impl SpatialReport {
    pub fn row(&self, specifier: SpatialSpecifier) -> Option<&SpatialRow> {
        self.rows.iter().find(|r| r.specifier == specifier)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "Spatial evaluation: {} scenes, {} trial(s) each, noise ±{} m, seed {}, {} resolver\n\n",
            self.cases, self.trials, self.sigma, self.seed, self.resolver
        );
        out.push_str("| Location | Avg. Variance (m²) | ΔX | ΔY | ΔZ | Samples |\n|---|---:|---:|---:|---:|---:|\n");
        for row in &self.rows {
            let var = row.avg_variance.map_or("-".to_string(), |v| format!("{v:.6}"));
            let [dx, dy, dz] = row
                .mean_offset
                .map_or(["-".to_string(), "-".to_string(), "-".to_string()], |m| {
                    m.map(|v| format!("{v:.2}"))
                });
            out.push_str(&format!(
                "| {} | {var} | {dx} | {dy} | {dz} | {} |\n",
                row.location, row.samples
            ));
        }
        for row in self.rows.iter().filter(|r| !r.errors.is_empty()) {
            out.push_str(&format!("\n{} errors:\n", row.location));
            for e in &row.errors {
                out.push_str(&format!("- {e}\n"));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn case_targets(case: &SpatialCase, categories: &CategoryMap) -> Result<Vec<String>, String> {
    if case.scene.object(&case.target).is_some() {
        return Ok(vec![case.target.clone()]);
    }
    let category = categories.category_for_noun(&case.target).unwrap_or(&case.target);
    let ids: Vec<String> = case
        .scene
        .ids()
        .into_iter()
        .filter(|id| categories.is_member(category, id))
        .map(String::from)
        .collect();
    if ids.is_empty() {
        Err(format!("target {} is not in the scene", case.target))
    } else {
        Ok(ids)
    }
}

/// Unit draws in `[-1, 1]` for one (case, specifier) pair; the noise is
/// `sigma` times these, so every sigma sees the same draws.
fn unit_draws(seed: u64, stream: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Resolves every (case, specifier) `trials` times with uniform noise on the
/// target translations and aggregates offsets relative to the noise-free
/// target centroid.
pub fn run_spatial_eval(cases: &[SpatialCase], config: &SpatialEvalConfig) -> Result<SpatialReport, HarnessError> {
    if config.trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    if !(config.sigma.is_finite() && config.sigma >= 0.0) {
        return Err(HarnessError::Config(format!(
            "noise must be finite and >= 0 (got {})",
            config.sigma
        )));
    }
    let mut samples = Vec::new();
    let mut errors: Vec<(SpatialSpecifier, String)> = Vec::new();
    let mut fallbacks: Vec<SpatialSpecifier> = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let targets = match case_targets(case, &config.categories) {
            Ok(t) => t,
            Err(e) => {
                for &spec in &config.specifiers {
                    errors.push((spec, format!("{}: {e}", case.id)));
                }
                continue;
            }
        };
        let truth = target_geometry(&case.scene, &targets, config.convention.up_sign())
            .map_err(|e| HarnessError::Config(format!("{}: {e}", case.id)))?;
        for (si, &spec) in config.specifiers.iter().enumerate() {
            let draws = unit_draws(
                config.seed,
                (ci * SpatialSpecifier::ALL.len() + si) as u64,
                config.trials * targets.len() * 3,
            );
            for trial in 0..config.trials {
                let mut scene = case.scene.clone();
                for (ti, id) in targets.iter().enumerate() {
                    let k = (trial * targets.len() + ti) * 3;
                    let delta = Vec3::new(draws[k], draws[k + 1], draws[k + 2]) * config.sigma;
                    scene = scene.with_offset(id, delta);
                }
                let resolved: Result<_, PlacerError> = match &config.llm {
                    None => resolve_geometric(
                        &scene,
                        spec,
                        &targets,
                        case.held.diameter,
                        &config.convention,
                        &config.resolve,
                    )
                    .map(|r| (r.position, false)),
                    Some(llm) => {
                        let phrase = format!("{} the {}", spec.phrase(), case.target);
                        llm.resolve(
                            &scene,
                            spec,
                            &targets,
                            &phrase,
                            &case.held,
                            &config.convention,
                            &config.resolve,
                        )
                        .map(|p| (p.resolution.position, p.fell_back))
                    }
                };
                match resolved {
                    Ok((placed, fell_back)) => {
                        if fell_back {
                            fallbacks.push(spec);
                        }
                        samples.push(OffsetSample {
                            specifier: spec,
                            trial_group: case.id.clone(),
                            placed,
                            centroid: truth.centroid,
                        })
                    }
                    Err(e) => errors.push((spec, format!("{}: {e}", case.id))),
                }
            }
        }
    }
    let stats = offset_stats(&samples).ok();
    let rows = config
        .specifiers
        .iter()
        .map(|&spec| {
            let stat = stats.as_ref().and_then(|s| s.row(spec));
            let mut errs: Vec<String> = errors
                .iter()
                .filter(|(s, _)| *s == spec)
                .map(|(_, e)| e.clone())
                .collect();
            errs.dedup();
            SpatialRow {
                specifier: spec,
                location: spec.label().to_string(),
                avg_variance: stat.map(|r| r.avg_variance),
                mean_offset: stat.map(|r| r.mean_offset),
                samples: stat.map_or(0, |r| r.samples),
                fallbacks: fallbacks.iter().filter(|s| **s == spec).count(),
                errors: errs,
            }
        })
        .collect();
    Ok(SpatialReport {
        sigma: config.sigma,
        trials: config.trials,
        seed: config.seed,
        cases: cases.len(),
        resolver: config
            .llm
            .as_ref()
            .map_or("geometric".to_string(), |l| format!("model ({})", l.backend_identity())),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Pose6D, SceneObject, Table};

    fn case() -> SpatialCase {
        let scene = Scene::new(Table::new([-0.5, -0.5], [0.5, 0.5]))
            .with_object(SceneObject::new(
                "029_plate",
                Pose6D::at(Vec3::new(0.0, 0.0, -0.013)),
                0.26,
            ))
            .with_held(Held {
                id: "017_orange".into(),
                diameter: 0.07,
            });
        SpatialCase {
            id: "c1".into(),
            held: scene.held().cloned().unwrap(),
            scene,
            target: "029_plate".into(),
        }
    }

    #[test]
    fn zero_noise_has_zero_variance() {
        let report = run_spatial_eval(
            &[case()],
            &SpatialEvalConfig {
                trials: 5,
                ..Default::default()
            },
        )
        .unwrap();
        for row in &report.rows {
            assert_eq!(row.avg_variance, Some(0.0), "{}", row.location);
        }
        let left = report.row(SpatialSpecifier::Left).unwrap().mean_offset.unwrap();
        assert!(left[0] > 0.0 && left[0] > left[1].abs());
        let top = report.row(SpatialSpecifier::OnTop).unwrap().mean_offset.unwrap();
        assert_eq!((top[0], top[1]), (0.0, 0.0));
        assert!(report.to_markdown().contains("| on top | 0.000000 | 0.00 | 0.00 |"));
    }

    #[test]
    fn noise_gives_positive_variance_and_is_seeded() {
        let cfg = SpatialEvalConfig {
            trials: 20,
            sigma: 0.02,
            seed: 7,
            ..Default::default()
        };
        let a = run_spatial_eval(&[case()], &cfg).unwrap();
        assert!(a.rows.iter().all(|r| r.avg_variance.unwrap() > 0.0));
        assert_eq!(a, run_spatial_eval(&[case()], &cfg).unwrap());
        assert!(run_spatial_eval(&[case()], &SpatialEvalConfig { trials: 0, ..cfg }).is_err());
    }

    #[test]
    fn model_resolver_path_counts_fallbacks() {
        use std::sync::Arc;

        use crate::llm_backend::ReplayBackend;
        // Left of the plate is (0.185, 0, -0.035); the second reply is off the table.
        let backend = ReplayBackend::from_responses(["(0.19, 0.0, -0.035)", "(2.0, 0.0, 0.0)"]);
        let cfg = SpatialEvalConfig {
            specifiers: vec![SpatialSpecifier::Left],
            trials: 2,
            llm: Some(LlmPlacer::new(Arc::new(backend))),
            ..Default::default()
        };
        let report = run_spatial_eval(&[case()], &cfg).unwrap();
        let row = report.row(SpatialSpecifier::Left).unwrap();
        assert_eq!((row.samples, row.fallbacks), (2, 1));
        assert!(row.avg_variance.unwrap() > 0.0);
        assert!(report.resolver.starts_with("model"));
    }
}
