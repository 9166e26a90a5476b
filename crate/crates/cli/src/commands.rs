use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use clutterbench_core::analysis::{density_distribution, pca_project, STANDARDIZATION};
use clutterbench_core::assets::{AssetCatalog, Regime};
use clutterbench_core::benchmark::{
    extract_features, safety_report_with, write_rows_csv, AdaptationReport, EvaluationRow, ReferenceModel,
    SafetyReport, Subspace, SubspaceFeatures,
};
use clutterbench_core::embodiment::Embodiment;
use clutterbench_core::geometry::SceneGeometry;
use clutterbench_core::io::{load_catalog, load_embodiment, load_scene, parse_json, write_atomic, write_json};
use clutterbench_core::navigability::{is_navigable, Connectivity};
use clutterbench_core::scenegen::{generate_scene, realized_clutterness, GenerationConfig, Scene};
use clutterbench_core::trajectory::{self, synthesize_walk, GaitProfile, Trajectory, WalkParams};
use clutterbench_core::{Error, TOOL_VERSION};

use crate::{
    AnalyzeArgs, ConnectivityArg, EvaluateArgs, GenerateArgs, ProfileArg, RegimeArg, SynthArgs, ValidateArgs,
    VerifyArgs,
};

pub const GENERATION_MANIFEST_SCHEMA: &str = "clutterbench.generation-manifest/1";
pub const EVALUATION_MANIFEST_SCHEMA: &str = "clutterbench.evaluation-manifest/1";
pub const ANALYSIS_MANIFEST_SCHEMA: &str = "clutterbench.analysis-manifest/1";

fn embodiment(path: &Option<PathBuf>) -> Result<Embodiment> {
    match path {
        Some(p) => load_embodiment(p).with_context(|| format!("loading embodiment {}", p.display())),
        None => Ok(Embodiment::default_humanoid()),
    }
}

fn catalog(path: &Option<PathBuf>) -> Result<AssetCatalog> {
    match path {
        Some(p) => load_catalog(p).with_context(|| format!("loading catalog {}", p.display())),
        None => Ok(AssetCatalog::starter()),
    }
}

fn is_trajectory_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("traj" | "trajb"))
}

/// Files in `dir` accepted by `keep`, sorted by name.
fn list_dir(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let p = entry?.path();
        if p.is_file() && keep(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn load_trajectories(dir: &Path) -> Result<Vec<Trajectory>> {
    list_dir(dir, is_trajectory_file)?
        .iter()
        .map(|p| trajectory::load(p).with_context(|| format!("loading trajectory {}", p.display())))
        .collect()
}

#[derive(Serialize)]
struct GenerationEntry {
    index: usize,
    seed: u64,
    target_clutterness: f64,
    status: &'static str,
    file: Option<String>,
    scene_id: Option<String>,
    realized_clutterness: Option<f64>,
    annealing_level: Option<u32>,
    wall_clock_s: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct GenerationManifest {
    schema: &'static str,
    tool_version: &'static str,
    base_seed: u64,
    requested: usize,
    generated: usize,
    failed: usize,
    base_config: GenerationConfig,
    catalog_version: String,
    embodiment_id: String,
    entries: Vec<GenerationEntry>,
}

pub fn generate(a: GenerateArgs, seed: u64) -> Result<usize> {
    let emb = embodiment(&a.embodiment)?;
    let cat = catalog(&a.catalog)?;
    let regime = match a.regime {
        RegimeArg::Domestic => Regime::Domestic,
        RegimeArg::Debris => Regime::Debris,
    };
    let targets: Vec<f64> = match (&a.clutterness, &a.clutterness_range) {
        (_, Some(r)) => {
            ensure!(r[0] <= r[1], "clutterness range must be increasing");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..a.count).map(|_| rng.random_range(r[0]..=r[1])).collect()
        }
        (c, None) => vec![c.unwrap_or(0.3); a.count],
    };
    let mut base = GenerationConfig::new(
        regime,
        &a.room_type,
        [a.room_size[0], a.room_size[1]],
        targets.first().copied().unwrap_or(0.3),
        seed,
    );
    base.spawn_zone_size_m = a.spawn_zone;
    base.navigation.resolution_m = a.resolution;
    base.navigation.connectivity = match a.connectivity {
        ConnectivityArg::Four => Connectivity::Four,
        ConnectivityArg::Eight => Connectivity::Eight,
    };
    base.navigation.height_cutoff_fraction = a.height_cutoff;
    base.annealing.max_level = a.max_level;
    base.validate().context("invalid generation parameters")?;
    for &c in &targets {
        let mut cfg = base.clone();
        cfg.target_clutterness = c;
        cfg.validate().context("invalid generation parameters")?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let results: Vec<(GenerationEntry, Option<Error>)> = targets
        .par_iter()
        .enumerate()
        .map(|(i, &c)| {
            let mut cfg = base.clone();
            cfg.seed = seed.wrapping_add(i as u64);
            cfg.target_clutterness = c;
            let started = Instant::now();
            let outcome = generate_scene(&cfg, &cat, &emb);
            let wall = started.elapsed().as_secs_f64();
            let mut entry = GenerationEntry {
                index: i,
                seed: cfg.seed,
                target_clutterness: c,
                status: "failed",
                file: None,
                scene_id: None,
                realized_clutterness: None,
                annealing_level: None,
                wall_clock_s: wall,
                error: None,
            };
            match outcome.and_then(|scene| {
                let name = format!("scene_{i:04}.json");
                write_json(&a.out.join(&name), &scene)?;
                Ok((scene, name))
            }) {
                Ok((scene, name)) => {
                    entry.status = "generated";
                    entry.file = Some(name);
                    entry.scene_id = Some(scene.id.clone());
                    entry.realized_clutterness = Some(scene.realized_clutterness);
                    entry.annealing_level = Some(scene.annealing_level_used);
                    (entry, None)
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    (entry, Some(e))
                }
            }
        })
        .collect();

    let mut entries = Vec::with_capacity(results.len());
    let mut config_error = None;
    for (entry, err) in results {
        if let Some(e) = err {
            tracing::warn!(index = entry.index, seed = entry.seed, "{e}");
            if e.is_configuration() && config_error.is_none() {
                config_error = Some(e);
            }
        }
        entries.push(entry);
    }
    let failed = entries.iter().filter(|e| e.status == "failed").count();
    let manifest = GenerationManifest {
        schema: GENERATION_MANIFEST_SCHEMA,
        tool_version: TOOL_VERSION,
        base_seed: seed,
        requested: a.count,
        generated: entries.len() - failed,
        failed,
        base_config: base,
        catalog_version: cat.version.clone(),
        embodiment_id: emb.id.clone(),
        entries,
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    if let Some(e) = config_error {
        return Err(e).context("scene generation misconfigured");
    }
    println!("generated {} of {} scenes into {}", manifest.generated, a.count, a.out.display());
    Ok(failed)
}

/// Problems found when re-checking a scene, empty if it passes.
fn scene_problems(scene: &Scene, emb: &Embodiment) -> Vec<String> {
    let mut out = scene.violations();
    if scene.embodiment.id != emb.id || scene.embodiment.clearance_radius_m != emb.clearance_radius_m {
        out.push(format!("scene was generated for embodiment {:?}, not {:?}", scene.embodiment.id, emb.id));
        return out;
    }
    if !is_navigable(scene, emb, &scene.config.navigation) {
        out.push("start and goal zones are not connected".into());
    }
    let c = realized_clutterness(scene);
    if (c - scene.realized_clutterness).abs() > 1e-9 {
        out.push(format!("recorded realized clutterness {} but recomputed {c}", scene.realized_clutterness));
    }
    for w in scene.annealing_trace.windows(2) {
        if w[1].realized_clutterness > w[0].realized_clutterness + 1e-12 {
            out.push(format!("annealing trace increases density at level {}", w[1].level));
        }
    }
    out
}

pub fn verify(a: VerifyArgs) -> Result<usize> {
    let emb = embodiment(&a.embodiment)?;
    let mut failed = 0;
    for path in &a.scenes {
        let problems = match load_scene(path) {
            Ok(scene) => scene_problems(&scene, &emb),
            Err(e) => vec![e.to_string()],
        };
        if problems.is_empty() {
            println!("ok   {}", path.display());
        } else {
            failed += 1;
            println!("FAIL {}: {}", path.display(), problems.join("; "));
        }
    }
    Ok(failed)
}

pub fn synth_walk(a: SynthArgs, seed: u64) -> Result<usize> {
    let emb = embodiment(&a.embodiment)?;
    let profile = match a.profile {
        ProfileArg::Flat => GaitProfile::Flat,
        ProfileArg::Crouched => GaitProfile::Crouched,
        ProfileArg::SideStep => GaitProfile::SideStep,
    };
    let scene = match &a.scene {
        Some(p) => Some(load_scene(p).with_context(|| format!("loading scene {}", p.display()))?),
        None => None,
    };
    let (start, heading) = match &scene {
        Some(s) => {
            let (from, to) = (s.zone_start.center(), s.zone_goal.center());
            (from, (to[1] - from[1]).atan2(to[0] - from[0]))
        }
        None => ([0.0, 0.0], 0.0),
    };
    let start = a.start.as_ref().map_or(start, |v| [v[0], v[1]]);
    let heading = a.heading.unwrap_or(heading);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for i in 0..a.count {
        let mut params = WalkParams::new(profile, a.duration, seed.wrapping_add(i));
        params.speed_mps = a.speed;
        params.frame_rate_hz = a.rate;
        params.perturbation = a.perturbation;
        params.start = start;
        params.heading_rad = heading;
        let traj = synthesize_walk(&emb, &params).context("invalid walk parameters")?;
        let ext = if a.binary { "trajb" } else { "traj" };
        let path = a.out.join(format!("{}.{ext}", traj.id));
        trajectory::save(&traj, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(0)
}

#[derive(Serialize)]
struct EvaluationEntry {
    trajectory: String,
    status: &'static str,
    trajectory_id: Option<String>,
    adaptation_report: Option<String>,
    safety_report: Option<String>,
    error: Option<String>,
}

#[derive(Serialize)]
struct EvaluationManifest {
    schema: &'static str,
    tool_version: &'static str,
    scene_id: String,
    embodiment_id: String,
    corpus: Vec<String>,
    sample_density_per_m: f64,
    floor_contact_tolerance_m: f64,
    relative_ridge: f64,
    evaluated: usize,
    failed: usize,
    entries: Vec<EvaluationEntry>,
}

fn evaluate_one(
    path: &Path,
    emb: &Embodiment,
    model: &ReferenceModel,
    geom: &SceneGeometry,
    scene_id: &str,
    density: f64,
) -> Result<(Trajectory, AdaptationReport, SafetyReport)> {
    let traj = trajectory::load(path)?;
    ensure!(
        traj.embodiment_id == emb.id,
        "{}: embodiment_id {:?} does not match {:?}",
        path.display(),
        traj.embodiment_id,
        emb.id
    );
    let report = trajectory::validate(&traj, emb);
    if let Some(f) = report.failures().next() {
        bail!("{}: {} check failed: {}", path.display(), f.name, f.detail);
    }
    let adaptation = model.score(&traj, emb)?;
    let safety = safety_report_with(&traj, geom, scene_id, emb, density)?;
    Ok((traj, adaptation, safety))
}

pub fn evaluate(a: EvaluateArgs) -> Result<usize> {
    let emb = embodiment(&a.embodiment)?;
    let scene = load_scene(&a.scene).with_context(|| format!("loading scene {}", a.scene.display()))?;
    ensure!(
        scene.embodiment.id == emb.id,
        "{}: scene embodiment {:?} does not match {:?}",
        a.scene.display(),
        scene.embodiment.id,
        emb.id
    );
    ensure!(a.sample_density > 0.0, "--sample-density must be positive");
    ensure!(a.floor_tolerance >= 0.0, "--floor-tolerance must be non-negative");
    ensure!(a.ridge >= 0.0, "--ridge must be non-negative");
    let corpus = load_trajectories(&a.corpus)?;
    if let Some(t) = corpus.iter().find(|t| t.embodiment_id != emb.id) {
        bail!("corpus trajectory {:?} has embodiment {:?}, expected {:?}", t.id, t.embodiment_id, emb.id);
    }
    let model = ReferenceModel::fit(&corpus, &emb, a.ridge).context("fitting reference corpus")?;
    let geom = SceneGeometry::compile(&scene).with_floor_contact_tolerance(a.floor_tolerance);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let results: Vec<Result<(Trajectory, AdaptationReport, SafetyReport)>> =
        a.trajectories.par_iter().map(|p| evaluate_one(p, &emb, &model, &geom, &scene.id, a.sample_density)).collect();

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (path, result) in a.trajectories.iter().zip(results) {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut entry = EvaluationEntry {
            trajectory: path.display().to_string(),
            status: "failed",
            trajectory_id: None,
            adaptation_report: None,
            safety_report: None,
            error: None,
        };
        let written = result.and_then(|(traj, adaptation, safety)| {
            let (an, sn) = (format!("{stem}.adaptation.json"), format!("{stem}.safety.json"));
            write_json(&a.out.join(&an), &adaptation)?;
            write_json(&a.out.join(&sn), &safety)?;
            Ok((traj, adaptation, safety, an, sn))
        });
        match written {
            Ok((traj, adaptation, safety, an, sn)) => {
                rows.push(EvaluationRow::new(&adaptation, &safety));
                entry.status = "evaluated";
                entry.trajectory_id = Some(traj.id);
                entry.adaptation_report = Some(an);
                entry.safety_report = Some(sn);
            }
            Err(e) => {
                eprintln!("FAIL {}: {e:#}", path.display());
                entry.error = Some(format!("{e:#}"));
            }
        }
        entries.push(entry);
    }
    let failed = entries.iter().filter(|e| e.status == "failed").count();
    let mut csv = Vec::new();
    write_rows_csv(&rows, &mut csv)?;
    write_atomic(&a.out.join("evaluation.csv"), &csv)?;
    write_json(
        &a.out.join("evaluation_manifest.json"),
        &EvaluationManifest {
            schema: EVALUATION_MANIFEST_SCHEMA,
            tool_version: TOOL_VERSION,
            scene_id: scene.id.clone(),
            embodiment_id: emb.id.clone(),
            corpus: model.member_ids.clone(),
            sample_density_per_m: a.sample_density,
            floor_contact_tolerance_m: a.floor_tolerance,
            relative_ridge: a.ridge,
            evaluated: rows.len(),
            failed,
            entries,
        },
    )?;
    println!("evaluated {} of {} trajectories into {}", rows.len(), a.trajectories.len(), a.out.display());
    Ok(failed)
}

#[derive(Serialize)]
struct PcaSummary {
    subspace: Subspace,
    baseline_rows: usize,
    dataset_rows: usize,
    explained_variance_ratio: [f64; 2],
    file: String,
}

#[derive(Serialize)]
struct AnalysisManifest {
    schema: &'static str,
    tool_version: &'static str,
    scenes: usize,
    histogram_bins: usize,
    density_regimes: Vec<String>,
    reports: usize,
    pca_standardization: &'static str,
    pca: Vec<PcaSummary>,
    artifacts: Vec<String>,
}

const REPORT_COLUMNS: [&str; 9] = [
    "posture",
    "vertical",
    "foot",
    "smoothness",
    "aggregate",
    "collision_rate",
    "max_depth_m",
    "conditional_mean_depth_m",
    "penetration_integral_m",
];

fn report_value(r: &EvaluationRow, col: &str) -> f64 {
    match col {
        "posture" => r.posture,
        "vertical" => r.vertical,
        "foot" => r.foot,
        "smoothness" => r.smoothness,
        "aggregate" => r.aggregate,
        "collision_rate" => r.collision_rate,
        "max_depth_m" => r.max_depth_m,
        "conditional_mean_depth_m" => r.conditional_mean_depth_m,
        _ => r.penetration_integral_m,
    }
}

fn pooled(trajs: &[Trajectory], emb: &Embodiment, s: Subspace) -> Result<SubspaceFeatures> {
    let parts = trajs
        .iter()
        .map(|t| extract_features(t, emb, s).with_context(|| format!("features of {}", t.id)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubspaceFeatures::concat(&parts)?)
}

pub fn analyze(a: AnalyzeArgs) -> Result<usize> {
    ensure!(a.bins > 0, "--bins must be positive");
    let mut artifacts = Vec::new();
    let mut write = |name: &str, bytes: &[u8]| -> Result<()> {
        write_atomic(&a.out.join(name), bytes)?;
        artifacts.push(name.to_string());
        Ok(())
    };

    let mut scenes = Vec::new();
    if let Some(dir) = &a.scenes {
        for p in list_dir(dir, |p| {
            p.extension().is_some_and(|e| e == "json") && p.file_name().is_some_and(|n| n != "manifest.json")
        })? {
            scenes.push(load_scene(&p).with_context(|| format!("loading scene {}", p.display()))?);
        }
    }
    let mut rows: Vec<EvaluationRow> = Vec::new();
    if let Some(dir) = &a.reports {
        for p in list_dir(dir, |p| p.extension().is_some_and(|e| e == "csv"))? {
            let mut reader = csv::Reader::from_path(&p).with_context(|| format!("reading {}", p.display()))?;
            for (i, row) in reader.deserialize().enumerate() {
                rows.push(row.with_context(|| format!("{}: row {}", p.display(), i + 2))?);
            }
        }
    }
    let baseline = match &a.corpus {
        Some(d) => load_trajectories(d)?,
        None => Vec::new(),
    };
    let dataset = match &a.trajectories {
        Some(d) => load_trajectories(d)?,
        None => Vec::new(),
    };
    if scenes.is_empty() && rows.is_empty() && (baseline.is_empty() || dataset.is_empty()) {
        bail!("nothing to analyze: supply scenes, evaluation reports, or both corpus and dataset trajectories");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let mut density_regimes = Vec::new();
    if !scenes.is_empty() {
        let dist = density_distribution(&scenes, a.bins)?;
        density_regimes = dist.regimes.iter().map(|r| r.regime.to_string()).collect();
        write("density.csv", dist.to_csv()?.as_bytes())?;
        if a.svg {
            write("density.svg", dist.to_svg().as_bytes())?;
        }
    }

    if !rows.is_empty() {
        rows.sort_by(|x, y| (&x.scene_id, &x.trajectory_id).cmp(&(&y.scene_id, &y.trajectory_id)));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "count", "mean", "min", "max"])?;
        for col in REPORT_COLUMNS {
            let mut sum = 0.0;
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for r in &rows {
                let v = report_value(r, col);
                sum += v;
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let mean = sum / rows.len() as f64;
            w.write_record([col, &rows.len().to_string(), &mean.to_string(), &lo.to_string(), &hi.to_string()])?;
        }
        let summary = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        write("report_summary.csv", &summary)?;
    }

    let mut pca = Vec::new();
    if !baseline.is_empty() && !dataset.is_empty() {
        let emb = embodiment(&a.embodiment)?;
        let projections = Subspace::ALL
            .par_iter()
            .map(|&s| {
                let (b, d) = (pooled(&baseline, &emb, s)?, pooled(&dataset, &emb, s)?);
                Ok((b.frames(), d.frames(), pca_project(&b, &d)?))
            })
            .collect::<Result<Vec<_>>>()?;
        for (nb, nd, p) in projections {
            let name = format!("pca_{}.csv", p.subspace);
            write(&name, p.to_csv()?.as_bytes())?;
            if a.svg {
                write(&format!("pca_{}.svg", p.subspace), p.to_svg().as_bytes())?;
            }
            pca.push(PcaSummary {
                subspace: p.subspace,
                baseline_rows: nb,
                dataset_rows: nd,
                explained_variance_ratio: p.explained_variance_ratio,
                file: name,
            });
        }
    }

    let manifest = AnalysisManifest {
        schema: ANALYSIS_MANIFEST_SCHEMA,
        tool_version: TOOL_VERSION,
        scenes: scenes.len(),
        histogram_bins: a.bins,
        density_regimes,
        reports: rows.len(),
        pca_standardization: STANDARDIZATION,
        pca,
        artifacts,
    };
    write_json(&a.out.join("analysis_manifest.json"), &manifest)?;
    println!("wrote {} artifacts into {}", manifest.artifacts.len(), a.out.display());
    Ok(0)
}

fn lint(path: &Path, emb: &Embodiment) -> Result<String> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(trajectory::BINARY_MAGIC) || bytes.starts_with(trajectory::TEXT_MAGIC.as_bytes()) {
        let traj = trajectory::load(path)?;
        let report = trajectory::validate(&traj, emb);
        if let Some(f) = report.failures().next() {
            bail!("{} check failed: {}", f.name, f.detail);
        }
        return Ok(format!("trajectory {:?}, {} frames", traj.id, traj.len()));
    }
    let source = path.display().to_string();
    let text = String::from_utf8(bytes).with_context(|| format!("{source}: not UTF-8"))?;
    let value: serde_json::Value = parse_json(&text, &source)?;
    let schema = value.get("schema").and_then(|s| s.as_str()).unwrap_or_default().to_string();
    let kind = schema.split('/').next().unwrap_or_default();
    match kind {
        "clutterbench.embodiment" => {
            load_embodiment(path)?;
        }
        "clutterbench.catalog" => {
            load_catalog(path)?;
        }
        "clutterbench.scene" => {
            let scene = load_scene(path)?;
            let problems = scene_problems(&scene, emb);
            ensure!(problems.is_empty(), "{}", problems.join("; "));
        }
        "clutterbench.adaptation" => {
            parse_json::<AdaptationReport>(&text, &source)?;
        }
        "clutterbench.safety" => {
            let r: SafetyReport = parse_json(&text, &source)?;
            r.metrics.check_identity()?;
        }
        "clutterbench.generation-manifest" | "clutterbench.evaluation-manifest" | "clutterbench.analysis-manifest" => {}
        "" => bail!("{source}: missing \"schema\" field"),
        _ => bail!("{source}: unrecognized schema {schema:?}"),
    }
    Ok(schema)
}

pub fn validate(a: ValidateArgs) -> Result<usize> {
    let emb = embodiment(&a.embodiment)?;
    let mut failed = 0;
    for path in &a.files {
        match lint(path, &emb) {
            Ok(what) => println!("ok   {} ({what})", path.display()),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e:#}", path.display());
            }
        }
    }
    Ok(failed)
}
