use clutterbench_core::assets::{AssetCatalog, Regime};
use clutterbench_core::benchmark::{safety_report, ReferenceModel, Subspace, DEFAULT_RELATIVE_RIDGE};
use clutterbench_core::embodiment::Embodiment;
use clutterbench_core::io::{load_scene, write_json};
use clutterbench_core::navigability::is_navigable;
use clutterbench_core::scenegen::{generate_scene, GenerationConfig};
use clutterbench_core::trajectory::{self, synthesize_walk, GaitProfile, WalkParams};

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cb-pipeline-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn scene_to_reports() {
    let emb = Embodiment::default_humanoid();
    let catalog = AssetCatalog::starter();
    let cfg = GenerationConfig::new(Regime::Domestic, "living_room", [7.0, 5.0], 0.25, 11);
    let scene = generate_scene(&cfg, &catalog, &emb).unwrap();
    assert!(is_navigable(&scene, &emb, &cfg.navigation));

    let dir = temp_dir("scene");
    let path = dir.join("scene.json");
    write_json(&path, &scene).unwrap();
    let loaded = load_scene(&path).unwrap();
    assert_eq!(loaded, scene);

    let corpus: Vec<_> =
        (0..5).map(|s| synthesize_walk(&emb, &WalkParams::new(GaitProfile::Flat, 6.0, s)).unwrap()).collect();
    let model = ReferenceModel::fit(&corpus, &emb, DEFAULT_RELATIVE_RIDGE).unwrap();

    let mut p = WalkParams::new(GaitProfile::Crouched, 4.0, 40);
    p.start = scene.zone_start.center();
    let goal = scene.zone_goal.center();
    p.heading_rad = (goal[1] - p.start[1]).atan2(goal[0] - p.start[0]);
    let walk = synthesize_walk(&emb, &p).unwrap();

    let traj_path = dir.join("walk.trajb");
    trajectory::save(&walk, &traj_path).unwrap();
    let walk = trajectory::load(&traj_path).unwrap();
    assert!(trajectory::validate(&walk, &emb).passed());

    let adaptation = model.score(&walk, &emb).unwrap();
    assert!(adaptation.score(Subspace::Vertical).normalized > 1.0);
    let safety = safety_report(&walk, &loaded, &emb, 50.0).unwrap();
    assert_eq!(safety.frames, walk.len());
    safety.metrics.check_identity().unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn text_and_binary_formats_agree() {
    let emb = Embodiment::default_humanoid();
    let walk = synthesize_walk(&emb, &WalkParams::new(GaitProfile::SideStep, 2.0, 3)).unwrap();
    let dir = temp_dir("formats");
    let (text, binary) = (dir.join("w.traj"), dir.join("w.trajb"));
    trajectory::save(&walk, &text).unwrap();
    trajectory::save(&walk, &binary).unwrap();
    let a = trajectory::load(&text).unwrap();
    let b = trajectory::load(&binary).unwrap();
    assert_eq!(a, walk);
    assert_eq!(a.len(), b.len());
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        for (ka, kb) in fa.keypoints.iter().zip(&fb.keypoints) {
            // Binary keypoints are single precision.
            assert!((ka - kb).amax() <= 1e-5);
        }
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
