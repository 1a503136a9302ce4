use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semcycle::fixtures::{sphere_grid, CorpusParams};
use semcycle::geometry::VoxelGrid;
use semcycle::pipeline::{Manifest, PipelineConfig};
use semcycle::project_eval::EvalReport;
use semcycle::transfer::KeypointSet;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semcycle")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small two-scene corpus written through the CLI.
fn corpus(dir: &Path, extra: &[&str]) -> PathBuf {
    let params = CorpusParams { scenes: 2, grid_size: 24, dense_samples: 400, library_models: 2, ..Default::default() };
    std::fs::write(dir.join("params.json"), serde_json::to_string(&params).unwrap()).unwrap();
    let mut args = vec!["make-fixtures", "corpus", "--params", "params.json", "--seed", "11"];
    args.extend_from_slice(extra);
    let o = run(dir, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("corpus")
}

#[test]
fn mesh_prints_sphere_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    sphere_grid(32, 0.3).write(&dir.path().join("s.voxf")).unwrap();
    let o = run(dir.path(), &["mesh", "s.voxf", "-o", "s.obj"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("euler_characteristic: 2"), "{out}");
    assert!(out.contains("watertight: true"));
    assert!(dir.path().join("s.obj").exists());
}

#[test]
fn mesh_of_empty_grid_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    VoxelGrid::zeros([8, 8, 8]).write(&dir.path().join("z.voxf")).unwrap();
    let o = run(dir.path(), &["mesh", "z.voxf", "-o", "z.obj"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("WARN"), "{}", stderr(&o));
    assert!(stdout(&o).contains("faces: 0"));
    let text = std::fs::read_to_string(dir.path().join("z.obj")).unwrap();
    assert!(!text.lines().any(|l| l.starts_with("f ") || l.starts_with("v ")));
}

#[test]
fn truncated_voxels_fail_with_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = sphere_grid(8, 0.3).to_bytes();
    std::fs::write(dir.path().join("t.voxf"), &bytes[..bytes.len() - 3]).unwrap();
    let o = run(dir.path(), &["mesh", "t.voxf", "-o", "t.obj"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unexpected end of voxel payload"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["mesh"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn finetune_from_distribution_logs_decoded_init() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    let mut az = vec![0.0; 24];
    let mut el = vec![0.0; 12];
    az[3] = 1.0;
    el[8] = 1.0;
    let dist = serde_json::json!({ "azimuth_probs": az, "elevation_probs": el });
    std::fs::write(dir.path().join("d.json"), dist.to_string()).unwrap();
    let mesh = c.join("scene_000/gt_mesh.obj");
    let sil = c.join("scene_000/silhouette.pgm");
    let o = run(
        dir.path(),
        &[
            "finetune",
            "--mesh",
            mesh.to_str().unwrap(),
            "--silhouette",
            sil.to_str().unwrap(),
            "--distribution",
            "d.json",
            "-o",
            "vp.json",
            "--steps",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("initial viewpoint (45, 37.5)"), "{}", stderr(&o));
}

#[test]
fn finetune_at_the_true_pose_has_zero_loss() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    let gt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(c.join("scene_001/gt_viewpoint.json")).unwrap()).unwrap();
    let (a, e) = (gt["azimuth_deg"].to_string(), gt["elevation_deg"].to_string());
    let o = run(
        &c,
        &[
            "finetune",
            "--mesh",
            "scene_001/gt_mesh.obj",
            "--silhouette",
            "scene_001/silhouette.pgm",
            "--init-azimuth",
            &a,
            "--init-elevation",
            &e,
            "-o",
            "vp.json",
            "--trace",
            "trace.csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("loss: 0 "), "{}", stdout(&o));
    let trace = std::fs::read_to_string(c.join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,azimuth_deg,elevation_deg,loss\n"));
}

#[test]
fn finetune_rejects_a_silhouette_of_the_wrong_size() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    let o = run(
        &c,
        &[
            "--resolution",
            "32",
            "finetune",
            "--mesh",
            "scene_000/gt_mesh.obj",
            "--silhouette",
            "scene_000/silhouette.pgm",
            "--init-azimuth",
            "10",
            "--init-elevation",
            "0",
            "-o",
            "vp.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));
}

#[test]
fn transfer_identity_fixture_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &["--embedding-noise", "0"]);
    let base = ["transfer", "--mesh", "scene_000/gt_mesh.obj", "--dense", "scene_000/dense_gt.json", "--db"];
    let mut outputs = Vec::new();
    for (db, out, flags) in [
        ("scene_000/gt_database.json", "a.json", vec![]),
        ("scene_000/gt_database.json", "b.json", vec!["--brute-force"]),
        ("library_wedge.json", "c.json", vec!["--nn-mode", "per-model"]),
        ("library_wedge.json", "d.json", vec!["--nn-mode", "per-model"]),
    ] {
        let mut args: Vec<&str> = base.to_vec();
        args.extend([db, "-o", out]);
        args.extend(flags);
        let o = run(&c, &args);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(c.join(out)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[2], outputs[3]);

    let got = KeypointSet::load(&c.join("a.json")).unwrap();
    let gt = KeypointSet::load(&c.join("scene_000/gt_keypoints.json")).unwrap();
    assert_eq!(got.keypoints.len(), gt.keypoints.len());
    for k in &gt.keypoints {
        assert_eq!(got.get(k.semantic_id).unwrap().position3d, k.position3d);
    }
}

#[test]
fn transfer_rejects_mismatched_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    let db = serde_json::json!({
        "dimension": 3,
        "models": [{"model_id": "m", "keypoints": [{"semantic_id": 0, "position": [0.0, 0.0, 0.0], "embedding": [1.0, 0.0, 0.0]}]}]
    });
    std::fs::write(c.join("small.json"), db.to_string()).unwrap();
    let o = run(&c, &["transfer", "--dense", "scene_000/dense_gt.json", "--db", "small.json", "-o", "k.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension"), "{}", stderr(&o));
}

#[test]
fn project_eval_of_ground_truth_is_perfect_and_sweeps_monotonically() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    let o = run(
        &c,
        &[
            "--resolution",
            "64",
            "--alpha",
            "0.05,0.1,0.2",
            "project-eval",
            "--keypoints",
            "scene_000/gt_keypoints.json",
            "--mesh",
            "scene_000/gt_mesh.obj",
            "--viewpoint",
            "scene_000/gt_viewpoint.json",
            "--gt",
            "scene_000/gt_keypoints.json",
            "-o",
            "report.json",
            "--overlay",
            "overlay.ppm",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let reports: Vec<EvalReport> = serde_json::from_str(&std::fs::read_to_string(c.join("report.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports[1].mean, 1.0);
    assert!(reports.windows(2).all(|w| w[0].mean <= w[1].mean));
    let ppm = std::fs::read(c.join("overlay.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n64 64\n255\n"));
    assert_eq!(ppm.len(), b"P6\n64 64\n255\n".len() + 64 * 64 * 3);
}

#[test]
fn project_eval_without_shared_ids_is_a_coverage_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    std::fs::write(c.join("gt2d.json"), r#"[{"semantic_id": 999, "pixel": [3.0, 4.0]}]"#).unwrap();
    let o = run(
        &c,
        &[
            "--resolution",
            "64",
            "project-eval",
            "--keypoints",
            "scene_000/gt_keypoints.json",
            "--mesh",
            "scene_000/gt_mesh.obj",
            "--viewpoint",
            "scene_000/gt_viewpoint.json",
            "--gt",
            "gt2d.json",
            "-o",
            "report.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("coverage"), "{}", stderr(&o));
}

#[test]
fn pipeline_rejects_an_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    Manifest::default().save(&dir.path().join("manifest.json")).unwrap();
    PipelineConfig::default().save(&dir.path().join("config.json")).unwrap();
    let o = run(dir.path(), &["pipeline", "config.json", "-o", "out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty manifest"), "{}", stderr(&o));
}

#[test]
fn pipeline_all_gt_is_perfect_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    let args = ["--gt-shape", "--gt-viewpoint", "--gt-semantic-model", "pipeline", "pipeline.json", "-o"];
    let a = run(&c, &[&args[..], &["out_a"]].concat());
    let b = run(&c, &[&args[..], &["out_b"]].concat());
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let ra = std::fs::read(c.join("out_a/report.json")).unwrap();
    assert_eq!(ra, std::fs::read(c.join("out_b/report.json")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(report["evaluations"][0]["mean"], 1.0);
    assert_eq!(report["config"]["swap"]["use_gt_viewpoint"], true);
}

#[test]
fn pipeline_continues_past_a_failed_scene_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path(), &[]);
    // corrupt one scene's predicted grid
    std::fs::write(c.join("scene_001/pred_voxels.voxf"), b"VOXF").unwrap();
    let o = run(&c, &["pipeline", "pipeline.json", "-o", "out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scene_001"), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(c.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], 1);
    assert!(report["scenes"][0]["record"].is_object());
}
