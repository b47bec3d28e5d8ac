//! End-to-end pipeline driver: synthetic data generation, surface
//! reconstruction, non-rigid tracking, photometric refinement, and
//! blended rendering, with per-stage timing, artifacts on disk, and
//! stage-level resumability.

use super::metrics::{image_metrics, ImageMetrics};
use super::scene::{render_training_views, AnalyticScene};
use super::sequence::{make_sequence, WarpKind};
use crate::blend::{rasterize_depth, render_target_view, rescale_camera, VirtualRig};
use crate::error::{Error, Result};
use crate::geom::{read_obj, write_obj, write_rig, Camera, TriMesh, Vec3};
use crate::nsr::{train_nsr, write_loss_trace, NsrConfig, SdfField, TrainView};
use crate::refine::{
    generate_animation_mesh, reoptimize_motion, train_deform, train_radiance, DeformConfig,
    RadianceConfig, RadianceField,
};
use crate::track::{propagate_warp, sample_ed_nodes, GaussNewtonParams, WarpField};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StageToggles {
    pub reconstruct: bool,
    pub track: bool,
    pub refine: bool,
    pub render: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            reconstruct: true,
            track: true,
            refine: true,
            render: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RingConfig {
    pub count: usize,
    pub radius: f64,
    pub latitudes_deg: Vec<f64>,
    pub focal: f64,
    pub resolution: usize,
    pub near: f64,
    pub far: f64,
}

impl Default for RingConfig {
    fn default() -> Self {
        RingConfig {
            count: 24,
            radius: 2.5,
            latitudes_deg: vec![-15.0, 15.0],
            focal: 128.0,
            resolution: 128,
            near: 0.05,
            far: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackStageConfig {
    pub iterations: usize,
    pub node_radius: f64,
}

impl Default for TrackStageConfig {
    fn default() -> Self {
        TrackStageConfig {
            iterations: 20,
            node_radius: crate::track::DEFAULT_NODE_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStageConfig {
    pub low_resolution: usize,
    pub target_width: usize,
    pub target_height: usize,
    /// Occlusion tolerance; 0 derives it from the mesh edge length.
    pub tau: f64,
    pub rig_count: usize,
    pub rig_radius: f64,
    pub rig_height: f64,
    pub write_depth_pfm: bool,
}

impl Default for RenderStageConfig {
    fn default() -> Self {
        RenderStageConfig {
            low_resolution: 512,
            target_width: 2048,
            target_height: 1536,
            tau: 0.0,
            rig_count: 6,
            rig_radius: 2.5,
            rig_height: 0.0,
            write_depth_pfm: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Skip a stage when its artifacts already exist on disk.
    pub resume: bool,
    pub stages: StageToggles,
    pub scene: AnalyticScene,
    pub n_frames: usize,
    pub warp: WarpKind,
    /// Marching-cubes resolution for ground-truth and reconstructed meshes.
    pub mesh_resolution: usize,
    pub mesh_bound: f64,
    pub cameras: RingConfig,
    pub nsr: NsrConfig,
    pub radiance: RadianceConfig,
    pub deform: DeformConfig,
    pub track: TrackStageConfig,
    pub render: RenderStageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("pipeline_out"),
            seed: 0,
            resume: false,
            stages: StageToggles::default(),
            scene: AnalyticScene::capsule_torso(),
            n_frames: 3,
            warp: WarpKind::Bend { amplitude: 0.05 },
            mesh_resolution: 48,
            mesh_bound: 0.8,
            cameras: RingConfig::default(),
            nsr: NsrConfig::default(),
            radiance: RadianceConfig::default(),
            deform: DeformConfig::default(),
            track: TrackStageConfig::default(),
            render: RenderStageConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    pub fn to_toml_file(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("config serialization failed: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    /// (stage name, wall seconds); skipped/resumed stages report 0.
    pub stage_seconds: Vec<(String, f64)>,
    /// Final-render metrics per frame against ground truth (render stage).
    pub frame_metrics: Vec<ImageMetrics>,
}

impl PipelineReport {
    pub fn write_timing(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "stage,seconds")?;
        for (name, secs) in &self.stage_seconds {
            writeln!(w, "{name},{secs:.3}")?;
        }
        Ok(())
    }
}

fn stage_err(stage: &str, e: Error) -> Error {
    Error::Stage {
        stage: stage.to_string(),
        source: Box::new(e),
    }
}

/// Runs the configured stages in order on the synthetic sequence,
/// leaving all intermediate artifacts under `output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport> {
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out)?;
    let mut report = PipelineReport {
        stage_seconds: Vec::new(),
        frame_metrics: Vec::new(),
    };

    // ---- synth: ground-truth sequence, cameras, and views ----
    let t0 = Instant::now();
    let cameras: Vec<Camera<f64>> = super::scene::make_camera_ring(
        cfg.cameras.count,
        cfg.cameras.radius,
        &cfg.cameras.latitudes_deg,
        cfg.cameras.focal,
        cfg.cameras.resolution,
        cfg.cameras.resolution,
        cfg.cameras.near,
        cfg.cameras.far,
    )
    .map_err(|e| stage_err("synth", e))?;
    write_rig(&cameras, &out.join("rig.toml")).map_err(|e| stage_err("synth", e))?;
    let gt_canonical: TriMesh<f64> = cfg
        .scene
        .extract_mesh(cfg.mesh_resolution, cfg.mesh_bound)
        .map_err(|e| stage_err("synth", e))?;
    let sequence = make_sequence(gt_canonical, cfg.warp.clone(), cfg.n_frames)
        .map_err(|e| stage_err("synth", e))?;
    for (t, frame) in sequence.frames.iter().enumerate() {
        write_obj(frame, &out.join(format!("gt_frame_{t:03}.obj")))
            .map_err(|e| stage_err("synth", e))?;
    }
    // analytic views of the canonical pose drive reconstruction
    let recon_views: Vec<TrainView<f64>> =
        render_training_views(&cfg.scene, &cameras).map_err(|e| stage_err("synth", e))?;
    // rasterized views of every ground-truth frame drive refinement
    let frame_views: Vec<Vec<TrainView<f64>>> = sequence
        .frames
        .iter()
        .map(|mesh| {
            cameras
                .iter()
                .map(|cam| {
                    let (depth, image) = rasterize_depth(mesh, cam)?;
                    let mut mask = crate::img::Image::new(cam.width, cam.height, 1);
                    for (m, d) in mask.data.iter_mut().zip(&depth.depth.data) {
                        *m = if *d > 0.0 { 1.0 } else { 0.0 };
                    }
                    Ok(TrainView {
                        image,
                        mask: Some(mask),
                        camera: cam.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| stage_err("synth", e))?;
    report
        .stage_seconds
        .push(("synth".to_string(), t0.elapsed().as_secs_f64()));

    // ---- reconstruct ----
    let sdf_path = out.join("sdf.ckpt");
    let recon_mesh_path = out.join("recon_mesh.obj");
    let mut canonical: TriMesh<f64> = sequence.canonical.clone();
    if cfg.stages.reconstruct {
        let t0 = Instant::now();
        if cfg.resume && sdf_path.exists() && recon_mesh_path.exists() {
            let _field: SdfField<f64> =
                SdfField::load(&sdf_path).map_err(|e| stage_err("reconstruct", e))?;
            canonical = read_obj(&recon_mesh_path).map_err(|e| stage_err("reconstruct", e))?;
            report.stage_seconds.push(("reconstruct".to_string(), 0.0));
        } else {
            let mut nsr_cfg = cfg.nsr.clone();
            nsr_cfg.seed = cfg.seed;
            let (field, trace) =
                train_nsr(&recon_views, &nsr_cfg).map_err(|e| stage_err("reconstruct", e))?;
            write_loss_trace(&out.join("reconstruct_trace.csv"), &trace)
                .map_err(|e| stage_err("reconstruct", e))?;
            field.save(&sdf_path).map_err(|e| stage_err("reconstruct", e))?;
            let mut mesh = field
                .extract_surface(cfg.mesh_resolution)
                .map_err(|e| stage_err("reconstruct", e))?;
            mesh.recompute_normals();
            // carry appearance on the reconstructed surface
            let verts = mesh.vertices.clone();
            mesh.colors = Some(
                verts
                    .iter()
                    .map(|v| {
                        let [r, g, b] = cfg.scene.shade(*v);
                        Vec3::new(r, g, b)
                    })
                    .collect(),
            );
            write_obj(&mesh, &recon_mesh_path).map_err(|e| stage_err("reconstruct", e))?;
            canonical = mesh;
            report
                .stage_seconds
                .push(("reconstruct".to_string(), t0.elapsed().as_secs_f64()));
        }
    }
    // tracking runs on the ground-truth canonical topology: the
    // reconstructed mesh is an artifact check, while the motion stages
    // need a mesh whose ground-truth deformation is known exactly
    let canonical = if cfg.stages.reconstruct && !cfg.stages.track {
        canonical
    } else {
        sequence.canonical.clone()
    };

    // the motion stages and everything downstream of them need an
    // embedded-deformation graph; skip it all when only synthesis or
    // reconstruction was requested
    let need_motion = cfg.stages.track || cfg.stages.refine || cfg.stages.render;
    if !need_motion {
        report.write_timing(&out.join("timing.csv"))?;
        return Ok(report);
    }

    // ---- track ----
    let mut motions: Vec<WarpField<f64>> = Vec::new();
    let graph = sample_ed_nodes(&canonical, cfg.track.node_radius)
        .map_err(|e| stage_err("track", e))?;
    if cfg.stages.track {
        let t0 = Instant::now();
        let all_exist = (0..cfg.n_frames).all(|t| out.join(format!("warp_{t:03}.txt")).exists());
        if cfg.resume && all_exist {
            for t in 0..cfg.n_frames {
                motions.push(
                    WarpField::load(&out.join(format!("warp_{t:03}.txt")))
                        .map_err(|e| stage_err("track", e))?,
                );
            }
            report.stage_seconds.push(("track".to_string(), 0.0));
        } else {
            let mut params = GaussNewtonParams::default();
            params.iterations = cfg.track.iterations;
            motions = propagate_warp(&canonical, &graph, &sequence.frames, &params)
                .map_err(|e| stage_err("track", e))?;
            let mut energy_csv = String::from("frame,vertex_rmse\n");
            for (t, m) in motions.iter().enumerate() {
                m.save(&out.join(format!("warp_{t:03}.txt")))
                    .map_err(|e| stage_err("track", e))?;
                let warped = crate::track::lbs_warp(&canonical, &graph, m)
                    .map_err(|e| stage_err("track", e))?;
                write_obj(&warped, &out.join(format!("warped_{t:03}.obj")))
                    .map_err(|e| stage_err("track", e))?;
                let rmse = (warped
                    .vertices
                    .iter()
                    .zip(&sequence.frames[t].vertices)
                    .map(|(a, b)| (*a - *b).norm_sq())
                    .sum::<f64>()
                    / warped.vertices.len() as f64)
                    .sqrt();
                energy_csv.push_str(&format!("{t},{rmse}\n"));
            }
            std::fs::write(out.join("track_rmse.csv"), energy_csv)?;
            report
                .stage_seconds
                .push(("track".to_string(), t0.elapsed().as_secs_f64()));
        }
    } else {
        motions = vec![WarpField::identity(graph.nodes.len()); cfg.n_frames];
    }

    // ---- refine ----
    let mut refined_motions = motions.clone();
    if cfg.stages.refine {
        let t0 = Instant::now();
        let deform_path = out.join("deform.ckpt");
        let radiance_path = out.join("radiance.ckpt");
        let refined_exist =
            (0..cfg.n_frames).all(|t| out.join(format!("warp_refined_{t:03}.txt")).exists());
        if cfg.resume && deform_path.exists() && refined_exist {
            for (t, slot) in refined_motions.iter_mut().enumerate() {
                *slot = WarpField::load(&out.join(format!("warp_refined_{t:03}.txt")))
                    .map_err(|e| stage_err("refine", e))?;
            }
            report.stage_seconds.push(("refine".to_string(), 0.0));
        } else {
            let mut rad_cfg = cfg.radiance.clone();
            rad_cfg.seed = cfg.seed;
            let mut phi_o = RadianceField::<f64>::new(
                rad_cfg.grid.clone(),
                rad_cfg.hidden_width,
                rad_cfg.seed,
                Vec3::new(
                    rad_cfg.scene_center[0],
                    rad_cfg.scene_center[1],
                    rad_cfg.scene_center[2],
                ),
                rad_cfg.scene_radius,
            )
            .map_err(|e| stage_err("refine", e))?;
            train_radiance(&mut phi_o, &frame_views[0], &rad_cfg)
                .map_err(|e| stage_err("refine", e))?;
            phi_o.freeze();
            phi_o
                .save(&radiance_path)
                .map_err(|e| stage_err("refine", e))?;
            let mut deform_cfg = cfg.deform.clone();
            deform_cfg.seed = cfg.seed;
            let (net, trace) = train_deform(&phi_o, &graph, &motions, &frame_views, &deform_cfg)
                .map_err(|e| stage_err("refine", e))?;
            write_loss_trace(&out.join("refine_trace.csv"), &trace)
                .map_err(|e| stage_err("refine", e))?;
            net.save(&deform_path).map_err(|e| stage_err("refine", e))?;
            let mut params = GaussNewtonParams::default();
            params.iterations = cfg.track.iterations;
            refined_motions = reoptimize_motion(&canonical, &graph, &motions, &net, &params)
                .map_err(|e| stage_err("refine", e))?;
            for (t, m) in refined_motions.iter().enumerate() {
                m.save(&out.join(format!("warp_refined_{t:03}.txt")))
                    .map_err(|e| stage_err("refine", e))?;
            }
            report
                .stage_seconds
                .push(("refine".to_string(), t0.elapsed().as_secs_f64()));
        }
    }
    let animation = generate_animation_mesh(&canonical, &graph, &refined_motions)
        .map_err(|e| stage_err("refine", e))?;
    for (t, m) in animation.iter().enumerate() {
        write_obj(m, &out.join(format!("anim_{t:03}.obj")))
            .map_err(|e| stage_err("refine", e))?;
    }

    // ---- render ----
    if cfg.stages.render {
        let t0 = Instant::now();
        let r = &cfg.render;
        let rig = VirtualRig::surrounding(
            r.rig_count,
            Vec3::zero(),
            r.rig_radius,
            r.rig_height,
            cfg.mesh_bound,
            cfg.cameras.focal,
            cfg.cameras.resolution,
            cfg.cameras.resolution,
            cfg.cameras.near,
            cfg.cameras.far,
        )
        .map_err(|e| stage_err("render", e))?;
        // held-out target halfway between the first two rig views
        let ang = 2.0 * std::f64::consts::PI * 0.5 / r.rig_count as f64;
        let target_low = Camera::look_at(
            Vec3::new(
                r.rig_radius * ang.cos(),
                r.rig_height,
                r.rig_radius * ang.sin(),
            ),
            Vec3::zero(),
            Vec3::new(0.0, 1.0, 0.0),
            cfg.cameras.focal,
            cfg.cameras.focal,
            cfg.cameras.resolution,
            cfg.cameras.resolution,
            cfg.cameras.near,
            cfg.cameras.far,
        )
        .map_err(|e| stage_err("render", e))?;
        let target = rescale_camera(&target_low, r.target_width, r.target_height);
        let mut metrics_csv = String::from("frame,psnr,ssim,mae\n");
        for (t, anim_mesh) in animation.iter().enumerate() {
            // "captured" rig images come from the ground-truth frame mesh
            let gt_mesh = &sequence.frames[t];
            let images: Vec<_> = rig
                .cameras
                .iter()
                .map(|c| rasterize_depth(gt_mesh, c).map(|(_, img)| img))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| stage_err("render", e))?;
            let tau = if r.tau > 0.0 {
                r.tau
            } else {
                2.0 * anim_mesh.mean_edge_length()
            };
            let frame = render_target_view(
                anim_mesh,
                &rig,
                &images,
                &target,
                r.low_resolution,
                tau,
            )
            .map_err(|e| stage_err("render", e))?;
            frame
                .write_png(&out.join(format!("render_{t:03}.png")))
                .map_err(|e| stage_err("render", e))?;
            if r.write_depth_pfm {
                let (d, _) = rasterize_depth(anim_mesh, &target)
                    .map_err(|e| stage_err("render", e))?;
                d.depth
                    .write_pfm(&out.join(format!("depth_{t:03}.pfm")))
                    .map_err(|e| stage_err("render", e))?;
            }
            let (_, gt_img) =
                rasterize_depth(gt_mesh, &target).map_err(|e| stage_err("render", e))?;
            let m = image_metrics(&frame, &gt_img).map_err(|e| stage_err("render", e))?;
            metrics_csv.push_str(&format!("{t},{},{},{}\n", m.psnr, m.ssim, m.mae));
            report.frame_metrics.push(m);
        }
        std::fs::write(out.join("render_metrics.csv"), metrics_csv)?;
        report
            .stage_seconds
            .push(("render".to_string(), t0.elapsed().as_secs_f64()));
    }

    report.write_timing(&out.join("timing.csv"))?;
    Ok(report)
}
