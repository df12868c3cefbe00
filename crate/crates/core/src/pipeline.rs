//! Per-frame orchestration: ingest → transform by guess → reconstruct →
//! register → integrate → export, plus run reports.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{constant_velocity_guess, Pose};
use crate::gp::{self, GpConfig, Layer};
use crate::io::{self, ply::PlyMode, trajectory, CellIndex, RawScan};
use crate::map::{FusionConfig, MapStats, MeshMap};
use crate::mesh::{self, TriangleMesh};
use crate::registration::{self, RegistrationConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    KittiBin,
    PlyDir,
}

impl InputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            InputFormat::KittiBin => "bin",
            InputFormat::PlyDir => "ply",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryFormat {
    Kitti,
    Tum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DownsampleMode {
    FirstPoint,
    Centroid,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub cell_size: f64,
    pub gp: GpConfig,
    pub registration: RegistrationConfig,
    pub fusion: FusionConfig,
    pub threads: usize,
    pub input_dir: PathBuf,
    pub input_format: InputFormat,
    pub out_trajectory: Option<PathBuf>,
    pub out_mesh: Option<PathBuf>,
    pub report_path: Option<PathBuf>,
    pub trajectory_format: TrajectoryFormat,
    /// Also export mesh snapshots every N frames.
    pub export_every: Option<usize>,
    pub max_range: f64,
    pub min_range: f64,
    /// Defaults to `cell_size / 6` when unset.
    pub downsample_res: Option<f64>,
    pub downsample_mode: DownsampleMode,
    pub max_frames: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cell_size: 1.6,
            gp: GpConfig::default(),
            registration: RegistrationConfig::default(),
            fusion: FusionConfig::default(),
            threads: 8,
            input_dir: PathBuf::new(),
            input_format: InputFormat::KittiBin,
            out_trajectory: None,
            out_mesh: None,
            report_path: None,
            trajectory_format: TrajectoryFormat::Kitti,
            export_every: None,
            max_range: 100.0,
            min_range: 2.0,
            downsample_res: None,
            downsample_mode: DownsampleMode::FirstPoint,
            max_frames: None,
        }
    }
}

impl PipelineConfig {
    pub fn resolved_downsample_res(&self) -> f64 {
        self.downsample_res.unwrap_or(self.cell_size / 6.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) {
            return Err(Error::Config("cell_size must be > 0".into()));
        }
        if self.threads < 1 {
            return Err(Error::Config("threads must be ≥ 1".into()));
        }
        if self.registration.query_schedule.is_empty() {
            return Err(Error::Config("query schedule must be non-empty".into()));
        }
        if self.registration.query_schedule.iter().any(|&b| b < 0) {
            return Err(Error::Config("query lengths must be ≥ 0".into()));
        }
        if !(self.max_range > self.min_range) {
            return Err(Error::Config("max_range must exceed min_range".into()));
        }
        self.gp.validate()
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StageDurations {
    pub ingest_ms: f64,
    pub reconstruct_ms: f64,
    pub associate_ms: f64,
    pub solve_ms: f64,
    pub integrate_ms: f64,
    pub export_ms: f64,
}

impl StageDurations {
    pub fn total(&self) -> f64 {
        self.ingest_ms
            + self.reconstruct_ms
            + self.associate_ms
            + self.solve_ms
            + self.integrate_ms
            + self.export_ms
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameReport {
    pub frame_index: usize,
    /// Row-major upper 3×4 of the world pose.
    pub pose: [f64; 12],
    pub durations_ms: StageDurations,
    pub raw_correspondences: usize,
    pub combined_constraints: usize,
    pub lm_iterations: usize,
    pub final_cost: f64,
    pub degraded: bool,
}

fn pose_row(pose: &Pose) -> [f64; 12] {
    let r = &pose.rotation;
    let t = &pose.translation;
    [
        r[(0, 0)],
        r[(0, 1)],
        r[(0, 2)],
        t.x,
        r[(1, 0)],
        r[(1, 1)],
        r[(1, 2)],
        t.y,
        r[(2, 0)],
        r[(2, 1)],
        r[(2, 2)],
        t.z,
    ]
}

/// Incremental SLAM state over a scan sequence.
pub struct SlamPipeline {
    cfg: PipelineConfig,
    pub map: MeshMap,
    pub trajectory: Vec<Pose>,
    pub reports: Vec<FrameReport>,
    pool: rayon::ThreadPool,
}

impl SlamPipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let map = MeshMap::new(cfg.cell_size, cfg.gp).with_fusion(cfg.fusion);
        Ok(SlamPipeline {
            cfg,
            map,
            trajectory: Vec::new(),
            reports: Vec::new(),
            pool,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Processes one frame and appends its pose to the trajectory.
    /// Registration failures degrade the frame to the motion-model guess
    /// instead of aborting the run.
    pub fn process_frame(&mut self, scan: &RawScan) -> FrameReport {
        let cfg = self.cfg.clone();
        let frame_index = self.trajectory.len();
        let mut durations = StageDurations::default();

        let t0 = Instant::now();
        let filtered = io::filter_range(scan, cfg.min_range, cfg.max_range);
        let res = cfg.resolved_downsample_res();
        let thin = match cfg.downsample_mode {
            DownsampleMode::FirstPoint => io::downsample(&filtered, res),
            DownsampleMode::Centroid => io::downsample_centroid(&filtered, res),
        }
        .expect("resolution validated positive");
        durations.ingest_ms = t0.elapsed().as_secs_f64() * 1e3;

        let guess = match self.trajectory.len() {
            0 => Pose::identity(),
            1 => self.trajectory[0],
            n => constant_velocity_guess(&self.trajectory[n - 1], &self.trajectory[n - 2]),
        };

        let mut degraded = false;
        let mut raw_correspondences = 0;
        let mut combined_constraints = 0;
        let mut lm_iterations = 0;
        let mut final_cost = 0.0;

        let (pose, layers_for_map, point_cells) = self.pool.install(|| {
            if thin.points.is_empty() {
                degraded = true;
                return (guess, Vec::new(), Vec::new());
            }
            if self.map.is_empty() {
                // Anchor frame: reconstruct at the guess and integrate.
                let t = Instant::now();
                let (layers, cells) = reconstruct_at(&thin, &guess, &self.map, &cfg);
                durations.reconstruct_ms += t.elapsed().as_secs_f64() * 1e3;
                return (guess, layers, cells);
            }
            match registration::register_scan(&thin, &self.map, &guess, &cfg.registration, &cfg.gp)
            {
                Ok(outcome) => {
                    durations.reconstruct_ms += outcome.stats.reconstruct_ms;
                    durations.associate_ms += outcome.stats.associate_ms;
                    durations.solve_ms += outcome.stats.solve_ms;
                    raw_correspondences = outcome.stats.raw_correspondences();
                    combined_constraints = outcome.stats.combined_constraints();
                    lm_iterations = outcome
                        .stats
                        .iterations
                        .iter()
                        .map(|s| s.lm_iterations)
                        .sum();
                    final_cost = outcome
                        .stats
                        .iterations
                        .last()
                        .map_or(0.0, |s| s.final_cost);

                    // Reuse the registration's last reconstruction unless the
                    // final correction moved some point across a cell border.
                    let t = Instant::now();
                    let final_cells: Vec<CellIndex> = thin
                        .points
                        .iter()
                        .map(|p| {
                            CellIndex::of_point(
                                &outcome.pose.transform_point(p),
                                cfg.cell_size,
                            )
                        })
                        .collect();
                    let (layers, cells) = if std::env::var("DIAG_REUSE").map_or(true, |v| v != "0") && final_cells == outcome.last_point_cells {
                        (outcome.last_layers, outcome.last_point_cells)
                    } else {
                        reconstruct_at(&thin, &outcome.pose, &self.map, &cfg)
                    };
                    durations.reconstruct_ms += t.elapsed().as_secs_f64() * 1e3;
                    (outcome.pose, layers, cells)
                }
                Err(Error::NoOverlap) | Err(Error::DegenerateProblem(_)) => {
                    degraded = true;
                    let t = Instant::now();
                    let (layers, cells) = reconstruct_at(&thin, &guess, &self.map, &cfg);
                    durations.reconstruct_ms += t.elapsed().as_secs_f64() * 1e3;
                    (guess, layers, cells)
                }
                Err(e) => {
                    // Data-level failures (NaN input) also degrade the frame.
                    degraded = true;
                    let _ = e;
                    (guess, Vec::new(), Vec::new())
                }
            }
        });

        let t = Instant::now();
        if !layers_for_map.is_empty() {
            let mut counts: std::collections::BTreeMap<CellIndex, usize> =
                std::collections::BTreeMap::new();
            for c in &point_cells {
                *counts.entry(*c).or_default() += 1;
            }
            for (cell, n) in counts {
                self.map.record_points(cell, n);
            }
            self.map.integrate_scan(layers_for_map);
        }
        durations.integrate_ms = t.elapsed().as_secs_f64() * 1e3;

        self.trajectory.push(pose);
        let report = FrameReport {
            frame_index,
            pose: pose_row(&pose),
            durations_ms: durations,
            raw_correspondences,
            combined_constraints,
            lm_iterations,
            final_cost,
            degraded,
        };
        self.reports.push(report.clone());
        report
    }

    pub fn extract_mesh(&self) -> TriangleMesh {
        self.pool
            .install(|| mesh::extract_mesh(&self.map, self.cfg.registration.sigma_match_sq))
    }
}

fn reconstruct_at(
    scan: &RawScan,
    pose: &Pose,
    map: &MeshMap,
    cfg: &PipelineConfig,
) -> (Vec<Layer>, Vec<CellIndex>) {
    let world: Vec<_> = scan.points.iter().map(|p| pose.transform_point(p)).collect();
    let cells: Vec<CellIndex> = world
        .iter()
        .map(|p| CellIndex::of_point(p, map.cell_size))
        .collect();
    let buckets = io::assign_to_cells(&world, map.cell_size).expect("cell size validated");
    let layers = gp::reconstruct_cells(&buckets, &cfg.gp, map.cell_size).unwrap_or_default();
    (layers, cells)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunTotals {
    pub frames: usize,
    pub degraded_frames: usize,
    pub total_ms: f64,
    pub mean_frame_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
struct RunReportDoc<'a> {
    config: &'a PipelineConfig,
    frames: &'a [FrameReport],
    totals: &'a RunTotals,
    map: &'a MapStats,
}

#[derive(Debug)]
pub struct RunSummary {
    pub trajectory: Vec<Pose>,
    pub reports: Vec<FrameReport>,
    pub map_stats: MapStats,
    pub mesh: TriangleMesh,
    pub totals: RunTotals,
}

/// Processes a whole sequence directory and writes the configured outputs:
/// trajectory, final mesh, and a JSON run report.
pub fn run_sequence(cfg: PipelineConfig) -> Result<RunSummary> {
    let files = io::list_scan_files(&cfg.input_dir, cfg.input_format.extension())?;
    let files: Vec<_> = match cfg.max_frames {
        Some(n) => files.into_iter().take(n).collect(),
        None => files,
    };
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no input frames ({} files with extension .{} in {})",
            0,
            cfg.input_format.extension(),
            cfg.input_dir.display()
        )));
    }

    let mut pipeline = SlamPipeline::new(cfg.clone())?;
    for (i, path) in files.iter().enumerate() {
        let t0 = Instant::now();
        let mut scan = match cfg.input_format {
            InputFormat::KittiBin => io::read_kitti_bin(path)?,
            InputFormat::PlyDir => RawScan::new(io::ply::read_cloud_ply(path)?),
        };
        scan.frame_index = i;
        let read_ms = t0.elapsed().as_secs_f64() * 1e3;
        pipeline.process_frame(&scan);
        let report = pipeline.reports.last_mut().expect("frame just processed");
        report.durations_ms.ingest_ms += read_ms;

        if let (Some(every), Some(mesh_path)) = (cfg.export_every, cfg.out_mesh.as_ref()) {
            if every > 0 && (i + 1) % every == 0 && i + 1 < files.len() {
                let t = Instant::now();
                let snapshot = pipeline.extract_mesh();
                let path = snapshot_path(mesh_path, i);
                io::ply::write_mesh_ply(&snapshot, &path, PlyMode::Binary)?;
                pipeline
                    .reports
                    .last_mut()
                    .expect("frame just processed")
                    .durations_ms
                    .export_ms += t.elapsed().as_secs_f64() * 1e3;
            }
        }
    }

    let t = Instant::now();
    let mesh = pipeline.extract_mesh();
    if let Some(path) = &cfg.out_mesh {
        io::ply::write_mesh_ply(&mesh, path, PlyMode::Binary)?;
    }
    if let Some(path) = &cfg.out_trajectory {
        match cfg.trajectory_format {
            TrajectoryFormat::Kitti => trajectory::write_trajectory_kitti(&pipeline.trajectory, path)?,
            TrajectoryFormat::Tum => trajectory::write_trajectory_tum(&pipeline.trajectory, None, path)?,
        }
    }
    let export_ms = t.elapsed().as_secs_f64() * 1e3;
    if let Some(last) = pipeline.reports.last_mut() {
        last.durations_ms.export_ms += export_ms;
    }

    let total_ms: f64 = pipeline.reports.iter().map(|r| r.durations_ms.total()).sum();
    let totals = RunTotals {
        frames: pipeline.reports.len(),
        degraded_frames: pipeline.reports.iter().filter(|r| r.degraded).count(),
        total_ms,
        mean_frame_ms: total_ms / pipeline.reports.len() as f64,
    };
    let map_stats = pipeline.map.stats();

    if let Some(path) = &cfg.report_path {
        let doc = RunReportDoc {
            config: &cfg,
            frames: &pipeline.reports,
            totals: &totals,
            map: &map_stats,
        };
        let json = serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    }

    Ok(RunSummary {
        trajectory: pipeline.trajectory,
        reports: pipeline.reports,
        map_stats,
        mesh,
        totals,
    })
}

fn snapshot_path(base: &std::path::Path, frame: usize) -> PathBuf {
    let stem = base
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("ply");
    base.with_file_name(format!("{stem}_{frame:06}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn corner_scene_scan(n: usize, seed: u64) -> RawScan {
        // Three orthogonal planes seen from the origin, all ≥ min_range away.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let a = rng.random_range(-4.0..4.0);
            let b = rng.random_range(-4.0..4.0);
            match i % 3 {
                0 => points.push(Point3::new(a, b, -2.0)),
                1 => points.push(Point3::new(a, 6.0, b.abs() - 2.0)),
                _ => points.push(Point3::new(6.0, a, b.abs() - 2.0)),
            }
        }
        RawScan::new(points)
    }

    fn test_config() -> PipelineConfig {
        PipelineConfig {
            threads: 2,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn two_identical_frames_yield_identity() {
        let mut pipeline = SlamPipeline::new(test_config()).unwrap();
        let scan = corner_scene_scan(4000, 50);
        let r0 = pipeline.process_frame(&scan);
        assert!(!r0.degraded);
        assert_eq!(pipeline.map.stats().cells > 0, true);
        let r1 = pipeline.process_frame(&scan);
        assert!(!r1.degraded);
        let pose = pipeline.trajectory[1];
        assert!(pose.translation.norm() < 1e-8, "{}", pose.translation.norm());
        assert!(pose.rotation_angle() < 1e-8);
    }

    #[test]
    fn empty_frame_is_degraded_with_guess_pose() {
        let mut pipeline = SlamPipeline::new(test_config()).unwrap();
        let scan = corner_scene_scan(4000, 51);
        pipeline.process_frame(&scan);
        let empty = RawScan::new(Vec::new());
        let r = pipeline.process_frame(&empty);
        assert!(r.degraded);
        // Guess for frame 1 is frame 0's pose.
        assert_eq!(pipeline.trajectory[1], pipeline.trajectory[0]);
    }

    #[test]
    fn run_sequence_rejects_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            input_dir: dir.path().to_path_buf(),
            ..test_config()
        };
        assert!(matches!(run_sequence(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn validate_rejects_bad_config() {
        let bad = PipelineConfig {
            cell_size: -1.0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            threads: 0,
            ..PipelineConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn snapshot_path_numbering() {
        let p = snapshot_path(std::path::Path::new("/tmp/out/mesh.ply"), 49);
        assert_eq!(p, std::path::Path::new("/tmp/out/mesh_000049.ply"));
    }
}
