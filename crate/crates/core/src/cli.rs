//! The `pavekit` command line.
//!
//! Exit codes: 0 on success, 1 when the computation or file handling fails,
//! 2 on usage errors. Diagnostics go to stderr; results go to files in the
//! output directory (`--out-dir`, else `$PAVEKIT_OUT_DIR`, else the current
//! directory) and, for short reports, to stdout.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::calibration::{calibrate, CalibrationConfig};
use crate::detection::{
    detect_cracks, detect_markings, detect_road_edges, rasterize, sort_regions, CrackParams, EdgeSide,
    MarkingParams,
};
use crate::error::{Error, Result};
use crate::georef::{fuse_trajectory, georeference_scan, FusionConfig, SensorMount};
use crate::harmonization::{harmonize_report, HarmonizationConfig, MetricKind, RunSeries};
use crate::io::{self, AngleUnit};
use crate::metrics::{segment_metrics, transverse_profiles, SegmentMetric, DEFAULT_SEGMENT_LENGTH};
use crate::synthgen::{
    synth_camera_scene, synth_fleet, synth_road, synth_surface_patch, FleetConfig, NoiseConfig, PatchConfig,
    RoadConfig, SceneConfig,
};

pub const OUT_DIR_ENV: &str = "PAVEKIT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "pavekit", version, about = "Pavement profiling toolkit")]
pub struct Cli {
    /// Directory for every output file.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Read and write angles (and yaw rates) in degrees instead of radians.
    #[arg(long, global = true)]
    pub degrees: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic data with known ground truth.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Estimate a camera projection from `x y z u v` correspondences.
    Calibrate {
        correspondences: PathBuf,
        /// Refine the linear projection only, without radial distortion.
        #[arg(long)]
        no_distortion: bool,
    },
    /// Fuse GPS fixes and odometer/IMU samples into a trajectory.
    Fuse {
        #[arg(long)]
        gps: PathBuf,
        #[arg(long)]
        odo_imu: PathBuf,
        /// Fix-to-fix gaps longer than this (s) are dead reckoned.
        #[arg(long, default_value_t = 1.0)]
        max_gap: f64,
    },
    /// Transform a sensor-frame scan into the world frame.
    Georef {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Mount file `x y z yaw pitch roll`; identity when omitted.
        #[arg(long)]
        mount: Option<PathBuf>,
        /// Lateral half-width kept in the transverse profiles (m).
        #[arg(long, default_value_t = 3.4)]
        lateral_limit: f64,
    },
    /// Per-segment IRI, MPD and crossfall.
    Metrics {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        transverse: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEGMENT_LENGTH)]
        segment_length: f64,
        /// Name of the output files.
        #[arg(long, default_value = "metrics")]
        system_id: String,
    },
    /// Detect cracks, road edges and markings in a world-frame point file.
    Detect {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        cell_size: f64,
        /// Crack depth below the local plane (mm).
        #[arg(long, default_value_t = 3.0)]
        threshold_crack_depth: f64,
        /// Elevation drop marking a road edge (mm).
        #[arg(long, default_value_t = 20.0)]
        threshold_edge_drop: f64,
        /// Intensity contrast above the median for markings.
        #[arg(long, default_value_t = 0.3)]
        threshold_marking_contrast: f64,
    },
    /// Pairwise agreement of metric CSV files; system ids are the file stems.
    Harmonize {
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEGMENT_LENGTH)]
        segment_length: f64,
        /// Chainage pairing tolerance (m); half a segment when omitted.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, default_value_t = MetricKind::Iri.default_threshold())]
        threshold_iri: f64,
        #[arg(long, default_value_t = MetricKind::Mpd.default_threshold())]
        threshold_mpd: f64,
        #[arg(long, default_value_t = MetricKind::Crossfall.default_threshold())]
        threshold_crossfall: f64,
    },
    /// Two seeded synthetic runs through fuse, georef and metrics, then
    /// harmonize them.
    Pipeline {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        length: f64,
        #[arg(long, default_value_t = DEFAULT_SEGMENT_LENGTH)]
        segment_length: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Road survey: profile, scan, mount, GPS, odometer/IMU, truth.
    Road {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200.0)]
        length: f64,
        #[arg(long, default_value_t = DEFAULT_SEGMENT_LENGTH)]
        segment_length: f64,
        /// Level, featureless, noise-free road.
        #[arg(long)]
        flat: bool,
    },
    /// Camera calibration correspondences.
    Scene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
    },
    /// Dense surface patch for the detectors.
    Patch {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PatchScene::Groove)]
        scene: PatchScene,
    },
    /// Metric CSV files of a fleet of systems with calibrated noise.
    Fleet {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        systems: usize,
        #[arg(long, default_value_t = 200)]
        segments: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PatchScene {
    Plain,
    Groove,
    Stripe,
    Shoulders,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

struct Context {
    out_dir: PathBuf,
    unit: AngleUnit,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        io::write_text(&path, text)?;
        eprintln!("wrote {}", path.display());
        Ok(path)
    }

    fn sub(&self, dir: &str) -> Result<Context> {
        let out_dir = self.path(dir);
        create_dir(&out_dir)?;
        Ok(Context {
            out_dir,
            unit: self.unit,
        })
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Keeps file names inside the output directory.
fn file_stem_safe(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    create_dir(&out_dir)?;
    let ctx = Context {
        out_dir,
        unit: if cli.degrees { AngleUnit::Degrees } else { AngleUnit::Radians },
    };
    match &cli.command {
        Command::Synth { kind } => synth(&ctx, kind),
        Command::Calibrate {
            correspondences,
            no_distortion,
        } => cmd_calibrate(&ctx, correspondences, !no_distortion),
        Command::Fuse { gps, odo_imu, max_gap } => cmd_fuse(&ctx, gps, odo_imu, *max_gap).map(|_| ()),
        Command::Georef {
            scan,
            trajectory,
            mount,
            lateral_limit,
        } => cmd_georef(&ctx, scan, trajectory, mount.as_deref(), *lateral_limit).map(|_| ()),
        Command::Metrics {
            profile,
            transverse,
            segment_length,
            system_id,
        } => cmd_metrics(&ctx, profile, transverse.as_deref(), *segment_length, system_id).map(|_| ()),
        Command::Detect {
            points,
            cell_size,
            threshold_crack_depth,
            threshold_edge_drop,
            threshold_marking_contrast,
        } => cmd_detect(
            &ctx,
            points,
            *cell_size,
            *threshold_crack_depth,
            *threshold_edge_drop,
            *threshold_marking_contrast,
        ),
        Command::Harmonize {
            files,
            segment_length,
            tolerance,
            threshold_iri,
            threshold_mpd,
            threshold_crossfall,
        } => {
            let mut config = HarmonizationConfig::for_segment_length(*segment_length)
                .with_threshold(MetricKind::Iri, *threshold_iri)
                .with_threshold(MetricKind::Mpd, *threshold_mpd)
                .with_threshold(MetricKind::Crossfall, *threshold_crossfall);
            if let Some(t) = tolerance {
                config.tolerance = *t;
            }
            cmd_harmonize(&ctx, files, &config)
        }
        Command::Pipeline {
            seed,
            length,
            segment_length,
        } => cmd_pipeline(&ctx, *seed, *length, *segment_length),
    }
}

fn synth(ctx: &Context, kind: &SynthKind) -> Result<()> {
    match kind {
        SynthKind::Road {
            seed,
            length,
            segment_length,
            flat,
        } => {
            let base = if *flat { RoadConfig::flat() } else { RoadConfig::default() };
            let cfg = RoadConfig {
                seed: *seed,
                length: *length,
                segment_length: *segment_length,
                ..base
            };
            write_road(ctx, &cfg)
        }
        SynthKind::Scene { seed, points, sigma } => {
            let scene = synth_camera_scene(&SceneConfig {
                seed: *seed,
                points: *points,
                pixel_sigma: *sigma,
                ..SceneConfig::default()
            })?;
            ctx.write("correspondences.txt", &io::write_correspondences(&scene.correspondences))?;
            let p = scene.projection.matrix();
            let rows: String = (0..3)
                .map(|r| {
                    let row: Vec<String> = (0..4).map(|c| io::fmt_num(p[(r, c)])).collect();
                    format!("{}\n", row.join(" "))
                })
                .collect();
            ctx.write("projection_truth.txt", &format!("# true projection matrix, unit Frobenius norm\n{rows}"))?;
            Ok(())
        }
        SynthKind::Patch { seed, scene } => {
            let cfg = match scene {
                PatchScene::Plain => PatchConfig {
                    seed: *seed,
                    ..PatchConfig::default()
                },
                PatchScene::Groove => PatchConfig::groove(*seed, 0.01),
                PatchScene::Stripe => PatchConfig::stripe(*seed, 0.9),
                PatchScene::Shoulders => PatchConfig::shoulders(*seed, &[EdgeSide::Left, EdgeSide::Right], 0.03),
            };
            let patch = synth_surface_patch(&cfg)?;
            ctx.write("patch.txt", &io::write_scan(&patch.points))?;
            Ok(())
        }
        SynthKind::Fleet { seed, systems, segments } => {
            let cfg = FleetConfig {
                seed: *seed,
                systems: *systems,
                segments: *segments,
                ..FleetConfig::default()
            };
            let runs = synth_fleet(&cfg)?;
            for id in unique_ids(&runs) {
                let segments = series_to_metrics(&runs, &id, cfg.segment_length);
                ctx.write(&format!("{}.csv", file_stem_safe(&id)), &io::write_metrics_csv(&segments))?;
            }
            Ok(())
        }
    }
}

fn unique_ids(runs: &[RunSeries]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for r in runs {
        if !ids.iter().any(|i| i == r.system_id()) {
            ids.push(r.system_id().to_string());
        }
    }
    ids
}

fn series_to_metrics(runs: &[RunSeries], id: &str, segment_length: f64) -> Vec<SegmentMetric> {
    let of = |kind: MetricKind| runs.iter().find(|r| r.system_id() == id && r.metric() == kind);
    let (iri, mpd, cross) = (of(MetricKind::Iri), of(MetricKind::Mpd), of(MetricKind::Crossfall));
    let count = iri.map_or(0, |r| r.segments().len());
    (0..count)
        .map(|k| {
            let start = iri.map_or(0.0, |r| r.segments()[k].0);
            SegmentMetric {
                chainage_start: start,
                chainage_end: start + segment_length,
                iri: iri.map_or(0.0, |r| r.segments()[k].1),
                mpd: mpd.map_or(0.0, |r| r.segments()[k].1),
                crossfall: cross.map(|r| r.segments()[k].1),
            }
        })
        .collect()
}

fn write_road(ctx: &Context, cfg: &RoadConfig) -> Result<()> {
    let road = synth_road(cfg)?;
    ctx.write("profile.txt", &io::write_profile(&road.profile))?;
    ctx.write("scan.txt", &io::write_scan(&road.scan))?;
    ctx.write("mount.txt", &io::write_mount(&cfg.mount_offset, 0.0, 0.0, 0.0, ctx.unit))?;
    ctx.write("gps.txt", &io::write_gps(&road.gps))?;
    ctx.write("odo_imu.txt", &io::write_odo_imu(&road.odo_imu, ctx.unit))?;
    ctx.write("trajectory_truth.txt", &io::write_trajectory(&road.trajectory, ctx.unit))?;
    let truth: Vec<SegmentMetric> = road
        .truth
        .iter()
        .map(|t| SegmentMetric {
            chainage_start: t.chainage_start,
            chainage_end: t.chainage_end,
            iri: t.iri,
            mpd: t.mpd,
            crossfall: Some(t.crossfall),
        })
        .collect();
    ctx.write("truth.csv", &io::write_metrics_csv(&truth))?;
    Ok(())
}

fn read(path: &Path) -> Result<(String, String)> {
    Ok((io::read_text(path)?, path.display().to_string()))
}

fn cmd_calibrate(ctx: &Context, path: &Path, refine_distortion: bool) -> Result<()> {
    let (text, name) = read(path)?;
    let corrs = io::parse_correspondences(&text, &name)?;
    let result = calibrate(
        &corrs,
        &CalibrationConfig {
            refine_distortion,
            ..CalibrationConfig::default()
        },
    )?;
    ctx.write("calibration.txt", &io::write_calibration(&result))?;
    println!(
        "reprojection rms {} px (initial {} px) after {} iterations",
        io::fmt_num(result.rms_error),
        io::fmt_num(result.initial_rms),
        result.iterations
    );
    Ok(())
}

fn cmd_fuse(ctx: &Context, gps: &Path, odo: &Path, max_gap: f64) -> Result<PathBuf> {
    let (text, name) = read(gps)?;
    let fixes = io::parse_gps(&text, &name)?;
    let (text, name) = read(odo)?;
    let samples = io::parse_odo_imu(&text, &name, ctx.unit)?;
    let traj = fuse_trajectory(&fixes, &samples, &FusionConfig { max_gap })?;
    ctx.write("trajectory.txt", &io::write_trajectory(&traj, ctx.unit))
}

fn cmd_georef(
    ctx: &Context,
    scan: &Path,
    trajectory: &Path,
    mount: Option<&Path>,
    lateral_limit: f64,
) -> Result<PathBuf> {
    let (text, name) = read(scan)?;
    let points = io::parse_scan(&text, &name)?;
    let (text, name) = read(trajectory)?;
    let traj = io::parse_trajectory(&text, &name, ctx.unit)?;
    let mount = match mount {
        Some(p) => {
            let (text, name) = read(p)?;
            io::parse_mount(&text, &name, ctx.unit)?
        }
        None => SensorMount::identity(),
    };
    let world = georeference_scan(&points, &traj, &mount)?;
    ctx.write("georef_scan.txt", &io::write_scan(&world))?;
    let profiles = transverse_profiles(&world, lateral_limit)?;
    ctx.write("transverse.txt", &io::write_transverse(&profiles))
}

fn cmd_metrics(
    ctx: &Context,
    profile: &Path,
    transverse: Option<&Path>,
    segment_length: f64,
    system_id: &str,
) -> Result<PathBuf> {
    let (text, name) = read(profile)?;
    let profile = io::parse_profile(&text, &name)?;
    let transverse = match transverse {
        Some(p) => {
            let (text, name) = read(p)?;
            io::parse_transverse(&text, &name)?
        }
        None => Vec::new(),
    };
    let report = segment_metrics(&profile, &transverse, segment_length)?;
    if report.dropped_tail > 0.0 {
        eprintln!("note: trailing {:.3} m shorter than one segment was not reported", report.dropped_tail);
    }
    let stem = file_stem_safe(system_id);
    ctx.write(
        &format!("{stem}.svg"),
        &io::metrics_svg(&report.segments, &format!("{system_id}: per-segment metrics")),
    )?;
    ctx.write(&format!("{stem}.csv"), &io::write_metrics_csv(&report.segments))
}

fn cmd_detect(
    ctx: &Context,
    points: &Path,
    cell_size: f64,
    crack_depth: f64,
    edge_drop: f64,
    marking_contrast: f64,
) -> Result<()> {
    let (text, name) = read(points)?;
    let pts = io::parse_scan(&text, &name)?;
    let grid = rasterize(&pts, cell_size)?;
    let mut regions = detect_cracks(
        &grid,
        &CrackParams {
            depth_threshold_mm: crack_depth,
            ..CrackParams::default()
        },
    )?;
    match detect_road_edges(&grid, edge_drop) {
        Ok(edges) => regions.extend(edges),
        Err(Error::NoEdges) => eprintln!("note: no road edges found"),
        Err(e) => return Err(e),
    }
    regions.extend(detect_markings(
        &grid,
        &MarkingParams {
            contrast_threshold: marking_contrast,
            ..MarkingParams::default()
        },
    )?);
    sort_regions(&mut regions);
    ctx.write("detections.csv", &io::write_detections_csv(&regions, &grid))?;
    ctx.write("detections.svg", &io::detections_svg(&grid, &regions))?;
    Ok(())
}

fn cmd_harmonize(ctx: &Context, files: &[PathBuf], config: &HarmonizationConfig) -> Result<()> {
    let mut runs = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    for path in files {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        if ids.contains(&id) {
            return Err(Error::invalid(format!(
                "two inputs share the system id '{id}'; ids are taken from file names"
            )));
        }
        let (text, name) = read(path)?;
        let segments = io::parse_metrics_csv(&text, &name)?;
        runs.extend(io::metrics_to_series(&id, &segments)?);
        ids.push(id);
    }
    let report = harmonize_report(&runs, config)?;
    let csv = io::write_harmonization_csv(&report);
    ctx.write("harmonization.csv", &csv)?;
    for m in &report.metrics {
        ctx.write(&format!("r2_matrix_{}.csv", m.metric), &io::write_r2_matrix_csv(m))?;
        for p in &m.pairs {
            let name = format!(
                "scatter_{}_{}_{}.svg",
                m.metric,
                file_stem_safe(&p.system_a),
                file_stem_safe(&p.system_b)
            );
            ctx.write(&name, &io::scatter_svg(m.metric, p))?;
        }
    }
    print!("{csv}");
    Ok(())
}

fn cmd_pipeline(ctx: &Context, seed: u64, length: f64, segment_length: f64) -> Result<()> {
    let mut metric_files = Vec::new();
    for (dir, run_seed) in [("run_a", seed), ("run_b", seed.wrapping_add(1))] {
        let run = ctx.sub(dir)?;
        let cfg = RoadConfig {
            seed: run_seed,
            length,
            segment_length,
            noise: NoiseConfig::default(),
            ..RoadConfig::default()
        };
        write_road(&run, &cfg)?;
        let traj = cmd_fuse(&run, &run.path("gps.txt"), &run.path("odo_imu.txt"), FusionConfig::default().max_gap)?;
        let transverse = cmd_georef(
            &run,
            &run.path("scan.txt"),
            &traj,
            Some(&run.path("mount.txt")),
            cfg.lane_width - 0.1,
        )?;
        metric_files.push(cmd_metrics(
            &run,
            &run.path("profile.txt"),
            Some(&transverse),
            segment_length,
            &format!("system_{dir}"),
        )?);
    }
    cmd_harmonize(ctx, &metric_files, &HarmonizationConfig::for_segment_length(segment_length))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let mut full = vec!["pavekit".to_string(), "--out-dir".into(), dir.display().to_string()];
        full.extend(args.iter().map(|s| s.to_string()));
        run(full)
    }

    #[test]
    fn usage_errors_exit_2() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_in(dir.path(), &["frobnicate"]), 2);
        assert_eq!(run_in(dir.path(), &["metrics", "--bogus"]), 2);
        assert_eq!(run(["pavekit"]), 2);
    }

    #[test]
    fn missing_input_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(run_in(dir.path(), &["calibrate", "missing.txt"]), 1);
    }

    #[test]
    fn flat_road_metrics_are_zero() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        assert_eq!(run_in(d, &["synth", "road", "--flat", "--length", "40"]), 0);
        let profile = d.join("profile.txt");
        assert_eq!(run_in(d, &["metrics", "--profile", profile.to_str().unwrap()]), 0);
        let text = fs::read_to_string(d.join("metrics.csv")).unwrap();
        let rows = io::parse_metrics_csv(&text, "metrics.csv").unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.iri == 0.0 && r.mpd == 0.0 && r.crossfall.is_none()));
    }

    #[test]
    fn identical_files_harmonize_perfectly() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        assert_eq!(run_in(d, &["synth", "fleet", "--systems", "2", "--segments", "20"]), 0);
        fs::copy(d.join("system1.csv"), d.join("copy.csv")).unwrap();
        let a = d.join("system1.csv");
        let b = d.join("copy.csv");
        assert_eq!(run_in(d, &["harmonize", a.to_str().unwrap(), b.to_str().unwrap()]), 0);
        let csv = fs::read_to_string(d.join("harmonization.csv")).unwrap();
        for line in csv.lines().skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells[4].parse::<f64>().unwrap(), 1.0, "{line}");
            assert_eq!(cells[10], "pass");
        }
    }

    #[test]
    fn out_dir_names_are_sanitized() {
        assert_eq!(file_stem_safe("../x/y"), "___x_y");
        assert_eq!(file_stem_safe(""), "_");
    }
}
