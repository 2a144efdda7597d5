mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use scanvol::io::{self, PlyFormat};
use scanvol::pipeline::{
    align_pair, align_scan, load_scan, reconstruct_object, render_scan,
    run_pipeline, view_cloud, write_scan,
};
use scanvol::registration::{backproject_matches, merge_views, RigidMotion};
use scanvol::synth::parse_scene_config;
use scanvol::volume::{detect_ground_plane, estimate_volume, VolumeReport};
use scanvol::{Error, OrientedPointCloud};

use settings::{read_config, StageArgs};

#[derive(Parser)]
#[command(name = "scanvol", version, about = "Volume estimation from sparse RGBD views")]
struct Cli {
    /// TOML file with stage parameters (flag names as keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Print the report as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Exit with status 4 when the volume is flagged unreliable.
    #[arg(long, global = true)]
    strict: bool,
    #[command(flatten)]
    stage: StageArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scan from a scene description.
    Synth {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oriented point cloud per view (cloud_NNN.ply, camera frame).
    Normals {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register the views; writes pose_NNN.txt in the frame of view 0.
    Align {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        clouds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pixel matches `u0,v0,u1,v1` between two views, used instead of
        /// keypoint detection.
        #[arg(long, requires = "pair")]
        correspondences: Option<PathBuf>,
        /// Reference and moving view for --correspondences.
        #[arg(long, num_args = 2, value_names = ["REF", "MOVING"])]
        pair: Option<Vec<usize>>,
    },
    /// Map every view cloud to the world frame and concatenate.
    Merge {
        #[arg(long)]
        clouds: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect the dominant (ground) plane of a cloud.
    Plane {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Screened Poisson surface of a merged cloud.
    Reconstruct {
        #[arg(long)]
        cloud: PathBuf,
        /// Ground plane; the object is cut open where it rests on it.
        #[arg(long)]
        plane: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enclosed volume of a mesh (PLY or OBJ).
    Volume {
        #[arg(long)]
        mesh: PathBuf,
        /// Support plane the open side of the mesh rests on.
        #[arg(long)]
        plane: Option<PathBuf>,
    },
    /// All stages on a scan directory.
    Pipeline {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Lib(&'static str, Error),
    Unreliable(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Lib(_, e) => match e {
                Error::Parse { .. }
                | Error::Io { .. }
                | Error::Png { .. }
                | Error::InvalidParameter(_)
                | Error::InvalidIntrinsics(_) => 2,
                _ => 3,
            },
            Failure::Unreliable(_) => 4,
        }
    }

    fn line(&self) -> String {
        let s = match self {
            Failure::Lib(stage, e) => format!("{}: {stage}: {e}", e.code()),
            Failure::Unreliable(w) => format!("E_UNRELIABLE: {w}"),
        };
        s.replace('\n', " ")
    }
}

fn at(stage: &'static str) -> impl Fn(Error) -> Failure {
    move |e| Failure::Lib(stage, e)
}

type Report = Map<String, Value>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("E_USAGE: {first}");
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stage = match &cli.config {
        Some(p) => cli.stage.clone().over(read_config(p).map_err(at("config"))?),
        None => cli.stage.clone(),
    };
    if let Some(n) = stage.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Lib("config", Error::InvalidParameter(e.to_string())))?;
    }
    let cfg = stage.pipeline_config().map_err(at("config"))?;
    let mut report = Report::new();
    let mut volume: Option<VolumeReport> = None;

    match &cli.command {
        Command::Synth { scene, out } => {
            let text = std::fs::read_to_string(scene).map_err(|e| at("synth")(Error::io(scene, e)))?;
            let mut sc = parse_scene_config(&text, scene).map_err(at("synth"))?;
            if let Some(s) = stage.seed {
                sc.seed = s;
            }
            let scan = render_scan(&sc).map_err(at("synth"))?;
            write_scan(out, &scan).map_err(at("synth"))?;
            report.insert("views".into(), json!(scan.views.len()));
            report.insert("analytic_volume".into(), json!(sc.scene.total_volume()));
        }
        Command::Normals { scan, out } => {
            let scan = load_scan(scan).map_err(at("load"))?;
            mkdir(out)?;
            let mut counts = Vec::new();
            for (i, v) in scan.views.iter().enumerate() {
                let c = view_cloud(&v.depth, &scan.intrinsics, &cfg.cloud).map_err(at("normals"))?;
                io::write_ply_cloud(&cloud_path(out, i), &c, PlyFormat::BinaryLittleEndian)
                    .map_err(at("normals"))?;
                counts.push(c.len());
            }
            report.insert("view_points".into(), json!(counts));
        }
        Command::Align {
            scan,
            clouds,
            out,
            correspondences,
            pair,
        } => {
            let scan = load_scan(scan).map_err(at("load"))?;
            let clouds = read_clouds(clouds, scan.views.len())?;
            mkdir(out)?;
            match (correspondences, pair) {
                (Some(csv), Some(pair)) => {
                    let (r, m) = (pair[0], pair[1]);
                    if r >= scan.views.len() || m >= scan.views.len() || r == m {
                        return Err(at("align")(Error::InvalidParameter(format!(
                            "--pair {r} {m} does not name two distinct views"
                        ))));
                    }
                    let raw = io::read_correspondences(csv).map_err(at("align"))?;
                    let matches: Vec<_> =
                        raw.iter().enumerate().map(|(k, &(a, b))| (k, k, a, b)).collect();
                    let corrs = backproject_matches(
                        &matches,
                        &scan.views[r].depth,
                        &scan.views[m].depth,
                        &scan.intrinsics,
                    );
                    let id = RigidMotion::identity();
                    let (pose, inliers, iters, res) =
                        align_pair(&corrs, &clouds[r], &clouds[m], &id, &cfg.align).map_err(at("align"))?;
                    io::write_pose(&pose_path(out, m), &pose).map_err(at("align"))?;
                    report.insert("reference".into(), json!(r));
                    report.insert("view".into(), json!(m));
                    report.insert("correspondences".into(), json!(raw.len()));
                    report.insert("with_depth".into(), json!(corrs.len()));
                    report.insert("inliers".into(), json!(inliers));
                    report.insert("icp_iterations".into(), json!(iters));
                    report.insert("icp_residuals".into(), json!(res));
                    report.insert("pose".into(), json!(pose.to_rows()));
                }
                _ => {
                    let placed = align_scan(&scan, &clouds, &cfg.align).map_err(at("align"))?;
                    for a in &placed {
                        io::write_pose(&pose_path(out, a.view), &a.pose).map_err(at("align"))?;
                    }
                    report.insert("alignment".into(), json!(placed));
                }
            }
        }
        Command::Merge { clouds, poses, out } => {
            let n = count_files(clouds, "cloud", "ply");
            let clouds = read_clouds(clouds, n)?;
            let posed = clouds
                .into_iter()
                .enumerate()
                .map(|(i, c)| Ok((c, io::read_pose(&pose_path(poses, i)).map_err(at("merge"))?)))
                .collect::<Result<Vec<_>, Failure>>()?;
            let merged = merge_views(&posed, cfg.merge_voxel);
            io::write_ply_cloud(out, &merged, PlyFormat::BinaryLittleEndian).map_err(at("merge"))?;
            report.insert("views".into(), json!(posed.len()));
            report.insert("points".into(), json!(merged.len()));
        }
        Command::Plane { cloud, out } => {
            let c = io::read_ply_cloud(cloud).map_err(at("plane"))?;
            let fit = detect_ground_plane(&c.points, &cfg.plane).map_err(at("plane"))?;
            if let Some(o) = out {
                io::write_plane(o, &fit.plane).map_err(at("plane"))?;
            }
            let n = fit.plane.normal;
            report.insert("plane".into(), json!([n.x, n.y, n.z, fit.plane.offset]));
            report.insert("inliers".into(), json!(fit.inliers.len()));
        }
        Command::Reconstruct { cloud, plane, out } => {
            let c = io::read_ply_cloud(cloud).map_err(at("reconstruct"))?;
            let p = plane.as_ref().map(|p| io::read_plane(p)).transpose().map_err(at("reconstruct"))?;
            let rec = reconstruct_object(&c, p.as_ref(), cfg.plane.distance_threshold, &cfg.object)
                .map_err(at("reconstruct"))?;
            io::write_mesh(out, &rec.mesh).map_err(at("reconstruct"))?;
            report.insert("object_points".into(), json!(rec.object_cloud.len()));
            report.insert("grid_dims".into(), json!(rec.grid_dims));
            report.insert("grid_spacing".into(), json!(rec.grid_spacing));
            report.insert("cg_iterations".into(), json!(rec.cg_iterations));
            report.insert("cg_residual".into(), json!(rec.cg_residual));
            report.insert("vertices".into(), json!(rec.mesh.vertices.len()));
            report.insert("faces".into(), json!(rec.mesh.faces.len()));
            report.insert("unsupported_fraction".into(), json!(rec.unsupported_fraction));
        }
        Command::Volume { mesh, plane } => {
            let m = io::read_mesh(mesh).map_err(at("volume"))?;
            let p = plane.as_ref().map(|p| io::read_plane(p)).transpose().map_err(at("volume"))?;
            let v = estimate_volume(&m, p.as_ref(), &cfg.volume);
            volume_fields(&mut report, &v);
            volume = Some(v);
        }
        Command::Pipeline { scan, out } => {
            let scan = load_scan(scan).map_err(at("load"))?;
            let res = run_pipeline(&scan, &cfg).map_err(|e| at(stage_of(&e))(e))?;
            mkdir(out)?;
            let w = at("output");
            for (i, p) in res.poses.iter().enumerate() {
                io::write_pose(&pose_path(out, i), p).map_err(&w)?;
            }
            io::write_ply_cloud(&out.join("cloud.ply"), &res.merged, PlyFormat::BinaryLittleEndian)
                .map_err(&w)?;
            io::write_mesh(&out.join("mesh.ply"), &res.object.mesh).map_err(&w)?;
            if let Some(p) = &res.plane {
                io::write_plane(&out.join("plane.txt"), &p.plane).map_err(&w)?;
            }
            let full = serde_json::to_value(&res.report).expect("report serializes");
            if let Value::Object(m) = full {
                report = m;
            }
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            std::fs::write(out.join("report.json"), text)
                .map_err(|e| w(Error::io(out.join("report.json"), e)))?;
            std::fs::write(out.join("report.txt"), render_text(&report))
                .map_err(|e| w(Error::io(out.join("report.txt"), e)))?;
            volume = Some(res.report.volume);
        }
    }

    if cli.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", render_text(&report));
    }
    if let Some(v) = volume.filter(|v| v.unreliable) {
        for w in &v.warnings {
            log::warn!("{w}");
        }
        if cli.strict {
            return Err(Failure::Unreliable(v.warnings.join("; ")));
        }
    }
    Ok(())
}

/// Best guess at which stage produced a pipeline error.
fn stage_of(e: &Error) -> &'static str {
    match e {
        Error::AlignmentFailed(_) | Error::Arity { .. } | Error::RankDeficient | Error::IcpDiverged { .. } => "align",
        Error::NoPlane(_) => "plane",
        Error::NoConvergence { .. } | Error::EmptyMesh | Error::OutOfDomain { .. } | Error::GridMismatch(_) => {
            "reconstruct"
        }
        Error::InvalidMesh(_) => "volume",
        _ => "pipeline",
    }
}

fn volume_fields(report: &mut Report, v: &VolumeReport) {
    if let Value::Object(m) = serde_json::to_value(v).expect("report serializes") {
        report.extend(m);
    }
}

fn render_text(report: &Report) -> String {
    let mut s = String::new();
    for (k, v) in report {
        match v {
            Value::Array(items) if items.iter().all(|x| x.is_number()) => {
                let parts: Vec<String> = items.iter().map(|x| x.to_string()).collect();
                s.push_str(&format!("{k}: {}\n", parts.join(" ")));
            }
            Value::Array(items) if items.iter().all(|x| x.is_string()) => {
                for x in items {
                    s.push_str(&format!("{k}: {}\n", x.as_str().unwrap()));
                }
            }
            Value::String(x) => s.push_str(&format!("{k}: {x}\n")),
            other => s.push_str(&format!("{k}: {other}\n")),
        }
    }
    s
}

fn mkdir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| at("output")(Error::io(dir, e)))
}

fn cloud_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("cloud_{i:03}.ply"))
}

fn pose_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("pose_{i:03}.txt"))
}

fn count_files(dir: &Path, stem: &str, ext: &str) -> usize {
    (0..)
        .take_while(|i| dir.join(format!("{stem}_{i:03}.{ext}")).exists())
        .count()
}

fn read_clouds(dir: &Path, n: usize) -> Result<Vec<OrientedPointCloud>, Failure> {
    if n == 0 {
        return Err(at("load")(Error::EmptyScan));
    }
    (0..n)
        .map(|i| io::read_ply_cloud(&cloud_path(dir, i)).map_err(at("load")))
        .collect()
}
