//! Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use crate::analysis::{
    compare_handles, comparison_csv, handle_excursion, workspace_sample, TrajectorySpec,
};
use crate::config::{
    load_config, load_scenario, parse_config, ConfigError, ConfigFile, DEFAULT_CONFIG_JSON,
};
use crate::dynamics::{run_scenario, spoon_contact_response, ContactSettings};
use crate::kinematics::{forward_kinematics, inverse_kinematics, JointState, Pose};
use crate::statics::{synthesize_balancing, SpringKind, SynthesisBounds};

/// Environment variable naming a directory for relative output paths.
pub const OUT_DIR_ENV: &str = "FEEDER_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "feeder-sim",
    version,
    about = "Kinematics, balancing and damped dynamics of a passive assistive eating mechanism",
    after_help = "Relative output paths are resolved against $FEEDER_OUT_DIR when it is set."
)]
struct Cli {
    /// Configuration file, or `default` for the shipped nominal configuration.
    #[arg(long, global = true, default_value = "default")]
    config: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Ideal,
    Real,
    Torsion,
}

impl From<KindArg> for SpringKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Ideal => SpringKind::LinearZeroFreeLength,
            KindArg::Real => SpringKind::LinearReal,
            KindArg::Torsion => SpringKind::Torsion,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spoon and handle poses for a joint state.
    Fk {
        /// phi1,theta2,theta3 in rad
        #[arg(long, value_parser = triple, allow_hyphen_values = true)]
        q: [f64; 3],
    },
    /// Joint state placing the spoon tip at a target.
    Ik {
        /// x,y,z in m
        #[arg(long, value_parser = triple, allow_hyphen_values = true)]
        target: [f64; 3],
    },
    /// Synthesize balancing springs and write residual torque profiles.
    Balance {
        #[arg(long, value_enum, default_value = "ideal")]
        kind: KindArg,
        /// Directory receiving residual_j2.csv and residual_j3.csv.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run a scenario file and write the time series.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the spoon workspace over the joint limits.
    Workspace {
        #[arg(long, default_value_t = 15)]
        resolution: usize,
        /// Optional x,y,z point cloud CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Handle travel of the old and new handle attachments over the plate-to-mouth lift.
    CompareHandles {
        /// Optional JSON summary file.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Response of the compliant utensil mount to an impulse.
    Contact {
        /// Impulse in N m s.
        #[arg(long, default_value_t = 0.002, allow_negative_numbers = true)]
        impulse: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
    },
    /// Print the effective configuration.
    Config,
}

fn triple(s: &str) -> Result<[f64; 3], String> {
    let v = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    match <[f64; 3]>::try_from(v) {
        Ok(a) if a.iter().all(|x| x.is_finite()) => Ok(a),
        Ok(_) => Err("values must be finite".into()),
        Err(v) => Err(format!(
            "expected 3 comma-separated values, got {}",
            v.len()
        )),
    }
}

enum CliError {
    Usage(String),
    Domain(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let path = resolve_out(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| domain(format!("{}: {e}", parent.display())))?;
        }
    }
    std::fs::write(&path, contents).map_err(|e| domain(format!("{}: {e}", path.display())))
}

fn load(config: &str) -> Result<ConfigFile, CliError> {
    if config == "default" {
        return parse_config(DEFAULT_CONFIG_JSON).map_err(CliError::from);
    }
    Ok(load_config(config)?)
}

fn pose_row(name: &str, p: &Pose) -> String {
    format!(
        "{name},{},{},{},{},{},{}\n",
        p.position.x, p.position.y, p.position.z, p.roll, p.pitch, p.yaw
    )
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(&cli.config)?;
    let params = &cfg.mechanism;
    let mut text = String::new();
    match cli.command {
        Command::Fk { q } => {
            let s = JointState::at_rest(q[0], q[1], q[2]);
            let (spoon, handle) = forward_kinematics(params, &s);
            text.push_str("point,x,y,z,roll,pitch,yaw\n");
            text.push_str(&pose_row("spoon", &spoon));
            text.push_str(&pose_row("handle", &handle));
        }
        Command::Ik { target } => {
            let t = Vector3::new(target[0], target[1], target[2]);
            let s = inverse_kinematics(params, &t).map_err(domain)?;
            text.push_str(&format!(
                "phi1,theta2,theta3\n{},{},{}\n",
                s.q[0], s.q[1], s.q[2]
            ));
        }
        Command::Balance { kind, out_dir } => {
            let b = synthesize_balancing(params, kind.into(), &SynthesisBounds::default())
                .map_err(domain)?;
            write_file(&out_dir.join("residual_j2.csv"), &b.j2_profile.to_csv())?;
            write_file(&out_dir.join("residual_j3.csv"), &b.j3_profile.to_csv())?;
            text.push_str("joint,stiffness,max_abs_residual\n");
            for (spec, prof) in [(&b.j2, &b.j2_profile), (&b.j3, &b.j3_profile)] {
                text.push_str(&format!(
                    "{},{},{}\n",
                    spec.joint().name(),
                    spec.stiffness(),
                    prof.max_abs_residual()
                ));
            }
        }
        Command::Simulate { scenario, out: csv } => {
            let sc = load_scenario(&scenario)?;
            let result = run_scenario(&cfg.device(), &sc).map_err(domain)?;
            write_file(&csv, &result.to_csv())?;
            text.push_str(&format!("samples,{}\n", result.len()));
        }
        Command::Workspace {
            resolution,
            out: cloud,
        } => {
            if resolution < 2 {
                return Err(CliError::Usage("--resolution must be >= 2".into()));
            }
            let w = workspace_sample(
                params,
                &params.joint_limits,
                resolution,
                &TrajectorySpec::default(),
            );
            if let Some(path) = cloud {
                let mut csv = String::from("x,y,z\n");
                for p in &w.points {
                    csv.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
                }
                write_file(&path, &csv)?;
            }
            text.push_str(&serde_json::to_string_pretty(&w).map_err(domain)?);
            text.push('\n');
        }
        Command::CompareHandles { summary } => {
            let traj = TrajectorySpec::default();
            let rows = compare_handles(params, &traj).map_err(domain)?;
            text.push_str(&comparison_csv(&rows));
            if let Some(path) = summary {
                let configured = handle_excursion(params, &traj).map_err(domain)?;
                let json = serde_json::json!({
                    "trajectory": traj,
                    "rows": rows,
                    "configured": configured,
                });
                write_file(
                    &path,
                    &(serde_json::to_string_pretty(&json).map_err(domain)? + "\n"),
                )?;
            }
        }
        Command::Contact {
            impulse,
            dt,
            horizon,
        } => {
            if !(dt > 0.0 && horizon > 0.0) {
                return Err(CliError::Usage("--dt and --horizon must be > 0".into()));
            }
            let r =
                spoon_contact_response(&cfg.compliance, impulse, ContactSettings { dt, horizon })
                    .map_err(domain)?;
            text.push_str("peak_reaction_n_m,settling_time_s,recentered,rigid_reference_n_m,rigid_reference_model_dependent\n");
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                r.peak_reaction,
                r.settling_time,
                r.recentered,
                r.rigid_reference,
                r.rigid_reference_model_dependent
            ));
        }
        Command::Config => text.push_str(&cfg.to_json()),
    }
    out.write_all(text.as_bytes()).map_err(domain)
}

/// Parses `args` (program name first) and runs the selected study.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.to_string();
            if code == 0 {
                let _ = out.write_all(rendered.as_bytes());
            } else {
                let first = rendered.lines().next().unwrap_or("usage error");
                let _ = writeln!(err, "{first}");
            }
            return if code == 0 { 0 } else { 2 };
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "usage error: {m}");
            2
        }
        Err(CliError::Domain(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}
