//! Drivers behind the `simulate`, `single`, `constants`, `gci` and `macro` modes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;

use sohb_core::gci::{self, GciProfile};
use sohb_core::macroscopic::{run_macro, MacroField, MacroParams, Grid};
use sohb_core::micro::{
    initial_state, run_single_in_field, step_gradual, Field, JumpProcess, Model, Orientations,
    Representation, RunStats, SingleConfig,
};
use sohb_core::rng::{purpose, CounterRng};
use sohb_core::rotations::quat_to_rot;
use sohb_core::UnitQuaternion;

use crate::config::{MacroSection, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::{
    constants_csv, fmt_f64, macro_header, write_events, write_macro_snapshot, FrameWriter, Mass,
    Metadata, ReplicaSummary,
};

pub const METADATA_FILE: &str = "metadata.json";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(&path, e))
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Master generator of replica `r`; a single replica uses the configured seed directly.
pub fn replica_rng(seed: u64, replicas: usize, r: usize) -> CounterRng {
    let master = CounterRng::new(seed);
    if replicas == 1 {
        master
    } else {
        master.child(CounterRng::id(purpose::REPLICA, r as u64))
    }
}

fn steps_for(t_end: f64, dt: f64) -> u64 {
    (t_end / dt).round() as u64
}

/// Runs one replica of the interacting system, streaming frames into `frames`.
///
/// Frames are saved after every `save_every`-th gradual step; the jump model saves
/// at the same times (multiples of `save_every · dt`) and returns its full event log.
pub fn run_replica<W: Write>(
    config: &RunConfig,
    rng: &CounterRng,
    frames: &mut FrameWriter<W>,
) -> Result<(RunStats, Vec<sohb_core::micro::JumpEvent>)> {
    let mut params = config.sim_params()?;
    params.seed = rng.seed();
    let state = initial_state(&params, config.initial_orientations()?, rng)?;
    let io = |e| HarnessError::io("<frames>", e);
    match config.model {
        Model::Gradual => {
            let mut state = state;
            let mut stats = RunStats::default();
            for k in 1..=steps_for(config.t_end, config.dt) {
                step_gradual(&mut state, &params, rng, &mut stats)?;
                if k % config.save_every == 0 {
                    frames
                        .write_frame(state.t, &state.positions, &state.orientations)
                        .map_err(io)?;
                }
            }
            Ok((stats, Vec::new()))
        }
        Model::Jump => {
            let mut process = JumpProcess::new(state, &params, rng)?;
            let spacing = config.save_every as f64 * config.dt;
            let saves = (config.t_end / spacing + 1e-9).floor() as u64;
            for k in 1..=saves {
                let t = k as f64 * spacing;
                process.run_until(t, |_, _| {})?;
                let s = process.state();
                frames.write_frame(t, &s.positions, &s.orientations).map_err(io)?;
            }
            process.run_until(config.t_end, |_, _| {})?;
            Ok((process.stats(), process.log().to_vec()))
        }
    }
}

/// `simulate`: replicas in parallel, each writing its own files.
pub fn simulate(config: &RunConfig, dir: &Path) -> Result<Metadata> {
    prepare(dir)?;
    let results: Vec<Result<(ReplicaSummary, Vec<String>)>> = (0..config.replicas)
        .into_par_iter()
        .map(|r| {
            let rng = replica_rng(config.seed, config.replicas, r);
            let name = format!("frames_{r}.ndjson");
            let mut writer = FrameWriter::new(create(dir, &name)?);
            let (stats, events) = run_replica(config, &rng, &mut writer)?;
            let mut files = vec![name];
            if config.model == Model::Jump {
                let name = format!("events_{r}.ndjson");
                write_events(&mut create(dir, &name)?, &events)
                    .map_err(|e| HarnessError::io(dir.join(&name), e))?;
                files.push(name);
            }
            Ok((ReplicaSummary::new(r, rng.seed(), writer.frames(), stats), files))
        })
        .collect();
    let mut meta = Metadata::new(config);
    let mut summaries = Vec::new();
    for result in results {
        let (summary, files) = result?;
        summaries.push(summary);
        meta.files.extend(files);
    }
    meta.replicas = Some(summaries);
    meta.write(&dir.join(METADATA_FILE))?;
    Ok(meta)
}

/// `single`: one particle in the configured constant field.
pub fn single(config: &RunConfig, dir: &Path) -> Result<Metadata> {
    prepare(dir)?;
    let field = Field::from_quat(config.field()?);
    let cfg = SingleConfig {
        model: config.model,
        representation: config.representation,
        d: config.d,
        dt: config.dt,
        t_end: config.t_end,
        burn_in: config.single.burn_in,
        record_every: config.save_every,
    };
    let initial = match config.initial_orientations()? {
        sohb_core::micro::InitialOrientations::Identical(q) => quat_to_rot(&q),
        _ => field.rot,
    };
    let mut rng = CounterRng::new(config.seed).stream(CounterRng::id(purpose::SINGLE, 0));
    let traj = run_single_in_field(&cfg, &field, &initial, &mut rng)?;
    let name = "single.ndjson".to_string();
    let mut writer = FrameWriter::new(create(dir, &name)?);
    for (k, &t) in traj.times.iter().enumerate() {
        let o = match &traj.orientations {
            Orientations::Matrix(v) => Orientations::Matrix(vec![v[k]]),
            Orientations::Quaternion(v) => Orientations::Quaternion(vec![v[k]]),
        };
        writer
            .write_frame(t, &traj.positions[k..=k], &o)
            .map_err(|e| HarnessError::io(dir.join(&name), e))?;
    }
    let mut meta = Metadata::new(config);
    meta.files.push(name);
    meta.write(&dir.join(METADATA_FILE))?;
    Ok(meta)
}

/// `constants`: one CSV row for the configured `D` and model.
pub fn constants(config: &RunConfig, dir: &Path) -> Result<Metadata> {
    prepare(dir)?;
    let c = gci::constants(config.d, config.model)?;
    let name = "constants.csv".to_string();
    std::fs::write(dir.join(&name), constants_csv(&[c]))
        .map_err(|e| HarnessError::io(dir.join(&name), e))?;
    let mut meta = Metadata::new(config);
    meta.files.push(name);
    meta.constants = Some(c);
    meta.write(&dir.join(METADATA_FILE))?;
    Ok(meta)
}

/// Profile table `r,hbar,hbar_prime,residual` on `points` equispaced radii in `[0, 1)`.
pub fn profile_table(profile: &GciProfile, points: usize) -> String {
    let mut s = String::from("r,hbar,hbar_prime,residual\n");
    for k in 0..points {
        let r = k as f64 / points as f64;
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r),
            fmt_f64(profile.hbar(r)),
            fmt_f64(profile.hbar_prime(r)),
            fmt_f64(profile.residual_at(r))
        ));
    }
    s
}

/// `gci`: the profile table and the constants it yields.
pub fn gci_run(config: &RunConfig, dir: &Path) -> Result<Metadata> {
    prepare(dir)?;
    let profile = GciProfile::for_model(config.model, config.d)?;
    let c = gci::constants_for(&profile)?;
    let profile_name = "gci_profile.csv".to_string();
    let constants_name = "constants.csv".to_string();
    std::fs::write(dir.join(&profile_name), profile_table(&profile, 200))
        .map_err(|e| HarnessError::io(dir.join(&profile_name), e))?;
    std::fs::write(dir.join(&constants_name), constants_csv(&[c]))
        .map_err(|e| HarnessError::io(dir.join(&constants_name), e))?;
    let mut meta = Metadata::new(config);
    meta.files = vec![profile_name, constants_name];
    meta.constants = Some(c);
    meta.write(&dir.join(METADATA_FILE))?;
    Ok(meta)
}

/// Quaternion field `base ⊗ Rz(α sin kx) ⊗ Rx(β cos 2kx)` with density `1 + a cos kx`,
/// `k = 2π/L`, on a periodic line of `nodes` cells.
pub fn twisted_field(
    nodes: usize,
    length: f64,
    twist: [f64; 2],
    amplitude: f64,
    base: UnitQuaternion,
) -> Result<MacroField> {
    let k = std::f64::consts::TAU / length;
    let grid = Grid::line(nodes, length)?;
    Ok(MacroField::from_fn(grid, |x| {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z(), twist[0] * (k * x.x).sin());
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x(), twist[1] * (2.0 * k * x.x).cos());
        (1.0 + amplitude * (k * x.x).cos(), base * rz * rx)
    })?)
}

fn macro_initial(section: &MacroSection, representation: Representation) -> Result<MacroField> {
    let field = twisted_field(
        section.nodes,
        section.length,
        section.twist,
        section.density_amplitude,
        UnitQuaternion::identity(),
    )?;
    Ok(match representation {
        Representation::Quaternion => field,
        Representation::Matrix => field.to_matrix(),
    })
}

/// `macro`: integrates the macroscopic system, writing a snapshot every `save_every` steps.
pub fn macro_run(config: &RunConfig, dir: &Path) -> Result<Metadata> {
    prepare(dir)?;
    let c = gci::constants(config.d, config.model)?;
    let params = MacroParams {
        nu: config.macro_section.nu,
        sigma: config.macro_section.sigma,
    };
    let mut field = macro_initial(&config.macro_section, config.representation)?;
    let initial_mass = field.mass();
    let name = "macro.csv".to_string();
    let path: PathBuf = dir.join(&name);
    let io = |e| HarnessError::io(&path, e);
    let mut sink = create(dir, &name)?;
    writeln!(sink, "{}", macro_header(&field.orientation)).map_err(io)?;
    write_macro_snapshot(&mut sink, &field).map_err(io)?;
    for k in 1..=steps_for(config.t_end, config.dt) {
        field = run_macro(&field, config.dt, 1, &c, &params)?;
        if k % config.save_every == 0 {
            write_macro_snapshot(&mut sink, &field).map_err(io)?;
        }
    }
    let mut meta = Metadata::new(config);
    meta.files.push(name);
    meta.constants = Some(c);
    meta.mass = Some(Mass {
        initial: initial_mass,
        final_mass: field.mass(),
    });
    meta.write(&dir.join(METADATA_FILE))?;
    Ok(meta)
}
