use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use scalesym::dynamics::{
    integrate_with, verify_conformal_flow, verify_homothetic_orbit, verify_noether,
    IntegrateOptions,
};
use scalesym::equilibria::{
    solve_central_configuration, Normalization, RelativeEquilibrium, SimpleMechanicalSystem,
    SolveError, SolveOptions,
};
use scalesym::io::{
    parse_configuration_csv, parse_relative_equilibrium, write_trajectory_csv,
    RelativeEquilibriumDocument,
};
use scalesym::phase::PhasePoint;
use scalesym::scaling::{
    verify_scaling_symmetry_with, ScalingAction, VerifyOptions, CHECK_INVARIANCE, CHECK_MOMENTUM,
    CHECK_MOMENTUM_INVARIANCE, CHECK_SCALING_FUNCTION, CHECK_SYMPLECTIC,
};
use scalesym::systems::{build_system, parse_system_spec, BuiltSystem, SystemKind, SystemSpec};

use crate::args::{HomotheticArgs, IntegrateArgs, SolveArgs, VerifyArgs};
use crate::error::{CliError, Exit};

const CHECK_NOETHER: &str = "noether";
const CHECK_FLOW: &str = "flow";
const SYMMETRY_CHECKS: [&str; 4] = [
    CHECK_SYMPLECTIC,
    CHECK_INVARIANCE,
    CHECK_MOMENTUM,
    CHECK_SCALING_FUNCTION,
];
const SOLVER_GATE_SAMPLES: usize = 16;
/// Candidate initial states tried for the noether and flow checks.
const MAX_DRAWS: usize = 64;

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn config<T: Serialize>(command: &str, args: &T) -> Value {
    json!({ "command": command, "args": args })
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "--{name} must be positive and finite"
        )))
    }
}

fn load_spec(path: &Path) -> Result<SystemSpec, CliError> {
    parse_system_spec(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn mechanical(built: &BuiltSystem) -> Result<(&SimpleMechanicalSystem, &ScalingAction), CliError> {
    built.mechanical().ok_or_else(|| {
        CliError::Input("this command needs a mechanical system with a scaling action".into())
    })
}

fn uniform_box(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-half_width..=half_width))
}

pub fn solve_cc(args: &SolveArgs) -> Result<Exit, CliError> {
    positive("tol", args.tol)?;
    positive("i0", args.i0)?;
    let mut spec = load_spec(&args.system)?;
    if args.collinear {
        if !matches!(spec.kind, SystemKind::Nbody | SystemKind::Homogeneous) {
            return Err(CliError::Input(
                "--collinear needs an n-body or homogeneous system".into(),
            ));
        }
        spec.dim = Some(1);
    }
    let built = build_system(&spec)?;
    let (system, action) = mechanical(&built)?;
    let n = system.dim();

    let init = match &args.init {
        Some(path) => {
            let cfg =
                parse_configuration_csv(&read_text(path)?).map_err(|source| CliError::Parse {
                    path: path.clone(),
                    source,
                })?;
            if cfg.q.len() != n || spec.dim.is_some_and(|d| d != cfg.dim) {
                return Err(CliError::Input(format!(
                    "{}: {} bodies in {} dimensions do not match the system",
                    path.display(),
                    cfg.bodies,
                    cfg.dim
                )));
            }
            Some(cfg.q)
        }
        None => None,
    };
    let start = |seed: u64| -> DVector<f64> {
        if let Some(q) = &init {
            return q.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if args.collinear {
            // evenly spaced in mass order with a small jitter that keeps the order
            let spacing = 1.0 / (n.max(2) - 1) as f64;
            DVector::from_fn(n, |i, _| {
                i as f64 * spacing + rng.gen_range(-0.1..=0.1) * spacing
            })
        } else {
            uniform_box(&mut rng, n, 1.0)
        }
    };

    if args.jobs == 1 {
        let (exit, text) = solve_job(&spec, system, action, start(args.seed), args, args.seed)?;
        write_output(args.out.as_deref(), &text)?;
        return Ok(exit);
    }
    if init.is_some() {
        return Err(CliError::Input(
            "--jobs > 1 draws its own starts; drop --init".into(),
        ));
    }
    let out = args
        .out
        .as_deref()
        .ok_or_else(|| CliError::Input("--jobs > 1 requires --out".into()))?;
    let seeds: Vec<u64> = (0..u64::from(args.jobs))
        .map(|k| args.seed.wrapping_add(k))
        .collect();
    let results: Vec<Result<(Exit, String), CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let q0 = start(seed);
                let spec = &spec;
                scope.spawn(move || solve_job(spec, system, action, q0, args, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solve job panicked"))
            .collect()
    });
    let mut worst = Exit::Success;
    for (k, result) in results.into_iter().enumerate() {
        let (exit, text) = result?;
        write_output(Some(&job_path(out, k)), &text)?;
        if exit as u8 > worst as u8 {
            worst = exit;
        }
    }
    Ok(worst)
}

/// `dir/stem.ext` -> `dir/stem-k.ext`.
fn job_path(out: &Path, k: usize) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match out.extension() {
        Some(ext) => format!("{stem}-{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{k}"),
    };
    out.with_file_name(name)
}

fn solve_job(
    spec: &SystemSpec,
    system: &SimpleMechanicalSystem,
    action: &ScalingAction,
    q0: DVector<f64>,
    args: &SolveArgs,
    seed: u64,
) -> Result<(Exit, String), CliError> {
    let opts = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        normalization: Normalization::Inertia(args.i0),
        verify_samples: SOLVER_GATE_SAMPLES,
        verify_seed: seed,
        ..SolveOptions::default()
    };
    let mut cfg = config("solve-cc", args);
    cfg["seed"] = json!(seed);
    cfg["initial"] = json!(q0.as_slice());
    let document = |re: RelativeEquilibrium| RelativeEquilibriumDocument {
        equilibrium: re,
        system: spec.clone(),
        config: Some(cfg.clone()),
    };
    match solve_central_configuration(system, action, &q0, &opts) {
        Ok(re) => {
            log::info!(
                "certified after {} iterations, xi^2 = {}",
                re.iterations,
                re.xi_squared()
            );
            Ok((Exit::Success, document(re).to_json().map_err(io_json)?))
        }
        Err(SolveError::NotConverged(re)) => {
            log::warn!(
                "no certified solution: residual {:e} after {} iterations",
                re.residual_full,
                re.iterations
            );
            Ok((
                Exit::NotConverged,
                document(*re).to_json().map_err(io_json)?,
            ))
        }
        Err(SolveError::Collision { distance }) => {
            log::warn!("solver stopped at a collision (separation {distance:e})");
            let diag = json!({ "config": cfg, "system": spec, "error": "collision", "distance": distance });
            Ok((Exit::NotConverged, to_json(&diag)?))
        }
        Err(SolveError::SymmetryFailure(report)) => {
            log::warn!(
                "scaling action failed verification (max residual {:e})",
                report.max_residual()
            );
            let diag = json!({ "config": cfg, "system": spec, "symmetry": report });
            Ok((Exit::Verification, to_json(&diag)?))
        }
        Err(e @ SolveError::DimensionMismatch { .. }) => Err(CliError::Input(e.to_string())),
    }
}

fn io_json(e: scalesym::io::IoError) -> CliError {
    CliError::Input(e.to_string())
}

fn check_applies(name: &str) -> bool {
    SYMMETRY_CHECKS.contains(&name) || name == CHECK_NOETHER || name == CHECK_FLOW
}

/// Draws a phase point whose trajectory over the window stays well clear of
/// collisions.
fn draw_initial_state(
    built: &BuiltSystem,
    seed: u64,
    t_final: f64,
    dt: f64,
) -> Result<PhasePoint, CliError> {
    let field = built.field();
    let c = built.conformal_parameter();
    let n = built.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..MAX_DRAWS {
        let q = uniform_box(&mut rng, n, 1.0);
        let p = uniform_box(&mut rng, n, 0.3);
        if field.collision_distance(&q).is_some_and(|d| d < 0.5) {
            continue;
        }
        let z = PhasePoint::new(q, p).map_err(|e| CliError::Input(e.to_string()))?;
        match integrate_with(field, c, &z, t_final, dt, &IntegrateOptions::default()) {
            Ok(traj) => {
                let closest = traj
                    .states
                    .iter()
                    .filter_map(|s| field.collision_distance(&s.q))
                    .fold(f64::INFINITY, f64::min);
                if closest >= 0.1 {
                    return Ok(z);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(match last_err {
        Some(e) => e.into(),
        None => CliError::Input(format!(
            "no collision-free initial state in {MAX_DRAWS} draws"
        )),
    })
}

pub fn verify(args: &VerifyArgs) -> Result<Exit, CliError> {
    positive("tol", args.tol)?;
    positive("dt", args.dt)?;
    positive("t-final", args.t_final)?;
    if args.samples == 0 {
        return Err(CliError::Input("--samples must be at least 1".into()));
    }
    let spec = load_spec(&args.system)?;
    let built = build_system(&spec)?;
    let checks: Vec<String> = match &args.checks {
        Some(list) => list.iter().map(|s| s.trim().to_string()).collect(),
        None if built.action().is_some() => SYMMETRY_CHECKS
            .iter()
            .chain(&[CHECK_NOETHER, CHECK_FLOW])
            .map(|s| s.to_string())
            .collect(),
        None => vec![CHECK_FLOW.to_string()],
    };
    if let Some(bad) = checks.iter().find(|c| !check_applies(c)) {
        return Err(CliError::Input(format!("unknown check {bad:?}")));
    }
    let wants = |name: &str| checks.iter().any(|c| c == name);

    let mut output = json!({ "config": config("verify", args), "system": spec });
    let mut passed = true;

    if SYMMETRY_CHECKS.iter().any(|c| wants(c)) {
        let (system, action) = mechanical(&built)?;
        let opts = VerifyOptions {
            tolerance: args.tol,
            ..VerifyOptions::default()
        };
        let mut report =
            verify_scaling_symmetry_with(action, system, args.samples, args.seed, &opts);
        report.checks.retain(|c| {
            wants(&c.name) || (c.name == CHECK_MOMENTUM_INVARIANCE && wants(CHECK_MOMENTUM))
        });
        for c in &report.checks {
            log::info!("{}: max residual {:e}", c.name, c.max_residual);
        }
        passed &= report.passed();
        output["symmetry"] = serde_json::to_value(&report)?;
    }

    if wants(CHECK_NOETHER) || wants(CHECK_FLOW) {
        let z0 = draw_initial_state(&built, args.seed, args.t_final, args.dt)?;
        output["initial_state"] = json!({ "q": z0.q.as_slice(), "p": z0.p.as_slice() });
        if wants(CHECK_NOETHER) {
            let (system, action) = mechanical(&built)?;
            let report = verify_noether(system, action, &z0, args.t_final, args.dt)?;
            passed &= report.passed;
            output["noether"] = serde_json::to_value(&report)?;
        }
        if wants(CHECK_FLOW) {
            let report = verify_conformal_flow(
                built.field(),
                built.conformal_parameter(),
                &z0,
                args.t_final,
                args.dt,
            )?;
            passed &= report.passed;
            output["flow"] = serde_json::to_value(&report)?;
        }
    }
    output["passed"] = json!(passed);
    write_output(args.out.as_deref(), &to_json(&output)?)?;
    Ok(if passed {
        Exit::Success
    } else {
        Exit::Verification
    })
}

pub fn integrate(args: &IntegrateArgs) -> Result<Exit, CliError> {
    positive("dt", args.dt)?;
    positive("t-final", args.t_final)?;
    let spec = load_spec(&args.system)?;
    let built = build_system(&spec)?;
    let n = built.dim();
    let z0 = if let Some(path) = &args.re {
        let doc =
            parse_relative_equilibrium(&read_text(path)?).map_err(|source| CliError::Parse {
                path: path.clone(),
                source,
            })?;
        doc.equilibrium.phase_point()
    } else if let Some(path) = &args.init {
        let cfg = parse_configuration_csv(&read_text(path)?).map_err(|source| CliError::Parse {
            path: path.clone(),
            source,
        })?;
        PhasePoint {
            q: cfg.q,
            p: DVector::zeros(n),
        }
    } else if matches!(built, BuiltSystem::Conformal { .. }) {
        PhasePoint::from_slices(&[1.0], &[0.0]).map_err(|e| CliError::Input(e.to_string()))?
    } else {
        return Err(CliError::Input(
            "integrate needs --init or --re for this system".into(),
        ));
    };
    if z0.dim() != n {
        return Err(CliError::Input(format!(
            "initial state has dimension {}, system has {n}",
            z0.dim()
        )));
    }
    let opts = IntegrateOptions {
        action: built.action().cloned(),
        ..IntegrateOptions::default()
    };
    let traj = integrate_with(
        built.field(),
        built.conformal_parameter(),
        &z0,
        args.t_final,
        args.dt,
        &opts,
    )?;
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf).map_err(io_json)?;
    let text = String::from_utf8(buf).map_err(|e| CliError::Input(e.to_string()))?;
    write_output(args.out.as_deref(), &text)?;
    Ok(Exit::Success)
}

pub fn homothetic(args: &HomotheticArgs) -> Result<Exit, CliError> {
    positive("dt", args.dt)?;
    positive("t-final", args.t_final)?;
    let doc =
        parse_relative_equilibrium(&read_text(&args.re)?).map_err(|source| CliError::Parse {
            path: args.re.clone(),
            source,
        })?;
    let built = build_system(&doc.system)?;
    let (system, action) = mechanical(&built)?;
    let report = verify_homothetic_orbit(system, action, &doc.equilibrium, args.t_final, args.dt)?;
    let output = json!({
        "config": config("homothetic", args),
        "system": doc.system,
        "xi": doc.equilibrium.xi,
        "c": action.c,
        "b": action.b,
        "report": report,
    });
    write_output(args.out.as_deref(), &to_json(&output)?)?;
    Ok(if report.passed {
        Exit::Success
    } else {
        Exit::Verification
    })
}
