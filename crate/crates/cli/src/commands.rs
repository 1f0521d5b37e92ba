use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;
use sgh_core::mesh::{load_obj, write_obj, TriMesh};
use sgh_core::pyramid::build_pyramid;
use sgh_model::gradcheck::{run_checks, GradCheckOptions};
use sgh_model::scene::{generate_scene, SceneSpec};
use sgh_model::template::template_registry;
use sgh_model::train::overfit as run_overfit;
use sgh_model::{Model, ModelConfig};
use sgh_refine::{refine_mesh, RefineConfig};

use crate::error::{CliError, Result};
use crate::oracle::{oracle_registry, run_oracle};
use crate::{
    GradcheckArgs, OracleArgs, Outcome, OverfitArgs, PyramidArgs, RefineArgs, SegmentArgs, Side, TemplateArgs,
};

pub const LOSS_LOG: &str = "losses.jsonl";

fn check_scale(scale: f64) -> Result<()> {
    if scale > 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(CliError::Argument(format!("--scale must be positive, got {scale}")))
    }
}

/// Reads an OBJ and converts it to meters. Any content problem is a parse error.
pub fn read_mesh(path: &Path, scale: f64) -> Result<TriMesh> {
    check_scale(scale)?;
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Argument(format!("cannot read {}: {e}", path.display())))?;
    let mesh = load_obj(&bytes).map_err(|e| match e {
        sgh_core::Error::Io(io) => CliError::Io(io),
        other => CliError::Parse(format!("{}: {other}", path.display())),
    })?;
    Ok(if scale == 1.0 { mesh } else { mesh.transformed(|p| p.map(|x| x * scale), false) })
}

fn write_mesh(mesh: &TriMesh, path: &Path, scale: f64) -> Result<()> {
    let mesh = if scale == 1.0 { mesh.clone() } else { mesh.transformed(|p| p.map(|x| x / scale), false) };
    create_parent(path)?;
    std::fs::write(path, write_obj(&mesh))?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => Ok(std::fs::create_dir_all(dir)?),
        _ => Ok(()),
    }
}

pub fn template(args: &TemplateArgs) -> Result<Outcome> {
    let registry = template_registry();
    let source = registry.get(&args.kind).ok_or_else(|| {
        let names: Vec<_> = registry.names().collect();
        CliError::Argument(format!("unknown template `{}`; known: {}", args.kind, names.join(", ")))
    })?;
    let mesh = match args.side {
        Side::Right => source.right(),
        Side::Left => source.left(),
    };
    write_mesh(&mesh, &args.out, 1.0)?;
    Ok(Outcome {
        json: json!({
            "template": args.kind,
            "vertices": mesh.vertex_count(),
            "faces": mesh.face_count(),
            "out": args.out,
        }),
        text: format!(
            "wrote {} template ({} vertices, {} faces) to {}",
            args.kind,
            mesh.vertex_count(),
            mesh.face_count(),
            args.out.display()
        ),
        failure: None,
    })
}

pub fn segment(args: &SegmentArgs) -> Result<Outcome> {
    let mesh = read_mesh(&args.mesh, args.scale)?;
    let assignment = sgh_core::segment::segment(&mesh.graph(), args.k, args.k, args.seed)?;
    create_parent(&args.out)?;
    assignment.save(&args.out)?;
    let sizes = assignment.cluster_sizes();
    Ok(Outcome {
        json: json!({
            "k": assignment.k(),
            "vertices": mesh.vertex_count(),
            "cluster_sizes": sizes,
            "converged": assignment.converged(),
            "iterations": assignment.iterations(),
            "out": args.out,
        }),
        text: format!("{} clusters over {} vertices, sizes {:?}", assignment.k(), mesh.vertex_count(), sizes),
        failure: None,
    })
}

pub fn pyramid(args: &PyramidArgs) -> Result<Outcome> {
    let mesh = read_mesh(&args.mesh, args.scale)?;
    let pyramid = build_pyramid(&mesh.graph(), &args.sizes, args.seed)?;
    pyramid.save(&args.out, args.seed)?;
    let sizes = pyramid.level_sizes();
    let edges: Vec<usize> = pyramid.levels().iter().map(|g| g.edge_count()).collect();
    let mut text = String::new();
    for (l, (s, e)) in sizes.iter().zip(&edges).enumerate() {
        let _ = writeln!(text, "level {l}: {s} vertices, {e} edges");
    }
    Ok(Outcome {
        json: json!({ "level_sizes": sizes, "edge_counts": edges, "out": args.out }),
        text: text.trim_end().to_string(),
        failure: None,
    })
}

pub fn overfit(args: &OverfitArgs) -> Result<Outcome> {
    let mut config = match &args.config {
        Some(path) => ModelConfig::load(path)?,
        None => ModelConfig::toy(),
    };
    if let Some(lr) = args.learning_rate {
        config.learning_rate = lr;
    }
    config.validate()?;
    let spec = SceneSpec::random(args.scene_seed, config.views, args.noise);
    spec.validate()?;
    let model = Model::new(config.clone())?;
    let mut params = model.init_params()?;
    let scene = generate_scene(&spec, &config, model.geometry())?;
    std::fs::create_dir_all(&args.out)?;
    let log_path = args.out.join(LOSS_LOG);
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    let report = run_overfit(&model, &mut params, &scene, args.steps, &mut log)?;
    log.flush()?;
    params.save(&args.out, &config)?;
    let (initial, last) = (report.initial(), report.final_total());
    Ok(Outcome {
        json: json!({
            "steps": args.steps,
            "config_hash": config.hash(),
            "initial_loss": initial,
            "final_loss": last,
            "reduction": report.reduction(),
            "final_terms": report.final_losses.terms.iter().map(|(k, v)| (k.to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>(),
            "checkpoint": args.out,
            "log": log_path,
        }),
        text: format!(
            "{} steps: total loss {initial:.6e} -> {last:.6e} ({:.1}% reduction); checkpoint in {}",
            args.steps,
            100.0 * report.reduction(),
            args.out.display()
        ),
        failure: None,
    })
}

fn report_path(args: &RefineArgs) -> PathBuf {
    args.report.clone().unwrap_or_else(|| args.out.with_extension("json"))
}

pub fn refine(args: &RefineArgs) -> Result<Outcome> {
    let mut config: RefineConfig = match &args.config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => RefineConfig::default(),
    };
    if let Some(w) = args.arap_weight {
        config.arap_weight = w;
    }
    if let Some(n) = args.iters {
        config.max_iters = n;
    }
    if let Some(v) = args.voxel_cm {
        config.voxel_cm = v;
    }
    config.validate()?;
    let source = read_mesh(&args.source, args.scale)?;
    let target = read_mesh(&args.target, args.scale)?;
    let outcome = refine_mesh(&source, &target, &config)?;
    write_mesh(&outcome.mesh, &args.out, args.scale)?;
    let report = report_path(args);
    let summary = serde_json::to_value(&outcome.summary)?;
    create_parent(&report)?;
    std::fs::write(&report, serde_json::to_string_pretty(&summary)?)?;
    let s = &outcome.summary;
    let mut text = format!(
        "penetration {:.4} mm -> {:.4} mm, intersection {:.4} cm3 -> {:.4} cm3 ({} iterations",
        s.before.max_penetration_mm,
        s.after.max_penetration_mm,
        s.before.intersection_volume_cm3,
        s.after.intersection_volume_cm3,
        s.iterations
    );
    for (flag, set) in [("diverged", s.diverged), ("reverted", s.reverted)] {
        if set {
            text.push_str(", ");
            text.push_str(flag);
        }
    }
    text.push(')');
    Ok(Outcome {
        json: json!({ "summary": summary, "out": args.out, "report": report }),
        text,
        failure: None,
    })
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<Outcome> {
    let opts = GradCheckOptions { seed: args.seed, ..GradCheckOptions::default() };
    let reports = run_checks(&args.module, &opts)?;
    let mut text = format!("{:<16} {:>8} {:>14}  result\n", "module", "checked", "max rel error");
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for r in &reports {
        let ok = r.passed(opts.tolerance);
        if !ok {
            failed.push(r.module.clone());
        }
        let _ = writeln!(
            text,
            "{:<16} {:>8} {:>14.3e}  {}",
            r.module,
            r.checked(),
            r.max_rel_error(),
            if ok { "pass" } else { "FAIL" }
        );
        rows.push(json!({
            "module": r.module,
            "checked": r.checked(),
            "skipped_kinks": r.inputs.iter().map(|i| i.skipped_kinks).sum::<usize>(),
            "max_rel_error": r.max_rel_error(),
            "passed": ok,
        }));
    }
    Ok(Outcome {
        json: json!({
            "seed": args.seed,
            "step": opts.step,
            "tolerance": opts.tolerance,
            "modules": rows,
            "passed": failed.is_empty(),
        }),
        text: text.trim_end().to_string(),
        failure: (!failed.is_empty()).then(|| format!("gradient check failed for {}", failed.join(", "))),
    })
}

pub fn oracle(args: &OracleArgs) -> Result<Outcome> {
    let registry = oracle_registry();
    let names: Vec<String> =
        if args.test.is_empty() { registry.names().map(String::from).collect() } else { args.test.clone() };
    let mut reports = Vec::new();
    for name in &names {
        let oracle = registry.get(name).ok_or_else(|| {
            let known: Vec<_> = registry.names().collect();
            CliError::Argument(format!("unknown oracle `{name}`; known: {}", known.join(", ")))
        })?;
        reports.push((oracle.description(), run_oracle(name, oracle, args.seed)?));
    }
    let mut text = String::new();
    let mut failed = Vec::new();
    for (description, r) in &reports {
        if !r.passed {
            failed.push(r.test.clone());
        }
        let _ = writeln!(
            text,
            "{:<11} {} cases, max error {:.3e} (tolerance {:.0e})  {}\n            {description}",
            r.test,
            r.cases,
            r.max_error,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    let all: Vec<_> = reports.iter().map(|(_, r)| r).collect();
    Ok(Outcome {
        json: json!({ "seed": args.seed, "tests": all, "passed": failed.is_empty() }),
        text: text.trim_end().to_string(),
        failure: (!failed.is_empty()).then(|| format!("oracle mismatch in {}", failed.join(", "))),
    })
}
