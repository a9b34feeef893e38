//! Subcommand implementations. Each prints a human report to stdout, fills
//! the machine record, and returns the process exit code.

use covint::cousin::{
    delta_fine_partition, max_bisection_depth, verify_delta_fine, CousinError, Gauge,
};
use covint::cov::{change_of_variables, default_radii, sard_image_content, CovOpts, CovVerdict};
use covint::darboux::{integral_bracket, IntegralOpts};
use covint::diff::DensityField;
use covint::fields;
use covint::geometry::content_bracket;

use crate::config::ProblemConfig;
use crate::report::Record;

pub struct CommandError(pub String);

impl<E: std::error::Error> From<E> for CommandError {
    fn from(e: E) -> Self {
        CommandError(e.to_string())
    }
}

type CmdResult = Result<i32, CommandError>;

fn need<T>(v: Option<T>, what: &str) -> Result<T, CommandError> {
    v.ok_or_else(|| CommandError(format!("this command needs {what} in the config")))
}

pub fn cmd_integrate(cfg: &ProblemConfig, record: &mut Record) -> CmdResult {
    let f_expr = need(cfg.integrand.clone(), "an [integrand]")?;
    let f = fields::scalar_expr(f_expr);
    let domain = cfg.domain.to_set()?;
    let mode = cfg.bound_mode();
    let opts = IntegralOpts {
        tol: cfg.options.tol,
        max_cells: cfg.options.cell_budget,
    };
    let r = integral_bracket(&f, &domain, &cfg.options.depths, &mode, &opts)?;

    println!(
        "integral bracket   [{}, {}]",
        r.bracket.lower, r.bracket.upper
    );
    println!("width              {}", r.bracket.width());
    println!("rigor              {}", r.trace.rigor);
    println!(
        "convergence        {} (tolerance {})",
        if r.trace.converged {
            "integrable within tol"
        } else {
            "not within tol"
        },
        r.trace.tol
    );
    println!("trace:");
    for rec in &r.trace.records {
        println!(
            "  depth {:>2}  lower {:<22} upper {:<22} oscillation {:.3e}  boundary slack {:.3e}",
            rec.depth, rec.lower, rec.upper, rec.oscillation, rec.boundary_slack
        );
    }
    record.push("result.bracket.lower", r.bracket.lower);
    record.push("result.bracket.upper", r.bracket.upper);
    record.push("result.bracket.depth", r.bracket.depth);
    record.push("result.converged", r.trace.converged);
    record.push_trace("trace", &r.trace);
    Ok(if r.trace.converged { 0 } else { 2 })
}

pub fn cmd_content(cfg: &ProblemConfig, record: &mut Record) -> CmdResult {
    let domain = cfg.domain.to_set()?;
    let depth = *cfg.options.depths.last().unwrap();
    let b = content_bracket(&domain, depth, cfg.options.cell_budget)?;
    let rigor = match &domain {
        covint::geometry::JordanSet::Classified(cl) if !cl.convex_safe => {
            "heuristic-inner (corner+center sampling)"
        }
        covint::geometry::JordanSet::Classified(_) => "certified (convex_safe classifier)",
        _ => "exact cell tests",
    };
    println!("content bracket    [{}, {}]", b.inner, b.outer);
    println!("width              {}", b.width());
    println!("depth              {}", b.depth);
    println!("inner rigor        {rigor}");
    record.push("result.content.inner", b.inner);
    record.push("result.content.outer", b.outer);
    record.push("result.content.depth", b.depth);
    record.push("result.content.rigor", rigor);
    Ok(0)
}

pub fn cmd_cov(cfg: &ProblemConfig, record: &mut Record) -> CmdResult {
    let map = need(cfg.map.clone(), "a [map]")?;
    let f_expr = need(cfg.integrand.clone(), "an [integrand]")?;
    let f = fields::scalar_expr(f_expr);
    let g = fields::vector_expr(map);
    let domain = cfg.domain.to_set()?;

    let mut opts = CovOpts::new(cfg.options.depths.clone());
    opts.mode = cfg.bound_mode();
    opts.tol = cfg.options.tol;
    opts.verdict_tol_floor = cfg.options.verdict_tol;
    opts.radii = cfg.options.radii.clone();
    opts.pair_samples = cfg.options.pair_samples;
    opts.declared_k = cfg.declared_k_sets();
    opts.mask_eps = cfg.options.mask_eps;
    opts.inj_samples = cfg.options.inj_samples;
    opts.inj_separation = cfg.options.inj_separation;
    opts.inj_tol = cfg.options.inj_tol;
    opts.probe_points = cfg.options.probe_points;
    opts.seed = cfg.options.seed;
    opts.max_cells = cfg.options.cell_budget;
    opts.pushforward.lipschitz = cfg.options.lipschitz_g;

    let r = change_of_variables(&f, &g, &domain, &opts)?;

    println!(
        "lhs  (integral of f over the image)      [{}, {}]",
        r.lhs.lower, r.lhs.upper
    );
    println!(
        "rhs  (integral of f(G) |det gbar| over X) [{}, {}]",
        r.rhs.lower, r.rhs.upper
    );
    println!("ratio rhs/lhs      {}", r.ratio);
    println!("verdict            {}", r.verdict);
    println!("lipschitz used     {}", r.lipschitz_used);
    println!(
        "rigor              lhs {}, rhs {}",
        r.lhs_trace.rigor, r.rhs_trace.rigor
    );
    if r.solver_budget_exhausted {
        println!("note               solver budget exhausted; brackets are widened");
    }
    println!(
        "hypothesis flags   {} injectivity witness(es), {} strong-diff failure(s)",
        r.flags.injectivity_witnesses.len(),
        r.flags.strong_diff_failures.len()
    );
    for (i, w) in r.flags.injectivity_witnesses.iter().take(8).enumerate() {
        println!(
            "  witness {i}: x = {}, y = {}, image distance {:.3e}",
            w.x, w.y, w.image_distance
        );
    }
    for (i, p) in r.flags.strong_diff_failures.iter().take(8).enumerate() {
        println!("  strong-diff failure {i}: at {p}");
    }

    record.push("result.lhs.lower", r.lhs.lower);
    record.push("result.lhs.upper", r.lhs.upper);
    record.push("result.rhs.lower", r.rhs.lower);
    record.push("result.rhs.upper", r.rhs.upper);
    record.push("result.ratio", r.ratio);
    record.push(
        "result.verdict",
        match r.verdict {
            CovVerdict::Verified => "Verified",
            CovVerdict::Violated { .. } => "Violated",
            CovVerdict::Inconclusive => "Inconclusive",
        },
    );
    record.push("result.lipschitz_used", r.lipschitz_used);
    record.push("result.solver_budget_exhausted", r.solver_budget_exhausted);
    record.push(
        "result.injectivity_witnesses",
        r.flags.injectivity_witnesses.len(),
    );
    for (i, w) in r.flags.injectivity_witnesses.iter().enumerate() {
        record.push_list(&format!("result.witness.{i}.x"), w.x.coords());
        record.push_list(&format!("result.witness.{i}.y"), w.y.coords());
        record.push(
            &format!("result.witness.{i}.image_distance"),
            w.image_distance,
        );
    }
    record.push(
        "result.strong_diff_failures",
        r.flags.strong_diff_failures.len(),
    );
    record.push_trace("trace.lhs", &r.lhs_trace);
    record.push_trace("trace.rhs", &r.rhs_trace);

    Ok(match r.verdict {
        CovVerdict::Verified => 0,
        CovVerdict::Violated { .. } => 3,
        CovVerdict::Inconclusive => 2,
    })
}

pub fn cmd_sard(cfg: &ProblemConfig, record: &mut Record) -> CmdResult {
    let map = need(cfg.map.clone(), "a [map]")?;
    let g = fields::vector_expr(map);
    let domain = cfg.domain.to_set()?;
    let radii = if cfg.options.radii.is_empty() {
        default_radii(&domain.bounding_box())
    } else {
        cfg.options.radii.clone()
    };
    let field = DensityField::new(g, domain, radii, cfg.options.pair_samples)?;
    let r = sard_image_content(
        &field,
        cfg.options.det_tol,
        &cfg.options.depths,
        cfg.options.lipschitz_g,
        cfg.options.cell_budget,
        cfg.options.seed,
    )?;
    println!("det tolerance      {}", r.det_tolerance);
    println!("singular cells     {}", r.singular_cell_count);
    println!("lipschitz used     {}", r.lipschitz_used);
    println!("image outer content of the singular region:");
    for (d, v) in &r.image_outer_content_by_depth {
        println!("  depth {d:>2}  {v}");
    }
    record.push("result.det_tolerance", r.det_tolerance);
    record.push("result.singular_cells", r.singular_cell_count);
    record.push("result.lipschitz_used", r.lipschitz_used);
    for (i, (d, v)) in r.image_outer_content_by_depth.iter().enumerate() {
        record.push(&format!("result.content.{i}.depth"), *d);
        record.push(&format!("result.content.{i}.value"), *v);
    }
    Ok(0)
}

pub fn cmd_cousin(cfg: &ProblemConfig, record: &mut Record) -> CmdResult {
    let gauge_expr = need(cfg.gauge.clone(), "a [gauge]")?;
    let domain = cfg.domain.to_set()?;
    let cube = match domain.bounding_box().as_cube() {
        Some(c) if matches!(cfg.domain, crate::config::DomainSpec::Box { .. }) => c,
        _ => {
            return Err(CommandError(
                "cousin needs a box domain with equal side lengths (a cube)".into(),
            ))
        }
    };
    let gauge = Gauge::from_expr(gauge_expr);
    match delta_fine_partition(&cube, &gauge, cfg.options.max_depth) {
        Ok(eta) => {
            let fineness = verify_delta_fine(&eta, &gauge)?;
            let validity = covint::partition::validate(&eta);
            let norm = eta.norm()?;
            println!("cells              {}", eta.pairs.len());
            println!("max bisection depth {}", max_bisection_depth(&eta));
            println!("partition norm     {norm}");
            println!(
                "delta-fineness     {}",
                if fineness.is_fine() {
                    "verified"
                } else {
                    "VIOLATED"
                }
            );
            println!(
                "partition validity {}",
                if validity.is_valid() {
                    "verified"
                } else {
                    "VIOLATED"
                }
            );
            record.push("result.cells", eta.pairs.len());
            record.push("result.max_depth", max_bisection_depth(&eta));
            record.push("result.norm", norm);
            record.push("result.fine", fineness.is_fine());
            record.push("result.valid", validity.is_valid());
            Ok(if fineness.is_fine() && validity.is_valid() {
                0
            } else {
                2
            })
        }
        Err(CousinError::MaxDepthExceeded { max_depth, witness }) => {
            println!("no delta-fine partition within depth {max_depth}");
            println!("witness cube       {witness}");
            println!("the gauge is too small there; raise max_depth or inspect the gauge");
            record.push("result.max_depth_exceeded", true);
            record.push("result.witness", witness);
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}
