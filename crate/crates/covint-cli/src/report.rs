//! Machine-readable result records: flat `key = value` lines, UTF-8, LF.
//!
//! Every run writes the full resolved configuration alongside its results so
//! a record is reproducible on its own.

use std::fmt::Display;

use crate::config::{DomainSpec, ModeSpec, ProblemConfig};

#[derive(Debug, Default)]
pub struct Record {
    lines: Vec<(String, String)>,
}

impl Record {
    pub fn new(command: &str) -> Self {
        let mut r = Record::default();
        r.push("covint.schema", "1");
        r.push("run.command", command);
        r
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_list(&mut self, key: &str, values: &[impl Display]) {
        let joined: Vec<String> = values.iter().map(|v| v.to_string()).collect();
        self.push(key, joined.join(", "));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Echoes the resolved configuration.
    pub fn push_config(&mut self, cfg: &ProblemConfig) {
        self.push("config.dimension", cfg.dimension);
        self.push("config.domain.kind", cfg.domain.kind());
        match &cfg.domain {
            DomainSpec::Box { lo, hi } => {
                self.push_list("config.domain.lo", lo);
                self.push_list("config.domain.hi", hi);
            }
            DomainSpec::Cubes(cubes) => {
                for (i, (c, hw)) in cubes.iter().enumerate() {
                    let c: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                    self.push(
                        &format!("config.domain.cube.{i}"),
                        format!("{} ; {hw}", c.join(", ")),
                    );
                }
            }
            DomainSpec::Classified {
                lo,
                hi,
                inside_source,
                unknown_band,
                convex_safe,
                ..
            } => {
                self.push_list("config.domain.lo", lo);
                self.push_list("config.domain.hi", hi);
                self.push("config.domain.inside", inside_source);
                self.push("config.domain.unknown_band", unknown_band);
                self.push("config.domain.convex_safe", convex_safe);
            }
        }
        for (i, src) in cfg.map_sources.iter().enumerate() {
            self.push(&format!("config.map.g{}", i + 1), src);
        }
        if let Some(f) = &cfg.integrand_source {
            self.push("config.integrand.f", f);
        }
        if let Some(d) = &cfg.gauge_source {
            self.push("config.gauge.delta", d);
        }
        for (i, (lo, hi)) in cfg.declared_k.iter().enumerate() {
            let lo: Vec<String> = lo.iter().map(|v| v.to_string()).collect();
            let hi: Vec<String> = hi.iter().map(|v| v.to_string()).collect();
            self.push(
                &format!("config.declared_k.box.{i}"),
                format!("{} ; {}", lo.join(", "), hi.join(", ")),
            );
        }
        let o = &cfg.options;
        self.push_list("config.options.depths", &o.depths);
        if !o.radii.is_empty() {
            self.push_list("config.options.radii", &o.radii);
        }
        self.push(
            "config.options.mode",
            match o.mode {
                ModeSpec::Sampled => "sampled",
                ModeSpec::Modulus => "modulus",
            },
        );
        if let Some(l) = o.lipschitz_f {
            self.push("config.options.lipschitz_f", l);
        }
        if let Some(l) = o.lipschitz_g {
            self.push("config.options.lipschitz_g", l);
        }
        self.push("config.options.samples_per_axis", o.samples_per_axis);
        self.push("config.options.pair_samples", o.pair_samples);
        self.push("config.options.seed", o.seed);
        self.push("config.options.tol", o.tol);
        self.push("config.options.verdict_tol", o.verdict_tol);
        self.push("config.options.det_tol", o.det_tol);
        self.push("config.options.inj_samples", o.inj_samples);
        self.push("config.options.inj_separation", o.inj_separation);
        self.push("config.options.inj_tol", o.inj_tol);
        self.push("config.options.probe_points", o.probe_points);
        if let Some(eps) = o.mask_eps {
            self.push("config.options.mask_eps", eps);
        }
        self.push("config.options.max_depth", o.max_depth);
        self.push("config.options.cell_budget", o.cell_budget);
    }

    pub fn push_trace(&mut self, prefix: &str, trace: &covint::darboux::IntegralTrace) {
        self.push(&format!("{prefix}.rigor"), trace.rigor);
        self.push(&format!("{prefix}.converged"), trace.converged);
        for (i, rec) in trace.records.iter().enumerate() {
            self.push(&format!("{prefix}.{i}.depth"), rec.depth);
            self.push(&format!("{prefix}.{i}.lower"), rec.lower);
            self.push(&format!("{prefix}.{i}.upper"), rec.upper);
            self.push(&format!("{prefix}.{i}.oscillation"), rec.oscillation);
            self.push(&format!("{prefix}.{i}.boundary_slack"), rec.boundary_slack);
        }
    }
}
