//! Strict, line-oriented problem configuration.
//!
//! Format: `[section]` headers followed by `key = value` lines. `#` starts a
//! comment. Expression values are double-quoted strings; numeric values are
//! constant expressions (so `2*pi` is fine) or comma-separated lists of
//! them; two-part values (boxes, cubes) separate the parts with `;`. Unknown
//! sections or keys are errors, as are duplicate non-repeatable keys.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use covint::expr::{parse as parse_expr, Expr, VectorExpr};
use covint::geometry::{AxisBox, Classifier, Cube, JordanSet, Membership, Point};

#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "config line {}: {}", self.line, self.message)
        } else {
            write!(f, "config: {}", self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone)]
struct RawEntry {
    line: usize,
    value: String,
}

/// Sections -> key -> entries (keys may repeat where documented).
#[derive(Debug, Default)]
struct RawConfig {
    sections: BTreeMap<String, Vec<(String, RawEntry)>>,
}

fn lex_raw(text: &str) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    let mut section: Option<String> = None;
    for (idx, line_text) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = match line_text.find('#') {
            // a # inside a quoted string stays part of the value
            Some(pos) if line_text[..pos].matches('"').count() % 2 == 0 => line_text[..pos].trim(),
            _ => line_text.trim(),
        };
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[') {
            let name = match name.strip_suffix(']') {
                Some(n) => n.trim(),
                None => return err(line, "unterminated section header"),
            };
            if name.is_empty() {
                return err(line, "empty section name");
            }
            section = Some(name.to_string());
            raw.sections.entry(name.to_string()).or_default();
            continue;
        }
        let (key, value) = match trimmed.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => return err(line, "expected `key = value`"),
        };
        if key.is_empty() {
            return err(line, "empty key");
        }
        let section = match &section {
            Some(s) => s.clone(),
            None => return err(line, "key outside any [section]"),
        };
        raw.sections.get_mut(&section).unwrap().push((
            key.to_string(),
            RawEntry {
                line,
                value: value.to_string(),
            },
        ));
    }
    Ok(raw)
}

/// One section's entries with strict consumption: every key must be taken
/// exactly as often as allowed, leftovers are errors.
struct SectionReader {
    name: String,
    entries: Vec<(String, RawEntry, bool)>,
}

impl SectionReader {
    fn take(&mut self, key: &str) -> Result<Option<RawEntry>, ConfigError> {
        let mut found: Option<RawEntry> = None;
        for (k, e, used) in self.entries.iter_mut() {
            if k == key {
                if *used {
                    continue;
                }
                if found.is_some() {
                    return err(e.line, format!("duplicate key `{key}` in [{}]", self.name));
                }
                *used = true;
                found = Some(e.clone());
            }
        }
        Ok(found)
    }

    fn take_all(&mut self, key: &str) -> Vec<RawEntry> {
        let mut out = Vec::new();
        for (k, e, used) in self.entries.iter_mut() {
            if k == key && !*used {
                *used = true;
                out.push(e.clone());
            }
        }
        out
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (k, e, used) in &self.entries {
            if !used {
                return err(e.line, format!("unknown key `{k}` in [{}]", self.name));
            }
        }
        Ok(())
    }
}

fn unquote(entry: &RawEntry) -> Result<String, ConfigError> {
    let v = entry.value.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        Ok(v[1..v.len() - 1].to_string())
    } else {
        err(entry.line, "expected a quoted \"expression\" value")
    }
}

/// Constant expression (no variables).
fn const_num(entry_line: usize, src: &str) -> Result<f64, ConfigError> {
    let e = parse_expr(src, 0).map_err(|e| ConfigError {
        line: entry_line,
        message: e.to_string(),
    })?;
    e.eval_coords(&[]).map_err(|e| ConfigError {
        line: entry_line,
        message: e.to_string(),
    })
}

fn num_list(entry: &RawEntry) -> Result<Vec<f64>, ConfigError> {
    entry
        .value
        .split(',')
        .map(|part| const_num(entry.line, part.trim()))
        .collect()
}

fn single_num(entry: &RawEntry) -> Result<f64, ConfigError> {
    const_num(entry.line, entry.value.trim())
}

#[derive(Debug, Clone)]
pub enum DomainSpec {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Cubes(Vec<(Vec<f64>, f64)>),
    Classified {
        lo: Vec<f64>,
        hi: Vec<f64>,
        inside_source: String,
        inside: Expr,
        unknown_band: f64,
        /// Corner certification is exact for this classifier (user's claim).
        convex_safe: bool,
    },
}

impl DomainSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            DomainSpec::Box { .. } => "box",
            DomainSpec::Cubes(_) => "cubes",
            DomainSpec::Classified { .. } => "classified",
        }
    }

    pub fn to_set(&self) -> Result<JordanSet, ConfigError> {
        match self {
            DomainSpec::Box { lo, hi } => {
                Ok(JordanSet::Box(AxisBox::from_coords(lo.clone(), hi.clone())))
            }
            DomainSpec::Cubes(cubes) => {
                let cubes = cubes
                    .iter()
                    .map(|(c, hw)| Cube::new(Point::new(c.clone()), *hw))
                    .collect();
                JordanSet::cube_union(cubes).map_err(|e| ConfigError {
                    line: 0,
                    message: e.to_string(),
                })
            }
            DomainSpec::Classified {
                lo,
                hi,
                inside,
                unknown_band,
                convex_safe,
                ..
            } => {
                let bounds = AxisBox::from_coords(lo.clone(), hi.clone());
                let inside = inside.clone();
                let band = *unknown_band;
                let classify = move |p: &Point| match inside.eval(p) {
                    Ok(v) if v <= -band => Membership::Inside,
                    Ok(v) if v > band => Membership::Outside,
                    _ => Membership::Unknown,
                };
                let mut classifier = Classifier::new(bounds, Arc::new(classify));
                classifier.convex_safe = *convex_safe;
                Ok(JordanSet::Classified(classifier))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSpec {
    Sampled,
    Modulus,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub depths: Vec<u32>,
    pub radii: Vec<f64>,
    pub mode: ModeSpec,
    pub lipschitz_f: Option<f64>,
    pub lipschitz_g: Option<f64>,
    pub samples_per_axis: usize,
    pub pair_samples: usize,
    pub seed: u64,
    pub tol: f64,
    pub verdict_tol: f64,
    pub det_tol: f64,
    pub inj_samples: usize,
    pub inj_separation: f64,
    pub inj_tol: f64,
    pub probe_points: usize,
    pub mask_eps: Option<f64>,
    pub max_depth: u32,
    pub cell_budget: u64,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            depths: vec![4, 6, 8],
            radii: Vec::new(),
            mode: ModeSpec::Sampled,
            lipschitz_f: None,
            lipschitz_g: None,
            samples_per_axis: 2,
            pair_samples: 6,
            seed: 0,
            tol: 1e-6,
            verdict_tol: 0.01,
            det_tol: 0.05,
            inj_samples: 2048,
            inj_separation: 0.25,
            inj_tol: 1e-2,
            probe_points: 8,
            mask_eps: None,
            max_depth: 16,
            cell_budget: covint::geometry::DEFAULT_CELL_BUDGET,
        }
    }
}

#[derive(Debug)]
pub struct ProblemConfig {
    pub dimension: usize,
    pub domain: DomainSpec,
    pub map_sources: Vec<String>,
    pub map: Option<VectorExpr>,
    pub integrand_source: Option<String>,
    pub integrand: Option<Expr>,
    pub gauge_source: Option<String>,
    pub gauge: Option<Expr>,
    pub declared_k: Vec<(Vec<f64>, Vec<f64>)>,
    pub options: Options,
}

impl ProblemConfig {
    pub fn parse(text: &str) -> Result<ProblemConfig, ConfigError> {
        let mut raw = lex_raw(text)?;
        let known = [
            "problem",
            "domain",
            "map",
            "integrand",
            "gauge",
            "declared_k",
            "options",
        ];
        for name in raw.sections.keys() {
            if !known.contains(&name.as_str()) {
                return err(0, format!("unknown section [{name}]"));
            }
        }
        let mut section = |name: &str| -> SectionReader {
            SectionReader {
                name: name.to_string(),
                entries: raw
                    .sections
                    .remove(name)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(k, e)| (k, e, false))
                    .collect(),
            }
        };

        let mut problem = section("problem");
        let dim_entry = match problem.take("dimension")? {
            Some(e) => e,
            None => return err(0, "[problem] needs `dimension`"),
        };
        let dimension = single_num(&dim_entry)? as usize;
        if dimension == 0 || dimension > 8 {
            return err(dim_entry.line, "dimension must be between 1 and 8");
        }
        problem.finish()?;

        let mut domain_sec = section("domain");
        let kind_entry = match domain_sec.take("kind")? {
            Some(e) => e,
            None => return err(0, "[domain] needs `kind`"),
        };
        let coords = |entry: &RawEntry, what: &str| -> Result<Vec<f64>, ConfigError> {
            let v = num_list(entry)?;
            if v.len() != dimension {
                return err(
                    entry.line,
                    format!("{what} needs {dimension} coordinates, got {}", v.len()),
                );
            }
            Ok(v)
        };
        let domain = match kind_entry.value.trim() {
            "box" => {
                let lo_e = domain_sec.take("lo")?.ok_or_else(|| ConfigError {
                    line: 0,
                    message: "box domain needs `lo`".into(),
                })?;
                let hi_e = domain_sec.take("hi")?.ok_or_else(|| ConfigError {
                    line: 0,
                    message: "box domain needs `hi`".into(),
                })?;
                let lo = coords(&lo_e, "`lo`")?;
                let hi = coords(&hi_e, "`hi`")?;
                for d in 0..dimension {
                    if lo[d] > hi[d] {
                        return err(hi_e.line, format!("lo > hi on axis {}", d + 1));
                    }
                }
                DomainSpec::Box { lo, hi }
            }
            "cubes" => {
                let entries = domain_sec.take_all("cube");
                if entries.is_empty() {
                    return err(kind_entry.line, "cubes domain needs at least one `cube`");
                }
                let mut cubes = Vec::new();
                for e in entries {
                    let (center_part, hw_part) = match e.value.split_once(';') {
                        Some(p) => p,
                        None => return err(e.line, "cube syntax: `center coords ; half_width`"),
                    };
                    let center = coords(
                        &RawEntry {
                            line: e.line,
                            value: center_part.trim().to_string(),
                        },
                        "cube center",
                    )?;
                    let hw = const_num(e.line, hw_part.trim())?;
                    if hw <= 0.0 {
                        return err(e.line, "half_width must be positive");
                    }
                    cubes.push((center, hw));
                }
                DomainSpec::Cubes(cubes)
            }
            "classified" => {
                let lo_e = domain_sec.take("lo")?.ok_or_else(|| ConfigError {
                    line: 0,
                    message: "classified domain needs `lo`".into(),
                })?;
                let hi_e = domain_sec.take("hi")?.ok_or_else(|| ConfigError {
                    line: 0,
                    message: "classified domain needs `hi`".into(),
                })?;
                let inside_e = domain_sec.take("inside")?.ok_or_else(|| ConfigError {
                    line: 0,
                    message: "classified domain needs `inside` (<= 0 means inside)".into(),
                })?;
                let band = match domain_sec.take("unknown_band")? {
                    Some(e) => single_num(&e)?,
                    None => 0.0,
                };
                let convex_safe = match domain_sec.take("convex_safe")? {
                    Some(e) => match e.value.trim() {
                        "true" => true,
                        "false" => false,
                        other => {
                            return err(
                                e.line,
                                format!("convex_safe must be true or false, got `{other}`"),
                            )
                        }
                    },
                    None => false,
                };
                let inside_source = unquote(&inside_e)?;
                let inside = parse_expr(&inside_source, dimension).map_err(|e| ConfigError {
                    line: inside_e.line,
                    message: e.to_string(),
                })?;
                DomainSpec::Classified {
                    lo: coords(&lo_e, "`lo`")?,
                    hi: coords(&hi_e, "`hi`")?,
                    inside_source,
                    inside,
                    unknown_band: band,
                    convex_safe,
                }
            }
            other => return err(kind_entry.line, format!("unknown domain kind `{other}`")),
        };
        domain_sec.finish()?;

        let mut map_sec = section("map");
        let mut map_sources = Vec::new();
        for i in 1..=dimension {
            if let Some(e) = map_sec.take(&format!("g{i}"))? {
                map_sources.push((e.line, unquote(&e)?));
            }
        }
        map_sec.finish()?;
        let map = if map_sources.is_empty() {
            None
        } else if map_sources.len() != dimension {
            return err(
                map_sources[0].0,
                format!("[map] needs all of g1..g{dimension}"),
            );
        } else {
            let mut components = Vec::new();
            for (line, src) in &map_sources {
                components.push(parse_expr(src, dimension).map_err(|e| ConfigError {
                    line: *line,
                    message: e.to_string(),
                })?);
            }
            Some(VectorExpr::new(components, dimension))
        };
        let map_sources: Vec<String> = map_sources.into_iter().map(|(_, s)| s).collect();

        let mut integrand_sec = section("integrand");
        let (integrand_source, integrand) = match integrand_sec.take("f")? {
            Some(e) => {
                let src = unquote(&e)?;
                let parsed = parse_expr(&src, dimension).map_err(|pe| ConfigError {
                    line: e.line,
                    message: pe.to_string(),
                })?;
                (Some(src), Some(parsed))
            }
            None => (None, None),
        };
        integrand_sec.finish()?;

        let mut gauge_sec = section("gauge");
        let (gauge_source, gauge) = match gauge_sec.take("delta")? {
            Some(e) => {
                let src = unquote(&e)?;
                let parsed = parse_expr(&src, dimension).map_err(|pe| ConfigError {
                    line: e.line,
                    message: pe.to_string(),
                })?;
                (Some(src), Some(parsed))
            }
            None => (None, None),
        };
        gauge_sec.finish()?;

        let mut k_sec = section("declared_k");
        let mut declared_k = Vec::new();
        for e in k_sec.take_all("box") {
            let (lo_part, hi_part) = match e.value.split_once(';') {
                Some(p) => p,
                None => return err(e.line, "declared_k box syntax: `lo coords ; hi coords`"),
            };
            let lo = coords(
                &RawEntry {
                    line: e.line,
                    value: lo_part.trim().into(),
                },
                "box lo",
            )?;
            let hi = coords(
                &RawEntry {
                    line: e.line,
                    value: hi_part.trim().into(),
                },
                "box hi",
            )?;
            for d in 0..dimension {
                if lo[d] > hi[d] {
                    return err(e.line, format!("lo > hi on axis {}", d + 1));
                }
            }
            declared_k.push((lo, hi));
        }
        k_sec.finish()?;

        let mut opt_sec = section("options");
        let mut options = Options::default();
        if let Some(e) = opt_sec.take("depths")? {
            let v = num_list(&e)?;
            if v.is_empty() || v.windows(2).any(|w| w[0] >= w[1]) || v.iter().any(|&d| d < 0.0) {
                return err(e.line, "depths must be a strictly increasing list");
            }
            options.depths = v.iter().map(|&d| d as u32).collect();
        }
        if let Some(e) = opt_sec.take("radii")? {
            let v = num_list(&e)?;
            if v.iter().any(|&r| r <= 0.0) || v.windows(2).any(|w| w[0] <= w[1]) {
                return err(e.line, "radii must be positive and strictly decreasing");
            }
            options.radii = v;
        }
        if let Some(e) = opt_sec.take("mode")? {
            options.mode = match e.value.trim() {
                "sampled" => ModeSpec::Sampled,
                "modulus" => ModeSpec::Modulus,
                other => return err(e.line, format!("unknown mode `{other}`")),
            };
        }
        if let Some(e) = opt_sec.take("lipschitz_f")? {
            options.lipschitz_f = Some(single_num(&e)?);
        }
        if let Some(e) = opt_sec.take("lipschitz_g")? {
            options.lipschitz_g = Some(single_num(&e)?);
        }
        if let Some(e) = opt_sec.take("samples_per_axis")? {
            options.samples_per_axis = single_num(&e)? as usize;
            if options.samples_per_axis == 0 {
                return err(e.line, "samples_per_axis must be at least 1");
            }
        }
        if let Some(e) = opt_sec.take("pair_samples")? {
            options.pair_samples = (single_num(&e)? as usize).max(2);
        }
        if let Some(e) = opt_sec.take("seed")? {
            options.seed = single_num(&e)? as u64;
        }
        if let Some(e) = opt_sec.take("tol")? {
            options.tol = single_num(&e)?;
        }
        if let Some(e) = opt_sec.take("verdict_tol")? {
            options.verdict_tol = single_num(&e)?;
        }
        if let Some(e) = opt_sec.take("det_tol")? {
            options.det_tol = single_num(&e)?;
        }
        if let Some(e) = opt_sec.take("inj_samples")? {
            options.inj_samples = single_num(&e)? as usize;
        }
        if let Some(e) = opt_sec.take("inj_separation")? {
            options.inj_separation = single_num(&e)?;
        }
        if let Some(e) = opt_sec.take("inj_tol")? {
            options.inj_tol = single_num(&e)?;
        }
        if let Some(e) = opt_sec.take("probe_points")? {
            options.probe_points = single_num(&e)? as usize;
        }
        if let Some(e) = opt_sec.take("mask_eps")? {
            options.mask_eps = Some(single_num(&e)?);
        }
        if let Some(e) = opt_sec.take("max_depth")? {
            options.max_depth = single_num(&e)? as u32;
        }
        if let Some(e) = opt_sec.take("cell_budget")? {
            options.cell_budget = single_num(&e)? as u64;
        }
        opt_sec.finish()?;

        if options.mode == ModeSpec::Modulus && options.lipschitz_f.is_none() {
            return err(0, "mode = modulus needs `lipschitz_f`");
        }

        Ok(ProblemConfig {
            dimension,
            domain,
            map_sources,
            map,
            integrand_source,
            integrand,
            gauge_source,
            gauge,
            declared_k,
            options,
        })
    }

    pub fn bound_mode(&self) -> covint::darboux::BoundMode {
        match self.options.mode {
            ModeSpec::Sampled => covint::darboux::BoundMode::Sampled {
                samples_per_axis: self.options.samples_per_axis,
            },
            ModeSpec::Modulus => covint::darboux::BoundMode::Modulus {
                lipschitz_f: self.options.lipschitz_f.unwrap_or(1.0),
                samples_per_axis: self.options.samples_per_axis,
            },
        }
    }

    pub fn declared_k_sets(&self) -> Vec<JordanSet> {
        self.declared_k
            .iter()
            .map(|(lo, hi)| JordanSet::Box(AxisBox::from_coords(lo.clone(), hi.clone())))
            .collect()
    }
}
