//! One runner per subcommand. Each returns its tables, a summary and the
//! warnings raised along the way; the dispatcher owns the output files.

use std::collections::BTreeMap;
use std::path::Path;

use escapelab::dynamics::{
    estimate_escape_rate, estimate_lambda_max, interpolated_remainder, lower_bound_constant,
    pressure_constant_curvature, remainder_exponents, ehrenfest_time, trapped_curve, TrappedMeasureCurve, MIN_FIT_TIME,
};
use escapelab::geometry::BoundaryPoint;
use escapelab::measures::{check_disintegration_with_horizon, mu_xi_group_sum, mu_xi_pushforward};
use escapelab::schottky::{DeltaMethod, SchottkyGroup};
use escapelab::semiclassics::{convergence_study, free_trace_oracle, weyl_leading_term};

use crate::config::{ExperimentConfig, Setting};
use crate::record::{load_file, Cell, Table, Warning, WarningKind};
use crate::HarnessError;

#[derive(Debug, Clone, Default)]
pub struct CommandOutput {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, Cell>,
    pub warnings: Vec<Warning>,
}

impl CommandOutput {
    fn put(&mut self, key: &str, value: impl Into<Cell>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn warn(&mut self, kind: WarningKind, message: impl Into<String>) {
        self.warnings.push(Warning::new(kind, message));
    }
}

pub const COMMANDS: [&str; 10] = [
    "validate-group",
    "delta",
    "escape-rate",
    "lambda-max",
    "remainder",
    "measures-compare",
    "disintegration",
    "planewave",
    "weyl",
    "report",
];

pub fn validate_group(cfg: &ExperimentConfig, s: &Setting) -> Result<CommandOutput, HarnessError> {
    let grp = &s.group;
    let mut out = CommandOutput::default();
    let mut disks = Table::new("disks", &["generator", "side", "center_x", "center_y", "radius", "angle", "half_angle"]);
    for (k, (src, dst)) in grp.disk_pairs().iter().enumerate() {
        for (side, d) in [("source", src), ("target", dst)] {
            disks.push(vec![
                Cell::int(k + 1),
                side.into(),
                d.center.re.into(),
                d.center.im.into(),
                d.radius.into(),
                d.angle().into(),
                d.half_angle().into(),
            ]);
        }
    }
    let mut arcs = Table::new("free-arcs", &["start", "end", "length"]);
    for a in grp.free_arcs() {
        arcs.push(vec![a.start.into(), a.end.into(), a.length().into()]);
    }
    let mut limit = Table::new("limit-set", &["angle", "x", "y"]);
    if grp.rank() > 0 {
        for p in grp.limit_set_sample(cfg.group.limit_depth)? {
            limit.push(vec![p.angle().into(), p.0.re.into(), p.0.im.into()]);
        }
    }
    out.put("rank", Cell::int(grp.rank()));
    out.put("free_arcs", Cell::int(grp.free_arcs().len()));
    out.put("limit_points", Cell::int(limit.rows.len()));
    out.tables = vec![disks, arcs, limit];
    Ok(out)
}

pub fn delta(cfg: &ExperimentConfig, s: &Setting) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let mut t = Table::new("delta", &["method", "delta", "stderr", "truncation", "truncated"]);
    for method in [DeltaMethod::SeriesBisection, DeltaMethod::OrbitCountSlope] {
        let e = s.group.estimate_delta(method, cfg.group.budget)?;
        if e.truncated {
            out.warn(
                WarningKind::Truncation,
                format!("{}: budget {} limited words to length {}", method.name(), cfg.group.budget, e.truncation),
            );
        }
        if method == DeltaMethod::SeriesBisection {
            out.put("delta", e.delta);
            out.put("stderr", e.stderr);
            out.put("pressure", pressure_constant_curvature(e.delta, s.geometry.n)?);
        }
        t.push(vec![method.name().into(), e.delta.into(), e.stderr.into(), Cell::int(e.truncation), e.truncated.into()]);
    }
    out.tables.push(t);
    Ok(out)
}

fn curve(cfg: &ExperimentConfig, s: &Setting, seed: u64) -> Result<TrappedMeasureCurve, HarnessError> {
    let core = cfg.compact_core(s)?;
    let d = &cfg.dynamics;
    Ok(trapped_curve(&core, &s.times, d.samples, seed, d.evaluation)?)
}

fn curve_table(c: &TrappedMeasureCurve) -> Table {
    let mut t = Table::new("curve", &["t", "measure", "stderr", "n_surviving"]);
    for i in 0..c.times.len() {
        t.push(vec![c.times[i].into(), c.estimates[i].into(), c.stderrs[i].into(), Cell::int(c.survivors[i])]);
    }
    t
}

/// The `delta - n` reference slope in the ball, from the series estimate.
fn reference_pressure(cfg: &ExperimentConfig, s: &Setting, out: &mut CommandOutput) -> Result<Option<f64>, HarnessError> {
    if !s.geometry.is_hyperbolic() {
        return Ok(None);
    }
    let e = s.group.estimate_delta(DeltaMethod::SeriesBisection, cfg.group.budget)?;
    if e.truncated {
        out.warn(WarningKind::Truncation, format!("delta: budget {} limited words to length {}", cfg.group.budget, e.truncation));
    }
    out.put("delta", e.delta);
    Ok(Some(e.delta))
}

pub fn escape_rate(cfg: &ExperimentConfig, s: &Setting, seed: u64) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let c = curve(cfg, s, seed)?;
    out.tables.push(curve_table(&c));
    let window = cfg.dynamics.fit_window;
    let fit = estimate_escape_rate(&c, window)?;
    let eligible = c.times.iter().filter(|t| **t >= window[0] && **t <= window[1] && **t >= MIN_FIT_TIME).count();
    if fit.n_points < eligible {
        out.warn(
            WarningKind::DroppedSamples,
            format!(
                "{} of {eligible} grid times in the fit window were dropped for too few survivors or zero measure",
                eligible - fit.n_points
            ),
        );
    }
    out.put("Q", fit.q);
    out.put("Q_stderr", fit.stderr);
    out.put("fit_start", fit.fit_window[0]);
    out.put("fit_end", fit.fit_window[1]);
    out.put("fit_points", Cell::int(fit.n_points));
    out.put("core_measure", c.core_measure);
    out.put("samples", Cell::int(c.n_samples));
    out.put("note", fit.note.as_str());
    if let Some(delta) = reference_pressure(cfg, s, &mut out)? {
        out.put("delta_minus_n", pressure_constant_curvature(delta, s.geometry.n)?);
    }
    Ok(out)
}

pub fn lambda_max(cfg: &ExperimentConfig, s: &Setting, seed: u64) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let core = cfg.compact_core(s)?;
    let d = &cfg.dynamics;
    let e = estimate_lambda_max(&core, &d.lambda_times, d.lambda_samples, seed)?;
    let mut t = Table::new("slopes", &["t", "slope"]);
    for (time, slope) in &e.slopes {
        t.push(vec![(*time).into(), (*slope).into()]);
    }
    out.tables.push(t);
    out.put("lambda_max", e.lambda_max);
    out.put("n_trapped", Cell::int(e.n_trapped));
    Ok(out)
}

pub fn remainder(cfg: &ExperimentConfig, s: &Setting, seed: u64) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let d = &cfg.dynamics;
    let c = curve(cfg, s, seed)?;
    let (constant, ratios) = lower_bound_constant(&c, &d.h_values, d.lambda0, s.geometry.n)?;
    let mut t = Table::new("remainder", &["h", "ehrenfest_time", "remainder", "lower_ratio"]);
    for (h, ratio) in d.h_values.iter().zip(&ratios) {
        t.push(vec![
            (*h).into(),
            ehrenfest_time(*h, d.lambda0)?.into(),
            interpolated_remainder(*h, d.lambda0, &c)?.into(),
            (*ratio).into(),
        ]);
    }
    out.tables.push(t);
    out.tables.push(curve_table(&c));
    out.put("lambda0", d.lambda0);
    out.put("lower_bound_constant", constant);
    if let Some(delta) = reference_pressure(cfg, s, &mut out)? {
        let (lower, upper) = remainder_exponents(delta, s.geometry.n, d.lambda0)?;
        out.put("exponent_lower", lower);
        out.put("exponent_upper", upper);
    }
    Ok(out)
}

/// `count` boundary points spread evenly over the interiors of the free arcs.
fn boundary_points(grp: &SchottkyGroup, count: usize) -> Vec<BoundaryPoint> {
    let arcs = grp.free_arcs();
    let total: f64 = arcs.iter().map(|a| a.length()).sum();
    (0..count)
        .map(|k| {
            let mut s = (k as f64 + 0.5) / count as f64 * total;
            for a in arcs {
                if s <= a.length() {
                    return BoundaryPoint::from_angle(a.start + s);
                }
                s -= a.length();
            }
            BoundaryPoint::from_angle(arcs[arcs.len() - 1].end)
        })
        .collect()
}

pub fn measures_compare(cfg: &ExperimentConfig, s: &Setting) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let m = &cfg.measures;
    let mut t = Table::new(
        "compare",
        &["xi_angle", "pushforward", "pushforward_error", "t_used", "converged", "group_sum", "group_sum_error", "gap"],
    );
    let mut worst: f64 = 0.0;
    for xi in boundary_points(&s.group, m.pairs) {
        let push = mu_xi_pushforward(&s.geometry, &s.group, xi, &s.symbol, m.t_max, m.max_word_len, &s.measures_quad)?;
        let sum = mu_xi_group_sum(&s.group, xi, &s.symbol, m.max_word_len, &s.measures_quad)?;
        if !push.converged {
            out.warn(
                WarningKind::NonConvergence,
                format!("pushforward at xi angle {} not converged by t_max = {}", xi.angle(), m.t_max),
            );
        }
        if !sum.converged {
            out.warn(WarningKind::NonConvergence, format!("group sum at xi angle {} not converged", xi.angle()));
        }
        let gap = (push.value - sum.value).abs();
        worst = worst.max(gap);
        t.push(vec![
            xi.angle().into(),
            push.value.into(),
            push.error_bound.into(),
            Cell::opt(push.t_used),
            push.converged.into(),
            sum.value.into(),
            sum.error_bound.into(),
            gap.into(),
        ]);
    }
    out.tables.push(t);
    out.put("max_gap", worst);
    Ok(out)
}

pub fn disintegration(cfg: &ExperimentConfig, s: &Setting, seed: u64) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let m = &cfg.measures;
    let d = check_disintegration_with_horizon(
        &s.geometry,
        &s.group,
        &s.symbol,
        &m.boundary_test,
        &s.measures_quad,
        m.max_word_len,
        m.mc_samples,
        seed,
        m.horizon,
    )?;
    if d.dropped_fraction > 0.0 {
        out.warn(
            WarningKind::DroppedSamples,
            format!("{:.3e} of the active samples did not escape by t = {}", d.dropped_fraction, m.horizon),
        );
    }
    let mut t = Table::new(
        "disintegration",
        &["lhs", "lhs_error", "rhs", "sigma", "gap", "dropped_fraction", "n_samples"],
    );
    t.push(vec![
        d.lhs.into(),
        d.lhs_error.into(),
        d.rhs.into(),
        d.sigma.into(),
        d.gap.into(),
        d.dropped_fraction.into(),
        Cell::int(d.n_samples),
    ]);
    out.tables.push(t);
    out.put("gap", d.gap);
    out.put("allowed", d.lhs_error + 4.0 * d.sigma);
    Ok(out)
}

pub fn planewave(cfg: &ExperimentConfig, s: &Setting) -> Result<CommandOutput, HarnessError> {
    if s.group.rank() > 0 {
        return Err(escapelab::Error::Unsupported(
            "plane-wave matrix elements are computed on the model space; remove the group".into(),
        )
        .into());
    }
    let mut out = CommandOutput::default();
    let sc = &cfg.semiclassics;
    let study = convergence_study(&s.symbol, &s.geometry, cfg.xi(), &sc.h_list, sc.quantization, &s.semiclassics_quad)?;
    let mut t = Table::new("convergence", &["h", "re", "im", "quad_error", "mu_xi", "abs_error"]);
    for r in &study.rows {
        t.push(vec![
            r.h.into(),
            r.matrix_element.re.into(),
            r.matrix_element.im.into(),
            r.quad_error.into(),
            r.mu_xi_value.into(),
            r.abs_error.into(),
        ]);
    }
    out.tables.push(t);
    if let Some(order) = study.fitted_order {
        if order < 0.5 {
            out.warn(
                WarningKind::NonConvergence,
                format!("matrix elements approach mu_xi at fitted order {order:.3}"),
            );
        }
    }
    out.put("convention", format!("{:?}", study.convention).to_lowercase().as_str());
    out.put("lambda", study.lambda);
    out.put("exact", study.exact);
    out.put("fitted_order", Cell::opt(study.fitted_order));
    out.put("mu_xi_error", study.mu_xi_error);
    Ok(out)
}

pub fn weyl(cfg: &ExperimentConfig, s: &Setting) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let sc = &cfg.semiclassics;
    let n = s.geometry.n;
    let mut t = Table::new("trace", &["h", "leading", "error", "scaled", "oracle", "oracle_gap"]);
    for &h in &sc.h_list {
        let w = weyl_leading_term(&s.symbol, sc.energy, h, n, sc.quantization, &s.trace_quad)?;
        let oracle = if s.geometry.is_hyperbolic() {
            None
        } else {
            Some(free_trace_oracle(&s.symbol, sc.energy, h, n, &s.trace_quad)?.value)
        };
        t.push(vec![
            h.into(),
            w.value.into(),
            w.error.into(),
            w.scaled.into(),
            Cell::opt(oracle),
            Cell::opt(oracle.map(|o| (w.value - o).abs() / o.abs().max(f64::MIN_POSITIVE))),
        ]);
    }
    out.tables.push(t);
    out.put("energy", sc.energy);
    Ok(out)
}

/// Lists the run records found in `dir`, sorted by run id.
pub fn report(dir: &Path) -> Result<CommandOutput, HarnessError> {
    let mut out = CommandOutput::default();
    let mut paths: Vec<_> = match std::fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(HarnessError::Io(format!("{}: {e}", dir.display()))),
    };
    paths.sort();
    let mut t = Table::new(
        "runs",
        &["run_id", "command", "seed", "config_hash", "started", "finished", "rows", "warnings"],
    );
    let mut warnings = 0usize;
    for p in paths {
        let r = load_file(&p)?;
        if r.command == "report" {
            continue;
        }
        let rows: usize = r.tables.iter().map(|t| t.rows.len()).sum();
        warnings += r.warnings.len();
        t.push(vec![
            r.run_id.as_str().into(),
            r.command.as_str().into(),
            Cell::text(r.seed.to_string()),
            r.config_hash.as_str().into(),
            r.started.as_str().into(),
            r.finished.as_str().into(),
            Cell::int(rows),
            Cell::int(r.warnings.len()),
        ]);
    }
    out.put("runs", Cell::int(t.rows.len()));
    out.put("warnings", Cell::int(warnings));
    out.tables.push(t);
    Ok(out)
}
