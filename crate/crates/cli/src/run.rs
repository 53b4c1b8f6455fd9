use std::fs;
use std::path::{Path, PathBuf};

use orbidiff::diffeo::{compose_sections, estimate_budget, invert_section, validate_budget, LocalDiffeo, Omega};
use orbidiff::equivariant::{
    check_is, descend, is_automorphism, is_weak_equivalence, kernel_witness, KernelWitness, WeakCheck,
};
use orbidiff::geodesic::{exp_orb, trace_orbifold_geodesic};
use orbidiff::linalg::dist;
use orbidiff::orbifold::{fixed_subspace, ChartId, OrbitPoint, TangentOrbVector};
use orbidiff::orbisection::{bracket, Orbisection};
use orbidiff::region::Region;
use orbidiff::regularity::{evol, evolution_path, evolve, right_log_derivative, H_FD};
use orbidiff::verify::{verify, VerifyOptions};
use orbidiff::{Budget64, Error, Scenario64};
use serde_json::{json, Value};

use crate::out::{columns, num, nums, write_json, Csv, Svg};

/// Tolerance of the right-logarithmic-derivative check in `evolve`.
const RLOG_TOL: f64 = 1e-4;

/// Exit status of a subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    InvariantFailure,
}

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn io(e: std::io::Error) -> Self {
        Self {
            code: 2,
            message: format!("cannot write output: {e}"),
        }
    }
}

/// Map a library error raised while running `op` to an exit code.
pub fn classify(op: &str, e: Error) -> Failure {
    let code = match &e {
        _ if e.is_numerical() => 3,
        Error::Descent { .. } => 1,
        Error::Domain { .. } => 3,
        _ => 2,
    };
    Failure {
        code,
        message: format!("{op}: {e}"),
    }
}

pub struct Ctx {
    pub scenario: Scenario64,
    pub out: PathBuf,
    pub svg: bool,
}

type Run = Result<Outcome, Failure>;

fn io<T>(r: std::io::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::io)
}

impl Ctx {
    fn d(&self) -> usize {
        self.scenario.atlas.dim()
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn chart_name(&self, id: ChartId) -> String {
        self.scenario.atlas.chart(id).name.clone()
    }

    fn csv(&self, file: &str, header: Vec<String>) -> Result<Csv, Failure> {
        let mut csv = io(Csv::new(self.path(file), &header))?;
        csv.comment(format!("scenario = {}", self.scenario.name()));
        csv.comment(format!("seed = {}", self.scenario.commands().seed));
        Ok(csv)
    }

    fn budget(&self, op: &str) -> Result<Budget64, Failure> {
        estimate_budget(&self.scenario.atlas, &self.scenario.metric).map_err(|e| classify(op, e))
    }

    fn section(&self, op: &str, name: &str) -> Result<&Orbisection<f64>, Failure> {
        self.scenario.section(name).map_err(|e| classify(op, e))
    }

    /// Per-chart evaluation grids on `Ω_1`.
    fn grids(&self, budget: &Budget64) -> Vec<(ChartId, Vec<Vec<f64>>)> {
        let n = self.scenario.commands().grid.max(2);
        self.scenario
            .atlas
            .chart_ids()
            .map(|id| (id, budget.chart(id).omega(Omega::One).grid(n, 4096)))
            .collect()
    }

    /// Write `field` on the grids as `chart,x…,v…`.
    fn field_csv(
        &self,
        file: &str,
        op: &str,
        field: &Orbisection<f64>,
        grids: &[(ChartId, Vec<Vec<f64>>)],
    ) -> Result<f64, Failure> {
        let d = self.d();
        let header = std::iter::once("chart".to_string())
            .chain(columns("x", d))
            .chain(columns("v", d))
            .collect();
        let mut csv = self.csv(file, header)?;
        let mut sup = 0.0f64;
        for (id, pts) in grids {
            for x in pts {
                let v = field.eval(*id, x).map_err(|e| classify(op, e))?;
                sup = v.iter().fold(sup, |m, c| m.max(c.abs()));
                let row = std::iter::once(self.chart_name(*id))
                    .chain(nums(x))
                    .chain(nums(&v))
                    .collect();
                io(csv.row(row))?;
            }
        }
        io(csv.finish())?;
        Ok(sup)
    }

    fn section_residuals(&self, op: &str, field: &Orbisection<f64>) -> Result<(f64, f64), Failure> {
        let atlas = &self.scenario.atlas;
        let eq = field.equivariance_residual(atlas).map_err(|e| classify(op, e))?;
        let compat = field.compatibility_residual(atlas).map_err(|e| classify(op, e))?;
        Ok((eq, compat))
    }

    /// Residuals of a section defined only near the budget regions: equivariance
    /// on the output grids, compatibility at change-region points where both
    /// sides are defined. Returns `(equivariance, compatibility, used, skipped)`.
    fn lazy_residuals(
        &self,
        op: &str,
        field: &Orbisection<f64>,
        grids: &[(ChartId, Vec<Vec<f64>>)],
    ) -> Result<(f64, f64, usize, usize), Failure> {
        let atlas = &self.scenario.atlas;
        let mut eq = 0.0f64;
        for (id, pts) in grids {
            let r = field.chart_equivariance_residual(*id, atlas.chart(*id), pts);
            eq = eq.max(r.map_err(|e| classify(op, e))?);
        }
        let n = self.scenario.commands().grid.max(2);
        let (mut compat, mut used, mut skipped) = (0.0f64, 0, 0);
        for ch in atlas.changes() {
            for x in ch.region.grid(n, 4096) {
                let pair = field
                    .eval(ch.source, &x)
                    .and_then(|v| Ok((v, field.eval(ch.target, &ch.map.apply(&x))?)));
                match pair {
                    Ok((v, w)) => {
                        compat = compat.max(dist(&w, &ch.map.apply_tangent(&v)));
                        used += 1;
                    }
                    Err(Error::Budget { .. }) => skipped += 1,
                    Err(e) => return Err(classify(op, e)),
                }
            }
        }
        Ok((eq, compat, used, skipped))
    }
}

fn verdict(pass: bool) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::InvariantFailure
    }
}

fn pair<'a>(
    cmd: Option<&'a orbidiff::scenario::PairCmd>,
    op: &str,
) -> Result<&'a orbidiff::scenario::PairCmd, Failure> {
    cmd.ok_or_else(|| Failure::config(format!("{op}: scenario has no `commands.{op}` entry")))
}

pub fn trace(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let c = s.commands();
    if c.trace.is_empty() {
        return Err(Failure::config("trace: scenario has no `commands.trace` entries"));
    }
    let d = ctx.d();
    let header = ["arc", "t", "chart"]
        .into_iter()
        .map(String::from)
        .chain(columns("x", d))
        .chain(columns("v", d))
        .chain(std::iter::once("canonical_chart".to_string()))
        .chain(columns("q", d))
        .collect();
    let mut csv = ctx.csv("trace.csv", header)?;
    csv.comment(format!("step = {}, horizon = {}", num(c.step), num(c.horizon)));
    let mut arcs = Vec::new();
    let mut ends = Vec::new();
    for (k, cmd) in c.trace.iter().enumerate() {
        let chart = s.chart(&cmd.chart).map_err(|e| classify("trace", e))?;
        let xi = TangentOrbVector::new(&s.atlas, chart, cmd.base.clone(), cmd.vector.clone())
            .map_err(|e| classify("trace", e))?;
        let arc =
            trace_orbifold_geodesic(&s.atlas, &s.metric, &xi, c.horizon, c.step).map_err(|e| classify("trace", e))?;
        let mut last_t = f64::NAN;
        for (id, smp) in arc.samples() {
            // transition times are shared by consecutive segments
            if smp.t == last_t {
                continue;
            }
            last_t = smp.t;
            let q = s.atlas.canonical_point(&OrbitPoint {
                chart: id,
                rep: smp.x.clone(),
            });
            let row = [k.to_string(), num(smp.t), ctx.chart_name(id)]
                .into_iter()
                .chain(nums(&smp.x))
                .chain(nums(&smp.v))
                .chain(std::iter::once(ctx.chart_name(q.chart)))
                .chain(nums(&q.rep))
                .collect();
            io(csv.row(row))?;
        }
        let end = arc
            .quotient_point(&s.atlas, arc.t_span().1)
            .expect("trace has an end point");
        println!(
            "arc {k}: t = {}, {:?}, canonical point {:?} in chart `{}`",
            num(arc.t_span().1),
            arc.stop,
            end.rep,
            ctx.chart_name(end.chart)
        );
        ends.push(end);
        arcs.push(arc);
    }
    let path = io(csv.finish())?;
    println!("wrote {}", path.display());

    if ctx.svg {
        if d != 2 {
            eprintln!("trace: --svg needs a 2-dimensional scenario, skipped");
        } else {
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            let mut raw = Vec::new();
            let mut canon = Vec::new();
            for arc in &arcs {
                let (mut r, mut q) = (Vec::new(), Vec::new());
                for (id, smp) in arc.samples() {
                    let p = s.atlas.canonical_representative(&OrbitPoint {
                        chart: id,
                        rep: smp.x.clone(),
                    });
                    for (pt, out) in [(&smp.x, &mut r), (&p, &mut q)] {
                        for i in 0..2 {
                            lo[i] = lo[i].min(pt[i]);
                            hi[i] = hi[i].max(pt[i]);
                        }
                        out.push([pt[0], pt[1]]);
                    }
                }
                raw.push(r);
                canon.push(q);
            }
            let pad = 0.1 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1.0);
            let (lo, hi) = ([lo[0] - pad, lo[1] - pad], [hi[0] + pad, hi[1] + pad]);
            let mut svg = Svg::new(lo, hi);
            for c in s.atlas.charts() {
                // fixed lines of reflections through the chart
                for g in c.group.elements().iter().skip(1) {
                    let basis = fixed_subspace(std::slice::from_ref(g), 1e-9);
                    if basis.len() == 1 {
                        let o = g.apply(&[0.0, 0.0]);
                        let o = [o[0] / 2.0, o[1] / 2.0];
                        let u = &basis[0];
                        let r = (hi[0] - lo[0]).max(hi[1] - lo[1]);
                        svg.polyline(
                            &[[o[0] - r * u[0], o[1] - r * u[1]], [o[0] + r * u[0], o[1] + r * u[1]]],
                            "#d62728",
                            1.0,
                        );
                    } else if basis.is_empty() {
                        svg.dot([c.region.center()[0], c.region.center()[1]], "#d62728");
                    }
                }
            }
            for r in &raw {
                svg.polyline(r, "#bbbbbb", 1.0);
            }
            for (q, end) in canon.iter().zip(&ends) {
                svg.polyline(q, "#1f77b4", 2.0);
                svg.dot([end.rep[0], end.rep[1]], "#1f77b4");
            }
            let path = ctx.path("trace.svg");
            io(svg.write(&path))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(Outcome::Pass)
}

pub fn expmap(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let c = s.commands();
    let cmd = c
        .expmap
        .as_ref()
        .ok_or_else(|| Failure::config("expmap: scenario has no `commands.expmap` entry"))?;
    let chart = s.chart(&cmd.chart).map_err(|e| classify("expmap", e))?;
    let d = ctx.d();
    let zero = vec![0.0; d];
    let vectors = Region::ball(zero.clone(), cmd.radius).grid(c.grid.max(2), 4096);
    let header = columns("v", d)
        .chain(std::iter::once("chart".to_string()))
        .chain(columns("y", d))
        .chain(std::iter::once("canonical_chart".to_string()))
        .chain(columns("q", d))
        .collect();
    let mut csv = ctx.csv("expmap.csv", header)?;
    csv.comment(format!(
        "chart = {}, base = [{}], step = {}",
        cmd.chart,
        nums(&cmd.base).collect::<Vec<_>>().join(", "),
        num(c.step)
    ));
    let mut identity_gap = 0.0f64;
    for v in std::iter::once(zero.clone()).chain(vectors) {
        let xi =
            TangentOrbVector::new(&s.atlas, chart, cmd.base.clone(), v.clone()).map_err(|e| classify("expmap", e))?;
        let y = exp_orb(&s.atlas, &s.metric, &xi, c.step).map_err(|e| classify("expmap", e))?;
        if v == zero {
            let base = OrbitPoint {
                chart,
                rep: cmd.base.clone(),
            };
            identity_gap = s.atlas.quotient_distance(&base, &y).unwrap_or(f64::INFINITY);
        }
        let q = s.atlas.canonical_point(&y);
        let row = nums(&v)
            .chain(std::iter::once(ctx.chart_name(y.chart)))
            .chain(nums(&y.rep))
            .chain(std::iter::once(ctx.chart_name(q.chart)))
            .chain(nums(&q.rep))
            .collect();
        io(csv.row(row))?;
    }
    let path = io(csv.finish())?;
    println!("exp_orb(0) residual {}", num(identity_gap));
    println!("wrote {}", path.display());
    Ok(verdict(identity_gap <= c.tol))
}

fn max_gap(
    s: &Scenario64,
    pts: &[(ChartId, Vec<f64>)],
    mut f: impl FnMut(ChartId, &[f64]) -> orbidiff::Result<(Vec<f64>, Vec<f64>)>,
) -> orbidiff::Result<f64> {
    let mut worst = 0.0f64;
    for (id, x) in pts {
        let (a, b) = f(*id, x)?;
        let gap = s
            .atlas
            .quotient_distance(&OrbitPoint { chart: *id, rep: a }, &OrbitPoint { chart: *id, rep: b })
            .unwrap_or(f64::INFINITY);
        worst = worst.max(gap);
    }
    Ok(worst)
}

fn flat_points(grids: &[(ChartId, Vec<Vec<f64>>)]) -> Vec<(ChartId, Vec<f64>)> {
    grids
        .iter()
        .flat_map(|(id, pts)| pts.iter().map(move |x| (*id, x.clone())))
        .collect()
}

fn budget_json(report: &orbidiff::diffeo::BudgetReport<f64>) -> Value {
    Value::Array(
        report
            .charts
            .iter()
            .map(|c| {
                json!({
                    "chart": c.chart,
                    "c1_norm": c.c1_norm,
                    "tau": c.tau,
                    "sup_norm": c.sup_norm,
                    "sup_bound": c.sup_bound,
                    "min_det": c.min_det,
                    "injective": c.injective,
                    "pass": c.pass(),
                })
            })
            .collect(),
    )
}

pub fn compose(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let cmd = pair(s.commands().compose.as_ref(), "compose")?;
    let tol = s.commands().tol;
    let budget = ctx.budget("compose")?;
    let (sigma, tau) = (ctx.section("compose", &cmd.sigma)?, ctx.section("compose", &cmd.tau)?);
    let out = compose_sections(sigma, tau, &budget).map_err(|e| classify("compose", e))?;
    let grids = ctx.grids(&budget);
    let sup = ctx.field_csv("compose.csv", "compose", &out, &grids)?;
    let (eq, compat, compat_points, compat_skipped) = ctx.lazy_residuals("compose", &out, &grids)?;
    let (es, et) = (
        LocalDiffeo::unchecked(sigma, &budget),
        LocalDiffeo::unchecked(tau, &budget),
    );
    let ec = LocalDiffeo::unchecked(&out, &budget);
    let law = max_gap(s, &flat_points(&grids), |id, x| {
        Ok((es.lift(id, &et.lift(id, x)?)?, ec.lift(id, x)?))
    })
    .map_err(|e| classify("compose", e))?;
    let pass = eq <= tol && compat <= tol && law <= tol;
    let budgets = json!({
        "sigma": budget_json(&validate_budget(sigma, &budget).map_err(|e| classify("compose", e))?),
        "tau": budget_json(&validate_budget(tau, &budget).map_err(|e| classify("compose", e))?),
    });
    let report = json!({
        "scenario": s.name(),
        "seed": s.commands().seed,
        "sigma": cmd.sigma,
        "tau": cmd.tau,
        "sup_norm": sup,
        "equivariance_residual": eq,
        "compatibility_residual": compat,
        "compatibility_points": compat_points,
        "compatibility_skipped": compat_skipped,
        "group_law_residual": law,
        "budget": budgets,
        "tol": tol,
        "pass": pass,
    });
    io(write_json(&ctx.path("compose.json"), &report))?;
    println!(
        "compose: sup {}, group law residual {}, pass {pass}",
        num(sup),
        num(law)
    );
    Ok(verdict(pass))
}

pub fn invert(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let cmd = s
        .commands()
        .invert
        .as_ref()
        .ok_or_else(|| Failure::config("invert: scenario has no `commands.invert` entry"))?;
    let tol = s.commands().tol;
    let budget = ctx.budget("invert")?;
    let sigma = ctx.section("invert", &cmd.sigma)?;
    let inv = invert_section(sigma, &budget).map_err(|e| classify("invert", e))?;
    let grids = ctx.grids(&budget);
    let sup = ctx.field_csv("invert.csv", "invert", &inv, &grids)?;
    let (eq, compat, compat_points, compat_skipped) = ctx.lazy_residuals("invert", &inv, &grids)?;
    let (es, ei) = (
        LocalDiffeo::unchecked(sigma, &budget),
        LocalDiffeo::unchecked(&inv, &budget),
    );
    let pts = flat_points(&grids);
    let left = max_gap(s, &pts, |id, x| Ok((ei.lift(id, &es.lift(id, x)?)?, x.to_vec())))
        .map_err(|e| classify("invert", e))?;
    let right = max_gap(s, &pts, |id, x| Ok((es.lift(id, &ei.lift(id, x)?)?, x.to_vec())))
        .map_err(|e| classify("invert", e))?;
    let pass = eq <= tol && compat <= tol && left <= tol && right <= tol;
    let budgets = budget_json(&validate_budget(sigma, &budget).map_err(|e| classify("invert", e))?);
    let report = json!({
        "scenario": s.name(),
        "seed": s.commands().seed,
        "sigma": cmd.sigma,
        "sup_norm": sup,
        "equivariance_residual": eq,
        "compatibility_residual": compat,
        "compatibility_points": compat_points,
        "compatibility_skipped": compat_skipped,
        "left_inverse_residual": left,
        "right_inverse_residual": right,
        "budget": budgets,
        "tol": tol,
        "pass": pass,
    });
    io(write_json(&ctx.path("invert.json"), &report))?;
    println!("invert: inverse residuals {} / {}, pass {pass}", num(left), num(right));
    Ok(verdict(pass))
}

pub fn bracket_cmd(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let cmd = pair(s.commands().bracket.as_ref(), "bracket")?;
    let tol = s.commands().tol;
    let (sigma, tau) = (ctx.section("bracket", &cmd.sigma)?, ctx.section("bracket", &cmd.tau)?);
    let br = bracket(sigma, tau);
    let n = s.commands().grid.max(2);
    let grids: Vec<_> = s
        .atlas
        .chart_ids()
        .map(|id| (id, s.atlas.chart(id).region.scaled(0.9).grid(n, 4096)))
        .collect();
    let sup = ctx.field_csv("bracket.csv", "bracket", &br, &grids)?;
    let (eq, compat) = ctx.section_residuals("bracket", &br)?;
    let swapped = bracket(tau, sigma);
    let mut anti = 0.0f64;
    for (id, x) in flat_points(&grids) {
        let (a, b) = (br.eval(id, &x), swapped.eval(id, &x));
        let (a, b) = (
            a.map_err(|e| classify("bracket", e))?,
            b.map_err(|e| classify("bracket", e))?,
        );
        anti = a.iter().zip(&b).fold(anti, |m, (p, q)| m.max((p + q).abs()));
    }
    let pass = eq <= tol && compat <= tol && anti == 0.0;
    let report = json!({
        "scenario": s.name(),
        "seed": s.commands().seed,
        "sigma": cmd.sigma,
        "tau": cmd.tau,
        "sup_norm": sup,
        "equivariance_residual": eq,
        "compatibility_residual": compat,
        "antisymmetry_residual": anti,
        "tol": tol,
        "pass": pass,
    });
    io(write_json(&ctx.path("bracket.json"), &report))?;
    println!("bracket: sup {}, pass {pass}", num(sup));
    Ok(verdict(pass))
}

pub fn evolve_cmd(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let cmd = s
        .commands()
        .evolve
        .as_ref()
        .ok_or_else(|| Failure::config("evolve: scenario has no `commands.evolve` entry"))?;
    let gamma = s.curve(&cmd.curve).map_err(|e| classify("evolve", e))?;
    let budget = ctx.budget("evolve")?;
    let k = cmd.slices.unwrap_or(8).max(1);
    let evolution = evolve(gamma, &budget, k).map_err(|e| classify("evolve", e))?;
    let final_map = evol(gamma, &budget).map_err(|e| classify("evolve", e))?;

    let d = ctx.d();
    let n = s.commands().grid.clamp(2, 5);
    let grids: Vec<_> = s
        .atlas
        .chart_ids()
        .map(|id| (id, budget.chart(id).omega(Omega::One).grid(n, 125)))
        .collect();
    let header = ["t", "chart"]
        .into_iter()
        .map(String::from)
        .chain(columns("x", d))
        .chain(columns("e", d))
        .collect();
    let mut csv = ctx.csv("evolve.csv", header)?;
    csv.comment(format!("curve = {}, slices = {k}", cmd.curve));
    let mut slices = Vec::new();
    for (&t, slice) in evolution.times.iter().zip(&evolution.slices) {
        let mut sup = 0.0f64;
        for (id, pts) in &grids {
            for x in pts {
                let v = slice.eval(*id, x).map_err(|e| classify("evolve", e))?;
                sup = v.iter().fold(sup, |m, c| m.max(c.abs()));
                let row = [num(t), ctx.chart_name(*id)]
                    .into_iter()
                    .chain(nums(x))
                    .chain(nums(&v))
                    .collect();
                io(csv.row(row))?;
            }
        }
        slices.push(json!({ "t": t, "sup_norm": sup }));
    }
    io(csv.finish())?;

    // δʳ Evol(γ) = γ at the slice midpoints
    let path = evolution_path(gamma, &budget);
    let mut rlog = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..k {
        let t = (i as f64 + 0.5) / k as f64;
        let dr = right_log_derivative(&path, t, H_FD).map_err(|e| classify("evolve", e))?;
        let mut r = 0.0f64;
        for (id, pts) in &grids {
            for x in pts.iter().step_by(5) {
                let (a, b) = (dr.eval(*id, x), gamma.eval(*id, t, x));
                let (a, b) = (
                    a.map_err(|e| classify("evolve", e))?,
                    b.map_err(|e| classify("evolve", e))?,
                );
                r = a.iter().zip(&b).fold(r, |m, (p, q)| m.max((p - q).abs()));
            }
        }
        worst = worst.max(r);
        rlog.push(json!({ "t": t, "residual": r }));
    }
    let mut eq = 0.0f64;
    for id in s.atlas.chart_ids() {
        eq = eq.max(final_map.equivariance_residual(id).map_err(|e| classify("evolve", e))?);
    }
    let pass = worst <= RLOG_TOL && eq <= s.commands().tol;
    let report = json!({
        "scenario": s.name(),
        "seed": s.commands().seed,
        "curve": cmd.curve,
        "slices": slices,
        "right_log_derivative": rlog,
        "right_log_tol": RLOG_TOL,
        "evol_equivariance_residual": eq,
        "pass": pass,
    });
    io(write_json(&ctx.path("evolve.json"), &report))?;
    println!("evolve: right-log residual {}, pass {pass}", num(worst));
    Ok(verdict(pass))
}

pub fn equivariance(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let cmd = s
        .commands()
        .equivariance
        .as_ref()
        .ok_or_else(|| Failure::config("equivariance: scenario has no `commands.equivariance` entry"))?;
    let tol = s.commands().tol;
    let budget = ctx.budget("equivariance")?;
    let charts: Vec<ChartId> = match &cmd.chart {
        Some(name) => vec![s.chart(name).map_err(|e| classify("equivariance", e))?],
        None => s.atlas.chart_ids().collect(),
    };
    let n = s.commands().grid.clamp(2, 7);
    let mut reports = Vec::new();
    let mut pass = true;
    for id in charts {
        let chart = s.atlas.chart(id);
        let h = s
            .map(&cmd.map, id, Some(&budget))
            .map_err(|e| classify("equivariance", e))?;
        let pts = budget.chart(id).omega(Omega::One).grid(n, 343);
        let is = check_is(&chart.group, 1e-9).map_err(|e| classify("equivariance", e))?;
        let mut entry = json!({ "chart": chart.name, "group_order": chart.group.order(), "is": is });
        match is_weak_equivalence(h, &chart.group, &pts, tol).map_err(|e| classify("equivariance", e))? {
            WeakCheck::Accepted(w) => {
                entry["weak_equivalence"] = json!(true);
                entry["alpha"] = json!(w.alpha);
                entry["automorphism"] = json!(is_automorphism(&chart.group, &w.alpha));
                entry["residual"] = json!(w.residual);
                let d = descend(&w, &s.atlas, id, &pts, tol).map_err(|e| classify("equivariance", e))?;
                entry["descent_residual"] = json!(d.residual);
                entry["kernel"] = match kernel_witness(&d, &pts, tol).map_err(|e| classify("equivariance", e))? {
                    KernelWitness::Element(g) => json!({ "element": g }),
                    KernelWitness::NotInKernel(r) => json!({ "not_in_kernel": r }),
                    KernelWitness::NoneFound(r) => json!({ "none_found": r }),
                };
            }
            WeakCheck::Rejected {
                residual,
                element,
                automorphism,
            } => {
                pass = false;
                entry["weak_equivalence"] = json!(false);
                entry["residual"] = json!(residual);
                entry["worst_element"] = json!(element);
                entry["automorphism"] = json!(automorphism);
            }
        }
        reports.push(entry);
    }
    let report = json!({
        "scenario": s.name(),
        "seed": s.commands().seed,
        "map": cmd.map,
        "tol": tol,
        "charts": reports,
        "pass": pass,
    });
    io(write_json(&ctx.path("equivariance.json"), &report))?;
    println!("equivariance: map `{}`, pass {pass}", cmd.map);
    Ok(verdict(pass))
}

pub fn verify_cmd(ctx: &Ctx) -> Run {
    let s = &ctx.scenario;
    let report = verify(s, &VerifyOptions::from_scenario(s));
    for c in &report.checks {
        let status = if c.passed { "pass" } else { "FAIL" };
        let note = if c.note.is_empty() {
            String::new()
        } else {
            format!("  ({})", c.note)
        };
        println!(
            "{status}  {:<18} {:<72} {:>11.3e} / {:.1e}{note}",
            c.module, c.name, c.value, c.bound
        );
    }
    let failed = report.failures().count();
    println!("{} checks, {failed} failed", report.checks.len());
    let json = json!({
        "scenario": report.scenario,
        "seed": report.seed,
        "passed": report.passed(),
        "failed": failed,
        "checks": report.checks,
    });
    io(write_json(&ctx.path("verify.json"), &json))?;
    Ok(verdict(report.passed()))
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    io(fs::create_dir_all(dir))
}
