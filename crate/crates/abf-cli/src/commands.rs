use std::fs;
use std::io::Write;
use std::process::ExitCode;

use abf::continuum_ff::{
    f_ratio_compare, s_matrix, scaling_compare, ContinuumConfig, ContinuumParams, FRatioChannel, ScalingRow,
    ScalingTable,
};
use abf::lattice_ff::{hat_q, HatRoute, TraceKernel};
use abf::lhp::{one_point_lhp, two_point_lhp};
use abf::verify::{run_criterion, VerifyConfig, CRITERIA};
use abf::weights::{verify_relations, WeightTable};
use abf::{ModelParams, TruncationPolicy, C64};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::output::{render, Cell, Table};
use crate::{Command, Common};

const ISING_EXCLUDED: &str = "k = 2 (the Ising case) is exceptional and needs a separate treatment by \
     analytic continuation; trace and scaling commands assume k >= 3";

type CmdResult<T> = Result<T, String>;

fn parse_complex(s: &str) -> Result<C64, String> {
    s.trim()
        .parse::<C64>()
        .map_err(|_| format!("`{s}` is not a complex number (try 0.1-0.3i)"))
}

#[derive(Debug, Args, Serialize)]
pub struct WeightsArgs {
    #[arg(long)]
    pub k: u32,
    #[arg(long)]
    pub x: f64,
    /// Spectral parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.5")]
    pub u: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct LhpArgs {
    #[arg(long)]
    pub k: u32,
    #[arg(long)]
    pub x: f64,
    /// Boundary labels, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub m: Vec<i64>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Direct,
    Modular,
}

impl From<Route> for HatRoute {
    fn from(r: Route) -> Self {
        match r {
            Route::Direct => HatRoute::Direct,
            Route::Modular => HatRoute::Modular,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    #[arg(long)]
    pub k: u32,
    #[arg(long, default_value_t = 0.5)]
    pub x: f64,
    /// Central height.
    #[arg(long, default_value_t = 1)]
    pub a: i64,
    /// Boundary labels, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0")]
    pub m: Vec<i64>,
    /// Number of insertion pairs; 0 gives the bare probability.
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    /// Upper spectral parameters; defaults to a fixed spread when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_complex)]
    pub v: Vec<C64>,
    /// Lower spectral parameters.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_parser = parse_complex)]
    pub vp: Vec<C64>,
    /// Also report the translation-invariant combination.
    #[arg(long)]
    pub hat: bool,
    #[arg(long, value_enum, default_value_t = Route::Modular)]
    pub route: Route,
    /// List the per-aggregate contributions instead of the totals.
    #[arg(long)]
    pub diagnostics: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    ParticleAntiparticle,
    ParticleParticle,
}

#[derive(Debug, Args, Serialize)]
pub struct ScalingArgs {
    #[arg(long, default_value_t = 3)]
    pub k: u32,
    #[arg(long, default_value_t = 3)]
    pub a: i64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.7")]
    pub beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.0")]
    pub beta_p: Vec<f64>,
    /// Increasing x-sequence.
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9")]
    pub xs: Vec<f64>,
    /// Compare a ratio of F instead of the full form factor; uses the first beta.
    #[arg(long, value_enum)]
    pub f_ratio: Option<Channel>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct SmatrixArgs {
    #[arg(long)]
    pub k: u32,
    #[arg(long, default_value_t = 1)]
    pub a: i64,
    /// Second particle; every b in 1..k when omitted.
    #[arg(long)]
    pub b: Option<i64>,
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub beta_max: f64,
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Restrict the parametric suites to this level.
    #[arg(long)]
    pub k: Option<u32>,
    /// Restrict the parametric suites to this x.
    #[arg(long)]
    pub x: Option<f64>,
    /// Criterion numbers to run, comma separated; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub criterion: Vec<u32>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(cmd: Command) -> CmdResult<ExitCode> {
    match cmd {
        Command::Weights(a) => emit("weights", &a, &a.common, weights(&a)),
        Command::Lhp(a) => emit("lhp", &a, &a.common, lhp(&a)),
        Command::TraceFf(a) => emit("trace-ff", &a, &a.common, trace(&a)),
        Command::ScalingFf(a) => emit("scaling-ff", &a, &a.common, scaling(&a)),
        Command::Smatrix(a) => emit("smatrix", &a, &a.common, smatrix(&a)),
        Command::Verify(a) => {
            let (extra, table, ok) = verify(&a)?;
            emit("verify", &a, &a.common, Ok((extra, table)))?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

/// Extra metadata plus the table a command produced.
type Output = (Map<String, Value>, Table);

fn emit<A: Serialize>(name: &str, args: &A, common: &Common, result: CmdResult<Output>) -> CmdResult<ExitCode> {
    let (extra, table) = result?;
    let trunc = common.truncation().map_err(|e| e.to_string())?;
    let mut meta = Map::new();
    meta.insert("command".into(), json!(name));
    meta.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    meta.insert("eps".into(), json!(trunc.eps));
    meta.insert("max_terms".into(), json!(trunc.max_terms));
    if let Value::Object(fields) = serde_json::to_value(args).map_err(|e| e.to_string())? {
        for (k, v) in fields {
            if k != "common" {
                meta.insert(k, v);
            }
        }
    }
    meta.extend(extra);
    let bytes = render(&meta, &table, common.format)?;
    match &common.out {
        Some(path) => fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))?,
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string())?,
    }
    Ok(ExitCode::SUCCESS)
}

/// Runs `f` on a pool of the requested size; collected results keep input order.
fn pooled<T: Send>(common: &Common, f: impl FnOnce() -> T + Send) -> CmdResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.max(1))
        .build()
        .map_err(|e| e.to_string())?;
    Ok(pool.install(f))
}

fn setup(k: u32, x: f64, common: &Common) -> CmdResult<(ModelParams, TruncationPolicy)> {
    let p = ModelParams::new(k, x).map_err(|e| e.to_string())?;
    let t = common.truncation().map_err(|e| e.to_string())?;
    Ok((p, t))
}

fn require_trace_level(k: u32) -> CmdResult<()> {
    if k == 2 {
        Err(ISING_EXCLUDED.to_string())
    } else {
        Ok(())
    }
}

fn weights(args: &WeightsArgs) -> CmdResult<Output> {
    let (p, t) = setup(args.k, args.x, &args.common)?;
    let hmax = args.k as i32 + 1;
    let rows = pooled(&args.common, || {
        args.u
            .par_iter()
            .map(|&u| {
                let w = WeightTable::new(u, &p, &t)?;
                let mut rows = Vec::new();
                for a in 1..=hmax {
                    for b in [a - 1, a + 1].into_iter().filter(|h| (1..=hmax).contains(h)) {
                        for c in [b - 1, b + 1].into_iter().filter(|h| (1..=hmax).contains(h)) {
                            for d in [c - 1, c + 1].into_iter().filter(|&d| (1..=hmax).contains(&d) && (d - a).abs() == 1) {
                                rows.push(vec![
                                    Cell::from(u),
                                    Cell::from(a as i64),
                                    Cell::from(b as i64),
                                    Cell::from(c as i64),
                                    Cell::from(d as i64),
                                    Cell::from(w.weight(a, b, c, d)),
                                ]);
                            }
                        }
                    }
                }
                Ok(rows)
            })
            .collect::<abf::Result<Vec<_>>>()
    })?
    .map_err(|e| e.to_string())?;
    let mut table = Table::new(&["u", "a", "b", "c", "d", "weight"]);
    rows.into_iter().flatten().for_each(|r| table.push(r));

    let res = verify_relations(&p, &args.u, &t).map_err(|e| e.to_string())?;
    let mut extra = Map::new();
    extra.insert(
        "relation_residuals".into(),
        json!({
            "unitarity": res.unitarity,
            "second_inversion": res.second_inversion,
            "ybe": res.ybe,
            "ybe_scale": res.ybe_scale,
            "rho_inverse": res.rho_inverse,
            "rho_crossing": res.rho_crossing,
        }),
    );
    Ok((extra, table))
}

fn lhp(args: &LhpArgs) -> CmdResult<Output> {
    let (p, t) = setup(args.k, args.x, &args.common)?;
    let top = args.k as i64 + 1;
    let rows = pooled(&args.common, || {
        args.m
            .par_iter()
            .map(|&m| {
                (1..=top)
                    .map(|a| {
                        let pa = one_point_lhp(a, m, &p, &t)?;
                        let up = two_point_lhp(a + 1, a, m, &p, &t)?;
                        let down = if a > 1 { two_point_lhp(a - 1, a, m, &p, &t)? } else { 0.0 };
                        Ok(vec![Cell::from(m), Cell::from(a), Cell::from(pa), Cell::from(up), Cell::from(down)])
                    })
                    .collect::<abf::Result<Vec<_>>>()
            })
            .collect::<abf::Result<Vec<_>>>()
    })?
    .map_err(|e| e.to_string())?;
    let mut table = Table::new(&["m", "a", "p", "p_up", "p_down"]);
    rows.into_iter().flatten().for_each(|r| table.push(r));
    Ok((Map::new(), table))
}

/// Insertion points used when none are given: distinct real parts, vp below v.
fn default_insertions(n: usize) -> (Vec<C64>, Vec<C64>) {
    let v = (0..n).map(|i| C64::new(0.1 + 0.3 * i as f64, 0.05)).collect();
    let vp = (0..n).map(|i| C64::new(0.3 + 0.3 * i as f64, -0.4)).collect();
    (v, vp)
}

fn trace(args: &TraceArgs) -> CmdResult<Output> {
    require_trace_level(args.k)?;
    let (p, t) = setup(args.k, args.x, &args.common)?;
    let (v, vp) = if args.v.is_empty() && args.vp.is_empty() {
        default_insertions(args.n)
    } else {
        (args.v.clone(), args.vp.clone())
    };
    if v.len() != args.n || vp.len() != args.n {
        return Err(format!(
            "--n {} needs {} values for --v and --vp, got {} and {}",
            args.n,
            args.n,
            v.len(),
            vp.len()
        ));
    }
    let kernel = TraceKernel::new(&v, &vp, &p, &t).map_err(|e| e.to_string())?;
    let mut extra = Map::new();
    extra.insert("v".into(), json!(v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()));
    extra.insert("vp".into(), json!(vp.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()));

    if args.diagnostics {
        let m = *args.m.first().ok_or("--diagnostics needs an --m value")?;
        let terms = kernel.contributions(args.a, m).map_err(|e| e.to_string())?;
        let total: C64 = terms.iter().map(|t| t.value).sum();
        let mut table = Table::new(&["mu", "nu", "f", "x_weight", "gamma", "value"]);
        for term in terms {
            table.push(vec![
                Cell::from(term.mu as i64),
                Cell::from(term.nu as i64),
                Cell::from(term.f),
                Cell::from(term.x_weight),
                Cell::from(term.gamma),
                Cell::from(term.value),
            ]);
        }
        extra.insert("total".into(), json!([total.re, total.im]));
        return Ok((extra, table));
    }

    let hat = if args.hat {
        Some(hat_q(args.a, &v, &vp, args.route.into(), &p, &t).map_err(|e| e.to_string())?)
    } else {
        None
    };
    let qs = pooled(&args.common, || {
        args.m.par_iter().map(|&m| kernel.q(args.a, m)).collect::<abf::Result<Vec<_>>>()
    })?
    .map_err(|e| e.to_string())?;
    let cols: &[&'static str] = if hat.is_some() { &["a", "m", "n", "q", "hat_q"] } else { &["a", "m", "n", "q"] };
    let mut table = Table::new(cols);
    for (&m, q) in args.m.iter().zip(qs) {
        let mut row = vec![Cell::from(args.a), Cell::from(m), Cell::from(args.n as i64), Cell::from(q)];
        if let Some(h) = hat {
            row.push(Cell::from(h));
        }
        table.push(row);
    }
    Ok((extra, table))
}

fn scaling(args: &ScalingArgs) -> CmdResult<Output> {
    require_trace_level(args.k)?;
    let t = args.common.truncation().map_err(|e| e.to_string())?;
    if args.xs.is_empty() || args.xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err("--xs must be a nonempty increasing sequence".into());
    }
    let per_x = |x: f64| -> abf::Result<ScalingRow> {
        let table = match args.f_ratio {
            None => {
                let cfg = ContinuumConfig::from_real(&args.beta, &args.beta_p)?;
                scaling_compare(args.a, args.k, &cfg, &[x], &t)?
            }
            Some(ch) => {
                let ch = match ch {
                    Channel::ParticleAntiparticle => FRatioChannel::ParticleAntiparticle,
                    Channel::ParticleParticle => FRatioChannel::ParticleParticle,
                };
                let beta = C64::new(args.beta.first().copied().unwrap_or(0.7), 0.0);
                f_ratio_compare(ch, args.k, beta, &[x], &t)?
            }
        };
        Ok(table.rows[0])
    };
    let rows = pooled(&args.common, || {
        args.xs.par_iter().map(|&x| per_x(x)).collect::<abf::Result<Vec<_>>>()
    })?
    .map_err(|e| e.to_string())?;
    let summary = ScalingTable { rows };
    let mut table = Table::new(&["x", "lattice", "continuum", "rel_err", "ratio"]);
    for r in &summary.rows {
        table.push(vec![
            Cell::from(r.x),
            Cell::from(r.lattice),
            Cell::from(r.continuum),
            Cell::from(r.rel_err),
            Cell::from(r.ratio()),
        ]);
    }
    let mut extra = Map::new();
    extra.insert("monotone".into(), json!(summary.monotone()));
    Ok((extra, table))
}

fn smatrix(args: &SmatrixArgs) -> CmdResult<Output> {
    let cp = ContinuumParams::new(args.k).map_err(|e| e.to_string())?;
    if args.points < 2 || !(args.beta_max > args.beta_min) {
        return Err("need --points >= 2 and --beta-max > --beta-min".into());
    }
    let bs: Vec<i64> = match args.b {
        Some(b) => vec![b],
        None => (1..args.k as i64).collect(),
    };
    let step = (args.beta_max - args.beta_min) / (args.points - 1) as f64;
    let grid: Vec<(f64, i64)> = (0..args.points)
        .flat_map(|i| {
            let beta = args.beta_min + step * i as f64;
            bs.iter().map(move |&b| (beta, b))
        })
        .collect();
    let vals = pooled(&args.common, || {
        grid.par_iter()
            .map(|&(beta, b)| s_matrix(args.a, b, C64::new(beta, 0.0), &cp))
            .collect::<abf::Result<Vec<_>>>()
    })?
    .map_err(|e| e.to_string())?;
    let mut table = Table::new(&["beta", "a", "b", "s"]);
    for (&(beta, b), s) in grid.iter().zip(vals) {
        table.push(vec![Cell::from(beta), Cell::from(args.a), Cell::from(b), Cell::from(s)]);
    }
    Ok((Map::new(), table))
}

fn verify(args: &VerifyArgs) -> CmdResult<(Map<String, Value>, Table, bool)> {
    let trunc = args.common.truncation().map_err(|e| e.to_string())?;
    let mut cfg = VerifyConfig {
        trunc,
        ..VerifyConfig::default()
    };
    if let Some(k) = args.k {
        ModelParams::new(k, 0.5).map_err(|e| e.to_string())?;
        cfg.weight_ks = vec![k];
        cfg.ks = vec![k];
    }
    if let Some(x) = args.x {
        ModelParams::new(args.k.unwrap_or(3), x).map_err(|e| e.to_string())?;
        cfg.xs = vec![x];
    }
    let ids: Vec<u32> = if args.criterion.is_empty() {
        (1..=CRITERIA.len() as u32).collect()
    } else {
        args.criterion.clone()
    };
    if let Some(bad) = ids.iter().find(|&&id| id == 0 || id as usize > CRITERIA.len()) {
        return Err(format!("no criterion {bad}; valid numbers are 1..={}", CRITERIA.len()));
    }
    let reports = pooled(&args.common, || {
        ids.par_iter().filter_map(|&id| run_criterion(id, &cfg)).collect::<Vec<_>>()
    })?;
    let mut table = Table::new(&["criterion", "title", "check", "residual", "threshold", "pass"]);
    let mut ok = true;
    for r in &reports {
        eprintln!("{}", r.summary_line());
        ok &= r.passed();
        for c in &r.checks {
            table.push(vec![
                Cell::from(r.id as i64),
                Cell::from(r.title.clone()),
                Cell::from(c.name.clone()),
                Cell::from(c.residual),
                Cell::from(c.threshold),
                Cell::from(c.passed()),
            ]);
        }
    }
    let mut extra = Map::new();
    extra.insert("passed".into(), json!(ok));
    Ok((extra, table, ok))
}
