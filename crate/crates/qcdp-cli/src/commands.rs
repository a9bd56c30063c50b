//! The subcommands. Each one writes CSV or JSON files into the output
//! directory and records them in the manifest.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use qcdp::chaos_exact::{limit_variance, riemann_check, write_variance_csv, SecondMoments, VarianceRow};
use qcdp::disorder::{calibrate, mix64, Calibration};
use qcdp::lattice_rw::{
    ball_covering_check, gauss2, maximal_inequality_check, verify_rw_bounds, write_bound_csv, KernelTable,
};
use qcdp::partitions_moments::{
    boundary_bulk_bounds, fourth_moment_bound_pipeline, green_bound_check, moment_expansion_exact,
    path_oracle_moment, ConstantsMode, WeightSpec,
};
use qcdp::polymer_sim::{
    discretize_test_function, run_replicas, write_sample_csv, BlockSampler, SampleRow, CELL_QUADRATURE_ORDER,
};
use qcdp::stats::{summarize, StatsReport};
use qcdp::{Field, LatticePoint};

use crate::config::{ExperimentConfig, Manifest, Resolved, ThetaEntry, Versions};
use crate::{CliError, Command};

/// Environment variable naming the kernel-table cache directory.
pub const CACHE_ENV: &str = "QCDP_CACHE_DIR";

/// Relative tolerance of `moment-check`, with an absolute floor for moments
/// that vanish exactly.
const MOMENT_RTOL: f64 = 1e-9;
const MOMENT_ATOL: f64 = 1e-15;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    res: Resolved,
    outputs: Vec<String>,
}

impl<'a> Ctx<'a> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.cfg.out)?;
        std::fs::write(self.cfg.out.join(name), bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("serialisable");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn calibration(&self, n: usize) -> Result<Calibration, CliError> {
        let theta = self.res.theta_mode.resolve(n);
        calibrate(&self.res.model, n, theta, self.res.regime).map_err(CliError::precondition)
    }

    fn phi_n(&self, n: usize) -> Result<Field, CliError> {
        discretize_test_function(&self.res.phi, n as f64, CELL_QUADRATURE_ORDER).map_err(CliError::precondition)
    }

    fn blocks(&self, m: usize) -> Result<Vec<usize>, CliError> {
        match &self.cfg.blocks {
            None => Ok((1..=m).collect()),
            Some(b) => {
                if let Some(&i) = b.iter().find(|&&i| i == 0 || i > m) {
                    return Err(CliError::Config(format!("block index {i} outside 1..={m}")));
                }
                Ok(b.clone())
            }
        }
    }

    fn walk_constant(&self) -> f64 {
        self.cfg
            .walk_constant
            .unwrap_or_else(|| verify_rw_bounds(self.cfg.rw_n_max, &self.cfg.rw_t_grid).fitted_c)
    }

    fn check_budget(&self, samplers: &[BlockSampler], replicas: usize) -> Result<(), CliError> {
        let updates: f64 = samplers.iter().map(|s| s.site_updates() as f64).sum::<f64>() * replicas as f64;
        if updates > self.cfg.budget_site_updates {
            return Err(CliError::Budget(format!(
                "{updates:.3e} site updates exceed budget_site_updates = {:.3e}",
                self.cfg.budget_site_updates
            )));
        }
        Ok(())
    }

    fn workers(&self) -> usize {
        if self.cfg.workers == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.cfg.workers
        }
    }
}

pub fn run(command: Command, cfg: &ExperimentConfig) -> Result<(), CliError> {
    let mut ctx = Ctx {
        cfg,
        res: cfg.resolve()?,
        outputs: Vec::new(),
    };
    match command {
        Command::Calibrate => cmd_calibrate(&mut ctx)?,
        Command::ExactVariance => cmd_exact_variance(&mut ctx)?,
        Command::LimitVariance => cmd_limit_variance(&mut ctx)?,
        Command::Simulate => cmd_simulate(&mut ctx)?,
        Command::CltTest => cmd_clt_test(&mut ctx)?,
        Command::BlockCheck => cmd_block_check(&mut ctx)?,
        Command::MomentCheck => cmd_moment_check(&mut ctx)?,
        Command::BoundCheck => cmd_bound_check(&mut ctx)?,
        Command::RwboundCheck => cmd_rwbound_check(&mut ctx)?,
    }
    let manifest = Manifest {
        command: command.name(),
        config: cfg,
        resolved_theta: cfg
            .n
            .iter()
            .map(|&n| ThetaEntry {
                n,
                theta: ctx.res.theta_mode.resolve(n),
            })
            .collect(),
        versions: Versions::current(),
        outputs: ctx.outputs.clone(),
    };
    ctx.write_json("manifest.json", &manifest)
}

fn cmd_calibrate(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut csv = String::from("N,theta,beta,sigma_sq,lambda,r_n,gap\n");
    for &n in &ctx.cfg.n {
        let c = ctx.calibration(n)?;
        println!(
            "N={n} theta={} beta={} sigma_sq={} 1-sigma_sq*R_N={}",
            c.theta,
            c.beta,
            c.sigma_sq,
            c.gap()
        );
        writeln!(
            csv,
            "{n},{:e},{:e},{:e},{:e},{:e},{:e}",
            c.theta,
            c.beta,
            c.sigma_sq,
            c.lambda,
            c.r_n,
            c.gap()
        )
        .expect("string write");
    }
    ctx.write("calibration.csv", csv.as_bytes())
}

fn second_moments(ctx: &Ctx, n: usize) -> Result<SecondMoments, CliError> {
    SecondMoments::new(&ctx.calibration(n)?, &ctx.phi_n(n)?).map_err(CliError::precondition)
}

fn cmd_exact_variance(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for &n in &ctx.cfg.n {
        let sm = second_moments(ctx, n)?;
        for &m in &ctx.cfg.m {
            for i in 1..=m {
                rows.push(VarianceRow {
                    n,
                    m,
                    i,
                    exact: sm.block(m, i).map_err(CliError::precondition)?,
                    bound: sm.geometric_bound(m, i).unwrap_or(f64::NAN),
                    mc_estimate: None,
                    mc_stderr: None,
                });
            }
        }
    }
    let mut buf = Vec::new();
    write_variance_csv(&rows, &mut buf)?;
    ctx.write("exact_variance.csv", &buf)
}

fn cmd_limit_variance(ctx: &mut Ctx) -> Result<(), CliError> {
    let order = ctx.cfg.quadrature_order;
    let phi = ctx.res.phi.clone();
    let lv = |a: f64, b: f64| limit_variance(&phi, a, b, order).map_err(CliError::precondition);
    let mut csv = String::from("a,b,v\n");
    for &[a, b] in &ctx.cfg.intervals {
        let v = lv(a, b)?;
        println!("v_phi on ({a}, {b}] = {v}");
        writeln!(csv, "{a},{b},{v:e}").expect("string write");
    }
    ctx.write("limit_variance.csv", csv.as_bytes())?;

    let mut blocks = String::from("M,i,a,b,v\n");
    for &m in &ctx.cfg.m {
        for i in 1..=m {
            let (a, b) = ((i - 1) as f64 / m as f64, i as f64 / m as f64);
            writeln!(blocks, "{m},{i},{a},{b},{:e}", lv(a, b)?).expect("string write");
        }
    }
    ctx.write("limit_blocks.csv", blocks.as_bytes())?;

    let mut riemann = String::from("N,a,b,lattice,continuum,gap\n");
    for &n in &ctx.cfg.n {
        for &[a, b] in &ctx.cfg.intervals {
            let r = riemann_check(n, a, b, &phi).map_err(CliError::precondition)?;
            writeln!(riemann, "{n},{a},{b},{:e},{:e},{:e}", r.lattice, r.continuum, r.gap).expect("string write");
        }
    }
    ctx.write("riemann.csv", riemann.as_bytes())
}

fn cmd_simulate(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut jobs = Vec::new();
    for &n in &ctx.cfg.n {
        let cal = ctx.calibration(n)?;
        let phi_n = ctx.phi_n(n)?;
        for &m in &ctx.cfg.m {
            let samplers = ctx
                .blocks(m)?
                .into_iter()
                .map(|i| BlockSampler::new(n, m, i, &cal, &phi_n, ctx.res.truncation))
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::precondition)?;
            jobs.push((n, m, samplers));
        }
    }
    let all: Vec<BlockSampler> = jobs.iter().flat_map(|j| j.2.iter().cloned()).collect();
    ctx.check_budget(&all, ctx.cfg.replicas)?;
    for (n, m, samplers) in jobs {
        let mut rows = Vec::new();
        for s in &samplers {
            let values = run_replicas(ctx.cfg.replicas, ctx.workers(), |r| s.sample(ctx.cfg.seed, r));
            rows.extend(values.into_iter().enumerate().map(|(r, value)| SampleRow {
                replica: r as u64,
                i: s.i,
                value,
            }));
        }
        let mut buf = Vec::new();
        write_sample_csv(&rows, &mut buf)?;
        ctx.write(&format!("samples_N{n}_M{m}.csv"), &buf)?;
    }
    Ok(())
}

fn cmd_clt_test(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut samplers = Vec::new();
    for &n in &ctx.cfg.n {
        let cal = ctx.calibration(n)?;
        let s = BlockSampler::new(n, 1, 1, &cal, &ctx.phi_n(n)?, ctx.res.truncation)
            .map_err(CliError::precondition)?;
        samplers.push(s);
    }
    ctx.check_budget(&samplers, ctx.cfg.replicas)?;
    for s in &samplers {
        let n = s.n;
        let v = second_moments(ctx, n)?.full();
        let values = run_replicas(ctx.cfg.replicas, ctx.workers(), |r| s.sample(ctx.cfg.seed, r));
        let report = StatsReport::new(&values, v).map_err(CliError::precondition)?;
        println!(
            "N={n} mean={:.4} var={:.4}±{:.4} (exact {v:.4}) skew={:.4} kurt={:.4} ks={:.4}",
            report.mean, report.var, report.var_se, report.skew, report.kurt, report.ks
        );
        let rows: Vec<SampleRow> = values
            .iter()
            .enumerate()
            .map(|(r, &value)| SampleRow {
                replica: r as u64,
                i: 1,
                value,
            })
            .collect();
        let mut buf = Vec::new();
        write_sample_csv(&rows, &mut buf)?;
        ctx.write(&format!("clt_N{n}.csv"), &buf)?;
        ctx.write_json(&format!("clt_N{n}.json"), &report)?;
    }
    Ok(())
}

fn cmd_block_check(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut csv = String::from("N,M,full,block_sum,defect,defect_direct,defect_ratio\n");
    for &n in &ctx.cfg.n {
        let sm = second_moments(ctx, n)?;
        let full = sm.full();
        for &m in &ctx.cfg.m {
            let defect = sm.defect(m).map_err(CliError::precondition)?;
            let direct = sm.defect_direct(m).map_err(CliError::precondition)?;
            writeln!(
                csv,
                "{n},{m},{full:e},{:e},{defect:e},{direct:e},{:e}",
                full - defect,
                defect / full
            )
            .expect("string write");
        }
    }
    ctx.write("block_check.csv", csv.as_bytes())
}

/// δ₀ and the constant 1 on the region reachable in L steps.
fn delta_and_ones(l: usize) -> (Field, Field) {
    let r = l as i64;
    (
        Field::point_mass(LatticePoint::ORIGIN, 1.0),
        Field::constant_on(LatticePoint::new(-r, -r), LatticePoint::new(r, r), 1.0),
    )
}

fn moment_grid(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    let mut grid: Vec<(usize, usize)> = cfg
        .moment_h
        .iter()
        .flat_map(|&h| cfg.moment_l.iter().map(move |&l| (h, l)))
        .collect();
    grid.extend(cfg.moment_extra.iter().map(|&[h, l]| (h, l)));
    grid
}

fn cmd_moment_check(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut csv = String::from("law,beta,h,L,expansion,oracle,rel_err,pass\n");
    let mut failures = 0;
    for model in &ctx.res.moment_laws {
        for &beta in &ctx.cfg.moment_betas {
            for (h, l) in moment_grid(ctx.cfg) {
                let (f, g) = delta_and_ones(l);
                let e = moment_expansion_exact(l, model, beta, &f, &g, h).map_err(CliError::precondition)?;
                let o = path_oracle_moment(l, model, beta, &f, &g, h).map_err(CliError::precondition)?;
                let diff = (e.value - o).abs();
                let rel = diff / o.abs().max(f64::MIN_POSITIVE);
                let pass = diff <= MOMENT_RTOL * o.abs() || diff <= MOMENT_ATOL;
                failures += usize::from(!pass);
                writeln!(csv, "{model},{beta},{h},{l},{:e},{o:e},{rel:e},{pass}", e.value).expect("string write");
            }
        }
    }
    ctx.write("moment_check.csv", csv.as_bytes())?;
    println!("moment-check: {failures} failing rows");
    Ok(())
}

#[derive(Serialize)]
struct FourthMomentRow {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    i: usize,
    xi1: f64,
    xi2_pairs: f64,
    xi2_others: f64,
    tail: f64,
    bound: f64,
    mc_fourth: Option<f64>,
    mc_stderr: Option<f64>,
    /// The components in log10, finite where the values overflow.
    log10_xi1: f64,
    log10_xi2_pairs: f64,
    log10_xi2_others: f64,
    log10_tail: f64,
    log10_bound: f64,
}

fn cmd_bound_check(ctx: &mut Ctx) -> Result<(), CliError> {
    let c = ctx.walk_constant();
    let mut csv = String::from("law,beta,h,L,exact,bound,pass\n");
    for model in &ctx.res.moment_laws {
        for &beta in &ctx.cfg.moment_betas {
            for (h, l) in moment_grid(ctx.cfg) {
                let (f, g) = delta_and_ones(l);
                let exact = moment_expansion_exact(l, model, beta, &f, &g, h)
                    .map_err(CliError::precondition)?
                    .value;
                let t = 1.0 / (l as f64).sqrt();
                let w = WeightSpec::new(c, t, t, 0.0, 2.0, l, h).map_err(CliError::precondition)?;
                let b = boundary_bulk_bounds(l, model, beta, &f, &g, h, &w).map_err(CliError::precondition)?;
                let pass = b.bound >= exact.abs();
                writeln!(csv, "{model},{beta},{h},{l},{exact:e},{:e},{pass}", b.bound).expect("string write");
            }
        }
    }
    ctx.write("dominance.csv", csv.as_bytes())?;

    let mut green = String::from("h,L,points,max_ratio,diagonal_ok,violations\n");
    for h in 1..=2 {
        for l in 1..=4 {
            let r = green_bound_check(l, h, l as i64, c).map_err(CliError::precondition)?;
            writeln!(
                green,
                "{h},{l},{},{:e},{},{}",
                r.points,
                r.max_ratio,
                r.diagonal_ok,
                r.violations.len()
            )
            .expect("string write");
        }
    }
    ctx.write("green.csv", green.as_bytes())?;

    let mode = match ctx.cfg.constants_mode.as_str() {
        "uniform" => ConstantsMode::Uniform,
        _ => ConstantsMode::Exact,
    };
    let mut rows = Vec::new();
    for &n in &ctx.cfg.n {
        let cal = ctx.calibration(n)?;
        let phi_n = ctx.phi_n(n)?;
        for &m in &ctx.cfg.m {
            for i in ctx.blocks(m)? {
                let b = fourth_moment_bound_pipeline(n, m, i, &cal, &phi_n, c, mode)
                    .map_err(CliError::precondition)?;
                let (mc_fourth, mc_stderr) = if ctx.cfg.bound_replicas > 0 {
                    let s = BlockSampler::new(n, m, i, &cal, &phi_n, ctx.res.truncation)
                        .map_err(CliError::precondition)?;
                    ctx.check_budget(std::slice::from_ref(&s), ctx.cfg.bound_replicas)?;
                    let x4: Vec<f64> = run_replicas(ctx.cfg.bound_replicas, ctx.workers(), |r| {
                        s.sample(ctx.cfg.seed, r).powi(4)
                    });
                    let sm = summarize(&x4).map_err(CliError::precondition)?;
                    (Some(sm.mean), Some(sm.mean_se))
                } else {
                    (None, None)
                };
                let p10 = |x: f64| 10f64.powf(x);
                rows.push(FourthMomentRow {
                    n,
                    m,
                    i,
                    xi1: p10(b.log10_xi1),
                    xi2_pairs: p10(b.log10_xi2_pairs),
                    xi2_others: p10(b.log10_xi2_others),
                    tail: p10(b.log10_tail),
                    bound: b.bound(),
                    mc_fourth,
                    mc_stderr,
                    log10_xi1: b.log10_xi1,
                    log10_xi2_pairs: b.log10_xi2_pairs,
                    log10_xi2_others: b.log10_xi2_others,
                    log10_tail: b.log10_tail,
                    log10_bound: b.log10_bound,
                });
            }
        }
    }
    ctx.write_json("fourth_moment.json", &rows)
}

#[derive(Serialize)]
struct RwSummary {
    fitted_c: f64,
    per_check_c: Vec<(String, f64)>,
    subgaussian_c1: bool,
    violations: usize,
    ball_covering_pass: bool,
    maximal_fields: usize,
    maximal_pass: bool,
}

fn cmd_rwbound_check(ctx: &mut Ctx) -> Result<(), CliError> {
    let rep = verify_rw_bounds(ctx.cfg.rw_n_max, &ctx.cfg.rw_t_grid);
    let mut buf = Vec::new();
    write_bound_csv(&rep.rows, &mut buf)?;
    ctx.write("rw_bounds.csv", &buf)?;

    let radii = [0.5, 0.9, 1.0, 2.0, 5.0, 10.0];
    let mut ball = String::from("d,r,count_r,count_3r,ratio,pass\n");
    let mut ball_pass = true;
    for d in 1..=4 {
        for row in ball_covering_check(d, &radii).map_err(CliError::precondition)? {
            ball_pass &= row.pass;
            writeln!(ball, "{},{},{},{},{:e},{}", row.d, row.r, row.count_r, row.count_3r, row.ratio, row.pass)
                .expect("string write");
        }
    }
    ctx.write("ball_covering.csv", ball.as_bytes())?;

    let fields = random_sparse_fields(ctx.cfg.seed, 100);
    let lambdas = [0.05, 0.2, 1.0, 5.0];
    let mut maximal = String::from("field,lambda,level_set_size,bound,pass\n");
    let mut maximal_pass = true;
    for (k, f) in fields.iter().enumerate() {
        for row in maximal_inequality_check(1, f, &lambdas).map_err(CliError::precondition)? {
            maximal_pass &= row.pass;
            writeln!(maximal, "{k},{},{},{:e},{}", row.lambda, row.level_set_size, row.bound, row.pass)
                .expect("string write");
        }
    }
    ctx.write("maximal.csv", maximal.as_bytes())?;

    let llt = llt_table(ctx.cfg.rw_n_max.min(64) as usize)?;
    ctx.write("llt.csv", llt.as_bytes())?;

    let summary = RwSummary {
        fitted_c: rep.fitted_c,
        per_check_c: rep.per_check_c.clone(),
        subgaussian_c1: rep.subgaussian_c1,
        violations: rep.violations.len(),
        ball_covering_pass: ball_pass,
        maximal_fields: fields.len(),
        maximal_pass,
    };
    println!(
        "fitted c = {} ; violations = {} ; ball covering {} ; maximal inequality {}",
        summary.fitted_c, summary.violations, summary.ball_covering_pass, summary.maximal_pass
    );
    ctx.write_json("rw_summary.json", &summary)
}

/// Sparse nonnegative fields on ℤ² with up to 12 points in [−20, 20]².
fn random_sparse_fields(seed: u64, count: usize) -> Vec<Vec<(Vec<i64>, f64)>> {
    let mut state = mix64(seed ^ 0x6d61_7869_6d61_6c00);
    let mut next = move || {
        state = mix64(state.wrapping_add(0x9e37_79b9_7f4a_7c15));
        state
    };
    (0..count)
        .map(|_| {
            let k = 1 + (next() % 12) as usize;
            (0..k)
                .map(|_| {
                    let x1 = (next() % 41) as i64 - 20;
                    let x2 = (next() % 41) as i64 - 20;
                    let v = ((next() >> 11) as f64 + 1.0) / (1u64 << 53) as f64 * 4.0;
                    (vec![x1, x2], v)
                })
                .collect()
        })
        .collect()
}

/// sup_x |(n/4) q_n(x) − g(x/√(n/2))| for n ≤ n_max, read from the kernel
/// table, which is cached under `$QCDP_CACHE_DIR` when that is set.
fn llt_table(n_max: usize) -> Result<String, CliError> {
    let table = match std::env::var_os(CACHE_ENV) {
        Some(dir) => KernelTable::load_or_build(&PathBuf::from(dir), n_max, n_max).map_err(CliError::precondition)?,
        None => KernelTable::build(n_max, n_max),
    };
    let mut csv = String::from("n,llt_deviation\n");
    for n in 1..=n_max {
        let ni = n as i64;
        let scale = (n as f64 / 2.0).sqrt();
        let mut worst = 0.0f64;
        for x1 in -ni..=ni {
            for x2 in -ni..=ni {
                let x = LatticePoint::new(x1, x2);
                if x.parity(n as u64) == 1 {
                    continue;
                }
                let lhs = n as f64 / 4.0 * table.q(n, x);
                worst = worst.max((lhs - gauss2(x1 as f64 / scale, x2 as f64 / scale)).abs());
            }
        }
        writeln!(csv, "{n},{worst:e}").expect("string write");
    }
    Ok(csv)
}
