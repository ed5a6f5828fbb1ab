//! Scenario execution and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use hjcell_core::bridge::{
    build_bridge, build_bridge_between, default_c_grid, gap_branches_random, verify_piecewise_supersolution, BranchCurve,
    BridgeDirection, BridgeOptions, BridgeProfile,
};
use hjcell_core::cell::{CellOptions, CellProblem};
use hjcell_core::effective::{build_effective, level_grid, lipschitz_audit, EffectiveOptions};
use hjcell_core::env::{compute_envelopes, symmetric_grid, validate_assumptions};
use hjcell_core::ergodic::{effective_from_random, estimate_theta_random, family_envelopes, ErgodicOptions};
use hjcell_core::export;
use hjcell_core::pde::{estimate_effective_value, GridPolicy};
use hjcell_core::{Environment, OdeOptions};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Medium, ScenarioConfig, Task};

/// Command-line overrides applied on top of a configuration.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Root for run directories; the configuration's `out` or `runs` if unset.
    pub out_root: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Multiplies every tolerance.
    pub tol_scale: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub tolerances: crate::config::Tolerances,
    pub files: Vec<FileEntry>,
    /// Seconds per step.
    pub runtimes: BTreeMap<String, f64>,
    pub summary: BTreeMap<String, Value>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Writer {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Writer {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(name), contents).with_context(|| format!("writing {name}"))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(contents.as_bytes()), bytes: contents.len() });
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, &text)
    }
}

struct Scenario<'a> {
    cfg: &'a ScenarioConfig,
    medium: Medium,
    out: Writer,
    cache_dir: PathBuf,
    runtimes: BTreeMap<String, f64>,
    summary: BTreeMap<String, Value>,
}

impl Scenario<'_> {
    fn timed<T>(&mut self, step: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let r = f(self)?;
        self.runtimes.insert(step.to_string(), t0.elapsed().as_secs_f64());
        Ok(r)
    }

    fn cell_options(&self) -> CellOptions {
        let t = &self.cfg.tolerance;
        let mut o = CellOptions::default();
        o.ode = OdeOptions { rtol: t.ode, atol: t.ode, ..o.ode };
        o.root_tol = t.root;
        o.closure_tol = t.closure;
        o
    }

    fn cell(&self) -> Result<CellProblem> {
        let env = self.medium.periodic().ok_or_else(|| anyhow!("task needs a periodic medium"))?;
        Ok(CellProblem::new(env.clone(), self.cfg.p_max, self.cell_options())?)
    }

    fn levels(&self) -> Result<Vec<f64>> {
        let l = self.cfg.levels.as_ref().ok_or_else(|| anyhow!("missing levels"))?;
        Ok(level_grid(l.lambda_lo, l.lambda_hi, l.n_lambda))
    }
}

/// The configuration with overrides applied.
pub fn effective_config(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<ScenarioConfig> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(s) = opts.tol_scale {
        if !(s > 0.0) {
            bail!("tolerance scale must be positive, got {s}");
        }
        let t = &mut cfg.tolerance;
        t.ode *= s;
        t.root *= s;
        t.joint *= s;
        t.closure *= s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Hash of the configuration as executed.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    sha256_hex(cfg.to_toml().as_bytes())
}

/// Runs a scenario in `<out_root>/run-<hash prefix>` and writes `manifest.json`.
pub fn run_scenario(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<(PathBuf, Manifest)> {
    let cfg = effective_config(cfg, opts)?;
    let hash = config_hash(&cfg);
    let root = opts
        .out_root
        .clone()
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let dir = root.join(format!("run-{}", &hash[..16]));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let cache_dir = root.join("cache");
    fs::create_dir_all(&cache_dir)?;
    let medium = cfg.medium()?;
    let mut ctx = Scenario {
        cfg: &cfg,
        medium,
        out: Writer { dir: dir.clone(), files: Vec::new() },
        cache_dir,
        runtimes: BTreeMap::new(),
        summary: BTreeMap::new(),
    };
    let exec = |ctx: &mut Scenario| -> Result<()> {
        match cfg.task {
            Task::Validate => ctx.timed("validate", validate),
            Task::Envelopes => ctx.timed("envelopes", envelopes),
            Task::Branches => ctx.timed("branches", branches),
            Task::Effective => ctx.timed("effective", effective),
            Task::Bridge => ctx.timed("bridge", bridge),
            Task::PdeConverge => ctx.timed("pde_converge", pde_converge),
            Task::Ergodic => ctx.timed("ergodic", ergodic),
            Task::FullPipeline => {
                ctx.timed("validate", validate)?;
                ctx.timed("envelopes", envelopes)?;
                ctx.timed("branches", branches)?;
                ctx.timed("effective", effective)?;
                ctx.timed("pde_converge", pde_converge)
            }
        }
    };
    match opts.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build()?;
            pool.install(|| exec(&mut ctx))?;
        }
        None => exec(&mut ctx)?,
    }
    ctx.out.write("config.toml", &cfg.to_toml())?;
    let mut files = ctx.out.files;
    files.sort_by(|a, b| a.name.cmp(&b.name));
    let manifest = Manifest {
        task: cfg.task,
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        tolerances: cfg.tolerance,
        files,
        runtimes: ctx.runtimes,
        summary: ctx.summary,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok((dir, manifest))
}

fn validate(ctx: &mut Scenario) -> Result<()> {
    let env = ctx.medium.realization(ctx.cfg.seed);
    let report = validate_assumptions(env.as_ref(), ctx.cfg.p_max, 257)?;
    ctx.summary.insert("violations".into(), json!(report.violations));
    ctx.out.write_json("assumptions.json", &report)
}

fn envelopes(ctx: &mut Scenario) -> Result<()> {
    let env = ctx.medium.realization(ctx.cfg.seed);
    let e = compute_envelopes(env.as_ref(), &symmetric_grid(ctx.cfg.p_max, 400), 257)?;
    ctx.summary.insert("ground".into(), json!(e.ground()));
    ctx.out.write("envelopes.csv", &export::envelopes_csv(&e))
}

fn branches(ctx: &mut Scenario) -> Result<()> {
    let levels = ctx.levels()?;
    let key_src = format!(
        "{}\n{:?}\n{}\n{:?}",
        toml::to_string(&ctx.cfg.environment)?,
        levels,
        ctx.cfg.p_max,
        ctx.cfg.tolerance
    );
    let cache = ctx.cache_dir.join(format!("branches-{}.csv", &sha256_hex(key_src.as_bytes())[..16]));
    let csv = match fs::read_to_string(&cache) {
        Ok(text) => {
            ctx.summary.insert("branch_cache".into(), json!("hit"));
            text
        }
        Err(_) => {
            let cell = ctx.cell()?;
            let ground = cell.envelopes().ground();
            let mut all = Vec::new();
            for &l in levels.iter().filter(|&&l| l >= ground) {
                all.extend(cell.find_periodic_solutions(l)?);
            }
            let text = export::branch_catalog_csv(&all);
            fs::write(&cache, &text)?;
            ctx.summary.insert("branch_cache".into(), json!("miss"));
            text
        }
    };
    ctx.summary.insert("branch_count".into(), json!(csv.lines().count().saturating_sub(1)));
    ctx.out.write("branches.csv", &csv)
}

fn effective(ctx: &mut Scenario) -> Result<()> {
    let cell = ctx.cell()?;
    let l = ctx.cfg.levels.clone().ok_or_else(|| anyhow!("missing levels"))?;
    let eff = build_effective(&cell, l.lambda_lo, l.lambda_hi, l.n_lambda, &EffectiveOptions::default())?;
    let audit = lipschitz_audit(&eff, cell.env(), cell.envelopes())?;
    ctx.summary.insert("gap_count".into(), json!(eff.gaps.len()));
    ctx.summary.insert("lipschitz_audit_holds".into(), json!(audit.iter().all(|r| r.holds())));
    // For an x-independent medium the effective Hamiltonian is H itself.
    let env = cell.env();
    let xs: Vec<f64> = (0..64).map(|k| cell.period() * k as f64 / 64.0).collect();
    let x_independent = cell.envelopes().p_grid.iter().all(|&p| {
        let h0 = env.hamiltonian(p, 0.0);
        xs.iter().all(|&x| env.hamiltonian(p, x) == h0 && env.diffusion(x) == env.diffusion(0.0))
    });
    if x_independent {
        let dev = eff.samples.iter().map(|s| (s.lambda - env.hamiltonian(s.theta, 0.0)).abs()).fold(0.0, f64::max);
        ctx.summary.insert("max_deviation_from_h".into(), json!(dev));
    }
    ctx.out.write("effective.csv", &export::effective_csv(&eff))?;
    ctx.out.write_json("gaps.json", &export::gap_inventory_json(&eff.gaps))?;
    ctx.out.write_json("lipschitz_audit.json", &audit)
}

fn bridge_summary(ctx: &mut Scenario, p: &BridgeProfile, env: &dyn Environment, tag: &str) -> Result<()> {
    let report = verify_piecewise_supersolution(p, env, 400);
    ctx.summary.insert(
        format!("bridge_{tag}"),
        json!({
            "z_start": p.z_start,
            "z_end": p.z_end,
            "joint_mismatch": [p.joint_mismatch.0, p.joint_mismatch.1],
            "worst_violation": report.worst_violation(),
            "holds": report.holds(ctx.cfg.tolerance.joint),
        }),
    );
    ctx.out.write(&format!("bridge_{tag}.csv"), &export::bridge_csv(p))
}

fn bridge_options(ctx: &Scenario) -> BridgeOptions {
    let t = ctx.cfg.tolerance.ode;
    let mut o = BridgeOptions::default();
    o.ode = OdeOptions { rtol: t, atol: t, ..o.ode };
    o
}

fn bridge(ctx: &mut Scenario) -> Result<()> {
    let b = ctx.cfg.bridge.clone().ok_or_else(|| anyhow!("missing bridge"))?;
    let opts = bridge_options(ctx);
    let tag = |dir: BridgeDirection, d: f64| format!("{}_{d}", if dir == BridgeDirection::Up { "up" } else { "down" });
    match ctx.medium.clone() {
        Medium::Periodic(env) => {
            let cell = ctx.cell()?;
            let l = ctx.cfg.levels.clone().ok_or_else(|| anyhow!("missing levels"))?;
            let eff = build_effective(&cell, l.lambda_lo, l.lambda_hi, l.n_lambda, &EffectiveOptions::default())?;
            let grid = default_c_grid(0.0, cell.period(), b.launch_points);
            for &d in &b.deltas {
                for dir in [BridgeDirection::Up, BridgeDirection::Down] {
                    let p = build_bridge(&cell, &eff, b.gap_index, d, dir, Some(&grid), b.x_max, &opts)?;
                    bridge_summary(ctx, &p, &env, &tag(dir, d))?;
                }
            }
        }
        Medium::Random(family) => {
            let e = ctx.cfg.ergodic.clone().ok_or_else(|| anyhow!("missing ergodic"))?;
            let seeds: Vec<u64> = (0..e.seeds as u64).map(|k| ctx.cfg.seed + k).collect();
            let envl = family_envelopes(family.as_ref(), &seeds, &symmetric_grid(ctx.cfg.p_max, 400), 4000)?;
            let levels = ctx.levels()?;
            let eff = effective_from_random(family.as_ref(), &envl, &levels, &seeds, e.window, e.burn_in, &ErgodicOptions::default())?;
            let gap = eff
                .effective
                .gaps
                .get(b.gap_index)
                .ok_or(hjcell_core::Error::NoGap { index: b.gap_index, count: eff.effective.gaps.len() })?
                .clone();
            ctx.out.write_json("gaps.json", &export::gap_inventory_json(&eff.effective.gaps))?;
            let env = family.realize(ctx.cfg.seed);
            let (f1, f2) = gap_branches_random(&env, &envl, &gap, (0.0, e.window), e.burn_in, &ErgodicOptions::default())?;
            let (f1, f2): (Arc<dyn BranchCurve>, Arc<dyn BranchCurve>) = (Arc::new(f1), Arc::new(f2));
            // Launch points over the first half of the window, exits allowed
            // up to its end.
            let n = b.launch_points.max(1);
            let grid: Vec<f64> = (0..n).map(|k| 0.5 * e.window * k as f64 / n as f64).collect();
            let x_max = b.x_max.unwrap_or(e.window);
            for &d in &b.deltas {
                for dir in [BridgeDirection::Up, BridgeDirection::Down] {
                    let p = build_bridge_between(&env, gap.lambda_bar, f1.clone(), f2.clone(), d, dir, &grid, x_max, &opts)?;
                    bridge_summary(ctx, &p, &env, &tag(dir, d))?;
                }
            }
        }
    }
    Ok(())
}

fn pde_converge(ctx: &mut Scenario) -> Result<()> {
    let p = ctx.cfg.pde.clone().ok_or_else(|| anyhow!("missing pde"))?;
    let env = ctx.medium.realization(ctx.cfg.seed);
    let cell = match ctx.medium.periodic() {
        Some(_) => Some(ctx.cell()?),
        None => None,
    };
    let policy = GridPolicy { dx: p.dx, ..GridPolicy::default() };
    let mut table = String::from("theta,epsilon,value,reference,error\n");
    let mut rows = Vec::new();
    for (k, &theta) in p.thetas.iter().enumerate() {
        let reference = match &cell {
            Some(c) => Some(c.lambda_for_theta(theta)?.lambda),
            None => None,
        };
        let est = estimate_effective_value(env.as_ref(), theta, &p.epsilons, &policy)?;
        for s in &est.sequence {
            let (r, e) = match reference {
                Some(r) => (export::num(r), export::num((s.value - r).abs())),
                None => (String::new(), String::new()),
            };
            table.push_str(&format!("{},{},{},{r},{e}\n", export::num(theta), export::num(s.epsilon), export::num(s.value)));
        }
        ctx.out.write(&format!("probe_{k}.csv"), &export::probe_csv(&est.run))?;
        ctx.out.write_json(&format!("pde_run_{k}.json"), &export::pde_manifest_json(&est.run))?;
        rows.push(json!({
            "theta": theta,
            "estimate": est.estimate,
            "reference": reference,
            "monotone": est.run.certificate.monotone,
            "differences_shrink": est.differences_shrink,
        }));
    }
    ctx.summary.insert("pde".into(), Value::Array(rows));
    ctx.out.write("pde_convergence.csv", &table)
}

fn ergodic(ctx: &mut Scenario) -> Result<()> {
    let e = ctx.cfg.ergodic.clone().ok_or_else(|| anyhow!("missing ergodic"))?;
    let family = ctx.medium.family();
    let seeds: Vec<u64> = (0..e.seeds as u64).map(|k| ctx.cfg.seed + k).collect();
    let envl = family_envelopes(family.as_ref(), &seeds, &symmetric_grid(ctx.cfg.p_max, 400), 4000)?;
    let mut rows = Vec::new();
    for &l in &e.lambdas {
        rows.extend(estimate_theta_random(family.as_ref(), &envl, l, &seeds, e.window, e.burn_in, &ErgodicOptions::default())?);
    }
    ctx.summary.insert("regimes".into(), json!(rows.len()));
    ctx.out.write("ergodic.csv", &export::ergodic_csv(&rows))
}
