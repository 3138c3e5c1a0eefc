use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use llband::dstf::{one_d_grid, solve_1dstf, solve_dstf_adaptive, suggested_grid, suggested_m_max, DstfOptions, DstfSolution, Filling};
use llband::grid::{RadialGrid, UniformGrid};
use llband::kernels::{build_kernel_table, cache_key, read_table, write_table, KernelTable};
use llband::spectral::{
    lowest_eigenvalues, negative_spectrum_with, Boundary, Oscillator, Potential, RegularizedCoulomb, SampledPotential,
    SpectralOptions, SquareWell,
};
use llband::stf::{energy_scale, length_scale, solve_stf, support_radius, Occupation, StfOptions};
use llband::trace::{error_scaling_sweep, scaled_error_scaling_sweep, SweepOptions};
use llband::validation::{run_all, ValidationOptions};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{usage, DstfArgs, KernelsArgs, SpectrumArgs, StfArgs, TraceSweepArgs, UsageError, ValidateArgs};
use crate::output::{Cell, Csv, Writer};

/// Result of one subcommand: staged files, the resolved parameters and whether validation passed.
pub struct Outcome {
    pub writer: Writer,
    pub config: Value,
    pub validation_failed: bool,
    /// Kernel table to store at the user-given reuse path.
    pub table: Option<(PathBuf, KernelTable)>,
}

impl Outcome {
    fn new(writer: Writer, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            writer,
            config: serde_json::to_value(config)?,
            validation_failed: false,
            table: None,
        })
    }
}

fn required<T>(name: &str, v: Option<T>) -> Result<T, UsageError> {
    v.ok_or_else(|| usage(format!("missing required parameter {name}")))
}

fn positive(name: &str, v: f64) -> Result<f64, UsageError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(usage(format!("{name} must be positive, got {v}")))
    }
}

fn tolerance(name: &str, v: f64) -> Result<f64, UsageError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(usage(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Table from the cache directory when present, otherwise built (and stored if a cache is set).
fn kernel_table(
    cache: Option<&Path>,
    b: f64,
    m_max: usize,
    grid: &UniformGrid,
    order: usize,
    tol: f64,
    warnings: &mut Vec<String>,
) -> Result<KernelTable> {
    let Some(dir) = cache else {
        return Ok(build_kernel_table(b, m_max, grid, order, tol)?);
    };
    let path = dir.join(format!("{}.lbk", cache_key(b, m_max, grid, order, tol)));
    if path.exists() {
        match read_table(&path) {
            Ok(t) => return Ok(t),
            Err(e) => warnings.push(format!("ignoring unreadable cache entry {}: {e}", path.display())),
        }
    }
    let t = build_kernel_table(b, m_max, grid, order, tol)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating cache directory {}", dir.display()))?;
    write_table(&path, &t)?;
    Ok(t)
}

pub fn kernels(args: KernelsArgs, cache: Option<&Path>) -> Result<Outcome> {
    let b = positive("B", required("B", args.b)?)?;
    let resolved = KernelsArgs {
        b: Some(b),
        m_max: Some(args.m_max.unwrap_or(4)),
        z_max: Some(positive("z_max", args.z_max.unwrap_or(10.0))?),
        points: Some(args.points.unwrap_or(201)),
        quadrature_order: Some(args.quadrature_order.unwrap_or(16)),
        tol: Some(tolerance("tol", args.tol.unwrap_or(1e-10))?),
    };
    let (m_max, z_max, points, order, tol) = (
        resolved.m_max.unwrap(),
        resolved.z_max.unwrap(),
        resolved.points.unwrap(),
        resolved.quadrature_order.unwrap(),
        resolved.tol.unwrap(),
    );
    let grid = UniformGrid::new(z_max, points)?;
    let mut w = Writer::new();
    let table = kernel_table(cache, b, m_max, &grid, order, tol, &mut w.warnings)?;

    let mut csv = Csv::new(&["kind", "m", "n", "z_or_zeta", "value"]);
    let nodes = grid.nodes();
    for m in 0..=m_max {
        for (z, v) in nodes.iter().zip(table.single(m)) {
            csv.row(&[Cell::S("single"), Cell::U(m), Cell::S(""), Cell::F(*z), Cell::F(*v)]);
        }
    }
    for n in 0..=m_max {
        for m in 0..=n {
            for (d, v) in table.pair_half(m, n).iter().enumerate() {
                csv.row(&[Cell::S("pair"), Cell::U(m), Cell::U(n), Cell::F(d as f64 * grid.h()), Cell::F(*v)]);
            }
        }
    }
    w.csv("kernels.csv", csv);
    let info = table.info();
    w.json(
        "kernels.json",
        &json!({
            "B": b,
            "m_max": m_max,
            "grid": { "z_max": z_max, "points": points, "h": grid.h() },
            "quadrature_order": info.quadrature_order,
            "refinement": info.refinement,
            "quadrature_nodes": info.nodes,
            "requested_tol": info.requested_tol,
            "achieved_tol": info.achieved_tol,
            "contact_value_m0": table.single(0)[grid.center()],
            "contact_value_exact_m0": (PI * b / 2.0).sqrt(),
        }),
    )?;
    w.diagnostic("achieved_tol", info.achieved_tol);
    Outcome::new(w, resolved)
}

/// `z, W` pairs; a non-numeric first line is taken as a header, `#` starts a comment.
fn read_potential_csv(path: &Path) -> Result<SampledPotential> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut z, mut w) = (Vec::new(), Vec::new());
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cols.as_slice() {
            [a, b, ..] => a.parse::<f64>().and_then(|a| b.parse::<f64>().map(|b| (a, b))).ok(),
            _ => None,
        };
        match parsed {
            Some((a, b)) => {
                z.push(a);
                w.push(b);
            }
            None if z.is_empty() && k == 0 => continue,
            None => return Err(usage(format!("{}:{}: expected two numeric columns z, W", path.display(), k + 1)).into()),
        }
    }
    Ok(SampledPotential::new(z, w, format!("csv({})", path.display()))?)
}

#[derive(Serialize)]
struct SpectrumReport {
    potential: String,
    boundary: Boundary,
    z_max: f64,
    h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoff: Option<f64>,
    eigenvalues: Vec<f64>,
    count: usize,
    /// `sum (l - cutoff)` over the reported levels, or their plain sum in lowest-`count` mode.
    sum: f64,
    coarse: Vec<f64>,
    fine: Vec<f64>,
    warnings: Vec<String>,
}

pub fn spectrum(args: SpectrumArgs) -> Result<Outcome> {
    let mut r = args.clone();
    let potential: Box<dyn Potential> = match (&args.input, args.potential.as_deref()) {
        (Some(_), Some(_)) => return Err(usage("give either --potential or --input, not both").into()),
        (Some(path), None) => Box::new(read_potential_csv(path)?),
        (None, Some("well")) => {
            r.depth = Some(positive("depth", args.depth.unwrap_or(10.0))?);
            r.half_width = Some(positive("half_width", args.half_width.unwrap_or(1.0))?);
            Box::new(SquareWell {
                depth: r.depth.unwrap(),
                half_width: r.half_width.unwrap(),
            })
        }
        (None, Some("oscillator")) => {
            r.omega = Some(positive("omega", args.omega.unwrap_or(1.0))?);
            if args.cutoff.is_none() {
                r.count = Some(args.count.unwrap_or(5));
            }
            Box::new(Oscillator { omega: r.omega.unwrap() })
        }
        (None, Some("coulomb-regularized")) => {
            r.charge = Some(positive("charge", args.charge.unwrap_or(1.0))?);
            r.a = Some(positive("a", args.a.unwrap_or(1.0))?);
            Box::new(RegularizedCoulomb {
                charge: r.charge.unwrap(),
                a: r.a.unwrap(),
            })
        }
        (None, Some(other)) => {
            return Err(usage(format!("unknown potential '{other}' (expected well, oscillator, coulomb-regularized)")).into())
        }
        (None, None) => return Err(usage("give --potential or --input").into()),
    };
    let boundary = match args.boundary.as_deref().unwrap_or("dirichlet") {
        "dirichlet" => Boundary::Dirichlet,
        "open" => Boundary::Open,
        other => return Err(usage(format!("unknown boundary '{other}' (expected dirichlet or open)")).into()),
    };
    r.boundary = Some(format!("{boundary:?}").to_lowercase());
    r.z_max = Some(positive("z_max", args.z_max.unwrap_or(10.0))?);
    r.h = Some(positive("h", args.h.unwrap_or(0.01))?);
    let grid = UniformGrid::with_spacing(r.z_max.unwrap(), r.h.unwrap())?;
    let opts = SpectralOptions {
        richardson: !args.no_richardson,
        boundary,
        ..SpectralOptions::default()
    };
    let (result, cutoff, sum) = match r.count {
        Some(count) => {
            r.cutoff = None;
            let s = lowest_eigenvalues(potential.as_ref(), &grid, count, &opts)?;
            let sum = s.eigenvalues.iter().sum();
            (s, None, sum)
        }
        None => {
            let cutoff = args.cutoff.unwrap_or(0.0);
            r.cutoff = Some(cutoff);
            let s = negative_spectrum_with(potential.as_ref(), &grid, cutoff, &opts)?;
            let sum = s.sum_below(cutoff);
            (s, Some(cutoff), sum)
        }
    };
    let mut w = Writer::new();
    w.warnings.extend(result.warnings.iter().cloned());
    w.diagnostic("levels", result.eigenvalues.len());
    w.json(
        "spectrum.json",
        &SpectrumReport {
            potential: result.potential_id,
            boundary,
            z_max: grid.z_max(),
            h: grid.h(),
            cutoff,
            count: result.eigenvalues.len(),
            eigenvalues: result.eigenvalues,
            sum,
            coarse: result.coarse,
            fine: result.fine,
            warnings: result.warnings,
        },
    )?;
    Outcome::new(w, r)
}

pub fn stf(args: StfArgs) -> Result<Outcome> {
    let z = positive("Z", required("Z", args.z)?)?;
    let b = positive("B", required("B", args.b)?)?;
    let occupation = match (args.n, args.neutral) {
        (Some(_), true) => return Err(usage("--N and --neutral are mutually exclusive").into()),
        (None, false) => return Err(usage("give --N or --neutral").into()),
        (None, true) => Occupation::Neutral,
        (Some(n), false) if n > 0.0 && n <= z => Occupation::Ionic(n),
        (Some(n), false) => return Err(usage(format!("N must lie in (0, Z] = (0, {z}], got {n}")).into()),
    };
    let defaults = StfOptions::default();
    let opts = StfOptions {
        mixing: args.mixing.unwrap_or(defaults.mixing),
        anderson_depth: args.anderson_depth.unwrap_or(defaults.anderson_depth),
        tol: tolerance("tol", args.tol.unwrap_or(defaults.tol))?,
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
    };
    tolerance("mixing", opts.mixing)?;
    let nodes = args.nodes.unwrap_or(2000);
    let resolved = StfArgs {
        z: Some(z),
        b: Some(b),
        n: args.n,
        neutral: args.neutral,
        nodes: Some(nodes),
        tol: Some(opts.tol),
        mixing: Some(opts.mixing),
        anderson_depth: Some(opts.anderson_depth),
        max_iterations: Some(opts.max_iterations),
    };

    let grid = RadialGrid::for_atom(z, b, nodes)?;
    let sol = solve_stf(z, b, occupation, &grid, &opts)?;
    let rho = &sol.density;
    let screening = rho.screening();
    let mut csv = Csv::new(&["r", "rho", "phi"]);
    for (i, (r, v)) in rho.grid().nodes().iter().zip(rho.values()).enumerate() {
        csv.row(&[Cell::F(*r), Cell::F(*v), Cell::F(z / r - screening.at_node(i))]);
    }
    let mut w = Writer::new();
    let support = match support_radius(rho) {
        Ok(s) => Some(s),
        Err(e) => {
            w.warnings.push(format!("no edge fit: {e}"));
            None
        }
    };
    w.diagnostic("iterations", sol.iterations);
    w.diagnostic("residual", sol.residual);
    w.diagnostic("residual_history", &sol.history);
    w.csv("stf.csv", csv);
    w.json(
        "stf.json",
        &json!({
            "Z": z,
            "B": b,
            "occupation": occupation,
            "energy": sol.energy,
            "energy_over_scale": sol.energy.total / energy_scale(z, b),
            "length_scale": length_scale(z, b),
            "nu": rho.nu(),
            "particle_number": rho.particle_number(),
            "residual": sol.residual,
            "iterations": sol.iterations,
            "support": support,
        }),
    )?;
    Outcome::new(w, resolved)
}

pub fn dstf(args: DstfArgs, cache: Option<&Path>) -> Result<Outcome> {
    let z = positive("Z", required("Z", args.z)?)?;
    let b = positive("B", required("B", args.b)?)?;
    let filling = match (args.n, args.critical) {
        (Some(_), true) => return Err(usage("--N and --critical are mutually exclusive").into()),
        (None, false) => return Err(usage("give --N or --critical").into()),
        (None, true) => Filling::Critical,
        (Some(n), false) => Filling::Particles(positive("N", n)?),
    };
    let defaults = DstfOptions::default();
    let opts = DstfOptions {
        mixing: tolerance("mixing", args.mixing.unwrap_or(defaults.mixing))?,
        anderson_depth: args.anderson_depth.unwrap_or(defaults.anderson_depth),
        tol: tolerance("tol", args.tol.unwrap_or(defaults.tol))?,
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
    };
    let nodes_per_scale = positive("nodes_per_scale", args.nodes_per_scale.unwrap_or(20.0))?;
    let channel_tol = tolerance("channel_tol", args.channel_tol.unwrap_or(1e-6))?;
    let order = args.quadrature_order.unwrap_or(16);
    let kernel_tol = tolerance("kernel_tol", args.kernel_tol.unwrap_or(1e-10))?;
    let m_start = if args.one_d { 0 } else { args.m_max.unwrap_or_else(|| suggested_m_max(z, b)) };
    let resolved = DstfArgs {
        z: Some(z),
        b: Some(b),
        n: args.n,
        critical: args.critical,
        one_d: args.one_d,
        m_max: Some(m_start),
        nodes_per_scale: Some(nodes_per_scale),
        channel_tol: Some(channel_tol),
        tol: Some(opts.tol),
        mixing: Some(opts.mixing),
        anderson_depth: Some(opts.anderson_depth),
        max_iterations: Some(opts.max_iterations),
        quadrature_order: Some(order),
        kernel_tol: Some(kernel_tol),
        table: args.table.clone(),
    };

    let mut w = Writer::new();
    let reuse = match &args.table {
        Some(p) if p.exists() => Some(read_table(p).with_context(|| format!("reading kernel table {}", p.display()))?),
        _ => None,
    };
    let mut tables = |m_max: usize, grid: &UniformGrid| -> llband::error::Result<KernelTable> {
        if let Some(t) = &reuse {
            if t.b() == b && t.grid() == grid && t.m_max() >= m_max {
                return t.truncated(m_max);
            }
        }
        let mut notes = Vec::new();
        let t = kernel_table(cache, b, m_max, grid, order, kernel_tol, &mut notes)
            .map_err(|e| llband::error::Error::Cache(format!("{e:#}")))?;
        w.warnings.extend(notes);
        Ok(t)
    };

    let (sol, table): (DstfSolution, KernelTable) = if args.one_d {
        let mut grid = one_d_grid(z, b, nodes_per_scale)?;
        let mut attempt = 0;
        loop {
            let t = tables(0, &grid)?;
            match solve_1dstf(z, b, filling, &t, &opts) {
                Err(llband::error::Error::GridExtension(_)) if attempt < 6 => {
                    grid = grid.extended(2.0);
                    attempt += 1;
                }
                r => break (r?, t),
            }
        }
    } else {
        let grid = suggested_grid(z, b, nodes_per_scale)?;
        solve_dstf_adaptive(z, b, filling, grid, m_start, channel_tol, &opts, &mut tables)?
    };
    if sol.saturated {
        w.warnings.push(format!("requested N exceeds the critical number; saturated at N = {}", sol.energy.n));
    }
    if sol.box_limited {
        w.warnings.push("density reaches the box edge; the mass is a box-restricted value".into());
    }
    let grid = sol.density.grid();
    let mut csv = Csv::new(&["m", "z", "rho_m"]);
    for (m, row) in sol.density.channels().iter().enumerate() {
        for (zi, v) in grid.nodes().iter().zip(row) {
            csv.row(&[Cell::U(m), Cell::F(*zi), Cell::F(*v)]);
        }
    }
    w.diagnostic("iterations", sol.iterations);
    w.diagnostic("residual", sol.residual);
    w.diagnostic("residual_history", &sol.history);
    w.csv("dstf.csv", csv);
    w.json(
        "dstf.json",
        &json!({
            "Z": z,
            "B": b,
            "mode": if args.one_d { "one-d" } else { "channels" },
            "filling": filling,
            "energy": sol.energy,
            "critical_number": args.critical.then_some(sol.energy.n),
            "saturated": sol.saturated,
            "box_limited": sol.box_limited,
            "residual": sol.residual,
            "iterations": sol.iterations,
            "m_max": sol.density.m_max(),
            "grid": { "z_max": grid.z_max(), "h": grid.h(), "points": grid.len() },
            "channel_masses": sol.channel_masses,
        }),
    )?;
    let mut outcome = Outcome::new(w, resolved)?;
    let stale = reuse.as_ref().map_or(true, |t| t.grid() != table.grid() || t.m_max() < table.m_max());
    outcome.table = args.table.filter(|_| stale).map(|p| (p, table));
    Ok(outcome)
}

pub fn trace_sweep(args: TraceSweepArgs) -> Result<Outcome> {
    let zs = args.z.clone().unwrap_or_else(|| vec![8.0, 16.0, 32.0, 64.0]);
    if zs.len() < 4 {
        return Err(usage(format!("the sweep needs at least 4 charges, got {}", zs.len())).into());
    }
    for z in &zs {
        if !(*z >= 1.0 && z.is_finite()) {
            return Err(usage(format!("sweep charges must be >= 1, got {z}")).into());
        }
    }
    let beta = args.beta.unwrap_or(1.5);
    let defaults = SweepOptions::default();
    let opts = SweepOptions {
        radial_nodes: args.radial_nodes.unwrap_or(defaults.radial_nodes),
        nodes_per_scale: positive("nodes_per_scale", args.nodes_per_scale.unwrap_or(defaults.nodes_per_scale))?,
        box_factor: positive("box_factor", args.box_factor.unwrap_or(defaults.box_factor))?,
        ..defaults
    };
    let resolved = TraceSweepArgs {
        z: Some(zs.clone()),
        beta: Some(beta),
        radial_nodes: Some(opts.radial_nodes),
        nodes_per_scale: Some(opts.nodes_per_scale),
        box_factor: Some(opts.box_factor),
        scaled: args.scaled,
    };
    let report = if args.scaled {
        scaled_error_scaling_sweep(&zs, beta, &opts)?
    } else {
        error_scaling_sweep(&zs, beta, &opts)?
    };
    let mut w = Writer::new();
    let mut csv = Csv::new(&["Z", "B", "quantum", "semiclassical", "difference", "channels_used"]);
    for r in &report.rows {
        csv.row(&[
            Cell::F(r.z),
            Cell::F(r.b),
            Cell::F(r.quantum_trace),
            Cell::F(r.semiclassical_trace),
            Cell::F(r.difference),
            Cell::U(r.channels_used),
        ]);
        w.warnings.extend(r.warnings.iter().map(|s| format!("Z = {}: {s}", r.z)));
    }
    w.csv("trace_sweep.csv", csv);
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| json!({ "Z": r.z, "B": r.b, "nu": r.nu, "lambda_n": r.lambda_n, "channels_used": r.channels_used }))
        .collect();
    w.diagnostic("slope", report.fit.slope);
    w.diagnostic("r_squared", report.fit.r_squared);
    w.json(
        "trace_sweep.json",
        &json!({
            "beta": beta,
            "predicted_slope": report.predicted_slope,
            "fit": report.fit,
            "rows": rows,
        }),
    )?;
    Outcome::new(w, resolved)
}

pub fn validate(args: ValidateArgs) -> Result<Outcome> {
    let opts = ValidationOptions {
        quick: args.quick,
        seed: args.seed.unwrap_or(ValidationOptions::default().seed),
    };
    let reports = run_all(&opts, |r| println!("{}", r.line()));
    let failed = reports.iter().any(|r| !r.passed());
    let mut w = Writer::new();
    let timings: Vec<Value> = reports.iter().map(|r| json!({ "id": r.id, "seconds": r.seconds, "budget_seconds": r.budget_seconds })).collect();
    w.diagnostic("timings", timings);
    // Timings stay in the run record so the report itself is reproducible.
    let rows: Vec<Value> = reports
        .iter()
        .map(|r| json!({ "id": r.id, "title": r.title, "passed": r.passed(), "checks": r.checks, "digest": r.digest }))
        .collect();
    w.json("validate.json", &json!({ "quick": opts.quick, "seed": opts.seed, "passed": !failed, "criteria": rows }))?;
    let mut outcome = Outcome::new(w, ValidateArgs { quick: opts.quick, seed: Some(opts.seed) })?;
    outcome.validation_failed = failed;
    Ok(outcome)
}
