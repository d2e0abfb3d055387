use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fermidistill::closed_form::{
    four_mode_covariance, four_mode_f, four_mode_g, four_mode_p, f_vs_g_scan, two_mode_correlation,
    two_mode_covariance, two_mode_max_fidelity, write_fg_csv, FourModeParams, TwoModeParams,
};
use fermidistill::fock::verify_all;
use fermidistill::lattice::{
    self, fit_power_law, kernel, lattice_min_length, sweep, top_singular_triplets, write_sweep_csv,
    LanczosOptions, SweepOptions,
};
use fermidistill::protocol::{run_protocol, sample_suboptimal, scan_m};
use fermidistill::quasifree::{read_covariance, validate, write_covariance};
use fermidistill::sampling::{random_maximally_entangled, random_pure_state};
use fermidistill::{BasisProjection, BipartiteSplit, CovarianceMatrix};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{ClosedForm, Command, FitColumn, Lattice, Output, UsageError};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate { file } => validate_file(&file),
        Command::Protocol {
            file,
            m,
            sample_suboptimal,
            seed,
            output,
        } => protocol(&file, m, sample_suboptimal, seed.seed, &output),
        Command::ScanM { file, m_max, output } => {
            let (s, split) = load(&file)?;
            if m_max < 2 {
                return Err(UsageError("--m-max must be at least 2".into()).into());
            }
            emit_json(&output, &scan_m(&s, &split, m_max)?)
        }
        Command::Oracle {
            file,
            target,
            tol,
            seed,
            output,
        } => oracle(&file, target.as_deref(), tol, seed.seed, &output),
        Command::ClosedForm(cf) => closed_form(cf),
        Command::Lattice(l) => lattice_cmd(l),
        Command::Bench {
            l,
            n,
            reps,
            seed,
            output,
        } => bench(l, n, reps, seed.seed, &output),
    }
}

fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json<T: serde::Serialize>(output: &Output, value: &T) -> Result<()> {
    emit(output, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn load(path: &Path) -> Result<(CovarianceMatrix, BipartiteSplit)> {
    let file = read_covariance(path).with_context(|| format!("reading {}", path.display()))?;
    file.to_state().with_context(|| format!("{}", path.display()))
}

fn validate_file(path: &Path) -> Result<()> {
    let file = read_covariance(path).with_context(|| format!("reading {}", path.display()))?;
    let matrix = file.matrix().context("entries")?;
    let report = validate(&matrix);
    println!("{report}");
    if !report.is_valid() {
        bail!("{} violates {} invariant(s)", path.display(), report.violations.len());
    }
    file.split().context("split_a")?;
    Ok(())
}

fn protocol(path: &Path, m: usize, trials: Option<usize>, seed: u64, output: &Output) -> Result<()> {
    let (s, split) = load(path)?;
    let report = run_protocol(&s, &split, m)?;
    let mut value = serde_json::to_value(&report)?;
    if let Some(trials) = trials {
        if trials == 0 {
            return Err(UsageError("--sample-suboptimal must be at least 1".into()).into());
        }
        let sub = sample_suboptimal(&s, &split, m, trials, seed, None)?;
        value["suboptimal"] = json!({
            "trials": trials,
            "seed": seed,
            "best_pf": sub.best_pf,
            "best_trial": sub.best_trial,
            "gap": report.pf - sub.best_pf,
        });
    }
    emit_json(output, &value)
}

/// Maximally entangled across a balanced split, in the file's index order;
/// a random pure state otherwise.
fn default_target(split: &BipartiteSplit, seed: u64) -> Result<BasisProjection> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = split.dim();
    if !split.is_balanced() {
        return Ok(random_pure_state(dim / 2, &mut rng));
    }
    let e = random_maximally_entangled(split.a().len(), &mut rng);
    let ord = split.ordering();
    let g = e.gamma();
    let mut out = DMatrix::<f64>::zeros(dim, dim);
    for (i, &oi) in ord.iter().enumerate() {
        for (j, &oj) in ord.iter().enumerate() {
            out[(oi, oj)] = g[(i, j)];
        }
    }
    Ok(BasisProjection::from_gamma(out)?)
}

fn oracle(path: &Path, target: Option<&Path>, tol: f64, seed: u64, output: &Output) -> Result<()> {
    let (s, split) = load(path)?;
    let e = match target {
        Some(t) => {
            let (e, _) = load(t)?;
            BasisProjection::new(e).with_context(|| format!("target {}", t.display()))?
        }
        None => default_target(&split, seed)?,
    };
    let report = verify_all(&s, &e, &split)?;
    emit_json(output, &report)?;
    if !report.density_ok {
        bail!("dense density operator failed trace/hermiticity/positivity checks");
    }
    if report.max_deviation > tol {
        bail!("max deviation {:e} exceeds {:e}", report.max_deviation, tol);
    }
    Ok(())
}

fn fidelity_value(f: Option<f64>) -> Value {
    f.map_or_else(|| json!("undefined"), |x| json!(x))
}

fn closed_form(cf: ClosedForm) -> Result<()> {
    match cf {
        ClosedForm::TwoMode { a, b, c, d, output } => {
            let params = TwoModeParams::new(a, b, c, d);
            two_mode_covariance(&params).context("two-mode parameters")?;
            let corr = two_mode_correlation(&params);
            let rows: Vec<Vec<f64>> = corr.row_iter().map(|r| r.iter().copied().collect()).collect();
            emit_json(
                &output,
                &json!({
                    "params": params,
                    "constraint": params.satisfies_constraint(),
                    "max_fidelity": two_mode_max_fidelity(&params),
                    "correlation": rows,
                }),
            )
        }
        ClosedForm::FourMode {
            nu,
            sigma,
            emit: emit_path,
            output,
        } => {
            let [n1, n2, n3, n4] = nu[..] else {
                return Err(UsageError(format!("--nu needs 4 values, got {}", nu.len())).into());
            };
            let params = FourModeParams::new(n1, n2, n3, n4, sigma);
            let s = four_mode_covariance(&params).context("four-mode parameters")?;
            let f = four_mode_f(&params).ok();
            let g = four_mode_g(&params).ok();
            if let Some(path) = emit_path {
                let split = BipartiteSplit::leading(8, 4)?;
                write_covariance(&path, &s, &split).with_context(|| format!("writing {}", path.display()))?;
            }
            emit_json(
                &output,
                &json!({
                    "nu": params.nu,
                    "sigma": sigma,
                    "p": four_mode_p(&params),
                    "f": fidelity_value(f),
                    "g": fidelity_value(g),
                    "max_singlet_fraction": fidelity_value(f.zip(g).map(|(f, g)| f.max(g))),
                }),
            )
        }
        ClosedForm::FgScan { x, y, sigma, output } => {
            let points = f_vs_g_scan(&x.0, &y.0, sigma);
            let mut buf = Vec::new();
            write_fg_csv(&points, &mut buf)?;
            emit(&output, &String::from_utf8(buf)?)
        }
    }
}

fn lanczos_options(tol: f64, max_iter: usize, seed: u64) -> Result<LanczosOptions> {
    if !(tol > 0.0) {
        return Err(UsageError("--tol must be positive".into()).into());
    }
    Ok(LanczosOptions { tol, max_iter, seed })
}

fn lattice_cmd(cmd: Lattice) -> Result<()> {
    match cmd {
        Lattice::Sweep {
            l,
            n,
            m,
            jobs,
            tol,
            max_iter,
            no_timing,
            seed,
            output,
        } => {
            let opts = SweepOptions {
                m,
                lanczos: lanczos_options(tol, max_iter, seed.seed)?,
                jobs,
                timing: !no_timing,
            };
            let rows = sweep(&l.0, &n.0, &opts)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, m, &mut buf)?;
            emit(&output, &String::from_utf8(buf)?)
        }
        Lattice::Fit {
            input,
            n,
            l_min,
            column,
            output,
        } => fit(&input, n.map(|g| g.0), l_min, column, &output),
        Lattice::Minlen {
            n,
            x,
            l_lo,
            l_hi,
            m,
            tol,
            max_iter,
            seed,
            output,
        } => {
            let opts = lanczos_options(tol, max_iter, seed.seed)?;
            let mut results = Vec::new();
            let mut pts = Vec::new();
            for &dist in &n.0 {
                let r = lattice_min_length(dist, x, l_lo, l_hi, m, &opts).with_context(|| format!("N = {dist}"))?;
                if dist > 0 {
                    pts.push(((dist as f64).ln(), (r.l as f64).ln()));
                }
                let mut v = serde_json::to_value(&r)?;
                v["N"] = json!(dist);
                results.push(v);
            }
            let slope = (pts.len() >= 2)
                .then(|| {
                    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                    lattice::fit::fit_line(&xs, &ys).ok().map(|(s, _, _)| s)
                })
                .flatten();
            emit_json(
                &output,
                &json!({ "x": x, "results": results, "log_log_slope": slope }),
            )
        }
    }
}

fn fit(input: &Path, only: Option<Vec<usize>>, l_min: f64, column: FitColumn, output: &Output) -> Result<()> {
    let mut rdr = csv::Reader::from_path(input).with_context(|| format!("reading {}", input.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no '{name}' column", input.display()))
    };
    let (il, in_, iv) = (
        col("L")?,
        col("N")?,
        col(match column {
            FitColumn::F => "f",
            FitColumn::P => "p",
        })?,
    );
    let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let l: f64 = parse(il).parse().with_context(|| format!("row {}: bad L", line + 2))?;
        let n: usize = parse(in_).parse().with_context(|| format!("row {}: bad N", line + 2))?;
        // Failed points and undefined fidelities are skipped.
        if let Ok(v) = parse(iv).parse::<f64>() {
            groups.entry(n).or_default().push((l, v));
        }
    }
    let ns: Vec<usize> = only.unwrap_or_else(|| groups.keys().copied().collect());
    let mut fits = Vec::new();
    for n in ns {
        let samples = groups.get(&n).map(Vec::as_slice).unwrap_or(&[]);
        let fit = fit_power_law(samples, l_min).with_context(|| format!("N = {n}"))?;
        for w in &fit.warnings {
            eprintln!("warning: N = {n}: {w}");
        }
        let mut v = serde_json::to_value(&fit)?;
        v["N"] = json!(n);
        fits.push(v);
    }
    emit_json(output, &fits)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        0.5 * (xs[k / 2 - 1] + xs[k / 2])
    }
}

fn bench(l: usize, n: usize, reps: usize, seed: u64, output: &Output) -> Result<()> {
    if l < 2 || reps == 0 {
        return Err(UsageError("need --L >= 2 and --reps >= 1".into()).into());
    }
    let k = kernel(l, (n + l) as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..l).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(k.matvec(&x)?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let med = median(&mut times);
    let t = Instant::now();
    let svd = top_singular_triplets(&k, 3, 1e-10, 300, seed)?;
    let lanczos_ms = t.elapsed().as_secs_f64() * 1e3;
    emit_json(
        output,
        &json!({
            "L": l,
            "N": n,
            "circulant_size": k.circulant_size(),
            "reps": reps,
            "matvec_ms_median": med,
            "matvec_ms_min": min,
            "lanczos_ms": lanczos_ms,
            "lanczos_iterations": svd.iterations,
            "sigma": svd.triplets.iter().map(|t| t.sigma).collect::<Vec<_>>(),
        }),
    )
}
