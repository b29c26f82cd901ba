use crate::csvio;
use crate::CliError;
use freemesh::bench::{
    format_f64, random_grid, run_experiment, sweep as bench_sweep, BoundingBox, ExperimentConfig,
    TestFunction, CSV_HEADER,
};
use freemesh::fmt::{deserialize, mesh_to_tree, serialize};
use freemesh::kernel::{kernel_direct, kernel_factored, kernel_inverse_factored};
use freemesh::multiindex::MomentBasis;
use std::fs;
use std::path::Path;

pub fn fit(
    input: &Path,
    lmax: usize,
    tau: f64,
    output: &Path,
    verbose: u8,
) -> Result<(), CliError> {
    let (points, values) = csvio::read_points_csv(input)?;
    let basis = MomentBasis::new(lmax)?;
    if verbose > 0 {
        eprintln!(
            "fitting {} points at order {lmax} (rank {}), tau {tau:e}",
            points.len(),
            basis.rank()
        );
    }
    let fit = mesh_to_tree(&points, &values, &basis, tau)?;
    csvio::write_file(output, &serialize(&fit.tree))?;
    println!("node_count={}", fit.tree.node_count);
    println!("max_depth={}", fit.tree.max_depth);
    println!("residual_rms={}", format_f64(fit.final_residual_rms));
    Ok(())
}

pub fn eval(tree_path: &Path, query: &Path, output: &Path) -> Result<(), CliError> {
    let bytes = fs::read(tree_path)
        .map_err(|e| CliError::input(format!("{}: {e}", tree_path.display())))?;
    let tree = deserialize(&bytes)?;
    let points = csvio::read_query_csv(query)?;
    let eval = tree.evaluate(&points);
    csvio::write_values_csv(output, &points, &eval.values)?;
    println!("extrapolated={}", eval.extrapolated);
    Ok(())
}

fn parse_function(name: &str) -> Result<TestFunction, CliError> {
    if name.eq_ignore_ascii_case("franke3d") {
        return Ok(TestFunction::Franke3d);
    }
    if let Some(deg) = name.strip_prefix("poly") {
        if let Ok(degree) = deg.parse::<usize>() {
            return Ok(TestFunction::Polynomial { degree });
        }
    }
    Err(CliError::precondition(format!(
        "unknown test function '{name}' (expected franke3d or poly<degree>)"
    )))
}

#[allow(clippy::too_many_arguments)]
pub fn bench(
    function: &str,
    np: usize,
    nq: Option<usize>,
    lmax: usize,
    tau: f64,
    seed_p: u64,
    seed_q: u64,
    csv: Option<&Path>,
    allow_large: bool,
) -> Result<(), CliError> {
    let config = ExperimentConfig {
        n_p: np,
        n_q: nq.unwrap_or(np),
        lmax,
        tau,
        seed_p,
        seed_q,
        function: parse_function(function)?,
        domain: BoundingBox::unit(),
        allow_large,
    };
    let result = run_experiment(&config)?;
    println!("function={}", result.function);
    println!(
        "n_p={} n_q={} lmax={} tau={}",
        result.n_p,
        result.n_q,
        result.lmax,
        format_f64(result.tau)
    );
    println!("node_count={}", result.node_count);
    println!("max_depth={}", result.max_depth);
    println!("e_rms={}", format_f64(result.e_rms));
    println!("e_inf={}", format_f64(result.e_inf));
    println!("fit_seconds={}", format_f64(result.fit_seconds));
    println!("eval_seconds={}", format_f64(result.eval_seconds));
    if let Some(path) = csv {
        let mut text = String::from(CSV_HEADER);
        text.push('\n');
        text.push_str(&result.to_csv_row());
        text.push('\n');
        csvio::write_file(path, text.as_bytes())?;
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(what: &str, list: &str) -> Result<Vec<T>, CliError> {
    list.split(',')
        .map(|s| {
            s.trim().parse::<T>().map_err(|_| {
                CliError::precondition(format!("invalid {what} list entry '{}'", s.trim()))
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn sweep(
    function: &str,
    np: &str,
    lmax: &str,
    tau: &str,
    seed_p: u64,
    seed_q: u64,
    csv: Option<&Path>,
    allow_large: bool,
) -> Result<(), CliError> {
    let n_list: Vec<usize> = parse_list("np", np)?;
    let lmax_list: Vec<usize> = parse_list("lmax", lmax)?;
    let tau_list: Vec<f64> = parse_list("tau", tau)?;
    let base = ExperimentConfig {
        n_p: *n_list.first().unwrap_or(&0),
        n_q: *n_list.first().unwrap_or(&0),
        lmax: *lmax_list.first().unwrap_or(&0),
        tau: *tau_list.first().unwrap_or(&1.0),
        seed_p,
        seed_q,
        function: parse_function(function)?,
        domain: BoundingBox::unit(),
        allow_large,
    };
    let rows = bench_sweep(&base, &lmax_list, &tau_list, &n_list);
    let mut ok = 0usize;
    for row in &rows {
        match &row.outcome {
            Ok(r) => {
                ok += 1;
                println!(
                    "n_p={} lmax={} tau={:e} node_count={} e_rms={:.6e} e_inf={:.6e}",
                    r.n_p, r.lmax, r.tau, r.node_count, r.e_rms, r.e_inf
                );
            }
            Err(e) => {
                println!(
                    "n_p={} lmax={} tau={:e} failed: {e}",
                    row.config.n_p, row.config.lmax, row.config.tau
                );
            }
        }
    }
    println!("rows={} ok={} failed={}", rows.len(), ok, rows.len() - ok);
    if let Some(path) = csv {
        let mut text = String::from(CSV_HEADER);
        text.push('\n');
        for row in &rows {
            text.push_str(&row.to_csv_row());
            text.push('\n');
        }
        csvio::write_file(path, text.as_bytes())?;
    }
    Ok(())
}

pub fn kernel_validate(n: usize, eps: f64, lmax: usize, seed: u64) -> Result<(), CliError> {
    use freemesh::kernel::{KernelFactorization, ShapeParameter};
    use freemesh::linalg::qr_factor;

    if n == 0 {
        return Err(CliError::precondition("n must be at least 1"));
    }
    let shape = ShapeParameter::new(eps)?;
    let basis = MomentBasis::new(lmax)?;
    let rank = basis.rank();
    let mut all_ok = true;

    // 1. factored vs direct Gramian on the user grid in [-0.5, 0.5]^3
    let half_box = BoundingBox::new([-0.5; 3], [0.5; 3]).expect("static box");
    let grid_a = random_grid(n, seed, half_box);
    let direct = kernel_direct(&grid_a, shape);
    let factored = kernel_factored(&grid_a, shape, &basis);
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((factored.get(i, j) - direct.get(i, j)).abs());
        }
    }
    println!("factored_direct_max_dev={}", format_f64(dev));
    // sanity gate: a wrong expansion saturates at O(1); NaN also fails
    if dev.is_nan() || dev > 1.0 {
        all_ok = false;
        println!("factored_direct_check=FAIL");
    } else {
        println!("factored_direct_check=ok");
    }

    // 2. Q' R' = Lambda' consistency on a target-style grid (needs at
    // least rank points), in [-1, 1]^3
    let sym_box = BoundingBox::new([-1.0; 3], [1.0; 3]).expect("static box");
    let n_b = n.max(rank);
    let grid_b = random_grid(n_b, seed.wrapping_add(1), sym_box);
    let lambda_q = basis.vandermonde(&grid_b);
    let f = qr_factor(&lambda_q)?;
    let rec = f.q.matmul(&f.r)?;
    let mut qr_dev = 0.0f64;
    for i in 0..n_b {
        for j in 0..rank {
            qr_dev = qr_dev.max((rec.get(i, j) - lambda_q.get(i, j)).abs());
        }
    }
    println!("lambda_qr_max_dev={}", format_f64(qr_dev));
    let qr_tol = 1e-12 * lambda_q.max_abs().max(1.0);
    if qr_dev <= qr_tol {
        println!("lambda_qr_check=ok");
    } else {
        all_ok = false;
        println!("lambda_qr_check=FAIL");
    }

    // 3. generalized inverse on a unisolvent grid of exactly rank points;
    // redraw deterministically if a draw is rank-deficient
    let mut fact = None;
    for attempt in 0..64u64 {
        let grid = random_grid(rank, seed.wrapping_add(2).wrapping_add(attempt), sym_box);
        let candidate = KernelFactorization::new(&grid, shape, &basis)?;
        if candidate.qr.effective_rank == rank {
            fact = Some(candidate);
            break;
        }
    }
    let fact = fact.ok_or_else(|| {
        CliError::precondition("could not draw a unisolvent grid after 64 attempts")
    })?;
    match kernel_inverse_factored(&fact) {
        Ok(g) => {
            let phi = fact.kernel();
            let phig = phi.matmul(&g)?;
            let phigphi = phig.matmul(&phi)?;
            let mut inv_dev = 0.0f64;
            for i in 0..rank {
                for j in 0..rank {
                    inv_dev = inv_dev.max((phigphi.get(i, j) - phi.get(i, j)).abs());
                }
            }
            let rel = inv_dev / phi.max_abs();
            println!("inverse_residual_rel={}", format_f64(rel));
            // the 1e-8 gate applies in the regime it was calibrated for
            // (moderate shape, low order); the factorization conditioning
            // grows steeply with rank, so flatter or higher-order runs
            // report the residual for information only
            if (0.3..=1.0).contains(&eps) && lmax <= 3 {
                if rel <= 1e-8 {
                    println!("inverse_check=ok");
                } else {
                    all_ok = false;
                    println!("inverse_check=FAIL");
                }
            } else {
                println!("inverse_check=informational (gated for eps in [0.3,1] and lmax <= 3)");
            }
        }
        Err(e @ freemesh::Error::IllConditioned { .. }) => {
            println!("inverse_check=underflow");
            return Err(CliError::conditioning(format!(
                "flat-limit breakdown in the factored inverse: {e}"
            )));
        }
        Err(e) => return Err(e.into()),
    }

    if all_ok {
        Ok(())
    } else {
        Err(CliError::precondition(
            "one or more validation checks failed tolerance",
        ))
    }
}
