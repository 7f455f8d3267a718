//! Subcommand implementations. `run-all` produces the full experiment
//! report; the other commands expose the individual stages.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use pekar_core::coulomb::{
    best_shift, hamiltonian, lambda_at, splitting_check, EvalGrid, OccupationMeasure,
};
use pekar_core::grid::RadialGrid;
use pekar_core::path::{
    bridge_log_density, occupation_with_eta, propose_bridge, sample_wiener, wiener_log_density,
    DiscretePath,
};
use pekar_core::report::{
    psi2_marginal_cdf, sample_shift_reference, verify_endpoint_law, verify_free_energy,
    verify_shift_law, verify_tube, SolverSummary,
};
use pekar_core::stats::reference_bin_probabilities as ref_bins;
use pekar_core::sampler::{
    run_chain, run_ladder, ti_from_ladder, ChainOutput, LadderOutput, TiResult,
};
use pekar_core::sde::{em_step, girsanov_weight, pathwise_el_check, simulate, DriftField, SdeConfig};
use pekar_core::solver::{scf_iterate, PekarSolution};
use pekar_core::stats::{
    derive_seed, l1_distance, mean_se, uniform_direction, variance, w1_marginal,
};

use crate::config::MasterConfig;
use crate::experiment::{
    CriterionOutcome, ExperimentReport, FreeEnergyReport, LadderReport, MarginalW1Report,
    RunMeta, SdeReport, REPORT_SCHEMA_VERSION,
};
use crate::io;

pub fn cmd_solve(
    r_max: f64,
    n: usize,
    tol: f64,
    mixing: f64,
    max_iter: usize,
    out: &Path,
) -> Result<()> {
    let cfg = pekar_core::ScfConfig { r_max, n, tol, mixing, max_iter };
    let sol = scf_iterate(&cfg, None).map_err(|e| anyhow::anyhow!("{e}"))?;
    let (json, csv) = io::write_solution(out, &sol)?;
    io::write_radial_csv(&out.join("psi0.csv"), &sol.psi0, "psi0")?;
    println!(
        "lambda = {:.8}  rho = {:.8}  H = {:.8}  I = {:.8}  residual = {:.3e}",
        sol.lambda, sol.rho, sol.coulomb_energy, sol.dirichlet, sol.residual
    );
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}

fn parse_eval_grid(spec: &str) -> Result<EvalGrid> {
    // "cx,cy,cz:half:spacing"
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("--eval-grid expects cx,cy,cz:half:spacing, got {spec}");
    }
    let c: Vec<f64> = parts[0]
        .split(',')
        .map(|s| s.parse::<f64>().context("grid center"))
        .collect::<Result<_>>()?;
    if c.len() != 3 {
        bail!("grid center needs three components");
    }
    let half: f64 = parts[1].parse().context("grid half extent")?;
    let spacing: f64 = parts[2].parse().context("grid spacing")?;
    EvalGrid::new([c[0], c[1], c[2]], [half; 3], spacing).map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn cmd_coulomb(
    measure: &Path,
    eval_grid: &str,
    solution: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let mu = io::read_measure(measure)?;
    let grid = parse_eval_grid(eval_grid)?;
    let h = hamiltonian(&mu).map_err(|e| anyhow::anyhow!("{e}"))?;
    let pts = grid.points();
    let mut sup = 0.0f64;
    let mut lam_rows = String::from("x,y,z,lambda\n");
    for x in &pts {
        let v = lambda_at(&mu, *x);
        sup = sup.max(v);
        lam_rows.push_str(&format!("{},{},{},{}\n", x[0], x[1], x[2], v));
    }
    println!(
        "n = {}, eta = {}, H(mu) = {h:.6}, sup Lambda over {} lattice points = {sup:.6}",
        mu.len(),
        mu.softening(),
        pts.len()
    );
    let mut summary = serde_json::json!({
        "n": mu.len(),
        "softening": mu.softening(),
        "hamiltonian": h,
        "sup_lambda": sup,
        "lattice_points": pts.len(),
    });
    if let Some(sol_dir) = solution {
        let sol = io::read_solution(sol_dir)?;
        let (dist, w) = best_shift(&mu, &sol).map_err(|e| anyhow::anyhow!("{e}"))?;
        // Wasserstein-1 sanity on the axis marginals of the recentred cloud
        let cdf = psi2_marginal_cdf(&sol);
        let (lo, hi) = cdf.support();
        let mut w1 = [0.0f64; 3];
        for axis in 0..3 {
            let samples: Vec<(f64, f64)> = mu
                .points()
                .iter()
                .zip(mu.weights())
                .map(|(p, &wt)| (p[axis] - w[axis], wt))
                .collect();
            w1[axis] = w1_marginal(&samples, |x| cdf.eval(x), lo, hi, 800);
        }
        println!(
            "best shift = ({:.4}, {:.4}, {:.4}), orbit sup distance = {dist:.6}, \
             marginal W1 = ({:.4}, {:.4}, {:.4})",
            w[0], w[1], w[2], w1[0], w1[1], w1[2]
        );
        summary["best_shift"] = serde_json::json!(w);
        summary["orbit_sup_distance"] = serde_json::json!(dist);
        summary["marginal_w1"] = serde_json::json!(w1);
    }
    if let Some(dir) = out {
        io::ensure_dir(dir)?;
        io::write_text(&dir.join("lambda_grid.csv"), &lam_rows)?;
        io::write_json(&dir.join("coulomb.json"), &summary)?;
        println!("wrote {}", dir.join("coulomb.json").display());
    }
    Ok(())
}

pub fn cmd_sample(
    config: &Path,
    t: f64,
    beta: f64,
    ladder: bool,
    solution: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let cfg = MasterConfig::load(config)?;
    io::ensure_dir(out)?;
    let sol = solution.map(io::read_solution).transpose()?;
    if ladder {
        let lcfg = cfg.sampler.ladder_config(t, sol.is_some());
        let output = run_ladder(&lcfg, sol.as_ref(), seed).map_err(|e| anyhow::anyhow!("{e}"))?;
        for (k, chain) in output.outputs.iter().enumerate() {
            let stem = format!("samples_beta{:.3}", output.betas[k]);
            io::write_samples_csv(&out.join(format!("{stem}.csv")), chain)?;
        }
        io::write_json(&out.join("ladder.json"), &output)?;
        println!("swap rates: {:?}", output.swap_rates());
        println!("wrote {}", out.join("ladder.json").display());
    } else {
        let ccfg = cfg.sampler.chain_config(t, beta, sol.is_some());
        let output = run_chain(&ccfg, sol.as_ref(), seed).map_err(|e| anyhow::anyhow!("{e}"))?;
        io::write_samples_csv(&out.join("samples.csv"), &output)?;
        io::write_json(&out.join("chain.json"), &output)?;
        let (m, se) = mean_se(&output.h_values());
        println!(
            "t = {t}, beta = {beta}: mean H = {m:.5} +- {se:.5}, acceptance interior {:.2}",
            output.interior.rate()
        );
        println!("wrote {}", out.join("chain.json").display());
    }
    Ok(())
}

/// Pekar SDE occupation run plus the Ornstein-Uhlenbeck control.
pub fn cmd_sde(config: &Path, solution: &Path, seed: u64, out: &Path) -> Result<SdeReport> {
    let cfg = MasterConfig::load(config)?;
    let sol = io::read_solution(solution)?;
    io::ensure_dir(out)?;
    run_sde_block(&cfg, &sol, seed, out)
}

fn run_sde_block(
    cfg: &MasterConfig,
    sol: &PekarSolution,
    seed: u64,
    out: &Path,
) -> Result<SdeReport> {
    let sde_cfg = SdeConfig {
        horizon: cfg.sde.horizon,
        step: cfg.sde.step,
        x0: [0.0; 3],
        record_stride: cfg.sde.record_stride,
        bins: cfg.sde.bins,
        hist_r_max: cfg.sde.hist_r_max,
        seed: derive_seed(seed, 0x5de),
    };
    let traj = simulate(&sde_cfg, sol).map_err(|e| anyhow::anyhow!("{e}"))?;
    let psi = sol.psi_interp();
    let reference = ref_bins(
        move |r| {
            let p = psi.eval_clamped(r);
            r * r * p * p
        },
        sde_cfg.hist_r_max,
        sde_cfg.bins,
        sol.psi0.grid().r_max(),
    );
    let l1 = l1_distance(&traj.histogram.probabilities(), &reference);
    let hist_csv = out.join("sde_histogram.csv");
    io::write_histogram_csv(&hist_csv, &traj.histogram, &reference[..sde_cfg.bins])?;

    // control: drift b(r) = -r, stationary radial law r^2 exp(-r^2)
    let grid = RadialGrid::new(20.0, 2000).map_err(|e| anyhow::anyhow!("{e}"))?;
    let ou = PekarSolution::gaussian_test_bundle(grid, (0.5f64).sqrt());
    let ou_cfg = SdeConfig {
        hist_r_max: 3.0,
        x0: [0.3, 0.0, 0.0],
        seed: derive_seed(seed, 0x5de ^ 0xabc),
        ..sde_cfg.clone()
    };
    let ou_traj = simulate(&ou_cfg, &ou).map_err(|e| anyhow::anyhow!("{e}"))?;
    let ou_ref = ref_bins(|r| r * r * (-r * r).exp(), ou_cfg.hist_r_max, ou_cfg.bins, 8.0);
    let ou_l1 = l1_distance(&ou_traj.histogram.probabilities(), &ou_ref);
    let ou_csv = out.join("sde_ou_histogram.csv");
    io::write_histogram_csv(&ou_csv, &ou_traj.histogram, &ou_ref[..ou_cfg.bins])?;

    let report = SdeReport {
        l1_pekar: l1,
        l1_ou_control: ou_l1,
        lambda: sol.lambda,
        far_field_hits: traj.far_field_hits,
        recorded_samples: traj.histogram.total(),
        seed,
        histogram_csv: hist_csv.file_name().unwrap().to_string_lossy().into_owned(),
        ou_histogram_csv: ou_csv.file_name().unwrap().to_string_lossy().into_owned(),
    };
    io::write_json(&out.join("sde_summary.json"), &report)?;
    println!("SDE: L1(pekar) = {l1:.4}, L1(OU control) = {ou_l1:.4}");
    Ok(report)
}

pub fn cmd_free_energy(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg = MasterConfig::load(config)?;
    io::ensure_dir(out)?;
    for (k, &t) in cfg.free_energy.t_values.iter().enumerate() {
        let lcfg = cfg.sampler.ladder_config(t, false);
        let ladder =
            run_ladder(&lcfg, None, derive_seed(seed, 0xf0 + k as u64)).map_err(|e| anyhow::anyhow!("{e}"))?;
        let ti = ti_from_ladder(&ladder, t).map_err(|e| anyhow::anyhow!("{e}"))?;
        write_ti(out, t, &ti)?;
        println!(
            "t = {t}: (1/t) log Z_t = {:.5} +- {:.5} (min overlap {:.3})",
            ti.estimate,
            ti.std_err,
            ti.overlap.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }
    Ok(())
}

fn write_ti(out: &Path, t: f64, ti: &TiResult) -> Result<(String, String)> {
    let json_name = format!("ti_t{t}.json");
    let csv_name = format!("ti_integrand_t{t}.csv");
    io::write_json(&out.join(&json_name), ti)?;
    let mut text = String::from("beta,mean_H,std_err\n");
    for k in 0..ti.betas.len() {
        text.push_str(&format!(
            "{},{},{}\n",
            ti.betas[k], ti.integrand_mean[k], ti.integrand_se[k]
        ));
    }
    io::write_text(&out.join(&csv_name), &text)?;
    Ok((json_name, csv_name))
}

struct LadderArtifacts {
    t: f64,
    ladder: LadderOutput,
    report: LadderReport,
}

fn run_ladders(
    cfg: &MasterConfig,
    sol: &PekarSolution,
    seed_root: u64,
    out: &Path,
) -> Result<Vec<LadderArtifacts>> {
    let mut artifacts = Vec::new();
    for (k, &t) in cfg.sampler.t_grid.iter().enumerate() {
        let lcfg = cfg.sampler.ladder_config(t, true);
        let ladder = run_ladder(&lcfg, Some(sol), derive_seed(seed_root, 0x1ad0 + k as u64))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let beta0_csv = format!("samples_t{t}_beta0.csv");
        let beta1_csv = format!("samples_t{t}_beta1.csv");
        let b0 = ladder.output_at_beta(0.0).expect("beta 0 slot");
        let b1 = ladder.output_at_beta(1.0).expect("beta 1 slot");
        io::write_samples_csv(&out.join(&beta0_csv), b0)?;
        io::write_samples_csv(&out.join(&beta1_csv), b1)?;
        let mut mean_h = Vec::new();
        let mut se_h = Vec::new();
        let mut max_gap = 0.0f64;
        for o in &ladder.outputs {
            let (m, se) = mean_se(&o.h_values());
            mean_h.push(m);
            se_h.push(se);
            max_gap = max_gap.max(o.max_cache_gap);
        }
        let report = LadderReport {
            t,
            betas: ladder.betas.clone(),
            swap_rates: ladder.swap_rates(),
            mean_h_per_beta: mean_h,
            se_h_per_beta: se_h,
            acceptance_interior_beta1: b1.interior.rate(),
            acceptance_endpoint_beta1: b1.endpoint_block.rate(),
            max_cache_gap: max_gap,
            samples_csv_beta0: beta0_csv,
            samples_csv_beta1: beta1_csv,
        };
        println!(
            "ladder t = {t}: mean H(beta=1) = {:.4}, swap rate min = {:.2}",
            report.mean_h_per_beta.last().unwrap(),
            report.swap_rates.iter().cloned().fold(f64::INFINITY, f64::min)
        );
        artifacts.push(LadderArtifacts { t, ladder, report });
    }
    Ok(artifacts)
}

fn shifts_of(out: &ChainOutput) -> Vec<[f64; 3]> {
    out.samples.iter().filter_map(|s| s.shift).collect()
}

fn endpoints_of(out: &ChainOutput) -> Vec<[f64; 3]> {
    out.samples.iter().map(|s| s.endpoint).collect()
}

fn orbit_distances_of(out: &ChainOutput) -> Vec<f64> {
    out.samples.iter().filter_map(|s| s.orbit_distance).collect()
}

pub fn cmd_run_all(config: &Path, seed_root: u64, out: &Path, threads: usize) -> Result<i32> {
    let wall = Instant::now();
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("setting thread pool")?;
    }
    let cfg = MasterConfig::load(config)?;
    io::ensure_dir(out)?;
    io::write_json(&out.join("config_echo.json"), &cfg)?;

    // 1. solver (plus a refined solve for the grid-drift criterion)
    let sol = scf_iterate(&cfg.solver.to_scf(), None).map_err(|e| anyhow::anyhow!("{e}"))?;
    let refined = scf_iterate(
        &pekar_core::ScfConfig { n: cfg.solver.n * 2, ..cfg.solver.to_scf() },
        None,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let sol_dir = out.join("solution");
    io::write_solution(&sol_dir, &sol)?;
    println!("solver: rho = {:.6}, lambda = {:.6}", sol.rho, sol.lambda);

    // 2. tempering ladders over the t grid
    let ladders = run_ladders(&cfg, &sol, seed_root, out)?;

    // 3. SDE stationarity block
    let sde_report = run_sde_block(&cfg, &sol, derive_seed(seed_root, 0x5d), out)?;

    // 4. thermodynamic integration at the configured horizons
    let mut ti_rows = Vec::new();
    let mut ti_artifacts = Vec::new();
    for &t in &cfg.free_energy.t_values {
        let art = ladders
            .iter()
            .find(|a| (a.t - t).abs() < 1e-12)
            .expect("validated: t_values is a subset of t_grid");
        let ti = ti_from_ladder(&art.ladder, t).map_err(|e| anyhow::anyhow!("{e}"))?;
        let (j, c) = write_ti(out, t, &ti)?;
        ti_artifacts.push(j);
        ti_artifacts.push(c);
        ti_rows.push((t, ti));
    }

    // 5. verification sections
    let largest = ladders.last().expect("nonempty t grid");
    let per_t_shift: Vec<(f64, Vec<[f64; 3]>)> = ladders
        .iter()
        .map(|a| (a.t, shifts_of(a.ladder.output_at_beta(1.0).unwrap())))
        .collect();
    let control_shift = shifts_of(largest.ladder.output_at_beta(0.0).unwrap());
    let shift_law = verify_shift_law(
        &per_t_shift,
        Some(&control_shift),
        &sol,
        derive_seed(seed_root, 0x7e1),
    );

    let per_t_end: Vec<(f64, Vec<[f64; 3]>)> = ladders
        .iter()
        .map(|a| (a.t, endpoints_of(a.ladder.output_at_beta(1.0).unwrap())))
        .collect();
    let control_end = endpoints_of(largest.ladder.output_at_beta(0.0).unwrap());
    let endpoint_law = verify_endpoint_law(
        &per_t_end,
        Some(&control_end),
        &sol,
        derive_seed(seed_root, 0x7e2),
    );

    let mut tube_rows = Vec::new();
    for a in &ladders {
        for beta in [1.0, 0.0] {
            let o = a.ladder.output_at_beta(beta).unwrap();
            tube_rows.push((a.t, beta, orbit_distances_of(o)));
        }
    }
    let lambda0 = sol.potential.extrapolate_origin();
    let tube = verify_tube(
        &tube_rows,
        cfg.verify.tube_epsilon_factor * lambda0,
        0.1 * lambda0,
    );

    let fe_section = verify_free_energy(&ti_rows, sol.rho);

    // Wasserstein-1 calibration of the sup-metric shift surrogate on an
    // exact psi0^2 sample
    let marginal_w1 = {
        let pts = sample_shift_reference(&sol, 10_000, derive_seed(seed_root, 0x31))
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        // sample_shift_reference draws |x| from r^2 psi0; for the marginal
        // calibration draw from psi0^2 instead
        let _ = pts;
        let psi = sol.psi_interp();
        let sampler = pekar_core::stats::RadialCdfSampler::from_weight(
            move |r| {
                let p = psi.eval_clamped(r);
                r * r * p * p
            },
            15.0,
            8192,
        );
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed_root, 0x32));
        let cloud: Vec<[f64; 3]> = (0..10_000).map(|_| sampler.sample_point(&mut rng)).collect();
        let mu = OccupationMeasure::uniform(cloud, 0.0).map_err(|e| anyhow::anyhow!("{e}"))?;
        io::write_measure(&out.join("measure_psi2_sample.csv"), &mu)?;
        let (dist, w) = best_shift(&mu, &sol).map_err(|e| anyhow::anyhow!("{e}"))?;
        let cdf = psi2_marginal_cdf(&sol);
        let (lo, hi) = cdf.support();
        let mut per_axis = [0.0f64; 3];
        for axis in 0..3 {
            let samples: Vec<(f64, f64)> = mu
                .points()
                .iter()
                .zip(mu.weights())
                .map(|(p, &wt)| (p[axis] - w[axis], wt))
                .collect();
            per_axis[axis] = w1_marginal(&samples, |x| cdf.eval(x), lo, hi, 800);
        }
        MarginalW1Report { n_points: 10_000, per_axis, best_shift: w, orbit_distance: dist }
    };

    // 6. criteria
    let h_star = sol.coulomb_energy;
    let mut criteria = Vec::new();

    let mut c1 = CriterionOutcome::new(1, "solver correctness");
    let bound = 1.0 / (3.0 * std::f64::consts::PI);
    c1.clause("rho >= 1/(3pi)", sol.rho >= bound, format!("{:.6} vs {:.6}", sol.rho, bound));
    let virial = (sol.coulomb_energy - 2.0 * sol.dirichlet).abs();
    c1.clause("virial |H-2I| <= 1e-3 rho", virial <= 1e-3 * sol.rho, format!("{virial:.2e}"));
    let lam_gap = (sol.lambda - (4.0 * sol.coulomb_energy - 2.0 * sol.dirichlet)).abs();
    c1.clause("lambda identity <= 1e-8", lam_gap <= 1e-8, format!("{lam_gap:.2e}"));
    c1.clause("lambda >= 2 rho", sol.lambda >= 2.0 * sol.rho, String::new());
    c1.clause(
        "EL residual <= 1e-3 lambda",
        sol.residual <= 1e-3 * sol.lambda,
        format!("{:.2e}", sol.residual),
    );
    let drift = (sol.rho - refined.rho).abs() / refined.rho;
    c1.clause("grid drift <= 1e-4", drift <= 1e-4, format!("{drift:.2e}"));
    criteria.push(c1);

    criteria.push(criterion_2_inline(seed_root));
    criteria.push(criterion_3_inline(&cfg, &ladders, seed_root));

    let mut c4 = CriterionOutcome::new(4, "Hamiltonian concentration trend");
    let tilted: Vec<f64> =
        ladders.iter().map(|a| {
            mean_se(&a.ladder.output_at_beta(1.0).unwrap().h_values()).0
        }).collect();
    let controls: Vec<f64> =
        ladders.iter().map(|a| {
            mean_se(&a.ladder.output_at_beta(0.0).unwrap().h_values()).0
        }).collect();
    c4.clause(
        "mean H monotone toward H(psi0^2)",
        tilted.windows(2).all(|w| w[1] < w[0]) && tilted.iter().all(|&m| m > h_star),
        format!("{tilted:?} vs {h_star:.4}"),
    );
    let final_gap = (tilted.last().unwrap() - h_star).abs() / h_star;
    c4.clause("within 15% at largest t", final_gap <= 0.15, format!("gap {final_gap:.3}"));
    c4.clause(
        "beta=0 control > 30% away",
        controls.iter().all(|&m| (m - h_star).abs() / h_star > 0.30),
        format!("{controls:?}"),
    );
    criteria.push(c4);

    let mut c5 = CriterionOutcome::new(5, "shift law trend");
    c5.clause(
        "|Y| histogram L1 nonincreasing in t",
        shift_law.nonincreasing,
        format!("{:?}", shift_law.rows.iter().map(|r| r.comparison.l1).collect::<Vec<_>>()),
    );
    c5.clause(
        "self test L1 <= 0.05",
        shift_law.selftest_pass,
        format!("{:.4}", shift_law.selftest_l1),
    );
    c5.clause(
        "beta=0 control fails the match",
        shift_law.negative_control_fails_match == Some(true),
        format!("{:?}", shift_law.negative_control_l1),
    );
    c5.clause(
        "all rows conclusive (ESS >= 500)",
        shift_law.all_conclusive,
        format!(
            "{:?}",
            shift_law.rows.iter().map(|r| r.comparison.effective_samples).collect::<Vec<_>>()
        ),
    );
    criteria.push(c5);

    let mut c6 = CriterionOutcome::new(6, "Pekar process stationarity");
    c6.clause(
        "radial occupation L1 <= 0.05",
        sde_report.l1_pekar <= 0.05,
        format!("{:.4}", sde_report.l1_pekar),
    );
    c6.clause(
        "OU control L1 <= 0.03",
        sde_report.l1_ou_control <= 0.03,
        format!("{:.4}", sde_report.l1_ou_control),
    );
    criteria.push(c6);

    criteria.push(criterion_7_inline(&sol, seed_root));

    let mut c8 = CriterionOutcome::new(8, "free energy");
    c8.clause("estimates positive", fe_section.all_positive, String::new());
    c8.clause(
        "below rho * 1.05",
        fe_section.below_cap,
        format!("{:?}", fe_section.rows.iter().map(|r| r.estimate).collect::<Vec<_>>()),
    );
    c8.clause("above 0.5 rho", fe_section.above_half_rho, String::new());
    c8.clause(
        "gap to rho shrinking in t",
        fe_section.gap_shrinking,
        format!("{:?}", fe_section.rows.iter().map(|r| r.gap_to_rho).collect::<Vec<_>>()),
    );
    c8.clause("error bars conclusive", fe_section.conclusive, String::new());
    criteria.push(c8);

    let all_criteria_passed = criteria.iter().all(|c| c.passed);

    let report = ExperimentReport {
        report_schema_version: REPORT_SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed_root,
        config: cfg,
        solver: SolverSummary::from_solution(&sol),
        solver_artifacts: vec!["solution/solution.json".into(), "solution/solution.csv".into()],
        ladders: ladders.iter().map(|a| a.report.clone()).collect(),
        shift_law,
        endpoint_law,
        tube,
        free_energy: FreeEnergyReport {
            section: fe_section,
            ti: ti_rows.into_iter().map(|(_, ti)| ti).collect(),
            integrand_csv: ti_artifacts,
        },
        sde: sde_report,
        marginal_w1,
        criteria,
        all_criteria_passed,
    };
    io::write_json(&out.join("report.json"), &report)?;

    let wall_seconds = wall.elapsed().as_secs_f64();
    let budget_warning = if wall_seconds > 2.0 * 3600.0 {
        Some(format!("run took {wall_seconds:.0} s, above the two-hour desk-scale budget"))
    } else {
        None
    };
    if let Some(w) = &budget_warning {
        eprintln!("warning: {w}");
    }
    io::write_json(
        &out.join("run_meta.json"),
        &RunMeta {
            wall_seconds,
            budget_warning,
            threads: rayon::current_num_threads(),
        },
    )?;

    for c in &report.criteria {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {}", c.id, c.name);
        for clause in &c.clauses {
            let t = if clause.passed { "pass" } else { "FAIL" };
            println!("  [{t}] {} {}", clause.label, clause.detail);
        }
    }
    println!("report: {}", out.join("report.json").display());
    Ok(if report.all_criteria_passed { 0 } else { 1 })
}

fn criterion_2_inline(seed_root: u64) -> CriterionOutcome {
    let mut c = CriterionOutcome::new(2, "Coulomb engine");
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed_root, 0xc2));
    let radius = 2.0;
    let pts: Vec<[f64; 3]> = (0..10_000)
        .map(|_| {
            let d = uniform_direction(&mut rng);
            [radius * d[0], radius * d[1], radius * d[2]]
        })
        .collect();
    let shell = OccupationMeasure::uniform(pts, 0.0).unwrap();
    let mut worst = 0.0f64;
    for x in [[0.0; 3], [0.5, -0.3, 0.2]] {
        worst = worst.max((lambda_at(&shell, x) - 0.5).abs() * radius);
    }
    c.clause("shell theorem to 1% at n = 1e4", worst <= 0.01, format!("{worst:.4}"));

    let m = 256;
    let pts: Vec<[f64; 3]> = (0..m)
        .map(|_| [rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0])
        .collect();
    let mu = OccupationMeasure::uniform(pts.clone(), 0.0).unwrap();
    let h = hamiltonian(&mu).unwrap();
    let w = 1.0 / m as f64;
    let mut oracle = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let dx = pts[i][0] - pts[j][0];
                let dy = pts[i][1] - pts[j][1];
                let dz = pts[i][2] - pts[j][2];
                oracle += w * w / (dx * dx + dy * dy + dz * dz).sqrt();
            }
        }
    }
    let rel = (h - oracle).abs() / oracle;
    c.clause("double-loop oracle agreement 1e-12", rel <= 1e-12, format!("{rel:.2e}"));

    let mut rng2 = ChaCha12Rng::seed_from_u64(derive_seed(seed_root, 0xc22));
    let path = sample_wiener(4.0, 4.0 / 256.0, &mut rng2).unwrap();
    let mu = occupation_with_eta(&path, 0.1 * (4.0f64 / 256.0).sqrt());
    let res = splitting_check(&mu, 1.0, 4.0).unwrap();
    c.clause("splitting residual <= 1e-10", res.relative <= 1e-10, format!("{:.2e}", res.relative));
    c
}

fn criterion_3_inline(
    cfg: &MasterConfig,
    ladders: &[LadderArtifacts],
    seed_root: u64,
) -> CriterionOutcome {
    let mut c = CriterionOutcome::new(3, "sampler soundness");
    // beta = 0 endpoint variance: one endpoint per independent replica chain
    // so the chi-squared error bar applies
    let t = 2.0;
    let rep_cfg = pekar_core::sampler::ChainConfig {
        t,
        h: t / 64.0,
        beta: 0.0,
        burn_in: 300,
        draws: 1,
        thinning: 50,
        track_shift: false,
        ..pekar_core::sampler::ChainConfig::default()
    };
    let replicas = 256;
    let mut endpoints = Vec::with_capacity(replicas);
    for k in 0..replicas {
        let r = run_chain(&rep_cfg, None, derive_seed(seed_root, 0x3000 + k as u64)).unwrap();
        endpoints.push(r.samples[0].endpoint);
    }
    let mut ok = true;
    let mut detail = String::new();
    for axis in 0..3 {
        let vals: Vec<f64> = endpoints.iter().map(|e| e[axis]).collect();
        let v = variance(&vals);
        let se = t * (2.0 / replicas as f64).sqrt();
        ok &= (v - t).abs() <= 3.0 * se;
        detail += &format!("{v:.3} ");
    }
    c.clause("beta=0 endpoint variance = t within 3 SE", ok, format!("{detail}vs t = {t}"));

    // beta = 0 mean H against a direct Wiener Monte Carlo, using the first
    // ladder's beta = 0 slot
    let first = &ladders[0];
    let b0 = first.ladder.output_at_beta(0.0).unwrap();
    let t = first.t;
    let (chain_mean, chain_se) = pekar_core::stats::batch_mean_se(&b0.h_values(), 20);
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed_root, 0xc3));
    let h_step = t / cfg.sampler.segments as f64;
    let eta = cfg.sampler.eta_factor * h_step.sqrt();
    let mut hs = Vec::new();
    for _ in 0..300 {
        let p = sample_wiener(t, h_step, &mut rng).unwrap();
        hs.push(hamiltonian(&occupation_with_eta(&p, eta)).unwrap());
    }
    let (mc_mean, mc_se) = mean_se(&hs);
    let tol = 3.0 * (chain_se * chain_se + mc_se * mc_se).sqrt() * 2.0;
    c.clause(
        "beta=0 mean H matches direct MC within 3 SE",
        (chain_mean - mc_mean).abs() <= tol,
        format!("{chain_mean:.4} vs {mc_mean:.4}"),
    );

    // numerical detailed balance
    let mut worst = 0.0f64;
    let tdb = 2.0;
    let hdb: f64 = tdb / 64.0;
    let beta = 0.7;
    let eta_db = 0.1 * hdb.sqrt();
    for (i, j) in [(0usize, 6usize), (10, 30)] {
        let x = sample_wiener(tdb, hdb, &mut rng).unwrap();
        let xp = propose_bridge(&x, i, j, &mut rng).unwrap();
        let hx = hamiltonian(&occupation_with_eta(&x, eta_db)).unwrap();
        let hxp = hamiltonian(&occupation_with_eta(&xp, eta_db)).unwrap();
        let lhs = beta * tdb * hx
            + wiener_log_density(&x)
            + bridge_log_density(&x, &xp, i, j)
            + (beta * tdb * (hxp - hx)).min(0.0);
        let rhs = beta * tdb * hxp
            + wiener_log_density(&xp)
            + bridge_log_density(&xp, &x, i, j)
            + (beta * tdb * (hx - hxp)).min(0.0);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    c.clause("detailed balance to 1e-12", worst <= 1e-12, format!("{worst:.2e}"));

    let max_gap = ladders.iter().map(|a| a.report.max_cache_gap).fold(0.0f64, f64::max);
    c.clause("incremental cache within 1e-8", max_gap <= 1e-8, format!("{max_gap:.2e}"));
    c
}

fn criterion_7_inline(sol: &PekarSolution, seed_root: u64) -> CriterionOutcome {
    let mut c = CriterionOutcome::new(7, "Girsanov and pathwise EL identities");
    let drift = DriftField::new(sol);
    let t = 1.0;
    let h = 1e-3;
    let m = (t / h) as usize;
    let bump = |p: [f64; 3]| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp();
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed_root, 0xc7));
    let reps = 400;
    let mut weighted = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut positions = Vec::with_capacity(m + 1);
        let mut x = [0.0f64; 3];
        positions.push(x);
        for _ in 0..m {
            x = em_step(x, &drift, h, &mut rng).0;
            positions.push(x);
        }
        let path = DiscretePath { h, positions, origin_start: true };
        let w = girsanov_weight(&path, sol, [0.0; 3]).unwrap();
        weighted.push(w * bump(path.endpoint()));
    }
    let mut plain = Vec::with_capacity(reps);
    for _ in 0..reps {
        let path = sample_wiener(t, h, &mut rng).unwrap();
        plain.push(bump(path.endpoint()));
    }
    let (mw, sw) = mean_se(&weighted);
    let (mp, sp) = mean_se(&plain);
    let z = (mw - mp).abs() / (sw * sw + sp * sp).sqrt();
    c.clause("importance-sampling z <= 3", z <= 3.0, format!("z = {z:.2}"));

    let t0 = 2.0;
    let mut coarse = Vec::new();
    let mut fine = Vec::new();
    let mut worst = 0.0f64;
    for k in 0..10u64 {
        let mut r1 = ChaCha12Rng::seed_from_u64(derive_seed(seed_root, 0x70 + k));
        let mut r2 = ChaCha12Rng::seed_from_u64(derive_seed(seed_root, 0x70 + k));
        let a = pathwise_el_check(&sample_wiener(t0, 1e-3, &mut r1).unwrap(), sol, [0.0; 3])
            .unwrap();
        let b = pathwise_el_check(&sample_wiener(t0, 5e-4, &mut r2).unwrap(), sol, [0.0; 3])
            .unwrap();
        worst = worst.max(a.residual);
        coarse.push(a.residual);
        fine.push(b.residual);
    }
    c.clause(
        "pathwise EL residual <= 5e-3 lambda at h = 1e-3",
        worst <= 5e-3 * sol.lambda,
        format!("{worst:.2e}"),
    );
    let ratio = fine.iter().sum::<f64>() / coarse.iter().sum::<f64>();
    c.clause(
        "residual halves within 25% when h halves",
        (0.375..=0.625).contains(&ratio),
        format!("ratio {ratio:.3}"),
    );
    c
}

/// Recheck an existing run-all output directory from its artifacts.
pub fn cmd_verify(input: &Path, out: Option<&Path>) -> Result<i32> {
    let sol = io::read_solution(&input.join("solution"))?;
    let report_text = std::fs::read_to_string(input.join("report.json"))
        .context("reading report.json from the input directory")?;
    let prior: ExperimentReport = serde_json::from_str(&report_text)?;

    let mut per_t_shift = Vec::new();
    let mut per_t_end = Vec::new();
    let mut tube_rows = Vec::new();
    let mut mean_h_consistent = true;
    for l in &prior.ladders {
        let b1 = io::read_samples_csv(&input.join(&l.samples_csv_beta1))?;
        let b0 = io::read_samples_csv(&input.join(&l.samples_csv_beta0))?;
        let h1: Vec<f64> = b1.iter().map(|r| r.h_value).collect();
        let (m1, _) = mean_se(&h1);
        let stored = *l.mean_h_per_beta.last().context("ladder report has means")?;
        mean_h_consistent &= (m1 - stored).abs() <= 1e-9 * stored.abs().max(1.0);
        per_t_shift.push((l.t, b1.iter().filter_map(|r| r.shift).collect::<Vec<_>>()));
        per_t_end.push((l.t, b1.iter().map(|r| r.endpoint).collect::<Vec<_>>()));
        tube_rows.push((l.t, 1.0, b1.iter().filter_map(|r| r.orbit_distance).collect()));
        tube_rows.push((l.t, 0.0, b0.iter().filter_map(|r| r.orbit_distance).collect()));
    }
    let control: Vec<[f64; 3]> = {
        let last = prior.ladders.last().context("report has no ladders")?;
        io::read_samples_csv(&input.join(&last.samples_csv_beta0))?
            .iter()
            .filter_map(|r| r.shift)
            .collect()
    };
    let seed = prior.seed_root;
    let shift_law = verify_shift_law(&per_t_shift, Some(&control), &sol, derive_seed(seed, 0x7e1));
    let endpoint_law = verify_endpoint_law(&per_t_end, None, &sol, derive_seed(seed, 0x7e2));
    let lambda0 = sol.potential.extrapolate_origin();
    let tube = verify_tube(
        &tube_rows,
        prior.config.verify.tube_epsilon_factor * lambda0,
        0.1 * lambda0,
    );
    let fe_rows: Vec<(f64, TiResult)> =
        prior.free_energy.ti.iter().map(|ti| (ti.t, ti.clone())).collect();
    let fe = verify_free_energy(&fe_rows, sol.rho);

    let recheck = serde_json::json!({
        "shift_law": shift_law,
        "endpoint_law": endpoint_law,
        "tube": tube,
        "free_energy": fe,
        "consistent_with_report": {
            "mean_h_matches_sample_tables": mean_h_consistent,
            "shift_l1": (shift_law.rows.iter().map(|r| r.comparison.l1).collect::<Vec<_>>(),
                          prior.shift_law.rows.iter().map(|r| r.comparison.l1).collect::<Vec<_>>()),
        },
    });
    let verdict = shift_law.pass
        && fe.all_positive
        && mean_h_consistent
        && prior.all_criteria_passed == prior.criteria.iter().all(|c| c.passed);
    if let Some(dir) = out {
        io::ensure_dir(dir)?;
        io::write_json(&dir.join("verify_report.json"), &recheck)?;
        println!("wrote {}", dir.join("verify_report.json").display());
    } else {
        println!("{}", serde_json::to_string_pretty(&recheck)?);
    }
    println!("recheck verdict: {}", if verdict { "consistent" } else { "flags raised" });
    Ok(if verdict { 0 } else { 1 })
}

pub fn default_config_json() -> String {
    serde_json::to_string_pretty(&MasterConfig::default()).expect("default config serializes")
}
