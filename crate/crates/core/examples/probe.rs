//! Calibration probe: mixing and cost of the tempering ladder at desk scale.
//! Run with: cargo run --release -p pekar-core --example probe -- [t]

use std::time::Instant;

use pekar_core::sampler::{run_ladder, ChainConfig, LadderConfig};
use pekar_core::solver::{scf_iterate, ScfConfig};
use pekar_core::stats::effective_sample_size;

fn main() {
    let t: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8.0);
    let start = Instant::now();
    let sol = scf_iterate(&ScfConfig::default(), None).unwrap();
    println!("solver: rho={:.6} lambda={:.6} in {:?}", sol.rho, sol.lambda, start.elapsed());

    let m = 512;
    let cfg = LadderConfig {
        betas: LadderConfig::default_betas(),
        base: ChainConfig {
            t,
            h: t / m as f64,
            burn_in: 20_000,
            draws: 300,
            thinning: 100,
            track_shift: true,
            ..ChainConfig::default()
        },
        swap_interval: 100,
        exchange: true,
    };
    let start = Instant::now();
    let ladder = run_ladder(&cfg, Some(&sol), 7).unwrap();
    println!("ladder t={t}: {:?}", start.elapsed());
    println!("swap rates: {:?}", ladder.swap_rates());
    for (k, out) in ladder.outputs.iter().enumerate() {
        let beta = ladder.betas[k];
        let hs = out.h_values();
        let ess_h = effective_sample_size(&hs);
        let mean_h = hs.iter().sum::<f64>() / hs.len() as f64;
        let mut line = format!(
            "beta={beta:.3} meanH={mean_h:.4} essH={ess_h:.0} acc(int)={:.2} acc(end)={:.2}",
            out.interior.rate(),
            out.endpoint_block.rate()
        );
        if beta == 0.0 || beta == 1.0 {
            let ys: Vec<f64> = out
                .samples
                .iter()
                .filter_map(|s| s.shift.map(|w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt()))
                .collect();
            if !ys.is_empty() {
                let ess_y = effective_sample_size(&ys);
                let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
                let dists: Vec<f64> =
                    out.samples.iter().filter_map(|s| s.orbit_distance).collect();
                let mean_d = dists.iter().sum::<f64>() / dists.len() as f64;
                line += &format!(" mean|Y|={mean_y:.3} essY={ess_y:.0} meanDist={mean_d:.3}");
            }
        }
        println!("{line}");
    }
}
