//! Run every localization method on the same simulated corridor runs.
//!
//! cargo run --release --example compare_methods [seeds]

use pffloc::cli::compare_runs;
use pffloc::config::RunConfig;
use pffloc::localizer::Method;

fn main() -> pffloc::error::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut cfg = RunConfig::synthetic();
    cfg.simulation.steps = 120;
    let rows = compare_runs(&cfg, &Method::ALL, seeds)?;

    println!("{:<9} {:>5} {:>10} {:>10} {:>10} {:>7}", "method", "seed", "pos (cm)", "ang (deg)", "ms/step", "failed");
    for r in &rows {
        println!(
            "{:<9} {:>5} {:>10.2} {:>10.3} {:>10.2} {:>7}",
            r.method.name(),
            r.seed,
            100.0 * r.report.pos_mean,
            r.report.ang_mean,
            r.report.mean_time_ms(),
            r.report.tracking_failed
        );
    }
    Ok(())
}
