//! Load, override and serialize the INI run configuration.
//!
//! cargo run --release --example configuration

use pffloc::config::RunConfig;

fn main() -> pffloc::error::Result<()> {
    let text = "\
[model]
sigma_sq = 0.1

[run]
method = ekf
seed = 3
";
    let cfg = RunConfig::from_ini_str(text)?;
    println!(
        "method {} seed {} sigma_sq {} (everything else at its default, M = {})",
        cfg.method, cfg.seed, cfg.localizer.model.sigma_sq, cfg.localizer.filter.m_particles
    );

    let cfg = cfg.with_overrides(&["filter.m_particles=500", "simulation.preset=room"])?;
    println!("after overrides: M = {}, preset {}", cfg.localizer.filter.m_particles, cfg.simulation.preset);

    let serialized = cfg.to_ini_string();
    let back = RunConfig::from_ini_str(&serialized)?;
    println!("serialize then parse is identity: {}", back == cfg);
    println!("\n{}", serialized.lines().take(12).collect::<Vec<_>>().join("\n"));
    Ok(())
}
