//! Compares sequential and pipelined makespans for fixed per-stage
//! latencies. Pass a batch size as the first argument (default 200).

use std::time::Duration;

use vidcurate::orchestrator::{simulate, SimulationConfig};

fn main() -> vidcurate::Result<()> {
    let batch = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(200);
    let report = simulate(&SimulationConfig {
        latencies: vec![1.0, 3.0, 0.8, 1.2, 12.0],
        unit: Duration::from_micros(500),
        batch,
    })?;
    let a = &report.analytic;
    println!("analytic: {:.1} / {:.1} = {:.3} (bottleneck {})", a.t_sequential, a.t_pipelined, a.efficiency, a.bottleneck_stage);
    println!(
        "measured: {:.3}s / {:.3}s = {:.3}",
        report.measured_sequential, report.measured_pipelined, report.measured_ratio
    );
    Ok(())
}
