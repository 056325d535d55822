//! Sleep-based throughput experiment comparing stage-at-a-time execution
//! with all stages running concurrently.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::analytics::{efficiency, throughput_report, EfficiencyReport};
use crate::error::{Error, Result};
use crate::model::{PipelineConfig, Stage};
use crate::orchestrator::handler::SimulationHandler;
use crate::orchestrator::journal::Journal;
use crate::orchestrator::pipeline::Pipeline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Per-task latency of each stage in abstract units, assigned to the
    /// stages in pipeline order.
    pub latencies: Vec<f64>,
    pub unit: Duration,
    pub batch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub analytic: EfficiencyReport,
    /// Seconds per stage when each stage processes the whole batch alone.
    pub stage_seconds: Vec<(Stage, f64)>,
    pub measured_sequential: f64,
    pub measured_pipelined: f64,
    pub measured_ratio: f64,
    /// Efficiency from the wall times journaled during the pipelined run.
    pub journal_efficiency: Option<EfficiencyReport>,
}

fn subjects(batch: usize) -> Vec<String> {
    (0..batch).map(|i| format!("task-{i:05}")).collect()
}

fn timed_run(order: Vec<Stage>, handler: &Arc<SimulationHandler>, batch: usize) -> Result<(f64, Arc<Journal>)> {
    let config = PipelineConfig {
        stage_order: order,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::new(config, handler.clone(), Journal::in_memory(false))?;
    pipeline.enqueue(&subjects(batch))?;
    let start = Instant::now();
    pipeline.start()?;
    pipeline.wait_idle(None)?;
    let elapsed = start.elapsed().as_secs_f64();
    pipeline.shutdown();
    Ok((elapsed, pipeline.journal()))
}

/// One worker per stage. The sequential makespan is the sum of single-stage
/// runs over the batch; the pipelined makespan is one run with every stage
/// live.
pub fn simulate(config: &SimulationConfig) -> Result<SimulationReport> {
    if config.latencies.is_empty() || config.latencies.len() > Stage::ALL.len() {
        return Err(Error::Parameter(format!(
            "expected 1 to {} stage latencies, got {}",
            Stage::ALL.len(),
            config.latencies.len()
        )));
    }
    if config.batch == 0 {
        return Err(Error::Parameter("batch must be positive".into()));
    }
    let timings: Vec<(Stage, f64)> = Stage::ALL.iter().copied().zip(config.latencies.iter().copied()).collect();
    let analytic = efficiency(&timings)?;
    let handler = Arc::new(SimulationHandler::new(
        timings.iter().map(|&(s, l)| (s, config.unit.mul_f64(l))),
    ));
    let order: Vec<Stage> = timings.iter().map(|(s, _)| *s).collect();

    let mut stage_seconds = Vec::with_capacity(order.len());
    for &stage in &order {
        stage_seconds.push((stage, timed_run(vec![stage], &handler, config.batch)?.0));
    }
    let measured_sequential: f64 = stage_seconds.iter().map(|(_, t)| t).sum();
    let (measured_pipelined, journal) = timed_run(order, &handler, config.batch)?;
    Ok(SimulationReport {
        analytic,
        stage_seconds,
        measured_sequential,
        measured_pipelined,
        measured_ratio: measured_sequential / measured_pipelined,
        journal_efficiency: throughput_report(&journal.records()).efficiency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_input() {
        let cfg = |latencies: Vec<f64>, batch| SimulationConfig {
            latencies,
            unit: Duration::from_micros(10),
            batch,
        };
        assert!(simulate(&cfg(vec![], 1)).is_err());
        assert!(simulate(&cfg(vec![1.0; 7], 1)).is_err());
        assert!(simulate(&cfg(vec![1.0, -1.0], 1)).is_err());
        assert!(simulate(&cfg(vec![1.0], 0)).is_err());
    }

    #[test]
    fn small_batch_runs_every_task() {
        let r = simulate(&SimulationConfig {
            latencies: vec![1.0, 1.0, 1.0, 1.0],
            unit: Duration::from_micros(100),
            batch: 20,
        })
        .unwrap();
        assert_eq!(r.analytic.efficiency, 4.0);
        assert!(r.measured_ratio > 1.0);
    }
}
