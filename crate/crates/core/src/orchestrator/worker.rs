//! The per-task worker state machine and crash injection.

use std::cell::Cell;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{Stage, Task};
use crate::orchestrator::broker::{Broker, Delivery, InMemoryBroker};
use crate::orchestrator::handler::StageHandler;
use crate::orchestrator::journal::{Appended, Journal};
use crate::orchestrator::routing::RoutingTable;

/// Points in task processing where an injected crash can strike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Checkpoint {
    AfterConsume,
    /// Leaves a torn record line in the journal file.
    MidAppend,
    AfterAppend,
    AfterPublish,
}

impl Checkpoint {
    pub const ALL: [Checkpoint; 4] = [
        Checkpoint::AfterConsume,
        Checkpoint::MidAppend,
        Checkpoint::AfterAppend,
        Checkpoint::AfterPublish,
    ];
}

/// Kill every worker when the `delivery`-th delivery (counted across all
/// workers, from 1) reaches `checkpoint`. A point whose task never gets that
/// far, because it is replayed or another crash interrupts it, moves on to
/// the next delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashPoint {
    pub delivery: u64,
    pub checkpoint: Checkpoint,
}

#[derive(Debug, Default)]
pub struct FaultInjector {
    plan: Mutex<Vec<CrashPoint>>,
    deliveries: AtomicU64,
    killed: AtomicBool,
    kills: AtomicU64,
}

impl FaultInjector {
    pub fn new(plan: Vec<CrashPoint>) -> Self {
        Self {
            plan: Mutex::new(plan),
            ..Self::default()
        }
    }

    pub fn killed(&self) -> bool {
        self.killed.load(Ordering::SeqCst)
    }

    pub fn kills(&self) -> u64 {
        self.kills.load(Ordering::SeqCst)
    }

    pub fn deliveries(&self) -> u64 {
        self.deliveries.load(Ordering::SeqCst)
    }

    pub(crate) fn revive(&self) {
        self.killed.store(false, Ordering::SeqCst);
    }

    fn arm(&self) -> Option<Checkpoint> {
        let n = self.deliveries.fetch_add(1, Ordering::SeqCst) + 1;
        let mut plan = self.plan.lock().ok()?;
        let i = (0..plan.len())
            .filter(|&i| plan[i].delivery <= n)
            .min_by_key(|&i| plan[i].delivery)?;
        Some(plan.remove(i).checkpoint)
    }

    fn rearm(&self, checkpoint: Checkpoint) {
        if let Ok(mut plan) = self.plan.lock() {
            plan.push(CrashPoint { delivery: 0, checkpoint });
        }
    }

    fn kill(&self, journal: &Journal, fired: &Cell<bool>) {
        journal.halt();
        if !self.killed.swap(true, Ordering::SeqCst) {
            self.kills.fetch_add(1, Ordering::SeqCst);
            fired.set(true);
        }
    }
}

/// The task was abandoned without acknowledgement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Halted;

pub(crate) struct WorkerContext {
    pub stage: Stage,
    pub worker_id: String,
    pub broker: Arc<InMemoryBroker>,
    pub journal: Arc<Journal>,
    pub handler: Arc<dyn StageHandler>,
    pub routing: Arc<RoutingTable>,
    pub faults: Arc<FaultInjector>,
    pub max_attempts: u32,
}

impl WorkerContext {
    fn checkpoint(&self, armed: Option<Checkpoint>, at: Checkpoint, fired: &Cell<bool>) -> Result<(), Halted> {
        if self.faults.killed() {
            return Err(Halted);
        }
        if armed == Some(at) {
            self.faults.kill(&self.journal, fired);
            return Err(Halted);
        }
        Ok(())
    }

    /// consume → (replay | compute → append) → publish → ack.
    pub fn process(&self, delivery: Delivery) -> Result<(), Halted> {
        let armed = self.faults.arm();
        let fired = Cell::new(false);
        let result = self.step(delivery, armed, &fired);
        if let (Some(cp), false) = (armed, fired.get()) {
            self.faults.rearm(cp);
        }
        result
    }

    fn step(&self, delivery: Delivery, armed: Option<Checkpoint>, fired: &Cell<bool>) -> Result<(), Halted> {
        self.checkpoint(armed, Checkpoint::AfterConsume, fired)?;
        let task = &delivery.task;
        let subject = task.subject.as_str();

        let records = match self.handler.recorded(self.stage, subject, &self.journal) {
            Some(records) => {
                tracing::debug!(stage = %self.stage, subject, "replaying journaled outcome");
                records
            }
            None => {
                let start = Instant::now();
                let computed = match self.handler.handle(self.stage, subject, &self.journal) {
                    Ok(records) => records,
                    Err(e) if e.is_retryable() && task.attempt < self.max_attempts => {
                        tracing::warn!(stage = %self.stage, subject, attempt = task.attempt, error = %e, "retrying");
                        return self.broker.nack(delivery.tag, true).map_err(|_| Halted);
                    }
                    Err(e) => {
                        tracing::warn!(stage = %self.stage, subject, error = %e, "recording failure");
                        vec![self.handler.failure(self.stage, subject, &e)]
                    }
                };
                self.append_all(computed, start.elapsed(), armed, fired)?
            }
        };
        self.checkpoint(armed, Checkpoint::AfterAppend, fired)?;

        for (next, next_subject) in self.routing.forwards(self.stage, &records) {
            let task = Task::new(format!("{next}:{next_subject}"), next_subject, next);
            self.broker.publish(next.queue(), task).map_err(|_| Halted)?;
        }
        self.checkpoint(armed, Checkpoint::AfterPublish, fired)?;
        self.broker.ack(delivery.tag).map_err(|_| Halted)
    }

    fn append_all(
        &self,
        records: Vec<crate::model::StageOutcome>,
        elapsed: Duration,
        armed: Option<Checkpoint>,
        fired: &Cell<bool>,
    ) -> Result<Vec<crate::model::StageOutcome>, Halted> {
        let timed = records.iter().filter(|r| !r.is_asset_summary()).count().max(1);
        let share = elapsed.as_secs_f64() / timed as f64;
        let mut stored = Vec::with_capacity(records.len());
        for mut r in records {
            r.worker_id = self.worker_id.clone();
            r.wall_time = if r.is_asset_summary() { 0.0 } else { share };
            if armed == Some(Checkpoint::MidAppend) && !self.journal.contains(&r.clip_id, r.stage) {
                let _ = self.journal.append_torn(&r);
                self.faults.kill(&self.journal, fired);
                return Err(Halted);
            }
            match self.journal.append(r) {
                Ok(Appended::New(r)) | Ok(Appended::Existing(r)) => stored.push(r),
                Err(e) => {
                    tracing::debug!(error = %e, "journal refused append");
                    return Err(Halted);
                }
            }
        }
        Ok(stored)
    }
}

/// Consumes from the stage queue until `stop` is raised or a crash halts the
/// worker, then cancels its consumer so unacked tasks are redelivered.
pub(crate) fn run_worker(ctx: WorkerContext, prefetch: usize, stop: Arc<AtomicBool>) {
    let consumer = match ctx.broker.subscribe(ctx.stage.queue(), prefetch) {
        Ok(c) => c,
        Err(e) => {
            tracing::error!(stage = %ctx.stage, error = %e, "cannot subscribe");
            return;
        }
    };
    while !stop.load(Ordering::SeqCst) && !ctx.faults.killed() {
        match ctx.broker.consume(consumer, Duration::from_millis(5)) {
            Ok(Some(d)) => {
                if ctx.process(d).is_err() {
                    break;
                }
            }
            Ok(None) => {}
            Err(_) => break,
        }
    }
    let _ = ctx.broker.cancel(consumer);
}
