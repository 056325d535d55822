use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{PipelineConfig, Stage, Task};
use crate::orchestrator::broker::{Broker, InMemoryBroker};
use crate::orchestrator::handler::StageHandler;
use crate::orchestrator::journal::Journal;
use crate::orchestrator::routing::RoutingTable;
use crate::orchestrator::worker::{run_worker, CrashPoint, FaultInjector, WorkerContext};

/// Publishes one task per asset id to the `clip` queue.
pub fn enqueue_assets(broker: &dyn Broker, asset_ids: &[String]) -> Result<usize> {
    for id in asset_ids {
        broker.publish(Stage::Clip.queue(), Task::new(format!("clip:{id}"), id, Stage::Clip))?;
    }
    Ok(asset_ids.len())
}

struct Worker {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<()>,
}

/// Stage workers over a shared broker and journal.
pub struct Pipeline {
    config: PipelineConfig,
    broker: Arc<InMemoryBroker>,
    journal: Mutex<Arc<Journal>>,
    handler: Arc<dyn StageHandler>,
    routing: Arc<RoutingTable>,
    faults: Arc<FaultInjector>,
    workers: Mutex<BTreeMap<Stage, Vec<Worker>>>,
    spawned: AtomicUsize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, handler: Arc<dyn StageHandler>, journal: Journal) -> Result<Self> {
        let routing = RoutingTable::new(config.stage_order.clone())?;
        let broker = Arc::new(InMemoryBroker::new());
        for stage in routing.stages() {
            broker.declare(stage.queue())?;
        }
        Ok(Self {
            config,
            broker,
            journal: Mutex::new(Arc::new(journal)),
            handler,
            routing: Arc::new(routing),
            faults: Arc::new(FaultInjector::default()),
            workers: Mutex::new(BTreeMap::new()),
            spawned: AtomicUsize::new(0),
        })
    }

    /// Kills all workers at the given points; [`Pipeline::wait_idle`]
    /// restarts them against the reopened journal.
    pub fn with_crashes(mut self, plan: Vec<CrashPoint>) -> Self {
        self.faults = Arc::new(FaultInjector::new(plan));
        self
    }

    pub fn broker(&self) -> &Arc<InMemoryBroker> {
        &self.broker
    }

    pub fn journal(&self) -> Arc<Journal> {
        Arc::clone(&self.journal.lock().expect("journal slot"))
    }

    pub fn faults(&self) -> &FaultInjector {
        &self.faults
    }

    pub fn routing(&self) -> &RoutingTable {
        &self.routing
    }

    /// Publishes tasks for `subjects` to the first routed stage.
    pub fn enqueue(&self, subjects: &[String]) -> Result<usize> {
        let first = self.routing.first();
        if first == Stage::Clip {
            return enqueue_assets(self.broker.as_ref(), subjects);
        }
        for s in subjects {
            self.broker
                .publish(first.queue(), Task::new(format!("{first}:{s}"), s, first))?;
        }
        Ok(subjects.len())
    }

    fn context(&self, stage: Stage, worker_id: String) -> WorkerContext {
        WorkerContext {
            stage,
            worker_id,
            broker: Arc::clone(&self.broker),
            journal: self.journal(),
            handler: Arc::clone(&self.handler),
            routing: Arc::clone(&self.routing),
            faults: Arc::clone(&self.faults),
            max_attempts: self.config.max_attempts,
        }
    }

    fn spawn(&self, stage: Stage) -> Result<Worker> {
        let n = self.spawned.fetch_add(1, Ordering::SeqCst);
        let id = format!("{stage}-{n}");
        let ctx = self.context(stage, id.clone());
        let prefetch = self.config.prefetch_for(stage);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let handle = std::thread::Builder::new()
            .name(id)
            .spawn(move || run_worker(ctx, prefetch, flag))
            .map_err(|e| Error::Broker(format!("spawn worker: {e}")))?;
        Ok(Worker { stop, handle })
    }

    /// Adds or removes workers on one stage queue. Removed workers finish
    /// their current task; anything they hold unacked is redelivered.
    pub fn scale_stage(&self, stage: Stage, count: usize) -> Result<usize> {
        if !self.routing.stages().contains(&stage) {
            return Err(Error::Config(format!("stage {stage} is not routed")));
        }
        let mut workers = self.workers.lock().expect("worker table");
        let pool = workers.entry(stage).or_default();
        while pool.len() < count {
            pool.push(self.spawn(stage)?);
        }
        let removed: Vec<Worker> = pool.drain(count..).collect();
        for w in &removed {
            w.stop.store(true, Ordering::SeqCst);
        }
        for w in removed {
            let _ = w.handle.join();
        }
        Ok(pool.len())
    }

    pub fn worker_count(&self, stage: Stage) -> usize {
        self.workers
            .lock()
            .map(|w| w.get(&stage).map_or(0, Vec::len))
            .unwrap_or(0)
    }

    /// Scales every routed stage to its configured worker count.
    pub fn start(&self) -> Result<()> {
        for &stage in self.routing.stages() {
            self.scale_stage(stage, self.config.workers_for(stage))?;
        }
        Ok(())
    }

    pub fn shutdown(&self) {
        for &stage in self.routing.stages() {
            let _ = self.scale_stage(stage, 0);
        }
    }

    /// Simulated process restart: joins the dead workers, reopens the
    /// journal from disk and respawns the same worker counts. The broker
    /// survives, as an external broker would.
    fn restart(&self) -> Result<()> {
        let counts: Vec<(Stage, usize)> = self.routing.stages().iter().map(|&s| (s, self.worker_count(s))).collect();
        self.shutdown();
        {
            let mut slot = self.journal.lock().expect("journal slot");
            let old = Arc::clone(&slot);
            let reopened = match old.path() {
                Some(p) => Journal::open(p, old.is_deterministic())?,
                None => return Err(Error::Journal("crash recovery needs a file-backed journal".into())),
            };
            *slot = Arc::new(reopened);
        }
        self.faults.revive();
        tracing::info!(kills = self.faults.kills(), "restarting workers after crash");
        for (stage, n) in counts {
            self.scale_stage(stage, n)?;
        }
        Ok(())
    }

    /// Blocks until every queue is empty with nothing in flight, restarting
    /// workers after injected crashes. Returns `false` on timeout.
    pub fn wait_idle(&self, timeout: Option<Duration>) -> Result<bool> {
        let start = Instant::now();
        loop {
            if self.faults.killed() {
                self.restart()?;
                continue;
            }
            if self.broker.is_idle() {
                return Ok(true);
            }
            if timeout.is_some_and(|t| start.elapsed() >= t) {
                return Ok(false);
            }
            std::thread::sleep(Duration::from_micros(500));
        }
    }

    /// Single-threaded driver: drains the queues in stage order until no work
    /// remains. Given the same inputs it appends records in the same order.
    pub fn run_inline(&self) -> Result<()> {
        let consumers = self
            .routing
            .stages()
            .iter()
            .map(|&s| Ok((s, self.broker.subscribe(s.queue(), 1)?)))
            .collect::<Result<Vec<_>>>()?;
        let contexts: BTreeMap<Stage, WorkerContext> = self
            .routing
            .stages()
            .iter()
            .map(|&s| (s, self.context(s, "inline".into())))
            .collect();
        loop {
            let mut progressed = false;
            for (stage, consumer) in &consumers {
                while let Some(d) = self.broker.try_consume(*consumer)? {
                    progressed = true;
                    contexts[stage]
                        .process(d)
                        .map_err(|_| Error::Broker("inline worker halted".into()))?;
                }
            }
            if !progressed {
                break;
            }
        }
        for (_, c) in consumers {
            self.broker.cancel(c)?;
        }
        Ok(())
    }
}

impl Drop for Pipeline {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Runs `subjects` through every routed stage and returns the journal.
/// Deterministic journals use the inline driver; otherwise stage workers run
/// in parallel at their configured counts.
pub fn run_pipeline(
    config: &PipelineConfig,
    handler: Arc<dyn StageHandler>,
    journal: Journal,
    subjects: &[String],
) -> Result<Arc<Journal>> {
    for &stage in &config.stage_order {
        if config.workers_for(stage) == 0 && !journal.is_deterministic() {
            return Err(Error::Config(format!("stage {stage} has no workers")));
        }
    }
    let deterministic = journal.is_deterministic();
    let pipeline = Pipeline::new(config.clone(), handler, journal)?;
    pipeline.enqueue(subjects)?;
    if deterministic {
        pipeline.run_inline()?;
    } else {
        pipeline.start()?;
        pipeline.wait_idle(None)?;
        pipeline.shutdown();
    }
    Ok(pipeline.journal())
}
