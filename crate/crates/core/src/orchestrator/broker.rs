//! Work-queue broker contract and its in-process implementation.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConsumerId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub tag: u64,
    pub queue: String,
    pub task: Task,
    pub redelivered: bool,
}

/// At-least-once task queues. A delivered task stays unacknowledged until the
/// consumer acks or nacks it; cancelling a consumer requeues its unacked
/// deliveries.
pub trait Broker: Send + Sync {
    fn declare(&self, queue: &str) -> Result<()>;
    fn publish(&self, queue: &str, task: Task) -> Result<()>;
    /// Registers a consumer allowed at most `prefetch` unacked deliveries.
    fn subscribe(&self, queue: &str, prefetch: usize) -> Result<ConsumerId>;
    /// Waits up to `timeout` for a delivery.
    fn consume(&self, consumer: ConsumerId, timeout: Duration) -> Result<Option<Delivery>>;
    fn ack(&self, tag: u64) -> Result<()>;
    /// Returns the task to its queue (with `attempt + 1`) or discards it.
    fn nack(&self, tag: u64, requeue: bool) -> Result<()>;
    fn cancel(&self, consumer: ConsumerId) -> Result<()>;
}

#[derive(Debug)]
struct Unacked {
    consumer: ConsumerId,
    queue: String,
    task: Task,
}

#[derive(Debug)]
struct ConsumerState {
    queue: String,
    prefetch: usize,
    in_flight: usize,
}

#[derive(Debug, Default)]
struct State {
    queues: BTreeMap<String, VecDeque<(Task, bool)>>,
    unacked: HashMap<u64, Unacked>,
    consumers: HashMap<ConsumerId, ConsumerState>,
    next_tag: u64,
    next_consumer: u64,
    published: u64,
    closed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub ready: usize,
    pub unacked: usize,
    pub consumers: usize,
}

#[derive(Debug, Default)]
pub struct InMemoryBroker {
    state: Mutex<State>,
    ready: Condvar,
}

impl InMemoryBroker {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> Result<MutexGuard<'_, State>> {
        let st = self.state.lock().map_err(|_| Error::Broker("broker state poisoned".into()))?;
        if st.closed {
            return Err(Error::Broker("broker unavailable".into()));
        }
        Ok(st)
    }

    /// Makes every later operation fail, as if the broker went away.
    pub fn close(&self) {
        if let Ok(mut st) = self.state.lock() {
            st.closed = true;
        }
        self.ready.notify_all();
    }

    pub fn stats(&self, queue: &str) -> QueueStats {
        let Ok(st) = self.state.lock() else {
            return QueueStats::default();
        };
        QueueStats {
            ready: st.queues.get(queue).map_or(0, VecDeque::len),
            unacked: st.unacked.values().filter(|u| u.queue == queue).count(),
            consumers: st.consumers.values().filter(|c| c.queue == queue).count(),
        }
    }

    /// No ready and no unacked tasks anywhere.
    pub fn is_idle(&self) -> bool {
        self.state
            .lock()
            .map(|st| st.unacked.is_empty() && st.queues.values().all(VecDeque::is_empty))
            .unwrap_or(true)
    }

    pub fn published_count(&self) -> u64 {
        self.state.lock().map(|st| st.published).unwrap_or(0)
    }

    /// Non-blocking [`Broker::consume`].
    pub fn try_consume(&self, consumer: ConsumerId) -> Result<Option<Delivery>> {
        let mut st = self.lock()?;
        Self::take(&mut st, consumer)
    }

    fn take(st: &mut State, consumer: ConsumerId) -> Result<Option<Delivery>> {
        let c = st
            .consumers
            .get(&consumer)
            .ok_or_else(|| Error::Broker(format!("unknown consumer {}", consumer.0)))?;
        if c.in_flight >= c.prefetch {
            return Ok(None);
        }
        let queue = c.queue.clone();
        let Some((task, redelivered)) = st.queues.get_mut(&queue).and_then(VecDeque::pop_front) else {
            return Ok(None);
        };
        st.next_tag += 1;
        let tag = st.next_tag;
        st.consumers.get_mut(&consumer).expect("checked above").in_flight += 1;
        st.unacked.insert(
            tag,
            Unacked {
                consumer,
                queue: queue.clone(),
                task: task.clone(),
            },
        );
        Ok(Some(Delivery {
            tag,
            queue,
            task,
            redelivered,
        }))
    }

    fn settle(st: &mut State, tag: u64) -> Result<Unacked> {
        let u = st
            .unacked
            .remove(&tag)
            .ok_or_else(|| Error::Broker(format!("unknown delivery tag {tag}")))?;
        if let Some(c) = st.consumers.get_mut(&u.consumer) {
            c.in_flight -= 1;
        }
        Ok(u)
    }
}

impl Broker for InMemoryBroker {
    fn declare(&self, queue: &str) -> Result<()> {
        self.lock()?.queues.entry(queue.to_string()).or_default();
        Ok(())
    }

    fn publish(&self, queue: &str, task: Task) -> Result<()> {
        let mut st = self.lock()?;
        let q = st
            .queues
            .get_mut(queue)
            .ok_or_else(|| Error::Broker(format!("queue '{queue}' not declared")))?;
        q.push_back((task, false));
        st.published += 1;
        drop(st);
        self.ready.notify_all();
        Ok(())
    }

    fn subscribe(&self, queue: &str, prefetch: usize) -> Result<ConsumerId> {
        let mut st = self.lock()?;
        if !st.queues.contains_key(queue) {
            return Err(Error::Broker(format!("queue '{queue}' not declared")));
        }
        st.next_consumer += 1;
        let id = ConsumerId(st.next_consumer);
        st.consumers.insert(
            id,
            ConsumerState {
                queue: queue.to_string(),
                prefetch: prefetch.max(1),
                in_flight: 0,
            },
        );
        Ok(id)
    }

    fn consume(&self, consumer: ConsumerId, timeout: Duration) -> Result<Option<Delivery>> {
        let deadline = Instant::now() + timeout;
        let mut st = self.lock()?;
        loop {
            if let Some(d) = Self::take(&mut st, consumer)? {
                return Ok(Some(d));
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(None);
            }
            st = self
                .ready
                .wait_timeout(st, deadline - now)
                .map_err(|_| Error::Broker("broker state poisoned".into()))?
                .0;
            if st.closed {
                return Err(Error::Broker("broker unavailable".into()));
            }
        }
    }

    fn ack(&self, tag: u64) -> Result<()> {
        let mut st = self.lock()?;
        Self::settle(&mut st, tag)?;
        drop(st);
        self.ready.notify_all();
        Ok(())
    }

    fn nack(&self, tag: u64, requeue: bool) -> Result<()> {
        let mut st = self.lock()?;
        let mut u = Self::settle(&mut st, tag)?;
        if requeue {
            u.task.attempt += 1;
            st.queues.entry(u.queue).or_default().push_back((u.task, true));
        }
        drop(st);
        self.ready.notify_all();
        Ok(())
    }

    fn cancel(&self, consumer: ConsumerId) -> Result<()> {
        let mut st = self.lock()?;
        st.consumers.remove(&consumer);
        let tags: Vec<u64> = st
            .unacked
            .iter()
            .filter(|(_, u)| u.consumer == consumer)
            .map(|(t, _)| *t)
            .collect();
        let mut tags = tags;
        tags.sort_unstable();
        for tag in tags.into_iter().rev() {
            let u = st.unacked.remove(&tag).expect("collected above");
            st.queues.entry(u.queue).or_default().push_front((u.task, true));
        }
        drop(st);
        self.ready.notify_all();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(n: u32) -> Task {
        Task::new(format!("t{n}"), format!("s{n}"), crate::model::Stage::Clip)
    }

    fn broker() -> InMemoryBroker {
        let b = InMemoryBroker::new();
        b.declare("clip").unwrap();
        b
    }

    #[test]
    fn publish_consume_ack() {
        let b = broker();
        b.publish("clip", task(1)).unwrap();
        let c = b.subscribe("clip", 1).unwrap();
        let d = b.try_consume(c).unwrap().unwrap();
        assert_eq!(d.task.subject, "s1");
        assert!(!b.is_idle());
        b.ack(d.tag).unwrap();
        assert!(b.is_idle());
        assert!(b.ack(d.tag).is_err());
    }

    #[test]
    fn prefetch_limits_in_flight() {
        let b = broker();
        for i in 0..3 {
            b.publish("clip", task(i)).unwrap();
        }
        let c = b.subscribe("clip", 2).unwrap();
        let d1 = b.try_consume(c).unwrap().unwrap();
        assert!(b.try_consume(c).unwrap().is_some());
        assert!(b.try_consume(c).unwrap().is_none());
        b.ack(d1.tag).unwrap();
        assert!(b.try_consume(c).unwrap().is_some());
    }

    #[test]
    fn nack_requeues_with_next_attempt() {
        let b = broker();
        b.publish("clip", task(1)).unwrap();
        let c = b.subscribe("clip", 1).unwrap();
        let d = b.try_consume(c).unwrap().unwrap();
        b.nack(d.tag, true).unwrap();
        let d = b.try_consume(c).unwrap().unwrap();
        assert_eq!(d.task.attempt, 2);
        assert!(d.redelivered);
        b.nack(d.tag, false).unwrap();
        assert!(b.is_idle());
    }

    #[test]
    fn cancel_redelivers_in_order() {
        let b = broker();
        for i in 0..3 {
            b.publish("clip", task(i)).unwrap();
        }
        let c = b.subscribe("clip", 2).unwrap();
        b.try_consume(c).unwrap().unwrap();
        b.try_consume(c).unwrap().unwrap();
        b.cancel(c).unwrap();
        let c2 = b.subscribe("clip", 3).unwrap();
        let got: Vec<_> = (0..3).map(|_| b.try_consume(c2).unwrap().unwrap().task.subject).collect();
        assert_eq!(got, ["s0", "s1", "s2"]);
    }

    #[test]
    fn consume_times_out_and_wakes() {
        let b = std::sync::Arc::new(broker());
        let c = b.subscribe("clip", 1).unwrap();
        assert!(b.consume(c, Duration::from_millis(5)).unwrap().is_none());
        let b2 = std::sync::Arc::clone(&b);
        let h = std::thread::spawn(move || b2.consume(c, Duration::from_secs(5)).unwrap());
        std::thread::sleep(Duration::from_millis(20));
        b.publish("clip", task(9)).unwrap();
        assert_eq!(h.join().unwrap().unwrap().task.subject, "s9");
    }

    #[test]
    fn closed_broker_errors() {
        let b = broker();
        b.close();
        assert!(matches!(b.publish("clip", task(1)), Err(Error::Broker(_))));
    }

    #[test]
    fn undeclared_queue_rejected() {
        let b = broker();
        assert!(b.publish("nope", task(1)).is_err());
        assert!(b.subscribe("nope", 1).is_err());
    }
}
