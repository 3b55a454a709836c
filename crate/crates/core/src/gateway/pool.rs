use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use crate::dump::Row;
use crate::runtime::{ContainerInstance, ReadQuery, RuntimeError};

use super::GatewayError;

#[derive(Debug, Default)]
struct PoolInner {
    members: Vec<Arc<ContainerInstance>>,
    cursor: usize,
}

/// Ordered set of replicas behind the gateway, plus the round-robin cursor.
#[derive(Debug, Default)]
pub struct ReplicaPool {
    inner: Mutex<PoolInner>,
    rollout_active: AtomicBool,
}

/// Exclusive right to roll a pool; released on drop.
#[derive(Debug)]
pub struct RolloutLease {
    pool: Arc<ReplicaPool>,
}

impl RolloutLease {
    pub fn pool(&self) -> &Arc<ReplicaPool> {
        &self.pool
    }
}

impl Drop for RolloutLease {
    fn drop(&mut self) {
        self.pool.rollout_active.store(false, Ordering::Release);
    }
}

impl ReplicaPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_members(members: impl IntoIterator<Item = Arc<ContainerInstance>>) -> Self {
        let pool = Self::new();
        for m in members {
            pool.add(m);
        }
        pool
    }

    fn lock(&self) -> MutexGuard<'_, PoolInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn members(&self) -> Vec<Arc<ContainerInstance>> {
        self.lock().members.clone()
    }

    pub fn len(&self) -> usize {
        self.lock().members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ready_count(&self) -> usize {
        self.lock().members.iter().filter(|m| m.is_ready()).count()
    }

    pub fn cursor(&self) -> usize {
        self.lock().cursor
    }

    pub fn add(&self, instance: Arc<ContainerInstance>) {
        self.lock().members.push(instance);
    }

    /// Removes the member with `id`, keeping the cursor in range.
    pub fn remove(&self, id: &str) -> Option<Arc<ContainerInstance>> {
        let mut inner = self.lock();
        let idx = inner.members.iter().position(|m| m.id() == id)?;
        let removed = inner.members.remove(idx);
        if idx < inner.cursor {
            inner.cursor -= 1;
        }
        if inner.cursor >= inner.members.len() {
            inner.cursor = 0;
        }
        Some(removed)
    }

    /// Claims exclusive rollout rights, or `None` if another rollout holds them.
    pub fn try_begin_rollout(self: &Arc<Self>) -> Option<RolloutLease> {
        self.rollout_active
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .ok()
            .map(|_| RolloutLease { pool: self.clone() })
    }

    fn next_ready(&self) -> Result<Arc<ContainerInstance>, GatewayError> {
        let mut inner = self.lock();
        let n = inner.members.len();
        for i in 0..n {
            let idx = (inner.cursor + i) % n;
            if inner.members[idx].is_ready() {
                inner.cursor = (idx + 1) % n;
                return Ok(inner.members[idx].clone());
            }
        }
        Err(GatewayError::NoReplicasAvailable)
    }

    /// Serves `q` from the next ready member in round-robin order. A member
    /// killed between selection and execution is skipped.
    pub fn route_read(&self, q: &ReadQuery) -> Result<(Vec<Row>, String), GatewayError> {
        let attempts = self.len() + 1;
        for _ in 0..attempts {
            let replica = self.next_ready()?;
            match replica.exec_read(q) {
                Ok(rows) => return Ok((rows, replica.id().to_string())),
                Err(RuntimeError::NotReady { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(GatewayError::NoReplicasAvailable)
    }
}
