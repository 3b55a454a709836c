//! Surge-then-drain rolling replacement of a replica pool.
//!
//! [`plan_rollout`] turns a pool and a target image into a list of launch,
//! await-ready and kill steps that never drops the ready count below the
//! strategy's floor. [`RolloutRun`] executes a plan one poll at a time so a
//! caller can interleave it with other work on the same logical clock;
//! [`execute_rollout`] is the blocking driver. A launch failure rolls the pool
//! back to its original image mix before the run reports failure.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bakery::ImageManifest;
use crate::clock::Timestamp;
use crate::digest::Digest;
use crate::gateway::{ReplicaPool, RolloutLease};
use crate::runtime::{ContainerInstance, Runtime, RuntimeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutStrategy {
    pub min_available: usize,
    pub max_surge: usize,
}

impl RolloutStrategy {
    pub fn new(min_available: usize, max_surge: usize) -> Self {
        RolloutStrategy {
            min_available,
            max_surge,
        }
    }

    /// Checks the strategy against a pool of `size` members.
    pub fn check(&self, size: usize) -> Result<(), RolloutError> {
        let reason = if self.min_available == 0 {
            "min_available must be at least 1".to_string()
        } else if self.min_available > size {
            format!("min_available {} exceeds pool size {size}", self.min_available)
        } else if self.min_available == size && self.max_surge == 0 {
            format!("min_available equals pool size {size} but max_surge is 0")
        } else {
            return Ok(());
        };
        Err(RolloutError::InfeasibleStrategy(reason))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Step {
    /// Launch one instance of the target image and add it to the pool.
    Launch,
    /// Wait until every instance launched since the previous await is ready.
    AwaitReady,
    /// Remove the named instance from the pool and kill it.
    Kill { instance_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Launch,
    AwaitReady,
    Kill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutPlan {
    pub target_image: Digest,
    pub strategy: RolloutStrategy,
    pub steps: Vec<Step>,
}

impl RolloutPlan {
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Lowest ready count reached while executing the plan from a pool with
    /// `ready` ready members, assuming each await lasts until its launches are ready.
    pub fn projected_min_ready(&self, ready: usize) -> usize {
        let mut ready = ready as i64;
        let mut pending = 0;
        let mut min = ready;
        for step in &self.steps {
            match step {
                Step::Launch => pending += 1,
                Step::AwaitReady => {
                    ready += pending;
                    pending = 0;
                }
                Step::Kill { .. } => ready -= 1,
            }
            min = min.min(ready);
        }
        min.max(0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutEvent {
    pub ts: Timestamp,
    pub action: StepKind,
    pub instance_id: String,
    pub ready_count_after: usize,
    /// Set on events emitted while undoing a failed rollout.
    pub rollback: bool,
}

/// One JSON object per line.
pub fn events_to_jsonl(events: &[RolloutEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("events always serialize") + "\n")
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum RolloutError {
    #[error("infeasible strategy: {0}")]
    InfeasibleStrategy(String),
    #[error("a rollout is already running on this pool")]
    RolloutInProgress,
    #[error("plan is stale: instance {0} is not in the pool")]
    PlanStale(String),
    #[error("new instance did not start: {0}")]
    LaunchFailed(#[source] RuntimeError),
    #[error("rollback could not relaunch a replacement: {0}")]
    RollbackFailed(#[source] RuntimeError),
}

/// A failed rollout: the cause plus every event emitted, rollback included.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RolloutFailure {
    #[source]
    pub error: RolloutError,
    pub events: Vec<RolloutEvent>,
}

/// Builds a surge-then-drain plan replacing every member not already on `target`.
///
/// With `max_surge >= 1` each round launches up to `max_surge` instances,
/// waits for them, then kills as many old ones. With `max_surge == 0` each
/// round kills up to `size - min_available` old instances first and then
/// launches their replacements.
pub fn plan_rollout(
    pool: &ReplicaPool,
    target: &ImageManifest,
    strategy: RolloutStrategy,
) -> Result<RolloutPlan, RolloutError> {
    let members = pool.members();
    let old: Vec<String> = members
        .iter()
        .filter(|m| m.image_id() != &target.image_id)
        .map(|m| m.id().to_string())
        .collect();
    let mut plan = RolloutPlan {
        target_image: target.image_id.clone(),
        strategy,
        steps: Vec::new(),
    };
    if old.is_empty() {
        return Ok(plan);
    }
    strategy.check(members.len())?;

    let batch = if strategy.max_surge > 0 {
        strategy.max_surge
    } else {
        members.len() - strategy.min_available
    };
    for chunk in old.chunks(batch) {
        let kills = chunk.iter().map(|id| Step::Kill {
            instance_id: id.clone(),
        });
        let launches = std::iter::repeat_n(Step::Launch, chunk.len()).chain([Step::AwaitReady]);
        if strategy.max_surge > 0 {
            plan.steps.extend(launches);
            plan.steps.extend(kills);
        } else {
            plan.steps.extend(kills);
            plan.steps.extend(launches);
        }
    }
    debug_assert!(plan.projected_min_ready(members.len()) >= strategy.min_available);
    Ok(plan)
}

#[derive(Debug, Clone)]
enum Action {
    Launch(Digest),
    Await,
    Kill(String),
}

/// Result of one [`RolloutRun::poll`].
#[derive(Debug)]
pub enum RolloutPoll {
    /// Blocked on instances becoming ready; nothing can happen before `wake_at`.
    Pending { wake_at: Timestamp },
    Done(Vec<RolloutEvent>),
    Failed(RolloutFailure),
}

/// An in-flight rollout. Holds the pool's rollout lease until it finishes or is dropped.
#[derive(Debug)]
pub struct RolloutRun {
    pool: Arc<ReplicaPool>,
    lease: Option<RolloutLease>,
    actions: Vec<Action>,
    next: usize,
    launched: Vec<Arc<ContainerInstance>>,
    awaiting: Vec<Arc<ContainerInstance>>,
    killed: Vec<Arc<ContainerInstance>>,
    events: Vec<RolloutEvent>,
    failure: Option<RolloutError>,
}

impl RolloutRun {
    /// Takes the pool's rollout lease and checks that every instance the plan
    /// kills is still a member.
    pub fn start(plan: &RolloutPlan, pool: &Arc<ReplicaPool>) -> Result<Self, RolloutError> {
        let lease = pool.try_begin_rollout().ok_or(RolloutError::RolloutInProgress)?;
        let members = pool.members();
        let actions = plan
            .steps
            .iter()
            .map(|s| match s {
                Step::Launch => Ok(Action::Launch(plan.target_image.clone())),
                Step::AwaitReady => Ok(Action::Await),
                Step::Kill { instance_id } => {
                    if members.iter().any(|m| m.id() == instance_id) {
                        Ok(Action::Kill(instance_id.clone()))
                    } else {
                        Err(RolloutError::PlanStale(instance_id.clone()))
                    }
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(RolloutRun {
            pool: pool.clone(),
            lease: Some(lease),
            actions,
            next: 0,
            launched: Vec::new(),
            awaiting: Vec::new(),
            killed: Vec::new(),
            events: Vec::new(),
            failure: None,
        })
    }

    pub fn events(&self) -> &[RolloutEvent] {
        &self.events
    }

    pub fn is_rolling_back(&self) -> bool {
        self.failure.is_some()
    }

    fn emit(&mut self, runtime: &Runtime, action: StepKind, instance_id: &str) {
        self.events.push(RolloutEvent {
            ts: runtime.clock().now(),
            action,
            instance_id: instance_id.to_string(),
            ready_count_after: self.pool.ready_count(),
            rollback: self.failure.is_some(),
        });
    }

    /// Replaces the remaining actions with ones restoring the original image
    /// mix: relaunch what was killed, wait, then kill everything launched.
    fn begin_rollback(&mut self, cause: RolloutError) {
        let mut actions: Vec<Action> = self
            .killed
            .iter()
            .map(|k| Action::Launch(k.image_id().clone()))
            .collect();
        actions.push(Action::Await);
        actions.extend(self.launched.iter().map(|l| Action::Kill(l.id().to_string())));
        self.actions = actions;
        self.next = 0;
        self.failure = Some(cause);
    }

    /// Runs every step that can run at the runtime's current time.
    pub fn poll(&mut self, runtime: &Runtime) -> RolloutPoll {
        assert!(self.lease.is_some(), "poll called after the rollout finished");
        while self.next < self.actions.len() {
            match self.actions[self.next].clone() {
                Action::Launch(image) => match runtime.launch_image(&image) {
                    Ok(inst) => {
                        self.pool.add(inst.clone());
                        if self.failure.is_none() {
                            self.launched.push(inst.clone());
                        }
                        self.awaiting.push(inst.clone());
                        self.emit(runtime, StepKind::Launch, inst.id());
                    }
                    Err(e) if self.failure.is_none() => {
                        self.begin_rollback(RolloutError::LaunchFailed(e));
                        continue;
                    }
                    Err(e) => {
                        self.lease = None;
                        return RolloutPoll::Failed(RolloutFailure {
                            error: RolloutError::RollbackFailed(e),
                            events: std::mem::take(&mut self.events),
                        });
                    }
                },
                Action::Await => {
                    if let Some(wake_at) = self.awaiting.iter().filter(|i| !i.is_ready()).map(|i| i.ready_at()).max() {
                        return RolloutPoll::Pending { wake_at };
                    }
                    let mut ready = std::mem::take(&mut self.awaiting);
                    ready.sort_by_key(|i| i.ready_at());
                    for inst in ready {
                        self.emit(runtime, StepKind::AwaitReady, inst.id());
                    }
                }
                Action::Kill(id) => {
                    let Some(inst) = self.pool.remove(&id) else {
                        self.lease = None;
                        return RolloutPoll::Failed(RolloutFailure {
                            error: RolloutError::PlanStale(id),
                            events: std::mem::take(&mut self.events),
                        });
                    };
                    // Killing an instance someone else already killed is harmless here.
                    let _ = inst.kill();
                    self.emit(runtime, StepKind::Kill, &id);
                    if self.failure.is_none() {
                        self.killed.push(inst);
                    }
                }
            }
            self.next += 1;
        }
        self.lease = None;
        let events = std::mem::take(&mut self.events);
        match self.failure.take() {
            None => RolloutPoll::Done(events),
            Some(error) => RolloutPoll::Failed(RolloutFailure { error, events }),
        }
    }
}

/// Runs `plan` to completion, advancing the runtime's clock whenever the
/// rollout is waiting on startups.
pub fn execute_rollout(
    plan: &RolloutPlan,
    runtime: &Runtime,
    pool: &Arc<ReplicaPool>,
) -> Result<Vec<RolloutEvent>, RolloutFailure> {
    let mut run = RolloutRun::start(plan, pool).map_err(|error| RolloutFailure {
        error,
        events: Vec::new(),
    })?;
    loop {
        match run.poll(runtime) {
            RolloutPoll::Pending { wake_at } => {
                runtime.clock().advance_to(wake_at);
            }
            RolloutPoll::Done(events) => return Ok(events),
            RolloutPoll::Failed(f) => return Err(f),
        }
    }
}
