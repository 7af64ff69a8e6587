use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{ClusterSpec, LocalityClass, ServerId, TaskType};
use crate::policies::{
    bp_route_weighted, bp_schedule, jsq_route, jsqmw_schedule, pandas_schedule, PolicyConfig, PolicyKind,
    ScheduleDecision, SubQueueLens,
};
use crate::traffic::{ArrivalBatch, ArrivalSpec};

const MAX_LOGGED_VIOLATIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Task {
    pub id: u64,
    pub ty: TaskType,
    pub arrival: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkingStatus {
    Idle,
    /// Balanced-Pandas: serving the head of this own sub-queue.
    SubQueue(LocalityClass),
    /// Single-queue policies: serving a task pulled from this server's queue.
    Serving(ServerId),
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub status: WorkingStatus,
    pub in_service: Option<Task>,
    /// Class whose rate the current service runs at.
    pub service_class: LocalityClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Departure {
    pub server: ServerId,
    pub task: Task,
    /// Depart slot minus arrival slot plus one.
    pub completion: u64,
}

/// Realized quantities of one slot, indexed by 0-based server.
///
/// Balanced-Pandas uses all three sub-queue columns; single-queue policies
/// record arrivals in column 0 and split services on queue `n` by the
/// relation of the serving server to `n`. An idle server's wasted
/// opportunity is counted both as a service and as unused (remote column for
/// Balanced-Pandas, local column otherwise).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotLedger {
    pub slot: u64,
    pub arrivals: Vec<[u32; 3]>,
    pub services: Vec<[u32; 3]>,
    pub unused: Vec<u32>,
    pub departures: Vec<Departure>,
    pub truncated: bool,
}

impl SlotLedger {
    fn reset(&mut self, slot: u64, m: usize) {
        self.slot = slot;
        self.arrivals.clear();
        self.arrivals.resize(m, [0; 3]);
        self.services.clear();
        self.services.resize(m, [0; 3]);
        self.unused.clear();
        self.unused.resize(m, 0);
        self.departures.clear();
        self.truncated = false;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Counters {
    pub arrived: u64,
    pub departed: u64,
    pub truncations: u64,
    pub violations: u64,
    pub violation_log: Vec<String>,
}

/// Markov chain state plus the replication's rng.
pub struct SimState<'a> {
    cluster: &'a ClusterSpec,
    traffic: &'a ArrivalSpec,
    policy: PolicyConfig,
    t: u64,
    rng: ChaCha8Rng,
    next_id: u64,
    waiting: Vec<[VecDeque<Task>; 3]>,
    servers: Vec<ServerState>,
    /// Waiting plus in-service tasks per (sub)queue; routing reads these.
    lens: Vec<[usize; 3]>,
    /// Waiting counts of single queues; scheduling reads these.
    waiting_single: Vec<usize>,
    /// Routing lengths of single queues (waiting plus in service).
    single_lens: Vec<usize>,
    workload: Vec<f64>,
    prev_lens: Vec<[usize; 3]>,
    start_task: Vec<Option<u64>>,
    batch: ArrivalBatch,
    ledger: SlotLedger,
    counters: Counters,
    recording: bool,
    busy_slots: Vec<[u64; 3]>,
    scratch: Vec<[usize; 3]>,
}

impl<'a> SimState<'a> {
    pub fn new(cluster: &'a ClusterSpec, traffic: &'a ArrivalSpec, policy: PolicyConfig, seed: u64) -> Self {
        let m = cluster.num_servers();
        SimState {
            cluster,
            traffic,
            policy,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_id: 0,
            waiting: (0..m).map(|_| Default::default()).collect(),
            servers: vec![
                ServerState {
                    status: WorkingStatus::Idle,
                    in_service: None,
                    service_class: LocalityClass::Local,
                };
                m
            ],
            lens: vec![[0; 3]; m],
            waiting_single: vec![0; m],
            single_lens: vec![0; m],
            workload: vec![0.0; m],
            prev_lens: vec![[0; 3]; m],
            start_task: vec![None; m],
            batch: ArrivalBatch::default(),
            ledger: SlotLedger::default(),
            counters: Counters::default(),
            recording: false,
            busy_slots: vec![[0; 3]; m],
            scratch: Vec::with_capacity(m),
        }
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn policy(&self) -> &PolicyConfig {
        &self.policy
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn servers(&self) -> &[ServerState] {
        &self.servers
    }

    /// Queue lengths counting in-service tasks with their queue of origin.
    /// Single-queue policies use column 0 only.
    pub fn queue_lengths(&self) -> &[[usize; 3]] {
        &self.lens
    }

    pub fn single_queue_lengths(&self) -> &[usize] {
        &self.single_lens
    }

    pub fn workloads(&self) -> &[f64] {
        &self.workload
    }

    pub fn waiting_count(&self) -> usize {
        self.waiting.iter().flatten().map(VecDeque::len).sum()
    }

    pub fn in_service_count(&self) -> usize {
        self.servers.iter().filter(|s| s.in_service.is_some()).count()
    }

    pub fn in_system(&self) -> usize {
        self.waiting_count() + self.in_service_count()
    }

    /// Busy-slot counters are only advanced while recording.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn busy_slots(&self) -> &[[u64; 3]] {
        &self.busy_slots
    }

    pub fn ledger(&self) -> &SlotLedger {
        &self.ledger
    }

    fn violation(&mut self, msg: String) {
        self.counters.violations += 1;
        if self.counters.violation_log.len() < MAX_LOGGED_VIOLATIONS {
            self.counters.violation_log.push(format!("slot {}: {msg}", self.t));
        }
    }

    fn refresh_workload(&mut self, m: usize) {
        let r = &self.cluster.rates;
        let q = self.lens[m];
        self.workload[m] = match self.policy.kind {
            PolicyKind::BalancedPandas => q[0] as f64 / r.alpha + q[1] as f64 / r.beta + q[2] as f64 / r.gamma,
            _ => q[0] as f64 / r.alpha,
        };
    }

    /// Advances one slot: arrivals and routing, scheduling of idle servers in
    /// id order, one completion draw per busy server, then invariant checks.
    pub fn step(&mut self) -> &SlotLedger {
        let m_count = self.cluster.num_servers();
        self.ledger.reset(self.t, m_count);
        self.prev_lens.copy_from_slice(&self.lens);
        for (slot, s) in self.start_task.iter_mut().zip(&self.servers) {
            *slot = s.in_service.map(|t| t.id);
        }

        self.arrive();
        self.schedule();
        self.serve();
        self.check_invariants();
        self.t += 1;
        &self.ledger
    }

    fn arrive(&mut self) {
        self.traffic.sample_batch(&mut self.rng, &mut self.batch);
        if self.batch.truncated {
            self.counters.truncations += 1;
            self.ledger.truncated = true;
        }
        let tasks = std::mem::take(&mut self.batch.tasks);
        for &ty in &tasks {
            let task = Task { id: self.next_id, ty, arrival: self.t };
            self.next_id += 1;
            self.counters.arrived += 1;
            match self.policy.kind {
                PolicyKind::BalancedPandas => {
                    let d = bp_route_weighted(self.cluster, &self.workload, &ty, self.policy.tie_break, &mut self.rng);
                    let m = d.server.index();
                    let class = d.class.expect("sub-queue routing");
                    if self.cluster.locality_idx(&ty, m) != class {
                        self.violation(format!("task {ty} routed to {} as {class:?}", d.server));
                    }
                    let c = class.index();
                    self.waiting[m][c].push_back(task);
                    self.lens[m][c] += 1;
                    self.ledger.arrivals[m][c] += 1;
                    self.refresh_workload(m);
                }
                PolicyKind::JsqMaxWeight | PolicyKind::Pandas => {
                    let d = jsq_route(&self.single_lens, &ty, &mut self.rng);
                    let m = d.server.index();
                    self.waiting[m][0].push_back(task);
                    self.waiting_single[m] += 1;
                    self.single_lens[m] += 1;
                    self.lens[m][0] += 1;
                    self.ledger.arrivals[m][0] += 1;
                    self.refresh_workload(m);
                }
            }
        }
        self.batch.tasks = tasks;
    }

    fn schedule(&mut self) {
        for m in 0..self.cluster.num_servers() {
            if self.servers[m].status != WorkingStatus::Idle {
                continue;
            }
            let id = ServerId::from_index(m);
            let decision = match self.policy.kind {
                PolicyKind::BalancedPandas => {
                    let w = &self.waiting[m];
                    bp_schedule(SubQueueLens::new(w[0].len(), w[1].len(), w[2].len()))
                }
                PolicyKind::JsqMaxWeight => jsqmw_schedule(self.cluster, &self.waiting_single, id, &mut self.rng),
                PolicyKind::Pandas => {
                    pandas_schedule(self.cluster, &self.waiting_single, id, self.policy.pandas_threshold, &mut self.rng)
                }
            };
            match decision {
                ScheduleDecision::Idle => {}
                ScheduleDecision::SubQueue(class) => {
                    let task = self.waiting[m][class.index()].pop_front().expect("nonempty sub-queue");
                    let s = &mut self.servers[m];
                    s.status = WorkingStatus::SubQueue(class);
                    s.in_service = Some(task);
                    s.service_class = class;
                }
                ScheduleDecision::Queue(n) => {
                    let ni = n.index();
                    let task = self.waiting[ni][0].pop_front().expect("nonempty queue");
                    self.waiting_single[ni] -= 1;
                    let class = if self.policy.opportunistic_rates {
                        self.cluster.locality_idx(&task.ty, m)
                    } else {
                        self.cluster.relation_idx(m, ni)
                    };
                    let s = &mut self.servers[m];
                    s.status = WorkingStatus::Serving(n);
                    s.in_service = Some(task);
                    s.service_class = class;
                }
            }
        }
    }

    fn serve(&mut self) {
        let rates = self.cluster.rates;
        for m in 0..self.cluster.num_servers() {
            let status = self.servers[m].status;
            let (queue, col) = match status {
                WorkingStatus::Idle => {
                    let col = if self.policy.kind.has_subqueues() { 2 } else { 0 };
                    self.ledger.services[m][col] += 1;
                    self.ledger.unused[m] += 1;
                    continue;
                }
                WorkingStatus::SubQueue(c) => (m, c.index()),
                WorkingStatus::Serving(n) => (n.index(), self.cluster.relation_idx(m, n.index()).index()),
            };
            let class = self.servers[m].service_class;
            if self.recording {
                self.busy_slots[m][class.index()] += 1;
            }
            if self.rng.random::<f64>() >= rates.rate(class) {
                continue;
            }
            let task = self.servers[m].in_service.take().expect("busy server has a task");
            self.servers[m].status = WorkingStatus::Idle;
            self.ledger.services[queue][col] += 1;
            self.ledger.departures.push(Departure {
                server: ServerId::from_index(m),
                task,
                completion: self.t - task.arrival + 1,
            });
            self.counters.departed += 1;
            if self.policy.kind.has_subqueues() {
                self.lens[queue][col] -= 1;
            } else {
                self.lens[queue][0] -= 1;
                self.single_lens[queue] -= 1;
            }
            self.refresh_workload(queue);
        }
    }

    /// Recounts queue lengths from the task structures and checks them
    /// against the ledger and the structural invariants.
    fn check_invariants(&mut self) {
        let m_count = self.cluster.num_servers();
        let bp = self.policy.kind.has_subqueues();
        let mut actual = std::mem::take(&mut self.scratch);
        actual.clear();
        actual.resize(m_count, [0; 3]);
        for (m, w) in self.waiting.iter().enumerate() {
            for c in 0..3 {
                actual[m][c] = w[c].len();
            }
        }
        let mut problems = Vec::new();
        for (m, s) in self.servers.iter().enumerate() {
            match (s.status, &s.in_service) {
                (WorkingStatus::Idle, None) => {}
                (WorkingStatus::SubQueue(c), Some(task)) => {
                    actual[m][c.index()] += 1;
                    if self.cluster.locality_idx(&task.ty, m) != c {
                        problems.push(format!("server {} serves {} from the {c:?} sub-queue", m + 1, task.ty));
                    }
                }
                (WorkingStatus::Serving(n), Some(_)) => actual[n.index()][0] += 1,
                _ => problems.push(format!("server {} status and task disagree", m + 1)),
            }
        }
        if !bp {
            for (m, w) in self.waiting.iter().enumerate() {
                if !w[1].is_empty() || !w[2].is_empty() || w[0].len() != self.waiting_single[m] {
                    problems.push(format!("single queue {} bookkeeping", m + 1));
                }
            }
        }
        let phantom_col = if bp { 2 } else { 0 };
        for m in 0..m_count {
            if actual[m] != self.lens[m] {
                problems.push(format!("server {} tracked lengths {:?} != {:?}", m + 1, self.lens[m], actual[m]));
            }
            let l = &self.ledger;
            for c in 0..3 {
                let unused = if c == phantom_col { l.unused[m] } else { 0 };
                let served = if bp {
                    l.services[m][c] as i64
                } else if c == 0 {
                    l.services[m].iter().map(|&s| s as i64).sum()
                } else {
                    0
                };
                let expect = self.prev_lens[m][c] as i64 + l.arrivals[m][c] as i64 - served + unused as i64;
                if expect != actual[m][c] as i64 {
                    problems.push(format!(
                        "queue {} column {c}: ledger gives {expect}, state has {}",
                        m + 1,
                        actual[m][c]
                    ));
                }
            }
        }
        if bp {
            for m in 0..m_count {
                if self.ledger.unused[m] > 0 {
                    if self.prev_lens[m] != [0; 3] {
                        problems.push(format!("server {} unused service with nonzero workload", m + 1));
                    }
                    if actual[m] != [0; 3] {
                        problems.push(format!("server {} unused service with nonempty sub-queues", m + 1));
                    }
                }
            }
        } else {
            let inner: usize = (0..m_count).map(|m| self.prev_lens[m][0] * self.ledger.unused[m] as usize).sum();
            if inner >= m_count * m_count {
                problems.push(format!("<Q, U> = {inner} >= M^2"));
            }
        }
        for m in 0..m_count {
            if let Some(id) = self.start_task[m] {
                let finished = self.ledger.departures.iter().any(|d| d.server.index() == m && d.task.id == id);
                let kept = self.servers[m].in_service.map(|t| t.id) == Some(id);
                if !(finished || kept) {
                    problems.push(format!("server {} preempted task {id}", m + 1));
                }
            }
        }
        let in_system = (self.waiting_count() + self.in_service_count()) as u64;
        if self.counters.arrived != self.counters.departed + in_system {
            problems.push(format!(
                "conservation: arrived {} != departed {} + in system {in_system}",
                self.counters.arrived, self.counters.departed
            ));
        }
        self.scratch = actual;
        for p in problems {
            self.violation(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ServiceRates;
    use crate::policies::PolicyKind;

    fn cluster(alpha: f64) -> ClusterSpec {
        ClusterSpec::uniform(2, 2, ServiceRates::new(alpha, 0.9 * alpha, 0.5 * alpha).unwrap()).unwrap()
    }

    #[test]
    fn deterministic_local_service_takes_one_slot() {
        let c = cluster(1.0);
        let t = ArrivalSpec::custom(&c, vec![(vec![ServerId(1)], 1, 1.0)], 1.0).unwrap().with_max_batch(1);
        let mut s = SimState::new(&c, &t, PolicyConfig::new(PolicyKind::BalancedPandas), 3);
        let mut seen = 0;
        for _ in 0..200 {
            let l = s.step().clone();
            for d in &l.departures {
                assert_eq!(d.completion, 1);
                assert_eq!(d.server, ServerId(1));
                seen += 1;
            }
        }
        assert!(seen > 100);
        assert_eq!(s.counters().violations, 0, "{:?}", s.counters().violation_log);
    }

    #[test]
    fn empty_system_stays_empty() {
        let c = ClusterSpec::uniform(2, 3, cluster(1.0).rates).unwrap();
        let t = ArrivalSpec::scenario1(&c, 0.0).unwrap();
        for kind in PolicyKind::ALL {
            let mut s = SimState::new(&c, &t, PolicyConfig::new(kind), 1);
            for _ in 0..10 {
                let l = s.step();
                assert!(l.arrivals.iter().flatten().all(|&a| a == 0));
                assert!(l.departures.is_empty());
            }
            assert_eq!(s.in_system(), 0);
            assert_eq!(s.counters().violations, 0);
        }
    }

    #[test]
    fn all_policies_keep_invariants_under_load() {
        let c = ClusterSpec::uniform(3, 3, ServiceRates::new(0.9, 0.7, 0.4).unwrap()).unwrap();
        let t = ArrivalSpec::scenario2(&c, 0.5).unwrap();
        for kind in PolicyKind::ALL {
            for opportunistic in [false, true] {
                let mut p = PolicyConfig::new(kind);
                p.opportunistic_rates = opportunistic;
                p.pandas_threshold = opportunistic;
                let mut s = SimState::new(&c, &t, p, 9);
                for _ in 0..3000 {
                    s.step();
                }
                assert_eq!(s.counters().violations, 0, "{kind}: {:?}", s.counters().violation_log);
                assert!(s.counters().departed > 1000);
            }
        }
    }
}
