//! Rack topology, task types and locality classes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based server id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ServerId(pub u32);

impl ServerId {
    /// 0-based position, for indexing per-server vectors.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_index(idx: usize) -> Self {
        ServerId(idx as u32 + 1)
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// 1-based rack id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RackId(pub u32);

impl RackId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for RackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LocalityClass {
    Local,
    RackLocal,
    Remote,
}

impl LocalityClass {
    pub const ALL: [LocalityClass; 3] = [Self::Local, Self::RackLocal, Self::Remote];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-slot completion probabilities for local, rack-local and remote service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceRates {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ServiceRates {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let r = ServiceRates { alpha, beta, gamma };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let ServiceRates { alpha, beta, gamma } = *self;
        if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::config("rates must be finite"));
        }
        if !(alpha > beta && beta > gamma && gamma > 0.0) {
            return Err(Error::config("rates must satisfy alpha > beta > gamma > 0"));
        }
        if alpha > 1.0 {
            return Err(Error::config("rates are per-slot probabilities and must be <= 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn rate(&self, class: LocalityClass) -> f64 {
        match class {
            LocalityClass::Local => self.alpha,
            LocalityClass::RackLocal => self.beta,
            LocalityClass::Remote => self.gamma,
        }
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// Regime in which the rack-level refinement is valid.
    pub fn rack_refinement_supported(&self) -> bool {
        self.beta * self.beta > self.alpha * self.gamma
    }
}

/// Canonical (sorted, distinct) set of 1 to 3 servers storing a task's data.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskType {
    ids: [u32; 3],
    len: u8,
}

impl TaskType {
    pub const MAX_REPLICAS: usize = 3;

    pub fn new(locals: &[ServerId]) -> Result<Self> {
        if locals.is_empty() || locals.len() > Self::MAX_REPLICAS {
            return Err(Error::config(format!("task type needs 1..=3 servers, got {}", locals.len())));
        }
        let mut ids = [u32::MAX; 3];
        for (slot, s) in ids.iter_mut().zip(locals) {
            if s.0 == 0 {
                return Err(Error::config("server ids are 1-based"));
            }
            *slot = s.0;
        }
        let len = locals.len();
        ids[..len].sort_unstable();
        if ids[..len].windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("task type servers must be distinct"));
        }
        Ok(TaskType { ids, len: len as u8 })
    }

    /// Sorts the first `len` ids, which the caller guarantees are distinct,
    /// nonzero and at most three.
    pub(crate) fn from_distinct(mut ids: [u32; 3], len: usize) -> Self {
        debug_assert!((1..=3).contains(&len));
        ids[..len].sort_unstable();
        ids[len..].fill(u32::MAX);
        TaskType { ids, len: len as u8 }
    }

    pub fn from_ids(ids: &[u32]) -> Result<Self> {
        let v: Vec<ServerId> = ids.iter().map(|&i| ServerId(i)).collect();
        Self::new(&v)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn ids(&self) -> &[u32] {
        &self.ids[..self.len as usize]
    }

    pub fn locals(&self) -> impl Iterator<Item = ServerId> + '_ {
        self.ids().iter().map(|&i| ServerId(i))
    }

    #[inline]
    pub fn contains(&self, m: ServerId) -> bool {
        self.ids().contains(&m.0)
    }
}

impl fmt::Debug for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, id) in self.ids().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{id}")?;
        }
        write!(f, "}}")
    }
}

impl Serialize for TaskType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.ids().serialize(s)
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Static topology. Servers are numbered rack by rack.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    rack_sizes: Vec<usize>,
    rack_of: Vec<u32>,
    rack_start: Vec<usize>,
    pub rates: ServiceRates,
}

impl ClusterSpec {
    pub fn new(rack_sizes: Vec<usize>, rates: ServiceRates) -> Result<Self> {
        rates.validate()?;
        if rack_sizes.is_empty() {
            return Err(Error::config("cluster needs at least one rack"));
        }
        if rack_sizes.contains(&0) {
            return Err(Error::config("every rack needs at least one server"));
        }
        let mut rack_of = Vec::with_capacity(rack_sizes.iter().sum());
        let mut rack_start = Vec::with_capacity(rack_sizes.len());
        for (k, &n) in rack_sizes.iter().enumerate() {
            rack_start.push(rack_of.len());
            rack_of.extend(std::iter::repeat_n(k as u32 + 1, n));
        }
        Ok(ClusterSpec { rack_sizes, rack_of, rack_start, rates })
    }

    pub fn uniform(num_racks: usize, servers_per_rack: usize, rates: ServiceRates) -> Result<Self> {
        Self::new(vec![servers_per_rack; num_racks], rates)
    }

    #[inline]
    pub fn num_servers(&self) -> usize {
        self.rack_of.len()
    }

    #[inline]
    pub fn num_racks(&self) -> usize {
        self.rack_sizes.len()
    }

    pub fn rack_sizes(&self) -> &[usize] {
        &self.rack_sizes
    }

    pub fn servers(&self) -> impl Iterator<Item = ServerId> {
        (1..=self.num_servers() as u32).map(ServerId)
    }

    pub fn check_server(&self, m: ServerId) -> Result<()> {
        if m.0 == 0 || m.index() >= self.num_servers() {
            return Err(Error::ServerOutOfRange { id: m.0, max: self.num_servers() });
        }
        Ok(())
    }

    pub fn check_type(&self, t: &TaskType) -> Result<()> {
        t.locals().try_for_each(|m| self.check_server(m))
    }

    pub fn rack_of(&self, m: ServerId) -> Result<RackId> {
        self.check_server(m)?;
        Ok(RackId(self.rack_of[m.index()]))
    }

    /// Unchecked 0-based rack index of a 0-based server index.
    #[inline]
    pub fn rack_index(&self, server_idx: usize) -> usize {
        self.rack_of[server_idx] as usize - 1
    }

    /// 0-based server indices of a 0-based rack.
    pub fn rack_members(&self, rack_idx: usize) -> std::ops::Range<usize> {
        let start = self.rack_start[rack_idx];
        start..start + self.rack_sizes[rack_idx]
    }

    pub fn servers_in_rack(&self, k: RackId) -> Result<Vec<ServerId>> {
        if k.0 == 0 || k.index() >= self.num_racks() {
            return Err(Error::RackOutOfRange { id: k.0, max: self.num_racks() });
        }
        Ok(self.rack_members(k.index()).map(ServerId::from_index).collect())
    }

    pub fn locality(&self, t: &TaskType, m: ServerId) -> Result<LocalityClass> {
        self.check_type(t)?;
        self.check_server(m)?;
        Ok(self.locality_idx(t, m.index()))
    }

    /// Unchecked locality for a 0-based server index.
    #[inline]
    pub fn locality_idx(&self, t: &TaskType, server_idx: usize) -> LocalityClass {
        let id = server_idx as u32 + 1;
        let ids = t.ids();
        if ids.contains(&id) {
            return LocalityClass::Local;
        }
        let rack = self.rack_of[server_idx];
        if ids.iter().any(|&n| self.rack_of[n as usize - 1] == rack) {
            LocalityClass::RackLocal
        } else {
            LocalityClass::Remote
        }
    }

    /// Relation of server `m` to the home server `n` of a single queue.
    #[inline]
    pub fn relation_idx(&self, m: usize, n: usize) -> LocalityClass {
        if m == n {
            LocalityClass::Local
        } else if self.rack_of[m] == self.rack_of[n] {
            LocalityClass::RackLocal
        } else {
            LocalityClass::Remote
        }
    }

    #[inline]
    pub fn service_rate(&self, class: LocalityClass) -> f64 {
        self.rates.rate(class)
    }
}
