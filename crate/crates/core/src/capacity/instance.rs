//! Group-level view of a capacity problem.
//!
//! Servers with the same traffic-pool membership in racks of the same
//! composition are exchangeable, and so are task types that look alike up to
//! such permutations. Any feasible decomposition can be averaged over these
//! symmetries without raising the worst server load, so the LPs can be
//! written over groups and orbits instead of servers and types. The explicit
//! form is the degenerate case with one server per group and one type per
//! orbit.

use std::collections::BTreeMap;

use crate::cluster::{ClusterSpec, LocalityClass, ServerId, ServiceRates, TaskType};
use crate::error::{Error, Result};
use crate::traffic::{binomial, ArrivalSpec};

/// Exchangeable servers: same rack class, same pool membership.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerGroup {
    pub rack_group: usize,
    /// Members in each rack of the rack group.
    pub per_rack: usize,
    /// Server indices (0-based), ascending.
    pub members: Vec<usize>,
}

impl ServerGroup {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Racks with identical composition.
#[derive(Debug, Clone, PartialEq)]
pub struct RackGroup {
    pub racks: Vec<usize>,
    pub groups: Vec<usize>,
}

/// Task types equal up to exchanging servers within groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    /// Total arrival rate of all types in the orbit.
    pub rate: f64,
    /// Number of distinct types in the orbit.
    pub types: f64,
    pub representative: TaskType,
    /// Per group: how many of its servers are local, rack-local and remote
    /// to the representative.
    pub relation: Vec<[usize; 3]>,
    /// Rack groups holding a replica, ascending.
    pub replica_racks: Vec<usize>,
}

impl Orbit {
    /// Groups holding a replica.
    pub fn local_groups(&self) -> impl Iterator<Item = usize> + '_ {
        self.relation.iter().enumerate().filter(|(_, r)| r[0] > 0).map(|(s, _)| s)
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub rates: ServiceRates,
    pub groups: Vec<ServerGroup>,
    pub racks: Vec<RackGroup>,
    pub orbits: Vec<Orbit>,
    explicit: bool,
}

impl Instance {
    /// One group per server, one orbit per type, in the given order. Zero-rate
    /// types are kept so orbit indices line up with the caller's list.
    pub fn explicit(cluster: &ClusterSpec, types: &[(TaskType, f64)]) -> Result<Self> {
        let groups = (0..cluster.num_servers())
            .map(|m| ServerGroup { rack_group: cluster.rack_index(m), per_rack: 1, members: vec![m] })
            .collect();
        let racks = (0..cluster.num_racks())
            .map(|k| RackGroup { racks: vec![k], groups: cluster.rack_members(k).collect() })
            .collect();
        let mut orbits = Vec::with_capacity(types.len());
        for (t, rate) in types {
            cluster.check_type(t)?;
            if !(rate.is_finite() && *rate >= 0.0) {
                return Err(Error::config(format!("rate of type {t} must be finite and >= 0")));
            }
            let relation = (0..cluster.num_servers())
                .map(|m| {
                    let mut r = [0; 3];
                    r[cluster.locality_idx(t, m).index()] = 1;
                    r
                })
                .collect();
            let mut replica_racks: Vec<usize> = t.ids().iter().map(|&id| cluster.rack_index(id as usize - 1)).collect();
            replica_racks.dedup();
            orbits.push(Orbit { rate: *rate, types: 1.0, representative: *t, relation, replica_racks });
        }
        Ok(Instance { rates: cluster.rates, groups, racks, orbits, explicit: true })
    }

    /// Explicit instance from a rate map, in key order.
    pub fn from_rates(cluster: &ClusterSpec, rates: &BTreeMap<TaskType, f64>) -> Result<Self> {
        let types: Vec<(TaskType, f64)> = rates.iter().map(|(t, r)| (*t, *r)).collect();
        Self::explicit(cluster, &types)
    }

    /// Pooled instance at the traffic's current lambda.
    pub fn pooled(cluster: &ClusterSpec, traffic: &ArrivalSpec) -> Result<Self> {
        let pools = traffic.groups();
        if pools.len() > 64 {
            return Err(Error::Unsupported(format!("{} traffic groups exceed the pooling limit 64", pools.len())));
        }
        let n = cluster.num_servers();
        let mut membership = vec![0u64; n];
        for (g, pool) in pools.iter().enumerate() {
            for s in &pool.pool {
                cluster.check_server(*s)?;
                membership[s.index()] |= 1 << g;
            }
        }

        let mut rack_class: BTreeMap<Vec<(u64, usize)>, usize> = BTreeMap::new();
        let mut racks: Vec<RackGroup> = Vec::new();
        let mut rack_group_of = vec![0; cluster.num_racks()];
        for k in 0..cluster.num_racks() {
            let mut comp: BTreeMap<u64, usize> = BTreeMap::new();
            for m in cluster.rack_members(k) {
                *comp.entry(membership[m]).or_default() += 1;
            }
            let comp: Vec<(u64, usize)> = comp.into_iter().collect();
            let next = racks.len();
            let id = *rack_class.entry(comp).or_insert(next);
            if id == next {
                racks.push(RackGroup { racks: Vec::new(), groups: Vec::new() });
            }
            racks[id].racks.push(k);
            rack_group_of[k] = id;
        }

        let mut group_key: BTreeMap<(usize, u64), usize> = BTreeMap::new();
        let mut groups: Vec<ServerGroup> = Vec::new();
        let mut group_of = vec![0; n];
        for m in 0..n {
            let rg = rack_group_of[cluster.rack_index(m)];
            let next = groups.len();
            let id = *group_key.entry((rg, membership[m])).or_insert(next);
            if id == next {
                groups.push(ServerGroup { rack_group: rg, per_rack: 0, members: Vec::new() });
                racks[rg].groups.push(id);
            }
            groups[id].members.push(m);
            group_of[m] = id;
        }
        for g in &mut groups {
            let first_rack = cluster.rack_index(g.members[0]);
            g.per_rack = g.members.iter().filter(|&&m| cluster.rack_index(m) == first_rack).count();
        }

        let mut orbit_of: BTreeMap<Vec<(usize, Vec<(usize, usize)>)>, usize> = BTreeMap::new();
        let mut orbits: Vec<Orbit> = Vec::new();
        for (gi, pool) in pools.iter().enumerate() {
            let rate = traffic.group_rate(gi);
            if rate <= 0.0 {
                continue;
            }
            let per_type = rate / binomial(pool.pool.len(), pool.degree);
            // Slots: pool servers bucketed by (rack, group).
            let mut slots: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
            for s in &pool.pool {
                let m = s.index();
                slots.entry((cluster.rack_index(m), group_of[m])).or_default().push(m);
            }
            let slots: Vec<((usize, usize), Vec<usize>)> = slots.into_iter().collect();
            let mut take = vec![0usize; slots.len()];
            for_each_multiset(&slots, pool.degree, 0, &mut take, &mut |take| {
                let count: f64 = take.iter().zip(&slots).map(|(&k, s)| binomial(s.1.len(), k)).product();
                let mut by_rack: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
                let mut ids = Vec::with_capacity(pool.degree);
                for (&k, ((rack, grp), members)) in take.iter().zip(&slots) {
                    if k > 0 {
                        by_rack.entry(*rack).or_default().push((*grp, k));
                        ids.extend(members[..k].iter().map(|&m| ServerId::from_index(m)));
                    }
                }
                let mut sig: Vec<(usize, Vec<(usize, usize)>)> =
                    by_rack.iter().map(|(r, v)| (rack_group_of[*r], v.clone())).collect();
                sig.sort();
                let next = orbits.len();
                let id = *orbit_of.entry(sig).or_insert(next);
                if id == next {
                    let rep = TaskType::new(&ids).expect("pool servers are distinct");
                    let mut relation = vec![[0usize; 3]; groups.len()];
                    for (rack, v) in &by_rack {
                        for &(grp, k) in v {
                            relation[grp][0] += k;
                        }
                        let rg = rack_group_of[*rack];
                        for &grp in &racks[rg].groups {
                            let local_here = v.iter().find(|(g2, _)| *g2 == grp).map_or(0, |x| x.1);
                            relation[grp][1] += groups[grp].per_rack - local_here;
                        }
                    }
                    for (s, r) in relation.iter_mut().enumerate() {
                        r[2] = groups[s].size() - r[0] - r[1];
                    }
                    let mut replica_racks: Vec<usize> = by_rack.keys().map(|r| rack_group_of[*r]).collect();
                    replica_racks.sort_unstable();
                    replica_racks.dedup();
                    orbits.push(Orbit { rate: 0.0, types: 0.0, representative: rep, relation, replica_racks });
                }
                orbits[id].rate += per_type * count;
                orbits[id].types += count;
            });
        }
        Ok(Instance { rates: cluster.rates, groups, racks, orbits, explicit: false })
    }

    pub fn is_explicit(&self) -> bool {
        self.explicit
    }

    pub fn total_rate(&self) -> f64 {
        self.orbits.iter().map(|o| o.rate).sum()
    }

    pub fn num_servers(&self) -> usize {
        self.groups.iter().map(|g| g.size()).sum()
    }

    pub fn mu(&self, class: usize) -> f64 {
        self.rates.as_array()[class]
    }

    /// Same instance with every rate multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        for o in &mut out.orbits {
            o.rate *= t;
        }
        out
    }

    /// Per-server values from per-group ones.
    pub fn expand<T: Copy + Default>(&self, per_group: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); self.num_servers()];
        for (g, v) in self.groups.iter().zip(per_group) {
            for &m in &g.members {
                out[m] = *v;
            }
        }
        out
    }

    /// Per-rack values from per-rack-group ones.
    pub fn expand_racks<T: Copy + Default>(&self, per_rack_group: &[T]) -> Vec<T> {
        let n = self.racks.iter().flat_map(|r| &r.racks).max().map_or(0, |k| k + 1);
        let mut out = vec![T::default(); n];
        for (rg, v) in self.racks.iter().zip(per_rack_group) {
            for &k in &rg.racks {
                out[k] = *v;
            }
        }
        out
    }

    pub(crate) fn class_of(c: usize) -> LocalityClass {
        LocalityClass::ALL[c]
    }
}

fn for_each_multiset<T>(
    slots: &[(T, Vec<usize>)],
    left: usize,
    i: usize,
    take: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    if left == 0 {
        f(take);
        return;
    }
    if i == slots.len() {
        return;
    }
    let cap = slots[i].1.len().min(left);
    for k in (0..=cap).rev() {
        take[i] = k;
        for_each_multiset(slots, left - k, i + 1, take, f);
    }
    take[i] = 0;
}
