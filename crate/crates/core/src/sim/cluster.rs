//! Cluster hardware description and GPU slot placement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Machines, GPUs and the rates the simulator charges work against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub machines: usize,
    pub gpus_per_machine: usize,
    /// Effective sustained FLOP/s of one GPU.
    pub gpu_flops_per_sec: f64,
    /// Host/device copy rate of one GPU.
    pub memcopy_bytes_per_sec: f64,
    /// Per-machine NIC rate, each direction.
    pub link_bytes_per_sec: f64,
    /// Rate of a machine-local transfer path.
    pub intra_machine_bytes_per_sec: f64,
}

/// Effective device rate of the default cluster. Calibrated so the average
/// baseline communication share over the eight catalog models at 16 GPUs
/// sits near 53%.
pub const DEFAULT_GPU_FLOPS: f64 = 10.0e12;
/// PCIe 3.0 x16, practical.
pub const DEFAULT_MEMCOPY: f64 = 12.0e9;
/// 56 Gbit/s.
pub const DEFAULT_LINK: f64 = 7.0e9;
pub const DEFAULT_INTRA: f64 = 1.0e12;

impl Default for ClusterSpec {
    /// 8 machines with 4 GPUs each on a 56 Gbit/s network.
    fn default() -> Self {
        ClusterSpec {
            machines: 8,
            gpus_per_machine: 4,
            gpu_flops_per_sec: DEFAULT_GPU_FLOPS,
            memcopy_bytes_per_sec: DEFAULT_MEMCOPY,
            link_bytes_per_sec: DEFAULT_LINK,
            intra_machine_bytes_per_sec: DEFAULT_INTRA,
        }
    }
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.machines == 0 {
            return Err(SimError::InvalidCluster("machine count must be at least 1".into()));
        }
        if self.gpus_per_machine == 0 {
            return Err(SimError::InvalidCluster("gpus_per_machine must be at least 1".into()));
        }
        for (name, value) in [
            ("gpu_flops_per_sec", self.gpu_flops_per_sec),
            ("memcopy_bytes_per_sec", self.memcopy_bytes_per_sec),
            ("link_bytes_per_sec", self.link_bytes_per_sec),
            ("intra_machine_bytes_per_sec", self.intra_machine_bytes_per_sec),
        ] {
            // NaN fails this comparison too.
            if !(value > 0.0) {
                return Err(SimError::ZeroRate { resource: name.into(), value });
            }
        }
        Ok(())
    }

    pub fn total_gpus(&self) -> usize {
        self.machines * self.gpus_per_machine
    }

    pub(crate) fn gpu_index(&self, slot: Slot) -> usize {
        slot.machine * self.gpus_per_machine + slot.gpu
    }
}

/// One GPU: `machine.gpu`, both 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub machine: usize,
    pub gpu: usize,
}

impl Slot {
    pub fn new(machine: usize, gpu: usize) -> Self {
        Slot { machine, gpu }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.machine, self.gpu)
    }
}

impl FromStr for Slot {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (m, g) = s
            .split_once('.')
            .ok_or_else(|| format!("slot `{s}` must look like MACHINE.GPU"))?;
        let parse = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| format!("slot `{s}` must look like MACHINE.GPU"))
        };
        Ok(Slot::new(parse(m)?, parse(g)?))
    }
}

/// GPU slots of one job: worker `i` runs on `workers[i]`, PS `j` on `ps[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub workers: Vec<Slot>,
    pub ps: Vec<Slot>,
}

impl Placement {
    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        self.workers.iter().chain(self.ps.iter()).copied()
    }
}

/// How jobs without explicit slots are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementPolicy {
    /// Each task goes to a machine this job uses least, then the one with
    /// the most free GPUs, then the lowest index.
    #[default]
    Spread,
    /// Fill machines in index order.
    Packed,
}

impl FromStr for PlacementPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spread" => Ok(PlacementPolicy::Spread),
            "packed" => Ok(PlacementPolicy::Packed),
            other => Err(format!("unknown placement policy `{other}` (expected spread or packed)")),
        }
    }
}

/// Tracks which GPUs are taken while jobs are placed one after another.
#[derive(Debug, Clone)]
pub struct SlotMap {
    cluster: ClusterSpec,
    taken: Vec<bool>,
}

impl SlotMap {
    pub fn new(cluster: &ClusterSpec) -> Self {
        SlotMap {
            cluster: *cluster,
            taken: vec![false; cluster.total_gpus()],
        }
    }

    pub fn free_gpus(&self) -> usize {
        self.taken.iter().filter(|t| !**t).count()
    }

    fn free_on(&self, machine: usize) -> usize {
        let g = self.cluster.gpus_per_machine;
        self.taken[machine * g..(machine + 1) * g]
            .iter()
            .filter(|t| !**t)
            .count()
    }

    /// Marks explicit slots as taken, rejecting out-of-range or reused ones.
    pub fn claim(&mut self, slots: impl IntoIterator<Item = Slot>) -> Result<(), SimError> {
        for slot in slots {
            if slot.machine >= self.cluster.machines || slot.gpu >= self.cluster.gpus_per_machine
            {
                return Err(SimError::SlotOutOfRange {
                    slot: slot.to_string(),
                    machines: self.cluster.machines,
                    gpus_per_machine: self.cluster.gpus_per_machine,
                });
            }
            let idx = self.cluster.gpu_index(slot);
            if self.taken[idx] {
                return Err(SimError::SlotConflict(slot.to_string()));
            }
            self.taken[idx] = true;
        }
        Ok(())
    }

    /// Places `workers` then `ps` tasks with `policy` and claims the slots.
    pub fn place(
        &mut self,
        workers: usize,
        ps: usize,
        policy: PlacementPolicy,
    ) -> Result<Placement, SimError> {
        let needed = workers + ps;
        if needed > self.free_gpus() {
            return Err(SimError::PlacementOverflow {
                needed,
                available: self.free_gpus(),
            });
        }
        let mut uses = vec![0usize; self.cluster.machines];
        let mut slots = Vec::with_capacity(needed);
        for _ in 0..needed {
            let machine = (0..self.cluster.machines)
                .filter(|&m| self.free_on(m) > 0)
                .min_by_key(|&m| match policy {
                    PlacementPolicy::Spread => {
                        (uses[m], self.cluster.gpus_per_machine - self.free_on(m), m)
                    }
                    PlacementPolicy::Packed => (0, 0, m),
                })
                .expect("capacity checked");
            let g = self.cluster.gpus_per_machine;
            let gpu = (0..g)
                .find(|&i| !self.taken[machine * g + i])
                .expect("machine has a free gpu");
            self.taken[machine * g + gpu] = true;
            uses[machine] += 1;
            slots.push(Slot::new(machine, gpu));
        }
        let ps_slots = slots.split_off(workers);
        Ok(Placement {
            workers: slots,
            ps: ps_slots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cluster_is_valid() {
        let c = ClusterSpec::default();
        c.validate().unwrap();
        assert_eq!(c.total_gpus(), 32);
    }

    #[test]
    fn rejects_zero_and_nan_rates() {
        let mut c = ClusterSpec::default();
        c.link_bytes_per_sec = 0.0;
        assert!(matches!(c.validate(), Err(SimError::ZeroRate { .. })));
        c.link_bytes_per_sec = f64::NAN;
        assert!(c.validate().is_err());
        c.link_bytes_per_sec = f64::INFINITY;
        c.validate().unwrap();
        c.gpus_per_machine = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn slot_parsing() {
        assert_eq!("3.1".parse::<Slot>().unwrap(), Slot::new(3, 1));
        assert!("3".parse::<Slot>().is_err());
        assert!("a.1".parse::<Slot>().is_err());
    }

    #[test]
    fn spread_puts_one_worker_and_one_ps_per_machine() {
        let mut map = SlotMap::new(&ClusterSpec::default());
        let p = map.place(8, 8, PlacementPolicy::Spread).unwrap();
        for m in 0..8 {
            assert_eq!(p.workers[m].machine, m);
            assert_eq!(p.ps[m].machine, m);
        }
    }

    #[test]
    fn spread_fills_remaining_machines_for_the_ps() {
        let mut map = SlotMap::new(&ClusterSpec::default());
        let p = map.place(15, 1, PlacementPolicy::Spread).unwrap();
        assert_eq!(p.ps[0].machine, 7);
        let on_seven = p.workers.iter().filter(|s| s.machine == 7).count();
        assert_eq!(on_seven, 1);
    }

    #[test]
    fn consolidated_small_jobs_stack_their_ps() {
        let mut map = SlotMap::new(&ClusterSpec::default());
        let ps: Vec<usize> = (0..8)
            .map(|_| map.place(3, 1, PlacementPolicy::Spread).unwrap().ps[0].machine)
            .collect();
        assert_eq!(ps, vec![3, 7, 3, 7, 3, 7, 3, 7]);
        assert_eq!(map.free_gpus(), 0);
        assert!(matches!(
            map.place(1, 0, PlacementPolicy::Spread),
            Err(SimError::PlacementOverflow { needed: 1, available: 0 })
        ));
    }

    #[test]
    fn packed_fills_in_order() {
        let mut map = SlotMap::new(&ClusterSpec::default());
        let p = map.place(5, 1, PlacementPolicy::Packed).unwrap();
        assert_eq!(p.workers[4], Slot::new(1, 0));
        assert_eq!(p.ps[0], Slot::new(1, 1));
    }

    #[test]
    fn claim_detects_conflicts() {
        let mut map = SlotMap::new(&ClusterSpec::default());
        map.claim([Slot::new(0, 0)]).unwrap();
        assert!(matches!(map.claim([Slot::new(0, 0)]), Err(SimError::SlotConflict(_))));
        assert!(matches!(map.claim([Slot::new(8, 0)]), Err(SimError::SlotOutOfRange { .. })));
    }
}
