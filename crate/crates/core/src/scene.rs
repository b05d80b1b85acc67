//! Read-only snapshot of the road with per-lane ordering, used for neighbor
//! lookups by the driver model, rewards and observations.

use crate::road::RoadNetwork;
use crate::vehicle::Vehicle;

pub struct Scene<'a> {
    pub net: &'a RoadNetwork,
    pub vehicles: &'a [Vehicle],
    /// Per lane (index 0 = acceleration lane), vehicle indices sorted by
    /// `(x, id)`. Maneuvering vehicles appear in both lanes they straddle.
    lanes: Vec<Vec<usize>>,
}

impl<'a> Scene<'a> {
    pub fn new(net: &'a RoadNetwork, vehicles: &'a [Vehicle]) -> Self {
        let mut lanes = vec![Vec::new(); net.lane_count() as usize + 1];
        for (i, v) in vehicles.iter().enumerate() {
            for l in v.occupied_lanes() {
                if let Some(bucket) = lanes.get_mut(l as usize) {
                    bucket.push(i);
                }
            }
        }
        for bucket in &mut lanes {
            bucket.sort_by(|&a, &b| {
                let (va, vb) = (&vehicles[a], &vehicles[b]);
                va.x.total_cmp(&vb.x).then(va.id.cmp(&vb.id))
            });
        }
        Self { net, vehicles, lanes }
    }

    pub fn lane_members(&self, lane: u8) -> &[usize] {
        self.lanes.get(lane as usize).map_or(&[], |v| v.as_slice())
    }

    /// Nearest vehicle ahead of position `(x, id)` in `lane`, ignoring `id`.
    pub fn leader_at(&self, lane: u8, x: f64, id: u64) -> Option<usize> {
        let members = self.lane_members(lane);
        let start = members.partition_point(|&i| {
            let v = &self.vehicles[i];
            v.x.total_cmp(&x).then(v.id.cmp(&id)).is_le()
        });
        members[start..].iter().copied().find(|&i| self.vehicles[i].id != id)
    }

    /// Nearest vehicle behind position `(x, id)` in `lane`, ignoring `id`.
    pub fn follower_at(&self, lane: u8, x: f64, id: u64) -> Option<usize> {
        let members = self.lane_members(lane);
        let end = members.partition_point(|&i| {
            let v = &self.vehicles[i];
            v.x.total_cmp(&x).then(v.id.cmp(&id)).is_lt()
        });
        members[..end].iter().rev().copied().find(|&i| self.vehicles[i].id != id)
    }

    pub fn leader(&self, ego: usize, lane: u8) -> Option<usize> {
        let v = &self.vehicles[ego];
        self.leader_at(lane, v.x, v.id)
    }

    pub fn follower(&self, ego: usize, lane: u8) -> Option<usize> {
        let v = &self.vehicles[ego];
        self.follower_at(lane, v.x, v.id)
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.vehicles.iter().position(|v| v.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::{Entry, Exit, RoadLayout, Route};
    use crate::vehicle::VehicleKind;

    #[test]
    fn leader_and_follower_lookup() {
        let net = RoadNetwork::from_layout(&RoadLayout::default()).unwrap();
        let r = Route::new(Entry::Mainline, Exit::HighwayEnd);
        let mk = |id, x, lane| Vehicle::new(id, VehicleKind::Chv, x, lane, 20.0, 30.0, r, &net);
        let vs = vec![mk(1, 100.0, 2), mk(2, 150.0, 2), mk(3, 50.0, 2), mk(4, 120.0, 3)];
        let s = Scene::new(&net, &vs);
        assert_eq!(s.leader(0, 2), Some(1));
        assert_eq!(s.follower(0, 2), Some(2));
        assert_eq!(s.leader(1, 2), None);
        assert_eq!(s.leader(0, 3), Some(3));
        assert_eq!(s.follower(0, 3), None);
        assert_eq!(s.leader(0, 1), None);
    }
}
