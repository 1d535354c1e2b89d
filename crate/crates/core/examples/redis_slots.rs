//! Slot ownership as masters leave and join.

use fragsim::dbmodels::{key_slot, SlotMap};
use fragsim::topology::NodeId;

fn print(map: &SlotMap) {
    for r in map.ranges() {
        println!("  {:>5}-{:<5} {}", r.start, r.end, r.owner);
    }
}

fn main() {
    let mut members: Vec<NodeId> = (0..3).map(NodeId).collect();
    let mut map = SlotMap::initial(&members);
    println!("three masters");
    print(&map);
    println!("user1000 hashes to slot {}", key_slot(b"user1000"));

    members.push(NodeId(3));
    let moves = map.rebalance(&members);
    println!("add {}: {} slots move", NodeId(3), moves.len());
    print(&map);

    let moves = map.reshard_all(NodeId(0), NodeId(1));
    members.retain(|n| *n != NodeId(0));
    let more = map.rebalance(&members);
    println!("remove {}: {} + {} slots move", NodeId(0), moves.len(), more.len());
    print(&map);
    println!("counts {:?}", map.counts());
}
