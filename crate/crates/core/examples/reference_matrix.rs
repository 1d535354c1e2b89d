//! Prints the built-in region matrix and the topology built from it.

use fragsim::topology::{builtin_reference_matrix, reference_topology};

fn main() {
    let m = builtin_reference_matrix();
    print!("{:>10}", "");
    for r in &m.regions {
        print!("{r:>10}");
    }
    println!();
    for (i, r) in m.regions.iter().enumerate() {
        print!("{r:>10}");
        for j in 0..m.regions.len() {
            print!("{:>10}", if i == j { "-".to_string() } else { format!("{:.0}ms", m.latency_ms[i][j]) });
        }
        println!();
    }
    println!("{} distinct pairs", m.pairs().count());

    let topo = reference_topology();
    println!("\n{} nodes, {} links", topo.nodes().len(), topo.links().len());
    for l in topo.links().iter().take(5) {
        println!(
            "  {} {}<->{} {:.0}ms down {:.0}Mb/s up {:.0}Mb/s",
            l.name,
            topo.node_name(l.a),
            topo.node_name(l.b),
            l.base_latency_ms,
            l.down_bw_mbps,
            l.up_bw_mbps
        );
    }
}
