//! Regenerates the bundled nine-machine benchmark files under `data/`.
//!
//! Run from the workspace root:
//! `cargo run -p gridcoh --example regen_bench_data`

use std::fmt::Write as _;

use gridcoh::swingsim::{FaultEvent, SwingSystem};

fn main() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    std::fs::create_dir_all(&root).expect("data dir");

    let sys = SwingSystem::nine_machine_three_groups();
    let mut system_json = sys.to_json_string();
    system_json.push('\n');
    std::fs::write(root.join("nine_machine_three_groups.json"), system_json).unwrap();

    let faults: Vec<FaultEvent> = [(2usize, 3usize), (5, 6), (8, 0)]
        .iter()
        .map(|&(i, j)| FaultEvent {
            t_start: 10.0,
            t_end: 10.3,
            i,
            j,
            scale: 0.0,
        })
        .collect();
    let mut faults_json = serde_json::to_string_pretty(&faults).unwrap();
    faults_json.push('\n');
    std::fs::write(root.join("nine_machine_faults.json"), faults_json).unwrap();

    // Topology: complete triangles inside each group plus the tie ring.
    let mut topo = String::from("bus_a,bus_b,line_id\n");
    for grp in 0..3 {
        let base = grp * 3 + 1;
        let _ = writeln!(topo, "g{},g{},L{}-{}", base, base + 1, base, base + 1);
        let _ = writeln!(topo, "g{},g{},L{}-{}", base + 1, base + 2, base + 1, base + 2);
        let _ = writeln!(topo, "g{},g{},L{}-{}", base, base + 2, base, base + 2);
    }
    topo.push_str("g3,g4,T1\ng6,g7,T2\ng9,g1,T3\n");
    std::fs::write(root.join("nine_machine_topology.csv"), topo).unwrap();

    println!("regenerated bundled benchmark files in {}", root.display());
}
