//! Protocol 2 with the demo's four sensors in two groups.

use phekf::harness::cli::demo_scenario;
use phekf::harness::metrics::{Role, RunMetrics};
use phekf::protocol2::run_protocol2;

fn main() {
    let mut scenario = demo_scenario();
    scenario.key_bits = 1024;
    scenario.steps = 20;
    println!("groups: {:?}", scenario.groups_or_singletons());

    let run = run_protocol2(&scenario).unwrap();
    let m = RunMetrics::compute(&run);
    for (k, (est, truth)) in run.estimates.iter().zip(1..).map(|(e, k)| (e, run.truth_at(k))).enumerate().step_by(5) {
        let truth = truth.map(|t| format!("{:.4?}", &t.as_slice()[..3])).unwrap_or_default();
        println!("step {:>2}: position {:.4?}, true {truth}", k + 1, &est.x.as_slice()[..3]);
    }
    println!(
        "mean ms per step: group {:.1}, aggregator {:.1}, query {:.1}",
        m.role(Role::Sensor),
        m.role(Role::Aggregator),
        m.role(Role::Query)
    );
    println!("{} messages, {} bytes", m.messages, m.bytes);
}
