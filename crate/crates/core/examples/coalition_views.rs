//! What a coalition sees, what a simulator can fake, and a scan for leaks.

use phekf::harness::scenario::Scenario;
use phekf::privacy::coalition::CoalitionSpec;
use phekf::privacy::scan::scan_view;
use phekf::privacy::view::{extract_view, simulate_view, PublicInfo};
use phekf::protocol2::run_protocol2;

fn main() {
    let run = run_protocol2(&Scenario::constant_velocity(4, Some(2), 3, 512)).unwrap();
    let info = PublicInfo::from_run(&run);
    for spec in ["kind=sensor,members=1", "kind=cloud,members=2", "kind=query,members=1"] {
        let coalition = CoalitionSpec::parse(spec).unwrap();
        let real = extract_view(&run, &coalition).unwrap();
        let fake = simulate_view(&real, &info, 9).unwrap();
        println!(
            "{spec}: {} entries, simulated shape matches: {}, leaks: {}",
            real.entries().count(),
            real.shapes() == fake.shapes(),
            scan_view(&real).len()
        );
    }
}
