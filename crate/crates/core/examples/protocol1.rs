//! Protocol 1 on the bundled demo, with reports written to `out/protocol1`.

use std::path::Path;

use phekf::harness::cli::demo_scenario;
use phekf::harness::metrics::RunMetrics;
use phekf::harness::report::emit_reports;
use phekf::protocol1::run_protocol1;

fn main() {
    let mut scenario = demo_scenario();
    scenario.key_bits = 1024;
    scenario.steps = 20;

    let run = run_protocol1(&scenario).unwrap();
    let metrics = RunMetrics::compute(&run);
    let out = Path::new("out/protocol1");
    for file in emit_reports(&run, &metrics, out).unwrap() {
        println!("wrote {}", file.display());
    }
    let last = run.estimates.last().unwrap();
    println!("final estimate {:.4?}", last.x.as_slice());
    println!("max gap to the plaintext filter {:.2e}", run.max_reference_deviation());
    print!("{}", std::fs::read_to_string(out.join("timing.txt")).unwrap());
}
