//! A query node colluding with some sensors tries to solve for the others' readings.

use phekf::harness::generate::{random_scenario, Shape};
use phekf::privacy::attack::{attack_protocol1_query_coalition, check_theorem_conditions};
use phekf::privacy::coalition::CoalitionSpec;
use phekf::protocol1::run_protocol1;
use phekf::run::ProtocolKind;

fn main() {
    // n = 6, p = 3: one outside sensor is exposed, three are not.
    for outside in [1, 3] {
        let scenario = random_scenario(
            Shape {
                n: 6,
                p: 3,
                sensors: 2 + outside,
                groups: None,
                steps: 3,
                key_bits: 512,
            },
            11,
        );
        let run = run_protocol1(&scenario).unwrap();
        let coalition = CoalitionSpec::parse("kind=query,members=1,2").unwrap();
        let report = attack_protocol1_query_coalition(&run, &coalition, 3).unwrap();
        println!("--- {outside} sensor(s) outside the coalition");
        print!("{}", report.to_text());
        println!("predicted: {}", check_theorem_conditions(&scenario, ProtocolKind::One, &coalition));
    }
}
