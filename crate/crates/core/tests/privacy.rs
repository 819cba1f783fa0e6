use phekf::harness::generate::{random_scenario, Shape};
use phekf::privacy::attack::{attack_query_coalition, check_theorem_conditions, Verdict};
use phekf::privacy::coalition::{CoalitionKind, CoalitionSpec};
use phekf::privacy::scan::scan_view;
use phekf::privacy::view::extract_view;
use phekf::protocol1::run_protocol1;
use phekf::protocol2::run_protocol2;
use phekf::run::ProtocolKind;

fn shape(sensors: usize, groups: Option<usize>) -> Shape {
    Shape {
        n: 3,
        p: 2,
        sensors,
        groups,
        steps: 3,
        key_bits: 256,
    }
}

fn coalition_of(kind: CoalitionKind, members: &[usize]) -> CoalitionSpec {
    CoalitionSpec::new(kind, members.to_vec()).unwrap()
}

#[test]
fn lone_outside_group_falls_even_with_private_sensor_models() {
    let mut s = random_scenario(shape(4, Some(2)), 3);
    s.visibility.private_hr = true;
    let run = run_protocol2(&s).unwrap();
    let coalition = coalition_of(CoalitionKind::Query, &[0]);
    let r = attack_query_coalition(&run, &coalition, 2).unwrap();
    assert_eq!(r.verdict, Verdict::PrivacyBroken, "{}", r.to_text());
    assert!(r.recovery_error < 1e-6);
    assert_eq!(check_theorem_conditions(&s, ProtocolKind::Two, &coalition), Verdict::PrivacyBroken);
}

#[test]
fn stacking_every_step_keeps_one_block_per_step() {
    let s = random_scenario(shape(3, None), 4);
    let run = run_protocol1(&s).unwrap();
    let r = attack_query_coalition(&run, &coalition_of(CoalitionKind::Query, &[0]), 3).unwrap();
    let stacked = r.stacked.unwrap();
    assert_eq!((stacked.steps, stacked.rows, stacked.cols), (3, 9, 4));
    assert!(stacked.rank >= r.rank && stacked.rank <= 4);
    // Two outsiders with p = 2 give four unknowns for three rows.
    assert_eq!(r.verdict, Verdict::PrivacyPreserved);
}

#[test]
fn sensor_and_cloud_coalitions_hold_no_outside_plaintext() {
    for seed in 0..4 {
        let s = random_scenario(shape(4, Some(2)), seed);
        let runs = [run_protocol1(&s).unwrap(), run_protocol2(&s).unwrap()];
        for run in &runs {
            let units = match run.protocol {
                ProtocolKind::One => 4,
                ProtocolKind::Two => 2,
            };
            for kind in [CoalitionKind::Sensor, CoalitionKind::Cloud] {
                for m in 0..units {
                    let view = extract_view(run, &coalition_of(kind, &[m])).unwrap();
                    let leaks = scan_view(&view);
                    assert!(leaks.is_empty(), "{} {kind} {m}: {leaks:?}", run.protocol);
                }
            }
            let bare = extract_view(run, &coalition_of(CoalitionKind::Cloud, &[])).unwrap();
            assert!(scan_view(&bare).is_empty());
        }
    }
}

#[test]
fn attack_and_prediction_agree_on_random_models() {
    for seed in 10..16 {
        let s = random_scenario(shape(3, None), seed);
        let run = run_protocol1(&s).unwrap();
        for members in [&[0, 1][..], &[0][..], &[][..]] {
            let coalition = coalition_of(CoalitionKind::Query, members);
            let r = attack_query_coalition(&run, &coalition, 2).unwrap();
            assert_eq!(r.verdict, check_theorem_conditions(&s, ProtocolKind::One, &coalition), "seed {seed} {members:?}");
        }
    }
}
