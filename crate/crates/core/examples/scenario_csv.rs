//! Load the demo scenario, export a trajectory to CSV and read it back.

use phekf::coins::{CoinStream, Purpose};
use phekf::harness::scenario::load_scenario;
use phekf::harness::trajectory::{read_measurements, write_trajectory};
use phekf::kalman::simulate_plant;

fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/demo.toml");
    let s = load_scenario(path.as_ref()).unwrap();
    println!("{}: n = {}, p = {}, {} sensors, {} steps", s.name, s.n(), s.p(), s.sensor_count(), s.steps);

    let traj = simulate_plant(&s.model, &s.x0, 5, &mut CoinStream::new(s.seeds.plant, Purpose::Noise)).unwrap();
    let mut csv = Vec::new();
    write_trajectory(&mut csv, &traj, 0.01).unwrap();
    print!("{}", String::from_utf8_lossy(&csv));

    let back = read_measurements(csv.as_slice(), s.sensor_count(), s.p(), s.n()).unwrap();
    println!("read back identical: {}", back.measurements == traj.measurements);
}
