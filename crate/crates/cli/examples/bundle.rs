//! Regenerates the bundled instance files: `cargo run --example bundle -- <dir>`.

use std::path::PathBuf;

use ambqc::families::{
    random_complete_instance, repeat_first_qubit_instance, sampling_sweep_instance, sweep_instance,
    table_from_choices, Acceptance, PovmChoice,
};
use ambqc::instance::serialize_instance;
use ambqc::InstanceF64;
use rand::SeedableRng;

fn table(names: &[&str]) -> ambqc::PovmTableF64 {
    table_from_choices(&names.iter().map(|n| PovmChoice::named(n)).collect::<Vec<_>>()).unwrap()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "instances".into()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
    let instances: Vec<(&str, InstanceF64)> = vec![
        ("sweep.json", sweep_instance(4, table(&["x"]), Acceptance::Outcome(0)).unwrap()),
        ("parity.json", sweep_instance(4, table(&["z"]), Acceptance::EvenParity).unwrap()),
        ("zparity10.json", sweep_instance(10, table(&["z"]), Acceptance::Parity).unwrap()),
        ("trine.json", sweep_instance(3, table(&["trine"]), Acceptance::Parity).unwrap()),
        ("sampling.json", sampling_sweep_instance(4, table(&["x"]), 2).unwrap()),
        ("incomplete.json", repeat_first_qubit_instance(3, table(&["z"])).unwrap()),
        (
            "random.json",
            random_complete_instance(5, 20, table(&["z", "x", "y", "z"]), &mut rng).unwrap(),
        ),
    ];
    for (name, inst) in instances {
        std::fs::write(dir.join(name), serialize_instance(&inst)).unwrap();
    }
}
