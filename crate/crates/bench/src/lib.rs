//! Shared fixtures for the benchmarks.

use chrono::NaiveDate;
use plugwatt_core::synth::{generate_synthetic, SynthConfig};
use plugwatt_core::{Dataset, Site};

/// Three baseline weeks and one feedback week at 60 s cadence.
pub fn four_week_dataset(n_participants: usize) -> Dataset {
    let monday = NaiveDate::from_ymd_opt(2016, 9, 12).expect("valid date");
    let cfg = SynthConfig {
        n_participants,
        seed: 1,
        ..SynthConfig::two_phase(Site::Nasa, monday, 3, 1, 0.1)
    };
    generate_synthetic(&cfg).expect("valid config").dataset
}
