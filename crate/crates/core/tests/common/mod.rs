#![allow(dead_code)]

use flexload::profiles::{generate_synthetic_days, SyntheticHouseholdParams};
use flexload::{Household, Problem, TariffBook, TimeGrid};

/// Off-peak overnight, mid-peak daytime, on-peak evening.
pub const TOU_JSON: &str = r#"{
    "season": "all",
    "weekend": false,
    "periods": [
        {"start_minute": 0,    "buy": 0.08, "sell": 0.04},
        {"start_minute": 420,  "buy": 0.15, "sell": 0.04},
        {"start_minute": 960,  "buy": 0.30, "sell": 0.04},
        {"start_minute": 1320, "buy": 0.08, "sell": 0.04}
    ]
}"#;

pub const TRAIN_DAYS: u32 = 40;
pub const TEST_DAYS: u32 = 20;

pub fn tou() -> TariffBook {
    TariffBook::from_json(TOU_JSON).unwrap()
}

/// Training and held-out households of the seeded synthetic home on an hourly grid.
pub fn split(problem: Problem) -> (Household, Household) {
    let grid = TimeGrid::HOURLY;
    let params = SyntheticHouseholdParams::for_grid(grid);
    let book = tou();
    let train = Household::synthetic("synthetic", problem, grid, &params, 0..TRAIN_DAYS, &book).unwrap();
    let held_out = generate_synthetic_days(&params, grid, TRAIN_DAYS, TEST_DAYS).unwrap();
    let test = train.with_days(held_out, &book).unwrap();
    (train, test)
}
