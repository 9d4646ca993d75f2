use chrono::NaiveDate;
use flexload::env::DeviceSpec;
use flexload::metrics::daily_peak;
use flexload::oracle::realize;
use flexload::{exhaustive_schedule, greedy_valley_fill, DayProfile, Devices, Objective, TariffSchedule, TimeGrid};
use proptest::prelude::*;

fn day(grid: TimeGrid, base: &[f64], pv: &[f64], ac: &[f64]) -> DayProfile {
    let mut d = DayProfile::zeros(NaiveDate::from_ymd_opt(2016, 8, 2).unwrap(), grid);
    d.base_load.copy_from_slice(base);
    d.pv.copy_from_slice(pv);
    d.ac_nominal.copy_from_slice(ac);
    d
}

fn instance() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    prop_oneof![Just(4usize), Just(6), Just(8)].prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0.0..3.0f64, n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0..2.0f64], n),
            prop::collection::vec(prop_oneof![Just(0.0), 0.5..1.5f64], n),
            prop::collection::vec(0.05..0.4f64, n),
        )
    })
}

fn tariff(buy: Vec<f64>) -> TariffSchedule {
    TariffSchedule {
        sell_rate: vec![0.02; buy.len()],
        buy_rate: buy,
        season: "all".into(),
        weekend: false,
        periods: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn greedy_never_beats_exhaustive(
        (n, base, pv, ac, buy) in instance(),
        ev_units in 1usize..3,
        cycle in 1usize..3,
        cost in any::<bool>(),
    ) {
        let grid = TimeGrid::with_steps(n).unwrap();
        let dt = grid.step_hours();
        let d = day(grid, &base, &pv, &ac);
        let devices = Devices {
            ac: DeviceSpec { count_band: (1, 2), ..DeviceSpec::air_conditioner(1.0) },
            ev: DeviceSpec { budget_kwh: Some(ev_units as f64 * 2.0 * dt), ..DeviceSpec::electric_vehicle(2.0, 1) },
            dw: DeviceSpec { budget_kwh: Some(cycle as f64 * dt), ..DeviceSpec::dishwasher(1.0, cycle) },
        };
        let objective = if cost { Objective::Cost } else { Objective::Peak };
        let t = tariff(buy);
        let best = exhaustive_schedule(&d, &devices, grid, &t, objective).unwrap();
        let greedy = greedy_valley_fill(&d, &devices, grid, &t, objective).unwrap();
        prop_assert!(best.value <= greedy.value + 1e-9);
        let again = realize(&d, &devices, grid, &best.candidate).unwrap();
        if !cost {
            prop_assert!((daily_peak(&again.net_load) - best.value).abs() < 1e-9);
        }
        prop_assert!((again.ev.iter().sum::<f64>() - 2.0 * ev_units as f64).abs() < 1e-9);
        prop_assert_eq!(again.dw.iter().filter(|p| **p > 0.0).count(), cycle);
    }

    #[test]
    fn greedy_is_exact_for_the_dishwasher_alone(
        (n, base, pv, _ac, buy) in instance(),
        cycle in 1usize..4,
        cost in any::<bool>(),
    ) {
        let grid = TimeGrid::with_steps(n).unwrap();
        let d = day(grid, &base, &pv, &vec![0.0; n]);
        let devices = Devices {
            ac: DeviceSpec::air_conditioner(1.0).disabled(),
            ev: DeviceSpec::electric_vehicle(2.0, 1).disabled(),
            dw: DeviceSpec { budget_kwh: Some(cycle as f64 * grid.step_hours()), ..DeviceSpec::dishwasher(1.0, cycle) },
        };
        let objective = if cost { Objective::Cost } else { Objective::Peak };
        let t = tariff(buy);
        let best = exhaustive_schedule(&d, &devices, grid, &t, objective).unwrap();
        let greedy = greedy_valley_fill(&d, &devices, grid, &t, objective).unwrap();
        prop_assert!((best.value - greedy.value).abs() < 1e-9);
    }
}
