use flexload::profiles::{generate_synthetic_day, SyntheticHouseholdParams};
use flexload::{
    encode_state, ActionTriple, Devices, EnvConfig, EnvState, Normalization, Problem, TariffSchedule, TimeGrid,
};
use proptest::prelude::*;

fn problem() -> impl Strategy<Value = Problem> {
    prop_oneof![Just(Problem::PeakReduction), Just(Problem::CostMinimization)]
}

fn grid() -> impl Strategy<Value = TimeGrid> {
    prop_oneof![Just(TimeGrid::HOURLY), Just(TimeGrid::QUARTER_HOUR)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_days_keep_the_device_invariants(
        problem in problem(),
        grid in grid(),
        day_index in 0u32..365,
        actions in prop::collection::vec(0usize..8, 96),
    ) {
        let params = SyntheticHouseholdParams::for_grid(grid);
        let day = generate_synthetic_day(&params, grid, day_index).unwrap();
        let mut config = EnvConfig::new(problem, grid, Devices::from_synthetic(&params));
        config.normalization = Normalization::from_days(std::slice::from_ref(&day), &config.devices);
        let tariff = TariffSchedule::flat(grid, 0.2, 0.05).unwrap();
        let mut state = EnvState::reset(&config, &day).unwrap();
        let mut prev = state.counts;
        for &a in actions.iter().cycle() {
            let s = encode_state(&state, &config, &tariff).unwrap();
            prop_assert_eq!(s.len(), problem.state_dim());
            prop_assert!(s.0.iter().all(|v| (0.0..=1.0).contains(v)));
            let done = state.step(&config, ActionTriple::from_index(a).unwrap()).unwrap();
            prop_assert!(state.counts.ac >= prev.ac && state.counts.ev >= prev.ev && state.counts.dw >= prev.dw);
            prop_assert!(state.ev_delivered_kwh <= state.ev_budget_kwh + 1e-9);
            prev = state.counts;
            if done {
                break;
            }
        }
        prop_assert!(state.is_done());
        let dt = grid.step_hours();
        let ev: f64 = state.ev.iter().sum::<f64>() * dt;
        prop_assert!((ev - state.ev_budget_kwh).abs() < 1e-9);
        let on: Vec<usize> = (0..state.steps()).filter(|&t| state.dw[t] > 0.0).collect();
        prop_assert_eq!(on.len(), config.devices.dw.cycle_steps);
        prop_assert!(on.windows(2).all(|w| w[1] == w[0] + 1));
        prop_assert!(state.counts.dw <= 1);
        prop_assert!(state.ac.iter().zip(&day.ac_nominal).all(|(a, n)| *a <= *n + 1e-12));
    }

    #[test]
    fn stepping_past_the_end_is_an_error(grid in grid()) {
        let params = SyntheticHouseholdParams::for_grid(grid);
        let day = generate_synthetic_day(&params, grid, 3).unwrap();
        let config = EnvConfig::new(Problem::PeakReduction, grid, Devices::from_synthetic(&params));
        let mut state = EnvState::reset(&config, &day).unwrap();
        while !state.step(&config, ActionTriple::new(false, false, false)).unwrap() {}
        prop_assert!(state.step(&config, ActionTriple::new(true, true, true)).is_err());
    }
}
