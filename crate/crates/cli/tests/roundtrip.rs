use chrono::NaiveDate;
use epibranch_cli::io::{observations_to_csv, parse_observations, DatedSeries};
use proptest::prelude::*;

proptest! {
    #[test]
    fn observations_survive_round_trip(
        offset in 0i64..20_000,
        values in prop::collection::vec(prop::option::weighted(0.85, 0u64..(i64::MAX as u64)), 1..120),
    ) {
        let start = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(offset);
        let series = DatedSeries { start, values };
        let text = observations_to_csv(&series);
        let back = parse_observations(&text).unwrap();
        prop_assert_eq!(back.start, series.start);
        prop_assert_eq!(back.values, series.values);
        prop_assert_eq!(observations_to_csv(&parse_observations(&text).unwrap()), text);
    }
}
