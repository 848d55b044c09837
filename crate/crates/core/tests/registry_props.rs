mod common;

use chrono::Days;
use common::{calendar, date};
use eventkit::events::{audit_selection, detect_overlaps, read_events, write_events};
use eventkit::{Category, Event, EventSet, Series};
use proptest::prelude::*;

fn registry(offsets: &[u16]) -> EventSet {
    let base = date("2019-01-01");
    let cats = Category::ANALYZED;
    let events = offsets
        .iter()
        .enumerate()
        .map(|(i, o)| Event::new(format!("e{i}"), base + Days::new(u64::from(*o)), cats[i % 4]))
        .collect();
    EventSet::new(events, None).unwrap()
}

proptest! {
    #[test]
    fn overlaps_are_symmetric_and_irreflexive(offsets in prop::collection::vec(0u16..2000, 0..30), horizon in 1u32..90) {
        let set = detect_overlaps(&registry(&offsets), horizon);
        for e in &set {
            prop_assert!(!e.overlap_ids.contains(&e.id));
            for other in &e.overlap_ids {
                let o = set.get(other).unwrap();
                prop_assert!(o.overlap_ids.contains(&e.id));
                prop_assert!((o.date - e.date).num_days().abs() <= i64::from(horizon));
            }
        }
        for a in &set {
            for b in &set {
                if a.id != b.id && (a.date - b.date).num_days().abs() <= i64::from(horizon) {
                    prop_assert!(a.overlap_ids.contains(&b.id));
                }
            }
        }
    }

    #[test]
    fn independent_subset_has_no_overlaps(offsets in prop::collection::vec(0u16..2000, 0..30), horizon in 1u32..90) {
        let set = detect_overlaps(&registry(&offsets), horizon);
        let independent = set.filter(|e| e.overlap_ids.is_empty());
        let again = detect_overlaps(&independent, horizon);
        prop_assert!(again.iter().all(|e| e.overlap_ids.is_empty()));
    }

    #[test]
    fn audit_flag_is_the_disjunction(
        rets in prop::collection::vec(-0.15f64..0.15, 60),
        offsets in prop::collection::vec(0u16..58, 1..10),
        impacts in prop::collection::vec(prop::option::of(0.0f64..1e9), 10),
        users in prop::collection::vec(prop::option::of(0u64..300_000), 10),
        threshold in 0.01f64..0.1,
    ) {
        let base = date("2019-01-01");
        let btc = Series::new(calendar(base, 60), rets.iter().map(|r| Some(*r)).collect());
        let mut offsets = offsets;
        offsets.sort();
        offsets.dedup();
        let events: Vec<Event> = offsets.iter().enumerate().map(|(i, o)| {
            let mut e = Event::new(format!("e{i}"), base + Days::new(u64::from(*o)), Category::InfraNegative);
            e.impact_usd = impacts[i];
            e.affected_users = users[i];
            e
        }).collect();
        let set = EventSet::new(events, None).unwrap();
        let audit = audit_selection(&set, &btc, threshold);
        for (row, e) in audit.rows.iter().zip(&set) {
            let t = (e.date - base).num_days() as usize;
            let same = rets[t].abs() > threshold;
            let three = if t + 2 < 60 {
                ((1.0 + rets[t]) * (1.0 + rets[t + 1]) * (1.0 + rets[t + 2]) - 1.0).abs() > threshold
            } else {
                false
            };
            let impact = e.impact_usd.is_some_and(|v| v > 1e8);
            let many = e.affected_users.is_some_and(|v| v > 100_000);
            prop_assert_eq!(row.met_same_day, same);
            prop_assert_eq!(row.complete, t + 2 < 60);
            if row.complete {
                prop_assert_eq!(row.met_three_day, three);
            }
            prop_assert_eq!(row.qualifies, row.met_same_day || row.met_three_day || row.met_impact || row.met_users);
            prop_assert_eq!(row.met_impact, impact);
            prop_assert_eq!(row.met_users, many);
        }
    }

    #[test]
    fn registry_round_trips(offsets in prop::collection::vec(0u16..2000, 0..20)) {
        let set = registry(&offsets);
        let mut buf = Vec::new();
        write_events(&set, &mut buf).unwrap();
        let back = read_events(buf.as_slice()).unwrap();
        prop_assert_eq!(back.events(), set.events());
    }
}
