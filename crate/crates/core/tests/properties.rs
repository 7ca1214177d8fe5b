mod common;

use alertlab::evaluator::{evaluate_rule, AlertEvent};
use alertlab::matcher::{classify, classify_bruteforce, MatchPolicy};
use alertlab::rulelang::{AlertRule, Comparator};
use alertlab::sim::FaultWindow;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rule(window: u64, threshold: f64, for_duration: u64) -> AlertRule {
    AlertRule::new(
        "R",
        "errorRate",
        window,
        Comparator::Gt,
        threshold,
        for_duration,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn episodes_well_formed(seed in any::<u64>(), window in 1u64..=24, for_steps in 0u64..=24, threshold in 0.0f64..0.08) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..300);
        let series = common::random_series(&mut rng, len);
        let r = rule(5 * window, threshold, 5 * for_steps);
        let t_end = series.last_timestamp().unwrap();
        let eps = evaluate_rule(&r, &series, t_end).unwrap();
        for e in &eps {
            prop_assert!(e.pending_since <= e.fired_at);
            prop_assert!(e.fired_at - e.pending_since >= r.for_duration);
            if let Some(res) = e.resolved_at {
                prop_assert!(e.fired_at < res);
            }
        }
        for pair in eps.windows(2) {
            let end = pair[0].resolved_at.expect("only the last episode may be open");
            prop_assert!(end <= pair[1].pending_since);
        }
        prop_assert_eq!(&eps, &evaluate_rule(&r, &series, t_end).unwrap());
    }

    #[test]
    fn duration_subset(seed in any::<u64>(), window in 1u64..=24, for_steps in 1u64..=24, threshold in 0.0f64..0.08) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..300);
        let series = common::random_series(&mut rng, len);
        let t_end = series.last_timestamp().unwrap();
        let fast = evaluate_rule(&rule(5 * window, threshold, 0), &series, t_end).unwrap();
        let slow = evaluate_rule(&rule(5 * window, threshold, 5 * for_steps), &series, t_end).unwrap();
        prop_assert!(slow.len() <= fast.len());
        for e in &slow {
            let enclosing = fast
                .iter()
                .find(|f| f.fired_at <= e.fired_at && f.resolved_at == e.resolved_at);
            prop_assert!(enclosing.is_some(), "no for:0 episode encloses {:?}", e);
        }
    }

    #[test]
    fn locality(seed in any::<u64>(), window in 1u64..=24, for_steps in 0u64..=12, threshold in 0.0f64..0.08) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = rng.gen_range(1..300);
        let series = common::random_series(&mut rng, len);
        let r = rule(5 * window, threshold, 5 * for_steps);
        let t_end = series.last_timestamp().unwrap();
        for e in evaluate_rule(&r, &series, t_end).unwrap() {
            let from = e.fired_at.saturating_sub(r.window + r.for_duration);
            let to = e.resolved_at.unwrap_or(t_end);
            let local = evaluate_rule(&r, &series.slice(from, to), to).unwrap();
            prop_assert!(local.contains(&e), "{:?} missing from {:?}", e, local);
        }
    }

    #[test]
    fn matcher_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = common::random_schedule(&mut rng, 16);
        let horizon = schedule.last().map_or(500, |w| w.end + 200);
        let episodes = common::random_episodes(&mut rng, 32, horizon);
        let policy = common::random_policy(&mut rng);
        prop_assert_eq!(
            classify("R", &episodes, &schedule, &policy).unwrap(),
            classify_bruteforce("R", &episodes, &schedule, &policy)
        );
    }

    #[test]
    fn grace_is_monotone(seed in any::<u64>(), a in 0u64..=120, b in 0u64..=120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = common::random_schedule(&mut rng, 12);
        let horizon = schedule.last().map_or(500, |w| w.end + 200);
        let episodes = common::random_episodes(&mut rng, 24, horizon);
        let base = MatchPolicy { grace_before_start: 0, ..common::random_policy(&mut rng) };
        let (lo, hi) = (a.min(b), a.max(b));
        let narrow = classify("R", &episodes, &schedule, &MatchPolicy { grace_after_end: lo, ..base }).unwrap();
        let wide = classify("R", &episodes, &schedule, &MatchPolicy { grace_after_end: hi, ..base }).unwrap();
        prop_assert!(wide.tp >= narrow.tp);
        prop_assert!(wide.fp <= narrow.fp);
        prop_assert_eq!(wide.episodes(), narrow.episodes());
    }

    #[test]
    fn matcher_translation_invariant(seed in any::<u64>(), shift in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schedule = common::random_schedule(&mut rng, 16);
        let horizon = schedule.last().map_or(500, |w| w.end + 200);
        let episodes = common::random_episodes(&mut rng, 32, horizon);
        let policy = common::random_policy(&mut rng);
        let moved_schedule: Vec<FaultWindow> = schedule
            .iter()
            .map(|w| FaultWindow::new(w.treatment.clone(), w.start + shift, w.end + shift, w.magnitude))
            .collect();
        let moved_episodes: Vec<AlertEvent> = episodes
            .iter()
            .map(|e| AlertEvent {
                pending_since: e.pending_since + shift,
                fired_at: e.fired_at + shift,
                resolved_at: e.resolved_at.map(|r| r + shift),
                ..e.clone()
            })
            .collect();
        let a = classify("R", &episodes, &schedule, &policy).unwrap();
        let b = classify("R", &moved_episodes, &moved_schedule, &policy).unwrap();
        prop_assert_eq!(
            (a.tp, a.fp, a.fn_, a.duplicate_tp, &a.ttd_values),
            (b.tp, b.fp, b.fn_, b.duplicate_tp, &b.ttd_values)
        );
    }
}
