use bongard_cg::describe::{parse_description, render_description};
use bongard_cg::grammar::{
    parse_action, parse_image, serialize_image, sweep_to_degrees, turn_to_degrees, ActionStyle, BasicAction,
    BongardImage, GrammarError, Norm, OneStrokeShape, KNOWN_STYLES,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

fn norm() -> impl Strategy<Value = Norm> {
    (0u16..=1000).prop_map(|k| Norm::from_thousandths(k).unwrap())
}

fn style() -> impl Strategy<Value = ActionStyle> {
    prop_oneof![
        4 => proptest::sample::select(KNOWN_STYLES.to_vec()).prop_map(|s| ActionStyle::new(s).unwrap()),
        1 => "[a-z_]{1,8}".prop_map(|s| ActionStyle::new(&s).unwrap()),
    ]
}

fn action() -> impl Strategy<Value = BasicAction> {
    prop_oneof![
        (style(), norm(), norm()).prop_map(|(style, length, turn)| BasicAction::Line { style, length, turn }),
        (style(), norm(), norm(), norm()).prop_map(|(style, radius, sweep, turn)| BasicAction::Arc {
            style,
            radius,
            sweep,
            turn
        }),
    ]
}

/// Known styles only and non-negative sweeps: the domain on which descriptions are lossless.
fn describable_action() -> impl Strategy<Value = BasicAction> {
    let known = proptest::sample::select(KNOWN_STYLES.to_vec()).prop_map(|s| ActionStyle::new(s).unwrap());
    let half_up = (500u16..=1000).prop_map(|k| Norm::from_thousandths(k).unwrap());
    prop_oneof![
        (known.clone(), norm(), norm()).prop_map(|(style, length, turn)| BasicAction::Line { style, length, turn }),
        (known, norm(), half_up, norm()).prop_map(|(style, radius, sweep, turn)| BasicAction::Arc {
            style,
            radius,
            sweep,
            turn
        }),
    ]
}

fn token_oracle() -> Regex {
    Regex::new(r"^(?:line_[a-z_]+_[01]\.[0-9]{3}|arc_[a-z_]+_[01]\.[0-9]{3}_[01]\.[0-9]{3})-[01]\.[0-9]{3}$").unwrap()
}

fn fields_in_range(token: &str) -> bool {
    let tail = &token[token.find('_').unwrap() + 1..];
    let numeric: Vec<&str> = tail
        .split(['_', '-'])
        .filter(|f| f.len() == 5 && f.as_bytes()[1] == b'.' && f.as_bytes()[0].is_ascii_digit())
        .collect();
    numeric.iter().all(|f| f.parse::<f64>().unwrap() <= 1.0)
}

proptest! {
    #[test]
    fn parse_inverts_serialize(a in action()) {
        let token = a.to_string();
        prop_assert_eq!(parse_action(&token).unwrap(), a);
    }

    #[test]
    fn serialize_inverts_parse(a in action()) {
        let token = a.to_string();
        prop_assert_eq!(parse_action(&token).unwrap().to_string(), token);
    }

    #[test]
    fn parser_agrees_with_regular_language(
        s in "(line|arc|lin|arcs)_[a-z_]{0,3}(_[01]\\.[0-9]{2,4}|_[0-9.]{1,6}){1,3}-[0-9.]{1,6}"
    ) {
        let accepted = parse_action(&s).is_ok();
        let expected = token_oracle().is_match(&s) && fields_in_range(&s);
        prop_assert_eq!(accepted, expected, "{}", s);
    }

    #[test]
    fn image_round_trip(shapes in prop::collection::vec(prop::collection::vec(action(), 1..6), 1..4)) {
        let image = BongardImage::new(
            shapes.into_iter().map(|a| OneStrokeShape::new(a).unwrap()).collect()
        ).unwrap();
        let nested = serialize_image(&image);
        prop_assert_eq!(parse_image(&nested).unwrap(), image);
    }

    #[test]
    fn description_round_trip(actions in prop::collection::vec(describable_action(), 1..20), figure in 1usize..14) {
        let image = BongardImage::new(vec![OneStrokeShape::new(actions).unwrap()]).unwrap();
        let text = render_description(&image, figure).text();
        prop_assert_eq!(parse_description(&text).unwrap(), image);
    }

    #[test]
    fn turns_stay_within_half_circle(k in 0u16..=1000) {
        let x = f64::from(k) / 1000.0;
        let d = turn_to_degrees(x).unwrap().degrees();
        prop_assert!(d.abs() <= 180.0);
        prop_assert!((d - (x - 0.5) * 360.0).abs() < 1e-9);
        let s = sweep_to_degrees(x).unwrap().degrees();
        prop_assert!(s.abs() <= 360.0);
    }
}

#[test]
fn ten_thousand_fuzz_tokens_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let field = |rng: &mut ChaCha8Rng| {
        let k: u16 = rng.random_range(0..=1000);
        format!("{}.{:03}", k / 1000, k % 1000)
    };
    let mut failures = Vec::new();
    for _ in 0..10_000 {
        let style = KNOWN_STYLES[rng.random_range(0..KNOWN_STYLES.len())];
        let token = if rng.random_bool(0.5) {
            format!("line_{style}_{}-{}", field(&mut rng), field(&mut rng))
        } else {
            format!("arc_{style}_{}_{}-{}", field(&mut rng), field(&mut rng), field(&mut rng))
        };
        match parse_action(&token) {
            Ok(a) if a.to_string() == token => {}
            other => failures.push((token, other)),
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn malformed_examples_are_rejected_with_offsets() {
    for bad in [
        "line_normal_1.5-0.5",
        "line_normal_0.500",
        "line_normal_0.500_0.500-0.500",
        "arc_normal_0.500-0.500",
        "curve_normal_0.500-0.500",
        "line_normal_1.001-0.500",
        "line_Normal_0.500-0.500",
        "line__0.500-0.500x",
        "",
    ] {
        assert!(parse_action(bad).is_err(), "{bad:?}");
    }
    let offset = |t: &str| match parse_action(t) {
        Err(GrammarError::MalformedToken { offset, .. }) => offset,
        other => panic!("{t}: {other:?}"),
    };
    assert_eq!(offset("curve_normal_0.500-0.500"), 0);
    assert_eq!(offset("line_normal_0.500-1.500"), 18);
    assert_eq!(offset("line_normal_0.5x0-0.500"), 15);
}

#[test]
fn arcs_of_three_quarters_sweep_half_a_turn() {
    assert_eq!(sweep_to_degrees(0.75).unwrap().degrees(), 180.0);
    assert_eq!(sweep_to_degrees(0.5).unwrap().degrees(), 0.0);
    assert!(turn_to_degrees(1.2).is_err());
    assert!(sweep_to_degrees(-0.1).is_err());
}
