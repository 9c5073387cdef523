mod common;

use common::oracles::{independent_render, random_selections, random_sketch, selected_values};
use cocreate_core::sketch::{parse_sketch, render, serialize_sketch};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn wire_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sketch = random_sketch(&mut rng);
        let wire = serialize_sketch(&sketch);
        let back = parse_sketch(&wire).unwrap();
        prop_assert_eq!(&back, &sketch);
        prop_assert_eq!(serialize_sketch(&back), wire);
    }

    #[test]
    fn spans_reconstruct_template(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sketch = random_sketch(&mut rng);
        let sel = random_selections(&mut rng, &sketch);
        let values = selected_values(&sketch, &sel);
        let rendered = render(&sketch, &sel).unwrap();
        prop_assert_eq!(rendered.reconstruct_template(), sketch.template());
        for span in &rendered.spans {
            prop_assert_eq!(rendered.span_text(span), values[&span.param].as_str());
        }
        prop_assert_eq!(rendered.text, independent_render(sketch.template(), &values));
    }

    #[test]
    fn id_is_content_derived(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sketch = random_sketch(&mut rng);
        let wire = serialize_sketch(&sketch);
        let mut v: serde_json::Value = serde_json::from_str(&wire).unwrap();
        v.as_object_mut().unwrap().remove("sketch_id");
        let again = parse_sketch(&v.to_string()).unwrap();
        prop_assert_eq!(again.id(), sketch.id());
    }
}
