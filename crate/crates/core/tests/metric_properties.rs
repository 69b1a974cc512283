use proptest::prelude::*;

use spelunker_core::metric::{combined_distance, field_distance, weighted_distance, QueryPoint};
use spelunker_core::schema::{DatasetSchema, FieldKind, FieldSpec};
use spelunker_core::{FieldValue, ProcessedRecord};

const DIM: usize = 6;

fn unit_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, DIM)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| ((x / n) as f32) as f64).collect()
        })
}

fn value(kind: FieldKind) -> BoxedStrategy<FieldValue<f64>> {
    let present = match kind {
        FieldKind::Numeric => prop_oneof![
            (-10.0f64..10.0).prop_map(FieldValue::Number),
            (-20i32..20).prop_map(|i| FieldValue::Number(i as f64 * 0.5)),
        ]
        .boxed(),
        FieldKind::Boolean => any::<bool>().prop_map(FieldValue::Flag).boxed(),
        FieldKind::Categorical => unit_vector().prop_map(|v| FieldValue::text(v, "x")).boxed(),
    };
    prop_oneof![1 => Just(FieldValue::Missing), 6 => present].boxed()
}

fn kind() -> impl Strategy<Value = FieldKind> {
    prop_oneof![
        Just(FieldKind::Numeric),
        Just(FieldKind::Boolean),
        Just(FieldKind::Categorical)
    ]
}

fn triple() -> impl Strategy<Value = (FieldKind, FieldValue<f64>, FieldValue<f64>, FieldValue<f64>)> {
    kind().prop_flat_map(|k| (Just(k), value(k), value(k), value(k)))
}

fn schema() -> DatasetSchema {
    DatasetSchema::new(vec![
        FieldSpec::new("n0", FieldKind::Numeric),
        FieldSpec::new("n1", FieldKind::Numeric),
        FieldSpec::new("b0", FieldKind::Boolean),
        FieldSpec::new("c0", FieldKind::Categorical),
    ])
}

fn record() -> impl Strategy<Value = ProcessedRecord<f64>> {
    (
        value(FieldKind::Numeric),
        value(FieldKind::Numeric),
        value(FieldKind::Boolean),
        value(FieldKind::Categorical),
    )
        .prop_map(|(a, b, c, d)| ProcessedRecord {
            id: 0,
            values: vec![a, b, c, d],
        })
}

fn weights() -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::of(prop_oneof![Just(0.25), Just(1.0), Just(4.0), 0.01f64..10.0]), 4)
        .prop_filter("at least one field", |w| w.iter().any(Option::is_some))
}

fn query_from(schema: &DatasetSchema, source: &ProcessedRecord<f64>, weights: &[Option<f64>]) -> QueryPoint<f64> {
    let terms: Vec<_> = schema
        .fields
        .iter()
        .zip(weights)
        .enumerate()
        .filter_map(|(i, (f, w))| w.map(|w| (f.name.clone(), source.values[i].clone(), w)))
        .collect();
    QueryPoint::new(schema, terms).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn per_field_metric_axioms((k, x, y, z) in triple()) {
        let d = |a: &FieldValue<f64>, b: &FieldValue<f64>| field_distance(k, a, b).unwrap();
        let cap = spelunker_core::metric::distance_cap(k);
        prop_assert!(d(&x, &y) >= 0.0 && d(&x, &y) <= cap);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
    }

    #[test]
    fn combined_metric_axioms(x in record(), y in record(), z in record(), w in weights()) {
        let schema = schema();
        // the weighted distance is a metric over whole records for fixed weights
        let dist = |a: &ProcessedRecord<f64>, b: &ProcessedRecord<f64>| weighted_distance(&query_from(&schema, a, &w), b);
        prop_assert!(dist(&x, &y) >= 0.0);
        prop_assert_eq!(dist(&x, &y), dist(&y, &x));
        prop_assert_eq!(dist(&x, &x), 0.0);
        prop_assert!(dist(&x, &z) <= dist(&x, &y) + dist(&y, &z) + 1e-9);
    }

    #[test]
    fn breakdown_matches_total(x in record(), y in record(), w in weights()) {
        let q = query_from(&schema(), &x, &w);
        let bd = combined_distance(&q, &y);
        let recomputed: f64 = bd
            .per_field
            .iter()
            .map(|c| c.weight * c.distance * c.distance)
            .sum::<f64>()
            .sqrt();
        prop_assert!((bd.total - recomputed).abs() < 1e-9);
        prop_assert_eq!(bd.total, weighted_distance(&q, &y));
        prop_assert_eq!(bd.per_field.len(), w.iter().flatten().count());
    }

    #[test]
    fn weight_scaling(x in record(), ys in prop::collection::vec(record(), 2..12), w in weights(), c in 0.1f64..10.0) {
        let schema = schema();
        let q = query_from(&schema, &x, &w);
        let scaled: Vec<_> = w.iter().map(|v| v.map(|v| v * c)).collect();
        let qc = query_from(&schema, &x, &scaled);
        for y in &ys {
            let (a, b) = (weighted_distance(&q, y), weighted_distance(&qc, y));
            prop_assert!((b - a * c.sqrt()).abs() <= 1e-9 * (1.0 + b));
        }
        let rank = |q: &QueryPoint<f64>| {
            let mut idx: Vec<usize> = (0..ys.len()).collect();
            let d: Vec<f64> = ys.iter().map(|y| weighted_distance(q, y)).collect();
            // near-ties within rounding are resolved by position, like ids
            idx.sort_by(|&i, &j| {
                if (d[i] - d[j]).abs() <= 1e-12 * (1.0 + d[i]) { i.cmp(&j) } else { d[i].total_cmp(&d[j]) }
            });
            idx
        };
        prop_assert_eq!(rank(&q), rank(&qc));
    }

    #[test]
    fn monotone_in_one_field(base in -5.0f64..5.0, small in 0.0f64..3.0, extra in 0.0f64..3.0, other in -5.0f64..5.0) {
        let schema = schema();
        let q = QueryPoint::new(
            &schema,
            [("n0", FieldValue::Number(0.0), 1.0), ("n1", FieldValue::Number(0.0), 2.0)],
        )
        .unwrap();
        let r = |n0: f64| ProcessedRecord { id: 0, values: vec![
            FieldValue::Number(n0), FieldValue::Number(other), FieldValue::Missing, FieldValue::Missing,
        ]};
        let near = base.signum() * small;
        let far = base.signum() * (small + extra);
        prop_assert!(weighted_distance(&q, &r(far)) >= weighted_distance(&q, &r(near)));
    }
}

#[test]
fn unqueried_fields_contribute_nothing() {
    let schema = schema();
    let q = QueryPoint::new(&schema, [("b0", FieldValue::Flag(true), 1.0)]).unwrap();
    let a = ProcessedRecord {
        id: 1,
        values: vec![
            FieldValue::Number(100.0),
            FieldValue::Missing,
            FieldValue::Flag(true),
            FieldValue::Missing,
        ],
    };
    let bd = combined_distance(&q, &a);
    assert_eq!(bd.total, 0.0);
    assert_eq!(bd.per_field.len(), 1);
    assert_eq!(bd.per_field[0].field, "b0");
}
