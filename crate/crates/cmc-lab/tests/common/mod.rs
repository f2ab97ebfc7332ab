#![allow(dead_code)]

use cmc_lab::metric::{MetricChart, MetricZooEntry};

/// One chart of every zoo family, all three-dimensional.
pub fn zoo3() -> Vec<(&'static str, MetricChart)> {
    vec![
        ("euclidean", MetricChart::euclidean(3)),
        ("sphere", MetricChart::space_form(1.0, 3)),
        ("hyperbolic", MetricChart::space_form(-1.0, 3)),
        ("conformal", conformal3()),
        (
            "product",
            MetricChart::zoo(
                MetricZooEntry::Product {
                    factors: vec![(MetricZooEntry::SpaceForm { c: 1.0 }, 2), (MetricZooEntry::Euclidean, 1)],
                },
                3,
            )
            .unwrap(),
        ),
    ]
}

pub fn conformal3() -> MetricChart {
    MetricChart::conformal(
        3,
        vec![
            (vec![2, 0, 0], 0.3),
            (vec![0, 2, 0], -0.2),
            (vec![1, 1, 0], 0.15),
            (vec![0, 1, 1], -0.1),
            (vec![1, 0, 2], 0.25),
            (vec![1, 0, 0], 0.2),
        ],
    )
    .unwrap()
}

pub fn conformal4() -> MetricChart {
    MetricChart::conformal(
        4,
        vec![
            (vec![2, 0, 0, 0], 0.3),
            (vec![0, 2, 0, 0], -0.2),
            (vec![0, 0, 0, 2], 0.1),
            (vec![1, 1, 0, 0], 0.15),
            (vec![0, 1, 1, 0], -0.1),
            (vec![1, 0, 0, 1], 0.12),
            (vec![1, 0, 2, 0], 0.25),
            (vec![0, 0, 1, 0], 0.2),
        ],
    )
    .unwrap()
}
