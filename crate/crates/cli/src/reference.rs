/// Published trainable-parameter totals in millions, keyed by `(depth, cardinality)`.
/// The reference widths and stem are not known, so these are for comparison only.
const PUBLISHED: [((usize, usize), f64); 6] = [
    ((26, 16), 10.2),
    ((50, 16), 17.4),
    ((101, 16), 34.6),
    ((26, 32), 17.3),
    ((50, 32), 31.7),
    ((101, 32), 66.1),
];

pub fn published_millions(depth: usize, cardinality: usize) -> Option<f64> {
    PUBLISHED.iter().find(|(k, _)| *k == (depth, cardinality)).map(|&(_, v)| v)
}
