//! Bundled example data.

use crate::model::{MetaDataset, Study};

/// Open versus traditional education and student creativity: ten studies,
/// mean differences `y` with standard errors `u`.
pub const EDUCATION_CSV: &str = include_str!("../data/education.csv");

const EDUCATION: [(f64, f64); 10] = [
    (0.081, 0.45),
    (0.308, 0.45),
    (-0.178, 0.23),
    (-0.234, 0.20),
    (0.598, 0.45),
    (0.563, 0.30),
    (0.535, 0.22),
    (0.779, 0.24),
    (1.052, 0.32),
    (-0.583, 0.15),
];

pub fn education() -> MetaDataset {
    let studies = EDUCATION
        .iter()
        .enumerate()
        .map(|(i, &(y, u))| Study::new((i + 1).to_string(), y, u).expect("bundled row is valid"))
        .collect();
    MetaDataset::new(studies).expect("bundled dataset has ten studies")
}
