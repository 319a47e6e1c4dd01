//! Fixed-size matrices as row-major nested arrays.

use nalgebra::{Const, SMatrix};
use serde::de::Error;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn rows<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> Vec<Vec<f64>> {
    (0..R).map(|i| (0..C).map(|j| m[(i, j)]).collect()).collect()
}

pub fn serialize<S: Serializer, const R: usize, const C: usize>(
    m: &SMatrix<f64, R, C>,
    s: S,
) -> Result<S::Ok, S::Error> {
    rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>, const R: usize, const C: usize>(
    d: D,
) -> Result<SMatrix<f64, R, C>, D::Error> {
    let v = Vec::<Vec<f64>>::deserialize(d)?;
    if v.len() != R || v.iter().any(|r| r.len() != C) {
        return Err(D::Error::custom(format!("expected a {R}x{C} matrix")));
    }
    Ok(SMatrix::<f64, R, C>::from_fn_generic(Const::<R>, Const::<C>, |i, j| v[i][j]))
}
