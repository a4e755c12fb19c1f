//! Late-interaction scoring.

use crate::error::{Error, Result};

use super::TokenMatrix;

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sum over query tokens of the best dot product against any document token.
pub fn maxsim(query: &TokenMatrix, doc: &TokenMatrix) -> Result<f32> {
    if doc.is_empty() {
        return Err(Error::InvalidArgument("document has no token vectors".into()));
    }
    if query.dim() != doc.dim() {
        return Err(Error::InvalidArgument(format!(
            "query dimension {} does not match document dimension {}",
            query.dim(),
            doc.dim()
        )));
    }
    Ok(maxsim_unchecked(query, doc))
}

pub(crate) fn maxsim_unchecked(query: &TokenMatrix, doc: &TokenMatrix) -> f32 {
    query
        .rows()
        .map(|q| doc.rows().map(|d| dot(q, d)).fold(f32::NEG_INFINITY, f32::max))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(dim: usize, rows: &[&[f32]]) -> TokenMatrix {
        TokenMatrix::from_rows(dim, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identical_token() {
        let q = m(2, &[&[1.0, 0.0]]);
        let d = m(2, &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(maxsim(&q, &d).unwrap(), 1.0);
    }

    #[test]
    fn row_maxima_sum() {
        // query rows picked so the dot matrix is [[0.9, 0.1], [0.2, 0.8]]
        let q = m(2, &[&[0.9, 0.1], &[0.2, 0.8]]);
        let d = m(2, &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert!((maxsim(&q, &d).unwrap() - 1.7).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_contributes_zero() {
        let q = m(2, &[&[1.0, 0.0], &[0.0, 1.0]]);
        let d = m(2, &[&[1.0, 0.0]]);
        assert_eq!(maxsim(&q, &d).unwrap(), 1.0);
    }

    #[test]
    fn empty_doc_and_dim_mismatch() {
        let q = m(2, &[&[1.0, 0.0]]);
        assert!(maxsim(&q, &TokenMatrix::new(2, vec![]).unwrap()).is_err());
        assert!(maxsim(&q, &m(3, &[&[1.0, 0.0, 0.0]])).is_err());
    }

    proptest! {
        #[test]
        fn matches_double_loop(
            dim in 1usize..8,
            nq in 1usize..6,
            nd in 1usize..6,
            seed in prop::collection::vec(-1.0f32..1.0, 100),
        ) {
            let q = TokenMatrix::new(dim, seed.iter().cycle().take(nq * dim).copied().collect()).unwrap();
            let d = TokenMatrix::new(dim, seed.iter().rev().cycle().take(nd * dim).copied().collect()).unwrap();
            let mut expected = 0.0f64;
            for i in 0..nq {
                let mut best = f64::NEG_INFINITY;
                for j in 0..nd {
                    let mut s = 0.0f64;
                    for k in 0..dim {
                        s += q.row(i)[k] as f64 * d.row(j)[k] as f64;
                    }
                    best = best.max(s);
                }
                expected += best;
            }
            prop_assert!((maxsim(&q, &d).unwrap() as f64 - expected).abs() < 1e-5);
        }
    }
}
