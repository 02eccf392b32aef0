use crate::error::{Error, Result};
use crate::{Scalar, Tensor};

/// Scaled dot-product attention for one head over row-major slices.
///
/// `q` is `[nq × d]`, `k` is `[nk × d]`, `v` is `[nk × dv]`. Keys with
/// `key_mask == 0` get a `-inf` logit. Returns the attention weights
/// `[nq × nk]` and the output `[nq × dv]`.
pub(crate) fn attend<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    d: usize,
    dv: usize,
    key_mask: Option<&[u8]>,
) -> (Vec<T>, Vec<T>) {
    let nq = q.len() / d;
    let nk = k.len() / d;
    let scale = T::one() / T::from_usize(d).unwrap().sqrt();
    let mut probs = vec![T::zero(); nq * nk];
    let mut out = vec![T::zero(); nq * dv];
    for i in 0..nq {
        let qi = &q[i * d..(i + 1) * d];
        let row = &mut probs[i * nk..(i + 1) * nk];
        for j in 0..nk {
            row[j] = match key_mask {
                Some(m) if m[j] == 0 => T::neg_infinity(),
                _ => crate::dot(qi, &k[j * d..(j + 1) * d]) * scale,
            };
        }
        crate::softmax_in_place(row);
        let oi = &mut out[i * dv..(i + 1) * dv];
        for j in 0..nk {
            let p = row[j];
            if p != T::zero() {
                crate::axpy(p, &v[j * dv..(j + 1) * dv], oi);
            }
        }
    }
    (probs, out)
}

/// `softmax(Q Kᵀ / √d) V` with masked key positions excluded.
pub fn attention<T: Scalar>(
    queries: &Tensor<T>,
    keys: &Tensor<T>,
    values: &Tensor<T>,
    mask: &[u8],
) -> Result<Tensor<T>> {
    let d = queries.cols();
    if keys.cols() != d || keys.rows() != values.rows() || mask.len() != keys.rows() {
        return Err(Error::data("attention inputs have mismatched shapes"));
    }
    if mask.iter().all(|&m| m == 0) {
        return Err(Error::data("attention with every key position masked"));
    }
    let dv = values.cols();
    let (_, out) = attend(queries.data(), keys.data(), values.data(), d, dv, Some(mask));
    Ok(Tensor::from_vec(&[queries.rows(), dv], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    /// Independent double-loop reference.
    fn naive(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], mask: &[u8]) -> Vec<Vec<f64>> {
        let d = q[0].len() as f64;
        q.iter()
            .map(|qi| {
                let logits: Vec<Option<f64>> = k
                    .iter()
                    .zip(mask)
                    .map(|(kj, &m)| (m == 1).then(|| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / d.sqrt()))
                    .collect();
                let max = logits.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logits.iter().map(|l| l.map_or(0.0, |x| (x - max).exp())).collect();
                let z: f64 = w.iter().sum();
                (0..v[0].len())
                    .map(|c| w.iter().zip(v).map(|(wj, vj)| wj / z * vj[c]).sum())
                    .collect()
            })
            .collect()
    }

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_vec(&[rows.len(), rows[0].len()], rows.concat())
    }

    #[test]
    fn single_position_returns_value_row() {
        let q = Tensor::from_vec(&[1, 2], vec![0.3, -1.0]);
        let k = Tensor::from_vec(&[1, 2], vec![2.0, 0.5]);
        let v = Tensor::from_vec(&[1, 3], vec![1.5, -2.0, 7.0]);
        let out = attention(&q, &k, &v, &[1]).unwrap();
        assert_eq!(out.data(), v.data());
    }

    #[test]
    fn equal_logits_average_unmasked_values() {
        let q: Tensor<f64> = Tensor::from_vec(&[2, 2], vec![0.0, 0.0, 0.0, 0.0]);
        let k = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0]);
        let v = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 100.0, 100.0]);
        let out = attention(&q, &k, &v, &[1, 1, 0]).unwrap();
        for r in 0..2 {
            assert!((out.at(r, 0) - 2.0).abs() < 1e-15);
            assert!((out.at(r, 1) - 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = crate::rng::seeded(3);
        for trial in 0..20 {
            let mut m = |r: usize, c: usize| -> Vec<Vec<f64>> {
                (0..r)
                    .map(|_| (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect()
            };
            let (q, k, v) = (m(3, 4), m(3, 4), m(3, 4));
            let mask = if trial % 2 == 0 { [1, 1, 1] } else { [1, 0, 1] };
            let expected = naive(&q, &k, &v, &mask);
            let got = attention(&t(&q), &t(&k), &t(&v), &mask).unwrap();
            for (i, row) in expected.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    assert!((got.at(i, j) - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn weight_rows_sum_to_one() {
        let mut rng = crate::rng::seeded(4);
        let q: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let k: Vec<f64> = (0..20).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (p, _) = attend(&q, &k, &k, 4, 4, Some(&[1, 1, 0, 1, 1]));
        for row in p.chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row[2], 0.0);
        }
    }

    #[test]
    fn all_masked_is_an_error() {
        let q = Tensor::from_vec(&[1, 2], vec![0.3, -1.0]);
        assert!(attention(&q, &q, &q, &[0]).is_err());
    }
}
