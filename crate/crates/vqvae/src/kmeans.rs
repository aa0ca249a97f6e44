use rand::Rng;
use vqat_core::rng::permutation;
use vqat_core::Scalar;

use crate::codebook::Codebook;
use crate::quantize::nearest_indices;

/// Lloyd iterations seeded from distinct data rows. Clusters that empty
/// out keep their previous centre. With fewer rows than codewords the
/// surplus codewords keep their current values.
pub fn kmeans_init<T: Scalar, R: Rng>(cb: &mut Codebook<T>, rows: &[T], iters: usize, rng: &mut R) {
    let (n, dim) = (cb.size(), cb.dim());
    let m = rows.len() / dim;
    if m == 0 {
        return;
    }
    let order = permutation(m, rng);
    {
        let values = cb.vectors.value.data_mut();
        for (i, &r) in order.iter().take(n).enumerate() {
            values[i * dim..(i + 1) * dim].copy_from_slice(&rows[r * dim..(r + 1) * dim]);
        }
    }
    for _ in 0..iters {
        let assign = nearest_indices(rows, cb);
        let mut sums = vec![0.0f64; n * dim];
        let mut counts = vec![0usize; n];
        for (j, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for k in 0..dim {
                sums[a * dim + k] += rows[j * dim + k].as_f64();
            }
        }
        let values = cb.vectors.value.data_mut();
        for i in 0..n {
            if counts[i] > 0 {
                for k in 0..dim {
                    values[i * dim + k] = T::from_f64(sums[i * dim + k] / counts[i] as f64);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqat_core::rng::seeded;
    use vqat_core::Tensor;

    #[test]
    fn separates_two_blobs() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let c = if i % 2 == 0 { 5.0 } else { -5.0 };
            rows.extend([c + 0.01 * i as f64, c]);
        }
        let mut cb = Codebook::from_tensor(Tensor::<f64>::zeros([2, 2]));
        kmeans_init(&mut cb, &rows, 10, &mut seeded(0));
        let mut firsts = [cb.row(0)[1], cb.row(1)[1]];
        firsts.sort_by(f64::total_cmp);
        assert_eq!(firsts, [-5.0, 5.0]);
    }
}
