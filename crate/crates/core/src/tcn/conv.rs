/// Causal dilated convolution of a single channel.
///
/// `out[k] = sum_i filter[i] * x[k - dilation * i]`, taking `x[j] = 0` for
/// `j < 0`. This is the left zero-padded form with `(n - 1) * dilation`
/// padding, so the output has the input's length and never reads ahead.
pub fn causal_dilated_conv(x: &[f64], filter: &[f64], dilation: usize) -> Vec<f64> {
    assert!(dilation >= 1, "dilation must be positive");
    (0..x.len())
        .map(|k| {
            let mut acc = 0.0;
            for (i, &f) in filter.iter().enumerate() {
                let lag = dilation * i;
                if lag > k {
                    break;
                }
                acc += f * x[k - lag];
            }
            acc
        })
        .collect()
}

/// Receptive field of a stack of causal layers given `(kernel, dilation)`.
pub fn receptive_field(layers: impl IntoIterator<Item = (usize, usize)>) -> usize {
    1 + layers.into_iter().map(|(k, d)| (k - 1) * d).sum::<usize>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        assert_eq!(causal_dilated_conv(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0], 1), vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(causal_dilated_conv(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        let x = [0.5, -1.0, 2.0, 8.0, 3.0];
        for d in 1..5 {
            assert_eq!(causal_dilated_conv(&x, &[1.0], d), x.to_vec());
        }
    }

    #[test]
    fn no_lookahead() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let f = [0.3, -0.7, 1.1];
        let full = causal_dilated_conv(&x, &f, 2);
        for (k, &want) in full.iter().enumerate() {
            let mut cut = x;
            for v in cut.iter_mut().skip(k + 1) {
                *v = 99.0;
            }
            assert_eq!(causal_dilated_conv(&cut, &f, 2)[k], want);
        }
    }

    #[test]
    fn receptive_field_of_default_stack() {
        assert_eq!(receptive_field([(2, 1), (2, 2), (2, 4)]), 8);
    }
}
