use num_complex::Complex64;

/// One LSB of a Q15 sample, `2^-15`.
pub const Q15_STEP: f64 = 1.0 / 32768.0;
/// Largest representable value, `1 - 2^-15`.
pub const Q15_MAX: f64 = 1.0 - Q15_STEP;

/// Complex sample as two signed Q15 fixed-point components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Q15Sample {
    pub real_q15: i16,
    pub imag_q15: i16,
}

impl Q15Sample {
    pub fn is_zero(&self) -> bool {
        self.real_q15 == 0 && self.imag_q15 == 0
    }
}

fn encode_component(x: f64) -> i16 {
    // f64::round rounds half away from zero; out-of-range input saturates
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Quantizes each component to Q15, saturating outside `[-1, 1 - 2^-15]`.
pub fn q15_encode(c: Complex64) -> Q15Sample {
    Q15Sample { real_q15: encode_component(c.re), imag_q15: encode_component(c.im) }
}

pub fn q15_decode(s: Q15Sample) -> Complex64 {
    Complex64::new(s.real_q15 as f64 * Q15_STEP, s.imag_q15 as f64 * Q15_STEP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn half_is_16384() {
        assert_eq!(q15_encode(Complex64::new(0.5, 0.0)), Q15Sample { real_q15: 16384, imag_q15: 0 });
    }

    #[test]
    fn minus_one_is_minimum() {
        assert_eq!(q15_encode(Complex64::new(-1.0, 0.0)).real_q15, -32768);
        assert_eq!(q15_decode(Q15Sample { real_q15: -32768, imag_q15: 0 }).re, -1.0);
    }

    #[test]
    fn round_trip_within_one_step() {
        let c = Complex64::new(0.123, 0.456);
        let d = q15_decode(q15_encode(c));
        assert!((d.re - c.re).abs() <= Q15_STEP);
        assert!((d.im - c.im).abs() <= Q15_STEP);
    }

    #[test]
    fn ties_round_away_from_zero() {
        let half_lsb = Q15_STEP / 2.0;
        assert_eq!(q15_encode(Complex64::new(half_lsb, -half_lsb)), Q15Sample { real_q15: 1, imag_q15: -1 });
        assert_eq!(q15_encode(Complex64::new(2.5 * Q15_STEP, 0.0)).real_q15, 3);
    }

    #[test]
    fn saturates_silently() {
        let s = q15_encode(Complex64::new(1.5, -7.0));
        assert_eq!(s, Q15Sample { real_q15: 32767, imag_q15: -32768 });
        assert_eq!(q15_decode(s).re, Q15_MAX);
    }

    proptest! {
        #[test]
        fn decoded_error_is_bounded(re in -1.0f64..Q15_MAX, im in -1.0f64..Q15_MAX) {
            let c = Complex64::new(re, im);
            let d = q15_decode(q15_encode(c));
            prop_assert!((d.re - re).abs() <= Q15_STEP / 2.0 + 1e-15);
            prop_assert!((d.im - im).abs() <= Q15_STEP / 2.0 + 1e-15);
            prop_assert!(d.re >= -1.0 && d.re <= Q15_MAX);
        }
    }
}
