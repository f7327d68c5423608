//! Small float helpers that `core` does not provide.

pub(crate) fn abs(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        x
    }
}

pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// Floor with a snap-to-integer guard: values within `1e-12` of an integer
/// are treated as that integer before flooring.
pub(crate) fn snapped_floor(x: f64) -> f64 {
    let nearest = round(x);
    if abs(x - nearest) <= 1e-12 * abs(nearest).max(1.0) {
        nearest
    } else {
        floor(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapped_floor_rescues_values_just_below_an_integer() {
        assert_eq!(snapped_floor(2.0 - 1e-14), 2.0);
        assert_eq!(snapped_floor(1.999), 1.0);
        assert_eq!(snapped_floor(0.585), 0.0);
    }
}
