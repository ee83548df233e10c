//! Circular arithmetic on directions in degrees.
//!
//! Directions live on (0, 360]; differences are reduced to (-180, 180].

/// Signed circular difference `a - b`, reduced to (-180, 180].
pub fn signed_diff_deg(a_deg: f64, b_deg: f64) -> f64 {
    let mut d = (a_deg - b_deg) % 360.0;
    if d <= -180.0 {
        d += 360.0;
    } else if d > 180.0 {
        d -= 360.0;
    }
    d
}

/// Circular distance in degrees, in [0, 180].
pub fn distance_deg(a_deg: f64, b_deg: f64) -> f64 {
    signed_diff_deg(a_deg, b_deg).abs()
}

/// Normalize an angle to (0, 360].
pub fn wrap_deg(a_deg: f64) -> f64 {
    let mut a = a_deg % 360.0;
    if a <= 0.0 {
        a += 360.0;
    }
    a
}

/// Circular midpoint of two directions: halfway along the shorter arc from
/// `a` to `b`. Antipodal inputs resolve deterministically to `a + 90`.
pub fn midpoint_deg(a_deg: f64, b_deg: f64) -> f64 {
    wrap_deg(a_deg + 0.5 * signed_diff_deg(b_deg, a_deg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_diff_reduces_to_half_open_interval() {
        assert_eq!(signed_diff_deg(10.0, 350.0), 20.0);
        assert_eq!(signed_diff_deg(350.0, 10.0), -20.0);
        assert_eq!(signed_diff_deg(270.0, 90.0), 180.0);
        assert_eq!(signed_diff_deg(90.0, 270.0), 180.0);
        assert_eq!(signed_diff_deg(45.0, 45.0), 0.0);
    }

    #[test]
    fn wrap_lands_in_zero_exclusive_360_inclusive() {
        assert_eq!(wrap_deg(360.0), 360.0);
        assert_eq!(wrap_deg(0.0), 360.0);
        assert_eq!(wrap_deg(-15.0), 345.0);
        assert_eq!(wrap_deg(725.0), 5.0);
    }

    #[test]
    fn midpoint_takes_shorter_arc() {
        assert_eq!(midpoint_deg(15.0, 75.0), 45.0);
        assert_eq!(midpoint_deg(350.0, 10.0), 360.0);
        // antipodal: deterministic tie-break at a + 90
        assert_eq!(midpoint_deg(15.0, 195.0), 105.0);
    }
}
