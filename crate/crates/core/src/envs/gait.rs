//! Synthetic 18-dimensional locomotion analogue. The first coordinate is a
//! forward position; the rest are an oscillator phase pair, six joint angles
//! and nine joint rates on very different scales. Only the drive action's
//! sign decides the direction of travel, and no coordinate other than the
//! position carries that sign.

pub const STATE_DIM: usize = 18;
pub const ACTION_DIM: usize = 6;

const JOINT_SCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.7, 1.0];
const RATE_SCALES: [f64; 9] = [1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.5, 8.0, 10.0];
const BACKWARD_GAIN: f64 = 1.25;
const STRIDE_FREQUENCY: f64 = 6.0;
const JOINT_BLEND: f64 = 0.5;
const RATE_BLEND: f64 = 0.3;

/// At rest at position `x`.
pub fn initial_state(x: f64) -> Vec<f64> {
    let mut s = vec![0.0; STATE_DIM];
    s[0] = x;
    s[1] = 1.0;
    s
}

/// Forward speed produced by the drive action (backward travel is faster).
pub fn speed(drive: f64) -> f64 {
    if drive >= 0.0 {
        drive
    } else {
        BACKWARD_GAIN * drive
    }
}

pub fn step(s: &[f64], a: &[f64], h: f64) -> Vec<f64> {
    let v = speed(a[0]);
    let pace = v.abs();
    let mut next = vec![0.0; STATE_DIM];
    next[0] = s[0] + h * v;

    let turn = h * STRIDE_FREQUENCY * pace;
    let (st, ct) = turn.sin_cos();
    let (c, sn) = (s[1], s[2]);
    let (c2, s2) = (c * ct - sn * st, sn * ct + c * st);
    let norm = (c2 * c2 + s2 * s2).sqrt().max(1e-12);
    next[1] = c2 / norm;
    next[2] = s2 / norm;
    let phase = next[2].atan2(next[1]);

    for (j, scale) in JOINT_SCALES.iter().enumerate() {
        let target = scale
            * (pace * (phase + j as f64 * std::f64::consts::FRAC_PI_3).sin() + 0.1 * a[1 + j % 5]);
        next[3 + j] = s[3 + j] + JOINT_BLEND * (target - s[3 + j]);
    }
    for (i, scale) in RATE_SCALES.iter().enumerate() {
        let target = scale * pace * (phase + i as f64 * 0.7).cos();
        next[9 + i] = s[9 + i] + RATE_BLEND * (target - s[9 + i]);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_is_faster() {
        assert_eq!(speed(-1.0), -1.25);
        assert_eq!(speed(0.8), 0.8);
    }

    #[test]
    fn other_coordinates_ignore_direction() {
        let s0 = initial_state(0.0);
        let mut a = vec![0.8, 0.1, -0.2, 0.3, 0.0, 0.5];
        let mut fwd = s0.clone();
        for _ in 0..30 {
            fwd = step(&fwd, &a, 0.1);
        }
        a[0] = -0.8 / 1.25;
        let mut bwd = s0;
        for _ in 0..30 {
            bwd = step(&bwd, &a, 0.1);
        }
        assert!((fwd[0] + bwd[0]).abs() < 1e-12);
        for i in 1..STATE_DIM {
            assert!((fwd[i] - bwd[i]).abs() < 1e-12, "coordinate {i}");
        }
    }

    #[test]
    fn at_rest_stays_put() {
        let s = initial_state(-1.0);
        assert_eq!(step(&s, &[0.0; 6], 0.1), s);
    }
}
