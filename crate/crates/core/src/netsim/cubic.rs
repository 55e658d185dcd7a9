//! CUBIC window growth: `W(t) = C (t - K)^3 + W_max` with
//! `K = cbrt(W_max * beta / C)`, `t` in seconds since the last window
//! reduction.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicState {
    /// Window at the last congestion event.
    pub w_max: f64,
    /// Growth constant (window units per s^3).
    pub c: f64,
    /// Multiplicative decrease fraction; the window restarts at
    /// `(1 - beta) * w_max`.
    pub beta: f64,
    /// Seconds; start of the current growth epoch.
    pub epoch_start: f64,
    /// Seconds from `epoch_start` until the window is back at `w_max`.
    pub k: f64,
    /// Lower clamp on the window.
    pub floor: f64,
}

impl CubicState {
    pub fn new(w_max: f64, c: f64, beta: f64, floor: f64, epoch_start: f64) -> Self {
        Self {
            w_max,
            c,
            beta,
            epoch_start,
            k: cubic_k(w_max, c, beta),
            floor,
        }
    }

    /// State whose window equals `w_max` right at `now`, i.e. the epoch began
    /// `K` seconds earlier. Used to start a flow at its initial window.
    pub fn at_plateau(w_max: f64, c: f64, beta: f64, floor: f64, now: f64) -> Self {
        let mut s = Self::new(w_max, c, beta, floor, now);
        s.epoch_start = now - s.k;
        s
    }

    pub fn window_at(&self, now: f64) -> f64 {
        cubic_window(self, now - self.epoch_start)
    }
}

pub fn cubic_k(w_max: f64, c: f64, beta: f64) -> f64 {
    libm::cbrt(w_max * beta / c)
}

/// `C (t - K)^3 + W_max`, clamped below by the floor window.
///
/// The cubic is expanded around `t = 0` for `t < K/2` and evaluated directly
/// otherwise, so `W(0) = (1 - beta) W_max` and `W(K) = W_max` come out exact.
pub fn cubic_window(state: &CubicState, t: f64) -> f64 {
    let k = state.k;
    let w = if t < 0.5 * k {
        // C (t-K)^3 + W_max = (1-beta) W_max + C t (t^2 - 3tK + 3K^2)
        (1.0 - state.beta) * state.w_max + state.c * t * (t * t - 3.0 * t * k + 3.0 * k * k)
    } else {
        let d = t - k;
        state.c * d * d * d + state.w_max
    };
    w.max(state.floor)
}

/// Multiplicative decrease: remember the window at the event and restart
/// growth from `now`.
pub fn on_congestion_event(state: &CubicState, current_window: f64, now: f64) -> CubicState {
    CubicState::new(current_window, state.c, state.beta, state.floor, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference(c: f64, beta: f64, w_max: f64, t: f64) -> f64 {
        let k = (w_max * beta / c).powf(1.0 / 3.0);
        c * (t - k).powi(3) + w_max
    }

    #[test]
    fn plateau_and_origin_are_exact() {
        let s = CubicState::new(10.0, 0.4, 0.7, 0.0, 0.0);
        assert_eq!(cubic_window(&s, s.k), 10.0);
        assert_eq!(cubic_window(&s, 0.0), (1.0 - 0.7) * 10.0);
    }

    #[test]
    fn worked_example() {
        let s = CubicState::new(10.0, 0.4, 0.7, 0.0, 0.0);
        assert!((s.k - 2.596_247_5).abs() < 1e-6);
        let w1 = cubic_window(&s, 1.0);
        assert!((w1 - reference(0.4, 0.7, 10.0, 1.0)).abs() < 1e-12);
        // the rounded hand value 8.3742 carries K to four places only
        assert!((w1 - 8.3731).abs() < 1e-4);
    }

    #[test]
    fn floor_clamps() {
        let s = CubicState::new(10.0, 0.4, 0.7, 5.0, 0.0);
        assert_eq!(cubic_window(&s, 0.0), 5.0);
    }

    #[test]
    fn congestion_event_restarts_at_reduced_window() {
        let s = CubicState::new(4.0, 0.4, 0.7, 0.0, 0.0);
        let e = on_congestion_event(&s, 10.0, 3.0);
        assert_eq!(e.w_max, 10.0);
        assert_eq!(e.epoch_start, 3.0);
        assert_eq!(e.window_at(3.0), (1.0 - 0.7) * 10.0);
        let e2 = on_congestion_event(&e, 7.5, 4.0);
        assert_eq!(e2.w_max, 7.5);
    }

    #[test]
    fn at_plateau_starts_at_w_max() {
        let s = CubicState::at_plateau(20.0, 0.4, 0.7, 1.0, 2.0);
        assert!((s.window_at(2.0) - 20.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_direct_formula(w_max in 1.0..1e6f64, c in 0.01..100.0f64, beta in 0.05..0.95f64, frac in 0.0..3.0f64) {
            let s = CubicState::new(w_max, c, beta, 0.0, 0.0);
            prop_assert!((s.k - libm::cbrt(w_max * beta / c)).abs() <= 1e-12 * s.k);
            let t = frac * s.k;
            let direct = c * (t - s.k).powi(3) + w_max;
            let w = cubic_window(&s, t);
            prop_assert!((w - direct).abs() <= 1e-12 * w_max.max(direct.abs()));
        }
    }
}
