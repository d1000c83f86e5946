use serde::{Deserialize, Serialize};

/// Per-stratum early-stopping counter: the stratum stops once the grid
/// maximum of the acquisition has been below `delta` for
/// `consecutive_required` iterations in a row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingState {
    pub consecutive_below: usize,
    pub stopped: bool,
}

impl StoppingState {
    /// Records one iteration's maximum acquisition and returns whether the
    /// stratum is now stopped. Stopped states are left untouched.
    pub fn update(&mut self, max_acquisition: f64, delta: f64, consecutive_required: usize) -> bool {
        if self.stopped {
            return true;
        }
        if max_acquisition < delta {
            self.consecutive_below += 1;
        } else {
            self.consecutive_below = 0;
        }
        if self.consecutive_below >= consecutive_required {
            self.stopped = true;
        }
        self.stopped
    }
}

/// Functional form of [`StoppingState::update`].
pub fn check_stopping(
    state: StoppingState,
    max_acquisition: f64,
    delta: f64,
    consecutive_required: usize,
) -> StoppingState {
    let mut next = state;
    next.update(max_acquisition, delta, consecutive_required);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run(stream: &[f64], delta: f64) -> Vec<StoppingState> {
        let mut s = StoppingState::default();
        stream
            .iter()
            .map(|&a| {
                s.update(a, delta, 3);
                s
            })
            .collect()
    }

    #[test]
    fn stops_on_third_consecutive() {
        let states = run(&[0.1, 0.1, 0.1], 0.5);
        assert_eq!(
            states.iter().map(|s| s.stopped).collect::<Vec<_>>(),
            [false, false, true]
        );
    }

    #[test]
    fn reset_mid_streak() {
        let states = run(&[0.1, 0.1, 0.9, 0.1], 0.5);
        let last = states.last().unwrap();
        assert_eq!((last.consecutive_below, last.stopped), (1, false));
    }

    #[test]
    fn stopped_is_absorbing() {
        let states = run(&[0.1, 0.1, 0.1, 0.9, 0.9], 0.5);
        assert!(states[3..].iter().all(|s| s.stopped && s.consecutive_below == 3));
    }

    #[test]
    fn equal_to_threshold_is_not_below() {
        assert_eq!(
            check_stopping(StoppingState::default(), 0.5, 0.5, 1),
            StoppingState::default()
        );
    }

    proptest! {
        #[test]
        fn zero_delta_never_stops(stream in prop::collection::vec(0.0f64..10.0, 0..200)) {
            prop_assert!(run(&stream, 0.0).iter().all(|s| !s.stopped && s.consecutive_below == 0));
        }
    }
}
