//! Gripper open/close keyframe detection.

use serde::{Deserialize, Serialize};

use super::TrajectoryError;
use crate::types::GripperTrace;

/// One open→closed (or closed→open) transition, as frame indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    /// Frame where the aperture starts moving out of the old state.
    pub start: i64,
    /// Mid-moment of the transition.
    pub mid: i64,
    /// First frame of the sustained new state.
    pub end: i64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframeSet {
    pub closings: Vec<Transition>,
    pub openings: Vec<Transition>,
}

impl KeyframeSet {
    pub fn is_empty(&self) -> bool {
        self.closings.is_empty() && self.openings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.closings.len() + self.openings.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeParams {
    pub open_thr: f64,
    pub closed_thr: f64,
    pub min_dwell: usize,
}

impl Default for KeyframeParams {
    fn default() -> Self {
        Self {
            open_thr: 0.8,
            closed_thr: 0.2,
            min_dwell: 3,
        }
    }
}

impl KeyframeParams {
    pub fn check(&self) -> Result<(), TrajectoryError> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.open_thr) || !unit.contains(&self.closed_thr) {
            return Err(TrajectoryError::BadParams("thresholds must lie in [0, 1]".into()));
        }
        if self.closed_thr >= self.open_thr {
            return Err(TrajectoryError::BadParams("closed_thr must be below open_thr".into()));
        }
        if self.min_dwell == 0 {
            return Err(TrajectoryError::BadParams("min_dwell must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Open,
    Closed,
}

/// Lower median of the positions strictly between `a` and `b`; `a` if none.
fn mid_between(a: usize, b: usize) -> usize {
    if b <= a + 1 {
        a
    } else {
        let count = b - a - 1;
        a + 1 + (count - 1) / 2
    }
}

/// Detects closing and opening transitions in a gripper trace.
///
/// A closing is confirmed at the first sample `e` with aperture
/// `<= closed_thr` whose next `min_dwell` samples all stay `<= closed_thr`.
/// Its `start` is the last sample `>= open_thr` before `e`, extended back
/// over the strictly decreasing run leading into it; its `mid` is the lower
/// median of the samples strictly between that last-open sample and `e`.
/// Openings mirror this. Reaching the opposite threshold inside the dwell
/// window is chatter and rejects the trace.
pub fn detect_keyframes(trace: &GripperTrace, params: &KeyframeParams) -> Result<KeyframeSet, TrajectoryError> {
    params.check()?;
    if trace.is_empty() {
        return Err(TrajectoryError::EmptyTrace);
    }
    let a = trace.apertures();
    let frame = |i: usize| trace.samples[i].frame_index;
    let n = a.len();
    let is_open = |v: f64| v >= params.open_thr;
    let is_closed = |v: f64| v <= params.closed_thr;

    let mut out = KeyframeSet::default();
    let mut state: Option<State> = None;
    let mut last_open: Option<usize> = None;
    let mut last_closed: Option<usize> = None;

    for i in 0..n {
        let v = a[i];
        match state {
            None => {
                if is_open(v) {
                    state = Some(State::Open);
                } else if is_closed(v) {
                    state = Some(State::Closed);
                }
            }
            Some(State::Open) if is_closed(v) => {
                let window = &a[i..(i + params.min_dwell).min(n)];
                if window.iter().any(|&w| is_open(w)) {
                    return Err(TrajectoryError::ChatterRejected { frame: frame(i) });
                }
                if window.len() == params.min_dwell && window.iter().all(|&w| is_closed(w)) {
                    let lo = last_open.expect("open state implies an open sample");
                    let mut start = lo;
                    while start > 0 && a[start - 1] > a[start] {
                        start -= 1;
                    }
                    out.closings.push(Transition {
                        start: frame(start),
                        mid: frame(mid_between(lo, i)),
                        end: frame(i),
                    });
                    state = Some(State::Closed);
                }
            }
            Some(State::Closed) if is_open(v) => {
                let window = &a[i..(i + params.min_dwell).min(n)];
                if window.iter().any(|&w| is_closed(w)) {
                    return Err(TrajectoryError::ChatterRejected { frame: frame(i) });
                }
                if window.len() == params.min_dwell && window.iter().all(|&w| is_open(w)) {
                    let lc = last_closed.expect("closed state implies a closed sample");
                    let mut start = lc;
                    while start > 0 && a[start - 1] < a[start] {
                        start -= 1;
                    }
                    out.openings.push(Transition {
                        start: frame(start),
                        mid: frame(mid_between(lc, i)),
                        end: frame(i),
                    });
                    state = Some(State::Open);
                }
            }
            _ => {}
        }
        if is_open(a[i]) && state == Some(State::Open) {
            last_open = Some(i);
        }
        if is_closed(a[i]) && state == Some(State::Closed) {
            last_closed = Some(i);
        }
    }
    Ok(out)
}
