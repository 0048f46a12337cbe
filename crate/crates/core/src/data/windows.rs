use nalgebra::DMatrix;

use super::SignalFrame;

/// Past context and known future of one prediction instant.
///
/// `past_*` rows end at the anchor sample (inclusive); `future_*` rows are
/// the `P` samples that follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorWindow {
    pub anchor_index: usize,
    pub past_inputs: DMatrix<f64>,
    pub past_outputs: DMatrix<f64>,
    pub future_inputs: DMatrix<f64>,
    pub future_outputs: DMatrix<f64>,
}

impl AnchorWindow {
    pub fn from_frame(frame: &SignalFrame, anchor: usize, past_len: usize, horizon: usize) -> Self {
        let start = anchor + 1 - past_len;
        Self {
            anchor_index: anchor,
            past_inputs: frame.inputs(start, past_len),
            past_outputs: frame.outputs(start, past_len),
            future_inputs: frame.inputs(anchor + 1, horizon),
            future_outputs: frame.outputs(anchor + 1, horizon),
        }
    }

    pub fn past_len(&self) -> usize {
        self.past_outputs.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.future_outputs.nrows()
    }

    /// Frame-relative sample range `[first, last]` touched by this window.
    pub fn sample_span(&self) -> (usize, usize) {
        (
            self.anchor_index + 1 - self.past_len(),
            self.anchor_index + self.horizon(),
        )
    }
}

/// Anchor indices `past_len-1, past_len-1+stride, …` admitting a full window.
pub fn anchor_indices(n_samples: usize, past_len: usize, horizon: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    if past_len == 0 || n_samples < past_len + horizon {
        return Vec::new();
    }
    let count = (n_samples - past_len - horizon) / stride + 1;
    (0..count).map(|k| past_len - 1 + k * stride).collect()
}

/// All windows of one section; a frame that is too short yields none.
pub fn make_anchor_windows(
    frame: &SignalFrame,
    past_len: usize,
    horizon: usize,
    stride: usize,
) -> Vec<AnchorWindow> {
    anchor_indices(frame.n_samples(), past_len, horizon, stride)
        .into_iter()
        .map(|a| AnchorWindow::from_frame(frame, a, past_len, horizon))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ChannelSpec, Role};
    use chrono::{TimeZone, Utc};

    fn frame(n: usize) -> SignalFrame {
        let channels = vec![
            ChannelSpec::new("u", "", Role::Input),
            ChannelSpec::new("y", "", Role::Output),
        ];
        let t = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        SignalFrame::new(
            t,
            600,
            channels,
            DMatrix::from_fn(n, 2, |r, c| (r * 10 + c) as f64),
        )
        .unwrap()
    }

    #[test]
    fn boundary_and_formula_counts() {
        assert_eq!(make_anchor_windows(&frame(20 + 48), 20, 48, 1).len(), 1);
        assert_eq!(make_anchor_windows(&frame(20 + 48 + 9), 20, 48, 1).len(), 10);
        assert_eq!(make_anchor_windows(&frame(20 + 48 + 9), 20, 48, 4).len(), 3);
        assert!(make_anchor_windows(&frame(30), 20, 48, 1).is_empty());
    }

    #[test]
    fn window_contents_line_up() {
        let f = frame(12);
        let w = &make_anchor_windows(&f, 3, 2, 1)[2];
        assert_eq!(w.anchor_index, 4);
        assert_eq!(w.past_outputs.as_slice(), &[21.0, 31.0, 41.0]);
        assert_eq!(w.past_inputs.as_slice(), &[20.0, 30.0, 40.0]);
        assert_eq!(w.future_outputs.as_slice(), &[51.0, 61.0]);
        assert_eq!(w.sample_span(), (2, 6));
    }

    #[test]
    fn windows_stay_inside_their_section() {
        let whole = frame(200);
        let sections = [whole.slice_rows(0, 90), whole.slice_rows(90, 110)];
        let mut spans = Vec::new();
        for (k, s) in sections.iter().enumerate() {
            let offset = if k == 0 { 0 } else { 90 };
            for w in make_anchor_windows(s, 5, 8, 1) {
                let (a, b) = w.sample_span();
                spans.push((k, a + offset, b + offset));
            }
        }
        for (k, a, b) in spans {
            let crosses = a < 90 && b >= 90;
            assert!(!crosses, "window of section {k} spans [{a},{b}]");
        }
    }
}
