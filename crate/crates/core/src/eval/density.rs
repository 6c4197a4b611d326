use crate::error::{Error, Result};

/// Mean number of events inside each of the `length - window + 1` windows
/// `[s, s + window)`.
///
/// An event at frame `e` lies in the windows starting at
/// `max(0, e + 1 - window) ..= min(e, length - window)`, so the total count is
/// accumulated per event instead of per window.
pub fn event_density(event_frames: &[usize], window: usize, length: usize) -> Result<f64> {
    if window == 0 || window > length {
        return Err(Error::invalid(
            "event_density",
            format!("window {window} must lie in [1, {length}]"),
        ));
    }
    let last_start = length - window;
    let mut total = 0usize;
    for &e in event_frames {
        if e >= length {
            return Err(Error::invalid(
                "event_density",
                format!("event frame {e} outside a video of {length} frames"),
            ));
        }
        let first = (e + 1).saturating_sub(window);
        let last = e.min(last_start);
        if last >= first {
            total += last - first + 1;
        }
    }
    Ok(total as f64 / (last_start + 1) as f64)
}
