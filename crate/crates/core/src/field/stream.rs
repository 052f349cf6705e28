use crate::{Error, Result};

/// Photon arrival times on one optical path, in femtoseconds.
///
/// Arrivals are strictly increasing and lie in `[0, duration_fs]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PhotonStream {
    arrivals: Vec<i64>,
    duration_fs: i64,
}

impl PhotonStream {
    pub fn new(arrivals: Vec<i64>, duration_fs: i64) -> Result<Self> {
        if duration_fs < 0 {
            return Err(Error::param("duration", "must be >= 0"));
        }
        if arrivals.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("arrivals", "must be strictly increasing"));
        }
        if arrivals.first().is_some_and(|&t| t < 0) || arrivals.last().is_some_and(|&t| t > duration_fs) {
            return Err(Error::param("arrivals", "must lie within [0, duration]"));
        }
        Ok(PhotonStream { arrivals, duration_fs })
    }

    pub fn empty(duration_fs: i64) -> Self {
        PhotonStream { arrivals: Vec::new(), duration_fs }
    }

    /// Builds a stream from arbitrary times: out-of-window times are dropped,
    /// the rest sorted, and exact ties separated by 1 fs.
    pub fn from_unsorted(mut times: Vec<i64>, duration_fs: i64) -> Self {
        times.retain(|&t| (0..=duration_fs).contains(&t));
        times.sort_unstable();
        make_strict(&mut times);
        times.retain(|&t| t <= duration_fs);
        PhotonStream { arrivals: times, duration_fs }
    }

    pub(crate) fn from_parts_unchecked(arrivals: Vec<i64>, duration_fs: i64) -> Self {
        debug_assert!(arrivals.windows(2).all(|w| w[0] < w[1]));
        PhotonStream { arrivals, duration_fs }
    }

    pub fn arrivals(&self) -> &[i64] {
        &self.arrivals
    }

    pub fn into_arrivals(self) -> Vec<i64> {
        self.arrivals
    }

    pub fn duration_fs(&self) -> i64 {
        self.duration_fs
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    /// Mean rate in events per second.
    pub fn rate(&self) -> f64 {
        if self.duration_fs == 0 {
            return 0.0;
        }
        self.len() as f64 / crate::units::fs_to_s(self.duration_fs)
    }

    /// Counts in consecutive disjoint windows of `window_fs`, covering the
    /// stream's duration (a trailing partial window is discarded).
    pub fn window_counts(&self, window_fs: i64) -> Vec<u32> {
        assert!(window_fs > 0);
        let n = (self.duration_fs / window_fs) as usize;
        let mut counts = vec![0u32; n];
        for &t in &self.arrivals {
            let k = (t / window_fs) as usize;
            if k < n {
                counts[k] += 1;
            }
        }
        counts
    }
}

pub(crate) fn make_strict(times: &mut [i64]) {
    for i in 1..times.len() {
        if times[i] <= times[i - 1] {
            times[i] = times[i - 1] + 1;
        }
    }
}
