//! Unit conventions.
//!
//! Timestamps are `i64` femtoseconds. Physical parameters are `f64` with the
//! unit in the name (`_ps`, `_ns`, `_mm`, rates in events per second).

pub const FS_PER_PS: f64 = 1e3;
pub const FS_PER_NS: f64 = 1e6;
pub const FS_PER_S: f64 = 1e15;
pub const PS_PER_S: f64 = 1e12;

/// Speed of light in mm/ps.
pub const C_MM_PER_PS: f64 = 0.299_792_458;

/// Largest span of one simulation segment (about 2.56 h).
pub const MAX_SEGMENT_FS: i64 = i64::MAX;

pub fn ps_to_fs(ps: f64) -> i64 {
    (ps * FS_PER_PS).round() as i64
}

pub fn fs_to_ps(fs: i64) -> f64 {
    fs as f64 / FS_PER_PS
}

pub fn s_to_fs(s: f64) -> i64 {
    (s * FS_PER_S).round() as i64
}

pub fn fs_to_s(fs: i64) -> f64 {
    fs as f64 / FS_PER_S
}

/// Converts a time in ps to an exact integer number of femtoseconds, or
/// `None` if it is not (to 1e-6 fs) an integer.
pub fn ps_to_exact_fs(ps: f64) -> Option<i64> {
    let fs = ps * FS_PER_PS;
    let r = fs.round();
    ((fs - r).abs() < 1e-6 && r.abs() < i64::MAX as f64).then_some(r as i64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_unit_is_exact() {
        assert_eq!(ps_to_exact_fs(82.2), Some(82_200));
        assert_eq!(ps_to_exact_fs(0.0005), None);
    }
}
