//! Byte-count conversions for human-readable output.

/// 2^30 bytes. Reported model and transfer sizes use this unit.
pub const GIB: u64 = 1 << 30;

pub fn gib(bytes: u64) -> f64 {
    bytes as f64 / GIB as f64
}

pub fn gib_f(bytes: f64) -> f64 {
    bytes / GIB as f64
}

/// `"6.93 GiB"`-style rendering with two decimals.
pub fn format_gib(bytes: u64) -> String {
    format!("{:.2} GiB", gib(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting() {
        assert_eq!(format_gib(GIB / 2), "0.50 GiB");
        assert_eq!(gib(3 * GIB), 3.0);
    }
}
