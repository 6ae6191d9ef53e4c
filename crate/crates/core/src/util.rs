use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Type-7 quantile (linear interpolation between order statistics) of an
/// already sorted slice. Returns `None` for an empty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Independent RNG stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Hour of day (0..=23) in local civil time.
pub fn local_hour(timestamp: i64, utc_offset_minutes: i32) -> u32 {
    let local = timestamp + i64::from(utc_offset_minutes) * 60;
    (local.rem_euclid(SECONDS_PER_DAY) / 3600) as u32
}

/// Day of week in local civil time, 0 = Monday.
pub fn local_day_of_week(timestamp: i64, utc_offset_minutes: i32) -> u32 {
    let local = timestamp + i64::from(utc_offset_minutes) * 60;
    // 1970-01-01 was a Thursday.
    (local.div_euclid(SECONDS_PER_DAY) + 3).rem_euclid(7) as u32
}

pub fn encode_f64_hex(values: &[f64]) -> String {
    let mut out = String::with_capacity(values.len() * 16);
    for v in values {
        out.push_str(&format!("{:016x}", v.to_bits()));
    }
    out
}

pub fn decode_f64_hex(text: &str) -> Option<Vec<f64>> {
    if text.len() % 16 != 0 || !text.is_ascii() {
        return None;
    }
    text.as_bytes()
        .chunks(16)
        .map(|chunk| {
            let s = std::str::from_utf8(chunk).ok()?;
            u64::from_str_radix(s, 16).ok().map(f64::from_bits)
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Splits row indices into gap-free segments: a timestamp delta larger than
/// twice the nominal cadence starts a new segment. Returns a segment id per
/// row.
pub fn segment_ids(timestamps: &[i64], cadence_s: i64) -> Vec<usize> {
    let mut ids = Vec::with_capacity(timestamps.len());
    let mut current = 0;
    for (i, &t) in timestamps.iter().enumerate() {
        if i > 0 && t - timestamps[i - 1] > 2 * cadence_s {
            current += 1;
        }
        ids.push(current);
    }
    ids
}
