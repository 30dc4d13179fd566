//! Base-32 geohash codec and same-precision neighbor lookup.

use crate::error::{Error, Result};
use crate::geo::{GeoBBox, LatLon};

pub const ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";
pub const MAX_PRECISION: usize = 12;

/// Compass order used for neighbor arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::North,
        Direction::NorthEast,
        Direction::East,
        Direction::SouthEast,
        Direction::South,
        Direction::SouthWest,
        Direction::West,
        Direction::NorthWest,
    ];

    /// (Δlat cells, Δlon cells)
    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::North => (1, 0),
            Direction::NorthEast => (1, 1),
            Direction::East => (0, 1),
            Direction::SouthEast => (-1, 1),
            Direction::South => (-1, 0),
            Direction::SouthWest => (-1, -1),
            Direction::West => (0, -1),
            Direction::NorthWest => (1, -1),
        }
    }
}

fn char_index(c: u8) -> Option<u8> {
    ALPHABET.iter().position(|&a| a == c).map(|i| i as u8)
}

/// Bits allotted to (longitude, latitude) at a precision; longitude gets the extra odd bit.
fn bit_split(precision: usize) -> (u32, u32) {
    let total = 5 * precision as u32;
    (total.div_ceil(2), total / 2)
}

pub fn encode(lat: f64, lon: f64, precision: usize) -> Result<String> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(Error::Argument(format!("geohash precision {precision} not in 1..=12")));
    }
    if !LatLon::new(lat, lon).is_valid() {
        return Err(Error::Argument(format!("coordinate {lat},{lon} out of range")));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut out = String::with_capacity(precision);
    let mut even = true;
    for _ in 0..precision {
        let mut idx = 0u8;
        for _ in 0..5 {
            idx <<= 1;
            if even {
                let mid = 0.5 * (lon_lo + lon_hi);
                if lon >= mid {
                    idx |= 1;
                    lon_lo = mid;
                } else {
                    lon_hi = mid;
                }
            } else {
                let mid = 0.5 * (lat_lo + lat_hi);
                if lat >= mid {
                    idx |= 1;
                    lat_lo = mid;
                } else {
                    lat_hi = mid;
                }
            }
            even = !even;
        }
        out.push(ALPHABET[idx as usize] as char);
    }
    Ok(out)
}

/// Integer cell coordinates of a code: (lon index, lat index, lon bits, lat bits).
fn to_indices(code: &str) -> Result<(u64, u64, u32, u32)> {
    if code.is_empty() || code.len() > MAX_PRECISION {
        return Err(Error::Argument(format!("geohash {code:?} must have 1..=12 characters")));
    }
    let (mut lon_i, mut lat_i) = (0u64, 0u64);
    let mut even = true;
    for (position, ch) in code.chars().enumerate() {
        let idx = u8::try_from(ch)
            .ok()
            .and_then(char_index)
            .ok_or(Error::InvalidGeohash { ch, position })?;
        for b in (0..5).rev() {
            let bit = u64::from((idx >> b) & 1);
            if even {
                lon_i = (lon_i << 1) | bit;
            } else {
                lat_i = (lat_i << 1) | bit;
            }
            even = !even;
        }
    }
    let (lon_bits, lat_bits) = bit_split(code.len());
    Ok((lon_i, lat_i, lon_bits, lat_bits))
}

fn from_indices(lon_i: u64, lat_i: u64, precision: usize) -> String {
    let (lon_bits, lat_bits) = bit_split(precision);
    let (mut lon_left, mut lat_left) = (lon_bits, lat_bits);
    let mut out = String::with_capacity(precision);
    let mut even = true;
    for _ in 0..precision {
        let mut idx = 0u8;
        for _ in 0..5 {
            idx <<= 1;
            if even {
                lon_left -= 1;
                idx |= ((lon_i >> lon_left) & 1) as u8;
            } else {
                lat_left -= 1;
                idx |= ((lat_i >> lat_left) & 1) as u8;
            }
            even = !even;
        }
        out.push(ALPHABET[idx as usize] as char);
    }
    out
}

/// Exact cell rectangle of a code.
pub fn decode(code: &str) -> Result<GeoBBox> {
    let (lon_i, lat_i, lon_bits, lat_bits) = to_indices(code)?;
    let lon_span = 360.0 / (1u64 << lon_bits) as f64;
    let lat_span = 180.0 / (1u64 << lat_bits) as f64;
    Ok(GeoBBox {
        min_lat: -90.0 + lat_i as f64 * lat_span,
        max_lat: -90.0 + (lat_i + 1) as f64 * lat_span,
        min_lon: -180.0 + lon_i as f64 * lon_span,
        max_lon: -180.0 + (lon_i + 1) as f64 * lon_span,
    })
}

/// Same-precision neighbor in one direction. Longitude wraps; latitude may not cross a pole.
pub fn neighbor(code: &str, dir: Direction) -> Result<String> {
    let (lon_i, lat_i, lon_bits, lat_bits) = to_indices(code)?;
    let (dlat, dlon) = dir.offset();
    let lat_n = lat_i as i64 + dlat;
    if lat_n < 0 || lat_n >= (1i64 << lat_bits) {
        return Err(Error::PolarGeohash(code.to_string()));
    }
    let lon_n = (lon_i as i64 + dlon).rem_euclid(1i64 << lon_bits);
    Ok(from_indices(lon_n as u64, lat_n as u64, code.len()))
}

/// The 8 surrounding cells in [`Direction::ALL`] order.
pub fn neighbors(code: &str) -> Result<[String; 8]> {
    let (_, lat_i, _, lat_bits) = to_indices(code)?;
    if lat_i == 0 || lat_i + 1 == (1u64 << lat_bits) {
        return Err(Error::PolarGeohash(code.to_string()));
    }
    let mut out: [String; 8] = Default::default();
    for (slot, dir) in out.iter_mut().zip(Direction::ALL) {
        *slot = neighbor(code, dir)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_char_origin() {
        // bits lon≥0:1, lat≥0:1, lon<90:0, lat<45:0, lon<45:0 → 0b11000 = 24 → 's'
        assert_eq!(encode(0.0, 0.0, 1).unwrap(), "s");
        let b = decode("s").unwrap();
        assert_eq!((b.min_lat, b.max_lat, b.min_lon, b.max_lon), (0.0, 45.0, 0.0, 45.0));
    }

    #[test]
    fn known_reference_code() {
        assert_eq!(encode(57.64911, 10.40744, 6).unwrap(), "u4pruy");
        assert_eq!(encode(57.64911, 10.40744, 11).unwrap(), "u4pruydqqvj");
    }

    #[test]
    fn level_six_spans() {
        let b = decode("u4pruy").unwrap();
        assert!((b.max_lon - b.min_lon - 360.0 / 32768.0).abs() < 1e-15);
        assert!((b.max_lat - b.min_lat - 180.0 / 32768.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_characters_report_position() {
        for (code, pos) in [("a", 0), ("u4i", 2), ("ul", 1), ("o", 0)] {
            match decode(code) {
                Err(Error::InvalidGeohash { position, .. }) => assert_eq!(position, pos),
                other => panic!("{code}: {other:?}"),
            }
        }
        assert!(decode("").is_err());
    }

    #[test]
    fn out_of_range_inputs() {
        assert!(encode(91.0, 0.0, 6).is_err());
        assert!(encode(0.0, 0.0, 0).is_err());
        assert!(encode(0.0, 0.0, 13).is_err());
    }

    #[test]
    fn neighbor_round_trips() {
        let g = "tdr1wx";
        let e = neighbor(g, Direction::East).unwrap();
        assert_eq!(neighbor(&e, Direction::West).unwrap(), g);
        let s = neighbor(g, Direction::South).unwrap();
        assert_eq!(neighbor(&s, Direction::North).unwrap(), g);
        let ns = neighbors(g).unwrap();
        let set: std::collections::HashSet<_> = ns.iter().collect();
        assert_eq!(set.len(), 8);
        assert!(!set.contains(&g.to_string()));
    }

    #[test]
    fn polar_cells_rejected() {
        let top = encode(89.9999, 10.0, 4).unwrap();
        assert!(matches!(neighbors(&top), Err(Error::PolarGeohash(_))));
    }
}
