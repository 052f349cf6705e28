//! Binary time-tag files.
//!
//! Little-endian layout:
//!
//! ```text
//! offset size field
//!      0    4 magic "HBTT"
//!      4    2 version (u16) = 1
//!      6    2 reserved (u16) = 0
//!      8    8 resolution_fs (u64)
//!     16    8 duration_ticks (u64)
//!     24    8 record_count (u64)
//!     32    9 × record_count: channel (u8), tick (u64)
//! ```
//!
//! Records are sorted by `(tick, channel)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{TagRecord, TagStream};

pub const MAGIC: [u8; 4] = *b"HBTT";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 9;

#[derive(Debug, thiserror::Error)]
pub enum TagFileError {
    #[error("bad magic {0:02x?}, expected \"HBTT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported tag file version {0}")]
    UnsupportedVersion(u16),
    #[error("reserved header field is {0}, expected 0")]
    BadReserved(u16),
    #[error("truncated: header announces {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("{0} unexpected bytes after the last record")]
    TrailingBytes(u64),
    #[error("record {0} is out of (tick, channel) order")]
    Unsorted(u64),
    #[error("record {index} has tick {tick} >= duration {duration}")]
    TickOutOfRange { index: u64, tick: u64, duration: u64 },
    #[error("resolution must be positive")]
    ZeroResolution,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl TagFileError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u8 {
        match self {
            TagFileError::BadMagic(_) => 1,
            TagFileError::UnsupportedVersion(_) => 2,
            TagFileError::Truncated { .. } => 3,
            TagFileError::Unsorted(_) => 4,
            TagFileError::BadReserved(_) => 5,
            TagFileError::TrailingBytes(_) => 6,
            TagFileError::TickOutOfRange { .. } => 7,
            TagFileError::ZeroResolution => 8,
            TagFileError::Io(_) => 9,
        }
    }
}

pub fn encode(tags: &TagStream, w: &mut impl Write) -> std::io::Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..6].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&tags.resolution_fs.to_le_bytes());
    header[16..24].copy_from_slice(&tags.duration_ticks.to_le_bytes());
    header[24..32].copy_from_slice(&(tags.records.len() as u64).to_le_bytes());
    w.write_all(&header)?;
    let mut rec = [0u8; RECORD_LEN];
    for r in &tags.records {
        rec[0] = r.channel;
        rec[1..].copy_from_slice(&r.tick.to_le_bytes());
        w.write_all(&rec)?;
    }
    Ok(())
}

pub fn to_bytes(tags: &TagStream) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + RECORD_LEN * tags.records.len());
    encode(tags, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn decode(r: &mut impl Read) -> Result<TagStream, TagFileError> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_up_to(r, &mut header)?;
    if got >= 4 && header[0..4] != MAGIC {
        return Err(TagFileError::BadMagic(header[0..4].try_into().unwrap()));
    }
    if got < HEADER_LEN {
        if got < 4 {
            let mut m = [0u8; 4];
            m[..got].copy_from_slice(&header[..got]);
            if m[..got] != MAGIC[..got] {
                return Err(TagFileError::BadMagic(m));
            }
        }
        return Err(TagFileError::Truncated { expected: HEADER_LEN as u64, actual: got as u64 });
    }
    let u16_at = |o: usize| u16::from_le_bytes(header[o..o + 2].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(TagFileError::UnsupportedVersion(version));
    }
    if u16_at(6) != 0 {
        return Err(TagFileError::BadReserved(u16_at(6)));
    }
    let resolution_fs = u64_at(8);
    let duration_ticks = u64_at(16);
    let count = u64_at(24);
    if resolution_fs == 0 {
        return Err(TagFileError::ZeroResolution);
    }
    let expected = HEADER_LEN as u64 + count.saturating_mul(RECORD_LEN as u64);

    let mut records = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = vec![0u8; RECORD_LEN * 8192];
    let mut seen = 0u64;
    let mut prev: Option<TagRecord> = None;
    while seen < count {
        let want = ((count - seen) as usize).min(8192) * RECORD_LEN;
        let got = read_up_to(r, &mut buf[..want])?;
        for chunk in buf[..got - got % RECORD_LEN].chunks_exact(RECORD_LEN) {
            let rec = TagRecord { channel: chunk[0], tick: u64::from_le_bytes(chunk[1..].try_into().unwrap()) };
            if prev.is_some_and(|p| p.key() > rec.key()) {
                return Err(TagFileError::Unsorted(seen));
            }
            if rec.tick >= duration_ticks {
                return Err(TagFileError::TickOutOfRange { index: seen, tick: rec.tick, duration: duration_ticks });
            }
            prev = Some(rec);
            records.push(rec);
            seen += 1;
        }
        if got < want {
            let actual = HEADER_LEN as u64 + seen * RECORD_LEN as u64 + (got % RECORD_LEN) as u64;
            return Err(TagFileError::Truncated { expected, actual });
        }
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(TagFileError::TrailingBytes(rest.len() as u64));
    }
    Ok(TagStream { resolution_fs, duration_ticks, records })
}

fn read_up_to(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn write_tags(tags: &TagStream, path: &Path) -> Result<(), TagFileError> {
    let mut w = BufWriter::with_capacity(1 << 20, File::create(path)?);
    encode(tags, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_tags(path: &Path) -> Result<TagStream, TagFileError> {
    decode(&mut BufReader::with_capacity(1 << 20, File::open(path)?))
}

/// `channel,tick` CSV export.
pub fn write_tags_csv(tags: &TagStream, path: &Path) -> Result<(), TagFileError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "channel,tick")?;
    for r in &tags.records {
        writeln!(w, "{},{}", r.channel, r.tick)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(records: Vec<TagRecord>) -> TagStream {
        TagStream { resolution_fs: 82_200, duration_ticks: 1 << 40, records }
    }

    #[test]
    fn empty_stream_is_header_only() {
        let bytes = to_bytes(&stream(vec![]));
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..4], b"HBTT");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &82_200u64.to_le_bytes());
    }

    #[test]
    fn record_layout() {
        let bytes = to_bytes(&stream(vec![TagRecord { channel: 1, tick: 2 }]));
        assert_eq!(bytes.len(), 41);
        assert_eq!(&bytes[32..], &[0x01, 0x02, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(&bytes[24..32], &1u64.to_le_bytes());
    }

    #[test]
    fn distinct_error_codes() {
        let good = to_bytes(&stream(vec![TagRecord { channel: 0, tick: 5 }, TagRecord { channel: 1, tick: 5 }]));

        let mut bad = good.clone();
        bad[0] = b'X';
        let e1 = decode(&mut &bad[..]).unwrap_err();
        assert!(matches!(e1, TagFileError::BadMagic(_)));

        let mut bad = good.clone();
        bad[4] = 2;
        let e2 = decode(&mut &bad[..]).unwrap_err();
        assert!(matches!(e2, TagFileError::UnsupportedVersion(2)));

        let e3 = decode(&mut &good[..good.len() - 3]).unwrap_err();
        assert!(matches!(e3, TagFileError::Truncated { expected: 50, actual: 47 }));

        let mut bad = good.clone();
        bad[32] = 1;
        bad[41] = 0;
        bad[42] = 4;
        let e4 = decode(&mut &bad[..]).unwrap_err();
        assert!(matches!(e4, TagFileError::Unsorted(1)));

        let codes = [e1.code(), e2.code(), e3.code(), e4.code()];
        for i in 0..4 {
            for j in 0..i {
                assert_ne!(codes[i], codes[j]);
            }
        }
        assert!(matches!(decode(&mut &good[..10]).unwrap_err(), TagFileError::Truncated { .. }));
        assert!(matches!(decode(&mut &b"HB"[..]).unwrap_err(), TagFileError::Truncated { .. }));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(mut raw in prop::collection::vec((0u8..4, 0u64..1_000_000), 0..300)) {
            raw.sort_by_key(|&(c, t)| (t, c));
            let tags = TagStream {
                resolution_fs: 1000,
                duration_ticks: 1_000_000,
                records: raw.into_iter().map(|(channel, tick)| TagRecord { channel, tick }).collect(),
            };
            let bytes = to_bytes(&tags);
            prop_assert_eq!(bytes.len(), 32 + 9 * tags.records.len());
            let back = decode(&mut &bytes[..]).unwrap();
            prop_assert_eq!(&back, &tags);
            prop_assert_eq!(to_bytes(&back), bytes);
        }
    }
}
