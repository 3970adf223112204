//! Part 10 reader for the Explicit VR Little Endian transfer syntax.

use super::{DicomDataset, DicomElement, DicomError, Tag, EXPLICIT_VR_LITTLE_ENDIAN};

const PREAMBLE: usize = 128;
const MAGIC: &[u8; 4] = b"DICM";

pub(crate) const PIXEL_DATA: Tag = Tag::new(0x7FE0, 0x0010);
const TRANSFER_SYNTAX: Tag = Tag::new(0x0002, 0x0010);
const ITEM: Tag = Tag::new(0xFFFE, 0xE000);
const ITEM_DELIMITATION: Tag = Tag::new(0xFFFE, 0xE00D);
const SEQUENCE_DELIMITATION: Tag = Tag::new(0xFFFE, 0xE0DD);
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

/// Nested sequences deeper than this are treated as corrupt input.
const MAX_SEQUENCE_DEPTH: usize = 32;

const KNOWN_VRS: [&[u8; 2]; 34] = [
    b"AE", b"AS", b"AT", b"CS", b"DA", b"DS", b"DT", b"FD", b"FL", b"IS", b"LO", b"LT", b"OB", b"OD", b"OF", b"OL",
    b"OV", b"OW", b"PN", b"SH", b"SL", b"SQ", b"SS", b"ST", b"SV", b"TM", b"UC", b"UI", b"UL", b"UN", b"UR", b"US",
    b"UT", b"UV",
];

/// VRs whose explicit encoding uses two reserved bytes and a 32-bit length.
const LONG_VRS: [&[u8; 2]; 13] = [
    b"OB", b"OD", b"OF", b"OL", b"OV", b"OW", b"SQ", b"SV", b"UC", b"UN", b"UR", b"UT", b"UV",
];

const STRING_VRS: [&[u8; 2]; 17] = [
    b"AE", b"AS", b"CS", b"DA", b"DS", b"DT", b"IS", b"LO", b"LT", b"PN", b"SH", b"ST", b"TM", b"UC", b"UI", b"UR",
    b"UT",
];

pub(crate) fn is_long_vr(vr: &[u8; 2]) -> bool {
    LONG_VRS.contains(&vr)
}

/// Single-byte decoding (ISO 8859-1), trailing space/NUL padding removed.
pub(crate) fn decode_text(raw: &[u8]) -> String {
    let end = raw
        .iter()
        .rposition(|&b| b != b' ' && b != 0)
        .map_or(0, |i| i + 1);
    raw[..end].iter().map(|&b| b as char).collect()
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.offset
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DicomError> {
        if self.remaining() < n {
            return Err(DicomError::Truncated { offset: self.offset });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, DicomError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DicomError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn tag(&mut self) -> Result<Tag, DicomError> {
        let group = self.u16()?;
        let element = self.u16()?;
        Ok(Tag::new(group, element))
    }

    fn peek_tag(&self) -> Option<Tag> {
        let b = self.bytes.get(self.offset..self.offset + 4)?;
        Some(Tag::new(u16::from_le_bytes([b[0], b[1]]), u16::from_le_bytes([b[2], b[3]])))
    }

    /// VR and value length of an explicit-VR element whose tag was consumed.
    fn vr_and_length(&mut self, tag: Tag) -> Result<([u8; 2], u32), DicomError> {
        let start = self.offset;
        let vr_bytes = self.take(2)?;
        let vr = [vr_bytes[0], vr_bytes[1]];
        if !KNOWN_VRS.contains(&&vr) {
            return Err(DicomError::InvalidVr {
                tag,
                offset: start,
                vr: String::from_utf8_lossy(&vr).into_owned(),
            });
        }
        let length = if is_long_vr(&vr) {
            self.take(2)?;
            self.u32()?
        } else {
            u32::from(self.u16()?)
        };
        Ok((vr, length))
    }

    /// Reads the next element. Sequences are consumed and returned with an
    /// empty value.
    fn element(&mut self, tag: Tag, depth: usize) -> Result<DicomElement, DicomError> {
        let element_start = self.offset - 4;
        let (vr, length) = self.vr_and_length(tag)?;
        let vr_text = String::from_utf8_lossy(&vr).into_owned();
        if &vr == b"SQ" {
            self.skip_sequence(length, depth)?;
            return Ok(DicomElement {
                tag,
                vr: vr_text,
                length: 0,
                raw: Vec::new(),
                text: None,
            });
        }
        if length == UNDEFINED_LENGTH {
            return Err(DicomError::Malformed {
                offset: element_start,
                reason: format!("undefined length on {vr_text} element {tag}"),
            });
        }
        let raw = self
            .take(length as usize)
            .map_err(|_| DicomError::Truncated { offset: element_start })?
            .to_vec();
        let text = STRING_VRS.contains(&&vr).then(|| decode_text(&raw));
        Ok(DicomElement {
            tag,
            vr: vr_text,
            length,
            raw,
            text,
        })
    }

    fn skip_sequence(&mut self, length: u32, depth: usize) -> Result<(), DicomError> {
        if depth >= MAX_SEQUENCE_DEPTH {
            return Err(DicomError::Malformed {
                offset: self.offset,
                reason: "sequence nesting too deep".into(),
            });
        }
        if length != UNDEFINED_LENGTH {
            let at = self.offset;
            self.take(length as usize)
                .map_err(|_| DicomError::Truncated { offset: at })?;
            return Ok(());
        }
        loop {
            let at = self.offset;
            let tag = self.tag()?;
            let item_length = self.u32()?;
            if tag == SEQUENCE_DELIMITATION {
                return Ok(());
            }
            if tag != ITEM {
                return Err(DicomError::Malformed {
                    offset: at,
                    reason: format!("expected item or sequence delimiter, found {tag}"),
                });
            }
            if item_length != UNDEFINED_LENGTH {
                self.take(item_length as usize)
                    .map_err(|_| DicomError::Truncated { offset: at })?;
                continue;
            }
            // undefined-length item: nested elements up to the item delimiter
            loop {
                let tag = self.tag()?;
                if tag == ITEM_DELIMITATION {
                    self.u32()?;
                    break;
                }
                self.element(tag, depth + 1)?;
            }
        }
    }
}

/// Parses a Part 10 file up to (not including) pixel data.
pub fn parse_file(bytes: &[u8]) -> Result<DicomDataset, DicomError> {
    if bytes.len() < PREAMBLE + MAGIC.len() {
        return Err(DicomError::TooShort { length: bytes.len() });
    }
    if &bytes[PREAMBLE..PREAMBLE + 4] != MAGIC {
        return Err(DicomError::MissingMagic);
    }
    let mut reader = Reader {
        bytes,
        offset: PREAMBLE + MAGIC.len(),
    };
    let mut dataset = DicomDataset::default();
    let mut transfer_syntax = None;
    while let Some(tag) = reader.peek_tag() {
        if tag.group != 0x0002 {
            break;
        }
        reader.offset += 4;
        let element = reader.element(tag, 0)?;
        if tag == TRANSFER_SYNTAX {
            transfer_syntax = element.text.clone();
        }
        dataset.push(element);
    }
    match transfer_syntax.as_deref() {
        Some(EXPLICIT_VR_LITTLE_ENDIAN) => {}
        Some(other) => return Err(DicomError::UnsupportedTransferSyntax(other.to_string())),
        None => return Err(DicomError::MissingTransferSyntax),
    }
    while reader.remaining() > 0 {
        let tag = reader.tag()?;
        if tag == PIXEL_DATA {
            break;
        }
        if tag.group == 0xFFFE {
            return Err(DicomError::Malformed {
                offset: reader.offset - 4,
                reason: format!("unexpected delimiter {tag} at top level"),
            });
        }
        let element = reader.element(tag, 0)?;
        dataset.push(element);
    }
    Ok(dataset)
}
