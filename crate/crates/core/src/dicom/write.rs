//! Minimal Part 10 writer used to produce test and demo fixtures.

use chrono::NaiveDate;

use super::parse::{is_long_vr, PIXEL_DATA};
use super::{DicomError, Keyword, Metadata, Tag, EXPLICIT_VR_LITTLE_ENDIAN};

const CT_IMAGE_STORAGE: &str = "1.2.840.10008.5.1.4.1.1.2";
const IMPLEMENTATION_CLASS_UID: &str = "2.25.216349028861730451398154364170521856231";

fn invalid(keyword: Keyword, reason: impl Into<String>) -> DicomError {
    DicomError::Validation {
        keyword: keyword.name(),
        reason: reason.into(),
    }
}

fn validate_uid(value: &str) -> Result<(), String> {
    if value.len() > 64 {
        return Err(format!("UID longer than 64 characters ({})", value.len()));
    }
    for component in value.split('.') {
        if component.is_empty() || !component.bytes().all(|b| b.is_ascii_digit()) {
            return Err("UID must be dot-separated digit groups".into());
        }
        if component.len() > 1 && component.starts_with('0') {
            return Err("UID component with leading zero".into());
        }
    }
    Ok(())
}

/// Checks `value` against the constraints of the keyword's VR.
pub fn validate_value(keyword: Keyword, value: &str) -> Result<(), DicomError> {
    if value.chars().any(|c| c as u32 > 0xFF) {
        return Err(invalid(keyword, "characters outside ISO 8859-1"));
    }
    if value.chars().any(|c| c.is_control()) {
        return Err(invalid(keyword, "control characters"));
    }
    if value.ends_with(' ') {
        return Err(invalid(keyword, "trailing space would be lost as padding"));
    }
    if value.contains('\\') {
        return Err(invalid(keyword, "multi-valued elements are not supported"));
    }
    let check = match keyword.vr() {
        "UI" => validate_uid(value),
        "CS" => {
            if value.len() > 16 {
                Err("CS longer than 16 characters".to_string())
            } else if !value.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b' ' || b == b'_') {
                Err("CS allows upper-case letters, digits, space and underscore".to_string())
            } else {
                Ok(())
            }
        }
        "DA" => NaiveDate::parse_from_str(value, "%Y%m%d")
            .ok()
            .filter(|_| value.len() == 8)
            .map(|_| ())
            .ok_or_else(|| format!("{value:?} is not a YYYYMMDD date")),
        "LO" if value.chars().count() > 64 => Err("LO longer than 64 characters".to_string()),
        "PN" if value.split('=').any(|group| group.chars().count() > 64) => {
            Err("PN component group longer than 64 characters".to_string())
        }
        _ => Ok(()),
    };
    check.map_err(|reason| invalid(keyword, reason))
}

fn encode_element(out: &mut Vec<u8>, tag: Tag, vr: &str, value: &[u8]) {
    out.extend_from_slice(&tag.group.to_le_bytes());
    out.extend_from_slice(&tag.element.to_le_bytes());
    out.extend_from_slice(vr.as_bytes());
    let vr_bytes: [u8; 2] = vr.as_bytes().try_into().expect("two-letter VR");
    if is_long_vr(&vr_bytes) {
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&(value.len() as u32).to_le_bytes());
    } else {
        out.extend_from_slice(&(value.len() as u16).to_le_bytes());
    }
    out.extend_from_slice(value);
}

/// Latin-1 bytes padded to even length (NUL for UIDs, space otherwise).
fn encode_text(vr: &str, value: &str) -> Vec<u8> {
    let mut bytes: Vec<u8> = value.chars().map(|c| c as u8).collect();
    if bytes.len() % 2 == 1 {
        bytes.push(if vr == "UI" { 0 } else { b' ' });
    }
    bytes
}

/// Writes a fixture file declaring Explicit VR Little Endian.
pub fn write_fixture(metadata: &Metadata) -> Result<Vec<u8>, DicomError> {
    write_fixture_with_syntax(metadata, EXPLICIT_VR_LITTLE_ENDIAN)
}

/// Writes a fixture file whose meta header declares `transfer_syntax`. The
/// body is always encoded explicit-VR little-endian.
///
/// Empty values are omitted. A short dummy pixel data element terminates
/// the file.
pub fn write_fixture_with_syntax(metadata: &Metadata, transfer_syntax: &str) -> Result<Vec<u8>, DicomError> {
    for (&keyword, value) in metadata {
        if !value.is_empty() {
            validate_value(keyword, value)?;
        }
    }
    let sop_uid = metadata
        .get(&Keyword::SopInstanceUid)
        .filter(|v| !v.is_empty())
        .map_or("1.2.3", String::as_str);

    let mut meta = Vec::new();
    encode_element(&mut meta, Tag::new(0x0002, 0x0001), "OB", &[0, 1]);
    encode_element(&mut meta, Tag::new(0x0002, 0x0002), "UI", &encode_text("UI", CT_IMAGE_STORAGE));
    encode_element(&mut meta, Tag::new(0x0002, 0x0003), "UI", &encode_text("UI", sop_uid));
    encode_element(&mut meta, Tag::new(0x0002, 0x0010), "UI", &encode_text("UI", transfer_syntax));
    encode_element(&mut meta, Tag::new(0x0002, 0x0012), "UI", &encode_text("UI", IMPLEMENTATION_CLASS_UID));

    let mut out = vec![0u8; 128];
    out.extend_from_slice(b"DICM");
    encode_element(&mut out, Tag::new(0x0002, 0x0000), "UL", &(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);

    let mut elements: Vec<(Keyword, &String)> = metadata
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, v)| (*k, v))
        .collect();
    elements.sort_by_key(|(k, _)| k.tag());
    for (keyword, value) in elements {
        encode_element(&mut out, keyword.tag(), keyword.vr(), &encode_text(keyword.vr(), value));
    }
    encode_element(&mut out, PIXEL_DATA, "OW", &[0, 0, 0, 0]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uid_rules() {
        assert!(validate_uid("1.2.840.10008.1.2.1").is_ok());
        assert!(validate_uid("1.02").is_err());
        assert!(validate_uid("1..2").is_err());
        assert!(validate_uid("1.2a").is_err());
        assert!(validate_uid(&format!("1.{}", "2".repeat(63))).is_err());
    }

    #[test]
    fn value_rules() {
        assert!(validate_value(Keyword::Modality, "CT").is_ok());
        assert!(validate_value(Keyword::Modality, "ct").is_err());
        assert!(validate_value(Keyword::StudyDate, "20100309").is_ok());
        assert!(validate_value(Keyword::StudyDate, "20100230").is_err());
        assert!(validate_value(Keyword::PatientName, "Maier^Peter").is_ok());
        assert!(validate_value(Keyword::PatientName, "Maier ").is_err());
        assert!(validate_value(Keyword::PatientId, "P\u{3a9}").is_err());
    }
}
