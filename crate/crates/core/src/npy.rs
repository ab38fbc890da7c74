//! Minimal reader and writer for the numpy `.npy` container.
//!
//! Reading accepts format versions 1.0 and 2.0, C order, and the plain numeric
//! descriptors (`f4`, `f8`, signed and unsigned integers of 1 to 8 bytes) in
//! either byte order. Writing always produces version 1.0, little endian, with
//! the header padded so the payload starts on a 64-byte boundary.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Uint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dtype {
    kind: Kind,
    size: usize,
    big_endian: bool,
}

impl Dtype {
    fn parse(descr: &str) -> Result<Self> {
        let mut chars = descr.chars();
        let (big_endian, rest) = match chars.next() {
            Some('<') | Some('|') | Some('=') => (false, chars.as_str()),
            Some('>') => (true, chars.as_str()),
            _ => (false, descr),
        };
        let mut rest_chars = rest.chars();
        let kind = match rest_chars.next() {
            Some('f') => Kind::Float,
            Some('i') => Kind::Int,
            Some('u') => Kind::Uint,
            Some('b') if rest_chars.as_str() == "1" => Kind::Uint,
            _ => return Err(Error::Format(format!("unsupported dtype descriptor '{descr}'"))),
        };
        let size: usize = rest_chars
            .as_str()
            .parse()
            .map_err(|_| Error::Format(format!("unsupported dtype descriptor '{descr}'")))?;
        let valid = match kind {
            Kind::Float => matches!(size, 4 | 8),
            Kind::Int | Kind::Uint => matches!(size, 1 | 2 | 4 | 8),
        };
        if !valid {
            return Err(Error::Format(format!("unsupported dtype descriptor '{descr}'")));
        }
        Ok(Dtype {
            kind,
            size,
            big_endian,
        })
    }

    fn decode(&self, bytes: &[u8]) -> Scalar {
        let mut buf = [0u8; 8];
        let b = &mut buf[..self.size];
        b.copy_from_slice(bytes);
        if self.big_endian {
            b.reverse();
        }
        match (self.kind, self.size) {
            (Kind::Float, 4) => Scalar::F(f32::from_le_bytes(buf[..4].try_into().unwrap()) as f64),
            (Kind::Float, _) => Scalar::F(f64::from_le_bytes(buf)),
            (Kind::Int, 1) => Scalar::I(buf[0] as i8 as i64),
            (Kind::Int, 2) => Scalar::I(i16::from_le_bytes([buf[0], buf[1]]) as i64),
            (Kind::Int, 4) => Scalar::I(i32::from_le_bytes(buf[..4].try_into().unwrap()) as i64),
            (Kind::Int, _) => Scalar::I(i64::from_le_bytes(buf)),
            (Kind::Uint, 1) => Scalar::I(buf[0] as i64),
            (Kind::Uint, 2) => Scalar::I(u16::from_le_bytes([buf[0], buf[1]]) as i64),
            (Kind::Uint, 4) => Scalar::I(u32::from_le_bytes(buf[..4].try_into().unwrap()) as i64),
            (Kind::Uint, _) => {
                let v = u64::from_le_bytes(buf);
                Scalar::I(i64::try_from(v).unwrap_or(i64::MAX))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Scalar {
    F(f64),
    I(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

fn read_header<R: Read>(reader: &mut R) -> Result<Header> {
    let mut magic = [0u8; 6];
    reader
        .read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for npy magic".into()))?;
    if magic != MAGIC {
        return Err(Error::Format("bad npy magic bytes".into()));
    }
    let mut version = [0u8; 2];
    reader
        .read_exact(&mut version)
        .map_err(|_| Error::Format("truncated npy version".into()))?;
    let header_len = match version[0] {
        1 => {
            let mut b = [0u8; 2];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::Format("truncated npy header length".into()))?;
            u16::from_le_bytes(b) as usize
        }
        2 | 3 => {
            let mut b = [0u8; 4];
            reader
                .read_exact(&mut b)
                .map_err(|_| Error::Format("truncated npy header length".into()))?;
            u32::from_le_bytes(b) as usize
        }
        v => return Err(Error::Format(format!("unsupported npy version {v}.{}", version[1]))),
    };
    let mut text = vec![0u8; header_len];
    reader
        .read_exact(&mut text)
        .map_err(|_| Error::Format("truncated npy header".into()))?;
    let text = String::from_utf8(text).map_err(|_| Error::Format("npy header is not text".into()))?;
    parse_header(&text)
}

/// Locates the value that follows `'key':` in the header dictionary.
fn dict_value<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    let pattern_single = format!("'{key}'");
    let pattern_double = format!("\"{key}\"");
    let pos = text
        .find(&pattern_single)
        .map(|p| p + pattern_single.len())
        .or_else(|| text.find(&pattern_double).map(|p| p + pattern_double.len()))
        .ok_or_else(|| Error::Format(format!("npy header missing '{key}'")))?;
    let rest = text[pos..].trim_start();
    let rest = rest
        .strip_prefix(':')
        .ok_or_else(|| Error::Format(format!("npy header malformed near '{key}'")))?;
    Ok(rest.trim_start())
}

fn parse_header(text: &str) -> Result<Header> {
    let text = text.trim();
    if !text.starts_with('{') {
        return Err(Error::Format("npy header is not a dictionary".into()));
    }
    let descr_raw = dict_value(text, "descr")?;
    let quote = descr_raw
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| Error::Format("npy descr is not a string".into()))?;
    let end = descr_raw[1..]
        .find(quote)
        .ok_or_else(|| Error::Format("unterminated npy descr".into()))?;
    let descr = descr_raw[1..1 + end].to_string();

    let fortran_raw = dict_value(text, "fortran_order")?;
    let fortran_order = if fortran_raw.starts_with("True") {
        true
    } else if fortran_raw.starts_with("False") {
        false
    } else {
        return Err(Error::Format("npy fortran_order is not a boolean".into()));
    };

    let shape_raw = dict_value(text, "shape")?;
    let shape_raw = shape_raw
        .strip_prefix('(')
        .ok_or_else(|| Error::Format("npy shape is not a tuple".into()))?;
    let close = shape_raw
        .find(')')
        .ok_or_else(|| Error::Format("unterminated npy shape".into()))?;
    let shape = shape_raw[..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim_end_matches('L')
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad npy shape entry '{s}'")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Header {
        descr,
        fortran_order,
        shape,
    })
}

fn read_scalars<R: Read>(reader: &mut R) -> Result<(Vec<usize>, Vec<Scalar>)> {
    let header = read_header(reader)?;
    if header.fortran_order {
        return Err(Error::Format("fortran-ordered npy arrays are not supported".into()));
    }
    let dtype = Dtype::parse(&header.descr)?;
    let count: usize = header.shape.iter().product();
    let mut payload = vec![0u8; count * dtype.size];
    reader
        .read_exact(&mut payload)
        .map_err(|_| Error::Format(format!("npy payload truncated: expected {count} elements")))?;
    let values = payload.chunks_exact(dtype.size).map(|c| dtype.decode(c)).collect();
    Ok((header.shape, values))
}

/// Reads an array of any supported numeric type, converting to `f64`.
pub fn read_f64<R: Read>(reader: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
    let (shape, values) = read_scalars(reader)?;
    let data = values
        .into_iter()
        .map(|s| match s {
            Scalar::F(v) => v,
            Scalar::I(v) => v as f64,
        })
        .collect();
    Ok((shape, data))
}

/// Reads an integer array. Float payloads are accepted when every value is integral.
pub fn read_i64<R: Read>(reader: &mut R) -> Result<(Vec<usize>, Vec<i64>)> {
    let (shape, values) = read_scalars(reader)?;
    let data = values
        .into_iter()
        .enumerate()
        .map(|(i, s)| match s {
            Scalar::I(v) => Ok(v),
            Scalar::F(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
            Scalar::F(v) => Err(Error::Data(format!("non-integral label {v} at flat index {i}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((shape, data))
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_text = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_text}, }}");
    // magic + version + u16 length + dict + '\n'
    let unpadded = MAGIC.len() + 2 + 2 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(unpadded + pad);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(Error::Shape(format!(
            "shape {shape:?} holds {expected} elements but {len} were supplied"
        )));
    }
    Ok(())
}

/// Writes `data` as a little-endian `<f8` array of the given shape.
pub fn write_f64<W: Write>(writer: &mut W, shape: &[usize], data: &[f64]) -> Result<()> {
    check_len(shape, data.len())?;
    writer.write_all(&header_bytes("<f8", shape))?;
    let mut payload = Vec::with_capacity(data.len() * 8);
    for v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&payload)?;
    Ok(())
}

/// Writes `data` as a little-endian `<i8` array of the given shape.
pub fn write_i64<W: Write>(writer: &mut W, shape: &[usize], data: &[i64]) -> Result<()> {
    check_len(shape, data.len())?;
    writer.write_all(&header_bytes("<i8", shape))?;
    let mut payload = Vec::with_capacity(data.len() * 8);
    for v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&payload)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_aligned_and_parses_back() {
        for shape in [vec![3], vec![2, 2], vec![86, 83, 224]] {
            let bytes = header_bytes("<f8", &shape);
            assert_eq!(bytes.len() % ALIGN, 0);
            assert_eq!(*bytes.last().unwrap(), b'\n');
            let header = read_header(&mut bytes.as_slice()).unwrap();
            assert_eq!(header.shape, shape);
            assert_eq!(header.descr, "<f8");
            assert!(!header.fortran_order);
        }
    }

    #[test]
    fn parses_numpy_style_header() {
        let h = parse_header("{'descr': '<u2', 'fortran_order': False, 'shape': (145, 145), }   ")
            .unwrap();
        assert_eq!(h.shape, vec![145, 145]);
        assert_eq!(Dtype::parse(&h.descr).unwrap().size, 2);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = header_bytes("<f8", &[1]);
        bytes[1] = b'X';
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(read_f64(&mut bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_fortran_order() {
        let text = "{'descr': '<f8', 'fortran_order': True, 'shape': (1,), }\n";
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&(text.len() as u16).to_le_bytes());
        bytes.extend_from_slice(text.as_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        assert!(matches!(read_f64(&mut bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let mut bytes = Vec::new();
        write_f64(&mut bytes, &[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(read_f64(&mut bytes.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn decodes_mixed_types() {
        let dt = Dtype::parse(">i2").unwrap();
        assert!(matches!(dt.decode(&[0xff, 0xfe]), Scalar::I(-2)));
        let dt = Dtype::parse("<f4").unwrap();
        assert!(matches!(dt.decode(&1.5f32.to_le_bytes()), Scalar::F(v) if v == 1.5));
        let dt = Dtype::parse("|u1").unwrap();
        assert!(matches!(dt.decode(&[200]), Scalar::I(200)));
        assert!(Dtype::parse("<c16").is_err());
    }

    #[test]
    fn integer_round_trip() {
        let mut bytes = Vec::new();
        write_i64(&mut bytes, &[2, 3], &[0, 1, 2, 3, 4, -5]).unwrap();
        let (shape, data) = read_i64(&mut bytes.as_slice()).unwrap();
        assert_eq!(shape, vec![2, 3]);
        assert_eq!(data, vec![0, 1, 2, 3, 4, -5]);
    }

    #[test]
    fn non_integral_labels_are_rejected() {
        let mut bytes = Vec::new();
        write_f64(&mut bytes, &[2], &[1.0, 1.5]).unwrap();
        assert!(matches!(read_i64(&mut bytes.as_slice()), Err(Error::Data(_))));
    }
}
