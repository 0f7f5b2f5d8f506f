//! Minimal NIfTI-1 single-file reader and writer.
//!
//! Reads uint8 (code 2) and float32 (code 16) volumes in either byte order,
//! optionally gzip-compressed. Writes little-endian files with a 352-byte
//! data offset; paths ending in `.gz` are gzip-compressed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use super::{Dims3, Volume, VolumeData};
use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
pub const MAGIC: [u8; 4] = *b"n+1\0";
pub const DT_UINT8: i16 = 2;
pub const DT_FLOAT32: i16 = 16;

mod off {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const SFORM_CODE: usize = 254;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

const GZIP_PREFIX: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&GZIP_PREFIX) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    decode(&bytes)
}

/// Decodes an uncompressed NIfTI-1 byte stream.
pub fn decode(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Truncated {
            expected: HEADER_SIZE,
            found: bytes.len(),
        });
    }
    let endian = detect_endian(bytes)?;
    match endian {
        Endian::Little => decode_with::<LittleEndian>(bytes),
        Endian::Big => decode_with::<BigEndian>(bytes),
    }
}

/// Byte order of a header, detected from `sizeof_hdr == 348`.
pub fn detect_endian(header: &[u8]) -> Result<Endian> {
    let field = &header[off::SIZEOF_HDR..off::SIZEOF_HDR + 4];
    if LittleEndian::read_i32(field) == HEADER_SIZE as i32 {
        Ok(Endian::Little)
    } else if BigEndian::read_i32(field) == HEADER_SIZE as i32 {
        Ok(Endian::Big)
    } else {
        Err(Error::BadHeader(format!(
            "sizeof_hdr is {} in either byte order, expected 348",
            LittleEndian::read_i32(field)
        )))
    }
}

fn decode_with<B: ByteOrder>(bytes: &[u8]) -> Result<Volume> {
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[off::MAGIC..off::MAGIC + 4]);
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }

    let datatype = B::read_i16(&bytes[off::DATATYPE..]);
    let elem = match datatype {
        DT_UINT8 => 1,
        DT_FLOAT32 => 4,
        code => return Err(Error::UnsupportedDatatype(code)),
    };

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = B::read_i16(&bytes[off::DIM + 2 * i..]);
    }
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(Error::BadHeader(format!("dim[0] = {ndim} outside 1..=7")));
    }
    if dim[4..=ndim as usize].iter().any(|&d| d > 1) {
        return Err(Error::BadHeader(format!(
            "only 3D volumes are supported, dim = {dim:?}"
        )));
    }
    let axis = |i: usize| -> Result<usize> {
        if i > ndim as usize {
            return Ok(1);
        }
        match dim[i] {
            d if d > 0 => Ok(d as usize),
            d => Err(Error::BadHeader(format!("dim[{i}] = {d} is not positive"))),
        }
    };
    let (nx, ny, nz) = (axis(1)?, axis(2)?, axis(3)?);
    let dims = Dims3::new(nz, ny, nx);

    let pix = |i: usize| {
        let p = B::read_f32(&bytes[off::PIXDIM + 4 * i..]).abs();
        if p > 0.0 && p.is_finite() {
            p
        } else {
            1.0
        }
    };
    let spacing = [pix(3), pix(2), pix(1)];

    let vox_offset = B::read_f32(&bytes[off::VOX_OFFSET..]);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::BadHeader(format!("vox_offset {vox_offset} < 348")));
    }
    let start = vox_offset as usize;
    let expected = start + dims.len() * elem;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload = &bytes[start..expected];

    let data = match datatype {
        DT_UINT8 => VolumeData::U8(payload.to_vec()),
        _ => {
            let mut v = vec![0f32; dims.len()];
            B::read_f32_into(payload, &mut v);
            let slope = B::read_f32(&bytes[off::SCL_SLOPE..]);
            let inter = B::read_f32(&bytes[off::SCL_INTER..]);
            if slope.is_finite() && slope != 0.0 && (slope != 1.0 || inter != 0.0) {
                v.iter_mut().for_each(|x| *x = *x * slope + inter);
            }
            VolumeData::F32(v)
        }
    };
    Volume::new(dims, spacing, data)
}

/// Encodes a volume as a little-endian NIfTI-1 byte stream.
pub fn encode(v: &Volume) -> Vec<u8> {
    let dims = v.dims();
    let spacing = v.spacing();
    let (datatype, bitpix, elem) = match v.data() {
        VolumeData::U8(_) => (DT_UINT8, 8i16, 1usize),
        VolumeData::F32(_) => (DT_FLOAT32, 32, 4),
    };
    let mut out = vec![0u8; VOX_OFFSET + dims.len() * elem];
    let h = &mut out[..VOX_OFFSET];
    LittleEndian::write_i32(&mut h[off::SIZEOF_HDR..], HEADER_SIZE as i32);
    let dim: [i16; 8] = [
        3,
        dims.width as i16,
        dims.height as i16,
        dims.depth as i16,
        1,
        1,
        1,
        1,
    ];
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut h[off::DIM + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut h[off::DATATYPE..], datatype);
    LittleEndian::write_i16(&mut h[off::BITPIX..], bitpix);
    let pixdim = [1.0, spacing[2], spacing[1], spacing[0], 1.0, 1.0, 1.0, 1.0];
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut h[off::PIXDIM + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut h[off::VOX_OFFSET..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut h[off::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut h[off::SCL_INTER..], 0.0);
    // mm, unknown time unit
    h[off::XYZT_UNITS] = 2;
    LittleEndian::write_i16(&mut h[off::SFORM_CODE..], 1);
    let srow = [
        [spacing[2], 0.0, 0.0, 0.0],
        [0.0, spacing[1], 0.0, 0.0],
        [0.0, 0.0, spacing[0], 0.0],
    ];
    for (r, row) in srow.iter().enumerate() {
        for (c, val) in row.iter().enumerate() {
            LittleEndian::write_f32(&mut h[off::SROW_X + 16 * r + 4 * c..], *val);
        }
    }
    h[off::MAGIC..off::MAGIC + 4].copy_from_slice(&MAGIC);

    let payload = &mut out[VOX_OFFSET..];
    match v.data() {
        VolumeData::U8(d) => payload.copy_from_slice(d),
        VolumeData::F32(d) => LittleEndian::write_f32_into(d, payload),
    }
    out
}

/// Writes `v` to `path`, gzip-compressed when the path ends in `.gz`.
pub fn write_nifti(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if dim_overflow(v.dims()) {
        return Err(Error::InvalidVolume(format!(
            "dims {} exceed the NIfTI-1 int16 limit",
            v.dims()
        )));
    }
    let bytes = encode(v);
    let gz = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let bytes = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::new(6));
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn dim_overflow(d: Dims3) -> bool {
    d.as_array().iter().any(|&n| n > i16::MAX as usize)
}
