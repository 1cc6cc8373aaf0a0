//! Little-endian binary framing shared by the persisted sparse index and
//! dense store. Each artifact starts with an 8-byte magic and a u32 format
//! version.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub(crate) struct Writer<'p> {
    out: BufWriter<File>,
    path: &'p Path,
}

impl<'p> Writer<'p> {
    pub fn create(path: &'p Path, magic: &[u8; 8], version: u32) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = Writer {
            out: BufWriter::new(file),
            path,
        };
        w.bytes(magic)?;
        w.u32(version)?;
        Ok(w)
    }

    fn wrap<T>(&self, r: std::io::Result<T>) -> Result<T> {
        r.map_err(|e| Error::io(self.path, e))
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        let r = self.out.write_all(b);
        self.wrap(r)
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        let r = self.out.write_u32::<LittleEndian>(v);
        self.wrap(r)
    }

    pub fn f32(&mut self, v: f32) -> Result<()> {
        let r = self.out.write_f32::<LittleEndian>(v);
        self.wrap(r)
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }

    pub fn finish(mut self) -> Result<()> {
        let r = self.out.flush();
        self.wrap(r)
    }
}

pub(crate) struct Reader<'p> {
    input: BufReader<File>,
    path: &'p Path,
}

impl<'p> Reader<'p> {
    pub fn open(path: &'p Path, magic: &[u8; 8], version: u32) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader {
            input: BufReader::new(file),
            path,
        };
        let mut found = [0u8; 8];
        r.fill(&mut found)?;
        if &found != magic {
            return Err(r.bad("unrecognized magic"));
        }
        let found_version = r.u32()?;
        if found_version != version {
            return Err(r.bad(format!("format version {found_version}, expected {version}")));
        }
        Ok(r)
    }

    pub fn bad(&self, reason: impl Into<String>) -> Error {
        Error::BadArtifact {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn wrap<T>(&self, r: std::io::Result<T>) -> Result<T> {
        r.map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => self.bad("truncated"),
            _ => Error::io(self.path, e),
        })
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        let r = self.input.read_exact(buf);
        self.wrap(r)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let r = self.input.read_u32::<LittleEndian>();
        self.wrap(r)
    }

    pub fn f32(&mut self) -> Result<f32> {
        let r = self.input.read_f32::<LittleEndian>();
        self.wrap(r)
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.fill(&mut buf)?;
        String::from_utf8(buf).map_err(|_| self.bad("invalid utf-8 string"))
    }

    /// Errors unless the input is fully consumed.
    pub fn finish(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.input.read(&mut probe) {
            Ok(0) => Ok(()),
            Ok(_) => Err(self.bad("trailing bytes")),
            Err(e) => Err(Error::io(self.path, e)),
        }
    }
}
