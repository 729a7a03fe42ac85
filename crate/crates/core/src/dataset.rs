//! On-disk token corpus: a `.bin` payload of little-endian tokens and an
//! `.idx` header holding document boundaries.
//!
//! Index layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes   "PVK1"
//! version      u32       1
//! dtype        u8        1 = u16, 2 = u32
//! doc_count    u64
//! offsets      u64 × (doc_count + 1), offsets[0] = 0, non-decreasing
//! vocab_size   u64       0 = unknown
//! ```
//!
//! The payload is the concatenation of every document's tokens with no
//! padding, so `offsets[doc_count] * width == len(.bin)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use memmap2::Mmap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PVK1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U16,
    U32,
}

impl DType {
    pub const fn code(self) -> u8 {
        match self {
            DType::U16 => 1,
            DType::U32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(DType::U16),
            2 => Some(DType::U32),
            _ => None,
        }
    }

    /// Bytes per token.
    pub const fn width(self) -> usize {
        match self {
            DType::U16 => 2,
            DType::U32 => 4,
        }
    }

    pub const fn max_token(self) -> u64 {
        match self {
            DType::U16 => u16::MAX as u64,
            DType::U32 => u32::MAX as u64,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            DType::U16 => "u16",
            DType::U32 => "u32",
        }
    }

    /// Narrowest width that can hold every id below `vocab_size`.
    pub fn for_vocab(vocab_size: u64) -> Self {
        if vocab_size <= DType::U16.max_token() + 1 {
            DType::U16
        } else {
            DType::U32
        }
    }

    #[inline]
    fn decode(self, bytes: &[u8], i: usize) -> u32 {
        match self {
            DType::U16 => u16::from_le_bytes([bytes[2 * i], bytes[2 * i + 1]]) as u32,
            DType::U32 => u32::from_le_bytes([
                bytes[4 * i],
                bytes[4 * i + 1],
                bytes[4 * i + 2],
                bytes[4 * i + 3],
            ]),
        }
    }
}

impl std::str::FromStr for DType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u16" => Ok(DType::U16),
            "u32" => Ok(DType::U32),
            other => Err(Error::Config(format!("unknown dtype {other:?} (expected u16 or u32)"))),
        }
    }
}

/// Resolve the `.bin` / `.idx` pair for a dataset base path.
///
/// A trailing `.bin` or `.idx` on `base` is stripped first, so either file of
/// the pair can be named.
pub fn pair_paths(base: &Path) -> (PathBuf, PathBuf) {
    let s = base.as_os_str().to_string_lossy();
    let stem = s
        .strip_suffix(".bin")
        .or_else(|| s.strip_suffix(".idx"))
        .unwrap_or(&s)
        .to_string();
    (PathBuf::from(format!("{stem}.bin")), PathBuf::from(format!("{stem}.idx")))
}

/// Streaming writer: tokens go straight to `.bin`, offsets are kept in memory
/// and the `.idx` is written by [`DatasetWriter::finish`].
pub struct DatasetWriter {
    dtype: DType,
    vocab_size: u64,
    bin: BufWriter<File>,
    bin_path: PathBuf,
    idx_path: PathBuf,
    offsets: Vec<u64>,
}

impl DatasetWriter {
    pub fn create(base: &Path, dtype: DType) -> Result<Self> {
        let (bin_path, idx_path) = pair_paths(base);
        let file = File::create(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
        Ok(Self {
            dtype,
            vocab_size: 0,
            bin: BufWriter::new(file),
            bin_path,
            idx_path,
            offsets: vec![0],
        })
    }

    /// Declare the vocabulary size; every later token must be below it.
    pub fn with_vocab_size(mut self, vocab_size: u64) -> Self {
        self.vocab_size = vocab_size;
        self
    }

    pub fn push(&mut self, doc: &[u32]) -> Result<()> {
        let index = self.offsets.len() - 1;
        check_tokens(doc, index, self.dtype, self.vocab_size)?;
        let mut buf = Vec::with_capacity(doc.len() * self.dtype.width());
        encode_tokens(doc, self.dtype, &mut buf);
        self.bin.write_all(&buf).map_err(|e| Error::io(&self.bin_path, e))?;
        let last = *self.offsets.last().expect("offsets start with 0");
        self.offsets.push(last + doc.len() as u64);
        Ok(())
    }

    pub fn finish(mut self) -> Result<(PathBuf, PathBuf)> {
        self.bin.flush().map_err(|e| Error::io(&self.bin_path, e))?;
        let idx = encode_index(self.dtype, &self.offsets, self.vocab_size);
        std::fs::write(&self.idx_path, idx).map_err(|e| Error::io(&self.idx_path, e))?;
        Ok((self.bin_path, self.idx_path))
    }
}

/// Write `docs` as a dataset pair at `base`.
pub fn write_dataset<D: AsRef<[u32]>>(
    docs: impl IntoIterator<Item = D>,
    dtype: DType,
    base: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let mut writer = DatasetWriter::create(base, dtype)?;
    for doc in docs {
        writer.push(doc.as_ref())?;
    }
    writer.finish()
}

/// Encode `docs` into `(idx, bin)` byte buffers.
pub fn encode_dataset<D: AsRef<[u32]>>(
    docs: impl IntoIterator<Item = D>,
    dtype: DType,
    vocab_size: u64,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut bin = Vec::new();
    let mut offsets = vec![0u64];
    for (index, doc) in docs.into_iter().enumerate() {
        let doc = doc.as_ref();
        check_tokens(doc, index, dtype, vocab_size)?;
        encode_tokens(doc, dtype, &mut bin);
        offsets.push(offsets[index] + doc.len() as u64);
    }
    Ok((encode_index(dtype, &offsets, vocab_size), bin))
}

fn check_tokens(doc: &[u32], index: usize, dtype: DType, vocab_size: u64) -> Result<()> {
    for &t in doc {
        if t as u64 > dtype.max_token() {
            return Err(Error::TokenOverflow { token: t as u64, doc: index, dtype: dtype.name() });
        }
        if vocab_size > 0 && t as u64 >= vocab_size {
            return Err(Error::Input(format!(
                "token {t} in document {index} is outside the declared vocabulary of {vocab_size}"
            )));
        }
    }
    Ok(())
}

fn encode_tokens(doc: &[u32], dtype: DType, out: &mut Vec<u8>) {
    match dtype {
        DType::U16 => out.extend(doc.iter().flat_map(|&t| (t as u16).to_le_bytes())),
        DType::U32 => out.extend(doc.iter().flat_map(|&t| t.to_le_bytes())),
    }
}

fn encode_index(dtype: DType, offsets: &[u64], vocab_size: u64) -> Vec<u8> {
    let mut idx = Vec::with_capacity(HEADER_LEN + 8 * (offsets.len() + 1));
    idx.extend_from_slice(MAGIC);
    idx.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    idx.push(dtype.code());
    idx.extend_from_slice(&((offsets.len() - 1) as u64).to_le_bytes());
    for off in offsets {
        idx.extend_from_slice(&off.to_le_bytes());
    }
    idx.extend_from_slice(&vocab_size.to_le_bytes());
    idx
}

enum Bytes {
    Mapped(Mmap),
    Owned(Vec<u8>),
}

impl std::ops::Deref for Bytes {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        match self {
            Bytes::Mapped(m) => m,
            Bytes::Owned(v) => v,
        }
    }
}

fn map_file(path: &Path) -> Result<Bytes> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len == 0 {
        return Ok(Bytes::Owned(Vec::new()));
    }
    // SAFETY: the dataset is treated as immutable once written; concurrent
    // truncation by another process is outside the supported use.
    let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
    Ok(Bytes::Mapped(map))
}

/// Read-only view of a token corpus.
///
/// Opening validates the index only; token payload pages are faulted in on
/// demand.
pub struct TokenDataset {
    dtype: DType,
    doc_count: usize,
    vocab_size: u64,
    idx: Bytes,
    bin: Bytes,
}

impl std::fmt::Debug for TokenDataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenDataset")
            .field("dtype", &self.dtype)
            .field("doc_count", &self.doc_count)
            .field("total_tokens", &self.total_tokens())
            .field("vocab_size", &self.vocab_size)
            .finish()
    }
}

impl TokenDataset {
    pub fn open(base: &Path) -> Result<Self> {
        let (bin_path, idx_path) = pair_paths(base);
        let idx = map_file(&idx_path)?;
        let bin = map_file(&bin_path)?;
        Self::from_parts(idx, bin)
    }

    /// Build an in-memory dataset with the same layout and validation as a
    /// file-backed one.
    pub fn from_docs<D: AsRef<[u32]>>(docs: impl IntoIterator<Item = D>, dtype: DType) -> Result<Self> {
        let (idx, bin) = encode_dataset(docs, dtype, 0)?;
        Self::from_bytes(idx, bin)
    }

    pub fn from_bytes(idx: Vec<u8>, bin: Vec<u8>) -> Result<Self> {
        Self::from_parts(Bytes::Owned(idx), Bytes::Owned(bin))
    }

    fn from_parts(idx: Bytes, bin: Bytes) -> Result<Self> {
        if idx.len() < HEADER_LEN {
            return Err(Error::Format(format!("index truncated: {} bytes", idx.len())));
        }
        if &idx[..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &idx[..4])));
        }
        let version = u32::from_le_bytes(idx[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let dtype = DType::from_code(idx[8])
            .ok_or_else(|| Error::Format(format!("unknown dtype code {}", idx[8])))?;
        let doc_count = u64::from_le_bytes(idx[9..17].try_into().unwrap());
        let expected = (doc_count as u128 + 2) * 8 + HEADER_LEN as u128;
        if idx.len() as u128 != expected {
            return Err(Error::Format(format!(
                "index length {} does not match {doc_count} documents (expected {expected})",
                idx.len()
            )));
        }
        let doc_count = doc_count as usize;
        let vocab_pos = HEADER_LEN + 8 * (doc_count + 1);
        let vocab_size = u64::from_le_bytes(idx[vocab_pos..vocab_pos + 8].try_into().unwrap());
        let ds = Self { dtype, doc_count, vocab_size, idx, bin };

        if ds.offset(0) != 0 {
            return Err(Error::Format("first offset is not zero".into()));
        }
        let mut prev = 0;
        for i in 1..=doc_count {
            let off = ds.offset(i);
            if off < prev {
                return Err(Error::Format(format!("offsets decrease at document {i}")));
            }
            prev = off;
        }
        if !ds.bin.len().is_multiple_of(dtype.width()) {
            return Err(Error::Format(format!(
                "payload length {} is not a multiple of the {} width",
                ds.bin.len(),
                dtype.name()
            )));
        }
        let payload_tokens = (ds.bin.len() / dtype.width()) as u64;
        if prev != payload_tokens {
            return Err(Error::Format(format!(
                "index declares {prev} tokens but payload holds {payload_tokens}"
            )));
        }
        Ok(ds)
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn vocab_size(&self) -> Option<u64> {
        (self.vocab_size > 0).then_some(self.vocab_size)
    }

    pub fn total_tokens(&self) -> u64 {
        self.offset(self.doc_count)
    }

    pub fn is_empty(&self) -> bool {
        self.total_tokens() == 0
    }

    /// Token offset where document `i` starts; `offset(doc_count)` is the
    /// total token count.
    #[inline]
    pub fn offset(&self, i: usize) -> u64 {
        let p = HEADER_LEN + 8 * i;
        u64::from_le_bytes(self.idx[p..p + 8].try_into().unwrap())
    }

    #[inline]
    pub fn token(&self, i: u64) -> u32 {
        assert!(i < self.total_tokens(), "token {i} out of range");
        self.dtype.decode(&self.bin, i as usize)
    }

    /// Append tokens in `range` (global token positions) to `out`.
    pub fn read_range(&self, range: Range<u64>, out: &mut Vec<u32>) {
        assert!(range.end <= self.total_tokens(), "range {range:?} out of bounds");
        out.extend((range.start as usize..range.end as usize).map(|i| self.dtype.decode(&self.bin, i)));
    }

    pub fn document(&self, index: usize) -> Document<'_> {
        assert!(index < self.doc_count, "document {index} out of range");
        let w = self.dtype.width();
        let start = self.offset(index) as usize * w;
        let end = self.offset(index + 1) as usize * w;
        Document { index, dtype: self.dtype, bytes: &self.bin[start..end] }
    }

    pub fn documents(&self) -> impl ExactSizeIterator<Item = Document<'_>> + '_ {
        (0..self.doc_count).map(|i| self.document(i))
    }

    /// Document containing global token position `pos`.
    pub fn doc_of_token(&self, pos: u64) -> usize {
        // Largest i with offset(i) <= pos, skipping empty documents.
        let (mut lo, mut hi) = (0usize, self.doc_count);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.offset(mid) <= pos {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Full scan checking every token against the declared vocabulary.
    pub fn verify_vocab(&self) -> Result<()> {
        let Some(vocab) = self.vocab_size() else { return Ok(()) };
        for doc in self.documents() {
            if let Some(t) = doc.iter().find(|&t| t as u64 >= vocab) {
                return Err(Error::Format(format!(
                    "token {t} in document {} is outside the declared vocabulary of {vocab}",
                    doc.index
                )));
            }
        }
        Ok(())
    }
}

/// Borrowed view of one document's tokens.
#[derive(Clone, Copy)]
pub struct Document<'a> {
    pub index: usize,
    dtype: DType,
    bytes: &'a [u8],
}

impl<'a> Document<'a> {
    pub fn len(&self) -> usize {
        self.bytes.len() / self.dtype.width()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn get(&self, i: usize) -> u32 {
        assert!(i < self.len());
        self.dtype.decode(self.bytes, i)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = u32> + 'a {
        let (dtype, bytes) = (self.dtype, self.bytes);
        (0..self.len()).map(move |i| dtype.decode(bytes, i))
    }

    pub fn to_vec(&self) -> Vec<u32> {
        self.iter().collect()
    }

    /// Raw little-endian payload bytes.
    pub fn as_bytes(&self) -> &'a [u8] {
        self.bytes
    }
}

impl std::fmt::Debug for Document<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Document").field("index", &self.index).field("tokens", &self.to_vec()).finish()
    }
}
