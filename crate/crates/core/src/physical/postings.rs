//! Compressed postings: document ordinals as delta-coded varints (each block
//! of [`BLOCK_LEN`] postings restarts from an absolute value), weights as a
//! parallel stream of either 32-bit floats or varint impacts.

use crate::binio::{read_varint, write_varint};
use crate::error::{Error, Result};

pub const BLOCK_LEN: usize = 128;
pub const END: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightCoding {
    Float32,
    Impact,
}

impl WeightCoding {
    pub(crate) fn tag(self) -> u8 {
        match self {
            WeightCoding::Float32 => 0,
            WeightCoding::Impact => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(WeightCoding::Float32),
            1 => Ok(WeightCoding::Impact),
            t => Err(Error::Corrupt(format!("unknown weight coding {t}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Skip {
    last_doc: u32,
    doc_offset: u32,
    weight_offset: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostingList {
    len: u32,
    max_weight: f32,
    min_weight: f32,
    docs: Vec<u8>,
    weights: Vec<u8>,
    skips: Vec<Skip>,
}

impl Default for PostingList {
    fn default() -> Self {
        PostingList {
            len: 0,
            max_weight: f32::NEG_INFINITY,
            min_weight: f32::INFINITY,
            docs: Vec::new(),
            weights: Vec::new(),
            skips: Vec::new(),
        }
    }
}

/// Accumulates postings in ascending ordinal order.
#[derive(Debug)]
pub struct PostingListBuilder {
    coding: WeightCoding,
    list: PostingList,
    prev: u32,
}

impl PostingListBuilder {
    pub fn new(coding: WeightCoding) -> Self {
        PostingListBuilder { coding, list: PostingList::default(), prev: 0 }
    }

    pub fn push(&mut self, doc: u32, weight: f64) -> Result<()> {
        let l = &mut self.list;
        if l.len > 0 && doc <= self.prev {
            return Err(Error::invalid(format!("postings must ascend: {doc} after {}", self.prev)));
        }
        if doc == END {
            return Err(Error::invalid("document ordinal out of range"));
        }
        let block_start = (l.len as usize) % BLOCK_LEN == 0;
        if block_start {
            l.skips.push(Skip { last_doc: doc, doc_offset: l.docs.len() as u32, weight_offset: l.weights.len() as u32 });
            write_varint(&mut l.docs, doc as u64);
        } else {
            write_varint(&mut l.docs, (doc - self.prev) as u64);
        }
        l.skips.last_mut().expect("block open").last_doc = doc;
        let stored = match self.coding {
            WeightCoding::Float32 => {
                let w = weight as f32;
                l.weights.extend_from_slice(&w.to_le_bytes());
                w
            }
            WeightCoding::Impact => {
                if !(weight >= 1.0 && weight <= u32::MAX as f64 && weight.fract() == 0.0) {
                    return Err(Error::invalid(format!("impact must be a positive integer, got {weight}")));
                }
                write_varint(&mut l.weights, weight as u64);
                weight as f32
            }
        };
        l.max_weight = l.max_weight.max(stored);
        l.min_weight = l.min_weight.min(stored);
        l.len += 1;
        self.prev = doc;
        Ok(())
    }

    pub fn finish(self) -> PostingList {
        self.list
    }
}

impl PostingList {
    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_weight(&self) -> f32 {
        self.max_weight
    }

    pub fn min_weight(&self) -> f32 {
        self.min_weight
    }

    pub fn size_bytes(&self) -> usize {
        self.docs.len() + self.weights.len()
    }

    pub fn cursor(&self, coding: WeightCoding) -> Cursor<'_> {
        let mut c = Cursor { list: self, coding, index: 0, doc: END, weight: 0.0, doc_pos: 0, weight_pos: 0 };
        if self.len > 0 {
            c.decode_current();
        }
        c
    }

    /// Decodes the whole list.
    pub fn decode(&self, coding: WeightCoding) -> Vec<(u32, f64)> {
        let mut out = Vec::with_capacity(self.len());
        let mut c = self.cursor(coding);
        while c.doc() != END {
            out.push((c.doc(), c.weight()));
            c.next();
        }
        out
    }

    pub(crate) fn raw_parts(&self) -> (u32, &[u8], &[u8]) {
        (self.len, &self.docs, &self.weights)
    }

    /// Rebuilds a list from its byte streams, validating ordering and length.
    pub(crate) fn from_raw(len: u32, docs: Vec<u8>, weights: Vec<u8>, coding: WeightCoding) -> Result<Self> {
        let mut builder = PostingListBuilder::new(coding);
        let (mut dp, mut wp) = (0usize, 0usize);
        let mut prev = 0u32;
        for i in 0..len as usize {
            let raw = read_varint(&docs, &mut dp)?;
            let doc = if i % BLOCK_LEN == 0 { raw } else { prev as u64 + raw };
            if doc >= END as u64 || (i > 0 && doc <= prev as u64) {
                return Err(Error::Corrupt("postings ordinals not strictly ascending".into()));
            }
            let weight = match coding {
                WeightCoding::Float32 => {
                    let b = weights.get(wp..wp + 4).ok_or_else(|| Error::Corrupt("truncated weights".into()))?;
                    wp += 4;
                    f32::from_le_bytes(b.try_into().unwrap()) as f64
                }
                WeightCoding::Impact => read_varint(&weights, &mut wp)? as f64,
            };
            builder.push(doc as u32, weight).map_err(|e| Error::Corrupt(e.to_string()))?;
            prev = doc as u32;
        }
        if dp != docs.len() || wp != weights.len() {
            return Err(Error::Corrupt("postings byte streams have trailing data".into()));
        }
        let list = builder.finish();
        debug_assert_eq!(list.docs, docs);
        Ok(list)
    }
}

/// Forward-only iterator over a postings list.
pub struct Cursor<'a> {
    list: &'a PostingList,
    coding: WeightCoding,
    index: usize,
    doc: u32,
    weight: f64,
    doc_pos: usize,
    weight_pos: usize,
}

impl Cursor<'_> {
    /// Current ordinal, or [`END`] when exhausted.
    #[inline]
    pub fn doc(&self) -> u32 {
        self.doc
    }

    #[inline]
    pub fn weight(&self) -> f64 {
        self.weight
    }

    fn decode_current(&mut self) {
        let raw = read_varint(&self.list.docs, &mut self.doc_pos).expect("validated postings");
        self.doc = if self.index % BLOCK_LEN == 0 { raw as u32 } else { self.doc + raw as u32 };
        self.weight = match self.coding {
            WeightCoding::Float32 => {
                let b = &self.list.weights[self.weight_pos..self.weight_pos + 4];
                self.weight_pos += 4;
                f32::from_le_bytes(b.try_into().unwrap()) as f64
            }
            WeightCoding::Impact => read_varint(&self.list.weights, &mut self.weight_pos).expect("validated postings") as f64,
        };
    }

    pub fn next(&mut self) {
        self.index += 1;
        if self.index >= self.list.len() {
            self.doc = END;
            return;
        }
        self.decode_current();
    }

    /// Advances to the first posting with ordinal ≥ `target`.
    pub fn seek(&mut self, target: u32) {
        if self.doc >= target {
            return;
        }
        let block = self.index / BLOCK_LEN;
        let skips = &self.list.skips;
        if skips[block].last_doc < target {
            let next = block + skips[block..].partition_point(|s| s.last_doc < target);
            if next >= skips.len() {
                self.index = self.list.len();
                self.doc = END;
                return;
            }
            self.index = next * BLOCK_LEN;
            self.doc_pos = skips[next].doc_offset as usize;
            self.weight_pos = skips[next].weight_offset as usize;
            self.decode_current();
        }
        while self.doc < target {
            self.next();
        }
    }
}
