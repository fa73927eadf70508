//! Binary persistence of a [`ReducedModel`].
//!
//! All integers are little-endian `u64` unless noted. Layout:
//!
//! 1. magic `AAROCROM`, `u32` version (1);
//! 2. problem description: byte length, then UTF-8 JSON;
//! 3. basis `V` and its triangular factor, each in the snapshot format;
//! 4. provenance: count, then `(time index, p, p x f64)` per column;
//! 5. partition: step count, segment count, `(first, last)` per segment;
//! 6. per segment: solution count and indices, then residual count and
//!    `(index, added_at, origin)` triples (origin 0 = EIM, 1 = enrichment,
//!    2 = full);
//! 7. GEIM records: count, then `(segment, index, time index, p, p x f64)`;
//! 8. per segment, the EIM residual basis in the snapshot format.

use super::{
    CollocationSet, GeimFunctionalRecord, PointOrigin, ReducedBasis, ReducedModel, ResidualPoint, RomError, TimePartition,
};
use crate::fom::{read_snapshot, write_snapshot, Parameter, ProblemSpec};
use crate::numerics::DenseMatrix;

pub const MODEL_MAGIC: &[u8; 8] = b"AAROCROM";
pub const MODEL_VERSION: u32 = 1;

fn put(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix) {
    write_snapshot(m, &mut *out).expect("writing to a Vec cannot fail");
}

fn put_parameter(out: &mut Vec<u8>, mu: &Parameter) {
    put(out, mu.values().len() as u64);
    for v in mu.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_model(model: &ReducedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let spec = serde_json::to_vec(&model.problem).expect("problem description serializes");
    put(&mut out, spec.len() as u64);
    out.extend_from_slice(&spec);
    put_matrix(&mut out, model.basis.matrix());
    put_matrix(&mut out, model.basis.r_factor());
    put(&mut out, model.basis.provenance().len() as u64);
    for (mu, t) in model.basis.provenance() {
        put(&mut out, *t as u64);
        put_parameter(&mut out, mu);
    }
    put(&mut out, model.partition.n_steps() as u64);
    put(&mut out, model.partition.n_segments() as u64);
    for &(a, b) in model.partition.bounds() {
        put(&mut out, a as u64);
        put(&mut out, b as u64);
    }
    for seg in model.collocation.segments() {
        put(&mut out, seg.solution().len() as u64);
        for &i in seg.solution() {
            put(&mut out, i as u64);
        }
        put(&mut out, seg.residual().len() as u64);
        for p in seg.residual() {
            put(&mut out, p.index as u64);
            put(&mut out, p.added_at as u64);
            put(
                &mut out,
                match p.origin {
                    PointOrigin::Eim => 0,
                    PointOrigin::Enrichment => 1,
                    PointOrigin::Full => 2,
                },
            );
        }
    }
    put(&mut out, model.geim.len() as u64);
    for g in &model.geim {
        put(&mut out, g.segment as u64);
        put(&mut out, g.index as u64);
        put(&mut out, g.time_index as u64);
        put_parameter(&mut out, &g.mu);
    }
    for m in &model.eim_bases {
        put_matrix(&mut out, m);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RomError> {
        if self.bytes.len() < n {
            return Err(RomError::Format("unexpected end of data".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64, RomError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self) -> Result<usize, RomError> {
        let v = self.u64()?;
        // Every counted item occupies at least one byte.
        if v > self.bytes.len() as u64 {
            return Err(RomError::Format(format!("implausible count {v}")));
        }
        Ok(v as usize)
    }

    fn index(&mut self) -> Result<usize, RomError> {
        usize::try_from(self.u64()?).map_err(|_| RomError::Format("index overflows".into()))
    }

    fn f64(&mut self) -> Result<f64, RomError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn parameter(&mut self) -> Result<Parameter, RomError> {
        let p = self.count()?;
        let values = (0..p).map(|_| self.f64()).collect::<Result<_, _>>()?;
        Ok(Parameter::new(values))
    }

    fn matrix(&mut self) -> Result<DenseMatrix, RomError> {
        let mut reader = self.bytes;
        let m = read_snapshot(&mut reader).map_err(|e| RomError::Format(e.to_string()))?;
        self.bytes = reader;
        Ok(m)
    }
}

pub fn read_model(bytes: &[u8]) -> Result<ReducedModel, RomError> {
    let (model, rest) = read_model_prefix(bytes)?;
    if !rest.is_empty() {
        return Err(RomError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok(model)
}

/// Parses a model from the front of `bytes`, returning the unread rest.
pub fn read_model_prefix(bytes: &[u8]) -> Result<(ReducedModel, &[u8]), RomError> {
    let mut c = Cursor { bytes };
    if c.take(8).ok() != Some(MODEL_MAGIC.as_slice()) {
        return Err(RomError::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(RomError::Format(format!("unsupported model version {version}")));
    }
    let spec_len = c.count()?;
    let problem: ProblemSpec =
        serde_json::from_slice(c.take(spec_len)?).map_err(|e| RomError::Format(format!("problem description: {e}")))?;
    let v = c.matrix()?;
    let r = c.matrix()?;
    let n = v.cols();
    if r.rows() != n || r.cols() != n {
        return Err(RomError::Format("triangular factor does not match the basis".into()));
    }
    let count = c.count()?;
    if count != n {
        return Err(RomError::Format("provenance does not match the basis".into()));
    }
    let mut provenance = Vec::with_capacity(count);
    for _ in 0..count {
        let t = c.index()?;
        provenance.push((c.parameter()?, t));
    }
    let n_steps = c.index()?;
    let n_seg = c.count()?;
    let mut bounds = Vec::with_capacity(n_seg);
    for _ in 0..n_seg {
        bounds.push((c.index()?, c.index()?));
    }
    let partition = TimePartition::from_bounds(n_steps, bounds)?;
    let mut collocation = CollocationSet::new(n_seg);
    let n_dof = v.rows();
    let check = |i: usize| {
        if i < n_dof {
            Ok(i)
        } else {
            Err(RomError::Format(format!("grid index {i} out of range")))
        }
    };
    for j in 0..n_seg {
        let ns = c.count()?;
        for _ in 0..ns {
            collocation.add_solution_point(j, check(c.index()?)?)?;
        }
        let nr = c.count()?;
        for _ in 0..nr {
            let index = check(c.index()?)?;
            let added_at = c.index()?;
            let origin = match c.u64()? {
                0 => PointOrigin::Eim,
                1 => PointOrigin::Enrichment,
                2 => PointOrigin::Full,
                o => return Err(RomError::Format(format!("unknown point origin {o}"))),
            };
            collocation.add_residual_point(j, ResidualPoint { index, added_at, origin })?;
        }
    }
    let ng = c.count()?;
    let mut geim = Vec::with_capacity(ng);
    for _ in 0..ng {
        let segment = c.index()?;
        if segment >= n_seg {
            return Err(RomError::Format(format!("GEIM record for missing segment {segment}")));
        }
        let index = check(c.index()?)?;
        let time_index = c.index()?;
        geim.push(GeimFunctionalRecord {
            segment,
            index,
            time_index,
            mu: c.parameter()?,
        });
    }
    let mut eim_bases = Vec::with_capacity(n_seg);
    for _ in 0..n_seg {
        eim_bases.push(c.matrix()?);
    }
    let model = ReducedModel {
        problem,
        basis: ReducedBasis::from_parts(v, provenance, r),
        partition,
        collocation,
        geim,
        eim_bases,
    };
    Ok((model, c.bytes))
}
